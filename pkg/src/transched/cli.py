"""Command-line pipeline: simulate | train | estimate | evaluate.

Settings come from built-in defaults (the two-condition quarter-car
scenario), overridden by an INI-style config file, overridden by flags.
Every command validates its full configuration before writing anything.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .dataset import (
    Decomposition,
    PSEUDO_INPUT,
    TARGET_OUTPUT,
    TimeSeriesSet,
    detrend_mean,
    load_csv,
    signal_power,
    write_csv,
)
from .errors import ConfigError, DataError, NumericalError, TranschedError
from .evaluation import (
    compare_report,
    write_accuracy_csv,
    write_report_csv,
    write_summary_csv,
)
from .scheduler import (
    Prior,
    schedule_estimate,
    write_sample_trace,
    write_window_trace,
)
from .simulator import (
    NoiseSpec,
    QuarterCarParams,
    SwitchSchedule,
    add_noise,
    build_continuous,
    c2d_zoh,
    gen_excitation,
    simulate,
)
from .transmissibility import fit_average, load_store, save_store, train_families

# Stock two-condition scenario: a softly and a stiffly sprung quarter car.
STOCK_CONDITIONS = {
    "C1": {"m_s": 300.0, "m_u": 40.0, "k_s": 2.0e4, "k_r": 1.8e5, "c_s": 1.5e3},
    "C2": {"m_s": 300.0, "m_u": 40.0, "k_s": 4.0e4, "k_r": 2.0e5, "c_s": 2.5e3},
}

DEFAULT_CHANNELS = {"y_I1_a": PSEUDO_INPUT, "y_I2": PSEUDO_INPUT, "y_O": TARGET_OUTPUT}


@dataclass
class RunConfig:
    """Fully resolved settings for one command invocation."""

    command: str
    out: str = "out"
    order: int = 10
    c_lim: float = 1.0e6
    seed: int = 20260808
    sample_time: float = 0.1
    detrend: bool = False
    channels: dict = field(default_factory=lambda: dict(DEFAULT_CHANNELS))
    aux_output: str = "y_I2"
    # simulate
    params: dict = field(default_factory=dict)  # label -> QuarterCarParams
    train_samples: int = 1000
    excitation_variance: float = 0.01
    snr: float = 50.0
    snr_scale: str = "linear"
    clean: bool = False
    schedule: list = field(default_factory=lambda: [("C1", 80), ("C2", 80)])
    validation_samples: int | None = None
    # train
    train_data: dict = field(default_factory=dict)  # label -> path
    store: str = ""
    # estimate / evaluate
    data: str = ""
    window: int = 20
    priors: str | list = "uniform"
    pooled: bool = False
    evaluate_data: dict = field(default_factory=dict)  # label -> path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transched",
        description="Scheduled FIR transmissibility estimation for switching linear systems.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "generate quarter-car training and switching validation CSVs",
        "train": "fit the primary/auxiliary families and write the model store",
        "estimate": "classify windows and estimate the target from online data",
        "evaluate": "compare estimators and classifier variants on labeled records",
    }
    for name, help_text in helps.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="INI config file; flags override its values")
        p.add_argument("--seed", type=int, help="root RNG seed")
        p.add_argument("--order", type=int, help="FIR model order n")
        p.add_argument("--clim", type=float, help="condition-number cap for ridge")
        p.add_argument("--window", type=int, help="online classification window (samples)")
        p.add_argument("--pooled", action="store_true", default=None,
                       help="classify with one pooled residual variance")
        p.add_argument("--snr", type=float, help="measurement SNR")
        p.add_argument("--snr-db", action="store_true", default=None,
                       help="interpret --snr in decibels instead of a linear power ratio")
        p.add_argument("--out", help="output directory")
        if name == "simulate":
            p.add_argument("--clean", action="store_true", default=None,
                           help="emit noise-free measurements")
        if name in ("train", "estimate", "evaluate"):
            p.add_argument("--store", help="model store path")
        if name == "estimate":
            p.add_argument("--data", help="online CSV path")
    return parser


def _read_ini(path: str) -> configparser.ConfigParser:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # channel names are case-sensitive
    try:
        cp.read(path)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    return cp


def _typed(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            if raw.lower() in ("true", "yes", "on", "1"):
                return True
            if raw.lower() in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(
            f"[{section}] {key}: expected {kind.__name__}, got {raw!r}"
        ) from None


def _parse_pairs(section: str, key: str, raw: str) -> dict[str, str]:
    """Parse 'label=value, label=value' lists."""
    out: dict[str, str] = {}
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ConfigError(f"[{section}] {key}: expected label=value, got {item!r}")
        label, value = item.split("=", 1)
        label, value = label.strip(), value.strip()
        if label in out:
            raise ConfigError(f"[{section}] {key}: duplicate label {label!r}")
        out[label] = value
    if not out:
        raise ConfigError(f"[{section}] {key}: empty list")
    return out


def _parse_schedule(raw: str) -> list[tuple[str, int]]:
    steps = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ConfigError(f"[simulate] schedule: expected label:samples, got {item!r}")
        label, n = item.split(":", 1)
        steps.append((label.strip(), _typed("simulate", "schedule", n.strip(), int)))
    if not steps:
        raise ConfigError("[simulate] schedule: empty schedule")
    return steps


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Layer defaults, config file, and flags into a validated RunConfig."""
    cfg = RunConfig(command=args.command)
    cp = _read_ini(args.config) if args.config else None

    def ini(section: str, key: str, kind, fallback):
        if cp is not None and cp.has_option(section, key):
            return _typed(section, key, cp.get(section, key), kind)
        return fallback

    cfg.out = ini("common", "out", str, cfg.out)
    cfg.order = ini("common", "order", int, cfg.order)
    cfg.c_lim = ini("common", "c_lim", float, cfg.c_lim)
    cfg.seed = ini("common", "seed", int, cfg.seed)
    cfg.sample_time = ini("common", "sample_time", float, cfg.sample_time)
    cfg.detrend = ini("common", "detrend", bool, cfg.detrend)

    if cp is not None and cp.has_section("channels"):
        cfg.channels = dict(cp.items("channels"))
    if cp is not None and cp.has_option("decomposition", "aux_output"):
        cfg.aux_output = cp.get("decomposition", "aux_output")

    # simulate settings
    cfg.train_samples = ini("simulate", "train_samples", int, cfg.train_samples)
    cfg.excitation_variance = ini(
        "simulate", "excitation_variance", float, cfg.excitation_variance
    )
    cfg.snr = ini("simulate", "snr", float, cfg.snr)
    cfg.snr_scale = ini("simulate", "snr_scale", str, cfg.snr_scale)
    cfg.clean = ini("simulate", "clean", bool, cfg.clean)
    if cp is not None and cp.has_option("simulate", "schedule"):
        cfg.schedule = _parse_schedule(cp.get("simulate", "schedule"))
    if cp is not None and cp.has_option("simulate", "validation_samples"):
        cfg.validation_samples = _typed(
            "simulate", "validation_samples", cp.get("simulate", "validation_samples"), int
        )
    param_sections = (
        [s for s in cp.sections() if s.startswith("params.")] if cp is not None else []
    )
    raw_params = (
        {s.split(".", 1)[1]: dict(cp.items(s)) for s in param_sections}
        if param_sections
        else STOCK_CONDITIONS
    )
    cfg.params = {}
    for label, values in raw_params.items():
        fields = {}
        for key in ("m_s", "m_u", "k_s", "k_r", "c_s"):
            if key not in values:
                raise ConfigError(f"[params.{label}] missing parameter {key}")
            fields[key] = _typed(f"params.{label}", key, str(values[key]), float)
        cfg.params[label] = QuarterCarParams(**fields)

    # train settings
    if cp is not None and cp.has_option("train", "data"):
        cfg.train_data = _parse_pairs("train", "data", cp.get("train", "data"))
    cfg.store = ini("train", "store", str, "")

    # estimate settings
    cfg.data = ini("estimate", "data", str, "")
    cfg.window = ini("estimate", "window", int, cfg.window)
    cfg.pooled = ini("estimate", "pooled", bool, cfg.pooled)
    priors_raw = ini("estimate", "priors", str, None)
    if args.command == "evaluate":
        cfg.window = ini("evaluate", "window", int, cfg.window)
        cfg.pooled = ini("evaluate", "pooled", bool, cfg.pooled)
        priors_raw = ini("evaluate", "priors", str, priors_raw)
        if cp is not None and cp.has_option("evaluate", "store"):
            cfg.store = cp.get("evaluate", "store")
    if args.command == "estimate" and cp is not None and cp.has_option("estimate", "store"):
        cfg.store = cp.get("estimate", "store")
    if priors_raw is not None and priors_raw != "uniform":
        try:
            cfg.priors = [float(x) for x in priors_raw.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(
                f"priors: expected 'uniform' or comma-separated weights, got {priors_raw!r}"
            ) from None
    if cp is not None and cp.has_option("evaluate", "data"):
        cfg.evaluate_data = _parse_pairs("evaluate", "data", cp.get("evaluate", "data"))

    # flag overrides
    for flag, attr in [
        ("seed", "seed"),
        ("order", "order"),
        ("clim", "c_lim"),
        ("window", "window"),
        ("snr", "snr"),
        ("out", "out"),
        ("store", "store"),
        ("data", "data"),
    ]:
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, attr, value)
    if getattr(args, "pooled", None):
        cfg.pooled = True
    if getattr(args, "snr_db", None):
        cfg.snr_scale = "db"
    if getattr(args, "clean", None):
        cfg.clean = True

    # path defaults derived from the output directory
    if not cfg.store:
        cfg.store = os.path.join(cfg.out, "store.json")
    if not cfg.train_data:
        cfg.train_data = {
            label: os.path.join(cfg.out, f"train_{label}.csv") for label in cfg.params
        }
    if not cfg.data:
        cfg.data = os.path.join(cfg.out, "validation.csv")
    if not cfg.evaluate_data:
        cfg.evaluate_data = {"VAL": cfg.data}

    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.order < 0:
        raise ConfigError(f"order must be non-negative, got {cfg.order}")
    if cfg.c_lim <= 1.0:
        raise ConfigError(f"c_lim must exceed 1, got {cfg.c_lim}")
    if cfg.sample_time <= 0:
        raise ConfigError(f"sample_time must be positive, got {cfg.sample_time}")
    roles = set(cfg.channels.values())
    if not roles <= {PSEUDO_INPUT, TARGET_OUTPUT}:
        raise ConfigError(
            f"channel roles must be {PSEUDO_INPUT} or {TARGET_OUTPUT}, got {sorted(roles)}"
        )
    pseudo = [n for n, r in cfg.channels.items() if r == PSEUDO_INPUT]
    targets = [n for n, r in cfg.channels.items() if r == TARGET_OUTPUT]
    if len(targets) != 1:
        raise ConfigError(f"exactly one target_output channel required, got {targets}")
    if len(pseudo) < 2:
        raise ConfigError("need at least two pseudo_input channels for the decomposition")
    if cfg.aux_output not in pseudo:
        raise ConfigError(
            f"aux_output {cfg.aux_output!r} is not a pseudo_input channel {pseudo}"
        )
    if cfg.command == "simulate":
        if not cfg.params:
            raise ConfigError("simulate needs at least one [params.<label>] section")
        if cfg.train_samples <= cfg.order:
            raise ConfigError(
                f"train_samples {cfg.train_samples} must exceed the FIR order {cfg.order}"
            )
        if cfg.excitation_variance <= 0:
            raise ConfigError(
                f"excitation_variance must be positive, got {cfg.excitation_variance}"
            )
        if cfg.snr_scale not in ("linear", "db"):
            raise ConfigError(f"snr_scale must be linear or db, got {cfg.snr_scale!r}")
        if cfg.snr_scale == "linear" and cfg.snr <= 0:
            raise ConfigError(f"linear snr must be positive, got {cfg.snr}")
        for label, n in cfg.schedule:
            if label not in cfg.params:
                raise ConfigError(f"schedule references unknown condition {label!r}")
            if n < 1:
                raise ConfigError(f"schedule duration for {label!r} must be >= 1")
        total = sum(n for _, n in cfg.schedule)
        if cfg.validation_samples is not None and cfg.validation_samples != total:
            raise ConfigError(
                f"schedule durations sum to {total}, not the requested "
                f"validation_samples {cfg.validation_samples}"
            )
    if cfg.command in ("estimate", "evaluate"):
        if cfg.window <= 0:
            raise ConfigError(f"window must be positive, got {cfg.window}")
        if isinstance(cfg.priors, list):
            if any(w < 0 for w in cfg.priors):
                raise ConfigError(f"prior weights must be non-negative, got {cfg.priors}")
            if sum(cfg.priors) <= 0:
                raise ConfigError("prior weights must have a positive sum")


def _resolve_prior(cfg: RunConfig, q: int) -> Prior:
    if cfg.priors == "uniform":
        return Prior.uniform(q)
    weights = list(cfg.priors)
    if len(weights) != q:
        raise ConfigError(
            f"priors has {len(weights)} weights but the store holds {q} conditions"
        )
    return Prior.from_weights(weights)


def _load_record(
    cfg: RunConfig, path: str, condition_label: str | None, require_target: bool
) -> TimeSeriesSet:
    """Load a CSV with the configured schema; the target column is optional
    for online data unless the caller needs ground truth."""
    if not os.path.exists(path):
        raise DataError(f"file not found: {path}")
    with open(path) as f:
        header = [h.strip() for h in f.readline().split(",")]
    schema = dict(cfg.channels)
    target = next(n for n, r in schema.items() if r == TARGET_OUTPUT)
    if target not in header:
        if require_target:
            raise DataError(f"{path}: ground-truth channel {target!r} missing")
        del schema[target]
    ts = load_csv(
        path, schema, sample_rate=1.0 / cfg.sample_time, condition_label=condition_label
    )
    return detrend_mean(ts) if cfg.detrend else ts


def cmd_simulate(cfg: RunConfig) -> int:
    systems = {
        label: c2d_zoh(build_continuous(p), cfg.sample_time)
        for label, p in cfg.params.items()
    }
    # one independent (excitation, noise) seed pair per record, then validation
    n_records = len(cfg.params) + 1
    state = np.random.SeedSequence(cfg.seed).generate_state(2 * n_records)
    os.makedirs(cfg.out, exist_ok=True)
    snr = math.inf if cfg.clean else cfg.snr
    written = []
    for k, label in enumerate(cfg.params):
        z = gen_excitation(cfg.train_samples, cfg.excitation_variance, int(state[2 * k]))
        clean_ts = simulate(
            systems, SwitchSchedule(steps=((label, cfg.train_samples),)), z,
            condition_label=label,
        )
        clean_ts = _strip_labels(clean_ts)
        noisy_ts = add_noise(
            clean_ts, NoiseSpec(snr=snr, seed=int(state[2 * k + 1]), scale=cfg.snr_scale)
        )
        path = os.path.join(cfg.out, f"train_{label}.csv")
        write_csv(noisy_ts, path, clean=clean_ts)
        written.append(path)
    schedule = SwitchSchedule(steps=tuple(cfg.schedule))
    z = gen_excitation(
        schedule.total_samples, cfg.excitation_variance, int(state[2 * n_records - 2])
    )
    clean_val = simulate(systems, schedule, z, condition_label="validation")
    noisy_val = add_noise(
        clean_val,
        NoiseSpec(snr=snr, seed=int(state[2 * n_records - 1]), scale=cfg.snr_scale),
    )
    val_path = os.path.join(cfg.out, "validation.csv")
    write_csv(noisy_val, val_path, clean=_strip_labels(clean_val))
    written.append(val_path)
    manifest = {
        "format": "transched-simulate-manifest v1",
        "seed": cfg.seed,
        "sample_time": cfg.sample_time,
        "order_default": cfg.order,
        "train_samples": cfg.train_samples,
        "excitation_variance": cfg.excitation_variance,
        "snr": "clean" if cfg.clean else cfg.snr,
        "snr_scale": cfg.snr_scale,
        "schedule": [[label, n] for label, n in cfg.schedule],
        "conditions": {
            label: {k: getattr(p, k) for k in ("m_s", "m_u", "k_s", "k_r", "c_s")}
            for label, p in cfg.params.items()
        },
        "files": [os.path.basename(p) for p in written],
    }
    with open(os.path.join(cfg.out, "simulate_manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    for path in written:
        print(f"wrote {path}")
    return 0


def _strip_labels(ts: TimeSeriesSet) -> TimeSeriesSet:
    if ts.sample_labels is None:
        return ts
    return TimeSeriesSet(
        sample_rate=ts.sample_rate,
        names=ts.names,
        roles=ts.roles,
        data=ts.data,
        condition_label=ts.condition_label,
    )


def cmd_train(cfg: RunConfig) -> int:
    records = [
        _load_record(cfg, path, label, require_target=True)
        for label, path in cfg.train_data.items()
    ]
    pseudo = records[0].pseudo_input_names
    target = records[0].target_name
    d = Decomposition(aux_output_index=pseudo.index(cfg.aux_output))
    g, h = train_families(records, d, cfg.order, cfg.c_lim)
    avg = fit_average(records, pseudo, target, cfg.order, cfg.c_lim)
    os.makedirs(os.path.dirname(os.path.abspath(cfg.store)), exist_ok=True)
    save_store(cfg.store, g, h, average=avg, c_lim=cfg.c_lim)
    print(f"wrote {cfg.store} ({len(g)} conditions, order {cfg.order})")
    print("condition  model  sigma2        rho           kappa")
    for label, gm, hm in zip(g.labels, g.models, h.models):
        for tag, m in (("G", gm), ("H", hm)):
            print(
                f"{label:<10s} {tag:<6s}{m.sigma2:<14.6g}{m.rho:<14.6g}{m.kappa_after:.6g}"
            )
    print("per-channel signal power (aux_output candidates):")
    for ts in records:
        powers = ", ".join(f"{n}={v:.6g}" for n, v in signal_power(ts).items())
        print(f"  {ts.condition_label}: {powers}")
    return 0


def cmd_estimate(cfg: RunConfig) -> int:
    g, h, _ = load_store(cfg.store)
    if cfg.window <= g.order:
        raise ConfigError(
            f"window {cfg.window} must exceed the stored FIR order {g.order}"
        )
    online = _load_record(cfg, cfg.data, None, require_target=False)
    prior = _resolve_prior(cfg, len(g))
    trace = schedule_estimate(g, h, online, prior, cfg.window, pooled=cfg.pooled)
    os.makedirs(cfg.out, exist_ok=True)
    windows_path = os.path.join(cfg.out, "trace_windows.csv")
    samples_path = os.path.join(cfg.out, "trace_samples.csv")
    write_window_trace(trace, windows_path)
    write_sample_trace(trace, online, samples_path)
    print(f"wrote {windows_path}")
    print(f"wrote {samples_path}")
    print(f"chosen sequence: {' '.join(trace.chosen_labels())}")
    if cfg.pooled:
        print("classifier variant: pooled variance")
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    g, h, avg = load_store(cfg.store)
    if avg is None:
        raise DataError(
            f"{cfg.store} has no pooled-data average model; re-run train to add it"
        )
    if cfg.window <= g.order:
        raise ConfigError(
            f"window {cfg.window} must exceed the stored FIR order {g.order}"
        )
    prior = _resolve_prior(cfg, len(g))
    records = [
        _load_record(cfg, path, label, require_target=True)
        for label, path in cfg.evaluate_data.items()
    ]
    variant_traces = {"full": {}, "pooled": {}}
    for ts in records:
        for variant, pooled in (("full", False), ("pooled", True)):
            variant_traces[variant][ts.condition_label] = schedule_estimate(
                g, h, ts, prior, cfg.window, pooled=pooled
            )
    report = compare_report(
        g, avg, records, variant_traces,
        scheduled_variant="pooled" if cfg.pooled else "full",
    )
    os.makedirs(cfg.out, exist_ok=True)
    paths = {
        "report": os.path.join(cfg.out, "report.csv"),
        "summary": os.path.join(cfg.out, "report_summary.csv"),
        "accuracy": os.path.join(cfg.out, "report_accuracy.csv"),
    }
    write_report_csv(report, paths["report"])
    write_summary_csv(report, paths["summary"])
    write_accuracy_csv(report, paths["accuracy"])
    for p in paths.values():
        print(f"wrote {p}")
    print("estimator   mean FIT   std FIT")
    for name, mean, std in report.summary():
        print(f"{name:<12s}{mean:>8.2f}% {std:>8.2f}%")
    for variant in sorted(report.accuracies):
        print(f"accuracy ({variant} variance): {report.accuracies[variant]:.3f}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "estimate": cmd_estimate,
    "evaluate": cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 4
    except TranschedError as e:  # pragma: no cover - defensive catch-all
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
