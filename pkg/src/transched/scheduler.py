"""Windowed Bayes classification and scheduled output estimation.

The online record is cut into fixed-length windows.  Within each window
the auxiliary models compete on their regression evidence

    L_q = log p(H_q) - N log(sigma_q) - ||y - Phi theta_q||^2 / (2 sigma_q^2)

with N the number of regression rows the window yields.  The winning
condition's primary model then estimates the target over that window.
Classification uses in-window rows only, so windows stay independent;
prediction reuses the previous window's tail to seed the lags, so every
sample after the record's first ``order`` samples gets an estimate.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import TimeSeriesSet, build_regressor, segment
from .errors import ConfigError, DataError, NumericalError
from .transmissibility import FirModel, TransmissibilityFamily, predict

# Windows whose two best log-evidences are closer than this are flagged
# ambiguous in the trace; they typically straddle a dynamics switch.
AMBIGUITY_NATS = 2.0

WINDOW_TRACE_FORMAT = "transched-window-trace v1"
SAMPLE_TRACE_FORMAT = "transched-sample-trace v1"


@dataclass(frozen=True)
class Prior:
    """Prior probabilities over the family members, in label order.

    A weight of exactly zero permanently excludes a member.
    """

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "weights", w)
        if w.size < 1:
            raise ConfigError("prior needs at least one weight")
        if np.any(w < 0):
            raise ConfigError(f"prior weights must be non-negative, got {w}")
        if abs(float(w.sum()) - 1.0) > 1.0e-12:
            raise ConfigError(f"prior weights must sum to 1, got {w.sum()!r}")
        w.flags.writeable = False

    @staticmethod
    def uniform(q: int) -> "Prior":
        if q < 1:
            raise ConfigError(f"prior needs at least one member, got {q}")
        return Prior(weights=np.full(q, 1.0 / q))

    @staticmethod
    def from_weights(weights) -> "Prior":
        """Normalize arbitrary non-negative weights into a prior."""
        w = np.asarray(weights, dtype=float).ravel()
        total = float(w.sum())
        if total <= 0:
            raise ConfigError("prior weights must have a positive sum")
        return Prior(weights=w / total)


@dataclass(frozen=True)
class PosteriorResult:
    """Per-window classification outcome."""

    window_id: int
    log_evidence: np.ndarray
    posterior: np.ndarray
    chosen: int
    ambiguous: bool = False


@dataclass(frozen=True)
class ScheduleTrace:
    """Full online-stage output: window decisions plus per-sample estimates."""

    labels: tuple[str, ...]
    windows: tuple[PosteriorResult, ...]
    bounds: tuple[tuple[int, int], ...]  # (start, stop) 0-based per classified window
    skipped: tuple[tuple[int, int, int], ...]  # (window_id, start, stop) too short
    sample_labels: tuple[str | None, ...]
    estimates: np.ndarray  # NaN where no estimate exists

    def chosen_labels(self) -> list[str]:
        return [self.labels[w.chosen] for w in self.windows]

    def majority_label(self) -> str:
        """Most frequent window choice; ties go to the earliest family label."""
        if not self.windows:
            raise DataError("trace has no classified windows")
        counts = [0] * len(self.labels)
        for w in self.windows:
            counts[w.chosen] += 1
        return self.labels[counts.index(max(counts))]


def pooled_sigma2(h: TransmissibilityFamily) -> float:
    """Degrees-of-freedom weighted mean of the members' residual variances."""
    total_dof = sum(m.dof for m in h.models)
    if total_dof <= 0:
        raise DataError("pooled variance needs positive degrees of freedom")
    return sum(m.dof * m.sigma2 for m in h.models) / total_dof


def log_evidence(
    h: FirModel,
    y_i1: np.ndarray,
    y_i2: np.ndarray,
    prior_q: float,
    sigma2: float | None = None,
) -> float:
    """Log evidence of one auxiliary model on one window.

    ``sigma2`` overrides the model's own residual variance (used by the
    pooled-variance classifier variant).  A zero prior excludes the
    member outright.
    """
    if prior_q < 0:
        raise ConfigError(f"prior must be non-negative, got {prior_q}")
    if prior_q == 0.0:
        return -math.inf
    m = build_regressor(y_i1, y_i2, h.order)
    r = m.y - m.phi @ h.theta
    rss = float(r @ r)
    n_rows = m.n_rows
    s2 = h.sigma2 if sigma2 is None else sigma2
    if s2 <= 0.0:
        if rss == 0.0:
            return math.inf  # perfect model with zero variance dominates
        warnings.warn(
            "auxiliary model has zero residual variance but a nonzero window "
            "residual; treating its evidence as -inf",
            RuntimeWarning,
            stacklevel=2,
        )
        return -math.inf
    quad = rss / (2.0 * s2)  # overflows to inf for tiny s2, giving L = -inf
    return math.log(prior_q) - 0.5 * n_rows * math.log(s2) - quad


def _posterior_from_log(levidence: np.ndarray) -> np.ndarray:
    finite = np.isfinite(levidence)
    post = np.zeros_like(levidence)
    if np.any(levidence == math.inf):
        at_top = levidence == math.inf
        post[at_top] = 1.0 / at_top.sum()
        return post
    if not np.any(finite):
        raise NumericalError("no admissible model: all log evidences are -inf")
    shifted = levidence[finite] - levidence[finite].max()
    expv = np.exp(shifted)
    post[finite] = expv / expv.sum()
    return post


def classify(
    h: TransmissibilityFamily,
    window: TimeSeriesSet,
    prior: Prior,
    pooled: bool = False,
    window_id: int = 1,
) -> PosteriorResult:
    """Pick the active condition for one window of online data."""
    if prior.weights.size != len(h):
        raise ConfigError(
            f"prior has {prior.weights.size} weights for {len(h)} family members"
        )
    if window.n_samples <= h.order:
        raise DataError(
            f"window of {window.n_samples} samples is too short for order "
            f"{h.order}; need at least {h.order + 1}"
        )
    y_i1 = window.channels(h.input_channel_names)
    y_i2 = window.channel(h.output_channel_name)
    s2 = pooled_sigma2(h) if pooled else None
    levidence = np.array(
        [
            log_evidence(m, y_i1, y_i2, float(prior.weights[k]), sigma2=s2)
            for k, m in enumerate(h.models)
        ]
    )
    posterior = _posterior_from_log(levidence)
    chosen = int(np.argmax(levidence))  # first index wins ties
    finite = np.sort(levidence[np.isfinite(levidence)])[::-1]
    ambiguous = finite.size >= 2 and (finite[0] - finite[1]) < AMBIGUITY_NATS
    return PosteriorResult(
        window_id=window_id,
        log_evidence=levidence,
        posterior=posterior,
        chosen=chosen,
        ambiguous=ambiguous,
    )


def schedule_estimate(
    g: TransmissibilityFamily,
    h: TransmissibilityFamily,
    online: TimeSeriesSet,
    prior: Prior,
    window_len: int,
    pooled: bool = False,
) -> ScheduleTrace:
    """Classify every window and estimate the target with the chosen model.

    Windows shorter than order+1 samples (a trailing remainder) cannot be
    classified; they are recorded under ``skipped`` and contribute no
    estimates.
    """
    if g.labels != h.labels:
        raise DataError("primary and auxiliary families must share labels")
    order = g.order
    if window_len <= order:
        raise ConfigError(
            f"window length {window_len} must exceed the FIR order {order}"
        )
    for name in g.input_channel_names:
        if name not in online.names:
            raise DataError(f"online record is missing channel {name!r}")
    y_all = online.channels(g.input_channel_names)
    estimates = np.full(online.n_samples, math.nan)
    sample_labels: list[str | None] = [None] * online.n_samples
    windows: list[PosteriorResult] = []
    bounds: list[tuple[int, int]] = []
    skipped: list[tuple[int, int, int]] = []
    for idx, win in enumerate(segment(online, window_len), start=1):
        if win.stop - win.start <= order:
            skipped.append((idx, win.start, win.stop))
            continue
        result = classify(h, win.ts, prior, pooled=pooled, window_id=idx)
        windows.append(result)
        bounds.append((win.start, win.stop))
        label = g.labels[result.chosen]
        model = g.models[result.chosen]
        lo = max(win.start - order, 0)
        preds = predict(model, y_all[:, lo : win.stop])
        estimates[win.stop - preds.shape[0] : win.stop] = preds
        for t in range(win.start, win.stop):
            sample_labels[t] = label
    return ScheduleTrace(
        labels=g.labels,
        windows=tuple(windows),
        bounds=tuple(bounds),
        skipped=tuple(skipped),
        sample_labels=tuple(sample_labels),
        estimates=estimates,
    )


def write_window_trace(trace: ScheduleTrace, path: str | os.PathLike) -> None:
    """Per-window CSV: id, 1-based sample range, choice, evidences, posteriors."""
    q = len(trace.labels)
    header = (
        ["window_id", "start_sample", "end_sample", "chosen_label"]
        + [f"L_{k + 1}" for k in range(q)]
        + [f"posterior_{k + 1}" for k in range(q)]
        + ["ambiguous"]
    )
    with open(path, "w", newline="") as f:
        f.write(f"# format: {WINDOW_TRACE_FORMAT}\n")
        f.write(",".join(header) + "\n")
        for res, (start, stop) in zip(trace.windows, trace.bounds):
            cells = [
                str(res.window_id),
                str(start + 1),
                str(stop),
                trace.labels[res.chosen],
            ]
            cells += [repr(float(v)) for v in res.log_evidence]
            cells += [repr(float(v)) for v in res.posterior]
            cells.append("1" if res.ambiguous else "0")
            f.write(",".join(cells) + "\n")


def write_sample_trace(
    trace: ScheduleTrace, online: TimeSeriesSet, path: str | os.PathLike
) -> None:
    """Per-sample CSV: measured target (when present), estimate, chosen label."""
    target = None
    if online.target_name is not None:
        target = online.target()
    with open(path, "w", newline="") as f:
        f.write(f"# format: {SAMPLE_TRACE_FORMAT}\n")
        f.write("sample_index,y_O_measured,y_O_estimated,chosen_label\n")
        for t in range(online.n_samples):
            measured = "" if target is None else repr(float(target[t]))
            est = trace.estimates[t]
            estimated = "" if math.isnan(est) else repr(float(est))
            label = trace.sample_labels[t] or ""
            f.write(f"{t + 1},{measured},{estimated},{label}\n")
