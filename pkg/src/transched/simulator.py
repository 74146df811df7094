"""Quarter-car switching simulator with exact zero-order-hold discretization.

The plant is the standard two-mass quarter car driven by an unknown road
displacement.  State x = [z_s, z_s', z_u, z_u']; measured outputs are the
unsprung-mass acceleration, the sprung-mass acceleration, and the
suspension deflection z_s - z_u (the estimation target).  A switching
schedule plays several parameter sets back to back with the state carried
across switches, which reproduces the brief physical transient after a
switch instead of resetting it away.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .dataset import PSEUDO_INPUT, TARGET_OUTPUT, TimeSeriesSet
from .errors import ConfigError, DataError

DEFAULT_SAMPLE_TIME = 0.1

# Channel order matches the output matrix rows.
CHANNEL_NAMES = ("y_I1_a", "y_I2", "y_O")
CHANNEL_ROLES = (PSEUDO_INPUT, PSEUDO_INPUT, TARGET_OUTPUT)


@dataclass(frozen=True)
class QuarterCarParams:
    """Physical parameters: sprung/unsprung mass, spring, tire, damper."""

    m_s: float
    m_u: float
    k_s: float
    k_r: float
    c_s: float

    def __post_init__(self) -> None:
        for name in ("m_s", "m_u", "k_s", "k_r", "c_s"):
            v = getattr(self, name)
            if v <= 0:
                raise ConfigError(f"quarter-car parameter {name} must be positive, got {v}")


@dataclass(frozen=True)
class ContinuousStateSpace:
    a: np.ndarray  # (n, n)
    b: np.ndarray  # (n,)
    c: np.ndarray  # (p, n)
    d: np.ndarray  # (p,)


@dataclass(frozen=True)
class DiscreteStateSpace:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    t: float


@dataclass(frozen=True)
class SwitchSchedule:
    """Ordered (condition label, duration in samples) segments."""

    steps: tuple[tuple[str, int], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple((str(l), int(n)) for l, n in self.steps))
        for label, n in self.steps:
            if n < 1:
                raise ConfigError(f"schedule duration for {label!r} must be >= 1, got {n}")

    @property
    def total_samples(self) -> int:
        return sum(n for _, n in self.steps)

    def labels_per_sample(self) -> list[str]:
        out: list[str] = []
        for label, n in self.steps:
            out.extend([label] * n)
        return out


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement-noise request: SNR (power ratio, or dB) and a seed.

    ``snr=math.inf`` means clean output.  ``scale`` is "linear" for a
    plain power ratio or "db" for decibels.
    """

    snr: float
    seed: int
    scale: str = "linear"

    def __post_init__(self) -> None:
        if self.scale not in ("linear", "db"):
            raise ConfigError(f"noise scale must be 'linear' or 'db', got {self.scale!r}")
        if self.scale == "linear" and self.snr <= 0:
            raise ConfigError(f"linear SNR must be positive, got {self.snr}")

    @property
    def snr_linear(self) -> float:
        if self.scale == "db":
            return math.inf if math.isinf(self.snr) else 10.0 ** (self.snr / 10.0)
        return self.snr


def build_continuous(p: QuarterCarParams) -> ContinuousStateSpace:
    """Continuous-time quarter-car matrices for one parameter set."""
    ks_ms = p.k_s / p.m_s
    cs_ms = p.c_s / p.m_s
    ks_mu = p.k_s / p.m_u
    cs_mu = p.c_s / p.m_u
    a = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [-ks_ms, -cs_ms, ks_ms, cs_ms],
            [0.0, 0.0, 0.0, 1.0],
            [ks_mu, cs_mu, -(p.k_s + p.k_r) / p.m_u, -cs_mu],
        ]
    )
    b = np.array([0.0, 0.0, 0.0, p.k_r / p.m_u])
    c = np.array(
        [
            [ks_mu, cs_mu, -(p.k_s + p.k_r) / p.m_u, -cs_mu],
            [-ks_ms, -cs_ms, ks_ms, cs_ms],
            [1.0, 0.0, -1.0, 0.0],
        ]
    )
    d = np.array([p.k_r / p.m_u, 0.0, 0.0])
    return ContinuousStateSpace(a=a, b=b, c=c, d=d)


def matrix_exp(m: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring around a Taylor core.

    The argument is halved until its 1-norm is below 0.25, the series is
    summed to machine precision, and the result squared back up.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DataError(f"matrix must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError("matrix exponential requires finite entries")
    n = m.shape[0]
    norm = float(np.max(np.abs(m).sum(axis=0))) if n else 0.0
    squarings = 0
    if norm > 0.25:
        squarings = max(0, int(math.ceil(math.log2(norm / 0.25))))
    scaled = m / (2.0**squarings)
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, 40):
        term = term @ scaled / k
        result = result + term
        if float(np.max(np.abs(term))) <= 1.0e-20 * max(1.0, float(np.max(np.abs(result)))):
            break
    for _ in range(squarings):
        result = result @ result
    return result


def c2d_zoh(ss: ContinuousStateSpace, t: float) -> DiscreteStateSpace:
    """Exact zero-order-hold discretization at sampling time t.

    The state matrix is exp(a t).  The input vector is the convergent
    series sum_k a^k t^(k+1)/(k+1)! b, evaluated inversion-free through
    the exponential of the (a, b) block matrix; for invertible a it
    coincides with a^-1 (exp(a t) - I) b.
    """
    if t <= 0:
        raise ConfigError(f"sampling time must be positive, got {t}")
    n = ss.a.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = ss.a * t
    aug[:n, n] = ss.b * t
    e = matrix_exp(aug)
    return DiscreteStateSpace(
        a=e[:n, :n], b=e[:n, n].copy(), c=ss.c.copy(), d=ss.d.copy(), t=t
    )


def gen_excitation(
    n_samples: int, variance: float, seed: int | np.random.Generator
) -> np.ndarray:
    """White zero-mean Gaussian excitation, reproducible per seed."""
    if variance <= 0:
        raise ConfigError(f"excitation variance must be positive, got {variance}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.normal(0.0, math.sqrt(variance), int(n_samples))


def simulate(
    systems: Mapping[str, DiscreteStateSpace],
    schedule: SwitchSchedule,
    z_r: np.ndarray,
    x0: np.ndarray | None = None,
    condition_label: str | None = None,
) -> TimeSeriesSet:
    """Run the switching recursion x+ = A_q x + b_q z, y = C_q x + d_q z.

    The state is carried continuously across switches.  The result
    carries the active condition per sample in ``sample_labels``.
    """
    z_r = np.asarray(z_r, dtype=float).ravel()
    if schedule.total_samples != z_r.shape[0]:
        raise DataError(
            f"schedule covers {schedule.total_samples} samples but excitation "
            f"has {z_r.shape[0]}"
        )
    for label, _ in schedule.steps:
        if label not in systems:
            raise DataError(f"schedule references unknown condition {label!r}")
    first = next(iter(systems.values()))
    n = first.a.shape[0]
    p = first.c.shape[0]
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    y = np.zeros((p, z_r.shape[0]))
    t = 0
    for label, duration in schedule.steps:
        sys = systems[label]
        for _ in range(duration):
            y[:, t] = sys.c @ x + sys.d * z_r[t]
            x = sys.a @ x + sys.b * z_r[t]
            t += 1
    return TimeSeriesSet(
        sample_rate=1.0 / first.t,
        names=CHANNEL_NAMES[:p] if p == len(CHANNEL_NAMES) else tuple(f"y{i}" for i in range(p)),
        roles=CHANNEL_ROLES[:p] if p == len(CHANNEL_ROLES) else tuple([PSEUDO_INPUT] * p),
        data=y,
        condition_label=condition_label,
        sample_labels=tuple(schedule.labels_per_sample()),
    )


def add_noise(ts: TimeSeriesSet, spec: NoiseSpec) -> TimeSeriesSet:
    """Add independent white Gaussian noise per channel at the given SNR.

    Noise power is the channel's mean-square power divided by the linear
    SNR.  An infinite SNR returns the record unchanged.
    """
    snr = spec.snr_linear
    if math.isinf(snr):
        return ts
    rng = np.random.default_rng(spec.seed)
    data = np.array(ts.data)
    for i in range(ts.n_channels):
        power = float(np.mean(data[i] ** 2))
        if power == 0.0:
            raise DataError(
                f"channel {ts.names[i]!r} has zero power; cannot scale noise to finite SNR"
            )
        data[i] = data[i] + rng.normal(0.0, math.sqrt(power / snr), ts.n_samples)
    return TimeSeriesSet(
        sample_rate=ts.sample_rate,
        names=ts.names,
        roles=ts.roles,
        data=data,
        condition_label=ts.condition_label,
        sample_labels=ts.sample_labels,
    )
