"""Multichannel time-series records and their regression matrices.

A record keeps named channels of equal length together with a role per
channel: ``pseudo_input`` channels drive the FIR models, the single
``target_output`` channel is what the primary models estimate.  The
functions here cover CSV I/O, mean removal, lag-matrix construction,
pseudo-input decomposition, and fixed-length windowing.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError

PSEUDO_INPUT = "pseudo_input"
TARGET_OUTPUT = "target_output"
_ROLES = (PSEUDO_INPUT, TARGET_OUTPUT)


@dataclass(frozen=True)
class TimeSeriesSet:
    """Uniformly sampled multichannel record.

    ``data`` has shape (n_channels, n_samples); rows follow ``names``.
    ``sample_labels`` optionally carries a per-sample condition tag, as
    emitted by the switching simulator.  Instances are immutable and the
    payload array is marked read-only, so records can be shared freely.
    """

    sample_rate: float
    names: tuple[str, ...]
    roles: tuple[str, ...]
    data: np.ndarray
    condition_label: str | None = None
    sample_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        data = np.atleast_2d(np.asarray(self.data, dtype=float))
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "roles", tuple(self.roles))
        if self.sample_rate <= 0:
            raise DataError(f"sample_rate must be positive, got {self.sample_rate}")
        if len(self.names) != data.shape[0] or len(self.roles) != data.shape[0]:
            raise DataError("names, roles, and data rows must align")
        if data.shape[1] < 1:
            raise DataError("record must contain at least one sample")
        if len(set(self.names)) != len(self.names):
            raise DataError("channel names must be unique")
        for role in self.roles:
            if role not in _ROLES:
                raise DataError(f"unknown channel role {role!r}")
        if self.roles.count(TARGET_OUTPUT) > 1:
            raise DataError("at most one channel may be tagged target_output")
        if self.sample_labels is not None:
            labels = tuple(self.sample_labels)
            object.__setattr__(self, "sample_labels", labels)
            if len(labels) != data.shape[1]:
                raise DataError("sample_labels length must match sample count")
        data.flags.writeable = False

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def pseudo_input_names(self) -> tuple[str, ...]:
        return tuple(n for n, r in zip(self.names, self.roles) if r == PSEUDO_INPUT)

    @property
    def target_name(self) -> str | None:
        for n, r in zip(self.names, self.roles):
            if r == TARGET_OUTPUT:
                return n
        return None

    def channel(self, name: str) -> np.ndarray:
        try:
            i = self.names.index(name)
        except ValueError:
            raise DataError(f"unknown channel name {name!r}") from None
        return self.data[i]

    def channels(self, names: tuple[str, ...] | list[str]) -> np.ndarray:
        """Stack the requested channels into a (len(names), M) array."""
        return np.vstack([self.channel(n) for n in names])

    def pseudo_inputs(self) -> np.ndarray:
        return self.channels(self.pseudo_input_names)

    def target(self) -> np.ndarray:
        name = self.target_name
        if name is None:
            raise DataError("record has no target_output channel")
        return self.channel(name)

    def slice_samples(self, start: int, stop: int) -> "TimeSeriesSet":
        labels = None
        if self.sample_labels is not None:
            labels = self.sample_labels[start:stop]
        return TimeSeriesSet(
            sample_rate=self.sample_rate,
            names=self.names,
            roles=self.roles,
            data=self.data[:, start:stop],
            condition_label=self.condition_label,
            sample_labels=labels,
        )


@dataclass(frozen=True)
class Decomposition:
    """Split of the pseudo-input channels into drivers and one auxiliary output.

    ``aux_output_index`` selects, within the pseudo-input channel list,
    the channel used as the auxiliary model output; the remaining
    pseudo-input channels keep their order and drive the auxiliary model.
    """

    aux_output_index: int

    def split(self, items: tuple | list) -> tuple[list, object]:
        if not 0 <= self.aux_output_index < len(items):
            raise DataError(
                f"auxiliary output index {self.aux_output_index} out of range "
                f"for {len(items)} pseudo-input channels"
            )
        rest = [x for i, x in enumerate(items) if i != self.aux_output_index]
        return rest, items[self.aux_output_index]


@dataclass(frozen=True)
class RegressionMatrices:
    """Design matrix and target vector for one FIR regression."""

    phi: np.ndarray  # (N, input_dim * (order + 1))
    y: np.ndarray  # (N,)
    order: int
    input_dim: int

    @property
    def n_rows(self) -> int:
        return self.phi.shape[0]

    @property
    def n_params(self) -> int:
        return self.input_dim * (self.order + 1)


@dataclass(frozen=True)
class Window:
    """One segment of a record; ``short`` flags a trailing remainder."""

    ts: TimeSeriesSet
    start: int  # 0-based inclusive
    stop: int  # 0-based exclusive
    short: bool = False


def load_csv(
    path: str | os.PathLike,
    schema: dict[str, str],
    sample_rate: float = 1.0,
    condition_label: str | None = None,
) -> TimeSeriesSet:
    """Read a comma-separated file into a record.

    ``schema`` maps channel name to role and fixes the channel order of
    the result.  Every schema channel must appear in the header; columns
    not named in the schema (e.g. a time axis or a label column) are
    ignored.
    """
    if not os.path.exists(path):
        raise DataError(f"file not found: {path}")
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for name in schema:
            if name not in header:
                raise DataError(f"{path}: unknown channel name {name!r}, header has {header}")
        cols = {name: header.index(name) for name in schema}
        values: list[list[float]] = [[] for _ in schema]
        n_rows = 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: line {lineno}: expected {len(header)} columns, found {len(row)}"
                )
            for k, name in enumerate(schema):
                cell = row[cols[name]].strip()
                try:
                    values[k].append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: line {lineno}: non-numeric value {cell!r} "
                        f"in channel {name!r}"
                    ) from None
            n_rows += 1
    if n_rows == 0:
        raise DataError(f"{path}: no samples")
    return TimeSeriesSet(
        sample_rate=sample_rate,
        names=tuple(schema),
        roles=tuple(schema.values()),
        data=np.array(values, dtype=float),
        condition_label=condition_label,
    )


def write_csv(
    ts: TimeSeriesSet,
    path: str | os.PathLike,
    clean: TimeSeriesSet | None = None,
) -> None:
    """Write a record as CSV; channels of ``clean`` are appended with a
    ``_clean`` suffix, and ``sample_labels`` become a ``true_label`` column.

    Floats are rendered with ``repr`` (shortest exact round trip), so
    rewriting the same record is byte-identical.
    """
    header = list(ts.names)
    columns = [ts.data[i] for i in range(ts.n_channels)]
    if clean is not None:
        if clean.n_samples != ts.n_samples:
            raise DataError("clean record length does not match")
        header += [f"{n}_clean" for n in clean.names]
        columns += [clean.data[i] for i in range(clean.n_channels)]
    labels = ts.sample_labels
    with open(path, "w", newline="") as f:
        if labels is not None:
            f.write(",".join(header + ["true_label"]) + "\n")
        else:
            f.write(",".join(header) + "\n")
        for t in range(ts.n_samples):
            cells = [repr(float(col[t])) for col in columns]
            if labels is not None:
                cells.append(labels[t])
            f.write(",".join(cells) + "\n")


def detrend_mean(ts: TimeSeriesSet) -> TimeSeriesSet:
    """Remove the per-channel sample mean. Idempotent."""
    data = ts.data - ts.data.mean(axis=1, keepdims=True)
    # a large common offset leaves a residue of order eps*offset; mop it up
    # so the result is zero-mean at its own amplitude scale
    data -= data.mean(axis=1, keepdims=True)
    return TimeSeriesSet(
        sample_rate=ts.sample_rate,
        names=ts.names,
        roles=ts.roles,
        data=data,
        condition_label=ts.condition_label,
        sample_labels=ts.sample_labels,
    )


def lag_matrix(y_i: np.ndarray, order: int) -> np.ndarray:
    """Stack lags 0..order of all input channels row-wise per time step.

    Row t (t = order..M-1, 0-based) is [y(t)', y(t-1)', ..., y(t-order)'],
    one block of all channels per lag.
    """
    y_i = np.atleast_2d(np.asarray(y_i, dtype=float))
    n_i, m = y_i.shape
    if order < 0:
        raise DataError(f"order must be non-negative, got {order}")
    if m <= order:
        raise DataError(f"insufficient samples for order {order}: need > {order}, got {m}")
    blocks = [y_i[:, order - k : m - k].T for k in range(order + 1)]
    return np.hstack(blocks)


def build_regressor(y_i: np.ndarray, y_target: np.ndarray, order: int) -> RegressionMatrices:
    """Form the FIR regression pair (design matrix, aligned targets).

    The first ``order`` samples are burn-in and produce no rows, so the
    result has M - order rows.
    """
    y_i = np.atleast_2d(np.asarray(y_i, dtype=float))
    y_target = np.asarray(y_target, dtype=float).ravel()
    if y_target.shape[0] != y_i.shape[1]:
        raise DataError(
            f"target length {y_target.shape[0]} does not match input length {y_i.shape[1]}"
        )
    phi = lag_matrix(y_i, order)
    return RegressionMatrices(
        phi=phi, y=y_target[order:], order=order, input_dim=y_i.shape[0]
    )


def decompose(ts: TimeSeriesSet, d: Decomposition) -> tuple[np.ndarray, np.ndarray]:
    """Split the pseudo-input channels into (drivers, auxiliary output)."""
    names = ts.pseudo_input_names
    if len(names) < 2:
        raise DataError(
            f"decomposition needs at least 2 pseudo-input channels, got {len(names)}"
        )
    rest, aux = d.split(names)
    return ts.channels(tuple(rest)), ts.channel(aux)


def segment(ts: TimeSeriesSet, window: int) -> list[Window]:
    """Partition a record into consecutive non-overlapping windows.

    A trailing remainder shorter than ``window`` is kept and flagged.
    Concatenating the windows reproduces the record sample-for-sample.
    """
    if window <= 0:
        raise DataError(f"window length must be positive, got {window}")
    out: list[Window] = []
    m = ts.n_samples
    for start in range(0, m, window):
        stop = min(start + window, m)
        out.append(
            Window(ts=ts.slice_samples(start, stop), start=start, stop=stop,
                   short=stop - start < window)
        )
    return out


def signal_power(ts: TimeSeriesSet) -> dict[str, float]:
    """Mean-square power per channel; aids choosing the auxiliary output."""
    return {n: float(np.mean(ts.channel(n) ** 2)) for n in ts.names}
