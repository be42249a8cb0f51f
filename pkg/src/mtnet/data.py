"""Loading, scaling, chronological splitting and window slicing.

Time is the column axis throughout: a series is a D x T_total matrix whose
column t holds all variables at time stamp t. Input files use the transposed
layout (one row per time stamp) common to the public benchmark dumps.

A training sample for target time t consists of a query window covering the
T steps ending at t - h, preceded by n contiguous memory blocks of T steps
each. Blocks and query tile the range [t - h - (n+1)T + 1, t - h] exactly,
so no input value is newer than t - h and nothing overlaps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ConfigError, DataError, ShapeError

if TYPE_CHECKING:
    from .model import MTNetConfig

_MISSING_TOKENS = {"", "na", "nan", "n/a", "null", "?"}


@dataclass
class RawSeries:
    """A fully observed multivariate series, values indexed [variable, time]."""

    values: np.ndarray
    variable_names: list[str] | None = None
    sample_rate: str = "unknown"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError(f"series values must be D x T, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("series contains non-finite values after loading")

    @property
    def D(self) -> int:
        return self.values.shape[0]

    @property
    def T_total(self) -> int:
        return self.values.shape[1]


def load_matrix(path, delimiter: str | None = None, header: bool = False,
                forward_fill: bool = False, sample_rate: str = "unknown") -> RawSeries:
    """Parse a delimited text matrix, one row per time stamp.

    The delimiter is autodetected between comma and tab unless given. Missing
    cells (empty, NA, NaN and similar) are rejected unless `forward_fill` is
    set, in which case each is replaced by the previous time stamp's value of
    the same variable.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    names: list[str] | None = None
    start_line = 0
    if header:
        if not lines:
            raise DataError(f"{path}: empty file")
        names = [c.strip() for c in _split_row(lines[0], delimiter)]
        start_line = 1

    rows: list[list[float]] = []
    width = None
    for lineno, line in enumerate(lines[start_line:], start=start_line + 1):
        if not line.strip():
            continue
        cells = _split_row(line, delimiter)
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise DataError(f"{path}:{lineno}: row has {len(cells)} columns, expected {width}")
        row = []
        for col, cell in enumerate(cells):
            token = cell.strip()
            if token.lower() in _MISSING_TOKENS:
                if not forward_fill:
                    raise DataError(f"{path}:{lineno}: missing value in column {col}"
                                    " (enable forward fill to repair)")
                if not rows:
                    raise DataError(f"{path}:{lineno}: missing value in column {col}"
                                    " has no earlier value to fill from")
                row.append(rows[-1][col])
                continue
            try:
                value = float(token)
            except ValueError:
                raise DataError(f"{path}:{lineno}: column {col}: "
                                f"cannot parse {token!r} as a number") from None
            if not np.isfinite(value):
                if not forward_fill:
                    raise DataError(f"{path}:{lineno}: non-finite value in column {col}")
                if not rows:
                    raise DataError(f"{path}:{lineno}: non-finite value in column {col}"
                                    " has no earlier value to fill from")
                value = rows[-1][col]
            row.append(value)
        rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data rows")
    values = np.array(rows, dtype=np.float64).T  # rows are time stamps on disk
    return RawSeries(values=values, variable_names=names, sample_rate=sample_rate)


def _split_row(line: str, delimiter: str | None) -> list[str]:
    if delimiter is not None:
        return line.split(delimiter)
    if "\t" in line:
        return line.split("\t")
    if "," in line:
        return line.split(",")
    return line.split()


def add_calendar_features(series: RawSeries, steps_per_day: int = 24,
                          days_per_week: int = 7, days_per_year: int = 365,
                          start_step: int = 0) -> RawSeries:
    """Append hour-of-day, day-of-week and day-of-year columns in [0, 1].

    Positions are derived from the row index and the sampling rate; pass
    `start_step` when the series does not begin at midnight of day zero.
    """
    if steps_per_day < 1:
        raise ConfigError(f"steps_per_day must be >= 1, got {steps_per_day}")
    idx = np.arange(series.T_total) + start_step
    day = idx // steps_per_day
    feats = np.stack([
        (idx % steps_per_day) / max(steps_per_day - 1, 1),
        (day % days_per_week) / max(days_per_week - 1, 1),
        (day % days_per_year) / max(days_per_year - 1, 1),
    ])
    names = None
    if series.variable_names is not None:
        names = series.variable_names + ["hour_of_day", "day_of_week", "day_of_year"]
    return RawSeries(values=np.vstack([series.values, feats]), variable_names=names,
                     sample_rate=series.sample_rate)


@dataclass
class Scaler:
    """Per-variable min-max transform fit on the training partition only."""

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.shift = np.asarray(self.shift, dtype=np.float64)
        self.scale = np.asarray(self.scale, dtype=np.float64)
        if self.shift.shape != self.scale.shape or self.shift.ndim != 1:
            raise ShapeError("scaler shift and scale must be equal-length vectors")
        if np.any(self.scale <= 0.0):
            raise ConfigError("scaler scale entries must be positive")

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Map original-scale values (rows = variables) to scaled space."""
        return (values - self.shift[:, None]) / self.scale[:, None]

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.scale[:, None] + self.shift[:, None]

    def invert_targets(self, predictions: np.ndarray, targets: Sequence[int]) -> np.ndarray:
        """Invert scaled predictions for the listed variables; rows = variables."""
        idx = list(targets)
        return predictions * self.scale[idx, None] + self.shift[idx, None]


def fit_scaler(train_values: np.ndarray) -> Scaler:
    """Min-max over the training slice; constant variables keep scale 1."""
    train_values = np.asarray(train_values, dtype=np.float64)
    if train_values.ndim != 2 or train_values.shape[1] == 0:
        raise DataError("cannot fit a scaler on an empty training slice")
    lo = train_values.min(axis=1)
    hi = train_values.max(axis=1)
    span = hi - lo
    span[span == 0.0] = 1.0
    return Scaler(shift=lo, scale=span)


@dataclass(frozen=True)
class SplitSpec:
    """Chronological fractions; defaults to the 60/20/20 protocol."""

    train_fraction: float = 0.6
    valid_fraction: float = 0.2
    test_fraction: float = 0.2

    def __post_init__(self):
        total = self.train_fraction + self.valid_fraction + self.test_fraction
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {total}")
        if min(self.train_fraction, self.valid_fraction, self.test_fraction) < 0:
            raise ConfigError("split fractions must be non-negative")


def chronological_split(t_total: int, spec: SplitSpec = SplitSpec()
                        ) -> tuple[tuple[int, int], tuple[int, int], tuple[int, int]]:
    """Contiguous disjoint half-open index ranges (train, valid, test)."""
    a = int(np.floor(t_total * spec.train_fraction))
    b = int(np.floor(t_total * (spec.train_fraction + spec.valid_fraction)))
    return (0, a), (a, b), (b, t_total)


@dataclass
class WindowSample:
    """One training or evaluation instance.

    `blocks` are oldest first; `block_time_ranges` and `query_time_range`
    carry inclusive absolute (start, end) index pairs. The newest input index
    is always query_time_range[1] == target_time - h for the h the sample was
    built with.
    """

    blocks: list[np.ndarray]
    query: np.ndarray
    target: np.ndarray
    target_time: int
    block_time_ranges: list[tuple[int, int]]
    query_time_range: tuple[int, int] = field(default=(0, 0))

    def __post_init__(self):
        shapes = {b.shape for b in self.blocks}
        if len(shapes) > 1 or (shapes and next(iter(shapes)) != self.query.shape):
            raise ShapeError("memory blocks and query must share one D x T shape")
        if len(self.block_time_ranges) != len(self.blocks):
            raise ShapeError("one time range per memory block is required")
        prev_end = None
        for start, end in self.block_time_ranges:
            if end < start:
                raise ConfigError(f"bad block range ({start}, {end})")
            if prev_end is not None and start != prev_end + 1:
                raise ConfigError("memory blocks must be contiguous and ordered oldest first")
            prev_end = end
        qs, qe = self.query_time_range
        if prev_end is not None and qs != prev_end + 1:
            raise ConfigError("query must start exactly where the last block ends")
        if self.target_time <= qe:
            raise ConfigError("target time must lie after the query window")


def make_samples(series: np.ndarray, cfg: "MTNetConfig",
                 index_range: tuple[int, int] | None = None) -> list[WindowSample]:
    """All samples whose target time falls in `index_range` (half-open).

    Inputs may reach back before the range start (rolling evaluation keeps
    the true history available); a sample exists only when the full
    (n+1) * T input span fits inside the series. Stride is 1 and samples are
    ordered by target time.
    """
    values = np.asarray(series, dtype=np.float64)
    n, t_len, h = cfg.n, cfg.T, cfg.h
    t_total = values.shape[1]
    lo, hi = index_range if index_range is not None else (0, t_total)
    lo = max(lo, (n + 1) * t_len + h - 1)
    hi = min(hi, t_total)
    targets = list(cfg.targets)

    samples = []
    for t in range(lo, hi):
        query_end = t - h
        query_start = query_end - t_len + 1
        block_ranges = [(query_start - (n - i) * t_len, query_start - (n - i) * t_len + t_len - 1)
                        for i in range(n)]
        blocks = [np.ascontiguousarray(values[:, s:e + 1]) for s, e in block_ranges]
        samples.append(WindowSample(
            blocks=blocks,
            query=np.ascontiguousarray(values[:, query_start:query_end + 1]),
            target=values[targets, t].copy(),
            target_time=t,
            block_time_ranges=block_ranges,
            query_time_range=(query_start, query_end),
        ))
    return samples
