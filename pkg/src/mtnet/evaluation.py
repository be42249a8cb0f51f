"""Test-set metrics, rolling evaluation, attention-trace export.

Metric conventions:
  - rmse and mae operate on univariate sequences,
  - rrse normalizes the total squared error by the squared deviation of the
    truth from its grand mean over the whole test block (a per-variable
    variant exists behind a flag),
  - corr averages per-variable Pearson correlations over time; variables
    that are constant in truth or prediction are skipped and counted.

Predictions are mapped back to the original scale before any metric is
computed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import Scaler, WindowSample
from .errors import ConfigError, DataError, NumericError
from .fileio import write_text_atomic
from .model import AttentionTrace


def rmse(truth: np.ndarray, pred: np.ndarray) -> float:
    truth, pred = _as_sequences(truth, pred)
    return float(np.sqrt(np.mean((truth - pred) ** 2)))


def mae(truth: np.ndarray, pred: np.ndarray) -> float:
    truth, pred = _as_sequences(truth, pred)
    return float(np.mean(np.abs(truth - pred)))


def _as_sequences(truth, pred) -> tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(truth, dtype=np.float64).ravel()
    pred = np.asarray(pred, dtype=np.float64).ravel()
    if truth.size == 0:
        raise ConfigError("metrics need at least one value")
    if truth.shape != pred.shape:
        raise ConfigError(f"truth and prediction lengths differ: {truth.shape} vs {pred.shape}")
    return truth, pred


def rrse(truth: np.ndarray, pred: np.ndarray, per_variable: bool = False) -> float:
    """Root relative squared error over a [K x T] test block.

    The default normalizer uses the grand mean of the truth over all
    variables and time stamps; `per_variable` subtracts each variable's own
    mean instead (useful for cross-toolkit comparisons).
    """
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    if truth.shape != pred.shape or truth.size == 0:
        raise ConfigError(f"rrse needs matching non-empty blocks, got {truth.shape} "
                          f"and {pred.shape}")
    if per_variable:
        centered = truth - truth.mean(axis=1, keepdims=True)
    else:
        centered = truth - truth.mean()
    denom = float((centered ** 2).sum())
    if denom <= 0.0:
        raise NumericError("rrse is undefined for a constant truth block")
    return float(np.sqrt(float(((truth - pred) ** 2).sum()) / denom))


def per_variable_corr(truth: np.ndarray, pred: np.ndarray) -> list[float]:
    """Pearson correlation per variable; NaN flags a degenerate variable."""
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    if truth.shape != pred.shape or truth.shape[1] < 2:
        raise ConfigError(f"corr needs matching blocks with >= 2 time steps, "
                          f"got {truth.shape} and {pred.shape}")
    out = []
    for yt, yp in zip(truth, pred):
        dt = yt - yt.mean()
        dp = yp - yp.mean()
        denom = np.sqrt((dt ** 2).sum() * (dp ** 2).sum())
        out.append(float((dt * dp).sum() / denom) if denom > 0.0 else float("nan"))
    return out


def corr(truth: np.ndarray, pred: np.ndarray) -> float:
    """Average Pearson correlation over the non-degenerate variables."""
    values = [c for c in per_variable_corr(truth, pred) if np.isfinite(c)]
    if not values:
        raise NumericError("corr is undefined: every variable is constant "
                           "in truth or prediction")
    return float(np.mean(values))


@dataclass
class EvalReport:
    horizon: int
    sample_count: int
    rmse: float
    mae: float
    rrse: float
    corr: float
    corr_per_variable: list[float]
    corr_skipped: int
    traces_path: str | None = None

    def __post_init__(self):
        if min(self.rmse, self.mae, self.rrse) < 0.0:
            raise NumericError("rmse, mae and rrse must be non-negative")
        # corr is NaN when every variable was degenerate (skipped); otherwise
        # it must be a genuine correlation.
        if not np.isnan(self.corr) and not -1.0 - 1e-12 <= self.corr <= 1.0 + 1e-12:
            raise NumericError(f"corr must lie in [-1, 1], got {self.corr}")

    def as_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "sample_count": self.sample_count,
            "rmse": self.rmse,
            "mae": self.mae,
            "rrse": self.rrse,
            "corr": self.corr,
            "corr_per_variable": self.corr_per_variable,
            "corr_skipped": self.corr_skipped,
            "traces_path": self.traces_path,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2) + "\n"

    def to_table(self) -> str:
        lines = [f"horizon\t{self.horizon}",
                 f"sample_count\t{self.sample_count}",
                 f"rmse\t{self.rmse:.17g}",
                 f"mae\t{self.mae:.17g}",
                 f"rrse\t{self.rrse:.17g}",
                 f"corr\t{self.corr:.17g}",
                 f"corr_skipped\t{self.corr_skipped}"]
        for i, c in enumerate(self.corr_per_variable):
            lines.append(f"corr_variable_{i}\t{c:.17g}")
        return "\n".join(lines) + "\n"


@dataclass
class EvalOutcome:
    report: EvalReport
    truth: np.ndarray            # [K x N] original scale, ordered by target time
    predictions: np.ndarray      # [K x N] original scale
    target_times: np.ndarray
    traces: list[AttentionTrace] = field(default_factory=list)


PredictFn = Callable[[WindowSample], tuple[np.ndarray, AttentionTrace | None]]


def evaluate_model(predict: PredictFn, samples: Sequence[WindowSample],
                   scaler: Scaler | None, targets: Sequence[int], horizon: int,
                   rrse_per_variable: bool = False) -> EvalOutcome:
    """Run eval-mode predictions over the samples and compute all metrics.

    `predict` returns scaled-space predictions; `scaler` maps them (and the
    sample targets) back to the original scale. Pass scaler=None when the
    sample values are already in original units. Every sample is audited
    against leakage: no input may be newer than target_time - horizon.
    """
    if not samples:
        raise ConfigError("evaluate_model needs a non-empty sample set")
    preds = []
    truths = []
    times = []
    traces: list[AttentionTrace] = []
    for s in samples:
        _audit_no_leak(s, horizon)
        yhat, trace = predict(s)
        preds.append(np.asarray(yhat, dtype=np.float64))
        truths.append(np.asarray(s.target, dtype=np.float64))
        times.append(s.target_time)
        if trace is not None:
            traces.append(trace)
    pred_block = np.stack(preds, axis=1)
    truth_block = np.stack(truths, axis=1)
    if scaler is not None:
        pred_block = scaler.invert_targets(pred_block, targets)
        truth_block = scaler.invert_targets(truth_block, targets)

    per_var = per_variable_corr(truth_block, pred_block)
    finite = [c for c in per_var if np.isfinite(c)]
    # A fully degenerate prediction (e.g. a constant baseline) still gets a
    # report; corr is NaN with every variable counted as skipped.
    report = EvalReport(
        horizon=horizon,
        sample_count=len(samples),
        rmse=rmse(truth_block, pred_block),
        mae=mae(truth_block, pred_block),
        rrse=rrse(truth_block, pred_block, per_variable=rrse_per_variable),
        corr=float(np.mean(finite)) if finite else float("nan"),
        corr_per_variable=per_var,
        corr_skipped=len(per_var) - len(finite),
    )
    return EvalOutcome(report=report, truth=truth_block, predictions=pred_block,
                       target_times=np.array(times), traces=traces)


def _audit_no_leak(sample: WindowSample, horizon: int) -> None:
    newest_input = sample.query_time_range[1]
    for _, end in sample.block_time_ranges:
        newest_input = max(newest_input, end)
    if newest_input > sample.target_time - horizon:
        raise DataError(f"sample at t={sample.target_time} reads index {newest_input}, "
                        f"newer than t - h = {sample.target_time - horizon}")


def export_traces(traces: Sequence[AttentionTrace], path) -> None:
    """Write one record per prediction: target time, weights, block ranges."""
    if not traces:
        raise ConfigError("no attention traces to export")
    n = traces[0].p.shape[0]
    head = ["target_time"]
    head += [f"p_{i}" for i in range(n)]
    for i in range(n):
        head += [f"block_{i}_start", f"block_{i}_end"]
    lines = ["\t".join(head)]
    for tr in traces:
        if tr.p.shape[0] != n:
            raise ConfigError("all traces in one export must share the block count")
        cells = [str(tr.target_time)]
        cells += [f"{w:.17g}" for w in tr.p]
        for start, end in tr.block_time_ranges:
            cells += [str(start), str(end)]
        lines.append("\t".join(cells))
    write_text_atomic(path, "\n".join(lines) + "\n")


def load_traces(path) -> list[AttentionTrace]:
    """Parse a trace file written by export_traces."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if len(lines) < 2:
        raise DataError(f"{path}: no trace records")
    header = lines[0].split("\t")
    n = sum(1 for c in header if c.startswith("p_"))
    traces = []
    for line in lines[1:]:
        cells = line.split("\t")
        target_time = int(cells[0])
        p = np.array([float(c) for c in cells[1:1 + n]])
        ranges = []
        for i in range(n):
            start = int(cells[1 + n + 2 * i])
            end = int(cells[2 + n + 2 * i])
            ranges.append((start, end))
        traces.append(AttentionTrace(p=p, block_time_ranges=ranges, target_time=target_time))
    return traces
