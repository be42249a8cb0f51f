"""Per-variable linear autoregression, plain or ridge-regularized.

Each predicted variable regresses its value h steps ahead directly on its own
last p observations plus an intercept. The ridge penalty applies to the lag
coefficients only, never the intercept, so an infinitely strong penalty
degrades to predicting the per-variable training mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, NumericError


@dataclass
class LinearARModel:
    window: int
    horizon: int
    ridge_lambda: float
    variables: list[int]
    coefficients: np.ndarray   # [K x p], entry k multiplies the value at lag k
    intercepts: np.ndarray     # [K]

    def __post_init__(self):
        if self.coefficients.shape != (len(self.variables), self.window):
            raise ConfigError(f"coefficients must be K x p = "
                              f"{(len(self.variables), self.window)}, "
                              f"got {self.coefficients.shape}")


def _lag_matrix(y: np.ndarray, origins: np.ndarray, p: int) -> np.ndarray:
    """Rows of [y[o], y[o-1], ..., y[o-p+1]] for each origin o."""
    windows = np.lib.stride_tricks.sliding_window_view(y, p)
    return windows[origins - p + 1][:, ::-1]


def fit_linear_ar(series: np.ndarray, window: int, ridge_lambda: float, horizon: int,
                  train_range: tuple[int, int] | None = None,
                  variables: Sequence[int] | None = None) -> LinearARModel:
    """Least-squares fit of y[t+h] on [y[t], ..., y[t-p+1], 1] per variable.

    `train_range` restricts the *target* times used for fitting; feature
    windows may reach back to the start of the series. The normal equations
    are solved densely; a singular system at lambda = 0 is reported with a
    hint to add regularization.
    """
    values = np.asarray(series, dtype=np.float64)
    if values.ndim != 2:
        raise ConfigError(f"series must be D x T, got shape {values.shape}")
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    if ridge_lambda < 0:
        raise ConfigError(f"ridge lambda must be >= 0, got {ridge_lambda}")
    d, t_total = values.shape
    lo, hi = train_range if train_range is not None else (0, t_total)
    lo = max(lo, horizon + window - 1)
    hi = min(hi, t_total)
    if hi - lo < 1:
        raise DataError(f"training range too short for window {window} "
                        f"and horizon {horizon}")
    if variables is None:
        variables = range(d)
    variables = [int(v) for v in variables]

    target_times = np.arange(lo, hi)
    origins = target_times - horizon
    penalty = ridge_lambda * np.diag([1.0] * window + [0.0])  # intercept unpenalized
    coefs = np.empty((len(variables), window))
    intercepts = np.empty(len(variables))
    for row, v in enumerate(variables):
        y = values[v]
        design = np.hstack([_lag_matrix(y, origins, window),
                            np.ones((len(origins), 1))])
        gram = design.T @ design + penalty
        rhs = design.T @ y[target_times]
        try:
            beta = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            raise NumericError(f"singular normal equations for variable {v}; "
                               "use ridge lambda > 0") from None
        if not np.all(np.isfinite(beta)):
            raise NumericError(f"unstable normal equations for variable {v}; "
                               "use ridge lambda > 0")
        coefs[row] = beta[:window]
        intercepts[row] = beta[window]
    return LinearARModel(window=window, horizon=horizon, ridge_lambda=ridge_lambda,
                         variables=variables, coefficients=coefs, intercepts=intercepts)


def predict_linear(model: LinearARModel, history: np.ndarray) -> np.ndarray:
    """Evaluate the fitted affine map on a [D x >=p] history block.

    The newest observation is the last column; the output is one value per
    fitted variable.
    """
    history = np.asarray(history, dtype=np.float64)
    if history.ndim != 2 or history.shape[1] < model.window:
        raise DataError(f"history must hold at least {model.window} steps, "
                        f"got shape {history.shape}")
    recent = history[model.variables, history.shape[1] - model.window:]
    lagged = recent[:, ::-1]  # column k = lag k
    return (model.coefficients * lagged).sum(axis=1) + model.intercepts


def predict_range(model: LinearARModel, series: np.ndarray,
                  index_range: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Rolling predictions for every target time in the half-open range.

    Returns (target_times, predictions[K x N]); inputs end at t - h, so the
    range start is clamped to the first time with a full feature window.
    """
    values = np.asarray(series, dtype=np.float64)
    lo, hi = index_range
    lo = max(lo, model.horizon + model.window - 1)
    hi = min(hi, values.shape[1])
    if hi <= lo:
        raise DataError("no predictable time stamps in the requested range")
    times = np.arange(lo, hi)
    preds = np.empty((len(model.variables), len(times)))
    for row, v in enumerate(model.variables):
        lagged = _lag_matrix(values[v], times - model.horizon, model.window)
        preds[row] = lagged @ model.coefficients[row] + model.intercepts[row]
    return times, preds


DEFAULT_WINDOW_GRID = tuple(2 ** i for i in range(10))
DEFAULT_LAMBDA_GRID = tuple(2.0 ** e for e in range(-10, 11, 2))


@dataclass
class BaselineSelection:
    model: LinearARModel
    valid_rrse: float
    rows: list[tuple[int, float, float]]  # (window, lambda, valid rrse or nan)


def select_linear_baseline(series: np.ndarray, train_range: tuple[int, int],
                           valid_range: tuple[int, int], horizon: int,
                           method: str = "ar",
                           window_grid: Sequence[int] = DEFAULT_WINDOW_GRID,
                           lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
                           variables: Sequence[int] | None = None) -> BaselineSelection:
    """Grid search on validation RRSE; plain AR fixes lambda at 0."""
    from .evaluation import rrse  # local import avoids a cycle at module load

    if method == "ar":
        lambdas: Sequence[float] = (0.0,)
    elif method == "ridge":
        lambdas = tuple(lambda_grid)
    else:
        raise ConfigError(f"unknown baseline method {method!r}; supported: ar, ridge")

    best: BaselineSelection | None = None
    rows = []
    for window in window_grid:
        for lam in lambdas:
            try:
                model = fit_linear_ar(series, window, lam, horizon,
                                      train_range=train_range, variables=variables)
                times, preds = predict_range(model, series, valid_range)
                truth = np.asarray(series)[model.variables][:, times]
                score = rrse(truth, preds)
            except (NumericError, DataError):
                rows.append((window, lam, float("nan")))
                continue
            rows.append((window, lam, score))
            if best is None or score < best.valid_rrse:
                best = BaselineSelection(model=model, valid_rrse=score, rows=[])
    if best is None:
        raise NumericError("every baseline grid point failed")
    best.rows = rows
    return best
