"""L1 objective, Adam with bias correction, early stopping, grid search."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import ParamSet, Tensor
from .data import WindowSample, make_samples
from .errors import ConfigError, MtnetError, TrainingError
from .model import MTNet, MTNetConfig


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    grad_clip_norm: float = 10.0
    grid_hidden: tuple[int, ...] = (32, 50, 100)
    grid_window: tuple[int, ...] = tuple(2 ** i for i in range(10))

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")


class AdamState:
    """First and second moment accumulators plus the shared step counter."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def l1_loss(predictions: Sequence[Tensor], truths: Sequence[np.ndarray]) -> Tensor:
    """Mean over samples of the summed absolute errors across target variables."""
    if len(predictions) == 0:
        raise ConfigError("l1_loss needs a non-empty batch")
    if len(predictions) != len(truths):
        raise ConfigError(f"batch sizes disagree: {len(predictions)} predictions, "
                          f"{len(truths)} truths")
    total = None
    for pred, truth in zip(predictions, truths):
        err = ag.sum_all(ag.absolute(ag.sub(pred, ag.tensor(truth))))
        total = err if total is None else ag.add(total, err)
    return ag.scale(total, 1.0 / len(predictions))


def clip_gradients(params: ParamSet, max_norm: float) -> float:
    """Scale all gradients so their joint 2-norm is at most max_norm."""
    sq = 0.0
    for p in params:
        sq += float((p.grad ** 2).sum())
    norm = float(np.sqrt(sq))
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / norm
        for p in params:
            p.grad[...] *= factor
    return norm


def adam_step(params: ParamSet, state: AdamState, learning_rate: float) -> None:
    """One bias-corrected Adam update in sorted parameter-name order.

    Gradients are zeroed afterwards so the next batch starts clean.
    """
    state.step += 1
    t = state.step
    for name in sorted(params.names()):
        p = params[name]
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros(p.value.shape)
            state.v[name] = np.zeros(p.value.shape)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        p.value.data -= learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    params.zero_grads()


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    valid_loss: float


@dataclass
class FitResult:
    history: list[EpochStats]
    best_epoch: int
    best_valid_loss: float
    stopped_early: bool


def evaluate_l1(model: MTNet, samples: Sequence[WindowSample]) -> float:
    """Eval-mode mean L1 over a sample set, in scaled space."""
    if not samples:
        raise ConfigError("cannot evaluate an empty sample set")
    total = 0.0
    for s in samples:
        pred, _ = model.predict(s)
        total += float(np.abs(pred - s.target).sum())
    return total / len(samples)


def fit(model: MTNet, train_samples: Sequence[WindowSample],
        valid_samples: Sequence[WindowSample], cfg: TrainConfig,
        callback: Callable[[EpochStats], bool | None] | None = None) -> FitResult:
    """Train with seeded shuffling and keep the best-validation parameters.

    Stops after `patience` epochs without a validation improvement, when
    `callback` returns True, or at `max_epochs`. The model is left holding
    the best parameters seen.
    """
    if not train_samples:
        raise ConfigError("fit needs a non-empty training set")
    if not valid_samples:
        raise ConfigError("fit needs a non-empty validation set")

    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    history: list[EpochStats] = []
    best_epoch = -1
    best_valid = np.inf
    best_values: dict[str, np.ndarray] = {}
    stopped_early = False

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(train_samples))
        epoch_total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_samples[i] for i in order[start:start + cfg.batch_size]]
            preds = []
            for sample in batch:
                pred, _ = model.forward(sample, training=True, rng=rng)
                preds.append(pred)
            loss = l1_loss(preds, [s.target for s in batch])
            ag.backward(loss)
            clip_gradients(model.params, cfg.grad_clip_norm)
            adam_step(model.params, state, cfg.learning_rate)
            epoch_total += loss.item() * len(batch)
        train_loss = epoch_total / len(train_samples)
        valid_loss = evaluate_l1(model, valid_samples)
        if not np.isfinite(valid_loss):
            raise TrainingError(f"validation loss diverged at epoch {epoch}")
        stats = EpochStats(epoch=epoch, train_loss=train_loss, valid_loss=valid_loss)
        history.append(stats)

        if valid_loss < best_valid:
            best_valid = valid_loss
            best_epoch = epoch
            best_values = {p.name: p.value.data.copy() for p in model.params}
        if callback is not None and callback(stats):
            stopped_early = True
            break
        if epoch - best_epoch >= cfg.patience:
            stopped_early = True
            break

    for p in model.params:
        p.value.data[...] = best_values[p.name]
    return FitResult(history=history, best_epoch=best_epoch,
                     best_valid_loss=best_valid, stopped_early=stopped_early)


def format_history(history: Sequence[EpochStats]) -> str:
    lines = ["epoch\ttrain_loss\tvalid_loss"]
    for row in history:
        lines.append(f"{row.epoch}\t{row.train_loss:.17g}\t{row.valid_loss:.17g}")
    return "\n".join(lines) + "\n"


@dataclass
class GridPoint:
    index: int
    hidden: int
    window: int
    valid_loss: float
    status: str
    message: str = ""


@dataclass
class GridSearchResult:
    rows: list[GridPoint]
    best_index: int
    best_config: MTNetConfig
    best_model: MTNet
    best_fit: FitResult


def grid_search(series: np.ndarray, train_range: tuple[int, int],
                valid_range: tuple[int, int], base: MTNetConfig,
                cfg: TrainConfig) -> GridSearchResult:
    """Train one model per (hidden size, window length) grid point.

    The hidden size drives both the conv filter count and the GRU width.
    Failures at individual points are recorded and skipped; ties on the
    validation loss resolve to the earlier grid point.
    """
    points = list(itertools.product(cfg.grid_hidden, cfg.grid_window))
    if not points:
        raise ConfigError("grid search needs a non-empty grid")

    rows: list[GridPoint] = []
    best: tuple[float, int] | None = None
    best_model = None
    best_config = None
    best_fit = None
    for index, (hidden, window) in enumerate(points):
        try:
            enc = replace(base.encoder, T=window, d_c=hidden, d=hidden,
                          w=min(base.encoder.w, window))
            point_cfg = replace(base, T=window, s_ar=min(base.s_ar, window), encoder=enc)
            train_samples = make_samples(series, point_cfg, train_range)
            valid_samples = make_samples(series, point_cfg, valid_range)
            model = MTNet(point_cfg, seed=cfg.seed + index)
            point_train = replace(cfg, seed=cfg.seed + index)
            result = fit(model, train_samples, valid_samples, point_train)
        except MtnetError as exc:
            rows.append(GridPoint(index=index, hidden=hidden, window=window,
                                  valid_loss=float("nan"), status="failed",
                                  message=str(exc)))
            continue
        rows.append(GridPoint(index=index, hidden=hidden, window=window,
                              valid_loss=result.best_valid_loss, status="ok"))
        if best is None or result.best_valid_loss < best[0]:
            best = (result.best_valid_loss, index)
            best_model = model
            best_config = point_cfg
            best_fit = result
    if best is None:
        raise TrainingError("every grid point failed")
    return GridSearchResult(rows=rows, best_index=best[1], best_config=best_config,
                            best_model=best_model, best_fit=best_fit)


def format_grid_table(rows: Sequence[GridPoint]) -> str:
    lines = ["index\thidden\twindow\tvalid_loss\tstatus\tmessage"]
    for r in rows:
        lines.append(f"{r.index}\t{r.hidden}\t{r.window}\t{r.valid_loss:.17g}"
                     f"\t{r.status}\t{r.message}")
    return "\n".join(lines) + "\n"
