"""Memory-block forecaster: block attention over encoded history plus a
linear autoregressive path.

The n memory blocks are encoded twice with independent encoders (one view for
matching, one for content). The query window is encoded by a third encoder.
A softmax over inner products of the query embedding with the memory
embeddings weights the content vectors; a dense head maps the concatenated
query embedding and weighted content vectors to the forecast, and a shared
linear autoregression on the query's most recent values is added on top.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from . import autograd as ag
from .autograd import ParamSet, Tensor
from .encoder import EncoderConfig, EncoderParams, encode
from .errors import ConfigError, ShapeError

if TYPE_CHECKING:
    from .data import WindowSample


@dataclass(frozen=True)
class MTNetConfig:
    """Model shape: n memory blocks of length T, forecast h steps ahead.

    `targets` lists the indices of the predicted variables (K = len(targets)).
    `s_ar` is how many of the query's most recent values feed the linear
    autoregressive path.
    """

    n: int
    T: int
    h: int
    D: int
    targets: tuple[int, ...]
    s_ar: int
    encoder: EncoderConfig

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(i) for i in self.targets))
        if self.n < 1:
            raise ConfigError(f"memory block count n must be >= 1, got {self.n}")
        if self.h < 1:
            raise ConfigError(f"horizon h must be >= 1, got {self.h}")
        k = len(self.targets)
        if not 1 <= k <= self.D:
            raise ConfigError(f"need 1 <= K <= D, got K={k}, D={self.D}")
        if len(set(self.targets)) != k or any(not 0 <= i < self.D for i in self.targets):
            raise ConfigError(f"target indices must be distinct and < D, got {self.targets}")
        if not 1 <= self.s_ar <= self.T:
            raise ConfigError(f"need 1 <= s_ar <= T, got s_ar={self.s_ar}, T={self.T}")
        if self.encoder.D != self.D or self.encoder.T != self.T:
            raise ConfigError(
                f"encoder is {self.encoder.D}x{self.encoder.T}, model needs {self.D}x{self.T}")

    @property
    def K(self) -> int:
        return len(self.targets)

    @property
    def d(self) -> int:
        return self.encoder.d

    @classmethod
    def create(cls, *, D: int, T: int, n: int = 7, h: int = 3,
               targets: Sequence[int] | None = None, s_ar: int | None = None,
               w: int = 3, d_c: int = 32, d: int = 32,
               dropout_rate: float = 0.2) -> "MTNetConfig":
        """Build a config with the encoder derived from the model shape."""
        if targets is None:
            targets = range(D)
        if s_ar is None:
            s_ar = T
        enc = EncoderConfig(D=D, T=T, w=w, d_c=d_c, d=d, dropout_rate=dropout_rate)
        return cls(n=n, T=T, h=h, D=D, targets=tuple(targets), s_ar=s_ar, encoder=enc)


class MTNetParams:
    """All learnable tensors: three encoders, dense head, AR weights."""

    def __init__(self, cfg: MTNetConfig, params: ParamSet, rng: np.random.Generator):
        self.memory_encoder = EncoderParams(cfg.encoder, params, "memory_encoder", rng)
        self.query_encoder = EncoderParams(cfg.encoder, params, "query_encoder", rng)
        self.context_encoder = EncoderParams(cfg.encoder, params, "context_encoder", rng)
        width = (cfg.n + 1) * cfg.d
        bound = 1.0 / np.sqrt(width)
        self.head_weight = params.register(
            "head.weight", rng.uniform(-bound, bound, size=(cfg.K, width)))
        self.head_bias = params.register(
            "head.bias", rng.uniform(-bound, bound, size=cfg.K))
        ar_bound = 1.0 / np.sqrt(cfg.s_ar)
        self.ar_weight = params.register(
            "ar.weight", rng.uniform(-ar_bound, ar_bound, size=cfg.s_ar))
        self.ar_bias = params.register("ar.bias", rng.uniform(-ar_bound, ar_bound, size=()))


@dataclass
class AttentionTrace:
    """Attention distribution over memory blocks for one prediction.

    `block_time_ranges` carries inclusive (start, end) absolute time indices
    per block, oldest first; `target_time` is the predicted time stamp.
    """

    p: np.ndarray
    block_time_ranges: list[tuple[int, int]]
    target_time: int

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        if np.any(self.p <= 0.0):
            raise ConfigError("attention weights must be strictly positive")
        if abs(self.p.sum() - 1.0) > 1e-9:
            raise ConfigError(f"attention weights sum to {self.p.sum()!r}, not 1")
        if len(self.block_time_ranges) != self.p.shape[0]:
            raise ConfigError("one time range per attention weight is required")


def memory_embed(blocks: Sequence[Tensor], cfg: MTNetConfig, params: MTNetParams,
                 training: bool = False, rng=None) -> list[Tensor]:
    """Encode each memory block with the matching encoder, order preserved."""
    if len(blocks) != cfg.n:
        raise ShapeError(f"expected {cfg.n} memory blocks, got {len(blocks)}")
    return [encode(b, cfg.encoder, params.memory_encoder, training, rng) for b in blocks]


def query_embed(query: Tensor, cfg: MTNetConfig, params: MTNetParams,
                training: bool = False, rng=None) -> Tensor:
    return encode(query, cfg.encoder, params.query_encoder, training, rng)


def context_embed(blocks: Sequence[Tensor], cfg: MTNetConfig, params: MTNetParams,
                  training: bool = False, rng=None) -> list[Tensor]:
    """Encode each memory block with the content encoder (third parameter set)."""
    if len(blocks) != cfg.n:
        raise ShapeError(f"expected {cfg.n} memory blocks, got {len(blocks)}")
    return [encode(b, cfg.encoder, params.context_encoder, training, rng) for b in blocks]


def attention_weights(u: Tensor, memory: Sequence[Tensor]) -> Tensor:
    """Softmax over inner products of the query embedding with each block."""
    return ag.softmax(ag.stack_scalars([ag.dot(u, m) for m in memory]))


def weighted_outputs(p: Tensor, contexts: Sequence[Tensor]) -> list[Tensor]:
    """Scale context vector i by attention weight p_i."""
    if p.shape != (len(contexts),):
        raise ShapeError(f"{len(contexts)} contexts need {len(contexts)} weights, "
                         f"got shape {p.shape}")
    return [ag.mul_scalar(c, ag.element(p, i)) for i, c in enumerate(contexts)]


def dense_combine(u: Tensor, outputs: Sequence[Tensor], params: MTNetParams) -> Tensor:
    """Affine map of [u; o_1; ...; o_n] to the K predicted variables."""
    return ag.matvec(params.head_weight.value, ag.concat([u, *outputs])) \
        + params.head_bias.value


def ar_predict(query: Tensor, cfg: MTNetConfig, params: MTNetParams) -> Tensor:
    """Shared-coefficient linear autoregression on the query's newest values.

    For each target variable the prediction is sum_k w[k] * q[-1-k] + b over
    the last s_ar query columns. The query values enter as constants; only
    the shared weights and bias carry gradient.
    """
    if query.shape != (cfg.D, cfg.T):
        raise ShapeError(f"query must be {(cfg.D, cfg.T)}, got {query.shape}")
    recent = query.data[list(cfg.targets), cfg.T - cfg.s_ar:]
    lagged = ag.tensor(np.ascontiguousarray(recent[:, ::-1]))  # column k = lag k
    return ag.add_scalar(ag.matvec(lagged, params.ar_weight.value), params.ar_bias.value)


class MTNet:
    """Config plus parameters, with the full forward pass."""

    def __init__(self, cfg: MTNetConfig, seed: int = 0,
                 rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.params = ParamSet()
        init_rng = rng if rng is not None else np.random.default_rng(seed)
        self.p = MTNetParams(cfg, self.params, init_rng)

    def forward(self, sample: "WindowSample", training: bool = False,
                rng: np.random.Generator | None = None) -> tuple[Tensor, AttentionTrace]:
        """Predict the sample's target vector; also return the attention trace."""
        cfg = self.cfg
        blocks = [ag.tensor(b) for b in sample.blocks]
        query = ag.tensor(sample.query)
        m = memory_embed(blocks, cfg, self.p, training, rng)
        u = query_embed(query, cfg, self.p, training, rng)
        p = attention_weights(u, m)
        c = context_embed(blocks, cfg, self.p, training, rng)
        o = weighted_outputs(p, c)
        prediction = dense_combine(u, o, self.p) + ar_predict(query, cfg, self.p)
        trace = AttentionTrace(p=p.data.copy(),
                               block_time_ranges=list(sample.block_time_ranges),
                               target_time=sample.target_time)
        return prediction, trace

    def predict(self, sample: "WindowSample") -> tuple[np.ndarray, AttentionTrace]:
        """Deterministic eval-mode prediction as a plain array."""
        with ag.no_grad():
            pred, trace = self.forward(sample, training=False, rng=None)
        return pred.data.copy(), trace
