"""Window encoder: convolution, temporal attention, ReLU-GRU.

A D x T window is squeezed into a fixed-length vector in three stages:

  1. full-height convolution over time followed by ReLU,
  2. attention over the time steps of the feature sequence (a learned linear
     score per column, softmax, then columns re-weighted; weights are scaled
     by T_c so uniform attention leaves the sequence unchanged),
  3. a GRU whose candidate activation is ReLU rather than tanh; the final
     hidden state is the encoding.

Dropout sits after stage 1 and stage 2 in training mode only. The forecaster
instantiates this encoder three times with independent parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import ParamSet, Tensor
from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class EncoderConfig:
    """Shapes of one encoder.

    D: input variable count; T: window length; w: conv kernel width in time;
    d_c: number of conv filters; d: GRU hidden size (= output size);
    dropout_rate: applied after the conv and attention stages when training.
    """

    D: int
    T: int
    w: int
    d_c: int
    d: int
    dropout_rate: float = 0.2

    def __post_init__(self):
        if self.D < 1 or self.T < 1:
            raise ConfigError(f"D and T must be positive, got D={self.D}, T={self.T}")
        if not 1 <= self.w <= self.T:
            raise ConfigError(f"kernel width w={self.w} must satisfy 1 <= w <= T={self.T}")
        if self.d_c < 1 or self.d < 1:
            raise ConfigError(f"d_c and d must be positive, got d_c={self.d_c}, d={self.d}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def conv_steps(self) -> int:
        """Length of the feature sequence after valid convolution."""
        return self.T - self.w + 1


class EncoderParams:
    """Learnable tensors of one encoder, registered under a name prefix."""

    def __init__(self, cfg: EncoderConfig, params: ParamSet, prefix: str,
                 rng: np.random.Generator):
        def uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        # Biases draw from the same range as their matrices; exact zeros would
        # park ReLU preactivations on the kink where subgradients and finite
        # differences disagree.
        reg = params.register
        self.conv_kernels = reg(f"{prefix}.conv.kernels",
                                uniform((cfg.d_c, cfg.D, cfg.w), cfg.D * cfg.w))
        self.conv_bias = reg(f"{prefix}.conv.bias", uniform((cfg.d_c,), cfg.D * cfg.w))
        self.attn_weight = reg(f"{prefix}.attn.weight", uniform((cfg.d_c,), cfg.d_c))
        self.attn_bias = reg(f"{prefix}.attn.bias", uniform((), cfg.d_c))
        # Gate matrices follow the row-vector convention: x @ W_x* + h @ W_h*.
        self.w_xr = reg(f"{prefix}.gru.w_xr", uniform((cfg.d_c, cfg.d), cfg.d_c))
        self.w_hr = reg(f"{prefix}.gru.w_hr", uniform((cfg.d, cfg.d), cfg.d))
        self.b_r = reg(f"{prefix}.gru.b_r", uniform((cfg.d,), cfg.d))
        self.w_xu = reg(f"{prefix}.gru.w_xu", uniform((cfg.d_c, cfg.d), cfg.d_c))
        self.w_hu = reg(f"{prefix}.gru.w_hu", uniform((cfg.d, cfg.d), cfg.d))
        self.b_u = reg(f"{prefix}.gru.b_u", uniform((cfg.d,), cfg.d))
        self.w_xc = reg(f"{prefix}.gru.w_xc", uniform((cfg.d_c, cfg.d), cfg.d_c))
        self.w_hc = reg(f"{prefix}.gru.w_hc", uniform((cfg.d, cfg.d), cfg.d))
        self.b_c = reg(f"{prefix}.gru.b_c", uniform((cfg.d,), cfg.d))


def conv_stage(x: Tensor, cfg: EncoderConfig, p: EncoderParams) -> Tensor:
    """ReLU of the full-height convolution, [d_c x T_c]."""
    if x.shape != (cfg.D, cfg.T):
        raise ShapeError(f"encoder input must be {(cfg.D, cfg.T)}, got {x.shape}")
    return ag.relu(ag.conv_full_height(x, p.conv_kernels.value, p.conv_bias.value))


def temporal_attention(h: Tensor, p: EncoderParams,
                       weights_out: list | None = None) -> Tensor:
    """Re-weight the columns of h by a softmax over learned per-column scores.

    Column t keeps its shape; it is scaled by alpha_t * T_c, so a uniform
    alpha reproduces h exactly. When `weights_out` is given the attention
    vector alpha is appended to it for inspection.
    """
    t_c = h.shape[1]
    scores = ag.add_scalar(ag.vecmat(p.attn_weight.value, h), p.attn_bias.value)
    alpha = ag.softmax(scores)
    if weights_out is not None:
        weights_out.append(alpha.data.copy())
    return ag.col_scale(h, ag.scale(alpha, float(t_c)))


def gru_stage(s: Tensor, cfg: EncoderConfig, p: EncoderParams) -> Tensor:
    """Run the ReLU-candidate GRU over the columns of s; return the last state."""
    h = ag.zeros(cfg.d)
    one = ag.ones(cfg.d)
    for t in range(s.shape[1]):
        x_t = ag.column(s, t)
        r = ag.sigmoid(ag.vecmat(x_t, p.w_xr.value) + ag.vecmat(h, p.w_hr.value)
                       + p.b_r.value)
        u = ag.sigmoid(ag.vecmat(x_t, p.w_xu.value) + ag.vecmat(h, p.w_hu.value)
                       + p.b_u.value)
        c = ag.relu(ag.vecmat(x_t, p.w_xc.value)
                    + ag.mul(r, ag.vecmat(h, p.w_hc.value))
                    + p.b_c.value)
        h = ag.sub(one, u) * h + u * c
    return h


def encode(x: Tensor, cfg: EncoderConfig, p: EncoderParams, training: bool = False,
           rng: np.random.Generator | None = None,
           attn_out: list | None = None) -> Tensor:
    """Encode a D x T window into a length-d vector."""
    features = ag.dropout(conv_stage(x, cfg, p), cfg.dropout_rate, training, rng)
    attended = ag.dropout(temporal_attention(features, p, attn_out),
                          cfg.dropout_rate, training, rng)
    return gru_stage(attended, cfg, p)
