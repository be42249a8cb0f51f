"""Shared test utilities: finite-difference gradient oracle, tiny fixtures."""

from __future__ import annotations

import numpy as np

from mtnet import autograd as ag
from mtnet.data import WindowSample
from mtnet.model import MTNetConfig


def finite_difference_check(build_loss, params, eps: float = 1e-5,
                            tol: float = 1e-4) -> float:
    """Compare reverse-mode gradients against central finite differences.

    `build_loss` must be a pure function of the current parameter values
    returning a scalar Tensor. Returns the worst relative error seen and
    asserts it stays below `tol`.
    """
    params.zero_grads()
    loss = build_loss()
    ag.backward(loss)
    analytic = {p.name: p.grad.copy() for p in params}

    worst = 0.0
    worst_name = ""
    for p in params:
        flat = p.value.data.reshape(-1)
        grad_flat = analytic[p.name].reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            up = build_loss().item()
            flat[i] = saved - eps
            down = build_loss().item()
            flat[i] = saved
            numeric = (up - down) / (2.0 * eps)
            err = abs(grad_flat[i] - numeric) / max(abs(grad_flat[i]), abs(numeric), 1e-6)
            if err > worst:
                worst = err
                worst_name = f"{p.name}[{i}]"
    assert worst < tol, f"gradient mismatch at {worst_name}: relative error {worst:.3e}"
    return worst


def tiny_config(**overrides) -> MTNetConfig:
    """The smallest end-to-end model the gradient acceptance check uses."""
    defaults = dict(D=2, T=4, n=2, h=1, targets=(0,), s_ar=2, w=2, d_c=3, d=2,
                    dropout_rate=0.0)
    defaults.update(overrides)
    return MTNetConfig.create(**defaults)


def random_sample(cfg: MTNetConfig, rng: np.random.Generator,
                  base_time: int | None = None) -> WindowSample:
    """A shape-correct random sample with consistent time bookkeeping."""
    first_input = 0 if base_time is None else base_time
    ranges = []
    start = first_input
    for _ in range(cfg.n):
        ranges.append((start, start + cfg.T - 1))
        start += cfg.T
    query_range = (start, start + cfg.T - 1)
    return WindowSample(
        blocks=[rng.standard_normal((cfg.D, cfg.T)) for _ in range(cfg.n)],
        query=rng.standard_normal((cfg.D, cfg.T)),
        target=rng.standard_normal(cfg.K),
        target_time=query_range[1] + cfg.h,
        block_time_ranges=ranges,
        query_time_range=query_range,
    )
