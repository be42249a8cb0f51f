"""Synthetic series generator so every test and demo runs offline."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .data import RawSeries
from .errors import ConfigError


def sinusoid_mixture(length: int, n_vars: int = 1,
                     periods: Sequence[float] = (24.0,),
                     amplitudes: Sequence[float] | None = None,
                     noise: float = 0.0, seed: int = 0,
                     random_phases: bool = False) -> RawSeries:
    """Sum of sinusoids per variable with optional Gaussian noise.

    By default each variable gets a deterministic phase offset per component
    so multivariate outputs are correlated but not identical; with
    `random_phases` every (component, variable) pair draws its phase from the
    seeded generator instead, which turns a rich period mixture into a
    quasi-random smooth process. Reproducible from `seed` either way.
    """
    if length < 1 or n_vars < 1:
        raise ConfigError(f"length and n_vars must be positive, got {length}, {n_vars}")
    periods = [float(p) for p in periods]
    if not periods or any(p <= 0 for p in periods):
        raise ConfigError(f"periods must be positive, got {periods}")
    if amplitudes is None:
        amplitudes = [1.0] * len(periods)
    if len(amplitudes) != len(periods):
        raise ConfigError("need one amplitude per period")
    if noise < 0:
        raise ConfigError(f"noise level must be >= 0, got {noise}")

    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    values = np.zeros((n_vars, length))
    for v in range(n_vars):
        for amp, period in zip(amplitudes, periods):
            if random_phases:
                phase = rng.uniform(0.0, 2.0 * np.pi)
            else:
                phase = 2.0 * np.pi * v / max(n_vars, 1)
            values[v] += amp * np.sin(2.0 * np.pi * t / period + phase)
    if noise > 0:
        values += noise * rng.standard_normal(values.shape)
    names = [f"series_{v}" for v in range(n_vars)]
    return RawSeries(values=values, variable_names=names, sample_rate="synthetic")


def beat_series(length: int, carrier_period: int, envelope_periods: float = 9.0,
                noise: float = 0.02, seed: int = 0) -> RawSeries:
    """Single-variable carrier of the given period with a slow beat envelope.

    Two slightly detuned sinusoids produce a period-`carrier_period` waveform
    whose amplitude drifts over `envelope_periods` carrier cycles, so nearby
    windows resemble each other more than distant ones.
    """
    detuned = carrier_period / (1.0 + 1.0 / envelope_periods)
    return sinusoid_mixture(length, n_vars=1,
                            periods=(float(carrier_period), detuned),
                            amplitudes=(1.0, 1.0), noise=noise, seed=seed)
