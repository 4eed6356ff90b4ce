"""Seeded measurement noise with sporadic outliers.

Two scenarios are supported: Gaussian base noise with Gaussian outliers, and
uniform base noise with uniform outliers. Outliers are added on top of the
base noise. Streams are counter-based (Philox) and keyed by ``(seed, trial)``
so a trial's realisation does not depend on which worker runs it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vehicle import N_OUTPUT

DEG = np.pi / 180.0


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "normal"
    sigma_beta: float = DEG
    sigma_theta: float = 0.2 * DEG
    sigma_xy: float = 0.025
    outlier_prob: float = 0.1
    outlier_scale: float = 10.0
    outlier_channels: tuple = (2, 3)
    simultaneous: bool = True

    def __post_init__(self):
        if self.kind not in ("normal", "uniform"):
            raise ValueError(f"noise kind must be 'normal' or 'uniform', got {self.kind!r}")
        for name in ("sigma_beta", "sigma_theta", "sigma_xy", "outlier_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.outlier_prob <= 1.0:
            raise ValueError("outlier_prob must lie in [0, 1]")
        if any(not 0 <= ch < N_OUTPUT for ch in self.outlier_channels):
            raise ValueError(f"outlier channels must be in 0..{N_OUTPUT - 1}")

    @property
    def scales(self):
        return np.array([self.sigma_beta, self.sigma_theta, self.sigma_xy, self.sigma_xy])

    @classmethod
    def scenario(cls, name, **overrides):
        """The normal (i) or uniform (ii) scenario with default channel scales."""
        return cls(kind=name, **overrides)


def make_rng(seed, *key):
    """Counter-based generator keyed by ``seed`` and an arbitrary integer path."""
    ss = np.random.SeedSequence([int(seed), *map(int, key)])
    return np.random.Generator(np.random.Philox(ss))


def _draw(rng, kind, scale, size):
    if kind == "normal":
        return rng.standard_normal(size) * scale
    return rng.uniform(-1.0, 1.0, size) * scale


def corrupt(clean, spec: NoiseSpec, rng):
    """Add base noise and outliers to clean measurements.

    ``clean`` has shape ``(..., 4)``; each leading index is an independent
    time step. Returns ``(noisy, flags)`` where ``flags`` marks the entries
    that received an outlier draw. All random draws are taken regardless of
    the outlier events, so the stream layout depends only on the shape.
    """
    clean = np.asarray(clean, dtype=float)
    shape = clean.shape
    if shape[-1] != N_OUTPUT:
        raise ValueError(f"measurements must have {N_OUTPUT} channels")
    lead = shape[:-1]
    base = _draw(rng, spec.kind, spec.scales, shape)
    events = rng.random(lead + ((1,) if spec.simultaneous else (N_OUTPUT,)))
    spikes = _draw(rng, spec.kind, spec.outlier_scale, shape)

    channel_mask = np.zeros(N_OUTPUT, dtype=bool)
    channel_mask[list(spec.outlier_channels)] = True
    flags = (events < spec.outlier_prob) & channel_mask
    noisy = clean + base + np.where(flags, spikes, 0.0)
    return noisy, flags
