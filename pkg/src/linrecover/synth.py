"""Generator for the ten-variable nonlinear benchmark dataset.

Three standard-normal generator variables drive ten nonlinearly related
variables (three groups: x1..x6 depend on g1, x7..x9 on g2, x10 on all
three).  ``v - 10`` further variables are noisy random linear combinations
of the first ten, and every column is offset by 70.

Random draws come from one PCG64 stream in a fixed order: generators,
per-variable noise, linear map, linear-block noise.  Noise draws are
consumed even when ``sigma2 == 0`` so the linear map does not depend on the
noise level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OFFSET = 70.0
N_NONLINEAR = 10
GROUPS = (frozenset(range(0, 6)), frozenset(range(6, 9)), frozenset({9}))


@dataclass(frozen=True)
class SynthConfig:
    m: int = 500
    v: int = 50
    sigma2: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.v < N_NONLINEAR:
            raise ValueError(f"v must be >= {N_NONLINEAR}, got {self.v}")
        if not self.sigma2 >= 0.0:
            raise ValueError(f"sigma2 must be >= 0, got {self.sigma2}")


def tansig(x):
    """Hyperbolic tangent sigmoid written as ``2 / (1 + exp(-2x)) - 1``."""
    return 2.0 / (1.0 + np.exp(-2.0 * x)) - 1.0


def nonlinear_block(g: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """The ten nonlinear variables from generators `g` (m, 3) and noise (m, 10).

    Later variables use the noisy values of earlier ones.
    """
    g1, g2, g3 = g[:, 0], g[:, 1], g[:, 2]
    n = noise.T
    x1 = np.sin(g1) + n[0]
    x2 = np.cos(g1) + n[1]
    x3 = x1**7 + n[2]
    x4 = np.sign(g1) * tansig(g1) + n[3]
    x5 = np.sqrt(np.abs(x3) + np.abs(x1)) / 2.0 + n[4]
    x6 = g1 * x1**2 * x2**3 + n[5]
    x7 = np.cos(10.0 * g2) ** 3 + n[6]
    x8 = (np.abs(g2 / 3125.0) - np.exp(g2)) / 70.0 + n[7]
    x9 = 1.0 / (2.0 + np.abs(g1) + np.exp(g2)) + n[8]
    x10 = (
        g1**3
        * (g2 / 8.0)
        * (g3 / 8.0)
        * np.exp(np.sign(g1) * g3)
        * np.cos(g3) ** 2
        * np.sin(g3)
        / 44.0
        + n[9]
    )
    return np.column_stack([x1, x2, x3, x4, x5, x6, x7, x8, x9, x10])


def generate_xsynthetic(cfg: SynthConfig, offset: float = OFFSET) -> np.ndarray:
    """Draw an ``m x v`` dataset; bit-identical for a given config."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    sigma = np.sqrt(cfg.sigma2)
    g = rng.standard_normal((cfg.m, 3))
    noise = sigma * rng.standard_normal((cfg.m, N_NONLINEAR))
    psi = rng.standard_normal((N_NONLINEAR, cfg.v - N_NONLINEAR))
    lin_noise = sigma * rng.standard_normal((cfg.m, cfg.v - N_NONLINEAR))

    X_nl = nonlinear_block(g, noise)
    X_l = X_nl @ psi + lin_noise
    return np.hstack([X_nl, X_l]) + offset


def group_recovery_check(selection) -> bool:
    """True when the selection hits each of the three generator groups."""
    idx = set(int(i) for i in getattr(selection, "indices", selection))
    return all(idx & group for group in GROUPS)
