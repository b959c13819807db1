"""Empirical-measure utilities for one-dimensional particle clouds.

The empirical measure is never built as an object: every function works on
the vector of atom positions directly.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ParticleState:
    positions: np.ndarray
    time: float | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 1 or pos.size < 1:
            raise ValueError("positions must be a non-empty 1-D vector")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", pos)

    @property
    def N(self) -> int:
        return self.positions.size


def _positions(state) -> np.ndarray:
    if isinstance(state, ParticleState):
        return state.positions
    return ParticleState(state).positions


def moment(state, p: int) -> float:
    """Raw ``p``-th moment of the empirical measure.

    ``np.mean`` sums pairwise, which keeps the error at O(log N) eps for
    large clouds.
    """
    if int(p) != p or p < 1:
        raise ValueError(f"moment order must be a positive integer, got {p}")
    x = _positions(state)
    return float(np.mean(x ** int(p)))


def kernel_mean(state, K, x: float) -> float:
    """Integral of ``K(x, .)`` against the empirical measure."""
    pos = _positions(state)
    # non-finite values are reported below, not as numpy warnings
    with np.errstate(all="ignore"):
        vals = np.asarray(K(x, pos), dtype=float)
        if vals.shape != pos.shape:
            vals = np.array([K(x, y) for y in pos], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("kernel returned a non-finite value")
    return float(np.mean(vals))


def w2_empirical(a, b) -> float:
    """W2 distance between two equal-size, equal-weight clouds.

    In one dimension the monotone (sorted) coupling is optimal.
    """
    xa = np.sort(_positions(a))
    xb = np.sort(_positions(b))
    if xa.size != xb.size:
        raise ValueError(f"cloud sizes differ: {xa.size} != {xb.size}")
    return float(np.sqrt(np.mean((xa - xb) ** 2)))


def w2_to_dirac0(state) -> float:
    return float(np.sqrt(moment(state, 2)))
