"""Deterministic sphere quadrature for sampling support functions.

Directions come from a Fibonacci lattice, antipodally symmetrized so that
width/diameter computations can pair each direction with its exact negation.
Weights are uniform, 4*pi/n.
"""

from dataclasses import dataclass

import numpy as np

_GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0

DEFAULT_N = 2048


@dataclass(frozen=True)
class SphereQuadrature:
    """Unit directions with positive weights summing to 4*pi.

    ``antipode[i]`` is the index of the direction exactly equal to
    ``-directions[i]``.
    """

    directions: np.ndarray
    weights: np.ndarray
    antipode: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=float)
        norms = np.linalg.norm(d, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-12):
            raise ValueError("quadrature directions must be unit vectors")
        if np.any(np.asarray(self.weights) <= 0):
            raise ValueError("quadrature weights must be positive")
        if not np.allclose(d[self.antipode], -d, atol=1e-12):
            raise ValueError("antipodal closure violated")

    @property
    def n(self) -> int:
        return self.directions.shape[0]


def fibonacci_sphere(n: int = DEFAULT_N) -> SphereQuadrature:
    """Antipodally symmetrized Fibonacci-lattice quadrature with n points.

    n must be even: n//2 lattice points plus their exact negations.
    """
    if n < 2 or n % 2 != 0:
        raise ValueError("n must be an even integer >= 2")
    m = n // 2
    i = np.arange(m)
    z = 1.0 - (2.0 * i + 1.0) / (2.0 * m)
    phi = 2.0 * np.pi * i / _GOLDEN
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    directions = np.vstack([pts, -pts])
    weights = np.full(n, 4.0 * np.pi / n)
    antipode = np.concatenate([np.arange(m) + m, np.arange(m)])
    return SphereQuadrature(directions=directions, weights=weights, antipode=antipode)


_default_cache: dict[int, SphereQuadrature] = {}


def default_quadrature(n: int = DEFAULT_N) -> SphereQuadrature:
    """Cached Fibonacci quadrature (construction is deterministic)."""
    if n not in _default_cache:
        _default_cache[n] = fibonacci_sphere(n)
    return _default_cache[n]
