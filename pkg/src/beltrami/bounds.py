"""Closed-form eigenvalue bounds and the analytic ball reference."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CylinderBound:
    M: float
    mu_lower: float

    def __post_init__(self):
        if self.M <= 0 or self.mu_lower <= 0:
            raise ValueError("cylinder bound quantities must be positive")


def cylinder_M(R: float, h: float) -> float:
    """Peak value of the integrated inverse-square kernel over the cylinder
    of radius R and half-height h (attained at the center by symmetry):

        M = 2 pi h ln(1 + R^2/h^2) + 4 pi R arctan(h/R)
    """
    if R <= 0 or h <= 0:
        raise ValueError("cylinder radius and half-height must be positive")
    return 2.0 * np.pi * h * np.log1p(R * R / (h * h)) + 4.0 * np.pi * R * np.arctan(h / R)


def cylinder_mu_lower(R: float, h: float) -> float:
    """Eigenvalue lower bound 4 pi / M for the cylinder."""
    return 4.0 * np.pi / cylinder_M(R, h)


def cylinder_bound(R: float, h: float) -> CylinderBound:
    m = cylinder_M(R, h)
    return CylinderBound(M=m, mu_lower=4.0 * np.pi / m)


def faber_krahn_bound(V: float) -> float:
    """Volume-only lower bound (4 pi / (3 V))^(1/3) on min(mu1, -mu_-1)."""
    if V <= 0:
        raise ValueError("volume must be positive")
    return (4.0 * np.pi / (3.0 * V)) ** (1.0 / 3.0)


def ball_mu_reference(r: float = 1.0) -> float:
    """First curl eigenvalue of the ball of radius r: x*/r with x* the root
    of tan x = x in (pi, 3 pi/2), located by bisection to 1e-12."""
    if r <= 0:
        raise ValueError("radius must be positive")

    def g(x):
        # sign-equivalent to tan x - x on the bracket (cos < 0 there)
        return np.sin(x) - x * np.cos(x)

    # g > 0 at pi, g < 0 at 3 pi/2; keep that bracket invariant
    lo, hi = np.pi, 1.5 * np.pi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo < 1e-13:
            break
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi) / r
