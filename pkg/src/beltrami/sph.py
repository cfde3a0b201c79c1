"""Real spherical harmonics, orthonormal on the unit sphere.

Basis order: (l, m) for l = 0..lmax, m = -l..l.  Conventions:
    Y_{l,0}  = N_{l,0} P_l(cos th)
    Y_{l,m}  = sqrt(2) N_{l,m} P_l^m(cos th) cos(m ph),   m > 0
    Y_{l,-m} = sqrt(2) N_{l,m} P_l^m(cos th) sin(m ph),   m > 0
with the Condon-Shortley phase carried by scipy's associated Legendre
functions.  With these conventions int Y_a Y_b dS = delta_ab.
"""

import numpy as np
from scipy.special import gammaln, lpmv


def basis_indices(lmax: int) -> list[tuple[int, int]]:
    return [(l, m) for l in range(lmax + 1) for m in range(-l, l + 1)]


def n_basis(lmax: int) -> int:
    return (lmax + 1) ** 2


def zonal_mask(lmax: int) -> np.ndarray:
    """Boolean mask of the m = 0 (axisymmetric) basis functions."""
    return np.array([m == 0 for _, m in basis_indices(lmax)])


def degree_array(lmax: int) -> np.ndarray:
    return np.array([l for l, _ in basis_indices(lmax)])


def _norm_const(l: int, m: int) -> float:
    return np.sqrt(
        (2 * l + 1) / (4.0 * np.pi) * np.exp(gammaln(l - m + 1) - gammaln(l + m + 1))
    )


def eval_basis(lmax: int, points: np.ndarray) -> np.ndarray:
    """Evaluate all real harmonics up to degree lmax at unit vectors.

    points: (n, 3) unit vectors.  Returns (n, (lmax+1)**2).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    ct = np.clip(z, -1.0, 1.0)
    phi = np.arctan2(y, x)
    out = np.empty((pts.shape[0], n_basis(lmax)))
    col = 0
    for l in range(lmax + 1):
        # m < 0 first to honor the basis order
        for m in range(-l, l + 1):
            am = abs(m)
            p = lpmv(am, l, ct)
            n = _norm_const(l, am)
            if m == 0:
                out[:, col] = n * p
            elif m > 0:
                out[:, col] = np.sqrt(2.0) * n * p * np.cos(am * phi)
            else:
                out[:, col] = np.sqrt(2.0) * n * p * np.sin(am * phi)
            col += 1
    return out


def fit_coefficients(
    lmax: int,
    directions: np.ndarray,
    weights: np.ndarray,
    values: np.ndarray,
    zonal_only: bool = False,
) -> np.ndarray:
    """Weighted least-squares fit of sampled sphere values onto the basis.

    With a reasonably uniform quadrature the normal matrix is close to the
    identity; we solve it exactly for determinism.
    """
    yb = eval_basis(lmax, directions)
    if zonal_only:
        mask = zonal_mask(lmax)
        a = yb[:, mask] * weights[:, None]
        gram = yb[:, mask].T @ a
        rhs = a.T @ values
        coeffs = np.zeros(n_basis(lmax))
        coeffs[mask] = np.linalg.solve(gram, rhs)
        return coeffs
    a = yb * weights[:, None]
    gram = yb.T @ a
    rhs = a.T @ values
    return np.linalg.solve(gram, rhs)
