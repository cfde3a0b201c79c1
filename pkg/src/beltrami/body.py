"""Convex bodies encoded by a support function on the sphere.

A body is h(nu) = sum_lm c_lm Y_lm(nu) with real spherical harmonics.  The
sampled convexity certificate checks that the tangential Hessian of the
1-homogeneous extension H(x) = |x| h(x/|x|) is positive semidefinite at every
quadrature direction; its eigenvalues are the principal curvature radii, so
the minimum eigenvalue doubles as a strong-convexity margin.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import sph
from .quadrature import SphereQuadrature, default_quadrature

_FD_STEP = 1e-4

# 19-point stencil: center, +-e_i, and the 4 corners of each coordinate pair
_STENCIL = [np.zeros(3)]
for _i in range(3):
    for _s in (1.0, -1.0):
        _o = np.zeros(3)
        _o[_i] = _s
        _STENCIL.append(_o)
for _i in range(3):
    for _j in range(_i + 1, 3):
        for _si in (1.0, -1.0):
            for _sj in (1.0, -1.0):
                _o = np.zeros(3)
                _o[_i] = _si
                _o[_j] = _sj
                _STENCIL.append(_o)
_STENCIL = np.array(_STENCIL)  # (19, 3)


class EmptyBodyError(ValueError):
    pass


class ContainmentError(RuntimeError):
    """Enclosing-cylinder certificate failure; carries the violating point."""

    def __init__(self, point):
        self.point = np.asarray(point)
        super().__init__(
            f"boundary point {self.point.tolist()} escapes the candidate cylinder; "
            "increase the rasterization resolution"
        )


@dataclass(frozen=True)
class SupportBody:
    """Support-function coefficients up to degree lmax."""

    coeffs: np.ndarray
    lmax: int
    axisymmetric: bool = False

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (sph.n_basis(self.lmax),):
            raise ValueError("coefficient vector has wrong length for lmax")
        object.__setattr__(self, "coeffs", c)
        if self.axisymmetric and np.any(c[~sph.zonal_mask(self.lmax)] != 0.0):
            raise ValueError("axisymmetric body carries m != 0 coefficients")

    @classmethod
    def ball(cls, radius: float = 1.0, lmax: int = 0, axisymmetric: bool = False):
        c = np.zeros(sph.n_basis(lmax))
        c[0] = radius * np.sqrt(4.0 * np.pi)
        return cls(coeffs=c, lmax=lmax, axisymmetric=axisymmetric)

    @classmethod
    def from_support_samples(
        cls,
        values: np.ndarray,
        quad: SphereQuadrature,
        lmax: int,
        axisymmetric: bool = False,
    ):
        c = sph.fit_coefficients(
            lmax, quad.directions, quad.weights, values, zonal_only=axisymmetric
        )
        return cls(coeffs=c, lmax=lmax, axisymmetric=axisymmetric)

    @classmethod
    def spheroid(cls, a: float, b: float, c: float, lmax: int = 4, quad=None):
        """Least-squares encoding of the ellipsoid support function
        h(nu) = sqrt(a^2 nu_x^2 + b^2 nu_y^2 + c^2 nu_z^2)."""
        quad = quad or default_quadrature()
        d = quad.directions
        vals = np.sqrt(a * a * d[:, 0] ** 2 + b * b * d[:, 1] ** 2 + c * c * d[:, 2] ** 2)
        return cls.from_support_samples(vals, quad, lmax, axisymmetric=False)


@dataclass(frozen=True)
class ConvexityReport:
    valid: bool
    min_eigen: float


@dataclass(frozen=True)
class CylinderSpec:
    radius: float
    half_height: float
    axis: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        if self.radius <= 0 or self.half_height <= 0:
            raise ValueError("cylinder radius and half-height must be positive")
        a = np.asarray(self.axis, dtype=float)
        object.__setattr__(self, "axis", a / np.linalg.norm(a))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        p = np.atleast_2d(points) - self.center
        t = p @ self.axis
        rad = np.linalg.norm(p - t[:, None] * self.axis, axis=1)
        return (np.abs(t) <= self.half_height + tol) & (rad <= self.radius + tol)


@dataclass(frozen=True)
class TrapSegments:
    """Mutually orthogonal trapping chords; L3 realizes the sampled diameter."""

    l3: np.ndarray  # (2, 3) endpoints
    l2: np.ndarray
    l1: np.ndarray
    l2_perp_length: float

    @staticmethod
    def _length(seg):
        return float(np.linalg.norm(seg[1] - seg[0]))

    @property
    def lengths(self) -> tuple[float, float, float]:
        return (self._length(self.l1), self._length(self.l2), self._length(self.l3))


def scale(body: SupportBody, lam: float) -> SupportBody:
    """Scaled body lam * K; support functions are positively homogeneous."""
    if lam <= 0:
        raise ValueError("scale factor must be positive")
    return replace(body, coeffs=lam * body.coeffs)


def eval_support(body: SupportBody, direction: np.ndarray) -> np.ndarray | float:
    """h(nu) at one or many unit directions."""
    d = np.asarray(direction, dtype=float)
    single = d.ndim == 1
    vals = sph.eval_basis(body.lmax, np.atleast_2d(d)) @ body.coeffs
    return float(vals[0]) if single else vals


def _homog_eval(body: SupportBody, points: np.ndarray) -> np.ndarray:
    """H(x) = |x| h(x/|x|), the 1-homogeneous extension."""
    r = np.linalg.norm(points, axis=1)
    return r * (sph.eval_basis(body.lmax, points / r[:, None]) @ body.coeffs)


_stencil_cache: dict = {}


def _stencil_values(body: SupportBody, quad: SphereQuadrature) -> np.ndarray:
    """H on the finite-difference stencil around every quadrature direction.

    The (n, 19, nbasis) design matrix depends only on (quad, lmax), so it is
    cached and reused across bodies and bisection iterations.
    """
    key = (id(quad), body.lmax)
    entry = _stencil_cache.get(key)
    if entry is None or entry[0] is not quad:
        pts = quad.directions[:, None, :] + _FD_STEP * _STENCIL[None, :, :]
        flat = pts.reshape(-1, 3)
        r = np.linalg.norm(flat, axis=1)
        design = r[:, None] * sph.eval_basis(body.lmax, flat / r[:, None])
        entry = (quad, design.reshape(quad.n, _STENCIL.shape[0], -1))
        _stencil_cache[key] = entry
    return entry[1] @ body.coeffs  # (n, 19)


def _tangent_frames(dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.tile(np.array([0.0, 0.0, 1.0]), (dirs.shape[0], 1))
    near_pole = np.abs(dirs[:, 2]) > 0.9
    helper[near_pole] = np.array([1.0, 0.0, 0.0])
    t1 = np.cross(helper, dirs)
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(dirs, t1)
    return t1, t2


def tangential_hessian_min_eigen(body: SupportBody, quad: SphereQuadrature) -> np.ndarray:
    """Smallest eigenvalue of the 2x2 tangential Hessian of H at each direction."""
    f = _stencil_values(body, quad)
    h2 = _FD_STEP * _FD_STEP
    hess = np.empty((quad.n, 3, 3))
    # stencil layout: 0 center; 1..6 = +x,-x,+y,-y,+z,-z; 7..18 corner pairs
    for i in range(3):
        hess[:, i, i] = (f[:, 1 + 2 * i] - 2.0 * f[:, 0] + f[:, 2 + 2 * i]) / h2
    col = 7
    for i in range(3):
        for j in range(i + 1, 3):
            val = (f[:, col] - f[:, col + 1] - f[:, col + 2] + f[:, col + 3]) / (4.0 * h2)
            hess[:, i, j] = val
            hess[:, j, i] = val
            col += 4
    t1, t2 = _tangent_frames(quad.directions)
    a = np.einsum("ni,nij,nj->n", t1, hess, t1)
    b = np.einsum("ni,nij,nj->n", t1, hess, t2)
    c = np.einsum("ni,nij,nj->n", t2, hess, t2)
    return 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b * b)


def tangential_hessian_det(body: SupportBody, quad: SphereQuadrature) -> np.ndarray:
    """Determinant of the 2x2 tangential Hessian of H at each direction.

    For a convex body this is the product of the principal curvature radii,
    i.e. the Jacobian of the support parametrization nu -> grad H(nu) of the
    boundary; integrating f(nu) * det against the sphere quadrature gives
    the surface integral of f over the (smooth) boundary.
    """
    f = _stencil_values(body, quad)
    h2 = _FD_STEP * _FD_STEP
    hess = np.empty((quad.n, 3, 3))
    for i in range(3):
        hess[:, i, i] = (f[:, 1 + 2 * i] - 2.0 * f[:, 0] + f[:, 2 + 2 * i]) / h2
    col = 7
    for i in range(3):
        for j in range(i + 1, 3):
            val = (f[:, col] - f[:, col + 1] - f[:, col + 2] + f[:, col + 3]) / (4.0 * h2)
            hess[:, i, j] = val
            hess[:, j, i] = val
            col += 4
    t1, t2 = _tangent_frames(quad.directions)
    a = np.einsum("ni,nij,nj->n", t1, hess, t1)
    b = np.einsum("ni,nij,nj->n", t1, hess, t2)
    c = np.einsum("ni,nij,nj->n", t2, hess, t2)
    return a * c - b * b


def is_convex_valid(
    body: SupportBody, quad: SphereQuadrature | None = None, margin: float = 0.0
) -> ConvexityReport:
    """Sampled convexity certificate.

    Rule of thumb (not enforced): the quadrature should resolve at least
    2*lmax points per great circle.
    """
    quad = quad or default_quadrature()
    h = sph.eval_basis(body.lmax, quad.directions) @ body.coeffs
    if np.any(h <= 0):
        return ConvexityReport(valid=False, min_eigen=float(np.min(h)))
    min_eig = float(np.min(tangential_hessian_min_eigen(body, quad)))
    return ConvexityReport(valid=min_eig >= margin, min_eigen=min_eig)


def project_to_convex(
    body: SupportBody, margin: float = 1e-6, quad: SphereQuadrature | None = None
) -> SupportBody:
    """Shrink degree >= 1 coefficients by a common bisected factor until the
    convexity certificate holds.  Already-valid bodies are returned unchanged."""
    quad = quad or default_quadrature()
    if is_convex_valid(body, quad, margin).valid:
        return body
    high_order = sph.degree_array(body.lmax) >= 1

    def scaled(gamma):
        c = body.coeffs.copy()
        c[high_order] *= gamma
        return replace(body, coeffs=c)

    lo, hi = 0.0, 1.0
    if not is_convex_valid(scaled(0.0), quad, margin).valid:
        raise EmptyBodyError(
            "even the spherical part fails the convexity margin; "
            "degree-0 coefficient too small for the requested margin"
        )
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if is_convex_valid(scaled(mid), quad, margin).valid:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return scaled(lo)


def contains(
    body: SupportBody,
    points: np.ndarray,
    quad: SphereQuadrature | None = None,
    tol: float = 0.0,
) -> np.ndarray:
    """Membership test x . nu <= h(nu) against all quadrature directions."""
    quad = quad or default_quadrature()
    h = sph.eval_basis(body.lmax, quad.directions) @ body.coeffs
    pts = np.atleast_2d(points)
    out = np.empty(pts.shape[0], dtype=bool)
    chunk = max(1, int(4e6 / quad.n))
    for s in range(0, pts.shape[0], chunk):
        block = pts[s : s + chunk]
        slack = block @ quad.directions.T - h[None, :]
        out[s : s + block.shape[0]] = np.max(slack, axis=1) <= tol
    return out


def volume(
    body: SupportBody, resolution: int, quad: SphereQuadrature | None = None
) -> float:
    """Voxel-count volume on the same rasterization path as the spectral grid."""
    from .grid import rasterize  # local import; grid depends on body

    dom = rasterize(body, resolution, quad=quad)
    return dom.volume


def diameter(body: SupportBody, quad: SphereQuadrature | None = None) -> float:
    """Maximum width over the quadrature; exact for convex bodies up to
    quadrature resolution.  Ties broken by the first index."""
    quad = quad or default_quadrature()
    h = sph.eval_basis(body.lmax, quad.directions) @ body.coeffs
    widths = h + h[quad.antipode]
    return float(widths[int(np.argmax(widths))])


def hausdorff_distance(
    a: SupportBody, b: SupportBody, quad: SphereQuadrature | None = None
) -> float:
    """d_H via the support-function sup-norm identity for convex bodies."""
    quad = quad or default_quadrature()
    ha = sph.eval_basis(a.lmax, quad.directions) @ a.coeffs
    hb = sph.eval_basis(b.lmax, quad.directions) @ b.coeffs
    return float(np.max(np.abs(ha - hb)))


def contact_points(body: SupportBody, dirs: np.ndarray) -> np.ndarray:
    """Boundary touching points x(nu) = grad H(nu) by central differences."""
    d = np.atleast_2d(np.asarray(dirs, dtype=float))
    out = np.empty_like(d)
    for i in range(3):
        off = np.zeros(3)
        off[i] = _FD_STEP
        out[:, i] = (_homog_eval(body, d + off) - _homog_eval(body, d - off)) / (
            2.0 * _FD_STEP
        )
    return out


def boundary_samples(
    body: SupportBody, quad: SphereQuadrature | None = None
) -> np.ndarray:
    """Dense boundary point cloud: contact points of all quadrature directions."""
    quad = quad or default_quadrature()
    return contact_points(body, quad.directions)


def _max_chord_2d(u: np.ndarray, v: np.ndarray, pixel: float) -> tuple[float, int, int]:
    """Longest u-extent among points grouped into v-pixels.

    Returns (length, index_of_min_point, index_of_max_point).
    """
    bins = np.floor((v - v.min()) / pixel).astype(int)
    best = (0.0, 0, 0)
    for bval in np.unique(bins):
        sel = np.flatnonzero(bins == bval)
        if sel.size < 2:
            continue
        uu = u[sel]
        imin, imax = sel[int(np.argmin(uu))], sel[int(np.argmax(uu))]
        length = u[imax] - u[imin]
        if length > best[0]:
            best = (float(length), imin, imax)
    return best


def _slice_diameter_2d(u: np.ndarray, v: np.ndarray) -> tuple[float, int, int]:
    """Planar diameter of a point set via its convex hull."""
    from scipy.spatial import ConvexHull, QhullError

    pts = np.column_stack([u, v])
    if pts.shape[0] <= 3:
        idx = np.arange(pts.shape[0])
    else:
        try:
            idx = ConvexHull(pts).vertices
        except QhullError:  # (near-)collinear slice
            idx = np.arange(pts.shape[0])
    hull = pts[idx]
    diff = hull[:, None, :] - hull[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    i, j = np.unravel_index(int(np.argmax(dist)), dist.shape)
    return float(dist[i, j]), int(idx[i]), int(idx[j])


def enclosing_cylinder(
    body: SupportBody, resolution: int, quad: SphereQuadrature | None = None
) -> tuple[CylinderSpec, TrapSegments]:
    """Trapping cylinder of radius 2*|L3| and half-height |L1|.

    L3 realizes the sampled diameter; L2 is the longest chord of the widest
    perpendicular slab; L1 is the longest chord orthogonal to span(L2, L3).
    Containment is certified on the boundary quadrature samples.
    """
    from .grid import rasterize

    quad = quad or default_quadrature()
    h = sph.eval_basis(body.lmax, quad.directions) @ body.coeffs
    widths = h + h[quad.antipode]
    istar = int(np.argmax(widths))
    nu = quad.directions[istar]
    p_plus = contact_points(body, nu)[0]
    p_minus = contact_points(body, -nu)[0]
    d = float(np.linalg.norm(p_plus - p_minus))
    e3 = (p_plus - p_minus) / d
    l3 = np.array([p_minus, p_plus])

    dom = rasterize(body, resolution, quad=quad)
    pts = dom.cell_centers()
    spacing = dom.spacing
    t = pts @ e3
    tbins = np.floor((t - t.min()) / spacing).astype(int)
    a0, b0 = _tangent_frames(e3[None, :])
    a0, b0 = a0[0], b0[0]

    best = None  # (diam, bin, imin, imax)
    for bval in np.unique(tbins):
        sel = np.flatnonzero(tbins == bval)
        if sel.size < 2:
            continue
        u, v = pts[sel] @ a0, pts[sel] @ b0
        diam2d, i, j = _slice_diameter_2d(u, v)
        if best is None or diam2d > best[0]:
            best = (diam2d, bval, sel[i], sel[j])
    if best is None:
        raise EmptyBodyError("rasterized body too thin to slice")
    q1, q2 = pts[best[2]], pts[best[3]]
    t_mid = 0.5 * ((q1 @ e3) + (q2 @ e3))
    q1p = q1 - ((q1 @ e3) - t_mid) * e3
    q2p = q2 - ((q2 @ e3) - t_mid) * e3
    l2 = np.array([q1p, q2p])
    e2 = (q2p - q1p) / np.linalg.norm(q2p - q1p)
    e1 = np.cross(e3, e2)
    e1 /= np.linalg.norm(e1)

    # longest chord along e1, over pixels in the (e2, e3) shadow
    alpha, beta, gamma = pts @ e1, pts @ e2, pts @ e3
    pix = np.floor(
        np.column_stack([(beta - beta.min()) / spacing, (gamma - gamma.min()) / spacing])
    ).astype(int)
    keys = pix[:, 0] * (pix[:, 1].max() + 1) + pix[:, 1]
    l1_len, i1, i2 = 0.0, 0, 0
    for kval in np.unique(keys):
        sel = np.flatnonzero(keys == kval)
        if sel.size < 2:
            continue
        aa = alpha[sel]
        jmin, jmax = sel[int(np.argmin(aa))], sel[int(np.argmax(aa))]
        if alpha[jmax] - alpha[jmin] > l1_len:
            l1_len = float(alpha[jmax] - alpha[jmin])
            i1, i2 = jmin, jmax
    if l1_len <= 0:
        raise EmptyBodyError("no chord orthogonal to span(L2, L3) found")
    # snap the chord endpoints to a common transverse position
    mid_bg = 0.5 * (pts[i1] + pts[i2])
    mid_bg = mid_bg - (mid_bg @ e1) * e1
    l1 = np.array([mid_bg + (alpha[i1]) * e1, mid_bg + (alpha[i2]) * e1])

    # L2_perp: longest chord along e1 inside the winning slab
    sel = np.flatnonzero(tbins == best[1])
    l2_perp, _, _ = _max_chord_2d(alpha[sel], beta[sel], spacing)

    bpoints = boundary_samples(body, quad)
    ax_coord = bpoints @ e1
    center = 0.5 * (p_plus + p_minus)
    center = center - (center @ e1) * e1 + 0.5 * (ax_coord.min() + ax_coord.max()) * e1
    cyl = CylinderSpec(radius=2.0 * d, half_height=l1_len, axis=e1, center=center)
    ok = cyl.contains(bpoints, tol=2.0 * spacing + 1e-9)
    if not np.all(ok):
        raise ContainmentError(bpoints[int(np.argmin(ok))])
    segs = TrapSegments(l3=l3, l2=l2, l1=l1, l2_perp_length=l2_perp)
    return cyl, segs


# ---------------------------------------------------------------------------
# serialization: SUPPORTBODY v1


def write_body(path, body: SupportBody) -> None:
    lines = [f"SUPPORTBODY v1 lmax={body.lmax} axisym={1 if body.axisymmetric else 0}"]
    for (l, m), c in zip(sph.basis_indices(body.lmax), body.coeffs):
        lines.append(f"{l} {m} {c:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_body(path) -> SupportBody:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "SUPPORTBODY" or header[1] != "v1":
            raise ValueError(f"not a SUPPORTBODY v1 file: {path}")
        lmax = int(header[2].split("=")[1])
        axisym = bool(int(header[3].split("=")[1]))
        coeffs = np.zeros(sph.n_basis(lmax))
        index = {lm: k for k, lm in enumerate(sph.basis_indices(lmax))}
        for line in fh:
            if not line.strip():
                continue
            l_s, m_s, v_s = line.split()
            coeffs[index[(int(l_s), int(m_s))]] = float(v_s)
    return SupportBody(coeffs=coeffs, lmax=lmax, axisymmetric=axisym)
