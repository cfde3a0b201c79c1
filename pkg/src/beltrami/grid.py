"""Staggered (face-normal) voxel grids and the discrete Leray projection.

Unknowns live on cell faces (normal components), so discrete divergence-free
and boundary-tangency constraints are exact.  The domain grid is a cube of
side equal to the largest bounding-box extent, centered on the body; with an
even resolution no cell center sits on the mid-planes, so bodies thinner than
one cell rasterize to nothing and fail loudly.
"""

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import splu

from . import body as body_mod
from .body import CylinderSpec, SupportBody
from .quadrature import SphereQuadrature, default_quadrature

BFLD_MAGIC = b"BFLD"


class EmptyDomainError(ValueError):
    pass


class ProjectionError(RuntimeError):
    def __init__(self, residual):
        self.residual = residual
        super().__init__(f"pressure solve residual {residual:.3e} exceeds tolerance")


@dataclass
class FaceField:
    """Normal components on x/y/z faces.  Fields in the discrete K(Omega)
    vanish on boundary faces; constructors here enforce that structurally."""

    fx: np.ndarray
    fy: np.ndarray
    fz: np.ndarray

    def copy(self):
        return FaceField(self.fx.copy(), self.fy.copy(), self.fz.copy())

    def __add__(self, other):
        return FaceField(self.fx + other.fx, self.fy + other.fy, self.fz + other.fz)

    def __sub__(self, other):
        return FaceField(self.fx - other.fx, self.fy - other.fy, self.fz - other.fz)

    def __mul__(self, a: float):
        return FaceField(a * self.fx, a * self.fy, a * self.fz)

    __rmul__ = __mul__


@dataclass
class CellField:
    """One 3-vector per cell; zero on unoccupied cells."""

    data: np.ndarray  # (nx, ny, nz, 3)


class VoxelDomain:
    """Occupancy grid with cached face topology and pressure factorization."""

    def __init__(self, origin, spacing: float, occ: np.ndarray):
        occ = np.asarray(occ, dtype=bool)
        if not occ.any():
            raise EmptyDomainError("no occupied cells")
        labels, nlab = ndimage.label(occ)
        if nlab > 1:
            counts = np.bincount(labels.ravel())
            counts[0] = 0
            occ = labels == int(np.argmax(counts))
        self.origin = np.asarray(origin, dtype=float)
        self.spacing = float(spacing)
        self.occ = occ
        self.dims = occ.shape
        nx, ny, nz = occ.shape

        # interior faces: both neighbor cells occupied
        self.ifx = np.zeros((nx + 1, ny, nz), dtype=bool)
        self.ifx[1:nx] = occ[:-1] & occ[1:]
        self.ify = np.zeros((nx, ny + 1, nz), dtype=bool)
        self.ify[:, 1:ny] = occ[:, :-1] & occ[:, 1:]
        self.ifz = np.zeros((nx, ny, nz + 1), dtype=bool)
        self.ifz[:, :, 1:nz] = occ[:, :, :-1] & occ[:, :, 1:]

        self.ncells = int(occ.sum())
        self.cell_id = -np.ones(occ.shape, dtype=np.int64)
        self.cell_id[occ] = np.arange(self.ncells)
        self.n_faces = int(self.ifx.sum() + self.ify.sum() + self.ifz.sum())

        self._boundary = None
        self._lap_solver = None

    # -- geometry ----------------------------------------------------------

    @property
    def volume(self) -> float:
        return self.ncells * self.spacing**3

    def cell_centers(self) -> np.ndarray:
        idx = np.argwhere(self.occ)
        return self.origin + (idx + 0.5) * self.spacing

    # -- face field helpers ------------------------------------------------

    def zero_face_field(self) -> FaceField:
        nx, ny, nz = self.dims
        return FaceField(
            np.zeros((nx + 1, ny, nz)),
            np.zeros((nx, ny + 1, nz)),
            np.zeros((nx, ny, nz + 1)),
        )

    def mask_faces(self, f: FaceField) -> FaceField:
        """Zero everything outside interior faces (boundary tangency)."""
        return FaceField(
            np.where(self.ifx, f.fx, 0.0),
            np.where(self.ify, f.fy, 0.0),
            np.where(self.ifz, f.fz, 0.0),
        )

    def pack(self, f: FaceField) -> np.ndarray:
        return np.concatenate([f.fx[self.ifx], f.fy[self.ify], f.fz[self.ifz]])

    def unpack(self, v: np.ndarray) -> FaceField:
        f = self.zero_face_field()
        n1, n2 = int(self.ifx.sum()), int(self.ify.sum())
        f.fx[self.ifx] = v[:n1]
        f.fy[self.ify] = v[n1 : n1 + n2]
        f.fz[self.ifz] = v[n1 + n2 :]
        return f

    def face_inner(self, f: FaceField, g: FaceField) -> float:
        """Discrete L2 inner product, spacing^3 weight per face."""
        s = (
            np.dot(f.fx[self.ifx], g.fx[self.ifx])
            + np.dot(f.fy[self.ify], g.fy[self.ify])
            + np.dot(f.fz[self.ifz], g.fz[self.ifz])
        )
        return self.spacing**3 * float(s)

    def random_face_field(self, rng: np.random.Generator) -> FaceField:
        return self.unpack(rng.standard_normal(self.n_faces))

    # -- boundary topology -------------------------------------------------

    def boundary_faces(self):
        """Arrays (axis, index triple, outward sign, center, adjacent cell)."""
        if self._boundary is not None:
            return self._boundary
        occ = self.occ
        nx, ny, nz = self.dims
        axes, idxs, signs, cells = [], [], [], []

        def collect(axis, shape, neg_occ, pos_occ):
            # neg_occ/pos_occ: occupancy of the cells on the -/+ side of face
            bmask = neg_occ ^ pos_occ
            ind = np.argwhere(bmask)
            sgn = np.where(neg_occ[bmask], 1, -1)
            adj = ind.copy()
            off = np.zeros_like(adj)
            off[:, axis] = 1
            adj = np.where(sgn[:, None] > 0, ind - off, ind)
            axes.append(np.full(ind.shape[0], axis))
            idxs.append(ind)
            signs.append(sgn)
            cells.append(adj)

        negx = np.zeros((nx + 1, ny, nz), dtype=bool)
        posx = np.zeros((nx + 1, ny, nz), dtype=bool)
        negx[1:] = occ
        posx[:nx] = occ
        collect(0, None, negx, posx)
        negy = np.zeros((nx, ny + 1, nz), dtype=bool)
        posy = np.zeros((nx, ny + 1, nz), dtype=bool)
        negy[:, 1:] = occ
        posy[:, :ny] = occ
        collect(1, None, negy, posy)
        negz = np.zeros((nx, ny, nz + 1), dtype=bool)
        posz = np.zeros((nx, ny, nz + 1), dtype=bool)
        negz[:, :, 1:] = occ
        posz[:, :, :nz] = occ
        collect(2, None, negz, posz)

        axis = np.concatenate(axes)
        index = np.vstack(idxs)
        sign = np.concatenate(signs)
        cell = np.vstack(cells)
        center = self.origin + (index + 0.5) * self.spacing
        # a face at slot i along its own axis sits at offset i (not i + 1/2)
        for a in range(3):
            sel = axis == a
            center[sel, a] = self.origin[a] + index[sel, a] * self.spacing
        self._boundary = BoundaryFaces(
            axis=axis, index=index, sign=sign, cell=cell, center=center,
            area=self.spacing**2,
        )
        return self._boundary

    # -- pressure solver ---------------------------------------------------

    def _laplacian_solver(self):
        """Cached sparse factorization of the Neumann Laplacian, gauge-pinned
        at cell 0.  Replaces an iterative conjugate-direction solve; the
        residual contract (1e-10 relative) is checked on every solve."""
        if self._lap_solver is not None:
            return self._lap_solver
        occ, cid, h = self.occ, self.cell_id, self.spacing
        rows, cols = [], []
        for axis in range(3):
            sl_lo = [slice(None)] * 3
            sl_hi = [slice(None)] * 3
            sl_lo[axis] = slice(None, -1)
            sl_hi[axis] = slice(1, None)
            link = occ[tuple(sl_lo)] & occ[tuple(sl_hi)]
            c_lo = cid[tuple(sl_lo)][link]
            c_hi = cid[tuple(sl_hi)][link]
            rows.append(c_lo)
            cols.append(c_hi)
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        n = self.ncells
        w = 1.0 / h**2
        off = sparse.coo_matrix(
            (np.full(2 * r.size, w), (np.concatenate([r, c]), np.concatenate([c, r]))),
            shape=(n, n),
        ).tocsr()
        deg = np.asarray(off.sum(axis=1)).ravel()
        lap = off - sparse.diags(deg)  # L = div grad, negative semidefinite
        reduced = (-lap[1:, 1:]).tocsc()
        factor = splu(reduced)
        self._lap_solver = (lap.tocsr(), factor)
        return self._lap_solver

    def solve_neumann_poisson(self, rhs: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        """Solve div grad p = rhs on occupied cells, zero-flux boundary,
        zero-mean gauge.  rhs indexed by cell id."""
        lap, factor = self._laplacian_solver()
        p = np.zeros(self.ncells)
        if self.ncells > 1:
            p[1:] = factor.solve(-rhs[1:])
        denom = max(float(np.linalg.norm(rhs)), 1e-300)
        residual = float(np.linalg.norm(lap @ p - rhs)) / denom
        if residual > max(tol * 1e2, 1e-8) and np.linalg.norm(rhs) > 1e-300:
            raise ProjectionError(residual)
        return p - p.mean()


@dataclass
class BoundaryFaces:
    axis: np.ndarray
    index: np.ndarray
    sign: np.ndarray
    cell: np.ndarray
    center: np.ndarray
    area: float

    @property
    def n(self) -> int:
        return self.axis.shape[0]


# ---------------------------------------------------------------------------
# rasterization


def _cubic_grid(lo: np.ndarray, hi: np.ndarray, resolution: int):
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    side = float(np.max(hi - lo))
    if side <= 0:
        raise EmptyDomainError("degenerate bounding box")
    spacing = side / resolution
    center = 0.5 * (lo + hi)
    origin = center - 0.5 * side
    dims = (resolution, resolution, resolution)
    return origin, spacing, dims


def _grid_centers(origin, spacing, dims) -> np.ndarray:
    ii, jj, kk = np.meshgrid(
        np.arange(dims[0]), np.arange(dims[1]), np.arange(dims[2]), indexing="ij"
    )
    idx = np.column_stack([ii.ravel(), jj.ravel(), kk.ravel()])
    return origin + (idx + 0.5) * spacing


def rasterize(
    body: SupportBody, resolution: int, quad: SphereQuadrature | None = None
) -> VoxelDomain:
    """Voxelize a support body onto its cubic bounding grid."""
    quad = quad or default_quadrature()
    axes = np.eye(3)
    hi = np.array([body_mod.eval_support(body, axes[i]) for i in range(3)])
    lo = -np.array([body_mod.eval_support(body, -axes[i]) for i in range(3)])
    origin, spacing, dims = _cubic_grid(lo, hi, resolution)
    centers = _grid_centers(origin, spacing, dims)
    occ = body_mod.contains(body, centers, quad=quad).reshape(dims)
    return VoxelDomain(origin, spacing, occ)


def rasterize_on_grid(
    body: SupportBody,
    origin,
    spacing: float,
    dims,
    quad: SphereQuadrature | None = None,
) -> VoxelDomain:
    """Voxelize onto a caller-fixed grid (shared-grid comparisons)."""
    quad = quad or default_quadrature()
    centers = _grid_centers(np.asarray(origin, float), spacing, tuple(dims))
    occ = body_mod.contains(body, centers, quad=quad).reshape(tuple(dims))
    return VoxelDomain(origin, spacing, occ)


def rasterize_cylinder(spec: CylinderSpec, resolution: int) -> VoxelDomain:
    a = spec.axis
    half = spec.radius * np.sqrt(np.clip(1.0 - a * a, 0.0, None)) + spec.half_height * np.abs(a)
    lo, hi = spec.center - half, spec.center + half
    origin, spacing, dims = _cubic_grid(lo, hi, resolution)
    centers = _grid_centers(origin, spacing, dims)
    occ = spec.contains(centers).reshape(dims)
    return VoxelDomain(origin, spacing, occ)


def box_domain(center, half_width: float, resolution: int) -> VoxelDomain:
    """Fully occupied cube, the container for gamma-distance comparisons."""
    c = np.asarray(center, dtype=float)
    lo, hi = c - half_width, c + half_width
    origin, spacing, dims = _cubic_grid(lo, hi, resolution)
    occ = np.ones(dims, dtype=bool)
    return VoxelDomain(origin, spacing, occ)


# ---------------------------------------------------------------------------
# discrete operators


def discrete_divergence(domain: VoxelDomain, f: FaceField) -> np.ndarray:
    """Flux difference per occupied cell, divided by spacing."""
    h = domain.spacing
    div = (
        (f.fx[1:] - f.fx[:-1]) + (f.fy[:, 1:] - f.fy[:, :-1]) + (f.fz[:, :, 1:] - f.fz[:, :, :-1])
    ) / h
    return np.where(domain.occ, div, 0.0)


def gradient_faces(domain: VoxelDomain, p_cells: np.ndarray) -> FaceField:
    """Difference quotient across interior faces; zero flux on the boundary."""
    h = domain.spacing
    g = domain.zero_face_field()
    g.fx[1:-1] = (p_cells[1:] - p_cells[:-1]) / h
    g.fy[:, 1:-1] = (p_cells[:, 1:] - p_cells[:, :-1]) / h
    g.fz[:, :, 1:-1] = (p_cells[:, :, 1:] - p_cells[:, :, :-1]) / h
    return domain.mask_faces(g)


def leray_project(domain: VoxelDomain, f: FaceField, tol: float = 1e-10) -> FaceField:
    """L2-orthogonal projection onto divergence-free, boundary-tangent fields."""
    f0 = domain.mask_faces(f)
    div = discrete_divergence(domain, f0)
    rhs = div[domain.occ]
    fnorm = float(np.linalg.norm(domain.pack(f0)))
    # already divergence-free up to roundoff: projector fixed point
    if float(np.linalg.norm(rhs)) * domain.spacing <= 1e-12 * fnorm:
        return f0
    p = domain.solve_neumann_poisson(rhs, tol=tol)
    p_grid = np.zeros(domain.dims)
    p_grid[domain.occ] = p
    return f0 - gradient_faces(domain, p_grid)


def interpolate_to_cells(domain: VoxelDomain, f: FaceField) -> CellField:
    """Midpoint average of opposing faces; missing (boundary) faces are zero."""
    cx = 0.5 * (f.fx[:-1] + f.fx[1:])
    cy = 0.5 * (f.fy[:, :-1] + f.fy[:, 1:])
    cz = 0.5 * (f.fz[:, :, :-1] + f.fz[:, :, 1:])
    data = np.stack([cx, cy, cz], axis=-1)
    data[~domain.occ] = 0.0
    return CellField(data=data)


def restrict_to_faces(domain: VoxelDomain, c: CellField) -> FaceField:
    """Adjoint of interpolate_to_cells: average adjacent cell components onto
    interior faces, zero on boundary faces."""
    d = c.data
    g = domain.zero_face_field()
    g.fx[1:-1] = 0.5 * (d[:-1, :, :, 0] + d[1:, :, :, 0])
    g.fy[:, 1:-1] = 0.5 * (d[:, :-1, :, 1] + d[:, 1:, :, 1])
    g.fz[:, :, 1:-1] = 0.5 * (d[:, :, :-1, 2] + d[:, :, 1:, 2])
    return domain.mask_faces(g)


def boundary_trace_sq(domain: VoxelDomain, c: CellField) -> np.ndarray:
    """One-sided boundary trace of |u|^2: the value at the occupied cell
    adjacent to each boundary face.  First-order accurate by construction."""
    b = domain.boundary_faces()
    vals = c.data[b.cell[:, 0], b.cell[:, 1], b.cell[:, 2]]
    return np.einsum("ij,ij->i", vals, vals)


# ---------------------------------------------------------------------------
# BFLD binary field dump


def write_field(path, domain: VoxelDomain, c: CellField) -> None:
    nx, ny, nz = domain.dims
    data = np.where(domain.occ[..., None], c.data, np.nan)
    with open(path, "wb") as fh:
        fh.write(BFLD_MAGIC)
        fh.write(struct.pack("<I", 1))
        fh.write(struct.pack("<3I", nx, ny, nz))
        fh.write(struct.pack("<d", domain.spacing))
        fh.write(struct.pack("<3d", *domain.origin))
        fh.write(data.transpose(2, 1, 0, 3).astype("<f8").tobytes())


def read_field(path):
    """Returns (origin, spacing, dims, data) with data shaped (nx, ny, nz, 3)."""
    with open(path, "rb") as fh:
        if fh.read(4) != BFLD_MAGIC:
            raise ValueError(f"not a BFLD file: {path}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != 1:
            raise ValueError(f"unsupported BFLD version {version}")
        dims = struct.unpack("<3I", fh.read(12))
        (spacing,) = struct.unpack("<d", fh.read(8))
        origin = np.array(struct.unpack("<3d", fh.read(24)))
        raw = np.frombuffer(fh.read(), dtype="<f8")
    nx, ny, nz = dims
    data = raw.reshape(nz, ny, nx, 3).transpose(2, 1, 0, 3)
    return origin, spacing, dims, data.copy()
