"""Gradient descent on J(K) = V^(1/3) mu1 over convex support bodies.

The objective is scale-invariant, so the volume constraint is a gauge: every
step renormalizes the iterate back to the starting volume by uniform scaling.
The boundary gradient is the trace misfit g = |u1|^2 - ||u1||^2 / (3 V); at a
smooth critical shape the trace is constant and g vanishes.  Moving the
boundary with normal speed +g decreases J to first order:

    dJ = -J * integral_boundary g (v . N) dS        (unit-norm eigenfield)

which follows from the Hadamard derivative of mu1 (growing the domain where
|u1|^2 is large lowers mu1 fastest) combined with the volume term V^(1/3).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import sph
from .body import (
    SupportBody,
    contact_points,
    eval_support,
    is_convex_valid,
    project_to_convex,
    scale as scale_body,
    tangential_hessian_det,
)
from .grid import VoxelDomain, boundary_trace_sq, interpolate_to_cells, rasterize
from .quadrature import SphereQuadrature, default_quadrature
from .spectral import OperatorHandle, SpectralResult, first_positive_mu


@dataclass(frozen=True)
class OptConfig:
    lmax: int = 4
    axisymmetric: bool = False
    resolution: int = 24
    step: float = 0.5
    max_iters: int = 20
    margin: float = 1e-6
    seed: int = 0
    fallback: bool = False          # derivative-free coefficient search
    noise_rel: float = 0.02         # accepted-step noise band, relative to J
    tol: float = 1e-6               # eigensolver tolerance

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step size must be positive")
        if self.resolution < 16:
            raise ValueError("optimizer resolution must be >= 16")


@dataclass
class ObjectiveValue:
    j: float
    mu1: float
    volume: float
    result: SpectralResult
    domain: VoxelDomain


@dataclass
class OptRecord:
    body: SupportBody
    volume: float
    mu1: float
    j: float
    variance: float
    min_trace: float
    step: float
    accepted: bool


@dataclass
class OptTrajectory:
    records: list = field(default_factory=list)
    noise_band: float = 0.0
    stop_reason: str = ""


@dataclass(frozen=True)
class Diagnostic:
    variance: float
    min_trace: float
    ph_flag: bool


def objective(
    body: SupportBody,
    resolution: int,
    seed: int = 0,
    quad: SphereQuadrature | None = None,
    tol: float = 1e-6,
) -> ObjectiveValue:
    """J = V^(1/3) mu1 on the voxelized body."""
    dom = rasterize(body, resolution, quad=quad)
    res = first_positive_mu(OperatorHandle(dom), seed=seed, tol=tol)
    v = dom.volume
    return ObjectiveValue(
        j=v ** (1.0 / 3.0) * res.mu1, mu1=res.mu1, volume=v, result=res, domain=dom
    )


def boundary_trace(domain: VoxelDomain, result: SpectralResult) -> np.ndarray:
    """|u1|^2 sampled one cell inside each boundary face."""
    return boundary_trace_sq(domain, interpolate_to_cells(domain, result.eigenfield))


def shape_gradient(domain: VoxelDomain, result: SpectralResult) -> np.ndarray:
    """Per-boundary-face g = |u1|^2 - ||u1||^2 / (3 V)."""
    u = result.eigenfield
    norm2 = domain.face_inner(u, u)
    return boundary_trace(domain, result) - norm2 / (3.0 * domain.volume)


def sample_on_directions(
    body: SupportBody,
    domain: VoxelDomain,
    face_values: np.ndarray,
    quad: SphereQuadrature,
) -> np.ndarray:
    """Pull a per-boundary-face quantity back to quadrature directions via
    the nearest boundary face to each contact point."""
    centers = domain.boundary_faces().center
    tree = cKDTree(centers)
    pts = contact_points(body, quad.directions)
    _, idx = tree.query(pts)
    return face_values[idx]


def surface_integral(
    body: SupportBody, quad: SphereQuadrature, values: np.ndarray
) -> float:
    """integral_boundary f dS for f given at the quadrature directions,
    using the support-parametrization Jacobian (avoids the voxel surface's
    stair-step area inflation)."""
    jac = tangential_hessian_det(body, quad)
    return float(np.sum(quad.weights * values * jac))


def step_body(
    body: SupportBody,
    domain: VoxelDomain,
    g: np.ndarray,
    step: float,
    margin: float = 1e-6,
    quad: SphereQuadrature | None = None,
) -> SupportBody:
    """One descent step: h(nu) <- h(nu) - step * g(nu), refit, repair
    convexity, renormalize the volume back to the current domain's."""
    quad = quad or default_quadrature()
    gvals = sample_on_directions(body, domain, g, quad)
    hvals = eval_support(body, quad.directions) - step * gvals
    cand = SupportBody.from_support_samples(
        hvals, quad, body.lmax, axisymmetric=body.axisymmetric
    )
    cand = project_to_convex(cand, margin=margin, quad=quad)
    resolution = domain.dims[0]
    v_new = rasterize(cand, resolution, quad=quad).volume
    return scale_body(cand, (domain.volume / v_new) ** (1.0 / 3.0))


def optimality_diagnostic(
    domain: VoxelDomain,
    result: SpectralResult,
    eps_var: float = 1e-4,
    eps_min: float = 0.1,
    trace: np.ndarray | None = None,
) -> Diagnostic:
    """Constancy diagnostics of the boundary trace.

    ph_flag is raised when the trace looks constant (relative variance below
    eps_var) AND bounded away from zero (min above eps_min * mean): a smooth
    eigenfield tangent to a sphere-like boundary must vanish somewhere, so a
    flat nonvanishing trace marks a configuration excluded for smooth stably
    convex optima.  Thresholds are relative to the mean trace.
    """
    t = boundary_trace(domain, result) if trace is None else np.asarray(trace)
    mean = float(t.mean())
    variance = float(((t - mean) ** 2).mean())
    min_trace = float(t.min())
    flat = variance < eps_var * max(mean, 1e-300) ** 2
    nonvanishing = mean > 0 and min_trace > eps_min * mean
    return Diagnostic(variance=variance, min_trace=min_trace, ph_flag=flat and nonvanishing)


def _propose_fallback(
    body: SupportBody, rng: np.random.Generator, step: float, margin: float, quad
) -> SupportBody:
    """Derivative-free proposal: random coefficient perturbation."""
    c = body.coeffs.copy()
    free = sph.degree_array(body.lmax) >= 1
    if body.axisymmetric:
        free &= sph.zonal_mask(body.lmax)
    c[free] += step * rng.standard_normal(int(free.sum()))
    cand = SupportBody(coeffs=c, lmax=body.lmax, axisymmetric=body.axisymmetric)
    return project_to_convex(cand, margin=margin, quad=quad)


def optimize(config: OptConfig, initial: SupportBody) -> OptTrajectory:
    """Backtracking descent; deterministic for a given config.

    Steps are accepted when J does not increase beyond the noise band; on an
    increase the step is halved (6 tries).  Stops on max iterations, step
    underflow, or a gradient variance below the noise floor.  The trajectory
    is always returned, including the rejected final proposal if any.
    """
    quad = default_quadrature()
    rng = np.random.default_rng(config.seed)
    traj = OptTrajectory()
    cur = project_to_convex(initial, margin=config.margin, quad=quad)
    val = objective(cur, config.resolution, seed=config.seed, quad=quad, tol=config.tol)
    traj.noise_band = config.noise_rel * val.j
    step = config.step
    var_floor = 1e-8

    for _ in range(config.max_iters):
        g = shape_gradient(val.domain, val.result)
        trace = boundary_trace(val.domain, val.result)
        diag = optimality_diagnostic(val.domain, val.result, trace=trace)
        traj.records.append(
            OptRecord(
                body=cur, volume=val.volume, mu1=val.mu1, j=val.j,
                variance=diag.variance, min_trace=diag.min_trace,
                step=step, accepted=True,
            )
        )
        rel_var = diag.variance / max(float(trace.mean()), 1e-300) ** 2
        if rel_var < var_floor:
            traj.stop_reason = "gradient variance below noise floor"
            return traj

        accepted = False
        for k in range(6):
            trial_step = step * 0.5**k
            if config.fallback:
                cand = _propose_fallback(cur, rng, trial_step, config.margin, quad)
                resolution = val.domain.dims[0]
                v_new = rasterize(cand, resolution, quad=quad).volume
                cand = scale_body(cand, (val.volume / v_new) ** (1.0 / 3.0))
            else:
                cand = step_body(
                    cur, val.domain, g, trial_step, margin=config.margin, quad=quad
                )
            cand_val = objective(
                cand, config.resolution, seed=config.seed, quad=quad, tol=config.tol
            )
            if cand_val.j <= val.j + traj.noise_band:
                cur, val = cand, cand_val
                step = trial_step * (1.2 if k == 0 else 1.0)
                step = min(step, 4.0 * config.step)
                accepted = True
                break
        if not accepted:
            traj.records.append(
                OptRecord(
                    body=cand, volume=cand_val.volume, mu1=cand_val.mu1, j=cand_val.j,
                    variance=np.nan, min_trace=np.nan, step=trial_step, accepted=False,
                )
            )
            traj.stop_reason = "step underflow"
            return traj

    diag = optimality_diagnostic(val.domain, val.result)
    traj.records.append(
        OptRecord(
            body=cur, volume=val.volume, mu1=val.mu1, j=val.j,
            variance=diag.variance, min_trace=diag.min_trace,
            step=step, accepted=True,
        )
    )
    traj.stop_reason = "max iterations"
    return traj
