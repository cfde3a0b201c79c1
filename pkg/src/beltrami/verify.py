"""Invariant suite behind the `verify` subcommand.

Each check exercises one proved property of the eigenvalue problem on small
grids: scaling, domain monotonicity, the volume lower bound, the cylinder
bound, the helicity identity, Hausdorff metric axioms, and the Lipschitz
property of the grid operator distance.  The emitted report is deterministic
for a given seed; volatile lines (timestamps) carry a '#' prefix.
"""

from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .body import CylinderSpec, SupportBody, hausdorff_distance, scale
from .bounds import cylinder_bound, faber_krahn_bound
from .gamma import BoxDomain, gamma_distance, lipschitz_check
from .grid import box_domain, rasterize, rasterize_cylinder, rasterize_on_grid
from .quadrature import default_quadrature
from .spectral import OperatorHandle, first_positive_mu, helicity


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _solve(domain, seed, tol):
    return first_positive_mu(OperatorHandle(domain), seed=seed, tol=tol)


def run_verify(resolution: int = 16, seed: int = 0, tol: float = 1e-6):
    """Returns (list of CheckResult, report text)."""
    quad = default_quadrature()
    checks = []
    ball = SupportBody.ball(1.0)

    dom1 = rasterize(ball, resolution, quad=quad)
    res1 = _solve(dom1, seed, tol)

    # scaling: congruent grids, mu1(lam K) = mu1(K) / lam
    dom2 = rasterize(scale(ball, 2.0), resolution, quad=quad)
    res2 = _solve(dom2, seed, tol)
    val = abs(2.0 * res2.mu1 / res1.mu1 - 1.0)
    checks.append(
        CheckResult("scaling", val <= 0.05, f"rel_dev={val:.3e}")
    )

    # monotonicity on a shared grid
    inner = rasterize_on_grid(
        scale(ball, 0.8), dom1.origin, dom1.spacing, dom1.dims, quad=quad
    )
    res_in = _solve(inner, seed, tol)
    ok = res_in.mu1 >= res1.mu1 * (1.0 - 0.02)
    checks.append(
        CheckResult(
            "monotonicity", ok, f"mu_inner={res_in.mu1:.6f} mu_outer={res1.mu1:.6f}"
        )
    )

    # volume lower bound, ball and a spheroid
    fk_ok = True
    details = []
    for name, dom, res in (
        ("ball", dom1, res1),
        (
            "spheroid",
            rasterize(SupportBody.spheroid(1.0, 1.0, 1.5, lmax=4), resolution, quad=quad),
            None,
        ),
    ):
        res = res or _solve(dom, seed, tol)
        fk = faber_krahn_bound(dom.volume)
        fk_ok &= res.mu1 >= fk - 1e-3
        details.append(f"{name}:mu={res.mu1:.4f}>=fk={fk:.4f}")
    checks.append(CheckResult("faber_krahn", fk_ok, " ".join(details)))

    # cylinder bound
    spec = CylinderSpec(radius=1.0, half_height=1.0, axis=[0, 0, 1], center=[0, 0, 0])
    dcyl = rasterize_cylinder(spec, resolution)
    rcyl = _solve(dcyl, seed, tol)
    b = cylinder_bound(1.0, 1.0)
    ok = rcyl.mu1 >= b.mu_lower - 0.02
    checks.append(
        CheckResult(
            "cylinder_bound", ok, f"mu={rcyl.mu1:.4f} lower={b.mu_lower:.4f} M={b.M:.4f}"
        )
    )

    # helicity identity on the eigenfield
    u = res1.eigenfield
    h = helicity(OperatorHandle(dom1), u)
    norm2 = dom1.face_inner(u, u)
    dev = abs(h * res1.mu1 / norm2 - 1.0)
    checks.append(CheckResult("helicity_identity", dev <= 5.0 * tol, f"dev={dev:.3e}"))

    # Hausdorff metric axioms on a body triple
    bodies = [ball, scale(ball, 1.3), SupportBody.spheroid(1.0, 1.1, 0.9, lmax=4)]
    ok = True
    for i, a in enumerate(bodies):
        ok &= hausdorff_distance(a, a, quad) == 0.0
        for j, c in enumerate(bodies):
            dij = hausdorff_distance(a, c, quad)
            ok &= abs(dij - hausdorff_distance(c, a, quad)) <= 1e-12
            for k, e in enumerate(bodies):
                ok &= hausdorff_distance(a, e, quad) <= dij + hausdorff_distance(
                    c, e, quad
                ) + 1e-12
    checks.append(CheckResult("hausdorff_axioms", bool(ok), "triple"))

    # Lipschitz property of the operator distance, nested balls in a box
    box = BoxDomain(box=box_domain([0.0, 0.0, 0.0], 1.0, min(resolution, 16)))
    sub1 = rasterize_on_grid(
        SupportBody.ball(0.5), box.box.origin, box.box.spacing, box.box.dims, quad=quad
    )
    sub2 = rasterize_on_grid(
        SupportBody.ball(0.55), box.box.origin, box.box.spacing, box.box.dims, quad=quad
    )
    sub3 = rasterize_on_grid(
        SupportBody.ball(0.6), box.box.origin, box.box.spacing, box.box.dims, quad=quad
    )
    rep = lipschitz_check(box, sub1, sub2, k=1, seed=seed, tol=tol)
    d12 = gamma_distance(box, sub1, sub2, seed=seed, tol=tol).value
    d23 = gamma_distance(box, sub2, sub3, seed=seed, tol=tol).value
    d13 = gamma_distance(box, sub1, sub3, seed=seed, tol=tol).value
    tri = d13 <= d12 + d23 + 2.0 * tol * max(d12 + d23, 1.0)
    checks.append(
        CheckResult(
            "lipschitz", rep.holds and tri, f"d_gamma={rep.d_gamma:.6f} slack={rep.slack:.3e}"
        )
    )

    return checks, format_report(checks, resolution, seed, tol)


def format_report(checks, resolution, seed, tol) -> str:
    stamp = datetime.now(timezone.utc).isoformat()
    lines = [
        f"# generated {stamp}",
        f"resolution={resolution}",
        f"seed={seed}",
        f"tol={tol:g}",
    ]
    for c in checks:
        lines.append(f"{c.name} {'pass' if c.passed else 'FAIL'} {c.detail}")
    lines.append(f"all_pass={'true' if all(c.passed for c in checks) else 'false'}")
    return "\n".join(lines) + "\n"
