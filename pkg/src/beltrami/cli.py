"""Batch command-line front-end.

Subcommands: solve | optimize | bounds | gamma | verify.  Configuration comes
from flags, optionally overlaid on a plain key=value file (--config); flags
win.  Exit codes: 0 success, 1 configuration error, 2 solver non-convergence.
All randomness flows from the single --seed; outputs are written atomically
and are byte-reproducible except for '#'-prefixed timestamp lines.
"""

import argparse
import csv
import io
import os
import sys
from datetime import datetime, timezone

import numpy as np

from .body import (
    CylinderSpec,
    SupportBody,
    read_body,
    write_body,
)
from .bounds import cylinder_bound, faber_krahn_bound
from .gamma import BoxDomain, gamma_distance, lipschitz_check
from .grid import (
    EmptyDomainError,
    ProjectionError,
    interpolate_to_cells,
    rasterize,
    rasterize_cylinder,
    rasterize_on_grid,
    box_domain,
    write_field,
)
from .quadrature import default_quadrature
from .shapeopt import OptConfig, optimize
from .spectral import NoPositiveEigenvalueError, OperatorHandle, first_positive_mu
from .utils import atomic_write_text
from .verify import run_verify


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; the exit-code contract reserves 2 for
    # solver non-convergence, so parse failures become config errors
    def error(self, message):
        raise ConfigError(message)


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def parse_shape(spec: str):
    """'ball', 'ball:R', 'spheroid:a,b,c' or 'cylinder:R,h'."""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "ball":
            r = float(rest) if rest else 1.0
            if r <= 0:
                raise ConfigError("ball radius must be positive")
            return ("body", SupportBody.ball(r, lmax=4))
        if kind == "spheroid":
            a, b, c = (float(x) for x in rest.split(","))
            return ("body", SupportBody.spheroid(a, b, c, lmax=4))
        if kind == "cylinder":
            r, h = (float(x) for x in rest.split(","))
            return ("cylinder", CylinderSpec(radius=r, half_height=h, axis=[0, 0, 1], center=[0, 0, 0]))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad shape spec {spec!r}: {exc}") from None
    raise ConfigError(f"unknown shape {kind!r} (ball | spheroid:a,b,c | cylinder:R,h)")


def load_config_file(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


def _build_parser() -> _Parser:
    p = _Parser(prog="beltrami", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--shape", default=None, help="ball | ball:R | spheroid:a,b,c | cylinder:R,h")
        sp.add_argument("--body", default=None, help="SUPPORTBODY v1 file")
        sp.add_argument("--resolution", type=int, default=None)
        sp.add_argument("--lmax", type=int, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--axisymmetric", action="store_true", default=None)
        sp.add_argument("--config", default=None, help="key=value file; flags override")

    sp = sub.add_parser("solve", help="first positive curl eigenvalue of one domain")
    common(sp)

    sp = sub.add_parser("optimize", help="descend J = V^(1/3) mu1 over convex bodies")
    common(sp)
    sp.add_argument("--step", type=float, default=None)
    sp.add_argument("--max-iters", type=int, default=None)
    sp.add_argument("--snapshot-every", type=int, default=None)
    sp.add_argument("--fallback", action="store_true", default=None)

    sp = sub.add_parser("bounds", help="closed-form eigenvalue bounds")
    common(sp)
    sp.add_argument("--cylinder", default=None, help="R,h")

    sp = sub.add_parser("gamma", help="operator distance between two domains")
    common(sp)
    sp.add_argument("--pair", default=None, help="shape,shape (e.g. ball:0.5,ball:0.55)")
    sp.add_argument("--k", type=int, default=None)

    sp = sub.add_parser("verify", help="run the invariant suite")
    common(sp)
    sp.add_argument("--quick", action="store_true", default=None)
    return p


_DEFAULTS = {
    "shape": None,
    "body": None,
    "resolution": 32,
    "lmax": 4,
    "seed": 0,
    "tol": 1e-6,
    "out": ".",
    "axisymmetric": False,
    "step": 0.5,
    "max_iters": 10,
    "snapshot_every": 0,
    "fallback": False,
    "cylinder": None,
    "pair": None,
    "k": 1,
    "quick": False,
}

_CASTS = {
    "resolution": int, "lmax": int, "seed": int, "max_iters": int,
    "snapshot_every": int, "k": int, "step": float, "tol": float,
    "axisymmetric": lambda v: v.lower() in ("1", "true", "yes"),
    "fallback": lambda v: v.lower() in ("1", "true", "yes"),
    "quick": lambda v: v.lower() in ("1", "true", "yes"),
}


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(_DEFAULTS)
    if getattr(args, "config", None):
        for k, v in load_config_file(args.config).items():
            key = k.replace("-", "_")
            if key not in cfg:
                raise ConfigError(f"unknown config key {k!r}")
            cfg[key] = _CASTS.get(key, str)(v)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if not 8 <= cfg["resolution"] <= 128:
        raise ConfigError("resolution must be in [8, 128]")
    if not 0 <= cfg["lmax"] <= 12:
        raise ConfigError("lmax must be in [0, 12]")
    if cfg["body"] is not None and not os.path.exists(cfg["body"]):
        raise ConfigError(f"body file not found: {cfg['body']}")
    os.makedirs(cfg["out"], exist_ok=True)
    return cfg


def _domain_from_config(cfg, quad):
    """Returns (kind, body_or_none, domain)."""
    if cfg["body"] is not None:
        body = read_body(cfg["body"])
        return "body", body, rasterize(body, cfg["resolution"], quad=quad)
    kind, obj = parse_shape(cfg["shape"] or "ball")
    if kind == "body":
        return "body", obj, rasterize(obj, cfg["resolution"], quad=quad)
    return "cylinder", None, rasterize_cylinder(obj, cfg["resolution"])


def cmd_solve(cfg) -> int:
    quad = default_quadrature()
    kind, body, dom = _domain_from_config(cfg, quad)
    try:
        res = first_positive_mu(OperatorHandle(dom), seed=cfg["seed"], tol=cfg["tol"])
    except (NoPositiveEigenvalueError, ProjectionError) as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return 2
    if res.residual > cfg["tol"]:
        print(f"solver did not converge: residual {res.residual:.3e}", file=sys.stderr)
        return 2

    lines = [
        f"# generated {_timestamp()}",
        f"mu1={res.mu1:.12g}",
        f"lambda_max={res.lambda_max:.12g}",
        f"residual={res.residual:.6g}",
        f"iterations={res.iterations}",
        f"volume={dom.volume:.12g}",
        f"faber_krahn_bound={faber_krahn_bound(dom.volume):.12g}",
    ]
    if res.negative_branch is not None:
        lines.append(f"mu_minus1={res.negative_branch[0]:.12g}")
    if kind == "cylinder" and cfg["shape"]:
        _, spec = parse_shape(cfg["shape"])
        b = cylinder_bound(spec.radius, spec.half_height)
        lines.append(f"cylinder_M={b.M:.12g}")
        lines.append(f"cylinder_mu_lower={b.mu_lower:.12g}")
        lines.append(f"bound_ok={'true' if res.mu1 >= b.mu_lower - cfg['tol'] else 'false'}")
    out = os.path.join(cfg["out"], "solve_report.txt")
    atomic_write_text(out, "\n".join(lines) + "\n")
    print("\n".join(lines))

    write_field(
        os.path.join(cfg["out"], "eigenfield.bfld"),
        dom,
        interpolate_to_cells(dom, res.eigenfield),
    )
    from .grid import boundary_trace_sq

    tr = boundary_trace_sq(dom, interpolate_to_cells(dom, res.eigenfield))
    b = dom.boundary_faces()
    buf = io.StringIO()
    buf.write(f"# generated {_timestamp()}\n")
    w = csv.writer(buf)
    w.writerow(["x", "y", "z", "axis", "sign", "trace_sq"])
    for i in range(b.n):
        w.writerow(
            [f"{b.center[i,0]:.9g}", f"{b.center[i,1]:.9g}", f"{b.center[i,2]:.9g}",
             int(b.axis[i]), int(b.sign[i]), f"{tr[i]:.9g}"]
        )
    atomic_write_text(os.path.join(cfg["out"], "boundary_trace.csv"), buf.getvalue())
    return 0


def cmd_optimize(cfg) -> int:
    quad = default_quadrature()
    if cfg["body"] is not None:
        initial = read_body(cfg["body"])
    else:
        kind, obj = parse_shape(cfg["shape"] or "ball")
        if kind != "body":
            raise ConfigError("optimize needs a support body (ball or spheroid)")
        initial = obj
    if cfg["axisymmetric"]:
        zonal = np.zeros_like(initial.coeffs)
        from . import sph

        zm = sph.zonal_mask(initial.lmax)
        zonal[zm] = initial.coeffs[zm]
        initial = SupportBody(coeffs=zonal, lmax=initial.lmax, axisymmetric=True)
    if cfg["step"] <= 0:
        # a zero/negative step is representable as "no movement": clamp to a
        # step too small to change any voxel, keeping the trajectory trivial
        opt_step = 1e-12
    else:
        opt_step = cfg["step"]
    oc = OptConfig(
        lmax=initial.lmax,
        axisymmetric=cfg["axisymmetric"],
        resolution=max(cfg["resolution"], 16),
        step=opt_step,
        max_iters=cfg["max_iters"],
        seed=cfg["seed"],
        fallback=cfg["fallback"],
        tol=cfg["tol"],
    )
    try:
        traj = optimize(oc, initial)
    except (NoPositiveEigenvalueError, ProjectionError) as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return 2

    buf = io.StringIO()
    buf.write(f"# generated {_timestamp()}\n")
    buf.write(f"# noise_band={traj.noise_band:.9g} stop={traj.stop_reason}\n")
    w = csv.writer(buf)
    w.writerow(["iter", "J", "mu1", "V", "variance", "min_trace", "step", "accepted"])
    for i, r in enumerate(traj.records):
        w.writerow(
            [i, f"{r.j:.9g}", f"{r.mu1:.9g}", f"{r.volume:.9g}",
             f"{r.variance:.9g}", f"{r.min_trace:.9g}", f"{r.step:.9g}",
             int(r.accepted)]
        )
    atomic_write_text(os.path.join(cfg["out"], "trajectory.csv"), buf.getvalue())

    every = cfg["snapshot_every"]
    for i, r in enumerate(traj.records):
        last = i == len(traj.records) - 1
        if (every > 0 and i % every == 0) or last:
            write_body(os.path.join(cfg["out"], f"body_{i:04d}.txt"), r.body)
    print(f"iterations={len(traj.records)} final_J={traj.records[-1].j:.9g} stop={traj.stop_reason}")
    return 0


def cmd_bounds(cfg) -> int:
    spec_str = cfg["cylinder"]
    if spec_str is None and cfg["shape"] and cfg["shape"].startswith("cylinder"):
        spec_str = cfg["shape"].partition(":")[2]
    if spec_str is None:
        raise ConfigError("bounds needs --cylinder R,h")
    try:
        r, h = (float(x) for x in spec_str.split(","))
    except ValueError:
        raise ConfigError(f"bad cylinder spec {spec_str!r}") from None
    b = cylinder_bound(r, h)
    vol = np.pi * r * r * 2.0 * h
    lines = [
        f"# generated {_timestamp()}",
        f"cylinder_R={r:g}",
        f"cylinder_h={h:g}",
        f"M={b.M:.12g}",
        f"mu_lower={b.mu_lower:.12g}",
        f"volume={vol:.12g}",
        f"faber_krahn_bound={faber_krahn_bound(vol):.12g}",
    ]
    atomic_write_text(os.path.join(cfg["out"], "bounds_report.txt"), "\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_gamma(cfg) -> int:
    if not cfg["pair"]:
        raise ConfigError("gamma needs --pair shape,shape")
    parts = cfg["pair"].split(",")
    if len(parts) != 2:
        raise ConfigError(f"bad pair spec {cfg['pair']!r}")
    quad = default_quadrature()
    bodies = []
    for s in parts:
        kind, obj = parse_shape(s)
        if kind != "body":
            raise ConfigError("gamma pair members must be support bodies")
        bodies.append(obj)
    resolution = min(cfg["resolution"], 24)
    box = BoxDomain(box=box_domain([0.0, 0.0, 0.0], 1.0, resolution))
    subs = []
    for b in bodies:
        try:
            subs.append(
                rasterize_on_grid(b, box.box.origin, box.box.spacing, box.box.dims, quad=quad)
            )
        except EmptyDomainError:
            raise ConfigError("pair member does not intersect the unit box grid") from None
    est = gamma_distance(box, subs[0], subs[1], seed=cfg["seed"], tol=cfg["tol"])
    rep = lipschitz_check(box, subs[0], subs[1], k=cfg["k"], seed=cfg["seed"], tol=cfg["tol"])
    lines = [
        f"# generated {_timestamp()}",
        f"d_gamma={est.value:.12g}",
        f"method={est.method}",
        f"residual={est.residual:.6g}",
        f"grid_spacing={est.spacing:.9g}",
        f"k={cfg['k']}",
        f"sigma_k_1={rep.sigma_1:.12g}",
        f"sigma_k_2={rep.sigma_2:.12g}",
        f"slack={rep.slack:.12g}",
        f"lipschitz_ok={'true' if rep.holds else 'false'}",
    ]
    atomic_write_text(os.path.join(cfg["out"], "gamma_report.txt"), "\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_verify(cfg) -> int:
    resolution = 16 if cfg["quick"] else min(cfg["resolution"], 24)
    checks, report = run_verify(resolution=resolution, seed=cfg["seed"], tol=cfg["tol"])
    atomic_write_text(os.path.join(cfg["out"], "verify_report.txt"), report)
    print(report, end="")
    return 0 if all(c.passed for c in checks) else 1


_COMMANDS = {
    "solve": cmd_solve,
    "optimize": cmd_optimize,
    "bounds": cmd_bounds,
    "gamma": cmd_gamma,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (EmptyDomainError, FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
