"""Command-line entry point: ``smse radial``, ``smse solve``, ``smse verify``.

Exit codes: 0 success, 1 finished with a warning (hypothesis not met, or a
certification check failed), 2 failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import constants as K
from . import io
from .errors import SMSEError
from .geometry import build_grid, check_mean_convex, domain_from_dict
from .radial import PhysicsParams, fit_radial_dirichlet, integrate_profile
from .solver import ContinuationOptions, continuation_solve
from .verify import certify

log = logging.getLogger("smse")

EXIT_OK, EXIT_WARN, EXIT_FAIL = 0, 1, 2


def thread_cap():
    """Value of SMSE_THREADS (None when unset).

    Assembly is vectorized numpy in one process, so any cap >= 1 is met; the
    value is validated and recorded with the run.
    """
    raw = os.environ.get("SMSE_THREADS")
    if raw is None or raw.strip() == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise SMSEError(f"SMSE_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise SMSEError(f"SMSE_THREADS must be a positive integer, got {raw!r}")
    return n


def _float_list(text):
    if text is None or text.strip() == "":
        return ()
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _fraction(text):
    # accepts 0.03125 as well as 1/32
    try:
        if "/" in text:
            num, den = text.split("/", 1)
            return float(num) / float(den)
        return float(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")


@dataclass
class RunConfig:
    domain: dict
    alpha: float
    h: float
    out: str
    newton_tol: float = K.NEWTON_TOL
    radial_tol: float = K.RADIAL_TOL
    snapshots: tuple = ()
    schedule: tuple | None = None
    allow_nonnegative: bool = False
    verify: bool = True
    plot: bool = True
    threads: int | None = None
    warnings: list = field(default_factory=list)

    def validate(self, domain):
        for name in ("newton_tol", "radial_tol", "h"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise SMSEError(f"{name} must be positive, got {v}")
        if not self.h < domain.diameter / 8:
            raise SMSEError(f"h={self.h:g} must be below diameter/8 = {domain.diameter / 8:.4g}")
        for t in self.snapshots:
            if not 0.0 <= t <= 1.0:
                raise SMSEError(f"snapshot t={t} outside [0, 1]")

    def as_dict(self):
        d = asdict(self)
        d.pop("warnings")
        return {"format": io.FORMAT, **d}


# ---------------------------------------------------------------------------
# plotting
# ---------------------------------------------------------------------------

def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    # deterministic SVG ids and no timestamp
    matplotlib.rcParams["svg.hashsalt"] = "smse"
    return plt


def plot_profile(path, profile):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(profile.r, profile.u, lw=1.5)
    ax.set_xlabel("r")
    ax.set_ylabel("u")
    ax.set_title(f"alpha={profile.params.alpha_t:g}, n={profile.params.n}, R={profile.R:.6g}")
    ax.set_xlim(0, profile.R * 1.02)
    ax.set_ylim(0, None)
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_field(path, u, title=""):
    plt = _pyplot()
    grid = u.grid
    img = np.full((grid.nx, grid.ny), np.nan)
    img[grid.ij[:, 0], grid.ij[:, 1]] = u.values
    x0, y0 = grid.origin
    ext = (x0 - grid.h / 2, x0 + (grid.nx - 0.5) * grid.h,
           y0 - grid.h / 2, y0 + (grid.ny - 0.5) * grid.h)
    fig, ax = plt.subplots(figsize=(5, 4.2))
    im = ax.imshow(img.T, origin="lower", extent=ext, cmap="viridis", interpolation="nearest")
    fig.colorbar(im, ax=ax, label="u")
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# radial
# ---------------------------------------------------------------------------

def cmd_radial(args):
    try:
        params = PhysicsParams(args.alpha, args.n, 1.0, allow_nonnegative=args.allow_positive_alpha)
        extra = {}
        if args.u0 is not None:
            profile = integrate_profile(params, args.u0, args.tol)
        else:
            if args.fit_r is None or args.fit_c is None:
                raise SMSEError("give --u0, or both --fit-r and --fit-c")
            lam, profile = fit_radial_dirichlet(params, args.fit_r, args.fit_c, tol=args.tol)
            extra = {"lambda": lam, "fit_r": args.fit_r, "fit_c": args.fit_c,
                     "fit_residual": profile.height(args.fit_r) - args.fit_c}
    except (SMSEError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_profile(out / "profile.csv", profile, extra)
    if not args.no_plot:
        plot_profile(out / "profile.svg", profile)
    print(f"u0 = {profile.u0:.17g}")
    print(f"R = {profile.R:.17g}")
    if "lambda" in extra:
        print(f"lambda = {extra['lambda']:.17g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _load_domain_doc(path):
    path = Path(path)
    if not path.is_file():
        raise SMSEError(f"domain file {path} not found")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SMSEError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: "
                        f"{exc.msg}") from None


def radial_reference_error(domain, u, alpha):
    """Sup nodal error against the radial solution, for disks with constant phi.

    Returns None for any other configuration.
    """
    doc = domain.source
    phi = doc.get("phi", {})
    if doc.get("shape") != "disk" or phi.get("kind") != "constant" or not alpha < 0:
        return None
    r = float(doc["radius"])
    center = np.asarray(doc.get("center", (0.0, 0.0)), dtype=float)
    _, prof = fit_radial_dirichlet(PhysicsParams(alpha), r, float(phi["value"]))
    rho = np.minimum(np.linalg.norm(u.grid.xy - center, axis=1), r)
    return float(np.max(np.abs(u.values - prof.height(rho))))


def cmd_solve(args):
    try:
        doc = _load_domain_doc(args.domain)
        domain = domain_from_dict(doc)
        cfg = RunConfig(
            domain=doc, alpha=args.alpha, h=args.h, out=str(args.out), newton_tol=args.tol,
            snapshots=args.snapshots, schedule=args.schedule or None,
            allow_nonnegative=args.allow_positive_alpha, verify=not args.no_verify,
            plot=not args.no_plot, threads=thread_cap(),
        )
        cfg.validate(domain)
        PhysicsParams(cfg.alpha, 2, 1.0, allow_nonnegative=cfg.allow_nonnegative)
        grid = build_grid(domain, cfg.h)
    except (SMSEError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL

    convex, kmin = check_mean_convex(domain)
    if not convex:
        cfg.warnings.append(f"domain is not mean convex (min boundary curvature {kmin:.4g}); "
                            "existence is not guaranteed")
    opts = ContinuationOptions(newton_tol=cfg.newton_tol, snapshots=cfg.snapshots,
                               schedule=cfg.schedule)
    try:
        u, trace = continuation_solve(domain, grid, cfg.alpha, opts,
                                      allow_nonnegative=cfg.allow_nonnegative)
    except SMSEError as exc:
        print(f"error: solve failed: {exc}", file=sys.stderr)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        partial = getattr(exc, "trace", None)
        if partial is not None:
            io.write_trace(out / "trace.json", partial, {"status": "failed", "error": str(exc)})
        return EXIT_FAIL

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    params = PhysicsParams(cfg.alpha, 2, 1.0, allow_nonnegative=True)
    io.write_json(out / "domain.json", doc)
    io.write_json(out / "config.json", cfg.as_dict())
    io.write_field(out / "solution.csv", u, params)
    io.write_field(out / "minimal.csv", trace.minimal, params.at(0.0))
    for t, snap in sorted(trace.snapshots.items()):
        (out / "snapshots").mkdir(exist_ok=True)
        io.write_field(out / "snapshots" / f"u_t{t:.6g}.csv", snap, params.at(t))

    summary = {
        "format": io.FORMAT,
        "status": "ok",
        "mean_convex": convex,
        "min_boundary_curvature": kmin,
        "n_active": grid.n_active,
        "accepted_t": trace.accepted_t,
        "final_residual_norm": trace.accepted[-1].final_residual_norm,
        "radial_reference_error": radial_reference_error(domain, u, cfg.alpha),
        "warnings": cfg.warnings,
    }
    code = EXIT_WARN if cfg.warnings else EXIT_OK
    if cfg.verify and cfg.alpha < 0:
        report = certify(domain, grid, cfg.alpha, u, trace.minimal)
        _write_report(out, report)
        summary["certified"] = report.passed
        if not report.passed:
            failed = [c.name for c in report.checks if not c.passed]
            cfg.warnings.append("certification failed: " + ", ".join(failed))
            code = EXIT_WARN
    io.write_trace(out / "trace.json", trace, {"status": "ok"})
    io.write_json(out / "summary.json", summary)
    if cfg.plot:
        plot_field(out / "solution.svg", u, f"alpha={cfg.alpha:g}, h={cfg.h:g}")

    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"solved {grid.n_active} unknowns; residual {summary['final_residual_norm']:.3e}")
    if summary["radial_reference_error"] is not None:
        print(f"error vs radial solution {summary['radial_reference_error']:.3e}")
    return code


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _write_report(out, report):
    io.write_json(out / "report.json", report.as_dict())
    (out / "report.txt").write_text(report.text() + "\n")


def load_run(directory):
    """(domain, grid, alpha, u, v0) from a solve output directory."""
    d = Path(directory)
    if not d.is_dir():
        raise io.FileFormatError(f"output directory {d} not found")
    domain = domain_from_dict(io.read_json(d / "domain.json"))
    meta = io.read_field_metadata(d / "solution.csv")
    grid = build_grid(domain, float(meta["h"]))
    if (grid.nx, grid.ny) != (meta["nx"], meta["ny"]) or \
            not np.allclose(grid.origin, meta["origin"], rtol=0, atol=1e-12 * grid.h):
        raise io.FileFormatError("stored grid does not match the rebuilt grid")
    u = io.read_field(d / "solution.csv", grid)
    v0 = io.read_field(d / "minimal.csv", grid)
    return domain, grid, float(meta["params"]["alpha"]), u, v0


def cmd_verify(args):
    try:
        domain, grid, alpha, u, v0 = load_run(args.run)
    except (SMSEError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if not alpha < 0:
        print("error: certification needs alpha < 0", file=sys.stderr)
        return EXIT_FAIL
    if not np.all(u.values > 0) or not np.all(v0.values > 0):
        print("error: stored fields must be positive", file=sys.stderr)
        return EXIT_FAIL
    report = certify(domain, grid, alpha, u, v0)
    out = Path(args.out) if args.out else Path(args.run)
    out.mkdir(parents=True, exist_ok=True)
    _write_report(out, report)
    print(report.text())
    return EXIT_OK if report.passed else EXIT_WARN


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="smse", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("radial", help="integrate a rotational solution")
    r.add_argument("--alpha", type=float, required=True)
    r.add_argument("--n", type=int, default=2, help="space dimension (default 2)")
    r.add_argument("--u0", type=float, help="apex height")
    r.add_argument("--fit-r", type=float, help="ball radius for the Dirichlet fit")
    r.add_argument("--fit-c", type=float, help="boundary value for the Dirichlet fit")
    r.add_argument("--tol", type=float, default=K.RADIAL_TOL)
    r.add_argument("--allow-positive-alpha", action="store_true")
    r.add_argument("--no-plot", action="store_true")
    r.add_argument("--out", default="radial_out")
    r.set_defaults(func=cmd_radial)

    s = sub.add_parser("solve", help="solve the Dirichlet problem by continuation")
    s.add_argument("--domain", required=True, help="domain JSON file")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--h", type=_fraction, required=True, help="grid spacing, e.g. 0.03125 or 1/32")
    s.add_argument("--snapshots", type=_float_list, default=(), help="t values to store, e.g. 0,0.5,1")
    s.add_argument("--schedule", type=_float_list, default=(),
                   help="fixed continuation t values ending at 1 (default adaptive)")
    s.add_argument("--tol", type=float, default=K.NEWTON_TOL, help="Newton tolerance")
    s.add_argument("--allow-positive-alpha", action="store_true")
    s.add_argument("--no-verify", action="store_true", help="skip certification")
    s.add_argument("--no-plot", action="store_true")
    s.add_argument("--out", default="solve_out")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="certify the estimates for a solve output directory")
    v.add_argument("run", help="directory written by 'smse solve'")
    v.add_argument("--out", help="where to write report.json/report.txt (default: the run)")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SMSEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
