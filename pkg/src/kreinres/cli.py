"""Command-line interface: ``kreinres {spectrum,reconstruct,pareto,verify}``.

Exit codes: 0 ok, 1 check failure, 2 input error, 3 infeasible parameters.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .billiard import HyperbolaFrame, InfeasibleParameters, check_structure, hyperbola_point, reconstruct
from .measure import (MeasureError, StringDescription, description_to_dict, load_description,
                      parse_description, serialize_description)
from .spectra import SearchRegion, cross_validate, spectrum_contour

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2, 3

log = logging.getLogger("kreinres")


class InputError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    input: Optional[Path] = None
    output: Optional[Path] = None
    region: Optional[SearchRegion] = None
    grid: Optional[list] = None
    tol: float = 1e-10
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if not self.tol > 0:
            raise InputError("--tol must be positive")
        if self.threads < 1:
            raise InputError("--threads must be at least 1")
        if self.grid is not None and not self.grid:
            raise InputError("--alpha grid is empty")


def parse_region(text: str) -> SearchRegion:
    try:
        a_lo, a_hi, b_lo, b_hi = (float(v) for v in text.split(","))
    except ValueError:
        raise InputError(f"--region expects a_lo,a_hi,b_lo,b_hi, got {text!r}") from None
    try:
        return SearchRegion(a_lo, a_hi, b_lo, b_hi)
    except ValueError as exc:
        raise InputError(f"--region: {exc}") from None


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` with both ends included."""
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise InputError(f"--alpha expects start:stop:step, got {text!r}") from None
    if not step > 0 or stop < start:
        raise InputError("--alpha needs step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 12) for k in range(n)]


def parse_complex(text: str) -> complex:
    try:
        re_, im_ = (float(v) for v in text.split(","))
    except ValueError:
        raise InputError(f"expected RE,IM, got {text!r}") from None
    return complex(re_, im_)


def _load(path: Path) -> StringDescription:
    try:
        desc = load_description(path)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except MeasureError as exc:
        raise InputError(f"{path}: {exc}") from None
    # the description must survive a serialize/parse round trip unchanged
    for fmt in ("json", "toml"):
        again = parse_description(serialize_description(desc, fmt), fmt)
        if description_to_dict(again) != description_to_dict(desc):
            raise InputError(f"{path}: description does not round-trip through {fmt}")
    return desc


def _emit(text: str, output: Optional[Path]) -> None:
    if output is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        output.write_text(text if text.endswith("\n") else text + "\n")


def _root_dict(q) -> dict:
    return q.to_dict()


# ---------------------------------------------------------------------------


def cmd_spectrum(cfg: RunConfig) -> int:
    if cfg.input is None or cfg.region is None:
        raise InputError("spectrum needs --input and --region")
    desc = _load(cfg.input)
    meas = desc.measure
    doc = {"input": description_to_dict(desc),
           "region": [cfg.region.alpha_lo, cfg.region.alpha_hi, cfg.region.beta_lo, cfg.region.beta_hi]}
    code = EXIT_OK
    if meas.is_discrete:
        cv = cross_validate(meas.discrete, cfg.region, tol=cfg.tol)
        doc["contour"] = [_root_dict(q) for q in cv.contour]
        doc["poly"] = [_root_dict(q) for q in cv.poly]
        doc["cross_validation"] = {"ok": cv.ok, "max_distance": cv.max_distance,
                                   "unpaired": [[src, q.omega.real, q.omega.imag] for src, q in cv.unpaired]}
        if not cv.ok:
            log.error("polynomial and contour spectra disagree: %s", cv.unpaired)
            code = EXIT_CHECK
    else:
        doc["contour"] = [_root_dict(q) for q in spectrum_contour(meas, cfg.region, cfg.tol)]
    _emit(json.dumps(doc, indent=2), cfg.output)
    return code


def _plot_files(recon, stem: Path) -> list[Path]:
    traj = list(recon.trajectory.values) + [recon.trajectory.phi_l]
    tpath = stem.with_name(stem.name + "_trajectory.dat")
    tpath.write_text("".join(f"{float(z.real)!r} {float(z.imag)!r}\n" for z in traj))
    s = recon.s_values
    lo = min(float(np.min(s)), 0.0) if len(s) else -1.0
    hi = max(float(np.max(s)), 0.0) if len(s) else 1.0
    pad = 0.25 * max(hi - lo, 1.0)
    grid = np.linspace(lo - pad, hi + pad, 401)
    lines = []
    for branch in (1, -1):
        for v in grid:
            z = hyperbola_point(recon.frame, float(v), branch)
            lines.append(f"{float(z.real)!r} {float(z.imag)!r}\n")
        lines.append("\n")
    hpath = stem.with_name(stem.name + "_hyperbola.dat")
    hpath.write_text("".join(lines))
    return [tpath, hpath]


def cmd_reconstruct(cfg: RunConfig, omega: complex, m1: float, xi: float,
                    budget: Optional[float], ell: Optional[float]) -> int:
    if cfg.input is not None:
        desc = _load(cfg.input)
        ell = desc.measure.ell if ell is None else ell
        if budget is None and desc.budget is not None:
            budget = desc.budget.m
    if budget is None or ell is None:
        raise InputError("reconstruct needs the budget and length (flags or --input)")
    if not (omega.real > 0 and omega.imag < 0):
        raise InputError("reconstruct needs Re omega > 0 and Im omega < 0")
    try:
        frame = HyperbolaFrame(xi)
    except ValueError as exc:
        raise InputError(f"--xi: {exc}") from None
    try:
        recon = reconstruct(omega, m1, frame, ell, budget)
    except InfeasibleParameters as exc:
        _emit(json.dumps({"infeasible": exc.certificate()}, indent=2, default=str), cfg.output)
        return EXIT_INFEASIBLE
    except ValueError as exc:
        raise InputError(str(exc)) from None
    rep = check_structure(recon)
    doc = recon.to_dict()
    doc["structure"] = rep.to_dict()
    if cfg.output is not None:
        doc["plot_files"] = [p.name for p in _plot_files(recon, cfg.output.with_suffix(""))]
    _emit(json.dumps(doc, indent=2, default=str), cfg.output)
    if not rep.ok:
        log.error("structure checks failed: %s", ", ".join(rep.failures()))
        return EXIT_CHECK
    return EXIT_OK


def cmd_pareto(cfg: RunConfig, m: float, ell: float, empirical: int = 0, n_max: int = 3) -> int:
    from .pareto import (FrontierError, brute_force_frontier, empirical_csv, frontier_csv,
                         jump_flags, sweep_frontier)
    if not (m > 0 and ell > 0):
        raise InputError("--mass and --length must be positive")
    if empirical:
        width = 0.02 / math.sqrt(m * ell)
        hi = max(cfg.grid) if cfg.grid else 1 / math.sqrt(m * ell)
        edges = np.arange(0, hi + 0.5 * width, width)
        if len(edges) < 2:
            edges = np.array([0.0, width])
        table = brute_force_frontier(n_max, empirical, m, ell, alpha_bins=edges, seed=cfg.seed)
        _emit(empirical_csv(table), cfg.output)
        return EXIT_OK
    if cfg.grid is None:
        raise InputError("pareto needs --alpha start:stop:step")
    try:
        pts = sweep_frontier(cfg.grid, m, ell, threads=cfg.threads, rng_seed=cfg.seed)
    except FrontierError as exc:
        log.error("%s", exc)
        return EXIT_CHECK
    for p, flag in zip(pts, jump_flags(pts)):
        if flag:
            log.warning("beta jumps at alpha = %g (chart switch)", p.alpha)
    _emit(frontier_csv(pts), cfg.output)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, suite: str) -> int:
    from .verify import run_suite
    try:
        reports = run_suite(suite, seed=cfg.seed)
    except KeyError as exc:
        raise InputError(str(exc.args[0])) from None
    lines = []
    for rep in reports:
        lines.append(f"[{rep.suite}] {'ok' if rep.ok else 'FAILED'} ({rep.seconds:.1f} s)")
        lines.extend("  " + ln for ln in rep.lines())
    _emit("\n".join(lines), cfg.output)
    return EXIT_OK if all(r.ok for r in reports) else EXIT_CHECK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", type=Path, help="string description (.toml or .json)")
    common.add_argument("--output", type=Path, help="output file (default stdout)")
    common.add_argument("--tol", type=float, default=1e-10)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="kreinres", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectrum", parents=[common], help="quasi-eigenvalues in a region")
    sp.add_argument("--region", required=True, help="a_lo,a_hi,b_lo,b_hi for omega = a - i b")

    rp = sub.add_parser("reconstruct", parents=[common], help="billiard reconstruction")
    rp.add_argument("--omega", required=True, help="RE,IM (Re > 0, Im < 0)")
    rp.add_argument("--m1", type=float, required=True)
    rp.add_argument("--xi", type=float, required=True, help="arg of the normal p, in [-pi/2, pi/2)")
    rp.add_argument("--mass", type=float, help="budget m (overrides the input file)")
    rp.add_argument("--length", type=float, help="l (overrides the input file)")

    pp = sub.add_parser("pareto", parents=[common], help="frontier beta_min(alpha) as CSV")
    pp.add_argument("--alpha", help="start:stop:step, both ends included")
    pp.add_argument("--mass", type=float, default=1.0)
    pp.add_argument("--length", type=float, default=1.0)
    pp.add_argument("--empirical", type=int, default=0, metavar="SAMPLES",
                    help="write the brute-force empirical frontier instead")
    pp.add_argument("--n-max", type=int, default=3)

    vp = sub.add_parser("verify", parents=[common], help="run verification suites")
    vp.add_argument("--suite", default="all")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig(args.command, args.input, args.output,
                        parse_region(args.region) if getattr(args, "region", None) else None,
                        parse_grid(args.alpha) if getattr(args, "alpha", None) else None,
                        args.tol, args.seed, args.threads)
        if args.command == "spectrum":
            return cmd_spectrum(cfg)
        if args.command == "reconstruct":
            return cmd_reconstruct(cfg, parse_complex(args.omega), args.m1, args.xi,
                                   args.mass, args.length)
        if args.command == "pareto":
            return cmd_pareto(cfg, args.mass, args.length, args.empirical, args.n_max)
        return cmd_verify(cfg, args.suite)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
