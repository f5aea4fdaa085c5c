"""Named verification suites with per-check residuals.

Each suite returns a :class:`SuiteReport`; ``run_suite("all")`` runs every one.
Sizes and tolerances default to the acceptance thresholds.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .charfn import charfn_F, series_F
from .measure import layered_measure, make_discrete_string
from .pareto import (a1_nonexistence_demo, beta1_closed_form, brute_force_frontier,
                     imaginary_axis_gap, optimal_string_small_freq, sample_layered,
                     solve_frontier_point, sweep_frontier)
from .perturbation import (DegenerateEigenvalue, fd_root_derivative, puiseux_leading,
                           simple_eig_derivative)
from .spectra import (SearchRegion, constant_layer_root, cross_validate, single_mass_roots,
                      spectrum_contour, spectrum_poly)


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}  residual={self.residual:.3e}  {self.detail}".rstrip()


@dataclass
class SuiteReport:
    suite: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, residual, detail=""):
        self.checks.append(CheckResult(name, bool(passed), float(residual), detail))

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks]


def _pair_distance(found, expected) -> float:
    """Largest distance from an expected root to its nearest found root."""
    if not expected:
        return 0.0
    if not found:
        return math.inf
    return max(min(abs(f - e) for f in found) for e in expected)


# ---------------------------------------------------------------------------


def suite_spectra(seed: int = 0, cases: int = 50, tol: float = 1e-10) -> SuiteReport:
    """Single point mass: polynomial and contour roots against the closed forms."""
    rep = SuiteReport("spectra")
    rng = np.random.default_rng(seed)
    worst_poly = worst_cont = 0.0
    for k in range(cases):
        ell = rng.uniform(0.5, 2.0)
        m0 = rng.uniform(0.2, 3.0)
        x0 = ell if k % 5 == 0 else rng.uniform(0, ell * 0.95)
        s = make_discrete_string([x0], [m0], ell)
        exact = single_mass_roots(m0, x0, ell)
        poly = [q.omega for q in spectrum_poly(s)]
        box = max(abs(z) for z in exact)
        cont = [q.omega for q in spectrum_contour(
            s, SearchRegion(-2 * box - 1, 2 * box + 1, 1e-3 * min(-z.imag for z in exact), 2 * box + 1))]
        worst_poly = max(worst_poly, _pair_distance(poly, exact))
        worst_cont = max(worst_cont, _pair_distance(cont, exact))
    rep.add("single-mass poly vs closed form", worst_poly < tol, worst_poly, f"{cases} cases")
    rep.add("single-mass contour vs closed form", worst_cont < tol, worst_cont, f"{cases} cases")
    # double root when 4 (l - x0) = m0
    s = make_discrete_string([0.0], [4.0], 1.0)
    poly = spectrum_poly(s)
    cont = spectrum_contour(s, SearchRegion(-1, 1, 0.1, 1))
    ok = (len(poly) == 1 and poly[0].multiplicity == 2 and len(cont) == 1
          and cont[0].multiplicity == 2)
    dist = max(abs(poly[0].omega + 0.5j), abs(cont[0].omega + 0.5j)) if ok else math.inf
    rep.add("double root multiplicity 2", ok and dist < 1e-7, dist, "m0 = 4 at 0, l = 1")
    return rep


def suite_layered(tol: float = 1e-9) -> SuiteReport:
    rep = SuiteReport("layered")
    worst = 0.0
    for c in (2.0, 4.0, 9.0):
        for x0 in (0.0, 0.3):
            exact = [constant_layer_root(c, x0, 1.0, k) for k in range(-3, 4)]
            a_hi = abs(exact[-1].real) + 0.5 * abs(exact[-1].real - exact[-2].real)
            b = -exact[0].imag
            roots = spectrum_contour(layered_measure([[x0, 1.0, c]], 1.0),
                                     SearchRegion(-a_hi, a_hi, 0.5 * b, 1.5 * b))
            got = [q.omega for q in roots]
            d = _pair_distance(got, exact)
            count_ok = len(got) == len(exact)
            worst = max(worst, d if count_ok else math.inf)
    rep.add("constant layer roots |k| <= 3", worst < tol, worst, "c in {2,4,9}, x0 in {0,0.3}")
    return rep


SMALL_FREQ_CASES = ((1.0, 1.0), (2.0, 0.5), (0.5, 3.0))


def suite_small_freq(points: int = 50, tol: float = 1e-6) -> SuiteReport:
    rep = SuiteReport("small-freq")
    for m, ell in SMALL_FREQ_CASES:
        lim = 1 / math.sqrt(m * ell)
        worst_b = worst_s = 0.0
        for a in np.linspace(0, lim, points):
            pt = solve_frontier_point(float(a), m, ell)
            worst_b = max(worst_b, abs(pt.beta - beta1_closed_form(a, m, ell)))
            ref = optimal_string_small_freq(a, m, ell)
            if pt.string.n != ref.n:
                worst_s = math.inf
                continue
            worst_s = max(worst_s, float(np.max(np.abs(pt.string.positions - ref.positions))),
                          float(np.max(np.abs(pt.string.masses - ref.masses))))
        rep.add(f"beta vs beta_1 (m={m}, l={ell})", worst_b < tol, worst_b, f"{points} alphas")
        rep.add(f"string (m_1, a_1) (m={m}, l={ell})", worst_s < tol, worst_s)
    return rep


def suite_brute_force(samples: int = 100_000, n_max: int = 3, seed: int = 0,
                      slack: float = 1e-3) -> SuiteReport:
    rep = SuiteReport("brute-force")
    table = brute_force_frontier(n_max, samples, 1.0, 1.0, seed=seed, slack=slack)
    rep.add("no root below beta_1(alpha) - 1e-3", table.violations == 0, -min(table.worst_gap, 0.0),
            f"{table.samples} strings, min gap {table.worst_gap:.3e}")
    rep.add("alpha = 0 bin respects beta >= 1/m", table.zero_bin_min >= 1.0 - slack,
            max(0.0, 1.0 - table.zero_bin_min), f"{table.zero_bin_count} imaginary roots")
    return rep


STRUCTURE_GRID = tuple(np.round(np.arange(0.1, 4.01, 0.15), 10))


def suite_structure(grid=STRUCTURE_GRID, m: float = 1.0, ell: float = 1.0) -> SuiteReport:
    rep = SuiteReport("structure")
    pts = sweep_frontier(grid, m, ell)
    failed = []
    worst_refl = 0.0
    for p in pts:
        if p.structure is None or not p.structure.ok:
            failed.append((p.alpha, p.structure.failures() if p.structure else ["missing"]))
        if p.structure is not None:
            worst_refl = max(worst_refl, float(p.structure.residuals.get("reflection_residual", 0.0)))
    rep.add("every frontier string passes check_structure", not failed, worst_refl,
            f"{len(pts)} points" + (f", failures {failed[:3]}" if failed else ""))
    return rep


def _random_case(rng):
    """Random measure, a simple root of it and a perturbation direction."""
    ell = 1.0
    if rng.uniform() < 0.6:
        n = int(rng.integers(1, 4))
        base = make_discrete_string(np.sort(rng.uniform(0, ell, n)), rng.uniform(0.2, 1.0, n), ell)
        roots = [q.omega for q in spectrum_poly(base) if q.multiplicity == 1]
    else:
        x0 = rng.uniform(0, 0.5)
        c = rng.uniform(1.5, 6.0)
        pm = [(rng.uniform(0, ell), rng.uniform(0.1, 0.6))]
        base = layered_measure([[x0, ell, c]], ell, point_masses=pm)
        roots = [q.omega for q in spectrum_contour(base, SearchRegion(-6, 6, 0.05, 4))
                 if q.multiplicity == 1]
    if not roots:
        return None
    omega = roots[int(rng.integers(len(roots)))]
    if rng.uniform() < 0.5:
        direction = make_discrete_string([rng.uniform(0, ell)], [1.0], ell)
    else:
        lo = rng.uniform(0, 0.7)
        direction = layered_measure([[lo, lo + 0.3, 1.0]], ell)
    return base, omega, direction


def suite_perturbation(cases: int = 100, seed: int = 0, tol: float = 1e-6) -> SuiteReport:
    rep = SuiteReport("perturbation")
    rng = np.random.default_rng(seed)
    worst, done, skipped = 0.0, 0, 0
    while done < cases:
        case = _random_case(rng)
        if case is None:
            continue
        base, omega, direction = case
        try:
            d = simple_eig_derivative(base, omega, direction)
        except DegenerateEigenvalue:
            skipped += 1
            continue
        fd = fd_root_derivative(base, omega, direction).value
        worst = max(worst, abs(d - fd) / max(abs(fd), 1e-300))
        done += 1
    rep.add("simple derivative vs finite difference", worst < tol, worst,
            f"{cases} cases, {skipped} near-multiple roots redrawn")

    # Puiseux splitting of the double root of 4 delta(x) on [0, 1] along delta(x - 1/2)
    base = make_discrete_string([0.0], [4.0], 1.0)
    direction = make_discrete_string([0.5], [1.0], 1.0)
    omega0 = -0.5j
    c1 = puiseux_leading(base, omega0, direction, 2)
    zetas = np.geomspace(1e-7, 1e-4, 7)
    dist = []
    for z in zetas:
        s = make_discrete_string([0.0, 0.5], [4.0, z], 1.0)
        near = sorted((q.omega for q in spectrum_poly(s)), key=lambda w: abs(w - omega0))[:2]
        dist.append(abs(near[0] - omega0))
    slope = np.polyfit(np.log(zetas), np.log(dist), 1)[0]
    rep.add("Puiseux exponent 1/2", abs(slope - 0.5) <= 0.05, abs(slope - 0.5), f"fitted {slope:.4f}")
    # compare at the smallest zeta, where the O(zeta) correction is negligible
    s = make_discrete_string([0.0, 0.5], [4.0, 1e-7], 1.0)
    near = sorted((q.omega for q in spectrum_poly(s)), key=lambda w: abs(w - omega0))[:2]
    lead = max(min(abs((w - omega0) / math.sqrt(1e-7) - c) for c in c1) / abs(c1[0]) for w in near)
    rep.add("Puiseux leading coefficient", lead < 1e-3, lead, f"c_1 = +-{c1[0]:.6g}")
    return rep


def suite_nonexistence(m: float = 1.0, ell: float = 1.0, samples: int = 10_000,
                       seed: int = 0) -> SuiteReport:
    rep = SuiteReport("nonexistence")
    rows = a1_nonexistence_demo(m, ell, [10.0, 100.0, 1000.0])
    d = [r.distance for r in rows]
    mono = all(d[k + 1] < d[k] for k in range(len(d) - 1))
    rep.add("|omega_0 + i/m| strictly decreasing", mono, d[-1], ", ".join(f"{x:.3e}" for x in d))
    rep.add("|omega_0 + i/m| < 0.05/m at c = 1e3", d[-1] < 0.05 / m, d[-1])
    agree = max(abs(r.omega_formula - r.omega_contour) for r in rows)
    rep.add("closed formula vs contour", agree < 1e-9, agree)
    min_val, min_gap = math.inf, math.inf
    for bp, vals in sample_layered(samples, m, ell, seed=seed):
        at, root = imaginary_axis_gap(bp, vals, m, ell)
        min_val = min(min_val, at)
        min_gap = min(min_gap, root - 1 / m)
    rep.add("no layered string has a root at -i/m", min_val > 0 and min_gap > 0, min_gap,
            f"{samples} samples, min F(-i/m) = {min_val:.3e}")
    return rep


def suite_cross_validation(seed: int = 0, series_cases: int = 1000, spectra_cases: int = 200,
                           tol_series: float = 1e-10, tol_pair: float = 1e-8) -> SuiteReport:
    rep = SuiteReport("cross-validation")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(series_cases):
        n = int(rng.integers(1, 6))
        ell = rng.uniform(0.5, 2.0)
        mass = rng.dirichlet(np.ones(n)) * rng.uniform(0.1, 5.0)
        s = make_discrete_string(rng.uniform(0, ell, n), mass, ell)
        z = complex(*rng.uniform(-1, 1, 2))
        z *= rng.uniform(0, 10) / max(abs(z), 1e-12)
        worst = max(worst, abs(series_F(s, z).F - charfn_F(s, z).F))
    rep.add("series_F vs charfn_F", worst < tol_series, worst, f"{series_cases} cases")
    dmax, unpaired = 0.0, 0
    region = SearchRegion(-5, 5, 0.05, 5)
    for _ in range(spectra_cases):
        n = int(rng.integers(1, 5))
        s = make_discrete_string(rng.uniform(0, 1, n), rng.uniform(0.1, 1.0, n), 1.0)
        cv = cross_validate(s, region, pair_tol=tol_pair)
        dmax = max(dmax, cv.max_distance)
        unpaired += len(cv.unpaired)
    rep.add("polynomial vs contour spectra", unpaired == 0 and dmax < tol_pair, dmax,
            f"{spectra_cases} strings, {unpaired} unpaired")
    return rep


SUITES: dict[str, Callable[[], SuiteReport]] = {
    "spectra": suite_spectra,
    "layered": suite_layered,
    "small-freq": suite_small_freq,
    "brute-force": suite_brute_force,
    "structure": suite_structure,
    "perturbation": suite_perturbation,
    "nonexistence": suite_nonexistence,
    "cross-validation": suite_cross_validation,
}


def run_suite(name: str, seed: int = 0) -> list[SuiteReport]:
    names = list(SUITES) if name == "all" else [name]
    out = []
    for n in names:
        if n not in SUITES:
            raise KeyError(f"unknown suite {n!r}; choose from {', '.join(['all', *SUITES])}")
        fn = SUITES[n]
        t = time.perf_counter()
        kw = {"seed": seed} if "seed" in fn.__code__.co_varnames[:fn.__code__.co_argcount] else {}
        rep = fn(**kw)
        rep.seconds = time.perf_counter() - t
        out.append(rep)
    return out
