"""Frontier of minimal decay rate beta_min(alpha) under a total-mass budget.

Small frequencies use closed forms.  Larger frequencies are solved on charts
of the billiard reconstruction: for a fixed number of masses ``n`` and a
fixed termination type the parameters ``(beta, m_1, xi)`` must zero three
real residuals, which a damped Newton iteration does from a multi-start grid.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.stats import qmc

from .billiard import (HyperbolaFrame, InfeasibleParameters, Reconstruction, StructureReport,
                       case1_frame, check_structure, inner, ray_hyperbola_intersect,
                       reconstruct)
from .charfn import _cached_grid, charfn_F, march, phi_at_vertices
from .measure import DiscreteString, layered_measure, make_discrete_string
from .spectra import SearchRegion, constant_layer_root, spectrum_contour

log = logging.getLogger(__name__)

CLUSTER_ALPHA = 1e-7


class FrontierError(RuntimeError):
    """No candidate passed the feasibility and structure checks."""


def _validity_limit(m: float, ell: float) -> float:
    return 1.0 / math.sqrt(m * ell)


def beta1_closed_form(alpha: float, m: float, ell: float) -> float:
    """Minimal decay rate in the small-frequency range |alpha| <= (m l)^(-1/2)."""
    a = abs(alpha)
    if a > _validity_limit(m, ell) * (1 + 1e-12):
        raise ValueError(f"|alpha| = {a} exceeds (m l)^(-1/2) = {_validity_limit(m, ell)}")
    if a == 0:
        return 1.0 / m
    thr = 1 / (m * ell) - 1 / (4 * ell * ell)
    if a * a >= thr:
        return 1 / (2 * ell)
    return 1 / m + math.sqrt(1 / m ** 2 - a * a)


def optimal_string_small_freq(alpha: float, m: float, ell: float) -> DiscreteString:
    a = abs(alpha)
    if a > _validity_limit(m, ell) * (1 + 1e-12):
        raise ValueError(f"|alpha| = {a} exceeds (m l)^(-1/2)")
    if a == 0:
        return make_discrete_string([ell], [m], ell)
    thr = 1 / (m * ell) - 1 / (4 * ell * ell)
    if a * a >= thr:
        return make_discrete_string([0.0], [1 / (1 / (4 * ell) + a * a * ell)], ell)
    a1 = ell - 1 / (2 / m + 2 * math.sqrt(1 / m ** 2 - a * a))
    return make_discrete_string([a1], [m], ell)


# ---------------------------------------------------------------------------
# Charts


@dataclass(frozen=True)
class Chart:
    """``n`` masses; ``terminal`` means the last one sits at l."""

    n: int
    terminal: bool

    def label(self) -> str:
        return f"n={self.n}{'T' if self.terminal else 'F'}"


@dataclass(frozen=True)
class ChartState:
    chart: Chart
    beta: float
    m1: float
    xi: float


def chart_string(chart: Chart, alpha: float, beta: float, m1: float, xi: float,
                 m: float, ell: float):
    """Residuals and string of a chart, or ``None`` outside the chart's domain."""
    if not (beta > 0 and 0 < m1 and -math.pi / 2 < xi < math.pi / 2):
        return None
    om = complex(alpha, -beta)
    w2 = om * om
    frame = HyperbolaFrame(xi)
    p = frame.p
    phi, v, x, br = 1 + 0j, -w2 * m1, 0.0, 1
    pos, mas = [0.0], [m1]
    n_int = chart.n - 1 - (1 if chart.terminal else 0)
    for _ in range(n_int):
        hit = ray_hyperbola_intersect(phi, v, frame, br)
        if hit is None or x + hit.t >= ell or hit.branch != -br:
            return None
        x += hit.t
        phi = hit.point
        mj = inner(2 * phi * v, p) / inner(w2 * phi * phi, p)
        if not mj > 0:
            return None
        pos.append(x)
        mas.append(mj)
        v = v - w2 * phi * mj
        br = hit.branch
    if chart.terminal:
        hit = ray_hyperbola_intersect(phi, v, frame, br)
        if hit is None:
            return None
        phi_l = phi + (ell - x) * v
        mn = v / (w2 * phi_l) - 1j / om
        res = np.array([(x + hit.t - ell) / ell, mn.imag / m, (sum(mas) + mn.real - m) / m])
        return res, pos + [ell], mas + [mn.real]
    s = make_discrete_string(pos, mas, ell)
    if s.n != len(pos):
        return None
    F = charfn_F(s, om).F
    return np.array([F.real, F.imag, (sum(mas) - m) / m]), pos, mas


def _damped_newton(fun, x0, lo, hi, tol=1e-14, maxit=80):
    x = np.array(x0, dtype=float)
    r = fun(x)
    if r is None:
        return None
    nr = np.linalg.norm(r)
    for _ in range(maxit):
        if nr < tol:
            return x
        J = np.empty((len(r), len(x)))
        for k in range(len(x)):
            h = 1e-7 * max(1.0, abs(x[k]))
            xp, xm = x.copy(), x.copy()
            xp[k] += h
            xm[k] -= h
            rp, rm = fun(xp), fun(xm)
            if rp is not None and rm is not None:
                J[:, k] = (rp - rm) / (2 * h)
            elif rp is not None:
                J[:, k] = (rp - r) / h
            elif rm is not None:
                J[:, k] = (r - rm) / h
            else:
                return None
        dx = np.linalg.lstsq(J, -r, rcond=None)[0]
        lam = 1.0
        while lam > 1e-8:
            xn = np.clip(x + lam * dx, lo, hi)
            rn = fun(xn)
            if rn is not None and np.linalg.norm(rn) < (1 - 1e-4 * lam) * nr:
                break
            lam *= 0.5
        else:
            return x if nr < 1e-11 else None
        if np.linalg.norm(xn - x) < 1e-16 * max(1.0, np.linalg.norm(x)) and nr < 1e-11:
            return xn
        x, r, nr = xn, rn, np.linalg.norm(rn)
    return x if nr < 1e-11 else None


# ---------------------------------------------------------------------------


@dataclass
class ParetoPoint:
    alpha: float
    beta: float
    string: DiscreteString
    source: str
    boundary_residual: float
    mass_residual: float
    reconstruction: Optional[Reconstruction] = None
    structure: Optional[StructureReport] = None
    chart_state: Optional[ChartState] = None
    candidates: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.string.n


def _point_from_recon(alpha, beta, recon: Reconstruction, source, state=None) -> ParetoPoint:
    rep = check_structure(recon)
    return ParetoPoint(alpha, beta, recon.string, source, abs(recon.boundary_residual),
                       recon.mass_residual, recon, rep, state)


def _closed_form_candidates(alpha: float, m: float, ell: float) -> list:
    out = []
    # one mass at 0 with decay 1/(2l): needs m_1 <= m
    m1 = 1 / (1 / (4 * ell) + alpha * alpha * ell)
    if m1 <= m * (1 + 1e-12):
        m1 = min(m1, m)
        om = complex(alpha, -1 / (2 * ell))
        try:
            rec = reconstruct(om, m1, HyperbolaFrame(-math.pi / 2), ell, m, circle_tol=1e-13)
            out.append(("closed_form", 1 / (2 * ell), rec, None))
        except InfeasibleParameters as exc:
            log.debug("single mass at 0 rejected: %s", exc.reason)
    # one mass m on the circle |omega + i/m| = 1/m
    if alpha <= 1 / m:
        r = math.sqrt(max(0.0, 1 / m ** 2 - alpha * alpha))
        for beta in sorted({1 / m - r, 1 / m + r}):
            if beta <= 0:
                continue
            a1 = ell - 1 / (2 * beta)
            if not (0 <= a1 < ell):
                continue
            om = complex(alpha, -beta)
            try:
                rec = reconstruct(om, m, case1_frame(om, m, ell - a1), ell, m, circle_tol=1e-9)
                out.append(("closed_form", beta, rec, None))
            except InfeasibleParameters as exc:
                log.debug("circle candidate rejected: %s", exc.reason)
    # two masses, degenerate frame: Re omega^2 = 1/(m_1 l), a_2 = l
    disc = alpha ** 4 * ell ** 2 - alpha ** 2
    if disc >= 0:
        for beta in (alpha * alpha * ell - math.sqrt(disc), alpha * alpha * ell + math.sqrt(disc)):
            if not (0 < beta < alpha):
                continue
            m1 = 1 / (ell * (alpha * alpha - beta * beta))
            m2 = beta / (alpha * alpha + beta * beta)
            if m1 + m2 > m * (1 + 1e-12):
                continue
            try:
                rec = reconstruct(complex(alpha, -beta), m1, HyperbolaFrame(-math.pi / 2), ell, m,
                                  end_tol=1e-9)
                if rec.n == 2:
                    out.append(("closed_form", beta, rec, None))
            except InfeasibleParameters as exc:
                log.debug("degenerate two-mass candidate rejected: %s", exc.reason)
    return out


def _bracketing_seeds(R: np.ndarray, grid, limit: int = 40) -> list:
    """Centres of grid cells where every residual component changes sign.

    Sorted by the smallest corner residual; cells with an undefined corner are
    kept when the defined corners still bracket.
    """
    corners = [R[i:R.shape[0] - 1 + i, j:R.shape[1] - 1 + j, k:R.shape[2] - 1 + k]
               for i in (0, 1) for j in (0, 1) for k in (0, 1)]
    C = np.stack(corners)
    defined = np.isfinite(C)
    lo = np.where(defined, C, np.inf).min(axis=0)
    hi = np.where(defined, C, -np.inf).max(axis=0)
    br = np.all((lo <= 0) & (hi >= 0), axis=-1)
    norm = np.where(defined.all(axis=-1), np.linalg.norm(np.nan_to_num(C), axis=-1), np.inf).min(axis=0)
    idx = np.argwhere(br & np.isfinite(norm))
    idx = sorted(idx.tolist(), key=lambda t: norm[tuple(t)])[:limit]
    out = []
    for ib, im, ix in idx:
        out.append(np.array([0.5 * (grid[0][ib] + grid[0][ib + 1]),
                             0.5 * (grid[1][im] + grid[1][im + 1]),
                             0.5 * (grid[2][ix] + grid[2][ix + 1])]))
    return out


def _xi_of_normal(d: complex) -> float:
    """Angle in [-pi/2, pi/2) of a unit normal to the direction d."""
    xi = math.atan2(d.real, -d.imag)        # phase of i d up to sign
    while xi >= math.pi / 2:
        xi -= math.pi
    while xi < -math.pi / 2:
        xi += math.pi
    return xi


def _string_seeds(chart: Chart, alpha: float, m: float, ell: float, rng,
                  samples: int = 3000, keep: int = 8, window: float = 0.05) -> list:
    """Chart coordinates of random strings of the chart's shape with a root near alpha.

    The strings use the full budget, put a_1 = 0 and (terminal charts) a_n = l.
    """
    n = chart.n
    pos = np.sort(rng.uniform(0, ell, (samples, n)), axis=1)
    pos[:, 0] = 0.0
    if chart.terminal:
        pos[:, -1] = ell
    mu = rng.dirichlet(np.ones(n), samples) * m
    G = _mirror_poly_batch(pos, mu, ell)
    if chart.terminal:
        G = G[:, :-1]
    G = G[np.abs(G[:, -1]) > 1e-300]
    if G.shape[1] < 2:
        return []
    keep_rows = np.flatnonzero(np.abs(G[:, -1]) > 0)
    roots = _batch_roots(G[keep_rows]) * 1j
    near = (np.abs(roots.real - alpha) < window * max(alpha, 1.0)) & (roots.imag < 0)
    rows, cols = np.nonzero(near)
    if rows.size == 0:
        return []
    order = np.argsort(-roots.imag[rows, cols])
    out, used = [], set()
    for k in order:
        r = keep_rows[rows[k]]
        if r in used:
            continue
        used.add(r)
        om = complex(roots[rows[k], cols[k]])
        s = make_discrete_string(pos[r], mu[r], ell)
        if s.n != n:
            continue
        ph = phi_at_vertices(s, om).values
        xi = _xi_of_normal(complex(ph[1] ** 2 - 1))
        out.append(np.array([-om.imag, mu[r, 0], xi]))
        if len(out) >= keep:
            break
    return out



def _chart_candidates(alpha, m, ell, beta_cap, charts, seeds, grid_shape, rng):
    out = []
    lo = np.array([1e-9, 1e-9, -math.pi / 2 + 1e-9])
    hi = np.array([beta_cap, m, math.pi / 2 - 1e-9])
    for chart in charts:
        def fun(q, chart=chart):
            got = chart_string(chart, alpha, q[0], q[1], q[2], m, ell)
            return None if got is None else got[0]

        starts = [np.array([s.beta, s.m1, s.xi]) for s in seeds if s.chart == chart]
        nb, nm, nx = grid_shape
        # optimal frames crowd toward the degenerate normal as beta shrinks
        betas = beta_cap * np.geomspace(1e-3, 1.0, nb + 1)[1:] * (1 - 1e-6)
        m1s = (np.arange(nm) + 0.5) / nm * m
        xis = -0.5 * math.pi * np.cos(math.pi * (np.arange(nx) + 0.5) / nx)
        grid = (betas, m1s, xis)
        R = np.full((nb, nm, nx, 3), np.nan)
        for ib, b in enumerate(betas):
            for im, m1 in enumerate(m1s):
                for ix, xi in enumerate(xis):
                    r = fun((b, m1, xi))
                    if r is not None:
                        R[ib, im, ix] = r
        starts += _bracketing_seeds(R, grid)
        starts += _string_seeds(chart, alpha, m, ell, rng)
        seen = []
        for q0 in starts:
            q = _damped_newton(fun, q0, lo, hi)
            if q is None or any(np.allclose(q, s, atol=1e-9) for s in seen):
                continue
            seen.append(q)
            state = ChartState(chart, float(q[0]), float(q[1]), float(q[2]))
            try:
                rec = reconstruct(complex(alpha, -q[0]), q[1], HyperbolaFrame(float(q[2])), ell, m,
                                  end_tol=1e-9, force_terminal=chart.terminal)
            except InfeasibleParameters as exc:
                log.debug("chart %s solution rejected: %s", chart.label(), exc.reason)
                continue
            if rec.n != chart.n:
                continue
            out.append(("chart_solver", float(q[0]), rec, state))
    return out


def solve_frontier_point(alpha: float, m: float, ell: float,
                         seed: Optional[Sequence[ChartState]] = None,
                         n_chart_max: int = 4, grid_shape=(12, 10, 20),
                         rng_seed: int = 0) -> ParetoPoint:
    """Smallest decay rate at frequency alpha over strings of mass at most m."""
    if not (m > 0 and ell > 0):
        raise ValueError("m and ell must be positive")
    if alpha < 0:
        pt = solve_frontier_point(-alpha, m, ell, seed, n_chart_max, grid_shape, rng_seed)
        pt.alpha = alpha
        return pt
    if alpha == 0:
        s = make_discrete_string([ell], [m], ell)
        F = charfn_F(s, complex(0, -1 / m)).F
        return ParetoPoint(0.0, 1 / m, s, "closed_form", abs(F), 0.0)

    cands = _closed_form_candidates(alpha, m, ell)
    # multi-mass strings need Re omega^2 >= 1/(m l)
    if alpha * alpha > 1 / (m * ell):
        cap = math.sqrt(alpha * alpha - 1 / (m * ell))
        best_closed = min((c[1] for c in cands), default=math.inf)
        cap = min(cap, best_closed * (1 + 1e-9))
        charts = [Chart(n, t) for n in range(2, n_chart_max + 1) for t in (True, False)]
        rng = np.random.default_rng(rng_seed)
        cands += _chart_candidates(alpha, m, ell, cap, charts, list(seed or ()), grid_shape, rng)

    points = []
    for source, beta, rec, state in cands:
        pt = _point_from_recon(alpha, beta, rec, source, state)
        if pt.structure.ok:
            points.append(pt)
        else:
            log.debug("candidate beta=%.6g failed checks %s", beta, pt.structure.failures())
    if not points:
        raise FrontierError(f"no feasible candidate at alpha = {alpha}")
    points.sort(key=lambda p: p.beta)
    best = points[0]
    best.candidates = [(p.beta, p.source, p.n) for p in points]
    return best


def _solve_indexed(args):
    i, a, m, ell, kw = args
    try:
        return solve_frontier_point(a, m, ell, **kw)
    except FrontierError as exc:
        raise FrontierError(f"grid index {i} (alpha = {a}): {exc}") from None


def sweep_frontier(alpha_grid: Iterable[float], m: float, ell: float, threads: int = 1,
                   **kw) -> list[ParetoPoint]:
    """Frontier points along a grid.

    With one thread each point is seeded by its neighbour's chart state.  With
    several, points are solved independently in a process pool and returned in
    grid order, so output depends only on the grid and the thread count.
    """
    grid = [float(a) for a in alpha_grid]
    if threads > 1 and len(grid) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_solve_indexed, [(i, a, m, ell, kw) for i, a in enumerate(grid)]))
    out, seeds = [], []
    for i, a in enumerate(grid):
        try:
            pt = solve_frontier_point(a, m, ell, seed=seeds, **kw)
        except FrontierError as exc:
            raise FrontierError(f"grid index {i} (alpha = {a}): {exc}") from None
        out.append(pt)
        if pt.chart_state is not None:
            seeds = [pt.chart_state]
    return out


def jump_flags(points: Sequence[ParetoPoint], factor: float = 10.0) -> list[bool]:
    """True where the step in beta exceeds ``factor`` times the median step (chart switch)."""
    if len(points) < 3:
        return [False] * len(points)
    d = np.abs(np.diff([p.beta for p in points]))
    ref = float(np.median(d))
    return [False] + [bool(x > factor * ref and x > 1e-12) for x in d]


# ---------------------------------------------------------------------------
# Brute-force oracle


def _mirror_poly_batch(pos: np.ndarray, mu: np.ndarray, ell: float) -> np.ndarray:
    """Coefficients (ascending) of G(w) = F(i w) for a batch of n-mass strings."""
    S, n = pos.shape
    deg = 2 * n + 1
    phi = np.zeros((S, deg))
    phi[:, 0] = 1.0
    slope = np.zeros((S, deg))
    moment = np.zeros((S, deg))
    x = pos[:, :1]
    for j in range(n):
        phi = phi + (pos[:, j:j + 1] - x) * slope
        x = pos[:, j:j + 1]
        moment = moment + mu[:, j:j + 1] * phi
        slope = np.zeros_like(moment)
        slope[:, 2:] = moment[:, :-2]
    phi = phi + (ell - x) * slope
    G = phi.copy()
    G[:, 1:] += moment[:, :-1]
    return G


def _batch_roots(G: np.ndarray) -> np.ndarray:
    """Roots of each row (ascending coefficients, leading coefficient nonzero)."""
    d = G.shape[1] - 1
    lead = G[:, -1:]
    comp = np.zeros((G.shape[0], d, d))
    comp[:, 0, :] = -G[:, -2::-1] / lead
    comp[:, np.arange(1, d), np.arange(d - 1)] = 1.0
    return np.linalg.eigvals(comp)


def sample_strings(n_max: int, samples: int, m: float, ell: float, seed: int = 0):
    """Scrambled-Sobol strings: uniform positions, Dirichlet masses times U(0, m) total.

    Yields ``(n, positions, masses)`` batches grouped by n.
    """
    dim = 2 * n_max + 2
    sob = qmc.Sobol(dim, scramble=True, seed=seed)
    u = sob.random_base2(max(0, math.ceil(math.log2(samples))))[:samples]
    u = np.clip(u, 1e-15, 1 - 1e-15)
    n = 1 + np.minimum((u[:, 0] * n_max).astype(int), n_max - 1)
    total = u[:, 1] * m
    pos = u[:, 2:2 + n_max] * ell
    gam = -np.log(u[:, 2 + n_max:2 + 2 * n_max])
    for k in range(1, n_max + 1):
        sel = n == k
        if not np.any(sel):
            continue
        g = gam[sel, :k]
        w = g / g.sum(axis=1, keepdims=True) * total[sel, None]
        order = np.argsort(pos[sel, :k], axis=1)
        p_sorted = np.take_along_axis(pos[sel, :k], order, axis=1)
        w_sorted = np.take_along_axis(w, order, axis=1)
        yield k, p_sorted, w_sorted


@dataclass
class EmpiricalFrontier:
    centers: np.ndarray
    min_beta: np.ndarray            # nan marks an empty bin
    counts: np.ndarray
    zero_bin_min: float             # min beta among purely imaginary roots
    zero_bin_count: int
    violations: int                 # roots below beta_1(alpha) - slack inside the validity range
    worst_gap: float                # min over roots of beta - beta_1(alpha)
    samples: int

    def rows(self):
        yield (0.0, self.zero_bin_min, self.zero_bin_count)
        for c, b, k in zip(self.centers, self.min_beta, self.counts):
            yield (float(c), float(b), int(k))


def brute_force_frontier(n_max: int, samples: int, m: float, ell: float,
                         alpha_bins: Optional[np.ndarray] = None, seed: int = 0,
                         slack: float = 1e-3, batch: int = 20000) -> EmpiricalFrontier:
    """Empirical lower envelope of decay rates over random point-mass strings.

    Roots whose |Re| is below the polynomial cluster radius count as purely
    imaginary and go to the alpha = 0 bin.
    """
    if n_max > 4 or n_max < 1:
        raise ValueError("n_max must be in 1..4")
    lim = _validity_limit(m, ell)
    if alpha_bins is None:
        width = 0.02 * lim
        alpha_bins = np.linspace(0, lim, int(round(lim / width)) + 1)
    edges = np.asarray(alpha_bins, dtype=float)
    nb = len(edges) - 1
    min_beta = np.full(nb, np.inf)
    counts = np.zeros(nb, dtype=int)
    zmin, zcount = math.inf, 0
    violations, worst = 0, math.inf
    b1 = np.vectorize(lambda a: beta1_closed_form(a, m, ell))
    done = 0
    for k, pos, mu in sample_strings(n_max, samples, m, ell, seed):
        for s0 in range(0, len(pos), batch):
            G = _mirror_poly_batch(pos[s0:s0 + batch], mu[s0:s0 + batch], ell)
            G = G[:, :2 * k + 1]
            ok = G[:, -1] > 0
            roots = _batch_roots(G[ok]) * 1j
            om = roots.ravel()
            om = om[np.isfinite(om)]
            alpha = om.real
            beta = -om.imag
            imag_axis = np.abs(alpha) <= CLUSTER_ALPHA * (1 + np.abs(om))
            if np.any(imag_axis):
                zmin = min(zmin, float(beta[imag_axis].min()))
                zcount += int(imag_axis.sum())
            sel = (~imag_axis) & (alpha > 0)
            a, b = alpha[sel], beta[sel]
            idx = np.searchsorted(edges, a, side="right") - 1
            inside = (idx >= 0) & (idx < nb)
            np.minimum.at(min_beta, idx[inside], b[inside])
            np.add.at(counts, idx[inside], 1)
            rng_sel = a <= lim
            if np.any(rng_sel):
                gap = b[rng_sel] - b1(a[rng_sel])
                worst = min(worst, float(gap.min()))
                violations += int(np.sum(gap < -slack))
            if np.any(imag_axis):
                gap0 = beta[imag_axis] - 1 / m
                worst = min(worst, float(gap0.min()))
                violations += int(np.sum(gap0 < -slack))
            done += len(G)
    min_beta[counts == 0] = np.nan
    centers = 0.5 * (edges[:-1] + edges[1:])
    return EmpiricalFrontier(centers, min_beta, counts, zmin, zcount, violations, worst, done)


# ---------------------------------------------------------------------------
# Zero frequency with absolutely continuous strings


@dataclass
class NonexistenceRow:
    c: float
    x0: float
    omega_formula: complex
    omega_contour: complex
    distance: float                 # |omega_0 + i/m|


def a1_nonexistence_demo(m: float, ell: float, c_list: Sequence[float]) -> list[NonexistenceRow]:
    """Decay of the k = 0 root toward -i/m along layers c on [l - m/c, l]."""
    rows = []
    for c in c_list:
        if not (c > 1 and m < c * ell):
            raise ValueError(f"need c > 1 and m < c l, got c = {c}")
        x0 = ell - m / c
        om = constant_layer_root(c, x0, ell)
        beta = -om.imag
        meas = layered_measure([[x0, ell, c]], ell)
        width = min(0.5 * beta, 0.5 / ((ell - x0) * math.sqrt(c)))
        roots = spectrum_contour(meas, SearchRegion(-width, width, beta - width, beta + width))
        near = min(roots, key=lambda q: abs(q.omega - om)).omega if roots else complex("nan")
        rows.append(NonexistenceRow(c, x0, om, near, abs(om + 1j / m)))
    return rows


def imaginary_axis_gap(breakpoints: np.ndarray, values: np.ndarray, m: float, ell: float,
                       n_grid: int = 400) -> tuple[float, float]:
    """For a layered string, (F(-i/m), smallest beta > 0 with F(-i beta) = 0 up to 4/total).

    F(-i beta) is real for real beta, so roots are located by sign changes.
    Returns ``inf`` for the root when none is found in the scanned window.
    """
    layers = [(breakpoints[k], breakpoints[k + 1], values[k]) for k in range(len(values)) if values[k] > 0]
    meas = layered_measure(layers, ell)
    grid = _cached_grid(meas)
    total = float(np.dot(values, np.diff(breakpoints)))

    def g(b):
        return march(grid, np.asarray(-1j * np.asarray(b)), deriv=False).F.real

    at = float(g(np.array([1 / m]))[0])
    bs = np.linspace(0, 4 / max(total, 1e-300), n_grid + 1)[1:]
    vals = g(bs)
    idx = np.nonzero(np.sign(vals[1:]) != np.sign(vals[:-1]))[0]
    if vals[0] <= 0:
        root = float(brentq(lambda b: g(np.array([b]))[0], 1e-12, bs[0], xtol=1e-15))
    elif idx.size:
        i = idx[0]
        root = float(brentq(lambda b: g(np.array([b]))[0], bs[i], bs[i + 1], xtol=1e-15))
    else:
        root = math.inf
    return at, root


def sample_layered(samples: int, m: float, ell: float, k_max: int = 4, seed: int = 0):
    """Random piecewise-constant densities with total mass in (0, m]."""
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        k = int(rng.integers(1, k_max + 1))
        inner_bp = np.sort(rng.uniform(0, ell, k - 1))
        bp = np.concatenate(([0.0], inner_bp, [ell]))
        w = rng.dirichlet(np.ones(k)) * rng.uniform(0, m)
        if rng.uniform() < 0.5:
            # concentrate mass toward the right end, the direction of the optimizing sequence
            w = np.sort(w)
        widths = np.diff(bp)
        yield bp, w / widths


# ---------------------------------------------------------------------------
# CSV output


def frontier_csv(points: Sequence[ParetoPoint]) -> str:
    nmax = max((p.n for p in points), default=0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "beta", "n"] + [f"a_{j}" for j in range(1, nmax + 1)]
               + [f"mu_{j}" for j in range(1, nmax + 1)] + ["source", "residual"])
    for p in points:
        a = [repr(float(x)) for x in p.string.positions] + [""] * (nmax - p.n)
        mu = [repr(float(x)) for x in p.string.masses] + [""] * (nmax - p.n)
        w.writerow([repr(float(p.alpha)), repr(float(p.beta)), p.n] + a + mu
                   + [p.source, f"{p.boundary_residual:.3e}"])
    return buf.getvalue()


def empirical_csv(table: EmpiricalFrontier) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha_bin_center", "min_beta", "sample_count"])
    for c, b, k in table.rows():
        w.writerow([repr(c), "" if not math.isfinite(b) else repr(b), k])
    return buf.getvalue()
