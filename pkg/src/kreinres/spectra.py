"""Quasi-eigenvalues: polynomial roots for point-mass strings, argument principle in general.

Frequencies and decay rates use the convention ``omega = alpha - i*beta``.
"""

from __future__ import annotations

import cmath
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import polynomial as P

from .charfn import march, root_tol_default, _cached_grid
from .measure import DiscreteString, MeasureLike, as_measure

log = logging.getLogger(__name__)


class BoundaryRootError(RuntimeError):
    """A zero of F sits on (or numerically at) a contour edge."""

    def __init__(self, msg, point=None, nudge=None):
        super().__init__(msg)
        self.point = point
        self.nudge = nudge


class WindingError(RuntimeError):
    """The winding integral is not close enough to an integer."""


@dataclass(frozen=True)
class QuasiEigenvalue:
    omega: complex
    multiplicity: int = 1
    residual: float = 0.0

    @property
    def alpha(self) -> float:
        return self.omega.real

    @property
    def beta(self) -> float:
        return -self.omega.imag

    def to_dict(self) -> dict:
        return {"re": self.omega.real, "im": self.omega.imag,
                "multiplicity": self.multiplicity, "residual": self.residual}


@dataclass(frozen=True)
class SearchRegion:
    """Rectangle ``[alpha_lo, alpha_hi] x [beta_lo, beta_hi]`` in (frequency, decay)."""

    alpha_lo: float
    alpha_hi: float
    beta_lo: float
    beta_hi: float

    def __post_init__(self):
        vals = (self.alpha_lo, self.alpha_hi, self.beta_lo, self.beta_hi)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("search region bounds must be finite")
        if not (self.alpha_lo < self.alpha_hi and 0 < self.beta_lo < self.beta_hi):
            raise ValueError(f"empty or invalid search region {vals}")

    @property
    def diameter(self) -> float:
        return math.hypot(self.alpha_hi - self.alpha_lo, self.beta_hi - self.beta_lo)

    def contains(self, omega: complex, margin: float = 0.0) -> bool:
        a, b = omega.real, -omega.imag
        return (self.alpha_lo + margin <= a <= self.alpha_hi - margin
                and self.beta_lo + margin <= b <= self.beta_hi - margin)

    def grown(self, d: float) -> "SearchRegion":
        return SearchRegion(self.alpha_lo - d, self.alpha_hi + d,
                            max(self.beta_lo - d, 0.5 * self.beta_lo), self.beta_hi + d)


def spectrum_to_json(roots) -> str:
    return json.dumps([q.to_dict() for q in roots], indent=2)


def _sort_key(q: QuasiEigenvalue):
    return (round(q.alpha, 12), round(q.beta, 12))


# ---------------------------------------------------------------------------
# Polynomial route


def mirror_poly(string: DiscreteString) -> np.ndarray:
    """Real coefficients (ascending) of G(w) = F(i w).

    With z = i w the recursion only involves w^2 and real masses, so every
    coefficient is a nonnegative real number.
    """
    one = np.array([1.0])
    phi = one
    slope = np.zeros(1)
    moment = np.zeros(1)
    a, mu = string.positions, string.masses
    x = a[0] if len(a) else string.ell
    w2 = np.array([0.0, 0.0, 1.0])
    for aj, mj in zip(a, mu):
        phi = P.polyadd(phi, (aj - x) * slope)
        x = aj
        moment = P.polyadd(moment, mj * phi)
        slope = P.polymul(w2, moment)
    phi = P.polyadd(phi, (string.ell - x) * slope)
    G = P.polyadd(phi, P.polymul([0.0, 1.0], moment))
    return np.trim_zeros(G, "b")


def charpoly(string: DiscreteString) -> np.ndarray:
    """Coefficients of F(z) in ascending powers of z (complex)."""
    G = mirror_poly(string)
    k = np.arange(len(G))
    return G * (-1j) ** k


def _polish_real(G: np.ndarray, w: complex, steps: int = 3) -> complex:
    dG = P.polyder(G)
    best, rbest = w, abs(P.polyval(w, G))
    for _ in range(steps):
        d = P.polyval(w, dG)
        if d == 0:
            break
        w = w - P.polyval(w, G) / d
        r = abs(P.polyval(w, G))
        if r < rbest:
            best, rbest = w, r
        else:
            break
    return best


def cluster_radius(omega: complex) -> float:
    return 1e-7 * (1 + abs(omega))


def _cluster(roots: np.ndarray):
    """Group roots closer than the cluster radius; returns (mean, count) pairs."""
    left = list(roots)
    groups = []
    while left:
        seed = left.pop(0)
        members = [seed]
        rest = []
        for r in left:
            if abs(r - seed) < cluster_radius(seed):
                members.append(r)
            else:
                rest.append(r)
        left = rest
        groups.append((complex(np.mean(members)), len(members)))
    return groups


def spectrum_poly(string: DiscreteString) -> list[QuasiEigenvalue]:
    G = mirror_poly(string)
    if len(G) <= 1:
        return []
    w_roots = np.roots(G[::-1])
    out = []
    for w, r in _cluster(w_roots):
        if r == 1:
            w = _polish_real(G, w)
        if w.imag == 0 or r > 1 and abs(w.imag) < cluster_radius(w):
            omega = complex(0.0, w.real)
        else:
            omega = complex(1j * w)
        res = abs(P.polyval(w, G))
        out.append(QuasiEigenvalue(omega, r, float(res)))
    return sorted(out, key=_sort_key)


# ---------------------------------------------------------------------------
# Contour route


# Gauss-Kronrod 7/15 on [-1, 1]
_XGK = np.array([0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                 0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                 0.207784955007898467600689403773245, 0.0])
_WGK = np.array([0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                 0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                 0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG = np.array([0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                0.381830050505118944950369775488975, 0.417959183673469387755102040816327])

_NODES = np.concatenate((-_XGK[:-1], _XGK[::-1]))          # 15 nodes, ascending
_WK = np.concatenate((_WGK[:-1], _WGK[::-1]))
_WGFULL = np.zeros(15)
_WGFULL[1:7:2] = _WG[:3]
_WGFULL[7] = _WG[3]
_WGFULL[9:15:2] = _WG[2::-1]

_MAX_INTERVALS = 20000
_SPLIT_FRACTION = 0.5 + 0.0137


def gk15(f, a: float, b: float):
    """One Gauss-Kronrod 7/15 panel of a real scalar function (used in tests)."""
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    vals = f(mid + half * _NODES)
    return half * np.dot(_WK, vals), half * abs(np.dot(_WK - _WGFULL, vals))


class _ContourSolver:
    def __init__(self, measure: MeasureLike, tol: float):
        self.grid = _cached_grid(as_measure(measure))
        self.tol = tol
        self.cache: dict = {}
        self.nevals = 0

    def eval(self, z):
        res = march(self.grid, z, deriv=True)
        self.nevals += np.size(z)
        return res.F, res.dF

    def segment(self, p: complex, q: complex):
        """Moments of F'/F about the segment midpoint c along p -> q.

        Returns integrals of (z - c)^k F'(z)/F(z) dz for k = 0, 1, 2.  The
        tolerance on the k-th moment scales like length^k so that small cells
        are resolved to the same relative accuracy as large ones.
        """
        center = 0.5 * (p + q)
        length = abs(q - p)
        scale = np.array([1.0, length, length * length])
        done = np.zeros(3, dtype=complex)
        queue = [(0.0, 1.0)]
        count = 0
        worst = (math.inf, p)
        while queue:
            t0 = np.array([s for s, _ in queue])
            t1 = np.array([e for _, e in queue])
            mid, half = 0.5 * (t0 + t1), 0.5 * (t1 - t0)
            t = mid[:, None] + half[:, None] * _NODES[None, :]
            z = p + (q - p) * t
            F, dF = self.eval(z)
            absF = np.abs(F)
            if np.any(absF < 1e-300) or not np.all(np.isfinite(F)):
                raise BoundaryRootError("F vanishes on a contour edge",
                                        point=complex(z.flat[int(np.argmin(absF))]))
            k = int(np.argmin(absF))
            if absF.flat[k] < worst[0]:
                worst = (float(absF.flat[k]), complex(z.flat[k]))
            g = dF / F * (q - p) * half[:, None]
            u = z - center
            mom = np.stack([g, g * u, g * u * u])                    # (3, m, 15)
            vals = mom @ _WK
            errs = np.abs(mom @ (_WK - _WGFULL))
            loc = self.tol * np.maximum(2 * half, 1e-3)
            ok = np.all(errs < loc[None, :] * scale[:, None], axis=0)
            done += vals[:, ok].sum(axis=1)
            queue = []
            for s_, e_, m_, good in zip(t0, t1, mid, ok):
                if not good:
                    if e_ - s_ < 1e-12:
                        raise BoundaryRootError("adaptive quadrature cannot resolve an edge",
                                                point=complex(p + (q - p) * m_))
                    queue.extend([(s_, m_), (m_, e_)])
            count += len(t0)
            if count > _MAX_INTERVALS:
                # unresolved integrand: a zero on or extremely close to the edge
                raise BoundaryRootError("edge quadrature did not converge", point=worst[1])
        return done

    def cell_moments(self, x0, x1, y0, y1):
        """Zero count and centered power sums (s1, s2) of the zeros in a cell."""
        center = complex(0.5 * (x0 + x1), 0.5 * (y0 + y1))
        corners = [complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1)]
        I = np.zeros(3, dtype=complex)
        for k in range(4):
            a, b = corners[k], corners[(k + 1) % 4]
            key = (a, b) if (a.real, a.imag) < (b.real, b.imag) else (b, a)
            sign = 1 if key[0] == a else -1
            seg = self.cache.get(key)
            if seg is None:
                seg = self.segment(*key)
                self.cache[key] = seg
            d = 0.5 * (a + b) - center
            I += sign * np.array([seg[0], seg[1] + d * seg[0],
                                  seg[2] + 2 * d * seg[1] + d * d * seg[0]])
        I /= 2j * math.pi
        N = round(I[0].real)
        if abs(I[0] - N) > 0.25:
            raise WindingError(f"winding number {I[0]:.4f} is not near an integer")
        return N, center, complex(I[1]), complex(I[2])

    def newton(self, z0: complex, box, maxit: int = 60):
        x0, x1, y0, y1 = box
        pad = 0.05 * max(x1 - x0, y1 - y0)
        z = z0
        for _ in range(maxit):
            F, dF = self.eval(np.array([z]))
            F, dF = complex(F[0]), complex(dF[0])
            if dF == 0:
                return None
            step = F / dF
            z = z - step
            if not (x0 - pad <= z.real <= x1 + pad and y0 - pad <= z.imag <= y1 + pad):
                return None
            if abs(step) < 4e-16 * max(1.0, abs(z)):
                break
        return z


def spectrum_contour(measure: MeasureLike, region: SearchRegion,
                     tol: float = 1e-10, max_retries: int = 5) -> list[QuasiEigenvalue]:
    """All zeros of F in ``region`` via the argument principle and subdivision."""
    meas = as_measure(measure)
    reg = region
    for attempt in range(max_retries + 1):
        try:
            return _contour_search(meas, reg, tol)
        except BoundaryRootError as exc:
            if attempt == max_retries:
                raise
            log.debug("boundary root near %s; nudging region", exc.point)
            reg = reg.grown(1e-6 * reg.diameter)
    raise AssertionError("unreachable")


def _contour_search(meas, region: SearchRegion, tol: float):
    solver = _ContourSolver(meas, tol)
    x0, x1 = region.alpha_lo, region.alpha_hi
    y0, y1 = -region.beta_hi, -region.beta_lo
    stack = [((x0, x1, y0, y1), *solver.cell_moments(x0, x1, y0, y1), 0)]
    found = []
    while stack:
        box, N, center, s1, s2, depth = stack.pop()
        if N == 0:
            continue
        bx0, bx1, by0, by1 = box
        guess = center + s1 / N
        diam = math.hypot(bx1 - bx0, by1 - by0)
        if N == 1:
            z = solver.newton(guess, box)
            if z is not None:
                found.append((z, 1))
                continue
            if diam < cluster_radius(guess):
                found.append((guess, 1))
                continue
        else:
            # all N zeros coincide when the centered second moment vanishes
            spread = abs(s2 / N - (s1 / N) ** 2)
            if diam < cluster_radius(guess) or math.sqrt(spread) < 0.1 * cluster_radius(guess):
                found.append((guess, N))
                continue
        if depth > 200:
            raise WindingError("subdivision depth exceeded")
        for child in _split(solver, box):
            stack.append((*child, depth + 1))
    # deterministic merge: Newton from neighbouring cells may land on the same root
    out = []
    for z, r in sorted(found, key=lambda t: (t[0].real, t[0].imag)):
        if out and abs(out[-1][0] - z) < cluster_radius(z) and r == 1 and out[-1][1] == 1:
            continue
        out.append((z, r))
    roots = []
    for z, r in out:
        F, _ = solver.eval(np.array([z]))
        roots.append(QuasiEigenvalue(complex(z), r, float(abs(F[0]))))
    return sorted((q for q in roots if region.contains(q.omega, -1e-6 * region.diameter)),
                  key=_sort_key)


def _split(solver: _ContourSolver, box):
    x0, x1, y0, y1 = box
    fractions = [_SPLIT_FRACTION, 0.5 - 0.0291, 0.5 + 0.0419, 0.5 - 0.0533]
    for frac in fractions:
        try:
            if x1 - x0 >= y1 - y0:
                xm = x0 + frac * (x1 - x0)
                boxes = [(x0, xm, y0, y1), (xm, x1, y0, y1)]
            else:
                ym = y0 + frac * (y1 - y0)
                boxes = [(x0, x1, y0, ym), (x0, x1, ym, y1)]
            return [(b, *solver.cell_moments(*b)) for b in boxes]
        except BoundaryRootError:
            continue
    raise BoundaryRootError("every split line of a cell meets a root")


# ---------------------------------------------------------------------------
# Cross validation


@dataclass
class CrossValidationReport:
    poly: list
    contour: list
    max_distance: float
    unpaired: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.unpaired


def cross_validate(string: DiscreteString, region: SearchRegion, tol: float = 1e-10,
                   pair_tol: float = 1e-8) -> CrossValidationReport:
    """Pair polynomial roots inside ``region`` with contour roots."""
    poly_all = spectrum_poly(string)
    contour = spectrum_contour(string, region, tol)
    margin = 1e-6 * region.diameter
    poly_in = [q for q in poly_all if region.contains(q.omega, margin)]
    unpaired = []
    dmax = 0.0
    used = set()
    for q in poly_in:
        best, bi = math.inf, None
        for i, c in enumerate(contour):
            d = abs(c.omega - q.omega)
            if i not in used and d < best:
                best, bi = d, i
        if bi is None or best > pair_tol or contour[bi].multiplicity != q.multiplicity:
            unpaired.append(("poly", q))
            continue
        used.add(bi)
        dmax = max(dmax, best)
    for i, c in enumerate(contour):
        if i in used:
            continue
        # roots sitting within the margin of the boundary may legitimately be in only one list
        near = min((abs(c.omega - q.omega) for q in poly_all), default=math.inf)
        if near > pair_tol or region.contains(c.omega, margin):
            unpaired.append(("contour", c))
    return CrossValidationReport(poly_in, contour, dmax, unpaired)


# ---------------------------------------------------------------------------
# Closed forms used as references


def single_mass_roots(m0: float, x0: float, ell: float) -> list[complex]:
    """Roots of F for one mass m0 at x0 (both roots of the quadratic when x0 < l)."""
    d = ell - x0
    if d == 0:
        return [-1j / m0]
    # m0 d z^2 + i m0 z - 1 = 0
    disc = cmath.sqrt(4 * m0 * d - m0 * m0)
    return [(-1j * m0 + disc) / (2 * m0 * d), (-1j * m0 - disc) / (2 * m0 * d)]


def constant_layer_root(c: float, x0: float, ell: float, k: int = 0) -> complex:
    """Root omega_k for density c > 1 on (x0, l] and zero on [0, x0]."""
    sc = math.sqrt(c)
    d = ell - x0
    return complex(k * math.pi / (d * sc), -math.log((sc + 1) / (sc - 1)) / (2 * d * sc))
