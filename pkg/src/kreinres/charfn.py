"""Fundamental solution phi(x, z; dM), characteristic determinant F and its derivatives.

Three independent evaluators live here:

* ``phi_at_vertices`` / ``charfn_F``: the finite recursion for point-mass strings,
  exact up to rounding.
* ``transfer_F``: a vectorized march over atoms and constant-density layers
  using cos/sin transfer steps.  It also carries dF/dz in forward mode and the
  integrals of phi**2 against arbitrary direction measures.
* ``series_F``: the Maclaurin expansion in z with moment integrals evaluated
  exactly on piecewise polynomials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .measure import (DiscreteString, MeasureLike, StringMeasure, as_measure,
                      total_mass)


class InvalidAtNonRoot(ValueError):
    """A root-only formula was requested at a point where F does not vanish."""


def root_tol_default(z: complex) -> float:
    return 1e-10 * max(1.0, abs(z))


@dataclass(frozen=True)
class ModeTrajectory:
    """Vertices of the piecewise-linear path x -> phi(x, z) of a point-mass string.

    ``d_minus[j]`` and ``d_plus[j]`` are the left and right x-derivatives at
    ``positions[j]``; ``phi_l`` and ``dphi_l`` are phi(l) and its right
    derivative at l (after any terminal mass).
    """

    positions: np.ndarray
    masses: np.ndarray
    values: np.ndarray
    d_minus: np.ndarray
    d_plus: np.ndarray
    phi_l: complex
    dphi_l: complex
    ell: float
    z: complex

    @property
    def moment(self) -> complex:
        """Integral of phi against the string, sum_j phi(a_j) mu_j."""
        return complex(np.dot(self.values, self.masses))


@dataclass(frozen=True)
class CharValue:
    F: complex
    z: complex
    dF_dz: Optional[complex] = None


# ---------------------------------------------------------------------------
# Point-mass recursion


def phi_at_vertices(string: DiscreteString, z: complex) -> ModeTrajectory:
    z = complex(z)
    z2 = z * z
    a, mu = string.positions, string.masses
    n = len(a)
    vals = np.empty(n, dtype=complex)
    dm = np.empty(n, dtype=complex)
    dp = np.empty(n, dtype=complex)
    # partial sums: phi'(x) = -z^2 sum_{a_j < x} phi(a_j) mu_j
    moment = 0j
    phi, slope, x = 1 + 0j, 0j, float(a[0]) if n else string.ell
    for j in range(n):
        phi = phi + (a[j] - x) * slope
        x = a[j]
        vals[j] = phi
        dm[j] = slope
        moment += phi * mu[j]
        slope = -z2 * moment
        dp[j] = slope
    phi_l = phi + (string.ell - x) * slope
    for arr in (vals, dm, dp):
        arr.setflags(write=False)
    return ModeTrajectory(string.positions, string.masses, vals, dm, dp,
                          complex(phi_l), complex(slope), string.ell, z)


def phi_trajectory_point(string: DiscreteString, z: complex, x: float) -> complex:
    """phi(x, z) by affine interpolation between vertices."""
    if not (0.0 <= x <= string.ell):
        raise ValueError(f"x = {x} outside [0, {string.ell}]")
    traj = phi_at_vertices(string, z)
    k = int(np.searchsorted(string.positions, x, side="right")) - 1
    if k < 0:
        return 1 + 0j
    return complex(traj.values[k] + (x - string.positions[k]) * traj.d_plus[k])


def charfn_F(string: DiscreteString, z: complex) -> CharValue:
    z = complex(z)
    traj = phi_at_vertices(string, z)
    return CharValue(F=traj.phi_l - 1j * z * traj.moment, z=z)


def charfn_F_array(positions, masses, ell: float, z) -> np.ndarray:
    """Vectorized F over an array of z for raw (possibly signed) atoms."""
    z = np.asarray(z, dtype=complex)
    z2 = z * z
    phi = np.ones_like(z)
    slope = np.zeros_like(z)
    moment = np.zeros_like(z)
    x = positions[0] if len(positions) else ell
    for aj, mj in zip(positions, masses):
        phi = phi + (aj - x) * slope
        x = aj
        moment = moment + mj * phi
        slope = -z2 * moment
    phi = phi + (ell - x) * slope
    return phi - 1j * z * moment


# ---------------------------------------------------------------------------
# Entire functions of w = z^2 c h^2 used by the layer steps


_FACT = np.array([math.factorial(k) for k in range(40)], dtype=float)
_SMALL = 0.5
_NTERMS = 14


def _series(w, coeffs):
    out = np.zeros_like(w)
    for cf in coeffs[::-1]:
        out = out * w + cf
    return out


_C_CF = np.array([(-1) ** k / _FACT[2 * k] for k in range(_NTERMS)])
_S_CF = np.array([(-1) ** k / _FACT[2 * k + 1] for k in range(_NTERMS)])
_SW_CF = np.array([(-1) ** (k + 1) * (k + 1) / _FACT[2 * k + 3] for k in range(_NTERMS)])
_T_CF = np.array([(-1) ** k / _FACT[2 * k + 3] for k in range(_NTERMS)])


def _cs_funcs(w):
    """cos(sqrt w), sin(sqrt w)/sqrt w, d/dw of the latter, and (1 - S)/w."""
    w = np.asarray(w, dtype=complex)
    small = np.abs(w) < _SMALL
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.sqrt(w)
        C = np.where(small, _series(w, _C_CF), np.cos(q))
        S = np.where(small, _series(w, _S_CF), np.sin(q) / q)
        Sw = np.where(small, _series(w, _SW_CF), (C - S) / (2 * w))
        T = np.where(small, _series(w, _T_CF), (1 - S) / w)
    return C, S, Sw, T


# ---------------------------------------------------------------------------
# Common grid for a measure plus direction measures


@dataclass(frozen=True)
class _Grid:
    x: np.ndarray            # breakpoints 0 = x_0 < ... < x_K = l
    c: np.ndarray            # base density per segment
    mu: np.ndarray           # base atom at each breakpoint
    dens_dirs: tuple         # direction densities per segment
    atom_dirs: tuple         # direction atoms per breakpoint


def _density_on(meas: StringMeasure, mids: np.ndarray) -> np.ndarray:
    bp, vals = meas.density.breakpoints, meas.density.values
    idx = np.clip(np.searchsorted(bp, mids, side="right") - 1, 0, len(vals) - 1)
    return vals[idx]


def _atoms_on(meas: StringMeasure, x: np.ndarray) -> np.ndarray:
    out = np.zeros(len(x))
    idx = np.searchsorted(x, meas.discrete.positions)
    np.add.at(out, idx, meas.discrete.masses)
    return out


def build_grid(measure: MeasureLike, directions: Sequence[MeasureLike] = ()) -> _Grid:
    base = as_measure(measure)
    dirs = [as_measure(d) for d in directions]
    ell = base.ell
    for d in dirs:
        if d.ell != ell:
            raise ValueError("direction measure lives on a different interval")
    pts = {0.0, ell}
    for m in [base, *dirs]:
        pts.update(m.discrete.positions.tolist())
        pts.update(m.density.breakpoints.tolist())
    x = np.array(sorted(pts))
    mids = 0.5 * (x[:-1] + x[1:])
    return _Grid(x, _density_on(base, mids), _atoms_on(base, x),
                 tuple(_density_on(d, mids) for d in dirs),
                 tuple(_atoms_on(d, x) for d in dirs))


def perturbed_grid(grid: _Grid, t: float, k: int = 0) -> _Grid:
    """Base measure replaced by base + t * direction[k]; signed results allowed."""
    return _Grid(grid.x, grid.c + t * grid.dens_dirs[k], grid.mu + t * grid.atom_dirs[k],
                 grid.dens_dirs, grid.atom_dirs)


@dataclass
class MarchResult:
    F: np.ndarray
    dF: Optional[np.ndarray]
    phi_l: np.ndarray
    eta_l: np.ndarray                 # integral of phi dM
    phi2_base: np.ndarray             # integral of phi^2 dM
    phi2_dirs: list                   # integral of phi^2 dV for each direction


def march(grid: _Grid, z, deriv: bool = False) -> MarchResult:
    """Propagate (phi, eta = int_0^x phi dM) across the grid for an array of z."""
    z = np.asarray(z, dtype=complex)
    z2 = z * z
    phi = np.ones_like(z)
    eta = np.zeros_like(z)
    dphi = np.zeros_like(z)
    deta = np.zeros_like(z)
    i2 = np.zeros_like(z)
    i2d = [np.zeros_like(z) for _ in grid.dens_dirs]
    K = len(grid.c)
    for k in range(K + 1):
        mu = grid.mu[k]
        if mu != 0.0:
            p2 = phi * phi
            i2 = i2 + mu * p2
            eta = eta + mu * phi
            if deriv:
                deta = deta + mu * dphi
        for q, nu in enumerate(grid.atom_dirs):
            if nu[k] != 0.0:
                i2d[q] = i2d[q] + nu[k] * phi * phi
        if k == K:
            break
        h = grid.x[k + 1] - grid.x[k]
        c = grid.c[k]
        dd = [d[k] for d in grid.dens_dirs]
        w = z2 * (c * h * h)
        C, S, Sw, _ = _cs_funcs(w)
        slope = -z2 * eta
        if c != 0.0 or any(d != 0.0 for d in dd):
            _, S4, _, T4 = _cs_funcs(4 * w)
            seg = (phi * phi * (0.5 * h) * (1 + S4) + 2 * phi * slope * (0.5 * h * h) * S * S
                   + slope * slope * 2 * h ** 3 * T4)
            if c != 0.0:
                i2 = i2 + c * seg
            for q, d in enumerate(dd):
                if d != 0.0:
                    i2d[q] = i2d[q] + d * seg
        phi_n = C * phi - z2 * h * S * eta
        eta_n = c * h * S * phi + C * eta
        if deriv:
            wz = 2 * z * (c * h * h)
            Cz = -0.5 * S * wz
            Sz = Sw * wz
            dphi_n = (Cz * phi + C * dphi - 2 * z * h * S * eta - z2 * h * Sz * eta
                      - z2 * h * S * deta)
            deta_n = c * h * (Sz * phi + S * dphi) + Cz * eta + C * deta
            dphi, deta = dphi_n, deta_n
        phi, eta = phi_n, eta_n
    F = phi - 1j * z * eta
    dF = dphi - 1j * eta - 1j * z * deta if deriv else None
    return MarchResult(F, dF, phi, eta, i2, i2d)


def transfer_F(measure: MeasureLike, z, deriv: bool = True):
    """F and dF/dz for an array of z via the transfer march.

    Returns ``(F, dF)`` with the shape of ``z``.
    """
    res = march(_cached_grid(as_measure(measure)), z, deriv=deriv)
    return res.F, res.dF


@lru_cache(maxsize=256)
def _cached_grid(measure: StringMeasure) -> _Grid:
    return build_grid(measure)


# ---------------------------------------------------------------------------
# Maclaurin series


def _double_antiderivative(p: np.ndarray) -> np.ndarray:
    k = np.arange(len(p))
    return np.concatenate(([0.0, 0.0], p / ((k + 1) * (k + 2))))


@lru_cache(maxsize=256)
def _series_coefficients_cached(measure: StringMeasure, J: int):
    grid = build_grid(measure)
    x, c, mu = grid.x, grid.c, grid.mu
    K = len(c)
    h = np.diff(x)
    A = np.zeros(J + 1)
    B = np.zeros(J + 1)
    A[0] = 1.0
    B[0] = total_mass(measure)
    prev = [np.array([1.0]) for _ in range(K)]
    prev_nodes = np.ones(K + 1)
    for j in range(1, J + 1):
        v, D, b = 0.0, 0.0, 0.0
        polys = []
        nodes = np.empty(K + 1)
        for k in range(K + 1):
            nodes[k] = v
            D += mu[k] * prev_nodes[k]
            b += mu[k] * v
            if k == K:
                break
            p = np.zeros(1)
            if c[k] != 0.0:
                p = c[k] * _double_antiderivative(prev[k])
            p = P.polyadd(p, [v, D])
            polys.append(p)
            if c[k] != 0.0:
                b += c[k] * P.polyval(h[k], P.polyint(p))
                D += c[k] * P.polyval(h[k], P.polyint(prev[k]))
            v = P.polyval(h[k], p)
        A[j] = v
        B[j] = b
        prev, prev_nodes = polys, nodes
    A.setflags(write=False)
    B.setflags(write=False)
    return A, B


def series_coefficients(measure: MeasureLike, J: int):
    """``A_j = phi_j(l)`` and ``B_j = int phi_j dM`` for j = 0..J.

    F(z) = sum_j (-1)^j (A_j z^{2j} - i B_j z^{2j+1}).
    """
    return _series_coefficients_cached(as_measure(measure), int(J))


def truncation_index(ell: float, norm: float, z: complex, tol: float,
                     safety: float = 10.0, jmin: int = 8) -> int:
    """Smallest J >= jmin with the factorial tail bound below tol / safety."""
    r2 = abs(z) ** 2
    base = 2.0 * ell * norm * r2
    pref = 1.0 + abs(z) * norm
    target = tol / safety
    if base == 0.0:
        return jmin
    # term t_j = base^j / (2j)!, tracked in logs to avoid overflow
    J = jmin
    while True:
        logt = (J + 1) * math.log(base) - math.lgamma(2 * J + 3)
        ratio = base / ((2 * J + 3) * (2 * J + 4))
        if ratio < 0.5:
            tail = math.exp(logt) / (1 - ratio) * pref
            if tail < target:
                return J
        J += 1


def series_F(measure: MeasureLike, z: complex, tol: float = 1e-12) -> CharValue:
    if not tol > 0:
        raise ValueError("tol must be positive")
    meas = as_measure(measure)
    z = complex(z)
    J = truncation_index(meas.ell, total_mass(meas), z, tol)
    A, B = series_coefficients(meas, J)
    F, dF = _eval_series(A, B, z)
    return CharValue(F=F, z=z, dF_dz=dF)


def _eval_series(A, B, z):
    j = np.arange(len(A))
    sign = np.where(j % 2 == 0, 1.0, -1.0)
    # coefficients of F in ascending powers of z
    coef = np.zeros(2 * len(A), dtype=complex)
    coef[0::2] = sign * A
    coef[1::2] = -1j * sign * B
    F = P.polyval(z, coef)
    dF = P.polyval(z, P.polyder(coef))
    return complex(F), complex(dF)


# ---------------------------------------------------------------------------
# Derivatives


def _F_value(obj: MeasureLike, z: complex) -> complex:
    if isinstance(obj, DiscreteString):
        return charfn_F(obj, z).F
    F, _ = transfer_F(obj, np.array([z]), deriv=False)
    return complex(F[0])


def phi_squared_integral(measure: MeasureLike, z: complex, direction: MeasureLike) -> complex:
    """Integral of phi(x, z; measure)^2 against ``direction``."""
    res = march(build_grid(measure, [direction]), np.array([complex(z)]))
    return complex(res.phi2_dirs[0][0])


def dF_dz(obj: MeasureLike, z: complex, tol: float = 1e-12,
          root_tol: Optional[float] = None, closed_form: Optional[bool] = None) -> complex:
    """z-derivative of F.

    At a root (|F| < root_tol) the closed form
    ``phi(l)/z - (2i/phi(l)) int phi^2 dM`` is used; elsewhere the termwise
    derivative of the Maclaurin series.  ``closed_form=True`` forces the closed
    form and raises :class:`InvalidAtNonRoot` off the spectrum.
    """
    z = complex(z)
    rt = root_tol_default(z) if root_tol is None else root_tol
    F = _F_value(obj, z)
    at_root = abs(F) < rt and z != 0
    if closed_form and not at_root:
        raise InvalidAtNonRoot(f"|F({z})| = {abs(F):.3g} exceeds root tolerance {rt:.3g}")
    if at_root and closed_form is not False:
        res = march(_cached_grid(as_measure(obj)), np.array([z]))
        phi_l = complex(res.phi_l[0])
        if phi_l == 0:
            raise InvalidAtNonRoot("phi(l) vanishes; z is not a quasi-eigenvalue")
        return phi_l / z - 2j / phi_l * complex(res.phi2_base[0])
    return series_F(obj, z, tol).dF_dz


def dF_dM(obj: MeasureLike, z: complex, direction: MeasureLike,
          root_tol: Optional[float] = None) -> complex:
    """Directional derivative of F in the measure at a root z."""
    z = complex(z)
    rt = root_tol_default(z) if root_tol is None else root_tol
    F = _F_value(obj, z)
    if not abs(F) < rt:
        raise InvalidAtNonRoot(f"|F({z})| = {abs(F):.3g} exceeds root tolerance {rt:.3g}")
    res = march(build_grid(obj, [direction]), np.array([z]))
    phi_l = complex(res.phi_l[0])
    return -1j * z / phi_l * complex(res.phi2_dirs[0][0])
