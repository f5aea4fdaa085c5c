"""First-order motion of quasi-eigenvalues under a change of the mass distribution."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .charfn import (InvalidAtNonRoot, build_grid, march, perturbed_grid,
                     root_tol_default, series_F, series_coefficients,
                     truncation_index)
from .measure import DiscreteString, MeasureLike, StringMeasure, as_measure, total_mass
from .spectra import charpoly


class DegenerateEigenvalue(ArithmeticError):
    """The root is (numerically) multiple, so it has no derivative in the measure."""


@dataclass(frozen=True)
class PerturbationResult:
    omega: complex
    direction: StringMeasure
    value: complex                  # dOmega for r = 1, one branch of c_1 for r >= 2
    order: int = 1
    branches: tuple = ()


@dataclass(frozen=True)
class _RootData:
    phi_l: complex
    phi2_base: complex
    phi2_dir: complex


def _root_data(obj: MeasureLike, omega: complex, direction: Optional[MeasureLike],
               root_tol: Optional[float]) -> _RootData:
    dirs = [] if direction is None else [direction]
    res = march(build_grid(obj, dirs), np.array([complex(omega)]))
    F = complex(res.F[0])
    rt = root_tol_default(omega) if root_tol is None else root_tol
    if not abs(F) < rt:
        raise InvalidAtNonRoot(f"|F({omega})| = {abs(F):.3g} exceeds root tolerance {rt:.3g}")
    pd = complex(res.phi2_dirs[0][0]) if dirs else 0j
    return _RootData(complex(res.phi_l[0]), complex(res.phi2_base[0]), pd)


def degeneracy_indicator(obj: MeasureLike, omega: complex,
                         root_tol: Optional[float] = None) -> complex:
    """phi(l)^2 - 2 i omega int phi^2 dM; vanishes exactly at multiple roots."""
    d = _root_data(obj, omega, None, root_tol)
    return d.phi_l ** 2 - 2j * omega * d.phi2_base


def simple_eig_derivative(obj: MeasureLike, omega: complex, direction: MeasureLike,
                          root_tol: Optional[float] = None, degen_tol: float = 1e-9) -> complex:
    """Derivative of the root omega along ``obj + t * direction`` at t = 0.

    Equal to -dF_dM / dF_dz, i.e. i omega^2 int phi^2 dV / (phi(l)^2 - 2 i omega int phi^2 dM).
    """
    omega = complex(omega)
    d = _root_data(obj, omega, direction, root_tol)
    denom = d.phi_l ** 2 - 2j * omega * d.phi2_base
    scale = abs(d.phi_l) ** 2 + abs(2 * omega * d.phi2_base)
    if abs(denom) <= degen_tol * scale:
        raise DegenerateEigenvalue(f"root {omega} is numerically multiple "
                                   f"(indicator {abs(denom):.3g})")
    return 1j * omega ** 2 * d.phi2_dir / denom


def _nth_z_derivative(obj: MeasureLike, z: complex, r: int) -> complex:
    if isinstance(obj, DiscreteString):
        coef = charpoly(obj)
    else:
        meas = as_measure(obj)
        J = truncation_index(meas.ell, total_mass(meas), z, 1e-14)
        A, B = series_coefficients(meas, J)
        sign = (-1.0) ** np.arange(len(A))
        coef = np.zeros(2 * len(A), dtype=complex)
        coef[0::2] = sign * A
        coef[1::2] = -1j * sign * B
    return complex(P.polyval(z, P.polyder(coef, r)))


def multiplicity_at(obj: MeasureLike, z: complex, rmax: int = 6, tol: float = 1e-8) -> int:
    """Order of vanishing of F at z judged from scaled derivatives."""
    vals = [abs(_nth_z_derivative(obj, z, k)) / math.factorial(k) for k in range(rmax + 1)]
    scale = max(vals)
    for k, v in enumerate(vals):
        if v > tol * scale:
            return k
    return rmax


def puiseux_leading(obj: MeasureLike, omega: complex, direction: MeasureLike, r: int,
                    root_tol: Optional[float] = None) -> list[complex]:
    """The r values of the leading Puiseux coefficient of the splitting root."""
    if r < 2:
        raise ValueError("use simple_eig_derivative for r = 1")
    omega = complex(omega)
    d = _root_data(obj, omega, direction, root_tol)
    if abs(d.phi2_dir) < 1e-14 * max(1.0, abs(d.phi2_base)):
        raise ValueError("direction does not move the root: int phi^2 dV vanishes")
    Fr = _nth_z_derivative(obj, omega, r)
    lower = max(abs(_nth_z_derivative(obj, omega, k)) / math.factorial(k) for k in range(1, r))
    if abs(Fr) / math.factorial(r) < 1e3 * lower or Fr == 0:
        raise ValueError(f"multiplicity of {omega} is not {r}")
    base = 1j * math.factorial(r) * omega * d.phi2_dir / (d.phi_l * Fr)
    c1 = base ** (1.0 / r)
    return [c1 * np.exp(2j * math.pi * k / r) for k in range(r)]


# ---------------------------------------------------------------------------
# Finite-difference oracle


def track_root(obj: MeasureLike, omega: complex, direction: MeasureLike, t: float,
               maxit: int = 50) -> complex:
    """Newton-continue the root omega to the measure obj + t * direction.

    Negative t may give signed measures; the evaluator accepts them.
    """
    grid = perturbed_grid(build_grid(obj, [direction]), t)
    z = complex(omega)
    for _ in range(maxit):
        res = march(grid, np.array([z]), deriv=True)
        step = complex(res.F[0] / res.dF[0])
        z -= step
        if abs(step) < 1e-16 * max(1.0, abs(z)):
            break
    return z


@dataclass(frozen=True)
class FiniteDifference:
    value: complex
    step: float
    estimates: dict


def fd_root_derivative(obj: MeasureLike, omega: complex, direction: MeasureLike,
                       steps: Sequence[float] = (1e-5, 1e-6, 1e-7)) -> FiniteDifference:
    """Central differences of the tracked root with a Richardson consistency check.

    Returns the Richardson value from the two largest steps when the estimates
    agree, otherwise the central difference whose neighbours agree best.
    """
    est = {}
    for h in steps:
        est[h] = (track_root(obj, omega, direction, h) - track_root(obj, omega, direction, -h)) / (2 * h)
    hs = sorted(steps, reverse=True)
    h1, h2 = hs[0], hs[1]
    q = (h1 / h2) ** 2
    rich = (q * est[h2] - est[h1]) / (q - 1)
    spread = [abs(est[hs[k]] - est[hs[k + 1]]) for k in range(len(hs) - 1)]
    best = hs[int(np.argmin(spread))]
    if abs(rich - est[h1]) <= abs(est[best] - est[h1]) + 1e-12 * abs(rich):
        return FiniteDifference(rich, h2, est)
    return FiniteDifference(est[best], best, est)


def perturbation_result(obj: MeasureLike, omega: complex, direction: MeasureLike,
                        r: int = 1) -> PerturbationResult:
    dirm = as_measure(direction)
    if r == 1:
        return PerturbationResult(complex(omega), dirm, simple_eig_derivative(obj, omega, direction), 1)
    vals = puiseux_leading(obj, omega, direction, r)
    return PerturbationResult(complex(omega), dirm, vals[0], r, tuple(vals))
