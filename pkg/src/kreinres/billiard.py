"""Hyperbolic billiard: rebuild a candidate optimal string from (omega, m_1, p).

The frame is a unit normal ``p = exp(i xi)`` with ``xi`` in ``[-pi/2, pi/2)``.
The supporting line is ``L = 1 + i p R`` and its preimage under ``z -> z^2`` is
the rectangular hyperbola with branches ``Hyp+`` and ``Hyp-``.  Throughout,
``<a, b>`` denotes the real inner product ``Re(a * conj(b))``.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .charfn import ModeTrajectory, charfn_F, phi_at_vertices
from .measure import DiscreteString, make_discrete_string

N_MAX = 64


class InfeasibleParameters(ValueError):
    """The parameter tuple cannot produce a valid string."""

    def __init__(self, reason: str, detail: Optional[dict] = None):
        super().__init__(reason)
        self.reason = reason
        self.detail = detail or {}

    def certificate(self) -> dict:
        return {"infeasible": True, "reason": self.reason,
                **{k: _jsonable(v) for k, v in self.detail.items()}}


def inner(a: complex, b: complex) -> float:
    return (a * b.conjugate()).real


@dataclass(frozen=True)
class HyperbolaFrame:
    xi: float

    def __post_init__(self):
        if not (-math.pi / 2 <= self.xi < math.pi / 2):
            raise ValueError(f"xi = {self.xi} outside [-pi/2, pi/2)")

    @classmethod
    def from_normal(cls, p: complex) -> "HyperbolaFrame":
        xi = cmath.phase(p)
        if xi >= math.pi / 2:          # phase(-i) lands at -pi/2 already; guard the +pi/2 end
            xi -= math.pi
        return cls(xi)

    @property
    def p(self) -> complex:
        if self.degenerate:
            return -1j
        return cmath.exp(1j * self.xi)

    @property
    def degenerate(self) -> bool:
        return self.xi == -math.pi / 2

    def line_coordinate(self, w: complex) -> float:
        """s with w = 1 + i p s when w lies on L (orthogonal projection otherwise)."""
        return inner(w - 1, 1j * self.p)

    def offset(self, w: complex) -> float:
        """Signed distance <w - 1, p>; negative on the side of H_0 containing 0."""
        return inner(w - 1, self.p)


def hyperbola_point(frame: HyperbolaFrame, s: float, branch: int) -> complex:
    """``branch * sqrt(1 + i p s)`` with the principal square root.

    For the degenerate frame the hyperbola is the pair of axes; ``Hyp+`` is the
    positive real half-axis joined with the negative imaginary half-axis and
    ``Hyp-`` is its negative.
    """
    if branch not in (1, -1):
        raise ValueError("branch must be +1 or -1")
    if frame.degenerate:
        w = 1.0 + s
        root = math.sqrt(w) if w >= 0 else -1j * math.sqrt(-w)
        return branch * complex(root)
    return branch * cmath.sqrt(1 + 1j * frame.p * s)


def branch_of(frame: HyperbolaFrame, zeta: complex, previous: int = 1) -> int:
    """Branch label of a point on the hyperbola."""
    scale = max(1.0, abs(zeta))
    if abs(zeta.real) > 1e-12 * scale:
        return 1 if zeta.real > 0 else -1
    if frame.degenerate:
        # imaginary half-axes: the lower one belongs to Hyp+
        return 1 if zeta.imag < 0 else -1
    return previous


@dataclass(frozen=True)
class RayHit:
    t: float
    s: float
    branch: int
    point: complex


def ray_hyperbola_intersect(phi0: complex, v: complex, frame: HyperbolaFrame,
                            previous_branch: int = 1) -> Optional[RayHit]:
    """First strictly positive t with (phi0 + t v)^2 on L, if any.

    Solves <v^2, p> t^2 + 2 <phi0 v, p> t + <phi0^2 - 1, p> = 0.
    """
    if v == 0:
        raise ValueError("velocity must be nonzero")
    p = frame.p
    A = inner(v * v, p)
    B = 2 * inner(phi0 * v, p)
    C = inner(phi0 * phi0 - 1, p)
    tmin = 1e-12 * abs(phi0) / abs(v)
    roots = []
    if A == 0:
        if B != 0:
            roots = [-C / B]
    else:
        disc = B * B - 4 * A * C
        if disc > 0:
            q = -0.5 * (B + math.copysign(math.sqrt(disc), B))
            roots = [q / A] + ([C / q] if q != 0 else [])
        # disc == 0 is a tangency: no transversal hit
    pos = sorted(t for t in roots if t > tmin)
    if not pos:
        return None
    t = pos[0]
    point = phi0 + t * v
    return RayHit(t, frame.line_coordinate(point * point), branch_of(frame, point, previous_branch), point)


# ---------------------------------------------------------------------------


@dataclass
class Reconstruction:
    omega: complex
    m1: float
    frame: HyperbolaFrame
    ell: float
    budget: float
    string: DiscreteString
    trajectory: ModeTrajectory
    vertices: np.ndarray            # Phi(a_j) from the billiard propagation
    s_values: np.ndarray
    branches: np.ndarray
    boundary_residual: complex
    mass_residual: float
    termination: str
    case: str
    notes: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.string.n

    def to_dict(self) -> dict:
        return {
            "omega": [self.omega.real, self.omega.imag],
            "m1": self.m1, "xi": self.frame.xi, "ell": self.ell, "budget": self.budget,
            "case": self.case, "termination": self.termination,
            "positions": self.string.positions.tolist(),
            "masses": self.string.masses.tolist(),
            "vertices": [[z.real, z.imag] for z in self.vertices],
            "phi_l": [self.trajectory.phi_l.real, self.trajectory.phi_l.imag],
            "s_values": self.s_values.tolist(),
            "branches": ["+" if b > 0 else "-" for b in self.branches],
            "boundary_residual": abs(self.boundary_residual),
            "mass_residual": self.mass_residual,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def on_case1_circle(omega: complex, budget: float, tol: float = 1e-12) -> bool:
    return abs(abs(omega + 1j / budget) - 1 / budget) <= tol * max(1.0, 1 / budget)


def _finish(omega, m1, frame, ell, budget, positions, masses, vertices, termination, case,
            notes=()) -> Reconstruction:
    string = make_discrete_string(positions, masses, ell)
    if string.n != len(positions):
        raise InfeasibleParameters("coincident or vanishing masses", {"positions": positions})
    if sum(masses) > budget * (1 + 1e-9):
        raise InfeasibleParameters("mass budget exceeded", {"total": float(sum(masses)), "budget": budget})
    traj = phi_at_vertices(string, omega)
    sq = [z * z for z in vertices]
    s_vals = np.array([frame.line_coordinate(w) for w in sq])
    branches = []
    prev = 1
    for z in vertices:
        prev = branch_of(frame, z, prev)
        branches.append(prev)
    F = charfn_F(string, omega).F
    return Reconstruction(omega, m1, frame, ell, budget, string, traj, np.array(vertices),
                          s_vals, np.array(branches), F, float(sum(masses) - budget),
                          termination, case, list(notes))


def _segment_args(omega: complex, m: float, length: float, k: int = 256) -> np.ndarray:
    """Continuous arg of Phi^2 - 1 along the single-mass segment of given length."""
    t = np.linspace(0, length, k + 1)[1:]
    u = -omega * omega * m * t
    return np.unwrap(np.angle(2 * u + u * u))


def _supports_segment(frame: HyperbolaFrame, omega: complex, m: float, length: float) -> bool:
    t = np.linspace(0, length, 257)
    ph = 1 - omega * omega * m * t
    return bool(np.all([frame.offset(z * z) <= 1e-12 * max(1.0, abs(z) ** 2) for z in ph]))


def case1_frame(omega: complex, m: float, length: float) -> HyperbolaFrame:
    """A supporting normal for a single mass m followed by a free segment."""
    args = _segment_args(omega, m, length)
    lo, hi = args.min(), args.max()
    # need [lo, hi] inside [xi + pi/2, xi + 3 pi/2]
    xi_lo, xi_hi = hi - 1.5 * math.pi, lo - 0.5 * math.pi
    # intersect the admissible arc with [-pi/2, pi/2) modulo 2 pi
    for shift in (-4 * math.pi, -2 * math.pi, 0.0, 2 * math.pi, 4 * math.pi):
        a = max(xi_lo + shift, -math.pi / 2)
        b = min(xi_hi + shift, math.pi / 2 - 1e-12)
        if a <= b:
            return HyperbolaFrame(0.5 * (a + b))
    raise InfeasibleParameters("no supporting normal for the single-mass segment",
                               {"arg_range": (float(lo), float(hi))})


def reconstruct(omega: complex, m1: float, frame: HyperbolaFrame, ell: float, budget: float,
                circle_tol: float = 1e-12, end_tol: float = 1e-12,
                mass_tol: float = 1e-12, n_max: int = N_MAX,
                force_terminal: bool = False) -> Reconstruction:
    """Billiard reconstruction of the string from four real parameters.

    ``force_terminal`` treats the first hit after the last admissible interior
    vertex as landing exactly at ``ell`` (used by terminal charts, where the
    solver drives that hit onto ``ell``); the distance is recorded in notes.
    """
    omega = complex(omega)
    if not (omega.real > 0 and omega.imag < 0):
        raise ValueError("reconstruction needs Re omega > 0 and Im omega < 0")
    if not (m1 > 0 and budget > 0 and ell > 0):
        raise ValueError("m1, budget and ell must be positive")
    w2 = omega * omega

    if on_case1_circle(omega, budget, circle_tol):
        a1 = ell + 1 / (2 * omega.imag)
        if not (0 <= a1 < ell):
            raise InfeasibleParameters("circle case puts the mass outside [0, l)", {"a1": a1})
        fr = frame if _supports_segment(frame, omega, budget, ell - a1) else \
            case1_frame(omega, budget, ell - a1)
        notes = [] if fr is frame else [f"frame replaced by supporting normal xi = {fr.xi:.6g}"]
        return _finish(omega, budget, fr, ell, budget, [a1], [budget], [1 + 0j],
                       "single mass on the circle", "case1", notes)

    p = frame.p
    positions, masses, vertices = [0.0], [float(m1)], [1 + 0j]
    phi = 1 + 0j
    v = -w2 * m1
    x = 0.0
    branch = 1
    notes = []
    while True:
        hit = ray_hyperbola_intersect(phi, v, frame, branch)
        remaining = ell - x
        if hit is not None and force_terminal and hit.t > remaining and len(positions) >= 1:
            notes.append(f"terminal hit offset {hit.t - remaining:.3e}")
            hit = RayHit(remaining, hit.s, hit.branch, phi + remaining * v)
        if hit is None or hit.t > remaining + end_tol * ell:
            reason = "no further hit" if hit is None else "next hit beyond l"
            if force_terminal:
                raise InfeasibleParameters("terminal chart lost its final hit", {"n": len(positions)})
            return _finish(omega, m1, frame, ell, budget, positions, masses, vertices, reason, "case2",
                           notes)
        expected = -branch
        if hit.branch != expected and not (force_terminal and hit.t >= remaining - end_tol * ell):
            raise InfeasibleParameters("branch alternation violated",
                                       {"vertex": len(positions) + 1, "point": hit.point})
        if hit.t >= remaining - end_tol * ell:
            # terminal vertex at x = l
            phi_l = phi + remaining * v
            mn = v / (w2 * phi_l) - 1j / omega
            notes.append(f"terminal mass imaginary part {mn.imag:.3e}")
            if frame.degenerate and len(positions) != 1:
                raise InfeasibleParameters("degenerate frame allows only a_2 = l after a_1 = 0")
            if abs(mn.real) <= mass_tol:
                return _finish(omega, m1, frame, ell, budget, positions, masses, vertices,
                               "terminal mass vanishes", "case2", notes)
            if mn.real < 0:
                raise InfeasibleParameters("negative terminal mass", {"m_n": mn})
            positions.append(ell)
            masses.append(float(mn.real))
            vertices.append(phi_l)
            return _finish(omega, m1, frame, ell, budget, positions, masses, vertices,
                           "terminal mass at l", "case2", notes)
        if frame.degenerate:
            raise InfeasibleParameters("degenerate frame cannot have an interior vertex",
                                       {"a": x + hit.t})
        x = x + hit.t
        phi = hit.point
        sq = phi * phi
        mj = inner(2 * phi * v, p) / inner(w2 * sq, p)
        if not mj > mass_tol:
            raise InfeasibleParameters("negative interior mass", {"vertex": len(positions) + 1, "m": mj})
        positions.append(x)
        masses.append(mj)
        vertices.append(phi)
        branch = hit.branch
        v = v - w2 * phi * mj
        if len(positions) > n_max:
            raise InfeasibleParameters("runaway: too many masses", {"n": len(positions)})


# ---------------------------------------------------------------------------


@dataclass
class StructureReport:
    checks: dict
    residuals: dict

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> list[str]:
        return [k for k, v in self.checks.items() if not v]

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": dict(self.checks),
                "residuals": {k: _jsonable(v) for k, v in self.residuals.items()}}


def check_structure(recon: Reconstruction, n_sample: int = 400,
                    residual_tol: float = 1e-9) -> StructureReport:
    """Necessary conditions satisfied by strings of minimal decay.

    The mode is recomputed from the string alone (not from the billiard
    propagation), so perturbing a mass after reconstruction is detected.
    """
    frame, omega, string = recon.frame, recon.omega, recon.string
    p = frame.p
    w2 = omega * omega
    traj = phi_at_vertices(string, omega)
    a, mu, n, ell = string.positions, string.masses, string.n, string.ell
    checks, res = {}, {}

    vals = traj.values
    sq = vals * vals
    s = np.array([frame.line_coordinate(complex(w)) for w in sq])
    on_line = max((abs(frame.offset(complex(w))) for w in sq), default=0.0)
    res["vertex_line_offset"] = on_line
    checks["vertices_on_line"] = on_line < 1e-11 * max(1.0, float(np.max(np.abs(sq), initial=1)))

    bound = inner(w2, p) / w2.imag
    interior = [j for j in range(n) if a[j] < ell]
    dec = bool(n == 0 or abs(s[0]) < 1e-12)
    for j in range(n - 1):
        dec &= bool(s[j] > s[j + 1])
        dec &= bool(s[j] > bound)
    if n >= 1 and a[-1] < ell and n >= 2:
        dec &= bool(s[-1] >= bound - 1e-12)
    checks["s_decreasing"] = dec if n >= 2 else bool(n == 0 or abs(s[0]) < 1e-12)
    res["s_values"] = s.tolist()
    res["s_bound"] = bound

    br, prev = [], 1
    for z in vals:
        prev = branch_of(frame, complex(z), prev)
        br.append(prev)
    checks["branch_alternation"] = all(b == (1 if j % 2 == 0 else -1) for j, b in enumerate(br))
    res["branches"] = ["+" if b > 0 else "-" for b in br]

    xs = np.unique(np.concatenate([np.linspace(0, ell, n_sample), a, [ell]]))
    worst = -np.inf
    for xv in xs:
        k = int(np.searchsorted(a, xv, side="right")) - 1
        ph = 1 + 0j if k < 0 else complex(vals[k] + (xv - a[k]) * traj.d_plus[k])
        worst = max(worst, frame.offset(ph * ph) / max(1.0, abs(ph) ** 2))
    res["containment_max_offset"] = worst
    checks["containment"] = worst <= 1e-12

    refl = 0.0
    for j in interior:
        if j == 0:
            continue
        dm = 2 * vals[j] * traj.d_minus[j]
        dp = 2 * vals[j] * traj.d_plus[j]
        refl = max(refl, abs(inner(complex(dp), p) + inner(complex(dm), p)))
    res["reflection_residual"] = refl
    checks["reflection_law"] = refl < residual_tol

    if n >= 2:
        lhs = w2.real
        rhs = 1 / (mu[0] * (a[1] - a[0]))
        res["re_omega2_margin"] = float(lhs - rhs)
        checks["re_omega2_bound"] = bool(lhs >= rhs - 1e-9)
    else:
        checks["re_omega2_bound"] = True

    mass = float(np.sum(mu))
    touches = abs(mass - recon.budget) <= 1e-9 * max(1.0, recon.budget) or (n > 0 and a[0] == 0.0)
    checks["constraint_touching"] = bool(touches)
    checks["admissible"] = bool(mass <= recon.budget * (1 + 1e-9) and np.all(mu > 0))
    res["total_mass"] = mass

    F = charfn_F(string, omega).F
    res["boundary_residual"] = abs(F)
    checks["boundary_residual"] = abs(F) < residual_tol * max(1.0, abs(omega))

    if frame.degenerate:
        checks["degenerate_shape"] = bool(n <= 2 and (n == 0 or a[0] == 0.0)
                                          and traj.phi_l.real >= -1e-12 and traj.phi_l.imag > 0
                                          and (n < 2 or a[1] == ell))
    else:
        checks["budget_saturated"] = abs(mass - recon.budget) <= 1e-9 * max(1.0, recon.budget) \
            or recon.case == "case1"

    if len(recon.vertices) == n and n:
        res["route_agreement"] = float(np.max(np.abs(np.asarray(recon.vertices) - vals)))
    return StructureReport(checks, res)


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v
