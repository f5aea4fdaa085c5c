"""Admissible strings: point masses and piecewise-constant densities on [0, l].

All value types are frozen dataclasses holding read-only numpy arrays, so they
can be shared freely between threads and used as dictionary keys by identity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

import tomli_w


class MeasureError(ValueError):
    """Invalid string description (bad position, mass, layer or interval)."""


def _frozen(values: Iterable[float]) -> np.ndarray:
    arr = np.array(list(values), dtype=float)
    arr.setflags(write=False)
    return arr


def _check_finite(name: str, values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise MeasureError(f"{name} must be finite, got {values.tolist()}")


@dataclass(frozen=True)
class Interval:
    length: float

    def __post_init__(self):
        if not (math.isfinite(self.length) and self.length > 0):
            raise MeasureError(f"interval length must be positive and finite, got {self.length}")


@dataclass(frozen=True)
class MassBudget:
    m: float

    def __post_init__(self):
        if not (math.isfinite(self.m) and self.m > 0):
            raise MeasureError(f"mass budget must be positive and finite, got {self.m}")


@dataclass(frozen=True, eq=False)
class DiscreteString:
    """Point masses ``masses[j]`` at strictly increasing ``positions[j]``.

    Build through :func:`make_discrete_string`, which canonicalizes the input.
    """

    positions: np.ndarray
    masses: np.ndarray
    interval: Interval

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def ell(self) -> float:
        return self.interval.length

    def __eq__(self, other):
        if not isinstance(other, DiscreteString):
            return NotImplemented
        return (self.interval == other.interval
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.masses, other.masses))

    def __hash__(self):
        return hash((self.interval, self.positions.tobytes(), self.masses.tobytes()))

    def __repr__(self):
        atoms = ", ".join(f"{mu:.6g}@{a:.6g}" for a, mu in zip(self.positions, self.masses))
        return f"DiscreteString([{atoms}], ell={self.ell:g})"


@dataclass(frozen=True, eq=False)
class LayeredDensity:
    """Density ``values[k]`` on ``(breakpoints[k], breakpoints[k+1])``."""

    breakpoints: np.ndarray
    values: np.ndarray
    interval: Interval

    def __post_init__(self):
        x, c = self.breakpoints, self.values
        _check_finite("breakpoints", x)
        _check_finite("densities", c)
        if len(x) != len(c) + 1 or len(c) == 0:
            raise MeasureError("need len(breakpoints) == len(values) + 1 >= 2")
        if x[0] != 0.0 or x[-1] != self.interval.length:
            raise MeasureError("breakpoints must start at 0 and end at the interval length")
        if np.any(np.diff(x) <= 0):
            raise MeasureError("breakpoints must be strictly increasing")
        if np.any(c < 0):
            raise MeasureError("densities must be nonnegative")

    @classmethod
    def zero(cls, interval: Interval) -> "LayeredDensity":
        return cls(_frozen([0.0, interval.length]), _frozen([0.0]), interval)

    @classmethod
    def from_layers(cls, layers: Sequence[Sequence[float]], interval: Interval) -> "LayeredDensity":
        """Build from ``[[x_lo, x_hi, c], ...]``; gaps between layers get density 0."""
        ell = interval.length
        rows = sorted((float(lo), float(hi), float(c)) for lo, hi, c in layers)
        xs, cs = [0.0], []
        for lo, hi, c in rows:
            if not all(math.isfinite(v) for v in (lo, hi, c)):
                raise MeasureError(f"layer {[lo, hi, c]} has non-finite entries")
            if lo < 0 or hi > ell or lo >= hi:
                raise MeasureError(f"layer [{lo}, {hi}] is empty or outside [0, {ell}]")
            if c < 0:
                raise MeasureError(f"layer [{lo}, {hi}] has negative density {c}")
            if lo < xs[-1]:
                raise MeasureError(f"layer [{lo}, {hi}] overlaps the previous layer")
            if lo > xs[-1]:
                xs.append(lo)
                cs.append(0.0)
            xs.append(hi)
            cs.append(c)
        if xs[-1] < ell:
            xs.append(ell)
            cs.append(0.0)
        if not cs:
            return cls.zero(interval)
        return cls(_frozen(xs), _frozen(cs), interval)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values > 0)

    def layers(self) -> list[tuple[float, float, float]]:
        """Nonzero layers as ``(x_lo, x_hi, c)`` triples."""
        x, c = self.breakpoints, self.values
        return [(float(x[k]), float(x[k + 1]), float(c[k])) for k in range(len(c)) if c[k] > 0]

    def __eq__(self, other):
        if not isinstance(other, LayeredDensity):
            return NotImplemented
        return self.layers() == other.layers() and self.interval == other.interval

    def __hash__(self):
        return hash((self.interval, tuple(self.layers())))


@dataclass(frozen=True, eq=False)
class StringMeasure:
    """``B(x) dx + sum_j mu_j delta(x - a_j)`` on a common interval."""

    discrete: DiscreteString
    density: LayeredDensity = field(default=None)

    def __post_init__(self):
        if self.density is None:
            object.__setattr__(self, "density", LayeredDensity.zero(self.discrete.interval))
        if self.density.interval != self.discrete.interval:
            raise MeasureError("discrete and density parts live on different intervals")

    @property
    def interval(self) -> Interval:
        return self.discrete.interval

    @property
    def ell(self) -> float:
        return self.discrete.interval.length

    @property
    def is_discrete(self) -> bool:
        return self.density.is_zero

    def __eq__(self, other):
        if not isinstance(other, StringMeasure):
            return NotImplemented
        return self.discrete == other.discrete and self.density == other.density

    def __hash__(self):
        return hash((self.discrete, self.density))


MeasureLike = Union[DiscreteString, StringMeasure]


def make_discrete_string(positions: Sequence[float], masses: Sequence[float],
                         interval: Union[Interval, float]) -> DiscreteString:
    """Canonical point-mass string.

    Positions are sorted, bitwise-equal positions are merged by summing their
    masses, and zero masses are dropped.
    """
    if not isinstance(interval, Interval):
        interval = Interval(float(interval))
    a = np.asarray(positions, dtype=float).ravel()
    mu = np.asarray(masses, dtype=float).ravel()
    if a.shape != mu.shape:
        raise MeasureError(f"{a.size} positions but {mu.size} masses")
    _check_finite("positions", a)
    _check_finite("masses", mu)
    if np.any(mu < 0):
        raise MeasureError(f"masses must be nonnegative, got {mu.tolist()}")
    if np.any((a < 0) | (a > interval.length)):
        raise MeasureError(f"positions must lie in [0, {interval.length}], got {a.tolist()}")
    merged: dict[float, float] = {}
    for x, m in zip(a.tolist(), mu.tolist()):
        merged[x] = merged.get(x, 0.0) + m
    xs = sorted(x for x, m in merged.items() if m > 0)
    return DiscreteString(_frozen(xs), _frozen(merged[x] for x in xs), interval)


def zero_string(interval: Union[Interval, float]) -> DiscreteString:
    return make_discrete_string([], [], interval)


def as_measure(obj: MeasureLike) -> StringMeasure:
    if isinstance(obj, StringMeasure):
        return obj
    if isinstance(obj, DiscreteString):
        return StringMeasure(obj)
    raise TypeError(f"expected DiscreteString or StringMeasure, got {type(obj).__name__}")


def layered_measure(layers: Sequence[Sequence[float]], ell: float,
                    point_masses: Sequence[Sequence[float]] = ()) -> StringMeasure:
    """Convenience constructor from ``[[x_lo, x_hi, c], ...]`` and ``[[a, mu], ...]``."""
    interval = Interval(float(ell))
    pos = [p for p, _ in point_masses]
    mas = [m for _, m in point_masses]
    return StringMeasure(make_discrete_string(pos, mas, interval),
                         LayeredDensity.from_layers(layers, interval))


def total_mass(measure: MeasureLike) -> float:
    meas = as_measure(measure)
    dens = meas.density
    return float(np.sum(meas.discrete.masses) + np.dot(dens.values, np.diff(dens.breakpoints)))


def a_star(measure: MeasureLike) -> float:
    """Left end of the support; the interval length for the zero measure."""
    meas = as_measure(measure)
    candidates = [meas.ell]
    if meas.discrete.n:
        candidates.append(float(meas.discrete.positions[0]))
    dens = meas.density
    nz = np.nonzero(dens.values > 0)[0]
    if nz.size:
        candidates.append(float(dens.breakpoints[nz[0]]))
    return min(candidates)


# ---------------------------------------------------------------------------
# String description files


@dataclass(frozen=True)
class StringDescription:
    measure: StringMeasure
    budget: MassBudget | None = None


def _require(doc: dict, key: str):
    if key not in doc:
        raise MeasureError(f"missing field '{key}'")
    return doc[key]


def description_from_dict(doc: dict) -> StringDescription:
    if not isinstance(doc, dict):
        raise MeasureError("string description must be a table/object")
    unknown = set(doc) - {"length", "budget", "point_masses", "layers"}
    if unknown:
        raise MeasureError(f"unknown field(s): {', '.join(sorted(unknown))}")
    try:
        ell = float(_require(doc, "length"))
    except (TypeError, ValueError) as exc:
        raise MeasureError(f"field 'length': {exc}") from None
    interval = Interval(ell)
    atoms = doc.get("point_masses", [])
    try:
        pos = [float(a) for a, _ in atoms]
        mas = [float(mu) for _, mu in atoms]
    except (TypeError, ValueError):
        raise MeasureError("field 'point_masses' must be a list of [a, mu] pairs") from None
    layers = doc.get("layers", [])
    try:
        rows = [(float(lo), float(hi), float(c)) for lo, hi, c in layers]
    except (TypeError, ValueError):
        raise MeasureError("field 'layers' must be a list of [x_lo, x_hi, c] triples") from None
    try:
        discrete = make_discrete_string(pos, mas, interval)
    except MeasureError as exc:
        raise MeasureError(f"field 'point_masses': {exc}") from None
    try:
        density = LayeredDensity.from_layers(rows, interval)
    except MeasureError as exc:
        raise MeasureError(f"field 'layers': {exc}") from None
    budget = None
    if "budget" in doc:
        try:
            budget = MassBudget(float(doc["budget"]))
        except (TypeError, ValueError, MeasureError) as exc:
            raise MeasureError(f"field 'budget': {exc}") from None
    return StringDescription(StringMeasure(discrete, density), budget)


def description_to_dict(desc: StringDescription) -> dict:
    meas = desc.measure
    doc: dict = {"length": meas.ell}
    if desc.budget is not None:
        doc["budget"] = desc.budget.m
    doc["point_masses"] = [[float(a), float(mu)] for a, mu in
                           zip(meas.discrete.positions, meas.discrete.masses)]
    doc["layers"] = [list(layer) for layer in meas.density.layers()]
    return doc


def parse_description(text: str, fmt: str) -> StringDescription:
    """Parse TOML (``fmt='toml'``) or JSON (``fmt='json'``) text."""
    try:
        doc = tomllib.loads(text) if fmt == "toml" else json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise MeasureError(f"malformed {fmt.upper()}: {exc}") from None
    return description_from_dict(doc)


def serialize_description(desc: StringDescription, fmt: str) -> str:
    doc = description_to_dict(desc)
    if fmt == "toml":
        return tomli_w.dumps(doc)
    return json.dumps(doc, indent=2) + "\n"


def _format_of(path: Path) -> str:
    return "json" if path.suffix.lower() == ".json" else "toml"


def load_description(path: Union[str, Path]) -> StringDescription:
    path = Path(path)
    return parse_description(path.read_text(), _format_of(path))


def save_description(desc: StringDescription, path: Union[str, Path]) -> None:
    path = Path(path)
    path.write_text(serialize_description(desc, _format_of(path)))
