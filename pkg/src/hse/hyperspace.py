"""Design, use-case and target spaces and the point encoding between them.

A :class:`HyperSpace` bundles the design variables (topological and
parametric), the use-case variables and the target indicators of a study.
Points are plain ``dict``s mapping variable names to values; the encoded
form is a flat ``numpy`` vector in the unit hypercube with one-hot blocks
for categorical variables.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

CONTINUOUS = "continuous"
DISCRETE = "discrete"
CATEGORICAL = "categorical"
KINDS = (CONTINUOUS, DISCRETE, CATEGORICAL)
ORIENTATIONS = ("minimize", "maximize")


class SpaceError(ValueError):
    """Raised for malformed space documents."""


class EncodingError(ValueError):
    """Raised when a point cannot be encoded or a vector decoded."""


@dataclass(frozen=True)
class Variable:
    """One design or use-case variable.

    ``active_when`` maps a categorical variable name to the label(s) under
    which this variable matters. Inactive values are still carried in
    points but ignored by simulators and surrogates.
    """

    name: str
    kind: str
    lower: float | None = None
    upper: float | None = None
    levels: tuple[float, ...] = ()
    labels: tuple[str, ...] = ()
    unit: str = ""
    active_when: Mapping[str, tuple[str, ...]] | None = None

    @classmethod
    def continuous(cls, name, lower, upper, unit="", active_when=None):
        return cls(name, CONTINUOUS, lower=float(lower), upper=float(upper), unit=unit,
                   active_when=_norm_active(active_when))

    @classmethod
    def discrete(cls, name, levels, unit="", active_when=None):
        return cls(name, DISCRETE, levels=tuple(float(v) for v in levels), unit=unit,
                   active_when=_norm_active(active_when))

    @classmethod
    def categorical(cls, name, labels, unit="", active_when=None):
        return cls(name, CATEGORICAL, labels=tuple(str(v) for v in labels), unit=unit,
                   active_when=_norm_active(active_when))

    @property
    def width(self) -> int:
        """Number of encoded coordinates."""
        return len(self.labels) if self.kind == CATEGORICAL else 1

    @property
    def is_numeric(self) -> bool:
        return self.kind != CATEGORICAL

    def is_active(self, point: Mapping[str, Any]) -> bool:
        if not self.active_when:
            return True
        return all(point.get(k) in v for k, v in self.active_when.items())

    def check_value(self, value) -> None:
        """Raise :class:`EncodingError` if ``value`` is not admissible."""
        if self.kind == CONTINUOUS:
            if isinstance(value, (str, bytes)) or value is None:
                raise EncodingError(f"{self.name}: expected a number, got {value!r}")
            v = float(value)
            if not (self.lower <= v <= self.upper):
                raise EncodingError(
                    f"{self.name}: value {v!r} outside [{self.lower!r}, {self.upper!r}]")
        elif self.kind == DISCRETE:
            if isinstance(value, (str, bytes)) or value is None or float(value) not in self.levels:
                raise EncodingError(f"{self.name}: {value!r} is not a declared level")
        else:
            if value not in self.labels:
                raise EncodingError(f"{self.name}: {value!r} is not a declared label")

    def encode(self, value) -> list[float]:
        self.check_value(value)
        if self.kind == CONTINUOUS:
            return [(float(value) - self.lower) / (self.upper - self.lower)]
        if self.kind == DISCRETE:
            return [self.levels.index(float(value)) / (len(self.levels) - 1)]
        return [1.0 if lab == value else 0.0 for lab in self.labels]

    def decode(self, block: Sequence[float]):
        if self.kind == CONTINUOUS:
            x = float(block[0])
            if not (-1e-12 <= x <= 1 + 1e-12):
                raise EncodingError(f"{self.name}: encoded value {x!r} outside [0, 1]")
            x = min(max(x, 0.0), 1.0)
            if x == 1.0:
                return self.upper
            return self.lower + x * (self.upper - self.lower)
        if self.kind == DISCRETE:
            pos = float(block[0]) * (len(self.levels) - 1)
            idx = round(pos)
            if abs(pos - idx) > 1e-9 or not 0 <= idx < len(self.levels):
                raise EncodingError(f"{self.name}: encoded value {block[0]!r} is not a level")
            return self.levels[idx]
        arr = np.asarray(block, dtype=float)
        ones = np.flatnonzero(arr == 1.0)
        if len(ones) != 1 or np.count_nonzero(arr) != 1:
            raise EncodingError(
                f"{self.name}: one-hot block {tuple(arr.tolist())} is not a unit basis vector")
        return self.labels[int(ones[0])]

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"name": self.name, "kind": self.kind, "unit": self.unit}
        if self.kind == CONTINUOUS:
            out["lower"] = self.lower
            out["upper"] = self.upper
        elif self.kind == DISCRETE:
            out["levels"] = list(self.levels)
        else:
            out["labels"] = list(self.labels)
        if self.active_when:
            out["active_when"] = {k: list(v) for k, v in self.active_when.items()}
        return out


def _norm_active(active_when):
    if not active_when:
        return None
    out = {}
    for k, v in active_when.items():
        out[str(k)] = (str(v),) if isinstance(v, str) else tuple(str(x) for x in v)
    return out


@dataclass(frozen=True)
class TargetIndicator:
    name: str
    orientation: str
    unit: str = ""

    @property
    def sign(self) -> float:
        """+1 for minimize, -1 for maximize (multiplies values into min-form)."""
        return 1.0 if self.orientation == "minimize" else -1.0

    def to_dict(self) -> dict:
        return {"name": self.name, "orientation": self.orientation, "unit": self.unit}


@dataclass(frozen=True)
class HyperSpace:
    design: tuple[Variable, ...]
    use_case: tuple[Variable, ...] = ()
    targets: tuple[TargetIndicator, ...] = ()
    _index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "design", tuple(self.design))
        object.__setattr__(self, "use_case", tuple(self.use_case))
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "_index", {v.name: v for v in self.variables})

    @property
    def variables(self) -> tuple[Variable, ...]:
        """Design variables followed by use-case variables."""
        return self.design + self.use_case

    @property
    def design_names(self) -> list[str]:
        return [v.name for v in self.design]

    @property
    def use_case_names(self) -> list[str]:
        return [v.name for v in self.use_case]

    @property
    def target_names(self) -> list[str]:
        return [t.name for t in self.targets]

    @property
    def encoded_width(self) -> int:
        return sum(v.width for v in self.variables)

    def variable(self, name: str) -> Variable:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown variable {name!r}") from None

    def target(self, name: str) -> TargetIndicator:
        for t in self.targets:
            if t.name == name:
                return t
        raise KeyError(f"unknown target {name!r}")

    def is_use_case(self, name: str) -> bool:
        return any(v.name == name for v in self.use_case)

    def with_design_bounds(self, bounds: Mapping[str, tuple[float, float]]) -> HyperSpace:
        """Copy with new bounds for the named continuous design variables."""
        design = []
        for v in self.design:
            if v.name in bounds:
                lo, hi = bounds[v.name]
                design.append(Variable(v.name, v.kind, lower=float(lo), upper=float(hi),
                                       unit=v.unit, active_when=v.active_when))
            else:
                design.append(v)
        return HyperSpace(tuple(design), self.use_case, self.targets)

    def to_dict(self) -> dict:
        return {
            "design": [v.to_dict() for v in self.design],
            "use_case": [v.to_dict() for v in self.use_case],
            "targets": [t.to_dict() for t in self.targets],
        }

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def validate_space(space: HyperSpace) -> list[str]:
    """Return a list of invariant violations; empty when the space is sound."""
    violations = []
    for group, variables in (("design", space.design), ("use_case", space.use_case)):
        for v in variables:
            violations.extend(f"{group}.{v.name}: {msg}" for msg in _variable_violations(v))
    if not space.design:
        violations.append("design: at least one design variable is required")
    if not space.targets:
        violations.append("targets: at least one target indicator is required")
    for t in space.targets:
        if t.orientation not in ORIENTATIONS:
            violations.append(
                f"targets.{t.name}: orientation must be 'minimize' or 'maximize', got {t.orientation!r}")
        if not _is_identifier(t.name):
            violations.append(f"targets.{t.name!r}: invalid name")

    seen: dict[str, str] = {}
    for group, names in (("design", [v.name for v in space.design]),
                         ("use_case", [v.name for v in space.use_case]),
                         ("targets", [t.name for t in space.targets])):
        for name in names:
            if name in seen:
                violations.append(f"{group}.{name}: name collision with {seen[name]}.{name}")
            else:
                seen[name] = group

    cats = {v.name: v for v in space.variables if v.kind == CATEGORICAL}
    for v in space.variables:
        for key, labels in (v.active_when or {}).items():
            if key not in cats:
                violations.append(f"{v.name}: active_when refers to non-categorical or unknown {key!r}")
            elif key == v.name:
                violations.append(f"{v.name}: active_when refers to itself")
            else:
                bad = [lab for lab in labels if lab not in cats[key].labels]
                if bad:
                    violations.append(f"{v.name}: active_when uses undeclared labels {bad} of {key}")
    return sorted(violations)


def _is_identifier(name) -> bool:
    return isinstance(name, str) and bool(name) and all(c.isalnum() or c in "_-." for c in name)


def _variable_violations(v: Variable) -> list[str]:
    out = []
    if not _is_identifier(v.name):
        out.append("invalid name")
    if v.kind == CONTINUOUS:
        lo, hi = v.lower, v.upper
        if lo is None or hi is None or not (math.isfinite(lo) and math.isfinite(hi)):
            out.append("bounds must be finite")
        elif not lo < hi:
            out.append(f"degenerate bounds (lower={lo!r} must be < upper={hi!r})")
    elif v.kind == DISCRETE:
        lv = v.levels
        if len(lv) < 2:
            out.append("discrete variable needs at least 2 levels")
        elif not all(math.isfinite(x) for x in lv) or any(b <= a for a, b in zip(lv, lv[1:])):
            out.append("levels must be finite and strictly increasing")
    elif v.kind == CATEGORICAL:
        if len(v.labels) < 2:
            out.append("categorical variable needs at least 2 labels")
        elif len(set(v.labels)) != len(v.labels):
            out.append("labels must be distinct")
    else:
        out.append(f"unknown kind {v.kind!r}")
    return out


def check_point(point: Mapping[str, Any], variables: Sequence[Variable]) -> None:
    names = [v.name for v in variables]
    extra = set(point) - set(names)
    if extra:
        raise EncodingError(f"unknown variables {sorted(extra)}")
    for v in variables:
        if v.name not in point:
            raise EncodingError(f"{v.name}: missing value")
        v.check_value(point[v.name])


def encode(point: Mapping[str, Any], space: HyperSpace, part: str = "both") -> np.ndarray:
    """Encode a point into the unit hypercube.

    ``part`` selects ``"design"``, ``"use_case"`` or ``"both"`` (a merged
    design+use-case mapping, the default).
    """
    variables = _part(space, part)
    check_point(point, variables)
    out: list[float] = []
    for v in variables:
        out.extend(v.encode(point[v.name]))
    return np.asarray(out, dtype=float)


def decode(vector: Sequence[float], space: HyperSpace, part: str = "both") -> dict:
    variables = _part(space, part)
    width = sum(v.width for v in variables)
    if len(vector) != width:
        raise EncodingError(f"vector has {len(vector)} entries, expected {width}")
    out = {}
    pos = 0
    for v in variables:
        out[v.name] = v.decode(vector[pos:pos + v.width])
        pos += v.width
    return out


def _part(space: HyperSpace, part: str) -> tuple[Variable, ...]:
    if part == "design":
        return space.design
    if part == "use_case":
        return space.use_case
    if part == "both":
        return space.variables
    raise ValueError(f"unknown part {part!r}")


# -- documents ---------------------------------------------------------------

_VAR_KEYS = {
    CONTINUOUS: {"name", "kind", "unit", "lower", "upper", "active_when"},
    DISCRETE: {"name", "kind", "unit", "levels", "active_when"},
    CATEGORICAL: {"name", "kind", "unit", "labels", "active_when"},
}


def space_from_dict(doc: Mapping[str, Any]) -> HyperSpace:
    """Build a space from its JSON tree; unknown keys are rejected."""
    if not isinstance(doc, Mapping):
        raise SpaceError("space document must be an object")
    unknown = set(doc) - {"design", "use_case", "targets"}
    if unknown:
        raise SpaceError(f"unknown top-level keys {sorted(unknown)}")
    design = [_variable_from_dict(v, "design") for v in doc.get("design", [])]
    use_case = [_variable_from_dict(v, "use_case") for v in doc.get("use_case", [])]
    targets = []
    for t in doc.get("targets", []):
        if not isinstance(t, Mapping):
            raise SpaceError("targets entries must be objects")
        extra = set(t) - {"name", "orientation", "unit"}
        if extra:
            raise SpaceError(f"target {t.get('name')!r}: unknown keys {sorted(extra)}")
        if "orientation" not in t:
            raise SpaceError(f"target {t.get('name')!r}: orientation is required")
        if "name" not in t:
            raise SpaceError("target without name")
        targets.append(TargetIndicator(str(t["name"]), str(t["orientation"]), str(t.get("unit", ""))))
    return HyperSpace(tuple(design), tuple(use_case), tuple(targets))


def _variable_from_dict(doc, group: str) -> Variable:
    if not isinstance(doc, Mapping):
        raise SpaceError(f"{group} entries must be objects")
    kind = doc.get("kind")
    name = doc.get("name")
    if name is None:
        raise SpaceError(f"{group}: variable without name")
    if kind not in KINDS:
        raise SpaceError(f"{group}.{name}: unknown kind {kind!r}")
    extra = set(doc) - _VAR_KEYS[kind]
    if extra:
        raise SpaceError(f"{group}.{name}: unknown keys {sorted(extra)}")
    unit = str(doc.get("unit", ""))
    active = doc.get("active_when")
    try:
        if kind == CONTINUOUS:
            return Variable.continuous(str(name), doc["lower"], doc["upper"], unit, active)
        if kind == DISCRETE:
            return Variable.discrete(str(name), doc["levels"], unit, active)
        return Variable.categorical(str(name), doc["labels"], unit, active)
    except KeyError as exc:
        raise SpaceError(f"{group}.{name}: missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise SpaceError(f"{group}.{name}: {exc}") from None


def load_space(path: str | Path) -> HyperSpace:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpaceError(f"{path}: not valid JSON ({exc})") from None
    return space_from_dict(doc)


def dump_space(space: HyperSpace) -> str:
    return json.dumps(space.to_dict(), indent=2) + "\n"
