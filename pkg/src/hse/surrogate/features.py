"""Feature construction shared by the polynomial and Kriging surrogates."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from ..hyperspace import CATEGORICAL, CONTINUOUS, HyperSpace, Variable


def monomial_exponents(n_vars: int, degree: int) -> list[tuple[int, ...]]:
    """All exponent tuples of total degree <= ``degree``, graded then lexicographic."""
    out = []
    for total in range(degree + 1):
        block = [e for e in itertools.product(range(total + 1), repeat=n_vars) if sum(e) == total]
        out.extend(sorted(block, reverse=True))
    return out


def monomial_name(exps: tuple[int, ...], names: Sequence[str]) -> str:
    parts = [n if e == 1 else f"{n}^{e}" for n, e in zip(names, exps) if e]
    return "*".join(parts) or "1"


def scale_pm1(var: Variable, value) -> float:
    """Affine map of a numeric variable's range onto [-1, 1]."""
    if var.kind == CONTINUOUS:
        lo, hi = var.lower, var.upper
    else:
        lo, hi = var.levels[0], var.levels[-1]
    return 2.0 * (float(value) - lo) / (hi - lo) - 1.0


def scale_unit(var: Variable, value) -> float:
    if var.kind == CONTINUOUS:
        return (float(value) - var.lower) / (var.upper - var.lower)
    return var.levels.index(float(value)) / (len(var.levels) - 1)


def categorical_variables(space: HyperSpace) -> list[Variable]:
    return [v for v in space.variables if v.kind == CATEGORICAL]


def group_key(space: HyperSpace, point: Mapping[str, Any], joint: bool) -> tuple[str, ...]:
    if joint:
        return ()
    return tuple(point[v.name] for v in categorical_variables(space))


def group_label(space: HyperSpace, key: tuple[str, ...]) -> str:
    cats = categorical_variables(space)
    if not key:
        return "all"
    return ",".join(f"{v.name}={k}" for v, k in zip(cats, key))


def active_numeric(space: HyperSpace, key: tuple[str, ...], joint: bool) -> list[Variable]:
    """Numeric variables that matter inside a group.

    Per-category groups drop variables whose ``active_when`` excludes the
    group's labels. A joint fit keeps every numeric variable.
    """
    numeric = [v for v in space.variables if v.is_numeric]
    if joint:
        return numeric
    labels = {v.name: k for v, k in zip(categorical_variables(space), key)}
    return [v for v in numeric if v.is_active(labels)]


@dataclass(frozen=True)
class PolyFeatureMap:
    """Monomials over [-1, 1]-scaled numeric inputs, plus (joint fits only)
    treatment-coded categorical main effects and category x monomial
    interactions up to degree ``min(p, 2)``."""

    numeric: tuple[str, ...]
    exponents: tuple[tuple[int, ...], ...]
    categorical: tuple[tuple[str, tuple[str, ...]], ...]
    interactions: tuple[tuple[str, str, int], ...]

    @classmethod
    def build(cls, space: HyperSpace, key: tuple[str, ...], degree: int, joint: bool):
        numeric = active_numeric(space, key, joint)
        exps = monomial_exponents(len(numeric), degree)
        cats: list[tuple[str, tuple[str, ...]]] = []
        inter: list[tuple[str, str, int]] = []
        if joint:
            plain = [i for i, v in enumerate(numeric) if not v.active_when]
            for c in categorical_variables(space):
                cats.append((c.name, c.labels[1:]))
                for lab in c.labels[1:]:
                    for m, e in enumerate(exps):
                        total = sum(e)
                        if 1 <= total <= min(degree, 2) and all(
                                e[i] == 0 for i in range(len(e)) if i not in plain):
                            inter.append((c.name, lab, m))
        return cls(tuple(v.name for v in numeric), tuple(exps), tuple(cats), tuple(inter))

    @property
    def n_features(self) -> int:
        return len(self.exponents) + sum(len(l) for _, l in self.categorical) + len(self.interactions)

    def names(self) -> list[str]:
        out = [monomial_name(e, self.numeric) for e in self.exponents]
        for c, labels in self.categorical:
            out.extend(f"[{c}={lab}]" for lab in labels)
        for c, lab, m in self.interactions:
            out.append(f"[{c}={lab}]*{monomial_name(self.exponents[m], self.numeric)}")
        return out

    def matrix(self, space: HyperSpace, rows: Sequence[Mapping[str, Any]]) -> np.ndarray:
        n = len(rows)
        z = np.zeros((n, len(self.numeric)))
        for j, name in enumerate(self.numeric):
            var = space.variable(name)
            for i, r in enumerate(rows):
                z[i, j] = scale_pm1(var, r[name]) if var.is_active(r) else 0.0
        cols = [np.prod(z ** np.asarray(e), axis=1) if len(e) else np.ones(n) for e in self.exponents]
        mono = np.column_stack(cols) if cols else np.ones((n, 1))
        extra = []
        for c, labels in self.categorical:
            for lab in labels:
                extra.append(np.array([1.0 if r[c] == lab else 0.0 for r in rows]))
        for c, lab, m in self.interactions:
            ind = np.array([1.0 if r[c] == lab else 0.0 for r in rows])
            extra.append(ind * mono[:, m])
        if extra:
            return np.column_stack([mono] + extra)
        return mono

    def to_dict(self) -> dict:
        return {"numeric": list(self.numeric), "exponents": [list(e) for e in self.exponents],
                "categorical": [[c, list(l)] for c, l in self.categorical],
                "interactions": [list(t) for t in self.interactions]}

    @classmethod
    def from_dict(cls, d: Mapping) -> PolyFeatureMap:
        return cls(tuple(d["numeric"]), tuple(tuple(e) for e in d["exponents"]),
                   tuple((c, tuple(l)) for c, l in d["categorical"]),
                   tuple((c, lab, int(m)) for c, lab, m in d["interactions"]))


@dataclass(frozen=True)
class UnitFeatureMap:
    """Encoded [0, 1] coordinates (Kriging inputs); inactive coordinates are 0."""

    numeric: tuple[str, ...]
    categorical: tuple[tuple[str, tuple[str, ...]], ...]

    @classmethod
    def build(cls, space: HyperSpace, key: tuple[str, ...], joint: bool):
        numeric = active_numeric(space, key, joint)
        cats = [(c.name, c.labels) for c in categorical_variables(space)] if joint else []
        return cls(tuple(v.name for v in numeric), tuple(cats))

    def matrix(self, space: HyperSpace, rows: Sequence[Mapping[str, Any]]) -> np.ndarray:
        cols = []
        for name in self.numeric:
            var = space.variable(name)
            cols.append([scale_unit(var, r[name]) if var.is_active(r) else 0.0 for r in rows])
        for c, labels in self.categorical:
            for lab in labels:
                cols.append([1.0 if r[c] == lab else 0.0 for r in rows])
        if not cols:
            return np.zeros((len(rows), 0))
        return np.array(cols, dtype=float).T

    def to_dict(self) -> dict:
        return {"numeric": list(self.numeric),
                "categorical": [[c, list(l)] for c, l in self.categorical]}

    @classmethod
    def from_dict(cls, d: Mapping) -> UnitFeatureMap:
        return cls(tuple(d["numeric"]), tuple((c, tuple(l)) for c, l in d["categorical"]))
