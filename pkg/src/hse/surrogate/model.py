"""Fitted surrogate models, validation reports and their JSON form."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import stats

from ..io import atomic_write_text
from ..hyperspace import CATEGORICAL, HyperSpace, check_point, space_from_dict
from ..rng import Xoshiro256
from ..runner import OK, ResultStore
from .features import PolyFeatureMap, UnitFeatureMap, group_key, group_label
from .kriging import KrigingPredictor, deduplicate, search_theta
from .polynomial import FitError, SampleSizeError, loo_residuals, ols

POLYNOMIAL = "polynomial"
KRIGING = "kriging"


class SpaceMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SurrogateConfig:
    """Family and hyperparameters of a surrogate, without any data."""

    family: str = POLYNOMIAL
    degree: int = 2
    nugget: float = 1e-8
    theta_bounds: tuple[float, float] = (1e-2, 1e2)
    grid_points: int = 25
    joint: bool = False

    @property
    def label(self) -> str:
        if self.family == POLYNOMIAL:
            return f"poly-p{self.degree}"
        return f"kriging-nugget{self.nugget:g}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["theta_bounds"] = list(self.theta_bounds)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> SurrogateConfig:
        d = dict(d)
        if "theta_bounds" in d:
            d["theta_bounds"] = tuple(d["theta_bounds"])
        return cls(**d)


@dataclass(frozen=True)
class ValidationReport:
    r_squared: float
    adjusted_r_squared: float | None
    loocv_rmse: float
    f_statistic: float | None
    p_value: float | None
    n_train: int
    validation_area: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: _jsonable(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: Mapping) -> ValidationReport:
        d = dict(d)
        for k in ("r_squared", "adjusted_r_squared", "loocv_rmse", "f_statistic", "p_value"):
            if d.get(k) is not None:
                d[k] = float(d[k])
        return cls(**d)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, Mapping):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


@dataclass(frozen=True)
class Prediction:
    values: dict[str, float]
    variance: dict[str, float] | None
    extrapolated: bool


class SurrogateModel:
    """Per-target scalar surrogates, one set per category group.

    ``groups`` maps a tuple of categorical labels (empty for joint fits) to
    either polynomial coefficients or Kriging predictors per target.
    """

    def __init__(self, space: HyperSpace, config: SurrogateConfig, groups: dict,
                 reports: dict[str, ValidationReport], validation_area: dict):
        self.space = space
        self.config = config
        self.groups = groups
        self.reports = reports
        self.validation_area = validation_area

    @property
    def family(self) -> str:
        return self.config.family

    @property
    def space_hash(self) -> str:
        return self.space.content_hash()

    @property
    def n_params(self) -> int:
        """Parameters of one target's model summed over groups.

        Polynomial: coefficient count. Kriging: theta entries + process mean
        + process variance + one weight per training point.
        """
        total = 0
        for g in self.groups.values():
            if self.family == POLYNOMIAL:
                total += len(g["coef"])
            else:
                pred = next(iter(g["predictors"].values()))
                total += len(pred.theta) + 2 + len(pred.y)
        return total

    def _check_space(self, space: HyperSpace | None) -> None:
        if space is not None and space.content_hash() != self.space_hash:
            raise SpaceMismatchError("point space does not match the model's space")

    def is_extrapolation(self, point: Mapping[str, Any]) -> bool:
        for name, area in self.validation_area.items():
            var = self.space.variable(name)
            if not var.is_active(point):
                continue
            if var.kind == CATEGORICAL:
                if point[name] not in area:
                    return True
            else:
                lo, hi = area
                v = float(point[name])
                if v < lo or v > hi:
                    return True
        return False

    def predict_many(self, rows: Sequence[Mapping[str, Any]], space: HyperSpace | None = None,
                     return_var: bool = False):
        """Predict for many points.

        Returns ``(values, variance, extrapolated)`` with shapes ``(n, k)``,
        ``(n, k)`` or ``None``, and ``(n,)``.
        """
        self._check_space(space)
        targets = self.space.target_names
        n = len(rows)
        values = np.empty((n, len(targets)))
        var = np.full((n, len(targets)), np.nan) if return_var else None
        buckets: dict[tuple, list[int]] = {}
        for i, r in enumerate(rows):
            check_point(r, self.space.variables)
            buckets.setdefault(group_key(self.space, r, self.config.joint), []).append(i)
        for key, idx in buckets.items():
            if key not in self.groups:
                raise FitError(f"no model for group {group_label(self.space, key)}: "
                               "no training data in that category")
            g = self.groups[key]
            sub = [rows[i] for i in idx]
            if self.family == POLYNOMIAL:
                x = g["features"].matrix(self.space, sub)
                values[idx] = x @ g["coef"]
            else:
                x = g["features"].matrix(self.space, sub)
                for j, t in enumerate(targets):
                    mu, v = g["predictors"][t].predict(x, return_var)
                    values[idx, j] = mu
                    if return_var:
                        var[idx, j] = v
        extrap = np.array([self.is_extrapolation(r) for r in rows], dtype=bool)
        return values, var, extrap

    def predict(self, design: Mapping[str, Any], use_case: Mapping[str, Any] | None = None,
                space: HyperSpace | None = None) -> Prediction:
        point = {**design, **(use_case or {})}
        values, var, extrap = self.predict_many([point], space, return_var=self.family == KRIGING)
        names = self.space.target_names
        return Prediction({t: float(values[0, j]) for j, t in enumerate(names)},
                          {t: float(var[0, j]) for j, t in enumerate(names)} if var is not None else None,
                          bool(extrap[0]))

    # -- serialization -------------------------------------------------------------

    def to_dict(self) -> dict:
        groups = []
        for key, g in self.groups.items():
            entry = {"key": list(key), "features": g["features"].to_dict()}
            if self.family == POLYNOMIAL:
                entry["feature_names"] = g["features"].names()
                entry["coefficients"] = {t: g["coef"][:, j].tolist()
                                         for j, t in enumerate(self.space.target_names)}
            else:
                entry["predictors"] = {t: p.to_dict() for t, p in g["predictors"].items()}
            groups.append(entry)
        return {
            "format": "hse-surrogate/1",
            "family": self.family,
            "config": self.config.to_dict(),
            "space": self.space.to_dict(),
            "space_hash": self.space_hash,
            "validation_area": {k: list(v) for k, v in self.validation_area.items()},
            "reports": {t: r.to_dict() for t, r in self.reports.items()},
            "groups": groups,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> SurrogateModel:
        space = space_from_dict(d["space"])
        if space.content_hash() != d["space_hash"]:
            raise SpaceMismatchError("model document's space hash does not match its space")
        config = SurrogateConfig.from_dict(d["config"])
        groups = {}
        for entry in d["groups"]:
            key = tuple(entry["key"])
            if config.family == POLYNOMIAL:
                feats = PolyFeatureMap.from_dict(entry["features"])
                coef = np.array([entry["coefficients"][t] for t in space.target_names]).T
                groups[key] = {"features": feats, "coef": coef.reshape(feats.n_features, -1)}
            else:
                groups[key] = {"features": UnitFeatureMap.from_dict(entry["features"]),
                               "predictors": {t: KrigingPredictor.from_dict(p)
                                              for t, p in entry["predictors"].items()}}
        area = {}
        for k, v in d["validation_area"].items():
            var = space.variable(k)
            area[k] = tuple(v) if var.kind == CATEGORICAL else (float(v[0]), float(v[1]))
        reports = {t: ValidationReport.from_dict(_unjson(r)) for t, r in d["reports"].items()}
        return cls(space, config, groups, reports, area)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def _unjson(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, str) and v in ("inf", "-inf", "nan"):
            v = float(v)
        out[k] = v
    return out


def save_model(model: SurrogateModel, path: str | Path) -> None:
    atomic_write_text(path, model.to_json())


def load_model(path: str | Path) -> SurrogateModel:
    return SurrogateModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# -- fitting -------------------------------------------------------------------------

def _training_rows(store: ResultStore, space: HyperSpace):
    if store.space.content_hash() != space.content_hash():
        raise SpaceMismatchError("result store was produced for a different space")
    rows, ys = [], []
    for r in store:
        if r.status != OK:
            continue
        rows.append(r.values)
        ys.append([r.targets[t] for t in space.target_names])
    return rows, np.array(ys, dtype=float).reshape(len(rows), len(space.targets))


def _validation_area(space: HyperSpace, rows) -> dict:
    area = {}
    for v in space.variables:
        vals = [r[v.name] for r in rows]
        if v.kind == CATEGORICAL:
            area[v.name] = tuple(lab for lab in v.labels if lab in set(vals))
        else:
            f = [float(x) for x in vals]
            area[v.name] = (min(f), max(f))
    return area


def _group_rows(space, rows, joint):
    groups: dict[tuple, list[int]] = {}
    for i, r in enumerate(rows):
        groups.setdefault(group_key(space, r, joint), []).append(i)
    return dict(sorted(groups.items()))


def fit(store: ResultStore, space: HyperSpace, config: SurrogateConfig) -> SurrogateModel:
    if config.family == POLYNOMIAL:
        return fit_polynomial(store, space, config.degree, joint=config.joint)
    if config.family == KRIGING:
        return fit_kriging(store, space, config.theta_bounds, config.nugget,
                           grid_points=config.grid_points, joint=config.joint)
    raise ValueError(f"unknown surrogate family {config.family!r}")


def fit_polynomial(store: ResultStore, space: HyperSpace, degree: int = 2,
                   joint: bool = False) -> SurrogateModel:
    """Per-target OLS on monomials of total degree <= ``degree``.

    With ``joint=False`` (default) one polynomial is fitted per combination
    of categorical labels; ``joint=True`` fits one model with categorical
    main effects and interactions.
    """
    if not 1 <= degree <= 4:
        raise ValueError(f"degree must be in 1..4, got {degree}")
    config = SurrogateConfig(POLYNOMIAL, degree=degree, joint=joint)
    rows, y = _training_rows(store, space)
    if not rows:
        raise SampleSizeError(1, 0)
    groups = {}
    fitted = np.empty_like(y)
    loo = np.empty_like(y)
    q_total = 0
    for key, idx in _group_rows(space, rows, joint).items():
        feats = PolyFeatureMap.build(space, key, degree, joint)
        sub = [rows[i] for i in idx]
        if len(sub) < feats.n_features:
            raise SampleSizeError(feats.n_features, len(sub), group_label(space, key))
        x = feats.matrix(space, sub)
        res = ols(x, y[idx], feats.names())
        groups[key] = {"features": feats, "coef": res.coef}
        fitted[idx] = res.fitted
        loo[idx] = loo_residuals(y[idx], res)
        q_total += feats.n_features
    area = _validation_area(space, rows)
    reports = {t: _ols_report(y[:, j], fitted[:, j], loo[:, j], q_total, len(groups), area)
               for j, t in enumerate(space.target_names)}
    return SurrogateModel(space, config, groups, reports, area)


def _r_squared(sse: float, sst: float) -> float:
    if sst <= 0:
        return 1.0 if sse <= 1e-24 else -math.inf
    return 1.0 - sse / sst


def _ols_report(y, fitted, loo, q, n_groups, area) -> ValidationReport:
    n = len(y)
    resid = y - fitted
    sse = float(resid @ resid)
    dev = y - y.mean()
    sst = float(dev @ dev)
    scale = max(sst, float(y @ y), 1e-300)
    if sse <= 1e-24 * scale:
        sse = 0.0
    r2 = min(_r_squared(sse, sst), 1.0)
    loocv = float(np.sqrt(np.mean(loo ** 2)))
    df_model, df_resid = q - 1, n - q
    adj = None
    f_stat = p = None
    if df_resid > 0:
        adj = 1.0 - (1.0 - r2) * (n - 1) / df_resid if math.isfinite(r2) else r2
        if df_model > 0 and sst > 0:
            if sse == 0.0:
                f_stat, p = math.inf, 0.0
            else:
                f_stat = ((sst - sse) / df_model) / (sse / df_resid)
                p = float(stats.f.sf(f_stat, df_model, df_resid))
                p = min(max(p, 0.0), 1.0)
    return ValidationReport(r2, adj, loocv, f_stat, p, n, dict(area))


def fit_kriging(store: ResultStore, space: HyperSpace,
                theta_bounds: tuple[float, float] = (1e-2, 1e2), nugget: float = 1e-8,
                grid_points: int = 25, joint: bool = False) -> SurrogateModel:
    """Ordinary Kriging per target (and per category group unless ``joint``)."""
    if not nugget > 0:
        raise ValueError("nugget must be positive")
    config = SurrogateConfig(KRIGING, nugget=nugget, theta_bounds=tuple(theta_bounds),
                             grid_points=grid_points, joint=joint)
    rows, y = _training_rows(store, space)
    groups = {}
    fitted = np.empty_like(y)
    loo = np.full_like(y, np.nan)
    for key, idx in _group_rows(space, rows, joint).items():
        feats = UnitFeatureMap.build(space, key, joint)
        sub = [rows[i] for i in idx]
        x = feats.matrix(space, sub)
        preds = {}
        for j, t in enumerate(space.target_names):
            xu, yu = deduplicate(x, y[idx, j])
            if len(yu) < 4:
                raise SampleSizeError(4, len(yu), group_label(space, key))
            sd = float(np.std(yu)) or 1.0
            theta, _ = search_theta(xu, (yu - yu.mean()) / sd, nugget, tuple(theta_bounds),
                                    grid_points)
            p = KrigingPredictor(xu, yu, theta, nugget)
            preds[t] = p
            fitted[idx, j] = p.predict(x, return_var=False)[0]
            # LOO residuals belong to deduplicated rows; map back by position
            lres = p.loo_residuals()
            keymap = {xi.tobytes(): k for k, xi in enumerate(xu)}
            loo[idx, j] = [lres[keymap[xi.tobytes()]] for xi in x]
        groups[key] = {"features": feats, "predictors": preds}
    if not rows:
        raise SampleSizeError(4, 0)
    area = _validation_area(space, rows)
    reports = {}
    for j, t in enumerate(space.target_names):
        resid = y[:, j] - fitted[:, j]
        dev = y[:, j] - y[:, j].mean()
        r2 = min(_r_squared(float(resid @ resid), float(dev @ dev)), 1.0)
        loocv = float(np.sqrt(np.mean(loo[:, j] ** 2)))
        reports[t] = ValidationReport(r2, None, loocv, None, None, len(rows), dict(area))
    return SurrogateModel(space, config, groups, reports, area)


def predict(model: SurrogateModel, design: Mapping[str, Any],
            use_case: Mapping[str, Any] | None = None, space: HyperSpace | None = None) -> Prediction:
    return model.predict(design, use_case, space)


def cross_validate(config: SurrogateConfig, store: ResultStore, space: HyperSpace, folds: int,
                   seed: int = 0) -> dict[str, ValidationReport]:
    """k-fold cross-validation with full refits; ``folds == n`` is leave-one-out.

    Fold membership follows a seeded shuffle of the ok records. The
    report's ``loocv_rmse`` field carries the cross-validated RMSE and
    ``r_squared`` the predictive 1 - PRESS/SST.
    """
    rows, y = _training_rows(store, space)
    n = len(rows)
    if not 2 <= folds <= n:
        raise ValueError(f"folds must be in 2..{n}, got {folds}")
    order = Xoshiro256(seed).permutation(n)
    fold_of = np.empty(n, dtype=int)
    for pos, i in enumerate(order):
        fold_of[i] = pos % folds
    ok = [r for r in store if r.status == OK]
    pred = np.empty_like(y)
    for f in range(folds):
        train = ResultStore(space)
        for i in np.flatnonzero(fold_of != f):
            train.add(replace(ok[i]))
        model = fit(train, space, config)
        held = np.flatnonzero(fold_of == f)
        pred[held] = model.predict_many([rows[i] for i in held])[0]
    area = _validation_area(space, rows)
    out = {}
    for j, t in enumerate(space.target_names):
        err = y[:, j] - pred[:, j]
        dev = y[:, j] - y[:, j].mean()
        press = float(err @ err)
        out[t] = ValidationReport(_r_squared(press, float(dev @ dev)), None,
                                  float(np.sqrt(press / n)), None, None, n, dict(area))
    return out
