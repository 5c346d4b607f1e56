"""Ordinary Kriging with a squared-exponential correlation.

Hyperparameters are chosen by maximizing the concentrated log-likelihood

    ln L(theta) = -n/2 * ln(sigma2(theta)) - 1/2 * ln det R(theta)

on a log-spaced grid (isotropic scan, then multi-start coordinate sweeps),
refined by golden-section search inside the best grid cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .polynomial import FitError

GOLDEN = (math.sqrt(5) - 1) / 2


class ConditioningError(FitError):
    pass


def _sq_dists(x: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    return diff * diff


def correlation(d2: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return np.exp(-np.tensordot(d2, theta, axes=([-1], [0])))


@dataclass
class _Factor:
    chol: np.ndarray
    mu: float
    sigma2: float
    weights: np.ndarray        # R^-1 (y - mu)
    ri_one: np.ndarray         # R^-1 1
    one_ri_one: float
    loglik: float


def factorize(d2: np.ndarray, y: np.ndarray, theta: np.ndarray, nugget: float) -> _Factor | None:
    """Concentrated-likelihood quantities; ``None`` if R is not positive definite."""
    n = len(y)
    r = correlation(d2, theta) + nugget * np.eye(n)
    try:
        c = scipy.linalg.cholesky(r, lower=True)
    except np.linalg.LinAlgError:
        return None
    one = np.ones(n)
    ri_one = scipy.linalg.cho_solve((c, True), one)
    ri_y = scipy.linalg.cho_solve((c, True), y)
    one_ri_one = float(one @ ri_one)
    if not one_ri_one > 0:
        return None
    mu = float(one @ ri_y) / one_ri_one
    resid = y - mu
    weights = scipy.linalg.cho_solve((c, True), resid)
    sigma2 = float(resid @ weights) / n
    if not np.all(np.isfinite(weights)):
        return None
    logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    loglik = -0.5 * n * math.log(max(sigma2, 1e-300)) - 0.5 * logdet
    return _Factor(c, mu, max(sigma2, 0.0), weights, ri_one, one_ri_one, loglik)


@dataclass
class ThetaSearch:
    """Record of every likelihood evaluation made while choosing theta."""

    evaluated: dict[tuple[float, ...], float] = field(default_factory=dict)
    grid_keys: set = field(default_factory=set)

    def best(self) -> tuple[tuple[float, ...], float]:
        # ties: smoothest model (smallest theta) wins
        return max(self.evaluated.items(),
                   key=lambda kv: (kv[1], -sum(math.log(t) for t in kv[0]), tuple(-t for t in kv[0])))


def search_theta(x: np.ndarray, y: np.ndarray, nugget: float,
                 bounds: tuple[float, float] = (1e-2, 1e2), grid_points: int = 25,
                 starts: int = 3, max_sweeps: int = 5, golden_iters: int = 24):
    """Maximize the concentrated log-likelihood over theta.

    Returns ``(theta, search)``; ``search.evaluated`` maps each tried theta to
    its log-likelihood (``-inf`` where R was not positive definite).
    """
    n, m = x.shape
    d2 = _sq_dists(x)
    lo, hi = bounds
    grid = np.logspace(math.log10(lo), math.log10(hi), grid_points)
    search = ThetaSearch()

    def ll(theta) -> float:
        key = tuple(float(t) for t in theta)
        if key not in search.evaluated:
            f = factorize(d2, y, np.asarray(key), nugget)
            search.evaluated[key] = f.loglik if f is not None else -math.inf
        return search.evaluated[key]

    def ll_idx(idx) -> float:
        key = tuple(float(grid[i]) for i in idx)
        search.grid_keys.add(key)
        return ll(key)

    if m == 0:
        ll(())
        return np.zeros(0), search

    iso = [ll_idx([i] * m) for i in range(grid_points)]
    order = sorted(range(grid_points), key=lambda i: (-iso[i], i))
    for s in order[:starts]:
        if not math.isfinite(iso[s]):
            continue
        idx = [s] * m
        cur = iso[s]
        for _ in range(max_sweeps):
            changed = False
            for j in range(m):
                best_i, best_v = idx[j], cur
                for i in range(grid_points):
                    cand = idx.copy()
                    cand[j] = i
                    v = ll_idx(cand)
                    if v > best_v or (v == best_v and i < best_i):
                        best_i, best_v = i, v
                if best_i != idx[j]:
                    idx[j] = best_i
                    cur = best_v
                    changed = True
            if not changed:
                break

    best_key, best_v = search.best()
    if not math.isfinite(best_v):
        raise ConditioningError(
            f"correlation matrix not positive definite for any theta in {bounds} "
            f"with nugget={nugget:g}; try a larger nugget")

    theta = list(best_key)
    log_grid = np.log(grid)
    for j in range(m):
        i = int(np.argmin(np.abs(log_grid - math.log(theta[j]))))
        a = log_grid[max(i - 1, 0)]
        b = log_grid[min(i + 1, grid_points - 1)]

        def f(logt, j=j):
            cand = list(theta)
            cand[j] = math.exp(logt)
            return ll(cand)

        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        fc, fd = f(c), f(d)
        for _ in range(golden_iters):
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - GOLDEN * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + GOLDEN * (b - a)
                fd = f(d)
        best_key, _ = search.best()
        theta = list(best_key)
    best_key, _ = search.best()
    return np.asarray(best_key), search


class KrigingPredictor:
    """Ordinary Kriging predictor for one scalar target.

    Targets are standardized internally; ``mean``/``scale`` undo it. The
    factorization is rebuilt from stored fields, so a reloaded predictor
    reproduces predictions bit for bit.
    """

    def __init__(self, x, y, theta, nugget: float):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.theta = np.asarray(theta, dtype=float)
        self.nugget = float(nugget)
        self.mean = float(np.mean(self.y))
        sd = float(np.std(self.y))
        self.scale = sd if sd > 0 else 1.0
        ys = (self.y - self.mean) / self.scale
        f = factorize(_sq_dists(self.x), ys, self.theta, self.nugget)
        if f is None:
            raise ConditioningError(
                f"correlation matrix not positive definite with nugget={self.nugget:g}; "
                "try a larger nugget")
        self._f = f

    @property
    def loglik(self) -> float:
        return self._f.loglik

    @property
    def process_mean(self) -> float:
        return self.mean + self.scale * self._f.mu

    @property
    def process_variance(self) -> float:
        return self.scale ** 2 * self._f.sigma2

    def cross_corr(self, xq: np.ndarray) -> np.ndarray:
        """Correlation of query points with the training inputs.

        The nugget is a nugget effect of the correlation model, so a query
        that coincides with a training input carries it too. This makes
        the predictor reproduce training values exactly even when the
        nugget is what keeps R invertible.
        """
        diff = xq[:, None, :] - self.x[None, :, :]
        r = correlation(diff * diff, self.theta)
        r[np.all(diff == 0.0, axis=-1)] += self.nugget
        return r

    def predict(self, xq: np.ndarray, return_var: bool = True):
        xq = np.atleast_2d(np.asarray(xq, dtype=float))
        f = self._f
        r = self.cross_corr(xq)
        mean = f.mu + r @ f.weights
        out = self.mean + self.scale * mean
        if not return_var:
            return out, None
        return out, self.scale ** 2 * f.sigma2 * self.normalized_variance(xq, r)

    def normalized_variance(self, xq: np.ndarray, r: np.ndarray | None = None) -> np.ndarray:
        """Kriging variance divided by the process variance."""
        f = self._f
        if r is None:
            r = self.cross_corr(np.atleast_2d(xq))
        ri_r = scipy.linalg.cho_solve((f.chol, True), r.T)
        u = 1.0 - r @ f.ri_one
        s = 1.0 + self.nugget - np.sum(r.T * ri_r, axis=0) + u * u / f.one_ri_one
        return np.maximum(s, 0.0)

    def loo_residuals(self) -> np.ndarray:
        """Leave-one-out residuals with theta held fixed (mean re-estimated)."""
        n = len(self.y)
        out = np.empty(n)
        if n < 2:
            return np.full(n, np.inf)
        ys = (self.y - self.mean) / self.scale
        d2 = _sq_dists(self.x)
        for i in range(n):
            keep = np.arange(n) != i
            f = factorize(d2[np.ix_(keep, keep)], ys[keep], self.theta, self.nugget)
            if f is None:
                out[i] = np.inf
                continue
            diff = self.x[keep] - self.x[i]
            r = correlation(diff * diff, self.theta)
            out[i] = (ys[i] - (f.mu + r @ f.weights)) * self.scale
        return out

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "y": self.y.tolist(), "theta": self.theta.tolist(),
                "nugget": self.nugget}

    @classmethod
    def from_dict(cls, d) -> KrigingPredictor:
        x = np.asarray(d["x"], dtype=float).reshape(len(d["y"]), len(d["theta"]))
        return cls(x, d["y"], d["theta"], d["nugget"])


def deduplicate(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Average ``y`` over identical rows of ``x``; first-occurrence order kept."""
    seen: dict[bytes, int] = {}
    xs, sums, counts = [], [], []
    for xi, yi in zip(x, y):
        key = xi.tobytes()
        if key in seen:
            j = seen[key]
            sums[j] += yi
            counts[j] += 1
        else:
            seen[key] = len(xs)
            xs.append(xi)
            sums.append(float(yi))
            counts.append(1)
    return np.array(xs).reshape(len(xs), x.shape[1]), np.array(sums) / np.array(counts)
