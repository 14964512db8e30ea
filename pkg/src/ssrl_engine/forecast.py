"""Pluggable metric forecasters for the proactive feedback horizon.

A forecaster consumes lagged-metric feature vectors and predicts all four
metrics one horizon ahead. Three desk-scale implementations stand in for the
boosted model named in the study design: a persistence baseline, per-metric
linear regression on the lags, and gradient-boosted regression stumps. An
oracle forecaster that reads the recording's true future is included for
testing the policy in isolation from forecast error.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .policy import METRICS

DEFAULT_LAGS = 6

GB_ROUNDS = 100
GB_SHRINKAGE = 0.1
GB_MIN_ROWS = 20

RIDGE_LAMBDA = 1e-6


class ForecastError(ValueError):
    pass


def feature_length(k: int) -> int:
    return 4 * k + 1


def build_features(history: list[tuple[float, float, float, float]], k: int,
                   baseline_means: tuple[float, float, float, float]) -> np.ndarray:
    """Lag features for the newest tick in `history` (oldest first).

    Layout is metric-major, most recent lag first; lags older than the
    history are padded with the metric's baseline mean. The final entry is
    the tick index.
    """
    if not history:
        raise ForecastError("empty metric history")
    feats = np.empty(feature_length(k))
    pos = 0
    n = len(history)
    for m in range(4):
        for lag in range(k):
            idx = n - 1 - lag
            feats[pos] = history[idx][m] if idx >= 0 else baseline_means[m]
            pos += 1
    feats[pos] = float(n - 1)
    return feats


def training_pairs(metric_table: list[tuple[float, float, float, float]], k: int,
                   horizon_ticks: int,
                   baseline_means: tuple[float, float, float, float]):
    """Sliding (features, horizon-ahead target) pairs from one session."""
    X, Y = [], []
    for tick in range(len(metric_table) - horizon_ticks):
        X.append(build_features(metric_table[:tick + 1], k, baseline_means))
        Y.append(np.asarray(metric_table[tick + horizon_ticks], dtype=np.float64))
    return X, Y


# ---------------------------------------------------------------------------
# Forecasters
# ---------------------------------------------------------------------------

class PersistenceForecaster:
    """Predicts every metric as its lag-0 value."""

    name = "persistence"

    def __init__(self, k: int = DEFAULT_LAGS):
        self.k = k

    def fit(self, X, Y):
        return self

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.array([features[m * self.k] for m in range(4)])

    def to_dict(self) -> dict:
        return {"type": self.name, "k": self.k}

    @classmethod
    def from_dict(cls, obj: dict) -> "PersistenceForecaster":
        return cls(k=int(obj["k"]))


class LinearLagForecaster:
    """One least-squares linear model per metric over the lag features.

    Uses the minimum-norm least-squares solution when enough rows are
    available for a well-posed fit, otherwise a ridge-regularized solve
    (intercept unpenalized).
    """

    name = "ar"

    def __init__(self, k: int = DEFAULT_LAGS, ridge_lambda: float = RIDGE_LAMBDA):
        self.k = k
        self.ridge_lambda = ridge_lambda
        self.coef: np.ndarray | None = None  # (4, n_features + 1)

    def fit(self, X, Y):
        X = np.asarray(X, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        if X.ndim != 2 or len(X) == 0:
            raise ForecastError("no training rows")
        n, p = X.shape
        design = np.hstack([X, np.ones((n, 1))])
        if n >= p + 2:
            coef, *_ = np.linalg.lstsq(design, Y, rcond=None)
        else:
            pen = np.eye(p + 1) * self.ridge_lambda
            pen[p, p] = 0.0
            coef = np.linalg.solve(design.T @ design + pen, design.T @ Y)
        self.coef = coef.T
        return self

    def predict(self, features: np.ndarray) -> np.ndarray:
        if self.coef is None:
            raise ForecastError("predict before fit")
        row = np.concatenate([features, [1.0]])
        return self.coef @ row

    def to_dict(self) -> dict:
        return {"type": self.name, "k": self.k, "ridge_lambda": self.ridge_lambda,
                "coef": self.coef.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "LinearLagForecaster":
        out = cls(k=int(obj["k"]), ridge_lambda=float(obj["ridge_lambda"]))
        out.coef = np.asarray(obj["coef"], dtype=np.float64)
        return out


@dataclass(frozen=True)
class _Stump:
    feature: int
    threshold: float
    left: float
    right: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(X[:, self.feature] <= self.threshold, self.left, self.right)


def _fit_stump(X: np.ndarray, residuals: np.ndarray) -> _Stump:
    """Greedy exact split minimizing squared error of the residuals.

    Scans features in order and thresholds in sorted order, keeping the
    first strict improvement, so the fit is deterministic given data order.
    """
    n, p = X.shape
    total = residuals.sum()
    best = _Stump(0, np.inf, residuals.mean(), residuals.mean())
    best_sse_gain = 0.0
    for j in range(p):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        rs = residuals[order]
        csum = np.cumsum(rs)
        # candidate split after position i (strictly between distinct values)
        for i in range(n - 1):
            if xs[i] == xs[i + 1]:
                continue
            nl = i + 1
            nr = n - nl
            sl = csum[i]
            sr = total - sl
            gain = sl * sl / nl + sr * sr / nr - total * total / n
            if gain > best_sse_gain + 1e-15:
                best_sse_gain = gain
                thr = 0.5 * (xs[i] + xs[i + 1])
                best = _Stump(j, thr, sl / nl, sr / nr)
    if not np.isfinite(best.threshold):
        mean = total / n if n else 0.0
        best = _Stump(0, np.inf, mean, mean)
    return best


class BoostedStumpForecaster:
    """Gradient-boosted depth-1 trees with squared loss, one ensemble per
    metric; fixed shrinkage and round count keep the fit deterministic."""

    name = "gbstump"

    def __init__(self, k: int = DEFAULT_LAGS, rounds: int = GB_ROUNDS,
                 shrinkage: float = GB_SHRINKAGE):
        self.k = k
        self.rounds = rounds
        self.shrinkage = shrinkage
        self.init: np.ndarray | None = None
        self.trees: list[list[_Stump]] | None = None

    def fit(self, X, Y):
        X = np.asarray(X, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        if len(X) < GB_MIN_ROWS:
            raise ForecastError(f"need >= {GB_MIN_ROWS} training rows, got {len(X)}")
        self.init = Y.mean(axis=0)
        self.trees = []
        for m in range(4):
            y = Y[:, m]
            pred = np.full(len(y), self.init[m])
            ensemble = []
            for _ in range(self.rounds):
                stump = _fit_stump(X, y - pred)
                pred = pred + self.shrinkage * stump.predict(X)
                ensemble.append(stump)
            self.trees.append(ensemble)
        return self

    def training_loss_curve(self, X, Y, metric: int = 0) -> np.ndarray:
        """Mean squared training loss after each round, for diagnostics."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(Y, dtype=np.float64)[:, metric]
        pred = np.full(len(y), self.init[metric])
        losses = []
        for stump in self.trees[metric]:
            pred = pred + self.shrinkage * stump.predict(X)
            losses.append(float(np.mean((y - pred) ** 2)))
        return np.asarray(losses)

    def predict(self, features: np.ndarray) -> np.ndarray:
        if self.trees is None:
            raise ForecastError("predict before fit")
        row = features.reshape(1, -1)
        out = np.empty(4)
        for m in range(4):
            acc = self.init[m]
            for stump in self.trees[m]:
                acc += self.shrinkage * float(stump.predict(row)[0])
            out[m] = acc
        return out

    def to_dict(self) -> dict:
        return {
            "type": self.name, "k": self.k, "rounds": self.rounds,
            "shrinkage": self.shrinkage, "init": self.init.tolist(),
            "trees": [[[s.feature, s.threshold, s.left, s.right] for s in ens]
                      for ens in self.trees],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "BoostedStumpForecaster":
        out = cls(k=int(obj["k"]), rounds=int(obj["rounds"]),
                  shrinkage=float(obj["shrinkage"]))
        out.init = np.asarray(obj["init"], dtype=np.float64)
        out.trees = [[_Stump(int(f), float(t), float(l), float(r))
                      for f, t, l, r in ens] for ens in obj["trees"]]
        return out


class OracleForecaster:
    """Reads the recording's true future; isolates policy behavior from
    forecast error. The tick-index feature addresses the stored series."""

    name = "oracle"

    def __init__(self, k: int = DEFAULT_LAGS):
        self.k = k
        self.metric_table: list[tuple[float, float, float, float]] | None = None
        self.horizon_ticks = 1

    def bind(self, metric_table, horizon_ticks: int) -> "OracleForecaster":
        self.metric_table = [tuple(map(float, row)) for row in metric_table]
        self.horizon_ticks = horizon_ticks
        return self

    def fit(self, X, Y):
        return self

    def predict(self, features: np.ndarray) -> np.ndarray:
        if self.metric_table is None:
            raise ForecastError("oracle forecaster not bound to a session")
        tick = int(round(features[-1]))
        target = tick + self.horizon_ticks
        if target >= len(self.metric_table):
            target = len(self.metric_table) - 1
        return np.asarray(self.metric_table[target])

    def to_dict(self) -> dict:
        return {"type": self.name, "k": self.k}

    @classmethod
    def from_dict(cls, obj: dict) -> "OracleForecaster":
        return cls(k=int(obj["k"]))


FORECASTERS = {
    "persistence": PersistenceForecaster,
    "ar": LinearLagForecaster,
    "gbstump": BoostedStumpForecaster,
    "oracle": OracleForecaster,
}


def make_forecaster(name: str, k: int = DEFAULT_LAGS):
    if name not in FORECASTERS:
        raise ForecastError(f"unknown forecaster {name!r} "
                            f"(choose from {sorted(FORECASTERS)})")
    return FORECASTERS[name](k=k)


def save_model(forecaster, path: str | os.PathLike) -> None:
    obj = {"format": 1}
    obj.update(forecaster.to_dict())
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def load_model(path: str | os.PathLike):
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    kind = obj.get("type")
    if kind not in FORECASTERS:
        raise ForecastError(f"unknown model type {kind!r}")
    return FORECASTERS[kind].from_dict(obj)


@dataclass
class EvaluationReport:
    mae: dict[str, float]
    level_accuracy: float
    level_accuracy_per_metric: dict[str, float]
    n_predictions: int

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "level_accuracy": self.level_accuracy,
            "level_accuracy_per_metric": self.level_accuracy_per_metric,
            "n_predictions": self.n_predictions,
        }


def evaluate(forecaster, eval_sets, baselines_per_set, sd_k: float = 2.0) -> EvaluationReport:
    """Per-metric MAE and discretized-level accuracy on held-out data.

    `eval_sets` is a list of (X, Y) pairs, one per session;
    `baselines_per_set` the matching per-session baselines keyed by metric.
    """
    from .policy import discretize

    abs_err = np.zeros(4)
    level_hits = np.zeros(4)
    n = 0
    for (X, Y), baselines in zip(eval_sets, baselines_per_set):
        for features, target in zip(X, Y):
            pred = forecaster.predict(np.asarray(features))
            target = np.asarray(target, dtype=np.float64)
            abs_err += np.abs(pred - target)
            for m, metric in enumerate(METRICS):
                if (discretize(float(pred[m]), baselines[metric], sd_k)
                        == discretize(float(target[m]), baselines[metric], sd_k)):
                    level_hits[m] += 1
            n += 1
    if n == 0:
        raise ForecastError("no evaluation rows")
    return EvaluationReport(
        mae={metric: float(abs_err[m] / n) for m, metric in enumerate(METRICS)},
        level_accuracy=float(level_hits.sum() / (4 * n)),
        level_accuracy_per_metric={metric: float(level_hits[m] / n)
                                   for m, metric in enumerate(METRICS)},
        n_predictions=n,
    )
