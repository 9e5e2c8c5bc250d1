"""Base learners, screening and average/median combiners.

Every fitted :class:`Predictor` returns exactly 0 for cities without a
declaration and clips its other outputs to ``[0, B]``.  Learners are trained
on declared observations only.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import CovariateSchema, Panel


# --- design matrices --------------------------------------------------------


def selected_names(schema: CovariateSchema, screen: Sequence[str] | None) -> tuple[str, ...]:
    if screen is None:
        return schema.names
    unknown = [n for n in screen if n not in schema]
    if unknown:
        raise ValueError(f"screening subset names unknown covariates: {unknown}")
    keep = set(screen)
    return tuple(n for n in schema.names if n in keep)


def design_matrix(x: np.ndarray, z: np.ndarray, schema: CovariateSchema, names: Sequence[str]) -> np.ndarray:
    """Numeric design for linear learners.

    Continuous covariates pass through; a categorical covariate with ``v``
    levels becomes ``v - 1`` indicator columns (first level is the reference).
    Columns follow schema order.
    """
    cols = []
    for name in names:
        role, j = schema.locate(name)
        v = (x if role == "x" else z)[:, j]
        entry = schema[name]
        if entry.categorical:
            cols.extend((v == level).astype(float) for level in range(1, entry.levels))
        else:
            cols.append(v)
    if not cols:
        return np.zeros((len(x), 0))
    return np.column_stack(cols)


def ridge_coefficients(X: np.ndarray, y: np.ndarray, penalty: float) -> tuple[float, np.ndarray]:
    """Ridge fit on standardized columns with an unpenalized intercept, returned on the original scale.

    Constant columns get a zero coefficient.
    """
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    keep = sd > 0
    coef = np.zeros(X.shape[1])
    ybar = float(y.mean())
    if keep.any():
        Xs = (X[:, keep] - mu[keep]) / sd[keep]
        gram = Xs.T @ Xs + penalty * np.eye(Xs.shape[1])
        rhs = Xs.T @ (y - ybar)
        if penalty > 0:
            beta = np.linalg.solve(gram, rhs)
        else:
            beta = np.linalg.lstsq(gram, rhs, rcond=None)[0]
        coef[keep] = beta / sd[keep]
    return ybar - float(mu @ coef), coef


def training_rows(panel: Panel):
    """(x, z, y) of declared observations, time-major."""
    d = panel.declared
    return panel.x[d], panel.z[d], panel.y[d]


# --- predictors -------------------------------------------------------------


class Predictor:
    """Fitted map (x, z) -> predicted cost, masked and clipped."""

    def __init__(self, cost_bound: float, **meta):
        self.cost_bound = float(cost_bound)
        self.meta = meta

    @property
    def degenerate(self) -> bool:
        return bool(self.meta.get("degenerate", False))

    def _raw(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict(self, x, z, declared) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        declared = np.asarray(declared, dtype=bool)
        out = np.zeros(len(declared))
        if declared.any():
            out[declared] = np.clip(self._raw(x[declared], z[declared]), 0.0, self.cost_bound)
        return out

    def predict_slice(self, s) -> np.ndarray:
        return self.predict(s.x, s.z, s.declared)


class ConstantPredictor(Predictor):
    def __init__(self, value: float, cost_bound: float, **meta):
        super().__init__(cost_bound, **meta)
        self.value = float(value)

    def _raw(self, x, z):
        return np.full(len(x), self.value)


class LinearPredictor(Predictor):
    def __init__(self, schema, names, intercept, coef, cost_bound, **meta):
        super().__init__(cost_bound, **meta)
        self.schema = schema
        self.names = tuple(names)
        self.intercept = float(intercept)
        self.coef = np.asarray(coef, dtype=float)

    def _raw(self, x, z):
        return self.intercept + design_matrix(x, z, self.schema, self.names) @ self.coef


class CombinedPredictor(Predictor):
    """Pointwise mean or lower median of member predictions."""

    def __init__(self, members: Sequence[Predictor], how: str):
        members = list(members)
        if not members:
            raise ValueError("cannot combine an empty list of predictors")
        if how not in ("average", "median"):
            raise ValueError(f"unknown combination {how!r}")
        super().__init__(min(m.cost_bound for m in members))
        self.members = members
        self.how = how

    def predict(self, x, z, declared):
        preds = np.stack([m.predict(x, z, declared) for m in self.members])
        if self.how == "average":
            out = preds.mean(axis=0)
        else:
            out = np.sort(preds, axis=0)[(len(self.members) - 1) // 2]
        out = np.clip(out, 0.0, self.cost_bound)
        out[~np.asarray(declared, dtype=bool)] = 0.0
        return out


def combine_average(predictors: Sequence[Predictor]) -> Predictor:
    return CombinedPredictor(predictors, "average")


def combine_median(predictors: Sequence[Predictor]) -> Predictor:
    return CombinedPredictor(predictors, "median")


# --- learners ---------------------------------------------------------------


@dataclass(frozen=True, kw_only=True)
class BaseLearner:
    """A named, configurable fitting procedure.

    ``screen`` restricts the covariates the learner may use; the declaration
    indicator is always retained because it drives the zero mask.
    """

    name: str = ""
    screen: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.screen is not None:
            if len(self.screen) == 0:
                raise ValueError("screening subset must not be empty")
            object.__setattr__(self, "screen", tuple(self.screen))
        if not self.name:
            object.__setattr__(self, "name", self.kind)
        self._validate()

    kind = "base"

    def _validate(self):
        pass

    def fit(self, history: Panel) -> Predictor:
        names = selected_names(history.schema, self.screen)
        x, z, y = training_rows(history)
        if len(y) == 0:
            return ConstantPredictor(0.0, history.cost_bound, degenerate=True, learner=self.name)
        return self._fit(history.schema, names, x, z, y, history.cost_bound)

    def _fit(self, schema, names, x, z, y, cost_bound) -> Predictor:
        raise NotImplementedError


def screen(learner: BaseLearner, subset: Sequence[str], schema: CovariateSchema | None = None) -> BaseLearner:
    """Copy of ``learner`` restricted to ``subset`` of the covariates."""
    subset = tuple(subset)
    if not subset:
        raise ValueError("screening subset must not be empty")
    if schema is not None:
        selected_names(schema, subset)
    return dataclasses.replace(learner, screen=subset)


@dataclass(frozen=True, kw_only=True)
class MeanLearner(BaseLearner):
    kind = "mean"

    def _fit(self, schema, names, x, z, y, cost_bound):
        return ConstantPredictor(y.mean(), cost_bound, learner=self.name)


@dataclass(frozen=True, kw_only=True)
class RidgeLearner(BaseLearner):
    """Ridge regression on standardized covariates, unpenalized intercept."""

    penalty: float = 1.0
    kind = "ridge"

    def _validate(self):
        if not self.penalty >= 0:
            raise ValueError(f"ridge penalty must be >= 0, got {self.penalty}")

    def _fit(self, schema, names, x, z, y, cost_bound):
        intercept, coef = ridge_coefficients(design_matrix(x, z, schema, names), y, self.penalty)
        return LinearPredictor(schema, names, intercept, coef, cost_bound, learner=self.name)


@dataclass(frozen=True, kw_only=True)
class BoostedLinearLearner(BaseLearner):
    """L2 boosting with single-covariate least-squares base fits.

    Each round fits every (non-constant) design column to the current
    residuals and keeps the one with the smallest residual sum of squares;
    ties go to the earliest column.
    """

    rounds: int = 50
    shrinkage: float = 0.1
    kind = "boosted_linear"

    def _validate(self):
        if int(self.rounds) != self.rounds or self.rounds < 1:
            raise ValueError(f"rounds must be a positive integer, got {self.rounds}")
        if not 0 < self.shrinkage <= 1:
            raise ValueError(f"shrinkage must be in (0, 1], got {self.shrinkage}")

    def _fit(self, schema, names, x, z, y, cost_bound):
        X = design_matrix(x, z, schema, names)
        f0 = y.mean()
        resid = y - f0
        coef = np.zeros(X.shape[1])
        intercept = f0
        trace = [float(np.mean(resid**2))]
        mu = X.mean(axis=0)
        Xc = X - mu
        ss = np.einsum("ij,ij->j", Xc, Xc)
        usable = np.ptp(X, axis=0) > 0 if X.shape[1] else np.zeros(0, dtype=bool)
        if usable.any():
            for _ in range(int(self.rounds)):
                cross = Xc.T @ resid
                gain = np.where(usable, cross**2 / np.where(usable, ss, 1.0), -np.inf)
                c = int(np.argmax(gain))
                slope = cross[c] / ss[c]
                level = resid.mean()
                step = self.shrinkage * (level + slope * Xc[:, c])
                resid = resid - step
                coef[c] += self.shrinkage * slope
                intercept += self.shrinkage * (level - slope * mu[c])
                trace.append(float(np.mean(resid**2)))
        return LinearPredictor(schema, names, intercept, coef, cost_bound, learner=self.name, risk_trace=trace)


def ks_counts_distance(q_sorted: np.ndarray, train_sorted: np.ndarray, train_self: np.ndarray) -> np.ndarray:
    """Two-sample KS statistics between one sorted sample and each sorted training row.

    ``train_self[i, j]`` is the number of entries of row ``i`` that are <= its
    ``j``-th entry.  Works in integer counts so equal statistics compare equal.
    """
    m = len(q_sorted)
    n, mp = train_sorted.shape
    q_at_train = np.searchsorted(q_sorted, train_sorted, side="right")  # (n, m')
    gap1 = np.abs(mp * q_at_train - m * train_self).max(axis=1)
    q_self = np.searchsorted(q_sorted, q_sorted, side="right")  # (m,)
    train_at_q = (train_sorted[:, :, None] <= q_sorted[None, None, :]).sum(axis=1)  # (n, m)
    gap2 = np.abs(mp * q_self[None, :] - m * train_at_q).max(axis=1)
    return np.maximum(gap1, gap2) / (m * mp)


class KnnPredictor(Predictor):
    def __init__(self, schema, channels, weights, k, samples, selfcounts, y, cost_bound, **meta):
        super().__init__(cost_bound, **meta)
        self.schema = schema
        self.channels = channels
        self.weights = weights
        self.k = k
        self.samples = samples
        self.selfcounts = selfcounts
        self.y = y

    def distances(self, x, z) -> np.ndarray:
        """Weighted KS distances, shape (n_query, n_train)."""
        out = np.zeros((len(x), len(self.y)))
        for c, names in enumerate(self.channels):
            if self.weights[c] == 0:
                continue
            q = np.sort(channel_values(x, z, self.schema, names), axis=1)
            for i in range(len(q)):
                out[i] += self.weights[c] * ks_counts_distance(q[i], self.samples[c], self.selfcounts[c])
        return out

    def _raw(self, x, z):
        d = self.distances(x, z)
        k = min(self.k, len(self.y))
        order = np.argsort(d, axis=1, kind="stable")[:, :k]
        return self.y[order].mean(axis=1)


def channel_values(x, z, schema, names) -> np.ndarray:
    cols = []
    for name in names:
        role, j = schema.locate(name)
        cols.append((x if role == "x" else z)[:, j])
    return np.column_stack(cols)


@dataclass(frozen=True, kw_only=True)
class KSKnnLearner(BaseLearner):
    """k-nearest neighbors with a convex mix of Kolmogorov-Smirnov distances.

    Each channel is a tuple of covariate names whose values, for one
    observation, form a sample; observations are compared through the KS
    distance between the empirical CDFs of their channel samples.
    """

    k: int = 5
    channels: tuple = ()
    weights: tuple | None = None
    kind = "ks_knn"

    def _validate(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if not self.channels:
            raise ValueError("ks_knn needs at least one channel")
        object.__setattr__(self, "channels", tuple(tuple(c) for c in self.channels))
        w = self.weights
        if w is None:
            w = tuple([1.0 / len(self.channels)] * len(self.channels))
        w = tuple(float(v) for v in w)
        if len(w) != len(self.channels) or min(w) < 0 or abs(sum(w) - 1) > 1e-12:
            raise ValueError("channel weights must be convex weights, one per channel")
        object.__setattr__(self, "weights", w)

    def fit(self, history: Panel) -> Predictor:
        for names in self.channels:
            for n in names:
                if n not in history.schema:
                    raise ValueError(f"channel covariate {n!r} not in schema")
                if history.schema[n].categorical:
                    raise ValueError(f"channel covariate {n!r} must be continuous")
        return super().fit(history)

    def _fit(self, schema, names, x, z, y, cost_bound):
        samples, selfcounts = [], []
        for ch in self.channels:
            s = np.sort(channel_values(x, z, schema, ch), axis=1)
            samples.append(s)
            selfcounts.append((s[:, None, :] <= s[:, :, None]).sum(axis=2))
        return KnnPredictor(
            schema, self.channels, np.array(self.weights), int(self.k), samples, selfcounts, y.copy(),
            cost_bound, learner=self.name,
        )


@dataclass(frozen=True, kw_only=True)
class AverageLearner(BaseLearner):
    members: tuple = ()
    kind = "average"

    def _validate(self):
        if not self.members:
            raise ValueError(f"{self.kind} learner needs at least one member")

    def fit(self, history):
        member = self.members if self.screen is None else [screen(m, self.screen) for m in self.members]
        return CombinedPredictor([m.fit(history) for m in member], self.kind)


@dataclass(frozen=True, kw_only=True)
class MedianLearner(AverageLearner):
    kind = "median"


LEARNER_KINDS = {
    cls.kind: cls for cls in (MeanLearner, RidgeLearner, BoostedLinearLearner, KSKnnLearner, AverageLearner, MedianLearner)
}


def learner_from_config(item: dict) -> BaseLearner:
    """Build a learner from ``{name, kind, hyperparameters, screening}``."""
    kind = item.get("kind")
    if kind not in LEARNER_KINDS:
        raise ValueError(f"unknown learner kind {kind!r}")
    params = dict(item.get("hyperparameters") or {})
    if kind in ("average", "median"):
        params["members"] = tuple(learner_from_config(m) for m in params.get("members", ()))
    if kind == "ks_knn" and "channels" in params:
        params["channels"] = tuple(tuple(c) for c in params["channels"])
        if params.get("weights") is not None:
            params["weights"] = tuple(params["weights"])
    screening = item.get("screening")
    return LEARNER_KINDS[kind](
        name=item.get("name", ""), screen=tuple(screening) if screening else None, **params
    )


def learner_to_config(learner: BaseLearner) -> dict:
    params = {}
    for f in dataclasses.fields(learner):
        if f.name in ("name", "screen"):
            continue
        v = getattr(learner, f.name)
        if f.name == "members":
            v = [learner_to_config(m) for m in v]
        elif isinstance(v, tuple):
            v = [list(c) if isinstance(c, tuple) else c for c in v]
        params[f.name] = v
    return {
        "name": learner.name,
        "kind": learner.kind,
        "hyperparameters": params,
        "screening": list(learner.screen) if learner.screen else None,
    }
