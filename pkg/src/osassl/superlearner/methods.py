"""Methods that turn base-learner predictions into one prediction.

Each method watches the one-step-ahead predictions of the K base learners
(``observe``) and, when asked, freezes its current rule into a
:class:`Combination`, which maps a (K, n) prediction matrix to n values.
These are the J algorithms the overarching super learners choose between.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..learners import ridge_coefficients
from .ledger import RiskLedger
from .simplex import NetLedger


# --- frozen combination rules ----------------------------------------------


@dataclass(frozen=True, eq=False)
class Select:
    index: int

    def __call__(self, P):
        return np.asarray(P)[self.index]


@dataclass(frozen=True, eq=False)
class Weighted:
    weights: np.ndarray

    def __call__(self, P):
        return self.weights @ np.asarray(P)


@dataclass(frozen=True)
class Average:
    def __call__(self, P):
        return np.asarray(P).mean(axis=0)


@dataclass(frozen=True)
class Median:
    """Lower median for an even number of members."""

    def __call__(self, P):
        P = np.asarray(P)
        return np.sort(P, axis=0)[(len(P) - 1) // 2]


@dataclass(frozen=True, eq=False)
class Linear:
    intercept: float
    coef: np.ndarray

    def __call__(self, P):
        return self.intercept + self.coef @ np.asarray(P)


def apply_combination(combo, P, declared, cost_bound) -> np.ndarray:
    out = np.clip(combo(P), 0.0, cost_bound)
    out[~np.asarray(declared, dtype=bool)] = 0.0
    return out


# --- methods ----------------------------------------------------------------


class Method:
    """Base class; subclasses override ``observe`` and ``combination``."""

    kind = "method"

    def __init__(self, name=None):
        self.name = name or self.kind

    def observe(self, time, base_predictions, y, declared):
        pass

    def combination(self):
        raise NotImplementedError


class DiscreteMethod(Method):
    """Sequential discrete super learner over the base learners."""

    kind = "discrete"

    def __init__(self, n_learners, n_units, penalty=0.05, variant="literal", name=None):
        super().__init__(name)
        self.args = (n_learners, n_units, penalty, variant)
        self.ledger = None

    def observe(self, time, base_predictions, y, declared):
        if self.ledger is None:
            K, A, pen, var = self.args
            self.ledger = RiskLedger(K, A, start=time, penalty=pen, variant=var)
        self.ledger.record(time, base_predictions, y)

    def combination(self):
        if self.ledger is None or self.ledger.n_updates == 0:
            return Select(0)
        return Select(self.ledger.select())


class NetMethod(Method):
    """Sequential super learner over an eps-net of convex combinations of base learners."""

    kind = "net"

    def __init__(self, n_learners, n_units, eps=0.2, penalty=0.05, variant="literal", name=None):
        super().__init__(name)
        self.args = (n_learners, n_units, eps, penalty, variant)
        self.ledger = None

    def observe(self, time, base_predictions, y, declared):
        if self.ledger is None:
            K, A, eps, pen, var = self.args
            self.ledger = NetLedger(K, A, eps, start=time, penalty=pen, variant=var)
        self.ledger.record(time, base_predictions, y)

    def combination(self):
        if self.ledger is None:
            K, A, eps, *_ = self.args
            w = np.zeros(K)
            w[0] = 1.0
            return Weighted(w)
        return Weighted(self.ledger.select().pi.copy())


class AverageMethod(Method):
    kind = "average"

    def combination(self):
        return Average()


class MedianMethod(Method):
    kind = "median"

    def combination(self):
        return Median()


class RidgeStackMethod(Method):
    """Ridge regression of observed costs on the base learners' one-step-ahead predictions."""

    kind = "ridge_stack"

    def __init__(self, penalty=1.0, name=None):
        super().__init__(name)
        if penalty < 0:
            raise ValueError("stacking penalty must be >= 0")
        self.penalty = penalty
        self._X: list[np.ndarray] = []
        self._y: list[np.ndarray] = []

    def observe(self, time, base_predictions, y, declared):
        d = np.asarray(declared, dtype=bool)
        self._X.append(np.asarray(base_predictions)[:, d].T)
        self._y.append(np.asarray(y)[d])

    def combination(self):
        if not self._y or sum(len(v) for v in self._y) == 0:
            return Average()
        X = np.concatenate(self._X)
        y = np.concatenate(self._y)
        intercept, coef = ridge_coefficients(X, y, self.penalty)
        return Linear(intercept, coef)


class LearnerMethod(Method):
    """Pass one base learner through unchanged."""

    kind = "learner"

    def __init__(self, index, name=None):
        super().__init__(name)
        self.index = int(index)

    def combination(self):
        return Select(self.index)


def build_methods(specs, learner_names, n_units, *, inner_eps=0.2, inner_penalty=0.05, variant="literal", stack_penalty=1.0):
    """Instantiate methods from short specs.

    ``specs`` items are ``"discrete"``, ``"net"``, ``"average"``, ``"median"``,
    ``"ridge_stack"`` or ``"learner:<base learner name>"``.
    """
    K = len(learner_names)
    out = []
    for spec in specs:
        if spec == "discrete":
            out.append(DiscreteMethod(K, n_units, penalty=inner_penalty, variant=variant))
        elif spec == "net":
            out.append(NetMethod(K, n_units, eps=inner_eps, penalty=inner_penalty, variant=variant))
        elif spec == "average":
            out.append(AverageMethod())
        elif spec == "median":
            out.append(MedianMethod())
        elif spec == "ridge_stack":
            out.append(RidgeStackMethod(penalty=stack_penalty))
        elif spec.startswith("learner:"):
            lname = spec.split(":", 1)[1]
            if lname not in learner_names:
                raise ValueError(f"method {spec!r} names an unknown base learner")
            out.append(LearnerMethod(learner_names.index(lname), name=spec))
        else:
            raise ValueError(f"unknown method {spec!r}")
    names = [m.name for m in out]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate methods: {names}")
    return out
