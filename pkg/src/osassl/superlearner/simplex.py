"""Grids over the probability simplex and ledgers indexed by them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .ledger import RiskLedger


@dataclass(frozen=True, eq=False)
class SimplexWeights:
    """Convex-combination weights over J algorithms."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        if pi.ndim != 1 or pi.size == 0:
            raise ValueError("weights must be a nonempty vector")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    def __len__(self):
        return len(self.pi)

    def __eq__(self, other):
        return isinstance(other, SimplexWeights) and np.array_equal(self.pi, other.pi)

    def __hash__(self):
        return hash(self.pi.tobytes())

    def __repr__(self):
        return f"SimplexWeights({np.round(self.pi, 6).tolist()})"

    @property
    def is_vertex(self) -> bool:
        return bool(np.count_nonzero(self.pi) == 1)


def net_resolution(eps: float) -> int:
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    inv = 1.0 / eps
    # eps = 1/n can come back as n + 1 ulp (e.g. n = 49); snap those to n
    near = round(inv)
    if abs(inv - near) <= 1e-9 * near:
        return int(near)
    return math.ceil(inv)


def compositions(n: int, parts: int):
    """All tuples of ``parts`` nonnegative integers summing to ``n`` (stars and bars)."""
    for bars in combinations(range(n + parts - 1), parts - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(n + parts - 1 - prev - 1)
        yield tuple(out)


def net_matrix(J: int, eps: float) -> np.ndarray:
    """Grid points with coordinates in multiples of 1/ceil(1/eps), shape (J', J).

    The first row is the first vertex; all J vertices are included.
    """
    if J < 1:
        raise ValueError("J must be >= 1")
    n = net_resolution(eps)
    rows = sorted(compositions(n, J), reverse=True)
    return np.array(rows, dtype=float) / n


def epsilon_net(J: int, eps: float) -> list[SimplexWeights]:
    return [SimplexWeights(row) for row in net_matrix(J, eps)]


def net_size(J: int, eps: float) -> int:
    return math.comb(net_resolution(eps) + J - 1, J - 1)


class NetLedger:
    """Risk ledger over the convex combinations of a net.

    Each net point's one-step-ahead prediction is the weighted combination of
    the J algorithms' cached predictions, so nothing is refitted per point.
    """

    def __init__(self, J, n_units, eps, start=1, penalty=0.05, variant="literal", penalty_source=None):
        self.weights = net_matrix(J, eps)
        self.eps = eps
        self.ledger = RiskLedger(
            len(self.weights), n_units, start=start, penalty=penalty, variant=variant,
            penalty_source=penalty_source,
        )

    def __len__(self):
        return len(self.weights)

    @property
    def n_updates(self):
        return self.ledger.n_updates

    def combine(self, predictions) -> np.ndarray:
        """Net-point predictions from algorithm predictions (J, n) -> (J', n)."""
        return np.ascontiguousarray(self.weights @ np.asarray(predictions, dtype=float))

    def record(self, time, predictions, y) -> "NetLedger":
        self.ledger.record(time, self.combine(predictions), y)
        return self

    def select(self, t=None) -> SimplexWeights:
        if self.ledger.n_updates == 0:
            return SimplexWeights(self.weights[0])
        return SimplexWeights(self.weights[self.ledger.select(t)])

    def criterion(self, t=None) -> np.ndarray:
        return self.ledger.criterion(t)


def select_continuous(net_ledger: NetLedger, t=None) -> SimplexWeights:
    if len(net_ledger) == 0:
        raise ValueError("empty net")
    return net_ledger.select(t)
