"""Sequential cross-validated risk bookkeeping.

A ledger receives, for consecutive times, the one-step-ahead predictions of
J competing algorithms (each fitted on data strictly before that time) and
the observed costs.  After ``t`` updates the empirical cumulative risk of
algorithm ``j`` is ``sse_j / (t * n_units)``.  The penalized criterion adds

    (lambda / t) * sum_tau (actual total_tau - meta predicted total_tau)**2

where the meta prediction at ``tau`` is the one made by the ledger's own
selection from the previous step (the first step uses index 0).  With
``variant="per_algorithm"`` each algorithm is penalized with its own totals
instead, which makes the penalty depend on ``j``.
"""

from __future__ import annotations

import numpy as np

VARIANTS = ("literal", "per_algorithm")


class RiskLedger:
    """Per-algorithm running sums of squared test residuals and total-cost traces.

    Parameters
    ----------
    n_algorithms : int
    n_units : int
        Number of cities scored per update.
    start : int
        Time of the first update.
    penalty : float
        Coefficient of the overall-cost penalty.
    variant : {"literal", "per_algorithm"}
    penalty_source : RiskLedger, optional
        In the literal variant, take the meta-predicted totals from this
        ledger instead of from this ledger's own selections.  Both ledgers
        must be updated at the same times.
    """

    def __init__(self, n_algorithms, n_units, start=1, penalty=0.05, variant="literal", names=None, penalty_source=None):
        if n_algorithms < 1:
            raise ValueError("ledger needs at least one algorithm")
        if penalty < 0:
            raise ValueError(f"penalty must be >= 0, got {penalty}")
        if variant not in VARIANTS:
            raise ValueError(f"unknown penalty variant {variant!r}")
        self.n_algorithms = int(n_algorithms)
        self.n_units = int(n_units)
        self.start = int(start)
        self.time = self.start - 1
        self.penalty_coef = float(penalty)
        self.variant = variant
        self.names = list(names) if names is not None else [str(j) for j in range(self.n_algorithms)]
        self.penalty_source = penalty_source
        self.times: list[int] = []
        self.sq: list[np.ndarray] = []  # per-update squared-residual sums, (J,)
        self.cum_sse = [np.zeros(self.n_algorithms)]  # running sums; cum_sse[t] after t updates
        self.actual_totals: list[float] = []
        self.predicted_totals: list[np.ndarray] = []  # (J,)
        self.selected: list[int] = []  # selection in force when each slice was scored
        self.meta_totals: list[float] = []
        self._lit_cum = [0.0]
        self._alg_cum = [np.zeros(self.n_algorithms)]

    @property
    def n_updates(self) -> int:
        return len(self.times)

    def count(self, t=None) -> int:
        t = self._t(t)
        return t * self.n_units

    def _t(self, t):
        if t is None:
            t = self.n_updates
        if not 1 <= t <= self.n_updates:
            raise ValueError(f"ledger holds {self.n_updates} updates; cannot evaluate t={t}")
        return int(t)

    def record(self, time, predictions, y) -> "RiskLedger":
        """Add the squared residuals of one new slice."""
        if time != self.time + 1:
            raise ValueError(f"non-sequential update: expected time {self.time + 1}, got {time}")
        predictions = np.asarray(predictions, dtype=float)
        y = np.asarray(y, dtype=float)
        if predictions.shape != (self.n_algorithms, self.n_units) or y.shape != (self.n_units,):
            raise ValueError(
                f"expected predictions of shape {(self.n_algorithms, self.n_units)} and costs of length {self.n_units}"
            )
        sel = self.select() if self.n_updates else 0
        resid = y[None, :] - predictions
        sq = (resid * resid).sum(axis=1)
        ptot = predictions.sum(axis=1)
        ytot = y.sum()
        self.sq.append(sq)
        self.cum_sse.append(self.cum_sse[-1] + sq)
        self.actual_totals.append(float(ytot))
        self.predicted_totals.append(ptot)
        self.selected.append(int(sel))
        self.meta_totals.append(float(ptot[sel]))
        self._lit_cum.append(self._lit_cum[-1] + (ytot - ptot[sel]) ** 2)
        self._alg_cum.append(self._alg_cum[-1] + (ytot - ptot) ** 2)
        self.times.append(int(time))
        self.time = int(time)
        return self

    def risk(self, t=None) -> np.ndarray:
        """Empirical average cumulative risks after ``t`` updates, shape (J,)."""
        t = self._t(t)
        return self.cum_sse[t] / (t * self.n_units)

    def literal_penalty(self, t=None) -> float:
        t = self._t(t)
        if self.penalty_source is not None:
            src = self.penalty_source
            if src.times[:t] != self.times[:t]:
                raise ValueError("penalty source ledger was updated at different times")
            return self.penalty_coef * src._lit_cum[t] / t
        return self.penalty_coef * self._lit_cum[t] / t

    def penalty(self, t=None) -> np.ndarray:
        t = self._t(t)
        if self.variant == "literal":
            return np.full(self.n_algorithms, self.literal_penalty(t))
        return self.penalty_coef * self._alg_cum[t] / t

    def criterion(self, t=None) -> np.ndarray:
        """Penalized risks, shape (J,)."""
        return self.risk(t) + self.penalty(t)

    def select(self, t=None, penalized=True) -> int:
        """Index of the smallest (penalized) risk; ties go to the lowest index."""
        values = self.criterion(t) if penalized else self.risk(t)
        return int(np.argmin(values))


def update_ledger(ledger: RiskLedger, predictors, new_slice) -> RiskLedger:
    """Score predictors fitted before ``new_slice.time`` on that slice."""
    preds = np.stack([p.predict(new_slice.x, new_slice.z, new_slice.declared) for p in predictors])
    return ledger.record(new_slice.time, preds, new_slice.y)


def penalized_risk(ledger: RiskLedger, j: int, t: int) -> float:
    if t == 0:
        raise ValueError("penalized risk is undefined before the first update")
    return float(ledger.criterion(t)[j])


def select_discrete(ledger: RiskLedger, t: int | None = None) -> int:
    return ledger.select(t)
