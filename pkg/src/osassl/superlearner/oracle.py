"""True conditional risks on synthetic data with a known regression function.

For squared loss, the risk of a prediction ``f`` at (x, z) given the history
splits into ``(f - theta*)**2 + sigma**2(x, z)``; the probe accumulates both
parts per time step so the true cumulative risks, the oracle selection and
the excess-risk gap can be read off at any ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class OracleProbe:
    """Shadow of a :class:`RiskLedger` that tracks true instead of empirical risks.

    Parameters
    ----------
    truth : GroundTruth
        Must expose ``theta(x, z, declared)`` and ``variance(x, z, declared)``.
    n_algorithms : int
    start : int
        Time of the first recorded slice.
    ledger : RiskLedger, optional
        Ledger whose selections ``excess_gap`` compares against the oracle.
    """

    def __init__(self, truth, n_algorithms, start=1, ledger=None):
        if truth is None or not hasattr(truth, "theta") or not hasattr(truth, "variance"):
            raise ValueError("oracle probe requires synthetic truth")
        self.truth = truth
        self.n_algorithms = int(n_algorithms)
        self.start = int(start)
        self.ledger = ledger
        self.times: list[int] = []
        self.n_units = None
        self._bias_cum = [np.zeros(self.n_algorithms)]
        self._var_cum = [0.0]

    @property
    def n_updates(self):
        return len(self.times)

    def record(self, time, predictions, x, z, declared) -> "OracleProbe":
        expected = self.start + self.n_updates
        if time != expected:
            raise ValueError(f"non-sequential update: expected time {expected}, got {time}")
        predictions = np.asarray(predictions, dtype=float)
        theta = self.truth.theta(x, z, declared)
        var = self.truth.variance(x, z, declared)
        self.n_units = len(theta)
        bias = ((predictions - theta[None, :]) ** 2).sum(axis=1)
        self._bias_cum.append(self._bias_cum[-1] + bias)
        self._var_cum.append(self._var_cum[-1] + float(var.sum()))
        self.times.append(int(time))
        return self

    def _t(self, t):
        if t is None:
            t = self.n_updates
        if not 1 <= t <= self.n_updates:
            raise ValueError(f"probe holds {self.n_updates} updates; cannot evaluate t={t}")
        return int(t)

    def noise_risk(self, t=None) -> float:
        """True cumulative risk of the regression function itself (average noise variance)."""
        t = self._t(t)
        return self._var_cum[t] / (t * self.n_units)

    def excess(self, t=None) -> np.ndarray:
        t = self._t(t)
        return self._bias_cum[t] / (t * self.n_units)


def true_risk(probe: OracleProbe, t=None) -> np.ndarray:
    """True average cumulative risks of the J algorithms, shape (J,)."""
    if probe is None:
        raise ValueError("oracle probe requires synthetic truth")
    return probe.excess(t) + probe.noise_risk(t)


def oracle_select(probe: OracleProbe, t=None) -> int:
    return int(np.argmin(probe.excess(t)))


@dataclass(frozen=True)
class ExcessGap:
    selected: int
    oracle: int
    excess_selected: float
    excess_oracle: float
    gap: float


def excess_gap(probe: OracleProbe, t=None, eps: float = 0.1, selected: int | None = None) -> ExcessGap:
    """Excess true risk of the empirical selection minus (1 + eps) times that of the oracle."""
    if selected is None:
        if probe.ledger is None:
            raise ValueError("pass `selected` or attach a ledger to the probe")
        selected = probe.ledger.select(t)
    # the noise term is common to every algorithm, so excess risks are the bias parts
    excess = probe.excess(t)
    j_tilde = int(np.argmin(excess))
    ex_sel = float(excess[selected])
    ex_orc = float(excess[j_tilde])
    return ExcessGap(int(selected), j_tilde, ex_sel, ex_orc, ex_sel - (1 + eps) * ex_orc)
