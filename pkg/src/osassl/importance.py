"""Variable importance on a forecaster's predictions.

Continuous covariates are scored by the absolute Spearman correlation between
predictions and covariate, categorical ones by the correlation ratio.  Both
come with a permutation test whose permutations are drawn in fixed-size
batches from seed-derived streams, so results do not depend on how many
workers evaluate them.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.stats import rankdata

SPEARMAN = "spearman"
CORRELATION_RATIO = "correlation_ratio"
BATCH = 1000
# permuted statistics within this relative distance of the observed one count as ties
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class Measure:
    rho: float
    degenerate: bool = False


@dataclass(frozen=True)
class ImportanceScore:
    covariate: str
    group: str
    kind: str
    rho: float
    p_value: float
    perm_max: float
    degenerate: bool = False

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if not 0.0 < self.p_value <= 1.0:
            raise ValueError(f"p-value must lie in (0, 1], got {self.p_value}")


@dataclass(frozen=True)
class PermutationResult:
    statistic: float
    p_value: float
    perm_max: float
    n_perm: int
    n_exceed: int
    degenerate: bool = False


def _paired(pred, cov):
    pred = np.asarray(pred, dtype=float).ravel()
    cov = np.asarray(cov).ravel()
    if len(pred) != len(cov):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(cov)} covariate values")
    if len(pred) < 3:
        raise ValueError("need at least 3 pairs")
    return pred, cov


def _unit(v):
    """Centred copy of ``v`` scaled to unit norm, or None if constant."""
    c = v - v.mean()
    n = np.sqrt(c @ c)
    if n == 0 or np.ptp(v) == 0:
        return None
    return c / n


def spearman_abs(pred, cov) -> Measure:
    """Absolute Spearman correlation with average ranks for ties."""
    pred, cov = _paired(pred, cov)
    a = _unit(rankdata(pred))
    b = _unit(rankdata(np.asarray(cov, dtype=float)))
    if a is None or b is None:
        return Measure(0.0, True)
    return Measure(float(min(1.0, abs(a @ b))))


def _codes(labels):
    _, codes = np.unique(np.asarray(labels), return_inverse=True)
    return codes.ravel()


def correlation_ratio(pred, labels) -> Measure:
    """Square root of between-level over total sum of squares."""
    pred, labels = _paired(pred, labels)
    codes = _codes(labels)
    v = codes.max() + 1
    if v > 5:
        raise ValueError(f"categorical covariate has {v} levels; at most 5 supported")
    c = pred - pred.mean()
    total = c @ c
    if total == 0 or np.ptp(pred) == 0:
        return Measure(0.0, True)
    sums = np.bincount(codes, weights=c, minlength=v)
    counts = np.bincount(codes, minlength=v)
    between = np.sum(sums[counts > 0] ** 2 / counts[counts > 0])
    return Measure(float(np.sqrt(min(1.0, between / total))))


# --- permutation testing ----------------------------------------------------


def _spearman_batch(pred, cov):
    a = _unit(rankdata(pred))
    b = _unit(rankdata(np.asarray(cov, dtype=float)))

    def stat(perms):
        return np.abs(b[perms] @ a)

    return stat


def _ratio_batch(pred, labels):
    codes = _codes(labels)
    v = codes.max() + 1
    c = pred - pred.mean()
    total = c @ c
    counts = np.bincount(codes, minlength=v)
    inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0)

    def stat(perms):
        # labels permuted by p put c[inv(p)] against the fixed labels
        cp = c[np.argsort(perms, axis=1)]
        sums = np.stack([cp[:, codes == k].sum(axis=1) for k in range(v)], axis=1)
        return np.sqrt(np.minimum(1.0, (sums**2 @ inv) / total))

    return stat


STATISTICS = {SPEARMAN: (spearman_abs, _spearman_batch), CORRELATION_RATIO: (correlation_ratio, _ratio_batch)}


def permutation_test(statistic, pred, cov, n_perm: int = 10_000, seed: int = 0, workers: int = 1) -> PermutationResult:
    """Permutation p-value ``(1 + #{perm >= observed}) / (n_perm + 1)``.

    Parameters
    ----------
    statistic : str or callable
        ``"spearman"``, ``"correlation_ratio"`` or a function ``(pred, cov) -> Measure``.
        Callables are evaluated one permutation at a time.
    pred, cov : array_like
        Paired predictions and covariate values.
    n_perm : int
    seed : int
        Permutation batch ``i`` draws from the ``i``-th child of ``SeedSequence(seed)``.
    workers : int
        Threads evaluating batches; does not affect the result.
    """
    if int(n_perm) != n_perm or n_perm < 1:
        raise ValueError(f"n_perm must be a positive integer, got {n_perm}")
    n_perm = int(n_perm)
    pred, cov = _paired(pred, cov)
    if isinstance(statistic, str):
        if statistic not in STATISTICS:
            raise ValueError(f"unknown statistic {statistic!r}")
        measure, batch_factory = STATISTICS[statistic]
    else:
        measure, batch_factory = statistic, None
    observed = measure(pred, cov)
    if observed.degenerate:
        return PermutationResult(observed.rho, 1.0, float("nan"), n_perm, n_perm, True)

    if batch_factory is not None:
        batch_stat = batch_factory(pred, cov)
    else:

        def batch_stat(perms):
            return np.array([measure(pred, cov[p]).rho for p in perms])

    n = len(pred)
    sizes = [BATCH] * (n_perm // BATCH) + ([n_perm % BATCH] if n_perm % BATCH else [])
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    threshold = observed.rho * (1 - TIE_RTOL)

    def run(i):
        rng = np.random.default_rng(streams[i])
        perms = rng.permuted(np.tile(np.arange(n), (sizes[i], 1)), axis=1)
        vals = batch_stat(perms)
        return int(np.count_nonzero(vals >= threshold)), float(vals.max())

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    exceed = sum(p[0] for p in parts)
    return PermutationResult(observed.rho, (1 + exceed) / (n_perm + 1), max(p[1] for p in parts), n_perm, exceed)


# --- reports ----------------------------------------------------------------


def variable_importance(
    pred,
    covariates: Mapping[str, np.ndarray],
    groups: Mapping[str, str],
    categorical: Sequence[str] = (),
    n_perm: int = 10_000,
    seed: int = 0,
    workers: int = 1,
) -> list[ImportanceScore]:
    """Score every covariate; covariate ``i`` (in mapping order) uses seed ``[seed, i]``."""
    out = []
    cat = set(categorical)
    for i, (name, values) in enumerate(covariates.items()):
        if name not in groups:
            raise ValueError(f"covariate {name!r} is not assigned to a group")
        kind = CORRELATION_RATIO if name in cat else SPEARMAN
        sub_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        res = permutation_test(kind, pred, values, n_perm=n_perm, seed=sub_seed, workers=workers)
        out.append(ImportanceScore(name, groups[name], kind, res.statistic, res.p_value, res.perm_max, res.degenerate))
    return out


def panel_importance(report, panel, window=None, predictor="discrete", n_perm=10_000, seed=0, workers=1):
    """Importance of every schema covariate for a forecaster's evaluation-window predictions.

    Only declared city-years enter: undeclared predictions are 0 by
    construction and would mostly measure the declaration flag.
    """
    times = report.eval_times if window is None else [t for t in report.eval_times if window[0] <= t <= window[1]]
    if not times:
        raise ValueError("importance window contains no evaluation times")
    schema = panel.schema
    preds, cols = [], {n: [] for n in schema.names}
    for t in times:
        s = panel.slice(t)
        d = s.declared
        preds.append(report.overarching[predictor][t][d])
        for name in schema.names:
            role, j = schema.locate(name)
            cols[name].append((s.x if role == "x" else s.z)[d, j])
    pred = np.concatenate(preds)
    covs = {n: np.concatenate(v) for n, v in cols.items()}
    groups = {e.name: e.group or e.name for e in schema}
    cats = [e.name for e in schema if e.categorical]
    return variable_importance(pred, covs, groups, cats, n_perm=n_perm, seed=seed, workers=workers)


def scores_frame(scores: Sequence[ImportanceScore]) -> pd.DataFrame:
    cols = ["covariate", "group", "kind", "rho", "p_value", "perm_max", "degenerate"]
    return pd.DataFrame([asdict(s) for s in scores], columns=cols)


def group_report(scores: Sequence[ImportanceScore], groups: Mapping[str, str] | None = None, alpha: float = 0.05) -> pd.DataFrame:
    """Per-group count, max and mean rho, and a Bonferroni-combined significance flag.

    ``groups`` maps covariate to group; by default each score's own group label is used.
    """
    rows: dict[str, list[ImportanceScore]] = {}
    for s in scores:
        g = s.group if groups is None else groups.get(s.covariate)
        if not g:
            raise ValueError(f"covariate {s.covariate!r} is not assigned to a group")
        rows.setdefault(g, []).append(s)
    out = []
    for g, members in rows.items():
        rho = np.array([m.rho for m in members])
        p = min(1.0, len(members) * min(m.p_value for m in members))
        out.append(
            {
                "group": g,
                "count": len(members),
                "max_rho": float(rho.max()),
                "mean_rho": float(rho.mean()),
                "combined_p": p,
                "significant": bool(p <= alpha),
            }
        )
    return pd.DataFrame(out, columns=["group", "count", "max_rho", "mean_rho", "combined_p", "significant"])
