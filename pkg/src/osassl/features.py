"""City-level feature engineering from gridded SWI and house-level data.

Ten-day periods are numbered 1..36; period ``p`` covers days
``10(p-1)+1 .. 10p`` with period 36 running to the end of the year.
Quarters group periods 1-9, 10-18, 19-27 and 28-36, and the dry season
(April to September) is approximated by periods 10..27.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

N_PERIODS = 36
DRY_SEASON = slice(9, 27)  # periods 10..27
QUARTERS = (slice(0, 9), slice(9, 18), slice(18, 27), slice(27, 36))
COMPOUND_NAMES = ("attr1", "attr2", "attr3", "attr1_x_attr2", "attr1_x_attr3", "attr1_x_attr2_x_attr3")


class GridSwi:
    """Ten-day SWI values per grid cell and year.

    Parameters
    ----------
    cells : sequence
        Cell identifiers.
    years : sequence of int
        Contiguous years covered by ``values``.
    values : ndarray, shape (n_cells, n_years, 36)
    """

    def __init__(self, cells, years, values):
        self.cells = tuple(cells)
        self.years = np.asarray(years, dtype=int)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (len(self.cells), len(self.years), N_PERIODS):
            raise ValueError(f"values must have shape (cells, years, {N_PERIODS}), got {self.values.shape}")
        if len(self.years) and np.any(np.diff(self.years) != 1):
            raise ValueError("years must be contiguous")
        self._pos = {c: i for i, c in enumerate(self.cells)}

    def cell(self, cell, year) -> np.ndarray:
        if cell not in self._pos:
            raise KeyError(f"missing grid cell {cell!r}")
        k = int(year - self.years[0]) if len(self.years) else -1
        if not 0 <= k < len(self.years):
            raise KeyError(f"grid cell {cell!r} has no data for year {year}")
        return self.values[self._pos[cell], k]

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "GridSwi":
        """Build from a long table with columns ``cell, year, period, swi``."""
        cells = sorted(frame["cell"].unique())
        years = np.arange(frame["year"].min(), frame["year"].max() + 1)
        values = np.full((len(cells), len(years), N_PERIODS), np.nan)
        ci = {c: i for i, c in enumerate(cells)}
        period = frame["period"].to_numpy(int)
        if period.min() < 1 or period.max() > N_PERIODS:
            raise ValueError("period indices must be in 1..36")
        values[
            frame["cell"].map(ci).to_numpy(), frame["year"].to_numpy(int) - years[0], period - 1
        ] = frame["swi"].to_numpy(float)
        if np.isnan(values).any():
            raise ValueError("grid SWI table is incomplete (each cell needs 36 periods for every year)")
        return cls(cells, years, values)


OverlapWeights = Mapping[object, Sequence[tuple]]


def overlap_from_frame(frame: pd.DataFrame) -> dict:
    """``{city: [(cell, area), ...]}`` from columns ``city, cell, area``."""
    out: dict = {}
    for city, cell, area in frame[["city", "cell", "area"]].itertuples(index=False):
        out.setdefault(city, []).append((cell, float(area)))
    return out


def aggregate_swi(grid: GridSwi, weights: OverlapWeights, city, year) -> np.ndarray:
    """Area-weighted convex average of the SWIs of the cells overlapping ``city``."""
    if city not in weights:
        raise KeyError(f"no overlap weights for city {city!r}")
    pairs = weights[city]
    areas = np.array([a for _, a in pairs], dtype=float)
    if np.any(areas < 0):
        raise ValueError(f"city {city!r}: negative intersection area")
    total = areas.sum()
    if not total > 0:
        raise ValueError(f"city {city!r}: zero total intersection area")
    cells = np.stack([grid.cell(c, year) for c, _ in pairs])
    return (areas @ cells) / total


def build_swi_block(series) -> np.ndarray:
    """SWI covariates for one city-year from the 3 x 36 series of years t, t-1, t-2.

    Layout: 108 raw values (year t first), then min/mean/sd for each of the
    three years, then dry-season means over t, t..t-1 and t..t-2.
    """
    s = np.asarray(series, dtype=float)
    if s.shape != (3, N_PERIODS) or np.isnan(s).any():
        raise ValueError(f"need a complete (3, {N_PERIODS}) SWI series, got shape {s.shape}")
    # constant rows get an exact zero sd rather than rounding noise from the mean
    sd = np.where(np.ptp(s, axis=1) == 0, 0.0, s.std(axis=1))
    summaries = np.column_stack([s.min(axis=1), s.mean(axis=1), sd]).reshape(-1)
    dry = s[:, DRY_SEASON]
    dry_means = np.array([dry[:1].mean(), dry[:2].mean(), dry.mean()])
    return np.concatenate([s.reshape(-1), summaries, dry_means])


def swi_block_names(prefix: str = "swi") -> list[str]:
    names = [f"{prefix}_lag{lag}_p{p:02d}" for lag in range(3) for p in range(1, N_PERIODS + 1)]
    names += [f"{prefix}_lag{lag}_{stat}" for lag in range(3) for stat in ("min", "mean", "sd")]
    names += [f"{prefix}_dry_{w}" for w in ("1y", "2y", "3y")]
    return names


def quarter_means(series) -> np.ndarray:
    """Mean SWI per quarter; ``series`` has 36 periods on its last axis."""
    s = np.asarray(series, dtype=float)
    return np.stack([s[..., q].mean(axis=-1) for q in QUARTERS], axis=-1)


@dataclass(frozen=True, eq=False)
class QuarterCdf:
    """Empirical CDFs of historical quarter-mean SWIs, one per quarter."""

    samples: tuple  # four sorted arrays

    def __call__(self, quarter: int, value) -> np.ndarray:
        data = self.samples[quarter - 1]
        return np.searchsorted(data, np.asarray(value, dtype=float), side="right") / len(data)


def fit_quarter_cdfs(values_by_quarter) -> QuarterCdf:
    """Fit the four CDFs; ``values_by_quarter`` holds four collections of quarter means."""
    if len(values_by_quarter) != 4:
        raise ValueError("need values for exactly four quarters")
    samples = []
    for q, v in enumerate(values_by_quarter, start=1):
        v = np.sort(np.asarray(v, dtype=float).reshape(-1))
        if v.size == 0:
            raise ValueError(f"quarter {q} has no historical values")
        v.setflags(write=False)
        samples.append(v)
    return QuarterCdf(tuple(samples))


def cdf_probabilities(cdfs: QuarterCdf, means) -> np.ndarray:
    """F_q evaluated at quarter means of years t, t-1, t-2 (``means`` has shape (3, 4)).

    Returned in the order (q1..q4 for year t, then year t-1, then t-2).
    """
    m = np.asarray(means, dtype=float)
    if m.shape != (3, 4):
        raise ValueError(f"quarter means must have shape (3, 4), got {m.shape}")
    return np.array([[cdfs(q + 1, m[lag, q]) for q in range(4)] for lag in range(3)]).reshape(-1)


@dataclass(frozen=True)
class HouseRecord:
    house: object
    city: object
    year: int
    insured_sum: float
    attr1: float
    attr2: float
    attr3: float

    def __post_init__(self):
        if not self.insured_sum > 0:
            raise ValueError(f"house {self.house!r}: insured sum must be positive")


def type1_quantiles(values, k: int) -> np.ndarray:
    """``k`` evenly spaced quantiles at levels i/(k+1), inverse-CDF (type 1) definition."""
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)
    levels = np.arange(1, k + 1)
    # ceil(n * i / (k + 1)) in integer arithmetic
    idx = (n * levels + k) // (k + 1) - 1
    return v[idx]


def compound_covariates(insured_sums, attributes, n_quantiles: int = 29) -> dict:
    """Insured-sum weighted means and quantile vectors for one city-year.

    Parameters
    ----------
    insured_sums : array, shape (n,)
    attributes : array, shape (n, 3)
        The house-level attributes (mean SWI of the house's cell, clay hazard
        level, ground slope).
    n_quantiles : int
        Number of quantiles of ``insured_sum * attribute`` reported per attribute.

    Returns
    -------
    dict
        ``means``: six weighted means (three attributes, then the products
        1x2, 1x3, 1x2x3); ``quantiles``: array of shape (3, n_quantiles).
    """
    s = np.asarray(insured_sums, dtype=float)
    c = np.asarray(attributes, dtype=float).reshape(len(s), 3)
    if len(s) == 0:
        raise ValueError("need at least one house")
    if np.any(s <= 0):
        raise ValueError("insured sums must be positive")
    cols = np.column_stack([c, c[:, 0] * c[:, 1], c[:, 0] * c[:, 2], c[:, 0] * c[:, 1] * c[:, 2]])
    means = (s @ cols) / s.sum()
    quantiles = np.stack([type1_quantiles(s * c[:, i], n_quantiles) for i in range(3)])
    return {"means": means, "quantiles": quantiles}


def compound_names(n_quantiles: int = 29) -> list[str]:
    names = [f"wmean_{n}" for n in COMPOUND_NAMES]
    names += [f"wq_attr{i}_{k:02d}" for i in (1, 2, 3) for k in range(1, n_quantiles + 1)]
    return names


def city_feature_table(
    grid: GridSwi,
    weights: OverlapWeights,
    years: Sequence[int],
    cdf_window: tuple[int, int],
    houses: pd.DataFrame | None = None,
    n_quantiles: int = 29,
) -> pd.DataFrame:
    """Feature rows for every (city, year) pair.

    ``houses`` (optional) has columns ``house, city, year, insured_sum,
    attr1, attr2, attr3``; city-years without houses get zeros for the
    compound block.
    """
    cities = sorted(weights)
    years = list(years)
    lo = min(min(years) - 2, cdf_window[0])
    span = range(lo, max(max(years), cdf_window[1]) + 1)
    city_swi = {
        city: np.stack([aggregate_swi(grid, weights, city, yr) for yr in span]) for city in cities
    }
    qmeans = {city: quarter_means(v) for city, v in city_swi.items()}  # (len(span), 4)
    w0, w1 = cdf_window[0] - lo, cdf_window[1] - lo
    cdfs = fit_quarter_cdfs(
        [np.concatenate([qmeans[c][w0 : w1 + 1, q] for c in cities]) for q in range(4)]
    )
    house_groups = {}
    if houses is not None and len(houses):
        for key, g in houses.groupby(["city", "year"], sort=True):
            house_groups[key] = g
    rows = []
    block_names = swi_block_names()
    cdf_names = [f"swi_cdf_lag{lag}_q{q}" for lag in range(3) for q in range(1, 5)]
    comp_names = compound_names(n_quantiles) if houses is not None else []
    for city in cities:
        for yr in years:
            k = yr - lo
            series = city_swi[city][[k, k - 1, k - 2]]
            feats = list(build_swi_block(series))
            feats += list(cdf_probabilities(cdfs, qmeans[city][[k, k - 1, k - 2]]))
            if houses is not None:
                g = house_groups.get((city, yr))
                if g is None:
                    feats += [0.0] * len(comp_names)
                else:
                    cc = compound_covariates(
                        g["insured_sum"].to_numpy(float), g[["attr1", "attr2", "attr3"]].to_numpy(float), n_quantiles
                    )
                    feats += list(cc["means"]) + list(cc["quantiles"].reshape(-1))
            rows.append([city, yr] + feats)
    return pd.DataFrame(rows, columns=["city", "year"] + block_names + cdf_names + comp_names)


def feature_group(name: str) -> str:
    """Reporting group for a generated feature column."""
    if name.startswith("swi_lag0") or name == "swi_dry_1y":
        return "swi_current"
    if name.startswith("swi_cdf"):
        return "swi_cdf"
    if name.startswith("swi_"):
        return "swi_history"
    if name in ("wmean_attr2",) or name.startswith("wq_attr2"):
        return "clay"
    if name in ("wmean_attr3",) or name.startswith("wq_attr3"):
        return "slope"
    return "compound_swi"
