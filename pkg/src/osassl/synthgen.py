"""Synthetic city panels with a known mean conditional cost.

Covariates: ``n_continuous`` slowly varying city descriptors in [0, 1]
(``x1``, ``x2``, ...), one categorical ``zone`` and ``n_swi`` SWI-like
channels in [0, 1] driven by a yearly drought shock.  For a declared city the
cost is ``theta*(x, z) + sigma(x, z) * e`` where the unit-variance noise
``e`` mixes a private innovation with one innovation per incident graph
edge, so two cities' noises are correlated only when they are adjacent.
Everything is bounded, hence no clipping is needed and ``theta*`` is the
exact conditional mean.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import CATEGORICAL, CovariateEntry, CovariateSchema, DependencyGraph, Panel

FAMILIES = ("linear", "additive", "piecewise")
TOPOLOGIES = ("lattice", "ring", "star", "edgeless")
SQRT3 = np.sqrt(3.0)
ZONE_EFFECTS = (0.0, 1.5, 3.0, 1.0, 2.0)
COEF = (4.0, 2.0)
SWI_COEF = 6.0


@dataclass
class GeneratorSpec:
    n_cities: int = 50
    n_times: int = 12
    topology: str = "lattice"
    ring_k: int = 2
    family: str = "linear"
    n_continuous: int = 3
    zone_levels: int = 3
    n_swi: int = 12
    declare_intercept: float = -2.0
    declare_slope: float = 4.0
    noise_scale: float = 1.0
    heteroscedasticity: float = 0.5
    edge_correlation: float = 0.3
    persistence: float = 0.6
    seed: int = 0

    def validate(self) -> list[str]:
        errs = []
        if int(self.n_cities) != self.n_cities or self.n_cities < 1:
            errs.append("n_cities: must be a positive integer")
        if int(self.n_times) != self.n_times or self.n_times < 1:
            errs.append("n_times: must be a positive integer")
        if self.topology not in TOPOLOGIES:
            errs.append(f"topology: must be one of {TOPOLOGIES}")
        if self.ring_k < 1:
            errs.append("ring_k: must be >= 1")
        if self.family not in FAMILIES:
            errs.append(f"family: must be one of {FAMILIES}")
        if self.n_continuous < 2:
            errs.append("n_continuous: must be >= 2")
        if not 2 <= self.zone_levels <= 5:
            errs.append("zone_levels: must be in [2, 5]")
        if self.n_swi < 1:
            errs.append("n_swi: must be >= 1")
        if not self.noise_scale >= 0:
            errs.append("noise_scale: must be >= 0")
        if not 0 <= self.heteroscedasticity <= 1:
            errs.append("heteroscedasticity: must be in [0, 1]")
        if not 0 <= self.edge_correlation < 1:
            errs.append("edge_correlation: must be in [0, 1)")
        if not 0 <= self.persistence < 1:
            errs.append("persistence: must be in [0, 1)")
        return errs

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown generator fields: {sorted(unknown)}")
        return cls(**d)


def make_schema(spec: GeneratorSpec) -> CovariateSchema:
    entries = [CovariateEntry(f"x{i + 1}", group="descriptors" if i >= 2 else f"x{i + 1}") for i in range(spec.n_continuous)]
    entries.append(CovariateEntry("zone", kind=CATEGORICAL, levels=spec.zone_levels, group="zone"))
    entries += [CovariateEntry(f"swi_{p + 1:02d}", group="swi", role="z") for p in range(spec.n_swi)]
    return CovariateSchema(entries)


def make_graph(spec: GeneratorSpec) -> DependencyGraph:
    n = spec.n_cities
    if spec.topology == "lattice":
        return DependencyGraph.lattice(n)
    if spec.topology == "ring":
        return DependencyGraph.ring(n, spec.ring_k)
    if spec.topology == "star":
        return DependencyGraph.star(n - 1)
    return DependencyGraph.edgeless(n)


class GroundTruth:
    """Known regression function, conditional variance and noise law of a generated panel."""

    def __init__(self, spec: GeneratorSpec, graph: DependencyGraph, schema: CovariateSchema):
        self.spec = spec
        self.graph = graph
        self.schema = schema
        self.edges = graph.edge_array()
        counts = graph.neighbor_counts()
        self.incident = counts
        rho = spec.edge_correlation
        self.noise_bound = SQRT3 * (np.sqrt(1 - rho) + np.sqrt(rho * counts.max())) if counts.max() > 0 else SQRT3
        self.offset = spec.noise_scale * self.noise_bound
        f_max = COEF[0] + COEF[1] + max(ZONE_EFFECTS[: spec.zone_levels]) + SWI_COEF
        self.cost_bound = float(self.offset + f_max + spec.noise_scale * self.noise_bound) or 1.0

    def _signal(self, x, z):
        x1, x2 = x[:, 0], x[:, 1]
        zone = x[:, self.spec.n_continuous].astype(int)
        dry = 1.0 - z.mean(axis=1)
        effects = np.asarray(ZONE_EFFECTS)[zone]
        fam = self.spec.family
        if fam == "linear":
            return COEF[0] * x1 + COEF[1] * x2 + effects + SWI_COEF * dry
        if fam == "additive":
            return COEF[0] * np.sin(np.pi * x1) + COEF[1] * x2**2 + effects + SWI_COEF * dry**2
        return COEF[0] * (x1 > 0.5) + COEF[1] * (x2 > 0.3) + effects + SWI_COEF * (dry > 0.6)

    def theta(self, x, z, declared) -> np.ndarray:
        """Mean conditional cost; 0 for undeclared cities."""
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        out = self.offset + self._signal(x, z)
        return np.where(np.asarray(declared, dtype=bool), out, 0.0)

    def sigma(self, x, z, declared) -> np.ndarray:
        h = self.spec.heteroscedasticity
        s = self.spec.noise_scale * (1 - h + h * np.asarray(x, dtype=float)[:, 0])
        return np.where(np.asarray(declared, dtype=bool), s, 0.0)

    def variance(self, x, z, declared) -> np.ndarray:
        return self.sigma(x, z, declared) ** 2

    def noise(self, rng: np.random.Generator) -> np.ndarray:
        """One slice of unit-variance noise, correlated along graph edges only."""
        n = len(self.graph)
        rho = self.spec.edge_correlation
        own = rng.uniform(-SQRT3, SQRT3, size=n)
        shared = rng.uniform(-SQRT3, SQRT3, size=len(self.edges))
        if len(self.edges) == 0 or rho == 0:
            return own
        acc = np.zeros(n)
        np.add.at(acc, self.edges[:, 0], shared)
        np.add.at(acc, self.edges[:, 1], shared)
        deg = self.incident
        mixed = np.sqrt(1 - rho) * own + np.sqrt(rho) * acc / np.sqrt(np.maximum(deg, 1))
        return np.where(deg > 0, mixed, own)

    def resample_costs(self, x, z, declared, rng) -> np.ndarray:
        """Fresh costs for one slice given its covariates."""
        return self.theta(x, z, declared) + self.sigma(x, z, declared) * self.noise(rng)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "offset": self.offset,
            "cost_bound": self.cost_bound,
            "noise_bound": float(self.noise_bound),
            "zone_effects": list(ZONE_EFFECTS[: self.spec.zone_levels]),
            "coefficients": {"x1": COEF[0], "x2": COEF[1], "dryness": SWI_COEF},
            "graph_degree": self.graph.degree,
            "n_edges": len(self.edges),
        }


def _slice_rng(seed, t, stream):
    return np.random.default_rng([int(seed), int(t), int(stream)])


def generate(spec: GeneratorSpec):
    """Generate ``(panel, truth)``; deterministic in ``spec.seed``.

    Each slice draws from its own seed stream, so a longer run reproduces the
    slices of a shorter one exactly.
    """
    errs = spec.validate()
    if errs:
        raise ValueError("invalid generator spec: " + "; ".join(errs))
    schema = make_schema(spec)
    graph = make_graph(spec)
    truth = GroundTruth(spec, graph, schema)
    A, T, p = spec.n_cities, spec.n_times, spec.n_continuous
    static = np.random.default_rng([int(spec.seed), 0])
    zone = static.integers(0, spec.zone_levels, size=A)
    sensitivity = static.uniform(0.5, 1.5, size=A)
    profile = 0.55 + 0.25 * np.cos(2 * np.pi * np.arange(spec.n_swi) / spec.n_swi)

    x = np.zeros((T, A, p + 1))
    z = np.zeros((T, A, spec.n_swi))
    y = np.zeros((T, A))
    declared = np.zeros((T, A), dtype=bool)
    phi = spec.persistence
    prev = None
    for i in range(T):
        rng = _slice_rng(spec.seed, i + 1, 1)
        fresh = rng.uniform(0, 1, size=(A, p))
        cont = fresh if prev is None else phi * prev + (1 - phi) * fresh
        prev = cont
        # the yearly drought shock has its own stream so it does not depend on n_cities
        shock = _slice_rng(spec.seed, i + 1, 0).beta(2.0, 3.0)
        jitter = rng.uniform(-0.05, 0.05, size=(A, spec.n_swi))
        swi = np.clip(profile[None, :] - 0.5 * shock * sensitivity[:, None] + jitter, 0.0, 1.0)
        dry = 1.0 - swi.mean(axis=1)
        prob = 1.0 / (1.0 + np.exp(-(spec.declare_intercept + spec.declare_slope * dry)))
        d = rng.uniform(size=A) < prob
        x[i, :, :p] = cont
        x[i, :, p] = zone
        z[i] = swi
        declared[i] = d
        y[i] = np.where(d, truth.resample_costs(x[i], swi, d, rng), 0.0)
    panel = Panel(schema, np.arange(A), np.arange(1, T + 1), x, z, y, declared, cost_bound=truth.cost_bound)
    return panel, truth


def best_fixed_algorithm(truth: GroundTruth, algorithms, n_cities=None, n_times=None, seed=10_000):
    """Rank learners or predictors by Monte-Carlo squared bias against theta*.

    Learners are fitted on one freshly generated panel, then every candidate
    is evaluated on the declared cities of another.  Returns a list of
    ``(name, mean squared bias)`` pairs, best first.
    """
    base = truth.spec
    n_cities = n_cities or base.n_cities
    n_times = n_times or base.n_times
    train_spec = GeneratorSpec(**{**base.to_dict(), "n_cities": n_cities, "n_times": n_times, "seed": seed})
    test_spec = GeneratorSpec(**{**base.to_dict(), "n_cities": n_cities, "n_times": n_times, "seed": seed + 1})
    train, _ = generate(train_spec)
    test, test_truth = generate(test_spec)
    d = test.declared
    xs, zs = test.x[d], test.z[d]
    target = test_truth.theta(xs, zs, np.ones(len(xs), dtype=bool))
    scores = []
    for i, alg in enumerate(algorithms):
        pred = alg.fit(train) if hasattr(alg, "fit") else alg
        name = getattr(alg, "name", f"algorithm_{i}")
        est = pred.predict(xs, zs, np.ones(len(xs), dtype=bool))
        scores.append((name, float(np.mean((est - target) ** 2))))
    return sorted(scores, key=lambda s: s[1])


def write_generated(panel: Panel, truth: GroundTruth, out_dir) -> dict:
    """Write ``panel.csv``, ``schema.json`` and ``truth.json`` into ``out_dir``."""
    from .core import write_panel_csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"panel": out / "panel.csv", "schema": out / "schema.json", "truth": out / "truth.json"}
    write_panel_csv(panel, paths["panel"])
    panel.schema.save(paths["schema"])
    paths["truth"].write_text(json.dumps(truth.to_dict(), indent=2) + "\n", encoding="utf-8")
    return paths


def synthetic_feature_inputs(n_cities=6, years=range(2000, 2011), grid_side=4, houses_per_city=20, seed=0):
    """Small gridded-SWI, overlap and house tables for exercising the feature pipeline."""
    import pandas as pd

    rng = np.random.default_rng(seed)
    years = list(years)
    cells = [f"c{i:03d}" for i in range(grid_side * grid_side)]
    season = 0.5 + 0.3 * np.cos(2 * np.pi * (np.arange(36) - 3) / 36)
    grid_rows = []
    for yr in years:
        shock = rng.beta(2, 3)
        for c in cells:
            vals = np.clip(season - 0.4 * shock + rng.normal(0, 0.05, 36), 0, 1.2)
            grid_rows += [(c, yr, p + 1, float(v)) for p, v in enumerate(vals)]
    grid = pd.DataFrame(grid_rows, columns=["cell", "year", "period", "swi"])
    overlap_rows = []
    for city in range(n_cities):
        k = rng.integers(1, 4)
        for c in rng.choice(cells, size=k, replace=False):
            overlap_rows.append((city, c, float(rng.uniform(0.5, 30.0))))
    overlap = pd.DataFrame(overlap_rows, columns=["city", "cell", "area"])
    house_rows = []
    hid = 0
    for city in range(n_cities):
        for yr in years:
            for _ in range(houses_per_city):
                house_rows.append((hid, city, yr, float(rng.lognormal(12, 0.5)), float(rng.uniform(0, 1)),
                                   float(rng.integers(0, 4)), float(rng.uniform(0, 15))))
                hid += 1
    houses = pd.DataFrame(house_rows, columns=["house", "city", "year", "insured_sum", "attr1", "attr2", "attr3"])
    return grid, overlap, houses
