"""Panel data model: observations, covariate schema, panels and dependency graphs.

A :class:`Panel` stores its slices as dense arrays indexed ``[time, city, ...]``
so that learners and ledgers can work on whole slices at once.  Observations
and slices are thin views used for construction, validation and iteration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import pandas as pd

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"

PANEL_COLUMNS = ("city", "year", "declared", "cost")


@dataclass(frozen=True)
class CovariateEntry:
    """One named covariate.

    ``role`` is ``"x"`` for city descriptors and ``"z"`` for SWI-like
    features.  Categorical values are stored as integer codes ``0..levels-1``.
    """

    name: str
    kind: str = CONTINUOUS
    levels: int | None = None
    group: str = ""
    role: str = "x"

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise ValueError(f"covariate {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if self.levels is None or not 2 <= self.levels <= 5:
                raise ValueError(
                    f"covariate {self.name!r}: categorical level count must be in [2, 5], got {self.levels}"
                )
            if self.role == "z":
                raise ValueError(f"covariate {self.name!r}: z entries must be continuous")
        elif self.levels is not None:
            raise ValueError(f"covariate {self.name!r}: continuous entries take no levels")
        if self.role not in ("x", "z"):
            raise ValueError(f"covariate {self.name!r}: role must be 'x' or 'z'")
        if not self.group:
            object.__setattr__(self, "group", self.name)

    @property
    def categorical(self) -> bool:
        return self.kind == CATEGORICAL


class CovariateSchema:
    """Ordered list of covariates, split into the x and z blocks."""

    def __init__(self, entries: Iterable[CovariateEntry]):
        self.entries = tuple(entries)
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate covariate names: {dup}")
        reserved = set(names) & set(PANEL_COLUMNS)
        if reserved:
            raise ValueError(f"covariate names clash with panel columns: {sorted(reserved)}")
        self.x_entries = tuple(e for e in self.entries if e.role == "x")
        self.z_entries = tuple(e for e in self.entries if e.role == "z")
        self.x_names = tuple(e.name for e in self.x_entries)
        self.z_names = tuple(e.name for e in self.z_entries)
        self.names = self.x_names + self.z_names
        self._by_name = {e.name: e for e in self.entries}

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.x_entries + self.z_entries)

    def __contains__(self, name):
        return name in self._by_name

    def __getitem__(self, name) -> CovariateEntry:
        return self._by_name[name]

    def __eq__(self, other):
        return isinstance(other, CovariateSchema) and self.entries == other.entries

    def __repr__(self):
        return f"CovariateSchema({len(self.x_names)} x, {len(self.z_names)} z)"

    def locate(self, name: str) -> tuple[str, int]:
        """Return ``(role, column)`` of a covariate in the x or z array."""
        entry = self._by_name[name]
        if entry.role == "x":
            return "x", self.x_names.index(name)
        return "z", self.z_names.index(name)

    def groups(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for e in self:
            out.setdefault(e.group, []).append(e.name)
        return out

    def check_x(self, x: np.ndarray) -> None:
        if x.shape[-1] != len(self.x_names):
            raise ValueError(f"x has {x.shape[-1]} columns, schema expects {len(self.x_names)}")
        for j, e in enumerate(self.x_entries):
            if e.categorical:
                col = x[..., j]
                if np.any(col != np.round(col)) or np.any(col < 0) or np.any(col >= e.levels):
                    raise ValueError(f"covariate {e.name!r}: codes must be integers in [0, {e.levels})")

    def to_dict(self) -> list[dict]:
        return [
            {"name": e.name, "kind": e.kind, "levels": e.levels, "group": e.group, "role": e.role}
            for e in self.entries
        ]

    @classmethod
    def from_dict(cls, items: Sequence[dict]) -> "CovariateSchema":
        return cls(
            CovariateEntry(
                name=d["name"],
                kind=d.get("kind", CONTINUOUS),
                levels=d.get("levels"),
                group=d.get("group", ""),
                role=d.get("role", "x"),
            )
            for d in items
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "CovariateSchema":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True, eq=False)
class Observation:
    """One (city, year) record."""

    city: int
    time: int
    x: np.ndarray
    z: np.ndarray
    y: float
    declared: bool

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        if self.time < 1:
            raise ValueError(f"time index must be >= 1, got {self.time}")
        if not np.isfinite(self.y) or self.y < 0:
            raise ValueError(f"cost must be finite and nonnegative, got {self.y}")
        if not self.declared and self.y != 0:
            raise ValueError(f"city {self.city} at time {self.time}: undeclared city with nonzero cost")
        if np.isnan(self.x).any() or np.isnan(self.z).any():
            raise ValueError(f"city {self.city} at time {self.time}: missing covariate value")


@dataclass(frozen=True, eq=False)
class PanelSlice:
    """All cities at one time.  Arrays are aligned with ``cities``."""

    time: int
    cities: np.ndarray
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    declared: np.ndarray

    def __len__(self):
        return len(self.cities)

    def observations(self) -> Iterator[Observation]:
        for i, c in enumerate(self.cities):
            yield Observation(int(c), self.time, self.x[i], self.z[i], float(self.y[i]), bool(self.declared[i]))


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


class Panel:
    """Time-ordered slices over a fixed city set.

    Parameters
    ----------
    schema : CovariateSchema
    cities : sequence of int
        City identifiers, one per column of the arrays.
    times : sequence of int
        Contiguous, increasing time indices (>= 1).
    x, z : ndarray, shape (T, A, p_x) and (T, A, p_z)
    y : ndarray, shape (T, A)
        Costs; zero wherever ``declared`` is false.
    declared : ndarray of bool, shape (T, A)
    cost_bound : float, optional
        Upper bound ``B`` on costs.  Defaults to ``1.5 * max(y)``.
    """

    def __init__(self, schema, cities, times, x, z, y, declared, cost_bound=None):
        self.schema = schema
        self.cities = _frozen(cities, dtype=np.int64)
        self.times = _frozen(times, dtype=np.int64)
        T, A = len(self.times), len(self.cities)
        if T == 0 or A == 0:
            raise ValueError("panel needs at least one slice and one city")
        if len(np.unique(self.cities)) != A:
            raise ValueError("city identifiers must be unique")
        if self.times[0] < 1 or np.any(np.diff(self.times) != 1):
            raise ValueError("slice times must be contiguous and start at >= 1")
        x = np.asarray(x, dtype=float).reshape(T, A, len(schema.x_names))
        z = np.asarray(z, dtype=float).reshape(T, A, len(schema.z_names))
        y = np.asarray(y, dtype=float).reshape(T, A)
        declared = np.asarray(declared, dtype=bool).reshape(T, A)
        if np.isnan(x).any() or np.isnan(z).any() or np.isnan(y).any():
            raise ValueError("missing values are not allowed")
        schema.check_x(x)
        if np.any(y < 0):
            raise ValueError("costs must be nonnegative")
        if np.any(y[~declared] != 0):
            raise ValueError("undeclared cities must have zero cost")
        if cost_bound is None:
            top = float(y.max())
            cost_bound = 1.5 * top if top > 0 else 1.0
        if not cost_bound > 0:
            raise ValueError(f"cost bound must be positive, got {cost_bound}")
        if np.any(y > cost_bound):
            raise ValueError(f"costs exceed the cost bound {cost_bound}")
        self.cost_bound = float(cost_bound)
        self.x = _frozen(x)
        self.z = _frozen(z)
        self.y = _frozen(y)
        self.declared = _frozen(declared, dtype=bool)

    def __len__(self):
        return len(self.times)

    def __repr__(self):
        return (
            f"Panel(times={int(self.times[0])}..{int(self.times[-1])}, cities={self.n_cities}, "
            f"B={self.cost_bound:g})"
        )

    @property
    def n_cities(self) -> int:
        return len(self.cities)

    @property
    def first(self) -> int:
        return int(self.times[0])

    @property
    def last(self) -> int:
        return int(self.times[-1])

    def _index(self, t: int) -> int:
        if not self.first <= t <= self.last:
            raise IndexError(f"time {t} outside panel range {self.first}..{self.last}")
        return int(t - self.first)

    def slice(self, t: int) -> PanelSlice:
        i = self._index(t)
        return PanelSlice(int(t), self.cities, self.x[i], self.z[i], self.y[i], self.declared[i])

    @property
    def slices(self) -> tuple[PanelSlice, ...]:
        return tuple(self.slice(int(t)) for t in self.times)

    def window(self, start: int, stop: int) -> "Panel":
        """Sub-panel of slices with ``start <= time <= stop``; schema, cities and B are shared."""
        i, j = self._index(start), self._index(stop)
        if j < i:
            raise ValueError(f"empty window {start}..{stop}")
        return Panel(
            self.schema, self.cities, self.times[i : j + 1], self.x[i : j + 1], self.z[i : j + 1],
            self.y[i : j + 1], self.declared[i : j + 1], cost_bound=self.cost_bound,
        )

    def replace(self, **arrays) -> "Panel":
        """Copy with some of ``x``, ``z``, ``y``, ``declared``, ``cost_bound`` swapped."""
        kw = dict(x=self.x, z=self.z, y=self.y, declared=self.declared, cost_bound=self.cost_bound)
        kw.update(arrays)
        return Panel(self.schema, self.cities, self.times, **kw)

    def observations(self) -> Iterator[Observation]:
        for s in self.slices:
            yield from s.observations()

    def covariate(self, name: str) -> np.ndarray:
        """Values of one covariate, shape (T, A)."""
        role, j = self.schema.locate(name)
        return (self.x if role == "x" else self.z)[..., j]

    @classmethod
    def from_observations(cls, schema, observations: Iterable[Observation], cost_bound=None) -> "Panel":
        obs = list(observations)
        if not obs:
            raise ValueError("no observations")
        cities = sorted({o.city for o in obs})
        times = sorted({o.time for o in obs})
        ci = {c: i for i, c in enumerate(cities)}
        ti = {t: i for i, t in enumerate(times)}
        T, A = len(times), len(cities)
        x = np.full((T, A, len(schema.x_names)), np.nan)
        z = np.full((T, A, len(schema.z_names)), np.nan)
        y = np.zeros((T, A))
        d = np.zeros((T, A), dtype=bool)
        seen = np.zeros((T, A), dtype=bool)
        for o in obs:
            i, j = ti[o.time], ci[o.city]
            if seen[i, j]:
                raise ValueError(f"duplicate observation for city {o.city} at time {o.time}")
            seen[i, j] = True
            x[i, j], z[i, j], y[i, j], d[i, j] = o.x, o.z, o.y, o.declared
        if not seen.all():
            raise ValueError("every slice must cover every city")
        return cls(schema, cities, times, x, z, y, d, cost_bound=cost_bound)


def history_prefix(panel: Panel, t: int) -> Panel:
    """Slices with time <= t (the training history available at t)."""
    if not panel.first <= t <= panel.last:
        raise IndexError(f"time {t} outside panel range {panel.first}..{panel.last}")
    return panel.window(panel.first, t)


# --- CSV / JSON interchange -------------------------------------------------


def panel_to_frame(panel: Panel) -> pd.DataFrame:
    T, A = panel.y.shape
    data = {
        "city": np.tile(panel.cities, T),
        "year": np.repeat(panel.times, A),
        "declared": panel.declared.reshape(-1).astype(int),
        "cost": panel.y.reshape(-1),
    }
    for j, name in enumerate(panel.schema.x_names):
        col = panel.x[..., j].reshape(-1)
        data[name] = col.astype(int) if panel.schema[name].categorical else col
    for j, name in enumerate(panel.schema.z_names):
        data[name] = panel.z[..., j].reshape(-1)
    return pd.DataFrame(data)


def panel_from_frame(frame: pd.DataFrame, schema: CovariateSchema, cost_bound=None) -> Panel:
    missing = [c for c in PANEL_COLUMNS + schema.names if c not in frame.columns]
    if missing:
        raise ValueError(f"panel is missing columns: {missing}")
    if frame[list(PANEL_COLUMNS + schema.names)].isna().any().any():
        raise ValueError("panel has missing values")
    frame = frame.sort_values(["year", "city"], kind="mergesort")
    cities = np.sort(frame["city"].unique())
    times = np.sort(frame["year"].unique())
    T, A = len(times), len(cities)
    if len(frame) != T * A or frame.duplicated(["year", "city"]).any():
        raise ValueError("every year must have exactly one row per city")
    shape = (T, A)
    x = np.stack([frame[n].to_numpy(float).reshape(shape) for n in schema.x_names], axis=-1) if schema.x_names else np.zeros(shape + (0,))
    z = np.stack([frame[n].to_numpy(float).reshape(shape) for n in schema.z_names], axis=-1) if schema.z_names else np.zeros(shape + (0,))
    declared = frame["declared"].to_numpy().reshape(shape)
    if not np.isin(declared, (0, 1)).all():
        raise ValueError("declared must be 0 or 1")
    return Panel(
        schema, cities, times, x, z, frame["cost"].to_numpy(float).reshape(shape), declared.astype(bool),
        cost_bound=cost_bound,
    )


def write_panel_csv(panel: Panel, path) -> None:
    panel_to_frame(panel).to_csv(path, index=False, lineterminator="\n")


def read_panel_csv(path, schema: CovariateSchema, cost_bound=None) -> Panel:
    return panel_from_frame(pd.read_csv(path, encoding="utf-8", float_precision="round_trip"), schema, cost_bound=cost_bound)


# --- dependency graphs ------------------------------------------------------


@dataclass(frozen=True)
class DependencyGraph:
    """Undirected graph on cities; non-adjacent cities are conditionally independent."""

    vertices: tuple
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        verts = tuple(self.vertices)
        if len(set(verts)) != len(verts):
            raise ValueError("duplicate vertices")
        vset = set(verts)
        norm = set()
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-loop at {a}")
            if a not in vset or b not in vset:
                raise ValueError(f"edge ({a}, {b}) references an unknown vertex")
            norm.add((a, b) if (a, b) <= (b, a) else (b, a))
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", frozenset(norm))

    def __len__(self):
        return len(self.vertices)

    def neighbor_counts(self) -> np.ndarray:
        pos = {v: i for i, v in enumerate(self.vertices)}
        counts = np.zeros(len(self.vertices), dtype=int)
        for a, b in self.edges:
            counts[pos[a]] += 1
            counts[pos[b]] += 1
        return counts

    def neighbors(self) -> list[list[int]]:
        """Neighbor positions (indices into ``vertices``) for each vertex."""
        pos = {v: i for i, v in enumerate(self.vertices)}
        out = [[] for _ in self.vertices]
        for a, b in sorted(self.edges):
            out[pos[a]].append(pos[b])
            out[pos[b]].append(pos[a])
        return out

    def edge_array(self) -> np.ndarray:
        """Edges as vertex positions, shape (E, 2), in a deterministic order."""
        pos = {v: i for i, v in enumerate(self.vertices)}
        if not self.edges:
            return np.zeros((0, 2), dtype=int)
        return np.array(sorted((pos[a], pos[b]) for a, b in self.edges), dtype=int)

    @property
    def degree(self) -> int:
        """1 plus the largest number of edges incident to a vertex."""
        if not self.vertices:
            raise ValueError("empty graph")
        return 1 + int(self.neighbor_counts().max())

    def relabel(self, mapping: dict) -> "DependencyGraph":
        return DependencyGraph(
            tuple(mapping[v] for v in self.vertices), frozenset((mapping[a], mapping[b]) for a, b in self.edges)
        )

    @classmethod
    def edgeless(cls, n: int) -> "DependencyGraph":
        return cls(tuple(range(n)))

    @classmethod
    def star(cls, leaves: int) -> "DependencyGraph":
        return cls(tuple(range(leaves + 1)), frozenset((0, i) for i in range(1, leaves + 1)))

    @classmethod
    def ring(cls, n: int, k: int = 1) -> "DependencyGraph":
        """Each vertex joined to its ``k`` nearest successors on a cycle (2k-regular when n > 2k)."""
        edges = set()
        for i in range(n):
            for s in range(1, k + 1):
                j = (i + s) % n
                if j != i:
                    edges.add((min(i, j), max(i, j)))
        return cls(tuple(range(n)), frozenset(edges))

    @classmethod
    def lattice(cls, n: int, width: int | None = None) -> "DependencyGraph":
        """4-neighbor lattice filled row-major; ``width`` defaults to ceil(sqrt(n))."""
        if width is None:
            width = max(1, int(np.ceil(np.sqrt(n))))
        edges = set()
        for i in range(n):
            r, c = divmod(i, width)
            if c + 1 < width and i + 1 < n:
                edges.add((i, i + 1))
            if i + width < n:
                edges.add((i, i + width))
        return cls(tuple(range(n)), frozenset(edges))


@dataclass(frozen=True)
class DegreeStats:
    min: float
    q1: float
    median: float
    mean: float
    q3: float
    q99: float
    max: float
    degree: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def degree_stats(graph: DependencyGraph) -> DegreeStats:
    """Order statistics of per-vertex neighbor counts, laid out like a neighbor-count table."""
    if len(graph) == 0:
        raise ValueError("empty graph")
    counts = graph.neighbor_counts().astype(float)
    q1, med, q3, q99 = np.quantile(counts, [0.25, 0.5, 0.75, 0.99])
    return DegreeStats(
        min=float(counts.min()), q1=float(q1), median=float(med), mean=float(counts.mean()),
        q3=float(q3), q99=float(q99), max=float(counts.max()), degree=int(counts.max()) + 1,
    )
