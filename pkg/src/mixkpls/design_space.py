"""Mixed continuous / integer / categorical design spaces.

Points are stored split by kind, ``w = (x, z, c)``, with categorical values as
1-based level indices.  A :class:`Doe` keeps the same split as arrays so the
kernels can work on whole designs at once.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .pls import n_pairs, psi

CONTINUOUS = "continuous"
INTEGER = "integer"
CATEGORICAL = "categorical"


class DesignSpaceError(ValueError):
    pass


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: str
    lower: float | None = None
    upper: float | None = None
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind in (CONTINUOUS, INTEGER):
            if self.lower is None or self.upper is None or not self.lower < self.upper:
                raise DesignSpaceError(f"{self.name}: need lower < upper")
            if self.kind == INTEGER and (
                int(self.lower) != self.lower or int(self.upper) != self.upper
            ):
                raise DesignSpaceError(f"{self.name}: integer bounds must be integral")
        elif self.kind == CATEGORICAL:
            levels = tuple(str(v) for v in self.levels)
            object.__setattr__(self, "levels", levels)
            if len(levels) < 2:
                raise DesignSpaceError(f"{self.name}: need at least 2 levels")
            if len(set(levels)) != len(levels):
                raise DesignSpaceError(f"{self.name}: level labels must be distinct")
        else:
            raise DesignSpaceError(f"{self.name}: unknown kind {self.kind!r}")

    @classmethod
    def continuous(cls, name, lower, upper):
        return cls(name, CONTINUOUS, float(lower), float(upper))

    @classmethod
    def integer(cls, name, lower, upper):
        return cls(name, INTEGER, int(lower), int(upper))

    @classmethod
    def categorical(cls, name, levels):
        return cls(name, CATEGORICAL, levels=tuple(levels))

    @property
    def n_levels(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class MixedPoint:
    x: tuple[float, ...] = ()
    z: tuple[int, ...] = ()
    c: tuple[int, ...] = ()


@dataclass(frozen=True)
class DesignSpace:
    variables: tuple[VariableSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if not self.variables:
            raise DesignSpaceError("a design space needs at least one variable")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise DesignSpaceError("variable names must be unique")

    def _of(self, kind):
        return tuple(v for v in self.variables if v.kind == kind)

    @property
    def continuous(self) -> tuple[VariableSpec, ...]:
        return self._of(CONTINUOUS)

    @property
    def integers(self) -> tuple[VariableSpec, ...]:
        return self._of(INTEGER)

    @property
    def categoricals(self) -> tuple[VariableSpec, ...]:
        return self._of(CATEGORICAL)

    @property
    def n(self) -> int:
        return len(self.continuous)

    @property
    def m(self) -> int:
        return len(self.integers)

    @property
    def l(self) -> int:  # noqa: E743
        return len(self.categoricals)

    @property
    def level_counts(self) -> tuple[int, ...]:
        return tuple(v.n_levels for v in self.categoricals)

    @property
    def relaxed_dim(self) -> int:
        return self.n + self.m + sum(self.level_counts)

    @property
    def numeric_bounds(self) -> np.ndarray:
        """``(n + m) x 2`` bounds of continuous then integer variables."""
        specs = self.continuous + self.integers
        return np.array([[v.lower, v.upper] for v in specs], dtype=float).reshape(-1, 2)

    def variable(self, name: str) -> VariableSpec:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        out = []
        for v in self.variables:
            if v.kind == CATEGORICAL:
                out.append({"name": v.name, "type": v.kind, "levels": list(v.levels)})
            else:
                out.append({"name": v.name, "type": v.kind, "bounds": [v.lower, v.upper]})
        return {"variables": out}

    @classmethod
    def from_dict(cls, data: dict) -> "DesignSpace":
        try:
            entries = data["variables"]
        except (KeyError, TypeError):
            raise DesignSpaceError("design space JSON needs a 'variables' list")
        specs = []
        for e in entries:
            kind = e.get("type")
            if kind == CATEGORICAL:
                specs.append(VariableSpec.categorical(e["name"], e["levels"]))
            elif kind == CONTINUOUS:
                specs.append(VariableSpec.continuous(e["name"], *e["bounds"]))
            elif kind == INTEGER:
                specs.append(VariableSpec.integer(e["name"], *e["bounds"]))
            else:
                raise DesignSpaceError(f"unknown variable type {kind!r}")
        return cls(tuple(specs))

    @classmethod
    def load(cls, path) -> "DesignSpace":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def validate_point(space: DesignSpace, w: MixedPoint) -> None:
    """Raise :class:`DesignSpaceError` unless ``w`` lies in ``space``."""
    if len(w.x) != space.n or len(w.z) != space.m or len(w.c) != space.l:
        raise DesignSpaceError("point dimensions do not match the design space")
    for v, val in zip(space.continuous, w.x):
        if not (np.isfinite(val) and v.lower <= val <= v.upper):
            raise DesignSpaceError(f"{v.name}={val} outside [{v.lower}, {v.upper}]")
    for v, val in zip(space.integers, w.z):
        if int(val) != val or not v.lower <= val <= v.upper:
            raise DesignSpaceError(f"{v.name}={val} not an integer in [{v.lower}, {v.upper}]")
    for v, val in zip(space.categoricals, w.c):
        if int(val) != val or not 1 <= val <= v.n_levels:
            raise DesignSpaceError(f"{v.name}: level index {val} not in 1..{v.n_levels}")


@dataclass(frozen=True)
class Doe:
    """A design of experiments: ``n_t`` points and optional responses."""

    x: np.ndarray
    z: np.ndarray
    c: np.ndarray
    y: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        n_t = x.shape[0]
        z = np.asarray(self.z, dtype=int).reshape(n_t, -1)
        c = np.asarray(self.c, dtype=int).reshape(n_t, -1)
        object.__setattr__(self, "x", x.reshape(n_t, -1))
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "c", c)
        if n_t < 1:
            raise DesignSpaceError("a DoE needs at least one point")
        if self.y is not None:
            y = np.asarray(self.y, dtype=float).ravel()
            if y.size != n_t:
                raise DesignSpaceError("responses length must equal number of points")
            object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def points(self) -> list[MixedPoint]:
        return [self[i] for i in range(len(self))]

    def __getitem__(self, i: int) -> MixedPoint:
        return MixedPoint(
            tuple(float(v) for v in self.x[i]),
            tuple(int(v) for v in self.z[i]),
            tuple(int(v) for v in self.c[i]),
        )

    def __iter__(self) -> Iterator[MixedPoint]:
        return iter(self.points)

    def with_responses(self, y) -> "Doe":
        return Doe(self.x, self.z, self.c, y)

    def subset(self, idx) -> "Doe":
        idx = np.asarray(idx)
        y = None if self.y is None else self.y[idx]
        return Doe(self.x[idx], self.z[idx], self.c[idx], y)

    @classmethod
    def from_points(cls, space: DesignSpace, points: Sequence[MixedPoint], y=None) -> "Doe":
        n_t = len(points)
        x = np.array([p.x for p in points], dtype=float).reshape(n_t, space.n)
        z = np.array([p.z for p in points], dtype=int).reshape(n_t, space.m)
        c = np.array([p.c for p in points], dtype=int).reshape(n_t, space.l)
        return cls(x, z, c, y)

    @staticmethod
    def concat(a: "Doe", b: "Doe") -> "Doe":
        y = None
        if a.y is not None and b.y is not None:
            y = np.concatenate([a.y, b.y])
        return Doe(
            np.vstack([a.x, b.x]), np.vstack([a.z, b.z]), np.vstack([a.c, b.c]), y
        )


def validate_doe(space: DesignSpace, doe: Doe) -> None:
    if doe.x.shape[1] != space.n or doe.z.shape[1] != space.m or doe.c.shape[1] != space.l:
        raise DesignSpaceError("DoE columns do not match the design space")
    b = space.numeric_bounds
    if space.n and (
        not np.all(np.isfinite(doe.x))
        or np.any(doe.x < b[: space.n, 0])
        or np.any(doe.x > b[: space.n, 1])
    ):
        raise DesignSpaceError("continuous value out of bounds")
    if space.m and (np.any(doe.z < b[space.n :, 0]) or np.any(doe.z > b[space.n :, 1])):
        raise DesignSpaceError("integer value out of bounds")
    if space.l and (np.any(doe.c < 1) or np.any(doe.c > np.array(space.level_counts))):
        raise DesignSpaceError("categorical level index out of range")


def lhs_sample(space: DesignSpace, n_t: int, seed: int = 0) -> Doe:
    """Random-permutation Latin hypercube over every variable.

    Continuous axes get one point per stratum; integer and categorical axes
    bin the same stratified uniform draw into their values.
    """
    if n_t < 1:
        raise DesignSpaceError("n_t must be >= 1")
    rng = np.random.default_rng(seed)
    n_var = len(space.variables)
    u = (rng.permuted(np.tile(np.arange(n_t), (n_var, 1)), axis=1).T
         + rng.random((n_t, n_var))) / n_t
    x, z, c = [], [], []
    for j, v in enumerate(space.variables):
        col = u[:, j]
        if v.kind == CONTINUOUS:
            x.append(v.lower + col * (v.upper - v.lower))
        elif v.kind == INTEGER:
            span = int(v.upper - v.lower) + 1
            z.append(np.minimum(np.floor(col * span), span - 1).astype(int) + int(v.lower))
        else:
            c.append(np.minimum(np.floor(col * v.n_levels), v.n_levels - 1).astype(int) + 1)
    return Doe(
        np.column_stack(x) if x else np.empty((n_t, 0)),
        np.column_stack(z) if z else np.empty((n_t, 0), dtype=int),
        np.column_stack(c) if c else np.empty((n_t, 0), dtype=int),
    )


def one_hot_relax(space: DesignSpace, w: MixedPoint) -> np.ndarray:
    validate_point(space, w)
    return relax_doe(space, Doe.from_points(space, [w]))[0]


def relax_doe(space: DesignSpace, doe: Doe, scaled: bool = False) -> np.ndarray:
    """Continuous relaxation: numeric columns then one one-hot block per categorical.

    With ``scaled=True`` numeric columns are min-max scaled to [0, 1].
    """
    numeric = np.hstack([doe.x, doe.z.astype(float)])
    if scaled:
        numeric = scale_numeric(space, numeric)
    blocks = [numeric]
    for i, n_lev in enumerate(space.level_counts):
        blocks.append(np.eye(n_lev)[doe.c[:, i] - 1])
    return np.hstack(blocks)


def scale_numeric(space: DesignSpace, numeric: np.ndarray) -> np.ndarray:
    b = space.numeric_bounds
    return (numeric - b[:, 0]) / (b[:, 1] - b[:, 0])


def zeta_encode(n_lev: int, level: int) -> np.ndarray:
    """Pair-relaxed one-hot encoding: 1 on every pair that contains ``level``."""
    if n_lev < 2 or not 1 <= level <= n_lev:
        raise DesignSpaceError(f"level {level} invalid for {n_lev} levels")
    out = np.zeros(n_pairs(n_lev))
    for other in range(1, n_lev + 1):
        if other != level:
            out[psi(min(level, other), max(level, other), n_lev) - 1] = 1.0
    return out


def zeta_encode_column(n_lev: int, levels: np.ndarray) -> np.ndarray:
    table = np.array([zeta_encode(n_lev, k) for k in range(1, n_lev + 1)])
    return table[np.asarray(levels, dtype=int) - 1]


def zeta_hadamard(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("zeta vectors must have equal length")
    return a * b


def validation_grid(space: DesignSpace, resolution: int, cap: int = 5_000_000) -> Doe:
    """Evenly spaced grid on continuous axes times every integer and level.

    Categorical levels vary slowest, so points are grouped by level.
    """
    if resolution < 2:
        raise DesignSpaceError("resolution must be >= 2")
    axes_c = [np.linspace(v.lower, v.upper, resolution) for v in space.continuous]
    axes_z = [np.arange(int(v.lower), int(v.upper) + 1) for v in space.integers]
    axes_l = [np.arange(1, v.n_levels + 1) for v in space.categoricals]
    size = int(np.prod([len(a) for a in axes_c + axes_z + axes_l], dtype=float))
    if size > cap:
        raise DesignSpaceError(f"grid of {size} points exceeds cap {cap}")
    grids = np.meshgrid(*(axes_l + axes_z + axes_c), indexing="ij") if size else []
    flat = [g.ravel() for g in grids]
    l, m = space.l, space.m
    c = np.column_stack(flat[:l]) if l else np.empty((size, 0), dtype=int)
    z = np.column_stack(flat[l : l + m]) if m else np.empty((size, 0), dtype=int)
    x = np.column_stack(flat[l + m :]) if space.n else np.empty((size, 0))
    return Doe(x, z, c)


def level_combinations(space: DesignSpace) -> Iterator[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Every ``(z, c)`` combination of integer values and categorical levels."""
    axes_z = [range(int(v.lower), int(v.upper) + 1) for v in space.integers]
    axes_l = [range(1, v.n_levels + 1) for v in space.categoricals]
    for combo in itertools.product(*axes_z, *axes_l):
        yield tuple(combo[: space.m]), tuple(combo[space.m :])


def n_level_combinations(space: DesignSpace) -> int:
    total = 1
    for v in space.integers:
        total *= int(v.upper - v.lower) + 1
    for v in space.categoricals:
        total *= v.n_levels
    return total


# -- CSV ----------------------------------------------------------------

def _column_order(space: DesignSpace):
    """(kind, position within kind) for each variable in declaration order."""
    counters = {CONTINUOUS: 0, INTEGER: 0, CATEGORICAL: 0}
    order = []
    for v in space.variables:
        order.append((v, counters[v.kind]))
        counters[v.kind] += 1
    return order


def doe_to_rows(space: DesignSpace, doe: Doe) -> list[list[str]]:
    rows = []
    for i in range(len(doe)):
        row = []
        for v, k in _column_order(space):
            if v.kind == CONTINUOUS:
                row.append(f"{doe.x[i, k]:.17g}")
            elif v.kind == INTEGER:
                row.append(str(int(doe.z[i, k])))
            else:
                row.append(v.levels[doe.c[i, k] - 1])
        if doe.y is not None:
            row.append(f"{doe.y[i]:.17g}")
        rows.append(row)
    return rows


def write_doe_csv(space: DesignSpace, doe: Doe, path) -> None:
    header = [v.name for v in space.variables] + (["y"] if doe.y is not None else [])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(doe_to_rows(space, doe))
    Path(path).write_text(buf.getvalue())


def read_doe_csv(space: DesignSpace, path, require_y: bool = False) -> Doe:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DesignSpaceError(f"{path}: empty CSV")
    header, body = rows[0], [r for r in rows[1:] if r]
    names = [v.name for v in space.variables]
    has_y = header == names + ["y"]
    if header != names and not has_y:
        raise DesignSpaceError(f"{path}: header {header} does not match variables {names}")
    if require_y and not has_y:
        raise DesignSpaceError(f"{path}: missing 'y' column")
    if not body:
        raise DesignSpaceError(f"{path}: no data rows")
    points, ys = [], []
    for line, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DesignSpaceError(f"{path}:{line}: expected {len(header)} fields")
        x, z, c = [], [], []
        try:
            for v, val in zip(space.variables, row):
                if v.kind == CONTINUOUS:
                    x.append(float(val))
                elif v.kind == INTEGER:
                    fv = float(val)
                    if fv != int(fv):
                        raise DesignSpaceError(f"{v.name}: {val} is not an integer")
                    z.append(int(fv))
                else:
                    if val not in v.levels:
                        raise DesignSpaceError(f"{v.name}: unknown level {val!r}")
                    c.append(v.levels.index(val) + 1)
            if has_y:
                ys.append(float(row[-1]))
        except ValueError as err:
            raise DesignSpaceError(f"{path}:{line}: {err}") from None
        point = MixedPoint(tuple(x), tuple(z), tuple(c))
        try:
            validate_point(space, point)
        except DesignSpaceError as err:
            raise DesignSpaceError(f"{path}:{line}: {err}") from None
        points.append(point)
    return Doe.from_points(space, points, np.array(ys) if has_y else None)


def point_to_dict(space: DesignSpace, w: MixedPoint) -> dict:
    out = {}
    for v, k in _column_order(space):
        if v.kind == CONTINUOUS:
            out[v.name] = w.x[k]
        elif v.kind == INTEGER:
            out[v.name] = w.z[k]
        else:
            out[v.name] = v.levels[w.c[k] - 1]
    return out
