"""Analytic test problems, accuracy metrics, and benchmark drivers."""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .bayesopt import EgoConfig, EgoTrace, ego_run
from .design_space import DesignSpace, Doe, MixedPoint, VariableSpec, lhs_sample, validation_grid
from .gp import FitError, KernelConfig, NotSPDError, fit

logger = logging.getLogger(__name__)


# -- test functions -------------------------------------------------------

def _check_unit_interval(x: np.ndarray) -> None:
    if np.any((x < 0.0) | (x > 1.0)) or np.any(np.isnan(x)):
        raise ValueError("x must lie in [0, 1]")


def cosine_fn(x, c) -> np.ndarray:
    """Thirteen shifted cosines on [0, 1]; ``c`` is the 1-based level.

    Levels 1..9 and 10..13 form two families whose phases differ by a
    constant, which gives the level correlation matrix a two-block shape.
    """
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.any((c < 1) | (c > 13)):
        raise ValueError("cosine level must lie in 1..13")
    _check_unit_interval(x)
    first = np.cos(3.5 * np.pi * x + 0.4 * np.pi + np.pi * c / 15 - c / 20)
    second = np.cos(3.5 * np.pi * x - c / 20)
    return np.where(c <= 9, first, second)


def toy_fn(x, c) -> np.ndarray:
    """Ten one-dimensional branches on [0, 1]; ``c`` is the 0-based label."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(c)
    x, c = np.broadcast_arrays(x, c)
    out = np.empty(x.shape, dtype=float)
    branches = {
        0: lambda t: np.cos(3.6 * np.pi * (t - 2)) + t - 1,
        1: lambda t: 2 * np.cos(1.1 * np.pi * np.exp(t)) - t / 2 + 2,
        2: lambda t: np.cos(2 * np.pi * t) + t / 2,
        3: lambda t: t * (np.cos(3.4 * np.pi * (t - 1)) - (t - 1) / 2),
        4: lambda t: -(t**2) / 2,
        5: lambda t: 2 * np.cos(0.25 * np.pi * np.exp(-(t**4))) ** 2 - t / 2 + 1,
        6: lambda t: t * np.cos(3.4 * np.pi * t) - t / 2 + 1,
        7: lambda t: t * (-np.cos(3.5 * np.pi * t) - t / 2) + 2,
        8: lambda t: -(t**5) / 2 + 1,
        9: lambda t: -np.cos(2.5 * np.pi * t) ** 2 * np.sqrt(t) - 0.5 * np.log(t + 0.5) - 1.3,
    }
    if np.any((c < 0) | (c > 9)):
        raise ValueError("toy level must lie in 0..9")
    _check_unit_interval(x)
    for lev, fn in branches.items():
        mask = c == lev
        if np.any(mask):
            out[mask] = fn(x[mask])
    return out


FORCE = 5.0e4        # N
YOUNG = 2.0e11       # Pa


def hollow_factor(ratio: float) -> float:
    """Inertia multiplier of a shape with a homothetic void of ratio ``ratio``.

    At fixed area, removing a copy of the section scaled by ``ratio`` about
    its centroid multiplies the normalized inertia by (1 + r^2) / (1 - r^2).
    """
    if not 0.0 <= ratio < 1.0:
        raise ValueError("void ratio must lie in [0, 1)")
    return (1 + ratio**2) / (1 - ratio**2)


def _polygon_normalized_inertia(vertices: np.ndarray) -> float:
    """I_x / A^2 of a simple polygon about its centroidal horizontal axis."""
    x, y = vertices[:, 0], vertices[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = cross.sum() / 2
    cy = ((y + yn) * cross).sum() / (6 * area)
    ixx = ((y**2 + y * yn + yn**2) * cross).sum() / 12 - area * cy**2
    return float(abs(ixx) / area**2)


def star_vertices(outer: float = 1.0, inner: float = 0.5, points: int = 6) -> np.ndarray:
    ang = np.pi / 2 + np.arange(2 * points) * np.pi / points
    rad = np.where(np.arange(2 * points) % 2 == 0, outer, inner)
    return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])


def i_beam_vertices(flange: float = 0.32, web: float = 0.48) -> np.ndarray:
    """Unit-square bounding box I-section, flange and web thicknesses as fractions."""
    h, hw = 0.5, web / 2
    yf = h - flange
    return np.array([
        [-h, -h], [h, -h], [h, -yf], [hw, -yf], [hw, yf], [h, yf],
        [h, h], [-h, h], [-h, yf], [-hw, yf], [-hw, -yf], [-h, -yf],
    ])


SHAPES = ("square", "circle", "I", "star")
FILLS = {"full": 0.0, "medium": 0.5, "hollow": 0.8}


@dataclass(frozen=True)
class CrossSectionTable:
    """Normalized second moments ``I / S^2`` for the cantilever sections.

    Full shapes use closed forms (square, circle) or the polygon formula
    (I-beam, hexagram); medium and hollow sections carve a homothetic void.
    Entries run shape by shape, each as full, medium, hollow, so sections
    1, 4, 7, 10 are the full ones.
    """

    labels: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.values) or not self.values:
            raise ValueError("one inertia value per section label is required")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("section labels must be distinct")
        if any(not v > 0 for v in self.values):
            raise ValueError("normalized inertia must be positive")

    @classmethod
    def default(cls) -> "CrossSectionTable":
        full = {
            "square": 1.0 / 12.0,
            "circle": 1.0 / (4.0 * np.pi),
            "I": _polygon_normalized_inertia(i_beam_vertices()),
            "star": _polygon_normalized_inertia(star_vertices()),
        }
        labels, values = [], []
        for shape in SHAPES:
            for fill, ratio in FILLS.items():
                labels.append(f"{fill}-{shape}")
                values.append(full[shape] * hollow_factor(ratio))
        return cls(tuple(labels), tuple(values))

    def group(self, label: str) -> str:
        return label.split("-", 1)[0]


def cantilever_fn(length, area, section, table: CrossSectionTable | None = None) -> np.ndarray:
    """Tip deflection ``F L^3 / (3 E S^2 I~)``; ``section`` is 1-based."""
    table = table or CrossSectionTable.default()
    section = np.asarray(section, dtype=int)
    length = np.asarray(length, dtype=float)
    area = np.asarray(area, dtype=float)
    if np.any((section < 1) | (section > len(table.values))):
        raise ValueError(f"section must lie in 1..{len(table.values)}")
    if np.any((length < 10.0) | (length > 20.0)) or np.any(np.isnan(length)):
        raise ValueError("length must lie in [10, 20] m")
    if np.any((area < 1.0) | (area > 2.0)) or np.any(np.isnan(area)):
        raise ValueError("section area must lie in [1, 2] m^2")
    ibar = np.asarray(table.values)[section - 1]
    return FORCE * length**3 / (3 * YOUNG * area**2 * ibar)


# -- problems -------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkProblem:
    name: str
    space: DesignSpace
    evaluate_doe: Callable[[Doe], np.ndarray]
    grid_resolution: int

    def __call__(self, w: MixedPoint) -> float:
        return float(self.evaluate_doe(Doe.from_points(self.space, [w]))[0])

    def evaluate(self, doe: Doe) -> Doe:
        return doe.with_responses(self.evaluate_doe(doe))

    def validation_set(self) -> Doe:
        return self.evaluate(validation_grid(self.space, self.grid_resolution))


def cosine_problem() -> BenchmarkProblem:
    space = DesignSpace((
        VariableSpec.continuous("x", 0.0, 1.0),
        VariableSpec.categorical("c", [str(k) for k in range(1, 14)]),
    ))
    return BenchmarkProblem("cosine", space, lambda d: cosine_fn(d.x[:, 0], d.c[:, 0]), 1000)


def toy_problem() -> BenchmarkProblem:
    space = DesignSpace((
        VariableSpec.continuous("x", 0.0, 1.0),
        VariableSpec.categorical("c", [str(k) for k in range(10)]),
    ))
    return BenchmarkProblem("toy", space, lambda d: toy_fn(d.x[:, 0], d.c[:, 0] - 1), 1000)


def cantilever_problem(table: CrossSectionTable | None = None) -> BenchmarkProblem:
    table = table or CrossSectionTable.default()
    space = DesignSpace((
        VariableSpec.continuous("L", 10.0, 20.0),
        VariableSpec.continuous("S", 1.0, 2.0),
        VariableSpec.categorical("section", table.labels),
    ))
    return BenchmarkProblem(
        "cantilever", space,
        lambda d: cantilever_fn(d.x[:, 0], d.x[:, 1], d.c[:, 0], table), 30,
    )


PROBLEMS = {"cosine": cosine_problem, "toy": toy_problem, "cantilever": cantilever_problem}


def get_problem(name: str) -> BenchmarkProblem:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}") from None


def toy_global_minimum(resolution: int = 10001) -> tuple[float, float, int]:
    """Dense-grid minimum of the toy problem: (value, x, 0-based label)."""
    x = np.linspace(0.0, 1.0, resolution)
    vals = np.array([toy_fn(x, k) for k in range(10)])
    k, i = np.unravel_index(int(np.argmin(vals)), vals.shape)
    return float(vals[k, i]), float(x[i]), int(k)


# -- metrics --------------------------------------------------------------

def rmse(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ValueError("rmse needs equal, nonempty shapes")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


def pva(y_true, y_pred, var) -> float:
    """Log of the mean squared error normalized by the predicted variance."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    var = np.asarray(var, dtype=float)
    if y_true.shape != y_pred.shape or y_true.shape != var.shape or y_true.size == 0:
        raise ValueError("pva needs equal, nonempty shapes")
    if np.any(var <= 0):
        raise ValueError("pva needs strictly positive variances")
    return float(np.log(np.mean((y_true - y_pred) ** 2 / var)))


def pva_excluding_zero_variance(y_true, y_pred, var) -> tuple[float, int]:
    """PVA over points with positive predicted variance, and how many were dropped.

    Validation points that coincide with training data have zero posterior
    variance and would otherwise make the ratio infinite.
    """
    var = np.asarray(var, dtype=float)
    pos = var > 0
    n_out = int(np.sum(~pos))
    if not np.any(pos):
        return float("nan"), n_out
    return pva(np.asarray(y_true)[pos], np.asarray(y_pred)[pos], var[pos]), n_out


# -- model-accuracy benchmark ---------------------------------------------

@dataclass
class ModelBenchmarkReport:
    problem: str
    rows: list[dict] = field(default_factory=list)
    level_matrices: dict[tuple[str, int], dict[str, np.ndarray]] = field(default_factory=dict)

    def medians(self) -> dict[str, dict[str, float]]:
        out = {}
        for k in dict.fromkeys(r["kernel"] for r in self.rows):
            ok = [r for r in self.rows if r["kernel"] == k and not r["error"]]
            out[k] = {
                "n_hyper": ok[0]["n_hyper"] if ok else None,
                "rmse": float(np.median([r["rmse"] for r in ok])) if ok else float("nan"),
                "pva": float(np.median([r["pva"] for r in ok])) if ok else float("nan"),
                "fit_seconds": float(np.median([r["fit_seconds"] for r in ok])) if ok else float("nan"),
                "failures": sum(1 for r in self.rows if r["kernel"] == k and r["error"]),
            }
        return out

    def to_csv(self, path=None) -> str:
        cols = ["kernel", "seed", "n_hyper", "rmse", "pva", "pva_excluded", "log_likelihood",
                "fit_seconds", "error"]
        buf = io.StringIO()
        w = csv.DictWriter(buf, cols, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in r.items()})
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_json(self, path=None) -> str:
        text = json.dumps({"problem": self.problem, "medians": self.medians()}, indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


def run_model_benchmark(
    problem: BenchmarkProblem,
    kernels: Mapping[str, KernelConfig],
    doe_size: int,
    seeds: Sequence[int],
    starts: int = 10,
    max_evals_per_dim: int = 150,
    keep_level_matrices: bool = False,
    validation: Doe | None = None,
) -> ModelBenchmarkReport:
    """Fit every kernel on an LHS per seed and score it on the validation grid."""
    if not seeds:
        raise ValueError("run_model_benchmark needs at least one seed")
    val = validation if validation is not None else problem.validation_set()
    report = ModelBenchmarkReport(problem.name)
    for seed in seeds:
        doe = problem.evaluate(lhs_sample(problem.space, doe_size, seed=seed))
        for name, cfg in kernels.items():
            row = {"kernel": name, "seed": seed, "error": ""}
            t0 = time.perf_counter()
            try:
                gp, _ = fit(problem.space, doe, cfg, starts=starts, seed=seed,
                            max_evals_per_dim=max_evals_per_dim)
                mean, var = gp.predict(val)
                score = (rmse(val.y, mean), *pva_excluding_zero_variance(val.y, mean, var))
            except (FitError, NotSPDError, ValueError) as err:
                row.update(n_hyper=None, rmse=float("nan"), pva=float("nan"), pva_excluded=None,
                           log_likelihood=float("nan"), fit_seconds=time.perf_counter() - t0,
                           error=str(err))
                report.rows.append(row)
                logger.warning("%s seed %d failed: %s", name, seed, err)
                continue
            row.update(
                n_hyper=gp.n_hyper,
                rmse=score[0],
                pva=score[1],
                pva_excluded=score[2],
                log_likelihood=float(gp.log_likelihood),
                fit_seconds=time.perf_counter() - t0,
            )
            report.rows.append(row)
            if keep_level_matrices and cfg.cr_pls is None:
                report.level_matrices[(name, seed)] = {
                    v.name: gp.level_matrix(v.name) for v in problem.space.categoricals
                }
    return report


# -- optimization benchmark -----------------------------------------------

@dataclass
class OptimBenchmarkReport:
    problem: str
    traces: dict[tuple[str, int], list[EgoTrace]] = field(default_factory=dict)

    def best_after(self, kernel: str, doe_size: int, k: int) -> np.ndarray:
        return np.array([t.best_after(k) for t in self.traces[(kernel, doe_size)]])

    def median_curve(self, kernel: str, doe_size: int) -> np.ndarray:
        curves = [t.best_so_far() for t in self.traces[(kernel, doe_size)]]
        n = min(len(c) for c in curves)
        return np.median(np.array([c[:n] for c in curves]), axis=0)

    def failures(self, kernel: str, doe_size: int) -> int:
        return sum(sum(r.failed for r in t.records) for t in self.traces[(kernel, doe_size)])

    def summary(self) -> dict:
        out = {}
        for (k, n0), traces in self.traces.items():
            final = [t.best_y for t in traces]
            out[f"{k}/doe{n0}"] = {
                "runs": len(traces),
                "median_final_best": float(np.median(final)),
                "failures": self.failures(k, n0),
            }
        return out

    def to_json(self, path=None) -> str:
        text = json.dumps({"problem": self.problem, "summary": self.summary()}, indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


def run_optim_benchmark(
    problem: BenchmarkProblem,
    kernels: Mapping[str, KernelConfig],
    doe_sizes: Sequence[int],
    runs: int,
    budget: int,
    **ego_kw,
) -> OptimBenchmarkReport:
    """Repeat EGO from ``runs`` seeded initial designs per kernel and DoE size."""
    report = OptimBenchmarkReport(problem.name)
    for n0 in doe_sizes:
        for name, cfg in kernels.items():
            traces = []
            for r in range(runs):
                conf = EgoConfig(kernel=cfg, doe_size=n0, budget=budget, seed=r, **ego_kw)
                traces.append(ego_run(problem, problem.space, conf))
            report.traces[(name, n0)] = traces
    return report
