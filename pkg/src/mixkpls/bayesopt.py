"""Efficient global optimization with expected improvement on mixed spaces."""
from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from .design_space import (
    DesignSpace,
    Doe,
    MixedPoint,
    doe_to_rows,
    lhs_sample,
    level_combinations,
    n_level_combinations,
    point_to_dict,
    validate_point,
)
from .gp import FitError, KernelConfig, NotSPDError, TrainedGp, fit

logger = logging.getLogger(__name__)


def expected_improvement(mean, var, f_min: float) -> np.ndarray:
    """EI for minimization; reduces to ``max(f_min - mean, 0)`` where var is 0."""
    mean = np.asarray(mean, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(var, dtype=float), 0.0))
    gain = f_min - mean
    out = np.maximum(gain, 0.0)
    pos = sigma > 0
    u = gain[pos] / sigma[pos]
    out[pos] = gain[pos] * norm.cdf(u) + sigma[pos] * norm.pdf(u)
    return np.maximum(out, 0.0)


def gp_expected_improvement(gp: TrainedGp, w: MixedPoint, f_min: float) -> float:
    m, v = gp.predict(Doe.from_points(gp.space, [w]))
    return float(expected_improvement(m, v, f_min)[0])


@dataclass(frozen=True)
class AcquisitionSettings:
    n_candidates: int = 64       # random continuous candidates per level combination
    n_local: int = 2             # best candidates refined by local search
    enum_cap: int = 10_000
    min_distance: float = 1e-8


@dataclass(frozen=True)
class EgoConfig:
    kernel: KernelConfig
    doe_size: int = 5
    budget: int = 55
    fit_starts: int = 10
    fit_max_evals_per_dim: int = 150
    acquisition: AcquisitionSettings = AcquisitionSettings()
    seed: int = 0

    def __post_init__(self):
        if self.doe_size < 2:
            raise ValueError("initial DoE needs at least 2 points")
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")


def _is_duplicate(space: DesignSpace, x: np.ndarray, z, c, seen: Doe | None, tol: float) -> bool:
    if seen is None or len(seen) == 0:
        return False
    same = np.all(seen.z == np.asarray(z), axis=1) & np.all(seen.c == np.asarray(c), axis=1)
    if not np.any(same):
        return False
    if space.n == 0:
        return True
    b = space.numeric_bounds[: space.n]
    span = b[:, 1] - b[:, 0]
    d = np.max(np.abs((seen.x[same] - x) / span), axis=1)
    return bool(np.any(d < tol))


def _combos(space: DesignSpace, cap: int, rng) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    if n_level_combinations(space) <= cap:
        return list(level_combinations(space))
    out = []
    for _ in range(cap):
        z = tuple(int(rng.integers(int(v.lower), int(v.upper) + 1)) for v in space.integers)
        c = tuple(int(rng.integers(1, v.n_levels + 1)) for v in space.categoricals)
        out.append((z, c))
    return out


def propose_next(
    gp: TrainedGp,
    f_min: float,
    settings: AcquisitionSettings = AcquisitionSettings(),
    seed: int = 0,
    exclude: Doe | None = None,
) -> MixedPoint:
    """Maximize EI over every level combination (or a sample of them)."""
    space = gp.space
    rng = np.random.default_rng(seed)
    seen = _strip(gp.doe) if exclude is None else Doe.concat(_strip(gp.doe), _strip(exclude))
    combos = _combos(space, settings.enum_cap, rng)
    n = space.n
    bounds = space.numeric_bounds[:n]
    n_cand = settings.n_candidates if n else 1

    # candidate batch: every combo with the same continuous draws
    u = rng.random((n_cand, n))
    xc = bounds[:, 0] + u * (bounds[:, 1] - bounds[:, 0]) if n else np.empty((1, 0))
    Z = np.array([z for z, _ in combos], dtype=int).reshape(len(combos), space.m)
    C = np.array([c for _, c in combos], dtype=int).reshape(len(combos), space.l)
    cand = Doe(
        np.tile(xc, (len(combos), 1)),
        np.repeat(Z, n_cand, axis=0),
        np.repeat(C, n_cand, axis=0),
    )
    mean, var = gp.predict(cand)
    ei = expected_improvement(mean, var, f_min)

    results = []  # (ei, x, z, c)
    if n and np.max(ei) > 0:
        ei_grid = ei.reshape(len(combos), n_cand)
        best_per_combo = ei_grid.max(axis=1)
        top_combos = np.argsort(-best_per_combo, kind="stable")[: max(4, settings.n_local)]
        lo, hi = bounds[:, 0], bounds[:, 1]
        for ci in top_combos:
            z, c = combos[ci]
            starts = np.argsort(-ei_grid[ci], kind="stable")[: settings.n_local]
            for si in starts:

                def neg_ei(xv, z=z, c=c):
                    m, v = gp.predict(Doe(xv[None, :], np.array([z]).reshape(1, -1),
                                          np.array([c]).reshape(1, -1)))
                    return -float(expected_improvement(m, v, f_min)[0])

                res = minimize(neg_ei, xc[si], method="L-BFGS-B", bounds=list(zip(lo, hi)),
                               options={"maxiter": 50})
                xv = np.clip(res.x, lo, hi)
                results.append((-neg_ei(xv), xv, z, c))

    # refined points first, then the whole batch, best EI first
    results.sort(key=lambda r: -r[0])
    for i in np.argsort(-ei, kind="stable"):
        results.append((float(ei[i]), cand.x[i], tuple(cand.z[i]), tuple(cand.c[i])))
    fresh = [r for r in results
             if not _is_duplicate(space, np.asarray(r[1]), r[2], r[3], seen, settings.min_distance)]
    if fresh and fresh[0][0] > 0.0:
        _, xv, z, c = fresh[0]
        w = MixedPoint(tuple(float(v) for v in xv), tuple(int(v) for v in z), tuple(int(v) for v in c))
        validate_point(space, w)
        return w
    if fresh:
        warnings.warn("expected improvement vanishes everywhere; proposing an exploratory point")
    else:
        warnings.warn("all acquisition candidates duplicate existing data")
    for _ in range(100):
        w = lhs_sample(space, 1, seed=int(rng.integers(2**31)))[0]
        if not _is_duplicate(space, np.array(w.x), w.z, w.c, seen, settings.min_distance):
            return w
    if fresh:
        _, xv, z, c = fresh[0]
        return MixedPoint(tuple(float(v) for v in xv), tuple(int(v) for v in z), tuple(int(v) for v in c))
    return w


def _strip(doe: Doe) -> Doe:
    return Doe(doe.x, doe.z, doe.c)


@dataclass
class EgoRecord:
    iteration: int
    point: MixedPoint
    y: float | None
    best: float
    failed: bool = False
    n_hyper: int | None = None
    log_likelihood: float | None = None
    message: str = ""


@dataclass
class EgoTrace:
    space: DesignSpace
    records: list[EgoRecord] = field(default_factory=list)

    @property
    def n_evaluations(self) -> int:
        return len(self.records)

    @property
    def best_y(self) -> float:
        return self.records[-1].best if self.records else np.inf

    @property
    def best_point(self) -> MixedPoint | None:
        ok = [r for r in self.records if not r.failed]
        if not ok:
            return None
        return min(ok, key=lambda r: r.y).point

    def best_so_far(self) -> np.ndarray:
        return np.array([r.best for r in self.records])

    def best_after(self, k: int) -> float:
        """Incumbent after the first ``k`` evaluations."""
        curve = self.best_so_far()
        return float(curve[min(k, curve.size) - 1])

    def to_csv(self, path=None) -> str:
        header = ["iter"] + [v.name for v in self.space.variables] + ["y", "best_so_far", "failed"]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for r in self.records:
            row = doe_to_rows(self.space, Doe.from_points(self.space, [r.point]))[0]
            y = "" if r.y is None else f"{r.y:.17g}"
            writer.writerow([r.iteration] + row + [y, f"{r.best:.17g}", int(r.failed)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def summary(self) -> dict:
        bp = self.best_point
        return {
            "n_evaluations": self.n_evaluations,
            "n_failed": sum(r.failed for r in self.records),
            "best_y": self.best_y,
            "best_point": None if bp is None else point_to_dict(self.space, bp),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.summary(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


def _evaluate(f, w: MixedPoint) -> tuple[float | None, str]:
    try:
        y = float(f(w))
    except Exception as err:  # black-box failure is data, not a crash
        return None, f"{type(err).__name__}: {err}"
    if not np.isfinite(y):
        return None, "non-finite objective"
    return y, ""


def ego_run(f: Callable[[MixedPoint], float], space: DesignSpace, config: EgoConfig) -> EgoTrace:
    """LHS initial design followed by ``budget`` EI infill iterations."""
    trace = EgoTrace(space)
    best = np.inf
    good: list[MixedPoint] = []
    ys: list[float] = []
    failed: list[MixedPoint] = []

    def record(it, w, y, msg, **kw):
        nonlocal best
        if y is not None:
            best = min(best, y)
            good.append(w)
            ys.append(y)
        else:
            failed.append(w)
        trace.records.append(EgoRecord(it, w, y, best, y is None, message=msg, **kw))

    for w in lhs_sample(space, config.doe_size, seed=config.seed):
        y, msg = _evaluate(f, w)
        record(0, w, y, msg)

    for it in range(1, config.budget + 1):
        step_seed = int(np.random.default_rng([config.seed, it]).integers(2**31))
        if len(ys) < 2:
            w = lhs_sample(space, 1, seed=step_seed)[0]
            y, msg = _evaluate(f, w)
            record(it, w, y, msg or "too few successful points to fit")
            continue
        doe = Doe.from_points(space, good, np.array(ys))
        try:
            gp, _ = fit(space, doe, config.kernel, starts=config.fit_starts, seed=step_seed,
                        max_evals_per_dim=config.fit_max_evals_per_dim)
            exclude = Doe.from_points(space, failed) if failed else None
            w = propose_next(gp, float(np.min(ys)), config.acquisition, seed=step_seed, exclude=exclude)
            n_hyper, ll = gp.n_hyper, gp.log_likelihood
        except (FitError, NotSPDError) as err:
            logger.warning("iteration %d: model failed (%s); sampling at random", it, err)
            w = lhs_sample(space, 1, seed=step_seed)[0]
            n_hyper, ll = None, None
        y, msg = _evaluate(f, w)
        record(it, w, y, msg, n_hyper=n_hyper, log_likelihood=ll)
    return trace
