"""Mixed-variable kriging: product kernel, concentrated likelihood, fitting.

Continuous and integer inputs are min-max scaled to [0, 1] and share one
exponential kernel family; each categorical variable contributes a level
correlation matrix.  Responses are standardized internally.
"""
from __future__ import annotations

import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import lapack, solve_triangular
from scipy.optimize import minimize

from . import categorical_kernels as ck
from .design_space import (
    DesignSpace,
    Doe,
    MixedPoint,
    relax_doe,
    scale_numeric,
    validate_doe,
    zeta_encode_column,
)
from .pls import MatrixPlsRotation, PlsRankError, matrix_pls_fit, n_pairs, normalize_rows, pls_fit

logger = logging.getLogger(__name__)

SQUARED_EXPONENTIAL = "squared_exponential"
ABSOLUTE_EXPONENTIAL = "absolute_exponential"

THETA_BOUNDS = (1e-6, 20.0)
CR_BOUNDS = (5e-7, 10.0)
ANGLE_BOUNDS = (0.0, np.pi)
NUGGET_LADDER = (0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4)
PENALTY = 1e10
RHOBEG = 0.25  # initial trust radius, as a fraction of each search range


class NotSPDError(np.linalg.LinAlgError):
    pass


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelConfig:
    """Kernel choice for a mixed GP.

    ``categorical`` is one kind for every categorical variable or one per
    variable.  ``cr_pls`` (component count) replaces all per-family settings
    with a single KPLS over the one-hot relaxed space.
    """

    categorical: str | tuple[str, ...] = ck.HH
    continuous_kernel: str = SQUARED_EXPONENTIAL
    pls_levels: int = 2
    continuous_pls: int | None = None
    cr_pls: int | None = None
    eps: float = ck.EPS

    def __post_init__(self):
        if isinstance(self.categorical, list):
            object.__setattr__(self, "categorical", tuple(self.categorical))
        kinds = (self.categorical,) if isinstance(self.categorical, str) else self.categorical
        for k in kinds:
            if k not in ck.KINDS:
                raise ValueError(f"unknown categorical kernel {k!r}")
        if self.continuous_kernel not in (SQUARED_EXPONENTIAL, ABSOLUTE_EXPONENTIAL):
            raise ValueError(f"unknown continuous kernel {self.continuous_kernel!r}")
        if self.pls_levels < 2:
            raise ValueError("pls_levels must be >= 2")
        if self.cr_pls is not None and self.continuous_pls is not None:
            raise ValueError("cr_pls already reduces the continuous part")
        for d in (self.cr_pls, self.continuous_pls):
            if d is not None and d < 1:
                raise ValueError("PLS component counts must be >= 1")

    def kinds_for(self, space: DesignSpace) -> tuple[str, ...]:
        if self.cr_pls is not None:
            return ()
        if isinstance(self.categorical, str):
            return (self.categorical,) * space.l
        if len(self.categorical) != space.l:
            raise ValueError("one categorical kind per categorical variable expected")
        return self.categorical

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(self.categorical, tuple):
            d["categorical"] = list(self.categorical)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KernelConfig":
        return cls(**d)


_NAMED = {
    "gd": ck.GD,
    "cr": ck.CR,
    "ehh": ck.EHH,
    "hh": ck.HH,
    "hh-pls": ck.HH_PLS,
    "ehh-pls": ck.EHH_PLS,
}
KERNEL_NAMES = tuple(_NAMED) + ("cr-pls",)


def kernel_config(name: str, pls_levels: int = 2, pls_components: int = 2, **kw) -> KernelConfig:
    """Config from a short name: gd, cr, ehh, hh, hh-pls, ehh-pls, cr-pls."""
    key = name.lower().replace("_", "-")
    if key == "cr-pls":
        return KernelConfig(categorical=ck.CR, cr_pls=pls_components, **kw)
    if key not in _NAMED:
        raise ValueError(f"unknown kernel {name!r}; choose from {', '.join(KERNEL_NAMES)}")
    return KernelConfig(categorical=_NAMED[key], pls_levels=pls_levels, **kw)


@dataclass(frozen=True)
class Block:
    name: str
    size: int
    lower: float
    upper: float
    log: bool


@dataclass(frozen=True)
class HyperparameterVector:
    """Flat hyperparameter values in natural units plus per-entry bounds."""

    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    log: np.ndarray
    names: tuple[str, ...]

    def __len__(self) -> int:
        return self.values.size

    def to_search(self, values=None) -> np.ndarray:
        v = self.values if values is None else np.asarray(values, dtype=float)
        out = v.copy()
        out[self.log] = np.log(np.maximum(v[self.log], self.lower[self.log]))
        return out

    def from_search(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        v = s.copy()
        v[self.log] = np.exp(s[self.log])
        return np.clip(v, self.lower, self.upper)

    def search_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.to_search(self.lower), self.to_search(self.upper)

    def with_values(self, values) -> "HyperparameterVector":
        values = np.asarray(values, dtype=float).ravel()
        if values.shape != self.values.shape:
            raise ValueError("hyperparameter length mismatch")
        if np.any(values < self.lower - 1e-12) or np.any(values > self.upper + 1e-12):
            raise ValueError("hyperparameters outside their bounds")
        return HyperparameterVector(values, self.lower, self.upper, self.log, self.names)


# -- SPD factorization -----------------------------------------------------

def ensure_spd(R: np.ndarray, ladder=NUGGET_LADDER) -> tuple[np.ndarray, float]:
    """Cholesky factor of ``R + nugget I`` for the first nugget that works."""
    R = np.asarray(R, dtype=float)
    eye = np.eye(R.shape[0])
    failed = None
    for nug in ladder:
        A = R + nug * eye if nug else R
        Lc, info = lapack.dpotrf(A, lower=1, clean=1)
        if info == 0:
            return Lc, nug
        failed = info
    raise NotSPDError(
        f"correlation matrix not SPD with nugget up to {ladder[-1]:g}; "
        f"leading minor {failed} failed"
    )


def factorize(R: np.ndarray, nugget: float) -> np.ndarray:
    Lc, info = lapack.dpotrf(R + nugget * np.eye(R.shape[0]), lower=1, clean=1)
    if info != 0:
        raise NotSPDError(f"factorization failed at leading minor {info}")
    return Lc


@dataclass
class _Profile:
    ll: float
    mu: float
    sigma2: float
    chol: np.ndarray
    nugget: float
    alpha: np.ndarray | None


def _profile(R: np.ndarray, y: np.ndarray, nugget: float | None = None,
             with_alpha: bool = True) -> _Profile:
    if nugget is None:
        Lc, nug = ensure_spd(R)
    else:
        Lc, nug = factorize(R, nugget), nugget
    n_t = y.size
    uw = solve_triangular(Lc, np.column_stack([np.ones(n_t), y]), lower=True, check_finite=False)
    u, w = uw[:, 0], uw[:, 1]
    mu = float(u @ w / (u @ u))
    res = w - mu * u
    sigma2 = float(res @ res / n_t)
    logdet = 2.0 * np.sum(np.log(np.diag(Lc)))
    if sigma2 <= 0.0 or not np.isfinite(sigma2):
        ll = -np.inf
    else:
        ll = -0.5 * (n_t * np.log(sigma2) + logdet + n_t * (1.0 + np.log(2 * np.pi)))
    alpha = solve_triangular(Lc.T, res, lower=False, check_finite=False) if with_alpha else None
    return _Profile(float(ll), mu, sigma2, Lc, nug, alpha)


# -- kernel ---------------------------------------------------------------

class MixedKernel:
    """Product kernel over a design space with any fitted PLS rotations."""

    def __init__(
        self,
        space: DesignSpace,
        config: KernelConfig,
        kinds: tuple[str, ...] | None = None,
        numeric_rotation: np.ndarray | None = None,
        cat_rotations: tuple[MatrixPlsRotation | None, ...] | None = None,
    ):
        self.space = space
        self.config = config
        self.kinds = tuple(kinds) if kinds is not None else config.kinds_for(space)
        self.numeric_rotation = None if numeric_rotation is None else np.asarray(numeric_rotation)
        self.cat_rotations = tuple(cat_rotations) if cat_rotations is not None else (None,) * len(self.kinds)
        for kind, rot in zip(self.kinds, self.cat_rotations):
            if (kind in (ck.HH_PLS, ck.EHH_PLS)) != (rot is not None):
                raise ValueError(f"{kind} rotation mismatch")
        if config.cr_pls is not None or config.continuous_pls is not None:
            if self.numeric_rotation is None:
                raise ValueError("PLS config needs a fitted numeric rotation")
        self.blocks = self._blocks()

    # construction from data -------------------------------------------
    @classmethod
    def for_doe(cls, space: DesignSpace, config: KernelConfig, doe: Doe, y=None) -> "MixedKernel":
        """Fit whatever PLS rotations the config asks for on ``doe``."""
        y = doe.y if y is None else np.asarray(y, dtype=float)
        kinds = list(config.kinds_for(space))
        numeric_rotation = None
        if config.cr_pls is not None:
            numeric_rotation = _fit_kpls(relax_doe(space, doe, scaled=True), y, config.cr_pls)
        elif config.continuous_pls is not None and space.n + space.m > 0:
            numeric = scale_numeric(space, np.hstack([doe.x, doe.z.astype(float)]))
            numeric_rotation = _fit_kpls(numeric, y, config.continuous_pls)
        rotations = []
        for i, kind in enumerate(kinds):
            rot = None
            if kind in (ck.HH_PLS, ck.EHH_PLS):
                n_lev = space.level_counts[i]
                if config.pls_levels >= n_lev:
                    kinds[i] = ck.HH if kind == ck.HH_PLS else ck.EHH
                    logger.info("variable %d has %d levels; using full %s", i, n_lev, kinds[i])
                else:
                    rot = _fit_matrix_pls(zeta_encode_column(n_lev, doe.c[:, i]), y, config.pls_levels)
            rotations.append(rot)
        return cls(space, config, tuple(kinds), numeric_rotation, tuple(rotations))

    # layout -------------------------------------------------------------
    def _blocks(self) -> list[Block]:
        blocks = []
        sp = self.space
        if self.numeric_rotation is not None:
            blocks.append(Block("theta_pls", self.numeric_rotation.shape[1], *THETA_BOUNDS, True))
        elif sp.n + sp.m:
            blocks.append(Block("theta", sp.n + sp.m, *THETA_BOUNDS, True))
        for var, kind, rot in zip(sp.categoricals, self.kinds, self.cat_rotations):
            if kind == ck.GD:
                blocks.append(Block(f"{var.name}:gd", 1, *THETA_BOUNDS, True))
            elif kind == ck.CR:
                blocks.append(Block(f"{var.name}:cr", var.n_levels, *CR_BOUNDS, True))
            else:
                n_hs = rot.reduced_levels if rot is not None else var.n_levels
                blocks.append(Block(f"{var.name}:{kind.lower()}", n_pairs(n_hs), *ANGLE_BOUNDS, False))
        return blocks

    @property
    def n_hyper(self) -> int:
        return sum(b.size for b in self.blocks)

    def hyper_template(self) -> HyperparameterVector:
        lower, upper, log, names, values = [], [], [], [], []
        for b in self.blocks:
            lower += [b.lower] * b.size
            upper += [b.upper] * b.size
            log += [b.log] * b.size
            names += [f"{b.name}[{i}]" for i in range(b.size)]
            # geometric / arithmetic midpoints
            mid = np.sqrt(b.lower * b.upper) if b.log else 0.5 * (b.lower + b.upper)
            values += [mid] * b.size
        return HyperparameterVector(
            np.array(values), np.array(lower), np.array(upper), np.array(log, dtype=bool), tuple(names)
        )

    def pack(self, numeric_theta=None, cat_params=()) -> np.ndarray:
        """Flatten structured hyperparameters into the block layout."""
        parts = []
        blocks = iter(self.blocks)
        if self.blocks and self.blocks[0].name.startswith("theta"):
            next(blocks)
            parts.append(np.asarray(numeric_theta, dtype=float).ravel())
        for b, p in zip(blocks, cat_params):
            if p.kind == ck.GD:
                parts.append(np.array([p.theta]))
            elif p.kind == ck.CR:
                parts.append(p.diag)
            else:
                parts.append(p.angles)
        return np.concatenate(parts) if parts else np.zeros(0)

    def unpack(self, values) -> tuple[np.ndarray, list[ck.CategoricalKernelParam]]:
        """Per-dimension numeric theta (collapsed when PLS) and categorical params."""
        values = np.asarray(values, dtype=float).ravel()
        if values.size != self.n_hyper:
            raise ValueError(f"expected {self.n_hyper} hyperparameters, got {values.size}")
        pos = 0
        numeric = np.zeros(0)
        blocks = list(self.blocks)
        if blocks and blocks[0].name.startswith("theta"):
            b = blocks.pop(0)
            numeric = values[: b.size]
            pos = b.size
            if self.numeric_rotation is not None:
                numeric = (self.numeric_rotation**2) @ numeric
        params = []
        for b, kind, rot, var in zip(blocks, self.kinds, self.cat_rotations, self.space.categoricals):
            chunk = values[pos : pos + b.size]
            pos += b.size
            L = var.n_levels
            eps = self.config.eps
            if kind == ck.GD:
                params.append(ck.CategoricalKernelParam(kind, L, theta=float(chunk[0]), eps=eps))
            elif kind == ck.CR:
                params.append(ck.CategoricalKernelParam(kind, L, diag=chunk, eps=eps))
            else:
                params.append(ck.CategoricalKernelParam(kind, L, angles=chunk, rotation=rot, eps=eps))
        return numeric, params

    def level_matrices(self, values) -> list[np.ndarray]:
        return [ck.build_level_matrix(p) for p in self.unpack(values)[1]]

    # evaluation -----------------------------------------------------------
    def encode(self, doe: Doe) -> tuple[np.ndarray, np.ndarray]:
        if self.config.cr_pls is not None:
            return relax_doe(self.space, doe, scaled=True), np.empty((len(doe), 0), dtype=int)
        numeric = scale_numeric(self.space, np.hstack([doe.x, doe.z.astype(float)]))
        return numeric, doe.c - 1

    def _distance(self, diff: np.ndarray) -> np.ndarray:
        if self.config.continuous_kernel == SQUARED_EXPONENTIAL:
            return diff * diff
        return np.abs(diff)

    def cross(self, values, enc_a, enc_b) -> np.ndarray:
        """Correlation matrix between two encoded point sets."""
        theta, params = self.unpack(values)
        (Ua, Ca), (Ub, Cb) = enc_a, enc_b
        R = np.ones((Ua.shape[0], Ub.shape[0]))
        if theta.size:
            D = np.zeros_like(R)
            for j in range(theta.size):
                if theta[j] != 0.0:
                    D += theta[j] * self._distance(Ua[:, j][:, None] - Ub[:, j][None, :])
            R = np.exp(-D)
        for i, p in enumerate(params):
            M = ck.build_level_matrix(p)
            R *= M[Ca[:, i][:, None], Cb[:, i][None, :]]
        return R

    def __call__(self, values, w_r: MixedPoint, w_s: MixedPoint) -> float:
        a = self.encode(Doe.from_points(self.space, [w_r]))
        b = self.encode(Doe.from_points(self.space, [w_s]))
        return float(self.cross(values, a, b)[0, 0])

    def matrix(self, values, doe: Doe) -> np.ndarray:
        enc = self.encode(doe)
        R = self.cross(values, enc, enc)
        np.fill_diagonal(R, 1.0)
        return R

    def rotations_to_dict(self) -> dict:
        return {
            "kinds": list(self.kinds),
            "numeric": None if self.numeric_rotation is None else self.numeric_rotation.tolist(),
            "categorical": [
                None if r is None else {"rotation": r.rotation.tolist(), "n_levels": r.n_levels,
                                        "reduced_levels": r.reduced_levels}
                for r in self.cat_rotations
            ],
        }

    @classmethod
    def from_dict(cls, space, config, d) -> "MixedKernel":
        rots = tuple(
            None if r is None else MatrixPlsRotation(np.array(r["rotation"]), r["n_levels"], r["reduced_levels"])
            for r in d["categorical"]
        )
        numeric = None if d["numeric"] is None else np.array(d["numeric"])
        return cls(space, config, tuple(d["kinds"]), numeric, rots)


def _fit_kpls(X: np.ndarray, y: np.ndarray, d: int) -> np.ndarray:
    """PLS rotation for the kernel inputs ``X``.

    Directions are extracted from column-standardized inputs, so a continuous
    column is not drowned out by many one-hot columns, then mapped back so the
    rotation applies to ``X`` itself. Constant columns get zero rows.
    """
    s = X.std(axis=0)
    keep = s > 0
    Xs = np.zeros_like(X)
    Xs[:, keep] = X[:, keep] / s[keep]
    d = min(d, int(keep.sum()), X.shape[0] - 1)
    rot = None
    while d >= 1:
        try:
            rot = pls_fit(Xs, y, d).rotation
            break
        except PlsRankError as err:
            warnings.warn(f"{err}; reducing to {err.achieved} components")
            d = err.achieved
    if rot is None:
        # no direction correlates with y: fall back to an isotropic direction
        return np.full((X.shape[1], 1), 1.0 / np.sqrt(X.shape[1]))
    out = np.zeros_like(rot)
    out[keep] = rot[keep] / s[keep, None]
    return out


def _fit_matrix_pls(zeta: np.ndarray, y: np.ndarray, reduced: int) -> MatrixPlsRotation:
    n_lev = int(round((1 + np.sqrt(1 + 8 * zeta.shape[1])) / 2))
    while reduced >= 2:
        if n_pairs(reduced) <= zeta.shape[0] - 1:
            try:
                return matrix_pls_fit(zeta, y, reduced)
            except PlsRankError as err:
                warnings.warn(f"matrix PLS with {reduced} levels: {err}")
        reduced -= 1
    # one shared correlation for all level pairs
    return MatrixPlsRotation(normalize_rows(np.ones((zeta.shape[1], 1))), n_lev, 2)


# -- likelihood -------------------------------------------------------------

def correlation_matrix(kernel: MixedKernel, values, doe: Doe) -> np.ndarray:
    return kernel.matrix(values, doe)


def kernel_eval(kernel: MixedKernel, values, w_r: MixedPoint, w_s: MixedPoint) -> float:
    return kernel(values, w_r, w_s)


def log_likelihood(kernel: MixedKernel, values, doe: Doe) -> float:
    """Concentrated log-likelihood with the constant mean and variance profiled out."""
    if doe.y is None:
        raise ValueError("log-likelihood needs responses")
    return _profile(kernel.matrix(values, doe), doe.y).ll


class _TrainingObjective:
    """Negative concentrated log-likelihood with training distances cached."""

    def __init__(self, kernel: MixedKernel, doe: Doe, y: np.ndarray, template: HyperparameterVector):
        self.kernel = kernel
        self.y = y
        self.template = template
        U, C = kernel.encode(doe)
        diff = U[:, None, :] - U[None, :, :]
        self.D = np.moveaxis(kernel._distance(diff), 2, 0).copy()
        self.C = C
        self.n_eval = 0
        self.reconstructed = any(k in (ck.HH_PLS, ck.EHH_PLS) for k in kernel.kinds)
        self._last_key = None
        self._last = None

    def _parts(self, values):
        """Numeric theta and level matrices, remembered for the last point.

        COBYLA asks for the objective and the constraint at the same point,
        so one entry is enough.
        """
        values = np.asarray(values, dtype=float)
        key = values.tobytes()
        if key != self._last_key:
            theta, params = self.kernel.unpack(values)
            self._last = (theta, params, [ck.build_level_matrix(p) for p in params])
            self._last_key = key
        return self._last

    def corr(self, values) -> np.ndarray:
        theta, _, mats = self._parts(values)
        if theta.size:
            R = np.exp(-np.tensordot(theta, self.D, axes=1))
        else:
            R = np.ones((self.y.size, self.y.size))
        for i, M in enumerate(mats):
            ci = self.C[:, i]
            R *= M[ci[:, None], ci[None, :]]
        np.fill_diagonal(R, 1.0)
        return R

    def __call__(self, s) -> float:
        self.n_eval += 1
        values = self.template.from_search(s)
        try:
            ll = _profile(self.corr(values), self.y, with_alpha=False).ll
        except NotSPDError:
            return PENALTY
        return -ll if np.isfinite(ll) else PENALTY

    def psd_margin(self, s) -> float:
        """Smallest eigenvalue over the level matrices of reconstructed kinds.

        Other kinds are PSD by construction, so only the PLS kinds can make
        this negative; the Schur product of PSD factors stays PSD.
        """
        if not self.reconstructed:
            return 1.0
        _, params, mats = self._parts(self.template.from_search(s))
        return min(
            float(np.linalg.eigvalsh(M)[0])
            for p, M in zip(params, mats)
            if p.kind in (ck.HH_PLS, ck.EHH_PLS)
        )


# -- trained model ----------------------------------------------------------

@dataclass
class StartResult:
    start: list
    best: list
    log_likelihood: float
    n_eval: int
    success: bool
    message: str


@dataclass
class FitReport:
    best_log_likelihood: float
    starts: list[StartResult] = field(default_factory=list)
    n_eval: int = 0
    wall_time: float = 0.0


class TrainedGp:
    """A fitted noiseless kriging model; treat as immutable."""

    def __init__(self, space: DesignSpace, config: KernelConfig, doe: Doe, kernel: MixedKernel,
                 hyper: HyperparameterVector, nugget: float | None = None):
        if doe.y is None:
            raise ValueError("training DoE needs responses")
        self.space = space
        self.config = config
        self.doe = doe
        self.kernel = kernel
        self.hyper = hyper
        self.y_mean = float(np.mean(doe.y))
        std = float(np.std(doe.y))
        self.constant = std == 0.0
        self.y_std = std if std > 0 else 1.0
        self._enc = kernel.encode(doe)
        if self.constant:
            self.nugget = 0.0
            self._mu_s = 0.0
            self._sigma2_s = 0.0
            self.log_likelihood = -np.inf
            return
        y_s = (doe.y - self.y_mean) / self.y_std
        R = kernel.matrix(hyper.values, doe)
        prof = _profile(R, y_s, nugget)
        self.nugget = prof.nugget
        self._chol = prof.chol
        self._alpha = prof.alpha
        self._mu_s = prof.mu
        self._sigma2_s = prof.sigma2
        self._u = solve_triangular(prof.chol, np.ones(y_s.size), lower=True, check_finite=False)
        self._uu = float(self._u @ self._u)
        # likelihood of the raw responses
        self.log_likelihood = prof.ll - y_s.size * np.log(self.y_std)

    @property
    def mu(self) -> float:
        return self.y_mean + self.y_std * self._mu_s

    @property
    def sigma2(self) -> float:
        return self._sigma2_s * self.y_std**2

    @property
    def n_hyper(self) -> int:
        return len(self.hyper)

    def predict(self, doe: Doe, chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at every point of ``doe``."""
        validate_doe(self.space, doe)
        n_q = len(doe)
        if self.constant:
            return np.full(n_q, self.y_mean), np.zeros(n_q)
        mean = np.empty(n_q)
        var = np.empty(n_q)
        for lo in range(0, n_q, chunk):
            part = doe.subset(np.arange(lo, min(lo + chunk, n_q)))
            r = self.kernel.cross(self.hyper.values, self.kernel.encode(part), self._enc)
            mean[lo : lo + len(part)] = self._mu_s + r @ self._alpha
            v = solve_triangular(self._chol, r.T, lower=True, check_finite=False)
            quad = np.sum(v * v, axis=0)
            lin = 1.0 - self._u @ v
            var[lo : lo + len(part)] = self._sigma2_s * (1.0 - quad + lin**2 / self._uu)
        return self.y_mean + self.y_std * mean, np.maximum(var, 0.0) * self.y_std**2

    def predict_mean(self, w: MixedPoint) -> float:
        return float(self.predict(Doe.from_points(self.space, [w]))[0][0])

    def predict_variance(self, w: MixedPoint) -> float:
        return float(self.predict(Doe.from_points(self.space, [w]))[1][0])

    def level_matrix(self, name: str) -> np.ndarray:
        names = [v.name for v in self.space.categoricals]
        if not names:
            raise ValueError("no categorical variable in this model")
        if self.config.cr_pls is not None:
            raise ValueError("CR_PLS models have no per-variable level correlation matrix")
        if name not in names:
            raise KeyError(f"no categorical variable named {name!r}")
        return self.kernel.level_matrices(self.hyper.values)[names.index(name)]

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        doe = self.doe
        return {
            "format": "mixkpls-gp/1",
            "space": self.space.to_dict(),
            "config": self.config.to_dict(),
            "kernel": self.kernel.rotations_to_dict(),
            "hyperparameters": {"names": list(self.hyper.names), "values": self.hyper.values.tolist()},
            "doe": {"x": doe.x.tolist(), "z": doe.z.tolist(), "c": doe.c.tolist(), "y": doe.y.tolist()},
            "mu": self.mu,
            "sigma2": self.sigma2,
            "nugget": self.nugget,
            "log_likelihood": self.log_likelihood,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedGp":
        space = DesignSpace.from_dict(d["space"])
        config = KernelConfig.from_dict(d["config"])
        kernel = MixedKernel.from_dict(space, config, d["kernel"])
        n_t = len(d["doe"]["y"])
        doe = Doe(
            np.array(d["doe"]["x"], dtype=float).reshape(n_t, space.n),
            np.array(d["doe"]["z"], dtype=int).reshape(n_t, space.m),
            np.array(d["doe"]["c"], dtype=int).reshape(n_t, space.l),
            np.array(d["doe"]["y"], dtype=float),
        )
        hyper = kernel.hyper_template().with_values(d["hyperparameters"]["values"])
        return cls(space, config, doe, kernel, hyper, nugget=d["nugget"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "TrainedGp":
        return cls.from_dict(json.loads(Path(path).read_text()))


def start_points(lower: np.ndarray, upper: np.ndarray, starts: int, seed: int) -> np.ndarray:
    """Points spread along the box diagonal, each jittered by up to 10% of the range."""
    span = upper - lower
    out = np.empty((starts, lower.size))
    for k in range(starts):
        rng = np.random.default_rng([seed, k])
        frac = (k + 0.5) / starts
        out[k] = np.clip(lower + frac * span + rng.uniform(-0.1, 0.1, lower.size) * span, lower, upper)
    return out


def fit(
    space: DesignSpace,
    doe: Doe,
    config: KernelConfig,
    starts: int = 10,
    seed: int = 0,
    max_evals_per_dim: int = 150,
    tol: float = 1e-4,
) -> tuple[TrainedGp, FitReport]:
    """Maximize the concentrated likelihood with multistart COBYLA."""
    t0 = time.perf_counter()
    if doe.y is None:
        raise ValueError("fit needs responses")
    if len(doe) < 2:
        raise ValueError("fit needs at least 2 points")
    validate_doe(space, doe)
    y = doe.y
    std = float(np.std(y))
    if std == 0.0:
        warnings.warn("constant responses: returning a constant model")
        kernel = MixedKernel(space, config, kinds=_plain_kinds(space, config),
                             numeric_rotation=_identity_rotation(space, config))
        gp = TrainedGp(space, config, doe, kernel, kernel.hyper_template())
        return gp, FitReport(-np.inf, wall_time=time.perf_counter() - t0)
    y_s = (y - y.mean()) / std
    kernel = MixedKernel.for_doe(space, config, doe, y_s)
    template = kernel.hyper_template()
    objective = _TrainingObjective(kernel, doe, y_s, template)
    lo, hi = template.search_bounds()
    report = FitReport(-np.inf)
    best_s, best_f = None, np.inf
    if kernel.n_hyper == 0:
        best_s = np.zeros(0)
    span = np.where(hi > lo, hi - lo, 1.0)

    def to_unit(s):
        return (s - lo) / span

    def from_unit(u):
        return lo + np.clip(u, 0.0, 1.0) * span

    constraints = []
    if objective.reconstructed:
        constraints = [{"type": "ineq", "fun": lambda u: objective.psd_margin(from_unit(u))}]
    unit = [(0.0, 1.0)] * kernel.n_hyper
    for k, s0 in enumerate(start_points(lo, hi, starts, seed)):
        n_before = objective.n_eval
        res = minimize(
            lambda u: objective(from_unit(u)),
            to_unit(s0),
            method="COBYLA",
            bounds=unit,
            constraints=constraints,
            options={"maxiter": max_evals_per_dim * kernel.n_hyper, "rhobeg": RHOBEG,
                     "tol": tol},
        )
        s = from_unit(res.x)
        f = objective(s)
        ok = f < PENALTY
        # reported in raw-response units, like TrainedGp.log_likelihood
        ll = -f - y.size * np.log(std) if ok else -np.inf
        report.starts.append(StartResult(s0.tolist(), s.tolist(), ll,
                                         objective.n_eval - n_before, bool(ok), str(res.message)))
        if f < best_f:
            best_s, best_f = s, f
    if best_s is None:
        raise FitError("every optimization start failed to produce an SPD correlation matrix")
    hyper = template.with_values(template.from_search(best_s))
    gp = TrainedGp(space, config, doe, kernel, hyper)
    report.best_log_likelihood = gp.log_likelihood
    report.n_eval = objective.n_eval
    report.wall_time = time.perf_counter() - t0
    return gp, report


def _plain_kinds(space, config):
    kinds = config.kinds_for(space)
    swap = {ck.HH_PLS: ck.HH, ck.EHH_PLS: ck.EHH}
    return tuple(swap.get(k, k) for k in kinds)


def _identity_rotation(space, config):
    if config.cr_pls is not None:
        return np.full((space.relaxed_dim, 1), 1.0 / np.sqrt(space.relaxed_dim))
    if config.continuous_pls is not None and space.n + space.m:
        return np.full((space.n + space.m, 1), 1.0 / np.sqrt(space.n + space.m))
    return None
