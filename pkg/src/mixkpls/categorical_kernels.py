"""Homogeneous categorical kernels: GD, CR, EHH, HH and their PLS variants.

Each categorical variable gets an ``L x L`` level-correlation matrix; the
categorical kernel between two points is the product over variables of the
entries picked by their levels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pls import MatrixPlsRotation, n_pairs, pairs_to_matrix, reconstruct_theta, upper_pairs

# exp(-20): smallest correlation value the optimizer may reach
EPS = 2.06e-9

GD = "GD"
CR = "CR"
EHH = "EHH"
HH = "HH"
EHH_PLS = "EHH_PLS"
HH_PLS = "HH_PLS"
KINDS = (GD, CR, EHH, HH, EHH_PLS, HH_PLS)


def n_angles(n_lev: int) -> int:
    return n_pairs(n_lev)


def hypersphere_factor(angles, n_lev: int | None = None) -> np.ndarray:
    """Lower-triangular ``C`` with unit-norm rows from hypersphere angles.

    Row 1 is ``e_1``; row ``k`` uses the next ``k - 1`` angles:
    ``(cos a1, sin a1 cos a2, ..., sin a1 ... sin a_{k-1})``.
    """
    angles = np.asarray(angles, dtype=float).ravel()
    if n_lev is None:
        n_lev = int(round((1 + np.sqrt(1 + 8 * angles.size)) / 2))
    if angles.size != n_angles(n_lev):
        raise ValueError(f"{n_lev} levels need {n_angles(n_lev)} angles, got {angles.size}")
    C = np.zeros((n_lev, n_lev))
    C[0, 0] = 1.0
    cos = np.cos(angles)
    sin = np.sin(angles)
    start = 0
    for k in range(1, n_lev):
        c = cos[start : start + k]
        s = sin[start : start + k]
        sprod = np.concatenate(([1.0], np.cumprod(s)))
        C[k, :k] = c * sprod[:k]
        C[k, k] = sprod[k]
        start += k
    return C


def hypersphere_correlation(angles, n_lev: int | None = None) -> np.ndarray:
    C = hypersphere_factor(angles, n_lev)
    R = C @ C.T
    np.fill_diagonal(R, 1.0)
    return np.clip(R, -1.0, 1.0)


@dataclass(frozen=True)
class CategoricalKernelParam:
    """Hyperparameters of one categorical variable's level correlation.

    ``theta`` is used by GD, ``diag`` by CR, ``angles`` by the hypersphere
    kinds (over ``reduced_levels`` for the PLS kinds, which also need a
    ``rotation``).
    """

    kind: str
    n_levels: int
    theta: float | None = None
    diag: np.ndarray | None = None
    angles: np.ndarray | None = None
    rotation: MatrixPlsRotation | None = None
    eps: float = EPS

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown categorical kernel {self.kind!r}")
        if self.n_levels < 2:
            raise ValueError("a categorical variable needs at least 2 levels")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if self.kind == GD:
            if self.theta is None or self.theta < 0:
                raise ValueError("GD needs a nonnegative theta")
        elif self.kind == CR:
            diag = np.asarray(self.diag, dtype=float)
            if diag.shape != (self.n_levels,) or np.any(diag < 0):
                raise ValueError("CR needs a nonnegative diagonal of length L")
            object.__setattr__(self, "diag", diag)
        else:
            n_hs = self.n_levels
            if self.kind in (EHH_PLS, HH_PLS):
                if self.rotation is None or self.rotation.n_levels != self.n_levels:
                    raise ValueError(f"{self.kind} needs a rotation for {self.n_levels} levels")
                n_hs = self.rotation.reduced_levels
            angles = np.asarray(self.angles, dtype=float).ravel()
            if angles.size != n_angles(n_hs):
                raise ValueError(f"{self.kind} needs {n_angles(n_hs)} angles")
            if np.any(angles < 0) or np.any(angles > np.pi):
                raise ValueError("hypersphere angles must lie in [0, pi]")
            object.__setattr__(self, "angles", angles)

    @property
    def n_hyper(self) -> int:
        if self.kind == GD:
            return 1
        if self.kind == CR:
            return self.n_levels
        return self.angles.size


def _check_levels(p: CategoricalKernelParam, lr: int, ls: int):
    for lev in (lr, ls):
        if not 1 <= lev <= p.n_levels:
            raise ValueError(f"level {lev} not in 1..{p.n_levels}")


def level_correlation(p: CategoricalKernelParam, lr: int, ls: int) -> float:
    """Correlation between levels ``lr`` and ``ls`` (1-based)."""
    _check_levels(p, lr, ls)
    if lr == ls:
        return 1.0
    if p.kind in (EHH_PLS, HH_PLS):
        return level_correlation_pls(p, lr, ls)
    if p.kind == GD:
        return float(np.exp(-p.theta))
    if p.kind == CR:
        return float(np.exp(-p.diag[lr - 1] - p.diag[ls - 1]))
    rho = hypersphere_correlation(p.angles, p.n_levels)[lr - 1, ls - 1]
    if p.kind == HH:
        return float(rho)
    return float(p.eps ** (1.0 - rho))


def _pls_phi(p: CategoricalKernelParam) -> np.ndarray:
    """Off-diagonal entries of the PLS-reduced Phi matrix, psi ordered."""
    reduced = hypersphere_correlation(p.angles, p.rotation.reduced_levels)
    vals = upper_pairs(reduced)
    if p.kind == EHH_PLS:
        vals = 0.5 * np.log(p.eps) * (vals - 1.0)
    return (p.rotation.rotation**2) @ vals


def level_correlation_pls(p: CategoricalKernelParam, lr: int, ls: int) -> float:
    if p.kind not in (EHH_PLS, HH_PLS):
        raise ValueError("level_correlation_pls needs an EHH_PLS or HH_PLS param")
    _check_levels(p, lr, ls)
    if lr == ls:
        return 1.0
    phi = pairs_to_matrix(_pls_phi(p), p.n_levels, diag=0.0)[lr - 1, ls - 1]
    if p.kind == HH_PLS:
        return float(phi)
    return float(np.exp(-2.0 * phi))


def build_level_matrix(p: CategoricalKernelParam) -> np.ndarray:
    """Full ``L x L`` symmetric, unit-diagonal level-correlation matrix."""
    L = p.n_levels
    if p.kind == GD:
        return pairs_to_matrix(np.full(n_pairs(L), np.exp(-p.theta)), L)
    if p.kind == CR:
        M = np.exp(-(p.diag[:, None] + p.diag[None, :]))
        np.fill_diagonal(M, 1.0)
        return M
    if p.kind == HH:
        return hypersphere_correlation(p.angles, L)
    if p.kind == EHH:
        return p.eps ** (1.0 - hypersphere_correlation(p.angles, L))
    if p.kind == HH_PLS:
        reduced = hypersphere_correlation(p.angles, p.rotation.reduced_levels)
        return np.clip(reconstruct_theta(p.rotation, reduced), -1.0, 1.0)
    return pairs_to_matrix(np.exp(-2.0 * _pls_phi(p)), L)
