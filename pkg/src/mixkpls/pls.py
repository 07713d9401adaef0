"""Partial least squares for vector inputs and its matrix-input extension.

The vector path gives the usual KPLS rotation used to collapse per-dimension
length-scales.  The matrix path fits a rotation on pair-relaxed (zeta) encoded
categorical data so that an ``L x L`` level-correlation matrix can be rebuilt
from a small ``l x l`` one.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class PlsRankError(ValueError):
    """Raised when fewer informative PLS components exist than requested."""

    def __init__(self, requested: int, achieved: int):
        self.requested = requested
        self.achieved = achieved
        super().__init__(
            f"PLS rank deficiency: requested {requested} components, "
            f"only {achieved} informative"
        )


def psi(k: int, kp: int, n_lev: int) -> int:
    """1-based flat index of the strict upper-triangular entry ``(k, kp)``.

    Lexicographic order: (1,2), (1,3), ..., (1,n), (2,3), ...
    """
    if not (1 <= k < kp <= n_lev):
        raise ValueError(f"psi needs 1 <= k < k' <= n_lev, got ({k}, {kp}, {n_lev})")
    return ((n_lev - 1) * (n_lev - 2) - (n_lev - k) * (n_lev - k - 1)) // 2 + kp - 1


def n_pairs(n_lev: int) -> int:
    return n_lev * (n_lev - 1) // 2


@lru_cache(maxsize=None)
def pair_list(n_lev: int) -> tuple[tuple[int, int], ...]:
    """Level pairs (1-based) in psi order."""
    pairs = [(k, kp) for k in range(1, n_lev + 1) for kp in range(k + 1, n_lev + 1)]
    assert all(psi(k, kp, n_lev) == i + 1 for i, (k, kp) in enumerate(pairs))
    return tuple(pairs)


@lru_cache(maxsize=None)
def _pair_index_arrays(n_lev: int) -> tuple[np.ndarray, np.ndarray]:
    pairs = np.array(pair_list(n_lev), dtype=int).reshape(-1, 2) - 1
    return pairs[:, 0], pairs[:, 1]


@dataclass(frozen=True)
class PlsProjection:
    """Result of a single-response PLS fit.

    ``weights`` (G), ``loadings`` (Xi) and ``rotation`` (G* = G (Xi^T G)^-1)
    are all ``p x d``.
    """

    weights: np.ndarray
    loadings: np.ndarray
    rotation: np.ndarray
    x_mean: np.ndarray
    residual_norms: tuple[float, ...] = ()

    @property
    def n_components(self) -> int:
        return self.rotation.shape[1]

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Scores of new inputs, ``(X - mean) G*``."""
        return (np.asarray(X, dtype=float) - self.x_mean) @ self.rotation


def _fix_sign(w: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(w)))
    return -w if w[i] < 0 else w


def pls_fit(X, y, n_components: int, rtol: float = 1e-10) -> PlsProjection:
    """Single-response PLS (PLS1) with deflation.

    Each weight is the unit vector ``X_t^T y_t / ||X_t^T y_t||``, which is the
    dominant direction of ``X_t^T y_t y_t^T X_t``; its sign is chosen so that
    the largest-magnitude entry is positive.

    Raises
    ------
    ValueError
        If ``y`` has zero variance or ``n_components`` is out of range.
    PlsRankError
        If the residual cross-covariance vanishes before ``n_components``
        directions were extracted.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be n_t x p and y of length n_t")
    n_t, p = X.shape
    if n_components < 1 or n_components > min(p, n_t - 1):
        raise ValueError(
            f"n_components must lie in [1, min(p, n_t - 1)] = [1, {min(p, n_t - 1)}]"
        )
    if np.ptp(y) == 0.0:
        raise ValueError("PLS needs a response with nonzero variance")

    x_mean = X.mean(axis=0)
    Xt = X - x_mean
    yt = y - y.mean()
    scale = max(np.linalg.norm(Xt.T @ yt), np.finfo(float).tiny)

    G = np.zeros((p, n_components))
    Xi = np.zeros((p, n_components))
    residuals = [float(np.linalg.norm(Xt))]
    for t in range(n_components):
        cov = Xt.T @ yt
        norm = np.linalg.norm(cov)
        if norm <= rtol * scale:
            raise PlsRankError(n_components, t)
        g = _fix_sign(cov / norm)
        h = Xt @ g
        hh = h @ h
        if hh <= (rtol * scale) ** 2:
            raise PlsRankError(n_components, t)
        xi = Xt.T @ h / hh
        gamma = yt @ h / hh
        Xt = Xt - np.outer(h, xi)
        yt = yt - gamma * h
        G[:, t] = g
        Xi[:, t] = xi
        residuals.append(float(np.linalg.norm(Xt)))

    rotation = G @ np.linalg.inv(Xi.T @ G)
    return PlsProjection(G, Xi, rotation, x_mean, tuple(residuals))


def collapse_continuous_theta(rotation: np.ndarray, theta_hat) -> np.ndarray:
    """Per-dimension length-scales ``theta_j = sum_t (G*_jt)^2 theta_hat_t``."""
    rotation = np.asarray(rotation, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float).ravel()
    if rotation.ndim != 2 or rotation.shape[1] != theta_hat.size:
        raise ValueError("rotation columns must match theta_hat length")
    if np.any(theta_hat < 0):
        raise ValueError("theta_hat must be nonnegative")
    return (rotation**2) @ theta_hat


@dataclass(frozen=True)
class MatrixPlsRotation:
    """Rotation from the ``L(L-1)/2`` pair space to the ``l(l-1)/2`` one."""

    rotation: np.ndarray
    n_levels: int
    reduced_levels: int
    row_normalized: bool = True

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float)
        object.__setattr__(self, "rotation", rot)
        if rot.shape != (n_pairs(self.n_levels), n_pairs(self.reduced_levels)):
            raise ValueError(
                f"rotation shape {rot.shape} does not match "
                f"L={self.n_levels}, l={self.reduced_levels}"
            )
        if self.row_normalized:
            norms = np.linalg.norm(rot, axis=1)
            nz = norms > 0
            if not np.allclose(norms[nz], 1.0, atol=1e-10):
                raise ValueError("row_normalized rotation has non-unit rows")


def normalize_rows(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    return np.divide(M, norms, out=np.zeros_like(M), where=norms > 0)


def matrix_pls_fit(zeta_doe, y, reduced_levels: int) -> MatrixPlsRotation:
    """Fit a matrix-PLS rotation on zeta-encoded data, rows normalized."""
    zeta_doe = np.asarray(zeta_doe, dtype=float)
    d_in = zeta_doe.shape[1]
    n_lev = int(round((1 + np.sqrt(1 + 8 * d_in)) / 2))
    if n_pairs(n_lev) != d_in:
        raise ValueError(f"{d_in} columns is not a valid pair count")
    if reduced_levels < 2 or reduced_levels >= n_lev:
        raise ValueError(f"reduced level count must lie in [2, {n_lev - 1}]")
    proj = pls_fit(zeta_doe, y, n_pairs(reduced_levels))
    return MatrixPlsRotation(normalize_rows(proj.rotation), n_lev, reduced_levels, True)


def reconstruct_theta(rot: MatrixPlsRotation, theta_hat) -> np.ndarray:
    """Rebuild the full ``L x L`` matrix from the reduced ``l x l`` one.

    Off-diagonal entry ``(j, j')`` is the squared-rotation weighted sum of the
    reduced upper-triangular entries; the diagonal is set to 1.
    """
    if not rot.row_normalized:
        raise ValueError("reconstruction needs a row-normalized rotation")
    theta_hat = np.asarray(theta_hat, dtype=float)
    lr = rot.reduced_levels
    if theta_hat.shape != (lr, lr):
        raise ValueError(f"theta_hat must be {lr} x {lr}")
    ri, rj = _pair_index_arrays(lr)
    flat = (rot.rotation**2) @ theta_hat[ri, rj]
    return pairs_to_matrix(flat, rot.n_levels, diag=1.0)


def pairs_to_matrix(flat: np.ndarray, n_lev: int, diag: float = 1.0) -> np.ndarray:
    """Symmetric matrix from its psi-ordered strict upper triangle."""
    i, j = _pair_index_arrays(n_lev)
    M = np.full((n_lev, n_lev), diag, dtype=float)
    M[i, j] = flat
    M[j, i] = flat
    return M


def upper_pairs(M: np.ndarray) -> np.ndarray:
    """psi-ordered strict upper triangle of a square matrix."""
    i, j = _pair_index_arrays(M.shape[0])
    return np.asarray(M)[i, j]
