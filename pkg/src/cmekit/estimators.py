"""Regularized empirical conditional-mean-embedding estimators in Gram coordinates.

Given paired data (x_i, y_i), i = 1..n, the estimator is the n x n coefficient
matrix W of the fitted embedding-valued map

    F(x) = sum_j (W k_X(x))_j  phi(y_j),      k_X(x)_i = k(x_i, x),

which evaluates the regularized solution of the embedding regression problem
at any query point.  The regularization parameter ``lam`` is the operator-level
lambda; in Gram coordinates it enters as G_X + n*lam*I (equivalently as a
spectral filter applied to the eigenvalues of G_X / n), so lambda stays
comparable across sample sizes.

Two fitting routes are provided and must agree for the Tikhonov filter:

    fit_cme                   g_lam applied to the eigenvalues of G_X / n
    fit_tikhonov_closed_form  one symmetric positive-definite solve of
                              (G_X + n*lam*I) W = I

Filters: Tikhonov g(s) = 1/(s + lam); hard cutoff g(s) = 1/s for s >= lam,
else 0; Landweber g(s) = (1 - (1 - eta*s)^m) / s with the s = 0 limit m*eta.
Eigenvalues below 1e-12 of the largest are treated as exactly 0 for the
cutoff and Landweber filters (round-off directions contribute nothing to the
fitted map but would destabilize those filters).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.linalg

from .embeddings import WeightedEmbedding
from .kernels import Kernel, Point, cross_gram, gram, kernel_eval

RANK_TOL = 1e-12
JITTER_SCALE = 1e-10


@dataclass(frozen=True)
class PairedSample:
    """iid draws (x_i, y_i) from the joint law, as two equal-length point lists."""

    X: tuple[Point, ...]
    Y: tuple[Point, ...]

    def __post_init__(self) -> None:
        X = tuple(self.X)
        Y = tuple(self.Y)
        if len(X) == 0 or len(X) != len(Y):
            raise ValueError(f"need equal nonempty X and Y, got {len(X)} and {len(Y)}")
        for pts in (X, Y):
            d = pts[0].dim
            for p in pts:
                if p.dim != d:
                    raise ValueError("sample has inconsistent point dimensions")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return len(self.X)


@dataclass(frozen=True)
class Tikhonov:
    """g(s) = 1 / (s + lam)."""


@dataclass(frozen=True)
class Cutoff:
    """g(s) = 1/s for s >= lam (closed interval), else 0."""


@dataclass(frozen=True)
class Landweber:
    """g(s) = (1 - (1 - step_size * s)^steps) / s, the truncated iteration filter.

    Requires step_size * max(spectrum) <= 2 at application time, otherwise the
    iteration diverges.
    """

    steps: int
    step_size: float

    def __post_init__(self) -> None:
        if int(self.steps) < 1:
            raise ValueError(f"Landweber needs steps >= 1, got {self.steps}")
        if not (self.step_size > 0):
            raise ValueError(f"Landweber needs step_size > 0, got {self.step_size}")
        object.__setattr__(self, "steps", int(self.steps))


SpectralFilter = Union[Tikhonov, Cutoff, Landweber]


def filter_value(filt: SpectralFilter, lam: float, s: float) -> float:
    """Scalar filter function g_lam evaluated at a spectrum value s >= 0."""
    if not (lam > 0):
        raise ValueError(f"lambda must be > 0, got {lam}")
    if isinstance(filt, Tikhonov):
        return 1.0 / (s + lam)
    if isinstance(filt, Cutoff):
        return 1.0 / s if s >= lam else 0.0
    if isinstance(filt, Landweber):
        if s == 0.0:
            return filt.steps * filt.step_size
        return (1.0 - (1.0 - filt.step_size * s) ** filt.steps) / s
    raise TypeError(f"unknown filter type: {type(filt).__name__}")


@dataclass(frozen=True, eq=False)
class CmeEstimator:
    """Fitted estimator: training points plus the n x n coefficient matrix W.

    The predicted embedding at x is supported on Y with weights W @ k_X(x).
    For estimators fitted with the Tikhonov filter, W is the solution of
    (G_X + n*lam*I) W = I (checked in the test suite, not at construction,
    since exact oracle witnesses legitimately carry hand-built W).
    """

    kernel: Kernel
    lam: float
    filt: SpectralFilter
    X: tuple[Point, ...]
    Y: tuple[Point, ...]
    W: np.ndarray

    def __post_init__(self) -> None:
        if not (self.lam > 0):
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        n = len(self.X)
        if n == 0 or len(self.Y) != n:
            raise ValueError("X and Y must be equal-length nonempty tuples")
        # C order: predictions must be bit-identical regardless of whether W
        # came from a solver (Fortran order) or from a file
        W = np.array(self.W, dtype=float, order="C")
        if W.shape != (n, n):
            raise ValueError(f"W must be {n}x{n}, got {W.shape}")
        if not np.all(np.isfinite(W)):
            raise ValueError("W must be finite")
        W.setflags(write=False)
        object.__setattr__(self, "X", tuple(self.X))
        object.__setattr__(self, "Y", tuple(self.Y))
        object.__setattr__(self, "W", W)

    @property
    def n(self) -> int:
        return len(self.X)


def solve_pd(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve matrix @ X = rhs for symmetric positive-definite ``matrix``.

    Cholesky based; on factorization failure a single jitter of
    1e-10 * trace / n is added to the diagonal, after which failure is an
    error rather than a silent fallback.
    """
    try:
        factor = scipy.linalg.cho_factor(matrix, lower=True)
    except scipy.linalg.LinAlgError:
        n = matrix.shape[0]
        jitter = JITTER_SCALE * np.trace(matrix) / n
        try:
            factor = scipy.linalg.cho_factor(matrix + jitter * np.eye(n), lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                f"matrix not positive definite after jitter {jitter:.3e}"
            ) from exc
    return scipy.linalg.cho_solve(factor, rhs)


def _filtered_coefficients(G: np.ndarray, filt: SpectralFilter, lam: float) -> np.ndarray:
    """W = (1/n) U g_lam(S) U^T from the eigendecomposition G/n = U S U^T."""
    n = G.shape[0]
    s, U = np.linalg.eigh(G / n)
    s_max = max(float(s[-1]), 0.0)
    if not isinstance(filt, Tikhonov):
        # round-off eigenvalues act as exact zeros for cutoff / Landweber
        s = np.where(s < RANK_TOL * s_max, 0.0, s)
    if isinstance(filt, Landweber) and filt.step_size * s_max > 2.0:
        raise ValueError(
            f"Landweber step_size {filt.step_size} violates step_size * max spectrum "
            f"({s_max:.6g}) <= 2; the iteration would diverge"
        )
    g = np.array([filter_value(filt, lam, float(si)) for si in s])
    return (U * g) @ U.T / n


def fit_cme(sample: PairedSample, kernel: Kernel, filt: SpectralFilter, lam: float) -> CmeEstimator:
    """Fit the regularized estimator with a generic spectral filter.

    Eigendecomposes G_X / n and applies the scalar filter to the spectrum;
    for the Tikhonov filter this is algebraically identical to
    :func:`fit_tikhonov_closed_form`.
    """
    if not (lam > 0):
        raise ValueError(f"lambda must be > 0, got {lam}")
    G = gram(kernel, sample.X).entries
    W = _filtered_coefficients(G, filt, lam)
    return CmeEstimator(kernel=kernel, lam=lam, filt=filt, X=sample.X, Y=sample.Y, W=W)


def fit_tikhonov_closed_form(sample: PairedSample, kernel: Kernel, lam: float) -> CmeEstimator:
    """Fit the Tikhonov estimator via the closed-form normal equations.

    W solves (G_X + n*lam*I) W = I through a positive-definite linear solve;
    no matrix inverse is ever formed explicitly.
    """
    if not (lam > 0):
        raise ValueError(f"lambda must be > 0, got {lam}")
    n = sample.n
    G = gram(kernel, sample.X).entries
    W = solve_pd(G + n * lam * np.eye(n), np.eye(n))
    return CmeEstimator(kernel=kernel, lam=lam, filt=Tikhonov(), X=sample.X, Y=sample.Y, W=W)


def _query_weights(est: CmeEstimator, x: Point) -> np.ndarray:
    if x.dim != est.X[0].dim:
        raise ValueError(f"query dimension {x.dim} does not match training dimension {est.X[0].dim}")
    kx = cross_gram(est.kernel, est.X, [x])[:, 0]
    return est.W @ kx


def predict_embedding(est: CmeEstimator, x: Point) -> WeightedEmbedding:
    """Estimated conditional mean embedding at x: weights W k_X(x) on Y."""
    return WeightedEmbedding(kernel=est.kernel, support=est.Y, weights=_query_weights(est, x))


def predict_conditional_expectation(est: CmeEstimator, x: Point, f_at_Y: np.ndarray) -> float:
    """Plug-in estimate of E[f(Y) | X = x] from the values of f on the training Y."""
    f_vals = np.asarray(f_at_Y, dtype=float).reshape(-1)
    if f_vals.shape[0] != est.n:
        raise ValueError(f"f_at_Y must have length {est.n}, got {f_vals.shape[0]}")
    return float(_query_weights(est, x) @ f_vals)


def hs_norm_sq(est: CmeEstimator) -> float:
    """Squared Hilbert-Schmidt norm of the fitted operator: tr(W^T G_Y W G_X)."""
    GX = gram(est.kernel, est.X).entries
    GY = gram(est.kernel, est.Y).entries
    return float(np.trace(est.W.T @ GY @ est.W @ GX))


def empirical_risk(est: CmeEstimator, sample: PairedSample) -> float:
    """Data-fit term (1/n) sum_i ||phi(y_i) - F(x_i)||^2, via Gram expansions."""
    if sample.X[0].dim != est.X[0].dim or sample.Y[0].dim != est.Y[0].dim:
        raise ValueError("sample dimensions do not match the estimator")
    K_xq = cross_gram(est.kernel, est.X, sample.X)          # train-X x query-X
    Omega = est.W @ K_xq                                    # column i = weights at x_i
    K_yy = cross_gram(est.kernel, est.Y, sample.Y)          # train-Y x query-Y
    G_Y = gram(est.kernel, est.Y).entries
    diag_k = np.array([kernel_eval(est.kernel, y, y) for y in sample.Y])
    cross_term = np.einsum("ji,ji->i", Omega, K_yy)
    norm_term = np.einsum("ji,ji->i", Omega, G_Y @ Omega)
    return float(np.mean(diag_k - 2.0 * cross_term + norm_term))


def regularized_empirical_risk(est: CmeEstimator, sample: PairedSample) -> float:
    """empirical_risk plus lam * hs_norm_sq, the objective the Tikhonov fit minimizes."""
    return empirical_risk(est, sample) + est.lam * hs_norm_sq(est)
