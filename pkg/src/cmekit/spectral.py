"""Eigendecomposition of the regularized empirical transition-operator estimate.

On the span of the training features phi(x_1..x_n) the fitted operator acts as
the n x n matrix

    M = (G_X + n*lam*I)^{-1} K_YX,        K_YX[i, j] = k(y_i, x_j):

for f = sum_j v_j phi(x_j) the image is sum_i (M v)_i phi(x_i).  This span is
invariant under the estimate, so its eigenpairs are exactly the matrix
eigenpairs of M; eigenvalues outside the span are not accessible.

Eigenvalues are sorted by modulus (descending), ties broken by real part
descending, then nonnegative imaginary part first.  Eigenfunction coefficient
vectors v are normalized to unit RKHS norm (v^H G_X v = 1) with the first
nonzero component given nonnegative real part, which makes results
reproducible across eigensolver backends.  Large problems use an implicitly
restarted Arnoldi iteration with a fixed start vector instead of the dense
solver; both paths satisfy the same residual contract.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .estimators import PairedSample, solve_pd
from .kernels import Kernel, Point, cross_gram, gram

DENSE_EIG_LIMIT = 1200
_PAIR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class EdmdResult:
    """Top eigenvalues and eigenfunction coefficients of the fitted operator.

    ``coeffs[:, j]`` expands eigenfunction j over the training features:
    f_j = sum_i coeffs[i, j] phi(X[i]).
    """

    eigenvalues: np.ndarray
    coeffs: np.ndarray
    X: tuple[Point, ...]
    kernel: Kernel
    lam: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "X", tuple(self.X))
        self.eigenvalues.setflags(write=False)
        self.coeffs.setflags(write=False)

    @property
    def r(self) -> int:
        return len(self.eigenvalues)


def edmd_matrix(sample: PairedSample, kernel: Kernel, lam: float) -> np.ndarray:
    """The Gram-coordinate matrix M = (G_X + n*lam*I)^{-1} K_YX."""
    if not (lam > 0):
        raise ValueError(f"lambda must be > 0, got {lam}")
    n = sample.n
    G = gram(kernel, sample.X).entries
    K_yx = cross_gram(kernel, sample.Y, sample.X)
    return solve_pd(G + n * lam * np.eye(n), K_yx)


def _sort_eigenpairs(w: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # lexsort: last key is primary
    order = np.lexsort(((w.imag < 0).astype(int), -w.real, -np.abs(w)))
    return w[order], V[:, order]


def _normalize_columns(w: np.ndarray, V: np.ndarray, G: np.ndarray) -> np.ndarray:
    scale = float(np.max(np.diag(G)))
    cols = []
    for j in range(V.shape[1]):
        v = V[:, j]
        norm_sq = float(np.real(np.conj(v) @ G @ v))
        if norm_sq <= 1e-14 * scale * float(np.real(np.conj(v) @ v)):
            raise np.linalg.LinAlgError(
                f"eigenfunction {j} (eigenvalue {w[j]:.3e}) has zero RKHS norm; "
                "it lies in a null direction of the Gram matrix, reduce r"
            )
        v = v / np.sqrt(norm_sq)
        nz = np.nonzero(np.abs(v) > 1e-12 * np.max(np.abs(v)))[0]
        lead = v[nz[0]]
        if lead.real < 0 or (lead.real == 0 and lead.imag < 0):
            v = -v
        cols.append(v)
    return np.column_stack(cols)


def _enforce_conjugate_pairs(w: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = w.copy()
    V = V.copy()
    used = np.zeros(len(w), dtype=bool)
    for i in range(len(w)):
        if used[i] or abs(w[i].imag) <= _PAIR_TOL * (1.0 + abs(w[i])):
            continue
        for j in range(i + 1, len(w)):
            if used[j]:
                continue
            if abs(w[j] - np.conj(w[i])) <= _PAIR_TOL * (1.0 + abs(w[i])):
                w[j] = np.conj(w[i])
                V[:, j] = np.conj(V[:, i])
                used[i] = used[j] = True
                break
    return w, V


def edmd_eigen(sample: PairedSample, kernel: Kernel, lam: float, r: int) -> EdmdResult:
    """Top-r eigenpairs of the regularized empirical transition operator.

    Small problems run the dense nonsymmetric eigensolver on M; above
    ``DENSE_EIG_LIMIT`` training points the matrix is applied implicitly
    (one Cholesky factorization, matvecs via triangular solves) inside a
    deterministic Arnoldi iteration.
    """
    if not (lam > 0):
        raise ValueError(f"lambda must be > 0, got {lam}")
    n = sample.n
    if not (1 <= r <= n):
        raise ValueError(f"r out of range: need 1 <= r <= {n}, got {r}")

    G = gram(kernel, sample.X).entries
    K_yx = cross_gram(kernel, sample.Y, sample.X)

    if n <= DENSE_EIG_LIMIT or r > n - 2:
        M = solve_pd(G + n * lam * np.eye(n), K_yx)
        w, V = scipy.linalg.eig(M)
        w, V = _sort_eigenpairs(w, V)
        w, V = w[:r], V[:, :r]
    else:
        factor = scipy.linalg.cho_factor(G + n * lam * np.eye(n), lower=True)
        op = scipy.sparse.linalg.LinearOperator(
            (n, n),
            matvec=lambda v: scipy.linalg.cho_solve(factor, K_yx @ v),
            dtype=float,
        )
        w, V = scipy.sparse.linalg.eigs(op, k=r, which="LM", v0=np.ones(n))
        w, V = _sort_eigenpairs(w, V)

    V = _normalize_columns(w, V, G)
    w, V = _enforce_conjugate_pairs(w, V)
    return EdmdResult(eigenvalues=w, coeffs=V, X=sample.X, kernel=kernel, lam=lam)


def eval_eigenfunction(res: EdmdResult, j: int, x: Point) -> complex:
    """Evaluate eigenfunction j at x: sum_i coeffs[i, j] k(X[i], x)."""
    if not (0 <= j < res.r):
        raise IndexError(f"eigenfunction index {j} out of range [0, {res.r})")
    kx = cross_gram(res.kernel, res.X, [x])[:, 0]
    return complex(res.coeffs[:, j] @ kx)


def eigen_residuals(res: EdmdResult, sample: PairedSample) -> np.ndarray:
    """RKHS-norm residuals ||A f_j - mu_j f_j||_H for unit-norm eigenfunctions.

    Recomputes the operator action from the sample the result was fitted on;
    residual j is sqrt(d^H G_X d) with d = M v_j - mu_j v_j.
    """
    if tuple(sample.X) != res.X:
        raise ValueError("sample does not match the training points of the result")
    n = sample.n
    G = gram(res.kernel, sample.X).entries
    K_yx = cross_gram(res.kernel, sample.Y, sample.X)
    factor = scipy.linalg.cho_factor(G + n * res.lam * np.eye(n), lower=True)
    out = np.empty(res.r)
    for j in range(res.r):
        v = res.coeffs[:, j]
        Mv = scipy.linalg.cho_solve(factor, K_yx @ v.real) + 1j * scipy.linalg.cho_solve(
            factor, K_yx @ v.imag
        )
        d = Mv - res.eigenvalues[j] * v
        out[j] = np.sqrt(max(float(np.real(np.conj(d) @ G @ d)), 0.0))
    return out


def sign_cluster(res: EdmdResult, states: Sequence[Point]) -> np.ndarray:
    """Two-way metastable split by the sign of Re(second eigenfunction).

    Label 0 where the real part is positive, 1 where negative; exact zeros
    take the label of the nearest nonzero entry in input order (earlier index
    wins ties).  All-zero input gets label 0 everywhere.
    """
    if res.r < 2:
        raise ValueError(f"sign clustering needs r >= 2 eigenfunctions, got {res.r}")
    if len(states) == 0:
        raise ValueError("empty state list")
    kx = cross_gram(res.kernel, res.X, states)
    vals = np.real(res.coeffs[:, 1] @ kx)
    labels = np.where(vals > 0, 0, 1)
    zero = vals == 0.0
    if np.all(zero):
        return np.zeros(len(states), dtype=int)
    nonzero_idx = np.nonzero(~zero)[0]
    for i in np.nonzero(zero)[0]:
        nearest = nonzero_idx[np.argmin(np.abs(nonzero_idx - i))]
        labels[i] = labels[nearest]
    return labels.astype(int)
