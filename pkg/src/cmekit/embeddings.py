"""Kernel mean embeddings as finite weighted feature expansions.

A WeightedEmbedding stores sum_i w_i * phi(z_i) in the RKHS of its kernel.
Inner products and norms reduce to quadratic forms in (cross-)Gram matrices,
which keeps every value exactly testable at desk scale (n <= 1e4).

The squared MMD between two samples is the squared RKHS distance between
their empirical mean embeddings; the biased estimator is the plug-in
V-statistic, the unbiased one the usual off-diagonal U-statistic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kernels import Kernel, Point, cross_gram, gram


@dataclass(frozen=True, eq=False)
class WeightedEmbedding:
    """Finite expansion sum_i weights[i] * phi(support[i]) in the RKHS."""

    kernel: Kernel
    support: tuple[Point, ...]
    weights: np.ndarray

    def __post_init__(self) -> None:
        support = tuple(self.support)
        if len(support) == 0:
            raise ValueError("embedding support must be nonempty")
        dim = support[0].dim
        for p in support:
            if p.dim != dim:
                raise ValueError("embedding support has inconsistent dimensions")
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != len(support):
            raise ValueError(f"{len(support)} support points but {w.shape[0]} weights")
        if not np.all(np.isfinite(w)):
            raise ValueError("embedding weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return len(self.support)


def mean_embed(kernel: Kernel, samples: Sequence[Point]) -> WeightedEmbedding:
    """Empirical mean embedding: uniform weights 1/n on the sample points."""
    n = len(samples)
    if n == 0:
        raise ValueError("cannot embed an empty sample")
    return WeightedEmbedding(kernel=kernel, support=tuple(samples), weights=np.full(n, 1.0 / n))


def embed_inner(a: WeightedEmbedding, b: WeightedEmbedding) -> float:
    """RKHS inner product <a, b> = sum_ij a_i b_j k(z_i, z'_j).

    Both embeddings must live in the same RKHS (identical kernel spec).
    """
    if a.kernel != b.kernel:
        raise ValueError("embeddings use different kernels")
    K = cross_gram(a.kernel, a.support, b.support)
    return float(a.weights @ K @ b.weights)


def embed_norm_sq(a: WeightedEmbedding) -> float:
    """Squared RKHS norm; >= -1e-10 up to psd round-off."""
    K = gram(a.kernel, a.support).entries
    return float(a.weights @ K @ a.weights)


def embed_diff(a: WeightedEmbedding, b: WeightedEmbedding) -> WeightedEmbedding:
    """The RKHS element a - b, as one expansion over the joined supports."""
    if a.kernel != b.kernel:
        raise ValueError("embeddings use different kernels")
    return WeightedEmbedding(
        kernel=a.kernel,
        support=a.support + b.support,
        weights=np.concatenate([a.weights, -b.weights]),
    )


def mmd_sq_biased(kernel: Kernel, P: Sequence[Point], Q: Sequence[Point]) -> float:
    """Plug-in (V-statistic) squared MMD ||mu_P - mu_Q||^2.

    Expanded as the three double sums over Gram blocks; exactly symmetric in
    (P, Q) and exactly zero when P and Q are the same list.
    """
    if len(P) == 0 or len(Q) == 0:
        raise ValueError("cannot compute MMD of an empty sample")
    kpp = float(np.mean(gram(kernel, P).entries))
    kqq = float(np.mean(gram(kernel, Q).entries))
    # summing the cross block in sorted order makes the estimator bitwise
    # symmetric in (P, Q): the transposed block has the same value multiset
    kpq = float(np.mean(np.sort(cross_gram(kernel, P, Q), axis=None)))
    return kpp + kqq - 2.0 * kpq


def mmd_sq_unbiased(kernel: Kernel, P: Sequence[Point], Q: Sequence[Point]) -> float:
    """U-statistic squared-MMD estimator (off-diagonal sums); may be negative."""
    n, m = len(P), len(Q)
    if n < 2 or m < 2:
        raise ValueError(f"unbiased MMD needs at least 2 points per sample, got {n} and {m}")
    gp = gram(kernel, P).entries
    gq = gram(kernel, Q).entries
    kpq = cross_gram(kernel, P, Q)
    term_p = (gp.sum() - np.trace(gp)) / (n * (n - 1))
    term_q = (gq.sum() - np.trace(gq)) / (m * (m - 1))
    return float(term_p + term_q - 2.0 * kpq.mean())
