"""Exact finite-state oracles and samplers for the operator estimators.

On a finite state set E = {e_1..e_m} with marginal pi and row-stochastic
transition matrix P, everything the estimators approximate has a closed form
in the states' Gram matrix K_E, so the estimator-vs-truth comparisons below
are exact up to round-off:

  * the conditional expectation operator maps f to values P_mat @ (f at states);
  * the operator norm ||A - P||_{H -> L2(pi)} restricted to the span of
    finitely many features is a generalized eigenvalue problem (see
    :func:`op_norm_diff` for why the restriction loses nothing);
  * the excess risk, the risk decomposition, and the Markov-kernel MMD
    integral are finite quadratic forms in K_E.

Samplers (finite chains, Ornstein-Uhlenbeck, double-well Langevin) use the
counter-based Philox generator, so a 64-bit seed fully determines the stream
on every platform.

Ornstein-Uhlenbeck convention: dX = -theta X dt + dW, stationary law
N(0, 1/(2 theta)); a lag-tau pair is y = x e^{-theta tau} + eps with
eps ~ N(0, (1 - e^{-2 theta tau}) / (2 theta)).  The transition operator
eigenvalues e^{-j theta tau} quoted in the tests hold for this convention
only.  Double well: dX = -V'(X) dt + sqrt(2/beta) dW with V(x) = (x^2 - 1)^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .estimators import CmeEstimator, Cutoff, PairedSample, solve_pd
from .kernels import Kernel, Point, cross_gram, gram

COND_TOL = 1e-10
JITTER_SCALE = 1e-10
STATIONARY_TOL = 1e-10
STATIONARY_MAX_ITER = 10**6
BURN_IN_STEPS = 10_000
BLOWUP_LIMIT = 1e6


@dataclass(frozen=True, eq=False)
class FiniteMarkovModel:
    """Exact marginal and Markov kernel(s) on m enumerated states."""

    states: tuple[Point, ...]
    marginal: np.ndarray
    transition: np.ndarray
    transition_alt: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        states = tuple(self.states)
        m = len(states)
        if m == 0:
            raise ValueError("model needs at least one state")
        if len(set(states)) != m:
            raise ValueError("states must be pairwise distinct")
        pi = np.array(self.marginal, dtype=float).reshape(-1)
        if pi.shape[0] != m:
            raise ValueError(f"marginal must have length {m}, got {pi.shape[0]}")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise ValueError("marginal must be nonnegative and sum to 1 within 1e-12")
        P = self._check_stochastic(np.array(self.transition, dtype=float, order="C"), m, "transition")
        P_alt = None
        if self.transition_alt is not None:
            P_alt = self._check_stochastic(
                np.array(self.transition_alt, dtype=float, order="C"), m, "transition_alt"
            )
            P_alt.setflags(write=False)
        pi.setflags(write=False)
        P.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "marginal", pi)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "transition_alt", P_alt)

    @staticmethod
    def _check_stochastic(P: np.ndarray, m: int, name: str) -> np.ndarray:
        if P.shape != (m, m):
            raise ValueError(f"{name} must be {m}x{m}, got {P.shape}")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError(f"{name} rows must be nonnegative and sum to 1 within 1e-12")
        return P

    @property
    def m(self) -> int:
        return len(self.states)


def chain_states(m: int, spacing: float = 1.0) -> tuple[Point, ...]:
    """Canonical 1-D embedding of m states: e_j at coordinate (j - 1) * spacing."""
    if m < 1:
        raise ValueError("need at least one state")
    return tuple(Point((spacing * j,)) for j in range(m))


def finite_model(
    states: Sequence[Point],
    marginal: np.ndarray,
    transition: np.ndarray,
    transition_alt: Optional[np.ndarray] = None,
) -> FiniteMarkovModel:
    return FiniteMarkovModel(
        states=tuple(states),
        marginal=np.asarray(marginal, dtype=float),
        transition=np.asarray(transition, dtype=float),
        transition_alt=None if transition_alt is None else np.asarray(transition_alt, dtype=float),
    )


def with_alt(model: FiniteMarkovModel, transition_alt: np.ndarray) -> FiniteMarkovModel:
    """Copy of the model with a second Markov kernel attached."""
    return finite_model(model.states, model.marginal, model.transition, transition_alt)


@dataclass(frozen=True, eq=False)
class ValuesMap:
    """Gram-coordinate restriction of an operator H -> L2(pi).

    ``B @ c`` gives the values at the m model states of the image of
    f = sum_j c_j phi(support[j]).
    """

    support: tuple[Point, ...]
    B: np.ndarray

    def __post_init__(self) -> None:
        support = tuple(self.support)
        if len(support) == 0:
            raise ValueError("ValuesMap support must be nonempty")
        B = np.array(self.B, dtype=float, order="C")
        if B.ndim != 2 or B.shape[1] != len(support):
            raise ValueError(f"B must have {len(support)} columns, got shape {B.shape}")
        if not np.all(np.isfinite(B)):
            raise ValueError("B must be finite")
        B.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "B", B)


@dataclass(frozen=True, eq=False)
class RegressionFunctionRep:
    """State-supported embedding-valued function: F(e_i) = sum_j C[i, j] phi(e_j)."""

    C: np.ndarray

    def __post_init__(self) -> None:
        C = np.array(self.C, dtype=float, order="C")
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValueError(f"C must be square, got shape {C.shape}")
        if not np.all(np.isfinite(C)):
            raise ValueError("C must be finite")
        C.setflags(write=False)
        object.__setattr__(self, "C", C)


def stationary_distribution(transition: np.ndarray) -> np.ndarray:
    """Stationary vector of a row-stochastic matrix by power iteration.

    Starts from the uniform vector; the caller is responsible for
    irreducibility/aperiodicity.  Fails after 1e6 iterations.
    """
    P = np.asarray(transition, dtype=float)
    m = P.shape[0]
    FiniteMarkovModel._check_stochastic(P, m, "transition")
    pi = np.full(m, 1.0 / m)
    for _ in range(STATIONARY_MAX_ITER):
        nxt = pi @ P
        if np.max(np.abs(nxt - pi)) < 1e-13:
            pi = nxt
            break
        pi = nxt
    else:
        raise RuntimeError("power iteration did not converge within 1e6 iterations")
    pi = pi / pi.sum()
    if np.max(np.abs(pi @ P - pi)) > STATIONARY_TOL:
        raise RuntimeError("power iteration stalled away from a stationary vector")
    return pi


def _conditioned_gram(kernel: Kernel, points: Sequence[Point], what: str) -> np.ndarray:
    """Gram over points with the module's conditioning policy.

    The smallest eigenvalue must exceed 1e-10 of the largest; one jitter of
    1e-10 * trace / m may be added, after which singularity is an error.
    """
    K = gram(kernel, points).entries.copy()
    eigvals = np.linalg.eigvalsh(K)
    if eigvals[0] > COND_TOL * max(eigvals[-1], 0.0):
        return K
    m = K.shape[0]
    K = K + (JITTER_SCALE * np.trace(K) / m) * np.eye(m)
    eigvals = np.linalg.eigvalsh(K)
    if eigvals[0] > COND_TOL * max(eigvals[-1], 0.0):
        return K
    raise np.linalg.LinAlgError(f"singular {what} (even after a single jitter)")


def exact_operator_values(model: FiniteMarkovModel, kernel: Kernel) -> ValuesMap:
    """The true conditional expectation operator restricted to span phi(states).

    For f with coefficients c over the states, (P f)(e_i) = (P_mat K_E c)_i.
    """
    K_E = _conditioned_gram(kernel, model.states, "state Gram K_E")
    return ValuesMap(support=model.states, B=model.transition @ K_E)


def estimator_values(est: CmeEstimator, model: FiniteMarkovModel, kernel: Kernel) -> ValuesMap:
    """Restriction of the fitted operator to the oracle's test span.

    Support is est.Y joined with model.states (deduplicated, Y first).  The
    row for state e_i evaluates the fitted operator exactly as
    predict_conditional_expectation does: B = K_EX W^T K_YZ.
    """
    if est.kernel != kernel:
        raise ValueError("estimator kernel does not match the oracle kernel")
    support: list[Point] = []
    seen: set[Point] = set()
    for p in est.Y + model.states:
        if p not in seen:
            seen.add(p)
            support.append(p)
    K_ex = cross_gram(kernel, model.states, est.X)
    K_yz = cross_gram(kernel, est.Y, support)
    return ValuesMap(support=tuple(support), B=K_ex @ est.W.T @ K_yz)


def _aligned_difference(
    vals_a: ValuesMap, vals_b: ValuesMap
) -> tuple[tuple[Point, ...], np.ndarray]:
    """Union support (a's order first) with zero-padded columns for absentees."""
    for vm, name in ((vals_a, "first"), (vals_b, "second")):
        if len(set(vm.support)) != len(vm.support):
            raise ValueError(f"support alignment failure: duplicate points in {name} ValuesMap")
    if vals_a.B.shape[0] != vals_b.B.shape[0]:
        raise ValueError("support alignment failure: ValuesMaps have different state counts")
    union: list[Point] = list(vals_a.support)
    index = {p: i for i, p in enumerate(union)}
    for p in vals_b.support:
        if p not in index:
            index[p] = len(union)
            union.append(p)
    m = vals_a.B.shape[0]
    D = np.zeros((m, len(union)))
    for col, p in enumerate(vals_a.support):
        D[:, index[p]] += vals_a.B[:, col]
    for col, p in enumerate(vals_b.support):
        D[:, index[p]] -= vals_b.B[:, col]
    return tuple(union), D


def op_norm_diff(
    vals_a: ValuesMap, vals_b: ValuesMap, model: FiniteMarkovModel, kernel: Kernel
) -> float:
    """Exact operator norm ||A - B||_{H -> L2(pi)} between two ValuesMaps.

    Restricting the supremum to f in span{phi(z) : z in Z} for the merged
    support Z loses nothing: both operators sense f only through the bounded
    evaluations / inner products against phi(z), z in Z, so the orthogonal
    complement of the span is annihilated by the difference, while it only
    increases ||f||_H.  On the span, with coefficients c,

        ||(A - B) f||^2_{L2(pi)} = c^T D^T diag(pi) D c,   ||f||^2_H = c^T K_Z c,

    so the norm is the square root of the largest generalized eigenvalue of
    (D^T diag(pi) D, K_Z).
    """
    support, D = _aligned_difference(vals_a, vals_b)
    K_Z = gram(kernel, support).entries
    eigvals = np.linalg.eigvalsh(K_Z)
    if eigvals[0] <= COND_TOL * max(eigvals[-1], 0.0):
        raise np.linalg.LinAlgError("singular K_Z over the merged support")
    quad = D.T @ (model.marginal[:, None] * D)
    top = scipy.linalg.eigh(quad, K_Z, eigvals_only=True, subset_by_index=(len(support) - 1,) * 2)
    return float(np.sqrt(max(top[-1], 0.0)))


def exact_excess_risk(est: CmeEstimator, model: FiniteMarkovModel, kernel: Kernel) -> float:
    """Exact E[ ||F*(X) - A* phi(X)||_H^2 ] under the model's marginal.

    F*(e_i) carries the transition row i on the states; the estimator side is
    the predicted embedding at e_i (weights W k_X(e_i) on est.Y).
    """
    if est.kernel != kernel:
        raise ValueError("estimator kernel does not match the oracle kernel")
    P = model.transition
    K_E = _conditioned_gram(kernel, model.states, "state Gram K_E")
    K_sy = cross_gram(kernel, model.states, est.Y)
    K_xe = cross_gram(kernel, est.X, model.states)
    G_Y = gram(kernel, est.Y).entries
    omega = est.W @ K_xe                       # column i = predicted weights at e_i
    t_true = np.einsum("ij,jk,ik->i", P, K_E, P)
    t_cross = np.einsum("ij,jt,ti->i", P, K_sy, omega)
    t_est = np.einsum("ti,ti->i", omega, G_Y @ omega)
    return float(model.marginal @ (t_true - 2.0 * t_cross + t_est))


def exact_mmd_integral(model: FiniteMarkovModel, kernel: Kernel) -> float:
    """Integral of the squared MMD between the two Markov kernels' rows.

    sum_i pi_i (p_i - p'_i)^T K_E (p_i - p'_i); requires transition_alt.
    """
    if model.transition_alt is None:
        raise ValueError("model has no second Markov kernel (transition_alt missing)")
    R = model.transition - model.transition_alt
    K_E = _conditioned_gram(kernel, model.states, "state Gram K_E")
    per_state = np.einsum("ij,jk,ik->i", R, K_E, R)
    return float(model.marginal @ per_state)


def exact_risk(F: RegressionFunctionRep, model: FiniteMarkovModel, kernel: Kernel) -> float:
    """Exact embedding regression risk sum_i pi_i sum_j P_ij ||phi(e_j) - F(e_i)||^2."""
    m = model.m
    if F.C.shape != (m, m):
        raise ValueError(f"F must be represented over the {m} model states")
    K_E = _conditioned_gram(kernel, model.states, "state Gram K_E")
    P = model.transition
    CK = F.C @ K_E
    sq_norms = np.einsum("ij,ij->i", CK, F.C)      # ||F(e_i)||^2 = (C K_E C^T)_ii
    diag = np.diag(K_E)
    per_pair = diag[None, :] - 2.0 * CK + sq_norms[:, None]
    return float(model.marginal @ np.einsum("ij,ij->i", P, per_pair))


def cme_function(model: FiniteMarkovModel) -> RegressionFunctionRep:
    """The true conditional mean embedding function: coefficients C = P_mat."""
    return RegressionFunctionRep(C=model.transition.copy())


def generalized_cov_ons_check(
    model: FiniteMarkovModel, kernel: Kernel, anchor: Point, r: int
) -> np.ndarray:
    """r x r matrix <T F_i, T F_j> for an exact ONS pinned at an anchor feature.

    F_i = k(anchor, .) e_i with e_1..e_r Gram-Schmidt orthonormal in the K_E
    metric; the double-sum algebra gives M * <e_i, e_j> with
    M = sum_ab pi_a pi_b k(anchor, e_a) k(anchor, e_b) k(e_a, e_b),
    so the returned matrix must equal M * I up to Gram-Schmidt round-off.
    """
    m = model.m
    if not (1 <= r <= m):
        raise ValueError(f"need 1 <= r <= {m}, got {r}")
    K_E = _conditioned_gram(kernel, model.states, "state Gram K_E")
    if np.min(K_E) <= 0:
        raise ValueError("kernel must be strictly positive on the states")
    # Gram-Schmidt in the K_E metric, seeded with the feature coordinate basis
    basis: list[np.ndarray] = []
    for i in range(r):
        v = np.eye(m)[i]
        for u in basis:
            v = v - float(u @ K_E @ v) * u
        norm_sq = float(v @ K_E @ v)
        if norm_sq <= 1e-14 * float(np.max(np.diag(K_E))):
            raise np.linalg.LinAlgError("Gram-Schmidt breakdown: dependent features")
        basis.append(v / np.sqrt(norm_sq))
    V = np.column_stack(basis)
    k_anchor = cross_gram(kernel, [anchor], model.states)[0]
    w = model.marginal * k_anchor
    M = float(w @ K_E @ w)
    return M * (V.T @ K_E @ V)


def well_specified_estimator(
    model: FiniteMarkovModel, kernel: Kernel, targets: Sequence[int]
) -> CmeEstimator:
    """Exact operator witness for a deterministic map e_i -> e_{targets[i]}.

    Training points are the states themselves with W = K_E^{-1}, so the
    predicted embedding at e_i is exactly phi(e_{targets[i]}).
    """
    idx = [int(t) for t in targets]
    if len(idx) != model.m or any(not (0 <= t < model.m) for t in idx):
        raise ValueError("targets must map every state to a state index")
    K_E = _conditioned_gram(kernel, model.states, "state Gram K_E")
    W = solve_pd(K_E, np.eye(model.m))
    Y = tuple(model.states[t] for t in idx)
    return CmeEstimator(kernel=kernel, lam=1.0, filt=Cutoff(), X=model.states, Y=Y, W=W)


def constant_shift_estimator(
    model: FiniteMarkovModel, kernel: Kernel, shift: np.ndarray
) -> CmeEstimator:
    """Witness whose predicted embedding at every state is F*(e_i) + h.

    ``shift`` holds the coefficients of h over the states.  Solving
    W = [K_E^{-1} (P + 1 h^T)]^T makes the prediction error the constant
    embedding h, the configuration for which the operator-norm bound is tight.
    """
    h = np.asarray(shift, dtype=float).reshape(-1)
    if h.shape[0] != model.m:
        raise ValueError(f"shift must have length {model.m}")
    K_E = _conditioned_gram(kernel, model.states, "state Gram K_E")
    target = model.transition + np.outer(np.ones(model.m), h)
    W = solve_pd(K_E, target).T
    return CmeEstimator(
        kernel=kernel, lam=1.0, filt=Cutoff(), X=model.states, Y=model.states, W=W
    )


def random_model(
    rng: np.random.Generator, m: int, alt: bool = False, spacing: float = 1.0
) -> FiniteMarkovModel:
    """Random strictly positive chain on the canonical 1-D states."""
    if m < 1:
        raise ValueError("need at least one state")
    pi = rng.random(m) + 0.05
    pi = pi / pi.sum()
    P = rng.random((m, m)) + 0.05
    P = P / P.sum(axis=1, keepdims=True)
    P_alt = None
    if alt:
        P_alt = rng.random((m, m)) + 0.05
        P_alt = P_alt / P_alt.sum(axis=1, keepdims=True)
    return finite_model(chain_states(m, spacing), pi, P, P_alt)


def constant_direction_alt(
    model: FiniteMarkovModel, rng: np.random.Generator
) -> FiniteMarkovModel:
    """Attach an alternative kernel whose row differences share one direction.

    Every row of P' is p_i + c_i * d for a single zero-sum direction d, the
    family on which the operator-norm / MMD-integral identity is an equality.
    """
    m = model.m
    if m < 2:
        raise ValueError("need at least two states to perturb rows")
    d = rng.standard_normal(m)
    d = d - d.mean()
    d = d / np.max(np.abs(d))
    P = model.transition
    P_alt = P.copy()
    for i in range(m):
        neg = d < 0
        pos = d > 0
        c_hi = np.min(P[i, neg] / -d[neg]) if np.any(neg) else np.inf
        c_lo = -np.min(P[i, pos] / d[pos]) if np.any(pos) else -np.inf
        c = rng.uniform(0.9 * c_lo, 0.9 * c_hi)
        # no renormalization: d sums to ~0, so rows stay stochastic to 1e-16
        # and the row differences stay exact scalar multiples of d
        P_alt[i] = P[i] + c * d
    return with_alt(model, P_alt)


def _generator(seed: int) -> np.random.Generator:
    seed = int(seed)
    if not (0 <= seed < 2**64):
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.Philox(seed))


def _inverse_cdf_rows(rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(rows, axis=1)
    idx = (u[:, None] > cdf).sum(axis=1)
    return np.minimum(idx, rows.shape[1] - 1)


def sample_pairs(model: FiniteMarkovModel, n: int, seed: int) -> PairedSample:
    """n iid pairs (x, y): x ~ pi, then y ~ p(x, .); deterministic in the seed."""
    if n < 1:
        raise ValueError("need n >= 1 samples")
    rng = _generator(seed)
    x_idx = _inverse_cdf_rows(np.tile(model.marginal, (n, 1)), rng.random(n))
    y_idx = _inverse_cdf_rows(model.transition[x_idx], rng.random(n))
    X = tuple(model.states[i] for i in x_idx)
    Y = tuple(model.states[i] for i in y_idx)
    return PairedSample(X=X, Y=Y)


def ou_sample_pairs(theta: float, tau: float, n: int, seed: int) -> PairedSample:
    """Stationary lag-tau pairs of the OU process dX = -theta X dt + dW.

    tau = 0 is the degenerate call with y = x exactly.
    """
    if not (theta > 0):
        raise ValueError(f"theta must be > 0, got {theta}")
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    if n < 1:
        raise ValueError("need n >= 1 samples")
    rng = _generator(seed)
    x = rng.standard_normal(n) * np.sqrt(1.0 / (2.0 * theta))
    decay = np.exp(-theta * tau)
    noise_std = np.sqrt((1.0 - np.exp(-2.0 * theta * tau)) / (2.0 * theta))
    y = x * decay + rng.standard_normal(n) * noise_std
    return PairedSample(
        X=tuple(Point((v,)) for v in x),
        Y=tuple(Point((v,)) for v in y),
    )


def double_well_pairs(
    beta: float, dt: float, steps_per_pair: int, n: int, seed: int
) -> PairedSample:
    """Lag pairs (x_t, x_{t+tau}), tau = steps_per_pair * dt, from one long
    Euler-Maruyama path of dX = -V'(X) dt + sqrt(2/beta) dW, V(x) = (x^2-1)^2.

    The path starts at x = 1.0, burns in 10^4 steps, then consecutive pairs
    are read off every steps_per_pair steps.  Stability needs dt small enough
    (dt <= 1e-3 is safe for beta <= 10); |x| > 1e6 aborts with a diagnostic.
    """
    if not (beta > 0):
        raise ValueError(f"beta must be > 0, got {beta}")
    if not (dt > 0):
        raise ValueError(f"dt must be > 0, got {dt}")
    if steps_per_pair < 1:
        raise ValueError("steps_per_pair must be >= 1")
    if n < 1:
        raise ValueError("need n >= 1 pairs")
    rng = _generator(seed)
    total = BURN_IN_STEPS + n * steps_per_pair
    noise = rng.standard_normal(total) * np.sqrt(2.0 * dt / beta)
    path = np.empty(total + 1)
    x = 1.0
    path[0] = x
    for t in range(total):
        x = x + dt * (4.0 * x - 4.0 * x**3) + noise[t]
        if abs(x) > BLOWUP_LIMIT:
            raise RuntimeError(
                f"double-well trajectory diverged at step {t} (|x| = {abs(x):.3e}); "
                f"reduce dt (currently {dt})"
            )
        path[t + 1] = x
    starts = BURN_IN_STEPS + steps_per_pair * np.arange(n)
    X = tuple(Point((path[s],)) for s in starts)
    Y = tuple(Point((path[s + steps_per_pair],)) for s in starts)
    return PairedSample(X=X, Y=Y)
