"""Exact finite-state oracle identities and the samplers."""

import math

import numpy as np
import pytest

from cmekit import (
    CmeEstimator,
    GaussianKernel,
    RegressionFunctionRep,
    Tikhonov,
    WeightedEmbedding,
    chain_states,
    cme_function,
    constant_direction_alt,
    constant_shift_estimator,
    double_well_pairs,
    embed_diff,
    embed_norm_sq,
    estimator_values,
    exact_excess_risk,
    exact_mmd_integral,
    exact_operator_values,
    exact_risk,
    finite_model,
    fit_cme,
    fit_tikhonov_closed_form,
    generalized_cov_ons_check,
    gram,
    kernel_eval,
    op_norm_diff,
    ou_sample_pairs,
    predict_conditional_expectation,
    pt,
    random_model,
    sample_pairs,
    stationary_distribution,
    table_kernel,
    well_specified_estimator,
    with_alt,
)
from cmekit.estimators import PairedSample

GAUSS = GaussianKernel(bandwidth=1.0)


def rng_for(seed):
    return np.random.Generator(np.random.Philox(seed))


class TestModelValidation:
    def test_bad_marginal(self):
        with pytest.raises(ValueError, match="marginal"):
            finite_model(chain_states(2), [0.6, 0.6], np.eye(2))

    def test_bad_rows(self):
        with pytest.raises(ValueError, match="rows"):
            finite_model(chain_states(2), [0.5, 0.5], [[0.9, 0.2], [0.2, 0.8]])

    def test_duplicate_states(self):
        with pytest.raises(ValueError, match="distinct"):
            finite_model([pt(0.0), pt(0.0)], [0.5, 0.5], np.eye(2))


class TestStationaryDistribution:
    def test_identity_preserves_uniform_start(self):
        assert np.allclose(stationary_distribution(np.eye(2)), [0.5, 0.5], atol=1e-15)

    def test_two_state_closed_form(self):
        pi = stationary_distribution(np.array([[0.9, 0.1], [0.2, 0.8]]))
        assert np.max(np.abs(pi - [2 / 3, 1 / 3])) <= 1e-10
        P = np.array([[0.9, 0.1], [0.2, 0.8]])
        assert np.max(np.abs(pi @ P - pi)) <= 1e-10

    def test_doubly_stochastic_gives_uniform(self):
        P = np.array([[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.3, 0.2, 0.5]])
        assert np.max(np.abs(stationary_distribution(P) - 1 / 3)) <= 1e-10


class TestExactOperatorValues:
    def test_identity_chain_is_inclusion(self):
        model = finite_model(chain_states(3), np.full(3, 1 / 3), np.eye(3))
        vals = exact_operator_values(model, GAUSS)
        K_E = gram(GAUSS, model.states).entries
        assert np.max(np.abs(vals.B - K_E)) == 0.0

    def test_single_state(self):
        model = finite_model(chain_states(1), [1.0], [[1.0]])
        vals = exact_operator_values(model, GAUSS)
        assert vals.B.shape == (1, 1) and vals.B[0, 0] == 1.0

    def test_permutation_chain_selects_rows(self):
        perm = [2, 0, 1]
        P = np.eye(3)[perm]
        model = finite_model(chain_states(3), np.full(3, 1 / 3), P)
        vals = exact_operator_values(model, GAUSS)
        K_E = gram(GAUSS, model.states).entries
        assert np.max(np.abs(vals.B - K_E[perm, :])) == 0.0


class TestEstimatorValues:
    def test_zero_coefficients(self):
        model = finite_model(chain_states(2), [0.5, 0.5], np.eye(2))
        est = CmeEstimator(
            kernel=GAUSS,
            lam=0.1,
            filt=Tikhonov(),
            X=model.states,
            Y=model.states,
            W=np.zeros((2, 2)),
        )
        vals = estimator_values(est, model, GAUSS)
        assert np.max(np.abs(vals.B)) == 0.0

    def test_single_training_pair_scalar(self):
        lam = 0.3
        model = finite_model(chain_states(1), [1.0], [[1.0]])
        sample = PairedSample(X=(model.states[0],), Y=(model.states[0],))
        est = fit_tikhonov_closed_form(sample, GAUSS, lam)
        vals = estimator_values(est, model, GAUSS)
        assert vals.B[0, 0] == pytest.approx(1.0 / (1.0 + lam), abs=1e-14)

    def test_agrees_with_prediction_route(self):
        rng = rng_for(60)
        model = random_model(rng, 4)
        sample = sample_pairs(model, 100, 17)
        est = fit_tikhonov_closed_form(sample, GAUSS, 1e-2)
        vals = estimator_values(est, model, GAUSS)
        for _ in range(5):
            c = rng.standard_normal(len(vals.support))
            f_at_y = np.array(
                [
                    sum(ci * kernel_eval(GAUSS, y, z) for ci, z in zip(c, vals.support))
                    for y in est.Y
                ]
            )
            for i, state in enumerate(model.states):
                direct = predict_conditional_expectation(est, state, f_at_y)
                assert vals.B[i] @ c == pytest.approx(direct, abs=1e-10)

    def test_kernel_mismatch(self):
        model = finite_model(chain_states(2), [0.5, 0.5], np.eye(2))
        est = well_specified_estimator(model, GAUSS, [0, 1])
        with pytest.raises(ValueError, match="kernel"):
            estimator_values(est, model, GaussianKernel(bandwidth=2.0))


class TestOpNormDiff:
    def test_identical_maps(self):
        model = finite_model(chain_states(3), np.full(3, 1 / 3), np.eye(3))
        vals = exact_operator_values(model, GAUSS)
        assert op_norm_diff(vals, vals, model, GAUSS) == 0.0

    def test_single_state_norm_of_p(self):
        # against the zero operator, ||P|| = sup |f(e1)| over unit ball = 1
        model = finite_model(chain_states(1), [1.0], [[1.0]])
        vals = exact_operator_values(model, GAUSS)
        zero = CmeEstimator(
            kernel=GAUSS,
            lam=1.0,
            filt=Tikhonov(),
            X=model.states,
            Y=model.states,
            W=np.zeros((1, 1)),
        )
        zero_vals = estimator_values(zero, model, GAUSS)
        assert op_norm_diff(zero_vals, vals, model, GAUSS) == pytest.approx(1.0, abs=1e-12)

    def test_dominates_random_search(self):
        # the generalized eigenvalue is the sup of the Rayleigh quotient
        rng = rng_for(61)
        for _ in range(5):
            model = random_model(rng, 3, alt=True)
            vals_p = exact_operator_values(model, GAUSS)
            vals_q = exact_operator_values(
                finite_model(model.states, model.marginal, model.transition_alt), GAUSS
            )
            norm = op_norm_diff(vals_p, vals_q, model, GAUSS)
            K_Z = gram(GAUSS, vals_p.support).entries
            D = vals_p.B - vals_q.B
            C = rng.standard_normal((10_000, 3))
            h_norms = np.einsum("ki,ij,kj->k", C, K_Z, C)
            quad = np.einsum("ki,ji,jl,kl->k", C, D, D * model.marginal[:, None], C)
            best = np.sqrt(np.max(quad / h_norms))
            assert norm >= best - 1e-9


class TestExcessRiskAndBound:
    def test_well_specified_is_zero(self):
        rng = rng_for(62)
        model = random_model(rng, 4)
        perm = [1, 3, 0, 2]
        det = finite_model(model.states, model.marginal, np.eye(4)[perm])
        est = well_specified_estimator(det, GAUSS, perm)
        assert exact_excess_risk(est, det, GAUSS) <= 1e-10
        assert (
            op_norm_diff(
                estimator_values(est, det, GAUSS), exact_operator_values(det, GAUSS), det, GAUSS
            )
            <= 1e-10
        )

    def test_zero_estimator_excess(self):
        rng = rng_for(63)
        model = random_model(rng, 3)
        est = CmeEstimator(
            kernel=GAUSS,
            lam=1.0,
            filt=Tikhonov(),
            X=model.states,
            Y=model.states,
            W=np.zeros((3, 3)),
        )
        K_E = gram(GAUSS, model.states).entries
        expected = float(
            model.marginal @ np.einsum("ij,jk,ik->i", model.transition, K_E, model.transition)
        )
        assert exact_excess_risk(est, model, GAUSS) == pytest.approx(expected, abs=1e-12)

    def test_bound_on_random_configurations(self):
        rng = rng_for(64)
        for _ in range(20):
            model = random_model(rng, int(rng.integers(2, 6)))
            sample = sample_pairs(model, int(rng.integers(20, 120)), int(rng.integers(0, 2**32)))
            est = fit_cme(sample, GAUSS, Tikhonov(), float(10.0 ** rng.uniform(-5, 0)))
            lhs = (
                op_norm_diff(
                    estimator_values(est, model, GAUSS),
                    exact_operator_values(model, GAUSS),
                    model,
                    GAUSS,
                )
                ** 2
            )
            assert lhs <= exact_excess_risk(est, model, GAUSS) + 1e-9

    def test_sharpness_witness(self):
        rng = rng_for(65)
        model = random_model(rng, 4)
        witness = constant_shift_estimator(model, GAUSS, rng.standard_normal(4) * 0.4)
        lhs = (
            op_norm_diff(
                estimator_values(witness, model, GAUSS),
                exact_operator_values(model, GAUSS),
                model,
                GAUSS,
            )
            ** 2
        )
        rhs = exact_excess_risk(witness, model, GAUSS)
        assert lhs == pytest.approx(rhs, abs=1e-9)


class TestMmdIntegral:
    def test_equal_kernels(self):
        rng = rng_for(66)
        model = random_model(rng, 3)
        same = with_alt(model, model.transition)
        assert exact_mmd_integral(same, GAUSS) == 0.0

    def test_two_state_swap(self):
        model = finite_model(
            chain_states(2), [0.5, 0.5], np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]])
        )
        val = exact_mmd_integral(model, GAUSS)
        assert val == pytest.approx(0.7869386806, abs=1e-9)
        assert val == pytest.approx(2.0 - 2.0 * math.exp(-0.5), abs=1e-14)

    def test_scales_with_kernel(self):
        states = chain_states(3)
        base = np.array([[1.0, 0.4, 0.1], [0.4, 1.0, 0.4], [0.1, 0.4, 1.0]])
        rng = rng_for(67)
        model = random_model(rng, 3, alt=True)
        v1 = exact_mmd_integral(model, table_kernel(states, base))
        v3 = exact_mmd_integral(model, table_kernel(states, 3.0 * base))
        assert v3 == pytest.approx(3.0 * v1, rel=1e-12)

    def test_missing_alt(self):
        rng = rng_for(68)
        with pytest.raises(ValueError, match="transition_alt"):
            exact_mmd_integral(random_model(rng, 2), GAUSS)

    def test_aligned_rows_attain_equality(self):
        rng = rng_for(69)
        for _ in range(10):
            model = constant_direction_alt(random_model(rng, int(rng.integers(2, 6))), rng)
            vals_p = exact_operator_values(model, GAUSS)
            vals_q = exact_operator_values(
                finite_model(model.states, model.marginal, model.transition_alt), GAUSS
            )
            lhs = op_norm_diff(vals_p, vals_q, model, GAUSS) ** 2
            rhs = exact_mmd_integral(model, GAUSS)
            assert lhs == pytest.approx(rhs, abs=1e-10)


class TestExactRisk:
    def test_perfect_deterministic_prediction(self):
        perm = [1, 2, 0]
        model = finite_model(chain_states(3), np.full(3, 1 / 3), np.eye(3)[perm])
        F = RegressionFunctionRep(C=np.eye(3)[perm])
        assert exact_risk(F, model, GAUSS) <= 1e-14

    def test_zero_function(self):
        rng = rng_for(70)
        model = random_model(rng, 4)
        F = RegressionFunctionRep(C=np.zeros((4, 4)))
        assert exact_risk(F, model, GAUSS) == pytest.approx(1.0, abs=1e-12)

    def test_decomposition_identity(self):
        # risk(F) = sum_i pi_i ||F(e_i) - F*(e_i)||^2 + risk(F*), both sides
        # evaluated through independent code paths
        rng = rng_for(71)
        for _ in range(20):
            m = int(rng.integers(2, 6))
            model = random_model(rng, m)
            F = RegressionFunctionRep(C=rng.standard_normal((m, m)))
            f_star = cme_function(model)
            lhs = exact_risk(F, model, GAUSS)
            drift = 0.0
            for i in range(m):
                diff = embed_diff(
                    WeightedEmbedding(kernel=GAUSS, support=model.states, weights=F.C[i]),
                    WeightedEmbedding(kernel=GAUSS, support=model.states, weights=f_star.C[i]),
                )
                drift += model.marginal[i] * embed_norm_sq(diff)
            rhs = drift + exact_risk(f_star, model, GAUSS)
            assert lhs == pytest.approx(rhs, abs=1e-10)


class TestGeneralizedCovariance:
    def _double_sum(self, model, kernel, anchor):
        total = 0.0
        for a, ea in enumerate(model.states):
            for b, eb in enumerate(model.states):
                total += (
                    model.marginal[a]
                    * model.marginal[b]
                    * kernel_eval(kernel, anchor, ea)
                    * kernel_eval(kernel, anchor, eb)
                    * kernel_eval(kernel, ea, eb)
                )
        return total

    def test_rank_one(self):
        rng = rng_for(72)
        model = random_model(rng, 3)
        anchor = pt(0.4)
        out = generalized_cov_ons_check(model, GAUSS, anchor, 1)
        assert out.shape == (1, 1)
        assert out[0, 0] == pytest.approx(self._double_sum(model, GAUSS, anchor), rel=1e-12)

    def test_orthonormal_identity(self):
        rng = rng_for(73)
        for _ in range(5):
            model = random_model(rng, 3)
            out = generalized_cov_ons_check(model, GAUSS, pt(float(rng.normal())), 2)
            M = self._double_sum(model, GAUSS, pt(0.0))  # scale reference only
            M = out.diagonal().mean()
            assert abs(out[0, 1]) <= 1e-9 * M and abs(out[1, 0]) <= 1e-9 * M
            assert np.max(np.abs(out.diagonal() - M)) <= 1e-9 * M

    def test_r_validation(self):
        rng = rng_for(74)
        model = random_model(rng, 2)
        with pytest.raises(ValueError):
            generalized_cov_ons_check(model, GAUSS, pt(0.0), 3)


class TestSamplers:
    def test_identity_chain_pairs(self):
        rng = rng_for(75)
        model = finite_model(chain_states(3), [0.2, 0.3, 0.5], np.eye(3))
        sample = sample_pairs(model, 500, 8)
        assert sample.X == sample.Y

    def test_point_mass_marginal(self):
        model = finite_model(chain_states(2), [1.0, 0.0], np.array([[0.5, 0.5], [0.5, 0.5]]))
        sample = sample_pairs(model, 200, 9)
        assert all(x == model.states[0] for x in sample.X)

    def test_marginal_frequencies(self):
        rng = rng_for(76)
        model = random_model(rng, 3)
        sample = sample_pairs(model, 100_000, 5)
        xs = np.array([p.coords[0] for p in sample.X])
        freq = np.array([np.mean(xs == s.coords[0]) for s in model.states])
        assert np.max(np.abs(freq - model.marginal)) <= 0.01

    def test_deterministic_given_seed(self):
        rng = rng_for(77)
        model = random_model(rng, 3)
        a = sample_pairs(model, 50, 123)
        b = sample_pairs(model, 50, 123)
        assert a.X == b.X and a.Y == b.Y
        c = ou_sample_pairs(1.0, 0.5, 50, 123)
        d = ou_sample_pairs(1.0, 0.5, 50, 123)
        assert c.X == d.X and c.Y == d.Y
        e = double_well_pairs(3.0, 1e-3, 5, 50, 123)
        f = double_well_pairs(3.0, 1e-3, 5, 50, 123)
        assert e.X == f.X and e.Y == f.Y

    def test_ou_long_lag_decorrelates(self):
        sample = ou_sample_pairs(1.0, 50.0, 10_000, 9)
        x = np.array([p.coords[0] for p in sample.X])
        y = np.array([p.coords[0] for p in sample.Y])
        assert abs(np.corrcoef(x, y)[0, 1]) <= 0.05

    def test_ou_zero_lag_degenerate(self):
        sample = ou_sample_pairs(2.0, 0.0, 100, 10)
        assert sample.X == sample.Y

    def test_ou_stationary_variance(self):
        theta = 1.0
        sample = ou_sample_pairs(theta, 0.5, 10_000, 9)
        x = np.array([p.coords[0] for p in sample.X])
        target = 1.0 / (2.0 * theta)
        assert abs(x.var() - target) / target <= 0.05

    def test_double_well_low_noise_stays_in_one_well(self):
        sample = double_well_pairs(1e6, 1e-3, 5, 2000, 4)
        xs = np.array([p.coords[0] for p in sample.X])
        assert np.all(np.sign(xs) == np.sign(xs[0]))

    def test_double_well_drift_has_roots_at_wells(self):
        # V'(x) = 4x^3 - 4x vanishes at the well bottoms x = +-1
        for x in (-1.0, 1.0):
            assert 4.0 * x**3 - 4.0 * x == 0.0

    def test_double_well_bimodal(self):
        sample = double_well_pairs(3.0, 1e-3, 5, 100_000, 21)
        xs = np.array([p.coords[0] for p in sample.X])
        frac_pos = np.mean(xs > 0)
        assert 0.2 <= frac_pos <= 0.8

    def test_double_well_blowup_diagnostic(self):
        with pytest.raises(RuntimeError, match="diverged"):
            double_well_pairs(1e-4, 1.0, 1, 10, 3)
