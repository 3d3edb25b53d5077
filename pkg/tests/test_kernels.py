"""Kernel evaluation, Gram assembly, and psd properties."""

import math

import numpy as np
import pytest

from cmekit import (
    GaussianKernel,
    LaplacianKernel,
    Point,
    cross_gram,
    gram,
    kernel_eval,
    pt,
    table_kernel,
)

GAUSS = GaussianKernel(bandwidth=1.0)
LAPL2 = LaplacianKernel(scale=2.0)


def random_points(rng, n, d):
    return [Point(tuple(rng.normal(size=d) * 2.0)) for _ in range(n)]


class TestPoint:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Point(())

    def test_rejects_nan_and_inf(self):
        with pytest.raises(ValueError):
            Point((float("nan"),))
        with pytest.raises(ValueError):
            Point((1.0, float("inf")))

    def test_exact_equality_and_hash(self):
        assert pt(0.0, 1.0) == pt(0.0, 1.0)
        assert hash(pt(2.5)) == hash(pt(2.5))
        assert pt(0.0) != pt(1e-300)


class TestEval:
    def test_gaussian_self_is_one(self):
        assert kernel_eval(GAUSS, pt(0.3, -1.2), pt(0.3, -1.2)) == 1.0

    def test_gaussian_unit_distance(self):
        # exp(-0.5) by the stated convention exp(-|x-y|^2 / (2 sigma^2))
        val = kernel_eval(GAUSS, pt(0.0), pt(1.0))
        assert val == pytest.approx(0.6065306597, abs=1e-9)
        assert val == pytest.approx(math.exp(-0.5), abs=1e-15)

    def test_laplacian(self):
        # exp(-1) by the stated convention exp(-|x-y|_1 / scale)
        val = kernel_eval(LAPL2, pt(0.0), pt(2.0))
        assert val == pytest.approx(0.3678794412, abs=1e-9)
        assert val == pytest.approx(math.exp(-1.0), abs=1e-15)

    def test_symmetry_exact(self):
        rng = np.random.default_rng(0)
        states = random_points(rng, 4, 2)
        vals = np.array([[1.0, 0.3, 0.2, 0.1],
                         [0.3, 1.0, 0.3, 0.2],
                         [0.2, 0.3, 1.0, 0.3],
                         [0.1, 0.2, 0.3, 1.0]])
        kernels = [GAUSS, LAPL2, table_kernel(states, vals)]
        for kernel in kernels:
            pts = states if kernel is kernels[-1] else random_points(rng, 6, 2)
            for x in pts:
                for y in pts:
                    assert kernel_eval(kernel, x, y) == kernel_eval(kernel, y, x)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            kernel_eval(GAUSS, pt(0.0), pt(0.0, 1.0))

    def test_table_lookup_miss(self):
        k = table_kernel([pt(0.0), pt(1.0)], np.array([[1.0, 0.5], [0.5, 1.0]]))
        with pytest.raises(ValueError, match="point not in table"):
            kernel_eval(k, pt(0.5), pt(0.0))

    def test_bounded_and_unit_diagonal(self):
        rng = np.random.default_rng(1)
        for kernel in (GAUSS, LaplacianKernel(scale=0.7)):
            for x in random_points(rng, 10, 3):
                for y in random_points(rng, 10, 3):
                    v = kernel_eval(kernel, x, y)
                    assert 0.0 < v <= 1.0
                assert kernel_eval(kernel, x, x) == 1.0

    def test_gaussian_decays_along_ray(self):
        vals = [kernel_eval(GAUSS, pt(0.0, 0.0), pt(t, 0.5 * t)) for t in np.linspace(0, 8, 40)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-10


class TestGram:
    def test_identical_points(self):
        g = gram(GAUSS, [pt(1.0), pt(1.0)])
        assert np.array_equal(g.entries, np.ones((2, 2)))

    def test_two_point_values(self):
        g = gram(GAUSS, [pt(0.0), pt(1.0)])
        e = math.exp(-0.5)
        assert np.allclose(g.entries, [[1.0, e], [e, 1.0]], atol=1e-15, rtol=0)

    def test_unit_diagonal(self):
        rng = np.random.default_rng(2)
        g = gram(GAUSS, random_points(rng, 15, 2))
        assert np.array_equal(np.diag(g.entries), np.ones(15))

    def test_exact_symmetry(self):
        rng = np.random.default_rng(3)
        for kernel in (GAUSS, LAPL2):
            g = gram(kernel, random_points(rng, 17, 3)).entries
            assert np.array_equal(g, g.T)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            gram(GAUSS, [])

    def test_psd_property(self):
        # 200 random point sets: min eigenvalue >= -1e-10 * max eigenvalue
        rng = np.random.default_rng(4)
        for trial in range(200):
            kernel = GAUSS if trial % 2 == 0 else LaplacianKernel(scale=1.3)
            n = int(rng.integers(1, 21))
            d = int(rng.integers(1, 4))
            g = gram(kernel, random_points(rng, n, d)).entries
            eigvals = np.linalg.eigvalsh(g)
            assert eigvals[0] >= -1e-10 * max(eigvals[-1], 0.0)

    def test_records_source_points(self):
        pts = [pt(0.0), pt(2.0)]
        assert gram(GAUSS, pts).points == tuple(pts)


class TestCrossGram:
    def test_matches_gram_on_same_points(self):
        rng = np.random.default_rng(5)
        pts = random_points(rng, 12, 2)
        cg = cross_gram(GAUSS, pts, pts)
        assert np.max(np.abs(cg - gram(GAUSS, pts).entries)) <= 1e-14

    def test_values(self):
        cg = cross_gram(GAUSS, [pt(0.0)], [pt(1.0), pt(2.0)])
        assert np.allclose(cg, [[math.exp(-0.5), math.exp(-2.0)]], atol=1e-15, rtol=0)

    def test_table_roundtrip(self):
        states = [pt(0.0), pt(1.0)]
        vals = np.array([[1.0, 0.5], [0.5, 1.0]])
        k = table_kernel(states, vals)
        assert np.array_equal(cross_gram(k, states, states), vals)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            cross_gram(GAUSS, [pt(0.0)], [pt(0.0, 1.0)])

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            cross_gram(GAUSS, [], [pt(0.0)])


class TestTableKernelValidation:
    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            table_kernel([pt(0.0), pt(1.0)], np.array([[1.0, 0.5], [0.4, 1.0]]))

    def test_indefinite_rejected(self):
        with pytest.raises(ValueError, match="positive semidefinite"):
            table_kernel([pt(0.0), pt(1.0)], np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_duplicate_states_rejected(self):
        with pytest.raises(ValueError, match="distinct"):
            table_kernel([pt(0.0), pt(0.0)], np.eye(2))

    def test_bad_bandwidth(self):
        with pytest.raises(ValueError):
            GaussianKernel(bandwidth=0.0)
        with pytest.raises(ValueError):
            LaplacianKernel(scale=-1.0)
