"""Link catalog and quasi-likelihood: closed-form values, finite differences."""

import numpy as np
import pytest

from splr import expfam
from splr.exceptions import (
    InvalidInputError,
    NumericDegeneracyError,
    ShapeMismatchError,
)
from splr.expfam import LinkSpec, curvature_bounds
from splr.frame import ColumnType, MixedDataFrame

from conftest import make_mixed_instance


def single_cell_frame(y, ctype):
    return MixedDataFrame(("c",), (ctype,), np.array([[y]]), np.array([[True]]))


class TestLinkSpec:
    def test_gaussian_derivatives(self):
        link = LinkSpec.gaussian(sigma2=2.0)
        x = np.array([-1.0, 0.0, 3.0])
        np.testing.assert_allclose(link.g(x), x * x)
        np.testing.assert_allclose(link.gprime(x), 2.0 * x)
        np.testing.assert_allclose(link.gsecond(x), 2.0)

    def test_bernoulli_values(self):
        link = LinkSpec.bernoulli()
        assert link.g(0.0) == pytest.approx(np.log(2.0))
        assert link.gprime(0.0) == pytest.approx(0.5)
        assert link.gsecond(0.0) == pytest.approx(0.25)
        # stable far in the tails
        assert np.isfinite(link.g(800.0))
        assert link.g(800.0) == pytest.approx(800.0)

    def test_poisson_values(self):
        link = LinkSpec.poisson(a=2.0)
        assert link.g(1.0) == pytest.approx(np.exp(2.0))
        assert link.gprime(1.0) == pytest.approx(2.0 * np.exp(2.0))
        assert link.gsecond(1.0) == pytest.approx(4.0 * np.exp(2.0))

    def test_poisson_overflow_raises(self):
        link = LinkSpec.poisson()
        with pytest.raises(InvalidInputError):
            link.g(701.0)

    def test_bad_parameters_rejected(self):
        with pytest.raises(InvalidInputError):
            LinkSpec.gaussian(sigma2=0.0)
        with pytest.raises(InvalidInputError):
            LinkSpec.poisson(a=0.0)
        with pytest.raises(InvalidInputError):
            LinkSpec("gamma")

    @pytest.mark.parametrize(
        "link",
        [LinkSpec.gaussian(0.5), LinkSpec.bernoulli(), LinkSpec.poisson(1.5)],
    )
    def test_gradient_monotone_grid(self, link):
        x = np.linspace(-4, 4, 201)
        vals = link.gprime(x)
        assert np.all(np.diff(vals) >= 0)
        assert np.all(link.gsecond(x) >= 0)


class TestCurvatureBounds:
    @pytest.mark.parametrize(
        "link",
        [LinkSpec.gaussian(1.7), LinkSpec.bernoulli(), LinkSpec.poisson(0.9)],
    )
    def test_grid_within_bounds(self, link):
        radius = 2.0
        bounds = curvature_bounds(link, radius)
        grid = np.arange(-radius, radius + 1e-9, 1e-3)
        vals = link.gsecond(grid)
        assert vals.min() >= bounds.sigma_min_sq - 1e-12
        assert vals.max() <= bounds.sigma_max_sq + 1e-12
        # bounds are attained, not just valid
        assert vals.min() == pytest.approx(bounds.sigma_min_sq, rel=1e-6)
        assert vals.max() == pytest.approx(bounds.sigma_max_sq, rel=1e-6)

    def test_invalid_ordering_rejected(self):
        with pytest.raises(InvalidInputError):
            expfam.CurvatureBounds(1.0, 0.5, 1.0)


class TestQuasiLoglik:
    def test_gaussian_zero_parameter(self):
        frame = single_cell_frame(1.0, ColumnType.NUMERIC)
        val = expfam.quasi_loglik_neg(np.zeros((1, 1)), frame, [LinkSpec.gaussian()])
        assert val == 0.0

    def test_bernoulli_log2(self):
        frame = single_cell_frame(1.0, ColumnType.BINARY)
        val = expfam.quasi_loglik_neg(np.zeros((1, 1)), frame, [LinkSpec.bernoulli()])
        assert val == pytest.approx(np.log(2.0), abs=1e-12)

    def test_poisson_closed_form(self):
        frame = single_cell_frame(2.0, ColumnType.COUNT)
        x = np.array([[np.log(2.0)]])
        val = expfam.quasi_loglik_neg(x, frame, [LinkSpec.poisson()])
        assert val == pytest.approx(-2.0 * np.log(2.0) + 2.0, abs=1e-12)

    def test_nonfinite_rejected(self):
        frame = single_cell_frame(1.0, ColumnType.NUMERIC)
        with pytest.raises(InvalidInputError):
            expfam.quasi_loglik_neg(np.array([[np.nan]]), frame, [LinkSpec.gaussian()])

    def test_shape_mismatch_rejected(self):
        frame = single_cell_frame(1.0, ColumnType.NUMERIC)
        with pytest.raises(ShapeMismatchError):
            expfam.quasi_loglik_neg(np.zeros((2, 1)), frame, [LinkSpec.gaussian()])
        with pytest.raises(ShapeMismatchError):
            expfam.quasi_loglik_neg(
                np.zeros((1, 1)), frame, [LinkSpec.gaussian()] * 2
            )


class TestGradient:
    def test_gaussian_entry(self):
        frame = single_cell_frame(3.0, ColumnType.NUMERIC)
        grad = expfam.gradient(np.array([[1.0]]), frame, [LinkSpec.gaussian()])
        assert grad[0, 0] == pytest.approx(-2.0)

    def test_unobserved_entry_zero(self):
        values = np.array([[3.0, np.nan]])
        mask = np.array([[True, False]])
        frame = MixedDataFrame(
            ("a", "b"), (ColumnType.NUMERIC, ColumnType.NUMERIC), values, mask
        )
        grad = expfam.gradient(
            np.array([[1.0, 5.0]]), frame, [LinkSpec.gaussian()] * 2
        )
        assert grad[0, 1] == 0.0

    @pytest.mark.parametrize("seed", range(6))
    def test_finite_difference_oracle(self, seed):
        """Central differences of the objective reproduce the gradient."""
        frame, links, x = make_mixed_instance(seed, m1=6, m2=5)
        grad = expfam.gradient(x, frame, links)
        h = 1e-6
        fd = np.zeros_like(x)
        for i in range(x.shape[0]):
            for j in range(x.shape[1]):
                up, down = x.copy(), x.copy()
                up[i, j] += h
                down[i, j] -= h
                fd[i, j] = (
                    expfam.quasi_loglik_neg(up, frame, links)
                    - expfam.quasi_loglik_neg(down, frame, links)
                ) / (2 * h)
        scale = np.maximum(np.abs(grad), 1.0)
        assert np.max(np.abs(fd - grad) / scale) <= 1e-5

    @pytest.mark.parametrize("seed", range(4))
    def test_directional_derivative_consistency(self, seed):
        frame, links, x = make_mixed_instance(seed, m1=5, m2=6)
        rng = np.random.default_rng(seed + 1000)
        direction = rng.standard_normal(x.shape)
        h = 1e-6
        fd = (
            expfam.quasi_loglik_neg(x + h * direction, frame, links)
            - expfam.quasi_loglik_neg(x - h * direction, frame, links)
        ) / (2 * h)
        inner = float(np.sum(expfam.gradient(x, frame, links) * direction))
        assert fd == pytest.approx(inner, rel=1e-5, abs=1e-8)


class TestCurvatureWeights:
    def test_gaussian_half(self):
        frame = single_cell_frame(0.0, ColumnType.NUMERIC)
        w = expfam.curvature_weights(np.array([[4.0]]), frame, [LinkSpec.gaussian()])
        assert w[0, 0] == pytest.approx(0.5)

    def test_bernoulli_at_zero(self):
        frame = single_cell_frame(1.0, ColumnType.BINARY)
        w = expfam.curvature_weights(np.zeros((1, 1)), frame, [LinkSpec.bernoulli()])
        assert w[0, 0] == pytest.approx(0.125)

    def test_unobserved_zero(self):
        values = np.array([[1.0, np.nan]])
        mask = np.array([[True, False]])
        frame = MixedDataFrame(
            ("a", "b"), (ColumnType.NUMERIC, ColumnType.NUMERIC), values, mask
        )
        w = expfam.curvature_weights(
            np.zeros((1, 2)), frame, [LinkSpec.gaussian()] * 2
        )
        assert w[0, 1] == 0.0
        assert np.all(w >= 0)


class TestWorkingResponses:
    def test_gaussian(self):
        frame = single_cell_frame(3.0, ColumnType.NUMERIC)
        z = expfam.working_responses(np.array([[1.0]]), frame, [LinkSpec.gaussian()])
        assert z[0, 0] == pytest.approx(2.0)

    def test_bernoulli(self):
        frame = single_cell_frame(1.0, ColumnType.BINARY)
        z = expfam.working_responses(np.zeros((1, 1)), frame, [LinkSpec.bernoulli()])
        assert z[0, 0] == pytest.approx(2.0)

    def test_poisson(self):
        frame = single_cell_frame(1.0, ColumnType.COUNT)
        z = expfam.working_responses(np.zeros((1, 1)), frame, [LinkSpec.poisson()])
        assert z[0, 0] == pytest.approx(0.0)

    def test_curvature_floor_names_entry(self):
        frame = single_cell_frame(1.0, ColumnType.BINARY)
        with pytest.raises(NumericDegeneracyError) as err:
            expfam.working_responses(
                np.array([[40.0]]), frame, [LinkSpec.bernoulli()]
            )
        assert err.value.entry == (0, 0)


class TestMaskInertness:
    def test_unobserved_values_never_leak(self):
        """Two frames that differ only under the mask give identical outputs."""
        rng = np.random.default_rng(7)
        m1, m2 = 6, 6
        kinds = ["gaussian", "bernoulli", "poisson"] * 2
        frame_a, links, x = make_mixed_instance(11, m1=m1, m2=m2, kinds=kinds)
        junk = rng.standard_normal((m1, m2)) * 100
        values_b = np.where(frame_a.mask, frame_a.y_filled, junk)
        frame_b = MixedDataFrame(
            frame_a.column_names, frame_a.column_types, values_b, frame_a.mask
        )
        assert expfam.quasi_loglik_neg(x, frame_a, links) == expfam.quasi_loglik_neg(
            x, frame_b, links
        )
        for op in (
            expfam.gradient,
            expfam.curvature_weights,
            expfam.working_responses,
        ):
            out_a = op(x, frame_a, links)
            out_b = op(x, frame_b, links)
            assert np.array_equal(out_a, out_b)


class TestPredictedMeans:
    def test_means_per_kind(self):
        links = [LinkSpec.gaussian(2.0), LinkSpec.bernoulli(), LinkSpec.poisson()]
        x = np.array([[1.0, 0.0, np.log(3.0)]])
        means = expfam.predicted_means(x, links)
        np.testing.assert_allclose(means, [[2.0, 0.5, 3.0]])
