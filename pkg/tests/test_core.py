import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from gibbscal.core import (
    ExperimentData,
    GaussianNLL,
    InverseGamma,
    L2Loss,
    LinearModel,
    Normal,
    ParameterPrior,
    Uniform,
    gaussian_nll_loss,
    l2_loss,
    profiled_gaussian_nll,
    trapezoid_weights,
)
from gibbscal.errors import DomainError, StructuralError
from gibbscal.models import ToyTruth


def line():
    return LinearModel()


class TestExperimentData:
    def test_rejects_unequal_lengths(self):
        with pytest.raises(StructuralError):
            ExperimentData([0.0, 1.0], [1.0, 2.0, 3.0])

    def test_rejects_single_point(self):
        with pytest.raises(StructuralError):
            ExperimentData([0.0], [1.0])

    def test_rejects_non_increasing_x(self):
        with pytest.raises(DomainError):
            ExperimentData([0.0, 2.0, 1.0], [1.0, 2.0, 3.0])

    def test_arrays_are_read_only(self):
        d = ExperimentData([0.0, 1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            d.y[0] = 5.0

    def test_csv_round_trip(self, tmp_path):
        d = ExperimentData(np.linspace(0.1, 1, 7), np.sin(np.arange(7.0)), id="a")
        path = tmp_path / "a.csv"
        d.to_csv(path)
        back = ExperimentData.from_csv(path)
        assert back.id == "a"
        np.testing.assert_array_equal(back.x, d.x)
        np.testing.assert_array_equal(back.y, d.y)

    def test_csv_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,z\n0,1\n1,2\n")
        with pytest.raises(StructuralError):
            ExperimentData.from_csv(path)

    def test_csv_non_monotone_x(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y\n0,1\n2,2\n1,3\n")
        with pytest.raises(DomainError):
            ExperimentData.from_csv(path)


class TestForwardModel:
    def test_eval_is_deterministic(self):
        m = ToyTruth()
        x = np.linspace(0, 3, 50)
        a = m.predict(x, [0.65])
        b = m.predict(x, [0.65])
        assert a.tobytes() == b.tobytes()
        assert a.shape == x.shape

    def test_wrong_theta_length(self):
        with pytest.raises(StructuralError):
            line().predict(np.arange(3.0), [1.0, 2.0])


class TestPriors:
    def test_invalid_parameters(self):
        with pytest.raises(DomainError):
            Uniform(1.0, 1.0)
        with pytest.raises(DomainError):
            Normal(0.0, 0.0)
        with pytest.raises(DomainError):
            InverseGamma(0.0, 1.0)
        with pytest.raises(DomainError):
            InverseGamma(1.0, -1.0)

    def test_log_density_outside_support(self):
        prior = ParameterPrior((Uniform(0.0, 1.0), InverseGamma(2.0, 1.0)))
        assert prior.log_density([1.5, 1.0]) == -math.inf
        assert prior.log_density([0.5, -1.0]) == -math.inf
        assert math.isfinite(prior.log_density([0.5, 1.0]))

    def test_log_density_matches_scipy(self):
        prior = ParameterPrior((Uniform(-1.0, 3.0), Normal(2.0, 0.5), InverseGamma(3.0, 2.0)))
        theta = [0.3, 1.7, 0.9]
        expected = stats.uniform(-1, 4).logpdf(0.3) + stats.norm(2, 0.5).logpdf(1.7) + stats.invgamma(3, scale=2).logpdf(0.9)
        assert prior.log_density(theta) == pytest.approx(expected, rel=1e-12)

    def test_samples_land_in_support(self):
        prior = ParameterPrior((Uniform(2.9, 4.9), InverseGamma(0.01, 0.01)))
        draws = prior.sample(np.random.default_rng(1), 5000)
        assert np.all(np.isfinite([prior.log_density(t) for t in draws]))

    @pytest.mark.parametrize(
        "marginal",
        [Uniform(-2.0, 5.0), Normal(1.0, 3.0), InverseGamma(3.0, 2.0)],
        ids=["uniform", "normal", "inverse_gamma"],
    )
    def test_sample_matches_density_chi_square(self, marginal):
        # equiprobable bins under the density, chi-square at alpha = 0.01
        draws = marginal.sample(np.random.default_rng(11), 100_000)
        edges = marginal.dist().ppf(np.linspace(0, 1, 41))
        counts, _ = np.histogram(draws, bins=edges)
        _, p = stats.chisquare(counts)
        assert p > 0.01


class TestL2Loss:
    def test_perfect_fit_is_zero(self):
        x = np.linspace(0, 1, 10)
        d = ExperimentData(x, 0.5 * x)
        assert l2_loss(d, line(), [0.5]) == 0.0
        assert l2_loss(d, line(), [0.5], "trapezoid") == 0.0

    def test_plain_sum_unit_residuals(self):
        d = ExperimentData([0.0, 1.0], [0.0, 0.0])
        m = LinearModel((0,))
        assert l2_loss(d, m, [1.0]) == 2.0

    def test_trapezoid_hand_weights(self):
        d = ExperimentData([0.0, 1.0, 2.0], [0.0, 0.0, 0.0])
        m = LinearModel((0,))
        np.testing.assert_allclose(trapezoid_weights(d.x), [0.5, 1.0, 0.5])
        assert l2_loss(d, m, [1.0], "trapezoid") == pytest.approx(2.0)

    def test_dimension_mismatch(self):
        class Bad(LinearModel):
            def eval(self, x, theta):
                return np.zeros(len(x) + 1)

        d = ExperimentData([0.0, 1.0], [0.0, 0.0])
        with pytest.raises(StructuralError):
            l2_loss(d, Bad(), [1.0])

    def test_offset_subtracted(self):
        x = np.linspace(0, 1, 5)
        d = ExperimentData(x, x + 0.1)
        assert L2Loss(offset=np.full(5, 0.1))(d, line(), [1.0]) == pytest.approx(0.0, abs=1e-28)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.01, 100.0))
    def test_argmin_invariant_to_rescaling(self, seed, c):
        rng = np.random.default_rng(seed)
        x = np.linspace(0.1, 2, 15)
        d = ExperimentData(x, rng.normal(0.7, 0.3) * x + rng.normal(0, 0.2, x.size))
        grid = np.linspace(-1, 3, 401)
        losses = np.array([l2_loss(d, line(), [t]) for t in grid])
        assert np.argmin(c * losses) == np.argmin(losses)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_non_negative(self, seed):
        rng = np.random.default_rng(seed)
        x = np.sort(rng.uniform(0, 5, 8)) + np.arange(8) * 1e-3
        d = ExperimentData(x, rng.normal(size=8))
        assert l2_loss(d, line(), [rng.normal()]) >= 0
        assert l2_loss(d, line(), [rng.normal()], "trapezoid") >= 0


class TestGaussianNLL:
    def test_log_and_residual_terms_vanish(self):
        # data need two points; each exact point with sigma2 = 1/(2 pi) contributes 0
        d = ExperimentData([0.0, 1.0], [0.0, 0.0])
        m = LinearModel((1,))
        assert gaussian_nll_loss(d, m, [0.0], 1 / (2 * math.pi)) == pytest.approx(0.0, abs=1e-15)

    def test_two_unit_residuals(self):
        d = ExperimentData([0.0, 1.0], [1.0, 1.0])
        m = LinearModel((0,))
        assert gaussian_nll_loss(d, m, [0.0], 1.0) == pytest.approx(math.log(2 * math.pi) + 1.0)

    def test_nonpositive_variance(self):
        d = ExperimentData([0.0, 1.0], [1.0, 1.0])
        with pytest.raises(DomainError):
            gaussian_nll_loss(d, line(), [0.0], 0.0)
        assert GaussianNLL()(d, line(), [0.0, -1.0]) == math.inf

    def test_stationary_variance(self):
        rng = np.random.default_rng(3)
        x = np.linspace(0.1, 1, 20)
        d = ExperimentData(x, x + rng.normal(0, 0.3, 20))
        r = d.y - x
        s2 = float(np.mean(r * r))
        grid = s2 * np.linspace(0.5, 1.5, 1001)
        vals = [gaussian_nll_loss(d, line(), [1.0], v) for v in grid]
        assert grid[int(np.argmin(vals))] == pytest.approx(s2, rel=2e-3)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 40))
    def test_profiled_form(self, seed, n):
        rng = np.random.default_rng(seed)
        x = np.linspace(0.1, 1, n)
        d = ExperimentData(x, rng.normal(size=n))
        theta = [rng.normal()]
        value, s2 = profiled_gaussian_nll(d, line(), theta)
        expected = 0.5 * n * (math.log(2 * math.pi * s2) + 1)
        assert value == pytest.approx(expected, abs=1e-10)
        assert gaussian_nll_loss(d, line(), theta, s2) == pytest.approx(expected, abs=1e-10)
