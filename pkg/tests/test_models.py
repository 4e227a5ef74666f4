import numpy as np
import pytest

from gibbscal.core import LinearModel
from gibbscal.errors import ConfigurationError
from gibbscal.models import ToyTruth, VelocityCurve, build_model, velocity_2d


class TestToyTruth:
    def test_formula(self):
        x = np.array([0.0, 1.0, 4.0])
        np.testing.assert_allclose(ToyTruth().predict(x, [0.65]), 0.65 * x / (1 + x / 20))

    def test_close_to_line_for_small_x(self):
        x = np.linspace(0, 0.01, 5)
        np.testing.assert_allclose(ToyTruth().predict(x, [1.0]), x, atol=1e-5)


class TestVelocityCurve:
    def test_shape_and_limits(self):
        m = VelocityCurve()
        t = np.array([-10.0, 10.0])
        v = m.predict(t, [m.k_ref])
        assert v[0] == pytest.approx(0.0, abs=1e-6)
        assert v[1] == pytest.approx(m.peak * (1 + m.plateau))

    def test_monotone_in_time(self):
        m = VelocityCurve()
        v = m.predict(np.linspace(0, 1, 200), [3.5])
        assert np.all(np.diff(v) > 0)

    def test_stiffer_material_arrives_earlier(self):
        m = VelocityCurve(gain=0.0, lag=0.07)
        t = np.linspace(0, 1, 400)
        soft, stiff = m.predict(t, [3.0]), m.predict(t, [4.8])
        assert np.all(stiff >= soft - 1e-9)

    def test_parameter_bounds(self):
        m = VelocityCurve()
        assert m.in_bounds([3.9]) and m.in_bounds([2.9]) and m.in_bounds([4.9])
        assert not m.in_bounds([5.5])

    def test_two_parameter_variant(self):
        m = velocity_2d()
        assert m.dim_theta == 2
        t = np.linspace(0, 1, 50)
        np.testing.assert_allclose(m.predict(t, [3.9, 185.0]), VelocityCurve().predict(t, [3.9]))


class TestRegistry:
    def test_linear(self):
        m = build_model("linear", {"powers": [0, 1]})
        assert isinstance(m, LinearModel)
        assert m.predict(np.array([2.0]), [1.0, 3.0])[0] == pytest.approx(7.0)

    def test_velocity_params(self):
        m = build_model("velocity", {"gain": 0.0, "theta_bounds": [[3.0, 4.0]]})
        assert m.theta_bounds == ((3.0, 4.0),)

    def test_unknown_name(self):
        with pytest.raises(ConfigurationError, match="unknown model"):
            build_model("hydrocode")

    def test_bad_params(self):
        with pytest.raises(ConfigurationError):
            build_model("toy-truth", {"b": 1.0})
