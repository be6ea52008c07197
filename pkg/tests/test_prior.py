import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import expit

from shapeseg import (CircleShape, Volume, expected_posterior, logistic_prior,
                      prior_field)


def test_boundary_value_is_half():
    assert logistic_prior(0.0, 1.0) == 0.5
    assert logistic_prior(0.0, 0.003) == 0.5


def test_unit_offset_matches_sigmoid_of_one():
    assert logistic_prior(2.5, 2.5) == pytest.approx(1.0 / (1.0 + np.exp(-1.0)), abs=1e-12)
    assert logistic_prior(2.5, 2.5) == pytest.approx(0.731059, abs=1e-6)


def test_saturation():
    assert logistic_prior(1e6, 1.0) == 1.0
    assert logistic_prior(-1e6, 1.0) == 0.0


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        logistic_prior(np.nan, 1.0)
    with pytest.raises(ValueError):
        logistic_prior(0.0, 0.0)
    with pytest.raises(ValueError):
        logistic_prior(0.0, -1.0)


def test_complement_identity_bulk():
    rng = np.random.default_rng(7)
    s = rng.uniform(-60.0, 60.0, 10_000)
    total = logistic_prior(s, 0.7) + logistic_prior(-s, 0.7)
    assert np.max(np.abs(total - 1.0)) < 1e-15


@given(st.floats(-1e4, 1e4), st.floats(1e-3, 1e3))
def test_complement_identity_property(value, ref_length):
    total = logistic_prior(value, ref_length) + logistic_prior(-value, ref_length)
    assert abs(total - 1.0) < 1e-15


def _expected_posterior_quadrature(x):
    """Defining integral: average posterior when the appearance posterior is
    uniform on [0, 1]."""
    p = expit(x)
    val, _ = quad(lambda t: t * p / (t * p + (1.0 - t) * (1.0 - p)), 0.0, 1.0,
                  epsabs=1e-13, epsrel=1e-13)
    return val


def test_expected_posterior_at_zero():
    assert expected_posterior(0.0) == 0.5


def test_expected_posterior_at_four_matches_quadrature():
    # frozen from the quadrature oracle
    assert _expected_posterior_quadrature(4.0) == pytest.approx(0.94263553052570295, abs=1e-10)
    assert expected_posterior(4.0) == pytest.approx(0.94263553052570295, abs=1e-9)


def test_expected_posterior_matches_quadrature_over_range():
    xs = np.arange(-15.0, 15.0 + 1e-9, 0.1)
    closed = expected_posterior(xs)
    for x, c in zip(xs, closed):
        assert abs(c - _expected_posterior_quadrature(x)) < 1e-9


def test_expected_posterior_symmetric_pairs():
    for x in (0.3, 1.7, 4.0, 9.5, 14.0):
        assert expected_posterior(x) + expected_posterior(-x) == pytest.approx(1.0, abs=1e-12)


def test_expected_posterior_monotone():
    xs = np.linspace(-30.0, 30.0, 4001)
    vals = expected_posterior(xs)
    assert np.all(np.diff(vals) > 0)


def test_expected_posterior_near_zero_series_consistent():
    # the series branch joins the closed form smoothly at the acceptance
    # tolerance; the closed form cancels to ~1e-10 just outside the cutoff
    xs = np.array([-2e-3, -1.0001e-3, -0.999e-3, 1e-4, 0.999e-3, 1.0001e-3, 2e-3])
    vals = expected_posterior(xs)
    for x, v in zip(xs, vals):
        assert v == pytest.approx(_expected_posterior_quadrature(x), abs=1e-9)


def test_expected_posterior_total_function():
    out = expected_posterior(np.array([-700.0, -50.0, 50.0, 700.0]))
    assert np.all(np.isfinite(out))
    assert out[0] == pytest.approx(0.0, abs=1e-12)
    assert out[-1] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        expected_posterior(np.inf)


class TestPriorField:
    def _grid(self, n=65, extent=2.0):
        spacing = extent / n
        return Volume.zeros((n, n, 1), (spacing, spacing, 1.0),
                            (-extent / 2, -extent / 2, 0.0))

    def test_circle_isocontour_on_boundary(self):
        grid = self._grid()
        shape = CircleShape()
        field = prior_field(shape, np.array([0.0, 0.0, 0.6]), grid, 0.05)
        pts = grid.points()[:, :2]
        radius = np.hypot(pts[:, 0], pts[:, 1])
        probs = field.data.reshape(-1)
        # 0.5 crossing sits on the circle to within one voxel
        inside = probs >= 0.5
        assert np.all(radius[inside] <= 0.6 + grid.spacing[0] * 1.5)
        assert np.all(radius[~inside] >= 0.6 - grid.spacing[0] * 1.5)

    def test_sharp_limit_is_indicator(self):
        grid = self._grid()
        shape = CircleShape()
        params = np.array([0.0, 0.0, 0.6])
        field = prior_field(shape, params, grid, 1e-9)
        values = shape.evaluate(params, grid.points()[:, :2])
        assert np.array_equal(field.data.reshape(-1) >= 0.5, values >= 0)
        assert set(np.round(np.unique(field.data), 6)) <= {0.0, 0.5, 1.0}

    def test_uninformative_limit_is_half(self):
        grid = self._grid()
        field = prior_field(CircleShape(), np.array([0.0, 0.0, 0.6]), grid, 1e9)
        assert np.allclose(field.data, 0.5, atol=1e-6)

    def test_values_in_unit_interval(self):
        grid = self._grid(n=17)
        field = prior_field(CircleShape(), np.array([0.1, -0.2, 0.4]), grid, 0.13)
        assert np.all(field.data >= 0.0) and np.all(field.data <= 1.0)
