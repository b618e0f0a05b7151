import numpy as np
import pytest
from scipy.integrate import trapezoid

from pcesocp.basis import ParameterSpace, PolynomialBasis, Uniform
from pcesocp.errors import DivergenceError, ShapeError
from pcesocp.estimation import build_estimator
from pcesocp.propagation import (
    CoefficientField,
    TimeGrid,
    UncertainOde,
    integrate_ode,
    propagate_coupled,
    propagate_decoupled,
    surface_rmse,
)
from pcesocp.quadrature import gauss_rule

SPACE = ParameterSpace([Uniform(-1, 1)])


def linear_decay():
    """x' = -(1 + 0.5 w) x, x(0) = 1 + 0.2 w; closed form available."""

    def initial(w):
        return np.column_stack([1.0 + 0.2 * w[:, 0]])

    def rhs(t, x, w):
        return -(1.0 + 0.5 * w[:, 0])[:, None] * x

    return UncertainOde(1, initial, rhs, T=2.0)


def exact_linear(t, w):
    return (1.0 + 0.2 * w) * np.exp(-(1.0 + 0.5 * w) * t)


class TestTimeGrid:
    def test_counts(self):
        g = TimeGrid(10.0, 1e-3, 10)
        assert g.steps == 10000
        assert len(g.stored_times) == 1001
        assert g.stored_times[-1] == 10.0

    def test_rejects_mismatch(self):
        with pytest.raises(ValueError):
            TimeGrid(1.0, 0.3)
        with pytest.raises(ValueError):
            TimeGrid(1.0, 0.1, 3)


class TestRK4:
    def test_exponential(self):
        out = integrate_ode(lambda t, x: -x, np.array([1.0]), np.linspace(0, 1, 101))
        assert abs(out[-1, 0] - np.exp(-1.0)) < 1e-8

    def test_fourth_order(self):
        errs = []
        for n in (10, 20, 40):
            out = integrate_ode(lambda t, x: np.cos(t) * x, np.array([1.0]), np.linspace(0, 2, n + 1))
            errs.append(abs(out[-1, 0] - np.exp(np.sin(2.0))))
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(rates > 3.8)

    def test_storing(self):
        g = TimeGrid(1.0, 0.01, 5)
        out = integrate_ode(lambda t, x: np.ones_like(x), np.zeros(3), g)
        assert out.shape == (21, 3)
        np.testing.assert_allclose(out[:, 0], g.stored_times, atol=1e-12)

    def test_divergence_reports_node(self):
        def rhs(t, x):
            return x**2 * np.array([[0.0], [1.0], [0.0]])

        with pytest.raises(DivergenceError) as info:
            integrate_ode(rhs, np.ones((3, 1)), np.linspace(0, 5, 501), node_axis=0)
        assert info.value.node == 1
        assert 0.9 < info.value.time < 1.2

    def test_ignore_lets_nan_through(self):
        out = integrate_ode(lambda t, x: x**2, np.ones(1), np.linspace(0, 2, 201), on_nonfinite="ignore")
        assert not np.isfinite(out[-1]).all()


class TestRoutes:
    @pytest.fixture
    def setup(self):
        basis = PolynomialBasis(SPACE, 6)
        rule = gauss_rule(SPACE, 7)
        return linear_decay(), build_estimator(basis, rule, "pm"), TimeGrid(2.0, 1e-3, 10)

    def test_square_rule_routes_agree(self, setup):
        ode, emap, grid = setup
        a = propagate_decoupled(ode, emap, grid)
        b = propagate_coupled(ode, emap, grid)
        assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-10

    def test_parameter_free_system(self):
        ode = UncertainOde(1, lambda w: np.ones((len(w), 1)), lambda t, x, w: -x, T=1.0)
        emap = build_estimator(PolynomialBasis(SPACE, 3), gauss_rule(SPACE, 5), "pm")
        for prop in (propagate_decoupled, propagate_coupled):
            fld = prop(ode, emap, TimeGrid(1.0, 1e-3, 10))
            np.testing.assert_allclose(fld.coeffs[:, 0, 0], np.exp(-fld.times), atol=1e-10)
            assert np.max(np.abs(fld.coeffs[:, 1:, :])) < 1e-12

    def test_mean_matches_dense_grid(self, setup):
        ode, emap, grid = setup
        fld = propagate_decoupled(ode, emap, grid)
        w = np.linspace(-1, 1, 1001)
        t = fld.times[::20]

        ref = np.array([trapezoid(exact_linear(ti, w), w) / 2 for ti in t])
        assert np.max(np.abs(fld.mean()[::20, 0] - ref)) < 1e-5

    def test_surface(self, setup):
        ode, emap, grid = setup
        fld = propagate_decoupled(ode, emap, grid)
        w = np.linspace(-1, 1, 51)
        states = exact_linear(fld.times[:, None], w[None, :])[..., None]
        assert surface_rmse(fld, w[:, None], states, 0) < 1e-6

    def test_surface_shape_error(self, setup):
        ode, emap, grid = setup
        fld = propagate_decoupled(ode, emap, grid)
        with pytest.raises(ShapeError):
            surface_rmse(fld, np.zeros((4, 1)), np.zeros((3, 4, 1)))

    def test_pointwise_wrapper(self, setup):
        _, emap, grid = setup
        ode = UncertainOde.from_pointwise(
            1,
            lambda w: [1.0 + 0.2 * w[0]],
            lambda t, x, w: -(1.0 + 0.5 * w[0]) * x,
            T=2.0,
        )
        a = propagate_decoupled(ode, emap, grid)
        b = propagate_decoupled(linear_decay(), emap, grid)
        np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-14)

    def test_divergence_names_node(self):
        def rhs(t, x, w):
            return np.where(w[:, :1] > 0.9, x**2, -x)

        ode = UncertainOde(1, lambda w: np.ones((len(w), 1)), rhs, T=2.0)
        emap = build_estimator(PolynomialBasis(SPACE, 2), gauss_rule(SPACE, 5), "pm")
        with pytest.raises(DivergenceError) as info:
            propagate_decoupled(ode, emap, TimeGrid(2.0, 1e-3, 10))
        assert info.value.node == 4


def test_field_shape_checked():
    basis = PolynomialBasis(SPACE, 2)
    with pytest.raises(ShapeError):
        CoefficientField(np.arange(3.0), np.zeros((3, 4, 1)), basis)
