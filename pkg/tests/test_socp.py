import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import cumulative_trapezoid, quad, simpson, trapezoid

from pcesocp.basis import ParameterSpace, PolynomialBasis, Uniform
from pcesocp.errors import DomainError, InvalidStartError, ShapeError
from pcesocp.estimation import build_estimator
from pcesocp.propagation import CoefficientField, TimeGrid
from pcesocp.quadrature import gauss_rule
from pcesocp.socp import (
    ControlGrid,
    CostWeights,
    StochasticOcp,
    build_E,
    build_M,
    control_energy,
    control_eval,
    cost_gradient,
    cost_terms,
    evaluate_ocp,
    solve_ocp,
    stochastic_cost,
)

SPACE = ParameterSpace([Uniform(-1, 1)])


def hat_integral(grid, U, R=1.0):
    return sum(
        quad(lambda t: R * control_eval(grid, U, t)[0] ** 2, a, b)[0]
        for a, b in zip(grid.node_times[:-1], grid.node_times[1:])
    )


class TestControlGrid:
    def test_interpolation(self):
        g = ControlGrid(2.0, 4)
        U = np.array([0.0, 1.0, 3.0, 2.0, -1.0])
        assert control_eval(g, U, 0.25)[0] == pytest.approx(0.5)
        assert control_eval(g, U, 1.0)[0] == pytest.approx(3.0)
        assert control_eval(g, U, 2.0)[0] == pytest.approx(-1.0)

    def test_outside_horizon(self):
        g = ControlGrid(1.0, 2)
        with pytest.raises(DomainError):
            control_eval(g, np.zeros(3), 1.5)

    def test_shape(self):
        with pytest.raises(ShapeError):
            ControlGrid(1.0, 2).as_nodes(np.zeros(4))

    def test_bounds_and_clip(self):
        g = ControlGrid(1.0, 2, 2, lower=[-1, 0], upper=[1, 2])
        lo, hi = g.bounds()
        np.testing.assert_array_equal(lo, [-1, 0] * 3)
        U = g.clip(np.full(6, 5.0))
        assert g.feasible(U)
        assert not g.feasible(np.full(6, 5.0))


class TestMatrices:
    @settings(max_examples=25, deadline=None)
    @given(U=st.lists(st.floats(-5, 5), min_size=6, max_size=6), T=st.floats(0.5, 4.0))
    def test_M_is_exact_energy(self, U, T):
        g = ControlGrid(T, 5)
        U = np.array(U)
        assert control_energy(g, U, np.eye(1)) == pytest.approx(hat_integral(g, U), rel=1e-9, abs=1e-10)

    def test_M_structure(self):
        M = build_M(3, 0.6)
        expected = 0.1 * np.array([[2, 1, 0, 0], [1, 4, 1, 0], [0, 1, 4, 1], [0, 0, 1, 2]])
        np.testing.assert_allclose(M, expected)

    def test_E(self):
        basis = PolynomialBasis(SPACE, 3)
        E = build_E(basis)
        np.testing.assert_allclose(np.diag(E), [0, 1 / 3, 1 / 5, 1 / 7])

    def test_weights_validated(self):
        with pytest.raises(ValueError):
            CostWeights(np.array([[1.0, 2.0], [2.0, 1.0]]), np.eye(1), 0.5, lambda t: t)
        with pytest.raises(ValueError):
            CostWeights(np.eye(1), np.eye(1), 0.0, lambda t: t)


class TestCostIdentity:
    """The coefficient-domain cost equals mean tracking error plus variance."""

    def test_against_direct_moments(self):
        basis = PolynomialBasis(SPACE, 4)
        rule = gauss_rule(SPACE, 20)
        times = np.linspace(0, 1, 201)
        rng = np.random.default_rng(3)
        coeffs = rng.normal(size=(len(times), basis.size, 2)) * np.linspace(1, 2, len(times))[:, None, None]
        fld = CoefficientField(times, coeffs, basis)
        Q = np.array([[2.0, 0.3], [0.3, 1.0]])
        ref = lambda t: np.column_stack([np.sin(t), np.cos(t)])
        grid = ControlGrid(1.0, 4)
        U = rng.normal(size=5)
        eps = 0.3
        w = CostWeights(Q, np.array([[1.5]]), eps, ref)

        X = fld.evaluate(rule.nodes)  # (n_t, q, 2)
        dev = X - ref(times)[:, None, :]
        mean_track = np.einsum("q,tqi,ij,tqj->t", rule.weights, dev, Q, dev)
        mean = np.einsum("q,tqi->ti", rule.weights, X)
        var = np.einsum("q,tqi->t", rule.weights, (X - mean[:, None, :]) ** 2)
        expected = eps * trapezoid(mean_track, times) + (1 - eps) * trapezoid(var, times)
        expected += eps * 1.5 * hat_integral(grid, U)
        assert stochastic_cost(fld, grid, U, w) == pytest.approx(expected, rel=1e-10)


def integrator_ocp(n_t=4, rho=0.5, lower=-np.inf, upper=np.inf, coupling="decoupled", eps=1.0):
    """x' = u with uncertain start x(0) = 1 + 0.5 w, track zero."""
    basis = PolynomialBasis(SPACE, 1)
    emap = build_estimator(basis, gauss_rule(SPACE, 2), "pm")
    grid = ControlGrid(1.0, n_t, 1, lower, upper)
    w = CostWeights(np.eye(1), np.atleast_2d(rho), eps, lambda t: np.zeros((len(t), 1)))
    return StochasticOcp(
        lambda x, u, om: np.broadcast_to(u, x.shape),
        lambda om: 1.0 + 0.5 * om[:, :1],
        1,
        grid,
        w,
        emap,
        coupling,
        TimeGrid(1.0, 1e-3, 1),
    )


def exact_integrator_cost(grid, U, rho):
    """E[int x^2] + rho int u^2 for x = x0 + int u, x0 = 1 + 0.5 w (dense Simpson oracle)."""
    t = np.linspace(0.0, grid.T, 400 * grid.n_t + 1)
    u = np.interp(t, grid.node_times, np.ravel(U))
    F = cumulative_trapezoid(u, t, initial=0.0)  # exact: u is linear between grid points
    mean_sq = (1.0 + F) ** 2 + 0.25 / 3
    return simpson(mean_sq, x=t) + rho * simpson(u**2, x=t)


class TestIntegratorProblem:
    def test_cost_matches_quadrature_oracle(self):
        ocp = integrator_ocp()
        U = np.array([-1.0, 0.5, 0.2, -0.3, 0.0])
        K, fld = evaluate_ocp(ocp, U)
        assert K == pytest.approx(exact_integrator_cost(ocp.grid, U, 0.5), rel=1e-6)  # trapezoid in time, O(dt^2)

    def test_routes_agree(self):
        U = np.array([-1.0, 0.5, 0.2, -0.3, 0.0])
        Ka, _ = evaluate_ocp(integrator_ocp(), U)
        Kb, _ = evaluate_ocp(integrator_ocp(coupling="coupled"), U)
        assert Ka == pytest.approx(Kb, rel=1e-12)

    def test_gradient_against_central(self):
        ocp = integrator_ocp()
        U = np.array([-1.0, 0.5, 0.2, -0.3, 0.0])
        _, gf = cost_gradient(ocp, U, "forward")
        _, gc = cost_gradient(ocp, U, "central", rel_step=1e-5)
        np.testing.assert_allclose(gf, gc, rtol=1e-4, atol=1e-5)

    def test_solution_matches_quadratic_minimizer(self):
        ocp = integrator_ocp()
        n = ocp.grid.n_t + 1
        # K is quadratic in U: recover its Hessian and gradient by polarization
        k0 = exact_integrator_cost(ocp.grid, np.zeros(n), 0.5)
        E = np.eye(n)
        k1 = np.array([exact_integrator_cost(ocp.grid, e, 0.5) for e in E])
        km = np.array([exact_integrator_cost(ocp.grid, -e, 0.5) for e in E])
        H = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                kij = exact_integrator_cost(ocp.grid, E[i] + E[j], 0.5)
                H[i, j] = 0.5 * (kij - k1[i] - k1[j] + k0)
        g = 0.5 * (k1 - km)
        U_star = np.linalg.solve(2 * H, -g)
        sol = solve_ocp(ocp, np.zeros(n), max_iter=100)
        np.testing.assert_allclose(sol.U.ravel(), U_star, atol=2e-3)
        assert sol.K <= sol.K0

    def test_bounds_respected_and_monotone_log(self):
        ocp = integrator_ocp(lower=-0.5, upper=0.5)
        sol = solve_ocp(ocp, np.zeros(5), max_iter=50)
        assert ocp.grid.feasible(sol.U)
        assert sol.U.min() == pytest.approx(-0.5)
        assert sol.K == min(it.K for it in sol.log)
        assert sol.status in ("gtol", "ftol", "max_iter")

    def test_infeasible_start(self):
        ocp = integrator_ocp(lower=-0.5, upper=0.5)
        with pytest.raises(DomainError):
            solve_ocp(ocp, np.ones(5))

    def test_divergent_start(self):
        basis = PolynomialBasis(SPACE, 1)
        emap = build_estimator(basis, gauss_rule(SPACE, 2), "pm")
        ocp = StochasticOcp(
            lambda x, u, om: x**2 + u,
            lambda om: np.ones((len(om), 1)),
            1,
            ControlGrid(2.0, 2),
            CostWeights(np.eye(1), np.eye(1), 0.5, lambda t: np.zeros((len(t), 1))),
            emap,
            time_grid=TimeGrid(2.0, 1e-2, 1),
        )
        assert evaluate_ocp(ocp, np.zeros(3)) == (np.inf, None)
        with pytest.raises(InvalidStartError):
            solve_ocp(ocp, np.zeros(3))


def test_cost_terms_breakdown():
    ocp = integrator_ocp(eps=0.4)
    U = np.array([-1.0, 0.5, 0.2, -0.3, 0.0])
    K, fld = evaluate_ocp(ocp, U)
    terms = cost_terms(fld, ocp.grid, U, ocp.weights)
    assert terms["K"] == pytest.approx(K, rel=1e-12)
    # spread of x0 = 1 + 0.5 w is 1/12 throughout since u is deterministic
    assert terms["spread"] == pytest.approx(1 / 12, rel=1e-9)


@pytest.mark.parametrize("eps", [0.1, 0.4, 1.0])
def test_moment_form_of_integrand(eps):
    from pcesocp.basis import moments_from_coefficients
    from pcesocp.socp import cost_integrand, moment_integrand

    basis = PolynomialBasis(SPACE, 5)
    rng = np.random.default_rng(int(10 * eps))
    coeffs = rng.normal(size=(30, basis.size, 3))
    r = rng.normal(size=(30, 3))
    B = rng.normal(size=(3, 3))
    Q = B @ B.T + 0.5 * np.eye(3)
    mean, cov = moments_from_coefficients(basis, coeffs)
    a = cost_integrand(coeffs, r, Q, eps, basis.norms)
    b = moment_integrand(mean, cov, r, Q, eps)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-10)
