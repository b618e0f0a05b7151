"""Drivetrain experiments: RMSE sweeps over (nodes, degree) and the robust start-up study."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import drivetrain as drive
from .basis import PolynomialBasis
from .estimation import build_estimator
from .mc import sample_ensemble
from .propagation import CoefficientField, TimeGrid, propagate_coupled, propagate_decoupled, surface_rmse
from .quadrature import gauss_rule
from .socp import ControlGrid, CostWeights, StochasticOcp, evaluate_ocp, solve_ocp

TABLE1_Q = (3, 5, 11, 21)
TABLE1_D = (2, 4, 10, 20)

# 99 % two-sided normal quantile for moment-based bands
Z99 = 2.5758293035489004


def gpc_field(scenario, degree, nodes, estimator="pm", coupling="decoupled", grid=None, params=None):
    """Coefficient field for a step scenario with Gauss nodes (weights dropped for LS)."""
    params = params or drive.DrivetrainParams()
    space = drive.parameter_space()
    basis = PolynomialBasis(space, degree)
    rule = gauss_rule(space, nodes)
    if estimator == "ls":
        rule = rule.without_weights("GaussTensor")
    emap = build_estimator(basis, rule, estimator)
    ode = drive.scenario_ode(scenario, params)
    propagate = propagate_decoupled if coupling == "decoupled" else propagate_coupled
    return propagate(ode, emap, grid or TimeGrid())


def reference_surface(scenario, n=500, grid=None, params=None, mode="grid", seed=0):
    params = params or drive.DrivetrainParams()
    return sample_ensemble(drive.scenario_ode(scenario, params), drive.parameter_space(), n, mode, seed, grid or TimeGrid())


@dataclass
class Table1Cell:
    scenario: int
    method: str
    coupling: str
    q: int
    d: int
    rmse: float | None


def table1(scenarios=(1, 2), methods=("ls", "pm"), couplings=("decoupled", "coupled"),
           qs=TABLE1_Q, ds=TABLE1_D, grid=None, n_ref=500, params=None):
    """RMSE of the first state against the dense reference for every (q, d) cell.

    Cells with d + 1 > q carry ``rmse=None``.
    """
    grid = grid or TimeGrid()
    cells = []
    for scenario in scenarios:
        ref = reference_surface(scenario, n_ref, grid, params)
        for method in methods:
            for coupling in couplings:
                for q in qs:
                    for d in ds:
                        if d + 1 > q:
                            cells.append(Table1Cell(scenario, method, coupling, q, d, None))
                            continue
                        fld = gpc_field(scenario, d, q, method, coupling, grid, params)
                        err = surface_rmse(fld, ref.points, ref.states, 0)
                        cells.append(Table1Cell(scenario, method, coupling, q, d, err))
    return cells


def gpc_bands(fld, z=Z99):
    """Mean and mean +/- z std per state from a coefficient field."""
    mean = fld.mean()
    std = fld.std()
    return mean, mean - z * std, mean + z * std


@dataclass
class RobustSetup:
    T: float = 10.0
    n_t: int = 40
    degree: int = 7
    nodes: int = 15
    estimator: str = "pm"
    coupling: str = "decoupled"
    eps: float = 0.4
    q_weight: tuple = (1.0, 1.0)
    r_weight: float = 1.0
    u_bounds: tuple = (-5.0, 5.0)
    dt: float = 1e-3
    store_every: int = 10
    params: drive.DrivetrainParams = field(default_factory=drive.DrivetrainParams)


def robust_ocp(setup=None):
    s = setup or RobustSetup()
    space = drive.parameter_space()
    basis = PolynomialBasis(space, s.degree)
    rule = gauss_rule(space, s.nodes)
    if s.estimator == "ls":
        rule = rule.without_weights()
    emap = build_estimator(basis, rule, s.estimator)
    grid = ControlGrid(s.T, s.n_t, 1, s.u_bounds[0], s.u_bounds[1])
    weights = CostWeights(np.diag(s.q_weight), np.atleast_2d(s.r_weight), s.eps, drive.reference_state)
    params = s.params
    theta0 = drive.rest_angle(rule.nodes[:, 0])
    L0 = drive._spring_length(theta0, params)

    def dynamics(x, u, omega):
        # the collocation nodes are fixed, so the rest angles are computed once
        return drive.dynamics(0.0, x, u[..., 0], theta0, params, L0)

    return StochasticOcp(
        dynamics,
        drive.initial_state,
        2,
        grid,
        weights,
        emap,
        s.coupling,
        TimeGrid(s.T, s.dt, s.store_every),
    )


def baseline_control(ocp, params=None):
    """Computed-torque feedforward sampled at the control nodes, clipped to the box."""
    params = params or drive.DrivetrainParams()
    U = drive.computed_torque(ocp.grid.node_times, params)[:, None]
    return ocp.grid.clip(U)


def replay(ocp, U, n=500, params=None):
    """Simulate a control policy on an n-point rest-angle grid; returns the ensemble."""
    from .socp import control_eval

    params = params or drive.DrivetrainParams()
    grid = ocp.grid
    U = grid.as_nodes(U)
    ode = drive.drivetrain_ode(lambda t: control_eval(grid, U, min(t, grid.T))[0], params, grid.T)
    return sample_ensemble(ode, drive.parameter_space(), n, "grid", 0, ocp.time_grid)


@dataclass
class RobustResult:
    ocp: StochasticOcp
    U_baseline: np.ndarray
    K_baseline: float
    field_baseline: CoefficientField
    U_opt: np.ndarray
    K_opt: float
    field_opt: CoefficientField
    solution: object


def robust_startup(setup=None, max_iter=200, callback=None):
    setup = setup or RobustSetup()
    ocp = robust_ocp(setup)
    U0 = baseline_control(ocp, setup.params)
    K0, f0 = evaluate_ocp(ocp, U0)
    sol = solve_ocp(ocp, U0, max_iter=max_iter, callback=callback)
    K1, f1 = evaluate_ocp(ocp, sol.U)
    return RobustResult(ocp, U0, K0, f0, sol.U, K1, f1, sol)
