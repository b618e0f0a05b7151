"""Eccentrically loaded drivetrain benchmark.

A flywheel (inertia J) whose shaft carries, at radius r, a spring-damper
element suspended at distance l from the shaft centre. The spring rest angle
theta0 = pi/2 + omega*pi/4 is uncertain with omega ~ U(-1, 1); every run
starts from rest at (theta0, 0), so the uncertainty enters both the initial
state and the dynamics. States are x1 = theta [rad], x2 = theta_dot [rad/s];
the input is a shaft torque [N m].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .basis import ParameterSpace, Uniform
from .propagation import UncertainOde

SPRING_LAWS = ("literal", "restoring")


@dataclass(frozen=True)
class DrivetrainParams:
    """Mechanical constants.

    ``spring_law`` selects the stiffness term. ``"literal"`` is
    ``k (1 - L/L0) r l sin(theta)`` taken at face value;
    ``"restoring"`` is ``k (1 - L0/L) r l sin(theta)``, the derivative of the
    spring energy ``k (L - L0)^2 / 2``. The two agree in sign only up to the
    factor -L/L0: the literal law pushes the shaft away from its rest angle.
    """

    J: float = 1.0
    k: float = 1.0
    b: float = 0.5
    r: float = 1.0
    l: float = 1.5
    spring_law: str = "restoring"

    def __post_init__(self):
        if min(self.J, self.k, self.b, self.r, self.l) <= 0:
            raise ValueError("drivetrain parameters must be positive")
        if not self.l > self.r:
            raise ValueError("geometry requires l > r")
        if self.spring_law not in SPRING_LAWS:
            raise ValueError(f"spring_law must be one of {SPRING_LAWS}")


NOMINAL_REST_ANGLE = np.pi / 2


def rest_angle(omega):
    return np.pi / 2 + np.asarray(omega, dtype=float) * np.pi / 4


def _spring_length(theta, p):
    return np.sqrt(p.r**2 + p.l**2 - 2.0 * p.r * p.l * np.cos(theta))


def spring_torque(theta, theta0, params=DrivetrainParams()):
    L = _spring_length(theta, params)
    L0 = _spring_length(theta0, params)
    ratio = L / L0 if params.spring_law == "literal" else L0 / L
    return params.k * (1.0 - ratio) * params.r * params.l * np.sin(theta)


def damper_torque(theta, theta_dot, params=DrivetrainParams()):
    p = params
    s = np.sin(theta)
    return p.b * (p.r * p.l * s) ** 2 / _spring_length(theta, p) ** 2 * theta_dot


def _passive_torque(theta, theta_dot, L0, p):
    """T_k + T_b with the shared trigonometry evaluated once."""
    s = np.sin(theta)
    rls = p.r * p.l * s
    L2 = p.r**2 + p.l**2 - 2.0 * p.r * p.l * np.cos(theta)
    L = np.sqrt(L2)
    ratio = L / L0 if p.spring_law == "literal" else L0 / L
    return p.k * (1.0 - ratio) * rls + p.b * rls * rls / L2 * theta_dot


def dynamics(t, state, u, theta0, params=DrivetrainParams(), L0=None):
    """State derivative (theta_dot, (u - T_k - T_b) / J); ``state[..., 0:2]``.

    ``L0`` optionally supplies the precomputed spring length at ``theta0``.
    """
    state = np.asarray(state, dtype=float)
    theta, omega = state[..., 0], state[..., 1]
    if L0 is None:
        L0 = _spring_length(theta0, params)
    acc = (u - _passive_torque(theta, omega, L0, params)) / params.J
    return np.stack([omega, acc], axis=-1)


def reference_trajectory(t):
    """Smoothed ramp: r1 = pi/8 t^2 + pi/2 before t = 2 s, pi/2 t after.

    Returns ``(r1, r1_dot, r1_ddot)``.
    """
    t = np.asarray(t, dtype=float)
    early = t < 2.0
    r1 = np.where(early, np.pi / 8 * t**2 + np.pi / 2, np.pi / 2 * t)
    r1d = np.where(early, np.pi / 4 * t, np.pi / 2)
    r1dd = np.where(early, np.pi / 4, 0.0)
    if r1.ndim == 0:
        return float(r1), float(r1d), float(r1dd)
    return r1, r1d, r1dd


def reference_state(t):
    """Reference for the full state, (theta, theta_dot) = (r1, r1_dot); shape (..., 2)."""
    r1, r1d, _ = reference_trajectory(t)
    return np.stack([np.asarray(r1), np.asarray(r1d)], axis=-1)


def _step(level):
    def u(t):
        return level * (np.asarray(t, dtype=float) >= 0.0)

    return u


def scenario_inputs():
    """Constant step torques: scenario 1 (1/2 N m, bifurcating) and 2 (1 N m)."""
    return {1: _step(0.5), 2: _step(1.0)}


SCENARIO_LEVELS = {1: 0.5, 2: 1.0}


def parameter_space():
    return ParameterSpace([Uniform(-1.0, 1.0)])


def initial_state(omega):
    """Rest at the rest angle for each (q, 1) parameter row."""
    omega = np.asarray(omega, dtype=float).reshape(-1)
    return np.column_stack([rest_angle(omega), np.zeros_like(omega)])


def drivetrain_ode(u, params=DrivetrainParams(), T=10.0):
    """Uncertain drivetrain driven by ``u(t)`` (a callable or a constant torque)."""
    if callable(u):
        torque = u
    else:
        level = float(u)

        def torque(t):
            return level

    def rhs(t, x, omega):
        theta0 = rest_angle(np.asarray(omega)[:, 0])
        return dynamics(t, x, torque(t), theta0, params, _spring_length(theta0, params))

    return UncertainOde(2, initial_state, rhs, T)


def scenario_ode(scenario, params=DrivetrainParams(), T=10.0):
    return drivetrain_ode(SCENARIO_LEVELS[int(scenario)], params, T)


def computed_torque(t, params=DrivetrainParams()):
    """Feedforward torque J r1'' + T_k(r1) + T_b(r1, r1') at the nominal rest angle."""
    r1, r1d, r1dd = reference_trajectory(t)
    return (
        params.J * np.asarray(r1dd)
        + spring_torque(r1, NOMINAL_REST_ANGLE, params)
        + damper_torque(r1, r1d, params)
    )


def spring_energy(theta, theta0, params=DrivetrainParams(), n=2001):
    """Potential of the stiffness torque, integral of T_k from theta0 to theta (Simpson)."""
    s = np.linspace(theta0, theta, n)
    return float(simpson(spring_torque(s, theta0, params), x=s))
