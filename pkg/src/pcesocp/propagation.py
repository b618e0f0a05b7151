"""Uncertainty propagation through ODEs with parameter-dependent dynamics.

Two routes produce the same kind of result, a time series of chaos
coefficient blocks:

* decoupled: simulate the q node systems independently, then map the node
  states to coefficients with the estimator matrix;
* coupled: integrate the coefficient ODE directly, evaluating the dynamics
  at the expansion's reconstruction of the node states.

Callables are vectorized over nodes: ``initial(omega)`` maps (q, n_omega)
points to (q, n_x) states and ``rhs(t, x, omega)`` maps (..., q, n_x) states
to derivatives of the same shape.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .basis import PolynomialBasis, moments_from_coefficients
from .errors import DivergenceError, ShapeError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform integration grid on [0, T]; every ``store_every``-th state is kept."""

    T: float = 10.0
    dt: float = 1e-3
    store_every: int = 10

    def __post_init__(self):
        if not (self.T > 0 and self.dt > 0):
            raise ValueError("T and dt must be positive")
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError(f"T={self.T} is not a multiple of dt={self.dt}")
        if self.steps % self.store_every:
            raise ValueError(f"{self.steps} steps not divisible by store_every={self.store_every}")

    @property
    def steps(self):
        return int(round(self.T / self.dt))

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.steps + 1)

    @property
    def stored_times(self):
        return self.times[:: self.store_every]


def integrate_ode(rhs, x0, grid, store_every=1, on_nonfinite="raise", node_axis=None):
    """Classical fixed-step RK4.

    ``grid`` is a TimeGrid (its ``store_every`` is used) or a uniform array of
    times. Returns states at the stored times, shape (n_stored,) + x0.shape.
    With ``on_nonfinite="raise"`` a non-finite state raises DivergenceError
    carrying the failing time and, if ``node_axis`` is given, the index along
    that axis of the first offending entry; ``"ignore"`` lets NaNs propagate.
    """
    if isinstance(grid, TimeGrid):
        t = grid.times
        store_every = grid.store_every
    else:
        t = np.asarray(grid, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("time grid needs at least two points")
        steps = np.diff(t)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * steps[0]:
            raise ValueError("time grid must be uniform and increasing")
    n = t.size - 1
    if n % store_every:
        raise ValueError("number of steps must be divisible by store_every")
    dt = (t[-1] - t[0]) / n
    x = np.array(x0, dtype=float)
    out = np.empty((n // store_every + 1,) + x.shape)
    out[0] = x
    check = on_nonfinite == "raise"
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            ti = t[0] + i * dt
            k1 = rhs(ti, x)
            k2 = rhs(ti + 0.5 * dt, x + 0.5 * dt * k1)
            k3 = rhs(ti + 0.5 * dt, x + 0.5 * dt * k2)
            k4 = rhs(ti + dt, x + dt * k3)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if check and not np.isfinite(x).all():
                node = None
                if node_axis is not None:
                    bad = ~np.isfinite(np.moveaxis(x, node_axis, 0)).reshape(x.shape[node_axis], -1).all(axis=1)
                    node = int(np.flatnonzero(bad)[0])
                raise DivergenceError(f"non-finite state at t={ti + dt:.6g}", time=ti + dt, node=node)
            if (i + 1) % store_every == 0:
                out[(i + 1) // store_every] = x
    return out


@dataclass(frozen=True)
class UncertainOde:
    n_x: int
    initial: Callable
    rhs: Callable
    T: float = 10.0

    @classmethod
    def from_pointwise(cls, n_x, h, f, T=10.0):
        """Wrap per-point callables ``h(omega)`` and ``f(t, x, omega)`` (loops over nodes)."""

        def initial(omega):
            return np.array([np.asarray(h(w), dtype=float).reshape(n_x) for w in omega])

        def rhs(t, x, omega):
            flat = x.reshape(-1, len(omega), n_x)
            res = np.empty_like(flat)
            for b in range(flat.shape[0]):
                for j, w in enumerate(omega):
                    res[b, j] = np.asarray(f(t, flat[b, j], w), dtype=float).reshape(n_x)
            return res.reshape(x.shape)

        return cls(n_x, initial, rhs, T)


@dataclass(frozen=True)
class CoefficientField:
    """Coefficient blocks over time: ``coeffs[k]`` is the (p, n_x) block at ``times[k]``."""

    times: np.ndarray
    coeffs: np.ndarray
    basis: PolynomialBasis

    def __post_init__(self):
        if self.coeffs.shape[:2] != (len(self.times), self.basis.size):
            raise ShapeError("coefficient array does not match the time grid and basis")

    @property
    def n_x(self):
        return self.coeffs.shape[-1]

    def moments(self):
        return moments_from_coefficients(self.basis, self.coeffs)

    def mean(self):
        return self.coeffs[:, 0, :] * self.basis.norms[0]

    def std(self):
        _, cov = self.moments()
        return np.sqrt(np.maximum(np.diagonal(cov, axis1=-2, axis2=-1), 0.0))

    def evaluate(self, points):
        """Reconstructed surface at the given parameter points, shape (n_t, N, n_x)."""
        V = np.atleast_2d(self.basis.evaluate(points))
        return np.einsum("jp,tpn->tjn", V, self.coeffs)


def _annotate(err, what):
    node = f" at node {err.node}" if err.node is not None else ""
    return DivergenceError(f"{what} diverged{node}: {err}", time=err.time, node=err.node)


def decoupled_coefficients(rhs, H, A, grid, on_nonfinite="raise"):
    """Array-level decoupled route; ``H`` is (..., q, n_x), returns (n_t, ..., p, n_x)."""
    traj = integrate_ode(rhs, H, grid, on_nonfinite=on_nonfinite, node_axis=-2)
    with np.errstate(invalid="ignore", over="ignore"):
        return A @ traj


def coupled_coefficients(rhs, H, A, V, grid, on_nonfinite="raise"):
    """Array-level coupled route; integrates C' = A f(V C) from C(0) = A H."""

    def coeff_rhs(t, C):
        return A @ rhs(t, V @ C)

    return integrate_ode(coeff_rhs, A @ H, grid, on_nonfinite=on_nonfinite)


def propagate_decoupled(ode, emap, grid=None):
    grid = grid or TimeGrid(T=ode.T)
    nodes = emap.colloc.nodes
    H = ode.initial(nodes)

    def rhs(t, x):
        return ode.rhs(t, x, nodes)

    try:
        coeffs = decoupled_coefficients(rhs, H, emap.matrix, grid)
    except DivergenceError as err:
        raise _annotate(err, "node simulation") from err
    return CoefficientField(grid.stored_times, coeffs, emap.basis)


def propagate_coupled(ode, emap, grid=None):
    grid = grid or TimeGrid(T=ode.T)
    nodes = emap.colloc.nodes
    H = ode.initial(nodes)
    A = emap.matrix
    V = emap.vandermonde()
    state = {}

    def rhs(t, x):
        state["x"] = x
        return ode.rhs(t, x, nodes)

    try:
        coeffs = coupled_coefficients(rhs, H, A, V, grid)
    except DivergenceError as err:
        x = state.get("x")
        node = None
        if x is not None:
            bad = np.flatnonzero(~np.isfinite(x).all(axis=-1))
            node = int(bad[0]) if bad.size else None
        raise _annotate(DivergenceError(str(err), err.time, node), "coefficient dynamics") from err
    return CoefficientField(grid.stored_times, coeffs, emap.basis)


def surface_rmse(field, points, states, state_index=0):
    """RMS difference between the reconstructed and a reference surface.

    ``states`` holds the reference on ``field.times`` x ``points`` with shape
    (n_t, N, n_x); samples containing non-finite values are skipped.
    """
    states = np.asarray(states, dtype=float)
    if states.shape[0] != len(field.times):
        raise ShapeError("reference surface is not sampled on the field's time grid")
    approx = field.evaluate(points)[..., state_index]
    ref = states[..., state_index]
    if approx.shape != ref.shape:
        raise ShapeError(f"reference shape {ref.shape} does not match {approx.shape}")
    keep = np.isfinite(ref).all(axis=0)
    return float(np.sqrt(np.mean((approx[:, keep] - ref[:, keep]) ** 2)))
