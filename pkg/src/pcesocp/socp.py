"""Robust quadratic-tracking optimal control in the chaos-coefficient domain.

The control is continuous piecewise linear on a uniform grid of ``n_t``
intervals, parameterized by its node values ``U`` (shape (n_t + 1, n_u)).
For a coefficient trajectory X(t) the stochastic cost is

    K = int eps |X - e1 (x) r|^2_{D (x) Q} + (1 - eps) |X|^2_{E (x) I} dt
        + eps |U|^2_{M (x) R}

with D the basis Gram matrix, E = D - e1 e1^T, and M the Gram matrix of
the hat functions. The first integrand is the expected tracking error, the
second the trace of the state covariance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize

from .errors import DomainError, InvalidStartError, ShapeError
from .estimation import EstimatorMap
from .propagation import CoefficientField, TimeGrid, coupled_coefficients, decoupled_coefficients

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ControlGrid:
    """Uniform grid of ``n_t`` intervals on [0, T] with per-channel box bounds."""

    T: float
    n_t: int
    n_u: int = 1
    lower: float | np.ndarray = -np.inf
    upper: float | np.ndarray = np.inf

    def __post_init__(self):
        if self.n_t < 1 or self.T <= 0:
            raise ValueError("need n_t >= 1 and T > 0")
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (self.n_u,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (self.n_u,)).copy()
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def delta(self):
        return self.T / self.n_t

    @property
    def node_times(self):
        return np.linspace(0.0, self.T, self.n_t + 1)

    @property
    def shape(self):
        return (self.n_t + 1, self.n_u)

    def as_nodes(self, U):
        U = np.asarray(U, dtype=float)
        if U.size != (self.n_t + 1) * self.n_u:
            raise ShapeError(f"expected {(self.n_t + 1) * self.n_u} control values, got {U.size}")
        return U.reshape(self.shape)

    def bounds(self):
        """Flattened (lower, upper) arrays matching ``as_nodes(U).ravel()``."""
        return np.tile(self.lower, self.n_t + 1), np.tile(self.upper, self.n_t + 1)

    def feasible(self, U, tol=0.0):
        U = self.as_nodes(U)
        return bool(np.all(U >= self.lower - tol) and np.all(U <= self.upper + tol))

    def clip(self, U):
        return np.clip(self.as_nodes(U), self.lower, self.upper)


def _segment(grid, t):
    s = t / grid.delta
    k = min(int(np.floor(s)), grid.n_t - 1)
    return k, s - k


def control_eval(grid, U, t):
    """u(t; U): linear interpolation of the node values."""
    if not (-1e-12 <= t <= grid.T * (1 + 1e-12)):
        raise DomainError(f"t={t} outside the control horizon [0, {grid.T}]")
    U = grid.as_nodes(U)
    k, s = _segment(grid, min(max(t, 0.0), grid.T))
    return (1.0 - s) * U[k] + s * U[k + 1]


def build_M(n_t, delta):
    """Gram matrix of the hat functions on a uniform grid."""
    if n_t < 1 or delta <= 0:
        raise ValueError("need n_t >= 1 and delta > 0")
    main = np.full(n_t + 1, 4.0)
    main[0] = main[-1] = 2.0
    off = np.ones(n_t)
    return delta / 6.0 * (np.diag(main) + np.diag(off, 1) + np.diag(off, -1))


def build_E(basis):
    E = basis.gram().astype(float)
    E[0, 0] -= 1.0
    return E


def _check_spd(name, A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1] or not np.allclose(A, A.T):
        raise ValueError(f"{name} must be a symmetric square matrix")
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} must be positive definite") from None
    return A


@dataclass(frozen=True)
class CostWeights:
    """Tracking weight Q, control weight R, trade-off eps and reference r(t).

    ``reference`` maps an array of times (n,) to states (n, n_x).
    """

    Q: np.ndarray
    R: np.ndarray
    eps: float
    reference: Callable

    def __post_init__(self):
        object.__setattr__(self, "Q", _check_spd("Q", self.Q))
        object.__setattr__(self, "R", _check_spd("R", self.R))
        if not 0.0 < self.eps <= 1.0:
            raise ValueError("eps must lie in (0, 1]")


def cost_integrand(coeffs, r, Q, eps, norms):
    """Pointwise integrand of K for coefficient blocks (..., p, n_x) and references (..., n_x)."""
    dev = np.array(coeffs, dtype=float)
    dev[..., 0, :] -= r
    tracking = np.einsum("p,...pi,ij,...pj->...", norms, dev, Q, dev)
    tail = dev[..., 1:, :]
    spread = np.einsum("p,...pi,...pi->...", norms[1:], tail, tail)
    return eps * tracking + (1.0 - eps) * spread


def s_matrix(Q, eps):
    """Factor S with S^T S = eps Q + (1 - eps) I, so the spread term is |cov[S x]|_F-like."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    W = eps * Q + (1.0 - eps) * np.eye(Q.shape[0])
    return np.linalg.cholesky(W).T


def moment_integrand(mean, cov, r, Q, eps):
    """The integrand written with moments: |E[x] - r|^2_{eps Q} + tr(S cov S^T)."""
    dev = np.asarray(mean, dtype=float) - r
    S = s_matrix(Q, eps)
    track = eps * np.einsum("...i,ij,...j->...", dev, np.atleast_2d(Q), dev)
    spread = np.einsum("ij,...jk,lk->...il", S, cov, S)
    return track + np.trace(spread, axis1=-2, axis2=-1)


def control_energy(grid, U, R):
    """|U|^2_{M (x) R}; equals the integral of u(t)^T R u(t) over the horizon."""
    U = grid.as_nodes(U)
    M = build_M(grid.n_t, grid.delta)
    return float(np.einsum("ij,ia,ab,jb->", M, U, np.atleast_2d(R), U))


def cost_terms(field, grid, U, weights):
    """Breakdown of K: tracking and spread integrals, control energy and the weighted total."""
    times = np.asarray(field.times)
    if abs(times[0]) > 1e-12 or abs(times[-1] - grid.T) > 1e-9 * grid.T:
        raise ShapeError("coefficient field and control grid cover different horizons")
    r = np.asarray(weights.reference(times), dtype=float).reshape(len(times), -1)
    if r.shape[-1] != field.n_x:
        raise ShapeError("reference dimension does not match the state")
    norms = field.basis.norms
    tracking = trapezoid(cost_integrand(field.coeffs, r, weights.Q, 1.0, norms), times)
    spread = trapezoid(cost_integrand(field.coeffs, r, weights.Q, 0.0, norms), times)
    control = control_energy(grid, U, weights.R)
    eps = weights.eps
    total = eps * tracking + (1 - eps) * spread + eps * control
    return {"tracking": float(tracking), "spread": float(spread), "control": control, "K": float(total)}


def stochastic_cost(field, grid, U, weights):
    return cost_terms(field, grid, U, weights)["K"]


@dataclass(frozen=True)
class StochasticOcp:
    """Uncertain controlled system together with its cost and discretization.

    ``dynamics(x, u, omega)`` is vectorized: x (..., q, n_x), u (..., 1, n_u),
    omega (q, n_omega). ``initial(omega)`` returns (q, n_x).
    """

    dynamics: Callable
    initial: Callable
    n_x: int
    grid: ControlGrid
    weights: CostWeights
    estimator: EstimatorMap
    coupling: str = "decoupled"
    time_grid: TimeGrid = field(default_factory=TimeGrid)

    def __post_init__(self):
        if self.coupling not in ("decoupled", "coupled"):
            raise ValueError("coupling must be 'decoupled' or 'coupled'")
        if abs(self.time_grid.T - self.grid.T) > 1e-12:
            raise ValueError("integration and control horizons differ")

    @property
    def basis(self):
        return self.estimator.basis


def _batch_coefficients(ocp, Us):
    """Coefficient trajectories for a batch of controls, shape (n_t, B, p, n_x)."""
    grid = ocp.grid
    nodes = ocp.estimator.colloc.nodes
    A = ocp.estimator.matrix
    B = Us.shape[0]
    H = np.broadcast_to(ocp.initial(nodes), (B, len(nodes), ocp.n_x))

    def rhs(t, x):
        k, s = _segment(grid, t)
        u = (1.0 - s) * Us[:, k] + s * Us[:, k + 1]
        return ocp.dynamics(x, u[:, None, :], nodes)

    if ocp.coupling == "decoupled":
        return decoupled_coefficients(rhs, H, A, ocp.time_grid, on_nonfinite="ignore")
    V = ocp.estimator.vandermonde()
    return coupled_coefficients(rhs, H, A, V, ocp.time_grid, on_nonfinite="ignore")


def evaluate_batch(ocp, Us):
    """Costs for a stack of controls (B, n_t + 1, n_u); divergent members get +inf."""
    Us = np.asarray(Us, dtype=float).reshape((-1,) + ocp.grid.shape)
    coeffs = _batch_coefficients(ocp, Us)
    times = ocp.time_grid.stored_times
    r = np.asarray(ocp.weights.reference(times), dtype=float).reshape(len(times), 1, -1)
    w = ocp.weights
    integrand = cost_integrand(coeffs, r, w.Q, w.eps, ocp.basis.norms)
    M = build_M(ocp.grid.n_t, ocp.grid.delta)
    with np.errstate(invalid="ignore", over="ignore"):
        K = trapezoid(integrand, times, axis=0)
        K = K + w.eps * np.einsum("ij,bia,ac,bjc->b", M, Us, np.atleast_2d(w.R), Us)
    K = np.where(np.isfinite(K), K, np.inf)
    return K, coeffs


def evaluate_ocp(ocp, U):
    """Cost and coefficient field for one control; (inf, None) if the propagation diverges."""
    U = ocp.grid.as_nodes(U)
    K, coeffs = evaluate_batch(ocp, U[None])
    if not np.isfinite(K[0]):
        log.warning("propagation diverged; returning K = inf")
        return np.inf, None
    field_ = CoefficientField(ocp.time_grid.stored_times, coeffs[:, 0], ocp.basis)
    return float(K[0]), field_


def _steps(grid, U, rel_step):
    lo, hi = grid.bounds()
    h = rel_step * np.maximum(1.0, np.abs(U))
    # step inward when the forward point would leave the box
    return np.where(U + h > hi, -h, h)


def cost_gradient(ocp, U, scheme="forward", rel_step=1e-7):
    """Finite-difference gradient of K, all perturbations propagated as one batch.

    Returns ``(K(U), grad)`` with ``grad`` flattened like ``U``.
    """
    U = ocp.grid.as_nodes(U).ravel()
    n = U.size
    if scheme == "forward":
        h = _steps(ocp.grid, U, rel_step)
        Us = np.vstack([U, U + np.diag(h)])
        K, _ = evaluate_batch(ocp, Us)
        with np.errstate(invalid="ignore"):
            return float(K[0]), (K[1:] - K[0]) / h
    if scheme == "central":
        h = rel_step * np.maximum(1.0, np.abs(U))
        Us = np.vstack([U, U + np.diag(h), U - np.diag(h)])
        K, _ = evaluate_batch(ocp, Us)
        return float(K[0]), (K[1 : n + 1] - K[n + 1 :]) / (2 * h)
    raise ValueError(f"unknown finite-difference scheme {scheme!r}")


def projected_gradient_norm(grid, U, g):
    lo, hi = grid.bounds()
    U = np.ravel(U)
    return float(np.max(np.abs(np.clip(U - g, lo, hi) - U)))


@dataclass
class Iterate:
    iteration: int
    K: float
    pg_norm: float
    U: np.ndarray


@dataclass
class OcpSolution:
    U: np.ndarray
    K: float
    K0: float
    log: list
    status: str
    message: str
    n_evaluations: int


def solve_ocp(ocp, U0, max_iter=200, gtol=1e-5, ftol=1e-10, rel_step=1e-7, callback=None):
    """Minimize K over the control box with L-BFGS-B on finite-difference gradients.

    ``status`` is ``"gtol"`` when the projected gradient fell below ``gtol``,
    ``"ftol"`` when the relative cost reduction stalled, ``"max_iter"`` when
    the iteration cap was hit.
    """
    grid = ocp.grid
    U0 = grid.as_nodes(U0).ravel()
    if not grid.feasible(U0):
        raise DomainError("initial control violates the bounds")
    cache = {}

    def fun(U):
        key = U.tobytes()
        if key not in cache:
            cache[key] = cost_gradient(ocp, U, "forward", rel_step)
        return cache[key]

    K0, g0 = fun(U0)
    if not np.isfinite(K0):
        raise InvalidStartError("cost is not finite at the initial control")
    history = [Iterate(0, K0, projected_gradient_norm(grid, U0, g0), U0.copy())]

    def record(intermediate_result):
        x = np.array(intermediate_result.x)
        K, g = fun(x)
        it = Iterate(len(history), float(K), projected_gradient_norm(grid, x, g), x)
        history.append(it)
        log.info("iter %d  K=%.6g  |pg|=%.3g", it.iteration, it.K, it.pg_norm)
        if callback is not None:
            callback(it)

    lo, hi = grid.bounds()
    bounds = [(None if np.isinf(a) else a, None if np.isinf(b) else b) for a, b in zip(lo, hi)]
    res = minimize(
        fun,
        U0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        callback=record,
        options={"maxiter": max_iter, "gtol": gtol, "ftol": ftol, "maxfun": 20 * max_iter},
    )
    best = min(history, key=lambda it: it.K)
    if history[-1].pg_norm <= gtol:
        status = "gtol"
    elif res.nit >= max_iter:
        status = "max_iter"
    else:
        status = "ftol"
    return OcpSolution(
        U=grid.as_nodes(best.U),
        K=best.K,
        K0=K0,
        log=history,
        status=status,
        message=str(res.message),
        n_evaluations=len(cache),
    )
