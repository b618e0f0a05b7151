"""Collocation sets: Gauss rules and weightless experimental designs."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.stats import qmc

from .basis import Gaussian, ParameterSpace, Uniform, _as_points
from .errors import MissingWeightsError, UnsupportedDistributionError


@dataclass(frozen=True)
class CollocationSet:
    """``q`` nodes in physical units, optionally with quadrature weights summing to 1."""

    nodes: np.ndarray
    weights: np.ndarray | None
    kind: str

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        if nodes.ndim != 2 or nodes.shape[0] < 1:
            raise ValueError("collocation set needs at least one node")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        if self.weights is not None:
            w = np.array(self.weights, dtype=float).reshape(-1)
            if w.shape[0] != nodes.shape[0]:
                raise ValueError("one weight per node required")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

    @property
    def q(self):
        return self.nodes.shape[0]

    @property
    def n_dims(self):
        return self.nodes.shape[1]

    @property
    def has_weights(self):
        return self.weights is not None

    def without_weights(self, kind=None):
        return CollocationSet(self.nodes, None, kind or self.kind)


def _jacobi_coefficients(dist, m):
    """Three-term recurrence coefficients of the monic orthogonal family."""
    n = np.arange(1, m)
    if isinstance(dist, Uniform):
        return np.zeros(m), n / np.sqrt(4.0 * n**2 - 1.0)
    if isinstance(dist, Gaussian):
        return np.zeros(m), np.sqrt(n.astype(float))
    raise UnsupportedDistributionError(f"unsupported distribution: {dist!r}")


def gauss_rule_1d(dist, m):
    """Golub-Welsch: nodes are eigenvalues of the Jacobi matrix, weights the
    squared first eigenvector components (the measure has unit mass)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    diag, offdiag = _jacobi_coefficients(dist, m)
    if m == 1:
        xi, w = diag.copy(), np.ones(1)
    else:
        xi, vecs = eigh_tridiagonal(diag, offdiag)
        w = vecs[0, :] ** 2
    # symmetric measures: clean up round-off
    xi = 0.5 * (xi - xi[::-1])
    w = 0.5 * (w + w[::-1])
    w = w / w.sum()
    return dist.from_canonical(xi), w


def gauss_rule(space, points_per_dim):
    """Tensor-product Gauss rule with ``points_per_dim`` nodes per dimension.

    Exact for polynomials of degree <= 2m - 1 in each variable; q = m**n_dims.
    """
    space = space if isinstance(space, ParameterSpace) else ParameterSpace(space)
    m = int(points_per_dim)
    rules = [gauss_rule_1d(d, m) for d in space.dists]
    nodes = np.array(list(itertools.product(*[r[0] for r in rules])))
    weights = np.array([np.prod(w) for w in itertools.product(*[r[1] for r in rules])])
    return CollocationSet(nodes.reshape(-1, space.n_dims), weights, "GaussTensor")


def _grid_1d(dist, m):
    if isinstance(dist, Uniform):
        return np.linspace(dist.a, dist.b, m) if m > 1 else np.array([0.5 * (dist.a + dist.b)])
    # unbounded support: equal-probability midpoints
    return dist.ppf((np.arange(m) + 0.5) / m)


def design_nodes(space, q, method="UniformGrid", seed=0):
    """Weightless design of ``q`` nodes for least-squares estimation.

    ``UniformGrid`` includes the endpoints of bounded supports; in more than
    one dimension ``q`` must be a perfect power of the dimension count.
    ``LatinHypercube`` places exactly one node in each of ``q`` equal
    probability strata per dimension.
    """
    space = space if isinstance(space, ParameterSpace) else ParameterSpace(space)
    if q < 1:
        raise ValueError("q must be >= 1")
    key = method.lower().replace("_", "").replace("-", "")
    if key in ("uniformgrid", "grid"):
        m = int(round(q ** (1.0 / space.n_dims)))
        if m**space.n_dims != q:
            raise ValueError(f"q={q} is not a perfect power of n_dims={space.n_dims}")
        axes = [_grid_1d(d, m) for d in space.dists]
        nodes = np.array(list(itertools.product(*axes)))
        return CollocationSet(nodes.reshape(-1, space.n_dims), None, "UniformGrid")
    if key in ("latinhypercube", "lhs"):
        rng = np.random.Generator(np.random.Philox(seed))
        u = qmc.LatinHypercube(d=space.n_dims, seed=rng).random(q)
        nodes = np.column_stack([d.ppf(u[:, k]) for k, d in enumerate(space.dists)])
        return CollocationSet(nodes, None, "LatinHypercube")
    raise ValueError(f"unknown design method: {method!r}")


def integrate(rule, f):
    """Quadrature sum of ``f`` over the rule; ``f`` receives one node (1-D array) at a time."""
    if not rule.has_weights:
        raise MissingWeightsError("integration needs a weighted collocation set")
    values = np.array([np.asarray(f(x), dtype=float).reshape(()) for x in rule.nodes])
    return float(values @ rule.weights)


def nodes_inside(space, rule):
    return bool(np.all(space.contains(_as_points(rule.nodes, space.n_dims))))
