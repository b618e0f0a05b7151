"""Non-intrusive coefficient estimators.

Every estimator is a linear map ``A`` (p x q) from node evaluations to chaos
coefficients; multi-output samples are handled column by column.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr, solve_triangular

from .basis import PolynomialBasis
from .errors import IllPosedDesignError, MissingWeightsError, ShapeError
from .quadrature import CollocationSet

METHODS = ("pm", "ls", "gls")


@dataclass(frozen=True)
class EstimatorMap:
    method: str
    matrix: np.ndarray
    basis: PolynomialBasis
    colloc: CollocationSet

    @property
    def nodes(self):
        return self.colloc.nodes

    def vandermonde(self):
        """Psi with Psi[j, i] = basis function i at node j."""
        return self.basis.evaluate(self.colloc.nodes)


def _pseudo_inverse(V):
    """(V^T V)^-1 V^T through a thin QR factorization."""
    Q, R = qr(V, mode="economic")
    return solve_triangular(R, Q.T)


def build_estimator(basis, colloc, method="pm"):
    method = method.lower()
    if method not in METHODS:
        raise ValueError(f"unknown estimator {method!r}; expected one of {METHODS}")
    if colloc.n_dims != basis.n_dims:
        raise ShapeError(f"collocation nodes have {colloc.n_dims} coordinates, basis expects {basis.n_dims}")
    if method in ("pm", "gls") and not colloc.has_weights:
        raise MissingWeightsError(f"{method.upper()} needs quadrature weights")
    p, q = basis.size, colloc.q
    if q < p:
        raise IllPosedDesignError(f"q={q} collocation nodes cannot determine p={p} coefficients")
    V = basis.evaluate(colloc.nodes)
    s = np.linalg.svd(V, compute_uv=False)
    if s[-1] <= s[0] * max(V.shape) * np.finfo(float).eps:
        raise IllPosedDesignError("collocation matrix is rank deficient")

    if method == "pm":
        A = (V.T * colloc.weights) / basis.norms[:, None]
    elif method == "ls":
        A = _pseudo_inverse(V)
    else:
        sw = np.sqrt(colloc.weights)
        A = _pseudo_inverse(V * sw[:, None]) * sw[None, :]
    A.setflags(write=False)
    return EstimatorMap(method, A, basis, colloc)


def estimate_coefficients(emap, samples):
    """Coefficient block A @ samples for (q,) or (q, n) node evaluations."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] != emap.colloc.q:
        raise ShapeError(f"expected {emap.colloc.q} sample rows, got {samples.shape[0]}")
    return emap.matrix @ samples
