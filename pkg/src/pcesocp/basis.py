"""Orthogonal polynomial bases for independent random inputs.

Uniform inputs use Legendre polynomials, Gaussian inputs probabilists'
Hermite polynomials. Polynomials are kept in their classical (un-normalized)
form; inner products are taken against the probability density, so the
constant basis function has unit squared norm and the mean of an expansion
is its first coefficient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
from scipy import stats

from .errors import ShapeError, UnsupportedDistributionError


@dataclass(frozen=True)
class Uniform:
    a: float = -1.0
    b: float = 1.0

    family = "legendre"

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"Uniform requires a < b, got a={self.a}, b={self.b}")

    @property
    def support(self):
        return (self.a, self.b)

    def to_canonical(self, x):
        return (2.0 * np.asarray(x, dtype=float) - self.a - self.b) / (self.b - self.a)

    def from_canonical(self, xi):
        return 0.5 * (np.asarray(xi, dtype=float) + 1.0) * (self.b - self.a) + self.a

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.a) & (x <= self.b)
        return np.where(inside, 1.0 / (self.b - self.a), 0.0)

    def ppf(self, u):
        return self.a + np.asarray(u, dtype=float) * (self.b - self.a)


@dataclass(frozen=True)
class Gaussian:
    """Normal distribution with mean ``mu`` and standard deviation ``sigma``."""

    mu: float = 0.0
    sigma: float = 1.0

    family = "hermite"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"Gaussian requires sigma > 0, got {self.sigma}")

    @property
    def support(self):
        return (-math.inf, math.inf)

    def to_canonical(self, x):
        return (np.asarray(x, dtype=float) - self.mu) / self.sigma

    def from_canonical(self, xi):
        return self.mu + self.sigma * np.asarray(xi, dtype=float)

    def pdf(self, x):
        return stats.norm.pdf(x, loc=self.mu, scale=self.sigma)

    def ppf(self, u):
        return stats.norm.ppf(u, loc=self.mu, scale=self.sigma)


_TAGS = {"uniform": Uniform(), "gaussian": Gaussian(), "normal": Gaussian()}


def as_distribution(dist):
    """Accept a distribution instance or a string tag for the canonical one."""
    if isinstance(dist, (Uniform, Gaussian)):
        return dist
    if isinstance(dist, str) and dist.lower() in _TAGS:
        return _TAGS[dist.lower()]
    raise UnsupportedDistributionError(f"unsupported distribution: {dist!r}")


@dataclass(frozen=True)
class ParameterSpace:
    """Independent random inputs; the joint density is the product of marginals."""

    dists: tuple

    def __init__(self, dists):
        if isinstance(dists, (Uniform, Gaussian, str)):
            dists = (dists,)
        dists = tuple(as_distribution(d) for d in dists)
        if not dists:
            raise ValueError("parameter space needs at least one dimension")
        object.__setattr__(self, "dists", dists)

    @property
    def n_dims(self):
        return len(self.dists)

    @property
    def support(self):
        return [d.support for d in self.dists]

    def pdf(self, points):
        points = _as_points(points, self.n_dims)
        out = np.ones(points.shape[0])
        for k, d in enumerate(self.dists):
            out *= d.pdf(points[:, k])
        return out

    def contains(self, points):
        points = _as_points(points, self.n_dims)
        ok = np.ones(points.shape[0], dtype=bool)
        for k, (lo, hi) in enumerate(self.support):
            ok &= (points[:, k] >= lo) & (points[:, k] <= hi)
        return ok


def _as_points(points, n_dims):
    """Coerce to an (N, n_dims) float array."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(-1, 1) if n_dims == 1 else pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != n_dims:
        raise ShapeError(f"expected points with {n_dims} coordinates, got shape {np.shape(points)}")
    return pts


def _recurrence_table(family, degree, xi):
    """Values of the degree 0..``degree`` polynomials at canonical points.

    Returns an array of shape ``xi.shape + (degree + 1,)``.
    """
    xi = np.asarray(xi, dtype=float)
    out = np.empty(xi.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree == 0:
        return out
    out[..., 1] = xi
    for n in range(1, degree):
        if family == "legendre":
            out[..., n + 1] = ((2 * n + 1) * xi * out[..., n] - n * out[..., n - 1]) / (n + 1)
        elif family == "hermite":
            out[..., n + 1] = xi * out[..., n] - n * out[..., n - 1]
        else:
            raise UnsupportedDistributionError(f"unsupported family: {family!r}")
    return out


def _univariate_norms(family, degree):
    n = np.arange(degree + 1)
    if family == "legendre":
        return 1.0 / (2 * n + 1)
    if family == "hermite":
        return np.array([float(math.factorial(int(k))) for k in n])
    raise UnsupportedDistributionError(f"unsupported family: {family!r}")


def univariate_eval(dist, degree, point):
    """Evaluate the degree-``degree`` orthogonal polynomial of ``dist`` at ``point``.

    ``point`` is in physical units; Uniform(a, b) is mapped onto [-1, 1]
    before the Legendre recurrence is applied. Arrays are evaluated
    elementwise.
    """
    dist = as_distribution(dist)
    if degree < 0:
        raise ValueError("degree must be >= 0")
    values = _recurrence_table(dist.family, degree, dist.to_canonical(point))[..., degree]
    return float(values) if values.ndim == 0 else values


def graded_multi_indices(n_dims, degree):
    """All multi-indices with total degree <= ``degree``.

    Sorted by total degree, ties broken in descending lexicographic order so
    that in 2-D the degree-1 block is ``(1, 0), (0, 1)``.
    """
    indices = []
    for grade in range(degree + 1):
        block = set()
        for combo in combinations_with_replacement(range(n_dims), grade):
            idx = [0] * n_dims
            for k in combo:
                idx[k] += 1
            block.add(tuple(idx))
        indices.extend(sorted(block, reverse=True))
    return np.array(indices, dtype=int).reshape(-1, n_dims)


@dataclass(frozen=True)
class PolynomialBasis:
    """Total-degree tensor basis, orthogonal under the joint input density."""

    space: ParameterSpace
    degree: int
    multi_indices: np.ndarray = field(init=False, repr=False, compare=False)
    norms: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.space, ParameterSpace):
            object.__setattr__(self, "space", ParameterSpace(self.space))
        if int(self.degree) != self.degree or self.degree < 0:
            raise ValueError(f"degree must be a non-negative integer, got {self.degree}")
        object.__setattr__(self, "degree", int(self.degree))
        mi = graded_multi_indices(self.space.n_dims, self.degree)
        mi.setflags(write=False)
        norms = np.ones(len(mi))
        for k, dist in enumerate(self.space.dists):
            norms *= _univariate_norms(dist.family, self.degree)[mi[:, k]]
        norms.setflags(write=False)
        object.__setattr__(self, "multi_indices", mi)
        object.__setattr__(self, "norms", norms)

    @property
    def size(self):
        return len(self.multi_indices)

    @property
    def n_dims(self):
        return self.space.n_dims

    def evaluate(self, points):
        """Basis values at ``points``; returns (N, p), or (p,) for one point."""
        single = np.ndim(points) == 0 or (np.ndim(points) == 1 and self.n_dims > 1)
        pts = _as_points(points, self.n_dims)
        out = np.ones((pts.shape[0], self.size))
        for k, dist in enumerate(self.space.dists):
            table = _recurrence_table(dist.family, self.degree, dist.to_canonical(pts[:, k]))
            out *= table[:, self.multi_indices[:, k]]
        return out[0] if single else out

    def gram(self):
        return np.diag(self.norms)


def basis_eval(basis, point):
    """Vector of the p basis values at a single point (or rows for many points)."""
    return basis.evaluate(point)


def squared_norms(basis):
    return np.array(basis.norms)


def basis_size(n_dims, degree):
    return math.comb(n_dims + degree, n_dims)


def moments_from_coefficients(basis, coeffs):
    """Mean vector and covariance matrix of an expansion.

    ``coeffs`` is a (p, n) block whose row i holds the coefficient of basis
    function i for each of the n outputs (a length-p vector is treated as a
    single output). Leading batch dimensions, e.g. time, are allowed:
    (..., p, n) gives (..., n) means and (..., n, n) covariances.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    if c.shape[-2] != basis.size:
        raise ShapeError(f"expected {basis.size} coefficient rows, got {c.shape[-2]}")
    mean = c[..., 0, :] * basis.norms[0]
    tail = c[..., 1:, :]
    cov = np.einsum("p,...pi,...pj->...ij", basis.norms[1:], tail, tail)
    return mean, cov
