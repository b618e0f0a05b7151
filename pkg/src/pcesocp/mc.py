"""Sampling reference for the expansions: Monte Carlo draws or a dense parameter grid."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .basis import ParameterSpace, Uniform
from .errors import EmptyEnsembleError
from .propagation import TimeGrid, integrate_ode


@dataclass(frozen=True)
class SampleEnsemble:
    """Trajectories ``states`` (n_t, N, n_x) at parameter ``points`` (N, n_omega).

    Divergent samples are kept as NaN rows and flagged in ``diverged``.
    """

    times: np.ndarray
    points: np.ndarray
    states: np.ndarray
    diverged: np.ndarray
    provenance: dict

    @property
    def n_samples(self):
        return self.points.shape[0]


def _grid_points(space, n):
    m = int(round(n ** (1.0 / space.n_dims)))
    if m**space.n_dims != n:
        raise ValueError(f"grid size {n} is not a perfect power of n_dims={space.n_dims}")
    axes = []
    for d in space.dists:
        if isinstance(d, Uniform):
            axes.append(np.linspace(d.a, d.b, m))
        else:
            axes.append(d.ppf((np.arange(m) + 0.5) / m))
    return np.array(list(itertools.product(*axes))).reshape(n, space.n_dims)


def sample_points(space, n, mode="grid", seed=0):
    """Parameter samples: endpoint-inclusive grid, or Philox-seeded random draws."""
    space = space if isinstance(space, ParameterSpace) else ParameterSpace(space)
    if n < 2:
        raise ValueError("need at least two samples")
    if mode == "grid":
        return _grid_points(space, n)
    if mode == "mc":
        rng = np.random.Generator(np.random.Philox(seed))
        u = rng.random((n, space.n_dims))
        return np.column_stack([d.ppf(u[:, k]) for k, d in enumerate(space.dists)])
    raise ValueError(f"unknown sampling mode {mode!r}")


def sample_ensemble(ode, space, n=500, mode="grid", seed=0, grid=None):
    grid = grid or TimeGrid(T=ode.T)
    points = sample_points(space, n, mode, seed)

    def rhs(t, x):
        return ode.rhs(t, x, points)

    states = integrate_ode(rhs, ode.initial(points), grid, on_nonfinite="ignore")
    diverged = ~np.isfinite(states).all(axis=(0, 2))
    states[:, diverged, :] = np.nan
    provenance = {"mode": mode, "n": int(n)}
    if mode == "mc":
        provenance.update(seed=int(seed), generator="Philox")
    return SampleEnsemble(grid.stored_times, points, states, diverged, provenance)


@dataclass(frozen=True)
class EnsembleMoments:
    mean: np.ndarray
    cov: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_used: int


def ensemble_moments(ens, coverage=0.99):
    """Unbiased mean/covariance per time and the empirical central ``coverage`` band."""
    ok = ~ens.diverged
    n = int(ok.sum())
    if n < 2:
        raise EmptyEnsembleError(f"only {n} non-divergent samples")
    X = ens.states[:, ok, :]
    mean = X.mean(axis=1)
    dev = X - mean[:, None, :]
    cov = np.einsum("tsi,tsj->tij", dev, dev) / (n - 1)
    tail = 100.0 * (1.0 - coverage) / 2.0
    lower, upper = np.percentile(X, [tail, 100.0 - tail], axis=1)
    return EnsembleMoments(mean, cov, lower, upper, n)
