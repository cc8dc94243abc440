"""Closed-form predictions for repeated weak measurements.

Everything here is an exact expectation over the outcome ensemble of
:mod:`weakmeas.core`, no sampling involved: moments of a single reading,
the distribution of the M-step running average, decoherence of the reduced
density matrix, the repetition count needed to match a projective readout,
and the information/disturbance tradeoff at a given statistical error.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import (
    ApparatusConfig,
    DensityMatrix,
    PureState,
    _readonly,
    density_from_pure,
)

__all__ = [
    "ensemble_mean",
    "spectral_spread",
    "outcome_variance",
    "required_weak_repetitions",
    "saturation_ratio",
    "single_step_reduced_density",
    "expected_reduced_density_after_M",
    "statistical_error",
    "disturbance",
    "disturbance_strong_limit",
    "disturbance_curve",
    "DisturbancePoint",
    "AverageDistribution",
    "average_distribution",
]


def ensemble_mean(state: PureState) -> float:
    """Expected value of one reading: the Born average ``sum w_i s_i``."""
    return float(state.probabilities @ state.spectrum.eigenvalues)


def spectral_spread(state: PureState) -> float:
    """Standard deviation of the observable in the state (Delta S).

    Zero exactly when the state is an eigenstate.
    """
    s = state.spectrum.eigenvalues
    w = state.probabilities
    mean = float(w @ s)
    return math.sqrt(max(float(w @ (s - mean) ** 2), 0.0))


def outcome_variance(state: PureState, app: ApparatusConfig) -> float:
    """Variance of one reading: pointer noise plus spectral spread.

    ``delta_p^2 / 2 + (Delta S)^2``; the first term dominates in the weak
    regime.
    """
    return app.delta_p**2 / 2.0 + spectral_spread(state) ** 2


def required_weak_repetitions(delta_p: float, delta_s: float,
                              strong_repetitions: float) -> float:
    """Weak readings needed to estimate the mean as well as ``strong_repetitions``
    projective ones.

    Equating standard errors gives ``(delta_p / delta_s)^2 * strong / 2``.
    Undefined on an eigenstate, where the projective readout has no variance
    to match.
    """
    if delta_p <= 0.0:
        raise ValueError("delta_p must be positive")
    if delta_s <= 0.0:
        raise ValueError(
            "the state has zero spectral spread (an eigenstate); "
            "comparison with projective statistics is undefined"
        )
    if strong_repetitions < 1:
        raise ValueError("strong_repetitions must be at least 1")
    return (delta_p / delta_s) ** 2 * strong_repetitions / 2.0


def saturation_ratio(f: float) -> float:
    """Fraction of the achievable mean-estimate accuracy reached by stopping
    the pointer readout at ``f`` standard deviations.

    ``erf(f) - (2 f / sqrt(pi)) exp(-f^2)``: 0 at ``f = 0`` and 1 as
    ``f -> inf``.
    """
    f = float(f)
    if f < 0.0:
        raise ValueError("f must be non-negative")
    return math.erf(f) - (2.0 * f / math.sqrt(math.pi)) * math.exp(-(f * f))


def single_step_reduced_density(state: PureState,
                                app: ApparatusConfig) -> DensityMatrix:
    """Outcome-averaged density matrix after one weak reading, to first order.

    Off-diagonal ``(i, j)`` is damped by ``(s_i - s_j)^2 / (4 delta_p^2)``
    relative to the input; diagonals are untouched.  Valid for
    ``delta_p >> max|s_i - s_j|``; outside that regime the truncation can
    produce a slightly indefinite matrix, which is reported as a warning
    rather than an error.
    """
    s = state.spectrum.eigenvalues
    rho = density_from_pure(state).entries
    gap_sq = (s[:, None] - s[None, :]) ** 2
    post = rho * (1.0 - gap_sq / (4.0 * app.delta_p**2))
    out = DensityMatrix(post)
    if out.min_eigenvalue() < -1e-10:
        warnings.warn(
            "first-order expansion left the reduced density matrix indefinite; "
            "delta_p is too small relative to the spectral range for this formula",
            RuntimeWarning,
            stacklevel=2,
        )
    return out


def expected_reduced_density_after_M(state: PureState, app: ApparatusConfig,
                                     steps: int) -> DensityMatrix:
    """Outcome-averaged density matrix after ``steps`` weak readings (exact).

    Off-diagonal ``(i, j)`` decays as
    ``exp(-steps (s_i - s_j)^2 / (4 delta_p^2))`` while diagonals stay fixed:
    pure decoherence in the observable eigenbasis.
    """
    steps = int(steps)
    if steps < 0:
        raise ValueError("steps must be non-negative")
    s = state.spectrum.eigenvalues
    gap_sq = (s[:, None] - s[None, :]) ** 2
    kernel = np.exp(-steps * gap_sq / (4.0 * app.delta_p**2))
    return DensityMatrix(density_from_pure(state).entries * kernel)


def statistical_error(app: ApparatusConfig, steps: int) -> float:
    """Standard error ``delta_p / sqrt(2 steps)`` of the running average
    around its eigenvalue (pointer noise only)."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    return app.delta_p / math.sqrt(2.0 * steps)


def disturbance(state: PureState, epsilon: float) -> float:
    """State disturbance of a measurement run tuned to statistical error
    ``epsilon``.

    ``sum_{i,j} w_i w_j (1 - exp(-(s_i - s_j)^2 / (8 epsilon^2)))`` with
    ``w = |alpha|^2``.  Equals ``1 - tr(rho rho_after)`` where ``rho_after``
    is the outcome-averaged state of a run with
    ``epsilon = delta_p / sqrt(2 M)``; this identity is exact, not a bound.
    Vanishes as ``epsilon -> inf`` (no measurement) and on eigenstates.
    """
    epsilon = float(epsilon)
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    s = state.spectrum.eigenvalues
    w = state.probabilities
    gap_sq = (s[:, None] - s[None, :]) ** 2
    kernel = 1.0 - np.exp(-gap_sq / (8.0 * epsilon**2))
    return float(w @ kernel @ w)


def disturbance_strong_limit(state: PureState) -> float:
    """``epsilon -> 0`` limit of :func:`disturbance`: ``sum_i w_i (1 - w_i)``,
    the disturbance of a fully projective readout."""
    w = state.probabilities
    return float(np.sum(w * (1.0 - w)))


@dataclass(frozen=True)
class DisturbancePoint:
    epsilon: float
    disturbance: float


def disturbance_curve(state: PureState, epsilons) -> list[DisturbancePoint]:
    """Evaluate :func:`disturbance` on a grid of target errors."""
    return [DisturbancePoint(float(e), disturbance(state, e)) for e in np.asarray(epsilons, dtype=float).ravel()]


@dataclass(frozen=True, eq=False)
class AverageDistribution:
    """Distribution of the running average after a fixed number of readings.

    A mixture of normals: component ``i`` sits at eigenvalue ``centers[i]``
    with weight ``weights[i]`` and standard deviation
    ``sigma = delta_p / sqrt(2 steps)``.  ``grid`` and ``density`` give a
    plot-ready tabulation; moments and bin masses below are computed from the
    mixture parameters exactly, not from the tabulation.
    """

    steps: int
    weights: np.ndarray
    centers: np.ndarray
    sigma: float
    grid: np.ndarray
    density: np.ndarray

    def normalization(self) -> float:
        """Trapezoid integral of the tabulated density over the grid."""
        return float(np.trapezoid(self.density, self.grid))

    def mean(self) -> float:
        return float(self.weights @ self.centers)

    def variance(self) -> float:
        mu = self.mean()
        return float(self.weights @ ((self.centers - mu) ** 2)) + self.sigma**2

    def bin_masses(self, edges) -> np.ndarray:
        """Exact mixture mass in each ``[edges[k], edges[k+1])`` bin."""
        edges = np.asarray(edges, dtype=float).ravel()
        z = (edges[:, None] - self.centers) / (self.sigma * math.sqrt(2.0))
        cdf = 0.5 * (1.0 + special.erf(z)) @ self.weights
        return np.diff(cdf)


def average_distribution(state: PureState, app: ApparatusConfig, steps: int,
                         grid=None, points: int = 2048) -> AverageDistribution:
    """Analytic distribution of the running average of ``steps`` readings.

    The default grid pads the spectral range by six standard errors on each
    side, wide enough that the off-grid mass is below 1e-9.
    """
    steps = int(steps)
    if steps < 1:
        raise ValueError("steps must be at least 1")
    sigma = statistical_error(app, steps)
    s = state.spectrum.eigenvalues
    w = state.probabilities
    if grid is None:
        grid = np.linspace(float(s.min()) - 6.0 * sigma,
                           float(s.max()) + 6.0 * sigma, int(points))
    else:
        grid = np.asarray(grid, dtype=float).ravel()
        if grid.size < 2 or np.any(np.diff(grid) <= 0.0):
            raise ValueError("grid must be strictly increasing with >= 2 points")
    z = (grid[:, None] - s) / sigma
    dens = (np.exp(-0.5 * z * z) @ w) / (sigma * math.sqrt(2.0 * math.pi))
    return AverageDistribution(steps=steps, weights=_readonly(w),
                               centers=_readonly(s), sigma=float(sigma),
                               grid=_readonly(grid), density=_readonly(dens))
