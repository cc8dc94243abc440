"""Weak-measurement primitives for a finite-dimensional system.

A system with non-degenerate observable eigenvalues ``s_1 < ... < s_d`` is
probed by a Gaussian pointer of spread ``delta_p`` centered at zero.  A single
reading ``p`` is drawn from an exact mixture of normals: component ``i`` has
mean ``s_i``, standard deviation ``delta_p / sqrt(2)`` and weight
``|alpha_i|^2``.  The state update (collapse) multiplies each amplitude by
``exp(-(p - s_i)^2 / (2 delta_p^2))`` and renormalizes, so relative phases are
untouched and eigenstates are fixed points.

After ``M`` readings the post-measurement state depends on the record only
through the pair ``(M, sum of readings)``; :func:`state_after_sequence`
exploits that sufficiency directly instead of folding collapses one by one.

All state containers are frozen dataclasses wrapping read-only arrays, so
every operation here is a pure function and safe to call from worker
processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Spectrum",
    "ApparatusConfig",
    "PureState",
    "OutcomeSequence",
    "DensityMatrix",
    "make_state",
    "outcome_density",
    "sample_outcome",
    "collapse",
    "povm_element",
    "povm_completeness_residual",
    "log_joint_density",
    "joint_density",
    "state_after_sequence",
    "strong_sample",
    "density_from_pure",
    "purity",
    "overlap_trace",
]

# Absolute tolerance for "equals 1" checks on norms and traces.  Inputs that
# fail these are construction errors, not numerical noise.
NORM_ATOL = 1e-12
HERMITIAN_ATOL = 1e-12


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Non-degenerate eigenvalues of the measured observable, sorted ascending.

    Parameters
    ----------
    eigenvalues : array_like of float
        At least two pairwise distinct values.  They are sorted on
        construction; pair amplitudes with eigenvalues *before* building a
        :class:`Spectrum` (or use :func:`make_state`, which does it for you).
    """

    eigenvalues: np.ndarray

    def __post_init__(self):
        vals = np.sort(np.asarray(self.eigenvalues, dtype=float).ravel())
        if vals.size < 2:
            raise ValueError("spectrum needs at least two eigenvalues")
        if not np.all(np.isfinite(vals)):
            raise ValueError("eigenvalues must be finite")
        if np.any(np.diff(vals) == 0.0):
            raise ValueError(
                "degenerate spectrum: the observable is assumed non-degenerate, "
                "eigenvalues must be pairwise distinct"
            )
        object.__setattr__(self, "eigenvalues", _readonly(vals))

    @property
    def dimension(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def min_gap(self) -> float:
        """Smallest spacing between adjacent eigenvalues."""
        return float(np.diff(self.eigenvalues).min())


@dataclass(frozen=True, eq=False)
class ApparatusConfig:
    """Gaussian pointer of spread ``delta_p``, prepared at zero mean.

    The pointer wavefunction is ``N exp(-p^2 / (2 delta_p^2))`` with
    ``N^2 = 1 / sqrt(pi delta_p^2)``, so a reading on eigenstate ``i`` is
    normal with mean ``s_i`` and standard deviation ``delta_p / sqrt(2)``.
    Large ``delta_p`` relative to the spectral gaps is the weak regime.
    """

    delta_p: float

    def __post_init__(self):
        dp = float(self.delta_p)
        if not math.isfinite(dp) or dp <= 0.0:
            raise ValueError("delta_p must be positive and finite")
        object.__setattr__(self, "delta_p", dp)

    @property
    def outcome_sigma(self) -> float:
        """Standard deviation of a single reading on an eigenstate."""
        return self.delta_p / math.sqrt(2.0)

    @property
    def density_prefactor(self) -> float:
        """``N^2 = 1 / sqrt(pi delta_p^2)``, normalizes the outcome density."""
        return 1.0 / math.sqrt(math.pi * self.delta_p**2)

    @property
    def povm_prefactor(self) -> float:
        """``N = (pi delta_p^2)^(-1/4)``, weight scale of one POVM element."""
        return (math.pi * self.delta_p**2) ** -0.25


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized amplitudes over the eigenbasis of a :class:`Spectrum`.

    ``amplitudes[i]`` multiplies the eigenstate with ``spectrum.eigenvalues[i]``.
    The norm must already be 1 within ``NORM_ATOL``; use
    :meth:`PureState.normalized` to rescale arbitrary vectors.
    """

    spectrum: Spectrum
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        if amps.size != self.spectrum.dimension:
            raise ValueError(
                f"amplitude count {amps.size} does not match "
                f"spectrum dimension {self.spectrum.dimension}"
            )
        norm_sq = float(np.sum(np.abs(amps) ** 2))
        if abs(norm_sq - 1.0) > NORM_ATOL:
            raise ValueError(f"state is not normalized: |psi|^2 = {norm_sq!r}")
        object.__setattr__(self, "amplitudes", _readonly(amps))

    @classmethod
    def normalized(cls, spectrum: Spectrum, amplitudes) -> "PureState":
        amps = np.asarray(amplitudes, dtype=complex).ravel()
        norm = float(np.linalg.norm(amps))
        if norm == 0.0 or not math.isfinite(norm):
            raise ValueError("cannot normalize a zero or non-finite vector")
        return cls(spectrum, amps / norm)

    @property
    def dimension(self) -> int:
        return self.spectrum.dimension

    @property
    def probabilities(self) -> np.ndarray:
        """Born weights ``|alpha_i|^2``."""
        return np.abs(self.amplitudes) ** 2


def make_state(eigenvalues, amplitudes, *, normalize: bool = True) -> PureState:
    """Pair eigenvalues with amplitudes, sort jointly, and build the state.

    Input order is free; entries are reordered together so that
    ``amplitudes[i]`` stays attached to ``eigenvalues[i]``.
    """
    vals = np.asarray(eigenvalues, dtype=float).ravel()
    amps = np.asarray(amplitudes, dtype=complex).ravel()
    if vals.size != amps.size:
        raise ValueError("eigenvalues and amplitudes must have equal length")
    order = np.argsort(vals, kind="stable")
    spectrum = Spectrum(vals[order])
    if normalize:
        return PureState.normalized(spectrum, amps[order])
    return PureState(spectrum, amps[order])


@dataclass(frozen=True, eq=False)
class OutcomeSequence:
    """Measurement record, reduced to its sufficient statistics.

    ``count`` and ``total`` (number of readings and their running sum) fully
    determine the post-measurement state and are always authoritative.  The
    raw readings are kept in ``outcomes`` only on request, e.g. for joint
    densities or running-average plots.
    """

    count: int
    total: float
    outcomes: np.ndarray | None = None

    def __post_init__(self):
        count = int(self.count)
        if count < 0:
            raise ValueError("count must be non-negative")
        object.__setattr__(self, "count", count)
        object.__setattr__(self, "total", float(self.total))
        if self.outcomes is not None:
            outs = np.asarray(self.outcomes, dtype=float).ravel()
            if outs.size != count:
                raise ValueError(
                    f"{outs.size} retained outcomes inconsistent with count {count}"
                )
            object.__setattr__(self, "outcomes", _readonly(outs))

    @classmethod
    def from_outcomes(cls, outcomes) -> "OutcomeSequence":
        """Build from raw readings; the total uses compensated summation,
        so any permutation of the same readings gives a bitwise-equal total."""
        outs = np.asarray(outcomes, dtype=float).ravel()
        return cls(count=outs.size, total=math.fsum(outs.tolist()), outcomes=outs)

    @classmethod
    def from_stats(cls, count: int, total: float) -> "OutcomeSequence":
        return cls(count=count, total=total, outcomes=None)

    @property
    def mean(self) -> float:
        """Running average ``total / count``."""
        if self.count == 0:
            raise ValueError("mean of an empty sequence is undefined")
        return self.total / self.count


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace matrix in the observable eigenbasis.

    Positivity is not enforced at construction (first-order analytic
    expansions can dip microscopically below zero); check
    :meth:`min_eigenvalue` where it matters.
    """

    entries: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.entries, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("density matrix must be square")
        if not np.allclose(mat, mat.conj().T, rtol=0.0, atol=HERMITIAN_ATOL):
            raise ValueError("density matrix must be Hermitian")
        trace = complex(np.trace(mat))
        if abs(trace - 1.0) > 1e-10:
            raise ValueError(f"density matrix trace {trace!r} is not 1")
        object.__setattr__(self, "entries", _readonly(mat))

    @property
    def dimension(self) -> int:
        return int(self.entries.shape[0])

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries).min())


def outcome_density(state: PureState, app: ApparatusConfig, p):
    """Probability density of a single pointer reading.

    Exact mixture of normals: weight ``|alpha_i|^2``, mean ``s_i``, standard
    deviation ``delta_p / sqrt(2)``.  Integrates to 1 over the real line.

    Parameters
    ----------
    p : float or array_like
        Reading value(s).

    Returns
    -------
    float or ndarray
        Density at ``p``, matching the input shape.
    """
    s = state.spectrum.eigenvalues
    w = state.probabilities
    p_arr = np.asarray(p, dtype=float)
    z = (p_arr[..., None] - s) / app.delta_p
    dens = app.density_prefactor * (np.exp(-z * z) @ w)
    if p_arr.ndim == 0:
        return float(dens)
    return dens


def sample_outcome(state: PureState, app: ApparatusConfig, rng: np.random.Generator,
                   size: int | None = None):
    """Draw pointer reading(s) from :func:`outcome_density`.

    Mixture sampling: one uniform picks the component, one standard normal
    adds the pointer noise.  The scalar path consumes exactly one uniform
    followed by one normal, which is the same stream order the trajectory
    engine uses; batched draws consume a uniform block then a normal block.
    """
    s = state.spectrum.eigenvalues
    cum = np.cumsum(state.probabilities)
    sigma = app.outcome_sigma
    if size is None:
        u = rng.random()
        k = min(int(np.searchsorted(cum, u, side="right")), s.size - 1)
        return float(s[k] + sigma * rng.standard_normal())
    u = rng.random(size)
    idx = np.minimum(np.searchsorted(cum, u, side="right"), s.size - 1)
    return s[idx] + sigma * rng.standard_normal(size)


def collapse(state: PureState, app: ApparatusConfig, p: float) -> PureState:
    """Post-measurement state after reading ``p``.

    Each amplitude is damped by ``exp(-(p - s_i)^2 / (2 delta_p^2))`` and the
    vector renormalized.  Computed in log space with the largest exponent
    subtracted, so far-off readings (many delta_p away from the spectrum)
    cannot underflow to an all-zero vector.  Phases are preserved and
    eigenstates are exact fixed points.
    """
    s = state.spectrum.eigenvalues
    log_damp = -((float(p) - s) ** 2) / (2.0 * app.delta_p**2)
    amps = state.amplitudes * np.exp(log_damp - log_damp.max())
    return PureState(state.spectrum, amps / np.linalg.norm(amps))


def povm_element(spectrum: Spectrum, app: ApparatusConfig, p: float) -> np.ndarray:
    """Diagonal weights of the measurement operator for reading ``p``.

    Entry ``i`` is ``N exp(-(p - s_i)^2 / (2 delta_p^2))`` with
    ``N = (pi delta_p^2)^(-1/4)``; the full operator is the diagonal matrix of
    these weights.  Squared and integrated over all ``p`` they resolve the
    identity (see :func:`povm_completeness_residual`).
    """
    s = spectrum.eigenvalues
    return app.povm_prefactor * np.exp(-((float(p) - s) ** 2) / (2.0 * app.delta_p**2))


def povm_completeness_residual(spectrum: Spectrum, app: ApparatusConfig,
                               num_points: int = 8192) -> float:
    """Max deviation from identity of the quadrature ``int M_p^dag M_p dp``.

    Trapezoid rule on ``[min s - 10 delta_p, max s + 10 delta_p]``; the
    integrand is diagonal, so the residual is ``max_i |integral_i - 1|``.
    The 10-sigma-equivalent padding keeps the truncation error below 1e-12.
    """
    if num_points < 4096:
        raise ValueError("use at least 4096 quadrature points")
    s = spectrum.eigenvalues
    lo = float(s.min()) - 10.0 * app.delta_p
    hi = float(s.max()) + 10.0 * app.delta_p
    grid = np.linspace(lo, hi, int(num_points))
    z = (grid[:, None] - s) / app.delta_p
    integrals = np.trapezoid(app.density_prefactor * np.exp(-z * z), grid, axis=0)
    return float(np.abs(integrals - 1.0).max())


def log_joint_density(state: PureState, app: ApparatusConfig,
                      seq: OutcomeSequence) -> float:
    """Log joint density of an ordered sequence of readings.

    The joint law is exchangeable: a single mixture over the initial Born
    weights, each component a product of independent normals.  Needs the raw
    readings (the sum of squared residuals is not a function of the
    sufficient pair), so ``seq`` must retain its outcomes.
    """
    if seq.count < 1:
        raise ValueError("joint density of an empty sequence is undefined")
    if seq.outcomes is None:
        raise ValueError(
            "joint density needs the retained outcome values, "
            "not just (count, total); build the sequence with from_outcomes"
        )
    s = state.spectrum.eigenvalues
    w = state.probabilities
    resid = np.sum((seq.outcomes[:, None] - s) ** 2, axis=0) / app.delta_p**2
    with np.errstate(divide="ignore"):
        logs = np.log(w) - resid
    m = float(logs.max())
    lse = m + math.log(float(np.sum(np.exp(logs - m))))
    return lse + seq.count * math.log(app.density_prefactor)


def joint_density(state: PureState, app: ApparatusConfig,
                  seq: OutcomeSequence) -> float:
    """Joint density of a reading sequence; see :func:`log_joint_density`."""
    return math.exp(log_joint_density(state, app, seq))


def state_after_sequence(state: PureState, app: ApparatusConfig,
                         seq: OutcomeSequence) -> PureState:
    """State after a whole measurement record, via its sufficient statistics.

    Amplitude ``i`` picks up ``exp((2 s_i total - count s_i^2) / (2 delta_p^2))``
    up to normalization, so only ``(count, total)`` matter: any two records
    with equal statistics produce the identical state.  An empty record
    returns the input state unchanged.
    """
    if seq.count == 0:
        return state
    s = state.spectrum.eigenvalues
    expo = (2.0 * s * seq.total - seq.count * s * s) / (2.0 * app.delta_p**2)
    amps = state.amplitudes * np.exp(expo - expo.max())
    return PureState(state.spectrum, amps / np.linalg.norm(amps))


def strong_sample(state: PureState, rng: np.random.Generator) -> int:
    """Index drawn from the Born weights, i.e. an ideal projective readout."""
    cum = np.cumsum(state.probabilities)
    u = rng.random()
    return min(int(np.searchsorted(cum, u, side="right")), state.dimension - 1)


def density_from_pure(state: PureState) -> DensityMatrix:
    """Rank-one density matrix ``|psi><psi|`` of a pure state."""
    return DensityMatrix(np.outer(state.amplitudes, state.amplitudes.conj()))


def purity(rho: DensityMatrix) -> float:
    """``tr(rho^2)``; 1 for pure states, ``1/d`` for the maximally mixed one."""
    return float(np.trace(rho.entries @ rho.entries).real)


def overlap_trace(a: DensityMatrix, b: DensityMatrix) -> float:
    """``tr(a b)`` for two density matrices in the same basis."""
    if a.dimension != b.dimension:
        raise ValueError(
            f"dimension mismatch: {a.dimension} vs {b.dimension}"
        )
    return float(np.trace(a.entries @ b.entries).real)
