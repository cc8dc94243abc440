"""Monte Carlo trajectories of repeated weak measurements on one system copy.

Each trajectory repeatedly draws a pointer reading from the current state's
outcome density and applies the collapse, tracking only the sufficient pair
``(count, total)``; the per-step cost is independent of how many readings came
before.  Under repetition the state performs a random walk on the simplex of
Born weights whose absorbing points are the eigenstates, so with an early-stop
tolerance a trajectory ends in a definite eigenstate and the ensemble of
terminal eigenstates reproduces the initial Born weights.

Reproducibility contract: trajectory ``i`` of a run with ``master_seed`` uses
the generator ``default_rng(SeedSequence(master_seed, spawn_key=(i,)))`` and
consumes one uniform then one standard normal per step.  Results are therefore
independent of scheduling; parallel runs reduce worker output in trajectory
index order and are bitwise identical to serial runs.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .analytics import AverageDistribution, average_distribution
from .core import (
    ApparatusConfig,
    DensityMatrix,
    OutcomeSequence,
    PureState,
    Spectrum,
    _readonly,
    state_after_sequence,
)

__all__ = [
    "TrajectoryRecord",
    "EnsembleStats",
    "TerminalFrequencies",
    "trajectory_stream",
    "run_trajectory",
    "run_ensemble",
    "default_bin_edges",
    "empirical_vs_analytic",
    "terminal_frequencies",
]

DEFAULT_CONVERGENCE_TOL = 1e-6
DEFAULT_BINS = 101


def trajectory_stream(master_seed: int, index: int) -> np.random.Generator:
    """Generator for trajectory ``index`` of a run seeded with ``master_seed``.

    Spawn keys hash the pair through SeedSequence's entropy pool, so streams
    for different indices (or master seeds) are statistically independent and
    a trajectory's draws do not depend on which worker executes it.
    """
    return np.random.default_rng(np.random.SeedSequence(int(master_seed),
                                                        spawn_key=(int(index),)))


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """One simulated trajectory.

    ``outcomes`` always carries the sufficient statistics; raw readings are
    attached only when requested.  ``terminal_index`` is the eigenvalue index
    the state settled on, present exactly when ``terminal_fidelity`` (the
    largest squared amplitude of the final state) reached
    ``1 - convergence_tol``.
    """

    seed_id: int
    steps_taken: int
    outcomes: OutcomeSequence
    final_state: PureState
    terminal_fidelity: float
    terminal_index: int | None
    first_outcome: float

    @property
    def average(self) -> float:
        """Running average of the readings, ``total / count``."""
        return self.outcomes.mean

    @property
    def converged(self) -> bool:
        return self.terminal_index is not None


def run_trajectory(state: PureState, app: ApparatusConfig, max_steps: int,
                   convergence_tol: float = DEFAULT_CONVERGENCE_TOL,
                   rng: np.random.Generator | None = None, *,
                   early_stop: bool = True, keep_outcomes: bool = False,
                   seed_id: int = 0) -> TrajectoryRecord:
    """Simulate one trajectory of at most ``max_steps`` weak readings.

    Before each reading the Born weights of the current state are computed
    from the sufficient statistics; if ``early_stop`` is set and the largest
    weight has reached ``1 - convergence_tol`` the trajectory stops.  At least
    one reading is always taken.

    Parameters
    ----------
    max_steps : int
        Hard cap on the number of readings.
    convergence_tol : float
        Early-stop threshold on ``1 - max_i w_i``.
    rng : numpy.random.Generator
        Source of randomness; pass :func:`trajectory_stream` output for
        reproducible ensembles.  A fresh unseeded generator is used if omitted.
    keep_outcomes : bool
        Retain the raw readings on the record (memory grows with steps).
    seed_id : int
        Label stored on the record; :func:`run_ensemble` sets it to the
        trajectory index.
    """
    max_steps = int(max_steps)
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    if not 0.0 < convergence_tol < 1.0:
        raise ValueError("convergence_tol must lie strictly between 0 and 1")
    if rng is None:
        rng = np.random.default_rng()

    s = state.spectrum.eigenvalues
    d = s.size
    s_list = [float(v) for v in s]
    s_sq = [v * v for v in s_list]
    w0 = state.probabilities
    # log of initial weights; zero-amplitude components stay excluded forever
    log_w0 = [(-math.inf if wi == 0.0 else math.log(wi)) for wi in w0]
    inv_dp_sq = 1.0 / (app.delta_p * app.delta_p)
    sigma = app.outcome_sigma
    threshold = 1.0 - float(convergence_tol)

    count = 0
    total = 0.0
    first = math.nan
    kept: list[float] | None = [] if keep_outcomes else None
    exp = math.exp
    random = rng.random
    normal = rng.standard_normal

    while True:
        # Born weights of the state after `count` readings, up to a common factor
        best = -math.inf
        logits = [0.0] * d
        for i in range(d):
            li = log_w0[i] + (2.0 * s_list[i] * total - count * s_sq[i]) * inv_dp_sq
            logits[i] = li
            if li > best:
                best = li
        tot = 0.0
        w_max = 0.0
        weights = [0.0] * d
        for i in range(d):
            wi = exp(logits[i] - best)
            weights[i] = wi
            tot += wi
            if wi > w_max:
                w_max = wi
        if count >= 1 and early_stop and w_max >= threshold * tot:
            break
        if count >= max_steps:
            break
        u = random() * tot
        acc = 0.0
        pick = d - 1
        for i in range(d):
            acc += weights[i]
            if u < acc:
                pick = i
                break
        p = s_list[pick] + sigma * normal()
        if count == 0:
            first = p
        total += p
        count += 1
        if kept is not None:
            kept.append(p)

    seq = OutcomeSequence(count=count, total=total,
                          outcomes=None if kept is None else np.asarray(kept))
    final_state = state_after_sequence(state, app, seq)
    fid = float(final_state.probabilities.max())
    term = int(np.argmax(final_state.probabilities)) if fid >= threshold else None
    return TrajectoryRecord(seed_id=int(seed_id), steps_taken=count, outcomes=seq,
                            final_state=final_state, terminal_fidelity=fid,
                            terminal_index=term, first_outcome=first)


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """Aggregated results of an ensemble of independent trajectories.

    ``counts`` histograms the per-trajectory running averages over
    ``bin_edges`` (averages outside the range are clipped into the edge bins,
    so the counts always sum to ``trajectories``).  ``tv_distance`` compares
    that histogram with the analytic fixed-step distribution and is only
    defined when every trajectory took the same number of steps.
    ``final_density_sem`` is the elementwise standard error of
    ``mean_final_density``.
    """

    trajectories: int
    master_seed: int
    max_steps: int
    convergence_tol: float
    early_stop: bool
    born_weights: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray
    terminal_counts: np.ndarray
    unconverged: int
    mean_average: float
    mean_steps: float
    first_outcome_mean: float
    mean_final_density: DensityMatrix
    final_density_sem: np.ndarray
    tv_distance: float | None
    records: list[TrajectoryRecord] | None = field(default=None, repr=False)

    def __post_init__(self):
        if int(self.counts.sum()) != self.trajectories:
            raise ValueError("histogram counts must sum to the trajectory count")
        if int(self.terminal_counts.sum()) + self.unconverged != self.trajectories:
            raise ValueError("terminal counts plus unconverged must sum to the "
                             "trajectory count")

    @property
    def empirical_masses(self) -> np.ndarray:
        """Histogram normalized to total mass 1."""
        return self.counts / self.trajectories


def default_bin_edges(spectrum: Spectrum, app: ApparatusConfig, steps: int,
                      bins: int = DEFAULT_BINS) -> np.ndarray:
    """Histogram edges for running averages of ``steps`` readings.

    Spectral range padded by four standard errors on each side; the mass
    clipped into the edge bins is below 1e-4 of a trajectory for any state.
    """
    if bins < 1:
        raise ValueError("bins must be at least 1")
    sigma = app.delta_p / math.sqrt(2.0 * int(steps))
    s = spectrum.eigenvalues
    return np.linspace(float(s.min()) - 4.0 * sigma,
                       float(s.max()) + 4.0 * sigma, int(bins) + 1)


def _chunk_records(args) -> list[TrajectoryRecord]:
    (state, app, max_steps, convergence_tol, early_stop, keep_outcomes,
     master_seed, lo, hi) = args
    return [
        run_trajectory(state, app, max_steps, convergence_tol,
                       trajectory_stream(master_seed, i), early_stop=early_stop,
                       keep_outcomes=keep_outcomes, seed_id=i)
        for i in range(lo, hi)
    ]


def run_ensemble(state: PureState, app: ApparatusConfig, trajectories: int,
                 max_steps: int,
                 convergence_tol: float = DEFAULT_CONVERGENCE_TOL,
                 master_seed: int = 0, bins=DEFAULT_BINS, *,
                 early_stop: bool = True, keep_outcomes: bool = False,
                 keep_records: bool = False, workers: int = 1) -> EnsembleStats:
    """Simulate an ensemble of independent trajectories and aggregate it.

    Parameters
    ----------
    trajectories : int
        Ensemble size.
    bins : int or array_like
        Histogram bin count over the default range, or explicit edges.
    workers : int
        Process count; any value yields bitwise-identical statistics because
        trajectory ``i`` always uses :func:`trajectory_stream(master_seed, i)`
        and aggregation runs in index order.

    Returns
    -------
    EnsembleStats
    """
    trajectories = int(trajectories)
    if trajectories < 1:
        raise ValueError("trajectories must be at least 1")
    workers = int(workers)
    if workers < 1:
        raise ValueError("workers must be at least 1")

    if np.ndim(bins) == 0:
        edges = default_bin_edges(state.spectrum, app, max_steps, int(bins))
    else:
        edges = np.asarray(bins, dtype=float).ravel()
        if edges.size < 2 or np.any(np.diff(edges) <= 0.0):
            raise ValueError("explicit bin edges must be strictly increasing")

    common = (state, app, int(max_steps), float(convergence_tol),
              bool(early_stop), bool(keep_outcomes), int(master_seed))
    if workers == 1:
        records = _chunk_records(common + (0, trajectories))
    else:
        n_chunks = min(trajectories, workers * 8)
        bounds = np.linspace(0, trajectories, n_chunks + 1).astype(int)
        tasks = [common + (int(lo), int(hi))
                 for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_chunk_records, tasks))
        records = [rec for chunk in chunks for rec in chunk]

    return _aggregate(state, app, records, edges, int(master_seed),
                      int(max_steps), float(convergence_tol), bool(early_stop),
                      keep_records)


def _aggregate(state: PureState, app: ApparatusConfig,
               records: list[TrajectoryRecord], edges: np.ndarray,
               master_seed: int, max_steps: int, convergence_tol: float,
               early_stop: bool, keep_records: bool) -> EnsembleStats:
    n = len(records)
    d = state.dimension
    averages = np.fromiter((r.average for r in records), dtype=float, count=n)
    steps = np.fromiter((r.steps_taken for r in records), dtype=np.int64, count=n)
    firsts = np.fromiter((r.first_outcome for r in records), dtype=float, count=n)

    # clip into the closed range so every trajectory lands in some bin
    top = np.nextafter(edges[-1], edges[0])
    counts, _ = np.histogram(np.clip(averages, edges[0], top), bins=edges)

    terminal_counts = np.zeros(d, dtype=np.int64)
    unconverged = 0
    rho_sum = np.zeros((d, d), dtype=complex)
    abs_sq_sum = np.zeros((d, d), dtype=float)
    for rec in records:
        if rec.terminal_index is None:
            unconverged += 1
        else:
            terminal_counts[rec.terminal_index] += 1
        outer = np.outer(rec.final_state.amplitudes,
                         rec.final_state.amplitudes.conj())
        rho_sum += outer
        abs_sq_sum += np.abs(outer) ** 2

    mean_rho = rho_sum / n
    if n > 1:
        var = (abs_sq_sum - n * np.abs(mean_rho) ** 2) / (n - 1)
        sem = np.sqrt(np.maximum(var, 0.0) / n)
    else:
        sem = np.zeros((d, d))

    tv: float | None = None
    if steps.min() == steps.max():
        analytic = average_distribution(state, app, int(steps[0]))
        tv = _tv_distance(counts / n, analytic, edges)

    return EnsembleStats(
        trajectories=n, master_seed=master_seed, max_steps=max_steps,
        convergence_tol=convergence_tol, early_stop=early_stop,
        born_weights=_readonly(state.probabilities), bin_edges=_readonly(edges),
        counts=_readonly(counts), terminal_counts=_readonly(terminal_counts),
        unconverged=unconverged, mean_average=float(averages.mean()),
        mean_steps=float(steps.mean()), first_outcome_mean=float(firsts.mean()),
        mean_final_density=DensityMatrix(mean_rho), final_density_sem=_readonly(sem),
        tv_distance=tv, records=records if keep_records else None,
    )


def _tv_distance(empirical_masses: np.ndarray, analytic: AverageDistribution,
                 edges: np.ndarray) -> float:
    return float(0.5 * np.abs(empirical_masses - analytic.bin_masses(edges)).sum())


def empirical_vs_analytic(stats: EnsembleStats,
                          analytic: AverageDistribution) -> float:
    """Total variation distance between the ensemble histogram and the
    analytic distribution, over the ensemble's bins.

    Analytic bin masses come from the exact mixture CDF.  The analytic grid
    must cover the histogram range; disjoint bin conventions are rejected
    rather than silently compared.
    """
    edges = stats.bin_edges
    if analytic.grid[0] > edges[0] or analytic.grid[-1] < edges[-1]:
        raise ValueError(
            "bin mismatch: histogram edges extend beyond the analytic "
            "distribution's grid"
        )
    return _tv_distance(stats.empirical_masses, analytic, edges)


@dataclass(frozen=True, eq=False)
class TerminalFrequencies:
    """Terminal-eigenstate statistics of a fully converged ensemble."""

    counts: np.ndarray
    frequencies: np.ndarray
    expected: np.ndarray
    chi_square: float
    p_value: float
    dof: int

    def as_pairs(self) -> list[tuple[int, float]]:
        return [(i, float(f)) for i, f in enumerate(self.frequencies)]


def terminal_frequencies(stats: EnsembleStats) -> TerminalFrequencies:
    """Compare terminal-eigenstate frequencies with the initial Born weights.

    Pearson chi-square over the eigenvalues of nonzero Born weight (a zero
    weight cannot be reached, its expected and observed counts are both zero).
    Raises if any trajectory failed to converge, since its terminal state is
    then not an eigenstate.
    """
    if stats.unconverged:
        raise ValueError(
            f"{stats.unconverged} of {stats.trajectories} trajectories did not "
            "converge; terminal frequencies are only defined for converged runs"
        )
    weights = stats.born_weights
    counts = stats.terminal_counts
    expected = weights * stats.trajectories
    live = weights > 0.0
    chi_sq = float(np.sum((counts[live] - expected[live]) ** 2 / expected[live]))
    dof = int(live.sum()) - 1
    if dof == 0:
        # single reachable eigenstate: the statistic is identically zero
        p_value = 1.0 if chi_sq == 0.0 else 0.0
    else:
        p_value = float(sps.chi2.sf(chi_sq, dof))
    return TerminalFrequencies(counts=_readonly(counts),
                               frequencies=_readonly(counts / stats.trajectories),
                               expected=_readonly(expected),
                               chi_square=chi_sq, p_value=p_value, dof=dof)
