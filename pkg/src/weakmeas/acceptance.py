"""End-to-end verification suite with pinned tolerances.

Every criterion replays one quantitative claim of the package on the reference
system (qubit with eigenvalues -1/+1, Born weights 0.2/0.8, pointer spread 10)
and reports pass/fail with the measured numbers.  The registry is consumed by
the ``weakmeas selftest`` subcommand and by the acceptance test module, so
both report identical results.

Randomized criteria derive every generator from ``MASTER_SEED`` through
distinct spawn keys; rerunning the suite is fully deterministic, and ensemble
criteria give bitwise-identical numbers for any worker count.

Criterion 1 compares the saturation table against two-decimal reference
targets (0.08, 0.43, 0.94).  The closed form evaluates to 0.9539882943107686
at f = 2, outside the +/- 0.005 band around 0.94, so that row fails by
design; the targets are kept as given rather than silently adjusted.  See the
criterion details for the computed values.
"""

from __future__ import annotations

import math
import os
import tempfile
import time
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .analytics import (
    average_distribution,
    disturbance,
    disturbance_strong_limit,
    ensemble_mean,
    expected_reduced_density_after_M,
    outcome_variance,
    statistical_error,
)
from .core import (
    ApparatusConfig,
    OutcomeSequence,
    PureState,
    Spectrum,
    collapse,
    density_from_pure,
    joint_density,
    make_state,
    outcome_density,
    overlap_trace,
    povm_completeness_residual,
    sample_outcome,
    state_after_sequence,
)
from .trajectories import run_ensemble, trajectory_stream

__all__ = ["MASTER_SEED", "CriterionResult", "criterion_numbers", "run_criteria",
           "reference_system"]

MASTER_SEED = 9

# criterion 4 histogram: the 0.02 total-variation budget is only meaningful
# when per-bin sampling noise does not eat it.  With 10^4 trajectories a
# ~24-bin histogram (Scott-scale for this mixture) keeps the expected noise
# contribution near 0.014; the default 101-bin histogram would contribute
# ~0.029 on its own and no sample of this size could pass.  An even bin count
# over the symmetric default range also makes 0 an exact bin edge, so the
# lobe masses come out of the same histogram without a straddling bin.
FIXED_RUN_BINS = 24
FIXED_RUN_STEPS = 1000
FIXED_RUN_TRAJECTORIES = 10_000


def reference_system() -> tuple[PureState, ApparatusConfig]:
    state = make_state([1.0, -1.0], [math.sqrt(0.8), math.sqrt(0.2)])
    return state, ApparatusConfig(10.0)


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: tuple[str, ...]
    duration: float


_REGISTRY: dict[int, tuple[str, object]] = {}


def _criterion(number: int, title: str):
    def register(fn):
        _REGISTRY[number] = (title, fn)
        return fn

    return register


def criterion_numbers() -> list[int]:
    return sorted(_REGISTRY)


def run_criteria(numbers=None, workers: int = 1) -> list[CriterionResult]:
    """Execute the requested criteria (all by default) in numeric order."""
    chosen = criterion_numbers() if numbers is None else sorted(set(numbers))
    unknown = [n for n in chosen if n not in _REGISTRY]
    if unknown:
        raise ValueError(f"unknown criteria: {unknown}; "
                         f"valid numbers are {criterion_numbers()}")
    results = []
    for number in chosen:
        title, fn = _REGISTRY[number]
        start = time.perf_counter()
        passed, details = fn(int(workers))
        results.append(CriterionResult(
            number=number, title=title, passed=bool(passed),
            details=tuple(details), duration=time.perf_counter() - start))
    return results


def _check(details: list[str], ok: bool, text: str) -> bool:
    details.append(f"{'ok  ' if ok else 'BAD '}{text}")
    return ok


_FIXED_RUN_CACHE: dict[str, object] = {}


def _fixed_run(workers: int):
    """Shared fixed-length ensemble for criteria 4 and 5 (identical numbers
    for any worker count, so caching across calls is sound)."""
    if "stats" not in _FIXED_RUN_CACHE:
        state, app = reference_system()
        _FIXED_RUN_CACHE["stats"] = run_ensemble(
            state, app, FIXED_RUN_TRAJECTORIES, FIXED_RUN_STEPS,
            master_seed=MASTER_SEED + 4, bins=FIXED_RUN_BINS,
            early_stop=False, workers=workers)
    return _FIXED_RUN_CACHE["stats"]


@_criterion(1, "saturation table reproduces its two-decimal reference targets")
def _saturation_table(workers: int):
    from .cli import main as cli_main

    targets = ((0.5, 0.08), (1.0, 0.43), (2.0, 0.94))
    details: list[str] = []
    ok = True
    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, "saturation.csv")
        code = cli_main(["saturation", "--f-values", "0.5,1,2", "--out", out])
        ok = _check(details, code == 0, f"cmd exit code {code}") and ok
        rows = {}
        with open(out, encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                f_txt, r_txt = line.strip().split(",")
                rows[float(f_txt)] = float(r_txt)
    for f, target in targets:
        value = rows.get(f, math.nan)
        good = abs(value - target) <= 0.005
        ok = _check(details, good,
                    f"f={f}: computed {value:.10f}, target {target} +/- 0.005") and ok
    if not ok:
        details.append("note: the closed form gives 0.9539882943 at f=2; the "
                       "two-decimal target 0.94 is inconsistent with it, so "
                       "this row cannot pass (kept as given)")
    return ok, details


@_criterion(2, "single-reading sampler matches the closed-form moments")
def _sampler_moments(workers: int):
    state, app = reference_system()
    rng = trajectory_stream(MASTER_SEED + 2, 0)
    draws = sample_outcome(state, app, rng, size=100_000)
    mean_target = ensemble_mean(state)
    var_target = outcome_variance(state, app)
    mean_tol = 3.0 * math.sqrt(var_target / draws.size)
    details: list[str] = []
    ok = _check(details, abs(draws.mean() - mean_target) <= mean_tol,
                f"mean {draws.mean():.6f} within {mean_tol:.6f} of {mean_target}")
    var = draws.var(ddof=1)
    ok = _check(details, abs(var - var_target) <= 0.02 * var_target,
                f"variance {var:.4f} within 2% of {var_target}") and ok
    return ok, details


@_criterion(3, "pointer operators resolve the identity under quadrature")
def _povm_completeness(workers: int):
    state, app = reference_system()
    residual = povm_completeness_residual(state.spectrum, app, num_points=8192)
    details: list[str] = []
    ok = _check(details, residual < 1e-8,
                f"max quadrature residual {residual:.3e} < 1e-8 "
                "(8192 trapezoid points)")
    return ok, details


@_criterion(4, "fixed-length ensemble reproduces the bimodal average "
               "distribution")
def _fixed_length_distribution(workers: int):
    stats = _fixed_run(workers)
    details = [f"{stats.trajectories} trajectories x {stats.max_steps} readings, "
               f"{FIXED_RUN_BINS} bins, master seed {stats.master_seed}"]
    ok = _check(details, stats.tv_distance < 0.02,
                f"total variation distance {stats.tv_distance:.5f} < 0.02")
    # even bin count over the symmetric range puts 0 exactly on an edge
    half = FIXED_RUN_BINS // 2
    below = float(stats.counts[:half].sum()) / stats.trajectories
    above = float(stats.counts[half:].sum()) / stats.trajectories
    ok = _check(details, abs(below - 0.2) <= 0.02,
                f"mass below 0: {below:.4f} within 0.2 +/- 0.02") and ok
    ok = _check(details, abs(above - 0.8) <= 0.02,
                f"mass above 0: {above:.4f} within 0.8 +/- 0.02") and ok
    return ok, details


@_criterion(5, "ensemble grand mean pins the Born average")
def _grand_mean(workers: int):
    stats = _fixed_run(workers)
    state, app = reference_system()
    target = ensemble_mean(state)
    tol = 3.0 * statistical_error(app, FIXED_RUN_STEPS) / math.sqrt(
        stats.trajectories)
    dev = abs(stats.mean_average - target)
    details: list[str] = []
    ok = _check(details, dev <= tol,
                f"grand mean {stats.mean_average:.6f}, deviation {dev:.6f} "
                f"within {tol:.6f} of {target}")
    details.append("tolerance counts pointer noise only; the between-lobe "
                   "spread (0.8^2) widens the true standard error to "
                   "0.00831, so the band equals 0.81 sigma")
    return ok, details


@_criterion(6, "decoherence of the averaged final state follows the damping "
               "law")
def _decoherence_law(workers: int):
    state, app = reference_system()
    details: list[str] = []
    ok = True
    for offset, steps in ((61, 10), (62, 100), (63, 1000)):
        stats = run_ensemble(state, app, 5000, steps,
                             master_seed=MASTER_SEED + offset,
                             early_stop=False, workers=workers)
        measured = abs(stats.mean_final_density.entries[0, 1])
        target = abs(expected_reduced_density_after_M(state, app,
                                                      steps).entries[0, 1])
        sem = float(stats.final_density_sem[0, 1])
        good = abs(measured - target) <= 3.0 * sem
        ok = _check(details, good,
                    f"steps={steps}: |offdiag| {measured:.6f}, expected "
                    f"{target:.6f}, band 3 sem = {3 * sem:.6f}") and ok
    return ok, details


@_criterion(7, "trajectories collapse to eigenstates with Born-rule "
               "frequencies")
def _born_rule_termination(workers: int):
    state, app = reference_system()
    stats = run_ensemble(state, app, 2000, 100_000, convergence_tol=1e-6,
                         master_seed=MASTER_SEED + 7, early_stop=True,
                         workers=workers)
    details = [f"mean steps to convergence {stats.mean_steps:.1f}"]
    converged = stats.trajectories - stats.unconverged
    ok = _check(details, converged >= 0.99 * stats.trajectories,
                f"{converged} of {stats.trajectories} trajectories converged")
    weights = state.probabilities
    freqs = stats.terminal_counts / converged
    for idx, w in enumerate(weights):
        sigma = math.sqrt(w * (1.0 - w) / converged)
        good = abs(freqs[idx] - w) <= 3.0 * sigma
        ok = _check(details, good,
                    f"terminal frequency[{idx}] = {freqs[idx]:.4f} within "
                    f"3 sigma = {3 * sigma:.4f} of {w:.4f}") and ok
    expected = weights * converged
    chi_sq = float(np.sum((stats.terminal_counts - expected) ** 2 / expected))
    p_value = float(sps.chi2.sf(chi_sq, weights.size - 1))
    ok = _check(details, p_value > 1e-3,
                f"chi-square {chi_sq:.3f}, p-value {p_value:.4f} > 0.001") and ok
    return ok, details


@_criterion(8, "information-disturbance identity and projective limit hold "
               "exactly")
def _disturbance_identity(workers: int):
    rng = trajectory_stream(MASTER_SEED + 8, 0)
    worst_identity = 0.0
    worst_limit = 0.0
    for _ in range(200):
        dim = int(rng.integers(2, 5))
        vals = np.sort(rng.uniform(-3.0, 3.0, size=dim))
        while np.any(np.diff(vals) < 1e-3):
            vals = np.sort(rng.uniform(-3.0, 3.0, size=dim))
        amps = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        state = PureState.normalized(Spectrum(vals), amps)
        app = ApparatusConfig(float(rng.uniform(1.0, 40.0)))
        steps = int(rng.integers(1, 3000))
        eps = statistical_error(app, steps)
        lhs = 1.0 - overlap_trace(density_from_pure(state),
                                  expected_reduced_density_after_M(state, app,
                                                                   steps))
        worst_identity = max(worst_identity, abs(lhs - disturbance(state, eps)))
        w = state.probabilities
        limit = float(np.sum(w * (1.0 - w)))
        worst_limit = max(worst_limit,
                          abs(disturbance_strong_limit(state) - limit),
                          abs(disturbance(state, 1e-12) - limit))
    details: list[str] = []
    ok = _check(details, worst_identity < 1e-12,
                f"max |(1 - overlap) - disturbance| = {worst_identity:.3e} "
                "< 1e-12 over 200 random systems")
    ok = _check(details, worst_limit < 1e-10,
                f"max deviation from the projective limit {worst_limit:.3e} "
                "< 1e-10") and ok
    return ok, details


def _random_system(rng, dim: int, delta_lo: float, delta_hi: float):
    vals = np.sort(rng.uniform(-3.0, 3.0, size=dim))
    while np.any(np.diff(vals) < 1e-2):
        vals = np.sort(rng.uniform(-3.0, 3.0, size=dim))
    amps = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    state = PureState.normalized(Spectrum(vals), amps)
    return state, ApparatusConfig(float(rng.uniform(delta_lo, delta_hi)))


def _property_rng(tag: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(MASTER_SEED + 9, spawn_key=(tag,)))


@_criterion(9, "randomized structural invariants hold over a thousand cases "
               "each")
def _structural_properties(workers: int):
    cases = 1000
    details: list[str] = []
    ok = True

    rng = _property_rng(0)
    worst = 0.0
    for _ in range(cases):
        dim = int(rng.integers(2, 5))
        state, app = _random_system(rng, dim, 0.3, 10.0)
        idx = int(rng.integers(dim))
        amps = np.zeros(dim, dtype=complex)
        amps[idx] = np.exp(1j * rng.uniform(0.0, 2.0 * math.pi))
        eig = PureState(state.spectrum, amps)
        post = collapse(eig, app, float(rng.normal(0.0, 2.0 * app.delta_p)))
        worst = max(worst, float(np.abs(post.amplitudes - eig.amplitudes).max()))
    ok = _check(details, worst <= 1e-12,
                f"eigenstates are collapse fixed points (max move {worst:.2e})") and ok

    rng = _property_rng(1)
    worst = 0.0
    for _ in range(cases):
        state, app = _random_system(rng, int(rng.integers(2, 5)), 0.3, 10.0)
        post = collapse(state, app, float(rng.normal(0.0, app.delta_p)))
        big = np.abs(state.amplitudes) > 1e-8
        rel = post.amplitudes[big] / state.amplitudes[big]
        worst = max(worst, float(np.abs(np.angle(rel)).max()))
    ok = _check(details, worst <= 1e-12,
                f"collapse preserves relative phases (max shift {worst:.2e} rad)") and ok

    rng = _property_rng(2)
    worst = 0.0
    for _ in range(cases):
        state, app = _random_system(rng, int(rng.integers(2, 5)), 0.5, 10.0)
        p1, p2 = rng.normal(0.0, app.delta_p, size=2)
        joint = joint_density(state, app,
                              OutcomeSequence.from_outcomes([p1, p2]))
        chained = (outcome_density(state, app, float(p1))
                   * outcome_density(collapse(state, app, float(p1)), app,
                                     float(p2)))
        worst = max(worst, abs(joint - chained) / chained)
    ok = _check(details, worst <= 1e-12,
                f"two-reading joint density factors through collapse "
                f"(max rel err {worst:.2e})") and ok

    rng = _property_rng(3)
    worst = 0.0
    for _ in range(cases):
        state, app = _random_system(rng, int(rng.integers(2, 5)), 0.5, 10.0)
        outs = rng.normal(0.0, app.delta_p, size=6)
        a = joint_density(state, app, OutcomeSequence.from_outcomes(outs))
        b = joint_density(state, app,
                          OutcomeSequence.from_outcomes(rng.permutation(outs)))
        worst = max(worst, abs(a - b) / a)
    ok = _check(details, worst <= 1e-12,
                f"joint density is exchangeable (max rel err {worst:.2e})") and ok

    rng = _property_rng(4)
    failures = 0
    for _ in range(cases):
        state, app = _random_system(rng, int(rng.integers(2, 5)), 0.5, 10.0)
        outs = rng.normal(0.0, app.delta_p, size=12)
        a = state_after_sequence(state, app, OutcomeSequence.from_outcomes(outs))
        b = state_after_sequence(state, app,
                                 OutcomeSequence.from_outcomes(
                                     rng.permutation(outs)))
        if not np.array_equal(a.amplitudes, b.amplitudes):
            failures += 1
    ok = _check(details, failures == 0,
                f"record order never changes the final state ({failures} "
                "bitwise mismatches)") and ok

    rng = _property_rng(5)
    worst = 0.0
    for _ in range(cases):
        state, app = _random_system(rng, int(rng.integers(2, 5)), 0.5, 10.0)
        outs = rng.normal(0.0, app.delta_p, size=20)
        direct = state_after_sequence(state, app,
                                      OutcomeSequence.from_outcomes(outs))
        stepped = state
        for p in outs:
            stepped = collapse(stepped, app, float(p))
        worst = max(worst,
                    float(np.abs(direct.amplitudes - stepped.amplitudes).max()))
    ok = _check(details, worst <= 1e-10,
                f"sufficient statistics reproduce iterated collapse "
                f"(max amp diff {worst:.2e})") and ok

    rng = _property_rng(6)
    collapsed = 0
    near = 0
    for _ in range(cases):
        dim = int(rng.integers(2, 5))
        vals = np.sort(rng.uniform(-3.0, 3.0, size=dim))
        while np.any(np.diff(vals) < 0.5):
            vals = np.sort(rng.uniform(-3.0, 3.0, size=dim))
        amps = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        state = PureState.normalized(Spectrum(vals), amps)
        app = ApparatusConfig(1e-3 * state.spectrum.min_gap)
        p = sample_outcome(state, app, rng)
        post = collapse(state, app, p)
        if float(post.probabilities.max()) >= 1.0 - 1e-6:
            collapsed += 1
        nearest = float(np.min(np.abs(state.spectrum.eigenvalues - p)))
        if nearest <= 6.0 * app.outcome_sigma:
            near += 1
    ok = _check(details, collapsed == cases,
                f"narrow pointer projects in one reading ({collapsed}/{cases})") and ok
    ok = _check(details, near == cases,
                f"narrow-pointer readings sit on eigenvalues ({near}/{cases})") and ok

    return ok, details


@_criterion(10, "ensemble statistics are bitwise stable across worker counts")
def _worker_invariance(workers: int):
    from .cli import main as cli_main

    details: list[str] = []
    base = ["ensemble", "--spectrum", "1,-1", "--probabilities", "0.8,0.2",
            "--delta-p", "10", "--trajectories", "240", "--max-steps", "60",
            "--master-seed", str(MASTER_SEED + 10), "--bins", "20",
            "--no-early-stop"]
    payloads = []
    with tempfile.TemporaryDirectory() as tmp:
        for w in (1, 2, 4):
            out = os.path.join(tmp, f"hist_{w}.csv")
            summary = os.path.join(tmp, f"summary_{w}.json")
            code = cli_main(base + ["--workers", str(w), "--out", out,
                                    "--summary", summary])
            if code != 0:
                return False, [f"ensemble run with {w} workers exited {code}"]
            with open(out, "rb") as fh:
                payloads.append(fh.read())
    ok = _check(details, payloads[0] == payloads[1] == payloads[2],
                f"histogram CSV identical for workers 1/2/4 "
                f"({len(payloads[0])} bytes)")

    state, app = reference_system()
    serial = run_ensemble(state, app, 240, 60, master_seed=MASTER_SEED + 10,
                          early_stop=False, bins=20, workers=1)
    parallel = run_ensemble(state, app, 240, 60, master_seed=MASTER_SEED + 10,
                            early_stop=False, bins=20, workers=3)
    same = (np.array_equal(serial.counts, parallel.counts)
            and serial.mean_average == parallel.mean_average
            and serial.tv_distance == parallel.tv_distance
            and np.array_equal(serial.mean_final_density.entries,
                               parallel.mean_final_density.entries))
    ok = _check(details, same,
                "library-level statistics bitwise equal for workers 1 vs 3") and ok
    return ok, details
