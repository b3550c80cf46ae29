"""Multitype branching population that dominates the interacting-walk system.

Each of the N types carries an exponential clock of intensity q with marks
uniform over the other N-1 labels.  When clock i rings with mark j, every
individual of type j splits into a type-i and a type-j child at the parent's
position; children move as independent drifted walks on the integers, with no
origin constraint.  The population mean is |D_0| exp(qT).

Branching times depend only on the clock stream, never on positions.  The
tail check exploits that: a replica first simulates the clock skeleton alone,
then resolves the displacement exceedance indicator either by a certified
union-bound screen (when the event is provably below resolution) or by exact
backward recursion over the skeleton followed by one Bernoulli draw.  Both
routes sample the same indicator law as brute force, which the test suite
verifies against full simulation at small horizons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import mc
from .params import RngStream, Schedule, WalkParams
from .rates import displacement_chernoff_bound, walk_increment_pmf

POPULATION_CAP = 10 ** 6
SCREEN_EPS = 1e-12


@dataclass
class BranchingPopulation:
    """Flat record of every individual ever alive; ids are array indices."""

    type_: np.ndarray
    position: np.ndarray
    birth_time: np.ndarray
    parent: np.ndarray          # -1 for the initial individuals
    origin: np.ndarray          # time-0 position of the lineage root
    segment_jumps: np.ndarray   # jumps made by this individual itself
    lineage_jumps: np.ndarray   # jumps accumulated along the whole lineage
    alive: np.ndarray
    horizon: float
    branch_events: list[tuple[float, int, int]]  # clock realisations (time, i, j)
    cap_exceeded: bool = False

    @property
    def size(self) -> int:
        return self.type_.shape[0]

    @property
    def alive_count(self) -> int:
        return int(self.alive.sum())

    def displacements(self) -> np.ndarray:
        """S_v(T) - S_v(0) for every individual alive at the horizon."""
        m = self.alive
        return self.position[m] - self.origin[m]


def simulate_branching(n_types: int, params: WalkParams, horizon: float,
                       rng: RngStream, *, population_cap: int = POPULATION_CAP,
                       initial_positions: np.ndarray | None = None,
                       clock_rate: float | None = None,
                       clock_rng: np.random.Generator | None = None,
                       increment_rng: np.random.Generator | None = None) -> BranchingPopulation:
    """Exact simulation of the multitype branching process up to ``horizon``.

    Positions are updated lazily (only branching cohorts and the final sweep
    draw increments), which is exact because increments are independent of
    the clocks.  ``clock_rate`` overrides the branching intensity q for
    sanity tests only.  Raises if the expected final population exceeds
    ``population_cap``; if the realised population overshoots the cap the
    run aborts with ``cap_exceeded=True`` and partial state.
    """
    if n_types < 2:
        raise ValueError(f"n_types >= 2 required, got {n_types}")
    if horizon < 0.0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    q = params.q if clock_rate is None else clock_rate
    expected = n_types * math.exp(q * horizon)
    if expected > population_cap:
        raise ValueError(
            f"expected population {expected:.3g} exceeds cap {population_cap}; "
            f"shorten the horizon or raise population_cap")
    if clock_rng is None or increment_rng is None:
        g1, g2 = _generator_pair(rng)
        clock_rng = clock_rng or g1
        increment_rng = increment_rng or g2

    if initial_positions is None:
        initial_positions = np.zeros(n_types, dtype=np.int64)
    else:
        initial_positions = np.asarray(initial_positions, dtype=np.int64)
        if initial_positions.shape != (n_types,):
            raise ValueError("initial_positions must have one entry per type")

    type_ = list(range(n_types))
    position = list(initial_positions)
    birth = [0.0] * n_types
    parent = [-1] * n_types
    origin = list(initial_positions)
    seg_jumps = [0] * n_types
    lin_jumps = [0] * n_types
    alive = [True] * n_types
    last_update = [0.0] * n_types
    by_type: list[list[int]] = [[k] for k in range(n_types)]
    branch_events: list[tuple[float, int, int]] = []
    cap_exceeded = False

    def advance(ids: list[int], to_t: float) -> None:
        if not ids:
            return
        dts = np.array([to_t - last_update[k] for k in ids])
        ks = increment_rng.poisson(dts)
        rs = increment_rng.binomial(ks, params.p)
        for k, kk, rr in zip(ids, ks, rs):
            position[k] += int(2 * rr - kk)
            seg_jumps[k] += int(kk)
            lin_jumps[k] += int(kk)
            last_update[k] = to_t

    t = 0.0
    n_alive = n_types
    while q > 0.0:
        t += clock_rng.exponential(1.0 / (n_types * q))
        if t > horizon:
            break
        i = int(clock_rng.integers(0, n_types))
        j = int(clock_rng.integers(0, n_types - 1))
        if j >= i:
            j += 1
        branch_events.append((t, i, j))
        cohort = by_type[j]
        if not cohort:
            continue
        if n_alive + len(cohort) > population_cap:
            cap_exceeded = True
            break
        advance(cohort, t)
        new_i: list[int] = []
        new_j: list[int] = []
        for par in cohort:
            alive[par] = False
            for child_type, bucket in ((i, new_i), (j, new_j)):
                idx = len(type_)
                type_.append(child_type)
                position.append(position[par])
                birth.append(t)
                parent.append(par)
                origin.append(origin[par])
                seg_jumps.append(0)
                lin_jumps.append(lin_jumps[par])
                last_update.append(t)
                alive.append(True)
                bucket.append(idx)
        by_type[j] = new_j
        by_type[i] = by_type[i] + new_i
        n_alive += len(cohort)

    if not cap_exceeded:
        advance([k for k in range(len(alive)) if alive[k]], horizon)

    return BranchingPopulation(
        type_=np.array(type_, dtype=np.int64),
        position=np.array(position, dtype=np.int64),
        birth_time=np.array(birth),
        parent=np.array(parent, dtype=np.int64),
        origin=np.array(origin, dtype=np.int64),
        segment_jumps=np.array(seg_jumps, dtype=np.int64),
        lineage_jumps=np.array(lin_jumps, dtype=np.int64),
        alive=np.array(alive, dtype=bool),
        horizon=horizon,
        branch_events=branch_events,
        cap_exceeded=cap_exceeded,
    )


def _generator_pair(rng: RngStream) -> tuple[np.random.Generator, np.random.Generator]:
    ss = np.random.SeedSequence(entropy=rng.seed, spawn_key=(rng.stream_id,))
    c1, c2 = ss.spawn(2)
    return (np.random.Generator(np.random.Philox(c1)),
            np.random.Generator(np.random.Philox(c2)))


# Clock skeleton ------------------------------------------------------------------

@dataclass
class Skeleton:
    """Branch events of one replica: strictly increasing times with (clock, mark)."""

    times: np.ndarray
    clocks: np.ndarray
    marks: np.ndarray
    final_counts: np.ndarray  # per-type population at the horizon (float64)

    @property
    def final_population(self) -> float:
        return float(self.final_counts.sum())


def simulate_skeleton(n_types: int, q: float, horizon: float,
                      gen: np.random.Generator) -> Skeleton:
    """Clocks only: event times, (i, j) labels, and the deterministic counts."""
    rate = n_types * q
    want = int(rate * horizon + 10.0 * math.sqrt(rate * horizon) + 20.0)
    times = np.empty(0)
    while not (times.size and times[-1] > horizon):
        offset = times[-1] if times.size else 0.0
        batch = offset + np.cumsum(gen.exponential(1.0 / rate, size=want))
        times = np.concatenate([times, batch])
        want *= 2
    count = int(np.searchsorted(times, horizon, side="right"))
    times = times[:count]
    clocks = gen.integers(0, n_types, size=count)
    marks = gen.integers(0, n_types - 1, size=count)
    marks = np.where(marks >= clocks, marks + 1, marks)
    counts = np.ones(n_types)
    for i, j in zip(clocks, marks):
        counts[i] += counts[j]
    return Skeleton(times=times, clocks=clocks, marks=marks, final_counts=counts)


def tail_no_exceed_prob(n_types: int, p: float, horizon: float, skeleton: Skeleton,
                        threshold: int) -> float:
    """P(every leaf displacement < threshold | clock skeleton), exactly.

    Backward recursion over the skeleton: per type, F(y) is the probability
    that all leaf displacements of one individual's subtree stay <= y,
    relative to the individual's current position.  Between materialisations
    F is convolved with the free-walk displacement law; at an event (i, j)
    the type-j function becomes the product F_i * F_j (both children start
    at the parent's position).  The grid is wide enough that the clipped
    tails are below double precision.
    """
    width = int(math.ceil(horizon + 24.0 * math.sqrt(horizon) + 30.0))
    lo = threshold - 1 - width
    size = 2 * width + 1
    grid0 = np.arange(lo, lo + size)
    step = (grid0 >= 0).astype(np.float64)
    funcs = [step.copy() for _ in range(n_types)]
    pending = [horizon] * n_types

    def materialize(tau: int, t: float) -> None:
        d = pending[tau] - t
        pending[tau] = t
        if d <= 0.0:
            return
        pmf, kmax = walk_increment_pmf(d, p)
        padded = np.concatenate([np.zeros(kmax), funcs[tau], np.ones(kmax)])
        funcs[tau] = np.convolve(pmf, padded)[2 * kmax: 2 * kmax + size]

    for idx in range(skeleton.times.size - 1, -1, -1):
        t = float(skeleton.times[idx])
        i = int(skeleton.clocks[idx])
        j = int(skeleton.marks[idx])
        materialize(i, t)
        materialize(j, t)
        funcs[j] = funcs[i] * funcs[j]
    prob = 1.0
    at = threshold - 1 - lo
    for tau in range(n_types):
        materialize(tau, 0.0)
        prob *= float(funcs[tau][at])
    return min(max(prob, 0.0), 1.0)


# Lemma checks --------------------------------------------------------------------

@dataclass
class TailRow:
    chi: float
    threshold: int
    exceedances: int
    replicas: int
    frequency: float
    ci_low: float
    ci_high: float
    bound: float
    conclusive: bool
    passed: bool


@dataclass
class TailReport:
    horizon: float
    n_types: int
    rows: list[TailRow]

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows if r.conclusive)


def _exceed_threshold(horizon: float, chi: float) -> int:
    """Smallest integer displacement strictly above e*T + chi."""
    x = math.e * horizon + chi
    return math.floor(x) + 1


def check_tail_lemma(n_types: int, params: WalkParams, schedule: Schedule | None,
                     chi_grid, replicas: int, rng: RngStream, *,
                     horizon: float | None = None,
                     screen_eps: float = SCREEN_EPS) -> TailReport:
    """Empirical exceedance of the max branching displacement beyond e*T + chi.

    Per replica and chi the exceedance indicator is sampled exactly: the
    union bound population * P(one lineage exceeds) certifies an all-clear
    below ``screen_eps`` (Chernoff), otherwise the skeleton recursion gives
    the conditional exceedance probability and one uniform resolves the
    indicator.  Upper Wilson confidence limits are compared against the
    exp(-chi) bound; a row whose bound is below the resolution of the
    replica budget is reported inconclusive rather than failed.
    """
    if schedule is None and horizon is None:
        raise ValueError("need a schedule or an explicit horizon")
    t_horizon = float(horizon if horizon is not None else schedule.t_horizon)
    chis = [float(c) for c in chi_grid]
    thresholds = [_exceed_threshold(t_horizon, c) for c in chis]
    lineage_tail = {
        thr: displacement_chernoff_bound(float(thr), t_horizon, params) for thr in thresholds
    }

    def one_replica(stream: RngStream) -> np.ndarray:
        gen = stream.generator()
        skel = simulate_skeleton(n_types, params.q, t_horizon, gen)
        pop = skel.final_population
        out = np.zeros(len(chis), dtype=np.int64)
        for c, thr in enumerate(thresholds):
            u = gen.random()
            if pop * lineage_tail[thr] < screen_eps:
                continue
            prob = 1.0 - tail_no_exceed_prob(n_types, params.p, t_horizon, skel, thr)
            if u < prob:
                out[c] = 1
        return out

    counts = np.sum(mc.replica_map(one_replica, rng, replicas), axis=0)
    rows = []
    for c, chi in enumerate(chis):
        bound = math.exp(-chi)
        freq, lo, hi = mc.wilson_interval(int(counts[c]), replicas)
        _, _, floor_hi = mc.wilson_interval(0, replicas)
        conclusive = floor_hi <= bound
        rows.append(TailRow(
            chi=chi, threshold=thresholds[c], exceedances=int(counts[c]),
            replicas=replicas, frequency=freq, ci_low=lo, ci_high=hi,
            bound=bound, conclusive=conclusive, passed=hi <= bound))
    return TailReport(horizon=t_horizon, n_types=n_types, rows=rows)


@dataclass
class ExpMomentReport:
    delta: float
    horizon: float
    estimate: mc.MeanCI
    bound: float
    passed: bool


def check_exp_moment_lemma(n_types: int, params: WalkParams, schedule: Schedule,
                           delta: float, replicas: int, rng: RngStream, *,
                           initial=None, backend: str = "auto") -> ExpMomentReport:
    """Monte-Carlo E[exp(delta (M_T - M_0))] for the interacting walks versus
    the branching-domination bound exp(delta e T) / (1 - delta).

    Requires (1 - q) T > log(N) (the regime where the domination argument
    closes) and 0 < delta < 1.
    """
    from .params import all_at
    from .simulator import FvRun

    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    t_horizon = schedule.t_horizon
    if params.p * t_horizon <= math.log(n_types):
        raise ValueError(
            f"(1-q) T = {params.p * t_horizon:.4g} must exceed log(N) = {math.log(n_types):.4g}")
    config0 = initial if initial is not None else all_at(n_types, 1)
    m0 = config0.max

    from .simulator import suggest_block
    block = suggest_block(n_types, t_horizon)

    def one_replica(stream: RngStream) -> float:
        run = FvRun(config0, params, stream, backend=backend, block_size=block)
        run.advance(t_horizon, record_max=False)
        return math.exp(delta * (int(run.pos.max()) - m0))

    values = np.array(mc.replica_map(one_replica, rng, replicas))
    est = mc.mean_ci(values)
    bound = math.exp(delta * math.e * t_horizon) / (1.0 - delta)
    return ExpMomentReport(delta=delta, horizon=t_horizon, estimate=est,
                           bound=bound, passed=est.hi <= bound)


def branching_max_displacements(n_types: int, params: WalkParams, horizon: float,
                                replicas: int, rng: RngStream, *,
                                population_cap: int = POPULATION_CAP) -> np.ndarray:
    """Max leaf displacement per replica from full simulation (small horizons)."""
    def one_replica(stream: RngStream) -> float:
        pop = simulate_branching(n_types, params, horizon, stream,
                                 population_cap=population_cap)
        return float(pop.displacements().max())

    return np.array(mc.replica_map(one_replica, rng, replicas))


def population_sizes(n_types: int, params: WalkParams, horizon: float,
                     replicas: int, rng: RngStream, *,
                     population_cap: int = POPULATION_CAP) -> np.ndarray:
    """|D_T| per replica; the mean target is n_types * exp(q * horizon)."""
    def one_replica(stream: RngStream) -> float:
        pop = simulate_branching(n_types, params, horizon, stream,
                                 population_cap=population_cap)
        return float(pop.alive_count)

    return np.array(mc.replica_map(one_replica, rng, replicas))
