"""Black/red/green decomposition of one run and the bad-set estimators.

Walks starting below the length threshold L are black, the others red.  A
black that is relocated onto a red becomes red instantly.  Every red lineage
carries a green shadow that repeats the red's increments but ignores the
selection rule: when the red would be relocated from the origin, the green
simply steps to 0 and keeps drifting on the integers.  Green lineages branch
exactly when a black hits the origin and lands on a red, so green branch
times depend only on the black history, never on green positions.  Until the
first time R0 at which a red hits the origin, the multisets of red and green
positions coincide.

The bad set of a run is the union of three events: a red reaches the origin
by time T; a black accumulates +L of step displacement while black; the
largest green displacement at T exceeds -vT/(2e).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import mc
from .params import Configuration, RngStream, Schedule, WalkParams
from .simulator import BlockSource, suggest_block

BLACK = 0
RED = 1


@dataclass
class ColoredState:
    """Colored configuration at the horizon plus the green shadow population."""

    fv_positions: Configuration
    colors: np.ndarray
    green_positions: np.ndarray   # valid where colors == RED
    green_origins: np.ndarray     # time-0 position of each green lineage
    r0: float | None

    def green_shadows(self) -> list[tuple[int, int, int]]:
        """(label, position, linked_red) triples, one per green lineage."""
        return [(int(l), int(self.green_positions[l]), int(l))
                for l in np.nonzero(self.colors == RED)[0]]

    def red_positions(self) -> np.ndarray:
        return np.sort(self.fv_positions.positions[self.colors == RED])

    def green_sorted(self) -> np.ndarray:
        return np.sort(self.green_positions[self.colors == RED])

    def green_displacements(self) -> np.ndarray:
        mask = self.colors == RED
        return self.green_positions[mask] - self.green_origins[mask]


@dataclass
class BadSetReport:
    horizon: float
    l_threshold: float
    event_red_hits_zero: bool
    event_black_travels_l: bool
    event_green_max_high: bool

    @property
    def bad(self) -> bool:
        return (self.event_red_hits_zero or self.event_black_travels_l
                or self.event_green_max_high)


def simulate_colored(initial: Configuration, params: WalkParams, schedule: Schedule,
                     rng: RngStream | np.random.Generator) -> tuple[ColoredState, BadSetReport]:
    """One colored run to the schedule horizon.

    Consumes the same four draws per event as the plain simulator, so runs
    replay bit for bit.  Initial colors follow the threshold rule (position
    below L is black, at or above L is red; the tie goes to red).
    """
    horizon = schedule.t_horizon
    l_threshold = schedule.l_threshold
    n = initial.n
    p = params.p
    inv_n = 1.0 / n

    pos = initial.positions.tolist()
    color = [BLACK if x < l_threshold else RED for x in pos]
    green = [pos[k] if color[k] == RED else 0 for k in range(n)]
    gorigin = list(green)
    dispb = [0] * n
    r0: float | None = None
    event_black = False

    blocks = BlockSource(rng, n, block=suggest_block(n, horizon))
    t = 0.0
    done = False
    while not done:
        blocks.refill()
        exps = blocks.exps.tolist()
        walks = blocks.walks.tolist()
        us = blocks.us.tolist()
        tgts = blocks.tgts.tolist()
        for i in range(blocks.block):
            tn = t + exps[i] * inv_n
            if tn <= t:
                tn = math.nextafter(t, math.inf)
            if tn > horizon:
                done = True
                break
            t = tn
            w = walks[i]
            cw = color[w]
            if us[i] < p:
                pos[w] += 1
                if cw == RED:
                    green[w] += 1
                else:
                    d = dispb[w] + 1
                    dispb[w] = d
                    if d >= l_threshold:
                        event_black = True
            elif pos[w] == 1:
                j = tgts[i]
                if j >= w:
                    j += 1
                if cw == RED:
                    if r0 is None:
                        r0 = t
                    green[w] -= 1
                    pos[w] = pos[j]
                else:
                    pos[w] = pos[j]
                    if color[j] == RED:
                        color[w] = RED
                        green[w] = green[j]
                        gorigin[w] = gorigin[j]
            else:
                pos[w] -= 1
                if cw == RED:
                    green[w] -= 1
                else:
                    dispb[w] -= 1

    colors = np.array(color, dtype=np.int8)
    state = ColoredState(
        fv_positions=Configuration(np.array(pos, dtype=np.int64)),
        colors=colors,
        green_positions=np.array(green, dtype=np.int64),
        green_origins=np.array(gorigin, dtype=np.int64),
        r0=r0,
    )
    green_thr = -params.v * horizon / (2.0 * math.e)
    has_red = bool((colors == RED).any())
    event_green = bool(has_red and (state.green_displacements() > green_thr).any())
    report = BadSetReport(
        horizon=horizon,
        l_threshold=l_threshold,
        event_red_hits_zero=r0 is not None,
        event_black_travels_l=event_black,
        event_green_max_high=event_green,
    )
    return state, report


# Replica estimators ---------------------------------------------------------------

@dataclass
class EventRateRow:
    event: str
    count: int
    replicas: int
    frequency: float
    ci_low: float
    ci_high: float
    bound: float
    vacuous: bool


@dataclass
class BadSetEstimate:
    rows: list[EventRateRow]       # red, black, green, union
    kappa_t: float

    @property
    def union(self) -> EventRateRow:
        return self.rows[-1]

    @property
    def union_passed(self) -> bool:
        return self.union.vacuous or self.union.ci_high <= self.union.bound

    @property
    def consistent(self) -> bool:
        """Weak check: the data cannot refute the bound (lower CI edge below it)."""
        return self.union.vacuous or self.union.ci_low <= self.union.bound


def _bad_set_counts(initial: Configuration, params: WalkParams, schedule: Schedule,
                    replicas: int, rng: RngStream) -> np.ndarray:
    def one_replica(stream: RngStream) -> np.ndarray:
        _, rep = simulate_colored(initial, params, schedule, stream)
        return np.array([rep.event_red_hits_zero, rep.event_black_travels_l,
                         rep.event_green_max_high, rep.bad], dtype=np.int64)

    return np.sum(mc.replica_map(one_replica, rng, replicas), axis=0)


def estimate_bad_probability(initial: Configuration, params: WalkParams,
                             schedule: Schedule, replicas: int,
                             rng: RngStream) -> BadSetEstimate:
    """Empirical bad-set probability against the 4 exp(-kappa T) bound.

    Also reports the three constituent events against their individual
    bounds (exp(-kappa T) for the red and black events, 2 exp(-kappa T) for
    the green one).  A bound at or above 1 is flagged vacuous.
    """
    if replicas < 1:
        raise ValueError("replicas >= 1 required")
    counts = _bad_set_counts(initial, params, schedule, replicas, rng)
    kt = schedule.kappa * schedule.t_horizon
    base = math.exp(-kt)
    names = ("red_hits_zero", "black_travels_l", "green_max_high", "bad_union")
    bounds = (base, base, 2.0 * base, 4.0 * base)
    rows = []
    for name, cnt, bnd in zip(names, counts, bounds):
        freq, lo, hi = mc.wilson_interval(int(cnt), replicas)
        rows.append(EventRateRow(event=name, count=int(cnt), replicas=replicas,
                                 frequency=freq, ci_low=lo, ci_high=hi,
                                 bound=bnd, vacuous=bnd >= 1.0))
    return BadSetEstimate(rows=rows, kappa_t=kt)


def estimate_event_rates(initial: Configuration, params: WalkParams,
                         schedule: Schedule, replicas: int,
                         rng: RngStream) -> BadSetEstimate:
    """Per-event frequencies with their individual bounds (same run data)."""
    return estimate_bad_probability(initial, params, schedule, replicas, rng)


# Green displacement law -----------------------------------------------------------

def compound_displacements(params: WalkParams, horizon: float, count: int,
                           gen: np.random.Generator) -> np.ndarray:
    """Independent net displacements over [0, T]: K ~ Poisson(T) signed steps."""
    k = gen.poisson(horizon, size=count)
    return 2 * gen.binomial(k, params.p) - k


def segmented_displacement(params: WalkParams, horizon: float, break_times,
                           gen: np.random.Generator) -> int:
    """Displacement accumulated over the segments cut by ``break_times``.

    Mirrors a green lineage with forced branch times: fresh increments per
    segment; the total jump count is Poisson(T) regardless of the cuts.
    """
    edges = [0.0, *sorted(float(b) for b in break_times), horizon]
    total = 0
    for a, b in zip(edges[:-1], edges[1:]):
        k = int(gen.poisson(b - a))
        total += int(2 * gen.binomial(k, params.p) - k)
    return total


def mixed_initial(schedule: Schedule, low: int = 1, high: int | None = None) -> Configuration:
    """Half the walks at ``low`` (black), half at ``high`` (red, default 2L)."""
    n = schedule.n_walks
    if high is None:
        high = int(math.ceil(2.0 * schedule.l_threshold))
    arr = np.full(n, high, dtype=np.int64)
    arr[: n // 2] = low
    return Configuration(arr)


@dataclass
class GreenIdentityReport:
    ks_statistic: float
    p_value: float
    mean: mc.MeanCI
    expected_mean: float
    branch_counts: np.ndarray
    passed: bool


def check_green_identity(params: WalkParams, schedule: Schedule, replicas: int,
                         rng: RngStream, *, initial: Configuration | None = None,
                         p_threshold: float = 0.01) -> GreenIdentityReport:
    """Law of a tracked green lineage displacement versus a fresh compound
    Poisson walk over the same horizon (two-sample KS).

    Per replica one green lineage alive at T is chosen uniformly (an extra
    draw from the replica stream, independent of displacements) and its
    displacement S_v(T) - S_v(0) recorded; the reference sample is drawn
    from an unrelated stream.
    """
    horizon = schedule.t_horizon
    config0 = initial if initial is not None else mixed_initial(schedule)

    def one_replica(stream: RngStream) -> tuple[int, int]:
        gen = stream.generator()
        state, _ = simulate_colored(config0, params, schedule, gen)
        labels = np.nonzero(state.colors == RED)[0]
        if labels.size == 0:
            raise ValueError("no green lineage alive at the horizon; "
                             "start at least one walk at or above L")
        pick = labels[int(gen.integers(0, labels.size))]
        disp = int(state.green_positions[pick] - state.green_origins[pick])
        n_branched = int((state.colors == RED).sum() - (config0.positions >= schedule.l_threshold).sum())
        return disp, n_branched

    pairs = mc.replica_map(one_replica, rng, replicas)
    tracked = np.array([d for d, _ in pairs], dtype=np.float64)
    branches = np.array([b for _, b in pairs], dtype=np.int64)
    reference = compound_displacements(
        params, horizon, replicas, rng.substream(replicas + 1).generator()).astype(np.float64)
    ks = stats.ks_2samp(tracked, reference)
    mean = mc.mean_ci(tracked)
    expected = -params.v * horizon
    ok = ks.pvalue > p_threshold and abs(mean.mean - expected) <= 3.0 * mean.se
    return GreenIdentityReport(
        ks_statistic=float(ks.statistic), p_value=float(ks.pvalue), mean=mean,
        expected_mean=expected, branch_counts=branches, passed=bool(ok))
