"""Exact event-driven simulation of the N-walk system with selection at the origin.

One aggregate exponential clock of rate N drives the dynamics (each walk jumps
at unit rate): per event, a walk is chosen uniformly, steps +1 with
probability p else -1, and a -1 step from site 1 is resolved atomically by
relocating the walk to the position of a uniformly chosen other walk, so site
0 is never observable.

Two kernels implement the identical event loop over pre-drawn random blocks:
a numba-jitted one (the default, releases the GIL) and a pure-Python
reference.  Both consume exactly four draws per event from the same Philox
stream, so their trajectories and event digests agree bit for bit; the test
suite relies on that.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .params import Configuration, RngStream, Schedule, WalkParams, all_at

BLOCK = 1 << 16
MASK64 = (1 << 64) - 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

STEP_RIGHT = 0
STEP_LEFT = 1
SELECTION_JUMP = 2
KIND_NAMES = {STEP_RIGHT: "step_right", STEP_LEFT: "step_left", SELECTION_JUMP: "selection_jump"}


def suggest_block(n_walks: int, horizon: float) -> int:
    """Block size covering an n_walks * horizon run in about one refill."""
    expected = n_walks * max(horizon, 1.0)
    return int(min(BLOCK, max(256, expected * 1.15 + 10.0 * math.sqrt(expected) + 64)))


@dataclass(frozen=True)
class Event:
    time: float
    walk_id: int
    kind: int
    target_id: int | None

    @property
    def kind_name(self) -> str:
        return KIND_NAMES[self.kind]


@dataclass
class EventLog:
    """Per-event record (optional) plus an always-computed FNV-1a digest."""

    times: np.ndarray
    walk_ids: np.ndarray
    kinds: np.ndarray
    target_ids: np.ndarray
    digest: int
    recorded: bool

    def __len__(self) -> int:
        return self.times.shape[0]

    def events(self) -> list[Event]:
        return [
            Event(float(t), int(w), int(k), int(g) if g >= 0 else None)
            for t, w, k, g in zip(self.times, self.walk_ids, self.kinds, self.target_ids)
        ]


@dataclass
class TrajectoryStats:
    """Right-continuous path of the running maximum plus per-walk jump tallies."""

    max_times: np.ndarray
    max_values: np.ndarray
    jump_counts: np.ndarray
    wall_time: float

    def max_at_end(self) -> int:
        return int(self.max_values[-1])


@dataclass
class StationarySample:
    """Configuration snapshots taken every ``thinning`` time units after burn-in."""

    snapshots: np.ndarray  # shape (n_samples, n_walks)
    burn_in: float
    thinning: float

    @property
    def n_samples(self) -> int:
        return self.snapshots.shape[0]

    def maxima(self) -> np.ndarray:
        return self.snapshots.max(axis=1)


class BlockSource:
    """Aligned blocks of (exponential, walk, uniform, target) draws.

    Every event consumes one slot of each array regardless of whether the
    target draw is used; a fixed consumption rule is what makes replay exact.
    """

    def __init__(self, rng: RngStream | np.random.Generator, n_walks: int, block: int = BLOCK):
        self.gen = rng.generator() if isinstance(rng, RngStream) else rng
        self.n = n_walks
        self.block = block
        self.i = block  # force initial refill

    def refill(self) -> None:
        self.exps = self.gen.standard_exponential(self.block)
        self.walks = self.gen.integers(0, self.n, self.block, dtype=np.int64)
        self.us = self.gen.random(self.block)
        self.tgts = self.gen.integers(0, self.n - 1, self.block, dtype=np.int64)
        self.i = 0


_NUMBA_KERNEL = None
_NUMBA_FAILED = False


def _get_numba_kernel():
    global _NUMBA_KERNEL, _NUMBA_FAILED
    if _NUMBA_KERNEL is not None or _NUMBA_FAILED:
        return _NUMBA_KERNEL
    try:
        from numba import njit
    except ImportError:
        _NUMBA_FAILED = True
        return None

    @njit(cache=True, nogil=True)
    def kernel(pos, t, t_end, p, inv_n, exps, walks, us, tgts, i0,
               jump_counts, rec_t, rec_v, record_max, cur_max, digest):
        n = pos.shape[0]
        b = exps.shape[0]
        i = i0
        n_rec = 0
        prime = np.uint64(0x100000001B3)
        while i < b:
            tn = t + exps[i] * inv_n
            if tn <= t:
                tn = np.nextafter(t, np.inf)
            if tn > t_end:
                return i, t, n_rec, cur_max, digest, True
            t = tn
            w = walks[i]
            if us[i] < p:
                new = pos[w] + 1
                pos[w] = new
                kind = 0
                if new > cur_max:
                    cur_max = new
                    if record_max:
                        rec_t[n_rec] = t
                        rec_v[n_rec] = cur_max
                        n_rec += 1
            elif pos[w] == 1:
                j = tgts[i]
                if j >= w:
                    j += 1
                new = pos[j]
                pos[w] = new
                kind = 2
                if new > cur_max:
                    cur_max = new
                    if record_max:
                        rec_t[n_rec] = t
                        rec_v[n_rec] = cur_max
                        n_rec += 1
            else:
                old = pos[w]
                new = old - 1
                pos[w] = new
                kind = 1
                if old == cur_max:
                    m = pos[0]
                    for a in range(1, n):
                        if pos[a] > m:
                            m = pos[a]
                    if m != cur_max:
                        cur_max = m
                        if record_max:
                            rec_t[n_rec] = t
                            rec_v[n_rec] = cur_max
                            n_rec += 1
            jump_counts[w] += 1
            digest = (digest ^ np.uint64(w)) * prime
            digest = (digest ^ np.uint64(kind)) * prime
            digest = (digest ^ np.uint64(new)) * prime
            i += 1
        return i, t, n_rec, cur_max, digest, False

    _NUMBA_KERNEL = kernel
    return _NUMBA_KERNEL


def _kernel_python(pos, t, t_end, p, inv_n, exps, walks, us, tgts, i0,
                   jump_counts, rec_t, rec_v, record_max, cur_max, digest,
                   events=None, selection=True):
    """Reference event loop; bit-identical to the jitted kernel.

    ``events`` (list) turns on full event recording; ``selection=False``
    disables the relocation rule so walks behave freely on the integers
    (test harness only).
    """
    n = pos.shape[0]
    b = exps.shape[0]
    i = i0
    n_rec = 0
    digest = int(digest)
    while i < b:
        tn = t + exps[i] * inv_n
        if tn <= t:
            tn = math.nextafter(t, math.inf)
        if tn > t_end:
            return i, t, n_rec, cur_max, np.uint64(digest), True
        t = tn
        w = int(walks[i])
        tgt = -1
        if us[i] < p:
            new = pos[w] + 1
            pos[w] = new
            kind = STEP_RIGHT
            if new > cur_max:
                cur_max = new
                if record_max:
                    rec_t[n_rec] = t
                    rec_v[n_rec] = cur_max
                    n_rec += 1
        elif selection and pos[w] == 1:
            j = int(tgts[i])
            if j >= w:
                j += 1
            new = pos[j]
            pos[w] = new
            kind = SELECTION_JUMP
            tgt = j
            if new > cur_max:
                cur_max = new
                if record_max:
                    rec_t[n_rec] = t
                    rec_v[n_rec] = cur_max
                    n_rec += 1
        else:
            old = pos[w]
            new = old - 1
            pos[w] = new
            kind = STEP_LEFT
            if old == cur_max:
                m = int(pos.max())
                if m != cur_max:
                    cur_max = m
                    if record_max:
                        rec_t[n_rec] = t
                        rec_v[n_rec] = cur_max
                        n_rec += 1
        jump_counts[w] += 1
        digest = ((digest ^ w) * FNV_PRIME) & MASK64
        digest = ((digest ^ kind) * FNV_PRIME) & MASK64
        digest = ((digest ^ int(new)) * FNV_PRIME) & MASK64
        if events is not None:
            events.append((t, w, kind, tgt))
        i += 1
    return i, t, n_rec, cur_max, np.uint64(digest), False


class FvRun:
    """Resumable simulation state: advance the same trajectory to successive times."""

    def __init__(self, config: Configuration, params: WalkParams,
                 rng: RngStream | np.random.Generator, backend: str = "auto",
                 record_events: bool = False, block_size: int | None = None):
        if backend not in ("auto", "numba", "python"):
            raise ValueError(f"unknown backend {backend!r}")
        if backend == "auto":
            backend = "numba" if _get_numba_kernel() is not None else "python"
        if backend == "numba" and _get_numba_kernel() is None:
            raise RuntimeError("numba backend requested but numba is unavailable")
        if record_events and backend == "numba":
            backend = "python"  # full event recording lives in the reference loop
        self.backend = backend
        self.params = params
        self.pos = config.positions.copy()
        self.t = 0.0
        self.cur_max = int(self.pos.max())
        self.digest = np.uint64(FNV_OFFSET)
        self.jump_counts = np.zeros(self.pos.shape[0], dtype=np.int64)
        block = block_size or BLOCK
        self.blocks = BlockSource(rng, self.pos.shape[0], block=block)
        self.events: list | None = [] if record_events else None
        self._rec_t = np.empty(block)
        self._rec_v = np.empty(block, dtype=np.int64)
        self.max_times: list[float] = [0.0]
        self.max_values: list[int] = [self.cur_max]
        self.n_events = 0

    def advance(self, t_end: float, record_max: bool = True) -> None:
        """Process all events with time <= t_end."""
        inv_n = 1.0 / self.pos.shape[0]
        blocks = self.blocks
        kernel = _get_numba_kernel() if self.backend == "numba" else None
        while True:
            if blocks.i >= blocks.block:
                blocks.refill()
            i0 = blocks.i
            if kernel is not None:
                i, t, n_rec, cur_max, digest, done = kernel(
                    self.pos, self.t, t_end, self.params.p, inv_n,
                    blocks.exps, blocks.walks, blocks.us, blocks.tgts, i0,
                    self.jump_counts, self._rec_t, self._rec_v, record_max,
                    self.cur_max, self.digest)
            else:
                i, t, n_rec, cur_max, digest, done = _kernel_python(
                    self.pos, self.t, t_end, self.params.p, inv_n,
                    blocks.exps, blocks.walks, blocks.us, blocks.tgts, i0,
                    self.jump_counts, self._rec_t, self._rec_v, record_max,
                    self.cur_max, self.digest, events=self.events)
            self.n_events += i - i0
            blocks.i = i
            self.t = t
            self.cur_max = int(cur_max)
            self.digest = np.uint64(digest)  # numba unboxes uint64 to a python int
            if record_max and n_rec:
                self.max_times.extend(self._rec_t[:n_rec].tolist())
                self.max_values.extend(self._rec_v[:n_rec].tolist())
            if done:
                return

    def configuration(self) -> Configuration:
        return Configuration(self.pos.copy())

    def event_log(self) -> EventLog:
        if self.events is None:
            empty = np.empty(0)
            return EventLog(empty, empty.astype(np.int64), empty.astype(np.int64),
                            empty.astype(np.int64), int(self.digest), recorded=False)
        times = np.array([e[0] for e in self.events])
        walks = np.array([e[1] for e in self.events], dtype=np.int64)
        kinds = np.array([e[2] for e in self.events], dtype=np.int64)
        tgts = np.array([e[3] for e in self.events], dtype=np.int64)
        return EventLog(times, walks, kinds, tgts, int(self.digest), recorded=True)


def step(config: Configuration, params: WalkParams,
         rng: RngStream | np.random.Generator) -> tuple[Configuration, Event]:
    """Advance one event and return the new configuration plus the event.

    Consumes exactly four draws (waiting time, walk, direction, target) so
    repeated calls on one generator replay deterministically.  ``Event.time``
    holds the waiting time of this event.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    n = config.n
    dt = float(gen.standard_exponential()) / n
    w = int(gen.integers(0, n))
    u = float(gen.random())
    g = int(gen.integers(0, n - 1))
    new = config.positions.copy()
    tgt: int | None = None
    if u < params.p:
        new[w] += 1
        kind = STEP_RIGHT
    elif new[w] == 1:
        j = g + 1 if g >= w else g
        new[w] = new[j]
        kind = SELECTION_JUMP
        tgt = j
    else:
        new[w] -= 1
        kind = STEP_LEFT
    return Configuration(new), Event(time=dt, walk_id=w, kind=kind, target_id=tgt)


def simulate(config: Configuration, params: WalkParams, horizon: float,
             rng: RngStream | np.random.Generator, *, backend: str = "auto",
             record_events: bool = False) -> tuple[Configuration, TrajectoryStats, EventLog]:
    """Exact simulation of the interacting walks up to ``horizon``."""
    if not (horizon > 0.0):
        raise ValueError(f"horizon must be positive, got {horizon}")
    t0 = time.perf_counter()
    run = FvRun(config, params, rng, backend=backend, record_events=record_events,
                block_size=suggest_block(config.n, horizon))
    run.advance(horizon)
    stats = TrajectoryStats(
        max_times=np.array(run.max_times),
        max_values=np.array(run.max_values, dtype=np.int64),
        jump_counts=run.jump_counts,
        wall_time=time.perf_counter() - t0,
    )
    return run.configuration(), stats, run.event_log()


def sample_stationary(params: WalkParams, schedule: Schedule, burn_in_multiplier: float,
                      n_samples: int, rng: RngStream | np.random.Generator, *,
                      initial: Configuration | None = None,
                      backend: str = "auto") -> StationarySample:
    """Snapshots of one long run: burn in for ``burn_in_multiplier * T``, then
    record ``n_samples`` configurations spaced ``T`` apart."""
    if n_samples < 1:
        raise ValueError(f"n_samples >= 1 required, got {n_samples}")
    if burn_in_multiplier < 0:
        raise ValueError("burn_in_multiplier must be >= 0")
    t_horizon = schedule.t_horizon
    config = initial if initial is not None else all_at(schedule.n_walks, 1)
    if config.n != schedule.n_walks:
        raise ValueError("initial configuration size does not match schedule.n_walks")
    run = FvRun(config, params, rng, backend=backend)
    burn_in = burn_in_multiplier * t_horizon
    run.advance(burn_in, record_max=False)
    snaps = np.empty((n_samples, schedule.n_walks), dtype=np.int64)
    for k in range(1, n_samples + 1):
        run.advance(burn_in + k * t_horizon, record_max=False)
        snaps[k - 1] = run.pos
    return StationarySample(snapshots=snaps, burn_in=burn_in, thinning=t_horizon)


def empirical_measure(sample: StationarySample) -> dict[int, float]:
    """Pooled position histogram over all walks and snapshots, total mass 1."""
    if sample.snapshots.size == 0:
        raise ValueError("empty sample")
    values, counts = np.unique(sample.snapshots, return_counts=True)
    total = counts.sum()
    return {int(v): float(c) / total for v, c in zip(values, counts)}


def free_walk_displacements(n_walks: int, params: WalkParams, horizon: float,
                            rng: RngStream | np.random.Generator) -> np.ndarray:
    """Displacements of ``n_walks`` walks with the selection rule disabled.

    Test harness only: exercises the reference event loop on the free walk,
    whose displacement over [0, T] has mean -v T per walk.
    """
    start = 10 ** 6  # far from the origin so positions stay positive-typed
    pos = np.full(n_walks, start, dtype=np.int64)
    block = suggest_block(n_walks, horizon)
    blocks = BlockSource(rng, n_walks, block=block)
    jump_counts = np.zeros(n_walks, dtype=np.int64)
    rec_t = np.empty(block)
    rec_v = np.empty(block, dtype=np.int64)
    t = 0.0
    cur_max = start
    digest = np.uint64(FNV_OFFSET)
    inv_n = 1.0 / n_walks
    while True:
        if blocks.i >= blocks.block:
            blocks.refill()
        i, t, _, cur_max, digest, done = _kernel_python(
            pos, t, horizon, params.p, inv_n,
            blocks.exps, blocks.walks, blocks.us, blocks.tgts, blocks.i,
            jump_counts, rec_t, rec_v, False, cur_max, digest, selection=False)
        blocks.i = i
        if done:
            return pos - start
