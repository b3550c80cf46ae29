import math

import numpy as np
import pytest
from scipy import stats

from fvlab.params import Configuration, RngStream, all_at, make_schedule, validate_params
from fvlab.simulator import (SELECTION_JUMP, STEP_LEFT, STEP_RIGHT, FvRun, StationarySample,
                             _kernel_python, empirical_measure, free_walk_displacements,
                             sample_stationary, simulate, step)

WP = validate_params(0.3)


def _forced(pos, walk, go_right, target_draw, p=0.3):
    """Drive the reference kernel through one one-event block with fixed draws."""
    pos = np.asarray(pos, dtype=np.int64)
    exps = np.array([0.5])
    walks = np.array([walk], dtype=np.int64)
    us = np.array([0.0 if go_right else 0.99])
    tgts = np.array([target_draw], dtype=np.int64)
    jumps = np.zeros(pos.shape[0], dtype=np.int64)
    rec_t, rec_v = np.empty(1), np.empty(1, dtype=np.int64)
    events = []
    _kernel_python(pos, 0.0, 1e9, p, 1.0, exps, walks, us, tgts, 0,
                   jumps, rec_t, rec_v, False, int(pos.max()), np.uint64(1),
                   events=events)
    return pos, events[0]


def test_forced_selection_single_target():
    # a left step from site 1 with one other walk lands on that walk
    pos, ev = _forced([1, 5], walk=0, go_right=False, target_draw=0)
    assert pos.tolist() == [5, 5]
    assert ev[2] == SELECTION_JUMP and ev[3] == 1


def test_forced_selection_both_at_one():
    pos, ev = _forced([1, 1], walk=0, go_right=False, target_draw=0)
    assert pos.tolist() == [1, 1]
    assert ev[2] == SELECTION_JUMP


def test_forced_nearest_neighbor_moves():
    pos, ev = _forced([2, 2, 2], walk=0, go_right=True, target_draw=0)
    assert pos.tolist() == [3, 2, 2] and ev[2] == STEP_RIGHT
    pos, ev = _forced([2, 2, 2], walk=0, go_right=False, target_draw=0)
    assert pos.tolist() == [1, 2, 2] and ev[2] == STEP_LEFT


def test_step_consumes_four_draws_and_replays():
    gen1 = RngStream(5).generator()
    gen2 = RngStream(5).generator()
    cfg = all_at(4, 2)
    c1, e1 = step(cfg, WP, gen1)
    c2, e2 = step(cfg, WP, gen2)
    assert np.array_equal(c1.positions, c2.positions)
    assert e1 == e2


def test_step_never_reaches_zero():
    cfg = all_at(2, 1)
    gen = RngStream(17).generator()
    for _ in range(200):
        cfg, ev = step(cfg, WP, gen)
        assert (cfg.positions >= 1).all()


def test_simulate_deterministic_digest():
    cfg = all_at(2, 1)
    _, _, log1 = simulate(cfg, WP, 30.0, RngStream(9), backend="python")
    _, _, log2 = simulate(cfg, WP, 30.0, RngStream(9), backend="python")
    assert log1.digest == log2.digest


@pytest.mark.parametrize("n,horizon,seed", [(2, 25.0, 1), (7, 40.0, 2), (25, 15.0, 3)])
def test_numba_and_python_kernels_agree(n, horizon, seed):
    cfg = all_at(n, 1)
    c_py, s_py, l_py = simulate(cfg, WP, horizon, RngStream(seed), backend="python")
    c_nb, s_nb, l_nb = simulate(cfg, WP, horizon, RngStream(seed), backend="numba")
    assert np.array_equal(c_py.positions, c_nb.positions)
    assert l_py.digest == l_nb.digest
    assert np.array_equal(s_py.max_times, s_nb.max_times)
    assert np.array_equal(s_py.max_values, s_nb.max_values)
    assert np.array_equal(s_py.jump_counts, s_nb.jump_counts)


def test_event_log_invariants_and_replay():
    cfg = Configuration(np.array([1, 3, 6]))
    _, _, log = simulate(cfg, WP, 50.0, RngStream(11), record_events=True)
    times = log.times
    assert (np.diff(times) > 0).all()
    # replay: selections occur exactly when a left move would hit 0
    pos = cfg.positions.copy()
    for t, w, kind, tgt in zip(log.times, log.walk_ids, log.kinds, log.target_ids):
        if kind == STEP_RIGHT:
            pos[w] += 1
        elif kind == STEP_LEFT:
            assert pos[w] >= 2, "left step would have hit the origin"
            pos[w] -= 1
        else:
            assert pos[w] == 1
            assert tgt != w
            pos[w] = pos[tgt]
        assert (pos >= 1).all()
        assert pos.shape[0] == cfg.n  # population conserved


def test_segmented_advance_matches_single_run():
    cfg = all_at(5, 2)
    run1 = FvRun(cfg, WP, RngStream(21))
    run1.advance(8.0)
    run1.advance(16.0)
    run1.advance(30.0)
    run2 = FvRun(cfg, WP, RngStream(21))
    run2.advance(30.0)
    assert np.array_equal(run1.pos, run2.pos)
    assert run1.digest == run2.digest


def test_mean_event_count_matches_superposition():
    # N independent unit-rate clocks: expected events = N * horizon = 500
    n, horizon, reps = 50, 10.0, 10_000
    totals = np.empty(reps)
    for r in range(reps):
        run = FvRun(all_at(n, 5), WP, RngStream(100, r))
        run.advance(horizon, record_max=False)
        totals[r] = run.jump_counts.sum()
    se = totals.std(ddof=1) / math.sqrt(reps)
    assert abs(totals.mean() - n * horizon) <= 3 * se


def test_per_walk_jump_counts_are_poisson():
    # chi-square GOF of walk 0's jump count against Poisson(T) at the 1% level
    horizon, reps = 3.0, 10000
    counts = np.empty(reps, dtype=np.int64)
    for r in range(reps):
        _, stats_, _ = simulate(all_at(5, 3), WP, horizon, RngStream(200, r))
        counts[r] = stats_.jump_counts[0]
    hi = int(counts.max()) + 1
    observed = np.bincount(counts, minlength=hi + 1).astype(float)
    expected = stats.poisson.pmf(np.arange(hi + 1), horizon) * reps
    expected[hi] += stats.poisson.sf(hi, horizon) * reps
    # merge bins with expected < 5 into the tail
    keep = expected >= 5.0
    obs = np.append(observed[keep], observed[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    chi2 = ((obs - exp) ** 2 / exp).sum()
    pval = stats.chi2.sf(chi2, df=len(obs) - 1)
    assert pval > 0.01


def test_free_walk_drift():
    n, horizon = 2000, 10.0
    disp = free_walk_displacements(n, WP, horizon, RngStream(31)).astype(float)
    se = disp.std(ddof=1) / math.sqrt(n)
    assert abs(disp.mean() - (-WP.v * horizon)) <= 3 * se


def test_max_path_tracks_running_maximum():
    cfg = Configuration(np.array([1, 4]))
    _, stats_, log = simulate(cfg, WP, 40.0, RngStream(33), record_events=True)
    assert stats_.max_values[0] == 4
    assert (stats_.max_values >= 1).all()
    # reconstruct the maximum from the replayed event log at recorded times
    pos = cfg.positions.copy()
    path = {0.0: int(pos.max())}
    for t, w, kind, tgt in zip(log.times, log.walk_ids, log.kinds, log.target_ids):
        if kind == STEP_RIGHT:
            pos[w] += 1
        elif kind == STEP_LEFT:
            pos[w] -= 1
        else:
            pos[w] = pos[tgt]
        path[float(t)] = int(pos.max())
    for t, m in zip(stats_.max_times, stats_.max_values):
        assert path[float(t)] == int(m)


def test_sample_stationary_basics():
    sched = make_schedule(WP, 5, 0.01)
    sample = sample_stationary(WP, sched, 1.0, 4, RngStream(41))
    assert sample.snapshots.shape == (4, 5)
    assert (sample.snapshots >= 1).all()
    assert sample.thinning == sched.t_horizon
    with pytest.raises(ValueError):
        sample_stationary(WP, sched, 1.0, 0, RngStream(41))


def test_two_seed_stationary_agreement():
    # disjoint seeds, N = 50, 2000 samples each: KS distance below 0.05
    sched = make_schedule(WP, 50, 0.01)
    m1 = sample_stationary(WP, sched, 20.0, 2000, RngStream(51)).maxima()
    m2 = sample_stationary(WP, sched, 20.0, 2000, RngStream(52)).maxima()
    ks = stats.ks_2samp(m1, m2)
    assert ks.statistic < 0.05


def test_two_start_coupling():
    # ergodicity: the stationary law forgets the initial configuration
    sched = make_schedule(WP, 50, 0.01)
    high = all_at(50, math.ceil(5 * math.log(50)))
    m1 = sample_stationary(WP, sched, 20.0, 2000, RngStream(61)).maxima()
    m2 = sample_stationary(WP, sched, 20.0, 2000, RngStream(62), initial=high).maxima()
    ks = stats.ks_2samp(m1, m2)
    assert ks.statistic < 0.05


def test_empirical_measure_point_mass():
    sample = StationarySample(np.array([[3, 3]]), burn_in=0.0, thinning=1.0)
    assert empirical_measure(sample) == {3: 1.0}


def test_empirical_measure_counting():
    sample = StationarySample(np.array([[1, 2], [2, 3]]), burn_in=0.0, thinning=1.0)
    assert empirical_measure(sample) == {1: 0.25, 2: 0.5, 3: 0.25}
