import math

import numpy as np
import pytest
from scipy import stats

from fvlab.coloring import (BLACK, RED, check_green_identity, compound_displacements,
                            estimate_bad_probability, estimate_event_rates, mixed_initial,
                            segmented_displacement, simulate_colored)
from fvlab.params import Configuration, RngStream, Schedule, all_at, make_schedule, validate_params

WP = validate_params(0.3)


def _schedule(n_walks, t_horizon, l_threshold=None, kappa=0.05):
    if l_threshold is None:
        l_threshold = math.e * t_horizon
    return Schedule(n_walks=n_walks, big_a=t_horizon / math.log(n_walks),
                    t_horizon=t_horizon, l_threshold=l_threshold,
                    kappa=kappa, delta0=kappa / (4 * math.e))


def test_all_red_start_has_no_blacks():
    sched = _schedule(5, 6.0)
    init = all_at(5, math.ceil(sched.l_threshold) + 5)
    state, report = simulate_colored(init, WP, sched, RngStream(1))
    assert (state.colors == RED).all()
    assert not report.event_black_travels_l
    # no blacks ever hit the origin, so greens never branch: one per initial red
    assert len(state.green_shadows()) == 5


def test_all_black_start_stays_black():
    # blacks only turn red by landing on a red; with none present, never
    sched = _schedule(5, 6.0)
    state, report = simulate_colored(all_at(5, 1), WP, sched, RngStream(2))
    assert (state.colors == BLACK).all()
    assert state.r0 is None
    # events over the empty red/green sets are reported false
    assert not report.event_red_hits_zero
    assert not report.event_green_max_high


def test_boundary_position_is_red():
    sched = _schedule(4, 5.0, l_threshold=7.0)
    init = Configuration(np.array([1, 6, 7, 8]))
    state, _ = simulate_colored(init, WP, sched, RngStream(3))
    # initial coloring snapshot is not retained, but a position exactly at L
    # must have started red: it keeps a green shadow with its own origin
    assert state.colors[2] == RED
    assert state.colors[1] in (BLACK, RED)


def test_coupling_identity_until_first_red_absorption():
    # while no red has touched the origin, red and green multisets coincide
    sched = _schedule(6, 8.0, l_threshold=6.0)
    init = Configuration(np.array([1, 1, 1, 6, 7, 8]))
    saw_r0, saw_clean, saw_negative_green = 0, 0, 0
    for rep in range(300):
        state, report = simulate_colored(init, WP, sched, RngStream(4, rep))
        assert (state.fv_positions.positions >= 1).all()  # walks never at <= 0
        if state.r0 is None:
            saw_clean += 1
            assert np.array_equal(state.red_positions(), state.green_sorted())
        else:
            saw_r0 += 1
            assert report.event_red_hits_zero
            if (state.green_positions[state.colors == RED] <= 0).any():
                saw_negative_green += 1
    assert saw_clean > 0
    assert saw_r0 > 0  # both branches exercised at this aggressive geometry
    assert saw_negative_green > 0  # shadows continue below the origin


def test_color_transitions_only_black_to_red():
    sched = _schedule(6, 8.0, l_threshold=6.0)
    init = Configuration(np.array([1, 1, 1, 6, 7, 8]))
    initially_red = init.positions >= sched.l_threshold
    for rep in range(50):
        state, _ = simulate_colored(init, WP, sched, RngStream(5, rep))
        assert (state.colors[initially_red] == RED).all()
        assert len(state.green_shadows()) == int((state.colors == RED).sum())


def test_good_runs_decrease_displacements():
    # started all red, a good run keeps every displacement below -vT/(2e)
    sched = _schedule(8, 40.0)
    start = math.ceil(3 * sched.l_threshold)
    init = all_at(8, start)
    threshold = -WP.v * sched.t_horizon / (2 * math.e)
    bad_seen = 0
    for rep in range(150):
        state, report = simulate_colored(init, WP, sched, RngStream(6, rep))
        if report.bad:
            bad_seen += 1
            continue
        disp = state.green_displacements()
        assert disp.max() < threshold
        # on clean runs red displacements coincide with green ones
        assert np.array_equal(np.sort(state.fv_positions.positions - start),
                              np.sort(disp))
    assert bad_seen < 150


def test_bad_probability_all_at_3l():
    sched = make_schedule(WP, 10, 0.01)
    init = all_at(10, math.ceil(3 * sched.l_threshold))
    est = estimate_bad_probability(init, WP, sched, 300, RngStream(7))
    union = est.union
    assert union.event == "bad_union"
    assert union.bound == pytest.approx(4 * math.exp(-est.kappa_t), rel=1e-12)
    assert not union.vacuous  # kappa T > log 4 at the default margin
    assert union.count == 0
    assert est.union_passed
    by_name = {r.event: r for r in est.rows}
    assert by_name["black_travels_l"].count == 0  # no blacks in this start


def test_bad_probability_vacuous_flag():
    sched = _schedule(6, 8.0, kappa=0.01)  # kappa T = 0.08, bound 4 e^-0.08 > 1
    init = all_at(6, math.ceil(sched.l_threshold))
    est = estimate_bad_probability(init, WP, sched, 50, RngStream(8))
    assert est.union.vacuous
    assert est.union_passed


def test_event_rates_union_bound_direction():
    sched = _schedule(6, 8.0, l_threshold=6.0)
    init = Configuration(np.array([1, 1, 1, 6, 7, 8]))
    est = estimate_event_rates(init, WP, sched, 400, RngStream(9))
    by_name = {r.event: r for r in est.rows}
    singles = sum(by_name[k].frequency for k in
                  ("red_hits_zero", "black_travels_l", "green_max_high"))
    union = by_name["bad_union"].frequency
    assert union <= singles + 1e-12
    assert union >= max(by_name[k].frequency for k in
                        ("red_hits_zero", "black_travels_l", "green_max_high")) - 1e-12


def test_red_event_from_exact_threshold_start():
    # all walks at exactly L = eT are red; none can fall eT in time T here
    sched = make_schedule(WP, 6, 0.01)
    init = all_at(6, math.ceil(sched.l_threshold))
    est = estimate_bad_probability(init, WP, sched, 200, RngStream(14))
    red = {r.event: r for r in est.rows}["red_hits_zero"]
    assert red.frequency <= red.bound
    assert est.consistent


def test_green_event_monotone_in_drift():
    # stronger drift makes the green exceedance rarer
    results = {}
    for p in (0.05, 0.45):
        wp = validate_params(p)
        sched = _schedule(6, 10.0, l_threshold=8.0)
        init = Configuration(np.array([1, 1, 8, 9, 10, 11]))
        est = estimate_event_rates(init, wp, sched, 400, RngStream(10))
        results[p] = {r.event: r.frequency for r in est.rows}["green_max_high"]
    assert results[0.05] <= results[0.45]


def test_green_identity_forced_segments():
    # nu = 2 forced branch times: the law is still compound Poisson over [0, T]
    horizon, n = 6.0, 4000
    gen = RngStream(11).generator()
    seg = np.array([segmented_displacement(WP, horizon, [1.7, 4.2], gen)
                    for _ in range(n)], dtype=np.float64)
    ref = compound_displacements(WP, horizon, n, RngStream(12).generator()).astype(float)
    ks = stats.ks_2samp(seg, ref)
    assert ks.pvalue > 0.01
    # nu = 0: the segmented sampler degenerates to the plain one
    plain = np.array([segmented_displacement(WP, horizon, [], gen) for _ in range(n)],
                     dtype=np.float64)
    ks0 = stats.ks_2samp(plain, ref)
    assert ks0.pvalue > 0.01


def test_green_identity_tracked_lineage():
    sched = _schedule(8, 10.0, l_threshold=8.0)
    init = Configuration(np.array([1, 1, 1, 1, 8, 9, 10, 11]))
    report = check_green_identity(WP, sched, 3000, RngStream(13), initial=init)
    assert report.p_value > 0.01
    assert abs(report.mean.mean - report.expected_mean) <= 3 * report.mean.se
    assert report.passed
    assert (report.branch_counts > 0).any()  # lineages with branchings occur


def test_mixed_initial_shape():
    sched = _schedule(10, 5.0)
    init = mixed_initial(sched)
    assert init.n == 10
    assert (init.positions[:5] == 1).all()
    assert (init.positions[5:] >= sched.l_threshold).all()
