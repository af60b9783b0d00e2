import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwpt import core, kernel, mc
from rwpt.errors import Capped, UnsupportedDistribution
from rwpt.lattice import annulus, complement, disc, project_pi
from rwpt.stepdist import builtin

# Random123 known-answer vectors for Philox4x32-10
PHILOX_KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]

BACKENDS = core.backends()


@pytest.mark.parametrize("name", sorted(BACKENDS))
@pytest.mark.parametrize("ctr,key,expected", PHILOX_KAT)
def test_philox_known_answers(name, ctr, key, expected):
    assert tuple(BACKENDS[name].philox4x32(ctr, key)) == expected


def test_backend_selection():
    assert "compiled" in BACKENDS
    forced = os.environ.get("RWPT_PURE_PYTHON", "") in ("1", "true", "yes")
    assert core.BACKEND == ("python" if forced else "compiled")


def _run_with(impl, sampler, x, stop, ids, cap=mc.DEFAULT_CAP):
    conds = mc._compile(stop)
    outs = [np.empty(len(ids), dtype=np.int64) for _ in range(4)]
    impl.run_paths(sampler.off_x, sampler.off_y, sampler.cdf, sampler.key0, sampler.key1,
                   sampler.stream, x[0], x[1], ids, *conds, cap, *outs)
    return outs


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled core not built")
@pytest.mark.parametrize("K", [None, 32])
def test_backends_bit_identical_paths(walk, K):
    sampler = mc.PathSampler(walk, K=K, seed=2024, stream=3)
    stop = mc.first_of([mc.hit(disc((0, 0), 2, K=K)), mc.escape(disc((0, 0), 7, K=K))])
    ids = np.arange(500, dtype=np.int64) * 7 + 11
    a = _run_with(BACKENDS["python"], sampler, (4, 1), stop, ids)
    b = _run_with(BACKENDS["compiled"], sampler, (4, 1), stop, ids)
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled core not built")
def test_backends_bit_identical_draws(king):
    sampler = mc.PathSampler(king, seed=(1 << 40) + 5, stream=9)
    a = np.empty(10_001, dtype=np.int64)
    b = np.empty(10_001, dtype=np.int64)
    BACKENDS["python"].draw_steps(sampler.cdf, sampler.key0, sampler.key1, sampler.stream, 77,
                                  len(a), a)
    BACKENDS["compiled"].draw_steps(sampler.cdf, sampler.key0, sampler.key1, sampler.stream, 77,
                                    len(b), b)
    np.testing.assert_array_equal(a, b)


def test_path_steps_match_draw_stream(lazy):
    # the t-th step of path i is the t-th draw of substream i
    sampler = mc.PathSampler(lazy, seed=5)
    stop = mc.escape(disc((0, 0), 6))
    rec = mc.sample_until(sampler, (0, 0), stop, path_id=3)
    path = sampler.path((0, 0), rec.steps, path_id=3)
    assert tuple(path[-1]) == rec.position
    inside = np.hypot(path[:-1, 0], path[:-1, 1]) < 6
    assert inside.all()


def test_step_chi_square(walk):
    res = mc.step_chi_square(mc.PathSampler(walk, seed=1), n_draws=200_000)
    assert res["p_value"] > 1e-4
    assert res["max_abs_z"] < 5


def test_seed_changes_stream(lazy):
    a = mc.PathSampler(lazy, seed=1).step_indices(64)
    b = mc.PathSampler(lazy, seed=2).step_indices(64)
    c = mc.PathSampler(lazy, seed=1, stream=1).step_indices(64)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)


def test_start_already_stopped(lazy):
    sampler = mc.PathSampler(lazy, seed=0)
    rec = mc.sample_until(sampler, (10, 0), mc.escape(disc((0, 0), 5)))
    assert rec.steps == 0 and rec.position == (10, 0) and rec.stop_index == 0


def test_first_of_tie_goes_to_earlier(lazy):
    sampler = mc.PathSampler(lazy, seed=0)
    A = disc((0, 0), 3)
    rec = mc.sample_until(sampler, (0, 0), mc.first_of([mc.hit(A), mc.hit(disc((0, 0), 2))]))
    assert rec.stop_index == 0


def test_nested_first_of_rejected():
    s = mc.hit(disc((0, 0), 2))
    with pytest.raises(ValueError):
        mc.first_of([mc.first_of([s]), s])


def test_cap_raises(lazy):
    sampler = mc.PathSampler(lazy, seed=0)
    with pytest.raises(Capped) as err:
        mc.sample_until(sampler, (0, 0), mc.escape(disc((0, 0), 1000)), cap=50)
    assert err.value.record.capped


def test_cap_must_be_positive(lazy):
    with pytest.raises(ValueError):
        mc.sample_until(mc.PathSampler(lazy), (0, 0), mc.escape(disc((0, 0), 3)), cap=0)


def test_capped_paths_counted(lazy):
    sampler = mc.PathSampler(lazy, seed=0)
    ev = mc.EventSpec(mc.escape(disc((0, 0), 50)), statistic="steps")
    rep = mc.estimate(sampler, (0, 0), ev, 200, cap=100)
    assert rep.n_capped == 200


def test_unbounded_table_rejected():
    d = builtin("truncated_power_law", exponent=8, cutoff="inf")
    with pytest.raises(UnsupportedDistribution):
        mc.PathSampler(d)


def test_minimum_paths(lazy):
    with pytest.raises(ValueError):
        mc.estimate(mc.PathSampler(lazy), (0, 0), mc.EventSpec(mc.escape(disc((0, 0), 3))), 50)


def test_thread_count_does_not_change_results(lazy):
    sampler = mc.PathSampler(lazy, seed=99)
    stop = mc.escape(disc((0, 0), 9))
    a = mc.run(sampler, (1, 1), stop, 3 * mc.CHUNK + 17, threads=1)
    b = mc.run(sampler, (1, 1), stop, 3 * mc.CHUNK + 17, threads=4)
    np.testing.assert_array_equal(a.steps, b.steps)
    np.testing.assert_array_equal(a.position, b.position)


def test_first_path_offset_is_consistent(lazy):
    sampler = mc.PathSampler(lazy, seed=4)
    stop = mc.escape(disc((0, 0), 5))
    full = mc.run(sampler, (0, 0), stop, 300)
    tail = mc.run(sampler, (0, 0), stop, 100, first_path=200)
    np.testing.assert_array_equal(full.steps[200:], tail.steps)


def test_rerun_reports_identical(king):
    ev = mc.EventSpec(mc.first_of([mc.hit(disc((0, 0), 2)), mc.escape(disc((0, 0), 12))]))
    a = mc.estimate(mc.PathSampler(king, seed=7), (5, 0), ev, 2000).to_json()
    b = mc.estimate(mc.PathSampler(king, seed=7), (5, 0), ev, 2000).to_json()
    assert a == b


@settings(max_examples=25, deadline=None)
@given(st.integers(-20, 20), st.integers(-20, 20), st.integers(2, 9))
def test_stop_position_outside_escape_disc(x1, x2, radius):
    sampler = mc.PathSampler(builtin("king"), seed=x1 * 100 + x2)
    batch = mc.run(sampler, (x1, x2), mc.escape(disc((0, 0), radius)), 20)
    assert (np.hypot(batch.position[:, 0], batch.position[:, 1]) >= radius).all()
    started_outside = np.hypot(x1, x2) >= radius
    assert ((batch.steps == 0) == started_outside).all()


def test_toral_stop_reads_projection(lazy):
    K = 20
    sampler = mc.PathSampler(lazy, K=K, seed=3)
    batch = mc.run(sampler, (0, 0), mc.escape(disc((0, 0), 4, K=K)), 300)
    proj = project_pi(batch.position, K)
    assert (np.hypot(proj[:, 0], proj[:, 1]) >= 4).all()
    assert batch.record(0).projected == tuple(int(v) for v in proj[0])


def test_annulus_and_complement_stops(lazy):
    sampler = mc.PathSampler(lazy, seed=8)
    ring = annulus((0, 0), 6, 2)
    batch = mc.run(sampler, (0, 0), mc.hit(ring), 200)
    r = np.hypot(batch.position[:, 0], batch.position[:, 1])
    assert ((r >= 6) & (r < 8)).all()
    out = mc.run(sampler, (0, 0), mc.hit(complement(disc((0, 0), 5))), 200)
    assert (np.hypot(out.position[:, 0], out.position[:, 1]) >= 5).all()


def test_batch_csv(tmp_path, lazy):
    batch = mc.run(mc.PathSampler(lazy), (0, 0), mc.escape(disc((0, 0), 3)), 10)
    batch.to_csv(tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "path_id,stop_index,x1,x2,steps" and len(lines) == 11


# estimates against exact oracles ---------------------------------------------

def test_escape_time_estimate_matches_exact(walk):
    g = kernel.green(walk, disc((0, 0), 10))
    ev = mc.EventSpec(mc.escape(disc((0, 0), 10)), statistic="steps")
    rep = mc.estimate(mc.PathSampler(walk, seed=11), (3, 0), ev, 20_000)
    assert rep.within(g.escape_time((3, 0)), 4.0)


def test_ruin_estimate_matches_exact(lazy):
    exact = kernel.ruin_probability(lazy, 3, 20, (8, 0))
    ev = mc.EventSpec(mc.first_of([mc.hit(disc((0, 0), 3)), mc.escape(disc((0, 0), 20))]))
    rep = mc.estimate(mc.PathSampler(lazy, seed=12), (8, 0), ev, 20_000)
    assert rep.within(exact, 4.0)


def test_toral_escape_matches_exact(king):
    K = 64
    g = kernel.green(king, disc((0, 0), 10, K=K))
    ev = mc.EventSpec(mc.escape(disc((0, 0), 10, K=K)), statistic="steps")
    rep = mc.estimate(mc.PathSampler(king, K=K, seed=13), (0, 0), ev, 20_000)
    assert rep.within(g.escape_time((0, 0)), 4.0)


def test_bounded_walk_never_mismatches(lazy):
    K, n = 64, 10
    ev = mc.EventSpec(mc.first_of([mc.escape(disc((0, 0), n, K=K)), mc.escape(disc((0, 0), n))]),
                      success=(1,))
    rep = mc.estimate(mc.PathSampler(lazy, K=K, seed=14), (0, 0), ev, 10_000)
    assert rep.estimate == 0.0
