import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwpt import harnack, kernel
from rwpt.errors import RegionError
from rwpt.harnack import HarnackConfig
from rwpt.lattice import disc


# pure helpers ----------------------------------------------------------------

def test_identical_sources_have_zero_deviation():
    H = np.array([[0.2, 0.3, 0.5], [0.2, 0.3, 0.5]])
    st_ = harnack.ratio_stats(H, [(1, 0), (-1, 0)], np.array([[5, 0], [0, 5], [-5, 0]]))
    assert st_["sup_ratio_dev"] == 0.0
    assert st_["symmetric_ok"]


def test_single_source_is_trivial():
    st_ = harnack.ratio_stats(np.array([[0.5, 0.5]]), [(0, 0)], np.array([[1, 0], [0, 1]]))
    assert st_["sup_ratio_dev"] == 0.0 and st_["n_triples"] == 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=6, max_size=6))
def test_ratio_stats_reverse_relation(vals):
    H = np.array(vals).reshape(2, 3)
    s = harnack.ratio_stats(H, [(1, 0), (2, 0)], np.array([[0, 1], [0, 2], [0, 3]]))
    dev, rev = s["sup_ratio_dev"], s["sup_ratio_dev_reverse"]
    assert rev <= dev * (1 + dev) + 1e-12
    assert s["symmetric_ok"]
    w = s["worst"]
    assert abs(w["ratio"] - 1) == pytest.approx(dev)


def test_fit_decay_recovers_power_law():
    ms = [2, 4, 8, 16]
    fit = harnack.fit_decay(ms, [3.0 * m ** -0.75 for m in ms])
    assert fit["slope"] == pytest.approx(-0.75)
    assert fit["r2"] == pytest.approx(1.0)


def test_fit_decay_needs_two_points():
    assert math.isnan(harnack.fit_decay([2], [0.1])["slope"])


def test_count_inversions():
    assert harnack.count_inversions([3, 2, 2.5, 1]) == 1
    assert harnack.count_inversions([1, 2, 3]) == 2


def test_select_targets_skips_zero_mass():
    pts = np.array([[10, 0], [0, 10], [-10, 0], [0, -10]])
    masses = np.array([[0.5, 0.0, 0.3, 0.2], [0.4, 0.1, 0.3, 0.2]])
    sel = harnack.select_targets(pts, masses, 4)
    assert 1 not in sel
    assert set(sel) == {0, 2, 3}
    assert list(harnack.select_targets(pts, masses, None)) == [0, 2, 3]


def test_auto_s_capped():
    assert harnack.auto_s(32, 4) == 2
    assert harnack.auto_s(3, 100) == 1


def test_split_inner_radius():
    assert harnack.split_inner_radius(32, 8) == 2
    assert harnack.split_inner_radius(4, 2) == 0
    assert harnack.split_inner_radius(32, 2) == 4 + 1


# small experiments -----------------------------------------------------------

@pytest.fixture(scope="module")
def interior_small(lazy):
    return harnack.interior_harnack(HarnackConfig(lazy, r=2, m_list=(2, 4, 8)))


def test_interior_small_decays(interior_small):
    rep = interior_small
    assert rep.checks["preflight_ok"] and rep.checks["symmetry_ok"]
    assert rep.inversions <= 1
    assert rep.fit["slope"] < 0
    for row in rep.rows:
        assert row["mass_defect"] < 1e-8
        assert row["ring1_sup_ratio_dev"] <= row["sup_ratio_dev"] + 1e-12


def test_interior_ratio_matches_direct_kernels(lazy, interior_small):
    row = interior_small.rows[0]
    w = row["worst"]
    g = kernel.green(lazy, disc((0, 0), row["R"]))

    def mass(x):
        pts, m = g.exit_distribution(x)
        return float(m[(pts == w["y"]).all(1)].sum())

    assert mass(tuple(w["x"])) / mass(tuple(w["x_prime"])) == pytest.approx(w["ratio"], rel=1e-9)


def test_same_source_twice_gives_zero(lazy):
    cfg = HarnackConfig(lazy, r=2, m_list=(2,), sources=[(1, 0), (1, 0)])
    rep = harnack.interior_harnack(cfg)
    assert rep.rows[0]["sup_ratio_dev"] == pytest.approx(0.0, abs=1e-12)


def test_report_serialization(tmp_path, interior_small):
    js = json.loads(interior_small.dumps())
    assert js["experiment"] == "interior_harnack"
    assert js["config"]["dist"]["kind"] == "lazy_srw"
    interior_small.to_csv(tmp_path / "h.csv")
    with open(tmp_path / "h.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["m", "sup_ratio_dev", "fitted_value"]
    assert [int(r[0]) for r in rows[1:]] == [2, 4, 8]


def test_split_small_without_constraint_is_trivial(lazy):
    # m large enough that r/(4m) < 1: no forbidden disc, escape-first probability is 1
    rep = harnack.interior_split(HarnackConfig(lazy, r=4, m_list=(2,)))
    row = rep.rows[0]
    assert not row["constrained"]
    assert row["split_min"] == pytest.approx(1.0)
    assert row["defect"] < 1e-8


def test_split_constrained_row(lazy):
    rep = harnack.interior_split(HarnackConfig(lazy, r=16, m_list=(2,)))
    row = rep.rows[0]
    assert row["constrained"] and row["inner_radius"] == 3
    assert 0 < row["split_min"] <= row["split_max"] < 1
    assert row["defect"] > 0


def test_interior_toral_matches_planar_for_bounded_walk(walk):
    rep = harnack.interior_harnack_toral(HarnackConfig(walk, r=2, m_list=(2,), K=128))
    assert rep.checks["transfer_ok"]
    assert rep.rows[0]["toral_planar_diff"] < 1e-9


def test_interior_toral_needs_room(lazy):
    with pytest.raises(RegionError):
        harnack.interior_harnack_toral(HarnackConfig(lazy, r=2, m_list=(2,), K=64))
    with pytest.raises(ValueError):
        harnack.interior_harnack_toral(HarnackConfig(lazy, r=2, m_list=(2,)))


def test_exterior_small(lazy):
    rep = harnack.exterior_harnack(HarnackConfig(lazy, r=4, m_list=(2, 4)))
    assert rep.checks["preflight_ok"] and rep.checks["symmetry_ok"]
    a, b = rep.rows
    assert b["sup_ratio_dev"] < a["sup_ratio_dev"]
    z = a["zoom_out"]
    assert z["sup_ratio_dev_bound"] >= z["sup_ratio_dev"]
    assert all(lo <= hi for lo, hi in zip(*z["q_interval"]))


def test_zoom_out_brackets_finite_solve(lazy):
    from rwpt._chain import KilledChain
    from rwpt.lattice import annulus, enumerate_region
    rho, N = 3, 24
    ext = kernel.DiscExterior(lazy, rho)
    xs = [(12, 0), (0, -12)]
    chain = KilledChain(lazy, enumerate_region(annulus((0, 0), rho, N - rho)))
    H, _ = harnack._exit_rows(chain, xs)
    lookup = {tuple(p): i for i, p in enumerate(chain.exit_points)}
    # inner cells a single step can reach
    targets = np.array([y for y in ext.inner if tuple(y) in lookup])
    z = harnack.zoom_out_kernel(ext, lazy, xs, targets, N)
    exact = H[:, [lookup[tuple(y)] for y in targets]]
    assert (z["k_lo"] <= exact + 1e-10).all() and (exact <= z["k_hi"] + 1e-10).all()
    q = exact.sum(1)
    assert (z["q_lo"] <= q + 1e-10).all() and (q <= z["q_hi"] + 1e-10).all()


def test_exterior_toral_bounded_walk(lazy):
    rep = harnack.exterior_harnack_toral(HarnackConfig(lazy, r=2, m_list=(1,), K=520))
    row = rep.rows[0]
    assert rep.checks["transfer_ok"]
    assert row["At_Ap_diff"] < 1e-9
    assert row["sup_ratio_dev"] == pytest.approx(row["planar_sup_ratio_dev"], abs=1e-9)


def test_green_floor_small(lazy):
    rep = harnack.green_floor_probe(HarnackConfig(lazy, r=4, m_list=(2, 4)))
    assert rep.checks["positive_ok"]
    for row in rep.rows:
        assert row["near_min"] > 0 and row["far_min"] > 0
        assert row["implied_c"] == pytest.approx(row["near_min"] * row["R"] * math.log(row["R"]))


def test_green_floor_toral_positive(lazy):
    rep = harnack.green_floor_probe(HarnackConfig(lazy, r=2, m_list=(1,), K=72))
    assert rep.checks["positive_ok"]
    with pytest.raises(RegionError):
        harnack.green_floor_probe(HarnackConfig(lazy, r=2, m_list=(1,), K=64))
