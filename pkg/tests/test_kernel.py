import math

import numpy as np
import pytest

from rwpt import kernel
from rwpt._chain import KilledChain
from rwpt.errors import (
    DomainTooLarge,
    PointOutsideAnnulus,
    RegionError,
    SourceInsideTarget,
    SourceOutsideAnnulus,
    SourceOutsideDomain,
)
from rwpt.lattice import annulus, complement, disc, disc_points, enumerate_region, union
from rwpt.stepdist import builtin


def single_point():
    return disc((0, 0), 0.5)


def test_single_point_green(lazy):
    g = kernel.green(lazy, single_point())
    assert g.value((0, 0), (0, 0)) == pytest.approx(2.0, abs=1e-12)
    assert kernel.expected_escape_time(g, (0, 0)) == pytest.approx(2.0, abs=1e-12)


def test_green_zero_outside(lazy):
    g = kernel.green(lazy, disc((0, 0), 5))
    assert g.value((7, 0), (0, 0)) == 0.0
    assert g.value((0, 0), (0, 9)) == 0.0
    with pytest.raises(SourceOutsideDomain):
        kernel.expected_escape_time(g, (6, 0))


@pytest.mark.parametrize("K", [None, 64])
def test_green_symmetry_and_positivity(walk, K):
    g = kernel.green(walk, disc((0, 0), 30 if K is None else 15, K=K))
    rng = np.random.default_rng(1)
    pts = g.points
    for _ in range(100):
        i, j = rng.integers(len(pts), size=2)
        a, b = g.value(pts[i], pts[j]), g.value(pts[j], pts[i])
        assert a >= 0
        assert abs(a - b) <= 1e-9 * max(1.0, a)


@pytest.mark.parametrize("K", [None, 64])
def test_generator_identity(walk, K):
    g = kernel.green(walk, disc((0, 0), 12, K=K))
    rng = np.random.default_rng(2)
    pts = g.points
    for _ in range(50):
        x, y = pts[rng.integers(len(pts))], pts[rng.integers(len(pts))]
        assert g.generator_residual(x, y) <= 1e-9


@pytest.mark.parametrize("n", [10, 20, 40])
@pytest.mark.parametrize("K", [None, 64])
def test_escape_time_two_routes(walk, n, K):
    if K is not None:
        # toral discs need n < K/4; grow the torus with n
        K = max(K, 64 * n // 10)
    B = disc((0, 0), n, K=K)
    g = kernel.green(walk, B)
    pts, direct = kernel.escape_times_direct(walk, B)
    rng = np.random.default_rng(n)
    for i in rng.integers(len(pts), size=10):
        assert abs(kernel.expected_escape_time(g, pts[i]) - direct[i]) <= 1e-8


def test_escape_time_lower_bound_everywhere(walk):
    # the lower half of the escape-time sandwich; the full sandwich is an acceptance criterion
    for n in (10, 20, 40):
        pts, t = kernel.escape_times_direct(walk, disc((0, 0), n))
        lo = (n * n - (pts.astype(float) ** 2).sum(1)) / walk.gamma2
        assert np.all(t >= lo - 1e-9)


def test_escape_time_at_center_bounds(lazy):
    g = kernel.green(lazy, disc((0, 0), 10))
    t = kernel.expected_escape_time(g, (0, 0))
    assert 200 <= t <= 221


def test_toral_escape_time_bounds(lazy):
    g = kernel.green(lazy, disc((0, 0), 10, K=64))
    t = kernel.expected_escape_time(g, (0, 0))
    assert 200 <= t <= 221


def test_toral_domain_needs_killing(lazy):
    with pytest.raises(RegionError):
        kernel.green(lazy, complement(disc((0, 0), 0.0, K=16)))


def test_point_budget(lazy):
    with pytest.raises(DomainTooLarge):
        kernel.green(lazy, disc((0, 0), 50), point_budget=1000)


@pytest.mark.parametrize("name", ["lazy_srw", "king"])
def test_lastexit_matches_direct_toral(name):
    d = builtin(name)
    A = disc((0, 0), 5, K=32)
    rng = np.random.default_rng(3)
    done = 0
    while done < 20:
        x = tuple(int(v) for v in rng.integers(-16, 16, size=2))
        if x in A:
            continue
        a = kernel.hitting_distribution_lastexit(d, A, None, x)
        b = kernel.hitting_distribution_direct(d, A, None, x)
        assert a.sup_diff(b) <= 1e-8
        assert abs(a.total - 1) <= 1e-9
        assert np.all(a.masses >= -1e-15)
        done += 1


def test_lastexit_matches_direct_planar(walk):
    A, amb = disc((0, 0), 5), disc((0, 0), 40)
    a = kernel.hitting_distribution_lastexit(walk, A, amb, (10, 0))
    b = kernel.hitting_distribution_direct(walk, A, amb, (10, 0))
    assert a.sup_diff(b) <= 1e-8
    assert a.total <= 1 + 1e-12
    assert abs(a.lost_mass - b.lost_mass) <= 1e-8
    assert a.window == 40


def test_planar_truncation_converges_upward(lazy):
    A = disc((0, 0), 5)
    totals = [kernel.hitting_distribution_direct(lazy, A, disc((0, 0), R), (10, 0)).total
              for R in (20, 40, 80)]
    assert totals[0] < totals[1] < totals[2] <= 1 + 1e-12


def test_hitting_symmetric_source(lazy):
    A = union([disc((-6, 0), 2), disc((6, 0), 2)])
    k = kernel.hitting_distribution_direct(lazy, A, disc((0, 0), 30), (0, 0))
    for p, m in zip(k.points, k.masses):
        assert m == pytest.approx(k.at((-p[0], p[1])), abs=1e-12)


def test_source_inside_target(lazy):
    with pytest.raises(SourceInsideTarget):
        kernel.hitting_distribution_direct(lazy, disc((0, 0), 5, K=32), None, (1, 1))


def test_constrained_without_forbidden_is_direct(king):
    A, amb = disc((0, 0), 4), disc((0, 0), 30)
    k, p = kernel.constrained_hitting(king, A, None, amb, (9, 2))
    ref = kernel.hitting_distribution_direct(king, A, amb, (9, 2))
    assert k.sup_diff(ref) <= 1e-10
    k0, _ = kernel.constrained_hitting(king, A, disc((20, 0), 0), amb, (9, 2))
    assert k0.sup_diff(ref) <= 1e-10
    assert p == pytest.approx(ref.total, abs=1e-10)


def test_constrained_total_probability_toral(king):
    K = 48
    A, F = disc((0, 0), 3, K=K), disc((10, 0), 3, K=K)
    x = (-8, 5)
    k, p = kernel.constrained_hitting(king, A, F, None, x)
    kf, pf = kernel.constrained_hitting(king, F, A, None, x)
    assert p + pf == pytest.approx(1.0, abs=1e-9)
    assert k.total == pytest.approx(p, abs=1e-12)


def test_ruin_monotone_and_bounded(lazy):
    vals = [kernel.ruin_probability(lazy, 10, 160, (r, 0)) for r in (20, 40, 80)]
    assert vals[0] > vals[1] > vals[2]
    assert all(0 < v < 1 for v in vals)


def test_ruin_one_step_lower_bound(king):
    # from the inner ring, one step already enters with the entry mass
    x = (3, 0)
    entry = sum(king.prob(o) for o in king.offsets if math.hypot(x[0] + o[0], x[1] + o[1]) < 3)
    assert kernel.ruin_probability(king, 3, 20, x) >= entry - 1e-12


def test_ruin_source_checks(lazy):
    with pytest.raises(SourceOutsideAnnulus):
        kernel.ruin_probability(lazy, 10, 40, (5, 0))
    with pytest.raises(SourceOutsideAnnulus):
        kernel.ruin_probability(lazy, 10, 40, (40, 0))


def test_ruin_field_consistent(lazy):
    pts, h = kernel.ruin_field(lazy, 4, 16)
    i = int(np.flatnonzero((pts == [8, 0]).all(1))[0])
    assert h[i] == pytest.approx(kernel.ruin_probability(lazy, 4, 16, (8, 0)), abs=1e-12)


def test_toral_equals_planar_without_wrap(walk):
    # bounded support, K >= 8n: no step can reach another copy
    n, K = 6, 64
    A = disc((0, 0), 2)
    amb = disc((0, 0), n)
    planar, _ = kernel.constrained_hitting(walk, A, None, amb, (4, 1))
    ring_toral = union([disc((0, 0), 2, K=K)])
    toral_amb = disc((0, 0), n, K=K)
    toral, _ = kernel.constrained_hitting(walk, ring_toral, None, toral_amb, (4, 1))
    assert planar.sup_diff(toral) <= 1e-12


def test_exterior_green_monotone_in_window(lazy):
    vals = [kernel.exterior_green(lazy, 4, 2, (10, 0), (0, 12), N) for N in (24, 48, 96)]
    assert vals[0] < vals[1] < vals[2]
    with pytest.raises(PointOutsideAnnulus):
        kernel.exterior_green(lazy, 4, 2, (3, 0), (0, 12), 48)


def test_exterior_doubling_matches_exact_representation(lazy):
    """Window values approach the exact exterior Green function with deficit
    ``phi(x) phi(y) / phi(N)``, ``phi`` the escape potential of the disc."""
    ext = kernel.DiscExterior(lazy, 6)
    x, y = (10, 0), (0, 11)
    exact = float(ext.green([x], y)[0])
    phx, phy = ext.escape_potential([x, y])
    run = kernel.exterior_green_doubling(lazy, 4, 2, x, y, max_points=3e5)
    assert len(run["values"]) >= 4
    errs = []
    for N, v in zip(run["radii"], run["values"]):
        assert v <= exact + 1e-9
        phN = ext.escape_potential([(int(N), 0)])[0]
        errs.append(abs((exact - v) * phN - phx * phy))
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] <= 1e-3 * phx * phy


@pytest.mark.parametrize("name", ["lazy_srw", "king"])
def test_disc_exterior_strong_markov(name):
    """Stopping at the exit of a finite window: H(x, y) equals the constrained
    kernel plus the exit distribution integrated against H itself."""
    d = builtin(name)
    rho, N = 5, 30
    ext = kernel.DiscExterior(d, rho)
    chain = KilledChain(d, enumerate_region(annulus((0, 0), rho, N - rho)))
    x = (11, 4)
    g = chain.green_row(chain.index(x))
    mass = chain.exit_masses(g)
    inside = disc((0, 0), rho).contains(chain.exit_points)
    lhs = ext.hitting([x])[0]
    lookup = {tuple(p): i for i, p in enumerate(ext.inner)}
    direct = np.zeros(len(ext.inner))
    for p, m in zip(chain.exit_points[inside], mass[inside]):
        direct[lookup[tuple(p)]] += m
    outside = ~inside
    rhs = direct + mass[outside] @ ext.hitting(chain.exit_points[outside])
    assert np.max(np.abs(lhs - rhs)) <= 1e-10
    assert lhs.sum() == pytest.approx(1.0, abs=1e-10)
    assert lhs.min() >= -1e-12


def test_disc_exterior_green_symmetry_and_window(king):
    ext = kernel.DiscExterior(king, 4)
    a = float(ext.green([(9, 3)], (-7, 8))[0])
    b = float(ext.green([(-7, 8)], (9, 3))[0])
    assert a == pytest.approx(b, rel=1e-9)
    g = kernel.exterior_green(king, 2, 2, (9, 3), (-7, 8), 200)
    assert g < a


def test_escape_potential_vanishes_on_target(lazy):
    ext = kernel.DiscExterior(lazy, 4)
    assert np.all(ext.escape_potential(disc_points(4)) == 0)
    far = ext.escape_potential([(100, 0), (200, 0)])
    slope = (far[1] - far[0]) / math.log(2)
    assert slope == pytest.approx(2 / lazy.pi_gamma, rel=1e-4)


def test_kernel_dump(tmp_path, lazy):
    k = kernel.hitting_distribution_direct(lazy, disc((0, 0), 3, K=16), None, (5, 5))
    k.dump(tmp_path / "k.csv", tmp_path / "k.json", dist=lazy)
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,y1,y2,value"
    assert len(lines) == len(k.points) + 1
    assert "residual_tol" in (tmp_path / "k.json").read_text()
