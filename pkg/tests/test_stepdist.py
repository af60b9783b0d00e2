import math
from fractions import Fraction

import numpy as np
import pytest

from rwpt.errors import AnisotropicCovariance, DivergentMoment, NotAProbability, NotSymmetric
from rwpt.stepdist import (
    DistributionSpec,
    build_distribution,
    builtin,
    check_condition_A,
    check_strong_aperiodicity,
    moment,
)

PLAIN_SRW = [[1, 0, "1/4"], [-1, 0, "1/4"], [0, 1, "1/4"], [0, -1, "1/4"]]


def custom(table):
    return build_distribution(DistributionSpec("custom_table", {"table": table}))


def test_lazy_constants(lazy):
    assert lazy.cov_scale == pytest.approx(0.25, abs=1e-15)
    assert lazy.gamma2 == pytest.approx(0.5, abs=1e-15)
    assert lazy.pi_gamma == pytest.approx(math.pi / 2, rel=1e-15)


def test_king_constants(king):
    assert king.cov_scale == pytest.approx(0.75, abs=1e-15)
    assert king.gamma2 == pytest.approx(1.5, abs=1e-15)
    assert king.pi_gamma == pytest.approx(1.5 * math.pi, rel=1e-15)


def test_asymmetric_table_rejected():
    with pytest.raises(NotSymmetric):
        custom([[1, 0, "1/2"], [-1, 0, "1/4"], [0, 1, "1/8"], [0, -1, "1/8"]])


def test_anisotropic_table_rejected():
    with pytest.raises(AnisotropicCovariance):
        custom([[1, 0, "1/4"], [-1, 0, "1/4"], [0, 2, "1/4"], [0, -2, "1/4"]])


@pytest.mark.parametrize("table", [
    [[1, 0, "1/4"], [-1, 0, "1/4"], [0, 1, "1/4"], [0, -1, "1/8"]],
    [[1, 0, "3/4"], [-1, 0, "3/4"], [0, 1, "-1/4"], [0, -1, "-1/4"]],
])
def test_bad_probabilities_rejected(table):
    with pytest.raises((NotAProbability, NotSymmetric)):
        custom(table)


@pytest.mark.parametrize("name", ["lazy_srw", "king"])
def test_normalisation_and_exact_symmetry(name):
    d = builtin(name)
    assert abs(d.probs.sum() - 1) <= 1e-12
    exact = dict(zip(map(tuple, d.offsets.tolist()), d.exact_probs))
    for (dx, dy), p in exact.items():
        assert exact[(-dx, -dy)] == p


def test_moments(lazy, king):
    assert moment(lazy, 2) == pytest.approx(0.5, abs=1e-15)
    assert moment(king, 2) == pytest.approx(1.5, abs=1e-15)
    for d in (lazy, king):
        assert moment(d, 0) == pytest.approx(1.0, abs=1e-15)
        assert moment(d, 2) == pytest.approx(d.gamma2, abs=1e-14)


def test_covariance_isotropy(walk):
    x, y = walk.offsets[:, 0].astype(float), walk.offsets[:, 1].astype(float)
    c11, c22, c12 = (walk.probs * x * x).sum(), (walk.probs * y * y).sum(), (walk.probs * x * y).sum()
    assert abs(c11 - c22) <= 1e-12 * c11
    assert abs(c12) <= 1e-12


def test_power_law_moments():
    d = build_distribution(DistributionSpec("truncated_power_law", {"exponent": 6, "cutoff": "inf"}))
    assert math.isfinite(moment(d, 3))
    with pytest.raises(DivergentMoment):
        moment(d, 4)
    finite = builtin("truncated_power_law", exponent=6, cutoff=20)
    direct = float((finite.probs * np.hypot(*finite.offsets.T.astype(float)) ** 3).sum())
    assert moment(finite, 3) == pytest.approx(direct, rel=1e-12)


def _brute_force_aperiodic(offsets, probs, steps=20):
    """Return-time gcd is 1 and both unit vectors are reachable at the final step."""
    reach = {(0, 0)}
    support = [tuple(o) for o, p in zip(offsets.tolist(), probs) if p > 0]
    returns = []
    for t in range(1, steps + 1):
        reach = {(a + dx, b + dy) for a, b in reach for dx, dy in support}
        if (0, 0) in reach:
            returns.append(t)
    g = 0
    for t in returns:
        g = math.gcd(g, t)
    return g == 1 and {(1, 0), (0, 1)} <= reach


@pytest.mark.parametrize("name", ["lazy_srw", "king"])
def test_strong_aperiodicity_builtins(name):
    d = builtin(name)
    assert check_strong_aperiodicity(d)
    assert _brute_force_aperiodic(d.offsets, d.probs) == check_strong_aperiodicity(d)


def test_plain_srw_is_periodic():
    d = custom(PLAIN_SRW)
    assert not check_strong_aperiodicity(d)
    assert not _brute_force_aperiodic(d.offsets, d.probs)


def test_condition_a_short_circuit(lazy):
    rep = check_condition_A(lazy, 20, 5)
    assert rep.passed and rep.short_circuit


def test_condition_a_power_law():
    d = builtin("truncated_power_law", exponent=6, cutoff=50)
    rep = check_condition_A(d, 20, 5)
    assert rep.inf_entry > 0
    short = builtin("truncated_power_law", exponent=6, cutoff=3)
    assert not check_condition_A(short, 20, 10).passed


def test_exact_fraction_storage(lazy):
    assert all(isinstance(p, Fraction) for p in lazy.exact_probs)


def test_spec_roundtrip():
    spec = DistributionSpec("truncated_power_law", {"exponent": 6, "cutoff": 40})
    assert DistributionSpec.from_json(spec.dumps()) == spec
