"""Separation distance: exact solver versus exhaustive labeling, bracket
mode, the rational reduction, and the dissipation detector."""

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from mmgeo.errors import AlphaOutOfRange, BadKappa, NotRational, TooLargeForExact
from mmgeo.mmcore import one_point_space, pushforward, validate_space
from mmgeo.separation import (
    ReducedQuery,
    SepBracket,
    SepQuery,
    dissipation_report,
    group_witness,
    reduce_to_uniform,
    sep,
    sep_uniform,
    separation_at_least,
    verify_sep_witness,
)
from mmgeo.reports import render_csv


def line_space(xs, weights=None, mode="metric"):
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    d = np.abs(xs[:, None] - xs[None, :])
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    return validate_space(tuple(xs), d, w, mode=mode)


def euclidean_space(pts, weights=None):
    pts = np.asarray(pts, dtype=float)
    n = len(pts)
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    return validate_space(range(n), d, w)


def two_point():
    return line_space([0.0, 1.0])


# oracle: try every discard-or-group labeling; overlapping tuples only
# ever realize threshold 0, so labelings cover the supremum
def sep_oracle(space, kappas):
    n = space.n
    g = len(kappas)
    best = 0.0
    for labels in itertools.product(range(g + 1), repeat=n):
        groups = [[i for i in range(n) if labels[i] == gi] for gi in range(g)]
        if any(space.mass(grp) < k - 1e-12 for grp, k in zip(groups, kappas)):
            continue
        cross = min(
            space.dist[p, q]
            for a in range(g)
            for b in range(a + 1, g)
            for p in groups[a]
            for q in groups[b]
        )
        best = max(best, float(cross))
    return best


# ---- query validation ----------------------------------------------------------


def test_query_needs_two_thresholds():
    with pytest.raises(BadKappa):
        SepQuery(two_point(), (0.5,))


def test_query_rejects_nonpositive_threshold():
    with pytest.raises(BadKappa):
        SepQuery(two_point(), (0.5, 0.0))
    with pytest.raises(BadKappa):
        SepQuery(two_point(), (0.5, -0.1))


# ---- exact solver --------------------------------------------------------------


def test_sep_two_point_half_half():
    assert sep_oracle(two_point(), (0.5, 0.5)) == 1.0
    res = sep(SepQuery(two_point(), (0.5, 0.5)))
    assert res.exact and res.lower == res.upper == 1.0
    assert res.witness == ((0,), (1,))
    assert verify_sep_witness(two_point(), (0.5, 0.5), 1.0, res.witness)


def test_sep_mass_forces_overlap():
    res = sep(SepQuery(two_point(), (0.6, 0.6)))
    assert res.exact and res.lower == res.upper == 0.0
    # the zero value still has a (fully overlapping) witness
    assert verify_sep_witness(two_point(), (0.6, 0.6), 0.0, res.witness)


def test_sep_line_thirds_discards_middle_point():
    sp = line_space([0.0, 0.6, 1.2])
    assert sep_oracle(sp, (1 / 3, 1 / 3)) == pytest.approx(1.2)
    res = sep(SepQuery(sp, (1 / 3, 1 / 3)))
    assert res.exact and res.lower == pytest.approx(1.2)
    assert res.witness == ((0,), (2,))


def test_sep_unreachable_mass_is_zero():
    res = sep(SepQuery(two_point(), (1.5, 0.5)))
    assert res.exact and res.lower == 0.0 and res.witness is None


@pytest.mark.parametrize("seed", range(12))
def test_sep_matches_labeling_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    sp = euclidean_space(rng.random((n, 2)) * 3)
    m = int(rng.integers(1, 3))
    kappas = tuple(float(rng.uniform(0.08, 0.45)) for _ in range(m + 1))
    expect = sep_oracle(sp, kappas)
    res = sep(SepQuery(sp, kappas))
    assert res.exact
    assert res.lower == pytest.approx(expect, abs=1e-12)
    if res.lower > 0:
        assert verify_sep_witness(sp, kappas, res.lower, res.witness)


def test_sep_weighted_space():
    sp = line_space([0.0, 1.0, 3.0], [0.2, 0.3, 0.5])
    expect = sep_oracle(sp, (0.5, 0.5))
    res = sep(SepQuery(sp, (0.5, 0.5)))
    assert res.lower == pytest.approx(expect) == pytest.approx(2.0)


def test_sep_exact_caps():
    big = line_space(np.arange(17, dtype=float))
    with pytest.raises(TooLargeForExact):
        sep(SepQuery(big, (0.3, 0.3)))
    small = line_space(np.arange(5, dtype=float))
    with pytest.raises(TooLargeForExact):
        sep(SepQuery(small, (0.1,) * 5))  # m = 4 beyond default cap
    sep(SepQuery(small, (0.1,) * 5), exact_m_cap=4)


def test_sep_node_budget_enforced():
    sp = euclidean_space(np.random.default_rng(0).random((10, 2)))
    with pytest.raises(TooLargeForExact):
        sep(SepQuery(sp, (0.2, 0.2)), node_budget=3)


# ---- uniform variant -----------------------------------------------------------


def test_sep_uniform_two_point():
    res = sep_uniform(two_point(), 1, 0.4)
    assert res.exact and res.lower == 1.0


def test_sep_uniform_single_point_space():
    res = sep_uniform(one_point_space(), 1, 0.4)
    assert res.exact and res.lower == 0.0


def test_sep_uniform_alpha_range():
    with pytest.raises(AlphaOutOfRange):
        sep_uniform(two_point(), 1, 0.5)
    with pytest.raises(AlphaOutOfRange):
        sep_uniform(two_point(), 1, 0.0)
    with pytest.raises(AlphaOutOfRange):
        sep_uniform(two_point(), 2, 0.4)
    with pytest.raises(BadKappa):
        sep_uniform(two_point(), 0, 0.3)


@pytest.mark.parametrize("seed", range(5))
def test_sep_uniform_antitone_in_alpha(seed):
    rng = np.random.default_rng(100 + seed)
    sp = euclidean_space(rng.random((6, 2)) * 2)
    values = [sep_uniform(sp, 1, a).lower for a in (0.1, 0.2, 0.3, 0.45)]
    assert all(values[i] >= values[i + 1] - 1e-12 for i in range(len(values) - 1))


@pytest.mark.parametrize("seed", range(5))
def test_sep_antitone_componentwise(seed):
    rng = np.random.default_rng(200 + seed)
    sp = euclidean_space(rng.random((7, 2)) * 2)
    lo = (0.15, 0.1)
    hi = (0.3, 0.25)
    assert (
        sep(SepQuery(sp, hi)).lower <= sep(SepQuery(sp, lo)).lower + 1e-12
    )


def test_sep_bounded_by_diameter():
    rng = np.random.default_rng(5)
    for _ in range(4):
        sp = euclidean_space(rng.random((6, 2)) * 4)
        assert sep(SepQuery(sp, (0.2, 0.2))).lower <= sp.diameter() + 1e-12


def test_sep_isometry_invariant():
    rng = np.random.default_rng(6)
    sp = euclidean_space(rng.random((7, 2)) * 2)
    perm = rng.permutation(7)
    shuffled = validate_space(
        range(7), sp.dist[np.ix_(perm, perm)], sp.weights[perm]
    )
    for kappas in [(0.3, 0.3), (0.2, 0.2, 0.2)]:
        assert sep(SepQuery(sp, kappas)).lower == pytest.approx(
            sep(SepQuery(shuffled, kappas)).lower, abs=1e-12
        )


@pytest.mark.parametrize("seed", range(5))
def test_sep_pushforward_monotone(seed):
    # a 1-Lipschitz map can only pull sets closer together
    rng = np.random.default_rng(300 + seed)
    sp = euclidean_space(rng.random((6, 2)) * 3)
    f = sp.dist[:, 0]  # distance to a base point is 1-Lipschitz
    pf = pushforward(sp, f)
    vals = sorted(pf)
    image = line_space(vals, [pf[v] for v in vals])
    kappas = (0.25, 0.25)
    assert (
        sep(SepQuery(image, kappas)).lower
        <= sep(SepQuery(sp, kappas)).lower + 1e-12
    )


# ---- single-threshold decision -------------------------------------------------


def test_separation_at_least_beyond_sweep_cap():
    xs = np.concatenate([np.arange(10) * 0.05, 10 + np.arange(10) * 0.05])
    sp = line_space(xs)
    found = separation_at_least(sp, (0.5, 0.5), 5.0)
    assert found is not None
    assert verify_sep_witness(sp, (0.5, 0.5), 5.0, found)
    assert separation_at_least(sp, (0.5, 0.5), 20.0) is None


def test_separation_at_least_rejects_bad_arguments():
    with pytest.raises(ValueError):
        separation_at_least(two_point(), (0.5, 0.5), 0.0)
    with pytest.raises(BadKappa):
        separation_at_least(two_point(), (0.5,), 0.5)


def test_separation_at_least_budget():
    rng = np.random.default_rng(7)
    sp = euclidean_space(rng.random((12, 2)))
    with pytest.raises(TooLargeForExact):
        separation_at_least(sp, (0.4, 0.4), 0.05, node_budget=2)


# ---- bracket mode --------------------------------------------------------------


def hub_space():
    # one point near everything, one far pair; first-fit grabs the hub
    # and then cannot finish, so the greedy lower bound is not tight
    d = np.array(
        [
            [0.0, 1.0, 1.0, 1.0],
            [1.0, 0.0, 1.0, 1.0],
            [1.0, 1.0, 0.0, 5.0],
            [1.0, 1.0, 5.0, 0.0],
        ]
    )
    return validate_space(range(4), d, np.full(4, 0.25), mode="pseudo")


def test_bracket_contains_exact():
    rng = np.random.default_rng(8)
    for _ in range(6):
        sp = euclidean_space(rng.random((7, 2)) * 2)
        kappas = (0.25, 0.25)
        exact = sep(SepQuery(sp, kappas)).lower
        res = sep(SepQuery(sp, kappas), effort="bracket")
        assert res.lower <= exact + 1e-12 <= res.upper + 2e-12
        assert verify_sep_witness(sp, kappas, res.lower, res.witness)


def test_bracket_greedy_can_be_loose():
    sp = hub_space()
    exact = sep(SepQuery(sp, (0.25, 0.25)))
    assert exact.lower == 5.0
    res = sep(SepQuery(sp, (0.25, 0.25)), effort="bracket")
    assert res.lower < 5.0 <= res.upper
    assert not res.exact


def test_bracket_accepts_provided_witness():
    sp = hub_space()
    res = sep(
        SepQuery(sp, (0.25, 0.25)), effort="bracket", witness=((2,), (3,))
    )
    assert res.lower == 5.0 and res.exact


def test_bracket_rejects_invalid_witness():
    with pytest.raises(BadKappa):
        sep(
            SepQuery(two_point(), (0.5, 0.5)),
            effort="bracket",
            witness=((0,), ()),
        )


def test_bracket_mass_overflow_is_exact_zero():
    res = sep(SepQuery(two_point(), (0.7, 0.7)), effort="bracket")
    assert res.exact and res.lower == res.upper == 0.0


def test_bracket_beyond_exact_cap():
    sp = line_space(np.arange(30, dtype=float))
    res = sep(SepQuery(sp, (0.3, 0.3)), effort="bracket")
    assert 0 < res.lower <= res.upper <= sp.diameter()


def test_sep_rejects_unknown_effort():
    with pytest.raises(ValueError):
        sep(SepQuery(two_point(), (0.5, 0.5)), effort="fast")


# ---- rational reduction --------------------------------------------------------


def test_reduce_half_quarter():
    red = reduce_to_uniform((Fraction(1, 2), Fraction(1, 4)))
    assert red.alpha == Fraction(1, 4)
    assert red.ell == 2
    assert red.plan == ((0, 1), (2,))


def test_reduce_three_tenths_pair():
    red = reduce_to_uniform((Fraction(3, 10), Fraction(3, 10)))
    assert red.alpha == Fraction(1, 10)
    assert red.ell == 5
    assert red.plan == ((0, 1, 2), (3, 4, 5))


def test_reduce_rejects_sum_one():
    with pytest.raises(BadKappa):
        reduce_to_uniform((Fraction(1, 3),) * 3)


def test_reduce_rejects_floats():
    with pytest.raises(NotRational):
        reduce_to_uniform((0.5, 0.25))


def test_reduce_accepts_strings():
    red = reduce_to_uniform(("3/10", "3/10"))
    assert red.alpha == Fraction(1, 10)


def test_reduce_alpha_below_uniform_bound():
    red = reduce_to_uniform((Fraction(2, 7), Fraction(1, 7), Fraction(3, 7)))
    assert red.alpha < Fraction(1, red.ell + 1)
    assert red.plan == ((0, 1), (2,), (3, 4, 5))


@pytest.mark.parametrize("seed", range(4))
def test_reduction_soundness(seed):
    # Sep at the original thresholds dominates the uniform Sep, and a
    # grouped uniform witness is a witness for the original thresholds
    rng = np.random.default_rng(400 + seed)
    sp = euclidean_space(rng.random((6, 2)) * 4)
    kappas = (Fraction(1, 2), Fraction(1, 4))
    red = reduce_to_uniform(kappas)
    uni = sep(
        SepQuery(sp, (float(red.alpha),) * (red.ell + 1)),
        exact_m_cap=red.ell,
    )
    orig = sep(SepQuery(sp, tuple(map(float, kappas))))
    assert orig.lower >= uni.lower - 1e-12
    grouped = group_witness(red.plan, uni.witness)
    assert verify_sep_witness(sp, tuple(map(float, kappas)), uni.lower, grouped)


# ---- dissipation report --------------------------------------------------------


def test_dissipation_refutes_on_point_spaces():
    rep = dissipation_report([one_point_space()] * 3, 0.5, [(1, 0.4)])
    assert rep.summary == {"m=1,alpha=0.4": "refutes"}
    assert all(row[6] == "refutes" for row in rep.rows)


def test_dissipation_refutes_when_delta_beats_diameter():
    rep = dissipation_report([two_point()] * 3, 2.0, [(1, 0.4)])
    assert rep.summary["m=1,alpha=0.4"] == "refutes"


def test_dissipation_supports_when_all_lowers_reach_delta():
    rep = dissipation_report([two_point()] * 4, 0.5, [(1, 0.4)])
    assert rep.summary["m=1,alpha=0.4"] == "supports"
    assert len(rep.rows) == 4
    assert all(row[5] for row in rep.rows)  # exact column


def test_dissipation_inconclusive_on_loose_bracket():
    rep = dissipation_report([hub_space()], 5.0, [(1, 0.25)], effort="bracket")
    assert rep.summary["m=1,alpha=0.25"] == "inconclusive"


def test_dissipation_uses_provided_witnesses():
    rep = dissipation_report(
        [hub_space()],
        5.0,
        [(1, 0.25)],
        effort="bracket",
        witnesses={(0, 0): ((2,), (3,))},
    )
    assert rep.summary["m=1,alpha=0.25"] == "supports"


def test_dissipation_report_shape():
    rep = dissipation_report([two_point()] * 2, 0.5, [(1, 0.4), (1, 0.3)])
    assert rep.columns == (
        "space_index",
        "m",
        "alpha",
        "lower",
        "upper",
        "exact",
        "verdict",
    )
    assert len(rep.rows) == 4
    assert len(rep.series) == 2
    text = render_csv(rep)
    assert text.splitlines()[0] == "space_index,m,alpha,lower,upper,exact,verdict"
    assert "scope: finite-prefix evidence" in rep.provenance


def test_dissipation_rejects_bad_delta():
    with pytest.raises(ValueError):
        dissipation_report([two_point()], 0.0, [(1, 0.4)])
