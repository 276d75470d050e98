"""Separation distances on finite metric measure spaces.

Sep(X; kappa_0..kappa_m) is the largest delta such that m+1 sets of
masses at least kappa_i exist whose cross-pair distances all reach
delta. On a finite space the value is always either 0 or one of the
pairwise distances, so the exact solver sweeps candidate thresholds
descending and decides feasibility per threshold with a pruned labeled
search. Overlapping set tuples only ever realize delta = 0 (a shared
point is a cross pair at distance zero), so the search may restrict to
disjoint tuples, which is what point labeling enumerates.

reduce_to_uniform implements the reduction of a rational-threshold query
to many equal thresholds 1/q; dissipation_report applies the machinery
along a sequence of spaces and issues finite-prefix verdicts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Integral
from typing import Optional, Sequence

import numpy as np

from .errors import AlphaOutOfRange, BadKappa, NotRational, TooLargeForExact
from .mmcore import FiniteMMSpace
from .packing import _discrete_set_size
from .reports import Report, TAG_EXACT, TAG_LOWER

__all__ = [
    "SepQuery",
    "SepBracket",
    "ReducedQuery",
    "sep",
    "sep_uniform",
    "separation_at_least",
    "reduce_to_uniform",
    "verify_sep_witness",
    "dissipation_report",
]

MASS_TOL = 1e-12
DIST_TOL = 1e-12


@dataclass(frozen=True)
class SepQuery:
    """A space with mass thresholds kappa_0..kappa_m, m >= 1."""

    space: FiniteMMSpace
    kappas: tuple

    def __post_init__(self):
        kappas = tuple(float(k) for k in self.kappas)
        object.__setattr__(self, "kappas", kappas)
        if len(kappas) < 2:
            raise BadKappa("need at least two mass thresholds (m >= 1)")
        if any(k <= 0 for k in kappas):
            raise BadKappa("every mass threshold must be positive")

    @property
    def m(self) -> int:
        return len(self.kappas) - 1


@dataclass(frozen=True)
class SepBracket:
    """Certified bracket for a separation value.

    witness, when present, is a tuple of index tuples realizing lower:
    masses reach the thresholds and cross pairs are at least lower
    apart. exact means lower = upper = the separation distance.
    """

    lower: float
    upper: float
    exact: bool
    witness: Optional[tuple] = None


def verify_sep_witness(space: FiniteMMSpace, kappas, delta: float, groups) -> bool:
    """Independent check: masses >= kappa_i and cross distances >= delta."""
    groups = [tuple(g) for g in groups]
    if len(groups) != len(kappas):
        return False
    for g, k in zip(groups, kappas):
        if space.mass(g) < k - MASS_TOL:
            return False
    for a in range(len(groups)):
        for b in range(a + 1, len(groups)):
            for p in groups[a]:
                for q in groups[b]:
                    if space.dist[p, q] < delta - DIST_TOL:
                        return False
    return True


def _witness_cross_distance(space: FiniteMMSpace, groups) -> float:
    best = math.inf
    for a in range(len(groups)):
        for b in range(a + 1, len(groups)):
            for p in groups[a]:
                for q in groups[b]:
                    best = min(best, float(space.dist[p, q]))
    return 0.0 if best is math.inf else best


def _candidate_thresholds(space: FiniteMMSpace) -> np.ndarray:
    if space.n < 2:
        return np.empty(0)
    vals = np.unique(space.dist[np.triu_indices(space.n, 1)])
    return vals[vals > 0][::-1]


def _feasible_at(
    space: FiniteMMSpace,
    kappas: Sequence[float],
    delta: float,
    node_budget: int,
) -> Optional[tuple]:
    """Labeled feasibility search at one threshold.

    Points are visited in weight order; each goes to an unmet group it
    is compatible with, or is discarded. Assigning a point to a group
    that already met its threshold is dominated by discarding it, so
    those branches are skipped. Prunes on total remaining mass, on
    per-group reachable mass, and on a compatibility mask maintained per
    point (a point within delta of a member of group j can only ever
    join group j).
    """
    d = space.dist
    w = space.weights
    n = space.n
    g_count = len(kappas)
    full_mask = (1 << g_count) - 1
    order = sorted(range(n), key=lambda i: (-w[i], i))
    suffix = np.zeros(n + 1)
    for k in range(n - 1, -1, -1):
        suffix[k] = suffix[k + 1] + w[order[k]]
    close = d < delta - DIST_TOL  # cross pairs must reach delta
    groups: list = [[] for _ in range(g_count)]
    deficits = [float(k) for k in kappas]
    masks = [full_mask] * n
    nodes = [0]

    def reachable_ok(k: int) -> bool:
        # every unmet group must still be able to collect its deficit
        need = [def_ for def_ in deficits]
        pot = [0.0] * g_count
        for t in range(k, n):
            p = order[t]
            mp = masks[p]
            for i in range(g_count):
                if need[i] > MASS_TOL and (mp >> i) & 1:
                    pot[i] += w[p]
        return all(pot[i] >= need[i] - MASS_TOL for i in range(g_count) if need[i] > MASS_TOL)

    def dfs(k: int) -> Optional[tuple]:
        nodes[0] += 1
        if nodes[0] > node_budget:
            raise TooLargeForExact(
                f"feasibility search exceeded {node_budget} nodes at delta={delta}"
            )
        if all(def_ <= MASS_TOL for def_ in deficits):
            return tuple(tuple(sorted(g)) for g in groups)
        if k == n:
            return None
        total_deficit = sum(max(def_, 0.0) for def_ in deficits)
        if suffix[k] < total_deficit - MASS_TOL:
            return None
        if not reachable_ok(k):
            return None
        p = order[k]
        for i in range(g_count):
            if deficits[i] <= MASS_TOL or not (masks[p] >> i) & 1:
                continue
            groups[i].append(p)
            deficits[i] -= w[p]
            touched = []
            only_i = 1 << i
            for t in range(k + 1, n):
                q = order[t]
                if close[p, q] and masks[q] & ~only_i:
                    touched.append((q, masks[q]))
                    masks[q] &= only_i
            res = dfs(k + 1)
            if res is not None:
                return res
            for q, old in touched:
                masks[q] = old
            deficits[i] += w[p]
            groups[i].pop()
        return dfs(k + 1)  # discard p

    return dfs(0)


def separation_at_least(
    space: FiniteMMSpace,
    kappas,
    delta: float,
    node_budget: int = 400_000,
) -> Optional[tuple]:
    """Exact single-threshold decision: a witness tuple if sets of the
    requested masses exist with cross distances >= delta, else None.

    Unlike the full sweep this has no point-count cap; the node budget
    is the only guard, and blowing it raises TooLargeForExact.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    kappas = tuple(float(k) for k in kappas)
    if len(kappas) < 2 or any(k <= 0 for k in kappas):
        raise BadKappa("thresholds must be positive and m >= 1")
    if sum(kappas) > 1 + MASS_TOL:
        return None
    # cheap necessary condition: enough mutually far points must exist
    size, _, _ = _discrete_set_size(
        space.dist, delta, False, space.n, target=len(kappas)
    )
    if size < len(kappas):
        return None
    return _feasible_at(space, kappas, delta, node_budget)


def _greedy_witness(
    space: FiniteMMSpace, kappas: Sequence[float], delta: float
) -> Optional[tuple]:
    d = space.dist
    w = space.weights
    order = sorted(range(space.n), key=lambda i: (-w[i], i))
    groups: list = [[] for _ in kappas]
    deficits = [float(k) for k in kappas]
    for p in order:
        for i in range(len(kappas)):
            if deficits[i] <= MASS_TOL:
                continue
            ok = all(
                d[p, q] >= delta - DIST_TOL
                for j in range(len(kappas))
                if j != i
                for q in groups[j]
            )
            if ok:
                groups[i].append(p)
                deficits[i] -= w[p]
                break
        if all(def_ <= MASS_TOL for def_ in deficits):
            return tuple(tuple(sorted(g)) for g in groups)
    return None


def _dispersion_upper(space: FiniteMMSpace, count: int) -> float:
    """Largest delta such that `count` points are pairwise >= delta apart.

    A qualifying tuple donates one point per set, so this is a certified
    upper bound for the separation distance. Exact search with an early
    target; binary search over the distance values.
    """
    cands = _candidate_thresholds(space)  # descending
    if len(cands) == 0:
        return 0.0

    def feasible(delta: float) -> bool:
        size, _, _ = _discrete_set_size(space.dist, delta, False, space.n, target=count)
        return size >= count

    if feasible(float(cands[0])):
        return float(cands[0])
    lo, hi = 0, len(cands) - 1  # cands[lo] infeasible side after the check above
    if not feasible(float(cands[hi])):
        return 0.0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if feasible(float(cands[mid])):
            hi = mid
        else:
            lo = mid
    return float(cands[hi])


def _trivial_witness(space: FiniteMMSpace, kappas) -> Optional[tuple]:
    if any(k > 1 + MASS_TOL for k in kappas):
        return None
    allpts = tuple(range(space.n))
    return tuple(allpts for _ in kappas)


def sep(
    query: SepQuery,
    effort: str = "exact",
    witness=None,
    exact_points_cap: int = 16,
    exact_m_cap: int = 3,
    node_budget: int = 400_000,
) -> SepBracket:
    """Separation distance of the query, exactly or as a bracket.

    exact: threshold sweep, descending, first feasible distance wins;
    0 when no threshold is feasible (sup over an empty or overlapping
    family). bracket: certified lower bound from the provided witness
    and a greedy construction, upper bound from point dispersion.
    """
    space = query.space
    kappas = query.kappas
    if effort == "exact":
        if space.n > exact_points_cap:
            raise TooLargeForExact(
                f"{space.n} points exceeds the exact cap {exact_points_cap}"
            )
        if query.m > exact_m_cap:
            raise TooLargeForExact(f"m={query.m} exceeds the exact cap {exact_m_cap}")
        if sum(kappas) <= 1 + MASS_TOL:
            for delta in _candidate_thresholds(space):
                found = separation_at_least(space, kappas, float(delta), node_budget)
                if found is not None:
                    return SepBracket(float(delta), float(delta), True, found)
        return SepBracket(0.0, 0.0, True, _trivial_witness(space, kappas))
    if effort != "bracket":
        raise ValueError(f"unknown effort {effort!r}")

    lower = 0.0
    best_witness = _trivial_witness(space, kappas)
    if witness is not None:
        groups = tuple(tuple(g) for g in witness)
        cross = _witness_cross_distance(space, groups)
        if not verify_sep_witness(space, kappas, cross, groups):
            raise BadKappa("provided witness is not a valid separation witness")
        if cross > lower:
            lower, best_witness = cross, groups
    if sum(kappas) > 1 + MASS_TOL:
        # disjoint tuples are impossible, overlapping ones realize 0
        upper = 0.0
        return SepBracket(lower, upper, lower == upper, best_witness)
    for delta in _candidate_thresholds(space):
        if delta <= lower:
            break
        found = _greedy_witness(space, kappas, float(delta))
        if found is not None:
            cross = _witness_cross_distance(space, found)
            if cross > lower:
                lower, best_witness = cross, found
            break
    upper = _dispersion_upper(space, len(kappas))
    upper = max(upper, lower)
    return SepBracket(lower, upper, lower == upper, best_witness)


def sep_uniform(
    space: FiniteMMSpace,
    m: int,
    alpha: float,
    effort: str = "exact",
    **kwargs,
) -> SepBracket:
    """Separation with m+1 equal thresholds alpha, alpha in (0, 1/(m+1))."""
    if not isinstance(m, Integral) or m < 1:
        raise BadKappa("m must be an integer >= 1")
    alpha = float(alpha)
    if not 0 < alpha < 1 / (m + 1):
        raise AlphaOutOfRange(f"alpha must lie in (0, 1/{m + 1}), got {alpha}")
    return sep(SepQuery(space, (alpha,) * (m + 1)), effort, **kwargs)


@dataclass(frozen=True)
class ReducedQuery:
    """Uniform stand-in for a rational-threshold query.

    alpha = 1/q, ell + 1 = sum of numerators; plan maps the ell+1
    uniform blocks onto the original thresholds: merging the blocks
    listed in plan[i] yields a set of mass >= kappa_i.
    """

    alpha: Fraction
    ell: int
    plan: tuple


def reduce_to_uniform(kappas) -> ReducedQuery:
    """Reduce thresholds p_i/q over a common denominator to the uniform
    query with ell+1 = sum(p_i) thresholds of alpha = 1/q each.

    Requires exact rationals with sum < 1; grouping any uniform witness
    per the plan yields a witness for the original thresholds at the
    same separation threshold.
    """
    fracs = []
    for k in kappas:
        if isinstance(k, float):
            raise NotRational(
                "thresholds must be exact rationals; round floats explicitly first"
            )
        try:
            fracs.append(Fraction(k))
        except (TypeError, ValueError) as e:
            raise NotRational(f"cannot read {k!r} as a rational") from e
    if len(fracs) < 2:
        raise BadKappa("need at least two thresholds")
    if any(f <= 0 for f in fracs):
        raise BadKappa("thresholds must be positive")
    if sum(fracs) >= 1:
        raise BadKappa("threshold sum must be strictly below 1")
    q = math.lcm(*(f.denominator for f in fracs))
    ps = [int(f * q) for f in fracs]
    ell = sum(ps) - 1
    alpha = Fraction(1, q)
    assert alpha < Fraction(1, ell + 1)
    plan = []
    at = 0
    for p in ps:
        plan.append(tuple(range(at, at + p)))
        at += p
    return ReducedQuery(alpha, ell, tuple(plan))


def group_witness(plan: Sequence, uniform_witness: Sequence) -> tuple:
    """Merge a uniform witness's blocks according to a reduction plan."""
    merged = []
    for block_ids in plan:
        pts: list = []
        for b in block_ids:
            pts.extend(uniform_witness[b])
        merged.append(tuple(sorted(pts)))
    return tuple(merged)


SUPPORTS = "supports"
REFUTES = "refutes"
INCONCLUSIVE = "inconclusive"


def dissipation_report(
    spaces: Sequence[FiniteMMSpace],
    delta: float,
    grid: Sequence,
    effort: str = "exact",
    witnesses: Optional[dict] = None,
    **kwargs,
) -> Report:
    """Evidence table for delta-dissipation along a sequence of spaces.

    grid lists (m, alpha) cells. Per cell the verdict is `supports` when
    every space's certified lower bound reaches delta, `refutes` when
    the last space's value is exact with an upper bound below delta, and
    `inconclusive` otherwise. All verdicts are finite-prefix evidence;
    nothing is claimed about the unseen tail of the sequence.

    witnesses, when given, maps (cell_index, space_index) to separation
    witnesses forwarded to the bracket solver.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    rows = []
    summary = {}
    series = []
    for ci, (m, alpha) in enumerate(grid):
        cell_rows = []
        for si, space in enumerate(spaces):
            provided = (witnesses or {}).get((ci, si))
            bracket = sep_uniform(
                space, m, float(alpha), effort, witness=provided, **kwargs
            )
            cell_rows.append((si, bracket))
            rows.append(
                (
                    si,
                    m,
                    float(alpha),
                    bracket.lower,
                    bracket.upper,
                    bracket.exact,
                    "",
                )
            )
        if all(b.lower >= delta - DIST_TOL for _, b in cell_rows):
            verdict = SUPPORTS
        elif cell_rows and cell_rows[-1][1].exact and cell_rows[-1][1].upper < delta:
            verdict = REFUTES
        else:
            verdict = INCONCLUSIVE
        start = len(rows) - len(cell_rows)
        for k in range(start, len(rows)):
            rows[k] = rows[k][:-1] + (verdict,)
        summary[f"m={m},alpha={alpha}"] = verdict
        series.append(
            (f"m={m},alpha={alpha}", tuple((si, b.lower) for si, b in cell_rows))
        )
    tags = sorted({TAG_EXACT if r[5] else TAG_LOWER for r in rows})
    provenance = (
        f"spaces: {len(spaces)}",
        f"delta: {delta!r}",
        f"effort: {effort}",
        f"tags: {'|'.join(tags)}",
        "scope: finite-prefix evidence",
    )
    return Report(
        title=f"dissipation at delta={delta:g}",
        columns=("space_index", "m", "alpha", "lower", "upper", "exact", "verdict"),
        rows=tuple(rows),
        summary=summary,
        provenance=provenance,
        series=tuple(series),
    )
