"""Packing invariants on finite (pseudo-)metric spaces.

capacity finds the largest eps-discrete subset (pairwise distances
strictly above eps). gh_exact computes the Gromov-Hausdorff distance of
two small spaces through the correspondence identity; gh_lower_capacity
certifies a lower bound from capacity gaps when exact search is out of
reach. lip_net enumerates grid-valued Lipschitz functions and equips
them with the Ky Fan metric, which is what observable_lower feeds to the
GH machinery to bound the observable distance between two spaces from
below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import NetTooLarge, NonpositiveEps, TooLarge
from .mmcore import FiniteMMSpace, ky_fan_matrix, restrict_support

__all__ = [
    "CapacityResult",
    "GHResult",
    "FunctionNet",
    "ObservableLowerBound",
    "capacity",
    "gh_exact",
    "gh_bracket",
    "gh_lower_capacity",
    "lip_net",
    "observable_lower",
]

LIP_TOL = 1e-9


def _as_matrix(space_or_dist) -> np.ndarray:
    if isinstance(space_or_dist, FiniteMMSpace):
        return space_or_dist.dist
    m = np.asarray(space_or_dist, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square distance matrix or a space")
    return m


# ---- capacity ----------------------------------------------------------------


@dataclass(frozen=True)
class CapacityResult:
    """Size of an eps-discrete subset and the subset itself (as indices).

    lower_bound_only marks values from the greedy fallback (space larger
    than the exact cap) or from an early-stopped search; those are valid
    lower bounds, not maxima.
    """

    value: int
    witness: tuple
    eps: float
    lower_bound_only: bool = False


def _max_clique(adj: np.ndarray, target: Optional[int] = None):
    """Maximum clique via branch and bound with a greedy coloring bound.

    Returns (witness list, stopped_early). Deterministic: vertices enter
    in degree order and the first maximum found is kept.
    """
    n = adj.shape[0]
    nbr = [frozenset(np.flatnonzero(adj[i]).tolist()) for i in range(n)]
    deg = adj.sum(axis=1)
    start = sorted(range(n), key=lambda v: (-deg[v], v))
    best: list = []
    state = {"hit": False}

    def expand(clique: list, cand: list) -> None:
        nonlocal best
        if state["hit"]:
            return
        if not cand:
            if len(clique) > len(best):
                best = clique.copy()
                if target is not None and len(best) >= target:
                    state["hit"] = True
            return
        # greedy coloring; a clique can use at most one vertex per class
        classes: list = []
        for v in cand:
            for cls in classes:
                if not any(u in nbr[v] for u in cls):
                    cls.append(v)
                    break
            else:
                classes.append([v])
        order: list = []
        bound: list = []
        for ci, cls in enumerate(classes, start=1):
            for v in cls:
                order.append(v)
                bound.append(ci)
        for i in range(len(order) - 1, -1, -1):
            if state["hit"]:
                return
            if len(clique) + bound[i] <= len(best):
                return
            v = order[i]
            clique.append(v)
            if target is not None and len(clique) > len(best) and len(clique) >= target:
                best = clique.copy()
                state["hit"] = True
                clique.pop()
                return
            expand(clique, [u for u in order[:i] if u in nbr[v]])
            clique.pop()

    expand([], start)
    return best, state["hit"]


def _greedy_clique(adj: np.ndarray) -> list:
    # highest degree first, ties by index; keep whatever stays compatible
    n = adj.shape[0]
    deg = adj.sum(axis=1)
    order = sorted(range(n), key=lambda v: (-deg[v], v))
    chosen: list = []
    for v in order:
        if all(adj[v, u] for u in chosen):
            chosen.append(v)
    return chosen


def _discrete_set_size(
    d: np.ndarray, thr: float, strict: bool, exact_cap: int, target: Optional[int] = None
):
    """(size, witness, is_exact) for the largest subset with pairwise
    distances > thr (strict) or >= thr."""
    adj = d > thr if strict else d >= thr
    adj = np.asarray(adj, dtype=bool).copy()
    np.fill_diagonal(adj, False)
    if adj.shape[0] <= exact_cap:
        wit, stopped = _max_clique(adj, target)
        return len(wit), tuple(sorted(wit)), not stopped
    wit = _greedy_clique(adj)
    return len(wit), tuple(sorted(wit)), False


def capacity(
    space_or_dist,
    eps: float,
    exact_cap: int = 64,
    target: Optional[int] = None,
) -> CapacityResult:
    """Largest number of points with pairwise distances strictly above eps.

    Exact (branch and bound) up to exact_cap points, greedy beyond that.
    A target stops the search as soon as a subset of that size is found;
    the result is then flagged as a lower bound.
    """
    if eps <= 0:
        raise NonpositiveEps(f"eps must be positive, got {eps}")
    d = _as_matrix(space_or_dist)
    size, wit, is_exact = _discrete_set_size(d, eps, True, exact_cap, target)
    return CapacityResult(size, wit, eps, lower_bound_only=not is_exact)


# ---- Gromov-Hausdorff --------------------------------------------------------


@dataclass(frozen=True)
class GHResult:
    lower: float
    upper: float
    exact: bool
    witness: Optional[frozenset] = None


def gh_exact(space_m, space_n, size_limit: int = 8) -> GHResult:
    """Gromov-Hausdorff distance as half the minimal correspondence distortion.

    Searches assignments phi of every row point to a column point, then
    assignments of the columns phi missed; every correspondence contains
    a sub-correspondence of that shape with no larger distortion, so the
    minimum over the family is the true minimum. Branch and bound on the
    running distortion.
    """
    dm = _as_matrix(space_m)
    dn = _as_matrix(space_n)
    if len(dm) == 0 or len(dn) == 0:
        raise ValueError("spaces must be nonempty")
    if max(len(dm), len(dn)) > size_limit:
        raise TooLarge(
            f"correspondence search over {len(dm)}x{len(dn)} exceeds limit {size_limit}"
        )
    swapped = len(dm) < len(dn)
    da, db = (dn, dm) if swapped else (dm, dn)
    a, b = len(da), len(db)
    phi = [0] * a
    best = [math.inf]
    best_pairs: list = [None]

    def finish_uncovered(uncovered: list, psi: list, k: int, cur: float) -> None:
        if k == len(uncovered):
            if cur < best[0]:
                best[0] = cur
                pairs = [(i, phi[i]) for i in range(a)]
                pairs += [(psi[t], uncovered[t]) for t in range(len(uncovered))]
                best_pairs[0] = pairs
            return
        j = uncovered[k]
        for r in range(a):
            m = cur
            for i in range(a):
                m = max(m, abs(da[r, i] - db[j, phi[i]]))
                if m >= best[0]:
                    break
            if m >= best[0]:
                continue
            for t in range(k):
                m = max(m, abs(da[r, psi[t]] - db[j, uncovered[t]]))
                if m >= best[0]:
                    break
            if m >= best[0]:
                continue
            psi.append(r)
            finish_uncovered(uncovered, psi, k + 1, m)
            psi.pop()

    def assign(i: int, cur: float) -> None:
        if i == a:
            uncovered = [j for j in range(b) if j not in phi[:a]]
            finish_uncovered(uncovered, [], 0, cur)
            return
        for j in range(b):
            m = cur
            for i2 in range(i):
                m = max(m, abs(da[i, i2] - db[j, phi[i2]]))
                if m >= best[0]:
                    break
            if m >= best[0]:
                continue
            phi[i] = j
            assign(i + 1, m)
        phi[i] = 0

    assign(0, 0.0)
    dis = best[0]
    pairs = best_pairs[0]
    if swapped:
        pairs = [(j, i) for (i, j) in pairs]
    value = dis / 2.0
    return GHResult(value, value, True, frozenset(pairs))


def gh_lower_capacity(space_m, space_n, exact_cap: int = 64) -> float:
    """Certified lower bound on the GH distance from capacity gaps.

    If some subset of M has k points pairwise >= v apart while N cannot
    fit k points pairwise > u apart (u < v), any correspondence must
    distort some pair by at least v - u, so GH >= (v - u)/2. The left
    side may be a greedy lower bound; the right side must be exact, so a
    direction whose right space exceeds exact_cap is skipped.
    """
    dm = _as_matrix(space_m)
    dn = _as_matrix(space_n)
    return max(
        0.0,
        _capacity_gap_direction(dm, dn, exact_cap),
        _capacity_gap_direction(dn, dm, exact_cap),
    )


def _capacity_gap_direction(da: np.ndarray, db: np.ndarray, exact_cap: int) -> float:
    if len(db) > exact_cap:
        return 0.0
    if len(da) < 2:
        return 0.0
    vs = np.unique(da[np.triu_indices(len(da), 1)])
    vs = vs[vs > 0][::-1]
    if len(db) < 2:
        us = np.array([0.0])
    else:
        us = np.unique(np.concatenate([[0.0], db[np.triu_indices(len(db), 1)]]))
    cap_b_memo: dict = {}

    def cap_b(u: float) -> int:
        if u not in cap_b_memo:
            size, _, is_exact = _discrete_set_size(db, u, True, exact_cap)
            assert is_exact
            cap_b_memo[u] = size
        return cap_b_memo[u]

    best = 0.0
    prev_size = None
    for v in vs:
        if v / 2.0 <= best:
            break
        size, _, _ = _discrete_set_size(da, v, False, exact_cap)
        if size == prev_size or size <= 1:
            continue
        prev_size = size
        # cap_b is nonincreasing in u; find the smallest u it drops below size
        lo, hi = 0, len(us)
        while lo < hi:
            mid = (lo + hi) // 2
            if cap_b(float(us[mid])) < size:
                hi = mid
            else:
                lo = mid + 1
        if lo == len(us):
            continue
        u = float(us[lo])
        if u < v:
            best = max(best, (v - u) / 2.0)
    return best


def gh_bracket(space_m, space_n, exact_cap: int = 64) -> GHResult:
    """Bracket for spaces beyond the exact-search limit: capacity-gap
    lower bound, full-correspondence upper bound of half the larger
    diameter."""
    dm = _as_matrix(space_m)
    dn = _as_matrix(space_n)
    lower = gh_lower_capacity(dm, dn, exact_cap)
    upper = max(dm.max(initial=0.0), dn.max(initial=0.0)) / 2.0
    return GHResult(lower, max(lower, upper), lower == upper)


# ---- Lipschitz nets ----------------------------------------------------------


@dataclass(frozen=True)
class FunctionNet:
    """Every grid-valued ell-Lipschitz function bounded by s, with the
    pairwise Ky Fan distances of the base measure."""

    base: FiniteMMSpace
    ell: float
    s: float
    grid_step: float
    members: np.ndarray  # (count, points) value rows
    metric: np.ndarray  # (count, count) Ky Fan distances

    def __len__(self) -> int:
        return len(self.members)


def lip_net(
    space: FiniteMMSpace,
    ell: float,
    s: float,
    grid_step: float,
    max_members: int = 4096,
) -> FunctionNet:
    """Enumerate all functions with values on the grid

        {-s, -s + grid_step, ..., s}

    whose increments respect |f(x) - f(y)| <= ell * d(x, y) + 1e-9.

    The enumeration is exhaustive over the grid, so the net contains
    every grid-valued member of the Lipschitz ball. Aborts with
    NetTooLarge once more than max_members functions exist.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    if ell < 0 or s < 0:
        raise ValueError("ell and s must be nonnegative")
    n = space.n
    levels = int(math.floor(2 * s / grid_step + 1e-9)) + 1
    grid = -s + grid_step * np.arange(levels)
    d = space.dist
    out: list = []
    vals = np.empty(n)

    def dfs(i: int) -> None:
        if i == n:
            if len(out) >= max_members:
                raise NetTooLarge(max_members, max_members)
            out.append(vals.copy())
            return
        lo, hi = -s, s
        for j in range(i):
            r = ell * d[i, j] + LIP_TOL
            lo = max(lo, vals[j] - r)
            hi = min(hi, vals[j] + r)
        if lo > hi:
            return
        k_lo = max(0, int(math.ceil((lo + s) / grid_step - 1e-12)))
        k_hi = min(levels - 1, int(math.floor((hi + s) / grid_step + 1e-12)))
        for k in range(k_lo, k_hi + 1):
            vals[i] = grid[k]
            dfs(i + 1)

    dfs(0)
    members = np.array(out) if out else np.empty((0, n))
    members.setflags(write=False)
    metric = ky_fan_matrix(space.weights, members)
    metric.setflags(write=False)
    return FunctionNet(space, float(ell), float(s), float(grid_step), members, metric)


# ---- observable distance lower bound -----------------------------------------


@dataclass(frozen=True)
class ObservableLowerBound:
    """Lower bound on the observable distance between two spaces.

    value is the usable bound: the GH bound on the function nets divided
    by ell, minus the grid slack, clamped at zero. gh_bound keeps the
    undiscounted net-level quantity; exact_gh says whether it came from
    the exact correspondence search or from the capacity gap.
    """

    value: float
    slack: float
    gh_bound: float
    exact_gh: bool
    net_sizes: tuple


def observable_lower(
    space_x: FiniteMMSpace,
    space_y: FiniteMMSpace,
    ell: float = 1.0,
    s: float = 1.0,
    grid_step: float = 0.25,
    max_members: int = 4096,
    gh_size_limit: int = 8,
    exact_cap: int = 64,
) -> ObservableLowerBound:
    """Bound the observable distance between two spaces from below.

    Builds the grid Lipschitz nets of both spaces under their Ky Fan
    metrics and bounds the GH distance between the nets; transporting
    functions across a parametrization changes Ky Fan distances by at
    most ell times the observable distance, so the net-level GH bound
    divided by ell, less the grid discretization slack, bounds the
    observable distance. Requires ell >= 1 so the slack, which lives at
    function level, is not shrunk by the division.
    """
    if ell < 1:
        raise ValueError("ell must be at least 1")
    space_x = restrict_support(space_x)
    space_y = restrict_support(space_y)
    net_x = lip_net(space_x, ell, s, grid_step, max_members)
    net_y = lip_net(space_y, ell, s, grid_step, max_members)
    if max(len(net_x), len(net_y)) <= gh_size_limit:
        res = gh_exact(net_x.metric, net_y.metric, size_limit=gh_size_limit)
        bound, exact = res.lower, True
    else:
        bound, exact = gh_lower_capacity(net_x.metric, net_y.metric, exact_cap), False
    value = max(0.0, bound / ell - grid_step)
    return ObservableLowerBound(
        value, grid_step, bound, exact, (len(net_x), len(net_y))
    )
