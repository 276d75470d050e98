"""Finite metric measure spaces and the metrics attached to them.

A space is a finite point list, a symmetric distance matrix, and a
probability weight vector. Real-valued functions on a space are plain
value arrays aligned with the point list; nothing in this module needs a
richer function type.

The distance between functions used throughout the package is the Ky Fan
distance for convergence in measure: the smallest eps such that the set
where two functions differ by more than eps has mass at most eps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    AsymmetricMatrix,
    NegativeDistance,
    NonzeroDiagonal,
    TriangleViolation,
    WeightsNotProbability,
)

__all__ = [
    "FiniteMMSpace",
    "Parametrization",
    "validate_space",
    "support",
    "restrict_support",
    "pushforward",
    "ky_fan",
    "ky_fan_matrix",
    "parametrize",
    "hausdorff_distance",
    "write_space",
    "read_space",
    "space_to_lines",
    "space_from_lines",
    "one_point_space",
]

TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FiniteMMSpace:
    """Immutable finite metric measure space.

    Attributes:
        points: opaque, hashable point identifiers.
        dist: symmetric nonnegative matrix, zero diagonal. For mode
            "metric" the triangle inequality holds within tolerance;
            mode "pseudo" drops that requirement and allows d(x,y) = 0
            for distinct points.
        weights: nonnegative, sums to 1 within 1e-9.
        weights_exact: optional exact rationals matching weights; kept
            by constructions whose masses are exact so certificate
            checks can avoid float arithmetic.
        sampled: True when the point list was subsampled from a larger
            carrier; such spaces are excluded from exactness claims.
    """

    points: tuple
    dist: np.ndarray
    weights: np.ndarray
    mode: str = "metric"
    sampled: bool = False
    weights_exact: Optional[tuple] = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def d(self, i: int, j: int) -> float:
        return float(self.dist[i, j])

    def diameter(self) -> float:
        return float(self.dist.max()) if self.n else 0.0

    def mass(self, idx: Iterable[int]) -> float:
        idx = list(idx)
        return float(self.weights[idx].sum()) if idx else 0.0

    def mass_exact(self, idx: Iterable[int]) -> Fraction:
        if self.weights_exact is None:
            raise ValueError("space carries no exact weights")
        return sum((self.weights_exact[i] for i in idx), Fraction(0))


def _check_triangle_full(d: np.ndarray) -> None:
    n = d.shape[0]
    for k in range(n):
        # d(i,j) <= d(i,k) + d(k,j), vectorized over (i,j) for fixed k
        slack = d[:, k][:, None] + d[k, :][None, :] - d
        if slack.min() < -TOL:
            i, j = np.unravel_index(np.argmin(slack), slack.shape)
            raise TriangleViolation(
                f"triangle fails at ({i},{k},{j}): "
                f"{d[i, j]:.12g} > {d[i, k]:.12g} + {d[k, j]:.12g}"
            )


def _check_triangle_sampled(d: np.ndarray, rng: np.random.Generator, count: int) -> None:
    n = d.shape[0]
    for k in rng.choice(n, size=min(count, n), replace=False):
        slack = d[:, k][:, None] + d[k, :][None, :] - d
        if slack.min() < -TOL:
            raise TriangleViolation(f"triangle fails through point {k}")


def validate_space(
    points: Sequence,
    dist,
    weights,
    mode: str = "metric",
    sampled: bool = False,
    weights_exact: Optional[Sequence[Fraction]] = None,
    triangle: str = "full",
    meta: Optional[dict] = None,
) -> FiniteMMSpace:
    """Validate raw data and build a FiniteMMSpace.

    triangle: "full" checks every triple (metric mode only), "sample"
    checks a random subset of midpoints (used by builders of large
    spaces whose metric is guaranteed by construction), "skip" trusts
    the caller.
    """
    if mode not in ("metric", "pseudo"):
        raise ValueError(f"unknown mode {mode!r}")
    points = tuple(points)
    d = np.asarray(dist, dtype=float)
    w = np.asarray(weights, dtype=float)
    n = len(points)
    if d.shape != (n, n):
        raise ValueError(f"distance matrix shape {d.shape} does not match {n} points")
    if w.shape != (n,):
        raise ValueError(f"weight vector shape {w.shape} does not match {n} points")
    if n and d.min() < 0:
        raise NegativeDistance(f"negative entry {d.min():.12g}")
    if n and np.abs(np.diag(d)).max() > TOL:
        raise NonzeroDiagonal("diagonal entries must vanish")
    if n and np.abs(d - d.T).max() > TOL:
        raise AsymmetricMatrix("matrix must be symmetric within 1e-9")
    if w.min(initial=0.0) < -TOL or (n and w.min() < 0 and w.min() > -TOL):
        w = np.clip(w, 0.0, None)
    if n and w.min() < 0:
        raise WeightsNotProbability("weights must be nonnegative")
    if abs(w.sum() - 1.0) > TOL:
        raise WeightsNotProbability(f"weights sum to {w.sum():.12g}, expected 1")
    if mode == "metric":
        if triangle == "full":
            _check_triangle_full(d)
        elif triangle == "sample":
            _check_triangle_sampled(d, np.random.default_rng(0), 48)
        elif triangle != "skip":
            raise ValueError(f"unknown triangle policy {triangle!r}")
    we = None
    if weights_exact is not None:
        we = tuple(Fraction(x) for x in weights_exact)
        if len(we) != n:
            raise ValueError("weights_exact length mismatch")
        if any(abs(float(a) - b) > 1e-12 for a, b in zip(we, w)):
            raise WeightsNotProbability("weights_exact disagrees with weights")
        if sum(we, Fraction(0)) != 1:
            raise WeightsNotProbability("weights_exact must sum to exactly 1")
    d = d.copy()
    d.setflags(write=False)
    w = w.copy()
    w.setflags(write=False)
    return FiniteMMSpace(points, d, w, mode, sampled, we, dict(meta or {}))


def one_point_space(label="pt") -> FiniteMMSpace:
    return validate_space(
        (label,), np.zeros((1, 1)), np.ones(1), weights_exact=(Fraction(1),)
    )


def support(space: FiniteMMSpace) -> set:
    """Points with strictly positive weight."""
    return {space.points[i] for i in np.flatnonzero(space.weights > 0)}


def support_indices(space: FiniteMMSpace) -> np.ndarray:
    return np.flatnonzero(space.weights > 0)


def restrict_support(space: FiniteMMSpace) -> FiniteMMSpace:
    """Drop zero-weight points; the result is fully supported."""
    idx = support_indices(space)
    if len(idx) == len(space):
        return space
    we = None
    if space.weights_exact is not None:
        we = tuple(space.weights_exact[i] for i in idx)
    return validate_space(
        [space.points[i] for i in idx],
        space.dist[np.ix_(idx, idx)],
        space.weights[idx],
        mode=space.mode,
        sampled=space.sampled,
        weights_exact=we,
        triangle="skip",
        meta=space.meta,
    )


def as_function(space: FiniteMMSpace, values) -> np.ndarray:
    f = np.asarray(values, dtype=float)
    if f.shape != (space.n,):
        raise ValueError(f"function has {f.shape} values, space has {space.n} points")
    return f


def pushforward(space: FiniteMMSpace, f) -> dict:
    """Distribution of f: maps each attained value to its total mass."""
    f = as_function(space, f)
    vals, inverse = np.unique(f, return_inverse=True)
    masses = np.zeros(len(vals))
    np.add.at(masses, inverse, space.weights)
    return {float(v): float(m) for v, m in zip(vals, masses)}


def ky_fan_matrix(weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Pairwise Ky Fan distances between the rows of a value matrix.

    Exact on finite spaces: for each pair the distance is the smallest
    eps with mu(|f-g| > eps) <= eps, and that infimum is always either
    one of the attained gaps |f(x)-g(x)| or one of the tail masses, so a
    single sweep over the sorted gaps finds it.
    """
    values = np.asarray(values, dtype=float)
    k, p = values.shape
    out = np.zeros((k, k))
    if k < 2:
        return out
    iu, ju = np.triu_indices(k, 1)
    # block over the pair list to bound memory
    block = max(1, int(2_000_000 / max(p, 1)))
    for s in range(0, len(iu), block):
        bi, bj = iu[s : s + block], ju[s : s + block]
        h = np.abs(values[bi] - values[bj])
        out[bi, bj] = _ky_fan_rows(h, weights)
    out = out + out.T
    return out


def _ky_fan_rows(h: np.ndarray, w: np.ndarray) -> np.ndarray:
    r, p = h.shape
    order = np.argsort(h, axis=1, kind="stable")
    hs = np.take_along_axis(h, order, axis=1)
    ws = np.broadcast_to(w, (r, p))
    ws = np.take_along_axis(ws, order, axis=1)
    # prepend a zero gap with zero mass so the interval [0, min gap) is scanned
    hs = np.concatenate([np.zeros((r, 1)), hs], axis=1)
    cum = np.concatenate([np.zeros((r, 1)), np.cumsum(ws, axis=1)], axis=1)
    tails = np.maximum(1.0 - cum, 0.0)  # mass strictly above the current gap
    nxt = np.concatenate([hs[:, 1:], np.full((r, 1), np.inf)], axis=1)
    cand = np.maximum(hs, tails)
    # a candidate is realizable when it still lies inside its constancy interval
    valid = cand < nxt
    cand = np.where(valid, cand, np.inf)
    return cand.min(axis=1)


def ky_fan(space: FiniteMMSpace, f, g) -> float:
    """Ky Fan distance between two functions on the space.

    Smallest eps such that the mass of {x : |f(x)-g(x)| > eps} is at
    most eps. Always at most min(max|f-g|, 1).
    """
    f = as_function(space, f)
    g = as_function(space, g)
    h = np.abs(f - g)[None, :]
    return float(_ky_fan_rows(h, space.weights)[0])


@dataclass(frozen=True)
class Parametrization:
    """Map from [0,1) with the Lebesgue measure onto the point list.

    Point i owns the half-open interval [starts[i], starts[i] + lengths[i]).
    Lengths equal the weights exactly; starts are cumulative sums.
    """

    starts: np.ndarray
    lengths: np.ndarray

    def intervals(self) -> list:
        return [(float(s), float(s + l)) for s, l in zip(self.starts, self.lengths)]

    def locate(self, t: float) -> int:
        """Index of the point whose interval contains t."""
        if not 0 <= t < 1:
            raise ValueError("t must lie in [0,1)")
        i = int(np.searchsorted(self.starts, t, side="right")) - 1
        return max(i, 0)


def parametrize(space: FiniteMMSpace) -> Parametrization:
    starts = np.concatenate([[0.0], np.cumsum(space.weights)[:-1]])
    ends = starts + space.weights
    assert abs(ends[-1] - 1.0) <= TOL
    return Parametrization(starts, space.weights.copy())


def _as_matrix(space_or_dist) -> np.ndarray:
    if isinstance(space_or_dist, FiniteMMSpace):
        return space_or_dist.dist
    return np.asarray(space_or_dist, dtype=float)


def hausdorff_distance(space_or_dist, a: Iterable[int], b: Iterable[int]) -> float:
    """Hausdorff distance between two index sets inside one space.

    Empty versus nonempty is infinite; empty versus empty is zero.
    """
    d = _as_matrix(space_or_dist)
    a = list(a)
    b = list(b)
    if not a and not b:
        return 0.0
    if not a or not b:
        return float("inf")
    sub = d[np.ix_(a, b)]
    return float(max(sub.min(axis=1).max(), sub.min(axis=0).max()))


# ---- space file format -------------------------------------------------------
#
# mmspace v1 n=<count> mode=<metric|pseudo>
# w <real>                 (one line per point)
# d <real> ... <real>      (row i lists d(i,0) .. d(i,i-1); rows 1..n-1)


def space_to_lines(space: FiniteMMSpace) -> list:
    lines = [f"mmspace v1 n={space.n} mode={space.mode}"]
    for w in space.weights:
        lines.append(f"w {float(w)!r}")
    for i in range(1, space.n):
        row = " ".join(repr(float(x)) for x in space.dist[i, :i])
        lines.append(f"d {row}")
    return lines


def write_space(space: FiniteMMSpace, path: str) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(space_to_lines(space)) + "\n")


def space_from_lines(lines: Iterable) -> FiniteMMSpace:
    raw = [ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith("#")]
    if not raw or not raw[0].startswith("mmspace v1"):
        raise ValueError("not an mmspace v1 file")
    header = dict(tok.split("=", 1) for tok in raw[0].split()[2:])
    n = int(header["n"])
    mode = header.get("mode", "metric")
    weights = []
    rows = []
    for ln in raw[1:]:
        kind, _, rest = ln.partition(" ")
        if kind == "w":
            weights.append(float(rest))
        elif kind == "d":
            rows.append([float(t) for t in rest.split()])
        else:
            raise ValueError(f"unexpected line {ln!r}")
    if len(weights) != n:
        raise ValueError(f"expected {n} weight lines, found {len(weights)}")
    if len(rows) != max(n - 1, 0):
        raise ValueError(f"expected {n - 1} distance rows, found {len(rows)}")
    d = np.zeros((n, n))
    for i, row in enumerate(rows, start=1):
        if len(row) != i:
            raise ValueError(f"distance row {i} has {len(row)} entries, expected {i}")
        d[i, :i] = row
        d[:i, i] = row
    return validate_space(range(n), d, weights, mode=mode)


def read_space(path: str) -> FiniteMMSpace:
    with open(path) as fh:
        return space_from_lines(fh)
