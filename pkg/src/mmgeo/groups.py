"""Permutation groups, invariant metrics, coset machinery, and chains.

Sym(n) under a coordinate-weighted mismatch metric is the running example
of a chain that spreads out instead of concentrating: right cosets of a
pointwise stabilizer are pairwise far apart, and they are cheap to
enumerate, so they hand every downstream solver ready-made witnesses.
The same machinery covers products of Z/2 (the Cantor chain), where the
group is abelian and inversion is the identity.

Permutations are plain tuples; (g o h)(x) = g(h(x)).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BadKappa,
    BadSeed,
    CertificateInvalid,
    ChainTooShort,
    DegreeMismatch,
    MetricNotRightInvariant,
    NotAGroupSpace,
    TooLarge,
)
from .mmcore import FiniteMMSpace, validate_space

__all__ = [
    "MetricSpec",
    "weighted_mismatch",
    "hamming_normalized",
    "inverse_of",
    "metric_to_string",
    "metric_from_string",
    "metric_eval",
    "identity_perm",
    "compose",
    "element_inverse",
    "enumerate_sym",
    "ChainSpec",
    "build_chain_space",
    "rebuild_from_meta",
    "coset_partition",
    "coset_blocks",
    "CosetWitness",
    "theorem_witness",
    "verify_coset_witness",
    "coset_witness_to_text",
    "coset_witness_from_text",
    "invert_space",
    "obs_diam_estimate",
]

SYM_ENUM_CAP = 8
SYM_EXACT_CAP = 7
CANTOR_EXACT_CAP = 14

DIST_TOL = 1e-12


# ---- permutations ----------------------------------------------------------------


def identity_perm(n: int) -> tuple:
    return tuple(range(n))


def compose(g: Sequence, h: Sequence) -> tuple:
    """(g o h)(x) = g(h(x))."""
    if len(g) != len(h):
        raise DegreeMismatch(f"degrees {len(g)} and {len(h)} differ")
    return tuple(g[x] for x in h)


def _is_permutation(t) -> bool:
    return isinstance(t, tuple) and sorted(t) == list(range(len(t)))


def _is_bits(t) -> bool:
    return isinstance(t, tuple) and len(t) > 0 and all(b in (0, 1) for b in t)


def element_inverse(x: tuple) -> tuple:
    """Group inverse: argsort for permutations, identity for Z/2 bits.

    Tuples that qualify as both (only degree <= 2) are involutions either
    way, so the readings agree.
    """
    if _is_permutation(x):
        inv = [0] * len(x)
        for k, v in enumerate(x):
            inv[v] = k
        return tuple(inv)
    if _is_bits(x):
        return x
    raise ValueError(f"{x!r} is not a recognized group element")


def enumerate_sym(n: int) -> list:
    """All permutations of {0..n-1} in lexicographic order."""
    if n < 1:
        raise ValueError("degree must be >= 1")
    if n > SYM_ENUM_CAP:
        raise TooLarge(f"refusing to enumerate Sym({n}); cap is {SYM_ENUM_CAP}")
    return list(itertools.permutations(range(n)))


# ---- metrics ----------------------------------------------------------------------


@dataclass(frozen=True)
class MetricSpec:
    """One of the three metric families used on group chains.

    kind "weighted": d(g,h) = sum of weights[k] over mismatch positions;
    weights None means the default 2**-(k+1), which sums below 1 and is
    compatible with pointwise convergence. kind "hamming": mismatch count
    over degree. kind "inverse": evaluate inner on the inverses, turning
    a left-invariant metric into a right-invariant one.
    """

    kind: str
    weights: Optional[tuple] = None
    inner: Optional["MetricSpec"] = None


def weighted_mismatch(weights=None) -> MetricSpec:
    if weights is not None:
        weights = tuple(float(x) for x in weights)
        if not weights:
            raise ValueError("weight vector must be nonempty")
        if min(weights) <= 0:
            raise ValueError("weights must be strictly positive")
        if sum(weights) > 1 + 1e-12:
            raise ValueError("weights must sum to at most 1")
    return MetricSpec("weighted", weights=weights)


def hamming_normalized() -> MetricSpec:
    return MetricSpec("hamming")


def inverse_of(inner: MetricSpec) -> MetricSpec:
    if inner.kind == "inverse":
        raise ValueError("inverse_of nests at most once")
    return MetricSpec("inverse", inner=inner)


def default_weights(degree: int) -> tuple:
    return tuple(2.0 ** -(k + 1) for k in range(degree))


def _resolved_weights(spec: MetricSpec, degree: int) -> np.ndarray:
    w = spec.weights if spec.weights is not None else default_weights(degree)
    if len(w) < degree:
        raise ValueError(
            f"metric carries {len(w)} weights but the degree is {degree}"
        )
    return np.asarray(w[:degree], dtype=float)


def metric_to_string(spec: MetricSpec) -> str:
    """Canonical single-token form, parseable by metric_from_string."""
    if spec.kind == "inverse":
        return f"inverse({metric_to_string(spec.inner)})"
    if spec.kind == "hamming":
        return "hamming"
    if spec.weights is None:
        return "weighted"
    return "weighted(" + ";".join(repr(float(x)) for x in spec.weights) + ")"


def metric_from_string(text: str) -> MetricSpec:
    text = text.strip()
    if text == "hamming":
        return hamming_normalized()
    if text == "weighted":
        return weighted_mismatch()
    if text.startswith("inverse(") and text.endswith(")"):
        return inverse_of(metric_from_string(text[len("inverse("):-1]))
    if text.startswith("weighted(") and text.endswith(")"):
        toks = text[len("weighted("):-1].split(";")
        return weighted_mismatch(float(t) for t in toks)
    raise ValueError(f"cannot parse metric {text!r}")


def metric_eval(spec: MetricSpec, g: Sequence, h: Sequence) -> float:
    if len(g) != len(h):
        raise DegreeMismatch(f"degrees {len(g)} and {len(h)} differ")
    n = len(g)
    if spec.kind == "inverse":
        return metric_eval(spec.inner, element_inverse(tuple(g)), element_inverse(tuple(h)))
    if spec.kind == "hamming":
        return sum(a != b for a, b in zip(g, h)) / n
    w = _resolved_weights(spec, n)
    total = 0.0
    for k in range(n):
        if g[k] != h[k]:
            total += w[k]
    return total


def _invert_rows(arr: np.ndarray) -> np.ndarray:
    # every row a permutation: invert by argsort; bit rows are involutions
    if np.array_equal(np.sort(arr, axis=1), np.broadcast_to(np.arange(arr.shape[1]), arr.shape)):
        return np.argsort(arr, axis=1)
    if np.isin(arr, (0, 1)).all():
        return arr
    raise ValueError("rows are neither permutations nor bit vectors")


def _pairwise_metric(spec: MetricSpec, elems_a, elems_b) -> np.ndarray:
    """Distance matrix between two element arrays; matches metric_eval
    entry for entry (same accumulation order, so equal floats)."""
    a = np.asarray(elems_a)
    b = np.asarray(elems_b)
    if spec.kind == "inverse":
        return _pairwise_metric(spec.inner, _invert_rows(a), _invert_rows(b))
    n = a.shape[1]
    out = np.zeros((a.shape[0], b.shape[0]))
    if spec.kind == "hamming":
        for k in range(n):
            out += a[:, k, None] != b[None, :, k]
        return out / n
    w = _resolved_weights(spec, n)
    for k in range(n):
        out += w[k] * (a[:, k, None] != b[None, :, k])
    return out


# ---- chain spaces -----------------------------------------------------------------


@dataclass(frozen=True)
class ChainSpec:
    """A family of compact groups with one metric across all levels."""

    family: str  # "sym" or "cantor"
    metric: MetricSpec
    mode: str = "exact"  # or "sampled"
    sample_size: int = 0
    seed: Optional[int] = None


def _sym_points_exact(n: int) -> list:
    if n > SYM_EXACT_CAP:
        raise TooLarge(
            f"exact Sym({n}) has {math.factorial(n)} elements; cap is {SYM_EXACT_CAP}"
        )
    return enumerate_sym(n)


def _cantor_points_exact(depth: int) -> list:
    if depth > CANTOR_EXACT_CAP:
        raise TooLarge(f"exact Cantor depth cap is {CANTOR_EXACT_CAP}")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    return list(itertools.product((0, 1), repeat=depth))


def _sample_points(family: str, n: int, size: int, seed) -> list:
    if seed is None:
        raise BadSeed("sampled chains need an explicit seed")
    try:
        rng = np.random.default_rng(int(seed))
    except (TypeError, ValueError) as exc:
        raise BadSeed(f"bad seed {seed!r}") from exc
    if size < 1:
        raise ValueError("sample_size must be >= 1")
    population = math.factorial(n) if family == "sym" else 2 ** n
    if size > population:
        raise ValueError(f"cannot draw {size} distinct elements from {population}")
    seen: dict = {}
    while len(seen) < size:
        if family == "sym":
            cand = tuple(int(v) for v in rng.permutation(n))
        else:
            cand = tuple(int(v) for v in rng.integers(0, 2, size=n))
        seen.setdefault(cand, None)
    return sorted(seen)


def build_chain_space(spec: ChainSpec, n: int) -> FiniteMMSpace:
    """Level n of the chain: uniform measure, full distance matrix.

    Exact mode enumerates the whole group (lexicographic order); sampled
    mode draws distinct elements uniformly, flags the space, and drops
    exact weights. The metric is one of the invariant families, so the
    triangle inequality holds by construction and is not re-checked.
    """
    if spec.family not in ("sym", "cantor"):
        raise ValueError(f"unknown family {spec.family!r}")
    if spec.mode == "exact":
        points = (
            _sym_points_exact(n) if spec.family == "sym" else _cantor_points_exact(n)
        )
        count = len(points)
        exact = [Fraction(1, count)] * count
        sampled = False
    elif spec.mode == "sampled":
        points = _sample_points(spec.family, n, spec.sample_size, spec.seed)
        count = len(points)
        exact = None
        sampled = True
    else:
        raise ValueError(f"unknown mode {spec.mode!r}")
    dist = _pairwise_metric(spec.metric, points, points)
    np.fill_diagonal(dist, 0.0)
    meta = {
        "family": spec.family,
        "degree": n,
        "metric": metric_to_string(spec.metric),
    }
    if sampled:
        meta["sample_size"] = spec.sample_size
        meta["seed"] = spec.seed
    return validate_space(
        points,
        dist,
        np.full(count, 1.0 / count),
        sampled=sampled,
        weights_exact=exact,
        triangle="skip",
        meta=meta,
    )


def rebuild_from_meta(meta: dict) -> FiniteMMSpace:
    """Rebuild an exact chain space from its descriptor (used when a
    serialized certificate references the chain instead of inlining)."""
    spec = ChainSpec(
        family=str(meta["family"]),
        metric=metric_from_string(str(meta["metric"])),
    )
    return build_chain_space(spec, int(meta["degree"]))


# ---- cosets ------------------------------------------------------------------------


def _stab_key(g: tuple, stabilized: tuple) -> tuple:
    inv = element_inverse(g)
    return tuple(inv[s] for s in stabilized)


def coset_partition(n: int, stabilized, side: str = "right") -> dict:
    """Right cosets of the pointwise stabilizer of a set inside Sym(n).

    x and y share a coset H g exactly when x composed with the inverse
    of y fixes the set pointwise, which happens exactly when the inverses
    agree on it; the returned dict is keyed by that inverse-image tuple.
    """
    if side != "right":
        raise ValueError("only right cosets are supported")
    stabilized = tuple(sorted(set(int(s) for s in stabilized)))
    if stabilized and (stabilized[0] < 0 or stabilized[-1] >= n):
        raise ValueError("stabilized set must lie inside 0..n-1")
    out: dict = {}
    for g in enumerate_sym(n):
        out.setdefault(_stab_key(g, stabilized), []).append(g)
    return {k: tuple(v) for k, v in out.items()}


def coset_blocks(space: FiniteMMSpace, m: int, sep_needed: float, alpha):
    """Separated block family from stabilizer cosets, for capacity growth.

    Finds the smallest stabilized prefix {0..r-1} whose cosets are pairwise
    at least sep_needed apart and numerous enough to split into 2**m groups
    of equal coset count. Returns (blocks, eps) with eps the discarded
    remainder mass, or None when the space has no usable coset structure.
    """
    meta = space.meta
    if meta.get("family") not in ("sym", "cantor") or space.sampled:
        return None
    try:
        metric = metric_from_string(str(meta["metric"]))
        degree = int(meta["degree"])
    except (KeyError, ValueError):
        return None
    # which coordinates certify separation depends on the metric direction
    if metric.kind == "inverse" and metric.inner.kind == "weighted":
        w = _resolved_weights(metric.inner, degree)
        key_cols = _invert_rows(np.asarray(space.points))
    elif metric.kind == "weighted":
        w = _resolved_weights(metric, degree)
        key_cols = np.asarray(space.points)
    else:
        return None  # hamming cosets have no degree-independent gap
    count = 1 << int(m)
    alpha = Fraction(alpha)
    for r in range(1, degree + 1):
        if w[:r].min() < sep_needed - DIST_TOL:
            break
        if meta["family"] == "sym":
            q_star = math.factorial(degree) // math.factorial(degree - r)
        else:
            q_star = 2 ** r
        if q_star < count:
            continue
        k = q_star // count
        eps = 1 - Fraction(count * k, q_star)
        if not alpha < (1 - eps) / 2:
            continue
        cosets: dict = {}
        for idx in range(space.n):
            cosets.setdefault(tuple(int(v) for v in key_cols[idx, :r]), []).append(idx)
        assert len(cosets) == q_star
        keys = sorted(cosets)
        blocks = tuple(
            tuple(
                idx
                for key in keys[i * k : (i + 1) * k]
                for idx in cosets[key]
            )
            for i in range(count)
        )
        return blocks, eps
    return None


# ---- the dissipation witness --------------------------------------------------------


@dataclass(frozen=True)
class CosetWitness:
    """Separated sets of certified mass, built from stabilizer cosets.

    reps[i] lists the coset representatives backing block i; blocks[i] is
    the full union of those cosets. masses are exact; delta is a certified
    lower bound on every cross-block distance under the stated metric.
    """

    degree: int
    stabilized: tuple
    metric: MetricSpec
    strategy: str  # "proof" or "direct"
    delta: float
    kappas: tuple  # requested mass targets, exact fractions
    masses: tuple  # achieved block masses, exact fractions
    reps: tuple  # tuple per block of representative permutations
    blocks: tuple  # tuple per block of member permutations
    coset_count: int


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, float):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"cannot interpret {x!r} as an exact rational")


def _probe_right_invariance(
    spec: MetricSpec, n: int, trials: int = 32, seed: int = 20250816
) -> None:
    """Randomized check of d(gf, hf) = d(g, h); raises on a counterexample."""
    if n < 2:
        return
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        g = tuple(int(v) for v in rng.permutation(n))
        h = tuple(int(v) for v in rng.permutation(n))
        f = tuple(int(v) for v in rng.permutation(n))
        base = metric_eval(spec, g, h)
        moved = metric_eval(spec, compose(g, f), compose(h, f))
        if abs(base - moved) > DIST_TOL:
            raise MetricNotRightInvariant(
                f"d(gf,hf)={moved:.12g} differs from d(g,h)={base:.12g}"
            )


def _coset_gap(spec: MetricSpec, n: int, stabilized: tuple) -> float:
    """Certified separation between distinct stabilizer cosets.

    For inverse(weighted), elements of distinct cosets have inverses that
    disagree on some stabilized point s, which alone costs w_s. For
    hamming, distinct elements differ in at least two positions.
    """
    if spec.kind == "inverse" and spec.inner.kind == "weighted":
        w = _resolved_weights(spec.inner, n)
        return float(min(w[s] for s in stabilized))
    if spec.kind == "hamming" or (
        spec.kind == "inverse" and spec.inner.kind == "hamming"
    ):
        return 2.0 / n
    raise MetricNotRightInvariant(
        "no coset separation argument for this metric; use inverse(weighted) "
        "or hamming"
    )


def _proof_sizes(kappas, m: int, q_star: int):
    """Block sizes (in cosets) along the counting argument.

    Rationalize the targets over a common denominator q with
    (m+1)p + m + 1 <= q for p the largest numerator, then split
    (p+1) * q_star = p_star * q + r. The resulting equal masses
    p_star/q_star strictly exceed every target once q_star >= q.
    """
    q0 = math.lcm(*(k.denominator for k in kappas))
    p = max(k.numerator * (q0 // k.denominator) for k in kappas)
    slack = q0 - (m + 1) * p
    if slack <= 0:
        raise BadKappa("the proof path needs every mass target below 1/(m+1)")
    t = max(1, math.ceil((m + 1) / slack))
    q, p = q0 * t, p * t
    assert (m + 1) * (p + 1) <= q
    if q_star < q:
        raise ChainTooShort(
            f"the proof needs at least {q} cosets, this level only has {q_star}"
        )
    p_star = (p + 1) * q_star // q
    assert p_star >= 1 and (m + 1) * p_star <= q_star
    assert Fraction(p_star, q_star) > max(kappas)
    return [p_star] * (m + 1)


def _direct_sizes(kappas, q_star: int):
    """Relaxed block sizes: just enough cosets to cover each target."""
    sizes = [max(1, math.ceil(k * q_star)) for k in kappas]
    if sum(sizes) > q_star:
        raise ChainTooShort(
            f"covering the targets needs {sum(sizes)} cosets, "
            f"this level only has {q_star}"
        )
    return sizes


def theorem_witness(
    n: int,
    m: int,
    kappas,
    metric: Optional[MetricSpec] = None,
    stabilized=(0,),
    strategy: str = "auto",
) -> CosetWitness:
    """Dissipation witness on Sym(n): m+1 coset-union blocks with masses
    at least the targets and pairwise separation at least the coset gap.

    strategy "proof" follows the counting argument and raises
    ChainTooShort below its threshold; "direct" takes the fewest cosets
    covering each target, reaching levels the argument does not; "auto"
    tries the proof first. The metric must be right-invariant (checked by
    randomized probing); the returned witness is always re-verified by
    direct distance evaluation before it is handed back.
    """
    if metric is None:
        metric = inverse_of(weighted_mismatch())
    if m < 1:
        raise ValueError("m must be >= 1")
    kaps = tuple(_as_fraction(k) for k in kappas)
    if len(kaps) != m + 1:
        raise BadKappa(f"m={m} needs {m + 1} mass targets, got {len(kaps)}")
    if any(k <= 0 for k in kaps):
        raise BadKappa("mass targets must be positive")
    if sum(kaps) >= 1:
        raise BadKappa(f"mass targets sum to {sum(kaps)}, need strictly below 1")
    stab = tuple(sorted(set(int(s) for s in stabilized)))
    if not stab or stab[0] < 0 or stab[-1] >= n:
        raise ValueError("stabilized set must be a nonempty subset of 0..n-1")
    _probe_right_invariance(metric, n)
    delta = _coset_gap(metric, n, stab)

    cosets = coset_partition(n, stab)
    keys = sorted(cosets)
    q_star = len(keys)
    if strategy == "proof":
        sizes = _proof_sizes(kaps, m, q_star)
        label = "proof"
    elif strategy == "direct":
        sizes = _direct_sizes(kaps, q_star)
        label = "direct"
    elif strategy == "auto":
        try:
            sizes = _proof_sizes(kaps, m, q_star)
            label = "proof"
        except (ChainTooShort, BadKappa):
            sizes = _direct_sizes(kaps, q_star)
            label = "direct"
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    reps = []
    blocks = []
    offset = 0
    for size in sizes:
        chunk = keys[offset : offset + size]
        reps.append(tuple(min(cosets[key]) for key in chunk))
        blocks.append(tuple(g for key in chunk for g in cosets[key]))
        offset += size
    masses = tuple(Fraction(size, q_star) for size in sizes)
    witness = CosetWitness(
        degree=n,
        stabilized=stab,
        metric=metric,
        strategy=label,
        delta=delta,
        kappas=kaps,
        masses=masses,
        reps=tuple(reps),
        blocks=tuple(blocks),
        coset_count=q_star,
    )
    verify_coset_witness(witness)
    return witness


def verify_coset_witness(
    witness: CosetWitness,
    pair_cap: int = 200_000,
    sample_pairs: int = 20_000,
    seed: int = 0,
) -> bool:
    """Re-check a coset witness from its stored pieces.

    Masses are re-derived in exact arithmetic, blocks must equal the coset
    closures of their representatives, and cross-block separation is
    re-measured by direct distance evaluation: exhaustively when the pair
    count allows, otherwise on a seeded sample that fails on the first
    counterexample. Raises CertificateInvalid on any mismatch.
    """
    n = witness.degree
    cosets = coset_partition(n, witness.stabilized)
    q_star = len(cosets)
    if q_star != witness.coset_count:
        raise CertificateInvalid(
            f"coset count {witness.coset_count} is wrong, group gives {q_star}"
        )
    group_order = math.factorial(n)
    all_keys: list = []
    for i, (reps, block) in enumerate(zip(witness.reps, witness.blocks)):
        keys = [_stab_key(g, witness.stabilized) for g in reps]
        all_keys.extend(keys)
        closure = sorted(g for key in keys for g in cosets[key])
        if sorted(block) != closure:
            raise CertificateInvalid(f"block {i} is not the closure of its cosets")
        if Fraction(len(reps), q_star) != witness.masses[i]:
            raise CertificateInvalid(f"stored mass of block {i} is wrong")
        if Fraction(len(block), group_order) != witness.masses[i]:
            raise CertificateInvalid(f"block {i} size disagrees with its mass")
        if witness.masses[i] < witness.kappas[i]:
            raise CertificateInvalid(
                f"block {i} mass {witness.masses[i]} misses target "
                f"{witness.kappas[i]}"
            )
    if len(set(all_keys)) != len(all_keys):
        raise CertificateInvalid("blocks share a coset")

    rng = np.random.default_rng(seed)
    for a in range(len(witness.blocks)):
        arr_a = np.asarray(witness.blocks[a])
        for b in range(a + 1, len(witness.blocks)):
            arr_b = np.asarray(witness.blocks[b])
            if len(arr_a) * len(arr_b) <= pair_cap:
                dmin = float(_pairwise_metric(witness.metric, arr_a, arr_b).min())
            else:
                ia = rng.integers(0, len(arr_a), size=sample_pairs)
                ib = rng.integers(0, len(arr_b), size=sample_pairs)
                dmin = float(
                    _elementwise_metric(witness.metric, arr_a[ia], arr_b[ib]).min()
                )
            if dmin < witness.delta - DIST_TOL:
                raise CertificateInvalid(
                    f"blocks {a},{b} come within {dmin:.12g}, "
                    f"certified {witness.delta:.12g}"
                )
    return True


def _elementwise_metric(spec: MetricSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if spec.kind == "inverse":
        return _elementwise_metric(spec.inner, _invert_rows(a), _invert_rows(b))
    n = a.shape[1]
    if spec.kind == "hamming":
        return (a != b).sum(axis=1) / n
    w = _resolved_weights(spec, n)
    return ((a != b) * w[None, :]).sum(axis=1)


# ---- witness text form ---------------------------------------------------------------
#
# mmgeo coset witness v1
# degree 6
# stabilized 0
# metric inverse(weighted)
# strategy proof
# delta 0.5
# kappas 1/3 1/3
# masses 1/2 1/2
# rep <block> <image of 0> ... <image of n-1>      (one line per representative)
#
# Blocks are not stored: verification rebuilds them as coset closures.


def coset_witness_to_text(witness: CosetWitness) -> str:
    lines = [
        "mmgeo coset witness v1",
        f"degree {witness.degree}",
        "stabilized " + " ".join(str(s) for s in witness.stabilized),
        f"metric {metric_to_string(witness.metric)}",
        f"strategy {witness.strategy}",
        f"delta {witness.delta!r}",
        "kappas " + " ".join(str(k) for k in witness.kappas),
        "masses " + " ".join(str(m) for m in witness.masses),
    ]
    for i, reps in enumerate(witness.reps):
        for g in reps:
            lines.append(f"rep {i} " + " ".join(str(v) for v in g))
    return "\n".join(lines) + "\n"


def coset_witness_from_text(text: str) -> CosetWitness:
    """Parse and fully re-verify a serialized coset witness."""
    rows = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not rows or rows[0] != "mmgeo coset witness v1":
        raise CertificateInvalid("not a coset witness")
    fields: dict = {}
    reps: dict = {}
    for ln in rows[1:]:
        kind, _, body = ln.partition(" ")
        if kind == "rep":
            toks = body.split()
            reps.setdefault(int(toks[0]), []).append(
                tuple(int(t) for t in toks[1:])
            )
        else:
            fields[kind] = body.strip()
    try:
        degree = int(fields["degree"])
        stab = tuple(int(t) for t in fields["stabilized"].split())
        metric = metric_from_string(fields["metric"])
        strategy = fields["strategy"]
        delta = float(fields["delta"])
        kappas = tuple(Fraction(t) for t in fields["kappas"].split())
        masses = tuple(Fraction(t) for t in fields["masses"].split())
        block_ids = sorted(reps)
        if block_ids != list(range(len(kappas))):
            raise ValueError("representative lines do not cover every block")
        cosets = coset_partition(degree, stab)
        rep_sets = tuple(tuple(reps[i]) for i in block_ids)
        blocks = tuple(
            tuple(
                g
                for r in rep_set
                for g in cosets[_stab_key(r, stab)]
            )
            for rep_set in rep_sets
        )
        witness = CosetWitness(
            degree=degree,
            stabilized=stab,
            metric=metric,
            strategy=strategy,
            delta=delta,
            kappas=kappas,
            masses=masses,
            reps=rep_sets,
            blocks=blocks,
            coset_count=len(cosets),
        )
    except CertificateInvalid:
        raise
    except (KeyError, ValueError, TooLarge) as exc:
        raise CertificateInvalid(f"malformed coset witness: {exc}") from exc
    verify_coset_witness(witness)
    return witness


def witness_index_blocks(witness: CosetWitness, space: FiniteMMSpace) -> tuple:
    """Translate witness blocks from permutations to indices in a space."""
    where = {p: i for i, p in enumerate(space.points)}
    try:
        return tuple(tuple(where[g] for g in block) for block in witness.blocks)
    except KeyError as exc:
        raise ValueError(f"space does not contain element {exc.args[0]!r}") from exc


# ---- metric inversion ------------------------------------------------------------------


def invert_space(space: FiniteMMSpace) -> FiniteMMSpace:
    """The same carrier under d(inverse(x), inverse(y)).

    The distance matrix is a pure permutation of the original entries, so
    inverting twice restores it exactly. The inversion map is recorded in
    meta["inversion"]; it is a measure-preserving isometry onto the
    original space whenever the weights are inversion-invariant, which
    holds for the uniform chains built here.
    """
    if not space.n:
        raise NotAGroupSpace("empty point list")
    try:
        inverses = [element_inverse(p) for p in space.points]
    except (TypeError, ValueError) as exc:
        raise NotAGroupSpace(f"points are not group elements: {exc}") from exc
    where = {p: i for i, p in enumerate(space.points)}
    try:
        iota = np.array([where[q] for q in inverses])
    except KeyError:
        raise NotAGroupSpace("point set is not closed under inversion") from None
    dist = space.dist[np.ix_(iota, iota)]
    meta = dict(space.meta)
    told = meta.get("metric")
    if told:
        meta["metric"] = (
            told[len("inverse("):-1]
            if told.startswith("inverse(")
            else f"inverse({told})"
        )
    meta["inversion"] = tuple(int(i) for i in iota)
    return validate_space(
        space.points,
        dist,
        space.weights,
        mode=space.mode,
        sampled=space.sampled,
        weights_exact=space.weights_exact,
        triangle="skip",
        meta=meta,
    )


# ---- observable diameter estimation ------------------------------------------------------


def _partial_diameter(values: np.ndarray, weights: np.ndarray, kappa: float) -> float:
    """Smallest interval width holding mass 1 - kappa of the pushforward."""
    order = np.argsort(values, kind="stable")
    v = np.asarray(values, dtype=float)[order]
    prefix = np.concatenate([[0.0], np.cumsum(np.asarray(weights, dtype=float)[order])])
    need = (1.0 - kappa) - 1e-12
    left = np.searchsorted(prefix, prefix[1:] - need, side="right") - 1
    valid = left >= 0
    if not valid.any():
        return float(v[-1] - v[0])
    widths = v[valid] - v[left[valid]]
    return float(max(widths.min(), 0.0))


def obs_diam_estimate(
    space: FiniteMMSpace, kappa: float, samples: int = 64, seed: int = 0
) -> float:
    """Monte Carlo lower estimate of the kappa-observable diameter.

    Draws 1-Lipschitz functions (distances to random subsets, plus
    agreement fractions with random reference elements on Hamming group
    spaces), pushes each forward, and records the largest
    (1-kappa)-partial diameter seen. Subset sizes stay below half the
    trim mass, so a subset's own zero-distance atoms never force a wide
    window by themselves. Deterministic for a fixed seed.
    """
    kappa = float(kappa)
    if not 0 < kappa < 1:
        raise BadKappa(f"kappa={kappa} must lie strictly inside (0, 1)")
    if space.n <= 1:
        return 0.0
    rng = np.random.default_rng(int(seed))
    agreement_ready = (
        space.meta.get("metric") == "hamming"
        and isinstance(space.points[0], tuple)
    )
    arr = np.asarray(space.points) if agreement_ready else None
    cap = max(1, int(kappa * space.n / 4))
    set_sizes = [1]
    while set_sizes[-1] * 2 <= cap:
        set_sizes.append(set_sizes[-1] * 2)
    best = 0.0
    for it in range(int(samples)):
        if agreement_ready and it % 2 == 1:
            ref = arr[int(rng.integers(space.n))]
            f = (arr == ref).mean(axis=1)
        else:
            size = set_sizes[int(rng.integers(len(set_sizes)))]
            idx = rng.choice(space.n, size=min(size, space.n), replace=False)
            f = space.dist[:, idx].min(axis=1)
        best = max(best, _partial_diameter(f, space.weights, kappa))
    return float(best)
