"""Rademacher witnesses and self-verifying capacity certificates.

Well separated blocks of near-equal mass convert into large Lipschitz
families that stay pairwise far apart in the Ky Fan metric: index 2**n
blocks by the dyadic grid and pull back the first n Rademacher functions.
A CapacityCertificate packages one such family together with every
inequality needed to check it. Construction re-runs all the checks, so
holding a certificate object is itself the proof that the capacity bound
holds; the text form round-trips through an independent re-verification.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    BadTau,
    BlockMassTooSmall,
    BlocksNotSeparated,
    CertificateInvalid,
    EmptyBase,
    EqualIndices,
    MmgeoError,
    NoBlocksFound,
    TOutOfRange,
    TooLargeForExact,
)
from .mmcore import (
    FiniteMMSpace,
    ky_fan_matrix,
    space_from_lines,
    space_to_lines,
    validate_space,
)
from .reports import Report, TAG_LOWER
from .separation import separation_at_least

__all__ = [
    "rademacher",
    "dyadic_grid",
    "agreement_count",
    "lip_extend",
    "CapacityCertificate",
    "capacity_certificate",
    "serialize_certificate",
    "verify_certificate",
    "CapacityGrowthResult",
    "capacity_growth_check",
]

MASS_TOL = 1e-12
DIST_TOL = 1e-12
ME_TOL = 1e-9

# inline serialization of a distance matrix stops making sense past this
INLINE_POINT_CAP = 2000


def _as_fraction(t) -> Fraction:
    # floats convert exactly: binary rationals are already dyadic
    if isinstance(t, Fraction):
        return t
    if isinstance(t, (int, np.integer)):
        return Fraction(int(t))
    if isinstance(t, float):
        return Fraction(t)
    if isinstance(t, str):
        return Fraction(t)
    raise TypeError(f"cannot interpret {t!r} as an exact rational")


def rademacher(i: int, t) -> int:
    """Value of the i-th Rademacher function at t, computed exactly.

    r_i(t) = (-1)**floor(2**i * t). All arithmetic is integer-exact, so
    grid points land on the correct side of every sign change; floats are
    admitted because every float is a dyadic rational.
    """
    if i < 1:
        raise ValueError("index must be >= 1")
    tf = _as_fraction(t)
    if not 0 <= tf < 1:
        raise TOutOfRange(f"t={t} lies outside [0, 1)")
    k = (tf.numerator << i) // tf.denominator
    return -1 if k & 1 else 1


def dyadic_grid(n: int) -> list:
    """The grid {k / 2**n : 0 <= k < 2**n} as exact fractions."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return [Fraction(k, 1 << n) for k in range(1 << n)]


def agreement_count(n: int, i: int, j: int) -> int:
    """Number of points of the depth-n dyadic grid where r_i and r_j agree.

    Direct enumeration. For distinct indices the count is always half the
    grid, which is the fact that keeps the pulled-back functions apart.
    """
    if i == j:
        raise EqualIndices("a function agrees with itself everywhere")
    if not (1 <= i <= n and 1 <= j <= n):
        raise ValueError("indices must lie in 1..n")
    count = 0
    for k in range(1 << n):
        # floor(2**i * k / 2**n) parity, in integers
        a = (k << i >> n) & 1
        b = (k << j >> n) & 1
        count += a == b
    return count


def lip_extend(space: FiniteMMSpace, base, values, delta: float) -> np.ndarray:
    """Extend values on a base set to the largest [0,1]-valued
    (1/delta)-Lipschitz function below them.

    f*(x) = min(1, min over y in base of f(y) + d(x,y)/delta). When f is
    (1/delta)-Lipschitz on the base, the extension restricts back to f.
    """
    base = [int(b) for b in base]
    if not base:
        raise EmptyBase("cannot extend from an empty base")
    if delta <= 0:
        raise ValueError("delta must be positive")
    f = np.asarray(values, dtype=float)
    if f.shape != (len(base),):
        raise ValueError(f"{len(base)} base points but value shape {f.shape}")
    if f.min() < 0 or f.max() > 1:
        raise ValueError("base values must lie in [0, 1]")
    ext = (f[None, :] + space.dist[:, base] / delta).min(axis=1)
    return np.minimum(ext, 1.0)


# ---- capacity certificates ---------------------------------------------------


@dataclass(frozen=True)
class CapacityCertificate:
    """A verified family of functions witnessing a capacity lower bound.

    The n functions are (1/delta)-Lipschitz, [0,1]-valued, and pairwise at
    Ky Fan distance at least (1-eps)/2, which strictly exceeds (1-eps)*tau.
    Their existence shows the (1-eps)*tau-capacity of that Lipschitz class
    is at least n; verified_capacity records n. eps and tau are kept in
    the exact form they were given (Fraction or float).
    """

    space: FiniteMMSpace
    blocks: tuple
    delta: float
    eps: object
    tau: object
    functions: np.ndarray
    me_matrix: np.ndarray
    verified_capacity: int


def _block_function_values(count: int, n: int) -> np.ndarray:
    """Values of the n pulled-back Rademacher functions per block.

    Block k maps to grid point k/2**n; f_i is (1 + r_i)/2 there. Entry
    [i-1, k] is f_i on block k, always exactly 0 or 1.
    """
    out = np.zeros((n, count))
    for i in range(1, n + 1):
        for k in range(count):
            out[i - 1, k] = 1 - ((k << i >> n) & 1)
    return out


def capacity_certificate(
    space: FiniteMMSpace,
    blocks,
    delta: float,
    eps=0,
    tau=Fraction(1, 4),
) -> CapacityCertificate:
    """Build a certificate from 2**n separated blocks, verifying every claim.

    Requirements checked here, in order: the block count is a power of two,
    blocks are disjoint index sets, each block has mass at least
    (1-eps) * 2**-n, cross-block distances are at least delta, tau lies in
    (0, 1/2), and the resulting functions are pairwise at Ky Fan distance
    at least (1-eps)/2. eps = 0 demands exact rational weights on the
    space so the mass comparisons carry no float error.
    """
    blocks = tuple(tuple(int(i) for i in b) for b in blocks)
    count = len(blocks)
    n = count.bit_length() - 1
    if count < 2 or count != 1 << n:
        raise ValueError("block count must be 2**n with n >= 1")
    seen: set = set()
    for b in blocks:
        for i in b:
            if not 0 <= i < space.n:
                raise ValueError(f"block index {i} out of range")
            if i in seen:
                raise ValueError(f"blocks overlap at point index {i}")
            seen.add(i)
    if delta <= 0:
        raise ValueError("delta must be positive")
    tau_f = _as_fraction(tau)
    if not 0 < tau_f < Fraction(1, 2):
        raise BadTau(f"tau={tau} must lie strictly between 0 and 1/2")
    eps_f = _as_fraction(eps)
    if not 0 <= eps_f < 1:
        raise ValueError("eps must lie in [0, 1)")
    if eps_f == 0 and space.weights_exact is None:
        raise ValueError("eps=0 requires a space with exact rational weights")

    need = (1 - eps_f) * Fraction(1, count)
    if space.weights_exact is not None:
        for k, b in enumerate(blocks):
            got = space.mass_exact(b)
            if got < need:
                raise BlockMassTooSmall(
                    f"block {k} has mass {got}, needs at least {need}"
                )
    else:
        for k, b in enumerate(blocks):
            got = space.mass(b)
            if got < float(need) - MASS_TOL:
                raise BlockMassTooSmall(
                    f"block {k} has mass {got:.12g}, needs at least {float(need):.12g}"
                )

    for a in range(count):
        for b in range(a + 1, count):
            cross = space.dist[np.ix_(blocks[a], blocks[b])]
            if cross.size and cross.min() < delta - DIST_TOL:
                raise BlocksNotSeparated(
                    f"blocks {a} and {b} come within {cross.min():.12g} < {delta:.12g}"
                )

    base = [i for b in blocks for i in b]
    on_blocks = _block_function_values(count, n)
    functions = np.zeros((n, space.n))
    for i in range(n):
        base_vals = np.repeat(on_blocks[i], [len(b) for b in blocks])
        functions[i] = lip_extend(space, base, base_vals, delta)
        # cross-block costs are >= 1, so the extension must restrict back
        if not np.allclose(functions[i][base], base_vals, atol=ME_TOL):
            raise CertificateInvalid(
                f"function {i + 1} does not restrict to its block values"
            )

    me = ky_fan_matrix(space.weights, functions)
    floor_val = float(1 - eps_f) / 2.0
    tau_bar = float((1 - eps_f) * tau_f)
    for a in range(n):
        for b in range(a + 1, n):
            if me[a, b] < floor_val - ME_TOL or not me[a, b] > tau_bar:
                raise CertificateInvalid(
                    f"Ky Fan distance {me[a, b]:.12g} of functions "
                    f"{a + 1},{b + 1} is below the floor {floor_val:.12g}"
                )
            if space.weights_exact is not None:
                # mass where the block values disagree, in exact arithmetic
                disagree = [
                    k for k in range(count) if on_blocks[a, k] != on_blocks[b, k]
                ]
                mass = sum(
                    (space.mass_exact(blocks[k]) for k in disagree), Fraction(0)
                )
                if mass < (1 - eps_f) / 2:
                    raise CertificateInvalid(
                        f"disagreement mass {mass} of functions "
                        f"{a + 1},{b + 1} is below {(1 - eps_f) / 2}"
                    )

    functions.setflags(write=False)
    me.setflags(write=False)
    return CapacityCertificate(
        space=space,
        blocks=blocks,
        delta=float(delta),
        eps=eps_f if isinstance(eps, (int, Fraction, str)) else float(eps),
        tau=tau_f if isinstance(tau, (int, Fraction, str)) else float(tau),
        functions=functions,
        me_matrix=me,
        verified_capacity=n,
    )


# ---- text form ----------------------------------------------------------------
#
# mmgeo capacity certificate v1
# capacity <n>
# delta <real>
# eps <rational or real>
# tau <rational or real>
# block <index> <index> ...        (2**n lines)
# func <real> ... <real>           (n lines, one value per point)
# wexact <p/q> ... <p/q>           (optional, exact weights for all points)
# space chain <key>=<value> ...    (rebuildable chain descriptor)  -- or --
# space inline                     (followed by "| "-prefixed mmspace lines)
# | mmspace v1 ...


def _num_to_text(x) -> str:
    if isinstance(x, Fraction):
        return str(x)
    return repr(float(x))


def _num_from_text(tok: str):
    if "/" in tok:
        return Fraction(tok)
    return float(tok)


_CHAIN_META_KEYS = ("family", "degree", "metric")


def serialize_certificate(cert: CapacityCertificate) -> str:
    """Self-contained text form of a certificate.

    Chain-built spaces are stored as their rebuild descriptor; anything
    else embeds the full distance matrix, which is refused beyond
    INLINE_POINT_CAP points.
    """
    lines = ["mmgeo capacity certificate v1"]
    lines.append(f"capacity {cert.verified_capacity}")
    lines.append(f"delta {cert.delta!r}")
    lines.append(f"eps {_num_to_text(cert.eps)}")
    lines.append(f"tau {_num_to_text(cert.tau)}")
    for b in cert.blocks:
        lines.append("block " + " ".join(str(i) for i in b))
    for row in cert.functions:
        lines.append("func " + " ".join(repr(float(v)) for v in row))
    meta = cert.space.meta
    if all(k in meta for k in _CHAIN_META_KEYS) and not cert.space.sampled:
        pairs = " ".join(f"{k}={meta[k]}" for k in _CHAIN_META_KEYS)
        lines.append(f"space chain {pairs}")
    else:
        if cert.space.n > INLINE_POINT_CAP:
            raise ValueError(
                "space is too large to inline and carries no chain descriptor"
            )
        if cert.space.weights_exact is not None:
            lines.append(
                "wexact " + " ".join(str(w) for w in cert.space.weights_exact)
            )
        lines.append("space inline")
        for ln in space_to_lines(cert.space):
            lines.append(f"| {ln}")
    return "\n".join(lines) + "\n"


def _parse_certificate_text(text: str):
    header, *rest = [ln.rstrip("\n") for ln in text.splitlines() if ln.strip()]
    if header.strip() != "mmgeo capacity certificate v1":
        raise CertificateInvalid("not a capacity certificate")
    fields: dict = {"blocks": [], "funcs": [], "wexact": None, "space": None}
    inline: list = []
    for ln in rest:
        ln = ln.strip()
        if ln.startswith("| "):
            inline.append(ln[2:])
            continue
        kind, _, body = ln.partition(" ")
        if kind == "capacity":
            fields["capacity"] = int(body)
        elif kind in ("delta", "eps", "tau"):
            fields[kind] = _num_from_text(body.strip())
        elif kind == "block":
            fields["blocks"].append(tuple(int(t) for t in body.split()))
        elif kind == "func":
            fields["funcs"].append([float(t) for t in body.split()])
        elif kind == "wexact":
            fields["wexact"] = tuple(Fraction(t) for t in body.split())
        elif kind == "space":
            fields["space"] = body.strip()
        else:
            raise CertificateInvalid(f"unexpected line {ln!r}")
    for key in ("capacity", "delta", "eps", "tau"):
        if key not in fields:
            raise CertificateInvalid(f"missing field {key!r}")
    if fields["space"] is None:
        raise CertificateInvalid("missing space")
    fields["inline"] = inline
    return fields


def _rebuild_space(fields: dict) -> FiniteMMSpace:
    spec = fields["space"]
    if spec == "inline":
        space = space_from_lines(fields["inline"])
        if fields["wexact"] is not None:
            space = validate_space(
                space.points,
                space.dist,
                space.weights,
                mode=space.mode,
                weights_exact=fields["wexact"],
                triangle="skip",
            )
        return space
    if spec.startswith("chain "):
        meta = dict(tok.split("=", 1) for tok in spec[len("chain "):].split())
        from . import groups  # deferred: groups sits above this module

        return groups.rebuild_from_meta(meta)
    raise CertificateInvalid(f"unknown space form {spec!r}")


def verify_certificate(text: str) -> CapacityCertificate:
    """Re-check a serialized certificate from scratch.

    The space is rebuilt, the whole construction re-runs, and the stored
    function values must match the recomputed extensions. Any failure,
    including parse errors, surfaces as CertificateInvalid.
    """
    fields = _parse_certificate_text(text)
    try:
        space = _rebuild_space(fields)
        cert = capacity_certificate(
            space,
            fields["blocks"],
            fields["delta"],
            eps=fields["eps"],
            tau=fields["tau"],
        )
    except CertificateInvalid:
        raise
    except (MmgeoError, ValueError, KeyError) as exc:
        raise CertificateInvalid(f"re-verification failed: {exc}") from exc
    if cert.verified_capacity != fields["capacity"]:
        raise CertificateInvalid(
            f"claimed capacity {fields['capacity']} but blocks support "
            f"{cert.verified_capacity}"
        )
    stored = np.asarray(fields["funcs"], dtype=float)
    if stored.shape != cert.functions.shape:
        raise CertificateInvalid("stored function table has the wrong shape")
    if not np.allclose(stored, cert.functions, atol=ME_TOL):
        raise CertificateInvalid("stored function values disagree with rebuild")
    return cert


# ---- capacity growth along a chain --------------------------------------------


@dataclass(frozen=True)
class CapacityGrowthResult:
    report: Report
    certificates: dict  # (m, space_index) -> CapacityCertificate


_EPS_LADDER = (Fraction(0), Fraction(1, 8), Fraction(1, 4), Fraction(3, 8))


def _solver_blocks(space, m, sep_needed, alpha, node_budget):
    """Fallback block finder: exact separation search over an eps ladder."""
    count = 1 << m
    for eps in _EPS_LADDER:
        if eps == 0 and space.weights_exact is None:
            continue
        if not _as_fraction(alpha) < (1 - eps) / 2:
            continue
        kappas = [float((1 - eps) / count)] * count
        try:
            found = separation_at_least(space, kappas, sep_needed, node_budget)
        except TooLargeForExact:
            return None
        if found is not None:
            return tuple(tuple(g) for g in found), eps
    return None


def _default_block_finder(space, m, sep_needed, alpha, node_budget):
    if space.meta.get("family") in ("sym", "cantor") and not space.sampled:
        from . import groups  # deferred: groups sits above this module

        hit = groups.coset_blocks(space, m, sep_needed, alpha)
        if hit is not None:
            return hit
    return _solver_blocks(space, m, sep_needed, alpha, node_budget)


def capacity_growth_check(
    seq: Sequence,
    delta: float,
    alpha,
    m_targets=(1, 2),
    block_finder: Optional[Callable] = None,
    node_budget: int = 400_000,
) -> CapacityGrowthResult:
    """Certify growing alpha-capacities of Lipschitz classes along a chain.

    For each target m and each space, look for 2**m blocks of mass at
    least (1-eps) * 2**-m separated by delta/2 (one Lipschitz scale below
    the dissipation threshold, so the certified class has constant
    strictly above 1/delta), and build a capacity certificate with
    tau = alpha/(1-eps). A cell with no blocks is reported inconclusive;
    only total failure raises NoBlocksFound.

    block_finder(space, m, sep_needed, alpha) may override the search;
    by default chain spaces use their coset structure and anything else
    falls back to the exact separation solver.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    alpha_f = _as_fraction(alpha)
    if not 0 < alpha_f < Fraction(1, 2):
        raise ValueError("alpha must lie strictly between 0 and 1/2")
    m_targets = sorted(set(int(m) for m in m_targets))
    if not m_targets or m_targets[0] < 1:
        raise ValueError("capacity targets must be integers >= 1")
    seq = list(seq)
    if not seq:
        raise ValueError("empty chain")

    sep_needed = delta / 2.0
    rows = []
    certs: dict = {}
    for m in m_targets:
        for si, space in enumerate(seq):
            found = None
            if block_finder is not None:
                found = block_finder(space, m, sep_needed, alpha)
            if found is None:
                found = _default_block_finder(
                    space, m, sep_needed, alpha, node_budget
                )
            cell = None
            if found is not None:
                blocks, eps = found
                eps_f = _as_fraction(eps)
                tau = alpha_f / (1 - eps_f)
                if 0 < tau < Fraction(1, 2):
                    try:
                        cell = capacity_certificate(
                            space, blocks, sep_needed, eps=eps_f, tau=tau
                        )
                    except (BlockMassTooSmall, BlocksNotSeparated, CertificateInvalid):
                        cell = None
            if cell is None:
                rows.append((si, m, "", "", 0, TAG_LOWER, "no-blocks"))
            else:
                certs[(m, si)] = cell
                rows.append(
                    (
                        si,
                        m,
                        _num_to_text(cell.eps),
                        _num_to_text(cell.tau),
                        cell.verified_capacity,
                        TAG_LOWER,
                        "certified",
                    )
                )
    if not certs:
        raise NoBlocksFound(
            "no separated block family found for any target on any space"
        )

    last = len(seq) - 1
    summary = {}
    for m in m_targets:
        summary[f"m={m}"] = (
            "certified" if (m, last) in certs else "inconclusive"
        )
    summary["verdict"] = (
        "certified"
        if all((m, last) in certs for m in m_targets)
        else "inconclusive"
    )
    series = tuple(
        (
            f"m={m}",
            tuple(
                (si, float(certs[(m, si)].verified_capacity if (m, si) in certs else 0))
                for si in range(len(seq))
            ),
        )
        for m in m_targets
    )
    report = Report(
        title="capacity growth along a chain",
        columns=("space_index", "m", "eps", "tau", "capacity", "tag", "verdict"),
        rows=tuple(rows),
        summary=summary,
        provenance=(
            f"delta: {delta!r}",
            f"alpha: {alpha_f}",
            "certificate scale: delta/2",
            f"node budget: {node_budget}",
            "scope: finite-prefix evidence",
        ),
        series=series,
    )
    return CapacityGrowthResult(report=report, certificates=certs)
