"""Config-driven experiment runner and report emitter.

Ties the library into four batch experiments (symmetric-group
dissipation, Hamming concentration, Cantor-chain concentration, a cube
demo) plus certificate verification, all sharing one CSV schema:

    experiment,n,cell,m,alpha,value,tag,verdict

Rows are ordered by (n, cell) and every run is deterministic for a fixed
config, regardless of the worker count. Cells run concurrently; the
report is an ordered merge, never a race.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import __version__, groups, separation, witness
from .errors import (
    CertificateInvalid,
    ChainTooShort,
    ConfigError,
    IoError,
    MetricNotRightInvariant,
    MmgeoError,
    NoBlocksFound,
)
from .mmcore import FiniteMMSpace, read_space, validate_space, write_space
from .reports import (
    Report,
    TAG_ESTIMATE,
    TAG_EXACT,
    TAG_LOWER,
    write_csv,
    write_figure,
)
from .separation import INCONCLUSIVE, REFUTES, SUPPORTS

__all__ = [
    "ExperimentConfig",
    "parse_config_file",
    "parse_config_lines",
    "run",
    "emit",
    "main",
]

EXPERIMENTS = (
    "sym_dissipation",
    "hamming_concentration",
    "cantor_concentration",
    "cube_demo",
    "verify_certificate",
)

COLUMNS = ("experiment", "n", "cell", "m", "alpha", "value", "tag", "verdict")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    family: str = "sym"
    metric: Optional[groups.MetricSpec] = None
    mode: str = "exact"
    sample_size: int = 2000
    levels: tuple = ()
    grid: tuple = ()  # (m, alpha) cells, alpha exact
    delta: float = 0.5
    samples: int = 64
    seed: int = 0
    kappa: float = 0.1
    dims: tuple = (1, 2, 3)
    resolution: int = 10
    certificate: str = ""
    out_dir: str = "."
    formats: tuple = ("csv", "svg")
    exact_cap: int = 0


_DEFAULT_LEVELS = {
    "sym_dissipation": (3, 4, 5, 6),
    "hamming_concentration": (8, 16, 32, 64),
    "cantor_concentration": (2, 4, 6, 8),
}

_KEYS = {
    "experiment",
    "family",
    "metric",
    "mode",
    "sample_size",
    "levels",
    "grid",
    "delta",
    "samples",
    "seed",
    "kappa",
    "dims",
    "resolution",
    "certificate",
    "out_dir",
    "formats",
    "exact_cap",
}


def _parse_grid(text: str) -> tuple:
    cells = []
    for tok in text.split():
        m_part, colon, a_part = tok.partition(":")
        if not colon:
            raise ConfigError(f"grid cell {tok!r} is not m:alpha")
        try:
            m = int(m_part)
            alpha = Fraction(a_part)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad grid cell {tok!r}: {exc}") from exc
        cells.append((m, alpha))
    return tuple(cells)


def _parse_ints(text: str, key: str) -> tuple:
    try:
        return tuple(int(t) for t in text.split())
    except ValueError as exc:
        raise ConfigError(f"{key} wants integers: {exc}") from exc


def parse_config_lines(lines) -> ExperimentConfig:
    """Line-oriented `key = value`; # starts a comment."""
    values: dict = {}
    for raw in lines:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        if not eq:
            raise ConfigError(f"expected `key = value`, got {raw.strip()!r}")
        key, val = key.strip(), val.strip()
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"duplicate config key {key!r}")
        values[key] = val
    if "experiment" not in values:
        raise ConfigError("config must set `experiment`")
    experiment = values.pop("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}"
        )
    cfg = ExperimentConfig(experiment=experiment)
    for key, val in values.items():
        try:
            if key in ("sample_size", "samples", "seed", "resolution", "exact_cap"):
                cfg = replace(cfg, **{key: int(val)})
            elif key in ("delta", "kappa"):
                cfg = replace(cfg, **{key: float(val)})
            elif key in ("levels", "dims"):
                cfg = replace(cfg, **{key: _parse_ints(val, key)})
            elif key == "grid":
                cfg = replace(cfg, grid=_parse_grid(val))
            elif key == "metric":
                cfg = replace(cfg, metric=groups.metric_from_string(val))
            elif key == "formats":
                cfg = replace(cfg, formats=tuple(val.split()))
            else:
                cfg = replace(cfg, **{key: val})
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from exc
    return _validated(cfg)


def parse_config_file(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return parse_config_lines(fh)
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc


def _validated(cfg: ExperimentConfig) -> ExperimentConfig:
    if not cfg.levels and cfg.experiment in _DEFAULT_LEVELS:
        cfg = replace(cfg, levels=_DEFAULT_LEVELS[cfg.experiment])
    if cfg.metric is None:
        default = (
            groups.hamming_normalized()
            if cfg.experiment == "hamming_concentration"
            else groups.inverse_of(groups.weighted_mismatch())
            if cfg.experiment == "sym_dissipation"
            else groups.weighted_mismatch()
        )
        cfg = replace(cfg, metric=default)
    if not cfg.grid and cfg.experiment in ("sym_dissipation", "cube_demo"):
        cfg = replace(cfg, grid=((1, Fraction(1, 3)),))
    if cfg.delta <= 0:
        raise ConfigError("delta must be positive")
    for m, alpha in cfg.grid:
        if m < 1:
            raise ConfigError(f"grid cell m={m} must be >= 1")
        if not 0 < alpha < Fraction(1, m + 1):
            raise ConfigError(
                f"grid cell (m={m}, alpha={alpha}) violates alpha < 1/(m+1)"
            )
    if cfg.experiment == "verify_certificate" and not cfg.certificate:
        raise ConfigError("verify_certificate needs `certificate = <path>`")
    if cfg.experiment == "cantor_concentration":
        if any(d < 1 or d + 1 > groups.CANTOR_EXACT_CAP for d in cfg.levels):
            raise ConfigError(
                f"cantor depths need 1 <= d and d+1 <= {groups.CANTOR_EXACT_CAP}"
            )
    if cfg.experiment == "cube_demo":
        if cfg.resolution < 2:
            raise ConfigError("cube resolution must be >= 2")
        if any(d < 1 or cfg.resolution ** d > 20_000 for d in cfg.dims):
            raise ConfigError("cube grids are capped at 20000 points")
    for fmt in cfg.formats:
        if fmt not in ("csv", "svg"):
            raise ConfigError(f"unknown format {fmt!r}")
    return cfg


# ---- deterministic fan-out ---------------------------------------------------


def _worker_count(tasks: int) -> int:
    env = os.environ.get("MMGEO_THREADS", "")
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ConfigError(f"MMGEO_THREADS={env!r} is not an integer")
    else:
        cap = min(4, os.cpu_count() or 1)
    return max(1, min(cap, tasks))


def _map_ordered(fn, items: Sequence):
    """Run fn over items concurrently, return results in input order."""
    items = list(items)
    if not items:
        return []
    workers = _worker_count(len(items))
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---- experiment runners ------------------------------------------------------


def _cell_label(m, alpha) -> str:
    return f"m={m};alpha={alpha}"


def _sym_chain(cfg: ExperimentConfig) -> list:
    spec = groups.ChainSpec(cfg.family, cfg.metric)
    return [groups.build_chain_space(spec, n) for n in cfg.levels]


def _cell_witnesses(cfg, chain, m, alpha) -> tuple:
    """Theorem witnesses per level, as index blocks; missing levels skipped."""
    blocks = {}
    strategies = {}
    for si, (n, space) in enumerate(zip(cfg.levels, chain)):
        try:
            w = groups.theorem_witness(n, m, (alpha,) * (m + 1), metric=cfg.metric)
        except (ChainTooShort, MetricNotRightInvariant):
            continue
        blocks[(0, si)] = groups.witness_index_blocks(w, space)
        strategies[n] = w.strategy
    return blocks, strategies


def _sym_cell_rows(cfg, chain, cell) -> tuple:
    m, alpha = cell
    label = _cell_label(m, alpha)
    blocks, strategies = _cell_witnesses(cfg, chain, m, alpha)
    if cfg.exact_cap:
        # exact answers where the cap allows, witness brackets beyond it
        entries = []
        for si, space in enumerate(chain):
            if space.n <= cfg.exact_cap and m <= 3:
                br = separation.sep_uniform(
                    space, m, float(alpha), "exact", exact_points_cap=cfg.exact_cap
                )
            else:
                br = separation.sep_uniform(
                    space, m, float(alpha), "bracket", witness=blocks.get((0, si))
                )
            entries.append(br)
        if all(b.lower >= cfg.delta - 1e-12 for b in entries):
            verdict = SUPPORTS
        elif entries[-1].exact and entries[-1].upper < cfg.delta:
            verdict = REFUTES
        else:
            verdict = INCONCLUSIVE
        lowers = [(si, b.lower, b.exact) for si, b in enumerate(entries)]
    else:
        rep = separation.dissipation_report(
            chain, cfg.delta, [(m, float(alpha))], effort="bracket", witnesses=blocks
        )
        verdict = rep.summary[f"m={m},alpha={float(alpha)}"]
        lowers = [(row[0], row[3], row[5]) for row in rep.rows]
    rows = [
        (
            cfg.experiment,
            cfg.levels[si],
            label,
            m,
            alpha,
            lower,
            TAG_EXACT if exact else TAG_LOWER,
            verdict,
        )
        for si, lower, exact in lowers
    ]
    series = (label, tuple((cfg.levels[si], lower) for si, lower, _ in lowers))
    return rows, {label: verdict}, series, strategies


def _run_sym_dissipation(cfg: ExperimentConfig) -> Report:
    chain = _sym_chain(cfg)
    cell_out = _map_ordered(lambda cell: _sym_cell_rows(cfg, chain, cell), cfg.grid)
    rows: list = []
    summary: dict = {}
    series: list = []
    strategies: dict = {}
    for cell_rows, cell_summary, cell_series, cell_strats in cell_out:
        rows.extend(cell_rows)
        summary.update(cell_summary)
        series.append(cell_series)
        strategies.update(cell_strats)

    for alpha in dict.fromkeys(a for _, a in cfg.grid):
        ms = tuple(sorted({m for m, a in cfg.grid if a == alpha}))
        key = f"capacity;alpha={alpha}"
        try:
            growth = witness.capacity_growth_check(
                chain, cfg.delta, alpha, m_targets=ms
            )
        except NoBlocksFound:
            summary[key] = "no-blocks"
            continue
        summary[key] = growth.report.summary["verdict"]
        for si, m, _eps, _tau, cap, tag, verdict in growth.report.rows:
            rows.append(
                (
                    cfg.experiment,
                    cfg.levels[si],
                    f"capacity;m={m};alpha={alpha}",
                    m,
                    alpha,
                    cap,
                    tag,
                    verdict,
                )
            )
        for label, pts in growth.report.series:
            series.append(
                (
                    f"capacity;{label};alpha={alpha}",
                    tuple((cfg.levels[int(x)], y) for x, y in pts),
                )
            )

    strat_note = " ".join(f"{n}:{s}" for n, s in sorted(strategies.items()))
    provenance = (
        f"tool: mmgeo {__version__}",
        f"metric: {groups.metric_to_string(cfg.metric)}",
        f"levels: {' '.join(str(n) for n in cfg.levels)}",
        f"delta: {cfg.delta!r}",
        f"exact cap: {cfg.exact_cap}",
        f"witness strategies: {strat_note or 'none'}",
        "scope: finite-prefix evidence",
    )
    return _finish(cfg, rows, summary, provenance, series)


def _run_hamming_concentration(cfg: ExperimentConfig) -> Report:
    def level_value(n: int) -> float:
        spec = groups.ChainSpec(
            "sym",
            cfg.metric,
            mode="sampled",
            sample_size=cfg.sample_size,
            seed=cfg.seed,
        )
        space = groups.build_chain_space(spec, n)
        return groups.obs_diam_estimate(
            space, cfg.kappa, samples=cfg.samples, seed=cfg.seed
        )

    values = _map_ordered(level_value, cfg.levels)
    label = f"kappa={cfg.kappa}"
    rows = [
        (cfg.experiment, n, label, "", "", val, TAG_ESTIMATE, INCONCLUSIVE)
        for n, val in zip(cfg.levels, values)
    ]
    decreasing = all(a > b for a, b in zip(values, values[1:]))
    summary = {
        "trend": "decreasing" if decreasing else "mixed",
        "verdict": INCONCLUSIVE,  # sampled evidence never certifies
    }
    if values and values[0] > 0:
        summary["final_over_initial"] = repr(values[-1] / values[0])
    provenance = (
        f"tool: mmgeo {__version__}",
        f"metric: {groups.metric_to_string(cfg.metric)}",
        f"kappa: {cfg.kappa!r}",
        f"sample size: {cfg.sample_size}",
        f"function draws: {cfg.samples}",
        f"seed: {cfg.seed}",
        "scope: Monte Carlo estimates on sampled spaces",
    )
    series = [(label, tuple(zip(cfg.levels, values)))]
    return _finish(cfg, rows, summary, provenance, series)


def _run_cantor_concentration(cfg: ExperimentConfig) -> Report:
    spec = groups.ChainSpec("cantor", cfg.metric)

    def depth_value(depth: int) -> float:
        shallow = groups.build_chain_space(spec, depth)
        deep = groups.build_chain_space(spec, depth + 1)
        where = {p: i for i, p in enumerate(shallow.points)}
        parent = np.array([where[p[:-1]] for p in deep.points])
        # transporting functions along the truncation coupling distorts
        # distances by at most this much, so it upper-estimates the
        # concentration gap between consecutive levels
        return float(
            np.abs(deep.dist - shallow.dist[np.ix_(parent, parent)]).max()
        )

    values = _map_ordered(depth_value, cfg.levels)
    rows = [
        (cfg.experiment, d, "dconc-upper", "", "", val, TAG_ESTIMATE, INCONCLUSIVE)
        for d, val in zip(cfg.levels, values)
    ]
    decreasing = all(a > b for a, b in zip(values, values[1:]))
    summary = {
        "trend": "decreasing" if decreasing else "mixed",
        "verdict": INCONCLUSIVE,
    }
    provenance = (
        f"tool: mmgeo {__version__}",
        f"metric: {groups.metric_to_string(cfg.metric)}",
        f"depths: {' '.join(str(d) for d in cfg.levels)}",
        "estimator: truncation-coupling distortion between consecutive levels",
        "scope: finite-prefix evidence",
    )
    series = [("dconc-upper", tuple(zip(cfg.levels, values)))]
    return _finish(cfg, rows, summary, provenance, series)


def _cube_space(dim: int, resolution: int) -> FiniteMMSpace:
    axis = [(i + 0.5) / resolution for i in range(resolution)]
    points = list(itertools.product(axis, repeat=dim))
    coords = np.array(points)
    dist = np.zeros((len(points), len(points)))
    for k in range(dim):
        np.maximum(dist, np.abs(coords[:, k, None] - coords[None, :, k]), out=dist)
    count = len(points)
    return validate_space(
        points,
        dist,
        np.full(count, 1.0 / count),
        triangle="skip",
        meta={"family": "cube", "dim": dim, "resolution": resolution},
    )


def _run_cube_demo(cfg: ExperimentConfig) -> Report:
    spaces = {dim: _cube_space(dim, cfg.resolution) for dim in cfg.dims}

    def cell_value(task):
        dim, (m, alpha) = task
        bracket = separation.sep_uniform(spaces[dim], m, float(alpha), "bracket")
        return bracket.lower

    tasks = [(dim, cell) for dim in cfg.dims for cell in cfg.grid]
    values = _map_ordered(cell_value, tasks)
    rows = [
        (
            cfg.experiment,
            dim,
            _cell_label(m, alpha),
            m,
            alpha,
            value,
            TAG_ESTIMATE,  # the grid only stands in for the cube
            INCONCLUSIVE,  # by design: neither claim is certifiable here
        )
        for (dim, (m, alpha)), value in zip(tasks, values)
    ]
    summary = {"verdict": INCONCLUSIVE}
    provenance = (
        f"tool: mmgeo {__version__}",
        f"dims: {' '.join(str(d) for d in cfg.dims)}",
        f"resolution: {cfg.resolution}",
        "scope: grid discretization; estimates only, inconclusive by design",
    )
    by_cell: dict = {}
    for (dim, cell), value in zip(tasks, values):
        by_cell.setdefault(_cell_label(*cell), []).append((dim, value))
    series = [(label, tuple(pts)) for label, pts in by_cell.items()]
    return _finish(cfg, rows, summary, provenance, series)


def _run_verify_certificate(cfg: ExperimentConfig) -> Report:
    try:
        with open(cfg.certificate) as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read certificate {cfg.certificate}: {exc}") from exc
    head = text.lstrip().splitlines()[0] if text.strip() else ""
    if head.startswith("mmgeo capacity certificate"):
        cert = witness.verify_certificate(text)
        degree = cert.space.meta.get("degree", cert.space.n)
        row = (
            cfg.experiment,
            degree,
            "capacity-certificate",
            "",
            "",
            cert.verified_capacity,
            TAG_EXACT,
            "verified",
        )
        summary = {"verdict": "verified", "capacity": str(cert.verified_capacity)}
    elif head.startswith("mmgeo coset witness"):
        cw = groups.coset_witness_from_text(text)
        row = (
            cfg.experiment,
            cw.degree,
            "coset-witness",
            len(cw.kappas) - 1,
            "",
            cw.delta,
            TAG_LOWER,
            "verified",
        )
        summary = {"verdict": "verified", "strategy": cw.strategy}
    else:
        raise CertificateInvalid(f"unrecognized certificate header {head!r}")
    provenance = (
        f"tool: mmgeo {__version__}",
        f"certificate: {os.path.basename(cfg.certificate)}",
    )
    return _finish(cfg, [row], summary, provenance, [])


def _finish(cfg, rows, summary, provenance, series) -> Report:
    rows = sorted(rows, key=lambda r: (r[1], r[2], str(r[3])))
    return Report(
        title=cfg.experiment,
        columns=COLUMNS,
        rows=tuple(rows),
        summary=summary,
        provenance=tuple(provenance),
        series=tuple(series),
    )


_RUNNERS = {
    "sym_dissipation": _run_sym_dissipation,
    "hamming_concentration": _run_hamming_concentration,
    "cantor_concentration": _run_cantor_concentration,
    "cube_demo": _run_cube_demo,
    "verify_certificate": _run_verify_certificate,
}


def run(config: ExperimentConfig) -> Report:
    """Run one experiment to a Report; see the module header for the schema."""
    if config.experiment not in _RUNNERS:
        raise ConfigError(f"unknown experiment {config.experiment!r}")
    return _RUNNERS[config.experiment](config)


def emit(report: Report, out_dir: str = ".", formats=("csv", "svg")) -> list:
    """Write the report files; returns the paths written.

    SVG is skipped silently when the report has no series to draw.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}") from exc
    written = []
    for fmt in formats:
        if fmt not in ("csv", "svg"):
            raise ConfigError(f"unknown format {fmt!r}")
        path = os.path.join(out_dir, f"{report.title}.{fmt}")
        try:
            if fmt == "csv":
                write_csv(report, path)
                written.append(path)
            else:
                if write_figure(report, path) is not None:
                    written.append(path)
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc
    return written


# ---- command line --------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmgeo",
        description="Finite metric measure space experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run an experiment config")
    runp.add_argument("config")
    runp.add_argument("--seed", type=int, default=None)
    runp.add_argument("--exact-cap", type=int, default=None)
    runp.add_argument("--out-dir", default=None)
    runp.add_argument("--format", choices=("csv", "svg"), action="append")

    verp = sub.add_parser("verify", help="re-check a serialized certificate")
    verp.add_argument("certificate")

    spacep = sub.add_parser("space", help="build or inspect space files")
    ssub = spacep.add_subparsers(dest="space_command", required=True)
    buildp = ssub.add_parser("build", help="build a chain level and write it")
    buildp.add_argument("--family", choices=("sym", "cantor"), required=True)
    buildp.add_argument("--level", type=int, required=True)
    buildp.add_argument("--metric", default="weighted")
    buildp.add_argument("--mode", choices=("exact", "sampled"), default="exact")
    buildp.add_argument("--sample-size", type=int, default=0)
    buildp.add_argument("--seed", type=int, default=None)
    buildp.add_argument("--out", required=True)
    descp = ssub.add_parser("describe", help="summarize a space file")
    descp.add_argument("path")
    return parser


def _cmd_run(args) -> int:
    cfg = parse_config_file(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.exact_cap is not None:
        cfg = replace(cfg, exact_cap=args.exact_cap)
    if args.out_dir is not None:
        cfg = replace(cfg, out_dir=args.out_dir)
    if args.format:
        cfg = replace(cfg, formats=tuple(dict.fromkeys(args.format)))
    cfg = _validated(cfg)
    report = run(cfg)
    for key in sorted(report.summary):
        print(f"{key}: {report.summary[key]}")
    for path in emit(report, cfg.out_dir, cfg.formats):
        print(f"wrote {path}")
    return 0


def _cmd_verify(args) -> int:
    cfg = ExperimentConfig(experiment="verify_certificate", certificate=args.certificate)
    report = run(cfg)
    row = report.rows[0]
    print(f"verified: {row[2]} value={row[5]} ({row[6]})")
    return 0


def _cmd_space(args) -> int:
    if args.space_command == "build":
        spec = groups.ChainSpec(
            family=args.family,
            metric=groups.metric_from_string(args.metric),
            mode=args.mode,
            sample_size=args.sample_size,
            seed=args.seed,
        )
        space = groups.build_chain_space(spec, args.level)
        try:
            write_space(space, args.out)
        except OSError as exc:
            raise IoError(f"cannot write {args.out}: {exc}") from exc
        print(f"wrote {args.out}: {space.n} points, diameter {space.diameter()!r}")
        return 0
    try:
        space = read_space(args.path)
    except OSError as exc:
        raise IoError(f"cannot read {args.path}: {exc}") from exc
    print(
        f"{args.path}: {space.n} points, mode {space.mode}, "
        f"diameter {space.diameter()!r}"
    )
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "verify":
            return _cmd_verify(args)
        return _cmd_space(args)
    except MmgeoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
