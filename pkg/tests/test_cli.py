"""Config parsing, experiment runners, emission, and the command line.

The dissipation expectations are cross-checked in-test against the
separation solver rather than hand-frozen; the cantor values are frozen
from the metric definition (the level-d truncation coupling distorts
distances by exactly the weight of the dropped coordinate).
"""

import os
from dataclasses import replace
from fractions import Fraction

import pytest

from mmgeo import cli, errors, groups, separation, witness
from mmgeo.reports import Report, render_csv


def parse(text: str) -> cli.ExperimentConfig:
    return cli.parse_config_lines(text.strip().splitlines())


# ---- config parsing -------------------------------------------------------


def test_parse_minimal_sym_config_fills_defaults():
    cfg = parse("experiment = sym_dissipation")
    assert cfg.levels == (3, 4, 5, 6)
    assert cfg.grid == ((1, Fraction(1, 3)),)
    assert cfg.metric == groups.inverse_of(groups.weighted_mismatch())
    assert cfg.delta == 0.5
    assert cfg.formats == ("csv", "svg")


def test_parse_full_config():
    cfg = parse(
        """
        # comment line
        experiment = sym_dissipation
        levels = 3 4    # trailing comment
        grid = 1:1/3 2:1/8
        delta = 0.25
        metric = inverse(weighted)
        seed = 9
        out_dir = /tmp/x
        formats = csv
        """
    )
    assert cfg.levels == (3, 4)
    assert cfg.grid == ((1, Fraction(1, 3)), (2, Fraction(1, 8)))
    assert cfg.delta == 0.25
    assert cfg.seed == 9
    assert cfg.out_dir == "/tmp/x"
    assert cfg.formats == ("csv",)


def test_parse_rejects_bad_syntax_and_keys():
    with pytest.raises(errors.ConfigError):
        parse("experiment = sym_dissipation\nno equals sign here")
    with pytest.raises(errors.ConfigError):
        parse("experiment = sym_dissipation\nflavor = mint")
    with pytest.raises(errors.ConfigError):
        parse("experiment = sym_dissipation\nseed = 1\nseed = 2")
    with pytest.raises(errors.ConfigError):
        parse("seed = 1")
    with pytest.raises(errors.ConfigError):
        parse("experiment = levitation")
    with pytest.raises(errors.ConfigError):
        parse("experiment = sym_dissipation\nseed = soon")


def test_parse_enforces_invariants():
    with pytest.raises(errors.ConfigError):
        parse("experiment = sym_dissipation\ngrid = 1:1/2")
    with pytest.raises(errors.ConfigError):
        parse("experiment = sym_dissipation\ngrid = 0:1/3")
    with pytest.raises(errors.ConfigError):
        parse("experiment = sym_dissipation\ngrid = 1:0.3 2:nope")
    with pytest.raises(errors.ConfigError):
        parse("experiment = sym_dissipation\ndelta = 0")
    with pytest.raises(errors.ConfigError):
        parse("experiment = sym_dissipation\nformats = csv pdf")
    with pytest.raises(errors.ConfigError):
        parse("experiment = verify_certificate")
    with pytest.raises(errors.ConfigError):
        parse("experiment = cantor_concentration\nlevels = 14")
    with pytest.raises(errors.ConfigError):
        parse("experiment = cube_demo\nresolution = 1")
    with pytest.raises(errors.ConfigError):
        parse("experiment = cube_demo\ndims = 5\nresolution = 10")


def test_parse_config_file_missing(tmp_path):
    with pytest.raises(errors.IoError):
        cli.parse_config_file(str(tmp_path / "absent.cfg"))


# ---- sym dissipation --------------------------------------------------------


def test_sym_dissipation_headline_run():
    cfg = parse("experiment = sym_dissipation\nlevels = 3 4 5 6\ngrid = 1:1/3")
    report = cli.run(cfg)
    assert report.columns == cli.COLUMNS
    sep_rows = [r for r in report.rows if r[2] == "m=1;alpha=1/3"]
    assert [r[1] for r in sep_rows] == [3, 4, 5, 6]
    for row in sep_rows:
        assert row[6] == "certified-lower"
        assert row[5] >= 0.5
        assert row[7] == "supports"
    assert report.summary["m=1;alpha=1/3"] == "supports"
    assert report.summary["capacity;alpha=1/3"] == "certified"
    cap_rows = [r for r in report.rows if r[2].startswith("capacity;")]
    assert cap_rows and all(r[7] == "certified" for r in cap_rows)
    # ordered by (n, cell)
    assert list(report.rows) == sorted(report.rows, key=lambda r: (r[1], r[2], str(r[3])))


def test_sym_dissipation_exact_cap_agrees_with_solver():
    cfg = parse(
        "experiment = sym_dissipation\nlevels = 3 4\ngrid = 1:1/3\nexact_cap = 30"
    )
    report = cli.run(cfg)
    sep_rows = [r for r in report.rows if r[2] == "m=1;alpha=1/3"]
    assert all(r[6] == "exact" for r in sep_rows)
    for row in sep_rows:
        space = groups.build_chain_space(groups.ChainSpec("sym", cfg.metric), row[1])
        bracket = separation.sep_uniform(space, 1, 1 / 3, "exact", exact_points_cap=30)
        assert row[5] == bracket.lower


def test_sym_dissipation_deterministic_across_workers(monkeypatch):
    cfg = parse("experiment = sym_dissipation\nlevels = 3 4\ngrid = 1:1/3 2:1/8")
    monkeypatch.setenv("MMGEO_THREADS", "1")
    serial = render_csv(cli.run(cfg))
    monkeypatch.setenv("MMGEO_THREADS", "3")
    threaded = render_csv(cli.run(cfg))
    assert serial == threaded


def test_bad_thread_env(monkeypatch):
    monkeypatch.setenv("MMGEO_THREADS", "many")
    cfg = parse("experiment = sym_dissipation\nlevels = 3\ngrid = 1:1/3")
    with pytest.raises(errors.ConfigError):
        cli.run(cfg)


# ---- the other experiments ---------------------------------------------------


def test_hamming_concentration_rows():
    cfg = parse(
        """
        experiment = hamming_concentration
        levels = 8 16
        sample_size = 120
        samples = 16
        seed = 3
        """
    )
    report = cli.run(cfg)
    assert len(report.rows) == 2
    for row in report.rows:
        assert row[2] == "kappa=0.1"
        assert row[6] == "estimate"  # sampled spaces never certify
        assert row[7] == "inconclusive"
    values = [r[5] for r in report.rows]
    expected_trend = "decreasing" if values[0] > values[1] else "mixed"
    assert report.summary["trend"] == expected_trend
    again = cli.run(cfg)
    assert again.rows == report.rows


def test_cantor_concentration_frozen_values():
    cfg = parse("experiment = cantor_concentration\nlevels = 2 3")
    report = cli.run(cfg)
    # dropping coordinate d costs exactly its weight
    assert [r[5] for r in report.rows] == [0.125, 0.0625]
    assert all(r[6] == "estimate" for r in report.rows)
    assert report.summary["trend"] == "decreasing"


def test_cube_demo_inconclusive_by_design():
    cfg = parse(
        "experiment = cube_demo\ndims = 1 2\nresolution = 6\ngrid = 1:1/3"
    )
    report = cli.run(cfg)
    assert len(report.rows) == 2
    for row in report.rows:
        assert row[6] == "estimate"
        assert row[7] == "inconclusive"
        assert row[5] >= 0.0
    assert report.summary["verdict"] == "inconclusive"
    assert [r[1] for r in report.rows] == [1, 2]


def test_verify_certificate_experiment(tmp_path):
    w = groups.theorem_witness(4, 1, (Fraction(1, 3), Fraction(1, 3)))
    wit_path = tmp_path / "wit.txt"
    wit_path.write_text(groups.coset_witness_to_text(w))
    cfg = cli.ExperimentConfig(
        experiment="verify_certificate", certificate=str(wit_path)
    )
    report = cli.run(cfg)
    row = report.rows[0]
    assert row[2] == "coset-witness" and row[7] == "verified"
    assert row[5] == 0.5 and row[6] == "certified-lower"

    chain = [
        groups.build_chain_space(
            groups.ChainSpec("sym", groups.inverse_of(groups.weighted_mismatch())), n
        )
        for n in (3, 4)
    ]
    growth = witness.capacity_growth_check(
        chain, 0.5, Fraction(1, 4), m_targets=(1, 2)
    )
    cert_path = tmp_path / "cert.txt"
    cert_path.write_text(witness.serialize_certificate(growth.certificates[(2, 1)]))
    report = cli.run(replace(cfg, certificate=str(cert_path)))
    row = report.rows[0]
    assert row[2] == "capacity-certificate" and row[5] == 2 and row[6] == "exact"

    junk = tmp_path / "junk.txt"
    junk.write_text("not a certificate\n")
    with pytest.raises(errors.CertificateInvalid):
        cli.run(replace(cfg, certificate=str(junk)))
    with pytest.raises(errors.IoError):
        cli.run(replace(cfg, certificate=str(tmp_path / "absent.txt")))


# ---- emission ------------------------------------------------------------------


def empty_report(title="empty"):
    return Report(
        title=title,
        columns=cli.COLUMNS,
        rows=(),
        summary={},
        provenance=("tool: test",),
        series=(),
    )


def test_emit_empty_report_header_only(tmp_path):
    paths = cli.emit(empty_report(), str(tmp_path), ("csv", "svg"))
    assert len(paths) == 1  # no series, so no svg
    content = open(paths[0]).read()
    assert content == "experiment,n,cell,m,alpha,value,tag,verdict\n"


def test_emit_three_rows_stable_order(tmp_path):
    rows = [
        ("e", 4, "m=1", 1, Fraction(1, 3), 0.5, "exact", "supports"),
        ("e", 3, "m=2", 2, Fraction(1, 8), 0.25, "exact", "supports"),
        ("e", 3, "m=1", 1, Fraction(1, 3), 0.75, "exact", "supports"),
    ]
    cfg = cli.ExperimentConfig(experiment="sym_dissipation")
    report = cli._finish(cfg, rows, {}, ("tool: test",), [])
    path = cli.emit(report, str(tmp_path), ("csv",))[0]
    lines = open(path).read().splitlines()
    assert len(lines) == 4
    assert lines[1].startswith("e,3,m=1") and lines[2].startswith("e,3,m=2")
    assert lines[3].startswith("e,4,m=1")


def test_emit_svg_one_polyline_per_cell(tmp_path):
    report = Report(
        title="twocells",
        columns=cli.COLUMNS,
        rows=(),
        summary={},
        provenance=(),
        series=(
            ("m=1;alpha=1/3", ((3, 0.75), (4, 0.56))),
            ("m=2;alpha=1/8", ((3, 0.5), (4, 0.5))),
        ),
    )
    paths = cli.emit(report, str(tmp_path), ("svg",))
    assert len(paths) == 1
    svg = open(paths[0]).read()
    assert svg.count('id="series-') == 2


def test_emit_rejects_unknown_format_and_bad_dir(tmp_path):
    with pytest.raises(errors.ConfigError):
        cli.emit(empty_report(), str(tmp_path), ("txt",))
    blocker = tmp_path / "blocker"
    blocker.write_text("file, not a directory")
    with pytest.raises(errors.IoError):
        cli.emit(empty_report(), str(blocker), ("csv",))


# ---- command line ----------------------------------------------------------------


def test_main_run_with_flags(tmp_path, capsys):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(
        "experiment = sym_dissipation\nlevels = 3\ngrid = 1:1/3\n"
    )
    out_dir = tmp_path / "out"
    rc = cli.main(
        ["run", str(cfg_path), "--out-dir", str(out_dir), "--format", "csv"]
    )
    assert rc == 0
    assert (out_dir / "sym_dissipation.csv").exists()
    assert not (out_dir / "sym_dissipation.svg").exists()
    printed = capsys.readouterr().out
    assert "supports" in printed and "wrote" in printed


def test_main_verify_roundtrip(tmp_path, capsys):
    w = groups.theorem_witness(3, 1, (Fraction(1, 3), Fraction(1, 3)))
    good = tmp_path / "w.txt"
    good.write_text(groups.coset_witness_to_text(w))
    assert cli.main(["verify", str(good)]) == 0
    assert "verified" in capsys.readouterr().out
    bad = tmp_path / "bad.txt"
    bad.write_text(
        groups.coset_witness_to_text(w).replace("masses 1/3 1/3", "masses 1/2 1/2")
    )
    assert cli.main(["verify", str(bad)]) == 2
    assert "error:" in capsys.readouterr().err


def test_main_space_build_and_describe(tmp_path, capsys):
    out = tmp_path / "s.mmspace"
    rc = cli.main(
        [
            "space", "build", "--family", "sym", "--level", "3",
            "--metric", "weighted", "--out", str(out),
        ]
    )
    assert rc == 0 and out.exists()
    assert cli.main(["space", "describe", str(out)]) == 0
    assert "6 points" in capsys.readouterr().out
    assert cli.main(["space", "describe", str(tmp_path / "nope")]) == 2
    # sampled build demands a seed
    assert cli.main(
        [
            "space", "build", "--family", "sym", "--level", "5",
            "--mode", "sampled", "--sample-size", "10",
            "--out", str(tmp_path / "x"),
        ]
    ) == 2
