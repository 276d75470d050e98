"""Report container and file emitters.

A Report is a flat table plus a verdict summary, provenance lines, and
optional named series for a line chart. Emission is deterministic: the
CSV bytes depend only on the report contents, never on worker count or
wall clock, so runs can be diffed. Provenance goes to a separate text
file so an empty report still produces a header-only CSV.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

__all__ = ["Report", "render_csv", "write_csv", "write_figure", "write_provenance"]

TAG_EXACT = "exact"
TAG_LOWER = "certified-lower"
TAG_ESTIMATE = "estimate"


@dataclass(frozen=True)
class Report:
    """Tabular result of one experiment or detector run.

    rows hold CSV-ready values (numbers, strings, Fractions); series is
    a tuple of (label, ((x, y), ...)) pairs, one polyline each.
    """

    title: str
    columns: tuple
    rows: tuple
    summary: dict = field(default_factory=dict)
    provenance: tuple = ()
    series: tuple = ()


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (int, Fraction)):
        return str(value)
    text = str(value)
    if any(ch in text for ch in ",\n\r"):
        raise ValueError(f"cell value {text!r} would break the CSV")
    return text


def render_csv(report: Report) -> str:
    lines = [",".join(report.columns)]
    for row in report.rows:
        if len(row) != len(report.columns):
            raise ValueError("row width does not match the header")
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(report: Report, path: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(render_csv(report))


def write_provenance(report: Report, path: str) -> None:
    lines = [f"report: {report.title}"]
    lines.extend(report.provenance)
    for key in sorted(report.summary):
        lines.append(f"verdict {key}: {report.summary[key]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_figure(
    report: Report,
    path: str,
    xlabel: str = "n",
    ylabel: str = "value",
) -> Optional[str]:
    """Render the report series as one SVG line chart; returns the path,
    or None when the report has no series to draw."""
    if not report.series:
        return None
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with plt.rc_context({"svg.hashsalt": "mmgeo"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        for label, points in report.series:
            xs = [p[0] for p in points]
            ys = [p[1] for p in points]
            (line,) = ax.plot(xs, ys, marker="o", label=str(label))
            line.set_gid(f"series-{label}")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(report.title)
        if len(report.series) > 1:
            ax.legend()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
