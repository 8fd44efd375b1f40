"""Static SVG line charts for size curves and critical-value profiles."""
from __future__ import annotations

import io
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

__all__ = ["line_chart_svg", "size_curve_svg"]


def line_chart_svg(
    x,
    series: Sequence[tuple[str, Sequence[float]]],
    *,
    xlabel: str,
    ylabel: str,
    title: str = "",
    reference: float | None = None,
    reference_label: str = "",
    path=None,
) -> str:
    """Render one or more line series as SVG text.

    A horizontal dashed line is drawn at ``reference`` when given; its SVG
    element carries ``id="delta-reference"`` so it can be located by tests
    and downstream tooling.
    """
    fig = Figure(figsize=(7.0, 4.2))
    ax = fig.add_subplot()
    for label, y in series:
        ax.plot(x, y, lw=1.4, label=label)
    if reference is not None:
        line = ax.axhline(reference, color="black", ls="--", lw=1.0, label=reference_label or None)
        line.set_gid("delta-reference")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    if len(series) > 1 or reference_label:
        ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def size_curve_svg(curve, path=None) -> str:
    """Chart a :class:`~pmscrit.size.SizeCurve` against the nominal level."""
    rule = curve.rule
    p = curve.params
    title = f"{rule.label} rule, rho={p.rho:g}, c={p.cutoff:g} ({curve.method})"
    return line_chart_svg(
        curve.gammas, [(rule.label, curve.rejection)],
        xlabel="gamma", ylabel="null rejection probability", title=title,
        reference=rule.delta, reference_label=f"delta = {rule.delta:g}", path=path,
    )
