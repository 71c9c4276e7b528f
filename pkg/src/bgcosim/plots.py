"""Minimal deterministic SVG plots (axes, one series or one bar set).

Hand-rolled on purpose: the reproducibility contract wants byte-identical
output files, and the numbers behind every plot are also written as CSV next
to it.
"""

from __future__ import annotations

import pathlib

from bgcosim.cosim import EpisodeTrace, Histogram

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 15, 30, 45


class PlotError(ValueError):
    pass


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def _svg_header(title: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{title}</text>',
    ]


def _axes(x_lo, x_hi, y_lo, y_hi, x_label, y_label) -> tuple[list[str], callable, callable]:
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(x):
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo or 1.0) * plot_w

    def sy(y):
        return HEIGHT - MARGIN_B - (y - y_lo) / (y_hi - y_lo or 1.0) * plot_h

    parts = [
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" '
        f'y2="{HEIGHT - MARGIN_B}" stroke="black"/>',
        f'<line x1="{MARGIN_L}" y1="{HEIGHT - MARGIN_B}" x2="{WIDTH - MARGIN_R}" '
        f'y2="{HEIGHT - MARGIN_B}" stroke="black"/>',
        f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">{x_label}</text>',
        f'<text x="14" y="{HEIGHT / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11" '
        f'transform="rotate(-90 14 {HEIGHT / 2:.1f})">{y_label}</text>',
    ]
    for tick in _ticks(x_lo, x_hi):
        parts.append(
            f'<text x="{sx(tick):.1f}" y="{HEIGHT - MARGIN_B + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{_fmt(tick)}</text>'
        )
    for tick in _ticks(y_lo, y_hi):
        parts.append(
            f'<text x="{MARGIN_L - 6}" y="{sy(tick) + 3:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{_fmt(tick)}</text>'
        )
    return parts, sx, sy


def line_plot_svg(xs, ys, title, x_label, y_label) -> str:
    if not xs:
        raise PlotError("empty series")
    y_lo, y_hi = min(ys), max(ys)
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    parts = _svg_header(title)
    axes, sx, sy = _axes(min(xs), max(xs) or 1.0, y_lo - pad, y_hi + pad, x_label, y_label)
    parts += axes
    points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    parts.append(
        f'<polyline points="{points}" fill="none" stroke="steelblue" stroke-width="1.5"/>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def bar_plot_svg(histogram: Histogram, title, x_label, y_label) -> str:
    counts = histogram.counts
    edges = histogram.edges
    y_hi = max(max(counts), 1)
    parts = _svg_header(title)
    axes, sx, sy = _axes(edges[0], edges[-1], 0.0, y_hi * 1.05, x_label, y_label)
    parts += axes
    for i, count in enumerate(counts):
        x0, x1 = sx(edges[i]), sx(edges[i + 1])
        y0 = sy(count)
        parts.append(
            f'<rect x="{x0 + 1:.2f}" y="{y0:.2f}" width="{max(x1 - x0 - 2, 1):.2f}" '
            f'height="{HEIGHT - MARGIN_B - y0:.2f}" fill="darkseagreen" stroke="black" '
            f'stroke-width="0.5"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _histogram_csv(histogram: Histogram) -> str:
    rows = ["bin_low,bin_high,count"]
    for i, count in enumerate(histogram.counts):
        rows.append(f"{histogram.edges[i]!r},{histogram.edges[i + 1]!r},{count}")
    return "\n".join(rows) + "\n"


def emit_plots(trace: EpisodeTrace, analyses, out_dir, formats=("csv", "svg")) -> list[str]:
    """Write the mean-voltage series, the voltage-magnitude histogram, and
    the per-regime net-load histograms; every plot's numbers go to a CSV of
    the same stem. Returns the list of file names written."""
    if not trace.records:
        raise PlotError("empty trace")
    out = pathlib.Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise PlotError(f"unwritable directory {out}: {exc}") from exc

    written: list[str] = []
    kpi = trace.kpis
    want_svg = "svg" in formats
    want_csv = "csv" in formats

    steps = [rec.step for rec in trace.records]
    series = kpi.mean_voltage_series
    if want_svg:
        (out / "mean_voltage.svg").write_text(
            line_plot_svg(steps, series, "Network mean voltage", "step", "voltage (p.u.)"),
            encoding="utf-8",
        )
        written.append("mean_voltage.svg")
    if want_csv:
        rows = ["step,mean_voltage_pu"]
        rows += [f"{s},{v!r}" for s, v in zip(steps, series)]
        (out / "mean_voltage.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
        written.append("mean_voltage.csv")

    if want_svg:
        (out / "voltage_histogram.svg").write_text(
            bar_plot_svg(
                kpi.voltage_histogram, "Voltage magnitude distribution",
                "voltage (p.u.)", "samples",
            ),
            encoding="utf-8",
        )
        written.append("voltage_histogram.svg")
    if want_csv:
        (out / "voltage_histogram.csv").write_text(
            _histogram_csv(kpi.voltage_histogram), encoding="utf-8"
        )
        written.append("voltage_histogram.csv")

    for regime, histogram in sorted(kpi.net_load_by_regime.items()):
        stem = f"net_load_{regime}"
        if want_svg:
            (out / f"{stem}.svg").write_text(
                bar_plot_svg(
                    histogram, f"Net load distribution ({regime.replace('_', '-')})",
                    "net load (kW)", "samples",
                ),
                encoding="utf-8",
            )
            written.append(f"{stem}.svg")
        if want_csv:
            (out / f"{stem}.csv").write_text(_histogram_csv(histogram), encoding="utf-8")
            written.append(f"{stem}.csv")
    return written
