"""Report rendering: long-format CSV, aggregate JSON, and SVG bar charts.

Rendering is pure formatting over a MetricsReport, so ``cmd report`` can
re-emit byte-identical artifacts from metrics.json without recomputation.
The SVG output is hand-written SVG 1.1 with no plotting dependency.
"""

from __future__ import annotations

import json
from pathlib import Path

from .util import atomic_write_text

CSV_COLUMNS = ("experiment", "seed", "environment", "speaker", "condition",
               "metric", "value", "denominator")


def rows_to_csv(rows: list[dict]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for r in rows:
        value = repr(float(r["value"]))
        denom = "" if r["denominator"] is None else str(r["denominator"])
        lines.append(f'{r["experiment"]},{r["seed"]},{r["environment"]},'
                     f'{r["speaker"]},{r["condition"]},{r["metric"]},'
                     f'{value},{denom}')
    return "\n".join(lines) + "\n"


def report_to_json(report) -> str:
    payload = {
        "config": report.config,
        "rows": report.rows,
        "aggregates": report.aggregates,
        "failures": report.failures,
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _bar_chart(title: str, ylabel: str,
               bars: list[tuple[str, float, float | None]]) -> str:
    """A fixed-size SVG bar chart with optional 95% CI whiskers."""
    width, height = 560, 360
    left, right, top, bottom = 70, 20, 50, 70
    plot_w, plot_h = width - left - right, height - top - bottom
    peak = max([m + (ci or 0.0) for _, m, ci in bars] + [1e-9])
    y_max = 1.0 if peak <= 1.0 else peak * 1.15

    def y(v: float) -> float:
        return top + plot_h * (1.0 - v / y_max)

    n = len(bars)
    slot = plot_w / n
    bar_w = slot * 0.55
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
        f'<text x="16" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {top + plot_h / 2:.1f})">{ylabel}</text>',
        f'<line x1="{left}" y1="{y(0):.1f}" x2="{width - right}" y2="{y(0):.1f}" '
        f'stroke="black" stroke-width="1"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{y(0):.1f}" '
        f'stroke="black" stroke-width="1"/>',
    ]
    ticks = 5
    for i in range(ticks + 1):
        v = y_max * i / ticks
        parts.append(f'<line x1="{left - 4}" y1="{y(v):.1f}" x2="{left}" '
                     f'y2="{y(v):.1f}" stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{left - 8}" y="{y(v) + 4:.1f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="10">{v:.2f}</text>')
    palette = ("#4878a8", "#e49444", "#6a9f58", "#d1605e", "#85b6b2", "#e7ca60")
    for i, (label, mean, ci) in enumerate(bars):
        cx = left + slot * (i + 0.5)
        x0 = cx - bar_w / 2
        parts.append(f'<rect x="{x0:.1f}" y="{y(mean):.1f}" width="{bar_w:.1f}" '
                     f'height="{y(0) - y(mean):.1f}" fill="{palette[i % len(palette)]}"/>')
        if ci is not None and ci > 0:
            lo, hi = y(max(mean - ci, 0.0)), y(min(mean + ci, y_max))
            parts.append(f'<line x1="{cx:.1f}" y1="{lo:.1f}" x2="{cx:.1f}" '
                         f'y2="{hi:.1f}" stroke="black" stroke-width="1.5"/>')
            for yy in (lo, hi):
                parts.append(f'<line x1="{cx - 6:.1f}" y1="{yy:.1f}" '
                             f'x2="{cx + 6:.1f}" y2="{yy:.1f}" '
                             f'stroke="black" stroke-width="1.5"/>')
        parts.append(f'<text x="{cx:.1f}" y="{y(0) + 16:.1f}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{label}</text>')
        parts.append(f'<text x="{cx:.1f}" y="{y(mean) - 5:.1f}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="10">{mean:.3f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _agg(report, env: str, speaker: str, condition: str, metric: str):
    return report.aggregates.get(f"{env}|{speaker}|{condition}|{metric}")


def _bar(report, env, speaker, condition, metric, label):
    entry = _agg(report, env, speaker, condition, metric)
    if entry is None:
        return None
    return (label, entry["mean"], entry.get("ci95_half"))


def experiment_charts(report) -> dict[str, str]:
    """Chart name -> SVG text for the experiment the report came from."""
    exp = report.config["experiment"]
    charts: dict[str, str] = {}
    if exp == 1:
        bars = [_bar(report, "uniform", s, "shape_needed", "overmodification", s)
                for s in ("literal", "rsa")]
        bars = [b for b in bars if b]
        if bars:
            charts["overmodification-uniform"] = _bar_chart(
                "Color overmodification (shape sufficient)", "rate", bars)
    elif exp == 2:
        for env in ("typicality", "uniform"):
            bars = []
            for s in ("literal", "rsa"):
                bars.append(_bar(report, env, s, "shape_needed",
                                 "overmodification_red_circle", f"{s}/red"))
                bars.append(_bar(report, env, s, "shape_needed",
                                 "overmodification_nonred_circle", f"{s}/non-red"))
            bars = [b for b in bars if b]
            if bars:
                charts[f"overmodification-{env}"] = _bar_chart(
                    f"Color overmodification on circles ({env})", "rate", bars)
    else:
        bars = []
        for s in ("literal", "rsa"):
            for env in ("high-salience", "low-salience"):
                bars.append(_bar(report, env, s, "shape_needed",
                                 "overmodification", f"{s}/{env.split('-')[0]}"))
        bars = [b for b in bars if b]
        if bars:
            charts["overmodification-salience"] = _bar_chart(
                "Color overmodification by salience", "rate", bars)
        ubars = [_bar(report, env, "rsa_internal", "all", "uncertainty_color_mean",
                      env.split("-")[0]) for env in ("high-salience", "low-salience")]
        ubars = [b for b in ubars if b]
        if ubars:
            charts["uncertainty-salience"] = _bar_chart(
                "Mean color-word uncertainty", "mean |value - truth|", ubars)
    return charts


def write_experiment_outputs(report, workdir: str | Path) -> list[Path]:
    workdir = Path(workdir)
    written = []
    csv_path = workdir / "report.csv"
    atomic_write_text(csv_path, rows_to_csv(report.rows))
    written.append(csv_path)
    json_path = workdir / "metrics.json"
    atomic_write_text(json_path, report_to_json(report))
    written.append(json_path)
    for name, svg in experiment_charts(report).items():
        path = workdir / f"{name}.svg"
        atomic_write_text(path, svg)
        written.append(path)
    return written


def load_report(workdir: str | Path):
    """Rebuild a MetricsReport from metrics.json (for re-rendering)."""
    from .experiments import MetricsReport

    path = Path(workdir) / "metrics.json"
    payload = json.loads(path.read_text())
    return MetricsReport(config=payload["config"], rows=payload["rows"],
                         aggregates=payload["aggregates"],
                         failures=payload["failures"])
