"""Figure and prediction-file export.

Two rendering paths on purpose: a hand-rolled SVG line chart whose bytes
are a pure function of its inputs (snapshot-testable), and matplotlib PNG
renditions of the same charts for human consumption. Reports write both.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CANVAS_W, CANVAS_H = 960, 540
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 24, 46, 52
MAX_POLYLINE_POINTS = 2000

PALETTE = ("#2a9d8f", "#e76f51", "#264653", "#e9c46a", "#8ab17d", "#6d597a")


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    span = hi - lo
    raw = span / max(target, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = 10.0 * mag
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + step * 1e-9:
        ticks.append(round(v, 10))
        v += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _downsample(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(x)
    if n <= MAX_POLYLINE_POINTS:
        return x, y
    stride = math.ceil(n / MAX_POLYLINE_POINTS)
    idx = np.arange(0, n, stride)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return x[idx], y[idx]


def line_chart_svg(
    title: str,
    series: Sequence[tuple[str, np.ndarray]],
    x: np.ndarray | None = None,
    x_label: str = "",
    y_label: str = "",
) -> str:
    """Deterministic SVG line chart: fixed canvas, labeled axes and ticks,
    one labeled polyline per series. Identical inputs give identical bytes.
    Series longer than ~2000 points are deterministically strided down."""
    cleaned = [(label, np.asarray(vals, dtype=np.float64).ravel()) for label, vals in series]
    cleaned = [(label, vals) for label, vals in cleaned if len(vals) > 0]

    if cleaned:
        n_max = max(len(v) for _, v in cleaned)
        xs = np.asarray(x, dtype=np.float64) if x is not None else np.arange(n_max, dtype=np.float64)
        x_lo, x_hi = float(xs.min()), float(xs.max())
        y_lo = min(float(v.min()) for _, v in cleaned)
        y_hi = max(float(v.max()) for _, v in cleaned)
    else:
        xs = np.array([])
        x_lo, x_hi, y_lo, y_hi = 0.0, 1.0, 0.0, 1.0
    if x_hi <= x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi <= y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.04 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    plot_w = CANVAS_W - MARGIN_L - MARGIN_R
    plot_h = CANVAS_H - MARGIN_T - MARGIN_B

    def px(v: float) -> float:
        return MARGIN_L + (v - x_lo) / (x_hi - x_lo) * plot_w

    def py(v: float) -> float:
        return MARGIN_T + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS_W}" height="{CANVAS_H}" '
        f'viewBox="0 0 {CANVAS_W} {CANVAS_H}">',
        f'<rect x="0" y="0" width="{CANVAS_W}" height="{CANVAS_H}" fill="#ffffff"/>',
        f'<text x="{CANVAS_W / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{_escape(title)}</text>',
    ]

    for tick in _nice_ticks(x_lo, x_hi):
        tx = px(tick)
        parts.append(f'<line x1="{_fmt(tx)}" y1="{MARGIN_T}" x2="{_fmt(tx)}" '
                     f'y2="{MARGIN_T + plot_h}" stroke="#e5e5e5" stroke-width="1"/>')
        parts.append(f'<text x="{_fmt(tx)}" y="{MARGIN_T + plot_h + 18}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{tick:g}</text>')
    for tick in _nice_ticks(y_lo, y_hi):
        ty = py(tick)
        parts.append(f'<line x1="{MARGIN_L}" y1="{_fmt(ty)}" x2="{MARGIN_L + plot_w}" '
                     f'y2="{_fmt(ty)}" stroke="#e5e5e5" stroke-width="1"/>')
        parts.append(f'<text x="{MARGIN_L - 8}" y="{_fmt(ty + 4)}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{tick:g}</text>')

    parts.append(f'<line x1="{MARGIN_L}" y1="{MARGIN_T + plot_h}" x2="{MARGIN_L + plot_w}" '
                 f'y2="{MARGIN_T + plot_h}" stroke="#333333" stroke-width="1"/>')
    parts.append(f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" '
                 f'y2="{MARGIN_T + plot_h}" stroke="#333333" stroke-width="1"/>')
    if x_label:
        parts.append(f'<text x="{MARGIN_L + plot_w / 2:.1f}" y="{CANVAS_H - 12}" '
                     f'text-anchor="middle" font-family="sans-serif" font-size="12">'
                     f'{_escape(x_label)}</text>')
    if y_label:
        cy = MARGIN_T + plot_h / 2
        parts.append(f'<text x="16" y="{cy:.1f}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="12" '
                     f'transform="rotate(-90 16 {cy:.1f})">{_escape(y_label)}</text>')

    for k, (label, vals) in enumerate(cleaned):
        color = PALETTE[k % len(PALETTE)]
        sx = xs[: len(vals)]
        dx, dy = _downsample(sx, vals)
        points = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(dx, dy))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{points}"><title>{_escape(label)}</title></polyline>')

    legend_x = MARGIN_L + plot_w - 150
    for k, (label, _vals) in enumerate(cleaned):
        color = PALETTE[k % len(PALETTE)]
        ly = MARGIN_T + 14 + 18 * k
        parts.append(f'<line x1="{legend_x}" y1="{ly}" x2="{legend_x + 22}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{legend_x + 28}" y="{ly + 4}" font-family="sans-serif" '
                     f'font-size="12">{_escape(label)}</text>')

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_line_svg(
    path: str | Path,
    title: str,
    series: Sequence[tuple[str, np.ndarray]],
    x: np.ndarray | None = None,
    x_label: str = "",
    y_label: str = "",
) -> None:
    Path(path).write_bytes(line_chart_svg(title, series, x, x_label, y_label).encode("utf-8"))


def render_line_png(
    path: str | Path,
    title: str,
    series: Sequence[tuple[str, np.ndarray]],
    x: np.ndarray | None = None,
    x_label: str = "",
    y_label: str = "",
) -> None:
    """Matplotlib rendition of the same chart for reports."""
    fig, ax = plt.subplots(figsize=(9.6, 5.4))
    try:
        for k, (label, vals) in enumerate(series):
            vals = np.asarray(vals, dtype=np.float64).ravel()
            if len(vals) == 0:
                continue
            xs = np.asarray(x)[: len(vals)] if x is not None else np.arange(len(vals))
            ax.plot(xs, vals, label=label, linewidth=1.2,
                    color=PALETTE[k % len(PALETTE)])
        ax.set_title(title)
        if x_label:
            ax.set_xlabel(x_label)
        if y_label:
            ax.set_ylabel(y_label)
        ax.grid(alpha=0.3)
        if any(len(np.asarray(v).ravel()) for _, v in series):
            ax.legend(loc="upper right")
        fig.tight_layout()
        fig.savefig(path, dpi=100)
    finally:
        plt.close(fig)


def export_predictions(
    actual_mw: np.ndarray,
    predicted_mw: np.ndarray,
    timestamps: np.ndarray | None,
    path: str | Path,
) -> None:
    """CSV with schema timestamp,actual_mw,predicted_mw."""
    actual = np.asarray(actual_mw, dtype=np.float64).ravel()
    predicted = np.asarray(predicted_mw, dtype=np.float64).ravel()
    if timestamps is None:
        stamps = [str(i) for i in range(len(actual))]
    else:
        stamps = [str(t).replace("T", " ") for t in np.asarray(timestamps, dtype="datetime64[s]")]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("timestamp,actual_mw,predicted_mw\n")
        for s, a, p in zip(stamps, actual, predicted):
            fh.write(f"{s},{a!r},{p!r}\n")
