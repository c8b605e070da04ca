"""Deterministic SVG figures rendered from CSV artifacts.

Figures never touch in-memory pipeline state: they are drawn from the
exported CSV files alone, so the published tables fully determine the
published pictures. All coordinates and colors are formatted with
fixed precision, making the output byte-stable for identical inputs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidGrid, MissingArtifact

WIDTH = 960
HEIGHT = 560
MARGIN_L = 70
MARGIN_R = 30
MARGIN_T = 40
MARGIN_B = 50

FIGURE_KINDS = (
    "surface_top",
    "surface_side",
    "dominance_heatmap",
    "magnitude_curve",
    "rho_curve",
)


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    out: str
    surface: str | None = None
    heatmap: str | None = None
    summary: str | None = None
    vmax: float = 0.5  # color scale bound for surface views

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise InvalidGrid(f"unknown figure kind '{self.kind}'")
        if self.vmax <= 0:
            raise InvalidGrid(f"vmax must be > 0, got {self.vmax}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "out": self.out,
            "surface": self.surface,
            "heatmap": self.heatmap,
            "summary": self.summary,
            "vmax": self.vmax,
        }


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def _diverging_color(v: float, vmax: float) -> str:
    """Blue-white-red map on [-vmax, vmax], clipped."""
    t = max(-1.0, min(1.0, v / vmax))
    if t < 0:
        f = 1.0 + t  # 0 at -1, 1 at 0
        r, g, b = 59 + (255 - 59) * f, 76 + (255 - 76) * f, 192 + (255 - 192) * f
    else:
        f = 1.0 - t
        r, g, b = 255 - (255 - 180) * (1 - f), 255 * f + 4 * (1 - f), 255 * f + 38 * (1 - f)
    return f"#{round(r):02x}{round(g):02x}{round(b):02x}"


def _lag_color(i: int, n: int) -> str:
    t = 0.0 if n <= 1 else i / (n - 1)
    r = round(40 + 180 * t)
    g = round(90 + 40 * t)
    b = round(200 - 160 * t)
    return f"#{r:02x}{g:02x}{b:02x}"


class _Svg:
    def __init__(self, title: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2:.0f}" y="24" font-family="monospace" '
            f'font-size="16" text-anchor="middle">{title}</text>',
        ]

    def rect(self, x, y, w, h, color):
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" '
            f'height="{_fmt(h)}" fill="{color}"/>'
        )

    def line(self, x1, y1, x2, y2, color="#888888", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{color}" stroke-width="{width}"{d}/>'
        )

    def polyline(self, points, color, width=1.5, dash=None):
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"{d}/>'
        )

    def text(self, x, y, s, anchor="middle", size=11):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-family="monospace" '
            f'font-size="{size}" text-anchor="{anchor}">{s}</text>'
        )

    def to_string(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


@dataclass
class _Frame:
    """Maps data coordinates onto the plot area."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    plot_w: float = field(init=False)
    plot_h: float = field(init=False)

    def __post_init__(self):
        if self.x_max == self.x_min:
            self.x_max = self.x_min + 1.0
        if self.y_max == self.y_min:
            self.y_max = self.y_min + 1.0
        self.plot_w = WIDTH - MARGIN_L - MARGIN_R
        self.plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def x(self, v: float) -> float:
        return MARGIN_L + (v - self.x_min) / (self.x_max - self.x_min) * self.plot_w

    def y(self, v: float) -> float:
        return HEIGHT - MARGIN_B - (v - self.y_min) / (self.y_max - self.y_min) * self.plot_h


def _axes(svg: _Svg, frame: _Frame, x_label: str, y_label: str):
    svg.line(MARGIN_L, HEIGHT - MARGIN_B, WIDTH - MARGIN_R, HEIGHT - MARGIN_B, "#000000")
    svg.line(MARGIN_L, MARGIN_T, MARGIN_L, HEIGHT - MARGIN_B, "#000000")
    for i in range(5):
        xv = frame.x_min + (frame.x_max - frame.x_min) * i / 4
        yv = frame.y_min + (frame.y_max - frame.y_min) * i / 4
        svg.text(frame.x(xv), HEIGHT - MARGIN_B + 16, f"{xv:.4g}")
        svg.text(MARGIN_L - 8, frame.y(yv) + 4, f"{yv:.4g}", anchor="end")
    svg.text(WIDTH / 2, HEIGHT - 12, x_label)
    svg.text(16, MARGIN_T - 14, y_label, anchor="start")


def _read_csv(path: str | Path) -> list[dict]:
    p = Path(path)
    if not p.exists():
        raise MissingArtifact(f"figure input {p} does not exist")
    with open(p, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def _surface_rows(path) -> tuple[list[int], dict]:
    rows = _read_csv(path)
    lags = sorted({int(r["lag"]) for r in rows})
    cells = {}
    for r in rows:
        cells[(int(r["lag"]), int(r["bin"]))] = r
    return lags, cells


def render_surface_top(spec: FigureSpec) -> str:
    lags, cells = _surface_rows(spec.surface)
    svg = _Svg("conditional response surface (top view)")
    if lags:
        n_bins = 320
        cw = (WIDTH - MARGIN_L - MARGIN_R) / n_bins
        ch = (HEIGHT - MARGIN_T - MARGIN_B) / len(lags)
        for row, lag in enumerate(lags):
            for b in range(1, n_bins + 1):
                rec = cells.get((lag, b))
                if rec is None or rec["valid"] != "true":
                    continue
                color = _diverging_color(float(rec["mean_zr"]), spec.vmax)
                svg.rect(
                    MARGIN_L + (b - 1) * cw,
                    MARGIN_T + row * ch,
                    cw + 0.1,
                    ch + 0.1,
                    color,
                )
        frame = _Frame(-4.0, 4.0, 0, len(lags))
        _axes(svg, frame, "standardized push", "lag rank (top to bottom)")
    return svg.to_string()


def render_surface_side(spec: FigureSpec) -> str:
    lags, cells = _surface_rows(spec.surface)
    svg = _Svg("conditional response surface (side view)")
    if lags:
        vals = [
            float(rec["mean_zr"])
            for rec in cells.values()
            if rec["valid"] == "true"
        ]
        if vals:
            lo, hi = min(vals), max(vals)
            pad = 0.05 * (hi - lo) if hi > lo else 0.1
            frame = _Frame(-4.0, 4.0, lo - pad, hi + pad)
            _axes(svg, frame, "standardized push", "mean standardized response")
            if frame.y_min < 0 < frame.y_max:
                svg.line(frame.x(-4), frame.y(0), frame.x(4), frame.y(0),
                         "#bbbbbb", dash="4,3")
            for i, lag in enumerate(lags):
                points = []
                for b in range(1, 321):
                    rec = cells.get((lag, b))
                    if rec is None or rec["valid"] != "true":
                        continue
                    points.append((frame.x(float(rec["center"])),
                                   frame.y(float(rec["mean_zr"]))))
                if len(points) >= 2:
                    svg.polyline(points, _lag_color(i, len(lags)), width=1.0)
    return svg.to_string()


def render_dominance_heatmap(spec: FigureSpec) -> str:
    rows = _read_csv(spec.heatmap)
    svg = _Svg("local dominance heatmap")
    if rows:
        lags = sorted({int(r["lag"]) for r in rows})
        table = {(int(r["lag"]), int(r["abs_index"])): float(r["rho_local"]) for r in rows}
        n_half = 160
        cw = (WIDTH - MARGIN_L - MARGIN_R) / n_half
        ch = (HEIGHT - MARGIN_T - MARGIN_B) / len(lags)
        for row, lag in enumerate(lags):
            for k in range(1, n_half + 1):
                v = table.get((lag, k))
                if v is None:
                    continue  # unsupported pairs stay blank
                svg.rect(
                    MARGIN_L + (k - 1) * cw,
                    MARGIN_T + row * ch,
                    cw + 0.1,
                    ch + 0.1,
                    _diverging_color(v, 1.0),
                )
        frame = _Frame(0.0, 4.0, 0, len(lags))
        _axes(svg, frame, "absolute standardized push", "lag rank (top to bottom)")
    return svg.to_string()


def render_magnitude_curve(spec: FigureSpec) -> str:
    rows = _read_csv(spec.summary)
    svg = _Svg("response magnitude by lag")
    if rows:
        xs = [int(r["lag"]) for r in rows]
        ys = [float(r["M"]) for r in rows]
        frame = _Frame(min(xs), max(xs), 0.0, max(ys) * 1.05 if max(ys) > 0 else 1.0)
        _axes(svg, frame, "lag (events)", "weighted mean |response|")
        svg.polyline(
            [(frame.x(x), frame.y(y)) for x, y in zip(xs, ys)], "#b02428", width=2.0
        )
    return svg.to_string()


def render_rho_curve(spec: FigureSpec) -> str:
    rows = _read_csv(spec.summary)
    svg = _Svg("lag dominance with bootstrap band")
    if rows:
        xs = [int(r["lag"]) for r in rows]
        frame = _Frame(min(xs), max(xs), -1.0, 1.0)
        _axes(svg, frame, "lag (events)", "dominance")
        svg.line(frame.x(xs[0]), frame.y(0), frame.x(xs[-1]), frame.y(0),
                 "#bbbbbb", dash="4,3")
        for col, key, width, dash in (
            ("#8899dd", "ci_low", 1.0, "2,2"),
            ("#8899dd", "ci_high", 1.0, "2,2"),
            ("#202090", "rho", 2.0, None),
        ):
            pts = [(frame.x(x), frame.y(float(r[key]))) for x, r in zip(xs, rows)]
            if len(pts) >= 2:
                svg.polyline(pts, col, width=width, dash=dash)
            elif pts:
                x, y = pts[0]
                svg.rect(x - 2, y - 2, 4, 4, col)
    return svg.to_string()


_RENDERERS = {
    "surface_top": (render_surface_top, "surface"),
    "surface_side": (render_surface_side, "surface"),
    "dominance_heatmap": (render_dominance_heatmap, "heatmap"),
    "magnitude_curve": (render_magnitude_curve, "summary"),
    "rho_curve": (render_rho_curve, "summary"),
}


def render_figure(spec: FigureSpec) -> Path:
    """Render one figure to its output path; returns the path."""
    renderer, needed = _RENDERERS[spec.kind]
    if getattr(spec, needed) is None:
        raise MissingArtifact(f"figure '{spec.kind}' needs a --{needed} input")
    out = Path(spec.out)
    out.write_text(renderer(spec), encoding="utf-8")
    return out
