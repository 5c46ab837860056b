"""Minimal SVG line charts, written by hand.

The harness needs convergence figures that reproduce exactly: the same
numbers must yield the same bytes, on any machine, with no plotting stack
in the dependency tree.  So this module renders charts as plain SVG text —
polylines on a framed plot area with decade ticks — and nothing here reads
clocks, locales, or global state.

Log axes drop points that cannot be drawn (nonpositive coordinates); a
curve whose points all vanish is omitted from the figure but noted in the
legend as "(empty)".
"""

from __future__ import annotations

import math

__all__ = ["line_chart", "convergence_chart"]

_PALETTE = ["#1965b0", "#dc050c", "#4eb265", "#f4a736", "#882e72", "#777777"]

_W, _H = 760, 500
_ML, _MR, _MT, _MB = 78, 24, 42, 58  # margins: left/right/top/bottom


def _fmt(v: float) -> str:
    """Stable short decimal for coordinates (fixed point, not locale-bound)."""
    s = f"{v:.2f}"
    return "0.00" if s in ("-0.00",) else s


def _tick_label(v: float, log: bool) -> str:
    if log:
        e = int(round(v))
        return f"1e{e:+03d}" if abs(e) > 3 else f"{10.0 ** e:g}"
    return f"{v:.4g}"


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        first, last = math.floor(lo), math.ceil(hi)
        step = max(1, int(math.ceil((last - first) / 8.0)))
        return [float(e) for e in range(int(first), int(last) + 1, step)]
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / 5.0
    mag = 10.0 ** math.floor(math.log10(raw))
    for m in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= m * mag:
            step = m * mag
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * step:
        out.append(round(v / step) * step)
        v += step
    return out or [lo]


def _esc(text: str) -> str:
    return (str(text).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


def line_chart(curves, title: str = "", x_label: str = "", y_label: str = "",
               log_x: bool = False, log_y: bool = False) -> str:
    """Render ``curves = [(label, xs, ys), ...]`` as an SVG document string.

    ``xs``/``ys`` are equal-length sequences of floats.  With a log axis,
    points with a nonpositive coordinate on that axis are skipped.
    """
    usable = []
    empty = []
    for label, xs, ys in curves:
        pts = []
        for x, y in zip(xs, ys):
            x, y = float(x), float(y)
            if log_x and x <= 0.0 or log_y and y <= 0.0:
                continue
            if math.isnan(x) or math.isnan(y) or math.isinf(x) or math.isinf(y):
                continue
            pts.append((math.log10(x) if log_x else x,
                        math.log10(y) if log_y else y))
        if pts:
            usable.append((str(label), pts))
        else:
            empty.append(str(label))

    if usable:
        all_x = [p[0] for _, pts in usable for p in pts]
        all_y = [p[1] for _, pts in usable for p in pts]
        x_lo, x_hi = min(all_x), max(all_x)
        y_lo, y_hi = min(all_y), max(all_y)
        if x_hi - x_lo < 1e-12:
            x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
        if y_hi - y_lo < 1e-12:
            y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
        pad_y = 0.04 * (y_hi - y_lo)
        y_lo, y_hi = y_lo - pad_y, y_hi + pad_y
    else:
        x_lo, x_hi, y_lo, y_hi = 0.0, 1.0, 0.0, 1.0

    px_w = _W - _ML - _MR
    px_h = _H - _MT - _MB

    def sx(v):
        return _ML + (v - x_lo) / (x_hi - x_lo) * px_w

    def sy(v):
        return _H - _MB - (v - y_lo) / (y_hi - y_lo) * px_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="24" font-family="monospace" font-size="15" '
        f'text-anchor="middle">{_esc(title)}</text>',
    ]

    for tv in _ticks(x_lo, x_hi, log_x):
        if not x_lo - 1e-9 <= tv <= x_hi + 1e-9:
            continue
        X = sx(tv)
        out.append(f'<line x1="{_fmt(X)}" y1="{_MT}" x2="{_fmt(X)}" '
                   f'y2="{_H - _MB}" stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{_fmt(X)}" y="{_H - _MB + 18}" font-family="monospace" '
                   f'font-size="11" text-anchor="middle">'
                   f'{_esc(_tick_label(tv, log_x))}</text>')
    for tv in _ticks(y_lo, y_hi, log_y):
        if not y_lo - 1e-9 <= tv <= y_hi + 1e-9:
            continue
        Y = sy(tv)
        out.append(f'<line x1="{_ML}" y1="{_fmt(Y)}" x2="{_W - _MR}" '
                   f'y2="{_fmt(Y)}" stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{_ML - 6}" y="{_fmt(Y + 4)}" font-family="monospace" '
                   f'font-size="11" text-anchor="end">'
                   f'{_esc(_tick_label(tv, log_y))}</text>')

    out.append(f'<rect x="{_ML}" y="{_MT}" width="{px_w}" height="{px_h}" '
               f'fill="none" stroke="#333333" stroke-width="1"/>')
    out.append(f'<text x="{_ML + px_w // 2}" y="{_H - 14}" font-family="monospace" '
               f'font-size="13" text-anchor="middle">{_esc(x_label)}</text>')
    out.append(f'<text x="20" y="{_MT + px_h // 2}" font-family="monospace" '
               f'font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 20 {_MT + px_h // 2})">{_esc(y_label)}</text>')

    for ci, (label, pts) in enumerate(usable):
        color = _PALETTE[ci % len(_PALETTE)]
        coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in pts)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"/>')

    legend_y = _MT + 14
    for ci, (label, _) in enumerate(usable):
        color = _PALETTE[ci % len(_PALETTE)]
        out.append(f'<line x1="{_W - _MR - 150}" y1="{legend_y - 4}" '
                   f'x2="{_W - _MR - 126}" y2="{legend_y - 4}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{_W - _MR - 120}" y="{legend_y}" '
                   f'font-family="monospace" font-size="12">{_esc(label)}</text>')
        legend_y += 16
    for label in empty:
        out.append(f'<text x="{_W - _MR - 150}" y="{legend_y}" '
                   f'font-family="monospace" font-size="12" fill="#999999">'
                   f'{_esc(label)} (empty)</text>')
        legend_y += 16

    out.append("</svg>")
    return "\n".join(out) + "\n"


def convergence_chart(columns: dict, title: str = "convergence") -> str:
    """Log-log feasibility / stationarity-estimate chart from trace columns.

    ``columns`` maps names to equal-length sequences, as produced by the
    trace CSV (``t``, ``feas``, ``stat_est``, optionally ``potential``).
    The step axis plots ``t + 1`` so the first record survives the log.
    """
    t = [float(v) + 1.0 for v in columns["t"]]
    curves = [
        ("feasibility", t, columns["feas"]),
        ("stationarity", t, columns["stat_est"]),
    ]
    if "x_minus_z" in columns:
        curves.append(("|x - z|", t, columns["x_minus_z"]))
    return line_chart(curves, title=title, x_label="step t + 1",
                      y_label="residual", log_x=True, log_y=True)
