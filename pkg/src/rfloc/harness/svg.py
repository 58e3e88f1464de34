"""Minimal deterministic SVG plots (line, scatter with error bars, weight heatmap)."""
from __future__ import annotations

import numpy as np

W, H = 480, 320
ML, MR, MT, MB = 64, 20, 30, 48
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"]


def _f(x: float) -> str:
    return f"{x:.2f}"


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _range(v):
    lo, hi = float(np.min(v)), float(np.max(v))
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


class _Frame:
    def __init__(self, xr, yr):
        self.xr, self.yr = xr, yr

    def x(self, v):
        return ML + (v - self.xr[0]) / (self.xr[1] - self.xr[0]) * (W - ML - MR)

    def y(self, v):
        return H - MB - (v - self.yr[0]) / (self.yr[1] - self.yr[0]) * (H - MT - MB)


def _axes(fr: _Frame, title, xlabel, ylabel):
    out = [f'<rect x="{ML}" y="{MT}" width="{W - ML - MR}" height="{H - MT - MB}" '
           f'fill="none" stroke="#000"/>']
    for t in np.linspace(fr.xr[0], fr.xr[1], 5):
        px = fr.x(t)
        out.append(f'<line x1="{_f(px)}" y1="{H - MB}" x2="{_f(px)}" y2="{H - MB + 4}" stroke="#000"/>')
        out.append(f'<text x="{_f(px)}" y="{H - MB + 16}" font-size="10" text-anchor="middle">{t:.3g}</text>')
    for t in np.linspace(fr.yr[0], fr.yr[1], 5):
        py = fr.y(t)
        out.append(f'<line x1="{ML - 4}" y1="{_f(py)}" x2="{ML}" y2="{_f(py)}" stroke="#000"/>')
        out.append(f'<text x="{ML - 6}" y="{_f(py + 3)}" font-size="10" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{W / 2}" y="{MT - 10}" font-size="12" text-anchor="middle">{_esc(title)}</text>')
    out.append(f'<text x="{(ML + W - MR) / 2}" y="{H - 10}" font-size="11" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(f'<text x="14" y="{(MT + H - MB) / 2}" font-size="11" text-anchor="middle" '
               f'transform="rotate(-90 14 {(MT + H - MB) / 2})">{_esc(ylabel)}</text>')
    return out


def _doc(body):
    return ("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">\n'
            f'<rect width="{W}" height="{H}" fill="#fff"/>\n' + "\n".join(body) + "\n</svg>\n")


def line_plot(series, title="", xlabel="index", ylabel="value") -> str:
    """``series``: list of ``(label, x, y)``. One polyline per series."""
    if not series or any(len(np.asarray(s[2])) == 0 for s in series):
        raise ValueError("nothing to plot")
    xs = np.concatenate([np.asarray(s[1], float) for s in series])
    ys = np.concatenate([np.asarray(s[2], float) for s in series])
    fin = np.isfinite(ys)
    fr = _Frame(_range(xs), _range(ys[fin] if fin.any() else [0.0]))
    body = _axes(fr, title, xlabel, ylabel)
    for i, (label, x, y) in enumerate(series):
        col = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_f(fr.x(a))},{_f(fr.y(b))}" for a, b in zip(x, y) if np.isfinite(b))
        body.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
        body.append(f'<text x="{W - MR - 4}" y="{MT + 14 + 12 * i}" font-size="10" '
                    f'text-anchor="end" fill="{col}">{_esc(label)}</text>')
    return _doc(body)


def scatter_errorbars(points, title="", xlabel="x", ylabel="y") -> str:
    """``points``: list of ``(label, x, y_mean, y_std)``; one marker and error bar each."""
    if not points:
        raise ValueError("nothing to plot")
    x = np.array([p[1] for p in points], float)
    lo = np.array([p[2] - p[3] for p in points], float)
    hi = np.array([p[2] + p[3] for p in points], float)
    fr = _Frame(_range(x), _range(np.concatenate([lo, hi])))
    body = _axes(fr, title, xlabel, ylabel)
    for label, px, m, s in points:
        cx = fr.x(px)
        body.append(f'<line x1="{_f(cx)}" y1="{_f(fr.y(m - s))}" x2="{_f(cx)}" y2="{_f(fr.y(m + s))}" stroke="#555"/>')
        body.append(f'<circle cx="{_f(cx)}" cy="{_f(fr.y(m))}" r="3.5" fill="{PALETTE[0]}"><title>{_esc(label)}</title></circle>')
    return _doc(body)


def weight_heatmap(weights, title="", xlabel="input dimension i", ylabel="unit / snapshot") -> str:
    """Rows of a 2-D array drawn as colored cells (blue negative, red positive)."""
    A = np.atleast_2d(np.asarray(weights, float))
    if A.size == 0:
        raise ValueError("nothing to plot")
    R, C = A.shape
    scale = float(np.max(np.abs(A))) or 1.0
    fr = _Frame((0, C), (R, 0))
    body = _axes(fr, title, xlabel, ylabel)
    cw = (W - ML - MR) / C
    ch = (H - MT - MB) / R
    for r in range(R):
        for c in range(C):
            v = A[r, c] / scale
            k = int(round(255 * (1 - abs(v))))
            col = f"#ff{k:02x}{k:02x}" if v >= 0 else f"#{k:02x}{k:02x}ff"
            body.append(f'<rect x="{_f(ML + c * cw)}" y="{_f(MT + r * ch)}" width="{_f(cw)}" '
                        f'height="{_f(ch)}" fill="{col}"/>')
    return _doc(body)


PLOT_KINDS = {"line": line_plot, "scatter": scatter_errorbars, "heatmap": weight_heatmap}
