"""Deterministic SVG figure emission.

Five figure kinds cover the reporting surface: component-vote bars,
bootstrap boxplots, a CI forest, the significance grid with its stability
index column, and the scores/loadings biplot. Output is plain SVG 1.1 text
with all floats formatted to 6 significant digits and no timestamps, so a
fixed payload always produces byte-identical bytes.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

SVG_KINDS = ("cv_votes", "boxplots", "ci_forest", "sig_grid", "biplot")

_STYLE = (
    "text{font-family:Helvetica,Arial,sans-serif;font-size:11px;fill:#222}"
    ".title{font-size:13px;font-weight:bold}"
    ".axis{stroke:#333;stroke-width:1}"
    ".grid{stroke:#ddd;stroke-width:0.5}"
    ".zero{stroke:#888;stroke-width:1;stroke-dasharray:4 3}"
    ".bar{fill:#4878a8}"
    ".box{fill:#cfe0ef;stroke:#2f5e8c;stroke-width:1}"
    ".whisker{stroke:#2f5e8c;stroke-width:1}"
    ".median{stroke:#16334d;stroke-width:1.5}"
    ".sig{stroke:#b3274c;stroke-width:2}"
    ".nonsig{stroke:#7a7a7a;stroke-width:1.2}"
    ".pt{fill:#2f5e8c;fill-opacity:0.75}"
    ".arrow{stroke:#b3274c;stroke-width:1.2}"
    ".cell-on{fill:#2f8c5e}"
    ".cell-off{fill:#ffffff;stroke:#bbb;stroke-width:0.5}"
    ".cell-na{fill:#e5e5e5}"
)


class SvgSchemaError(ValueError):
    pass


def _f(x) -> str:
    v = float(x)
    if v == 0.0:
        v = 0.0  # normalize -0.0
    return format(v, ".6g")


def _need(payload: dict, kind: str, keys: tuple):
    missing = [k for k in keys if k not in payload]
    if missing:
        raise SvgSchemaError(f"{kind} payload missing keys: {missing}")


def _same_len(kind: str, **seqs):
    lengths = {k: len(v) for k, v in seqs.items()}
    if len(set(lengths.values())) > 1:
        raise SvgSchemaError(f"{kind} payload length mismatch: {lengths}")


def _doc(width: float, height: float, body: list) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_f(width)}" height="{_f(height)}" '
        f'viewBox="0 0 {_f(width)} {_f(height)}">\n'
        f"<style>{_STYLE}</style>\n"
    )
    return head + "\n".join(body) + "\n</svg>\n"


def _lin(lo: float, hi: float):
    """Return a value -> [0,1] mapper with a degenerate-range guard."""
    if hi <= lo:
        lo, hi = lo - 1.0, hi + 1.0
    span = hi - lo
    return lambda v: (float(v) - lo) / span, lo, hi


def _axes(x0, y0, x1, y1, title=None):
    body = [
        f'<line class="axis" x1="{_f(x0)}" y1="{_f(y1)}" x2="{_f(x1)}" y2="{_f(y1)}"/>',
        f'<line class="axis" x1="{_f(x0)}" y1="{_f(y0)}" x2="{_f(x0)}" y2="{_f(y1)}"/>',
    ]
    if title:
        body.append(f'<text class="title" x="{_f(x0)}" y="18">{escape(title)}</text>')
    return body


def _cv_votes_svg(payload: dict) -> str:
    _need(payload, "cv_votes", ("h", "freq"))
    hs = [int(v) for v in payload["h"]]
    freq = [float(v) for v in payload["freq"]]
    _same_len("cv_votes", h=hs, freq=freq)
    width, height = 640.0, 400.0
    x0, y0, x1, y1 = 60.0, 30.0, width - 20.0, height - 50.0
    body = _axes(x0, y0, x1, y1, payload.get("title", "component votes"))
    fmax = max(freq) if freq else 1.0
    fmax = fmax if fmax > 0 else 1.0
    nbin = max(len(hs), 1)
    bw = (x1 - x0) / nbin
    for i, (h, q) in enumerate(zip(hs, freq)):
        bh = (y1 - y0) * (q / fmax)
        bx = x0 + i * bw + 0.15 * bw
        body.append(
            f'<rect class="bar" x="{_f(bx)}" y="{_f(y1 - bh)}" '
            f'width="{_f(0.7 * bw)}" height="{_f(bh)}"/>'
        )
        body.append(
            f'<text x="{_f(x0 + (i + 0.5) * bw)}" y="{_f(y1 + 16)}" '
            f'text-anchor="middle">{h}</text>'
        )
        body.append(
            f'<text x="{_f(x0 + (i + 0.5) * bw)}" y="{_f(y1 - bh - 4)}" '
            f'text-anchor="middle">{_f(q)}</text>'
        )
    return _doc(width, height, body)


def _boxplots_svg(payload: dict) -> str:
    _need(payload, "boxplots", ("names", "lo", "q1", "median", "q3", "hi"))
    names = [str(s) for s in payload["names"]]
    cols = {k: [float(v) for v in payload[k]] for k in ("lo", "q1", "median", "q3", "hi")}
    _same_len("boxplots", names=names, **cols)
    p = len(names)
    width = max(60.0 + 26.0 * p + 20.0, 240.0)
    height = 420.0
    x0, y0, x1, y1 = 50.0, 30.0, width - 10.0, height - 70.0
    body = _axes(x0, y0, x1, y1, payload.get("title", "bootstrap distributions"))
    allv = cols["lo"] + cols["hi"] + [0.0]
    to01, vlo, vhi = _lin(min(allv), max(allv))
    ypix = lambda v: y1 - (y1 - y0) * to01(v)
    zy = ypix(0.0)
    body.append(f'<line class="zero" x1="{_f(x0)}" y1="{_f(zy)}" x2="{_f(x1)}" y2="{_f(zy)}"/>')
    bw = (x1 - x0) / max(p, 1)
    for j in range(p):
        cx = x0 + (j + 0.5) * bw
        half = 0.3 * bw
        for a, b in ((cols["lo"][j], cols["q1"][j]), (cols["q3"][j], cols["hi"][j])):
            body.append(
                f'<line class="whisker" x1="{_f(cx)}" y1="{_f(ypix(a))}" '
                f'x2="{_f(cx)}" y2="{_f(ypix(b))}"/>'
            )
        body.append(
            f'<rect class="box" x="{_f(cx - half)}" y="{_f(ypix(cols["q3"][j]))}" '
            f'width="{_f(2 * half)}" height="{_f(ypix(cols["q1"][j]) - ypix(cols["q3"][j]))}"/>'
        )
        my = ypix(cols["median"][j])
        body.append(
            f'<line class="median" x1="{_f(cx - half)}" y1="{_f(my)}" '
            f'x2="{_f(cx + half)}" y2="{_f(my)}"/>'
        )
        body.append(
            f'<text x="{_f(cx)}" y="{_f(y1 + 12)}" text-anchor="end" '
            f'transform="rotate(-60 {_f(cx)} {_f(y1 + 12)})">{escape(names[j])}</text>'
        )
    return _doc(width, height, body)


def _ci_forest_svg(payload: dict) -> str:
    _need(payload, "ci_forest", ("names", "lo", "hi"))
    names = [str(s) for s in payload["names"]]
    lo = [float(v) for v in payload["lo"]]
    hi = [float(v) for v in payload["hi"]]
    est = [float(v) for v in payload.get("estimate", [])] or None
    _same_len("ci_forest", names=names, lo=lo, hi=hi, **({"estimate": est} if est else {}))
    p = len(names)
    width = 640.0
    height = 70.0 + 18.0 * p
    x0, y0, x1, y1 = 150.0, 30.0, width - 20.0, height - 30.0
    body = _axes(x0, y0, x1, y1, payload.get("title", "bootstrap confidence intervals"))
    allv = lo + hi + [0.0]
    to01, vlo, vhi = _lin(min(allv), max(allv))
    xpix = lambda v: x0 + (x1 - x0) * to01(v)
    zx = xpix(0.0)
    body.append(f'<line class="zero" x1="{_f(zx)}" y1="{_f(y0)}" x2="{_f(zx)}" y2="{_f(y1)}"/>')
    for j in range(p):
        cy = y0 + (j + 0.5) * (y1 - y0) / max(p, 1)
        significant = lo[j] > 0 or hi[j] < 0
        cls = "sig" if significant else "nonsig"
        body.append(
            f'<line class="{cls}" x1="{_f(xpix(lo[j]))}" y1="{_f(cy)}" '
            f'x2="{_f(xpix(hi[j]))}" y2="{_f(cy)}"/>'
        )
        if est is not None:
            body.append(
                f'<circle class="pt" cx="{_f(xpix(est[j]))}" cy="{_f(cy)}" r="2.5"/>'
            )
        body.append(
            f'<text x="{_f(x0 - 6)}" y="{_f(cy + 4)}" text-anchor="end">{escape(names[j])}</text>'
        )
    body.append(f'<text x="{_f(x0)}" y="{_f(y1 + 16)}">{_f(vlo)}</text>')
    body.append(f'<text x="{_f(x1)}" y="{_f(y1 + 16)}" text-anchor="end">{_f(vhi)}</text>')
    return _doc(width, height, body)


def _sig_grid_svg(payload: dict) -> str:
    _need(payload, "sig_grid", ("names", "h_values", "sig", "pi_e"))
    names = [str(s) for s in payload["names"]]
    hvals = [int(h) for h in payload["h_values"]]
    pi_e = [float(v) for v in payload["pi_e"]]
    sig = payload["sig"]
    _same_len("sig_grid", names=names, pi_e=pi_e)
    if len(sig) != len(hvals):
        raise SvgSchemaError("sig_grid: one significance row needed per h value")
    for row in sig:
        if row is not None and len(row) != len(names):
            raise SvgSchemaError("sig_grid: significance rows must match the predictor count")
    cell = 16.0
    x0, y0 = 150.0, 40.0
    width = x0 + cell * (len(hvals) + 1) + 70.0
    height = y0 + cell * max(len(names), 1) + 30.0
    body = [
        f'<text class="title" x="10" y="18">{escape(payload.get("title", "significance grid"))}</text>'
    ]
    for jj, h in enumerate(hvals):
        body.append(
            f'<text x="{_f(x0 + (jj + 0.5) * cell)}" y="{_f(y0 - 6)}" '
            f'text-anchor="middle">{h}</text>'
        )
    body.append(
        f'<text x="{_f(x0 + (len(hvals) + 0.5) * cell + 8)}" y="{_f(y0 - 6)}">pi_e</text>'
    )
    for i, name in enumerate(names):
        cy = y0 + i * cell
        body.append(
            f'<text x="{_f(x0 - 6)}" y="{_f(cy + 12)}" text-anchor="end">{escape(name)}</text>'
        )
        for jj in range(len(hvals)):
            row = sig[jj]
            cls = "cell-na" if row is None else ("cell-on" if row[i] else "cell-off")
            body.append(
                f'<rect class="{cls}" x="{_f(x0 + jj * cell + 1)}" y="{_f(cy + 1)}" '
                f'width="{_f(cell - 2)}" height="{_f(cell - 2)}"/>'
            )
        body.append(
            f'<text x="{_f(x0 + (len(hvals) + 0.5) * cell + 8)}" y="{_f(cy + 12)}">'
            f"{_f(pi_e[i])}</text>"
        )
    return _doc(width, height, body)


def _biplot_svg(payload: dict) -> str:
    _need(payload, "biplot", ("scores", "loadings", "col_names"))
    scores = np.asarray(payload["scores"], dtype=float).reshape(-1, 2)
    loadings = np.asarray(payload["loadings"], dtype=float).reshape(-1, 2)
    col_names = [str(s) for s in payload["col_names"]]
    if loadings.shape[0] != len(col_names):
        raise SvgSchemaError("biplot: one loading row needed per column name")
    width = height = 560.0
    x0, y0, x1, y1 = 50.0, 30.0, width - 20.0, height - 40.0
    body = _axes(x0, y0, x1, y1, payload.get("title", "scores and loadings"))
    if scores.size:
        sx, sy = scores[:, 0], scores[:, 1]
    else:
        sx = sy = np.zeros(0)
    tox, lox, hix = _lin(float(sx.min()) if sx.size else -1.0, float(sx.max()) if sx.size else 1.0)
    toy, loy, hiy = _lin(float(sy.min()) if sy.size else -1.0, float(sy.max()) if sy.size else 1.0)
    xpix = lambda v: x0 + (x1 - x0) * tox(v)
    ypix = lambda v: y1 - (y1 - y0) * toy(v)
    for i in range(scores.shape[0]):
        body.append(
            f'<circle class="pt" cx="{_f(xpix(sx[i]))}" cy="{_f(ypix(sy[i]))}" r="3"/>'
        )
    # loadings drawn on their own scale, anchored at the score-space center
    cx, cy = xpix((lox + hix) / 2), ypix((loy + hiy) / 2)
    lmax = float(np.max(np.abs(loadings))) if loadings.size else 1.0
    lmax = lmax if lmax > 0 else 1.0
    lscale = 0.4 * min(x1 - x0, y1 - y0) / lmax
    for j, name in enumerate(col_names):
        ex = cx + lscale * loadings[j, 0]
        ey = cy - lscale * loadings[j, 1]
        body.append(
            f'<line class="arrow" x1="{_f(cx)}" y1="{_f(cy)}" x2="{_f(ex)}" y2="{_f(ey)}"/>'
        )
        body.append(f'<text x="{_f(ex + 2)}" y="{_f(ey)}">{escape(name)}</text>')
    return _doc(width, height, body)


_EMITTERS = {
    "cv_votes": _cv_votes_svg,
    "boxplots": _boxplots_svg,
    "ci_forest": _ci_forest_svg,
    "sig_grid": _sig_grid_svg,
    "biplot": _biplot_svg,
}


def emit_svg(kind: str, payload: dict) -> str:
    """Render one figure kind from its payload dict to SVG text."""
    if kind not in _EMITTERS:
        raise SvgSchemaError(f"unknown figure kind {kind!r}; expected one of {SVG_KINDS}")
    if not isinstance(payload, dict):
        raise SvgSchemaError("payload must be a dict")
    return _EMITTERS[kind](payload)
