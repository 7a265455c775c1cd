"""Deterministic SVG composition: heatmap, hatch texture, glyphs, legend, boundary.

Layers are emitted as ``<g>`` groups with ids ``raster``, ``hatch``,
``glyphs``, ``legend`` and ``boundary`` in that order. Hatch and glyph
paint is grayscale so it never competes with the colour ramp.
"""
from __future__ import annotations

import base64
import io
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np
from PIL import Image

from .dataset import RasterField
from .uncertainty import GlyphGrid, HatchField

__all__ = ["RAMPS", "RenderSpec", "colormap", "render", "save_svg"]

RAMPS = {
    # perceptually ordered multi-hue ramp (dark violet to yellow)
    "viridis": [
        (0.267, 0.005, 0.329),
        (0.230, 0.322, 0.546),
        (0.128, 0.567, 0.551),
        (0.369, 0.789, 0.383),
        (0.993, 0.906, 0.144),
    ],
    "magma": [
        (0.001, 0.000, 0.014),
        (0.316, 0.071, 0.485),
        (0.716, 0.215, 0.475),
        (0.987, 0.536, 0.382),
        (0.987, 0.991, 0.750),
    ],
    "heat": [
        (0.192, 0.212, 0.584),
        (0.455, 0.678, 0.820),
        (1.000, 1.000, 0.749),
        (0.957, 0.427, 0.263),
        (0.647, 0.000, 0.149),
    ],
}


def colormap(value, vmin: float, vmax: float, ramp="viridis") -> np.ndarray:
    """RGB in ``[0, 1]`` by piecewise-linear interpolation over evenly spaced stops.

    ``value`` may be an array (result shape ``value.shape + (3,)``); values
    outside ``[vmin, vmax]`` clamp to the end stops. ``ramp`` is a name in
    :data:`RAMPS` or a sequence of RGB triples.
    """
    if not vmax > vmin:
        raise ValueError("vmin must be below vmax")
    stops = np.asarray(RAMPS[ramp] if isinstance(ramp, str) else ramp, dtype=np.float64)
    if stops.ndim != 2 or stops.shape[1] != 3 or len(stops) < 2:
        raise ValueError("a ramp needs at least two RGB stops")
    u = np.clip((np.asarray(value, dtype=np.float64) - vmin) / (vmax - vmin), 0.0, 1.0)
    pos = u * (len(stops) - 1)
    i = np.minimum(np.floor(pos).astype(int), len(stops) - 2)
    f = (pos - i)[..., None]
    return stops[i] * (1.0 - f) + stops[i + 1] * f


@dataclass(frozen=True)
class RenderSpec:
    colormap: str = "viridis"
    width_px: int = 640
    hatch_angle: float = 45.0
    stripe_period: float = 8.0
    hatch_levels: int = 10
    boundary_stroke: str = "#000000"
    boundary_width: float = 1.5
    legend_px: int = 64
    vmin: float | None = None
    vmax: float | None = None
    title: str = ""


def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _gray(level: float) -> str:
    g = int(round(255 * min(max(level, 0.0), 1.0)))
    return f"#{g:02x}{g:02x}{g:02x}"


def _png_base64(rgba: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(rgba, mode="RGBA").save(buf, format="PNG", optimize=False)
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _same_bounds(a, b) -> bool:
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=0, atol=1e-9)


class _Canvas:
    def __init__(self, bounds, w: int, h: int):
        self.bounds = bounds
        self.w, self.h = w, h

    def xy(self, lng, lat):
        west, south, east, north = self.bounds
        x = (np.asarray(lng) - west) / (east - west) * self.w
        y = (north - np.asarray(lat)) / (north - south) * self.h
        return x, y


def _raster_layer(frame: np.ndarray, vmin, vmax, spec: RenderSpec, w: int, h: int) -> list[str]:
    rgb = colormap(np.nan_to_num(frame, nan=vmin), vmin, vmax, spec.colormap)
    rgba = np.zeros(frame.shape + (4,), dtype=np.uint8)
    rgba[..., :3] = np.round(rgb * 255).astype(np.uint8)
    rgba[..., 3] = np.where(np.isfinite(frame), 255, 0)
    data = _png_base64(rgba)
    return [
        '<g id="raster">',
        f'<image x="0" y="0" width="{w}" height="{h}" preserveAspectRatio="none" '
        f'style="image-rendering:pixelated" href="data:image/png;base64,{data}"/>',
        "</g>",
    ]


def _defs(spec: RenderSpec) -> list[str]:
    p = spec.stripe_period
    stops = RAMPS[spec.colormap] if isinstance(spec.colormap, str) else spec.colormap
    out = [
        "<defs>",
        f'<pattern id="hatch-stripes" patternUnits="userSpaceOnUse" width="{_f(p)}" '
        f'height="{_f(p)}" patternTransform="rotate({_f(spec.hatch_angle)})">'
        f'<rect x="0" y="0" width="{_f(p / 2)}" height="{_f(p)}" fill="{_gray(0.2)}"/>'
        "</pattern>",
        '<linearGradient id="legend-ramp" x1="0" x2="1" y1="0" y2="0">',
    ]
    for i, rgb in enumerate(stops):
        col = "#" + "".join(f"{int(round(255 * v)):02x}" for v in rgb)
        out.append(f'<stop offset="{_f(i / (len(stops) - 1))}" stop-color="{col}"/>')
    return out + ["</linearGradient>", "</defs>"]


def _hatch_layer(hatch: HatchField, spec: RenderSpec, w: int, h: int) -> list[str]:
    out = ['<g id="hatch">']
    op = np.asarray(hatch.opacity, dtype=np.float64)
    hh, hw = op.shape
    levels = spec.hatch_levels
    # ceil keeps every nonzero opacity visible; zero stays zero
    q = np.ceil(np.clip(op, 0.0, 1.0) * levels - 1e-12).astype(int)
    cw, ch = w / hw, h / hh
    for r in range(hh):
        c = 0
        while c < hw:
            lvl = q[r, c]
            end = c + 1
            while end < hw and q[r, end] == lvl:
                end += 1
            if lvl > 0:
                out.append(
                    f'<rect x="{_f(c * cw)}" y="{_f(r * ch)}" width="{_f((end - c) * cw)}" '
                    f'height="{_f(ch)}" fill="url(#hatch-stripes)" '
                    f'fill-opacity="{_f(lvl / levels)}"/>'
                )
            c = end
    out.append("</g>")
    return out


def _glyph(cx, cy, cw, ch, hp, lo, hi, width) -> list[str]:
    """Elements for one cell; heights are fractions of the half cell."""
    reach = 0.44 * ch
    half = 0.2 * cw
    # sharper (longer, narrower) heads where the interpolation distance is large
    sharp = 1.0 - width
    head_len = (0.12 + 0.18 * sharp) * ch
    head_half = (0.18 - 0.1 * sharp) * cw
    parts = [
        f'<circle class="marker" cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(0.04 * min(cw, ch))}" '
        f'fill="{_gray(0.35)}"/>'
    ]
    if np.isnan(hp):
        # no sensors: outline conveying only the head width
        parts.append(
            f'<path class="outline" d="M{_f(cx - head_half)},{_f(cy + head_len / 2)} '
            f'L{_f(cx)},{_f(cy - head_len / 2)} L{_f(cx + head_half)},{_f(cy + head_len / 2)}" '
            f'fill="none" stroke="{_gray(0.55)}" stroke-width="1"/>'
        )
        return parts
    if lo != 0.0 or hi != 0.0:
        y_lo, y_hi = cy - lo * reach, cy - hi * reach
        # chevron offset stays inside the 0.05 * ch left between reach and the cell edge
        tip = -np.sign(hi + lo) * 0.05 * ch * (0.5 + 0.5 * sharp) if hi + lo != 0 else 0.0
        parts.append(
            f'<path class="band" d="M{_f(cx - half)},{_f(y_lo)} L{_f(cx)},{_f(y_lo + tip)} '
            f'L{_f(cx + half)},{_f(y_lo)} L{_f(cx + half)},{_f(y_hi)} L{_f(cx)},{_f(y_hi + tip)} '
            f'L{_f(cx - half)},{_f(y_hi)} Z" fill="{_gray(0.8)}" fill-opacity="0.8" '
            f'stroke="{_gray(0.6)}" stroke-width="0.5"/>'
        )
    if hp != 0.0:
        tip_y = cy - hp * reach
        direction = 1.0 if hp > 0 else -1.0
        base_y = tip_y + direction * min(head_len, abs(hp) * reach)
        parts.append(
            f'<path class="arrow" d="M{_f(cx)},{_f(cy)} L{_f(cx)},{_f(base_y)} '
            f'M{_f(cx - head_half)},{_f(base_y)} L{_f(cx)},{_f(tip_y)} L{_f(cx + head_half)},{_f(base_y)}" '
            f'fill="none" stroke="{_gray(0.1)}" stroke-width="1.5" stroke-linejoin="miter"/>'
        )
    return parts


def _glyph_layer(glyphs: GlyphGrid, canvas: _Canvas) -> list[str]:
    out = ['<g id="glyphs">']
    g = glyphs.size
    cw, ch = canvas.w / g, canvas.h / g
    for r in range(g):
        for c in range(g):
            cx, cy = (c + 0.5) * cw, (r + 0.5) * ch
            out += _glyph(
                cx, cy, cw, ch,
                float(glyphs.h_p[r, c]), float(np.nan_to_num(glyphs.h_low[r, c])),
                float(np.nan_to_num(glyphs.h_high[r, c])), float(glyphs.width[r, c]),
            )
    out.append("</g>")
    return out


def _legend(vmin, vmax, units, spec: RenderSpec, w: int, h: int) -> list[str]:
    top = h + 12
    bar_w = max(w - 160, 40)
    return [
        '<g id="legend">',
        f'<rect x="10" y="{top}" width="{bar_w}" height="12" fill="url(#legend-ramp)" stroke="#000000" stroke-width="0.5"/>',
        f'<text x="10" y="{top + 26}" font-size="11" font-family="sans-serif">{_f(vmin)}</text>',
        f'<text x="{10 + bar_w}" y="{top + 26}" font-size="11" font-family="sans-serif" '
        f'text-anchor="end">{_f(vmax)} {escape(units)}</text>',
        f'<rect x="{w - 140}" y="{top}" width="16" height="16" fill="url(#hatch-stripes)" stroke="#808080" stroke-width="0.5"/>',
        f'<text x="{w - 118}" y="{top + 12}" font-size="11" font-family="sans-serif">sparse sensors</text>',
        f'<path d="M{w - 132},{top + 44} L{w - 132},{top + 30} M{w - 136},{top + 34} L{w - 132},{top + 28} L{w - 128},{top + 34}" '
        f'fill="none" stroke="#1a1a1a" stroke-width="1.5"/>',
        f'<text x="{w - 118}" y="{top + 40}" font-size="11" font-family="sans-serif">deviation from reference</text>',
        "</g>",
    ]


def render(
    raster: RasterField,
    glyphs: GlyphGrid | None = None,
    hatch: HatchField | None = None,
    spec: RenderSpec | None = None,
    timestep: int = 0,
    boundary=None,
) -> str:
    """Compose the SVG document for one raster frame.

    ``boundary`` is an optional lng/lat ring drawn on top. Glyph and hatch
    inputs must share the raster's bounds.
    """
    spec = spec or RenderSpec()
    for name, part in (("glyphs", glyphs), ("hatch", hatch)):
        if part is not None and not _same_bounds(part.bounds, raster.bounds):
            raise ValueError(f"{name} bounds {tuple(part.bounds)} differ from raster bounds {raster.bounds}")
    frame = raster.data[timestep].astype(np.float64)
    finite = frame[np.isfinite(frame)]
    vmin = spec.vmin if spec.vmin is not None else (float(finite.min()) if finite.size else 0.0)
    vmax = spec.vmax if spec.vmax is not None else (float(finite.max()) if finite.size else 1.0)
    if not vmax > vmin:
        vmax = vmin + 1.0
    w = int(spec.width_px)
    h = max(1, int(round(w * raster.height / raster.width)))
    canvas = _Canvas(raster.bounds, w, h)
    total_h = h + spec.legend_px

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{total_h}" '
        f'viewBox="0 0 {w} {total_h}">',
    ]
    if spec.title:
        out.append(f"<title>{escape(spec.title)}</title>")
    out += _defs(spec)
    out += _raster_layer(frame, vmin, vmax, spec, w, h)
    out += _hatch_layer(hatch, spec, w, h) if hatch is not None else ['<g id="hatch">', "</g>"]
    out += _glyph_layer(glyphs, canvas) if glyphs is not None else ['<g id="glyphs">', "</g>"]
    out += _legend(vmin, vmax, raster.units, spec, w, h)
    out.append('<g id="boundary">')
    if boundary is not None:
        ring = np.asarray(boundary, dtype=np.float64).reshape(-1, 2)
        xs, ys = canvas.xy(ring[:, 0], ring[:, 1])
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in zip(xs, ys))
        out.append(
            f'<polygon points="{pts}" fill="none" stroke="{spec.boundary_stroke}" '
            f'stroke-width="{_f(spec.boundary_width)}"/>'
        )
    out += ["</g>", "</svg>", ""]
    return "\n".join(out)


def save_svg(path, document: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(document)
