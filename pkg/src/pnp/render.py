"""SVG snapshots of a deployment, reconstructed from a trace at any instant."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .geometry import HexFrame, Point, center_of
from .protocol.state import DEAD, FREE, HYBRID, SLAVE, SNAPPED, STOPPED

LAYERS = ("aoi", "tiling", "sensors", "disks", "arrows")

ROLE_COLORS = {
    SNAPPED: "#1f77b4",
    HYBRID: "#9467bd",
    SLAVE: "#2ca02c",
    STOPPED: "#ff7f0e",
    FREE: "#7f7f7f",
    DEAD: "#d62728",
}


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class RenderSpec:
    times: tuple[float, ...]
    width: int = 640
    layers: frozenset = field(default_factory=lambda: frozenset(LAYERS))

    def __post_init__(self):
        if not self.times:
            raise RenderError("at least one snapshot time is required")
        if not self.layers:
            raise RenderError("the layer set is empty; choose from " + ", ".join(LAYERS))
        bad = sorted(set(self.layers) - set(LAYERS))
        if bad:
            raise RenderError(f"unknown layers {bad}; choose from {', '.join(LAYERS)}")
        if self.width < 16:
            raise RenderError("canvas width must be at least 16 px")


@dataclass
class SensorView:
    id: int
    position: Point
    role: str
    heading: Optional[Point] = None
    tile: Optional[tuple[int, int]] = None
    frame: Optional[HexFrame] = None


def span(records) -> tuple[float, float]:
    last = records[-1]
    end = last["t"] if last.get("kind") == "end" else max(r["t"] for r in records)
    return 0.0, end


def state_at(records, t: float) -> list[SensorView]:
    """Every sensor's position, role and motion at time ``t``."""
    lo, hi = span(records)
    if not lo <= t <= hi:
        raise RenderError(f"time {t} outside trace span [{lo}, {hi}]")
    head = records[0]
    views = {sid: SensorView(sid, Point(x, y), FREE) for sid, x, y in head["sensors"]}
    motion: dict[int, dict] = {}
    for r in records[1:]:
        if r["t"] > t:
            break
        kind = r.get("kind")
        if kind == "move":
            _settle(views, motion, r["id"], r["t"])
            motion[r["id"]] = r
        elif kind == "halt":
            motion.pop(r["id"], None)
            views[r["id"]].position = Point(*r["at"])
        elif kind == "fail":
            motion.pop(r["id"], None)
            views[r["id"]].position = Point(*r["at"])
            views[r["id"]].role = DEAD
        elif kind == "note" and r.get("event") == "role" and views[r["id"]].role != DEAD:
            views[r["id"]].role = r["role"]
        elif kind == "note" and r.get("event") == "snapped":
            v = views[r["id"]]
            v.tile = tuple(r["tile"])
            v.frame = HexFrame.from_dict(r["frame"])
    for sid, m in motion.items():
        v = views[sid]
        if t >= m["until"]:
            v.position = Point(*m["to"])
        else:
            v.position = _interp(m, t)
            v.heading = Point(*m["to"])
    return [views[k] for k in sorted(views)]


def _interp(m: dict, t: float) -> Point:
    span_t = m["until"] - m["t"]
    f = 1.0 if span_t <= 0 else (t - m["t"]) / span_t
    a, b = m["from"], m["to"]
    return Point(a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f)


def _settle(views, motion, sid, now):
    m = motion.pop(sid, None)
    if m is not None:
        views[sid].position = Point(*m["to"]) if now >= m["until"] else _interp(m, now)


def _fmt(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def render_svg(records, t: float, spec: RenderSpec) -> str:
    """One SVG document showing the deployment at ``t``."""
    views = state_at(records, t)
    cfg = records[0]["config"]
    aoi = [Point(*v) for v in cfg["aoi"]]
    r_s = cfg["r_s"]
    xs = [p.x for p in aoi]
    ys = [p.y for p in aoi]
    margin = r_s
    x0, x1 = min(xs) - margin, max(xs) + margin
    y0, y1 = min(ys) - margin, max(ys) + margin
    scale = spec.width / (x1 - x0)
    height = max(1, round((y1 - y0) * scale))

    def px(p: Point) -> tuple[str, str]:
        return _fmt((p.x - x0) * scale), _fmt((y1 - p.y) * scale)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{spec.width}" height="{height}" '
        f'viewBox="0 0 {spec.width} {height}">',
        f'<title>t = {_fmt(t)} s</title>',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    layers = spec.layers
    if "aoi" in layers:
        pts = " ".join(",".join(px(p)) for p in aoi)
        out.append(f'<polygon class="aoi" points="{pts}" fill="none" stroke="black" '
                   f'stroke-width="1.5"/>')
    if "tiling" in layers:
        for v in views:
            if v.role in (SNAPPED, HYBRID) and v.frame is not None:
                c = center_of(v.tile, v.frame)
                corners = [Point(c.x + r_s * math.cos(v.frame.theta + k * math.pi / 3),
                                 c.y + r_s * math.sin(v.frame.theta + k * math.pi / 3))
                           for k in range(6)]
                pts = " ".join(",".join(px(p)) for p in corners)
                out.append(f'<polygon class="hex" points="{pts}" fill="none" '
                           f'stroke="#bbbbbb" stroke-width="0.8"/>')
    if "disks" in layers:
        rad = _fmt(r_s * scale)
        for v in views:
            if v.role in (SNAPPED, HYBRID):
                cx, cy = px(v.position)
                out.append(f'<circle class="disk" cx="{cx}" cy="{cy}" r="{rad}" '
                           f'fill="#1f77b4" fill-opacity="0.08" stroke="none"/>')
    if "arrows" in layers:
        for v in views:
            if v.heading is not None:
                ax, ay = px(v.position)
                bx, by = px(v.heading)
                out.append(f'<line class="arrow" x1="{ax}" y1="{ay}" x2="{bx}" y2="{by}" '
                           f'stroke="#ff7f0e" stroke-width="0.8"/>')
    if "sensors" in layers:
        dot = _fmt(max(1.5, 0.35 * scale))
        for v in views:
            cx, cy = px(v.position)
            color = ROLE_COLORS.get(v.role, "#000000")
            out.append(f'<circle class="sensor {v.role}" cx="{cx}" cy="{cy}" r="{dot}" '
                       f'fill="{color}"><title>{v.id} {v.role}</title></circle>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def evenly_spaced(records, count: int) -> list[float]:
    """``count`` instants from 0 to the last recorded event, inclusive."""
    if count < 1:
        return []
    last = records[-1].get("last_event", span(records)[1])
    if count == 1:
        return [0.0]
    return [round(last * k / (count - 1), 6) for k in range(count)]
