"""Scenario configuration and initial sensor placement."""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .geometry import SQRT3, Point, Polygon, points_in_polygon


class ConfigError(ValueError):
    """A configuration problem; ``issues`` holds (severity, message) pairs."""

    def __init__(self, issues: list[tuple[str, str]], source: str = "<config>"):
        self.issues = issues
        self.source = source
        lines = [f"{source}: {sev}: {msg}" for sev, msg in issues]
        super().__init__("\n".join(lines))


@dataclass(frozen=True)
class Distribution:
    """Initial placement model.

    kind is ``uniform``, ``cluster`` (disk of ``radius`` around ``center``)
    or ``boundary-cluster`` (band of width ``depth`` along AoI edge
    ``edge``, an index into the polygon's edges).
    """

    kind: str = "uniform"
    center: Optional[Point] = None
    radius: float = 5.0
    edge: int = 0
    depth: float = 10.0

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "cluster":
            d.update(center=list(self.center) if self.center else None, radius=self.radius)
        elif self.kind == "boundary-cluster":
            d.update(edge=self.edge, depth=self.depth)
        return d


@dataclass(frozen=True)
class Failure:
    """Kill a sensor: by ID at an absolute time, or a random snapped sensor
    some seconds after coverage first reaches the threshold."""

    sensor: Optional[int] = None
    time: Optional[float] = None
    after_coverage: Optional[float] = None

    def to_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}


@dataclass(frozen=True)
class ScenarioConfig:
    aoi: Polygon
    n_sensors: int
    r_s: float = 5.0
    r_tx: float = 11.0
    speed: float = 1.0
    distribution: Distribution = Distribution()
    # medium
    base_latency: float = 0.010
    jitter: float = 0.005
    loss: float = 0.0
    retries: int = 3
    # energy
    e_move: float = 1.0
    e_tx: float = 0.01
    e_rx: float = 0.005
    battery: float = 1e4
    # protocol knobs
    subst_hysteresis: float = 0.05
    max_hop: int = 5
    role_exchange: bool = True
    # run control
    failures: tuple[Failure, ...] = ()
    seed: int = 0
    max_time: float = 3000.0
    snapshot_interval: float = 5.0
    coverage_threshold: float = 0.99
    coverage_resolution: float = 0.25
    quiescence_window: float = 60.0
    name: str = "custom"
    # explicit initial positions; overrides ``distribution`` when given
    positions: Optional[tuple[Point, ...]] = None
    # explicit starter instants per sensor index (None: random)
    starters: Optional[tuple[Optional[float], ...]] = None
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        issues = validate(self)
        errors = [i for i in issues if i[0] == "error"]
        if errors:
            raise ConfigError(errors)
        object.__setattr__(self, "warnings", tuple(m for sev, m in issues if sev == "warning"))

    def replace(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if f.name == "warnings":
                continue
            v = getattr(self, f.name)
            if f.name == "aoi":
                v = [list(p) for p in v.vertices]
            elif f.name == "distribution":
                v = v.to_dict()
            elif f.name == "failures":
                v = [x.to_dict() for x in v]
            elif f.name == "positions" and v is not None:
                v = [list(p) for p in v]
            elif f.name == "starters" and v is not None:
                v = list(v)
            out[f.name] = v
        return out


def validate(cfg: ScenarioConfig) -> list[tuple[str, str]]:
    issues = []

    def err(msg):
        issues.append(("error", msg))

    if cfg.n_sensors < 1:
        err("n_sensors must be at least 1")
    for name in ("r_s", "r_tx", "speed", "base_latency", "battery", "max_time",
                 "snapshot_interval", "coverage_resolution", "quiescence_window"):
        if not getattr(cfg, name) > 0:
            err(f"{name} must be positive")
    for name in ("jitter", "e_move", "e_tx", "e_rx", "subst_hysteresis"):
        if getattr(cfg, name) < 0:
            err(f"{name} must be non-negative")
    if not 0 <= cfg.loss < 1:
        err("loss must lie in [0, 1)")
    if cfg.retries < 0 or cfg.max_hop < 0:
        err("retries and max_hop must be non-negative")
    if not 0 < cfg.coverage_threshold <= 1:
        err("coverage_threshold must lie in (0, 1]")
    d = cfg.distribution
    if d.kind not in ("uniform", "cluster", "boundary-cluster"):
        err(f"unknown distribution kind {d.kind!r}")
    elif d.kind == "cluster":
        if d.center is None or not d.radius > 0:
            err("cluster distribution needs a center and a positive radius")
        elif cfg.aoi.distance(d.center) >= d.radius and not cfg.aoi.contains(d.center):
            err("cluster region does not intersect the AoI")
    elif d.kind == "boundary-cluster":
        if not 0 <= d.edge < len(cfg.aoi.vertices) or not d.depth > 0:
            err("boundary-cluster needs a valid edge index and a positive depth")
    if cfg.positions is not None:
        if len(cfg.positions) != cfg.n_sensors:
            err("positions must list exactly n_sensors points")
        elif not all(cfg.aoi.contains(p) for p in cfg.positions):
            err("every explicit position must lie inside the AoI")
    if cfg.starters is not None and len(cfg.starters) != cfg.n_sensors:
        err("starters must list one entry per sensor")
    for f in cfg.failures:
        if (f.time is None) == (f.after_coverage is None):
            err("a failure needs exactly one of time / after_coverage")
        if f.sensor is not None and not 1 <= f.sensor <= cfg.n_sensors:
            err(f"failure names unknown sensor {f.sensor}")
        if f.time is not None and f.time < 0:
            err("failure time must be non-negative")
        if f.sensor is None and f.time is not None:
            err("a timed failure must name its sensor")
    if cfg.r_tx < SQRT3 * cfg.r_s:
        issues.append(("warning", f"r_tx={cfg.r_tx} < sqrt(3)*r_s={SQRT3 * cfg.r_s:.2f}: "
                                  "adjacent snapped sensors may not hear each other"))
    return issues


# --- presets ------------------------------------------------------------

def narrows_polygon() -> Polygon:
    """Two 40 m squares joined by an 8 m wide, 20 m long corridor."""
    return Polygon((
        Point(0, 0), Point(40, 0), Point(40, 16), Point(60, 16), Point(60, 0),
        Point(100, 0), Point(100, 40), Point(60, 40), Point(60, 24), Point(40, 24),
        Point(40, 40), Point(0, 40),
    ))


def preset(name: str, n_sensors: int = 150, **overrides) -> ScenarioConfig:
    square = Polygon.rectangle(0, 0, 80, 80)
    if name == "random80":
        base = dict(aoi=square, distribution=Distribution("uniform"))
    elif name == "boundary80":
        base = dict(aoi=square, distribution=Distribution("boundary-cluster", edge=3, depth=10.0))
    elif name == "center80":
        base = dict(aoi=square, distribution=Distribution("cluster", Point(40, 40), 5.0))
    elif name == "narrows":
        base = dict(aoi=narrows_polygon(), distribution=Distribution("cluster", Point(20, 20), 5.0))
    else:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    base.update(n_sensors=n_sensors, name=name)
    base.update(overrides)
    return ScenarioConfig(**base)


PRESETS = ("random80", "boundary80", "center80", "narrows")


# --- loading ------------------------------------------------------------

_TOP_KEYS = {
    "preset", "aoi", "n_sensors", "r_s", "r_tx", "speed", "distribution", "medium",
    "energy", "protocol", "failures", "seed", "max_time", "snapshot_interval",
    "coverage", "quiescence_window", "name", "positions", "starters",
}
_SECTIONS = {
    "medium": {"base_latency", "jitter", "loss", "retries"},
    "energy": {"e_move", "e_tx", "e_rx", "battery"},
    "protocol": {"subst_hysteresis", "max_hop", "role_exchange"},
    "coverage": {"threshold": "coverage_threshold", "resolution": "coverage_resolution"},
    "distribution": {"kind", "center", "radius", "edge", "depth"},
}


def load_config(path) -> ScenarioConfig:
    """Read a YAML scenario file (see README for the schema)."""
    path = Path(path)
    text = path.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark else str(path)
        raise ConfigError([("error", f"malformed YAML: {exc}")], where) from exc
    if not isinstance(data, dict):
        raise ConfigError([("error", "top level must be a mapping")], str(path))
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        lines = _key_lines(text)
        issues = []
        for sev, msg in exc.issues:
            m = re.match(r"(?:unknown key )?'?([\w.]+)", msg)
            key = m.group(1) if m else ""
            line = lines.get(key) or next(
                (n for k, n in lines.items() if k.endswith("." + key)), None)
            issues.append((sev, f"line {line}: {msg}" if line else msg))
        raise ConfigError(issues, str(path)) from None


def _key_lines(text: str) -> dict[str, int]:
    """1-based line of every top-level and section key in a YAML document."""
    out: dict[str, int] = {}
    root = yaml.compose(text)
    if not isinstance(root, yaml.MappingNode):
        return out
    for knode, vnode in root.value:
        out[knode.value] = knode.start_mark.line + 1
        if isinstance(vnode, yaml.MappingNode):
            for sub, _ in vnode.value:
                out[f"{knode.value}.{sub.value}"] = sub.start_mark.line + 1
    return out


def config_from_dict(data: dict[str, Any]) -> ScenarioConfig:
    issues = []
    unknown = sorted(set(data) - _TOP_KEYS)
    for k in unknown:
        issues.append(("error", f"unknown key {k!r}"))
    kw: dict[str, Any] = {}
    for sec in ("medium", "energy", "protocol", "coverage"):
        body = data.get(sec) or {}
        if not isinstance(body, dict):
            issues.append(("error", f"section {sec!r} must be a mapping"))
            continue
        allowed = _SECTIONS[sec]
        for k, v in body.items():
            if k not in allowed:
                issues.append(("error", f"unknown key {sec}.{k}"))
            elif isinstance(allowed, dict):
                kw[allowed[k]] = v
            else:
                kw[k] = v
    for k in ("n_sensors", "r_s", "r_tx", "speed", "seed", "max_time",
              "snapshot_interval", "quiescence_window", "name"):
        if k in data:
            kw[k] = data[k]
    if "aoi" in data:
        try:
            kw["aoi"] = Polygon(tuple(Point(*map(float, v)) for v in data["aoi"]))
        except (TypeError, ValueError) as exc:
            issues.append(("error", f"aoi: {exc}"))
    if "distribution" in data:
        d = data["distribution"]
        if isinstance(d, str):
            d = {"kind": d}
        bad = sorted(set(d) - _SECTIONS["distribution"])
        issues.extend(("error", f"unknown key distribution.{k}") for k in bad)
        if not bad:
            if d.get("center") is not None:
                d = dict(d, center=Point(*map(float, d["center"])))
            kw["distribution"] = Distribution(**d)
    if "failures" in data:
        fails = []
        for f in data["failures"] or []:
            bad = sorted(set(f) - {"sensor", "time", "after_coverage"})
            issues.extend(("error", f"unknown key failures.{k}") for k in bad)
            if not bad:
                fails.append(Failure(**f))
        kw["failures"] = tuple(fails)
    if data.get("positions") is not None:
        kw["positions"] = tuple(Point(*map(float, p)) for p in data["positions"])
    if data.get("starters") is not None:
        kw["starters"] = tuple(data["starters"])
    if issues:
        raise ConfigError(issues)
    name = data.get("preset")
    try:
        if name is not None:
            n = kw.pop("n_sensors", 150)
            return preset(name, n, **kw)
        if "aoi" not in kw or "n_sensors" not in kw:
            raise ConfigError([("error", "aoi and n_sensors are required without a preset")])
        return ScenarioConfig(**kw)
    except KeyError as exc:
        raise ConfigError([("error", str(exc.args[0]))]) from None
    except TypeError as exc:
        raise ConfigError([("error", str(exc))]) from None


# --- placement ----------------------------------------------------------

def generate_initial(config: ScenarioConfig, seed: Optional[int] = None,
                     rng: Optional[np.random.Generator] = None) -> list[tuple[int, Point, float]]:
    """(sensor ID, position, energy) for every sensor; IDs start at 1."""
    if config.positions is not None:
        pts = list(config.positions)
    else:
        if rng is None:
            rng = np.random.default_rng(config.seed if seed is None else seed)
        pts = _sample(config, rng)
    return [(i + 1, Point(float(p[0]), float(p[1])), config.battery) for i, p in enumerate(pts)]


def _sample(cfg: ScenarioConfig, rng: np.random.Generator) -> list[Point]:
    aoi = cfg.aoi
    d = cfg.distribution
    x0, y0, x1, y1 = aoi.bounds
    if d.kind == "cluster":
        cx, cy = d.center
        draw = lambda k: _disk(rng, cx, cy, d.radius, k)  # noqa: E731
    elif d.kind == "boundary-cluster":
        a = aoi.vertices[d.edge]
        b = aoi.vertices[(d.edge + 1) % len(aoi.vertices)]

        def draw(k):
            pts = rng.uniform((x0, y0), (x1, y1), size=(k, 2))
            return pts[_seg_dist_many(pts, a, b) <= d.depth]
    else:
        draw = lambda k: rng.uniform((x0, y0), (x1, y1), size=(k, 2))  # noqa: E731
    out: list[Point] = []
    attempts = 0
    while len(out) < cfg.n_sensors:
        attempts += 1
        if attempts > 10_000:
            raise ConfigError([("error", "placement region has (almost) no overlap with the AoI")])
        need = cfg.n_sensors - len(out)
        pts = draw(max(16, 2 * need))
        if len(pts) == 0:
            continue
        pts = pts[points_in_polygon(pts, aoi)]
        out.extend(Point(float(x), float(y)) for x, y in pts[:need])
    return out


def _disk(rng, cx, cy, radius, k) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform(0, 1, k))
    a = rng.uniform(0, 2 * math.pi, k)
    return np.column_stack((cx + r * np.cos(a), cy + r * np.sin(a)))


def _seg_dist_many(pts: np.ndarray, a, b) -> np.ndarray:
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    t = ((pts[:, 0] - ax) * dx + (pts[:, 1] - ay) * dy) / (dx * dx + dy * dy)
    t = np.clip(t, 0, 1)
    return np.hypot(pts[:, 0] - (ax + t * dx), pts[:, 1] - (ay + t * dy))
