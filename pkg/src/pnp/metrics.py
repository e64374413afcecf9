"""Run metrics recomputed from a trace.

Every function here folds over trace records only; nothing reads simulator
internals, so a trace written to disk yields the same report later.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

from .geometry import CoverageCounter, HexFrame, Point, Polygon, center_of, dist, tile_of

COVERING_ROLES = ("snapped", "hybrid")


@dataclass
class RunReport:
    seed: int
    n_sensors: int
    scenario: str
    terminated: bool
    coverage_time: Optional[float]
    termination_time: Optional[float]
    messages_total: int
    messages_per_sensor: float
    snap_conflicts_per_position: float
    push_conflicts_per_slave: float
    final_coverage: float
    final_portion_count: int
    lattice_deviation: float
    starters: int
    pull_triggers: int
    total_distance_traveled: float
    energy_spent: float
    per_variant: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


# stable column order for the aggregate table
CSV_COLUMNS = (
    "scenario", "n_sensors", "seed", "terminated", "coverage_time", "termination_time",
    "final_coverage", "final_portion_count", "lattice_deviation", "starters",
    "messages_total", "messages_per_sensor", "snap_conflicts_per_position",
    "push_conflicts_per_slave", "pull_triggers", "total_distance_traveled", "energy_spent",
)


def _records(trace) -> list[dict]:
    return trace.records if hasattr(trace, "records") else list(trace)


def _header(recs) -> dict:
    if not recs or recs[0].get("kind") != "header":
        raise ValueError("trace has no header record")
    return recs[0]


def _span_end(recs) -> float:
    last = recs[-1]
    return last["t"] if last.get("kind") == "end" else max(r["t"] for r in recs)


def motion_intervals(trace) -> list[tuple[float, float, int, Point, Point]]:
    """(start, end, sensor, from, reached) for every motion, cut at halts/failures."""
    recs = _records(trace)
    open_: dict[int, dict] = {}
    out = []

    def close(sid, t, at=None):
        m = open_.pop(sid, None)
        if m is None:
            return
        if at is None:
            at = m["to"] if t >= m["until"] else None
        if at is None:
            f = (t - m["t"]) / (m["until"] - m["t"]) if m["until"] > m["t"] else 1.0
            a, b = m["from"], m["to"]
            at = [a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f]
        out.append((m["t"], min(t, m["until"]), sid, Point(*m["from"]), Point(*at)))

    for r in recs:
        kind = r.get("kind")
        if kind == "move":
            sid = r["id"]
            if sid in open_ and open_[sid]["until"] <= r["t"]:
                close(sid, open_[sid]["until"])
            elif sid in open_:
                close(sid, r["t"])
            open_[sid] = r
        elif kind in ("halt", "fail") and r["id"] in open_:
            m = open_[r["id"]]
            if r["t"] >= m["until"]:
                close(r["id"], m["until"])
            else:
                close(r["id"], r["t"], r["at"])
    for sid in list(open_):
        close(sid, open_[sid]["until"])
    out.sort(key=lambda x: (x[0], x[2]))
    return out


def detect_termination(trace, window: float = 60.0) -> Optional[float]:
    """Earliest t with no message send and no motion in (t, t + window]."""
    if window <= 0:
        raise ValueError("window must be positive")
    recs = _records(trace)
    end = _span_end(recs)
    busy = [(r["t"], r["t"]) for r in recs if r.get("kind") == "send"]
    busy += [(a, b) for a, b, *_ in motion_intervals(recs)]
    if not busy:
        return 0.0 if window <= end else None
    busy.sort()
    t = 0.0
    for start, stop in busy:
        if start > t + window:
            return t
        t = max(t, stop)
    return t if t + window <= end else None


def _covering_timeline(recs):
    """Yield (t, op, sensor, position, frame) for covering-set changes."""
    covering: dict[int, tuple] = {}
    for r in recs:
        kind = r.get("kind")
        if kind == "note" and r.get("event") == "snapped":
            frame = HexFrame.from_dict(r["frame"])
            if r["id"] in covering:
                yield r["t"], "remove", r["id"], covering[r["id"]][0], None
            covering[r["id"]] = (Point(*r["at"]), frame)
            yield r["t"], "add", r["id"], Point(*r["at"]), frame
        elif kind == "note" and r.get("event") == "role" and r["role"] not in COVERING_ROLES:
            if r["id"] in covering:
                yield r["t"], "remove", r["id"], covering.pop(r["id"])[0], None
        elif kind == "fail" and r["id"] in covering:
            yield r["t"], "remove", r["id"], covering.pop(r["id"])[0], None


def _aoi(header) -> Polygon:
    return Polygon(tuple(Point(*v) for v in header["config"]["aoi"]))


def final_covering(trace) -> dict[int, tuple[Point, HexFrame]]:
    cov: dict[int, tuple] = {}
    for _, op, sid, p, frame in _covering_timeline(_records(trace)):
        if op == "add":
            cov[sid] = (p, frame)
        else:
            cov.pop(sid, None)
    return cov


def coverage_time(trace, threshold: Optional[float] = None) -> tuple[Optional[float], float]:
    """(first instant coverage reaches threshold, final coverage)."""
    recs = _records(trace)
    cfg = _header(recs)["config"]
    threshold = cfg["coverage_threshold"] if threshold is None else threshold
    counter = CoverageCounter(_aoi(recs[0]), cfg["r_s"], cfg["coverage_resolution"])
    first = None
    for t, op, _, p, _ in _covering_timeline(recs):
        if op == "add":
            counter.add(p)
        else:
            counter.remove(p)
        if first is None and counter.fraction >= threshold:
            first = t
    return first, counter.fraction


def final_portion_count(trace) -> int:
    return len({frame.key for _, frame in final_covering(trace).values()})


def lattice_deviation(trace) -> float:
    """Largest distance of a covering sensor from the nearest center of the
    oldest surviving portion's lattice."""
    cov = final_covering(trace)
    if not cov:
        return 0.0
    frame = min((f for _, f in cov.values()), key=lambda f: f.key)
    return max(dist(p, center_of(tile_of(p, frame), frame)) for p, _ in cov.values())


def _position_key(portion, coords) -> tuple:
    return (tuple(portion) if portion else None, round(coords[0], 4), round(coords[1], 4))


def count_snap_conflicts(trace) -> float:
    """Concurrent contenders per snap position, averaged over positions taken.

    A sensor contends for a position from the SIP that names it (or its own
    ClaimPosition) until the position is taken or its SIP is given up.
    Overlapping contention intervals of k distinct sensors count k - 1.
    """
    recs = _records(trace)
    starts: dict[tuple, dict[int, float]] = defaultdict(dict)
    ends: dict[tuple, dict[int, float]] = defaultdict(dict)
    taken_at: dict[tuple, list[float]] = defaultdict(list)
    sip_pos: dict[tuple[int, int], tuple] = {}
    for r in recs:
        kind = r.get("kind")
        if kind == "send":
            v = r["variant"]
            if v == "SIP":
                key = _position_key(r["portion"], r["payload"]["target_coordinates"])
                cand = r["payload"]["receiver_id"]
                starts[key].setdefault(cand, r["t"])
                ends[key].pop(cand, None)
                sip_pos[(r["sender"], cand)] = key
            elif v == "ClaimPosition":
                key = _position_key(r["portion"], r["payload"]["coordinates"])
                starts[key].setdefault(r["sender"], r["t"])
            elif v == "PositionTaken":
                key = _position_key(r["portion"], r["payload"]["coordinates"])
                taken_at[key].append(r["t"])
        elif kind == "note" and r.get("event") == "sip_outcome" and r["case"] in (3, 5):
            key = sip_pos.get((r["id"], r["by"]))
            if key is not None and r["by"] in starts[key]:
                ends[key].setdefault(r["by"], r["t"])
    conflicts = 0
    for key, who in starts.items():
        done = min(taken_at[key]) if taken_at[key] else math.inf
        spans = sorted((t0, ends[key].get(s, done), s) for s, t0 in who.items())
        cluster_end, size = -math.inf, 0
        for t0, t1, _ in spans:
            if t0 <= cluster_end:
                size += 1
                cluster_end = max(cluster_end, t1)
            else:
                conflicts += max(0, size - 1)
                size, cluster_end = 1, t1
        conflicts += max(0, size - 1)
    positions = {(HexFrame.from_dict(r["frame"]).key, tuple(r["tile"]))
                 for r in recs if r.get("kind") == "note" and r.get("event") == "snapped"}
    return conflicts / len(positions) if positions else 0.0


def count_push_conflicts(trace) -> float:
    """Offers rejected by the receiver's Moving Condition check, per slave.

    The denominator counts distinct sensors that held the slave role at
    some point of the run: role changes, InfoSlave senders and MoveTo
    receivers (a run may start from sensors that are slaves already).
    """
    recs = _records(trace)
    rejected = sum(1 for r in recs if r.get("kind") == "note" and r.get("event") == "offer"
                   and not r["accepted"])
    slaves = set()
    for r in recs:
        kind = r.get("kind")
        if kind == "note" and r.get("event") == "role" and r["role"] == "slave":
            slaves.add(r["id"])
        elif kind == "send" and r["variant"] == "InfoSlave":
            slaves.add(r["sender"])
        elif kind == "send" and r["variant"] == "MoveTo":
            slaves.add(r["receiver"])
    return rejected / len(slaves) if slaves else 0.0


def message_counts(trace) -> Counter:
    return Counter(r["variant"] for r in _records(trace) if r.get("kind") == "send")


def build_report(trace, window: Optional[float] = None) -> RunReport:
    recs = _records(trace)
    head = _header(recs)
    cfg = head["config"]
    window = cfg["quiescence_window"] if window is None else window
    counts = message_counts(recs)
    total = sum(counts.values())
    n = cfg["n_sensors"]
    first, final = coverage_time(recs)
    term = detect_termination(recs, window)
    distance = sum(dist(a, b) for _, _, _, a, b in motion_intervals(recs))
    rx = sum(r["recipients"] for r in recs if r.get("kind") == "send")
    energy = total * cfg["e_tx"] + rx * cfg["e_rx"] + distance * cfg["e_move"]
    notes = Counter(r.get("event") for r in recs if r.get("kind") == "note")
    footer = recs[-1]
    return RunReport(
        seed=head["seed"],
        n_sensors=n,
        scenario=cfg["name"],
        terminated=bool(footer.get("quiescent")) and term is not None,
        coverage_time=first,
        termination_time=term,
        messages_total=total,
        messages_per_sensor=total / n,
        snap_conflicts_per_position=count_snap_conflicts(recs),
        push_conflicts_per_slave=count_push_conflicts(recs),
        final_coverage=final,
        final_portion_count=final_portion_count(recs),
        lattice_deviation=lattice_deviation(recs),
        starters=notes["starter"],
        pull_triggers=notes["pull_start"],
        total_distance_traveled=round(distance, 9),
        energy_spent=round(energy, 9),
        per_variant=dict(sorted(counts.items())),
    )


def aggregate_csv(reports: Iterable[RunReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep in reports:
        d = rep.to_dict()
        w.writerow(["" if d[c] is None else d[c] for c in CSV_COLUMNS])
    return buf.getvalue()
