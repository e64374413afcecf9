"""Discrete-event simulator driving one protocol state machine per sensor.

Events are ordered by (time, sequence).  Broadcast recipients are fixed at
send time.  Motion is straight-line at constant speed; positions are
interpolated on demand.  The run ends when the event queue drains or at
``max_time``.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

import numpy as np

from .geometry import Point, CoverageCounter, dist
from .protocol import handlers
from .protocol.messages import Message, wire_record
from .protocol.state import DEAD, SNAPPED, HYBRID, ProtocolParams, SensorState
from .scenario import ScenarioConfig, generate_initial

# kind order only matters for documentation; ties are broken by sequence
DELIVERY = "deliver"
TIMER = "timer"
WAYPOINT = "arrive"
STARTER = "start"
FAILURE = "fail"


@dataclass(frozen=True, order=True)
class Event:
    time: float
    seq: int
    kind: str = field(compare=False)
    sensor: int = field(compare=False)
    data: Any = field(compare=False, default=None)


@dataclass(frozen=True)
class MediumModel:
    base_latency: float = 0.010
    jitter: float = 0.005
    loss: float = 0.0
    retries: int = 3
    r_tx: float = 11.0

    def delivery_probability(self) -> float:
        return 1.0 - self.loss ** (self.retries + 1)

    def latency(self, rng: np.random.Generator) -> Optional[float]:
        """One-hop latency, or None when every attempt is lost."""
        jit = self.jitter * rng.random() if self.jitter > 0 else 0.0
        if self.loss == 0:
            return self.base_latency + jit
        for k in range(self.retries + 1):
            if rng.random() >= self.loss:
                return self.base_latency + jit + k * self.base_latency
        return None

    def t_msg(self) -> float:
        """99th percentile of the one-hop latency of delivered messages."""
        q = self.loss
        w = np.array([q ** k * (1 - q) for k in range(self.retries + 1)])
        w = w / w.sum()

        def cdf(x):
            tot = 0.0
            for k, wk in enumerate(w):
                lo = self.base_latency * (k + 1)
                if self.jitter == 0:
                    tot += wk * (x >= lo)
                else:
                    tot += wk * min(1.0, max(0.0, (x - lo) / self.jitter))
            return tot

        lo, hi = 0.0, self.base_latency * (self.retries + 1) + self.jitter
        for _ in range(60):
            mid = (lo + hi) / 2
            if cdf(mid) >= 0.99:
                hi = mid
            else:
                lo = mid
        return hi


@dataclass
class MotionState:
    origin: Point
    target: Point
    speed: float
    stop_distance: float
    depart: float
    end: Point = None
    length: float = 0.0
    gen: int = 0

    def __post_init__(self):
        d = dist(self.origin, self.target)
        self.length = max(0.0, d - self.stop_distance)
        if self.stop_distance <= 0 or d <= 0:
            self.end = Point(*self.target) if self.length > 0 else Point(*self.origin)
        else:
            f = self.length / d
            self.end = Point(self.origin.x + (self.target.x - self.origin.x) * f,
                             self.origin.y + (self.target.y - self.origin.y) * f)

    @property
    def arrival(self) -> float:
        return self.depart + self.length / self.speed

    def position(self, now: float) -> Point:
        if self.length <= 0:
            return self.origin
        f = min(1.0, (now - self.depart) * self.speed / self.length)
        if f >= 1.0:
            return self.end
        return Point(self.origin.x + (self.end.x - self.origin.x) * f,
                     self.origin.y + (self.end.y - self.origin.y) * f)


class Trace:
    """Ordered list of JSON-serialisable records."""

    def __init__(self, records: Optional[list[dict]] = None):
        self.records = records if records is not None else []

    def append(self, rec: dict) -> None:
        self.records.append(rec)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    @property
    def header(self) -> dict:
        return self.records[0]

    @property
    def footer(self) -> dict:
        return self.records[-1]

    @property
    def terminated(self) -> bool:
        return bool(self.footer.get("quiescent"))

    def dumps(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n"
                       for r in self.records)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def read(cls, path) -> "Trace":
        with open(path) as fh:
            return cls([json.loads(line) for line in fh if line.strip()])


def _params(cfg: ScenarioConfig, medium: MediumModel) -> ProtocolParams:
    return ProtocolParams(
        aoi=cfg.aoi, r_s=cfg.r_s, r_tx=cfg.r_tx, speed=cfg.speed, t_msg=medium.t_msg(),
        e_move=cfg.e_move, e_tx=cfg.e_tx, e_rx=cfg.e_rx, battery=cfg.battery,
        subst_hysteresis=cfg.subst_hysteresis, max_hop=cfg.max_hop,
        role_exchange=cfg.role_exchange,
    )


class Simulator:
    def __init__(self, config: ScenarioConfig, seed: Optional[int] = None):
        self.cfg = config
        self.seed = config.seed if seed is None else seed
        ss = np.random.SeedSequence(self.seed)
        (self.rng_place, self.rng_start, self.rng_theta, self.rng_medium,
         self.rng_fail) = [np.random.default_rng(s) for s in ss.spawn(5)]
        self.medium = MediumModel(config.base_latency, config.jitter, config.loss,
                                  config.retries, config.r_tx)
        self.params = _params(config, self.medium)
        placed = generate_initial(config, rng=self.rng_place)
        self.ids = [sid for sid, _, _ in placed]
        self.index = {sid: k for k, sid in enumerate(self.ids)}
        self.states: dict[int, SensorState] = {}
        for sid, pos, energy in placed:
            self.states[sid] = SensorState(id=sid, position=pos, energy=energy,
                                           params=self.params, ord=sid, base_ord=sid)
        n = len(self.ids)
        self.alive = np.ones(n, dtype=bool)
        self.pos = np.array([[p.x, p.y] for _, p, _ in placed], dtype=float).reshape(n, 2)
        self.motions: dict[int, MotionState] = {}
        self.motion_gen: dict[int, int] = {sid: 0 for sid in self.ids}
        self.timers: dict[int, dict[str, int]] = {sid: {} for sid in self.ids}
        self.timer_seq = 0
        self.queue: list[Event] = []
        self.seq = 0
        self.now = 0.0
        self.trace = Trace()
        self.distance = {sid: 0.0 for sid in self.ids}
        self.sends = 0
        self.deliveries = 0
        self.coverage = CoverageCounter(config.aoi, config.r_s, config.coverage_resolution)
        self.covered_by: dict[int, Point] = {}
        self.coverage_time: Optional[float] = None
        self.next_snapshot = 0.0

    # -- scheduling ------------------------------------------------------

    def schedule(self, time: float, kind: str, sensor: int, data=None) -> Event:
        if time < self.now:
            time = self.now
        ev = Event(time, self.seq, kind, sensor, data)
        self.seq += 1
        heapq.heappush(self.queue, ev)
        return ev

    def inject_failure(self, sensor: int, time: float) -> Event:
        if sensor not in self.index:
            raise KeyError(f"unknown sensor {sensor}")
        if time < 0:
            raise ValueError("failure time must be non-negative")
        return self.schedule(time, FAILURE, sensor)

    def set_timer(self, sid: int, name: str, deadline: Optional[float]) -> None:
        """Arm (or with ``deadline=None`` cancel) a sensor's named timer."""
        if deadline is None:
            self.timers[sid].pop(name, None)
            return
        self.timer_seq += 1
        self.timers[sid][name] = self.timer_seq
        self.schedule(deadline, TIMER, sid, (name, self.timer_seq))

    # -- positions -------------------------------------------------------

    def position(self, sid: int) -> Point:
        m = self.motions.get(sid)
        if m is not None:
            return m.position(self.now)
        k = self.index[sid]
        return Point(float(self.pos[k, 0]), float(self.pos[k, 1]))

    def _refresh_positions(self) -> np.ndarray:
        for sid, m in self.motions.items():
            p = m.position(self.now)
            k = self.index[sid]
            self.pos[k, 0] = p.x
            self.pos[k, 1] = p.y
        return self.pos

    # -- medium ----------------------------------------------------------

    def transmit(self, sender: int, msg: Message) -> list[Event]:
        """Schedule deliveries of ``msg`` sent now by ``sender``."""
        pos = self._refresh_positions()
        k = self.index[sender]
        if msg.unicast:
            r = self.index.get(msg.receiver)
            cands = [] if r is None else [r]
        else:
            d2 = (pos[:, 0] - pos[k, 0]) ** 2 + (pos[:, 1] - pos[k, 1]) ** 2
            cands = np.nonzero((d2 <= self.cfg.r_tx ** 2) & self.alive)[0].tolist()
        events = []
        for r in cands:
            if r == k or not self.alive[r]:
                continue
            if math.hypot(pos[r, 0] - pos[k, 0], pos[r, 1] - pos[k, 1]) > self.cfg.r_tx:
                continue
            lat = self.medium.latency(self.rng_medium)
            if lat is None:
                continue
            events.append(self.schedule(self.now + lat, DELIVERY, self.ids[r], msg))
        self.sends += 1
        self.trace.append(wire_record(self.now, msg, len(events)))
        self._spend(sender, self.cfg.e_tx)
        return events

    def _spend(self, sid: int, joules: float) -> None:
        st = self.states[sid]
        st.energy = st.energy - joules

    # -- main loop -------------------------------------------------------

    def run(self) -> Trace:
        cfg = self.cfg
        self.trace.append({
            "t": 0.0, "kind": "header", "seed": self.seed, "config": cfg.to_dict(),
            "t_msg": self.params.t_msg,
            "sensors": [[sid, self.states[sid].position.x, self.states[sid].position.y]
                        for sid in self.ids],
        })
        for k, sid in enumerate(self.ids):
            fixed = cfg.starters[k] if cfg.starters is not None else None
            t = float(self.rng_start.uniform(0, cfg.r_tx / cfg.speed))
            theta = float(self.rng_theta.uniform(0, math.pi / 3))
            if cfg.starters is None or fixed is not None:
                self.schedule(fixed if fixed is not None else t, STARTER, sid, theta)
        for f in cfg.failures:
            if f.time is not None:
                self.inject_failure(f.sensor, f.time)
        quiescent = False
        while True:
            if not self.queue:
                quiescent = True
                break
            ev = self.queue[0]
            if ev.time > cfg.max_time:
                break
            heapq.heappop(self.queue)
            self._snapshots_until(ev.time)
            self.now = ev.time
            self._dispatch(ev)
        end = cfg.max_time
        self._snapshots_until(self.now)
        self._snapshot(self.now)
        self.trace.append({
            "t": end, "kind": "end", "quiescent": quiescent, "last_event": self.now,
            "sends": self.sends, "deliveries": self.deliveries,
            "coverage": self.coverage.fraction, "coverage_time": self.coverage_time,
            "distance": round(sum(self.distance.values()), 9),
        })
        return self.trace

    def _snapshots_until(self, t: float) -> None:
        while self.next_snapshot <= t:
            saved = self.now
            self.now = self.next_snapshot
            self._snapshot(self.next_snapshot)
            self.now = saved
            self.next_snapshot += self.cfg.snapshot_interval

    def _snapshot(self, t: float) -> None:
        rows = []
        for sid in self.ids:
            st = self.states[sid]
            p = self.position(sid) if self.alive[self.index[sid]] else st.position
            role = st.role if self.alive[self.index[sid]] else DEAD
            rows.append([sid, role, round(p.x, 6), round(p.y, 6)])
        self.trace.append({"t": t, "kind": "snapshot", "sensors": rows})

    def _dispatch(self, ev: Event) -> None:
        sid = ev.sensor
        k = self.index[sid]
        if not self.alive[k]:
            return
        if ev.kind == FAILURE:
            self._fail(sid)
            return
        if ev.kind == TIMER:
            name, gen = ev.data
            if self.timers[sid].get(name) != gen:
                return
            del self.timers[sid][name]
            self._apply(sid, "timer", name)
        elif ev.kind == DELIVERY:
            self.deliveries += 1
            self._spend(sid, self.cfg.e_rx)
            self._apply(sid, "msg", ev.data)
        elif ev.kind == WAYPOINT:
            if self.motion_gen[sid] != ev.data:
                return
            self._finish_motion(sid, "arrive")
            self._apply(sid, "arrive", None)
        elif ev.kind == STARTER:
            self._apply(sid, "start", ev.data)

    def _apply(self, sid: int, kind: str, data) -> None:
        st = self.states[sid]
        if sid in self.motions:
            st.position = self.position(sid)
        before = st.role
        out = handlers.step(st, kind, data, self.now)
        new = out.state
        self.states[sid] = new
        for note in out.notes:
            rec = {"t": self.now, "kind": "note", "id": sid}
            rec.update(note)
            self.trace.append(rec)
            if note.get("event") == "snapped":
                self._cover(sid, new.position)
        if new.role not in (SNAPPED, HYBRID) and before in (SNAPPED, HYBRID):
            self._uncover(sid)
        for mo in out.motions:
            if mo.stop_distance < 0:
                if sid in self.motions:
                    self._finish_motion(sid, "halt")
                    new.position = self.position(sid)
            else:
                self._start_motion(sid, mo.target, mo.stop_distance)
        for name, deadline in out.timers:
            self.set_timer(sid, name, deadline)
        for msg in out.outbound:
            self.transmit(sid, msg)

    def _start_motion(self, sid: int, target: Point, stop: float) -> None:
        if sid in self.motions:
            self._finish_motion(sid, "halt")
        here = self.position(sid)
        m = MotionState(here, Point(*target), self.cfg.speed, stop, self.now)
        self.motion_gen[sid] += 1
        m.gen = self.motion_gen[sid]
        self.states[sid].moving = True
        if m.length > 0:
            self.motions[sid] = m
            self.trace.append({"t": self.now, "kind": "move", "id": sid,
                               "from": [here.x, here.y], "to": [m.end.x, m.end.y],
                               "until": m.arrival})
        else:
            k = self.index[sid]
            self.pos[k] = here
        self.schedule(m.arrival, WAYPOINT, sid, m.gen)

    def _finish_motion(self, sid: int, how: str) -> None:
        m = self.motions.pop(sid, None)
        if m is None:
            return
        p = m.end if how == "arrive" else m.position(self.now)
        travelled = dist(m.origin, p)
        self.distance[sid] += travelled
        self._spend(sid, self.cfg.e_move * travelled)
        k = self.index[sid]
        self.pos[k] = p
        self.states[sid].position = p
        if how == "halt":
            self.motion_gen[sid] += 1
            self.states[sid].moving = False
            self.trace.append({"t": self.now, "kind": "halt", "id": sid, "at": [p.x, p.y]})

    def _cover(self, sid: int, p: Point) -> None:
        if sid in self.covered_by:
            self.coverage.remove(self.covered_by[sid])
        self.covered_by[sid] = p
        self.coverage.add(p)
        if self.coverage_time is None and self.coverage.fraction >= self.cfg.coverage_threshold:
            self.coverage_time = self.now
            self.trace.append({"t": self.now, "kind": "coverage", "fraction": self.coverage.fraction})
            self._schedule_dynamic_failures()

    def _uncover(self, sid: int) -> None:
        p = self.covered_by.pop(sid, None)
        if p is not None:
            self.coverage.remove(p)

    def _schedule_dynamic_failures(self) -> None:
        for f in self.cfg.failures:
            if f.after_coverage is None:
                continue
            victim = f.sensor
            if victim is None:
                pool = sorted(s for s in self.covered_by if self.states[s].role == SNAPPED)
                if not pool:
                    continue
                victim = pool[int(self.rng_fail.integers(len(pool)))]
            self.inject_failure(victim, self.now + f.after_coverage)

    def _fail(self, sid: int) -> None:
        k = self.index[sid]
        if sid in self.motions:
            self._finish_motion(sid, "halt")
        self.alive[k] = False
        self.timers[sid].clear()
        self.motion_gen[sid] += 1
        st = self.states[sid]
        self.trace.append({"t": self.now, "kind": "fail", "id": sid, "role": st.role,
                           "at": [st.position.x, st.position.y]})
        self._uncover(sid)


def run(config: ScenarioConfig, seed: Optional[int] = None) -> Trace:
    """Simulate ``config`` and return the full trace."""
    return Simulator(config, seed).run()


def transmit(sim: Simulator, sender: int, message: Message) -> list[Event]:
    return sim.transmit(sender, message)


def inject_failure(sim: Simulator, sensor: int, time: float) -> Event:
    return sim.inject_failure(sensor, time)
