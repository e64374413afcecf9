"""Per-sensor protocol state and the shared protocol parameters."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Optional

from ..geometry import SQRT3, Axial, HexFrame, Point, Polygon
from .messages import Message

FREE = "free"
SLAVE = "slave"
SNAPPED = "snapped"
STOPPED = "stopped-pending"
HYBRID = "hybrid"
DEAD = "dead"

ROLES = (FREE, SLAVE, SNAPPED, STOPPED, HYBRID)


@dataclass(frozen=True)
class ProtocolParams:
    """Radio, motion, energy and timeout parameters shared by every sensor.

    Every timeout scales with ``t_msg`` (one-hop 99th percentile latency)
    or with motion time; none is a hardcoded number of seconds.
    """

    aoi: Polygon
    r_s: float = 5.0
    r_tx: float = 11.0
    speed: float = 1.0
    t_msg: float = 0.015
    e_move: float = 1.0
    e_tx: float = 0.01
    e_rx: float = 0.005
    battery: float = 1e4
    subst_hysteresis: float = 0.05
    max_hop: int = 16
    role_exchange: bool = True

    @property
    def stop_distance(self) -> float:
        return SQRT3 * self.r_s / 2

    @property
    def discovery_timeout(self) -> float:
        return 2 * self.t_msg

    @property
    def ack_sip_timeout(self) -> float:
        return 2 * self.t_msg

    def ias_timeout(self, distance: float) -> float:
        # travel + contention + a hybrid candidate's succession allowance
        return (distance + 2 * self.r_s) / self.speed + self.claim_timeout + 4 * self.t_msg

    @property
    def claim_timeout(self) -> float:
        return 4 * self.t_msg

    @property
    def iays_timeout(self) -> float:
        return 2 * self.t_msg

    @property
    def offer_timeout(self) -> float:
        return 4 * self.t_msg

    @property
    def push_tx_timeout(self) -> float:
        return 2 * SQRT3 * self.r_s / self.speed + 4 * self.t_msg

    @property
    def subst_timeout(self) -> float:
        return 2 * self.t_msg

    @property
    def succession_timeout(self) -> float:
        return 2 * self.r_s / self.speed + 4 * self.t_msg

    @property
    def loser_timeout(self) -> float:
        return self.claim_timeout + self.stop_distance / self.speed + 4 * self.t_msg

    @property
    def hybrid_grace(self) -> float:
        return 2 * self.t_out(0)

    def t_out(self, h: int) -> float:
        return (h + 1) * 2 * self.r_s / self.speed


@dataclass(frozen=True)
class NbrInfo:
    id: int
    tile: Axial
    center: Point
    vcard: int
    ord: int


@dataclass(frozen=True)
class TriggerRecord:
    hole: Axial
    ord: int
    h: int
    deadline: float
    distance: int


@dataclass(frozen=True)
class SipTx:
    tile: Axial
    candidate: int
    stage: str  # "ack" | "ias"
    tried: frozenset = frozenset()


@dataclass(frozen=True)
class Motion:
    target: Point
    stop_distance: float = 0.0


HALT = Motion(Point(math.nan, math.nan), -1.0)


@dataclass
class SensorState:
    id: int
    position: Point
    energy: float
    params: ProtocolParams
    role: str = FREE
    ord: int = 0
    base_ord: int = 0
    received_any: bool = False
    moving: bool = False

    # tiling membership
    frame: Optional[HexFrame] = None
    tile: Optional[Axial] = None
    honored: Optional[HexFrame] = None
    owner: Optional[int] = None
    owner_center: Optional[Point] = None

    # non-snapped activity: idle | sip | claim | lost | to_center | push | subst | stopped
    activity: str = "idle"
    target: Optional[Point] = None
    target_frame: Optional[HexFrame] = None
    sip_from: Optional[int] = None
    claim_ts: Optional[float] = None
    winner: Optional[int] = None
    push_dest: Optional[tuple] = None  # (center, snapped id, tid, frame)
    subst_for: Optional[int] = None
    profile: Optional[object] = None

    # snapped-side knowledge
    phase: str = "none"  # discovery | snap | push | pull | idle
    slaves: dict = field(default_factory=dict)      # id -> (Point, energy)
    free_set: dict = field(default_factory=dict)    # id -> Point
    nbrs: dict = field(default_factory=dict)        # id -> NbrInfo
    occupied: dict = field(default_factory=dict)    # tile -> (sensor id, claim expiry | None)
    vp: frozenset = frozenset()
    sips: dict = field(default_factory=dict)        # tile -> SipTx
    inbound: dict = field(default_factory=dict)     # tid -> offerer id
    offer: Optional[tuple] = None                   # (receiver, tid)
    tx_seq: int = 0
    nbr_ord: dict = field(default_factory=dict)     # id -> (ord, expiry)
    triggers: dict = field(default_factory=dict)    # hole tile -> TriggerRecord
    pull: Optional[tuple] = None                    # (hole tile, h, deadline)
    subst_pending: dict = field(default_factory=dict)  # traveller id -> destination
    exchange: Optional[tuple] = None                # (traveller id, destination)

    advertised: Optional[int] = None
    pull_deferred: bool = False
    blocked: frozenset = frozenset()               # neighbours not to offer to
    probed: frozenset = frozenset()
    last_heard: dict = field(default_factory=dict)  # id -> time
    probe: Optional[tuple] = None                   # (start, frozenset of ids)
    reissued: float = -1.0
    pull_gave_up: bool = False
    departed: dict = field(default_factory=dict)    # dispatched slave id -> dispatch time

    # hybrid
    old_owner: Optional[tuple] = None               # (id, center) in the honoured portion
    command: Optional[tuple] = None
    succession: Optional[tuple] = None              # (candidate id, tried)

    @property
    def real_card(self) -> int:
        return len(self.slaves)

    @property
    def virtual_card(self) -> int:
        return len(self.slaves) + len(self.inbound)

    @property
    def local_set(self) -> dict:
        out = dict(self.free_set)
        out.update({k: v[0] for k, v in self.slaves.items()})
        return out

    @property
    def trigger_queue(self) -> list[TriggerRecord]:
        return sorted(self.triggers.values(), key=lambda r: (r.distance, r.ord, r.hole))

    @property
    def portion(self):
        f = self.honored or self.frame
        return f.key if f else None

    def clone(self) -> "SensorState":
        c = copy.copy(self)
        for name in ("slaves", "free_set", "nbrs", "occupied", "sips", "inbound",
                     "nbr_ord", "triggers", "subst_pending", "last_heard", "departed"):
            setattr(c, name, dict(getattr(c, name)))
        return c


@dataclass
class HandlerOutput:
    state: SensorState
    outbound: list[Message] = field(default_factory=list)
    motions: list[Motion] = field(default_factory=list)
    timers: list[tuple[str, Optional[float]]] = field(default_factory=list)
    notes: list[dict] = field(default_factory=list)

    def send(self, msg: Message) -> None:
        self.outbound.append(msg)

    def set_timer(self, name: str, deadline: float) -> None:
        self.timers.append((name, deadline))

    def cancel(self, name: str) -> None:
        self.timers.append((name, None))

    def move(self, target, stop_distance: float = 0.0) -> None:
        self.motions.append(Motion(Point(*target), stop_distance))

    def halt(self) -> None:
        self.motions.append(HALT)

    def note(self, **kw) -> None:
        self.notes.append(kw)
