"""Per-sensor transition function.

``step`` is the single entry point used by the simulator: it takes a sensor
state, one input (a delivered message, a timer expiry, a motion arrival or
the starter instant) and the current time, and returns a ``HandlerOutput``
holding a fresh state plus the side effects the engine must apply.  The
input state is never mutated.
"""

from __future__ import annotations

import math

from ..geometry import (
    EPS_POS,
    Point,
    boundary_entry,
    center_of,
    dist,
    hex_distance,
    lattice_tile,
    neighbors,
    point_in_hex,
    tile_needed,
    tile_of,
)
from .decisions import (
    accepts_exchange,
    claim_wins,
    closest_candidate,
    moving_condition,
    pick_offer_target,
    pick_slave_to_push,
    pick_successor,
)
from .messages import (
    IAS,
    IAYS,
    SIP,
    AckOffer,
    AckSIP,
    AckSubst,
    CardinalityInfo,
    ClaimPosition,
    HoleInfo,
    InfoArrived,
    InfoFree,
    InfoSlave,
    InfoSnapped,
    InfoStopped,
    Message,
    MoveTo,
    MoveToSubst,
    Offer,
    PositionTaken,
    Profile,
    ProfilePacket,
    Retirement,
    Subst,
    SubstArrival,
)
from .state import (
    FREE,
    HYBRID,
    SLAVE,
    SNAPPED,
    STOPPED,
    HandlerOutput,
    NbrInfo,
    SensorState,
    SipTx,
    TriggerRecord,
)

# fraction of the tile side a pushed slave travels past the boundary
_ENTRY_MARGIN = 0.05

# variants a non-snapped sensor can ever react to
_PLAIN_INTEREST = frozenset({
    "IAS", "SIP", "ClaimPosition", "PositionTaken", "IAYS", "MoveTo",
    "AckSubst", "MoveToSubst", "ProfilePacket", "Retirement",
})


# occupant placeholder for a position another sensor is filling
RESERVED = -1


def step(state: SensorState, kind: str, data, now: float) -> HandlerOutput:
    """Apply one input to ``state``.

    kind is one of ``"msg"`` (data: Message), ``"timer"`` (data: timer
    name), ``"arrive"`` (data ignored) or ``"start"`` (data: orientation).
    """
    if kind == "msg" and state.received_any and not _relevant(state, data):
        return HandlerOutput(state)
    s = state.clone()
    out = HandlerOutput(s)
    if kind == "msg":
        s.received_any = True
        s.last_heard[data.sender_id] = now
        _MESSAGE_HANDLERS[data.variant](s, out, data, now)
    elif kind == "timer":
        _on_timer(s, out, data, now)
    elif kind == "arrive":
        s.moving = False
        _on_arrival(s, out, now)
    elif kind == "start":
        _starter(s, out, data, now)
    else:
        raise ValueError(f"unknown input kind {kind!r}")
    return out


def _relevant(s: SensorState, m: Message) -> bool:
    if m.receiver is not None and m.receiver != s.id:
        return False
    if s.role in (SNAPPED, HYBRID):
        return True
    return m.variant in _PLAIN_INTEREST


# ---------------------------------------------------------------- helpers

def _key(s: SensorState):
    """Portion key stamped on outgoing messages."""
    if s.role in (SNAPPED, HYBRID) and s.frame is not None:
        return s.frame.key
    return s.honored.key if s.honored is not None else None


def _emit(s, out, cls, *args, portion=False, **kw):
    kw["portion"] = _key(s) if portion is False else portion
    out.send(cls(s.id, *args, **kw))


def _center(s: SensorState) -> Point:
    return center_of(s.tile, s.frame)


def _tile_at(p, frame):
    try:
        return lattice_tile(p, frame)
    except ValueError:
        return None


def _move(s, out, target, stop=0.0):
    out.move(target, stop)
    s.moving = True


def _clear_snapped(s: SensorState) -> None:
    s.frame = None
    s.tile = None
    s.phase = "none"
    s.slaves = {}
    s.free_set = {}
    s.nbrs = {}
    s.occupied = {}
    s.vp = frozenset()
    s.sips = {}
    s.inbound = {}
    s.offer = None
    s.nbr_ord = {}
    s.triggers = {}
    s.pull = None
    s.exchange = None
    s.advertised = None
    s.pull_deferred = False
    s.pull_gave_up = False
    s.blocked = frozenset()
    s.probed = frozenset()
    s.probe = None
    s.command = None
    s.succession = None
    s.old_owner = None
    s.departed = {}
    s.ord = s.base_ord


def _enslave(s, owner, center, frame):
    """Record the owner; the caller sets the role."""
    s.owner = owner
    s.owner_center = Point(*center)
    s.honored = frame
    s.activity = "idle"
    s.target = None
    s.target_frame = None


def _free(s):
    """Drop ownership and motion intent; the caller sets the role."""
    s.owner = None
    s.owner_center = None
    s.activity = "idle"
    s.target = None


def _role(s, out, role, now):
    if s.role != role:
        out.note(event="role", role=role, prev=s.role)
    s.role = role


# ---------------------------------------------------------------- starter

def _starter(s, out, theta, now):
    from ..geometry import HexFrame

    if s.received_any or s.role != FREE or s.activity != "idle":
        out.note(event="starter_suppressed")
        return
    s.frame = HexFrame(s.position, theta, s.params.r_s, now, s.id)
    s.tile = (0, 0)
    s.honored = None
    _role(s, out, SNAPPED, now)
    s.ord = s.base_ord
    out.note(event="starter")
    _snap_arrived(s, out, now)


# ---------------------------------------------------------------- snap (snapped side)

def _snap_arrived(s, out, now):
    s.phase = "discovery"
    s.occupied = {s.tile: (s.id, None)}
    s.position = _center(s)
    out.note(event="snapped", tile=list(s.tile), frame=s.frame.to_dict(), at=list(s.position))
    _send_ias(s, out)
    out.set_timer("discovery", now + s.params.discovery_timeout)


def _send_ias(s, out):
    _emit(s, out, IAS, _center(s), s.frame.starter_ts, s.frame, s.base_ord)


def _vacancies(s, now) -> frozenset:
    for t, (_, exp) in list(s.occupied.items()):
        if exp is not None and exp <= now:
            del s.occupied[t]
    aoi = s.params.aoi
    return frozenset(
        t for t in neighbors(s.tile)
        if t not in s.occupied and tile_needed(t, s.frame, aoi)
    )


def _learn_snapped(s, out, sid, tile, center, now, vcard=None, ord_=None):
    if tile is None or sid == s.id:
        return
    prev = s.occupied.get(tile)
    if prev is not None and prev[0] != sid:
        s.nbrs.pop(prev[0], None)
    for t, (oid, _) in list(s.occupied.items()):
        if oid == sid and t != tile:
            del s.occupied[t]
    s.occupied[tile] = (sid, None)
    s.free_set.pop(sid, None)
    s.slaves.pop(sid, None)
    if hex_distance(tile, s.tile) == 1:
        old = s.nbrs.get(sid)
        vc = vcard if vcard is not None else (old.vcard if old else 0)
        od = ord_ if ord_ is not None else (old.ord if old else sid)
        if old is None or old.vcard != vc or old.ord != od:
            s.blocked = s.blocked - {sid}
        s.nbrs[sid] = NbrInfo(sid, tile, Point(*center), vc, od)
    tx = s.sips.pop(tile, None)
    if tx is not None:
        out.cancel(f"sip:{tile[0]},{tile[1]}")
        if tx.candidate == sid:
            case = 1 if tx.stage == "ias" else 4
        else:
            case = 2 if tx.stage == "ias" else 4
        out.note(event="sip_outcome", case=case, tile=list(tile), by=sid)


def plan(s, out, now):
    """Main loop of a snapped sensor: fill vacancies, else pull or push."""
    if s.role != SNAPPED or s.phase in ("none", "discovery") or s.moving:
        return
    if s.exchange is not None:
        return
    vp = _vacancies(s, now)
    if vp - s.vp:
        s.pull_gave_up = False
    s.vp = vp
    engaged = {tx.candidate for tx in s.sips.values()}
    for tile in sorted(vp - set(s.sips)):
        target = center_of(tile, s.frame)
        cand = closest_candidate(s.local_set, target, exclude=engaged)
        if cand is None:
            break
        _emit(s, out, SIP, cand, target)
        engaged.add(cand)
        s.sips[tile] = SipTx(tile, cand, "ack")
        out.set_timer(f"sip:{tile[0]},{tile[1]}", now + s.params.ack_sip_timeout)
        out.note(event="sip", tile=list(tile), candidate=cand)
    if s.pull is not None and s.pull[0] not in vp - set(s.sips):
        _end_pull(s, out, now)
    open_ = vp - set(s.sips)
    if open_:
        s.phase = "pull"
        if s.pull is None and not s.sips and not s.pull_gave_up:
            _start_pull(s, out, now)
        _advertise(s, out)
        return
    if s.sips:
        s.phase = "snap"
        return
    s.pull_deferred = False
    s.phase = "push" if s.slaves else "idle"
    _advertise(s, out)
    _plan_push(s, out, now)


def _advertise(s, out, force=False):
    if s.role != SNAPPED:
        return
    vc = s.virtual_card
    if force or s.advertised != vc:
        if s.advertised != vc:
            s.blocked = frozenset()
        s.advertised = vc
        _emit(s, out, CardinalityInfo, vc)


def _candidate_lost(s, cid):
    s.free_set.pop(cid, None)
    s.slaves.pop(cid, None)


def _sip_timeout(s, out, tile, now):
    tx = s.sips.pop(tile, None)
    if tx is None:
        return
    out.note(event="sip_outcome", case=3 if tx.stage == "ias" else 5, tile=list(tile),
             by=tx.candidate)
    _candidate_lost(s, tx.candidate)
    plan(s, out, now)


def _on_ack_sip(s, out, m, now):
    if s.role != SNAPPED:
        return
    for tile, tx in s.sips.items():
        if tx.candidate == m.sender_id and tx.stage == "ack":
            pos = s.local_set.get(m.sender_id)
            travel = dist(pos, center_of(tile, s.frame)) if pos is not None else 2 * s.params.r_s
            s.sips[tile] = SipTx(tile, tx.candidate, "ias", tx.tried)
            out.set_timer(f"sip:{tile[0]},{tile[1]}", now + s.params.ias_timeout(travel))
            _candidate_lost(s, m.sender_id)
            return


def _start_pull(s, out, now):
    p = s.params
    if not s.pull_deferred:
        for n in s.nbrs.values():
            if moving_condition(n.vcard, s.virtual_card, _eff_ord(s, n.id, now), s.ord):
                s.pull_deferred = True
                out.set_timer("pull_wait", now + p.t_out(0))
                return
    hole = min(s.vp - set(s.sips))
    deadline = now + p.t_out(0)
    s.pull = (hole, 0, deadline)
    _recompute_ord(s)
    out.note(event="pull_start", hole=list(hole))
    _emit(s, out, HoleInfo, 0, 0, center_of(hole, s.frame), deadline)
    out.set_timer("pull", deadline)


def _pull_timer(s, out, now):
    if s.pull is None or s.role != SNAPPED:
        return
    hole, h, _ = s.pull
    s.vp = _vacancies(s, now)
    if hole not in s.vp:
        _end_pull(s, out, now)
        plan(s, out, now)
        return
    if h + 1 > s.params.max_hop:
        _end_pull(s, out, now)
        s.pull_gave_up = True
        out.note(event="pull_abandon", hole=list(hole))
        return
    h += 1
    deadline = now + s.params.t_out(h)
    s.pull = (hole, h, deadline)
    _emit(s, out, HoleInfo, h, 0, center_of(hole, s.frame), deadline)
    out.set_timer("pull", deadline)


def _end_pull(s, out, now):
    if s.pull is None:
        return
    out.cancel("pull")
    out.note(event="pull_end", hole=list(s.pull[0]))
    s.pull = None
    _recompute_ord(s)


def _recompute_ord(s):
    if s.pull is not None:
        s.ord = 0
    elif s.triggers:
        s.ord = s.trigger_queue[0].ord
    else:
        s.ord = s.base_ord


def _eff_ord(s, nid, now):
    o = s.nbr_ord.get(nid)
    if o is not None and o[1] > now:
        return o[0]
    n = s.nbrs.get(nid)
    return n.ord if n is not None else nid


# ---------------------------------------------------------------- snap (candidate side)

def _on_sip(s, out, m, now):
    if s.role == SNAPPED:
        return
    if s.role == HYBRID:
        if s.honored is None or m.portion != s.honored.key:
            return
        if s.old_owner is not None and s.old_owner[0] != m.sender_id:
            return
        _hybrid_command(s, out, ("sip", m.sender_id, m.target_coordinates, s.honored), now)
        return
    if s.honored is None or m.portion != s.honored.key or s.activity not in ("idle", "stopped"):
        return
    if s.role == SLAVE and m.sender_id != s.owner:
        return
    out.cancel("iays")
    _emit(s, out, AckSIP, m.sender_id)
    _go_snap(s, out, m.sender_id, m.target_coordinates, s.honored, now)


def _go_snap(s, out, sender, target, frame, now):
    _free(s)
    _role(s, out, FREE, now)
    s.activity = "sip"
    s.target = Point(*target)
    s.target_frame = frame
    s.sip_from = sender
    _move(s, out, s.target, s.params.stop_distance)


def _claim(s, out, now):
    s.activity = "claim"
    s.claim_ts = now
    _emit(s, out, ClaimPosition, s.target, now)
    out.set_timer("claim", now + s.params.claim_timeout)


def _claim_won(s, out, now):
    if s.activity != "claim":
        return
    frame = s.target_frame
    tile = _tile_at(s.target, frame)
    if tile is None:
        _stopped(s, out, now)
        return
    _emit(s, out, PositionTaken, s.target)
    _clear_snapped(s)
    s.frame = frame
    s.tile = tile
    s.honored = None
    s.owner = None
    s.owner_center = None
    _role(s, out, SNAPPED, now)
    s.activity = "to_center"
    _move(s, out, center_of(tile, frame), 0.0)


def _stop_en_route(s, out, now):
    out.halt()
    s.moving = False
    _stopped(s, out, now)


def _stopped(s, out, now):
    _role(s, out, STOPPED, now)
    s.activity = "stopped"
    s.target = None
    _emit(s, out, InfoStopped, s.position)
    out.set_timer("iays", now + s.params.iays_timeout)


def _on_claim(s, out, m, now):
    if s.role == SNAPPED:
        if m.portion != s.frame.key:
            return
        tile = _tile_at(m.coordinates, s.frame)
        if tile is None:
            return
        if tile == s.tile:
            _emit(s, out, PositionTaken, _center(s))
            return
        if tile not in s.occupied or s.occupied[tile][1] is not None:
            exp = now + s.params.ias_timeout(s.params.stop_distance)
            s.occupied[tile] = (m.sender_id, exp)
            out.set_timer(f"claimx:{tile[0]},{tile[1]}", exp)
        _candidate_lost(s, m.sender_id)
        plan(s, out, now)
        return
    if s.role == HYBRID or s.honored is None or m.portion != s.honored.key:
        return
    if s.target is None or dist(m.coordinates, s.target) > EPS_POS:
        return
    if s.activity == "sip":
        out.note(event="claim_conflict", case=1)
        _stop_en_route(s, out, now)
    elif s.activity == "claim":
        if claim_wins(s.claim_ts, s.id, m.timestamp, m.sender_id):
            return
        out.note(event="claim_conflict", case=2)
        out.cancel("claim")
        s.activity = "lost"
        s.winner = m.sender_id
        out.set_timer("lost", now + s.params.loser_timeout)


def _on_taken(s, out, m, now):
    if s.role == SNAPPED:
        if m.portion != s.frame.key or m.sender_id == s.id:
            return
        tile = _tile_at(m.coordinates, s.frame)
        if tile is None or tile == s.tile:
            return
        if tile not in s.occupied or s.occupied[tile][1] is not None:
            exp = now + s.params.ias_timeout(s.params.stop_distance)
            s.occupied[tile] = (m.sender_id, exp)
            out.set_timer(f"claimx:{tile[0]},{tile[1]}", exp)
        _candidate_lost(s, m.sender_id)
        plan(s, out, now)
        return
    if s.role == HYBRID or s.honored is None or m.portion != s.honored.key:
        return
    if s.target is None or dist(m.coordinates, s.target) > EPS_POS:
        return
    if s.activity == "sip":
        out.note(event="claim_conflict", case=1)
        _stop_en_route(s, out, now)
    elif s.activity in ("claim", "lost"):
        out.note(event="claim_conflict", case=3)
        out.cancel("claim")
        out.cancel("lost")
        _enslave(s, m.sender_id, m.coordinates, s.honored)
        _role(s, out, SLAVE, now)


def _on_iays(s, out, m, now):
    if s.role == HYBRID:
        if s.old_owner is None and s.honored is not None and m.portion == s.honored.key:
            s.old_owner = (m.sender_id, Point(*m.coordinates))
        return
    if s.role not in (STOPPED, FREE) or s.activity not in ("stopped", "idle"):
        return
    if s.honored is not None and m.portion != s.honored.key:
        return
    out.cancel("iays")
    frame = s.honored
    _enslave(s, m.sender_id, m.coordinates, frame)
    _role(s, out, SLAVE, now)
    _emit(s, out, InfoSlave, s.position, s.energy, m.sender_id)


def _on_stopped_or_free(s, out, m, now):
    """InfoStopped / InfoFree heard by a snapped or hybrid sensor."""
    sid = m.sender_id
    if sid in s.slaves and (m.portion != _key(s) or m.variant == "InfoFree"):
        s.slaves.pop(sid)
        if s.role == HYBRID:
            _hybrid_check(s, out, now)
            return
    if s.role != SNAPPED or m.portion != s.frame.key:
        return
    if sid in s.slaves:
        return
    if point_in_hex(m.coordinates, _center(s), s.frame):
        # ownership is recorded once the sensor confirms with InfoSlave
        _emit(s, out, IAYS, sid, _center(s))
        s.free_set.pop(sid, None)
    else:
        s.free_set[sid] = Point(*m.coordinates)
    plan(s, out, now)


def _on_info_slave(s, out, m, now):
    sid = m.sender_id
    if s.role not in (SNAPPED, HYBRID):
        return
    if m.owner_id == s.id:
        left = s.departed.get(sid)
        if left is not None and now - left < s.params.push_tx_timeout:
            return  # sent before our MoveTo reached it
        s.free_set.pop(sid, None)
        s.slaves[sid] = (Point(*m.coordinates), m.energy_level)
    else:
        s.free_set.pop(sid, None)
        if s.slaves.pop(sid, None) is not None and s.role == HYBRID:
            _hybrid_check(s, out, now)
            return
    if s.role == SNAPPED:
        plan(s, out, now)


def _send_info_snapped(s, out):
    pending = tuple(center_of(t, s.frame) for t in sorted(s.sips))
    _emit(s, out, InfoSnapped, _center(s), s.virtual_card, s.base_ord, pending)


def _on_info_snapped(s, out, m, now):
    if s.role != SNAPPED or m.portion != s.frame.key:
        return
    tile = _tile_at(m.coordinates, s.frame)
    _learn_snapped(s, out, m.sender_id, tile, m.coordinates, now,
                   m.virtual_cardinality, m.order_value)
    # a neighbour already has a candidate heading there: not ours to fill yet
    exp = now + s.params.ias_timeout(s.params.r_tx)
    for c in m.pending:
        t = _tile_at(c, s.frame)
        if t is None or t == s.tile or hex_distance(t, s.tile) != 1:
            continue
        if t not in s.occupied or s.occupied[t][1] is not None:
            s.occupied[t] = (RESERVED, exp)
            out.set_timer(f"claimx:{t[0]},{t[1]}", exp)
    plan(s, out, now)


# ---------------------------------------------------------------- IAS and merge

def _on_ias(s, out, m, now):
    key = m.frame.key
    if s.role == SNAPPED:
        if s.activity == "to_center":
            return
        if key == s.frame.key:
            tile = _tile_at(m.coordinates, s.frame)
            if tile == s.tile:
                return
            _learn_snapped(s, out, m.sender_id, tile, m.coordinates, now, None, m.order_value)
            _send_info_snapped(s, out)
            plan(s, out, now)
        elif key < s.frame.key:
            _become_hybrid(s, out, m, now)
        elif now - s.reissued > s.params.discovery_timeout:
            # newer portion: re-announce ourselves so it learns of us
            s.reissued = now
            out.note(event="merge", case=2, other=list(key))
            _send_ias(s, out)
        return
    if s.role == HYBRID:
        if key == s.frame.key:
            tile = _tile_at(m.coordinates, s.frame)
            if tile != s.tile:
                _send_info_snapped(s, out)
            return
        if key < s.honored.key and s.command is None:
            s.honored = m.frame
            s.old_owner = None
        if key == s.honored.key:
            _hybrid_advertise(s, out, m.sender_id, m.coordinates, now)
        return
    _localize(s, out, m, now)


def _localize(s, out, m, now):
    key = m.frame.key
    hk = s.honored.key if s.honored is not None else None
    if hk is not None and key > hk:
        return
    if hk is None or key < hk:
        s.occupied = {}
    tile = _tile_at(m.coordinates, m.frame)
    if tile is not None:
        s.occupied[tile] = (m.sender_id, None)
    if s.activity in ("sip", "claim"):
        if key == hk and dist(m.coordinates, s.target) <= EPS_POS:
            if s.activity == "sip":
                _stop_en_route(s, out, now)
            else:
                out.cancel("claim")
                _enslave(s, m.sender_id, m.coordinates, s.honored)
                _role(s, out, SLAVE, now)
        return
    if s.activity == "lost":
        if key == hk and dist(m.coordinates, s.target) <= EPS_POS:
            out.cancel("lost")
            _enslave(s, m.sender_id, m.coordinates, s.honored)
            _role(s, out, SLAVE, now)
            _emit(s, out, InfoSlave, s.position, s.energy, m.sender_id)
        return
    if s.activity not in ("idle", "stopped"):
        return
    older = hk is None or key < hk
    if older and hk is not None:
        out.note(event="merge", case=1 if s.role == SLAVE else 3, other=list(key))
    if s.role == SLAVE and not older:
        if s.owner_center is not None and dist(m.coordinates, s.owner_center) <= EPS_POS:
            # same snap position, possibly a successor of the old owner
            s.owner = m.sender_id
            _emit(s, out, InfoSlave, s.position, s.energy, s.owner)
        return
    s.honored = m.frame
    if point_in_hex(s.position, m.coordinates, m.frame):
        out.cancel("iays")
        _enslave(s, m.sender_id, m.coordinates, m.frame)
        _role(s, out, SLAVE, now)
        _emit(s, out, InfoSlave, s.position, s.energy, m.sender_id)
    else:
        if s.role == SLAVE:
            _free(s)
            _role(s, out, FREE, now)
        _emit(s, out, InfoFree, s.position)


def _become_hybrid(s, out, m, now):
    out.note(event="merge", case=1, other=list(m.frame.key))
    for tile in s.sips:
        out.cancel(f"sip:{tile[0]},{tile[1]}")
    s.sips = {}
    _end_pull(s, out, now)
    if s.offer is not None:
        out.cancel("offer")
        s.offer = None
    for tile in s.triggers:
        out.cancel(f"trig:{tile[0]},{tile[1]}")
    s.triggers = {}
    s.ord = s.base_ord
    _role(s, out, HYBRID, now)
    s.honored = m.frame
    s.old_owner = None
    _hybrid_advertise(s, out, m.sender_id, m.coordinates, now)
    if not _hybrid_check(s, out, now):
        out.set_timer("hybrid", now + s.params.hybrid_grace)


def _hybrid_advertise(s, out, sid, center, now):
    hk = s.honored.key
    if s.old_owner is None and point_in_hex(s.position, center, s.honored):
        s.old_owner = (sid, Point(*center))
    if s.old_owner is None:
        _emit(s, out, InfoFree, s.position, portion=hk)
    elif s.old_owner[0] == sid:
        _emit(s, out, InfoSlave, s.position, s.energy, sid, portion=hk)


def _hybrid_check(s, out, now) -> bool:
    """Retire a hybrid that has nothing left to hand over."""
    if s.role != HYBRID or s.command is not None or s.slaves or s.inbound:
        return False
    _retire(s, out, now)
    return True


def _hybrid_command(s, out, cmd, now):
    if s.command is not None:
        return
    if cmd[0] == "sip":
        _emit(s, out, AckSIP, cmd[1], portion=s.honored.key)
    s.command = cmd
    out.cancel("hybrid")
    _succession_next(s, out, now, frozenset())


def _profile(s, exclude=None) -> Profile:
    return Profile(
        frame=s.frame,
        tile=s.tile,
        base_ord=s.base_ord,
        triggers=tuple(s.trigger_queue),
        neighbors=tuple(sorted(s.nbrs.values(), key=lambda n: n.id)),
        slaves=tuple(sorted((k, v[0], v[1]) for k, v in s.slaves.items() if k != exclude)),
        honored=s.honored if s.role == HYBRID else None,
        old_owner=s.old_owner if s.role == HYBRID else None,
    )


def _succession_next(s, out, now, tried):
    cand = pick_successor(s.slaves, _center(s), s.params.e_move, exclude=tried)
    if cand is None:
        _retire(s, out, now)
        return
    s.succession = (cand, tried | {cand})
    _emit(s, out, MoveToSubst, cand, s.ord, tuple(s.trigger_queue), _profile(s, exclude=cand))
    out.set_timer("succession", now + s.params.succession_timeout)


def _succession_timeout(s, out, now):
    if s.succession is None:
        return
    cand, tried = s.succession
    s.slaves.pop(cand, None)
    s.succession = None
    _succession_next(s, out, now, tried)


def _retire(s, out, now):
    """Leave the snap position of a newer portion and go on as a plain sensor."""
    center = _center(s)
    older = s.honored
    _emit(s, out, Retirement, center, older)
    out.note(event="retire", tile=list(s.tile))
    out.cancel("hybrid")
    out.cancel("succession")
    out.cancel("discovery")
    out.cancel("offer")
    for tid in s.inbound:
        out.cancel(f"ptx:{tid}")
    cmd = s.command
    owner = s.old_owner
    _clear_snapped(s)
    s.honored = older
    if cmd is None:
        if owner is not None:
            _enslave(s, owner[0], owner[1], older)
            _role(s, out, SLAVE, now)
        else:
            _free(s)
            _role(s, out, FREE, now)
    elif cmd[0] == "sip":
        s.honored = cmd[3]
        _go_snap(s, out, cmd[1], cmd[2], cmd[3], now)
    else:
        _, dest_center, dest_id, tid = cmd
        _free(s)
        _role(s, out, SLAVE, now)
        _depart(s, out, dest_center, dest_id, tid, older, now)


def _on_retirement(s, out, m, now):
    if s.role == SNAPPED:
        if m.portion != s.frame.key:
            return
        tile = _tile_at(m.hole_coordinates, s.frame)
        if tile is not None and s.occupied.get(tile, (None,))[0] == m.sender_id:
            del s.occupied[tile]
        s.nbrs.pop(m.sender_id, None)
        s.pull_gave_up = False
        plan(s, out, now)
        return
    if s.role == HYBRID:
        return
    older = m.older_frame
    switch = older is not None and (s.honored is None or older.key < s.honored.key)
    if s.role == SLAVE and s.owner == m.sender_id and s.activity == "idle":
        _free(s)
        _role(s, out, FREE, now)
        if switch:
            s.honored = older
        _emit(s, out, InfoFree, s.position)
    elif switch and s.activity == "idle" and s.role == FREE and s.honored is not None \
            and m.portion == s.honored.key:
        s.honored = older
        _emit(s, out, InfoFree, s.position)


def _hybrid_grace(s, out, now):
    if s.role == HYBRID and s.command is None:
        _retire(s, out, now)


# ---------------------------------------------------------------- push

def _plan_push(s, out, now):
    if (s.role != SNAPPED or s.phase not in ("push", "idle") or s.moving
            or s.offer is not None or not s.slaves or s.exchange is not None):
        return
    hole_distance = None
    if s.triggers:
        head = s.trigger_queue[0].hole
        hole_distance = lambda t: hex_distance(t, head)  # noqa: E731
    target = pick_offer_target(
        s.nbrs.values(), s.virtual_card, s.ord, lambda i: _eff_ord(s, i, now),
        _center(s), hole_distance=hole_distance, blocked=s.blocked,
    )
    if target is None:
        return
    tid = f"{s.id}.{s.tx_seq}"
    s.tx_seq += 1
    s.offer = (target, tid)
    _emit(s, out, Offer, target, s.virtual_card, tid, s.ord)
    out.set_timer("offer", now + s.params.offer_timeout)


def _on_card_info(s, out, m, now):
    if s.role != SNAPPED or m.portion != s.frame.key:
        return
    n = s.nbrs.get(m.sender_id)
    if n is None:
        return
    if n.vcard != m.virtual_cardinality:
        s.blocked = s.blocked - {m.sender_id}
        s.probed = s.probed - {m.sender_id}
        s.nbrs[m.sender_id] = NbrInfo(n.id, n.tile, n.center, m.virtual_cardinality, n.ord)
    plan(s, out, now)


def _on_offer(s, out, m, now):
    if s.role != SNAPPED or m.portion != s.frame.key:
        return
    n = s.nbrs.get(m.sender_id)
    if n is not None and n.vcard != m.virtual_cardinality:
        s.nbrs[m.sender_id] = NbrInfo(n.id, n.tile, n.center, m.virtual_cardinality, n.ord)
    ord_p = m.order_value if m.order_value >= 0 else _eff_ord(s, m.sender_id, now)
    ok = s.phase not in ("none", "discovery") and moving_condition(
        m.virtual_cardinality, s.virtual_card, ord_p, s.ord)
    out.note(event="offer", accepted=ok, tid=m.transaction_id, offerer=m.sender_id,
             card_p=m.virtual_cardinality, card_q=s.virtual_card, ord_p=ord_p, ord_q=s.ord)
    if not ok:
        return
    _emit(s, out, AckOffer, m.sender_id, m.transaction_id)
    s.inbound[m.transaction_id] = m.sender_id
    out.set_timer(f"ptx:{m.transaction_id}", now + s.params.push_tx_timeout)
    _advertise(s, out, force=True)


def _on_ack_offer(s, out, m, now):
    if s.role != SNAPPED or s.offer is None:
        return
    target, tid = s.offer
    if m.sender_id != target or (m.transaction_id and m.transaction_id != tid):
        return
    out.cancel("offer")
    s.offer = None
    _dispatch(s, out, target, tid, now)
    plan(s, out, now)


def _dispatch(s, out, dest_id, tid, now):
    n = s.nbrs.get(dest_id)
    if n is None:
        return
    sid = pick_slave_to_push(s.slaves, n.center, s.frame, s.params.e_move)
    if sid is None:
        return
    _emit(s, out, MoveTo, sid, n.center, dest_id, tid)
    s.slaves.pop(sid)
    s.departed[sid] = now
    out.note(event="push", slave=sid, to=dest_id, tid=tid)


def _offer_timeout(s, out, now):
    if s.offer is None:
        return
    target, _ = s.offer
    s.offer = None
    s.blocked = s.blocked | {target}
    # heard after the offer went out: alive, just declined
    alive = s.last_heard.get(target, -math.inf) >= now - s.params.offer_timeout
    if not alive and target not in s.probed and s.probe is None:
        s.probed = s.probed | {target}
        s.probe = (now, frozenset({target}))
        _send_ias(s, out)
        out.set_timer("probe", now + s.params.iays_timeout + s.params.offer_timeout)
    plan(s, out, now)


def _probe_timeout(s, out, now):
    if s.probe is None:
        return
    start, ids = s.probe
    s.probe = None
    for q in ids:
        if s.last_heard.get(q, -math.inf) < start:
            n = s.nbrs.pop(q, None)
            for t, (oid, _) in list(s.occupied.items()):
                if oid == q:
                    del s.occupied[t]
            out.note(event="neighbor_lost", id=q, tile=list(n.tile) if n else None)
            s.pull_gave_up = False
    plan(s, out, now)


def _ptx_timeout(s, out, tid, now):
    if s.inbound.pop(tid, None) is None:
        return
    out.note(event="push_timeout", tid=tid)
    plan(s, out, now)
    _advertise(s, out)


def _on_info_arrived(s, out, m, now):
    if s.role not in (SNAPPED, HYBRID):
        return
    if s.inbound.pop(m.transaction_id, None) is not None:
        out.cancel(f"ptx:{m.transaction_id}")
    s.free_set.pop(m.sender_id, None)
    s.departed.pop(m.sender_id, None)
    s.slaves[m.sender_id] = (Point(*m.coordinates), m.energy_level)
    s.pull_gave_up = False
    if s.role == SNAPPED:
        plan(s, out, now)


def _on_move_to(s, out, m, now):
    if s.role == HYBRID:
        if s.old_owner is not None and s.old_owner[0] == m.sender_id:
            _hybrid_command(s, out, ("move", m.destination_coordinates,
                                     m.destination_snapped_id, m.transaction_id), now)
        return
    if s.role != SLAVE or s.owner != m.sender_id or s.activity != "idle":
        return
    _depart(s, out, m.destination_coordinates, m.destination_snapped_id,
            m.transaction_id, s.honored, now)


def _depart(s, out, dest_center, dest_id, tid, frame, now):
    """Travel just inside the destination hexagon."""
    dest_center = Point(*dest_center)
    s.owner = None
    s.owner_center = None
    s.activity = "push"
    s.push_dest = (dest_center, dest_id, tid, frame)
    s.subst_for = None
    total = dist(s.position, dest_center)
    if point_in_hex(s.position, dest_center, frame):
        stop = total
    else:
        entry = boundary_entry(s.position, dest_center, frame)
        stop = max(0.0, entry - _ENTRY_MARGIN * frame.side)
    _move(s, out, dest_center, stop)
    if s.params.role_exchange and total > EPS_POS:
        _propose_exchange(s, out, dest_center, dest_id, tid, frame, total - stop, now)


def _propose_exchange(s, out, dest_center, dest_id, tid, frame, length, now):
    start_tile = tile_of(s.position, frame)
    dest_tile = tile_of(dest_center, frame)
    ux = (dest_center.x - s.position.x) / dist(s.position, dest_center)
    uy = (dest_center.y - s.position.y) / dist(s.position, dest_center)
    n = max(2, int(length / (0.1 * frame.side)))
    for i in range(1, n):
        d = length * i / n
        t = tile_of((s.position.x + ux * d, s.position.y + uy * d), frame)
        if t in (start_tile, dest_tile):
            continue
        occ = s.occupied.get(t)
        if occ is None or occ[1] is not None:
            continue
        s.subst_for = occ[0]
        _emit(s, out, Subst, occ[0], s.energy, dest_center, dest_id, tid)
        out.set_timer("subst", now + s.params.subst_timeout)
        return


def _on_subst(s, out, m, now):
    if s.role != SNAPPED or m.portion != s.frame.key:
        return
    idle = (s.phase in ("push", "idle") and s.offer is None and not s.inbound
            and not s.sips and s.pull is None and s.exchange is None and not s.moving)
    p = s.params
    if not idle or not accepts_exchange(m.energy_level, s.energy, p.battery, p.subst_hysteresis):
        return
    _emit(s, out, AckSubst, m.sender_id)
    s.exchange = (m.sender_id, (Point(*m.destination_coordinates),
                                m.destination_snapped_id, m.transaction_id))
    out.set_timer("exchange", now + p.succession_timeout)


def _on_ack_subst(s, out, m, now):
    if s.activity != "push" or s.subst_for != m.sender_id:
        return
    out.cancel("subst")
    occ = [t for t, (oid, _) in s.occupied.items() if oid == m.sender_id]
    if not occ:
        return
    out.halt()
    s.activity = "subst"
    s.target = center_of(occ[0], s.push_dest[3])
    _move(s, out, s.target, 0.0)


def _on_subst_arrival(s, out, m, now):
    if s.role == HYBRID:
        if s.succession is not None and s.succession[0] == m.sender_id:
            out.cancel("succession")
            s.slaves.pop(m.sender_id, None)
            s.succession = None
            _retire(s, out, now)
        return
    if s.role != SNAPPED or s.exchange is None or s.exchange[0] != m.sender_id:
        return
    out.cancel("exchange")
    dest_center, dest_id, tid = s.exchange[1]
    _emit(s, out, ProfilePacket, m.sender_id, s.ord, tuple(s.trigger_queue), _profile(s))
    out.note(event="exchange", successor=m.sender_id, tile=list(s.tile))
    frame = s.frame
    for t in list(s.triggers):
        out.cancel(f"trig:{t[0]},{t[1]}")
    out.cancel("discovery")
    _clear_snapped(s)
    _role(s, out, SLAVE, now)
    s.honored = frame
    _depart(s, out, dest_center, dest_id, tid, frame, now)


def _exchange_timeout(s, out, now):
    if s.exchange is None:
        return
    s.exchange = None
    plan(s, out, now)


def _on_profile(s, out, m, now):
    if s.activity != "subst_wait" or s.subst_for != m.sender_id:
        return
    _adopt(s, out, m.order_value, m.priority_queue, m.neighborhood_information, now)


def _on_move_to_subst(s, out, m, now):
    if s.role != SLAVE or s.owner != m.sender_id or s.activity != "idle":
        return
    s.activity = "subst"
    s.subst_for = m.sender_id
    s.profile = m
    s.target = s.owner_center
    _move(s, out, s.owner_center, 0.0)


def _adopt(s, out, order_value, queue, prof: Profile, now):
    """Take over a snap position described by ``prof``."""
    s.activity = "idle"
    s.subst_for = None
    s.profile = None
    s.target = None
    s.push_dest = None
    _clear_snapped(s)
    s.frame = prof.frame
    s.tile = tuple(prof.tile)
    s.position = center_of(s.tile, s.frame)
    s.base_ord = prof.base_ord
    s.owner = None
    s.owner_center = None
    for n in prof.neighbors:
        s.nbrs[n.id] = n
        s.occupied[n.tile] = (n.id, None)
    s.occupied[s.tile] = (s.id, None)
    for sid, pos, energy in prof.slaves:
        s.slaves[sid] = (pos, energy)
    for rec in queue:
        if rec.deadline > now:
            s.triggers[rec.hole] = rec
            out.set_timer(f"trig:{rec.hole[0]},{rec.hole[1]}", rec.deadline)
    _recompute_ord(s)
    out.note(event="takeover", tile=list(s.tile), order_value=order_value)
    if prof.honored is not None:
        s.honored = prof.honored
        s.old_owner = prof.old_owner
        _role(s, out, HYBRID, now)
        s.phase = "idle"
        out.note(event="snapped", tile=list(s.tile), frame=s.frame.to_dict(),
                 at=list(s.position), hybrid=True)
        if s.old_owner is not None:
            _emit(s, out, InfoSlave, s.position, s.energy, s.old_owner[0], portion=s.honored.key)
        else:
            _emit(s, out, InfoFree, s.position, portion=s.honored.key)
        if not _hybrid_check(s, out, now):
            out.set_timer("hybrid", now + s.params.hybrid_grace)
        return
    s.honored = None
    _role(s, out, SNAPPED, now)
    out.note(event="snapped", tile=list(s.tile), frame=s.frame.to_dict(), at=list(s.position))
    s.phase = "discovery"
    _send_ias(s, out)
    out.set_timer("discovery", now + s.params.discovery_timeout)


def _subst_timeout(s, out, now):
    s.subst_for = None if s.activity == "push" else s.subst_for


# ---------------------------------------------------------------- pull

def _on_holeinfo(s, out, m, now):
    if s.role != SNAPPED or m.portion != s.frame.key or m.hop_counter < 0:
        return
    sender = m.sender_id
    s.nbr_ord[sender] = (m.order_value, m.timeout)
    out.set_timer(f"nord:{sender}", m.timeout)
    s.blocked = s.blocked - {sender}
    hole = _tile_at(m.hole_coordinates, s.frame)
    if hole is None or hole == s.tile:
        return
    if (s.pull is not None and s.pull[0] == hole) or m.timeout <= now:
        plan(s, out, now)
        return
    new_ord = m.order_value + 1
    rec = s.triggers.get(hole)
    if rec is not None and not (new_ord < rec.ord or (new_ord == rec.ord and m.hop_counter > rec.h)):
        plan(s, out, now)
        return
    s.triggers[hole] = TriggerRecord(hole, new_ord, m.hop_counter, m.timeout,
                                     hex_distance(s.tile, hole))
    out.set_timer(f"trig:{hole[0]},{hole[1]}", m.timeout)
    _recompute_ord(s)
    out.note(event="trigger", hole=list(hole), ord=new_ord, h=m.hop_counter, tile=list(s.tile),
             at=list(_center(s)), hole_at=list(center_of(hole, s.frame)))
    if m.hop_counter > 0:
        _emit(s, out, HoleInfo, m.hop_counter - 1, new_ord, m.hole_coordinates, m.timeout)
    plan(s, out, now)


def _trigger_expired(s, out, hole, now):
    rec = s.triggers.get(hole)
    if rec is None or rec.deadline > now:
        return
    del s.triggers[hole]
    _recompute_ord(s)
    plan(s, out, now)


# ---------------------------------------------------------------- arrivals and timers

def _on_arrival(s, out, now):
    act = s.activity
    if act == "sip":
        _claim(s, out, now)
    elif act == "to_center":
        s.activity = "idle"
        _snap_arrived(s, out, now)
    elif act == "push":
        dest_center, dest_id, tid, frame = s.push_dest
        out.cancel("subst")
        s.subst_for = None
        s.push_dest = None
        _emit(s, out, InfoArrived, dest_id, tid, s.energy, s.position)
        _enslave(s, dest_id, dest_center, frame)
        _role(s, out, SLAVE, now)
    elif act == "subst":
        _emit(s, out, SubstArrival, s.subst_for)
        if s.profile is not None:
            m = s.profile
            _adopt(s, out, m.order_value, m.priority_queue, m.neighborhood_information, now)
        else:
            s.activity = "subst_wait"
            out.set_timer("subst_wait", now + 4 * s.params.t_msg)


def _subst_wait_timeout(s, out, now):
    if s.activity != "subst_wait":
        return
    # the snapped sensor left without a profile; stay here as a plain sensor
    s.subst_for = None
    s.push_dest = None
    _free(s)
    _role(s, out, FREE, now)
    _stopped(s, out, now)


def _parse_tile(txt):
    a, b = txt.split(",")
    return int(a), int(b)


def _on_timer(s, out, name, now):
    head, _, arg = name.partition(":")
    if head == "discovery":
        if s.role == SNAPPED and s.phase == "discovery":
            s.phase = "snap"
            plan(s, out, now)
    elif head == "sip":
        if s.role == SNAPPED:
            _sip_timeout(s, out, _parse_tile(arg), now)
    elif head == "claimx":
        if s.role == SNAPPED:
            plan(s, out, now)
    elif head == "claim":
        _claim_won(s, out, now)
    elif head == "lost":
        if s.activity == "lost":
            _stopped(s, out, now)
    elif head == "iays":
        if s.role == STOPPED:
            _free(s)
            _role(s, out, FREE, now)
    elif head == "pull_wait":
        if s.role == SNAPPED:
            plan(s, out, now)
    elif head == "pull":
        _pull_timer(s, out, now)
    elif head == "trig":
        if s.role == SNAPPED:
            _trigger_expired(s, out, _parse_tile(arg), now)
    elif head == "nord":
        if s.role == SNAPPED:
            plan(s, out, now)
    elif head == "offer":
        if s.role == SNAPPED:
            _offer_timeout(s, out, now)
    elif head == "probe":
        if s.role == SNAPPED:
            _probe_timeout(s, out, now)
    elif head == "ptx":
        if s.role in (SNAPPED, HYBRID):
            _ptx_timeout(s, out, arg, now)
            if s.role == HYBRID:
                _hybrid_check(s, out, now)
    elif head == "subst":
        _subst_timeout(s, out, now)
    elif head == "subst_wait":
        _subst_wait_timeout(s, out, now)
    elif head == "exchange":
        if s.role == SNAPPED:
            _exchange_timeout(s, out, now)
    elif head == "succession":
        if s.role == HYBRID:
            _succession_timeout(s, out, now)
    elif head == "hybrid":
        _hybrid_grace(s, out, now)
    else:
        raise ValueError(f"unknown timer {name!r}")


_MESSAGE_HANDLERS = {
    "IAS": _on_ias,
    "InfoSnapped": _on_info_snapped,
    "InfoSlave": _on_info_slave,
    "InfoFree": _on_stopped_or_free,
    "InfoStopped": _on_stopped_or_free,
    "SIP": _on_sip,
    "AckSIP": _on_ack_sip,
    "ClaimPosition": _on_claim,
    "PositionTaken": _on_taken,
    "IAYS": _on_iays,
    "CardinalityInfo": _on_card_info,
    "Offer": _on_offer,
    "AckOffer": _on_ack_offer,
    "MoveTo": _on_move_to,
    "InfoArrived": _on_info_arrived,
    "HoleInfo": _on_holeinfo,
    "Subst": _on_subst,
    "AckSubst": _on_ack_subst,
    "SubstArrival": _on_subst_arrival,
    "ProfilePacket": _on_profile,
    "MoveToSubst": _on_move_to_subst,
    "Retirement": _on_retirement,
}
