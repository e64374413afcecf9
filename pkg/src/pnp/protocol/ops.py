"""Named entry points for individual protocol activities.

Each function is a pure wrapper around the same internals ``step`` uses:
the input state is cloned, the activity is applied to the clone and the
result comes back as a ``HandlerOutput``.  They make single activities easy
to drive from tests and tools without routing through the dispatcher.
"""

from __future__ import annotations

from . import handlers as _h
from .messages import IAS, SIP, HoleInfo, Message, MoveTo, MoveToSubst, Offer
from .state import HandlerOutput, SensorState, SipTx


def _run(state: SensorState, fn, *args) -> HandlerOutput:
    s = state.clone()
    out = HandlerOutput(s)
    fn(s, out, *args)
    return out


def starter_fire(state: SensorState, now: float, theta: float = 0.0) -> HandlerOutput:
    return _h.step(state, "start", theta, now)


def handle_ias(state: SensorState, msg: IAS, now: float) -> HandlerOutput:
    return _h.step(state, "msg", msg, now)


def handle_merge(state: SensorState, msg: IAS, now: float) -> HandlerOutput:
    """IAS from a foreign portion; same routing as any IAS."""
    own = state.frame if state.frame is not None else state.honored
    if own is not None and own.key == msg.frame.key:
        raise ValueError("IAS belongs to the receiver's own portion")
    return _h.step(state, "msg", msg, now)


def plan_snaps(state: SensorState, now: float) -> HandlerOutput:
    """Run the snapped sensor's planning loop (snap, then pull or push)."""
    return _run(state, _h.plan, now)


def handle_sip(state: SensorState, msg: SIP, now: float) -> HandlerOutput:
    return _h.step(state, "msg", msg, now)


def resolve_sip_outcome(state: SensorState, transaction: SipTx, observed: dict,
                        now: float = 0.0) -> HandlerOutput:
    """Apply what was observed for an open SIP transaction.

    ``observed`` may hold ``ias_from`` (ID of the sensor announcing itself
    at the position, with optional ``ias_center``) and ``timeout`` (True
    when the transaction's deadline expired first).
    """
    def apply(s, out):
        s.sips[transaction.tile] = transaction
        sender = observed.get("ias_from")
        if sender is not None:
            center = observed.get("ias_center") or _h.center_of(transaction.tile, s.frame)
            _h._learn_snapped(s, out, sender, transaction.tile, center, now)
            _h.plan(s, out, now)
        elif observed.get("timeout"):
            _h._sip_timeout(s, out, transaction.tile, now)
    return _run(state, apply)


def claim_and_take(state: SensorState, now: float) -> HandlerOutput:
    """The candidate reached its stop distance: claim the position."""
    return _h.step(state, "arrive", None, now)


def resolve_claim(state: SensorState, event: str, now: float,
                  msg: Message | None = None) -> HandlerOutput:
    """Route one contention event.

    ``event`` is ``claim-before-arrival`` or ``claim-after-arrival`` (msg:
    the competing ClaimPosition), ``taken-after-claim`` (msg:
    PositionTaken) or ``contention-timeout``.
    """
    if event == "contention-timeout":
        return _h.step(state, "timer", "claim", now)
    if event not in ("claim-before-arrival", "claim-after-arrival", "taken-after-claim"):
        raise ValueError(f"unknown claim event {event!r}")
    if msg is None:
        raise ValueError("claim events need the triggering message")
    return _h.step(state, "msg", msg, now)


def plan_push(state: SensorState, now: float) -> HandlerOutput:
    return _run(state, _h._plan_push, now)


def handle_offer(state: SensorState, msg: Offer, now: float) -> HandlerOutput:
    return _h.step(state, "msg", msg, now)


def dispatch_pushed_slave(state: SensorState, transaction: tuple, now: float) -> HandlerOutput:
    """Send the best slave toward ``transaction = (destination id, tid)``."""
    def apply(s, out):
        _h._dispatch(s, out, transaction[0], transaction[1], now)
        _h._advertise(s, out)
    return _run(state, apply)


def slave_move(state: SensorState, msg: MoveTo | MoveToSubst, now: float) -> HandlerOutput:
    return _h.step(state, "msg", msg, now)


def role_exchange(state: SensorState, msg: Message, now: float) -> HandlerOutput:
    if msg.variant not in ("Subst", "AckSubst", "SubstArrival", "ProfilePacket"):
        raise ValueError(f"{msg.variant} is not part of a role exchange")
    return _h.step(state, "msg", msg, now)


def start_pull(state: SensorState, now: float) -> HandlerOutput:
    return _run(state, _h._start_pull, now)


def handle_holeinfo(state: SensorState, msg: HoleInfo, now: float) -> HandlerOutput:
    return _h.step(state, "msg", msg, now)
