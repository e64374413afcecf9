"""Per-sensor deployment protocol: messages, state, decisions and handlers."""

from .decisions import (
    accepts_exchange,
    claim_wins,
    closest_candidate,
    moving_condition,
    pick_offer_target,
    pick_slave_to_push,
    pick_successor,
    pull_timeout,
)
from .handlers import step
from .messages import VARIANTS, Message, Profile, wire_record
from .ops import (
    claim_and_take,
    dispatch_pushed_slave,
    handle_holeinfo,
    handle_ias,
    handle_merge,
    handle_offer,
    handle_sip,
    plan_push,
    plan_snaps,
    resolve_claim,
    resolve_sip_outcome,
    role_exchange,
    slave_move,
    start_pull,
    starter_fire,
)
from .state import (
    DEAD,
    FREE,
    HALT,
    HYBRID,
    ROLES,
    SLAVE,
    SNAPPED,
    STOPPED,
    HandlerOutput,
    Motion,
    NbrInfo,
    ProtocolParams,
    SensorState,
    SipTx,
    TriggerRecord,
)

__all__ = [name for name in dir() if not name.startswith("_")]
