"""The P&P message set.

Every message carries its sender ID and the portion key of the tiling the
sender currently honours (``None`` for sensors that know no portion yet).
Variants that name a receiver are unicast, all others are broadcast.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, ClassVar, Optional

from ..geometry import HexFrame, Point

PortionKey = Optional[tuple[float, int]]


@dataclass(frozen=True, slots=True)
class Message:
    sender_id: int
    portion: PortionKey = field(default=None, kw_only=True)

    variant: ClassVar[str] = "Message"
    unicast: ClassVar[bool] = False

    @property
    def receiver(self) -> Optional[int]:
        return getattr(self, "receiver_id", None) if self.unicast else None

    def payload(self) -> dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            if f.name in ("sender_id", "portion"):
                continue
            out[f.name] = _plain(getattr(self, f.name))
        return out


def _plain(v):
    if isinstance(v, HexFrame):
        return v.to_dict()
    if isinstance(v, Point):
        return [v.x, v.y]
    if dataclasses.is_dataclass(v) and not isinstance(v, type):
        return {f.name: _plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    return v


def _unicast(cls):
    cls.unicast = True
    return cls


@dataclass(frozen=True, slots=True)
class IAS(Message):
    coordinates: Point
    starter_timestamp: float
    frame: HexFrame
    order_value: int = 0
    variant: ClassVar[str] = "IAS"


@dataclass(frozen=True, slots=True)
class InfoSnapped(Message):
    coordinates: Point
    virtual_cardinality: int
    order_value: int = 0
    # positions the sender has an open SIP for
    pending: tuple = ()
    variant: ClassVar[str] = "InfoSnapped"


@dataclass(frozen=True, slots=True)
class InfoSlave(Message):
    coordinates: Point
    energy_level: float
    owner_id: int = -1
    variant: ClassVar[str] = "InfoSlave"


@dataclass(frozen=True, slots=True)
class InfoFree(Message):
    coordinates: Point
    variant: ClassVar[str] = "InfoFree"


@_unicast
@dataclass(frozen=True, slots=True)
class SIP(Message):
    receiver_id: int
    target_coordinates: Point
    variant: ClassVar[str] = "SIP"


@_unicast
@dataclass(frozen=True, slots=True)
class AckSIP(Message):
    receiver_id: int
    variant: ClassVar[str] = "AckSIP"


@dataclass(frozen=True, slots=True)
class ClaimPosition(Message):
    coordinates: Point
    timestamp: float
    variant: ClassVar[str] = "ClaimPosition"


@dataclass(frozen=True, slots=True)
class PositionTaken(Message):
    coordinates: Point
    variant: ClassVar[str] = "PositionTaken"


@dataclass(frozen=True, slots=True)
class InfoStopped(Message):
    coordinates: Point
    variant: ClassVar[str] = "InfoStopped"


@_unicast
@dataclass(frozen=True, slots=True)
class IAYS(Message):
    receiver_id: int
    coordinates: Point = Point(0.0, 0.0)
    variant: ClassVar[str] = "IAYS"


@dataclass(frozen=True, slots=True)
class CardinalityInfo(Message):
    virtual_cardinality: int
    variant: ClassVar[str] = "CardinalityInfo"


@_unicast
@dataclass(frozen=True, slots=True)
class Offer(Message):
    receiver_id: int
    virtual_cardinality: int
    transaction_id: str
    # the offerer's current (possibly trigger-altered) ord; -1 when unknown
    order_value: int = -1
    variant: ClassVar[str] = "Offer"


@_unicast
@dataclass(frozen=True, slots=True)
class AckOffer(Message):
    receiver_id: int
    transaction_id: str = ""
    variant: ClassVar[str] = "AckOffer"


@_unicast
@dataclass(frozen=True, slots=True)
class MoveTo(Message):
    receiver_id: int
    destination_coordinates: Point
    destination_snapped_id: int
    transaction_id: str
    variant: ClassVar[str] = "MoveTo"


@_unicast
@dataclass(frozen=True, slots=True)
class InfoArrived(Message):
    receiver_id: int
    transaction_id: str
    energy_level: float
    coordinates: Point = Point(0.0, 0.0)
    variant: ClassVar[str] = "InfoArrived"


@dataclass(frozen=True, slots=True)
class HoleInfo(Message):
    hop_counter: int
    order_value: int
    hole_coordinates: Point
    timeout: float
    variant: ClassVar[str] = "HoleInfo"


@_unicast
@dataclass(frozen=True, slots=True)
class Subst(Message):
    receiver_id: int
    energy_level: float
    destination_coordinates: Point
    destination_snapped_id: int = -1
    transaction_id: str = ""
    variant: ClassVar[str] = "Subst"


@_unicast
@dataclass(frozen=True, slots=True)
class AckSubst(Message):
    receiver_id: int
    variant: ClassVar[str] = "AckSubst"


@_unicast
@dataclass(frozen=True, slots=True)
class SubstArrival(Message):
    receiver_id: int
    variant: ClassVar[str] = "SubstArrival"


@dataclass(frozen=True, slots=True)
class Profile:
    """Everything a successor needs to take over a snap position."""

    frame: HexFrame
    tile: tuple[int, int]
    base_ord: int
    triggers: tuple = ()
    neighbors: tuple = ()
    slaves: tuple = ()
    honored: Optional[HexFrame] = None
    old_owner: Optional[tuple] = None  # (id, center) in the honoured portion


@_unicast
@dataclass(frozen=True, slots=True)
class ProfilePacket(Message):
    receiver_id: int
    order_value: int
    priority_queue: tuple
    neighborhood_information: Profile
    variant: ClassVar[str] = "ProfilePacket"


@_unicast
@dataclass(frozen=True, slots=True)
class MoveToSubst(Message):
    receiver_id: int
    order_value: int
    priority_queue: tuple
    neighborhood_information: Profile
    variant: ClassVar[str] = "MoveToSubst"


@dataclass(frozen=True, slots=True)
class Retirement(Message):
    hole_coordinates: Point
    older_frame: Optional[HexFrame] = None
    variant: ClassVar[str] = "Retirement"


VARIANTS: dict[str, type[Message]] = {
    cls.variant: cls
    for cls in (
        IAS, InfoSnapped, InfoSlave, InfoFree, SIP, AckSIP, ClaimPosition,
        PositionTaken, InfoStopped, IAYS, CardinalityInfo, Offer, AckOffer,
        MoveTo, InfoArrived, HoleInfo, Subst, AckSubst, SubstArrival,
        ProfilePacket, MoveToSubst, Retirement,
    )
}


def _profile_plain(p: Profile) -> dict:
    return {
        "frame": p.frame.to_dict(),
        "tile": list(p.tile),
        "base_ord": p.base_ord,
        "triggers": _plain(p.triggers),
        "neighbors": _plain(p.neighbors),
        "slaves": _plain(p.slaves),
        "honored": p.honored.to_dict() if p.honored else None,
        "old_owner": _plain(p.old_owner),
    }


def wire_record(t: float, msg: Message, n_recipients: int) -> dict:
    """One trace line for a transmitted message."""
    payload = msg.payload()
    if "neighborhood_information" in payload:
        payload["neighborhood_information"] = _profile_plain(msg.neighborhood_information)
    return {
        "t": t,
        "kind": "send",
        "sender": msg.sender_id,
        "receiver": msg.receiver if msg.unicast else "broadcast",
        "variant": msg.variant,
        "portion": list(msg.portion) if msg.portion else None,
        "payload": payload,
        "recipients": n_recipients,
    }
