"""Stateless decision rules used by the handlers."""

from __future__ import annotations

from typing import Iterable, Optional

from ..geometry import boundary_entry, dist


def moving_condition(card_p: int, card_q: int, ord_p: int, ord_q: int) -> bool:
    """May ``p`` push one slave into the hexagon of ``q``?

    Cardinalities are virtual ones.
    """
    if card_p < 0 or card_q < 0:
        raise ValueError("cardinalities must be non-negative")
    return card_p > card_q + 1 or (card_p == card_q + 1 and ord_p > ord_q)


def pull_timeout(h: int, r_s: float, speed: float) -> float:
    """Time for a sensor ``h + 1`` hops away to reach the hole's neighbour."""
    return (h + 1) * 2 * r_s / speed


def closest_candidate(cands: dict, target, exclude: Iterable[int] = ()) -> Optional[int]:
    """ID of the candidate nearest to ``target``; lower ID on ties."""
    excl = set(exclude)
    best = None
    for cid, pos in cands.items():
        if cid in excl:
            continue
        key = (dist(pos, target), cid)
        if best is None or key < best[0]:
            best = (key, cid)
    return None if best is None else best[1]


def pick_offer_target(nbrs, own_card: int, own_ord: int, ord_of, own_pos,
                      hole_distance=None, blocked=frozenset()) -> Optional[int]:
    """Neighbour to offer a slave to, or None.

    Among neighbours satisfying the Moving Condition pick minimal virtual
    cardinality, then the closest. With an active hole trigger the
    neighbour closest (in tiles) to the queue-head hole comes first.
    """
    best = None
    for n in nbrs:
        if n.id in blocked:
            continue
        if not moving_condition(own_card, n.vcard, own_ord, ord_of(n.id)):
            continue
        key = (n.vcard, dist(own_pos, n.center), n.id)
        if hole_distance is not None:
            key = (hole_distance(n.tile),) + key
        if best is None or key < best[0]:
            best = (key, n.id)
    return None if best is None else best[1]


def pick_slave_to_push(slaves: dict, dest_center, frame, e_move: float) -> Optional[int]:
    """Slave left with the most energy after entering the destination hexagon."""
    best = None
    for sid, (pos, energy) in slaves.items():
        travel = max(0.0, dist(pos, dest_center) - boundary_entry(pos, dest_center, frame))
        residual = energy - e_move * travel
        key = (-residual, sid)
        if best is None or key < best[0]:
            best = (key, sid)
    return None if best is None else best[1]


def pick_successor(slaves: dict, here, e_move: float, exclude=()) -> Optional[int]:
    best = None
    for sid, (pos, energy) in slaves.items():
        if sid in exclude:
            continue
        key = (-(energy - e_move * dist(pos, here)), sid)
        if best is None or key < best[0]:
            best = (key, sid)
    return None if best is None else best[1]


def accepts_exchange(traveller_energy: float, own_energy: float, battery: float,
                     hysteresis: float) -> bool:
    return traveller_energy > own_energy + hysteresis * battery


def claim_wins(own_ts: float, own_id: int, other_ts: float, other_id: int) -> bool:
    """Lower claim timestamp wins; equal timestamps go to the lower sensor ID."""
    return (own_ts, own_id) < (other_ts, other_id)
