"""Sidelink Mode-2 style access: sensing-based SPS with distraction priority.

Time is slotted; a resource is a ``(slot, subchannel)`` pair with absolute
slot index. Vehicles hold semi-persistent reservations that repeat every
reservation period and announce the next occurrence in each transmission.
High-class vehicles get a short selection window and may claim resources
reserved by Normal-class vehicles.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .channel import ChannelConfig, dbm_to_mw, noise_power_dbm
from .distraction import DistractionProfile, PriorityClass

Resource = tuple[int, int]


class PriorityPolicy(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    high_latency_budget_ms: float = Field(20.0, gt=0)
    normal_latency_budget_ms: float = Field(100.0, gt=0)
    preemption_enabled: bool = True
    threshold_step_db: float = Field(3.0, gt=0)

    @model_validator(mode="after")
    def _budgets_ordered(self):
        if self.high_latency_budget_ms > self.normal_latency_budget_ms:
            raise ValueError("high_latency_budget_ms must not exceed normal_latency_budget_ms")
        return self


class MacConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    slot_duration_ms: float = Field(0.5, gt=0)
    subchannels: int = Field(4, ge=1)
    resource_reservation_period_ms: float = Field(100.0, gt=0)
    rsrp_exclusion_threshold_dbm: float = -110.0
    t1_slots: int = Field(2, ge=1)
    min_candidate_fraction: float = Field(0.2, gt=0, le=1)
    sensing_window_ms: float = Field(100.0, gt=0)
    reselection_counter_min: int = Field(5, ge=1)
    reselection_counter_max: int = Field(15, ge=1)
    blind_retransmission: bool = False
    retransmission_offset_slots: int = Field(4, ge=1)
    policy: PriorityPolicy = PriorityPolicy()

    @model_validator(mode="after")
    def _consistent(self):
        if self.reselection_counter_min > self.reselection_counter_max:
            raise ValueError("reselection_counter_min must not exceed reselection_counter_max")
        for name in ("resource_reservation_period_ms", "sensing_window_ms"):
            ratio = getattr(self, name) / self.slot_duration_ms
            if abs(ratio - round(ratio)) > 1e-9:
                raise ValueError(f"{name} must be a whole number of slots")
        return self

    def slots(self, ms: float) -> int:
        return int(round(ms / self.slot_duration_ms))

    @property
    def period_slots(self) -> int:
        return self.slots(self.resource_reservation_period_ms)


class SensedReservation(NamedTuple):
    slot: int
    subchannel: int
    rsrp_dbm: float
    priority: PriorityClass
    vehicle_id: int


@dataclass
class Reservation:
    vehicle_id: int
    subchannel: int
    priority: PriorityClass
    msg_id: int
    rsrp_dbm: float = math.nan
    retransmission: bool = False


class ResourceGrid:
    """Planned transmissions per slot, pruned behind the current slot.

    Acts as the ring buffer of the pool: only slots at or after the last
    ``prune`` point are kept.
    """

    def __init__(self, slot_duration_ms: float = 0.5, subchannels: int = 4, horizon_slots: int = 400):
        if not slot_duration_ms > 0:
            raise ValueError("slot_duration_ms must be positive")
        if subchannels < 1:
            raise ValueError("need at least one subchannel")
        self.slot_duration_ms = slot_duration_ms
        self.subchannels = subchannels
        self.horizon_slots = horizon_slots
        self._slots: dict[int, list[Reservation]] = defaultdict(list)

    @classmethod
    def from_config(cls, cfg: MacConfig) -> "ResourceGrid":
        return cls(cfg.slot_duration_ms, cfg.subchannels, 2 * cfg.period_slots)

    def reserve(self, slot: int, res: Reservation) -> None:
        if not 0 <= res.subchannel < self.subchannels:
            raise ValueError(f"subchannel {res.subchannel} outside pool")
        for other in self._slots.get(slot, ()):
            if other.vehicle_id == res.vehicle_id:
                raise ValueError(f"vehicle {res.vehicle_id} already transmits in slot {slot}")
        self._slots[slot].append(res)

    def release(self, slot: int, vehicle_id: int) -> Reservation | None:
        entries = self._slots.get(slot)
        if not entries:
            return None
        for i, r in enumerate(entries):
            if r.vehicle_id == vehicle_id:
                return entries.pop(i)
        return None

    def at(self, slot: int) -> list[Reservation]:
        return sorted(self._slots.get(slot, ()), key=lambda r: (r.vehicle_id, r.subchannel))

    def holders(self, slot: int, subchannel: int) -> list[Reservation]:
        return [r for r in self.at(slot) if r.subchannel == subchannel]

    def vehicle_slots(self, vehicle_id: int, lo: int, hi: int) -> set[int]:
        return {s for s, rs in self._slots.items() if lo <= s <= hi and any(r.vehicle_id == vehicle_id for r in rs)}

    def prune(self, before_slot: int) -> None:
        for s in [s for s in self._slots if s < before_slot]:
            del self._slots[s]


@dataclass
class SpsState:
    next_slot: int | None = None
    subchannel: int | None = None
    reselection_counter: int = 0
    resource_reservation_period_ms: float = 100.0
    rsrp_exclusion_threshold_dbm: float = -110.0
    pending_reselection: bool = True

    def selected_resource(self, period_slots: int) -> Resource | None:
        if self.next_slot is None:
            return None
        return (self.next_slot % period_slots, self.subchannel)


class AccessGrant(NamedTuple):
    priority_class: PriorityClass
    budget_ms: float
    preemption: bool

    def preempts(self, other: PriorityClass) -> bool:
        # equal classes never preempt each other
        return self.preemption and self.priority_class is PriorityClass.HIGH and other is PriorityClass.NORMAL


def apply_priority(policy: PriorityPolicy, profile: DistractionProfile, budget_request: float | None = None) -> AccessGrant:
    """Map a driver's class to its selection budget and preemption right."""
    if profile.priority_class is PriorityClass.HIGH:
        budget, preempt = policy.high_latency_budget_ms, policy.preemption_enabled
    else:
        budget, preempt = policy.normal_latency_budget_ms, False
    if budget_request is not None:
        budget = min(budget, budget_request)
    return AccessGrant(profile.priority_class, budget, preempt)


def selection_window(now_slot: int, budget_ms: float, slot_duration_ms: float, t1_slots: int = 2,
                     window_end: int | None = None) -> tuple[int, int]:
    t2 = int(math.floor(budget_ms / slot_duration_ms + 1e-9))
    if t2 < t1_slots:
        raise ValueError(f"latency budget {budget_ms} ms is shorter than the T1 processing margin")
    hi = now_slot + t2 if window_end is None else min(now_slot + t2, window_end)
    return now_slot + t1_slots, hi


def candidate_resources(
    grid: ResourceGrid,
    now_slot: int,
    budget_ms: float,
    sensing_report: Iterable[SensedReservation],
    *,
    rsrp_threshold_dbm: float = -110.0,
    threshold_step_db: float = 3.0,
    t1_slots: int = 2,
    min_fraction: float = 0.2,
    window_end: int | None = None,
    blocked_slots: Iterable[int] = (),
) -> list[Resource]:
    """Candidate single-slot resources for a selection at ``now_slot``.

    The window is ``[now + T1, now + T2]`` with ``T2 = budget / slot``,
    optionally cut at ``window_end``. A resource is excluded when some
    sensed reservation on it exceeds the RSRP threshold; while fewer than
    ``min_fraction`` of the window survive, the threshold is raised by
    ``threshold_step_db``. Slots in ``blocked_slots`` are removed from the
    window before counting. Returns ``[]`` if the window is empty.
    """
    lo, hi = selection_window(now_slot, budget_ms, grid.slot_duration_ms, t1_slots, window_end)
    blocked = set(blocked_slots)
    window = [(s, c) for s in range(lo, hi + 1) if s not in blocked for c in range(grid.subchannels)]
    if not window:
        return []
    sensed: dict[Resource, float] = {}
    for r in sensing_report:
        key = (r.slot, r.subchannel)
        if key in sensed:
            sensed[key] = max(sensed[key], r.rsrp_dbm)
        else:
            sensed[key] = r.rsrp_dbm
    need = math.ceil(min_fraction * len(window) - 1e-9)
    threshold = rsrp_threshold_dbm
    while True:
        survivors = [res for res in window if sensed.get(res, -math.inf) <= threshold]
        if len(survivors) >= need:
            return survivors
        threshold += threshold_step_db


def select_resource(candidates: Sequence[Resource], rng: np.random.Generator) -> Resource:
    if not candidates:
        raise ValueError("cannot select from an empty candidate set")
    ordered = sorted(candidates)
    return ordered[int(rng.integers(len(ordered)))]


def draw_reselection_counter(rng: np.random.Generator, cfg: MacConfig) -> int:
    return int(rng.integers(cfg.reselection_counter_min, cfg.reselection_counter_max + 1))


class SensingTable:
    """What every receiver last decoded from every sender.

    Entries are indexed ``[rx, tx]``: slot and subchannel of the last decoded
    transmission, its received power, and whether it announced a further
    reservation.
    """

    def __init__(self, n: int):
        self.last_slot = np.full((n, n), -(2**62), dtype=np.int64)
        self.subchannel = np.zeros((n, n), dtype=np.int64)
        self.rsrp_dbm = np.full((n, n), -np.inf)
        self.announced = np.zeros((n, n), dtype=bool)

    def record(self, tx: int, receivers: np.ndarray, slot: int, subchannel: int,
               rsrp_dbm: np.ndarray, announced: bool) -> None:
        self.last_slot[receivers, tx] = slot
        self.subchannel[receivers, tx] = subchannel
        self.rsrp_dbm[receivers, tx] = rsrp_dbm
        self.announced[receivers, tx] = announced

    def report(self, rx: int, now_slot: int, lo: int, hi: int, window_slots: int, period_slots: int,
               priorities: Sequence[PriorityClass], counts: np.ndarray | None = None) -> list[SensedReservation]:
        """Reservations sensed by ``rx`` in the trailing window, projected into ``[lo, hi]``.

        ``counts`` optionally masks which senders the requester must respect.
        """
        last = self.last_slot[rx]
        mask = (last >= now_slot - window_slots) & (last < now_slot) & self.announced[rx]
        if counts is not None:
            mask &= counts
        out = []
        for tx in np.flatnonzero(mask):
            s0 = int(last[tx])
            k = max(1, -((s0 - lo) // period_slots))  # first occurrence >= lo
            s = s0 + k * period_slots
            while s <= hi:
                out.append(SensedReservation(s, int(self.subchannel[rx, tx]), float(self.rsrp_dbm[rx, tx]),
                                             priorities[tx], int(tx)))
                s += period_slots
        return out


@dataclass
class SlotResolution:
    """Outcome of all transmissions in one slot.

    Row ``k`` of each array belongs to ``transmissions[k]``; columns are
    receivers.
    """

    slot: int
    transmissions: list[Reservation]
    sinr_db: np.ndarray
    decoded: np.ndarray
    half_duplex: np.ndarray
    in_range: np.ndarray = field(default=None)


def resolve_slot(
    grid: ResourceGrid,
    slot: int,
    rx_power_dbm: np.ndarray,
    channel_cfg: ChannelConfig,
    distances: np.ndarray | None = None,
    awareness_range_m: float = 150.0,
    rx_power_mw: np.ndarray | None = None,
) -> SlotResolution:
    """Decode every transmission of ``slot`` at every other vehicle.

    Co-slot transmissions on the same subchannel interfere. A vehicle that
    transmits in the slot decodes nothing (half duplex).
    """
    txs = grid.at(slot)
    n = rx_power_dbm.shape[0]
    if not txs:
        empty = np.zeros((0, n))
        return SlotResolution(slot, [], empty, empty.astype(bool), empty.astype(bool), empty.astype(bool))
    lin = dbm_to_mw(rx_power_dbm) if rx_power_mw is None else rx_power_mw
    ids = np.array([r.vehicle_id for r in txs])
    scs = np.array([r.subchannel for r in txs])
    signal = lin[ids]
    noise = float(dbm_to_mw(noise_power_dbm(channel_cfg)))
    if len(txs) == 1:
        interference = 0.0
    else:
        same = (scs[:, None] == scs[None, :]).astype(float)
        interference = same @ signal - signal
    with np.errstate(divide="ignore"):
        sinr = 10.0 * np.log10(signal / (interference + noise))
    transmitting = np.zeros(n, dtype=bool)
    transmitting[ids] = True
    half_duplex = np.broadcast_to(transmitting, signal.shape).copy()
    half_duplex[np.arange(len(ids)), ids] = False  # self is not a receiver
    decoded = (sinr >= channel_cfg.sinr_decode_threshold_db) & ~transmitting[None, :]
    if distances is not None:
        in_range = distances[ids] <= awareness_range_m
        in_range[np.arange(len(ids)), ids] = False
    else:
        in_range = np.ones_like(decoded)
        in_range[np.arange(len(ids)), ids] = False
    return SlotResolution(slot, txs, sinr, decoded, half_duplex, in_range)
