"""Discrete-event loop tying mobility, channel and MAC into latency records.

Events run in ``(slot, rank, vehicle id)`` order with ranks
``MOBILITY < RESOLVE < GENERATE``: geometry is refreshed first, then the
slot's transmissions are decoded, then new BSMs are generated. A BSM's
latency at a receiver is the time from generation to the slot of its first
successful decode.
"""

from __future__ import annotations

import enum
import heapq
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .channel import LinkField, dbm_to_mw
from .config import ScenarioConfig
from .distraction import (
    DistractionProfile,
    PriorityClass,
    RayleighParams,
    sample_distraction,
    tail_probability,
)
from .mac import (
    Reservation,
    ResourceGrid,
    SensedReservation,
    SensingTable,
    SpsState,
    apply_priority,
    candidate_resources,
    draw_reselection_counter,
    select_resource,
    selection_window,
    resolve_slot,
)
from .roadnet import build_default_map, distance_matrix, positions_array, spawn_vehicles, step_mobility
from .streams import derive_stream

HIGH_BSM_BUDGET_MS = 20.0


class Outcome(str, enum.Enum):
    DELIVERED = "Delivered"
    EXPIRED = "Expired"
    DECODE_FAILED = "DecodeFailedAllAttempts"
    HALF_DUPLEX = "HalfDuplexMissed"


OUTCOMES = list(Outcome)
_OUTCOME_CODE = {o: i for i, o in enumerate(OUTCOMES)}
DELIVERED, EXPIRED, DECODE_FAILED, HALF_DUPLEX = range(4)


class EventKind(enum.IntEnum):
    MOBILITY = 0
    RESOLVE = 1
    GENERATE = 2


class Event(NamedTuple):
    slot: int
    rank: int
    vehicle_id: int
    seq: int


class LatencyRecord(NamedTuple):
    msg_id: int
    tx_id: int
    rx_id: int
    gen_time_ms: float
    rx_time_ms: float | None
    latency_ms: float | None
    priority: PriorityClass
    outcome: Outcome


@dataclass
class Message:
    id: int
    tx_id: int
    priority: PriorityClass
    gen_slot: int
    size_bytes: int
    deadline_slot: int
    attempts_left: int = 0
    receivers: np.ndarray | None = None
    delivered_slot: np.ndarray | None = None
    failure: np.ndarray | None = None

    def outcomes(self) -> dict[int, int | str]:
        """Receiver id -> delivered slot, or failure cause name."""
        out: dict[int, int | str] = {}
        if self.receivers is None:
            return out
        for rx, slot, fail in zip(self.receivers, self.delivered_slot, self.failure):
            out[int(rx)] = int(slot) if slot >= 0 else OUTCOMES[int(fail)].value
        return out


class RecordTable:
    """Column store of latency records; iterates as :class:`LatencyRecord`."""

    def __init__(self, slot_ms: float, msg_id, tx_id, rx_id, gen_slot, rx_slot, high, outcome):
        self.slot_ms = slot_ms
        order = np.lexsort((rx_id, msg_id))
        self.msg_id = np.asarray(msg_id, dtype=np.int64)[order]
        self.tx_id = np.asarray(tx_id, dtype=np.int64)[order]
        self.rx_id = np.asarray(rx_id, dtype=np.int64)[order]
        self.gen_slot = np.asarray(gen_slot, dtype=np.int64)[order]
        self.rx_slot = np.asarray(rx_slot, dtype=np.int64)[order]
        self.high = np.asarray(high, dtype=bool)[order]
        self.outcome = np.asarray(outcome, dtype=np.int8)[order]

    @classmethod
    def empty(cls, slot_ms: float) -> "RecordTable":
        z = np.zeros(0, dtype=np.int64)
        return cls(slot_ms, z, z, z, z, z, z.astype(bool), z.astype(np.int8))

    def __len__(self) -> int:
        return len(self.msg_id)

    def __getitem__(self, i: int) -> LatencyRecord:
        delivered = self.outcome[i] == DELIVERED
        rx = float(self.rx_slot[i] * self.slot_ms) if delivered else None
        gen = float(self.gen_slot[i] * self.slot_ms)
        return LatencyRecord(
            int(self.msg_id[i]), int(self.tx_id[i]), int(self.rx_id[i]), gen, rx,
            rx - gen if delivered else None,
            PriorityClass.HIGH if self.high[i] else PriorityClass.NORMAL,
            OUTCOMES[int(self.outcome[i])],
        )

    def __iter__(self) -> Iterator[LatencyRecord]:
        for i in range(len(self)):
            yield self[i]

    def class_mask(self, priority: PriorityClass | str | None) -> np.ndarray:
        if priority is None or priority == "All":
            return np.ones(len(self), dtype=bool)
        if PriorityClass(priority) is PriorityClass.HIGH:
            return self.high.copy()
        return ~self.high

    def latencies_ms(self, priority: PriorityClass | str | None = None) -> np.ndarray:
        m = self.class_mask(priority) & (self.outcome == DELIVERED)
        return (self.rx_slot[m] - self.gen_slot[m]) * self.slot_ms


@dataclass
class Vehicle:
    id: int
    profile: DistractionProfile
    phase_slot: int
    sps: SpsState
    pending: dict[int, "PlannedTx"] = field(default_factory=dict)
    claims: list[SensedReservation] = field(default_factory=list)  # resources taken from us by preemption


class PlannedTx(NamedTuple):
    slot: int
    subchannel: int
    msg_id: int


def initial_profiles(cfg: ScenarioConfig) -> list[DistractionProfile]:
    """Per-vehicle distraction levels and classes for ``cfg.seed``.

    Levels depend only on (seed, sigma, vehicle_count), never on theta, so
    lowering theta can only promote vehicles to High.
    """
    levels = sample_distraction(derive_stream(cfg.seed, "distraction"), RayleighParams(cfg.sigma), size=cfg.vehicle_count)
    return [DistractionProfile.from_level(float(x), cfg.theta) for x in levels]


class Simulation:
    """One scenario run; owns the single mutable world state.

    ``trace`` (a list) collects MAC rows ``(slot, vehicle, action, resource,
    cause)``; with ``trace_decodes`` it also gets one ``decode`` row per
    successful reception.
    """

    def __init__(self, cfg: ScenarioConfig, trace: list | None = None, trace_decodes: bool = False):
        self.cfg = cfg
        mac = cfg.mac
        self.slot_ms = mac.slot_duration_ms
        self.period = mac.period_slots
        self.gen_interval = cfg.bsm_interval_slots
        self.total_slots = cfg.total_slots
        self.warmup_slots = int(round(cfg.warmup_s * 1000.0 / self.slot_ms))
        self.mobility_slots = max(1, int(round(cfg.mobility_step_s * 1000.0 / self.slot_ms)))
        self.sensing_slots = mac.slots(mac.sensing_window_ms)
        self.trace = trace
        self.trace_decodes = trace_decodes

        n = cfg.vehicle_count
        self.graph = build_default_map(cfg.map_bounds_m, cfg.junction_count)
        self.states = spawn_vehicles(self.graph, n, derive_stream(cfg.seed, "spawn"),
                                     (cfg.speed_min_ms, cfg.speed_max_ms))
        self.mobility_rng = derive_stream(cfg.seed, "mobility")
        self.mac_rng = derive_stream(cfg.seed, "mac")
        self.links = LinkField(n, derive_stream(cfg.seed, "los"), derive_stream(cfg.seed, "shadow"), cfg.channel)
        profiles = initial_profiles(cfg)
        phases = derive_stream(cfg.seed, "phase").integers(0, self.gen_interval, size=n)
        self.vehicles = [
            Vehicle(i, profiles[i], int(phases[i]),
                    SpsState(resource_reservation_period_ms=mac.resource_reservation_period_ms,
                             rsrp_exclusion_threshold_dbm=mac.rsrp_exclusion_threshold_dbm))
            for i in range(n)
        ]
        self.priorities = [v.profile.priority_class for v in self.vehicles]
        self.is_high = np.array([p is PriorityClass.HIGH for p in self.priorities])
        self.grants = [apply_priority(mac.policy, v.profile) for v in self.vehicles]
        self.grid = ResourceGrid.from_config(mac)
        self.sensing = SensingTable(n)
        self.messages: dict[int, Message] = {}
        self._next_msg_id = 0
        self._heap: list[tuple] = []
        self._seq = 0
        self._resolve_slots: set[int] = set()
        self._last_key: tuple | None = None
        self._chunks: list[tuple] = []
        self.generated = np.zeros(n, dtype=np.int64)
        self._refresh_geometry()

    # -- world geometry -------------------------------------------------

    def _refresh_geometry(self) -> None:
        self.positions = positions_array(self.states)
        self.distances = distance_matrix(self.positions)
        self.rx_dbm = self.links.rx_power_dbm(self.distances)
        self.rx_mw = dbm_to_mw(self.rx_dbm)
        self.in_range = self.distances <= self.cfg.awareness_range_m
        np.fill_diagonal(self.in_range, False)

    # -- event plumbing -------------------------------------------------

    def schedule(self, slot: int, kind: EventKind, vehicle_id: int = -1) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (slot, int(kind), vehicle_id, self._seq))

    def _ensure_resolve(self, slot: int) -> None:
        if slot not in self._resolve_slots:
            self._resolve_slots.add(slot)
            self.schedule(slot, EventKind.RESOLVE)

    def advance_to_next_slot(self) -> int | None:
        """Run every event of the earliest pending slot; return that slot."""
        if not self._heap:
            return None
        slot = self._heap[0][0]
        generating = []
        while self._heap and self._heap[0][0] == slot:
            ev = heapq.heappop(self._heap)
            key = ev[:3]
            assert self._last_key is None or key >= self._last_key, f"out-of-order event {key} after {self._last_key}"
            self._last_key = key
            kind = EventKind(ev[1])
            if kind is EventKind.MOBILITY:
                self._mobility(slot)
            elif kind is EventKind.RESOLVE:
                self._resolve(slot)
            else:
                generating.append(ev[2])
                # generation events of one slot are contiguous in the heap order
                if not (self._heap and self._heap[0][0] == slot and self._heap[0][1] == EventKind.GENERATE):
                    self.generate_bsms(slot, generating)
                    generating = []
        return slot

    def run(self) -> tuple[RecordTable, dict]:
        for v in self.vehicles:
            self.schedule(v.phase_slot, EventKind.GENERATE, v.id)
        self.schedule(self.mobility_slots, EventKind.MOBILITY)
        while self.advance_to_next_slot() is not None:
            pass
        table = self._table()
        return table, summarize(table, self)

    def _log(self, slot, vehicle, action, resource=None, cause=""):
        if self.trace is not None:
            res = "" if resource is None else f"{resource[0]}:{resource[1]}"
            self.trace.append((slot, vehicle, action, res, cause))

    # -- mobility -------------------------------------------------------

    def _mobility(self, slot: int) -> None:
        if not self.cfg.static:
            self.states = step_mobility(self.graph, self.states, self.cfg.mobility_step_s, self.mobility_rng)
            self._refresh_geometry()
        if any(k[1] != EventKind.MOBILITY for k in self._heap):
            self.schedule(slot + self.mobility_slots, EventKind.MOBILITY)

    # -- BSM generation and resource selection --------------------------

    def generate_bsms(self, slot: int, vehicle_ids: Sequence[int]) -> None:
        assert len(set(vehicle_ids)) == len(vehicle_ids) <= len(self.vehicles)
        for vid in sorted(vehicle_ids):
            self._generate(slot, vid)

    def _generate(self, g: int, vid: int) -> None:
        v = self.vehicles[vid]
        grant = self.grants[vid]
        msg = Message(self._next_msg_id, vid, grant.priority_class, g, self.cfg.bsm_size_bytes,
                      deadline_slot=g + int(math.floor(grant.budget_ms / self.slot_ms + 1e-9)))
        self._next_msg_id += 1
        self.messages[msg.id] = msg
        self.generated[vid] += 1
        nxt = g + self.gen_interval
        if nxt < self.total_slots:
            self.schedule(nxt, EventKind.GENERATE, vid)

        lo, hi = selection_window(g, grant.budget_ms, self.slot_ms, self.cfg.mac.t1_slots)
        sps = v.sps
        if self.generated[vid] == 1:
            reason = "initial"
        elif sps.pending_reselection or sps.next_slot is None:
            reason = "counter" if sps.reselection_counter <= 0 else "released"
        else:
            r = sps.next_slot
            if r < lo:
                r += -((r - lo) // self.period) * self.period
            busy = {p.slot for p in v.pending.values()}
            if r <= hi and r not in busy:
                self._log(g, vid, "keep", (r, sps.subchannel))
                self._assign(v, msg, r, sps.subchannel)
                return
            reason = "out_of_budget"
        self._reselect(g, v, msg, reason, window_end=None)

    def _reselect(self, now: int, v: Vehicle, msg: Message, reason: str, window_end: int | None) -> bool:
        grant = self.grants[v.id]
        mac = self.cfg.mac
        base = msg.gen_slot
        lo, hi = selection_window(base, grant.budget_ms, self.slot_ms, mac.t1_slots)
        lo = max(lo, now + mac.t1_slots)
        if lo > hi:
            self._expire(now, v, msg)
            return False
        report = self.sensing.report(v.id, now, lo, hi, self.sensing_slots, self.period, self.priorities)
        v.claims = [c for c in v.claims if c.slot >= now]
        report += [c for c in v.claims if lo <= c.slot <= hi]
        # reservations a High claimant may take over do not exclude resources for it
        binding = [r for r in report if not grant.preempts(r.priority)]
        blocked = [p.slot for p in v.pending.values()]
        cands = candidate_resources(
            self.grid, now, grant.budget_ms, binding,
            rsrp_threshold_dbm=v.sps.rsrp_exclusion_threshold_dbm,
            threshold_step_db=mac.policy.threshold_step_db,
            t1_slots=mac.t1_slots,
            min_fraction=mac.min_candidate_fraction,
            window_end=hi,
            blocked_slots=blocked,
        )
        # selection is relative to now; drop anything before the message's own window
        cands = [c for c in cands if c[0] >= lo]
        if not cands:
            self._expire(now, v, msg)
            return False
        slot, sc = select_resource(cands, self.mac_rng)
        v.sps.reselection_counter = draw_reselection_counter(self.mac_rng, mac)
        v.sps.pending_reselection = False
        self._log(now, v.id, "select", (slot, sc), f"{reason};counter={v.sps.reselection_counter}")
        self._assign(v, msg, slot, sc)
        if grant.preemption:
            victims = sorted({r.vehicle_id for r in report
                              if r.slot == slot and r.subchannel == sc and grant.preempts(r.priority)})
            for u in victims:
                self._preempt(now, self.vehicles[u], slot, sc, by=v.id)
        return True

    def _assign(self, v: Vehicle, msg: Message, slot: int, sc: int) -> None:
        blind = self.cfg.mac.blind_retransmission
        v.sps.next_slot = slot + self.period
        v.sps.subchannel = sc
        v.pending[msg.id] = PlannedTx(slot, sc, msg.id)
        self.grid.reserve(slot, Reservation(v.id, sc, msg.priority, msg.id))
        self._ensure_resolve(slot)
        msg.attempts_left = 1
        if blind:
            rslot = slot + self.cfg.mac.retransmission_offset_slots
            busy = {p.slot for p in v.pending.values()}
            if rslot <= msg.deadline_slot and rslot not in busy:
                self.grid.reserve(rslot, Reservation(v.id, sc, msg.priority, msg.id, retransmission=True))
                self._ensure_resolve(rslot)
                msg.attempts_left = 2

    def _preempt(self, now: int, u: Vehicle, slot: int, sc: int, by: int) -> None:
        """Normal vehicle ``u`` yields resource ``(slot, sc)`` to a High claimant."""
        pending = [p for p in u.pending.values() if p.slot == slot and p.subchannel == sc]
        holds_future = u.sps.next_slot is not None and u.sps.subchannel == sc and (slot - u.sps.next_slot) % self.period == 0
        if not pending and not holds_future:
            return  # sensed reservation is stale; nothing to yield
        self._log(now, u.id, "preempted", (slot, sc), f"by={by}")
        u.sps.next_slot = None
        u.sps.pending_reselection = True
        u.claims.append(SensedReservation(slot, sc, float(self.rx_dbm[by, u.id]), PriorityClass.HIGH, by))
        for p in pending:
            msg = self.messages[p.msg_id]
            self._release(u, msg)
            self._reselect(now, u, msg, "preempted", window_end=None)

    def _release(self, v: Vehicle, msg: Message) -> None:
        p = v.pending.pop(msg.id)
        self.grid.release(p.slot, v.id)
        if msg.attempts_left == 2:
            self.grid.release(p.slot + self.cfg.mac.retransmission_offset_slots, v.id)

    def _expire(self, now: int, v: Vehicle, msg: Message) -> None:
        self._log(now, v.id, "expired", None, f"msg={msg.id}")
        v.sps.pending_reselection = True
        v.sps.next_slot = None
        rx = np.flatnonzero(self.in_range[v.id])
        msg.receivers = rx
        msg.delivered_slot = np.full(len(rx), -1, dtype=np.int64)
        msg.failure = np.full(len(rx), EXPIRED, dtype=np.int8)
        self._finalize(msg)

    # -- slot resolution ------------------------------------------------

    def _resolve(self, slot: int) -> None:
        self._resolve_slots.discard(slot)
        res = resolve_slot(self.grid, slot, self.rx_dbm, self.cfg.channel, rx_power_mw=self.rx_mw)
        for k, r in enumerate(res.transmissions):
            v = self.vehicles[r.vehicle_id]
            msg = self.messages[r.msg_id]
            decoded = res.decoded[k]
            if not r.retransmission:
                assert msg.tx_id == v.id and msg.id in v.pending
                assert slot - msg.gen_slot <= msg.deadline_slot - msg.gen_slot
                v.pending.pop(msg.id)
                sps = v.sps
                sps.reselection_counter -= 1
                if sps.reselection_counter <= 0:
                    sps.pending_reselection = True
                    sps.next_slot = None
                announced = not sps.pending_reselection
                self._log(slot, v.id, "tx", (slot, r.subchannel), "announce" if announced else "release")
                hearers = np.flatnonzero(decoded)
                self.sensing.record(v.id, hearers, slot, r.subchannel, self.rx_dbm[v.id, hearers], announced)
                if self.trace_decodes:
                    for h in hearers:
                        self._log(slot, int(h), "decode", (slot, r.subchannel), f"from={v.id}")
                rx = np.flatnonzero(self.in_range[v.id])
                msg.receivers = rx
                msg.delivered_slot = np.where(decoded[rx], slot, -1).astype(np.int64)
                msg.failure = np.where(res.half_duplex[k, rx], HALF_DUPLEX, DECODE_FAILED).astype(np.int8)
                msg.failure[decoded[rx]] = DELIVERED
            else:
                self._log(slot, v.id, "retx", (slot, r.subchannel), f"msg={msg.id}")
                open_ = msg.delivered_slot < 0
                now_ok = decoded[msg.receivers] & open_
                msg.delivered_slot[now_ok] = slot
                msg.failure[now_ok] = DELIVERED
                # a decode attempt that fails outranks an earlier half-duplex miss
                tried = open_ & ~res.half_duplex[k, msg.receivers] & ~now_ok
                msg.failure[tried] = DECODE_FAILED
            msg.attempts_left -= 1
            if msg.attempts_left == 0:
                self._finalize(msg)
        self.grid.prune(slot + 1)

    def _finalize(self, msg: Message) -> None:
        del self.messages[msg.id]
        if msg.gen_slot < self.warmup_slots or msg.receivers is None or len(msg.receivers) == 0:
            return
        n = len(msg.receivers)
        self._chunks.append((
            np.full(n, msg.id, dtype=np.int64), np.full(n, msg.tx_id, dtype=np.int64),
            msg.receivers.astype(np.int64), np.full(n, msg.gen_slot, dtype=np.int64),
            msg.delivered_slot, np.full(n, msg.priority is PriorityClass.HIGH), msg.failure,
        ))

    def _table(self) -> RecordTable:
        if not self._chunks:
            return RecordTable.empty(self.slot_ms)
        cols = [np.concatenate(c) for c in zip(*self._chunks)]
        return RecordTable(self.slot_ms, *cols)


# -- summaries -----------------------------------------------------------

PERCENTILES = (10, 50, 90, 99)
SUMMARY_DECIMALS = 6


def _r(x: float | None) -> float | None:
    return None if x is None else round(float(x), SUMMARY_DECIMALS)


def class_stats(table: RecordTable, priority: PriorityClass | str | None) -> dict:
    mask = table.class_mask(priority)
    outcomes = table.outcome[mask]
    lat = table.latencies_ms(priority)
    stats = {
        "records": int(mask.sum()),
        "delivered": int(len(lat)),
        "delivery_ratio": _r(len(lat) / mask.sum()) if mask.sum() else None,
        "outcomes": {o.value: int(np.sum(outcomes == i)) for i, o in enumerate(OUTCOMES)},
        "frac_under_20ms": _r(np.mean(lat <= HIGH_BSM_BUDGET_MS)) if len(lat) else None,
    }
    for q in PERCENTILES:
        stats[f"p{q}_ms"] = _r(np.percentile(lat, q)) if len(lat) else None
    return stats


def summarize(table: RecordTable, sim: Simulation) -> dict:
    cfg = sim.cfg
    high = class_stats(table, PriorityClass.HIGH)
    return {
        "seed": cfg.seed,
        "theta": cfg.theta,
        "sigma": cfg.sigma,
        "vehicle_count": cfg.vehicle_count,
        "high_vehicle_count": int(sim.is_high.sum()),
        "realized_high_fraction": _r(sim.is_high.mean()),
        "expected_high_fraction": _r(tail_probability(cfg.theta, RayleighParams(cfg.sigma))),
        "messages_generated": int(sim.generated.sum()),
        "records": len(table),
        "delivery_ratio": class_stats(table, None)["delivery_ratio"],
        "frac_high_under_20ms": high["frac_under_20ms"],
        "p50_high_ms": high["p50_ms"],
        "p90_high_ms": high["p90_ms"],
        "classes": {
            "All": class_stats(table, None),
            "High": high,
            "Normal": class_stats(table, PriorityClass.NORMAL),
        },
    }


def run_scenario(cfg: ScenarioConfig, trace: list | None = None) -> tuple[RecordTable, dict]:
    """Simulate one scenario; the output is a pure function of ``cfg``."""
    return Simulation(cfg, trace=trace).run()


# -- latency distribution ------------------------------------------------

class CdfBin(NamedTuple):
    bin_left_ms: float
    bin_right_ms: float
    count: int
    cdf: float


def latency_cdf(records: RecordTable | Sequence[LatencyRecord], priority: PriorityClass | str | None = None,
                bin_width_ms: float = 1.0) -> list[CdfBin]:
    """Histogram and empirical CDF of delivered latencies of one class.

    Bins are ``[k w, (k+1) w)`` for ``k = 0 .. floor(max / w)``.
    """
    if not bin_width_ms > 0:
        raise ValueError("bin_width_ms must be positive")
    if isinstance(records, RecordTable):
        lat = records.latencies_ms(priority)
    else:
        want = None if priority in (None, "All") else PriorityClass(priority)
        lat = np.array([r.latency_ms for r in records
                        if r.outcome is Outcome.DELIVERED and (want is None or r.priority is want)], dtype=float)
    if len(lat) == 0:
        label = "All" if priority in (None, "All") else PriorityClass(priority).value
        raise ValueError(f"no delivered records for class {label}")
    idx = np.floor(lat / bin_width_ms + 1e-9).astype(np.int64)
    counts = np.bincount(idx, minlength=int(idx.max()) + 1)
    cum = np.cumsum(counts)
    total = cum[-1]
    return [CdfBin(k * bin_width_ms, (k + 1) * bin_width_ms, int(c), float(cc / total))
            for k, (c, cc) in enumerate(zip(counts, cum))]


# -- sweeps --------------------------------------------------------------

class SweepError(RuntimeError):
    def __init__(self, theta: float, seed: int, cause: Exception):
        self.theta, self.seed, self.cause = theta, seed, cause
        super().__init__(f"scenario theta={theta} seed={seed} failed: {cause}")


SWEEP_COLUMNS = ("theta", "seed", "p50_high_ms", "p90_high_ms", "frac_high_under_20ms", "delivery_ratio")


def _sweep_job(cfg: ScenarioConfig, sink=None) -> dict:
    try:
        table, summary = run_scenario(cfg)
        if sink is not None:
            sink(cfg, table, summary)
        return summary
    except Exception as exc:  # tagged and re-raised by the caller
        raise SweepError(cfg.theta, cfg.seed, exc) from exc


@dataclass
class SweepResult:
    rows: list[dict]
    summaries: list[dict]
    aggregates: dict[float, dict]


def aggregate_rows(rows: Sequence[dict], thetas: Sequence[float]) -> dict[float, dict]:
    """Per-theta median of per-seed High medians, with its standard error.

    Seeds whose run has no High-class delivery contribute no value.
    """
    out = {}
    for theta in thetas:
        group = [r for r in rows if r["theta"] == theta]
        meds = np.array([r["p50_high_ms"] for r in group if r["p50_high_ms"] is not None], dtype=float)
        fracs = np.array([r["frac_high_under_20ms"] for r in group if r["frac_high_under_20ms"] is not None], dtype=float)
        out[theta] = {
            "seeds": len(group),
            "seeds_with_high": int(len(meds)),
            "median_p50_high_ms": float(np.median(meds)) if len(meds) else None,
            "se_p50_high_ms": float(np.std(meds, ddof=1) / math.sqrt(len(meds))) if len(meds) > 1 else None,
            "mean_frac_high_under_20ms": float(np.mean(fracs)) if len(fracs) else None,
            "mean_delivery_ratio": float(np.mean([r["delivery_ratio"] for r in group if r["delivery_ratio"] is not None])) if group else None,
        }
    return out


def run_sweep(base: ScenarioConfig, thetas: Sequence[float], seeds: Sequence[int], workers: int = 1,
              sink=None) -> SweepResult:
    """One run per ``(theta, seed)``; results are merged in input order.

    ``sink(cfg, table, summary)`` is called after each run, inside the worker
    when ``workers > 1`` (so it must be picklable).
    """
    if not thetas or not seeds:
        raise ValueError("run_sweep needs at least one theta and one seed")
    cfgs = [base.with_updates(theta=float(t), seed=int(s)) for t in thetas for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_sweep_job, cfgs, [sink] * len(cfgs)))
    else:
        summaries = [_sweep_job(c, sink) for c in cfgs]
    rows = [{k: s[k] for k in SWEEP_COLUMNS} for s in summaries]
    return SweepResult(rows, summaries, aggregate_rows(rows, [float(t) for t in thetas]))
