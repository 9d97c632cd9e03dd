"""Brute-force re-enactment of the MAC rules on a small static instance.

Everything except the radio is recomputed here with plain loops: keep or
reselect decisions, per-resource sensed RSRP, the exclusion threshold with
the minimum-survivor rule, uniform selection, reselection counters and
preemption. Radio outcomes (which receiver decoded which transmission) are
read from the ``decode`` rows of the trace under test, so any divergence in
who transmits where shows up as a row mismatch.
"""

import math
import random
from collections import defaultdict

from v2xprio.config import build_config
from v2xprio.distraction import PriorityClass
from v2xprio.streams import derive_stream

N_VEHICLES = 4
N_SLOTS = 10  # reservation period and longest selection window
N_SUBCHANNELS = 2


def toy_config(seed: int):
    """Toy scenario for ``seed``; parameters vary per seed to hit every rule."""
    pick = random.Random(seed)
    return build_config({
        "seed": seed,
        "vehicle_count": N_VEHICLES,
        "static": True,
        "map_bounds_m": pick.choice([60.0, 200.0, 1000.0]),
        "junction_count": 1,
        "theta": pick.choice([0.0, 1.5, 2.0, 2.5, 3.0, 100.0]),
        "bsm_rate_hz": 100.0,
        "sim_duration_s": 0.2,
        "warmup_s": 0.0,
        "mac": {
            "slot_duration_ms": 1.0,
            "subchannels": N_SUBCHANNELS,
            "resource_reservation_period_ms": float(N_SLOTS),
            "sensing_window_ms": float(N_SLOTS),
            "rsrp_exclusion_threshold_dbm": pick.choice([-110.0, -70.0, -50.0, -35.0]),
            # most seeds use the standard 20 % survivor rule; the rest force threshold raising
            "min_candidate_fraction": pick.choice([0.2, 0.2, 0.2, 0.9, 1.0]),
            "policy": {
                "high_latency_budget_ms": pick.choice([2.0, 3.0, 4.0, 6.0, 10.0]),
                "normal_latency_budget_ms": float(N_SLOTS),
                "preemption_enabled": pick.random() < 0.8,
            },
        },
    })


def replay(cfg, rx_dbm, priorities, phases, trace):
    mac = cfg.mac
    pol = mac.policy
    slot_ms = mac.slot_duration_ms
    period = round(mac.resource_reservation_period_ms / slot_ms)
    gen_every = round(1000.0 / cfg.bsm_rate_hz / slot_ms)
    window_len = round(mac.sensing_window_ms / slot_ms)
    t1 = mac.t1_slots
    total = round(cfg.sim_duration_s * 1000.0 / slot_ms)
    t2 = {
        PriorityClass.HIGH: math.floor(pol.high_latency_budget_ms / slot_ms + 1e-9),
        PriorityClass.NORMAL: math.floor(pol.normal_latency_budget_ms / slot_ms + 1e-9),
    }
    n = len(priorities)
    rng = derive_stream(cfg.seed, "mac")

    decode_rows = defaultdict(list)
    for row in trace:
        if row[2] == "decode":
            decode_rows[(row[0], int(row[4].split("=")[1]))].append(row)

    nxt = [None] * n
    sub = [None] * n
    counter = [0] * n
    pending_resel = [True] * n
    planned = {}  # vehicle -> [slot, subchannel, gen slot, msg id]
    sensed = {}  # (rx, tx) -> (slot, subchannel, announced)
    claims = [[] for _ in range(n)]
    generated = [0] * n
    msg_ids = iter(range(10**9))
    out = []

    def high_preempts(v, u):
        return (pol.preemption_enabled and priorities[v] is PriorityClass.HIGH
                and priorities[u] is PriorityClass.NORMAL)

    def live_sensed(v, u, now):
        if (v, u) not in sensed:
            return None
        ls, lc, ann = sensed[(v, u)]
        if not ann or not (now - window_len <= ls < now):
            return None
        return ls, lc

    def projects_onto(entry, res):
        ls, lc = entry
        return lc == res[1] and res[0] > ls and (res[0] - ls) % period == 0

    def sensed_rsrp(v, now, res):
        best = -math.inf
        for u in range(n):
            if u == v or high_preempts(v, u):
                continue
            e = live_sensed(v, u, now)
            if e is not None and projects_onto(e, res):
                best = max(best, rx_dbm[u][v])
        for cs, cc, crsrp in claims[v]:
            if cs >= now and (cs, cc) == res:
                best = max(best, crsrp)
        return best

    def assign(v, slot, c, g, mid):
        nxt[v] = slot + period
        sub[v] = c
        planned[v] = [slot, c, g, mid]

    def expire(now, v, mid):
        out.append((now, v, "expired", "", f"msg={mid}"))
        pending_resel[v] = True
        nxt[v] = None

    def reselect(now, v, g, mid, reason):
        lo = max(g + t1, now + t1)
        hi = g + t2[priorities[v]]
        if lo > hi:
            expire(now, v, mid)
            return
        claims[v] = [c for c in claims[v] if c[0] >= now]
        window = [(s, c) for s in range(lo, hi + 1) for c in range(mac.subchannels)]
        rsrp = {res: sensed_rsrp(v, now, res) for res in window}
        need = math.ceil(mac.min_candidate_fraction * len(window) - 1e-9)
        thr = mac.rsrp_exclusion_threshold_dbm
        while True:
            survivors = sorted(res for res in window if rsrp[res] <= thr)
            if len(survivors) >= need:
                break
            thr += pol.threshold_step_db
        pick = survivors[int(rng.integers(len(survivors)))]
        counter[v] = int(rng.integers(mac.reselection_counter_min, mac.reselection_counter_max + 1))
        pending_resel[v] = False
        out.append((now, v, "select", f"{pick[0]}:{pick[1]}", f"{reason};counter={counter[v]}"))
        assign(v, pick[0], pick[1], g, mid)
        if pol.preemption_enabled and priorities[v] is PriorityClass.HIGH:
            victims = []
            for u in range(n):
                if u != v and high_preempts(v, u):
                    e = live_sensed(v, u, now)
                    if e is not None and projects_onto(e, pick):
                        victims.append(u)
            for u in victims:
                preempt(now, u, pick, v)

    def preempt(now, u, res, by):
        has_pending = u in planned and (planned[u][0], planned[u][1]) == res
        holds_future = nxt[u] is not None and sub[u] == res[1] and (res[0] - nxt[u]) % period == 0
        if not (has_pending or holds_future):
            return
        out.append((now, u, "preempted", f"{res[0]}:{res[1]}", f"by={by}"))
        nxt[u] = None
        pending_resel[u] = True
        claims[u].append((res[0], res[1], float(rx_dbm[by][u])))
        if has_pending:
            _, _, g, mid = planned.pop(u)
            reselect(now, u, g, mid, "preempted")

    def generate(v, g):
        generated[v] += 1
        mid = next(msg_ids)
        lo, hi = g + t1, g + t2[priorities[v]]
        if generated[v] == 1:
            reason = "initial"
        elif pending_resel[v] or nxt[v] is None:
            reason = "counter" if counter[v] <= 0 else "released"
        else:
            r = nxt[v]
            while r < lo:
                r += period
            if r <= hi:
                out.append((g, v, "keep", f"{r}:{sub[v]}", ""))
                assign(v, r, sub[v], g, mid)
                return
            reason = "out_of_budget"
        reselect(g, v, g, mid, reason)

    s = 0
    while s < total or planned:
        for v in sorted(v for v, p in planned.items() if p[0] == s):
            _, c, _, _ = planned.pop(v)
            counter[v] -= 1
            if counter[v] <= 0:
                pending_resel[v] = True
                nxt[v] = None
            ann = not pending_resel[v]
            out.append((s, v, "tx", f"{s}:{c}", "announce" if ann else "release"))
            for row in decode_rows[(s, v)]:
                out.append(row)
                sensed[(row[1], v)] = (s, c, ann)
        if s < total:
            for v in range(n):
                if s >= phases[v] and (s - phases[v]) % gen_every == 0:
                    generate(v, s)
        s += 1
    return out
