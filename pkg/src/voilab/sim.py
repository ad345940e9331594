"""Seeded discrete-event simulation of the three packet-management disciplines.

One run draws the whole packet stream up front (Philox counter-based streams,
one per random source), replays arrivals and service completions in time
order with a two-event merge loop, and post-processes the delivery log into
time-average VoI, time-average age, state occupancies and their batch-means
standard errors.  Identical config and seed give bit-identical reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import (
    DescendFunction,
    MG11,
    MG12,
    Packet,
    Scenario,
    q_area_batch,
    sample_service_times,
    value_at,
)

# Substream indices for the counter-based generator: the key is
# (seed, stream), so arrivals, values and services stay decoupled no matter
# how many draws each consumes.
_STREAM_ARRIVALS = 0
_STREAM_VALUES = 1
_STREAM_SERVICES = 2


def rng_stream(seed: int, stream: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class SimConfig:
    scenario: Scenario
    n_packets: int = 1_000_000
    seed: int = 0
    sample_voi_every: Optional[float] = None
    n_batches: int = 100
    trace: bool = False         # keep per-packet arrays and service starts
    event_trace: bool = False   # keep one (time, kind, id, state) tuple per event

    def __post_init__(self) -> None:
        if self.n_packets < 1:
            raise ValueError("need at least one packet")
        if self.n_batches < 2:
            raise ValueError("batch-means standard errors need >= 2 batches")
        if self.sample_voi_every is not None and self.sample_voi_every <= 0.0:
            raise ValueError("sampling interval must be > 0")


@dataclass(frozen=True)
class SimReport:
    n_generated: int
    n_delivered: int
    n_expired: int
    elapsed: float
    avg_voi: float
    stderr_voi: float
    avg_aoi: float
    stderr_aoi: float
    occupancy: tuple[float, float, float]          # time fractions of I, B1, B2
    occupancy_stderr: tuple[float, float, float]
    arrival_seen: tuple[float, float, float]       # state fractions seen by arrivals
    sampled_voi_mean: Optional[float]
    seed: int
    n_batches: int
    # Debug payloads (trace / event_trace only); excluded from equality.
    events: Optional[tuple] = field(default=None, compare=False)
    detail: Optional[dict] = field(default=None, compare=False)


def simulate(config: SimConfig) -> SimReport:
    """Run one seeded simulation of the configured scenario."""
    sc = config.scenario
    n = config.n_packets
    n_batches = min(config.n_batches, n)

    rng_a = rng_stream(config.seed, _STREAM_ARRIVALS)
    rng_v = rng_stream(config.seed, _STREAM_VALUES)
    rng_s = rng_stream(config.seed, _STREAM_SERVICES)

    t_gen = np.cumsum(rng_a.exponential(1.0 / sc.lam, n))
    values, classes = sc.value_dist.sample(rng_v, n)
    services = sample_service_times(sc.service, values, classes, rng_s)

    keep_cls = sc.admitted_class()
    admitted = None if keep_cls is None else (classes == keep_cls)

    state = _event_loop(
        t_gen.tolist(),
        services.tolist(),
        admitted.tolist() if admitted is not None else None,
        {MG11: 0, MG12: 1}.get(sc.discipline, 2),
        n,
        n_batches,
        config.event_trace,
        config.trace,
    )
    elapsed = state["elapsed"]
    d_idx = np.array(state["delivered_ids"], dtype=np.int64)
    d_t = np.array(state["delivered_times"])

    deadline = sc.descend.deadline
    t_sys = d_t - t_gen[d_idx]
    q = q_area_batch(sc.descend, values[d_idx], t_sys)
    n_expired = int(np.count_nonzero(t_sys >= deadline))

    # Batch edges by generation index; renewal-reward batching assigns each
    # packet's area to the batch of its generation epoch.
    edges_idx = (np.arange(1, n_batches) * n) // n_batches
    edges_t = np.concatenate(([0.0], t_gen[edges_idx], [elapsed]))
    spans = np.diff(edges_t)

    q_full = np.zeros(n)
    q_full[d_idx] = q
    batch_sums = np.add.reduceat(q_full, np.concatenate(([0], edges_idx)))
    avg_voi = float(q.sum() / elapsed)
    stderr_voi = _batch_stderr(batch_sums / spans)

    avg_aoi, stderr_aoi = _age_statistics(t_gen, d_idx, d_t, elapsed, edges_t)

    occ = np.array(state["occupancy"])  # (3, n_batches)
    occ_totals = occ.sum(axis=1)
    occupancy = tuple((occ_totals / elapsed).tolist())
    batch_elapsed = occ.sum(axis=0)
    with np.errstate(invalid="ignore"):
        occ_frac = np.where(batch_elapsed > 0.0, occ / batch_elapsed, 0.0)
    occupancy_stderr = tuple(_batch_stderr(row) for row in occ_frac)

    seen = np.array(state["seen"], dtype=float)
    arrival_seen = tuple((seen / seen.sum()).tolist())

    sampled = None
    if config.sample_voi_every is not None:
        sampled = _sampled_voi_mean(
            sc.descend, t_gen, values, d_idx, d_t, elapsed, config.sample_voi_every
        )

    detail = None
    if config.trace:
        detail = {
            "t_gen": t_gen,
            "values": values,
            "classes": classes,
            "services": services,
            "admitted": admitted,
            "delivered_ids": d_idx,
            "delivered_times": d_t,
            "q_areas": q,
            "service_start_ids": np.array(state["start_ids"], dtype=np.int64),
            "service_start_times": np.array(state["start_times"]),
        }

    return SimReport(
        n_generated=n,
        n_delivered=int(d_idx.size),
        n_expired=n_expired,
        elapsed=float(elapsed),
        avg_voi=avg_voi,
        stderr_voi=stderr_voi,
        avg_aoi=avg_aoi,
        stderr_aoi=stderr_aoi,
        occupancy=occupancy,
        occupancy_stderr=occupancy_stderr,
        arrival_seen=arrival_seen,
        sampled_voi_mean=sampled,
        seed=config.seed,
        n_batches=n_batches,
        events=tuple(state["events"]) if config.event_trace else None,
        detail=detail,
    )


def _event_loop(tg, sv, adm, disc, n, n_batches, want_events, want_starts):
    """Merge the precomputed arrival stream with service completions.

    States: 0 idle, 1 busy with empty buffer, 2 busy with occupied buffer.
    Arrivals in busy state are discarded (no buffer), parked in the free
    buffer slot (FCFS), or overwrite the buffered packet (LCFS).
    """
    inf = math.inf
    occ0 = [0.0] * n_batches
    occ1 = [0.0] * n_batches
    occ2 = [0.0] * n_batches
    seen = [0, 0, 0]
    delivered_ids: list[int] = []
    delivered_times: list[float] = []
    start_ids: list[int] = []
    start_times: list[float] = []
    events: list[tuple] = []

    t = 0.0
    state = 0
    b = 0
    i = 0
    srv = -1
    srv_done = inf
    buf = -1
    while True:
        if i < n:
            ta = tg[i]
        elif srv < 0:
            break
        else:
            ta = inf
        if ta <= srv_done:
            dt = ta - t
            if state == 0:
                occ0[b] += dt
            elif state == 1:
                occ1[b] += dt
            else:
                occ2[b] += dt
            t = ta
            seen[state] += 1
            if want_events:
                events.append((t, "arrival", i, state))
            if adm is None or adm[i]:
                if srv < 0:
                    srv = i
                    srv_done = t + sv[i]
                    state = 1
                    if want_starts:
                        start_ids.append(i)
                        start_times.append(t)
                elif disc == 1:
                    if buf < 0:
                        buf = i
                        state = 2
                elif disc == 2:
                    buf = i
                    state = 2
            i += 1
            b = (i * n_batches) // n
            if b >= n_batches:
                b = n_batches - 1
        else:
            dt = srv_done - t
            if state == 1:
                occ1[b] += dt
            else:
                occ2[b] += dt
            t = srv_done
            if want_events:
                events.append((t, "completion", srv, state))
            delivered_ids.append(srv)
            delivered_times.append(t)
            if buf >= 0:
                srv = buf
                buf = -1
                srv_done = t + sv[srv]
                state = 1
                if want_starts:
                    start_ids.append(srv)
                    start_times.append(t)
            else:
                srv = -1
                srv_done = inf
                state = 0
    return {
        "elapsed": t,
        "occupancy": (occ0, occ1, occ2),
        "seen": seen,
        "delivered_ids": delivered_ids,
        "delivered_times": delivered_times,
        "start_ids": start_ids,
        "start_times": start_times,
        "events": events,
    }


def _batch_stderr(batch_means: np.ndarray) -> float:
    m = np.asarray(batch_means, dtype=float)
    if m.size < 2:
        return 0.0
    return float(m.std(ddof=1) / math.sqrt(m.size))


def _age_statistics(t_gen, d_idx, d_t, elapsed, edges_t):
    """Time-average age and its batch-means standard error.

    The age process starts at zero, grows with slope one, and drops to
    (delivery time - generation time) whenever a delivery is fresher than
    everything received so far; stale out-of-order deliveries never reset it.
    """
    if d_idx.size == 0:
        return float(elapsed / 2.0), 0.0
    gen = t_gen[d_idx]
    run_max = np.maximum.accumulate(gen)
    fresh = np.empty(gen.size, dtype=bool)
    fresh[0] = True
    fresh[1:] = gen[1:] > run_max[:-1]
    # Segment k (starting at reset time r_k) has age t - u_k.
    r = np.concatenate(([0.0], d_t[fresh]))
    u = np.concatenate(([0.0], gen[fresh]))
    seg_end = np.concatenate((r[1:], [elapsed]))
    seg_int = 0.5 * ((seg_end - u) ** 2 - (r - u) ** 2)
    cum = np.concatenate(([0.0], np.cumsum(seg_int)))

    def age_integral_at(x):
        k = np.clip(np.searchsorted(r, x, side="right") - 1, 0, r.size - 1)
        return cum[k] + 0.5 * ((x - u[k]) ** 2 - (r[k] - u[k]) ** 2)

    total = float(age_integral_at(np.array([elapsed]))[0])
    at_edges = age_integral_at(edges_t)
    spans = np.diff(edges_t)
    batch_means = np.diff(at_edges) / spans
    return total / elapsed, _batch_stderr(batch_means)


def _sampled_voi_mean(descend, t_gen, values, d_idx, d_t, elapsed, step):
    """Mean of instantaneous VoI sampled on a regular grid."""
    samples = np.arange(0.0, elapsed, step)
    deadline = descend.deadline
    gen = t_gen[d_idx]
    alive = (d_t - gen) < deadline
    gen = gen[alive]
    v0 = values[d_idx][alive]
    t_on = d_t[alive]
    t_off = gen + deadline
    if descend.kind == "linear":
        # Each live packet contributes v0 (1 - (t - gen)/D) = alpha - beta t.
        alpha = v0 * (1.0 + gen / deadline)
        beta = v0 / deadline
        ev_t = np.concatenate((t_on, t_off))
        ev_a = np.concatenate((alpha, -alpha))
        ev_b = np.concatenate((beta, -beta))
        order = np.argsort(ev_t, kind="stable")
        ev_t = ev_t[order]
        cum_a = np.cumsum(ev_a[order])
        cum_b = np.cumsum(ev_b[order])
        k = np.searchsorted(ev_t, samples, side="right") - 1
        voi = np.where(k >= 0, cum_a[np.clip(k, 0, None)] - samples * cum_b[np.clip(k, 0, None)], 0.0)
        return float(voi.mean())
    # Generic decay laws: sweep with an explicit active set (meant for small runs).
    order_on = np.argsort(t_on, kind="stable")
    gen, v0, t_on, t_off = gen[order_on], v0[order_on], t_on[order_on], t_off[order_on]
    import heapq

    active: list[tuple[float, int]] = []
    total = 0.0
    j = 0
    for ts in samples:
        while j < t_on.size and t_on[j] <= ts:
            heapq.heappush(active, (float(t_off[j]), j))
            j += 1
        while active and active[0][0] <= ts:
            heapq.heappop(active)
        total += sum(value_at(descend, float(v0[k]), float(ts - gen[k])) for _, k in active)
    return total / samples.size


def instantaneous_voi(
    descend: DescendFunction, receiver_log: Iterable[Packet], t: float
) -> float:
    """Sum of the current values of all packets delivered by time ``t``."""
    total = 0.0
    for p in receiver_log:
        if p.t_recv is None or p.discarded or p.t_recv > t:
            continue
        total += value_at(descend, p.v0, t - p.t_gen)
    return total


def delivered_packets(report: SimReport) -> list[Packet]:
    """Materialize the delivery log of a trace-enabled run as Packet records."""
    if report.detail is None:
        raise ValueError("run the simulation with trace=True to keep the delivery log")
    d = report.detail
    ids = d["delivered_ids"]
    cls = d["classes"]
    return [
        Packet(
            id=int(j),
            t_gen=float(d["t_gen"][j]),
            v0=float(d["values"][j]),
            s=float(d["services"][j]),
            cls=int(cls[j]) if cls is not None else None,
            t_recv=float(t),
            q_area=float(qa),
        )
        for j, t, qa in zip(ids, d["delivered_times"], d["q_areas"])
    ]


def format_events(events: Sequence[tuple]) -> str:
    """Render an event trace one line per event: time, kind, packet, state."""
    names = ("I", "B1", "B2")
    return "\n".join(
        f"{t:.9f}\t{kind}\t{pkt}\t{names[state]}" for t, kind, pkt, state in events
    )
