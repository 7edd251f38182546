"""Deterministic closed-loop simulator of a pod-scaled inference service.

Each concurrent user issues one request, blocks until it completes, then
thinks for an exponentially distributed time. Requests share one FIFO queue
dispatched to the first idle pod; service times are lognormal with a
configurable mean and coefficient of variation. The simulator emits one
telemetry record per tick and doubles as the ground-truth oracle for
counterfactual regime deltas.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

DEFAULT_TICK_MS = 20.0

# entropy stream tags for sub-generators derived from one scenario seed
_STREAM_USER = 1
_STREAM_POD = 2
_STREAM_NOISE = 3
_STREAM_ANOMALY = 4
_STREAM_DEMAND = 6


class SimulationError(Exception):
    pass


class InsufficientCompletionsError(SimulationError):
    """A regime run produced no latency samples after warm-up."""


@dataclass(frozen=True, order=True)
class RegimeKey:
    """One operating regime: concurrent users x active pods."""

    users: int
    pods: int

    def __post_init__(self):
        if self.users < 0:
            raise ValueError(f"users must be >= 0, got {self.users}")
        if self.pods < 1:
            raise ValueError(f"pods must be >= 1, got {self.pods}")

    def label(self) -> str:
        return f"u{self.users}_p{self.pods}"


@dataclass(frozen=True)
class ClusterConfig:
    pods: int
    service_time_ms: float = 8.0
    service_cv: float = 0.25
    conn_overhead_ms: float = 0.5
    cpu_overhead_pct: float = 12.0
    mem_base_pct: float = 35.0

    def __post_init__(self):
        if self.pods < 1:
            raise ValueError(f"pods must be >= 1, got {self.pods}")
        if self.service_time_ms <= 0:
            raise ValueError("service_time_ms must be > 0")
        if self.service_cv < 0:
            raise ValueError("service_cv must be >= 0")
        if self.conn_overhead_ms < 0:
            raise ValueError("conn_overhead_ms must be >= 0")
        for name in ("cpu_overhead_pct", "mem_base_pct"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"{name} must be in [0, 100], got {v}")


@dataclass(frozen=True)
class WorkloadSpec:
    """Closed-loop demand: each user cycles request -> think.

    Think times stay exponential, but their mean drifts slowly (sinusoid of
    relative amplitude `think_modulation_amp`), so every regime sweeps a
    band of load states instead of pinning to a single fixed point.
    """

    users: int
    think_time_ms: float = 400.0
    think_modulation_amp: float = 0.80
    think_modulation_period_ms: float = 40000.0

    def __post_init__(self):
        if self.users < 0:
            raise ValueError(f"users must be >= 0, got {self.users}")
        if self.think_time_ms <= 0:
            raise ValueError("think_time_ms must be > 0")
        if not 0.0 <= self.think_modulation_amp < 1.0:
            raise ValueError("think_modulation_amp must be in [0, 1)")
        if self.think_modulation_period_ms <= 0:
            raise ValueError("think_modulation_period_ms must be > 0")


@dataclass(frozen=True)
class TelemetryRecord:
    """One telemetry tick for a (users, pods) regime.

    avg_total_infer_ms is None when no request completed inside the tick.
    """

    timestamp_ms: float
    current_users: int
    pods: int
    avg_depth_on_enqueue: float
    avg_backlog_sec_est: float
    avg_cpu_process_pct: float
    avg_cpu_system_pct: float
    avg_mem_system_pct: float
    avg_total_infer_ms: Optional[float] = None

    FIELDS = (
        "timestamp_ms",
        "current_users",
        "pods",
        "avg_depth_on_enqueue",
        "avg_backlog_sec_est",
        "avg_cpu_process_pct",
        "avg_cpu_system_pct",
        "avg_mem_system_pct",
        "avg_total_infer_ms",
    )

    @property
    def regime(self) -> RegimeKey:
        return RegimeKey(self.current_users, self.pods)

    def to_dict(self) -> dict:
        d = {
            "timestamp_ms": self.timestamp_ms,
            "current_users": self.current_users,
            "pods": self.pods,
            "avg_depth_on_enqueue": self.avg_depth_on_enqueue,
            "avg_backlog_sec_est": self.avg_backlog_sec_est,
            "avg_cpu_process_pct": self.avg_cpu_process_pct,
            "avg_cpu_system_pct": self.avg_cpu_system_pct,
            "avg_mem_system_pct": self.avg_mem_system_pct,
        }
        if self.avg_total_infer_ms is not None:
            d["avg_total_infer_ms"] = self.avg_total_infer_ms
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TelemetryRecord":
        return cls(
            timestamp_ms=float(d["timestamp_ms"]),
            current_users=int(d["current_users"]),
            pods=int(d["pods"]),
            avg_depth_on_enqueue=float(d["avg_depth_on_enqueue"]),
            avg_backlog_sec_est=float(d["avg_backlog_sec_est"]),
            avg_cpu_process_pct=float(d["avg_cpu_process_pct"]),
            avg_cpu_system_pct=float(d["avg_cpu_system_pct"]),
            avg_mem_system_pct=float(d["avg_mem_system_pct"]),
            avg_total_infer_ms=(
                float(d["avg_total_infer_ms"])
                if d.get("avg_total_infer_ms") is not None
                else None
            ),
        )


@dataclass(frozen=True)
class ScenarioSpec:
    regimes: tuple
    ticks_per_regime: int
    tick_ms: float = DEFAULT_TICK_MS
    seed: int = 0
    anomaly_rate: float = 0.0

    def __post_init__(self):
        if self.ticks_per_regime < 1:
            raise ValueError("ticks_per_regime must be >= 1")
        if self.tick_ms <= 0:
            raise ValueError("tick_ms must be > 0")
        if not 0.0 <= self.anomaly_rate < 1.0:
            raise ValueError("anomaly_rate must be in [0, 1)")


@dataclass(frozen=True)
class GroundTruthDelta:
    from_key: RegimeKey
    to_key: RegimeKey
    mean_delta_ms: float
    median_delta_ms: float
    sign: int


def _norm_seed(seed: int) -> int:
    return int(seed) & (2**64 - 1)


def _sub_rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([_norm_seed(seed), *tags]))


def _lognormal_params(mean: float, cv: float) -> tuple:
    sigma2 = math.log(1.0 + cv * cv)
    mu = math.log(mean) - 0.5 * sigma2
    return mu, math.sqrt(sigma2)


def run_regime(
    workload: WorkloadSpec,
    cluster: ClusterConfig,
    ticks: int,
    tick_ms: float = DEFAULT_TICK_MS,
    seed: int = 0,
    t0_ms: float = 0.0,
) -> list:
    """Simulate one regime and return exactly `ticks` telemetry records.

    Randomness comes from sub-streams keyed per user (think times) and per
    pod (service times), so two runs with the same seed but different pod
    counts see identical demand arrivals.
    """
    if ticks < 1:
        raise ValueError("ticks must be >= 1")
    if tick_ms <= 0:
        raise ValueError("tick_ms must be > 0")

    n_users = workload.users
    pods = cluster.pods
    user_rng = [_sub_rng(seed, _STREAM_USER, u) for u in range(n_users)]
    pod_rng = [_sub_rng(seed, _STREAM_POD, p) for p in range(pods)]
    noise_rng = _sub_rng(seed, _STREAM_NOISE)

    # demand modulation is keyed off the demand side only, so regime pairs
    # sharing a seed also share their load swings
    phase = float(_sub_rng(seed, _STREAM_DEMAND).uniform(0.0, 2.0 * math.pi))
    amp = workload.think_modulation_amp
    omega = 2.0 * math.pi / workload.think_modulation_period_ms

    def draw_think(u: int, t: float) -> float:
        mean = workload.think_time_ms * (1.0 + amp * math.sin(omega * t + phase))
        return float(user_rng[u].exponential(mean))

    if cluster.service_cv > 0:
        mu, sigma = _lognormal_params(cluster.service_time_ms, cluster.service_cv)

        def draw_service(p):
            return float(pod_rng[p].lognormal(mu, sigma))

    else:

        def draw_service(p):
            return cluster.service_time_ms

    # event heap entries: (time, seq, kind, payload); seq breaks ties deterministically
    events = []
    seq = 0
    for u in range(n_users):
        t = draw_think(u, 0.0)
        heapq.heappush(events, (t, seq, "arrive", u, 0.0))
        seq += 1

    # each pod multiplexes users/pods connections; delivering a response
    # costs a fan-out overhead that adds to latency without occupying the pod
    deliver_ms = cluster.conn_overhead_ms * n_users / pods

    queue = deque()  # (enqueue_time, user)
    idle = list(range(pods))
    heapq.heapify(idle)
    busy = 0
    requests_issued = 0
    requests_done = 0

    sim_end = ticks * tick_ms
    records = []
    tick_idx = 0
    tick_end = tick_ms
    last_t = 0.0
    busy_integral = 0.0
    completions = []
    depths = []
    mem_pct = cluster.mem_base_pct

    def flush_tick():
        nonlocal tick_idx, tick_end, busy_integral, completions, depths, mem_pct, last_t
        busy_integral += busy * (tick_end - last_t)
        last_t = tick_end
        cpu_proc = 100.0 * busy_integral / (pods * tick_ms)
        cpu_sys = float(
            np.clip(cluster.cpu_overhead_pct + noise_rng.normal(0.0, 2.0), 0.0, 100.0)
        )
        mem_pct = float(np.clip(mem_pct + noise_rng.normal(0.0, 0.05), 0.0, 100.0))
        records.append(
            TelemetryRecord(
                timestamp_ms=t0_ms + tick_idx * tick_ms,
                current_users=n_users,
                pods=pods,
                # when a slow tick saw no enqueue at all, the instantaneous
                # queue length is the best available depth estimate
                avg_depth_on_enqueue=(
                    (sum(depths) / len(depths)) if depths else float(len(queue))
                ),
                avg_backlog_sec_est=len(queue)
                * cluster.service_time_ms
                / (pods * 1000.0),
                avg_cpu_process_pct=min(100.0, max(0.0, cpu_proc)),
                avg_cpu_system_pct=cpu_sys,
                avg_mem_system_pct=mem_pct,
                avg_total_infer_ms=(sum(completions) / len(completions))
                if completions
                else None,
            )
        )
        tick_idx += 1
        tick_end = (tick_idx + 1) * tick_ms
        busy_integral = 0.0
        completions = []
        depths = []

    def start_service(t, pod, t_enq, user):
        nonlocal seq
        svc = draw_service(pod)
        heapq.heappush(events, (t + svc, seq, "depart", pod, (t_enq, user)))
        seq += 1

    while events:
        t, _, kind, a, b = events[0]
        if t >= sim_end:
            break
        # close out any ticks that end before this event
        while tick_end <= t:
            flush_tick()
            if tick_idx >= ticks:
                break
        if tick_idx >= ticks:
            break
        heapq.heappop(events)
        busy_integral += busy * (t - last_t)
        last_t = t
        if kind == "arrive":
            user = a
            requests_issued += 1
            depths.append(float(len(queue)))
            if idle:
                pod = heapq.heappop(idle)
                busy += 1
                start_service(t, pod, t, user)
            else:
                queue.append((t, user))
        else:  # depart
            pod = a
            t_enq, user = b
            requests_done += 1
            completions.append(t - t_enq + deliver_ms)
            think = draw_think(user, t)
            heapq.heappush(events, (t + deliver_ms + think, seq, "arrive", user, 0.0))
            seq += 1
            if queue:
                t_enq2, user2 = queue.popleft()
                start_service(t, pod, t_enq2, user2)
            else:
                heapq.heappush(idle, pod)
                busy -= 1

    while tick_idx < ticks:
        flush_tick()

    assert requests_done <= requests_issued
    return records


def inject_anomalies(
    records: Sequence[TelemetryRecord], rate: float, seed: int = 0
) -> list:
    """Multiply a ~rate fraction of latency samples by a spike factor >= 5."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return list(records)
    rng = _sub_rng(seed, _STREAM_ANOMALY)
    out = []
    for rec in records:
        if rec.avg_total_infer_ms is not None and rng.random() < rate:
            # spikes sit far above any natural per-regime tail so the
            # refinement trim can isolate them
            factor = 30.0 + 50.0 * rng.random()
            out.append(replace(rec, avg_total_infer_ms=rec.avg_total_infer_ms * factor))
        else:
            out.append(rec)
    return out


def _steady_latencies(records: Sequence[TelemetryRecord], warmup_frac: float = 0.1):
    warm = int(len(records) * warmup_frac)
    return [
        r.avg_total_infer_ms
        for r in records[warm:]
        if r.avg_total_infer_ms is not None
    ]


def oracle_delta(
    from_regime: tuple,
    to_regime: tuple,
    ticks: int,
    seed: int = 0,
    tick_ms: float = DEFAULT_TICK_MS,
    epsilon_tie_ms: float = 0.5,
) -> GroundTruthDelta:
    """Ground-truth latency delta between two regimes under shared demand randomness.

    The first 10% of ticks of each run are discarded as warm-up.
    """
    (wl_a, cl_a), (wl_b, cl_b) = from_regime, to_regime
    recs_a = run_regime(wl_a, cl_a, ticks, tick_ms=tick_ms, seed=seed)
    recs_b = run_regime(wl_b, cl_b, ticks, tick_ms=tick_ms, seed=seed)
    lat_a = _steady_latencies(recs_a)
    lat_b = _steady_latencies(recs_b)
    if not lat_a or not lat_b:
        raise InsufficientCompletionsError(
            "one of the regime runs produced no latency samples after warm-up"
        )
    mean_delta = float(np.mean(lat_b) - np.mean(lat_a))
    median_delta = float(np.median(lat_b) - np.median(lat_a))
    if abs(mean_delta) < epsilon_tie_ms:
        sign = 0
    else:
        sign = 1 if mean_delta > 0 else -1
    return GroundTruthDelta(
        from_key=RegimeKey(wl_a.users, cl_a.pods),
        to_key=RegimeKey(wl_b.users, cl_b.pods),
        mean_delta_ms=mean_delta,
        median_delta_ms=median_delta,
        sign=sign,
    )


def run_scenario(spec: ScenarioSpec) -> list:
    """Run every regime of a scenario back to back on one global timeline."""
    out = []
    for i, (workload, cluster) in enumerate(spec.regimes):
        # every regime shares the scenario seed, so demand swings, system
        # noise, and anomaly placement line up across regimes and cross-regime
        # comparisons contrast like load states
        records = run_regime(
            workload,
            cluster,
            spec.ticks_per_regime,
            tick_ms=spec.tick_ms,
            seed=spec.seed,
            t0_ms=i * spec.ticks_per_regime * spec.tick_ms,
        )
        if spec.anomaly_rate > 0:
            records = inject_anomalies(records, spec.anomaly_rate, seed=spec.seed)
        out.extend(records)
    return out
