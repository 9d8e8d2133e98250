"""Simulated stateful edge app moving between edge hosts.

One user's state lives in an :class:`EdgeStore` on the serving edge host.
Dynamic objects are overwritten at Poisson-timed instants; a client sends a
request every ``client_interval_ms``.  At each handover the server migrates
the state to the next host, either reactively (blocking sync only) or in two
steps (background sync from the mobility hint, then blocking sync).  All
hosts share one simulated clock and talk over throttled links.

Downtime is taken at the request level: from the first request that goes
unanswered to the first one answered by the target.  Service resumes after
the control-plane handover gap, the blocking sync and one reconnect round
trip, in that order.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .mobility import EdgeHost, EdgeTopology, EventKind, MobilityEvent, MobilityHandler
from .predictor.pipeline import HandoverPrediction
from .store import EdgeStore, SimClock, SimPeer
from .store.store import BackgroundSession

MODES = ("baseline", "two_step")
USER = "ue-1"


class InvalidScenario(ValueError):
    code = "INVALID_SCENARIO"


@dataclass(frozen=True)
class StateObject:
    size: int
    rate: float  # whole-object overwrites per second


@dataclass(frozen=True)
class StateProfile:
    objects: tuple[StateObject, ...]

    @classmethod
    def build(cls, total_bytes: int, dynamic_fraction: float, update_rate: float,
              dynamic_object_bytes: int = 2048, static_object_bytes: int = 32768) -> "StateProfile":
        """Split ``total_bytes`` into static and dynamic objects of roughly the given sizes."""
        if not 0 <= dynamic_fraction <= 1:
            raise InvalidScenario("dynamic fraction must be in [0, 1]")
        if total_bytes < 0 or update_rate < 0 or dynamic_object_bytes <= 0 or static_object_bytes <= 0:
            raise InvalidScenario("sizes and rates must be non-negative")
        dyn = int(round(total_bytes * dynamic_fraction))
        if update_rate == 0:
            dyn = 0
        objs = [StateObject(s, float(update_rate)) for s in _split(dyn, dynamic_object_bytes)]
        objs += [StateObject(s, 0.0) for s in _split(total_bytes - dyn, static_object_bytes)]
        return cls(tuple(objs))

    @property
    def total_bytes(self) -> int:
        return sum(o.size for o in self.objects)

    @property
    def dynamic_bytes(self) -> int:
        return sum(o.size for o in self.objects if o.rate > 0)

    @property
    def dynamic_fraction(self) -> float:
        total = self.total_bytes
        return self.dynamic_bytes / total if total else 0.0


def _split(total: int, chunk: int) -> list[int]:
    if total <= 0:
        return []
    n = math.ceil(total / chunk)
    base, extra = divmod(total, n)
    return [base + (1 if i < extra else 0) for i in range(n)]


# A large map-like state with a small hot part, and a small state that is all hot.
def carmap_profile() -> StateProfile:
    return StateProfile.build(2_300_000, 0.041, 50.0)


def emp_profile(total_bytes: int = 460_000) -> StateProfile:
    return StateProfile.build(total_bytes, 1.0, 30.0)


@dataclass(frozen=True)
class Scenario:
    profile: StateProfile
    mode: str = "two_step"
    horizon_ms: float = 100.0
    client_interval_ms: float = 1.0
    bandwidth_bps: float = 1e9
    latency_ms: float = 1.0
    handovers: int = 1
    warmup_ms: float = 1000.0
    handover_spacing_ms: float = 1500.0
    misprediction_rate: float = 0.0
    cp_gap_ms: float = 4.4
    reconnect_rtt_ms: float = 2.0
    seed: int = 0

    def validate(self) -> None:
        if self.mode not in MODES:
            raise InvalidScenario(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.horizon_ms < 0:
            raise InvalidScenario("horizon must be >= 0")
        if self.bandwidth_bps <= 0:
            raise InvalidScenario("bandwidth must be > 0")
        if self.latency_ms < 0 or self.client_interval_ms <= 0 or self.cp_gap_ms < 0 or self.reconnect_rtt_ms < 0:
            raise InvalidScenario("latency, gaps and client interval must be non-negative (interval > 0)")
        if self.handovers < 0:
            raise InvalidScenario("handover count must be >= 0")
        if not 0 <= self.misprediction_rate <= 1:
            raise InvalidScenario("misprediction rate must be in [0, 1]")
        if self.horizon_ms > self.warmup_ms or self.horizon_ms >= self.handover_spacing_ms:
            raise InvalidScenario("horizon must fit inside the warmup and the handover spacing")


@dataclass
class Measurements:
    rtt: list[tuple[float, float]] = field(default_factory=list)
    blocking_ms: list[float] = field(default_factory=list)
    downtime_ms: list[float] = field(default_factory=list)
    cp_gap_ms: list[float] = field(default_factory=list)
    residual_keys: list[int] = field(default_factory=list)
    mispredicted: list[bool] = field(default_factory=list)
    checksum_ok: list[bool] = field(default_factory=list)
    background_bytes: int = 0
    blocking_bytes: int = 0
    link_bytes: int = 0

    def extend(self, other: "Measurements") -> None:
        for name in ("rtt", "blocking_ms", "downtime_ms", "cp_gap_ms", "residual_keys", "mispredicted",
                     "checksum_ok"):
            getattr(self, name).extend(getattr(other, name))
        self.background_bytes += other.background_bytes
        self.blocking_bytes += other.blocking_bytes
        self.link_bytes += other.link_bytes

    @property
    def bytes_transferred(self) -> int:
        return self.background_bytes + self.blocking_bytes

    def median(self, name: str) -> float:
        data = getattr(self, name)
        return float(np.median(data)) if len(data) else float("nan")

    def percentile(self, name: str, q: float) -> float:
        data = getattr(self, name)
        return float(np.percentile(data, q)) if len(data) else float("nan")


CpGapSampler = Callable[[np.random.Generator], float]

_UPDATE, _HINT, _HANDOVER, _SEND = 0, 1, 2, 3
_HOSTS = ("edge-a", "edge-b", "edge-w")


class _App:
    """Server half of the app: reacts to mobility events by migrating state."""

    def __init__(self, sim: "_Run") -> None:
        self.sim = sim
        self.host = 0
        self.session: Optional[BackgroundSession] = None
        self.session_dest: Optional[int] = None
        self.sending = False
        self.down_until = -math.inf
        self.frozen_from = math.inf

    def on_event(self, ev: MobilityEvent) -> None:
        # runs on the simulator's thread; just acts on the current instant
        dest = _HOSTS.index(ev.target_host.address)
        if ev.kind is EventKind.HINT:
            self.sim.start_background(dest)
        elif ev.kind is EventKind.HANDOVER_START:
            self.sim.migrate(dest, ev)


class _Run:
    def __init__(self, sc: Scenario, cp_gap: Optional[CpGapSampler]) -> None:
        self.sc = sc
        self.cp_gap = cp_gap
        self.rng = np.random.default_rng(sc.seed)
        self.clock = SimClock(0.0)
        self.stores = [EdgeStore(name, self.clock) for name in _HOSTS]
        self.peers = {(i, j): SimPeer(self.stores[j], self.clock, sc.bandwidth_bps, sc.latency_ms)
                      for i in range(3) for j in range(3) if i != j}
        topo = EdgeTopology({i + 1: EdgeHost(name, 7000) for i, name in enumerate(_HOSTS)})
        self.handler = MobilityHandler(topo)
        self.app = _App(self)
        self.handler.register_app("app", self.app.on_event, users=[USER])
        self.handler.set_serving(USER, 1)
        self.heap: list[tuple[float, int, int, int]] = []
        self._seq = 0
        self.out = Measurements()
        self.keys = [f"obj-{i:05d}".encode() for i in range(len(sc.profile.objects))]

    def push(self, t: float, kind: int, data: int = 0) -> None:
        self._seq += 1
        heapq.heappush(self.heap, (t, self._seq, kind, data))

    # -- actions -------------------------------------------------------------

    def start_background(self, dest: int) -> None:
        app = self.app
        peer = self.peers[(app.host, dest)]
        app.session = self.stores[app.host].open_background(USER, peer)
        app.session_dest = dest
        app.session.open()
        self.kick(self.clock.now)

    def kick(self, t: float) -> None:
        app = self.app
        if app.session is not None and not app.session.cancelled and not app.sending:
            app.sending = True
            link = self.peers[(app.host, app.session_dest)]
            self.push(max(t, link.link_free_at), _SEND)

    def send(self, t: float) -> None:
        app = self.app
        app.sending = False
        if app.session is None or app.session.cancelled or t >= app.frozen_from:
            return
        link = self.peers[(app.host, app.session_dest)]
        if link.link_free_at > t:
            self.kick(t)
            return
        if app.session.send_next() is not None:
            app.sending = True
            self.push(link.link_free_at, _SEND)

    def migrate(self, dest: int, ev: MobilityEvent) -> None:
        app, sc = self.app, self.sc
        src = self.stores[app.host]
        h = self.clock.now
        expected = src.checksum(USER)
        wrong = app.session_dest if ev.misprediction else None
        if app.session is not None:
            self.out.background_bytes += app.session.report.bytes_transferred
        report = src.blocking_sync(USER, self.peers[(app.host, dest)])
        if wrong is not None:
            src.abort_sync(USER, self.peers[(app.host, wrong)], wait=False)
        app.session = None
        app.session_dest = None
        gap = self.cp_gap(self.rng) if self.cp_gap is not None else sc.cp_gap_ms
        resume = h + gap + report.blocking_ms + sc.reconnect_rtt_ms
        tq = sc.client_interval_ms
        first_missed = math.ceil(h / tq - 1e-9) * tq
        first_served = math.ceil(resume / tq - 1e-9) * tq
        out = self.out
        out.blocking_ms.append(report.blocking_ms)
        out.downtime_ms.append(first_served - first_missed)
        out.cp_gap_ms.append(gap)
        out.residual_keys.append(report.residual_keys)
        out.mispredicted.append(bool(ev.misprediction))
        out.checksum_ok.append(self.stores[dest].checksum(USER) == expected)
        out.blocking_bytes += report.sync.bytes_transferred
        for k in range(1, 21):
            out.rtt.append((first_missed - k * tq, sc.reconnect_rtt_ms))
            out.rtt.append((first_served + (k - 1) * tq, sc.reconnect_rtt_ms))
        app.host = dest
        app.down_until = resume
        app.frozen_from = math.inf

    # -- main loop -------------------------------------------------------------

    def run(self) -> Measurements:
        sc = self.sc
        src = self.stores[0]
        for key, obj in zip(self.keys, sc.profile.objects):
            src.put(USER, key, self.rng.bytes(obj.size), now=0.0)
            if obj.rate > 0:
                self.push(self.rng.exponential(1000.0 / obj.rate), _UPDATE, self.keys.index(key))
        route = [0]
        for k in range(sc.handovers):
            h = sc.warmup_ms + k * sc.handover_spacing_ms
            h = math.ceil(h / sc.client_interval_ms) * sc.client_interval_ms
            dest = 1 if route[-1] == 0 else 0
            route.append(dest)
            self.push(h, _HANDOVER, dest)
            if sc.mode == "two_step":
                hinted = 2 if self.rng.random() < sc.misprediction_rate else dest
                self.push(h - sc.horizon_ms, _HINT, hinted)
        end = sc.warmup_ms + max(sc.handovers - 1, 0) * sc.handover_spacing_ms + 1.0
        while self.heap:
            t_reply, peer = self._next_reply()
            t = self.heap[0][0]
            if peer is not None and t_reply <= t:
                self._deliver(peer)
                continue
            t, _, kind, data = heapq.heappop(self.heap)
            if t > end:
                break
            self.clock.advance_to(t)
            if kind == _UPDATE:
                self._update(t, data)
            elif kind == _SEND:
                self.send(t)
            elif kind == _HINT:
                cell = data + 1
                pred = HandoverPrediction(int(t), True, ((cell, 1.0),), (cell,))
                self.handler.on_prediction(USER, pred, t=t)
            elif kind == _HANDOVER:
                self.app.frozen_from = t
                self.handler.on_handover_start(USER, data + 1, t)
        self.out.link_bytes = sum(p.forward.bytes_sent for p in self.peers.values())
        return self.out

    def _next_reply(self) -> tuple[float, Optional[SimPeer]]:
        best, who = math.inf, None
        for p in self.peers.values():
            if p.outstanding:
                r = p.next_reply_time()
                if r is not None and r < best:
                    best, who = r, p
        return best, who

    def _deliver(self, peer: SimPeer) -> None:
        idx, reply = peer.recv()
        app = self.app
        if app.session is not None and peer is self.peers.get((app.host, app.session_dest)):
            app.session.handle_reply(idx, reply)
            self.kick(self.clock.now)

    def _update(self, t: float, i: int) -> None:
        app = self.app
        obj = self.sc.profile.objects[i]
        self.push(t + self.rng.exponential(1000.0 / obj.rate), _UPDATE, i)
        if t >= app.frozen_from or t < app.down_until:
            return
        self.stores[app.host].put(USER, self.keys[i], self.rng.bytes(obj.size), now=t)
        self.kick(t)


def run_scenario(scenario: Scenario, cp_gap: Optional[CpGapSampler] = None) -> Measurements:
    """One deterministic run; ``cp_gap`` overrides the fixed control-plane gap."""
    scenario.validate()
    return _Run(scenario, cp_gap).run()


def run_many(scenario: Scenario, runs: int, cp_gap: Optional[CpGapSampler] = None) -> Measurements:
    """``runs`` independent runs with seeds ``seed, seed+1, ...`` pooled together."""
    total = Measurements()
    for i in range(runs):
        total.extend(run_scenario(replace(scenario, seed=scenario.seed + i), cp_gap))
    return total


SWEEP_AXES = ("horizon", "dynamic_fraction", "total_size")


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float
    mode: str
    runs: int
    blocking_p50: float
    blocking_p10: float
    blocking_p90: float
    downtime_p50: float
    residual_mean: float
    bytes_mean: float


def _with_axis(base: Scenario, axis: str, value: float, rate: float) -> Scenario:
    p = base.profile
    if axis == "horizon":
        return replace(base, horizon_ms=float(value))
    if axis == "dynamic_fraction":
        return replace(base, profile=StateProfile.build(p.total_bytes, float(value), rate))
    if axis == "total_size":
        return replace(base, profile=StateProfile.build(int(value), p.dynamic_fraction, rate))
    raise InvalidScenario(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def sweep(axis: str, values: Sequence[float], base: Scenario, runs: int = 30,
          modes: Iterable[str] = MODES) -> list[SweepRow]:
    """Run both modes at every value with matched seeds."""
    rates = [o.rate for o in base.profile.objects if o.rate > 0]
    rate = rates[0] if rates else 50.0
    rows = []
    for value in values:
        sc = _with_axis(base, axis, value, rate)
        for mode in modes:
            m = run_many(replace(sc, mode=mode), runs)
            rows.append(SweepRow(axis, float(value), mode, runs, m.median("blocking_ms"),
                                 m.percentile("blocking_ms", 10), m.percentile("blocking_ms", 90),
                                 m.median("downtime_ms"), float(np.mean(m.residual_keys)),
                                 m.bytes_transferred / max(runs, 1)))
    return rows


def empirical_sampler(samples: np.ndarray) -> CpGapSampler:
    """Draw control-plane gaps from simulated completion times."""
    data = np.asarray(samples, dtype=float)
    if data.size == 0:
        raise InvalidScenario("no control-plane samples to draw from")
    return lambda rng: float(data[rng.integers(len(data))])
