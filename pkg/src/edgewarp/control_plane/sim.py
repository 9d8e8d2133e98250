"""Event-driven control-plane simulator on an integer-microsecond clock.

Every procedure is a four-message pipeline (RRC at BS, NGAP at AMF, NGAP at
BS, RRC at BS).  Each message pays one propagation delay, then queues at its
stage and is served for ``service_us``.  A procedure's completion time runs
from the moment its first message is emitted to the end of service of its
last message.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import HANDOVER_PATH, Amf, Stage
from .scheduler import FifoQueue, Klass, SchedulerConfig, WeightedQueues

N_STAGES = 3
_PATH = tuple(s.value for s in HANDOVER_PATH)
_STEPS = len(_PATH)
# visits per procedure at each stage
_VISITS = tuple(_PATH.count(s) for s in range(N_STAGES))

_ARRIVE, _DONE, _COMMAND = 0, 1, 2


class InvalidConfig(ValueError):
    code = "INVALID_CONFIG"


@dataclass(frozen=True)
class CpConfig:
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    propagation_us: int = 1000

    @property
    def capacity(self) -> float:
        """Procedures per second the bottleneck stage sustains."""
        return self.scheduler.service_rate / max(_VISITS)

    @property
    def empty_system_us(self) -> int:
        return _STEPS * (self.scheduler.service_us + self.propagation_us)


@dataclass(frozen=True)
class LoadConfig:
    procedures_per_s: float
    mix: tuple[float, float, float] = (0.12, 0.28, 0.60)
    pattern: str = "uniform"
    duration_s: float = 60.0
    mean_batch: float = 20.0

    def validate(self) -> None:
        if self.procedures_per_s < 0 or self.duration_s < 0:
            raise InvalidConfig("load and duration must be non-negative")
        if len(self.mix) != 3 or any(m < 0 for m in self.mix) or abs(sum(self.mix) - 1.0) > 1e-6:
            raise InvalidConfig(f"class mix must be three shares summing to 1, got {self.mix}")
        if self.pattern not in ("uniform", "bursty"):
            raise InvalidConfig(f"pattern must be uniform or bursty, got {self.pattern!r}")
        if self.pattern == "bursty" and self.mean_batch < 1:
            raise InvalidConfig("mean_batch must be >= 1")


def generate_arrivals(load: LoadConfig, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Procedure start times (us, sorted) and their classes."""
    load.validate()
    rng = np.random.default_rng(seed)
    horizon = load.duration_s * 1e6
    if load.procedures_per_s == 0 or horizon == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if load.pattern == "uniform":
        rate = load.procedures_per_s
    else:
        rate = load.procedures_per_s / load.mean_batch
    expected = int(rate * load.duration_s * 1.2 + 50)
    gaps = rng.exponential(1e6 / rate, size=expected)
    times = np.cumsum(gaps)
    while times[-1] < horizon:
        more = np.cumsum(rng.exponential(1e6 / rate, size=expected)) + times[-1]
        times = np.concatenate([times, more])
    times = times[times < horizon]
    if load.pattern == "bursty":
        sizes = rng.geometric(1.0 / load.mean_batch, size=len(times))
        times = np.repeat(times, sizes)
    starts = np.floor(times).astype(np.int64)
    classes = rng.choice(3, size=len(starts), p=np.asarray(load.mix, dtype=float))
    return starts, classes.astype(np.int64)


@dataclass
class SimResult:
    policy: str
    completions_ms: dict[Klass, np.ndarray]
    rejected: dict[Klass, int]
    offered: dict[Klass, int]
    probes_ms: dict[str, list[float]] = field(default_factory=dict)
    trace: list[tuple[int, str, Stage, Klass]] = field(default_factory=list)

    def percentile(self, klass: Klass, q: float) -> float:
        data = self.completions_ms[klass]
        return float(np.percentile(data, q)) if len(data) else float("nan")

    def median(self, klass: Klass) -> float:
        return self.percentile(klass, 50)

    def all_completions(self) -> np.ndarray:
        return np.concatenate([self.completions_ms[k] for k in Klass])


class ControlPlaneSim:
    """One run of the control plane under a scheduling policy.

    ``policy`` is ``"priority"`` (weighted three-class queues) or ``"fifo"``.
    Registered UEs (attached through ``amf``) have their class looked up at each
    enqueue, so AF commands scheduled with :meth:`at` take effect from their
    timestamp onward.
    """

    def __init__(self, config: CpConfig | None = None, policy: str = "priority", amf: Amf | None = None,
                 record_trace: bool = False) -> None:
        if policy not in ("priority", "fifo"):
            raise InvalidConfig(f"unknown policy {policy!r}")
        self.config = config or CpConfig()
        self.policy = policy
        self.amf = amf if amf is not None else Amf()
        self.record_trace = record_trace
        self.now = 0
        limit = self.config.scheduler.queue_limit
        if policy == "priority":
            self.queues = [WeightedQueues(self.config.scheduler) for _ in range(N_STAGES)]
        else:
            self.queues = [FifoQueue(limit) for _ in range(N_STAGES)]
        self._busy: list[Optional[int]] = [None] * N_STAGES
        self._heap: list[tuple[int, int, int, object]] = []
        self._seq = 0
        self._start: list[int] = []
        self._klass: list[int] = []  # -1 => registered UE, look up per stage
        self._ue: list[Optional[str]] = []
        self._finish: list[int] = []
        self._failed: list[bool] = []
        self._trace: list[tuple[int, str, Stage, Klass]] = []

    def _push(self, t: int, kind: int, data: object) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, data))

    def at(self, t_us: int, command: Callable[[], object]) -> None:
        """Run ``command`` (e.g. an AF API call) at simulated time ``t_us``."""
        self._push(int(t_us), _COMMAND, command)

    def add_procedure(self, start_us: int, ue_id: Optional[str] = None, klass: Optional[Klass] = None) -> int:
        if ue_id is None and klass is None:
            raise ValueError("either ue_id or klass is required")
        if ue_id is not None:
            self.amf.ue(ue_id)
        pid = len(self._start)
        self._start.append(int(start_us))
        self._klass.append(-1 if ue_id is not None else int(klass))
        self._ue.append(ue_id)
        self._finish.append(-1)
        self._failed.append(False)
        self._push(int(start_us) + self.config.propagation_us, _ARRIVE, pid << 2)
        return pid

    def _class_of(self, pid: int, step: int) -> int:
        k = self._klass[pid]
        if k >= 0:
            return k
        return int(self.amf.klass_at(self._ue[pid], Stage(_PATH[step])))

    def run(self, starts: Optional[np.ndarray] = None, classes: Optional[np.ndarray] = None) -> None:
        """Run the event loop to exhaustion, merging in a sorted bulk arrival stream."""
        prop = self.config.propagation_us
        base = len(self._start)
        if starts is not None and len(starts):
            n = len(starts)
            self._start.extend(starts.tolist())
            self._klass.extend(classes.tolist())
            self._ue.extend([None] * n)
            self._finish.extend([-1] * n)
            self._failed.extend([False] * n)
            bulk = starts.tolist()
        else:
            n, bulk = 0, []
        heap, queues, busy = self._heap, self.queues, self._busy
        service = self.config.scheduler.service_us
        finish, failed = self._finish, self._failed
        klass_list = self._klass
        pop, push = heapq.heappop, heapq.heappush
        i = 0
        trace_on = self.record_trace
        while True:
            # timed events win ties against new arrivals
            if i < n and (not heap or bulk[i] + prop < heap[0][0]):
                t = bulk[i] + prop
                kind, data = _ARRIVE, (base + i) << 2
                i += 1
            elif heap:
                t, _, kind, data = pop(heap)
            else:
                break
            self.now = t
            if kind == _ARRIVE:
                msg = data
                pid, step = msg >> 2, msg & 3
                if failed[pid]:
                    continue
                stage = _PATH[step]
                k = klass_list[pid]
                if k < 0:
                    k = self._class_of(pid, step)
                if busy[stage] is None:
                    busy[stage] = msg
                    self._seq += 1
                    push(heap, (t + service, self._seq, _DONE, stage))
                    if trace_on and klass_list[pid] < 0:
                        self._trace.append((t, self._ue[pid], Stage(stage), Klass(k)))
                else:
                    dropped = queues[stage].enqueue(msg, k)
                    if dropped is not None:
                        failed[dropped >> 2] = True
            elif kind == _DONE:
                stage = data
                msg = busy[stage]
                busy[stage] = None
                pid, step = msg >> 2, msg & 3
                if not failed[pid]:
                    if step + 1 < _STEPS:
                        self._seq += 1
                        push(heap, (t + prop, self._seq, _ARRIVE, msg + 1))
                    else:
                        finish[pid] = t
                q = queues[stage]
                while len(q):
                    nxt, k = q.dequeue()
                    if failed[nxt >> 2]:
                        continue
                    busy[stage] = nxt
                    self._seq += 1
                    push(heap, (t + service, self._seq, _DONE, stage))
                    if trace_on and klass_list[nxt >> 2] < 0:
                        self._trace.append((t, self._ue[nxt >> 2], Stage(stage), Klass(k)))
                    break
            else:
                data()
    def completion_ms(self, pid: int) -> Optional[float]:
        if self._finish[pid] < 0:
            return None
        return (self._finish[pid] - self._start[pid]) / 1000.0

    def result(self) -> SimResult:
        start = np.asarray(self._start, dtype=np.int64)
        finish = np.asarray(self._finish, dtype=np.int64)
        klass = np.asarray(self._klass, dtype=np.int64)
        bulk = klass >= 0
        done = finish >= 0
        completions = {}
        rejected = {}
        offered = {}
        for k in Klass:
            sel = bulk & (klass == int(k))
            completions[k] = (finish[sel & done] - start[sel & done]) / 1000.0
            offered[k] = int(sel.sum())
            rejected[k] = int((sel & ~done).sum())
        probes: dict[str, list[float]] = {}
        for pid in np.nonzero(~bulk)[0].tolist():
            c = self.completion_ms(pid)
            if c is not None:
                probes.setdefault(self._ue[pid], []).append(c)
        return SimResult(self.policy, completions, rejected, offered, probes, list(self._trace))


def run_handover(sim: ControlPlaneSim, ue_id: str, now_us: int = 0) -> float:
    """Inject one handover for a registered UE and run until it finishes.

    Returns the completion time in ms.  On a fresh simulator this is the
    empty-system constant ``4 * (service + propagation)``.
    """
    pid = sim.add_procedure(now_us, ue_id=ue_id)
    sim.run()
    c = sim.completion_ms(pid)
    if c is None:
        raise RuntimeError(f"handover for {ue_id} was rejected under overload")
    return c


@dataclass
class Comparison:
    priority: SimResult
    fifo: SimResult
    config: CpConfig
    load: LoadConfig

    def rows(self) -> list[tuple[str, str, str, float]]:
        out = []
        for res in (self.priority, self.fifo):
            for k in Klass:
                for q in (50, 90, 99):
                    out.append((res.policy, k.name, f"p{q}", res.percentile(k, q)))
        return out


def simulate(load: LoadConfig, config: CpConfig | None = None, seed: int = 0,
             probes: Optional[list[tuple[int, str]]] = None, amf_factory: Callable[[], Amf] | None = None,
             ) -> Comparison:
    """Run the priority scheduler and the FIFO baseline under identical arrivals."""
    config = config or CpConfig()
    starts, classes = generate_arrivals(load, seed)
    results = []
    for policy in ("priority", "fifo"):
        amf = amf_factory() if amf_factory else Amf()
        sim = ControlPlaneSim(config, policy, amf)
        for t, ue in probes or []:
            sim.add_procedure(t, ue_id=ue)
        sim.run(starts, classes)
        results.append(sim.result())
    return Comparison(results[0], results[1], config, load)
