"""Radio traces: a synthetic drive-test generator and the CSV trace format.

The generator places base stations in the plane, moves a UE along a
polyline at constant speed, and derives per-cell RSRP from a log-distance
path-loss model with log-normal shadowing.  Ground-truth handovers follow
the A3 rule: a neighbour beats the serving cell by the hysteresis margin on
every sample spanning the time-to-trigger.

RSRQ is synthetic: ``-20 + 17 * share`` where ``share`` is the cell's
fraction of the total linear power over all reported cells, clamped to the
valid range.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO, Union

import numpy as np

RSRP_RANGE = (-140.0, -44.0)
RSRQ_RANGE = (-20.0, -3.0)
HEADER = ("t_ms", "cell_id", "rsrp_dbm", "rsrq_db", "serving", "event")


class TraceError(ValueError):
    code = "TRACE_ERROR"


class InvalidConfig(TraceError):
    code = "INVALID_CONFIG"


class NonpositiveDistance(TraceError):
    code = "NONPOSITIVE_DISTANCE"


class ParseError(TraceError):
    code = "PARSE_ERROR"

    def __init__(self, line: int, msg: str) -> None:
        super().__init__(f"line {line}: {msg}")
        self.line = line


class RangeError(ParseError):
    code = "RANGE_ERROR"


@dataclass(frozen=True)
class BaseStation:
    cell_id: int
    x: float
    y: float = 0.0
    tx_power_dbm: float = 30.0


@dataclass(frozen=True)
class GeneratorConfig:
    bs_layout: tuple[BaseStation, ...]
    waypoints: tuple[tuple[float, float], ...]
    speed_mps: float = 15.0
    duration_ms: Optional[int] = None  # default: time to reach the last waypoint
    sample_interval_ms: int = 50
    path_loss_exponent: float = 3.0
    pl0_db: float = 38.0
    d0_m: float = 1.0
    shadowing_sigma_db: float = 0.0
    # distance over which shadowing decorrelates to 1/e; 0 gives i.i.d. samples
    shadowing_decorrelation_m: float = 20.0
    hysteresis_db: float = 3.0
    time_to_trigger_ms: float = 160.0
    detect_threshold_dbm: float = -120.0
    seed: int = 0

    def validate(self) -> None:
        if len(self.bs_layout) < 2:
            raise InvalidConfig("need at least two base stations")
        ids = [b.cell_id for b in self.bs_layout]
        if len(set(ids)) != len(ids):
            raise InvalidConfig("duplicate cell_id in bs_layout")
        if not self.waypoints:
            raise InvalidConfig("need at least one waypoint")
        if self.speed_mps <= 0:
            raise InvalidConfig("speed must be positive")
        if self.shadowing_sigma_db < 0 or self.shadowing_decorrelation_m < 0:
            raise InvalidConfig("shadowing parameters must be non-negative")
        if self.sample_interval_ms <= 0 or self.d0_m <= 0:
            raise InvalidConfig("sample interval and d0 must be positive")
        if self.time_to_trigger_ms < 0 or self.hysteresis_db < 0:
            raise InvalidConfig("A3 parameters must be non-negative")
        if self.duration_ms is not None and self.duration_ms < 0:
            raise InvalidConfig("duration must be non-negative")

    @property
    def path_length_m(self) -> float:
        pts = np.asarray(self.waypoints, dtype=float)
        return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum()) if len(pts) > 1 else 0.0


@dataclass(frozen=True)
class RadioSample:
    t: int
    cell_id: int
    rsrp: float
    rsrq: float
    serving: bool


@dataclass(frozen=True)
class Handover:
    t: int
    source: int
    target: int


@dataclass
class CellSeries:
    t: np.ndarray
    rsrp: np.ndarray
    rsrq: np.ndarray


@dataclass
class Trace:
    samples: list[RadioSample]
    handovers: list[Handover]
    interval_ms: int = 50
    _index: Optional[tuple] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for a, b in zip(self.handovers, self.handovers[1:]):
            if b.t <= a.t:
                raise TraceError("handover times must be strictly increasing")
        for h in self.handovers:
            if h.source == h.target:
                raise TraceError(f"handover at {h.t} has target equal to source")

    def _build_index(self) -> tuple:
        if self._index is None:
            per: dict[int, list[tuple[int, float, float]]] = {}
            serving: dict[int, int] = {}
            for s in self.samples:
                per.setdefault(s.cell_id, []).append((s.t, s.rsrp, s.rsrq))
                if s.serving:
                    serving[s.t] = s.cell_id
            cells = {}
            for c, rows in per.items():
                arr = np.asarray(rows, dtype=float)
                cells[c] = CellSeries(arr[:, 0].astype(np.int64), arr[:, 1], arr[:, 2])
            times = np.asarray(sorted(serving), dtype=np.int64)
            serving_arr = np.asarray([serving[t] for t in times.tolist()], dtype=np.int64)
            self._index = (cells, times, serving_arr)
        return self._index

    @property
    def cells(self) -> dict[int, CellSeries]:
        return self._build_index()[0]

    @property
    def times(self) -> np.ndarray:
        """Sample instants that have a serving cell."""
        return self._build_index()[1]

    def serving_at(self, t: int) -> Optional[int]:
        _, times, serving = self._build_index()
        i = int(np.searchsorted(times, t, side="right")) - 1
        return int(serving[i]) if i >= 0 else None


def path_loss(distance_m: float, config: GeneratorConfig, shadow_db: float = 0.0) -> float:
    """Log-distance path loss in dB plus a shadowing sample."""
    if not distance_m > 0:
        raise NonpositiveDistance(f"distance must be positive, got {distance_m}")
    return config.pl0_db + 10.0 * config.path_loss_exponent * math.log10(distance_m / config.d0_m) + shadow_db


def ue_positions(config: GeneratorConfig, t_ms: np.ndarray) -> np.ndarray:
    pts = np.asarray(config.waypoints, dtype=float)
    if len(pts) == 1:
        return np.repeat(pts, len(t_ms), axis=0)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.minimum(t_ms * config.speed_mps / 1000.0, cum[-1])
    x = np.interp(s, cum, pts[:, 0])
    y = np.interp(s, cum, pts[:, 1])
    return np.stack([x, y], axis=1)


def shadowing(config: GeneratorConfig, positions: np.ndarray) -> np.ndarray:
    """Shadowing in dB, shape (samples, cells): AR(1) along travelled distance."""
    n, m = len(positions), len(config.bs_layout)
    sigma = config.shadowing_sigma_db
    if sigma == 0 or n == 0:
        return np.zeros((n, m))
    rng = np.random.default_rng(config.seed)
    z = rng.standard_normal((n, m))
    step = np.concatenate([[0.0], np.linalg.norm(np.diff(positions, axis=0), axis=1)])
    if config.shadowing_decorrelation_m > 0:
        rho = np.exp(-step / config.shadowing_decorrelation_m)
    else:
        rho = np.zeros(n)
    out = np.empty((n, m))
    out[0] = sigma * z[0]
    for i in range(1, n):
        out[i] = rho[i] * out[i - 1] + sigma * math.sqrt(1.0 - rho[i] ** 2) * z[i]
    return out


def rsrq_from_rsrp(rsrp: np.ndarray, reported: np.ndarray) -> np.ndarray:
    lin = np.where(reported, 10.0 ** (rsrp / 10.0), 0.0)
    total = lin.sum(axis=-1, keepdims=True)
    share = np.divide(lin, total, out=np.zeros_like(lin), where=total > 0)
    return np.clip(-20.0 + 17.0 * share, *RSRQ_RANGE)


def _duration_ms(config: GeneratorConfig) -> int:
    if config.duration_ms is not None:
        return int(config.duration_ms)
    return int(math.ceil(config.path_length_m / config.speed_mps * 1000.0))


def ttt_samples(config: GeneratorConfig) -> int:
    """Consecutive samples needed so that they span the time-to-trigger."""
    return max(1, math.ceil(config.time_to_trigger_ms / config.sample_interval_ms))


def generate_trace(config: GeneratorConfig) -> Trace:
    config.validate()
    dt = config.sample_interval_ms
    t = np.arange(0, _duration_ms(config) + 1, dt, dtype=np.int64)
    pos = ue_positions(config, t.astype(float))
    bs = np.asarray([(b.x, b.y) for b in config.bs_layout], dtype=float)
    tx = np.asarray([b.tx_power_dbm for b in config.bs_layout], dtype=float)
    ids = [b.cell_id for b in config.bs_layout]
    dist = np.linalg.norm(pos[:, None, :] - bs[None, :, :], axis=2)
    dist = np.maximum(dist, config.d0_m * 1e-3)
    pl = config.pl0_db + 10.0 * config.path_loss_exponent * np.log10(dist / config.d0_m)
    rsrp = np.round(np.clip(tx - pl - shadowing(config, pos), *RSRP_RANGE), 3)

    need = ttt_samples(config)
    hyst = config.hysteresis_db
    serving = int(np.argmax(rsrp[0])) if len(t) else 0
    serving_idx = np.empty(len(t), dtype=np.int64)
    run: dict[int, int] = {}
    handovers = []
    detected = rsrp > config.detect_threshold_dbm
    for i in range(len(t)):
        for c in range(len(ids)):
            if c != serving and detected[i, c] and rsrp[i, c] > rsrp[i, serving] + hyst:
                run[c] = run.get(c, 0) + 1
            else:
                run.pop(c, None)
        ready = [c for c, k in run.items() if k >= need]
        if ready:
            target = max(ready, key=lambda c: (rsrp[i, c], -ids[c]))
            handovers.append(Handover(int(t[i]), ids[serving], ids[target]))
            serving = target
            run.clear()
        serving_idx[i] = serving

    reported = detected.copy()
    reported[np.arange(len(t)), serving_idx] = True
    rsrq = np.round(rsrq_from_rsrp(rsrp, reported), 3)
    order = np.argsort(ids)
    samples = []
    for i in range(len(t)):
        for c in order:
            if reported[i, c]:
                samples.append(RadioSample(int(t[i]), ids[c], float(rsrp[i, c]), float(rsrq[i, c]),
                                           bool(c == serving_idx[i])))
    return Trace(samples, handovers, dt)


def check_labels(trace: Trace, config: GeneratorConfig) -> list[Handover]:
    """Handovers whose A3 trigger window does not hold in the trace itself."""
    need = ttt_samples(config)
    dt = trace.interval_ms
    cells = trace.cells
    bad = []
    for h in trace.handovers:
        ok = True
        for k in range(need):
            tk = h.t - k * dt
            src, tgt = cells.get(h.source), cells.get(h.target)
            if src is None or tgt is None:
                ok = False
                break
            si, ti = np.searchsorted(src.t, tk), np.searchsorted(tgt.t, tk)
            if si >= len(src.t) or src.t[si] != tk or ti >= len(tgt.t) or tgt.t[ti] != tk:
                ok = False
                break
            if not tgt.rsrp[ti] > src.rsrp[si] + config.hysteresis_db:
                ok = False
                break
        if not ok:
            bad.append(h)
    return bad


def road_config(seed: int, n_bs: int = 4, spacing_m: tuple[float, float] = (220.0, 320.0),
                offset_m: tuple[float, float] = (20.0, 90.0), speed_mps: tuple[float, float] = (10.0, 25.0),
                **overrides) -> GeneratorConfig:
    """A randomized drive along a straight road lined with base stations."""
    rng = np.random.default_rng(seed)
    xs = np.cumsum(rng.uniform(*spacing_m, size=n_bs))
    xs -= xs[0]
    ys = rng.uniform(*offset_m, size=n_bs) * rng.choice([-1.0, 1.0], size=n_bs)
    tx = rng.uniform(28.0, 32.0, size=n_bs)
    ids = rng.permutation(np.arange(1, n_bs + 1) * 10 + int(rng.integers(0, 10)))
    layout = tuple(BaseStation(int(i), float(x), float(y), float(p)) for i, x, y, p in zip(ids, xs, ys, tx))
    start, end = -0.3 * (xs[1] - xs[0]), xs[-1] + 0.3 * (xs[-1] - xs[-2])
    if rng.random() < 0.5:
        start, end = end, start
    params = dict(bs_layout=layout, waypoints=((float(start), 0.0), (float(end), 0.0)),
                  speed_mps=float(rng.uniform(*speed_mps)), seed=int(rng.integers(2**31)))
    params.update(overrides)
    return GeneratorConfig(**params)


# -- CSV --------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.3f}"


def write_trace(trace: Trace, dest: Union[str, os.PathLike, TextIO]) -> None:
    events = {(h.t, h.target): f"HO:{h.target}" for h in trace.handovers}
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="") as fh:
            write_trace(trace, fh)
        return
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(HEADER)
    for s in trace.samples:
        ev = events.get((s.t, s.cell_id), "") if s.serving else ""
        w.writerow((s.t, s.cell_id, _fmt(s.rsrp), _fmt(s.rsrq), int(s.serving), ev))


def trace_to_csv(trace: Trace) -> str:
    buf = io.StringIO()
    write_trace(trace, buf)
    return buf.getvalue()


def parse_trace(src: Union[str, os.PathLike, TextIO, Iterable[str]]) -> Trace:
    """Read a trace CSV; errors carry the 1-based line number."""
    if isinstance(src, (str, os.PathLike)):
        with open(src, newline="") as fh:
            return parse_trace(fh)
    reader = csv.reader(src)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, "empty file") from None
    if tuple(h.strip() for h in header) != HEADER:
        raise ParseError(1, f"expected header {','.join(HEADER)}")
    samples: list[RadioSample] = []
    handovers: list[Handover] = []
    last_t: dict[int, int] = {}
    serving_by_t: dict[int, int] = {}
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(HEADER):
            raise ParseError(line, f"expected {len(HEADER)} fields, got {len(row)}")
        try:
            t, cell = int(row[0]), int(row[1])
            rsrp, rsrq = float(row[2]), float(row[3])
        except ValueError as exc:
            raise ParseError(line, str(exc)) from None
        if row[4] not in ("0", "1"):
            raise ParseError(line, f"serving must be 0 or 1, got {row[4]!r}")
        if not (math.isfinite(rsrp) and RSRP_RANGE[0] <= rsrp <= RSRP_RANGE[1]):
            raise RangeError(line, f"rsrp {rsrp} outside {RSRP_RANGE}")
        if not (math.isfinite(rsrq) and RSRQ_RANGE[0] <= rsrq <= RSRQ_RANGE[1]):
            raise RangeError(line, f"rsrq {rsrq} outside {RSRQ_RANGE}")
        if cell in last_t and t <= last_t[cell]:
            raise ParseError(line, f"timestamps for cell {cell} not increasing")
        last_t[cell] = t
        serving = row[4] == "1"
        if serving:
            if t in serving_by_t:
                raise ParseError(line, f"two serving cells at t={t}")
            serving_by_t[t] = cell
        ev = row[5]
        if ev:
            if not ev.startswith("HO:"):
                raise ParseError(line, f"malformed event {ev!r}")
            try:
                target = int(ev[3:])
            except ValueError:
                raise ParseError(line, f"malformed event {ev!r}") from None
            if not serving or target != cell:
                raise ParseError(line, "handover event must sit on the new serving cell's row")
            earlier = [u for u in serving_by_t if u < t]
            if not earlier:
                raise ParseError(line, "handover without a prior serving cell")
            source = serving_by_t[max(earlier)]
            if source == target:
                raise ParseError(line, "handover target equals source")
            if handovers and handovers[-1].t >= t:
                raise ParseError(line, "handover times not increasing")
            handovers.append(Handover(t, source, target))
        samples.append(RadioSample(t, cell, rsrp, rsrq, serving))
    times = sorted(serving_by_t)
    interval = int(np.median(np.diff(times))) if len(times) > 1 else 50
    return Trace(samples, handovers, interval)
