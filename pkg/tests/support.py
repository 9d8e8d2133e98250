"""Helpers shared by several test modules."""

from __future__ import annotations

import math

import numpy as np

from edgewarp.store import EdgeStore, LocalPeer, SimClock

USER = "u1"


def a3_crossing_x(distance_m: float, hysteresis_db: float, exponent: float) -> float:
    """Position between two equal-power base stations (at 0 and ``distance_m``,
    UE on the line joining them) where the far cell first leads by
    ``hysteresis_db``: 10 n log10(x / (D - x)) = hyst."""
    r = 10 ** (hysteresis_db / (10 * exponent))
    return distance_m * r / (1 + r)


def a3_handover_time_ms(distance_m: float, hysteresis_db: float, exponent: float, speed_mps: float,
                        ttt_ms: float, interval_ms: int) -> float:
    """Analytic A3 handover instant for a drive from BS1 to BS2, starting at BS1.

    The first sample strictly past the crossing starts the trigger run; the
    handover fires on the run's ``ceil(ttt / interval)``-th sample.
    """
    x = a3_crossing_x(distance_m, hysteresis_db, exponent)
    t_cross = x / speed_mps * 1000
    first = math.floor(t_cross / interval_ms) * interval_ms + interval_ms
    return first + (max(1, math.ceil(ttt_ms / interval_ms)) - 1) * interval_ms


class Ryw:
    """One randomized migration trial with a shadow model of acknowledged writes."""

    def __init__(self, seed: int, mispredict_rate: float = 0.2) -> None:
        self.rng = np.random.default_rng(seed)
        self.clock = SimClock(0)
        self.src = EdgeStore("src", self.clock)
        self.dst = EdgeStore("dst", self.clock)
        self.wrong = EdgeStore("wrong", self.clock)
        self.to_dst = LocalPeer(self.dst)
        self.to_wrong = LocalPeer(self.wrong)
        self.keys = [f"k{i:02d}".encode() for i in range(int(self.rng.integers(1, 16)))]
        self.model: dict[bytes, bytes] = {}
        self.mispredict = self.rng.random() < mispredict_rate

    def client_op(self) -> None:
        self.clock.advance_to(self.clock.now + float(self.rng.integers(0, 3)))
        k = self.keys[int(self.rng.integers(len(self.keys)))]
        if k in self.model and self.rng.random() < 0.15:
            self.src.delete(USER, k)
            del self.model[k]
        else:
            v = self.rng.bytes(int(self.rng.integers(0, 24)))
            self.src.put(USER, k, v)
            self.model[k] = v

    def interleave(self, peer: LocalPeer, steps: int) -> None:
        """Random mix of background sends, reply deliveries and client writes."""
        session = self.src.open_background(USER, peer)
        with peer.lock:
            session.open()
        for _ in range(steps):
            r = self.rng.random()
            if r < 0.35:
                session.send_next()
            elif r < 0.7 and peer.outstanding:
                idx, reply = peer.recv()
                session.handle_reply(idx, reply)
            else:
                self.client_op()

    def run(self) -> tuple[list[str], bool]:
        """Returns (violations, checksum_ok)."""
        self.src.put(USER, self.keys[0], b"seed")
        self.model[self.keys[0]] = b"seed"
        for _ in range(int(self.rng.integers(0, 30))):
            self.client_op()
        if self.mispredict:
            self.interleave(self.to_wrong, int(self.rng.integers(0, 60)))
        if not self.mispredict or self.rng.random() < 0.5:
            self.interleave(self.to_dst, int(self.rng.integers(0, 60)))
        frozen: list[str] = []
        abort_first = self.rng.random() < 0.5
        if self.mispredict and abort_first:
            self.src.abort_sync(USER, self.to_wrong)
        self.src.blocking_sync(USER, self.to_dst, callback=lambda rep: frozen.append(self.src.checksum(USER)))
        if self.mispredict and not abort_first:
            self.src.abort_sync(USER, self.to_wrong)
        violations = []
        for k, v in self.model.items():
            try:
                got = self.dst.get(USER, k)
            except KeyError:
                violations.append(f"{k!r} missing at target")
                continue
            if got != v:
                violations.append(f"{k!r} stale at target")
        extra = set(self.dst.keys(USER)) - set(self.model)
        violations.extend(f"{k!r} resurrected at target" for k in sorted(extra))
        if self.wrong.keys(USER) or self.wrong.staged_keys(USER):
            violations.append("state left behind at the wrongly predicted host")
        return violations, frozen == [self.dst.checksum(USER)]


# -- small CLI configs ---------------------------------------------------------

GENERATOR = {"n_bs": 4, "shadowing_sigma_db": 4.0, "sample_interval_ms": 50, "hysteresis_db": 3.0,
             "time_to_trigger_ms": 160, "path_loss_exponent": 3.0}
DATASET = {"window": 6, "label_window_ms": 400, "negative_ratio": 3.0, "near_ms": 1500}
TRAINING = {"epochs": 1, "learning_rate": 0.005, "batch_size": 128, "optimizer": "adam", "hidden": [8],
            "clip_norm": 5.0}
SCENARIO = {"horizon_ms": 100, "client_interval_ms": 1, "bandwidth_bps": 1.0e9, "latency_ms": 1.0,
            "handovers": 1, "misprediction_rate": 0.0, "cp_gap_ms": 4.4, "reconnect_rtt_ms": 2.0}
PROFILE = {"total_bytes": 300000, "dynamic_fraction": 0.05, "update_rate": 50}
CONTROL_PLANE = {"propagation_us": 1000,
                 "scheduler": {"weights": [6, 3, 1], "service_us": 100, "fallback": True, "queue_limit": 2000},
                 "load": {"capacity_factor": 1.5, "mix": [0.12, 0.28, 0.60], "pattern": "uniform",
                          "duration_s": 2, "mean_batch": 20}}

SMALL_CONFIGS = {
    "gen-trace": {"traces": {"split": "train", "count": 3}, "generator": GENERATOR},
    "train": {"traces": {"train": 6, "validation": 3}, "generator": GENERATOR, "dataset": DATASET,
              "training": TRAINING},
    "predict-eval": {"traces": {"train": 6, "validation": 3, "test": 3}, "generator": GENERATOR,
                     "dataset": DATASET, "training": TRAINING,
                     "evaluation": {"horizons": [0, 100], "top_x": 1, "lookback_ms": 3000}},
    "sync-bench": {"profile": PROFILE, "scenario": SCENARIO, "runs": 2,
                   "sweeps": {"horizon": [0, 100], "dynamic_fraction": [0.0, 0.1]}},
    "cp-bench": {"control_plane": CONTROL_PLANE},
    "e2e": {"profile": PROFILE, "scenario": SCENARIO, "runs": 2, "control_plane": CONTROL_PLANE},
}


def write_config(path, data) -> str:
    import yaml

    path.write_text(yaml.safe_dump(data))
    return str(path)


def output_files(out) -> dict:
    """Relative path -> bytes for every CSV/model file under ``out``."""
    from pathlib import Path

    out = Path(out)
    return {str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*"))
            if p.is_file() and p.suffix in (".csv", ".ewlm")}
