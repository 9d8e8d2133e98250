"""Command-line harness: every experiment is one subcommand plus a YAML config.

Each run writes its artifacts and a ``manifest.json`` into ``--out``.  CSVs
hold only seeded, deterministic quantities (no wall-clock timings), so two
runs with the same manifest produce the same bytes.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .appsim import SWEEP_AXES, InvalidScenario, Scenario, StateProfile, empirical_sampler, run_many, sweep
from .control_plane import CpConfig, Klass, LoadConfig, SchedulerConfig, simulate
from .control_plane.sim import InvalidConfig as CpInvalidConfig
from .predictor import (
    DatasetConfig,
    LstmModel,
    ModelPredictor,
    TrainConfig,
    availability_upper_bound,
    evaluate,
    fit,
    generate_split,
)
from .predictor.workflow import SPLIT_OFFSETS
from .traces import TraceError, write_trace

log = logging.getLogger("edgewarp")

SUBCOMMANDS = ("gen-trace", "train", "predict-eval", "sync-bench", "cp-bench", "e2e")
HORIZONS = (0, 50, 100, 200)
PERCENTILES = (50, 90, 99)
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class ConfigError(Exception):
    pass


class Config:
    """Read-only view over a parsed YAML mapping with dotted, required keys."""

    def __init__(self, data: Any, prefix: str = "") -> None:
        if not isinstance(data, dict):
            raise ConfigError(f"config {prefix or 'root'} must be a mapping")
        self.data = data
        self.prefix = prefix

    def _path(self, key: str) -> str:
        return f"{self.prefix}.{key}" if self.prefix else key

    def has(self, key: str) -> bool:
        return key in self.data

    def section(self, key: str) -> "Config":
        if key not in self.data:
            raise ConfigError(f"missing config key: {self._path(key)}")
        return Config(self.data[key], self._path(key))

    def get(self, key: str, kind: Callable[[Any], Any] = lambda v: v, default: Any = ...) -> Any:
        if key not in self.data:
            if default is not ...:
                return default
            raise ConfigError(f"missing config key: {self._path(key)}")
        value = self.data[key]
        try:
            return kind(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for config key {self._path(key)}: {value!r} ({exc})") from None

    def floats(self, key: str) -> list[float]:
        return self.get(key, lambda v: [float(x) for x in v])


def _bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    raise ValueError("expected true or false")


def load_config(path: str) -> tuple[Config, str]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    return Config(data if data is not None else {}), hashlib.sha256(raw).hexdigest()


# -- output -----------------------------------------------------------------

def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return f"{value:.6f}"
    return str(value)


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    atomic_write(path, buf.getvalue().encode())


def write_json(path: Path, obj: Any) -> None:
    atomic_write(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def _round(x: float) -> Optional[float]:
    return None if x is None or math.isnan(x) else round(float(x), 6)


# -- subcommands ------------------------------------------------------------

def _generator_overrides(cfg: Config) -> dict[str, Any]:
    g = cfg.section("generator")
    return dict(
        n_bs=g.get("n_bs", int),
        shadowing_sigma_db=g.get("shadowing_sigma_db", float),
        sample_interval_ms=g.get("sample_interval_ms", int),
        hysteresis_db=g.get("hysteresis_db", float),
        time_to_trigger_ms=g.get("time_to_trigger_ms", float),
        path_loss_exponent=g.get("path_loss_exponent", float),
    )


def _split(cfg: Config, seed: int, split: str) -> list:
    count = cfg.section("traces").get(split, int)
    return generate_split(seed, split, count, **_generator_overrides(cfg))


def _dataset(cfg: Config, seed: int) -> DatasetConfig:
    d = cfg.section("dataset")
    return DatasetConfig(window=d.get("window", int), label_window_ms=d.get("label_window_ms", int),
                         negative_ratio=d.get("negative_ratio", float), near_ms=d.get("near_ms", int), seed=seed)


def _training(cfg: Config, seed: int) -> TrainConfig:
    t = cfg.section("training")
    return TrainConfig(epochs=t.get("epochs", int), learning_rate=t.get("learning_rate", float),
                       batch_size=t.get("batch_size", int), seed=seed, optimizer=t.get("optimizer", str),
                       hidden=t.get("hidden", lambda v: tuple(int(h) for h in v)),
                       clip_norm=t.get("clip_norm", float))


def cmd_gen_trace(cfg: Config, args: argparse.Namespace, out: Path) -> dict:
    t = cfg.section("traces")
    split = t.get("split", str)
    if split not in SPLIT_OFFSETS:
        raise ConfigError(f"traces.split must be one of {sorted(SPLIT_OFFSETS)}, got {split!r}")
    traces = generate_split(args.seed, split, t.get("count", int), **_generator_overrides(cfg))
    rows = []
    for i, tr in enumerate(traces):
        buf = io.StringIO(newline="")
        write_trace(tr, buf)
        atomic_write(out / "traces" / f"trace_{i:04d}.csv", buf.getvalue().encode())
        rows.extend((i, h.t, h.source, h.target) for h in tr.handovers)
    write_csv(out / "handovers.csv", ("trace", "t_ms", "source", "target"), rows)
    return {"traces": len(traces), "handovers": len(rows)}


def cmd_train(cfg: Config, args: argparse.Namespace, out: Path) -> dict:
    train_set = _split(cfg, args.seed, "train")
    val_set = _split(cfg, args.seed, "validation")
    result = fit(train_set, val_set, _dataset(cfg, args.seed), _training(cfg, args.seed))
    atomic_write(out / "model.ewlm", result.model.to_bytes())
    write_csv(out / "loss.csv", ("epoch", "loss"), enumerate(result.history))
    summary = {"threshold": result.threshold, "samples": result.n_samples,
               "positive_share": _round(result.positive_share), "final_loss": _round(result.history[-1])}
    write_json(out / "model.json", summary)
    return summary


def cmd_predict_eval(cfg: Config, args: argparse.Namespace, out: Path) -> dict:
    ev = cfg.section("evaluation")
    top_x = ev.get("top_x", int)
    lookback = ev.get("lookback_ms", int)
    horizons = [args.horizon] if args.horizon is not None else ev.get("horizons", lambda v: [int(h) for h in v], list(HORIZONS))
    if cfg.has("model"):
        m = cfg.section("model")
        model = LstmModel.load(m.get("path", str))
        threshold = m.get("threshold", float)
    else:
        result = fit(_split(cfg, args.seed, "train"), _split(cfg, args.seed, "validation"),
                     _dataset(cfg, args.seed), _training(cfg, args.seed))
        model, threshold = result.model, result.threshold
        atomic_write(out / "model.ewlm", model.to_bytes())
    test_set = _split(cfg, args.seed, "test")
    predictor = ModelPredictor(model, threshold, top_x)
    rows = []
    for h in horizons:
        m = evaluate(test_set, predictor, h, lookback)
        rows.append((h, m.true_at_horizon, m.late_true, m.wrong_or_missed, m.count,
                     availability_upper_bound(test_set, h)))
    write_csv(out / "metrics.csv",
              ("horizon_ms", "true_at_horizon", "late_true", "wrong_or_missed", "count", "upper_bound"), rows)
    return {"threshold": threshold, "metrics": [
        {"horizon_ms": r[0], "true_at_horizon": _round(r[1]), "late_true": _round(r[2]),
         "wrong_or_missed": _round(r[3]), "count": r[4], "upper_bound": _round(r[5])} for r in rows]}


def _profile(cfg: Config) -> StateProfile:
    p = cfg.section("profile")
    return StateProfile.build(p.get("total_bytes", int), p.get("dynamic_fraction", float),
                              p.get("update_rate", float))


def _scenario(cfg: Config, args: argparse.Namespace) -> Scenario:
    s = cfg.section("scenario")
    sc = Scenario(
        profile=_profile(cfg),
        horizon_ms=s.get("horizon_ms", float),
        client_interval_ms=s.get("client_interval_ms", float),
        bandwidth_bps=s.get("bandwidth_bps", float),
        latency_ms=s.get("latency_ms", float),
        handovers=s.get("handovers", int),
        misprediction_rate=s.get("misprediction_rate", float),
        cp_gap_ms=s.get("cp_gap_ms", float),
        reconnect_rtt_ms=s.get("reconnect_rtt_ms", float),
        # runs use seeds seed*stride, seed*stride+1, ...
        seed=args.seed * 100_000,
    )
    if args.horizon is not None:
        sc = replace(sc, horizon_ms=float(args.horizon))
    sc.validate()
    return sc


def _modes(args: argparse.Namespace) -> tuple[str, ...]:
    return (args.mode.replace("-", "_"),) if args.mode else ("baseline", "two_step")


SWEEP_HEADER = ("axis", "value", "mode", "runs", "blocking_p50", "blocking_p10", "blocking_p90",
                "downtime_p50", "residual_mean", "bytes_mean")


def cmd_sync_bench(cfg: Config, args: argparse.Namespace, out: Path) -> dict:
    base = _scenario(cfg, args)
    runs = cfg.get("runs", int)
    modes = _modes(args)
    sweeps = cfg.section("sweeps")
    summary: dict[str, Any] = {"modes": list(modes), "runs": runs, "sweeps": {}}
    base_rows = []
    for mode in modes:
        m = run_many(replace(base, mode=mode), runs)
        if not all(m.checksum_ok):
            raise RuntimeError(f"{mode}: target state differs from source after migration")
        base_rows.append((mode, runs, m.median("blocking_ms"), m.percentile("blocking_ms", 90),
                          m.median("downtime_ms"), float(np.mean(m.residual_keys)), m.bytes_transferred / runs))
    write_csv(out / "summary.csv", ("mode", "runs", "blocking_p50", "blocking_p90", "downtime_p50",
                                    "residual_mean", "bytes_mean"), base_rows)
    summary["base"] = {r[0]: {"blocking_p50": _round(r[2]), "downtime_p50": _round(r[4])} for r in base_rows}
    for axis in SWEEP_AXES:
        if not sweeps.has(axis):
            continue
        rows = sweep(axis, sweeps.floats(axis), base, runs, modes)
        write_csv(out / f"sweep_{axis}.csv", SWEEP_HEADER,
                  [tuple(getattr(r, f) for f in SWEEP_HEADER) for r in rows])
        summary["sweeps"][axis] = [{"value": r.value, "mode": r.mode, "blocking_p50": _round(r.blocking_p50)}
                                   for r in rows]
    return summary


def _cp(cfg: Config) -> tuple[CpConfig, LoadConfig]:
    c = cfg.section("control_plane")
    s = c.section("scheduler")
    limit = s.get("queue_limit", lambda v: None if v is None else int(v))
    try:
        sched = SchedulerConfig(weights=s.get("weights", lambda v: tuple(int(w) for w in v)),
                                service_us=s.get("service_us", int), fallback=s.get("fallback", _bool),
                                queue_limit=limit)
    except ValueError as exc:
        raise ConfigError(f"control_plane.scheduler: {exc}") from None
    cp = CpConfig(sched, propagation_us=c.get("propagation_us", int))
    ld = c.section("load")
    load = LoadConfig(procedures_per_s=ld.get("capacity_factor", float) * cp.capacity,
                      mix=ld.get("mix", lambda v: tuple(float(m) for m in v)),
                      pattern=ld.get("pattern", str), duration_s=ld.get("duration_s", float),
                      mean_batch=ld.get("mean_batch", float))
    load.validate()
    return cp, load


def cmd_cp_bench(cfg: Config, args: argparse.Namespace, out: Path) -> dict:
    cp, load = _cp(cfg)
    cmp_ = simulate(load, cp, seed=args.seed)
    summary: dict[str, Any] = {"capacity_per_s": cp.capacity, "offered_per_s": load.procedures_per_s,
                               "empty_system_ms": cp.empty_system_us / 1000}
    for res in (cmp_.priority, cmp_.fifo):
        rows = [(k.name, f"p{q}", res.percentile(k, q)) for k in Klass for q in PERCENTILES]
        write_csv(out / f"cp_{res.policy}.csv", ("class", "percentile", "completion_ms"), rows)
        summary[res.policy] = {k.name: {"median_ms": _round(res.median(k)), "completed": int(len(res.completions_ms[k])),
                                        "rejected": int(res.rejected[k]), "offered": int(res.offered[k])}
                               for k in Klass}
    return summary


E2E_HEADER = ("system", "mode", "policy", "runs", "downtime_p50", "downtime_p90", "blocking_p50", "cp_gap_p50",
              "mispredicted")


def cmd_e2e(cfg: Config, args: argparse.Namespace, out: Path) -> dict:
    """Reactive sync behind a FIFO control plane against two-step sync with priority."""
    base = _scenario(cfg, args)
    runs = cfg.get("runs", int)
    cp, load = _cp(cfg)
    cmp_ = simulate(load, cp, seed=args.seed)
    systems = {
        "baseline": ("baseline", "fifo", cmp_.fifo.completions_ms[Klass.MP]),
        "two_step_priority": ("two_step", "priority", cmp_.priority.completions_ms[Klass.HP]),
    }
    if args.mode:
        wanted = args.mode.replace("-", "_")
        systems = {k: v for k, v in systems.items() if v[0] == wanted}
    rows = []
    medians = {}
    for name, (mode, policy, gaps) in systems.items():
        m = run_many(replace(base, mode=mode), runs, empirical_sampler(gaps))
        if not all(m.checksum_ok):
            raise RuntimeError(f"{name}: target state differs from source after migration")
        medians[name] = m.median("downtime_ms")
        rows.append((name, mode, policy, runs, medians[name], m.percentile("downtime_ms", 90),
                     m.median("blocking_ms"), m.median("cp_gap_ms"), int(sum(m.mispredicted))))
    write_csv(out / "downtime.csv", E2E_HEADER, rows)
    summary: dict[str, Any] = {name: {"downtime_p50": _round(v)} for name, v in medians.items()}
    if len(medians) == 2:
        summary["improvement"] = _round(medians["baseline"] / medians["two_step_priority"])
    return summary


COMMANDS = {
    "gen-trace": cmd_gen_trace,
    "train": cmd_train,
    "predict-eval": cmd_predict_eval,
    "sync-bench": cmd_sync_bench,
    "cp-bench": cmd_cp_bench,
    "e2e": cmd_e2e,
}


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgewarp", description="Edge state migration experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=_u64, default=0)
        p.add_argument("--out", required=True)
        p.add_argument("--horizon", type=int, default=None, help="hint horizon in ms")
        p.add_argument("--mode", choices=("baseline", "two-step"), default=None)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("EDGEWARP_LOG", "error").lower()
    if level not in LOG_LEVELS:
        raise ConfigError(f"EDGEWARP_LOG must be one of {sorted(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        cfg, digest = load_config(args.config)
        if args.horizon is not None and args.horizon < 0:
            raise ConfigError("--horizon must be >= 0")
        out = Path(args.out)
        manifest = {"subcommand": args.command, "config": args.config, "seed": args.seed, "out": args.out,
                    "version": __version__, "config_sha256": digest, "horizon": args.horizon, "mode": args.mode}
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from None
        write_json(out / "manifest.json", manifest)
        summary = COMMANDS[args.command](cfg, args, out)
        write_json(out / "summary.json", summary)
    except (ConfigError, InvalidScenario, CpInvalidConfig, TraceError) as exc:
        print(f"edgewarp: config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report, don't trace back
        log.debug("run failed", exc_info=True)
        print(f"edgewarp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
