"""End-to-end experiment runner and the arm-vs-arm comparison.

One experiment arm: resolve a trace, learn co-activation statistics and a
placement from its first portion, then replay the remaining tokens through
the cache, the read planner, and the flash cost model. The train/replay
split keeps the evaluation honest: the placement never sees the tokens it is
judged on. The first slice of replay tokens is warmup (cache filling) and is
excluded from aggregates.

Reports carry per-token records, aggregates recomputable from those records,
a config echo, and a digest of the replayed trace so comparisons can refuse
to relate runs over different data.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .access import (
    CollapseConfig,
    build_extents,
    default_collapse_config,
    initial_planner_state,
    plan_token,
)
from .cache import SEGMENT, SPECULATIVE, SPORADIC, CacheConfig, NeuronCache, classify_runs
from .errors import RippleKitError
from .flashsim import FlashModel, is_iops_bound, load_profile, simulate
from .placement import (
    Placement,
    greedy_search,
    identity_placement,
    load_placement,
    shuffled_placement,
)
from .stats import extract_stats
from .trace import LayerTrace, SyntheticTraceSpec, generate_clustered_trace, read_trace, trace_digest

STRATEGIES = ("identity", "shuffled", "greedy", "file")

CSV_COLUMNS = [
    "token",
    "warmup",
    "activated",
    "cache_hits",
    "cache_misses",
    "io_ops",
    "read_neurons",
    "speculative_neurons",
    "bytes_read",
    "latency_s",
    "effective_bandwidth",
    "raw_bandwidth",
    "max_extent_len",
    "applied_threshold",
    "iops_bound",
]


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything one replay arm needs; fully seeded, hence reproducible."""

    trace_source: LayerTrace | SyntheticTraceSpec | str | Path
    strategy: str = "greedy"
    shuffle_seed: int = 0             # permutation seed for the shuffled strategy
    placement_path: str | None = None # placement file for the file strategy
    profile: str | FlashModel = "ufs40"
    bundle_bytes: int | None = None   # override the profile's bundle size
    cache: CacheConfig | None = None  # explicit config wins over cache_ratio
    cache_ratio: float = 0.1          # capacity as a fraction of neuron_count
    cache_seed: int = 0
    collapse: CollapseConfig | None = None
    collapse_enabled: bool = True
    token_range: tuple[int, int] | None = None
    train_fraction: float = 0.5
    warmup_fraction: float = 0.1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.strategy == "file" and not self.placement_path:
            raise ValueError("strategy 'file' requires placement_path")
        if not 0.0 <= self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in [0, 1)")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must be in [0, 1)")
        if not 0.0 < self.cache_ratio <= 1.0:
            raise ValueError("cache_ratio must be in (0, 1]")


@dataclass(frozen=True)
class RunReport:
    """Outcome of one experiment arm."""

    records: list[dict]          # one dict per replayed token, CSV_COLUMNS keys
    aggregates: dict             # computed over non-warmup records
    config: dict                 # spec echo, resolved model/cache/collapse values
    trace_sha256: str            # digest of the replayed token window
    cache_stats: dict            # cumulative cache counters at end of run


def _resolve_trace(source) -> LayerTrace:
    if isinstance(source, LayerTrace):
        return source
    if isinstance(source, SyntheticTraceSpec):
        return generate_clustered_trace(source)
    return read_trace(source)


def _resolve_placement(spec: ExperimentSpec, stats, neuron_count: int) -> Placement:
    if spec.strategy == "identity":
        return identity_placement(neuron_count)
    if spec.strategy == "shuffled":
        return shuffled_placement(neuron_count, spec.shuffle_seed)
    if spec.strategy == "greedy":
        return greedy_search(stats)
    placement, _ = load_placement(spec.placement_path)
    if placement.neuron_count != neuron_count:
        raise ValueError(
            f"placement file covers {placement.neuron_count} neurons, trace has {neuron_count}"
        )
    return placement


def _aggregate(records: list[dict], warmup_count: int) -> dict:
    window = records[warmup_count:]
    n = len(window)
    if n == 0:
        return {"tokens_measured": 0}

    def total(key):
        return sum(r[key] for r in window)

    latency = total("latency_s")
    io_ops = total("io_ops")
    read_neurons = total("read_neurons")
    activated_read = read_neurons - total("speculative_neurons")
    bytes_read = total("bytes_read")
    hits, misses = total("cache_hits"), total("cache_misses")
    bundle = bytes_read // read_neurons if read_neurons else 0
    return {
        "tokens_measured": n,
        "mean_latency_s": latency / n,
        "total_latency_s": latency,
        "mean_io_ops": io_ops / n,
        "mean_activated": total("activated") / n,
        "total_bytes_read": bytes_read,
        "mean_effective_bandwidth": (activated_read * bundle) / latency if latency else 0.0,
        "mean_raw_bandwidth": bytes_read / latency if latency else 0.0,
        "mean_extent_len": read_neurons / io_ops if io_ops else 0.0,
        "max_extent_len": max((r["max_extent_len"] for r in window), default=0),
        "cache_hit_rate": hits / (hits + misses) if hits + misses else 0.0,
        "speculative_bytes_fraction": total("speculative_neurons") / read_neurons if read_neurons else 0.0,
    }


def run_experiment(spec: ExperimentSpec) -> RunReport:
    """Run one arm: learn on the training window, replay the rest, report."""
    trace = _resolve_trace(spec.trace_source)
    if spec.token_range is not None:
        trace = trace.slice(*spec.token_range)
    n = trace.neuron_count

    split = int(len(trace.tokens) * spec.train_fraction)
    train, replay = trace.slice(0, split), trace.slice(split, None)
    if not replay.tokens:
        raise ValueError("empty replay window; lower train_fraction or supply more tokens")

    stats = extract_stats(train)
    placement = _resolve_placement(spec, stats, n)

    if isinstance(spec.profile, FlashModel):
        model = spec.profile
        if spec.bundle_bytes is not None and spec.bundle_bytes != model.bundle_bytes:
            model = FlashModel(
                op_latency=model.op_latency,
                max_bandwidth=model.max_bandwidth,
                bundle_bytes=spec.bundle_bytes,
                queue_depth=model.queue_depth,
            )
    else:
        model = load_profile(spec.profile, bundle_bytes=spec.bundle_bytes)

    cache_cfg = spec.cache or CacheConfig(
        capacity_neurons=max(1, int(spec.cache_ratio * n)),
        seed=spec.cache_seed,
    )
    collapse_cfg = spec.collapse or default_collapse_config(model)
    cache = NeuronCache(cache_cfg)
    state = initial_planner_state(collapse_cfg)
    cache_view = cache.contains

    records: list[dict] = []
    for index, activated in enumerate(replay.tokens):
        stage = "lookup"
        try:
            hits = 0
            missing: list[int] = []
            for i in activated:
                if cache.lookup_and_touch(int(i)):
                    hits += 1
                else:
                    missing.append(int(i))
            misses = len(missing)

            stage = "plan"
            if spec.collapse_enabled:
                plan, state = plan_token(activated, placement, cache_view, state, model, collapse_cfg)
                applied = state.current_threshold if state.last_bound_state else 0.0
            else:
                plan = build_extents(activated, placement, cache_view)
                applied = 0.0

            stage = "simulate"
            report = simulate(plan, model)

            stage = "admit"
            sporadic, segments = classify_runs(activated, placement, cache_cfg.segment_min_len)
            for i in sporadic:
                cache.admit(i, SPORADIC)
            for seg in segments:
                cache.admit(seg, SEGMENT)
            speculative_count = plan.total_neurons - plan.activated_neurons
            if cache_cfg.admit_prob_speculative > 0.0 and speculative_count:
                demanded = np.sort(placement.inverse[np.asarray(missing, dtype=np.int64)])
                covered = np.concatenate([np.arange(s, s + l) for s, l in plan.extents])
                for pos in np.setdiff1d(covered, demanded, assume_unique=True):
                    cache.admit(int(placement.order[pos]), SPECULATIVE)
        except RippleKitError as exc:
            raise RuntimeError(f"token {index}, stage {stage}: {exc}") from exc

        records.append({
            "token": index,
            "warmup": 0,
            "activated": int(activated.size),
            "cache_hits": hits,
            "cache_misses": int(misses),
            "io_ops": report.io_ops,
            "read_neurons": plan.total_neurons,
            "speculative_neurons": speculative_count,
            "bytes_read": report.bytes_read,
            "latency_s": report.latency,
            "effective_bandwidth": report.effective_bandwidth,
            "raw_bandwidth": report.raw_bandwidth,
            "max_extent_len": int(plan.extents[:, 1].max()) if plan.io_ops else 0,
            "applied_threshold": applied,
            "iops_bound": int(is_iops_bound(plan, model)),
        })

    warmup_count = int(len(records) * spec.warmup_fraction)
    for r in records[:warmup_count]:
        r["warmup"] = 1

    config_echo = {
        "strategy": spec.strategy,
        "shuffle_seed": spec.shuffle_seed,
        "profile": spec.profile if isinstance(spec.profile, str) else "custom",
        "model": asdict(model),
        "cache": asdict(cache_cfg),
        "collapse": asdict(collapse_cfg),
        "collapse_enabled": spec.collapse_enabled,
        "train_fraction": spec.train_fraction,
        "warmup_fraction": spec.warmup_fraction,
        "neuron_count": n,
        "tokens_train": len(train.tokens),
        "tokens_replayed": len(replay.tokens),
    }
    return RunReport(
        records=records,
        aggregates=_aggregate(records, warmup_count),
        config=config_echo,
        trace_sha256=trace_digest(replay),
        cache_stats=dict(cache.stats),
    )


def compare(reports: dict[str, RunReport], baseline: str) -> list[dict]:
    """Per-metric comparison of arms that replayed the identical trace.

    Rows carry each arm's value and its ratio against the baseline arm,
    oriented so that > 1 means better than baseline (lower latency, higher
    bandwidth or extent length).
    """
    if baseline not in reports:
        raise ValueError(f"baseline arm {baseline!r} not among {sorted(reports)}")
    digests = {r.trace_sha256 for r in reports.values()}
    if len(digests) > 1:
        raise ValueError("reports replay different traces; comparison refused")

    higher_is_better = {
        "mean_latency_s": False,
        "mean_io_ops": False,
        "mean_effective_bandwidth": True,
        "mean_raw_bandwidth": True,
        "mean_extent_len": True,
        "cache_hit_rate": True,
    }
    base = reports[baseline].aggregates
    rows = []
    for metric, higher in higher_is_better.items():
        row = {"metric": metric}
        for label, report in sorted(reports.items()):
            value = report.aggregates.get(metric, 0.0)
            row[label] = value
            bv = base.get(metric, 0.0)
            if higher:
                ratio = value / bv if bv else 0.0
            else:
                ratio = bv / value if value else 0.0
            row[f"{label}_vs_{baseline}"] = ratio
        rows.append(row)
    return rows


def write_report_csv(report: RunReport, path: str | Path) -> None:
    """One row per replayed token, fixed column order, no timestamps."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for record in report.records:
            writer.writerow(record)


def write_report_json(report: RunReport, path: str | Path) -> None:
    """Aggregates, config echo, cache counters, and the trace digest."""
    payload = {
        "aggregates": report.aggregates,
        "config": report.config,
        "cache_stats": report.cache_stats,
        "trace_sha256": report.trace_sha256,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")
