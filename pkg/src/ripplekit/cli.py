"""Command-line entry point: the pipeline as subcommands.

gen-trace -> stats -> search -> simulate compose into the full flow; compare
relates finished runs and calibrate fits a hardware profile from a measured
bandwidth curve. Defaults come from the config file (--config or the
RIPPLEKIT_CONFIG environment variable); flags override the file.
"""

from __future__ import annotations

import functools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click

from . import __version__
from .config import ENV_VAR, load_config
from .errors import RippleKitError, SizeLimitError
from .flashsim import (
    FlashModel,
    PROFILE_PRESETS,
    calibrate_from_curve,
    load_profile,
    save_profile,
)
from .harness import ExperimentSpec, RunReport, compare, run_experiment, write_report_csv, write_report_json
from .access import CollapseConfig, analytic_threshold
from .cache import CacheConfig
from .placement import greedy_search, save_placement
from .stats import extract_stats, load_stats, save_stats
from .trace import SyntheticTraceSpec, generate_clustered_trace, read_trace, write_trace

log = logging.getLogger("ripplekit")


def _fail_cleanly(func):
    """Turn component errors into one-line diagnostics with exit code 1."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (RippleKitError, ValueError, OSError) as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _resolve_profile(cfg: dict, source: str, bundle_bytes: int | None) -> FlashModel:
    """Preset name, config-defined profile, or profile file path."""
    named = cfg.get("profiles", {})
    if source not in PROFILE_PRESETS and source in named:
        entry = dict(named[source])
        model = FlashModel(
            op_latency=float(entry.pop("op_latency")),
            max_bandwidth=float(entry.pop("max_bandwidth")),
            bundle_bytes=int(entry.pop("bundle_bytes")),
            queue_depth=int(entry.pop("queue_depth", 32)),
            iops_knee_bytes=float(entry.pop("iops_knee_bytes", 0.0)),
        )
        if entry:
            raise click.ClickException(
                f"profile {source!r}: unknown keys {sorted(entry)}"
            )
        if bundle_bytes is not None and bundle_bytes != model.bundle_bytes:
            model = FlashModel(
                op_latency=model.op_latency,
                max_bandwidth=model.max_bandwidth,
                bundle_bytes=bundle_bytes,
                queue_depth=model.queue_depth,
            )
        return model
    return load_profile(source, bundle_bytes=bundle_bytes)


@click.group()
@click.version_option(version=__version__, prog_name="ripplekit")
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False),
    default=None,
    envvar=ENV_VAR,
    help=f"Config file (YAML); also read from ${ENV_VAR}.",
)
@click.pass_context
def main(ctx, config_path):
    """Co-activation-aware neuron placement and flash replay toolkit."""
    try:
        cfg = load_config(config_path)
    except RippleKitError as exc:
        raise click.ClickException(str(exc)) from exc
    level = getattr(logging, str(cfg.get("verbosity", "info")).upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = cfg


@main.command("gen-trace")
@click.option("--neurons", type=int, required=True, help="Neuron bundles per layer.")
@click.option("--tokens", type=int, required=True, help="Number of tokens to generate.")
@click.option("--sparsity", type=float, default=0.1, show_default=True, help="Target activated fraction per token.")
@click.option("--clusters", type=int, default=8, show_default=True, help="Hidden co-activation clusters.")
@click.option("--fidelity", type=float, default=0.9, show_default=True, help="Probability a token draws from one cluster.")
@click.option("--noise-fraction", type=float, default=0.0, show_default=True, help="Uniform share of a clustered token's budget.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--layer-id", type=int, default=0, show_default=True)
@click.option("--bundle-width", type=click.Choice(["2", "3"]), default="2", show_default=True, help="Matrices bound per bundle.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output trace file (JSONL).")
@_fail_cleanly
def cmd_gen_trace(neurons, tokens, sparsity, clusters, fidelity, noise_fraction, seed, layer_id, bundle_width, out):
    """Generate a clustered synthetic activation trace."""
    spec = SyntheticTraceSpec(
        neuron_count=neurons,
        token_count=tokens,
        target_sparsity=sparsity,
        cluster_count=clusters,
        cluster_fidelity=fidelity,
        seed=seed,
        noise_fraction=noise_fraction,
    )
    trace = generate_clustered_trace(spec, layer_id=layer_id, bundle_width=int(bundle_width))
    write_trace(trace, out)
    click.echo(f"wrote {tokens} tokens, N={neurons}, to {out}")


@main.command("stats")
@click.option("--trace", "trace_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output stats file (JSON).")
@_fail_cleanly
def cmd_stats(trace_path, out):
    """Count single and pairwise activation frequencies over a trace."""
    trace = read_trace(trace_path)
    stats = extract_stats(trace)
    save_stats(stats, out)
    click.echo(
        f"N={stats.neuron_count}, tokens={stats.token_count}, "
        f"co-activated pairs={stats.pair_count.size}, to {out}"
    )


def _search_one(stats_path: str, out_path: str, max_neurons: int) -> tuple[str, int, float]:
    stats = load_stats(stats_path)
    if stats.neuron_count > max_neurons:
        raise SizeLimitError(
            f"{stats_path}: N={stats.neuron_count} exceeds the configured "
            f"max_neurons={max_neurons} (the pair table is O(N^2))"
        )
    started = time.perf_counter()
    placement = greedy_search(stats)
    elapsed = time.perf_counter() - started
    save_placement(placement, out_path)
    return out_path, stats.neuron_count, elapsed


@main.command("search")
@click.option("--stats", "stats_paths", type=click.Path(exists=True, dir_okay=False), multiple=True, required=True, help="Stats file(s); repeatable for per-layer batches.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Placement output (single stats file only).")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None, help="Output directory for batch runs.")
@click.option("--jobs", type=int, default=1, show_default=True, help="Parallel worker processes for batch runs.")
@click.pass_obj
@_fail_cleanly
def cmd_search(cfg, stats_paths, out, out_dir, jobs):
    """Search a placement per stats file; prints wall time per layer."""
    if out is not None and len(stats_paths) > 1:
        raise click.ClickException("--out only works with a single --stats; use --out-dir")
    if out is None:
        directory = Path(out_dir or cfg["out_dir"])
        directory.mkdir(parents=True, exist_ok=True)
        outputs = [str(directory / (Path(p).stem + ".placement.json")) for p in stats_paths]
    else:
        outputs = [out]
    max_neurons = int(cfg["max_neurons"])

    tasks = list(zip(stats_paths, outputs))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_search_one, *zip(*[(s, o, max_neurons) for s, o in tasks])))
    else:
        results = [_search_one(s, o, max_neurons) for s, o in tasks]
    for out_path, n, elapsed in results:
        click.echo(f"N={n}: search took {elapsed:.3f} s -> {out_path}")


@main.command("simulate")
@click.option("--trace", "trace_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--strategy", "strategies", multiple=True, default=("greedy",), show_default=True, type=click.Choice(["identity", "shuffled", "greedy", "file"]), help="Placement arm(s); repeatable.")
@click.option("--placement", "placement_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Placement file for the 'file' strategy.")
@click.option("--profile", default=None, help="Hardware preset, config profile, or profile file.")
@click.option("--bundle-bytes", type=int, default=None, help="Override the profile's bundle size.")
@click.option("--cache-ratio", type=float, default=None, help="Cache capacity as a fraction of N.")
@click.option("--collapse/--no-collapse", "collapse_enabled", default=None, help="Toggle access collapse for all arms.")
@click.option("--collapse-threshold", type=int, default=None, help="Initial gap threshold (neurons); default is the analytic break-even.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seeds the cache coins and the shuffled arm.")
@click.option("--train-fraction", type=float, default=0.5, show_default=True)
@click.option("--warmup-fraction", type=float, default=0.1, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
@click.pass_obj
@_fail_cleanly
def cmd_simulate(cfg, trace_path, strategies, placement_path, profile, bundle_bytes,
                 cache_ratio, collapse_enabled, collapse_threshold, seed,
                 train_fraction, warmup_fraction, out_dir):
    """Replay a trace under one or more placement arms; write CSV + JSON."""
    trace = read_trace(trace_path)
    bundle_bytes = bundle_bytes if bundle_bytes is not None else cfg["bundle_bytes"]
    model = _resolve_profile(cfg, profile or cfg["profile"], bundle_bytes)

    cache_section = cfg["cache"]
    ratio = cache_ratio if cache_ratio is not None else cache_section["ratio"]
    capacity = max(1, int(ratio * trace.neuron_count))
    cache_cfg = CacheConfig(
        capacity_neurons=capacity,
        seed=seed,
        segment_min_len=int(cache_section["segment_min_len"]),
        admit_prob_sporadic=float(cache_section["admit_prob_sporadic"]),
        admit_prob_segment=float(cache_section["admit_prob_segment"]),
        admit_prob_speculative=float(cache_section["admit_prob_speculative"]),
        small_queue_fraction=float(cache_section["small_queue_fraction"]),
        ghost_size=cache_section["ghost_size"],
        ghost_promotes=bool(cache_section["ghost_promotes"]),
    )

    collapse_section = cfg["collapse"]
    initial = collapse_threshold if collapse_threshold is not None else collapse_section["initial_threshold"]
    if initial is None:
        initial = analytic_threshold(model)
    max_threshold = collapse_section["max_threshold"]
    if max_threshold is None:
        max_threshold = max(4 * initial, 1)
    collapse_cfg = CollapseConfig(
        initial_threshold=int(initial),
        max_threshold=int(max_threshold),
        min_threshold=int(collapse_section["min_threshold"]),
        adjust_factor=float(collapse_section["adjust_factor"]),
        detector_period=int(collapse_section["detector_period"]),
    )
    if collapse_enabled is None:
        collapse_enabled = bool(collapse_section["enabled"])

    directory = Path(out_dir or cfg["out_dir"])
    directory.mkdir(parents=True, exist_ok=True)

    reports: dict[str, RunReport] = {}
    seen: list[str] = []
    for strategy in strategies:
        if strategy in seen:
            continue
        seen.append(strategy)
        spec = ExperimentSpec(
            trace_source=trace,
            strategy=strategy,
            shuffle_seed=seed,
            placement_path=placement_path,
            profile=model,
            cache=cache_cfg,
            collapse=collapse_cfg,
            collapse_enabled=collapse_enabled,
            train_fraction=train_fraction,
            warmup_fraction=warmup_fraction,
        )
        report = run_experiment(spec)
        reports[strategy] = report
        write_report_csv(report, directory / f"{strategy}.csv")
        write_report_json(report, directory / f"{strategy}.json")
        agg = report.aggregates
        click.echo(
            f"{strategy}: mean latency {agg['mean_latency_s'] * 1e3:.3f} ms/token, "
            f"mean extent {agg['mean_extent_len']:.2f} neurons, "
            f"hit rate {agg['cache_hit_rate']:.2%} -> {directory / strategy}.{{csv,json}}"
        )

    if len(reports) > 1:
        baseline = seen[0]
        click.echo(f"\nratios vs baseline arm {baseline!r} (>1 is better):")
        for row in compare(reports, baseline):
            cells = "  ".join(
                f"{label}={row[f'{label}_vs_{baseline}']:.3f}" for label in seen[1:]
            )
            click.echo(f"  {row['metric']:<28} {cells}")


@main.command("compare")
@click.argument("report_paths", type=click.Path(exists=True, dir_okay=False), nargs=-1, required=True)
@click.option("--baseline", default=None, help="Baseline arm label; defaults to the first report's label.")
@_fail_cleanly
def cmd_compare(report_paths, baseline):
    """Compare finished runs (JSON summaries) metric by metric."""
    import json as _json

    reports: dict[str, RunReport] = {}
    order: list[str] = []
    for path in report_paths:
        payload = _json.loads(Path(path).read_text("utf-8"))
        label = Path(path).stem
        reports[label] = RunReport(
            records=[],
            aggregates=payload["aggregates"],
            config=payload.get("config", {}),
            trace_sha256=payload["trace_sha256"],
            cache_stats=payload.get("cache_stats", {}),
        )
        order.append(label)
    baseline = baseline or order[0]
    rows = compare(reports, baseline)
    labels = [l for l in order]
    header = f"{'metric':<28}" + "".join(f"{l:>18}" for l in labels)
    click.echo(header)
    for row in rows:
        cells = "".join(f"{row[l]:>18.6g}" for l in labels)
        click.echo(f"{row['metric']:<28}{cells}")
    click.echo(f"\nratios vs {baseline!r} (>1 is better):")
    for row in rows:
        cells = "".join(f"{row[f'{l}_vs_{baseline}']:>18.3f}" for l in labels)
        click.echo(f"{row['metric']:<28}{cells}")


@main.command("calibrate")
@click.option("--points", "points_path", type=click.Path(exists=True, dir_okay=False), required=True, help="CSV of io_size_bytes,bandwidth_bytes_per_s rows.")
@click.option("--queue-depth", type=int, default=32, show_default=True)
@click.option("--bundle-bytes", type=int, default=4096, show_default=True)
@click.option("--name", default="calibrated", show_default=True, help="Profile name to embed.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output profile file (YAML).")
@_fail_cleanly
def cmd_calibrate(points_path, queue_depth, bundle_bytes, name, out):
    """Fit hardware parameters to a measured bandwidth curve."""
    import csv as _csv

    points = []
    with open(points_path, newline="", encoding="utf-8") as fh:
        for row in _csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 2:
                raise click.ClickException(
                    f"{points_path}: expected io_size_bytes,bandwidth rows, got {row!r}"
                )
            points.append((float(row[0]), float(row[1])))
    result = calibrate_from_curve(points, queue_depth=queue_depth, bundle_bytes=bundle_bytes)
    save_profile(result.model, out, name=name)
    knee = result.model.iops_knee_bytes
    click.echo(
        f"op_latency={result.model.op_latency:.3e} s, "
        f"max_bandwidth={result.model.max_bandwidth:.3e} B/s, "
        f"knee={knee:.0f} B, residual={result.residual:.3e}"
        + (", ceiling unbounded (points all in the linear region)" if result.bmax_unbounded else "")
    )
    click.echo(f"wrote profile {name!r} to {out}")


if __name__ == "__main__":
    main()
