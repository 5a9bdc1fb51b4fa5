"""Experiment runner: replay mechanics, aggregates, comparison, report files."""

import numpy as np
import pytest

from ripplekit import (
    CacheConfig,
    ExperimentSpec,
    FlashModel,
    LayerTrace,
    SyntheticTraceSpec,
    compare,
    generate_clustered_trace,
    greedy_search,
    extract_stats,
    run_experiment,
    save_placement,
    write_report_csv,
    write_report_json,
)
from ripplekit.harness import CSV_COLUMNS

EXACT_MODEL = FlashModel(
    op_latency=2.0 ** -17,
    max_bandwidth=2.0 ** 32,
    bundle_bytes=4096,
    queue_depth=1,
)

NO_ADMIT = dict(admit_prob_sporadic=0.0, admit_prob_segment=0.0)


def dense_trace(neuron_count, token_count):
    token = np.arange(neuron_count, dtype=np.int32)
    return LayerTrace(0, neuron_count, 2, tuple(token for _ in range(token_count)))


@pytest.fixture(scope="module")
def clustered_512():
    return generate_clustered_trace(SyntheticTraceSpec(
        neuron_count=512, token_count=300, target_sparsity=0.08,
        cluster_count=8, cluster_fidelity=0.9, seed=3))


@pytest.fixture(scope="module")
def greedy_vs_shuffled(clustered_512):
    return {
        strategy: run_experiment(ExperimentSpec(trace_source=clustered_512, strategy=strategy))
        for strategy in ("shuffled", "greedy")
    }


class TestSpecValidation:
    def test_unknown_strategy(self):
        with pytest.raises(ValueError, match="strategy"):
            ExperimentSpec(trace_source="x.jsonl", strategy="sorted")

    def test_file_strategy_needs_path(self):
        with pytest.raises(ValueError, match="placement_path"):
            ExperimentSpec(trace_source="x.jsonl", strategy="file")

    def test_fraction_bounds(self):
        with pytest.raises(ValueError, match="train_fraction"):
            ExperimentSpec(trace_source="x.jsonl", train_fraction=1.0)
        with pytest.raises(ValueError, match="cache_ratio"):
            ExperimentSpec(trace_source="x.jsonl", cache_ratio=0.0)

    def test_empty_replay_window(self):
        with pytest.raises(ValueError, match="replay"):
            run_experiment(ExperimentSpec(trace_source=LayerTrace(0, 4, 2, ())))


class TestReplayMechanics:
    def test_uncached_dense_replay_reads_one_extent_per_token(self):
        report = run_experiment(ExperimentSpec(
            trace_source=dense_trace(64, 40),
            strategy="identity",
            profile=EXACT_MODEL,
            cache=CacheConfig(capacity_neurons=1, **NO_ADMIT),
            collapse_enabled=False,
        ))
        assert len(report.records) == 20
        for r in report.records:
            assert r["io_ops"] == 1
            assert r["read_neurons"] == 64
            assert r["cache_hits"] == 0
            assert r["cache_misses"] == 64
            assert r["iops_bound"] == 0
            assert r["max_extent_len"] == 64
        # one 64-bundle read sits far above the 8-bundle knee
        assert report.aggregates["mean_raw_bandwidth"] == pytest.approx(
            EXACT_MODEL.max_bandwidth * 64 / 72, rel=1e-9)

    def test_cache_holding_everything_ends_all_io(self):
        report = run_experiment(ExperimentSpec(
            trace_source=dense_trace(32, 100),
            strategy="identity",
            profile=EXACT_MODEL,
            cache=CacheConfig(capacity_neurons=32, admit_prob_sporadic=1.0,
                              admit_prob_segment=1.0),
        ))
        assert report.aggregates["mean_io_ops"] == 0.0
        assert report.aggregates["total_bytes_read"] == 0
        assert report.aggregates["cache_hit_rate"] == 1.0
        # only the very first replay token missed, and it is warmup
        assert report.records[0]["cache_misses"] == 32
        assert all(r["cache_misses"] == 0 for r in report.records[1:])

    def test_per_token_accounting(self, greedy_vs_shuffled):
        for report in greedy_vs_shuffled.values():
            for r in report.records:
                assert r["cache_hits"] + r["cache_misses"] == r["activated"]
                assert r["read_neurons"] - r["speculative_neurons"] == r["cache_misses"]
                assert r["bytes_read"] == r["read_neurons"] * 4096
                assert (r["io_ops"] == 0) == (r["read_neurons"] == 0)

    def test_warmup_flags_and_exclusion(self, greedy_vs_shuffled):
        report = greedy_vs_shuffled["greedy"]
        warmup = [r for r in report.records if r["warmup"]]
        assert len(warmup) == 15  # 10 percent of 150 replayed tokens
        assert warmup == report.records[:15]
        assert report.aggregates["tokens_measured"] == 135

    def test_aggregates_recompute_from_records(self, greedy_vs_shuffled):
        report = greedy_vs_shuffled["greedy"]
        window = [r for r in report.records if not r["warmup"]]
        agg = report.aggregates
        n = len(window)
        lat = sum(r["latency_s"] for r in window)
        assert agg["mean_latency_s"] == pytest.approx(lat / n)
        assert agg["mean_io_ops"] == pytest.approx(sum(r["io_ops"] for r in window) / n)
        assert agg["total_bytes_read"] == sum(r["bytes_read"] for r in window)
        read = sum(r["read_neurons"] for r in window)
        ops = sum(r["io_ops"] for r in window)
        assert agg["mean_extent_len"] == pytest.approx(read / ops)
        hits = sum(r["cache_hits"] for r in window)
        misses = sum(r["cache_misses"] for r in window)
        assert agg["cache_hit_rate"] == pytest.approx(hits / (hits + misses))
        spec_neurons = sum(r["speculative_neurons"] for r in window)
        assert agg["speculative_bytes_fraction"] == pytest.approx(spec_neurons / read)

    def test_deterministic_rerun(self, clustered_512):
        spec = ExperimentSpec(trace_source=clustered_512, strategy="greedy")
        assert run_experiment(spec).records == run_experiment(spec).records

    def test_token_range_window(self, clustered_512):
        report = run_experiment(ExperimentSpec(
            trace_source=clustered_512, token_range=(10, 60)))
        assert report.config["tokens_train"] == 25
        assert report.config["tokens_replayed"] == 25
        assert len(report.records) == 25

    def test_file_strategy_replays_saved_placement(self, tmp_path, clustered_512):
        split = int(len(clustered_512.tokens) * 0.5)
        stats = extract_stats(clustered_512.slice(0, split))
        path = tmp_path / "p.json"
        save_placement(greedy_search(stats), path)
        from_file = run_experiment(ExperimentSpec(
            trace_source=clustered_512, strategy="file", placement_path=str(path)))
        from_search = run_experiment(ExperimentSpec(
            trace_source=clustered_512, strategy="greedy"))
        assert from_file.records == from_search.records

    def test_file_strategy_rejects_size_mismatch(self, tmp_path, clustered_512):
        path = tmp_path / "p.json"
        save_placement(greedy_search(extract_stats(dense_trace(8, 2))), path)
        with pytest.raises(ValueError, match="covers"):
            run_experiment(ExperimentSpec(
                trace_source=clustered_512, strategy="file", placement_path=str(path)))

    def test_speculative_admission_reaches_cache(self, clustered_512):
        report = run_experiment(ExperimentSpec(
            trace_source=clustered_512,
            strategy="greedy",
            cache=CacheConfig(capacity_neurons=51, admit_prob_speculative=0.5),
        ))
        spec_neurons = sum(r["speculative_neurons"] for r in report.records)
        assert spec_neurons > 0
        offered = (report.cache_stats["admitted_speculative"]
                   + report.cache_stats["rejected_speculative"])
        assert offered > 0

    def test_collapse_disabled_leaves_threshold_zero(self, clustered_512):
        report = run_experiment(ExperimentSpec(
            trace_source=clustered_512, strategy="greedy", collapse_enabled=False))
        assert all(r["applied_threshold"] == 0.0 for r in report.records)
        assert all(r["speculative_neurons"] == 0 for r in report.records)


class TestComparison:
    def test_greedy_beats_shuffled_on_clustered_trace(self, greedy_vs_shuffled):
        lat = {k: v.aggregates["mean_latency_s"] for k, v in greedy_vs_shuffled.items()}
        assert lat["shuffled"] / lat["greedy"] > 1.5

    def test_ratios_oriented_greater_is_better(self, greedy_vs_shuffled):
        rows = {r["metric"]: r for r in compare(greedy_vs_shuffled, baseline="shuffled")}
        assert rows["mean_latency_s"]["greedy_vs_shuffled"] > 1.5
        assert rows["mean_extent_len"]["greedy_vs_shuffled"] > 1.0
        assert rows["mean_latency_s"]["shuffled_vs_shuffled"] == pytest.approx(1.0)

    def test_self_comparison_is_unity(self, greedy_vs_shuffled):
        report = greedy_vs_shuffled["greedy"]
        rows = compare({"a": report, "b": report}, baseline="a")
        for row in rows:
            if row["a"]:
                assert row["b_vs_a"] == pytest.approx(1.0)

    def test_refuses_different_traces(self, clustered_512):
        a = run_experiment(ExperimentSpec(trace_source=clustered_512))
        b = run_experiment(ExperimentSpec(trace_source=dense_trace(16, 30)))
        with pytest.raises(ValueError, match="different traces"):
            compare({"a": a, "b": b}, baseline="a")

    def test_unknown_baseline(self, greedy_vs_shuffled):
        with pytest.raises(ValueError, match="baseline"):
            compare(greedy_vs_shuffled, baseline="identity")


class TestReportFiles:
    def test_csv_columns_and_rows(self, tmp_path, greedy_vs_shuffled):
        report = greedy_vs_shuffled["greedy"]
        path = tmp_path / "r.csv"
        write_report_csv(report, path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 1 + len(report.records)

    def test_csv_byte_identical_across_runs(self, tmp_path, clustered_512):
        spec = ExperimentSpec(trace_source=clustered_512, strategy="greedy")
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_report_csv(run_experiment(spec), p1)
        write_report_csv(run_experiment(spec), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_json_payload(self, tmp_path, greedy_vs_shuffled):
        import json

        report = greedy_vs_shuffled["greedy"]
        path = tmp_path / "r.json"
        write_report_json(report, path)
        payload = json.loads(path.read_text())
        assert set(payload) == {"aggregates", "config", "cache_stats", "trace_sha256"}
        assert payload["trace_sha256"] == report.trace_sha256
        assert payload["config"]["strategy"] == "greedy"
