"""Command-line flows: the full pipeline, config handling, failure modes."""

import json

import pytest
from click.testing import CliRunner

from ripplekit.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


def gen_trace(runner, path, neurons=64, tokens=80, extra=()):
    result = runner.invoke(main, [
        "gen-trace", "--neurons", str(neurons), "--tokens", str(tokens),
        "--seed", "5", "--out", str(path), *extra,
    ])
    assert result.exit_code == 0, result.output
    return result


class TestBasics:
    def test_version(self, runner):
        result = runner.invoke(main, ["--version"])
        assert result.exit_code == 0
        assert "ripplekit" in result.output

    def test_help_lists_commands(self, runner):
        result = runner.invoke(main, ["--help"])
        assert result.exit_code == 0
        for name in ("gen-trace", "stats", "search", "simulate", "compare", "calibrate"):
            assert name in result.output

    def test_option_defaults_shown(self, runner):
        result = runner.invoke(main, ["gen-trace", "--help"])
        assert result.exit_code == 0
        assert "0.1" in result.output      # sparsity default
        assert "0.9" in result.output      # fidelity default


class TestPipeline:
    def test_full_flow(self, runner, tmp_path):
        trace = tmp_path / "t.jsonl"
        stats = tmp_path / "s.json"
        placement = tmp_path / "p.json"
        out_dir = tmp_path / "runs"

        gen_trace(runner, trace)

        result = runner.invoke(main, ["stats", "--trace", str(trace), "--out", str(stats)])
        assert result.exit_code == 0, result.output
        assert "N=64" in result.output

        result = runner.invoke(main, ["search", "--stats", str(stats), "--out", str(placement)])
        assert result.exit_code == 0, result.output
        assert "search took" in result.output
        assert placement.exists()

        result = runner.invoke(main, [
            "simulate", "--trace", str(trace),
            "--strategy", "shuffled", "--strategy", "greedy",
            "--strategy", "file", "--placement", str(placement),
            "--out-dir", str(out_dir),
        ])
        assert result.exit_code == 0, result.output
        assert "ratios vs baseline arm 'shuffled'" in result.output
        for arm in ("shuffled", "greedy", "file"):
            assert (out_dir / f"{arm}.csv").exists()
            assert (out_dir / f"{arm}.json").exists()
        # the file arm replays the same placement the search produced
        assert (out_dir / "file.json").read_text() != ""

        result = runner.invoke(main, [
            "compare", str(out_dir / "greedy.json"), str(out_dir / "shuffled.json"),
        ])
        assert result.exit_code == 0, result.output
        assert "ratios vs 'greedy'" in result.output
        assert "mean_latency_s" in result.output

    def test_compare_baseline_flag(self, runner, tmp_path):
        trace = tmp_path / "t.jsonl"
        out_dir = tmp_path / "runs"
        gen_trace(runner, trace)
        result = runner.invoke(main, [
            "simulate", "--trace", str(trace),
            "--strategy", "identity", "--strategy", "greedy",
            "--out-dir", str(out_dir),
        ])
        assert result.exit_code == 0, result.output
        result = runner.invoke(main, [
            "compare", str(out_dir / "identity.json"), str(out_dir / "greedy.json"),
            "--baseline", "greedy",
        ])
        assert result.exit_code == 0, result.output
        assert "ratios vs 'greedy'" in result.output

    def test_simulate_deterministic(self, runner, tmp_path):
        trace = tmp_path / "t.jsonl"
        gen_trace(runner, trace)
        for d in ("r1", "r2"):
            result = runner.invoke(main, [
                "simulate", "--trace", str(trace), "--strategy", "greedy",
                "--out-dir", str(tmp_path / d),
            ])
            assert result.exit_code == 0, result.output
        assert (tmp_path / "r1" / "greedy.csv").read_bytes() == \
            (tmp_path / "r2" / "greedy.csv").read_bytes()

    def test_search_batch_with_jobs(self, runner, tmp_path):
        stats_paths = []
        for k in (0, 1):
            trace = tmp_path / f"t{k}.jsonl"
            stats = tmp_path / f"layer{k}.json"
            gen_trace(runner, trace, neurons=32, tokens=30)
            result = runner.invoke(main, ["stats", "--trace", str(trace), "--out", str(stats)])
            assert result.exit_code == 0, result.output
            stats_paths.append(stats)
        result = runner.invoke(main, [
            "search",
            "--stats", str(stats_paths[0]), "--stats", str(stats_paths[1]),
            "--out-dir", str(tmp_path / "placements"), "--jobs", "2",
        ])
        assert result.exit_code == 0, result.output
        assert result.output.count("search took") == 2
        assert (tmp_path / "placements" / "layer0.placement.json").exists()
        assert (tmp_path / "placements" / "layer1.placement.json").exists()

    def test_search_out_requires_single_stats(self, runner, tmp_path):
        trace = tmp_path / "t.jsonl"
        stats = tmp_path / "s.json"
        gen_trace(runner, trace, neurons=32, tokens=30)
        runner.invoke(main, ["stats", "--trace", str(trace), "--out", str(stats)])
        result = runner.invoke(main, [
            "search", "--stats", str(stats), "--stats", str(stats),
            "--out", str(tmp_path / "p.json"),
        ])
        assert result.exit_code != 0
        assert "--out-dir" in result.output

    def test_calibrate_flow(self, runner, tmp_path):
        points = tmp_path / "curve.csv"
        t_op, bmax = 8e-6, 2e9
        rows = ["# io_size_bytes,bandwidth"]
        for s in (4096, 16384, 65536, 262144, 1048576):
            rows.append(f"{s},{s / (t_op + s / bmax)}")
        points.write_text("\n".join(rows) + "\n")
        profile = tmp_path / "dev.yaml"
        result = runner.invoke(main, [
            "calibrate", "--points", str(points), "--queue-depth", "1",
            "--out", str(profile),
        ])
        assert result.exit_code == 0, result.output
        assert "op_latency=8.000e-06" in result.output
        assert profile.exists()

        trace = tmp_path / "t.jsonl"
        gen_trace(runner, trace, neurons=32, tokens=30)
        result = runner.invoke(main, [
            "simulate", "--trace", str(trace), "--profile", str(profile),
            "--out-dir", str(tmp_path / "runs"),
        ])
        assert result.exit_code == 0, result.output

    def test_calibrate_rejects_malformed_row(self, runner, tmp_path):
        points = tmp_path / "curve.csv"
        points.write_text("4096,1e8\n1,2,3\n")
        result = runner.invoke(main, [
            "calibrate", "--points", str(points), "--out", str(tmp_path / "p.yaml"),
        ])
        assert result.exit_code != 0
        assert "expected io_size_bytes,bandwidth" in result.output


class TestConfig:
    def test_unknown_key_named(self, runner, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("cache:\n  admit_probe: 0.5\n")
        result = runner.invoke(main, ["--config", str(cfg), "gen-trace",
                                      "--neurons", "16", "--tokens", "4",
                                      "--out", str(tmp_path / "t.jsonl")])
        assert result.exit_code != 0
        assert "cache.admit_probe" in result.output

    def test_env_var_supplies_config(self, runner, tmp_path):
        out_dir = tmp_path / "from_env"
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text(f"out_dir: {out_dir}\n")
        trace = tmp_path / "t.jsonl"
        gen_trace(runner, trace, neurons=32, tokens=30)
        result = runner.invoke(main, [
            "simulate", "--trace", str(trace), "--strategy", "greedy",
        ], env={"RIPPLEKIT_CONFIG": str(cfg)})
        assert result.exit_code == 0, result.output
        assert (out_dir / "greedy.csv").exists()

    def test_config_defined_profile(self, runner, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text(
            "profiles:\n"
            "  bench:\n"
            "    op_latency: 1.0e-5\n"
            "    max_bandwidth: 1.0e9\n"
            "    bundle_bytes: 4096\n"
            "    queue_depth: 1\n"
        )
        trace = tmp_path / "t.jsonl"
        gen_trace(runner, trace, neurons=32, tokens=30)
        result = runner.invoke(main, [
            "--config", str(cfg), "simulate", "--trace", str(trace),
            "--profile", "bench", "--out-dir", str(tmp_path / "runs"),
        ])
        assert result.exit_code == 0, result.output

    def test_missing_config_file(self, runner, tmp_path):
        result = runner.invoke(main, ["--config", str(tmp_path / "nope.yaml"),
                                      "gen-trace", "--neurons", "16", "--tokens", "4",
                                      "--out", str(tmp_path / "t.jsonl")])
        assert result.exit_code != 0
        assert "not found" in result.output

    def test_max_neurons_limit(self, runner, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("max_neurons: 4\n")
        trace = tmp_path / "t.jsonl"
        stats = tmp_path / "s.json"
        gen_trace(runner, trace, neurons=8, tokens=10, extra=("--sparsity", "0.5"))
        runner.invoke(main, ["stats", "--trace", str(trace), "--out", str(stats)])
        result = runner.invoke(main, ["--config", str(cfg),
                                      "search", "--stats", str(stats),
                                      "--out", str(tmp_path / "p.json")])
        assert result.exit_code != 0
        assert "max_neurons" in result.output


class TestFailureModes:
    def test_malformed_trace_names_line(self, runner, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"layer_id":0,"neuron_count":4,"bundle_width":2}\n[2,1]\n')
        result = runner.invoke(main, ["stats", "--trace", str(bad),
                                      "--out", str(tmp_path / "s.json")])
        assert result.exit_code != 0
        assert "line 2" in result.output

    def test_unknown_profile(self, runner, tmp_path):
        trace = tmp_path / "t.jsonl"
        gen_trace(runner, trace, neurons=32, tokens=30)
        result = runner.invoke(main, [
            "simulate", "--trace", str(trace), "--profile", "nvme99",
            "--out-dir", str(tmp_path / "runs"),
        ])
        assert result.exit_code != 0
        assert "ufs40" in result.output

    def test_invalid_generator_parameters(self, runner, tmp_path):
        result = runner.invoke(main, [
            "gen-trace", "--neurons", "16", "--tokens", "4",
            "--sparsity", "1.5", "--out", str(tmp_path / "t.jsonl"),
        ])
        assert result.exit_code != 0
        assert "target_sparsity" in result.output

    def test_simulate_file_strategy_needs_placement(self, runner, tmp_path):
        trace = tmp_path / "t.jsonl"
        gen_trace(runner, trace, neurons=32, tokens=30)
        result = runner.invoke(main, [
            "simulate", "--trace", str(trace), "--strategy", "file",
            "--out-dir", str(tmp_path / "runs"),
        ])
        assert result.exit_code != 0
        assert "placement_path" in result.output
