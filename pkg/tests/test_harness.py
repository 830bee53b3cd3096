import json
import math

import numpy as np
import pytest

from saddlesim.harness import (
    ConfigError,
    _regression_constants,
    _build_regression_network,
    generate_synthetic,
    parse_libsvm,
    partition_data,
    run_experiment,
    run_sweep,
)
from saddlesim.trace import RunTrace, TraceFormatError, TraceRow, load_trace, write_trace


def quad_config(tmp_path, **overrides):
    cfg = {
        "seed": 3,
        "rounds": 6,
        "metric_cadence": 1,
        "epsilon": 1e-6,
        "problem": {"family": "quadratic", "dim": 5, "mu": 1.0, "smoothness": 4.0,
                    "coupling": 1.5, "heterogeneity": 0.4},
        "network": {"topology": "ring", "agents": 4},
        "methods": [{"name": "sliding_master"}, {"name": "egd_decentralized"}],
    }
    cfg.update(overrides)
    return cfg


class TestSyntheticData:
    def test_zero_amplitude_identical(self):
        datasets = generate_synthetic(10, 4, 3, 0.0, seed=0)
        for x, y in datasets[1:]:
            assert np.array_equal(x, datasets[0][0])
            assert np.array_equal(y, datasets[0][1])

    def test_deterministic(self):
        a = generate_synthetic(10, 4, 3, 0.5, seed=1)
        b = generate_synthetic(10, 4, 3, 0.5, seed=1)
        for (xa, ya), (xb, yb) in zip(a, b):
            assert np.array_equal(xa, xb) and np.array_equal(ya, yb)

    def test_similarity_monotone_in_amplitude(self):
        prob_cfg = {"reg_lambda": 0.2, "reg_beta": 0.2, "radius_w": 0.4, "radius_r": 0.15}
        deltas = []
        for amp in (0.1, 1.0, 10.0):
            datasets = generate_synthetic(40, 8, 5, amp, seed=2)
            net = _build_regression_network(datasets, prob_cfg)
            deltas.append(_regression_constants(net, datasets, "safe").delta)
        assert deltas[0] < deltas[1] < deltas[2]

    def test_labels_unperturbed(self):
        datasets = generate_synthetic(10, 4, 3, 5.0, seed=3)
        for _, y in datasets:
            assert np.array_equal(y, datasets[0][1])


LIBSVM_FIXTURE = """\
+1 1:0.5 3:-2
-1
+1 2:1.25
-1 1:-0.5 2:0.5 3:0.5
+1 3:4
-1 1:1
+1 2:-1 3:1
-1 1:0.25 3:0.75
+1 1:-1.5
-1 2:2.5
+1 3:-0.125
-1 1:0.0625 2:-0.0625
+1 1:1 2:1 3:1
-1 1:-1 2:-1 3:-1
+1 2:0.375
-1 3:1.5
+1 1:2 3:-0.25
-1 2:-2.25
+1 1:0.1 2:0.2 3:0.3
-1 3:-3
"""

LIBSVM_EXPECTED = np.array([
    [0.5, 0, -2], [0, 0, 0], [0, 1.25, 0], [-0.5, 0.5, 0.5], [0, 0, 4],
    [1, 0, 0], [0, -1, 1], [0.25, 0, 0.75], [-1.5, 0, 0], [0, 2.5, 0],
    [0, 0, -0.125], [0.0625, -0.0625, 0], [1, 1, 1], [-1, -1, -1],
    [0, 0.375, 0], [0, 0, 1.5], [2, 0, -0.25], [0, -2.25, 0],
    [0.1, 0.2, 0.3], [0, 0, -3],
])


class TestLibsvmParsing:
    def test_fixture_exact(self, tmp_path):
        path = tmp_path / "fixture.libsvm"
        path.write_text(LIBSVM_FIXTURE)
        matrix, labels = parse_libsvm(path)
        assert matrix.shape == (20, 3)
        assert np.array_equal(matrix.toarray(), LIBSVM_EXPECTED)
        assert np.array_equal(labels, np.tile([1.0, -1.0], 10))

    def test_label_only_line(self, tmp_path):
        path = tmp_path / "tiny.libsvm"
        path.write_text("-1\n+1 2:3\n")
        matrix, labels = parse_libsvm(path)
        assert np.array_equal(matrix.toarray(), [[0.0, 0.0], [0.0, 3.0]])
        assert np.array_equal(labels, [-1.0, 1.0])

    def test_dimension_from_max_index(self, tmp_path):
        path = tmp_path / "wide.libsvm"
        path.write_text("+1 123:1\n")
        matrix, _ = parse_libsvm(path)
        assert matrix.shape == (1, 123)

    def test_malformed_token_reports_line(self, tmp_path):
        path = tmp_path / "bad.libsvm"
        path.write_text("+1 1:0.5\n-1 2;0.5\n")
        with pytest.raises(ValueError, match=":2:"):
            parse_libsvm(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.libsvm"
        path.write_text("")
        with pytest.raises(ValueError, match="empty"):
            parse_libsvm(path)


class TestPartition:
    def test_near_equal_sizes(self):
        x = np.arange(30).reshape(10, 3)
        y = np.arange(10)
        shards = partition_data(x, y, 3)
        assert [s[0].shape[0] for s in shards] == [4, 3, 3]
        assert np.array_equal(np.concatenate([s[1] for s in shards]), y)

    def test_single_shard(self):
        x = np.arange(8).reshape(4, 2)
        y = np.arange(4)
        shards = partition_data(x, y, 1)
        assert np.array_equal(shards[0][0], x)

    def test_shuffled_deterministic(self):
        x = np.arange(40).reshape(20, 2)
        y = np.arange(20)
        a = partition_data(x, y, 4, scheme="shuffled", seed=5)
        b = partition_data(x, y, 4, scheme="shuffled", seed=5)
        for (xa, _), (xb, _) in zip(a, b):
            assert np.array_equal(xa, xb)

    def test_too_many_agents(self):
        with pytest.raises(ValueError):
            partition_data(np.zeros((2, 1)), np.zeros(2), 3)


class TestTraceIO:
    def make_trace(self):
        rows = [
            TraceRow(0, 0, 0, dist_sq=1.0, wall_seconds=0.0),
            TraceRow(1, 3, 10, dist_sq=0.1234567890123456789, gap=math.nan,
                     consensus_err=2.5e-17),
            TraceRow(2, 6, 20, dist_sq=math.nan),
        ]
        return RunTrace(method="demo", rows=rows)

    def test_round_trip_exact(self, tmp_path):
        path = tmp_path / "demo.csv"
        trace = self.make_trace()
        write_trace(trace, path)
        back = load_trace(path)
        for a, b in zip(trace.rows, back.rows):
            assert (a.round, a.comm_rounds, a.local_iters) == (b.round, b.comm_rounds, b.local_iters)
            for field in ("dist_sq", "gap", "consensus_err", "wall_seconds"):
                va, vb = getattr(a, field), getattr(b, field)
                assert (math.isnan(va) and math.isnan(vb)) or va == vb

    def test_empty_write_rejected(self, tmp_path):
        with pytest.raises(TraceFormatError):
            write_trace(RunTrace(method="x"), tmp_path / "x.csv")

    def test_foreign_header_names_column(self, tmp_path):
        path = tmp_path / "foreign.csv"
        path.write_text("round,comm_rounds,iterations,dist_sq,gap,consensus_err,wall_seconds\n")
        with pytest.raises(TraceFormatError, match="iterations"):
            load_trace(path)

    def test_row_invariants_checked(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "round,comm_rounds,local_iters,dist_sq,gap,consensus_err,wall_seconds\n"
            "1,3,1,,,,0\n"
            "1,4,2,,,,0\n"
        )
        with pytest.raises(TraceFormatError, match="strictly increasing"):
            load_trace(path)


class TestRunExperiment:
    def test_single_round_has_rows(self, tmp_path):
        cfg = quad_config(tmp_path, rounds=1)
        res = run_experiment(cfg, tmp_path / "out")
        for path in res.trace_paths.values():
            trace = load_trace(path)
            assert len(trace.rows) >= 1

    def test_deterministic_bytes(self, tmp_path):
        cfg = quad_config(tmp_path)
        cfg["methods"].append({"name": "sliding_gossip", "rounds": 3})
        a = run_experiment(cfg, tmp_path / "a")
        b = run_experiment(cfg, tmp_path / "b")
        for label in a.trace_paths:
            assert a.trace_paths[label].read_bytes() == b.trace_paths[label].read_bytes()
        ma = (tmp_path / "a" / "manifest.json").read_text()
        mb = (tmp_path / "b" / "manifest.json").read_text()
        assert ma == mb

    def test_manifest_contents(self, tmp_path):
        cfg = quad_config(tmp_path)
        res = run_experiment(cfg, tmp_path / "out")
        man = json.loads((tmp_path / "out" / "manifest.json").read_text())
        for key in ("L", "mu", "delta", "rho", "diameter", "reference", "methods"):
            assert key in man
        assert man["agents"] == 4

    def test_metric_cadence(self, tmp_path):
        cfg = quad_config(tmp_path, rounds=6, metric_cadence=3)
        res = run_experiment(cfg, tmp_path / "out")
        trace = load_trace(res.trace_paths["sliding_master"])
        with_metrics = [r.round for r in trace.rows if not math.isnan(r.dist_sq)]
        assert with_metrics == [0, 3, 6]

    def test_failure_removes_partial_outputs(self, tmp_path):
        cfg = quad_config(tmp_path)
        # second method's override forces a broken tuning
        cfg["methods"] = [{"name": "sliding_master"},
                          {"name": "sliding_gossip", "h0": 1, "h1": 1,
                           "gamma": -1.0}]
        out = tmp_path / "out"
        with pytest.raises(RuntimeError, match="sliding_gossip"):
            run_experiment(cfg, out)
        assert not list(out.glob("*.csv"))
        assert not (out / "manifest.json").exists()

    def test_config_validation(self, tmp_path):
        with pytest.raises(ConfigError):
            run_experiment({"rounds": 2}, tmp_path / "x")
        cfg = quad_config(tmp_path)
        cfg["methods"] = []
        with pytest.raises(ConfigError):
            run_experiment(cfg, tmp_path / "x")
        cfg = quad_config(tmp_path)
        cfg["methods"] = [{"name": "nonsense"}]
        with pytest.raises(ConfigError):
            run_experiment(cfg, tmp_path / "x")
        cfg = quad_config(tmp_path)
        del cfg["seed"]
        with pytest.raises(ConfigError):
            run_experiment(cfg, tmp_path / "x")

    def test_stop_level_short_circuits(self, tmp_path):
        cfg = quad_config(tmp_path, rounds=400, stop_dist_sq=1e-6)
        res = run_experiment(cfg, tmp_path / "out")
        trace = load_trace(res.trace_paths["sliding_master"])
        assert trace.rows[-1].dist_sq <= 1e-6
        assert trace.rows[-1].round < 400

    def test_edge_list_topology(self, tmp_path):
        edges = tmp_path / "ring.edges"
        edges.write_text("0 1\n1 2\n2 3\n3 0\n")
        cfg = quad_config(tmp_path)
        cfg["network"] = {"topology": "custom", "agents": 4, "edge_list": str(edges)}
        res = run_experiment(cfg, tmp_path / "out")
        assert res.manifest["topology"] == "custom"
        assert res.manifest["diameter"] == 2

    def test_parallel_runs_match_serial(self, tmp_path, monkeypatch):
        cfg = quad_config(tmp_path)
        cfg["methods"].append({"name": "sliding_gossip", "rounds": 3})
        serial = run_experiment(cfg, tmp_path / "serial")
        monkeypatch.setenv("SADDLESIM_THREADS", "3")
        parallel = run_experiment(cfg, tmp_path / "parallel")
        for label in serial.trace_paths:
            assert serial.trace_paths[label].read_bytes() \
                == parallel.trace_paths[label].read_bytes()


class TestSweep:
    def test_delta_monotone_across_amplitudes(self, tmp_path):
        cfg = {
            "seed": 9,
            "rounds": 2,
            "epsilon": 1e-6,
            "problem": {"family": "synthetic_regression", "n_local": 30, "dim": 6,
                        "reg_lambda": 0.3, "reg_beta": 0.3,
                        "radius_w": 0.4, "radius_r": 0.2},
            "network": {"topology": "star", "agents": 4},
            "methods": [{"name": "egd_centralized"}],
        }
        results = run_sweep(cfg, tmp_path / "sweep", amplitudes=[0.1, 1.0, 10.0])
        deltas = [r.manifest["delta"] for r in results]
        assert deltas[0] < deltas[1] < deltas[2]

    def test_sweep_requires_synthetic(self, tmp_path):
        cfg = quad_config(tmp_path)
        with pytest.raises(ConfigError):
            run_sweep(cfg, tmp_path / "s", amplitudes=[0.1])
