import json
import os
import subprocess
import sys

import numpy as np
import pytest

from tempest.cli import fig5_csv, main
from tempest.config import ExperimentConfig, build_graph, config_hash
from tempest.errors import ConfigError
from tempest.simulate import EmpiricalThresholdReport


def cli(*args, cwd):
    return subprocess.run([sys.executable, "-m", "tempest.cli", *args],
                          capture_output=True, text=True, cwd=cwd)


def read_header(path):
    with open(path) as fh:
        return json.loads(fh.readline().lstrip("# "))


class TestConfig:
    def test_schema_rejects_unknown_task(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"task": "nope", "seed": 1})

    def test_schema_rejects_extra_keys(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"task": "spectra", "seed": 1, "bogus": 2})

    def test_hash_is_canonical(self):
        a = {"task": "spectra", "seed": 3, "graph": {"preset": "iv"}}
        b = {"graph": {"preset": "iv"}, "seed": 3, "task": "spectra"}
        assert config_hash(a) == config_hash(b)

    def test_threads_env_fallback(self, monkeypatch):
        cfg = ExperimentConfig.from_dict({"task": "spectra", "seed": 0})
        monkeypatch.setenv("TEMPEST_THREADS", "6")
        assert cfg.resolve_threads() == 6
        monkeypatch.delenv("TEMPEST_THREADS")
        assert cfg.resolve_threads() == 1
        # an explicit value always beats the environment
        explicit = ExperimentConfig.from_dict({"task": "spectra", "seed": 0, "threads": 1})
        monkeypatch.setenv("TEMPEST_THREADS", "6")
        assert explicit.resolve_threads() == 1

    def test_build_graph_from_inline_spec(self):
        doc = {"task": "spectra", "seed": 0, "graph": {"spec": {
            "n": 2, "kind": "amei",
            "edges": [{"i": 0, "j": 1,
                       "model": {"type": "markov2", "params": {"q": 1.0, "r": 1.0},
                                 "time": "ct"}}]}}}
        g = build_graph(ExperimentConfig.from_dict(doc))
        assert g.n == 2 and g.m == 1


class TestCliRuns:
    def test_threshold_report_embeds_hash(self, tmp_path):
        r = cli("threshold", "--preset", "complete_edge_markovian",
                "--graph-param", "n=8", "--graph-param", "q=0.5", "--graph-param", "r=0.5",
                "--graph-param", 'time="dt"', "--certificate", "t4",
                "--delta", "0.5", "--seed", "7", cwd=tmp_path)
        assert r.returncode == 0, r.stderr
        doc = json.load(open(tmp_path / "threshold_7.json"))
        assert doc["seed"] == 7
        assert doc["config_hash"] == config_hash(doc["config"])
        assert doc["result"]["beta_threshold"] > 0

    def test_single_arc_oracle_matches_two_mode_analysis(self, tmp_path):
        spec = {"n": 2, "kind": "amai",
                "edges": [{"i": 0, "j": 1,
                           "model": {"type": "markov2", "params": {"q": 1.0, "r": 1.0},
                                     "time": "ct"}}]}
        cfgfile = tmp_path / "g.json"
        cfgfile.write_text(json.dumps({"task": "oracle", "seed": 1,
                                       "graph": {"spec": spec},
                                       "epidemic": {"beta": 1.0, "delta": 1.0}}))
        r = cli("oracle", "--config", str(cfgfile), cwd=tmp_path)
        assert r.returncode == 0, r.stderr
        rows = open(tmp_path / "oracle_1.csv").read().splitlines()
        header = read_header(tmp_path / "oracle_1.csv")
        assert header["config_hash"] == config_hash(header["config"])
        _, eta, verdict = rows[2].split(",")[:3]
        # two-mode system: Pi (x) I_2 + blockdiag(-D, BF - D), dense 4x4
        pi = np.array([[-1.0, 1.0], [1.0, -1.0]])
        big = np.kron(pi, np.eye(2))
        big[0:2, 0:2] += -np.eye(2)
        big[2:4, 2:4] += np.array([[-1.0, 1.0], [0.0, -1.0]])
        expected = float(np.linalg.eigvals(big).real.max())
        assert float(eta) == pytest.approx(expected, abs=1e-9)
        assert verdict == ("stable" if expected < 0 else "unstable")

    def test_resource_cap_exit_code(self, tmp_path):
        r = cli("oracle", "--preset", "complete_edge_markovian",
                "--graph-param", "n=8", "--graph-param", "q=1.0", "--graph-param", "r=1.0",
                "--beta", "0.1", "--delta", "1.0", "--seed", "0", cwd=tmp_path)
        assert r.returncode == 3  # 28 stochastic edges exceeds the 2^m cap

    def test_config_error_exit_code(self, tmp_path):
        r = cli("threshold", "--seed", "1", cwd=tmp_path)
        assert r.returncode == 1

    def test_figure3_monotone_columns(self, tmp_path):
        r = cli("figure3", "--panel", "a", "--seed", "0",
                "--param", "ratio_count=5", "--param", "delta3_count=6", cwd=tmp_path)
        assert r.returncode == 0, r.stderr
        rows = [line.split(",") for line in
                open(tmp_path / "figure3_a_0.csv").read().splitlines()[2:]]
        by_ratio = {}
        for dob, d3, rel, xi in rows:
            by_ratio.setdefault(float(dob), []).append((float(d3), float(xi)))
        for vals in by_ratio.values():
            xis = [x for _, x in sorted(vals)]
            assert all(b <= a + 1e-9 for a, b in zip(xis, xis[1:]))

    def test_simulate_trace_csv(self, tmp_path):
        r = cli("simulate", "--preset", "complete_edge_markovian",
                "--graph-param", "n=5", "--graph-param", "q=0.8", "--graph-param", "r=0.8",
                "--beta", "0.2", "--delta", "1.0", "--seed", "2",
                "--param", "horizon=20.0", "--paths", "2", cwd=tmp_path)
        assert r.returncode == 0, r.stderr
        lines = open(tmp_path / "simulate_2.csv").read().splitlines()
        assert lines[1] == "path_id,t_or_k,infected_count"
        assert len(lines) > 4

    def test_empirical_determinism_across_threads(self, tmp_path):
        common = ["empirical", "--preset", "iv",
                  "--graph-param", "n=25", "--graph-param", "er_prob=0.4",
                  "--graph-param", "graph_seed=3",
                  "--delta", "0.3", "--seed", "4",
                  "--beta-grid", "0.005:0.05:3", "--paths", "4", "--steps", "40"]
        r1 = cli(*common, "--threads", "1", "--out", "a.csv", cwd=tmp_path)
        r2 = cli(*common, "--threads", "2", "--out", "b.csv", cwd=tmp_path)
        assert r1.returncode == 0 and r2.returncode == 0, r1.stderr + r2.stderr
        rows_a = open(tmp_path / "a.csv").read().splitlines()[1:]
        rows_b = open(tmp_path / "b.csv").read().splitlines()[1:]
        assert rows_a == rows_b

    def test_experiment_preset_threshold_search(self, tmp_path):
        # default preset parameters: 500 nodes, edge probability 0.2,
        # graph seed = run seed; certified threshold lands near 6.3e-4
        r = cli("threshold", "--preset", "iv", "--certificate", "t4",
                "--delta", "0.05", "--seed", "1", cwd=tmp_path)
        assert r.returncode == 0, r.stderr
        doc = json.load(open(tmp_path / "threshold_1.json"))
        beta_hat = doc["result"]["beta_threshold"]
        assert 0.85 * 6.32e-4 <= beta_hat <= 1.15 * 6.32e-4
        assert doc["result"]["report"]["certificate"] == "T4"
        assert doc["result"]["report"]["stable"] is True

    def test_chung_subcommand_csv(self, tmp_path):
        r = cli("chung", "--preset", "complete_edge_markovian",
                "--graph-param", "n=6", "--graph-param", "q=1.0", "--graph-param", "r=1.0",
                "--beta", "0.5", "--delta", "1.0", "--family", "m2",
                "--param", "draws=2000", "--param", "s_count=5", "--seed", "3",
                cwd=tmp_path)
        assert r.returncode == 0, r.stderr
        lines = open(tmp_path / "chung_3.csv").read().splitlines()
        assert lines[1] == "s,empirical,bound"
        assert len(lines) == 7
        s, emp, bound = lines[2].split(",")
        assert float(s) == 0.0 and float(bound) == pytest.approx(6.0)  # kappa(0) = n

    def test_figure456_writes_three_panels(self, tmp_path):
        r = cli("figure456", "--preset", "iv",
                "--graph-param", "n=40", "--graph-param", "er_prob=0.3",
                "--graph-param", "graph_seed=2", "--delta", "0.05", "--seed", "5",
                "--beta-grid", "0.004:0.008:3", "--paths", "3", "--steps", "80",
                "--out", "figs", cwd=tmp_path)
        assert r.returncode == 0, r.stderr
        for name in ("fig4.csv", "fig5.csv", "fig6.csv"):
            lines = open(tmp_path / "figs" / name).read().splitlines()
            assert lines[0].startswith("# {") and len(lines) > 2
        fig5 = open(tmp_path / "figs" / "fig5.csv").read().splitlines()
        assert fig5[-2].startswith("threshold_t4,")
        assert fig5[-1].startswith("threshold_static,")

    def test_main_entry_returns_zero(self, tmp_path):
        old = os.getcwd()
        os.chdir(tmp_path)
        try:
            rc = main(["spectra", "--preset", "complete_edge_markovian",
                       "--graph-param", "n=6", "--graph-param", "q=1.0",
                       "--graph-param", "r=2.0", "--seed", "0"])
        finally:
            os.chdir(old)
        assert rc == 0
        doc = json.load(open(tmp_path / "spectra_0.json"))
        assert doc["result"]["eta_abar"] == pytest.approx(5 * (1 / 3))


class TestPlotEmitters:
    def test_empty_report_header_only(self, tmp_path):
        cfg = ExperimentConfig.from_dict({"task": "figure456", "seed": 0})
        empty = EmpiricalThresholdReport(np.zeros(0), np.zeros(0), np.zeros(0),
                                         None, 0, 0, 0)
        path = fig5_csv(str(tmp_path / "fig5.csv"), cfg, empty, 1.0, 2.0)
        lines = open(path).read().splitlines()
        assert len(lines) == 2 and lines[1] == "beta,z_star"
