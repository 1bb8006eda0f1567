import subprocess
import sys

import numpy as np
import pytest

from maxbellman.cli import main
from maxbellman.envs import chain_mdp
from maxbellman.experiments import (
    ExperimentConfig,
    bucket_means,
    load_config,
    load_curves,
    load_qtables,
    parse_config,
    run_experiment,
)
from maxbellman.learners import LinearDecay
from maxbellman.mdp_core import load_mdp, save_mdp

QUICK = """\
# short smoke run
env.layout = default
learner.rule = q-learning, max-q
learner.alpha = 0.05
schedule.start = 0.3
schedule.end = 0.0
schedule.over = 100
episodes = 200
seeds = {seeds}
cadence = {cadence}
out_dir = {out}
"""


def quick_config(tmp_path, seeds="3", cadence=50, name="out"):
    return parse_config(QUICK.format(seeds=seeds, cadence=cadence, out=tmp_path / name))


class TestConfig:
    def test_parse(self, tmp_path):
        cfg = quick_config(tmp_path)
        assert cfg.rules == ("q-learning", "max-q")
        assert cfg.alpha == 0.05 and cfg.gamma == 0.99
        assert cfg.schedule == LinearDecay(0.3, 0.0, 100)
        assert cfg.seeds == (0, 1, 2) and cfg.n_buckets == 4

    def test_defaults(self):
        cfg = parse_config("")
        assert cfg.layout == "default" and cfg.n_seeds == 10 and cfg.episodes == 100_000
        assert cfg.cadence == 500 and cfg.n_buckets == 200

    def test_explicit_seed_list(self):
        assert parse_config("seeds = 4, 9\n").seeds == (4, 9)

    @pytest.mark.parametrize(
        "text, message",
        [
            ("episodes 10\n", "line 1"),
            ("colour = red\n", "unknown key"),
            ("episodes = 10\nepisodes = 20\n", "line 2"),
            ("learner.alpha = fast\n", "line 1"),
            ("seeds = 0\n", "seeds"),
            ("learner.rule = sarsa\n", "unknown rule"),
            ("cadence = 0\n", "cadence"),
        ],
    )
    def test_errors(self, text, message):
        with pytest.raises(ValueError, match=message):
            parse_config(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="missing.cfg"):
            load_config(tmp_path / "missing.cfg")


class TestBuckets:
    def test_even_split(self):
        assert bucket_means(np.arange(6.0), 2).tolist() == [0.5, 2.5, 4.5]

    def test_partial_last_bucket(self):
        assert bucket_means(np.arange(5.0), 2).tolist() == [0.5, 2.5, 4.0]


class TestRunExperiment:
    def test_outputs_and_round_trip(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MAXDP_THREADS", "1")
        cfg = quick_config(tmp_path)
        summary = run_experiment(cfg)
        out = tmp_path / "out"
        assert {p.name for p in out.iterdir()} == {
            "curves.csv", "policy_q-learning.txt", "policy_max-q.txt", "qtable_q-learning.csv", "qtable_max-q.csv",
        }
        assert load_curves(out / "curves.csv") == summary.curves
        tables = load_qtables(out / "qtable_max-q.csv")
        assert tables == summary.qtables["max-q"]
        curves = summary.curves["max-q"]
        assert curves.episode.tolist() == [50, 100, 150, 200]
        assert np.all(curves.std_return >= 0) and np.all(curves.std_max_reward >= 0)
        text = (out / "policy_max-q.txt").read_text()
        assert text.count("seed ") == 3 and "actions=" in text

    def test_single_seed_has_zero_spread(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MAXDP_THREADS", "1")
        summary = run_experiment(quick_config(tmp_path, seeds="1"), write=False)
        for curves in summary.curves.values():
            assert not curves.std_return.any() and not curves.std_max_reward.any()

    def test_cadence_equal_to_episodes_gives_one_bucket(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MAXDP_THREADS", "1")
        summary = run_experiment(quick_config(tmp_path, cadence=200), write=False)
        assert all(len(c) == 1 for c in summary.curves.values())

    def test_seed_order_does_not_matter(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MAXDP_THREADS", "1")
        a = run_experiment(quick_config(tmp_path, seeds="0,1,2"), write=False)
        b = run_experiment(quick_config(tmp_path, seeds="2,0,1"), write=False)
        assert a.curves == b.curves

    def test_parallel_matches_serial_and_files_repeat(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MAXDP_THREADS", "1")
        run_experiment(quick_config(tmp_path, name="serial"))
        monkeypatch.setenv("MAXDP_THREADS", "2")
        run_experiment(quick_config(tmp_path, name="parallel"))
        for name in ("curves.csv", "policy_max-q.txt", "qtable_q-learning.csv"):
            assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "parallel" / name).read_bytes()

    def test_bad_thread_setting(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MAXDP_THREADS", "zero")
        with pytest.raises(ValueError, match="MAXDP_THREADS"):
            run_experiment(quick_config(tmp_path), write=False)

    def test_missing_layout(self, tmp_path):
        cfg = ExperimentConfig(layout=str(tmp_path / "none.layout"), episodes=10, seeds=(0,))
        with pytest.raises(FileNotFoundError, match="none.layout"):
            run_experiment(cfg, write=False)


class TestCli:
    def test_oracle_default(self, capsys):
        assert main(["oracle", "default", "--horizon", "11"]) == 0
        out = capsys.readouterr().out
        assert "best_cumulative_return = 27.5\n" in out
        assert "best_max_raw_reward = 9.0\n" in out

    def test_solve_chain(self, tmp_path, capsys):
        path = tmp_path / "chain2.mdp"
        save_mdp(chain_mdp(2, [0.0, 2.0], 0.5), path)
        assert main(["solve", str(path), "--operator", "max-opt"]) == 0
        out = capsys.readouterr().out
        assert "Q[0] = 1.0\n" in out and "Q[1] = 2.0\n" in out and "converged = True" in out

    def test_solve_eval_with_policy(self, tmp_path, capsys):
        path = tmp_path / "chain2.mdp"
        save_mdp(chain_mdp(2, [0.0, 2.0], 0.5), path)
        assert main(["solve", str(path), "--operator", "std-eval", "--policy", "0,0", "--seed", "3"]) == 0
        assert "Q[1] = 3.99999999" in capsys.readouterr().out

    def test_solve_not_converged(self, tmp_path, capsys):
        path = tmp_path / "chain2.mdp"
        save_mdp(chain_mdp(2, [0.0, 2.0], 0.5), path)
        assert main(["solve", str(path), "--operator", "std-opt", "--max-iter", "3"]) != 0
        assert "no convergence" in capsys.readouterr().err

    def test_run_missing_config(self, capsys):
        assert main(["run", "missing.cfg"]) != 0
        assert "not found" in capsys.readouterr().err

    def test_run(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("MAXDP_THREADS", "1")
        cfg = tmp_path / "quick.cfg"
        cfg.write_text(QUICK.format(seeds=2, cadence=100, out=tmp_path / "ignored"))
        assert main(["run", str(cfg), "--out-dir", str(tmp_path / "cli"), "--seed", "5"]) == 0
        assert (tmp_path / "cli" / "curves.csv").is_file()
        assert "seed 5:" in (tmp_path / "cli" / "policy_max-q.txt").read_text()

    def test_markovize(self, tmp_path, capsys):
        layout = tmp_path / "strip.layout"
        layout.write_text("grid 1 2 0 0 3 -1\n0 5\n")
        assert main(["markovize", str(layout), "-o", str(tmp_path / "strip.mdp")]) == 0
        mdp = load_mdp(tmp_path / "strip.mdp")
        assert mdp.n_states == 4 and mdp.reward[0, 3] == 5.0

    def test_markovize_default_needs_horizon(self, tmp_path, capsys):
        assert main(["markovize", "default", "-o", str(tmp_path / "x.mdp")]) != 0
        assert "--horizon" in capsys.readouterr().err
        assert main(["markovize", "default", "-o", str(tmp_path / "x.mdp"), "--horizon", "3"]) == 0

    def test_bad_layout_text(self, tmp_path, capsys):
        layout = tmp_path / "bad.layout"
        layout.write_text("grid 1 2 0 0 3 -1\n0 x\n")
        assert main(["oracle", str(layout)]) != 0
        assert "line 2" in capsys.readouterr().err

    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["oracle", "default", "--bogus"])
        assert exc.value.code != 0

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "maxbellman", "oracle", "default", "--horizon", "5"],
            capture_output=True, text=True, check=False,
        )
        assert proc.returncode == 0 and "best_cumulative_return" in proc.stdout
