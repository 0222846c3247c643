import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from wasgd import RngStream, linear_model, mean_model, parse_scheme
from wasgd.cli import main
from wasgd.harness import ExperimentConfig, build_model, run_experiment


def read_csv(path):
    lines = [l for l in open(path).read().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def comments(path):
    return [l for l in open(path).read().splitlines() if l.startswith("#")]


def run_cli(tmp_path, *args, name="out.csv"):
    out = tmp_path / name
    code = main(list(args) + ["--out", str(out)])
    return code, out


class TestSchemas:
    def test_normality(self, tmp_path):
        code, out = run_cli(tmp_path, "simulate", "normality", "--n", "200", "--reps", "5",
                            "--scheme", "uniform", "--scheme", "poly:gamma=3", "--dim", "2",
                            "--xstar", "1,2", "--sandwich-reps", "1000")
        assert code == 0
        rows = read_csv(out)
        assert list(rows[0]) == ["scheme", "coord", "rep", "std_error_scaled", "std_error_unscaled"]
        assert len(rows) == 2 * 2 * 5
        r = next(r for r in rows if r["scheme"] == "poly:gamma=3")
        assert float(r["std_error_unscaled"]) / float(r["std_error_scaled"]) == pytest.approx(
            np.sqrt(16 / 7))

    def test_mse(self, tmp_path):
        code, out = run_cli(tmp_path, "simulate", "mse", "--model", "mean", "--n", "100",
                            "--reps", "10", "--scheme", "adaptive", "--checkpoints", "10,100")
        assert code == 0
        rows = read_csv(out)
        assert list(rows[0]) == ["scheme", "n", "mse", "sd"]
        assert [r["n"] for r in rows] == ["10", "100"]

    def test_coverage(self, tmp_path):
        code, out = run_cli(tmp_path, "simulate", "coverage", "--n", "2000", "--reps", "8",
                            "--scheme", "uniform", "--method", "random-scaling")
        assert code == 0
        rows = read_csv(out)
        assert list(rows[0]) == ["scheme", "coord", "coverage", "mean_halfwidth"]
        assert len(rows) == 5
        assert any("critical_values=grid=10000,paths=1000000,seed=1" in c for c in comments(out))

    def test_weights_compare(self, tmp_path):
        code, out = run_cli(tmp_path, "simulate", "weights-compare", "--model", "expectile",
                            "--n", "20", "--reps", "2000")
        assert code == 0
        rows = read_csv(out)
        assert list(rows[0]) == ["scheme", "index", "weight"]
        by = {}
        for r in rows:
            by.setdefault(r["scheme"], []).append(float(r["weight"]))
        assert set(by) >= {"oracle", "adaptive", "uniform", "poly:gamma=3", "suffix:kappa=0.5"}
        for name in ("oracle", "adaptive"):
            assert int(np.argmax(by[name])) == 19
        np.testing.assert_allclose(by["uniform"], 1 / 20)

    def test_oracle_weights(self, tmp_path):
        code, out = run_cli(tmp_path, "oracle-weights", "--n", "10", "--reps", "1000")
        assert code == 0
        rows = read_csv(out)
        assert list(rows[0]) == ["index", "weight"]
        assert sum(float(r["weight"]) for r in rows) == pytest.approx(1.0)

    def test_critical_values(self, tmp_path):
        code, out = run_cli(tmp_path, "critical-values", "--grid", "1000", "--paths", "100000",
                            "--seed", "3", "--levels", "0.025,0.5,0.975")
        assert code == 0
        rows = read_csv(out)
        assert list(rows[0]) == ["level", "quantile", "grid", "paths", "seed"]
        assert float(rows[1]["quantile"]) == 0.0
        assert 6.3 < float(rows[2]["quantile"]) < 7.2


class TestReproducibility:
    args = ("simulate", "mse", "--n", "3000", "--reps", "150", "--scheme", "uniform",
            "--scheme", "suffix:kappa=0.5", "--scheme", "online-suffix", "--checkpoints", "1000,3000")

    def test_byte_identical(self, tmp_path):
        _, a = run_cli(tmp_path, *self.args, name="a.csv")
        _, b = run_cli(tmp_path, *self.args, name="b.csv")
        assert a.read_bytes() == b.read_bytes()

    def test_workers_do_not_matter(self, tmp_path):
        _, a = run_cli(tmp_path, *self.args, "--workers", "1", name="a.csv")
        _, b = run_cli(tmp_path, *self.args, "--workers", "3", name="b.csv")
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_output(self, tmp_path):
        _, a = run_cli(tmp_path, *self.args, name="a.csv")
        _, b = run_cli(tmp_path, *self.args, "--seed", "1", name="b.csv")
        assert a.read_bytes() != b.read_bytes()

    def test_header_hash(self, tmp_path):
        _, out = run_cli(tmp_path, *self.args)
        head = comments(out)[0]
        cfg = ExperimentConfig("mse", build_model("linear"), n=3000, reps=150,
                               schemes=["uniform", "suffix:kappa=0.5", "online-suffix"],
                               checkpoints=[1000, 3000])
        assert f"config_hash={cfg.config_hash()}" in head
        assert "seed=0" in head and "critical_values=none" in head

    def test_config_file_and_override(self, tmp_path):
        conf = tmp_path / "c.json"
        conf.write_text(json.dumps({"model": "mean", "n": 50, "reps": 4, "scheme": ["uniform"],
                                    "seed": 9}))
        _, a = run_cli(tmp_path, "simulate", "mse", "--config", str(conf), name="a.csv")
        _, b = run_cli(tmp_path, "simulate", "mse", "--config", str(conf), "--seed", "10",
                       name="b.csv")
        assert "seed=9" in comments(a)[0] and "seed=10" in comments(b)[0]

    def test_replication_uses_its_own_stream(self):
        from wasgd import StepSchedule, run_trajectory
        from wasgd.averaging import make_averager
        cfg = ExperimentConfig("mse", mean_model(0.0), n=200, reps=70, schemes=["uniform"])
        rep = run_experiment(cfg)
        avg = make_averager(parse_scheme("uniform"))
        sq = []
        for r in range(70):
            avg = make_averager(parse_scheme("uniform"))
            run_trajectory(StepSchedule(), mean_model(0.0), 200, RngStream(0, r), [avg])
            sq.append(avg.estimate[0] ** 2)
        assert rep.rows[0][2] == pytest.approx(np.mean(sq), rel=1e-10)


class TestMse:
    def test_optimal_mean_model_n400(self):
        cfg = ExperimentConfig("mse", mean_model(0.0), n=400, reps=400, schemes=["adaptive"])
        mse = run_experiment(cfg).rows[0][2]
        assert 0.00225 <= mse <= 0.00275

    def test_ordering_alpha_08(self):
        from wasgd import StepSchedule
        cfg = ExperimentConfig("mse", mean_model(0.0), StepSchedule(1.0, 0.8), n=1600, reps=400,
                               schemes=["adaptive", "uniform", "last"])
        s = {r["scheme"]: r for r in run_experiment(cfg).summary}
        opt, asgd, last = s["adaptive"], s["uniform"], s["last"]
        assert opt["mse"] <= asgd["mse"] < last["mse"]
        assert asgd["mse"] - opt["mse"] > max(opt["se"], asgd["se"])
        assert last["mse"] - asgd["mse"] > max(asgd["se"], last["se"])

    def test_noiseless_decreases(self):
        cfg = ExperimentConfig("mse", linear_model([1.0, -1.0], noise_sigma=0.0), n=2000, reps=5,
                               schemes=["uniform", "poly:gamma=3", "adaptive"],
                               checkpoints=[100, 500, 1000, 2000])
        rep = run_experiment(cfg)
        for scheme in ("uniform", "poly:gamma=3", "adaptive"):
            vals = [r[2] for r in rep.rows if r[0] == scheme]
            assert all(b < a for a, b in zip(vals, vals[1:]))
            assert vals[-1] < 1e-2 * vals[0]

    def test_ratio_in_summary_only(self):
        cfg = ExperimentConfig("mse", mean_model(0.0), n=50, reps=20, schemes=["adaptive", "uniform"])
        rep = run_experiment(cfg)
        assert "ratio_to_adaptive" not in rep.columns
        assert rep.summary[0]["ratio_to_adaptive"] == 1.0

    def test_expectile_rejected(self):
        from wasgd import ConfigError, expectile_model
        with pytest.raises(ConfigError):
            run_experiment(ExperimentConfig("mse", expectile_model(0.8), n=10, reps=2,
                                            schemes=["uniform"]))


class TestCoverageFlags:
    def test_below_asymptotic_flag(self, tmp_path):
        code, out = run_cli(tmp_path, "simulate", "coverage", "--n", "10", "--reps", "4",
                            "--scheme", "uniform", "--dim", "1", "--xstar", "1")
        assert code == 0
        assert any("below-asymptotic-regime" in c for c in comments(out))
        assert len(read_csv(out)) == 1

    def test_no_flag_at_large_n(self, tmp_path):
        _, out = run_cli(tmp_path, "simulate", "coverage", "--n", "1000", "--reps", "4",
                         "--scheme", "uniform", "--dim", "1", "--xstar", "1")
        assert not any("flag" in c for c in comments(out))


class TestExitCodes:
    def test_bad_scheme(self, tmp_path, capsys):
        code, _ = run_cli(tmp_path, "simulate", "mse", "--scheme", "poly:gamma=0.1", "--n", "10")
        assert code == 2
        assert "configuration error" in capsys.readouterr().err

    def test_missing_scheme(self, tmp_path):
        assert run_cli(tmp_path, "simulate", "mse", "--n", "10")[0] == 2

    def test_bad_config_file(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run_cli(tmp_path, "simulate", "mse", "--config", str(bad))[0] == 2

    def test_unknown_config_key(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"gamma": 3}')
        assert run_cli(tmp_path, "simulate", "mse", "--config", str(bad))[0] == 2

    def test_divergence(self, tmp_path, capsys):
        code, _ = run_cli(tmp_path, "simulate", "mse", "--eta", "50", "--alpha", "0.51",
                          "--n", "5000", "--reps", "2", "--scheme", "uniform")
        assert code == 3
        assert "numerical failure" in capsys.readouterr().err

    def test_console_script(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "wasgd.cli", "check-scheme", "--scheme",
                               "nonsense"], capture_output=True, text=True)
        assert proc.returncode == 2


class TestCheckScheme:
    def test_report(self, capsys):
        assert main(["check-scheme", "--scheme", "uniform", "--scheme", "adaptive",
                     "--n", "1000"]) == 0
        out = capsys.readouterr().out
        assert "scheme                      uniform" in out
        assert "smoothness double sum       0" in out
        assert "exempt" in out
