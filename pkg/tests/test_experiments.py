import json
import math

import numpy as np
import pytest
from scipy import integrate

from pmquad import cli
from pmquad._random import replica_rng
from pmquad.experiments import (
    ConfigError, ExperimentConfig, boundedness_scan, estimate_mean_cost, mean_ci, run,
)
from pmquad.poisson import restricted_cost


def two_point_mean(x):
    """E[N_2(x)] by 4-d quadrature over both insertion points.

    The first point (a, b) leaves two rectangles on the query side; the second
    point (c, d) adds one more crossing iff it lands in one of them, i.e. iff c
    is on the same side of a as x.
    """
    def cost(d, c, b, a):
        return 1.0 + float((c < a) == (x < a))

    def c_opts(b, a):
        return {"points": [a]}

    val, _ = integrate.nquad(cost, [[0, 1], [0, 1], [0, 1], [0, 1]],
                             opts=[{}, c_opts, {}, {"points": [x]}])
    return val


class TestConfig:
    def test_unknown(self):
        with pytest.raises(ConfigError):
            ExperimentConfig("nope")

    def test_replicas(self):
        with pytest.raises(ConfigError):
            ExperimentConfig("theorem1", replicas=0)

    def test_x_range(self):
        with pytest.raises(ConfigError):
            ExperimentConfig("theorem1", x_values=(1.5,))

    def test_defaults(self):
        cfg = ExperimentConfig("theorem1")
        assert cfg.sizes == (100, 1000, 10000, 100000) and cfg.x_values == (0.5,)

    def test_seed_range(self):
        with pytest.raises(ConfigError):
            ExperimentConfig("theorem1", seed=2 ** 64)


class TestEstimateMeanCost:
    def test_zero(self):
        assert estimate_mean_cost(0, 0.5, 10, 1) == (0.0, 0.0)

    def test_one(self):
        assert estimate_mean_cost(1, 0.3, 200, 1) == (1.0, 0.0)

    def test_two_points(self):
        oracle = two_point_mean(0.5)
        assert oracle == pytest.approx(1.75, abs=1e-8)
        m, hw = estimate_mean_cost(2, 0.5, 20_000, 7)
        assert abs(m - oracle) <= hw

    def test_two_points_off_center(self):
        m, hw = estimate_mean_cost(2, 0.2, 20_000, 8)
        assert abs(m - two_point_mean(0.2)) <= hw

    def test_negative(self):
        with pytest.raises(ValueError):
            estimate_mean_cost(-1, 0.5, 10, 1)


class TestRun:
    @pytest.mark.parametrize("exp,sizes,xs", [
        ("theorem1", (50, 400), (0.5,)),
        ("uniform", (2.0, 8.0), ()),
        ("x0", (1.0, 10.0), ()),
        ("fragmentation", (2.0,), ()),
        ("coupling", (20,), (0.5,)),
        ("drift", (0,), (0.1, 0.5)),
        ("boundedness", (5.0,), (0.2, 0.5, 0.8)),
    ])
    def test_bit_identical(self, tmp_path, exp, sizes, xs):
        outs = []
        for i in range(2):
            d = tmp_path / f"r{i}"
            run(ExperimentConfig(exp, 11, 60, sizes, xs, d))
            outs.append((d / f"{exp}.csv").read_bytes())
        assert outs[0] == outs[1] and len(outs[0]) > 20

    def test_workers_do_not_change_bytes(self, tmp_path):
        run(ExperimentConfig("theorem1", 5, 40, (300,), (0.3,), tmp_path / "a", workers=1))
        run(ExperimentConfig("theorem1", 5, 40, (300,), (0.3,), tmp_path / "b", workers=2))
        assert (tmp_path / "a/theorem1.csv").read_bytes() == (tmp_path / "b/theorem1.csv").read_bytes()

    def test_replica_recomputable(self, tmp_path):
        run(ExperimentConfig("uniform", 3, 30, (8.0,), (), tmp_path))
        lines = (tmp_path / "uniform.csv").read_text().splitlines()
        r, t, x, cost = lines[18].split(",")
        assert int(r) == 17
        rng = replica_rng(3, 17, "uniform", 0)
        from pmquad._random import open_uniforms
        u = float(open_uniforms(rng, 1)[0])
        assert u == float(x) and restricted_cost(u, 8.0, rng) == int(cost)

    def test_summary(self, tmp_path):
        rep = run(ExperimentConfig("theorem1", 9, 50, (100,), (0.5,), tmp_path), with_check=True)
        s = json.loads((tmp_path / "summary.json").read_text())
        assert s["config"]["seed"] == 9 and s["config"]["replicas"] == 50
        assert s["version"].startswith("0.1.0") and s["wall_clock_seconds"] >= 0
        row = s["rows"][0]
        assert {"mean", "variance", "half_width", "theory", "ratio"} <= set(row)
        assert row["theory"] == pytest.approx(1.8515142285317645)
        assert rep.passed == s["passed"]

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(ConfigError):
            run(ExperimentConfig("drift", 1, 1, (0,), (0.5,), blocker / "sub"))


class TestBoundedness:
    def test_scan(self):
        scan = boundedness_scan([0.2, 0.5, 0.8], [50.0], 1500, 4)
        assert np.isfinite(scan.supremum)
        assert np.all(scan.symmetry_gaps(50.0) <= 2.576)
        assert scan.means[0, 1] > scan.means[0, 0] and scan.means[0, 1] > scan.means[0, 2]

    def test_empty(self):
        with pytest.raises(ValueError):
            boundedness_scan([], [1.0], 10, 1)


def test_batch_variance_scaling():
    # variance of batch means ~ 1 / batch size
    vals = np.array([restricted_cost(0.4, 20.0, replica_rng(1, r, "scaling")) for r in range(12_800)], float)
    sizes = np.array([5, 20, 80])
    logv, se = [], []
    for b in sizes:
        nb = vals.size // b
        means = vals[: nb * b].reshape(nb, b).mean(axis=1)
        logv.append(math.log(means.var(ddof=1)))
        se.append(math.sqrt(2.0 / (nb - 1)))
    w = 1 / np.square(se)
    X = np.log(sizes)
    xm = np.sum(w * X) / w.sum()
    slope = np.sum(w * (X - xm) * (np.array(logv))) / np.sum(w * (X - xm) ** 2)
    slope_se = math.sqrt(1 / np.sum(w * (X - xm) ** 2))
    assert abs(slope + 1) <= 1.96 * slope_se


class TestCli:
    def test_ok(self, tmp_path, capsys):
        code = cli.main(["--experiment", "drift", "--x", "0.2,0.5", "--out", str(tmp_path), "--check"])
        assert code == 0
        assert "check: pass" in capsys.readouterr().out
        assert (tmp_path / "drift.csv").read_text().startswith("x,ratio\n")

    def test_unknown_experiment(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["--experiment", "bogus"])
        assert exc.value.code == 2

    def test_bad_x(self, capsys):
        assert cli.main(["--experiment", "theorem1", "--x", "2.0", "--replicas", "2", "--sizes", "5"]) == 2

    def test_bad_list(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["--experiment", "theorem1", "--sizes", "a,b"])
        assert exc.value.code == 2

    def test_check_failure(self, tmp_path):
        # at n = 2 the scaled mean is far below the limit curve
        code = cli.main(["--experiment", "theorem1", "--sizes", "2", "--replicas", "200",
                         "--out", str(tmp_path), "--check"])
        assert code == 3

    def test_module_entry(self, tmp_path):
        import subprocess
        import sys
        res = subprocess.run([sys.executable, "-m", "pmquad", "--experiment", "drift", "--x", "0.5"],
                             capture_output=True, text=True)
        assert res.returncode == 0 and "drift_ratio" in res.stdout
