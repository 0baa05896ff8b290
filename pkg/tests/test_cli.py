import json

import numpy as np
import pytest

from dtebounds.cli import main


@pytest.fixture()
def data_csv(tmp_path):
    rng = np.random.default_rng(0)
    n = 160
    d = np.array([1, 0] * (n // 2))
    x1 = rng.normal(size=n)
    x2 = rng.normal(size=n)
    y = x1 + 0.8 * d + rng.normal(size=n)
    g = (x2 > 0).astype(int)
    path = tmp_path / "data.csv"
    with open(path, "w") as fh:
        fh.write("y,d,x1,x2,grp,pscore\n")
        for i in range(n):
            fh.write(f"{y[i]:.8f},{d[i]},{x1[i]:.8f},{x2[i]:.8f},"
                     f"{g[i]},0.5\n")
    return str(path)


def run_cli(*argv):
    return main(list(argv))


class TestAnalyze:
    def test_cross_fit_constant_matches_plain_bounds(self, data_csv, tmp_path):
        out = tmp_path / "rep"
        code = run_cli("analyze", "--input", data_csv, "--y-col", "y",
                       "--d-col", "d", "--x-prefix", "x",
                       "--method", "cross-fit", "--models", "constant",
                       "--output", str(out))
        assert code == 0
        payload = json.loads((tmp_path / "rep.json").read_text())
        from dtebounds import load_csv, makarov_bounds
        s = load_csv(data_csv, "y", "d", x_prefix="x")
        mk = makarov_bounds(s)
        assert payload["report"]["estimate"]["theta_l"] == mk.theta_l
        assert payload["report"]["estimate"]["theta_u"] == mk.theta_u
        assert payload["config"]["method"] == "cross-fit"
        assert (tmp_path / "rep.txt").read_text().startswith("method")

    def test_sample_split_echoes_critical_value(self, data_csv, tmp_path):
        out = tmp_path / "ss"
        code = run_cli("analyze", "--input", data_csv, "--y-col", "y",
                       "--d-col", "d", "--x-prefix", "x",
                       "--method", "sample-split", "--alpha", "0.05",
                       "--seed", "3", "--output", str(out))
        assert code == 0
        payload = json.loads((tmp_path / "ss.json").read_text())
        rep = payload["report"]
        n1 = rep["meta"]["n1_main"]
        n0 = rep["meta"]["n0_main"]
        from dtebounds import dkw_critical
        assert rep["crit"]["c_alpha"] == pytest.approx(
            dkw_critical(0.05, n1, n0))

    def test_unknown_method_exits_2_and_lists(self, data_csv, capsys):
        code = run_cli("analyze", "--input", data_csv, "--method", "bogus")
        assert code == 2
        err = capsys.readouterr().err
        assert "cross-fit" in err and "sjls" in err

    def test_missing_file_exits_4(self, tmp_path):
        code = run_cli("analyze", "--input", str(tmp_path / "nope.csv"),
                       "--x-prefix", "x")
        assert code == 4

    def test_degenerate_design_exits_2(self, tmp_path):
        path = tmp_path / "onearm.csv"
        path.write_text("y,d,x1\n1.0,1,0.0\n2.0,1,0.1\n")
        code = run_cli("analyze", "--input", str(path), "--x-prefix", "x")
        assert code == 2

    def test_determinism(self, data_csv, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = run_cli("analyze", "--input", data_csv, "--y-col", "y",
                           "--d-col", "d", "--x-prefix", "x",
                           "--method", "cross-fit",
                           "--models", "knn_loc_shift:k=10",
                           "--seed", "11", "--output", str(out))
            assert code == 0
            payload = json.loads((tmp_path / f"{name}.json").read_text())
            payload["config"].pop("output")
            outs.append(json.dumps(payload, sort_keys=True))
        assert outs[0] == outs[1]

    def test_config_file_with_flag_override(self, data_csv, tmp_path):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text(
            "method = cross-fit\nalpha = 0.10\ny_col = y\nd_col = d\n"
            "x_prefix = x\nmodels = constant\n")
        out = tmp_path / "cfg"
        code = run_cli("analyze", "--config", str(cfgfile), "--input",
                       data_csv, "--alpha", "0.05", "--output", str(out))
        assert code == 0
        payload = json.loads((tmp_path / "cfg.json").read_text())
        assert payload["config"]["alpha"] == 0.05  # flag wins
        assert payload["config"]["method"] == "cross-fit"

    def test_delta_shift_and_squash(self, data_csv, tmp_path):
        out = tmp_path / "d"
        code = run_cli("analyze", "--input", data_csv, "--y-col", "y",
                       "--d-col", "d", "--x-prefix", "x", "--delta", "0.05",
                       "--squash", "--output", str(out))
        assert code == 0
        txt = (tmp_path / "d.txt").read_text()
        assert "transformed outcome scale" in txt

    @pytest.mark.parametrize("method", ["sjls", "cross-fit-ipw"])
    def test_known_propensity_methods(self, data_csv, tmp_path, method):
        out = tmp_path / method
        code = run_cli("analyze", "--input", data_csv, "--y-col", "y",
                       "--d-col", "d", "--x-prefix", "x",
                       "--method", method, "--propensity-mode",
                       "constant_known", "--propensity-pi", "0.5",
                       "--output", str(out))
        assert code == 0
        payload = json.loads((tmp_path / f"{method}.json").read_text())
        assert payload["report"]["method"] == method

    def test_group_method(self, data_csv, tmp_path):
        out = tmp_path / "grp"
        code = run_cli("analyze", "--input", data_csv, "--y-col", "y",
                       "--d-col", "d", "--x-cols", "x1",
                       "--method", "cross-fit-group", "--propensity-mode",
                       "group", "--group-col", "grp", "--output", str(out))
        assert code == 0

    def test_foldt_method(self, data_csv, tmp_path):
        code = run_cli("analyze", "--input", data_csv, "--y-col", "y",
                       "--d-col", "d", "--x-prefix", "x",
                       "--method", "cross-fit-foldt",
                       "--output", str(tmp_path / "ft"))
        assert code == 0


class TestBoundsCurve:
    def test_dump_matches_report(self, data_csv, tmp_path):
        out = tmp_path / "curve"
        code = run_cli("bounds-curve", "--input", data_csv, "--y-col", "y",
                       "--d-col", "d", "--x-prefix", "x",
                       "--models", "constant", "--output", str(out))
        assert code == 0
        lines = (tmp_path / "curve.curve.txt").read_text().splitlines()
        header = [ln for ln in lines if ln.startswith("#")]
        rows = np.array([[float(v) for v in ln.split()]
                         for ln in lines if not ln.startswith("#")])
        theta_l = float(header[1].split("=")[1].split(" at ")[0])
        assert rows[:, 1].max() == pytest.approx(max(theta_l, 0.0))
        # constant model: curve equals the unadjusted two-sample difference
        from dtebounds import build_curve, load_csv
        s = load_csv(data_csv, "y", "d", x_prefix="x")
        curve = build_curve(s)
        np.testing.assert_allclose(rows[:, 0], curve.merged_breakpoints)

    def test_empty_arm_exits_2(self, tmp_path):
        path = tmp_path / "onearm.csv"
        path.write_text("y,d,x1\n1.0,0,0.0\n2.0,0,0.1\n")
        code = run_cli("bounds-curve", "--input", str(path), "--x-prefix", "x")
        assert code == 2


class TestSimulate:
    def test_small_run_and_determinism(self, tmp_path):
        cells = tmp_path / "cells.csv"
        cells.write_text("n,p,model,estimator\n"
                         "120,20,none,cross-fit\n"
                         "120,20,none,sjls\n")
        outs = []
        for name in ("s1", "s2"):
            out = tmp_path / name
            code = run_cli("simulate", "--cells", str(cells), "--reps", "5",
                           "--seed", "9", "--theta0-reps", "1000000",
                           "--output", str(out))
            assert code == 0
            outs.append((tmp_path / f"{name}.csv").read_bytes())
        assert outs[0] == outs[1]
        body = outs[0].decode()
        assert body.startswith("n,p,model,estimator")
        assert len(body.strip().splitlines()) == 3
        sidecar = json.loads((tmp_path / "s1.json").read_text())
        assert sidecar["replications"] == 5
        assert sidecar["master_seed"] == 9

    def test_rates_are_multiples_of_tenth(self, tmp_path):
        cells = tmp_path / "cells.csv"
        cells.write_text("150,20,none,cross-fit\n")
        out = tmp_path / "s"
        code = run_cli("simulate", "--cells", str(cells), "--reps", "10",
                       "--seed", "1", "--theta0-reps", "1000000",
                       "--output", str(out))
        assert code == 0
        row = (tmp_path / "s.csv").read_text().strip().splitlines()[1]
        rate = float(row.split(",")[4])
        assert rate * 10 == pytest.approx(round(rate * 10))

    def test_malformed_cells_exit_2(self, tmp_path):
        cells = tmp_path / "cells.csv"
        cells.write_text("120,20,none\n")
        code = run_cli("simulate", "--cells", str(cells), "--reps", "2")
        assert code == 2

    def test_missing_cells_config_error(self):
        assert run_cli("simulate", "--reps", "2") == 2


class TestExternalAdjusters:
    def test_adjuster_file_bypasses_models(self, data_csv, tmp_path):
        import numpy as np
        from dtebounds import Adjuster, Sample, load_csv, make_folds
        from dtebounds.crossfit import estimate_crossfit

        s = load_csv(data_csv, "y", "d", x_prefix="x")
        rng = np.random.default_rng(5)
        s_l = rng.normal(size=s.n)
        s_u = rng.normal(size=s.n)
        adjfile = tmp_path / "adj.csv"
        with open(adjfile, "w") as fh:
            fh.write("s_l,s_u\n")
            for a, b in zip(s_l, s_u):
                fh.write(f"{float(a)!r},{float(b)!r}\n")
        out = tmp_path / "ext"
        code = run_cli("analyze", "--input", data_csv, "--y-col", "y",
                       "--d-col", "d", "--x-prefix", "x",
                       "--method", "cross-fit",
                       "--adjuster-file", str(adjfile),
                       "--seed", "4", "--output", str(out))
        assert code == 0
        payload = json.loads((tmp_path / "ext.json").read_text())
        folds = make_folds(s, 5, seed=4)
        est = estimate_crossfit(s, folds, [], adjusters=(
            Adjuster(values=s_l), Adjuster(values=s_u)))
        assert payload["report"]["estimate"]["theta_l"] == est.theta_l
        assert payload["report"]["estimate"]["theta_u"] == est.theta_u

    def test_wrong_length_is_config_error(self, data_csv, tmp_path):
        adjfile = tmp_path / "adj.csv"
        adjfile.write_text("s_l,s_u\n0.0,0.0\n")
        code = run_cli("analyze", "--input", data_csv, "--y-col", "y",
                       "--d-col", "d", "--x-prefix", "x",
                       "--adjuster-file", str(adjfile))
        assert code == 2
