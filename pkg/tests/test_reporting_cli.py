import json
import math
import subprocess
import sys

import numpy as np
import pytest

from psiq.cli import main
from psiq import reporting
from psiq.model import ModelParams
from psiq.simulate import SimConfig


def read_csv(path):
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    rows = [dict(zip(header, line.split(","))) for line in lines[1:]]
    return header, rows


class TestSolveCommand:
    def test_outputs_and_manifest(self, tmp_path):
        out = tmp_path / "run"
        assert main(["solve", "--A", "6", "--rho", "0.5", "--out", str(out)]) == 0
        header, rows = read_csv(out / "pmf.csv")
        assert header == ["n", "m", "probability"]
        total = sum(float(r["probability"]) for r in rows)
        assert total == pytest.approx(1.0, abs=1e-12)
        summary = json.loads((out / "summary.json").read_text())
        assert summary["residual"] <= 1e-10
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "solve"
        assert manifest["settings"]["params"]["beta"] == 6.0
        assert "version" in manifest

    def test_explicit_grid_flag(self, tmp_path):
        out = tmp_path / "run"
        main(["solve", "--A", "3", "--rho", "0.4", "--grid", "25,20", "--out", str(out)])
        summary = json.loads((out / "summary.json").read_text())
        assert summary["grid"] == {"n_max": 25, "m_max": 20}

    def test_config_file_and_flag_override(self, tmp_path):
        cfg = tmp_path / "queue.conf"
        cfg.write_text("alpha = 0.5\nbeta = 6\nmu = 1\nnu = 1\ntheta = 1\n")
        out = tmp_path / "run"
        main(["solve", "--config", str(cfg), "--beta", "4", "--out", str(out)])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["settings"]["params"]["beta"] == 4.0
        assert manifest["settings"]["params"]["alpha"] == 0.5

    def test_missing_params_exit(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["solve", "--out", str(tmp_path / "x")])


class TestSimulateDominance:
    def test_simulate_outputs(self, tmp_path):
        out = tmp_path / "sim"
        main(["simulate", "--A", "4", "--rho", "0.4", "--t-end", "300",
              "--replications", "2", "--seed", "5", "--out", str(out)])
        header, rows = read_csv(out / "empirical_pmf.csv")
        assert header == ["n", "m", "probability"]
        assert sum(float(r["probability"]) for r in rows) == pytest.approx(1.0, abs=1e-12)
        summary = json.loads((out / "summary.json").read_text())
        assert summary["events"] > 0
        assert len(summary["rep_means"]) == 2

    def test_dominance_outputs(self, tmp_path):
        out = tmp_path / "dom"
        main(["dominance", "--A", "5", "--rho", "0.5", "--t-end", "1e6",
              "--max-events", "20000", "--seed", "3", "--out", str(out)])
        data = json.loads((out / "dominance.json").read_text())
        assert data["violations"] == 0
        assert data["events"] == 20000


class TestAsymptoticsCommand:
    def test_points_and_boundary_nan(self, tmp_path):
        out = tmp_path / "asy"
        main(["asymptotics", "--rho", "0.5", "--A", "100",
              "--points", "1,1;0,0;3,0", "--out", str(out)])
        header, rows = read_csv(out / "asymptotics.csv")
        assert header[:5] == ["x", "y", "phi", "psi", "H"]
        byxy = {(float(r["x"]), float(r["y"])): r for r in rows}
        assert float(byxy[(1.0, 1.0)]["H"]) == pytest.approx(0.0, abs=1e-14)
        assert float(byxy[(1.0, 1.0)]["g"]) == pytest.approx(0.5 * math.sqrt(2), rel=1e-12)
        assert math.isnan(float(byxy[(0.0, 0.0)]["g"]))
        assert float(byxy[(0.0, 0.0)]["H"]) == pytest.approx(1.6931, abs=1e-3)


class TestConvergenceCommand:
    def test_table(self, tmp_path):
        out = tmp_path / "conv"
        main(["convergence", "--rho", "0.5", "--A-list", "8,16",
              "--probes", "1,1;0,1", "--out", str(out)])
        header, rows = read_csv(out / "convergence.csv")
        assert header == ["A", "x", "y", "n", "m", "exact", "sharp", "ratio",
                          "decay_estimate", "H"]
        assert len(rows) == 2  # boundary probe excluded
        for row in rows:
            assert float(row["ratio"]) > 0
            assert float(row["exact"]) > 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["settings"]["skipped_boundary_probes"] == [[0.0, 1.0]]

    def test_ratio_improves_with_A(self, tmp_path):
        out = tmp_path / "conv2"
        rows = reporting.run_convergence(
            ModelParams(0.5, 8.0, 1.0, 1.0, 1.0), [8.0, 32.0], [(1.0, 1.0)], out
        )
        errs = [abs(r["ratio"] - 1.0) for r in rows]
        assert errs[1] < errs[0]


class TestFigureData:
    def test_grid_anchors_and_determinism(self, tmp_path):
        out = tmp_path / "fig"
        path = reporting.run_figure_data(0.5, out, x_max=4.0, y_max=4.0, resolution=0.5)
        header, rows = read_csv(path)
        assert header == ["x", "y", "H", "g"]
        lookup = {(float(r["x"]), float(r["y"])): float(r["H"]) for r in rows}
        assert lookup[(0.0, 0.0)] == pytest.approx(1.69, abs=0.01)
        assert lookup[(3.0, 0.0)] == pytest.approx(1.52, abs=0.01)
        assert lookup[(0.0, 3.0)] == pytest.approx(1.99, abs=0.01)
        assert min(lookup.values()) == pytest.approx(0.0, abs=1e-14)
        assert lookup[(1.0, 1.0)] == 0.0
        first = path.read_bytes()
        reporting.run_figure_data(0.5, out, x_max=4.0, y_max=4.0, resolution=0.5)
        assert path.read_bytes() == first  # bit-identical re-run

    def test_boundary_g_is_nan_interior_finite(self, tmp_path):
        path = reporting.run_figure_data(0.5, tmp_path, x_max=1.0, y_max=1.0, resolution=0.5)
        _, rows = read_csv(path)
        for r in rows:
            g = float(r["g"])
            if float(r["x"]) == 0.0 or float(r["y"]) == 0.0:
                assert math.isnan(g)
            else:
                assert math.isfinite(g)

    def test_cli_entry(self, tmp_path):
        out = tmp_path / "fig"
        assert main(["figure-data", "--rho", "0.5", "--resolution", "1.0",
                     "--out", str(out)]) == 0
        assert (out / "figure_data.csv").exists()


class TestMobileSweep:
    def test_sweep_csv_schema_and_checks(self, tmp_path):
        out = tmp_path / "mob"
        main(["mobile-sweep", "--rho", "0.4", "--rho-tot-list", "0.6,0.7",
              "--fp-tol", "1e-8", "--out", str(out)])
        header, rows = read_csv(out / "sweep.csv")
        assert header == ["rho_tot", "beta_net", "mean_N", "mean_M", "gamma", "Gamma", "A_mob"]
        assert len(rows) == 2
        beta_nets = [float(r["beta_net"]) for r in rows]
        assert beta_nets[1] > beta_nets[0]  # feedback grows with load
        _, metrics = read_csv(out / "mobile_metrics.csv")
        for r in metrics:
            assert float(r["p_empty"]) == pytest.approx(
                1.0 - float(r["rho_tot"]), abs=1e-3
            )

    def test_rejects_saturated_point(self, tmp_path):
        with pytest.raises(ValueError):
            reporting.run_mobile_sweep(0.4, 1.0, 1.0, 1.0, [1.0], tmp_path)


class TestSubprocessEntry:
    def test_module_invocation(self, tmp_path):
        out = tmp_path / "run"
        proc = subprocess.run(
            [sys.executable, "-m", "psiq.cli", "solve", "--A", "3", "--rho", "0.3",
             "--out", str(out)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert "solved" in proc.stdout
        assert (out / "manifest.json").exists()


class TestManifestReproducibility:
    def test_solve_outputs_bit_identical(self, tmp_path):
        out = tmp_path / "a"
        args = ["solve", "--A", "4", "--rho", "0.5", "--out", str(out)]
        main(args)
        blob = ((out / "pmf.csv").read_bytes(), (out / "summary.json").read_bytes())
        main(args)
        assert ((out / "pmf.csv").read_bytes(), (out / "summary.json").read_bytes()) == blob

    def test_simulate_outputs_bit_identical(self, tmp_path):
        out = tmp_path / "b"
        config_args = ["simulate", "--A", "3", "--rho", "0.4", "--t-end", "200",
                       "--seed", "99", "--out", str(out)]
        main(config_args)
        blob = (out / "empirical_pmf.csv").read_bytes()
        main(config_args)
        assert (out / "empirical_pmf.csv").read_bytes() == blob
