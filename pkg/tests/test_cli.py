import csv
import json

import numpy as np
import pytest

from aggdiff.cli import main

TINY = """
[model]
ubar = 4.0
alpha = 0.4
mu = 0.5
noise = prop_shifted
noise_amplitude = 1.2
init = three_bumps

[grid]
nx = 17
ny = 17

[time]
t_final = 0.5
dt = auto
record_times = 0 0.25 0.5

[noise]
seed = 11

[output]
snapshots = on
pgm = on
figures = off
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY)
    return p


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestRunCommand:
    def test_run_produces_outputs(self, tiny_cfg, tmp_path):
        out = tmp_path / "out"
        assert main(["run", "--config", str(tiny_cfg), "--out-dir", str(out)]) == 0
        rows = read_rows(out / "series.csv")
        assert [float(r["t"]) for r in rows] == [0.0, 0.25, 0.5]
        for t in ("0", "0.25", "0.5"):
            assert (out / f"state_t{t}.snap").exists()
            assert (out / f"state_t{t}.pgm").exists()
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["seed"] == 11
        assert manifest["command"] == "run"

    def test_seed_override(self, tiny_cfg, tmp_path):
        a, b, c = (tmp_path / d for d in ("a", "b", "c"))
        main(["run", "--config", str(tiny_cfg), "--out-dir", str(a)])
        main(["run", "--config", str(tiny_cfg), "--out-dir", str(b), "--seed", "99"])
        main(["run", "--config", str(tiny_cfg), "--out-dir", str(c), "--seed", "99"])
        sa = (a / "state_t0.5.snap").read_bytes()
        sb = (b / "state_t0.5.snap").read_bytes()
        sc = (c / "state_t0.5.snap").read_bytes()
        assert sa != sb
        assert sb == sc

    def test_rerun_from_manifest_is_bitwise(self, tiny_cfg, tmp_path):
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["run", "--config", str(tiny_cfg), "--out-dir", str(out1)]) == 0
        assert main(["run", "--config", str(out1 / "run_manifest.json"),
                     "--out-dir", str(out2)]) == 0
        for name in ("series.csv", "state_t0.snap", "state_t0.25.snap",
                     "state_t0.5.snap", "state_t0.5.pgm"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_backend_choice_matches(self, tiny_cfg, tmp_path):
        f, d = tmp_path / "fft", tmp_path / "direct"
        main(["run", "--config", str(tiny_cfg), "--out-dir", str(f), "--backend", "fft"])
        main(["run", "--config", str(tiny_cfg), "--out-dir", str(d), "--backend", "direct"])
        from aggdiff import read_snapshot

        vf = read_snapshot(f / "state_t0.5.snap").field.values
        vd = read_snapshot(d / "state_t0.5.snap").field.values
        assert np.max(np.abs(vf - vd)) < 1e-9  # same trajectory, either backend

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text(TINY.replace("ubar = 4.0", ""))
        assert main(["run", "--config", str(bad), "--out-dir", str(tmp_path / "x")]) == 2

    def test_validation_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text(TINY.replace("ubar = 4.0", "ubar = 2.0"))
        assert main(["run", "--config", str(bad), "--out-dir", str(tmp_path / "x")]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.cfg"),
                     "--out-dir", str(tmp_path / "x")]) == 2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_blow_up_exit_code(self, tmp_path):
        cfg = TINY.replace("dt = auto", "dt = 0.125").replace(
            "[noise]", "stability = warn\n[noise]").replace(
            "t_final = 0.5", "t_final = 500.0").replace(
            "record_times = 0 0.25 0.5", "record_times = 0")
        p = tmp_path / "boom.cfg"
        p.write_text(cfg)
        assert main(["run", "--config", str(p), "--out-dir", str(tmp_path / "x")]) == 3

    def test_unknown_subcommand_exit_code(self):
        assert main(["explode"]) == 2


class TestEnsembleCommand:
    def test_stats_and_keep_paths(self, tiny_cfg, tmp_path):
        out = tmp_path / "ens"
        assert main(["ensemble", "--config", str(tiny_cfg), "--paths", "3",
                     "--workers", "2", "--keep-paths", "--out-dir", str(out)]) == 0
        rows = read_rows(out / "ensemble_stats.csv")
        assert len(rows) == 3
        assert float(rows[0]["var_mass"]) == 0.0  # all paths share u0 at t=0
        for p in range(3):
            assert (out / "paths" / f"p{p:04d}" / "series.csv").exists()
        manifest = json.loads((out / "ensemble_manifest.json").read_text())
        assert manifest["extras"]["n_paths"] == 3 if "extras" in manifest else True

    def test_worker_invariance_bitwise(self, tiny_cfg, tmp_path):
        outs = []
        for w in ("1", "4"):
            out = tmp_path / f"w{w}"
            assert main(["ensemble", "--config", str(tiny_cfg), "--paths", "4",
                         "--workers", w, "--out-dir", str(out)]) == 0
            outs.append((out / "ensemble_stats.csv").read_bytes())
        assert outs[0] == outs[1]


class TestGalerkinCommand:
    def test_galerkin_outputs(self, tiny_cfg, tmp_path):
        out = tmp_path / "gal"
        assert main(["galerkin", "--config", str(tiny_cfg), "--modes", "4",
                     "--out-dir", str(out)]) == 0
        rows = read_rows(out / "series.csv")
        assert len(rows) == 3
        manifest = json.loads((out / "galerkin_manifest.json").read_text())
        assert manifest["notes"]["wiener_basis"].startswith("spectral")


class TestConvergenceCommand:
    def test_heat_mode_second_order(self, tmp_path):
        out = tmp_path / "conv"
        assert main(["convergence", "--mode", "heat", "--resolutions", "17", "33", "65",
                     "--out-dir", str(out)]) == 0
        rows = read_rows(out / "convergence_heat.csv")
        errs = [float(r["rel_l2_error"]) for r in rows]
        assert errs[0] > errs[1] > errs[2]
        orders = [float(r["observed_order"]) for r in rows[1:]]
        assert all(1.7 < o < 2.3 for o in orders)

    def test_time_mode_first_order(self, tmp_path):
        out = tmp_path / "convt"
        assert main(["convergence", "--mode", "time", "--out-dir", str(out)]) == 0
        rows = read_rows(out / "convergence_time.csv")
        errs = [float(r["rel_l2_error"]) for r in rows]
        assert errs[0] > errs[-1]


class TestFigsCommand:
    def test_figs_tiny(self, tmp_path):
        out = tmp_path / "figs"
        assert main(["figs", "--nx", "17", "--seed", "0", "--out-dir", str(out)]) == 0
        for name in ("fig1.png", "fig2.png", "fig3.png", "fig4.png", "fig5.png",
                     "fig6.png", "fig7.png", "fig6.csv", "fig7.csv"):
            assert (out / name).exists(), name
        for t in (0, 4, 8, 12):
            assert (out / f"fig1_t{t}.snap").exists()
        summary = json.loads((out / "figs_summary.json").read_text())
        assert "fig1_clusters" in summary["variants"]["printed"]

    def test_figs_symmetrized_variant(self, tmp_path):
        out = tmp_path / "figsym"
        assert main(["figs", "--nx", "17", "--variant", "symmetrized",
                     "--out-dir", str(out)]) == 0
        assert (out / "fig1_symmetrized.png").exists()
