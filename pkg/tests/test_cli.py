import json
from pathlib import Path

import numpy as np
import pytest

from vmvp.cli import main
from vmvp.config import load_config, resolve_config_path, save_config


@pytest.fixture()
def tiny_cfg_path(tmp_path):
    cfg = load_config(resolve_config_path("bundled/small2d"))
    cfg.t_final = 0.01
    cfg.n_particles = 64
    cfg.w2_subsample = 64
    cfg.snapshot_every = 5
    cfg.bootstrap_reps = 4
    cfg.output_dir = str(tmp_path / "out")
    cfg.validate()
    p = tmp_path / "tiny.cfg"
    save_config(cfg, p)
    return p


class TestExitCodes:
    def test_verify_bundled(self):
        assert main(["verify", "--config", "bundled/small2d"]) == 0

    def test_missing_config(self):
        assert main(["simulate", "--config", "/no/such/file.cfg"]) == 2

    def test_unknown_flag(self):
        assert main(["simulate", "--config", "bundled/small2d", "--bogus"]) == 2

    def test_sweep_too_few_eps(self, tiny_cfg_path):
        assert main(["sweep", "--config", str(tiny_cfg_path), "--eps", "0.2,0.1"]) == 2


class TestSimulate:
    def test_pair_run_writes_outputs(self, tiny_cfg_path, tmp_path):
        out = tmp_path / "run_out"
        rc = main(["simulate", "--config", str(tiny_cfg_path), "--mode", "pair", "--out", str(out)])
        assert rc == 0
        assert (out / "steps.csv").exists()
        assert (out / "snapshots.csv").exists()
        assert (out / "report.json").exists()
        assert sorted((out / "checkpoints").glob("*.cloud"))

    def test_vp_mode(self, tiny_cfg_path, tmp_path):
        out = tmp_path / "vp_out"
        rc = main(["simulate", "--config", str(tiny_cfg_path), "--mode", "vp", "--out", str(out)])
        assert rc == 0
        assert (out / "vp_final.ens").exists()


class TestSweepCli:
    def test_sweep_writes_summary(self, tiny_cfg_path, tmp_path):
        out = tmp_path / "sweep_out"
        rc = main(["sweep", "--config", str(tiny_cfg_path), "--eps", "0.4,0.2,0.1", "--out", str(out)])
        assert rc == 0
        sweep = json.loads((out / "sweep.json").read_text())
        assert set(sweep) == {
            "eps_values", "sup_w2", "kappa_measured", "r_squared",
            "monotone", "partial", "kappa_config", "positive_rate_confirmed",
        }
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "eps,sup_w2,sup_q,osgood_c,aborted"
        assert len(lines) == 4


class TestCkCli:
    def test_ck_report(self, tmp_path):
        cfg = load_config(resolve_config_path("bundled/ck2d"))
        cfg.ck_n_iters = 4
        cfg.ck_n_time = 32
        cfg.output_dir = str(tmp_path / "ck_out")
        p = tmp_path / "ck.cfg"
        save_config(cfg, p)
        rc = main(["ck", "--config", str(p)])
        assert rc == 0
        payload = json.loads((Path(cfg.output_dir) / "ck.json").read_text())
        assert payload["n_iters"] == 4
        assert not payload["diverged"]


class TestWassersteinAndReplay:
    def test_wasserstein_between_checkpoints(self, tiny_cfg_path, tmp_path):
        out = tmp_path / "wsrun"
        assert main(["simulate", "--config", str(tiny_cfg_path), "--out", str(out)]) == 0
        ckpts = sorted((out / "checkpoints").glob("*.cloud"))
        assert len(ckpts) >= 2
        rc = main(["wasserstein", str(ckpts[0]), str(ckpts[-1]), "--side", "vm"])
        assert rc == 0
        rc = main(["wasserstein", str(ckpts[0]), str(ckpts[0]), "--position-only"])
        assert rc == 0

    def test_report_replays_q(self, tiny_cfg_path, tmp_path, capsys):
        out = tmp_path / "rprun"
        assert main(["simulate", "--config", str(tiny_cfg_path), "--out", str(out)]) == 0
        capsys.readouterr()
        rc = main(["report", "--from-checkpoints", str(out / "checkpoints")])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "t,Q"
        first = lines[1].split(",")
        assert float(first[0]) == 0.0
        assert float(first[1]) == 0.0

    def test_report_missing_args(self):
        assert main(["report"]) == 2
