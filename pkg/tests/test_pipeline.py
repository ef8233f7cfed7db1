"""Replicate pipeline: pairing, determinism, table assembly."""

import numpy as np

from chorus.pipeline import run_paired_replicates, run_replicate, run_sweep


class TestRunReplicate:
    def test_returns_metrics_and_is_deterministic(self):
        kw = dict(budget=(40, 20), n_chains=2)
        a = run_replicate(1, 0.8, "base", 0, seed=21, **kw)
        b = run_replicate(1, 0.8, "base", 0, seed=21, **kw)
        for key in ("auc", "mv_auc", "tpr_coverage", "tpr_mse", "min_ess", "max_rhat"):
            assert key in a
        assert a["auc"] == b["auc"]
        assert a["tpr_mse"] == b["tpr_mse"]

    def test_models_paired_on_identical_data(self):
        # the majority-vote baseline depends only on the replicate data, so two
        # models on the same task key must report the same MV AUC
        kw = dict(budget=(40, 20), n_chains=2)
        base = run_replicate(2, 0.8, "base", 3, seed=22, **kw)
        dp = run_replicate(2, 0.8, "dp-bmm", 3, seed=22, **kw)
        assert base["mv_auc"] == dp["mv_auc"]


class TestSweep:
    def test_tables_cover_grid(self, tmp_path):
        results = run_sweep(
            tmp_path, scenarios=(1,), densities=(0.8, 1.6), models=("base",),
            replicates=2, seed=5, budgets={"base": (40, 20)}, n_chains=2,
        )
        assert len(results) == 4
        table = (tmp_path / "auc.csv").read_text().splitlines()
        assert len(table) == 3
        assert (tmp_path / "coverage.csv").exists()
        assert (tmp_path / "mse.csv").exists()

    def test_paired_helper_aligns_replicates(self, tmp_path):
        by_model = run_paired_replicates(
            1, 0.8, ["base", "dp-bmm"], replicates=2, seed=7, workers=1,
            budgets={"base": (40, 20), "dp-bmm": (40, 20)}, out_dir=tmp_path,
        )
        assert len(by_model["base"]) == len(by_model["dp-bmm"]) == 2
        for r_base, r_dp in zip(by_model["base"], by_model["dp-bmm"]):
            assert r_base["replicate"] == r_dp["replicate"]
            assert r_base["mv_auc"] == r_dp["mv_auc"]
