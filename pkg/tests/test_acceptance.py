"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Quantitative criteria (1-6) refit the full synthetic scenarios at production
budgets; allow roughly an hour on two cores. Completed replicate fits are
cached under CHORUS_ACCEPT_CACHE (if set) through the same hash-checked
result files the sweep command uses, so interrupted runs resume.

Criterion 7 needs the public crowdsourced bird-annotation export (a manual
download) converted to the package's file formats under CHORUS_KERTTU_DIR and
is reported as skipped otherwise.
"""

import json
import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.stats import chi2_contingency

import chorus.dp_model as dp
from chorus.data import make_tensor, tensor_from_text
from chorus.evaluate import brier, roc_auc, waic
from chorus.pipeline import run_paired_replicates
from chorus.polya_gamma import pg_mean, polya_gamma
from chorus.priors import HyperParams, application_defaults
from chorus.rng import RngStream, sample_categorical_log
from chorus.runner import McmcConfig, run

from oracles import (
    base_enumeration_posterior,
    dp_enumeration_posterior,
    ks_against_quadrature,
    ks_critical,
)

WORKERS = min(2, os.cpu_count() or 1)

# Budgets per the production defaults, except the DP variants which follow the
# collect-until-ESS>=100 stopping rule: the concentration's autocorrelation
# tracks the slowly-mixing component count, so the 2000/5000-iteration
# defaults leave its ESS short of 100 and the budget is extended.
BUDGETS = {
    "base": (2000, 1000),
    "base-hier": (5000, 2000),
    "dp-bmm": (10000, 3000),
    "dp-bmm-hier": (10000, 3000),
}


def _criterion(num, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"\n[{status}] criterion {num}: {detail}")
    assert ok, f"criterion {num}: {detail}"


@pytest.fixture(scope="module")
def cache_dir(tmp_path_factory):
    env = os.environ.get("CHORUS_ACCEPT_CACHE")
    if env:
        os.makedirs(env, exist_ok=True)
        return env
    return str(tmp_path_factory.mktemp("acceptance"))


@pytest.fixture(scope="module")
def grid(cache_dir):
    """All replicate fits the quantitative criteria need, cached and paired.

    max_extensions applies the collect-until-converged stopping rule to fits
    whose slowest parameter misses the ESS/R-hat gates at the base budget.
    """
    common = dict(workers=WORKERS, budgets=BUDGETS, max_extensions=2)
    cells = {
        "c1": run_paired_replicates(1, 4.0, ["base"], 5, seed=101,
                                    out_dir=os.path.join(cache_dir, "c1"), **common),
        "c2": run_paired_replicates(2, 0.8, ["base", "dp-bmm"], 10, seed=102,
                                    out_dir=os.path.join(cache_dir, "c2"), **common),
        "c3": run_paired_replicates(4, 0.8, ["base", "dp-bmm-hier"], 10, seed=103,
                                    out_dir=os.path.join(cache_dir, "c3"), **common),
        "c4": run_paired_replicates(3, 1.6, ["base", "base-hier"], 5, seed=104,
                                    out_dir=os.path.join(cache_dir, "c4"), **common),
        "c5": run_paired_replicates(3, 0.8, ["base", "base-hier"], 5, seed=105,
                                    out_dir=os.path.join(cache_dir, "c5"), **common),
    }
    return cells


def test_criterion_1_scenario1_density4_auc(grid):
    base = [r["auc"] for r in grid["c1"]["base"]]
    mv = [r["mv_auc"] for r in grid["c1"]["base"]]
    base_mean, mv_mean = np.mean(base), np.mean(mv)
    ok = abs(base_mean - 0.997) <= 0.01 and abs(mv_mean - 0.989) <= 0.01
    _criterion(1, ok, f"scenario 1 density 4.0: Base AUC {base_mean:.4f} "
                      f"(target 0.997±0.01), MV AUC {mv_mean:.4f} (target 0.989±0.01)")


def test_criterion_2_scenario2_dp_vs_base_ordering(grid):
    pairs = list(zip(grid["c2"]["dp-bmm"], grid["c2"]["base"]))
    wins = sum(r_dp["auc"] >= r_b["auc"] for r_dp, r_b in pairs)
    dp_mean = np.mean([r["auc"] for r in grid["c2"]["dp-bmm"]])
    b_mean = np.mean([r["auc"] for r in grid["c2"]["base"]])
    ok = wins > len(pairs) / 2
    _criterion(2, ok, f"scenario 2 density 0.8: DP-BMM >= Base in {wins}/{len(pairs)} "
                      f"paired replicates (means {dp_mean:.4f} vs {b_mean:.4f})")


def test_criterion_3_scenario4_dp_hier_auc(grid):
    pairs = list(zip(grid["c3"]["dp-bmm-hier"], grid["c3"]["base"]))
    wins = sum(r_h["auc"] > r_b["auc"] for r_h, r_b in pairs)
    hier_mean = np.mean([r["auc"] for r in grid["c3"]["dp-bmm-hier"]])
    ok = abs(hier_mean - 0.845) <= 0.03 and wins >= 8
    _criterion(3, ok, f"scenario 4 density 0.8: DP-BMM-Hier AUC {hier_mean:.4f} "
                      f"(target 0.845±0.03), beats Base in {wins}/{len(pairs)}")


def test_criterion_4_scenario3_coverage_split(grid):
    hier = np.mean([r["tpr_coverage"] for r in grid["c4"]["base-hier"]])
    base = np.mean([r["tpr_coverage"] for r in grid["c4"]["base"]])
    ok = hier >= 0.80 and base <= 0.40
    _criterion(4, ok, f"scenario 3 density 1.6: TPR coverage Base-Hier {hier:.3f} "
                      f"(need >=0.80), Base {base:.3f} (need <=0.40)")


def test_criterion_5_scenario3_mse_split(grid):
    hier = np.mean([r["tpr_mse"] for r in grid["c5"]["base-hier"]])
    base = np.mean([r["tpr_mse"] for r in grid["c5"]["base"]])
    ok = hier <= 0.015 and base >= 0.05
    _criterion(5, ok, f"scenario 3 density 0.8: TPR MSE Base-Hier {hier:.2e} "
                      f"(need <=0.015), Base {base:.2e} (need >=0.05)")


def test_criterion_6_convergence_gate(grid):
    worst_rhat, worst_rhat_fit = 0.0, ""
    worst_ess, worst_ess_fit = np.inf, ""
    for cell, by_model in grid.items():
        for model, results in by_model.items():
            for r in results:
                if r["max_rhat"] > worst_rhat:
                    worst_rhat = r["max_rhat"]
                    worst_rhat_fit = f"{cell}/{model}/rep{r['replicate']}/{r['max_rhat_param']}"
                if r["min_ess"] < worst_ess:
                    worst_ess = r["min_ess"]
                    worst_ess_fit = f"{cell}/{model}/rep{r['replicate']}/{r['min_ess_param']}"
    ok = worst_rhat < 1.1 and worst_ess >= 100
    _criterion(6, ok, f"all simulated fits: max split-Rhat {worst_rhat:.3f} "
                      f"({worst_rhat_fit}; need < 1.1), min ESS {worst_ess:.0f} "
                      f"({worst_ess_fit}; need >= 100)")


def test_criterion_7_real_data_conditional():
    data_dir = os.environ.get("CHORUS_KERTTU_DIR")
    if not data_dir:
        print("\n[SKIPPED] criterion 7: real-data evaluation (CHORUS_KERTTU_DIR not set; "
              "the public archive is a documented manual download)")
        pytest.skip("SKIPPED: real dataset not available (set CHORUS_KERTTU_DIR)")
    from chorus.data import load_annotations, load_expertise, load_gold, summarize
    from chorus.pipeline import evaluate_fit
    from chorus.runner import default_budget

    tensor = load_annotations(os.path.join(data_dir, "annotations.csv"))
    expertise = load_expertise(os.path.join(data_dir, "expertise.csv"), tensor)
    gold = load_gold(os.path.join(data_dir, "gold.csv"), tensor.n_recordings, tensor.n_species)
    assert abs(tensor.missing_rate() - 0.97126) < 1e-4
    assert abs(summarize(tensor).mean_recordings_per_annotator - 129) < 5

    hypers = application_defaults()
    reports = {}
    for kind in ("base", "base-hier", "dp-bmm", "dp-bmm-hier"):
        iters, burn = default_budget(kind, real_scale=True)
        cfg = McmcConfig(model_kind=kind, n_iterations=iters, burn_in=burn,
                         seed=7, n_chains=3, n_jobs=WORKERS)
        store = run(kind, tensor, expertise, hypers, cfg)
        reports[kind] = evaluate_fit(store, tensor, gold)
    base_auc = reports["base"].auc
    mv_auc = reports["base"].mv_auc
    waics = {k: r.waic[2] for k, r in reports.items()}
    briers = {k: r.brier for k, r in reports.items()}
    ok = (
        abs(base_auc - 0.905) <= 0.01
        and abs(mv_auc - 0.849) <= 0.005
        and waics["dp-bmm"] < waics["base"] < waics["base-hier"] < waics["dp-bmm-hier"]
        and min(briers, key=briers.get) == "base-hier"
    )
    _criterion(7, ok, f"real data: Base AUC {base_auc:.3f}, MV {mv_auc:.3f}, "
                      f"WAICs {waics}, Briers {briers}")


# ---------------------------------------------------------------- properties


def test_criterion_8_exact_enumeration_oracles():
    hyp = HyperParams(a_o=1.0, b_o=3.0, a_lambda=4.0, b_lambda=2.0,
                      a_psi=1.0, b_psi=6.0, u1=1.0, u2=1.0)
    rows = "recording,annotator,species,label\n0,0,0,1\n0,1,0,0\n1,0,0,1\n1,1,0,1\n"
    tensor = tensor_from_text(rows, dims=(2, 2, 1))

    _, base_marginal = base_enumeration_posterior(tensor, hyp.base())
    cfg = McmcConfig(model_kind="base", n_iterations=33_000, burn_in=3000,
                     seed=201, n_chains=3, record_loglik=False, n_jobs=WORKERS)
    store = run("base", tensor, None, hyp, cfg)
    base_err = float(np.max(np.abs(store.posterior_label_probabilities() - base_marginal)))

    dp_marginal = dp_enumeration_posterior(tensor, hyp)
    cfg = McmcConfig(model_kind="dp-bmm", n_iterations=33_000, burn_in=3000,
                     seed=202, n_chains=3, record_loglik=False, n_jobs=WORKERS)
    store = run("dp-bmm", tensor, None, hyp, cfg)
    dp_err = float(np.max(np.abs(store.posterior_label_probabilities() - dp_marginal)))

    ok = base_err <= 0.01 and dp_err <= 0.01
    _criterion(8, ok, f"2x2x1 fixture: Base Gibbs vs grid enumeration max err {base_err:.4f}, "
                      f"DP vs partition enumeration max err {dp_err:.4f} (need <= 0.01)")


def test_criterion_9_pg_sampler_moments():
    details = []
    ok = True
    for i, c in enumerate([0.0, 0.5, 1.0, 2.0, 4.0]):
        rng = RngStream(210, i)
        draws = polya_gamma(rng, np.full(100_000, c))
        se = draws.std(ddof=1) / np.sqrt(draws.size)
        z = abs(draws.mean() - float(pg_mean(c))) / se
        ok &= z < 4.0
        details.append(f"c={c}: z={z:.2f}")
    _criterion(9, ok, "PG(1,c) empirical means within 4 SE of tanh(c/2)/(2c): "
                      + ", ".join(details))


def test_criterion_10_crp_prior():
    hyp = HyperParams(u1=1.0, u2=1.0).dp()
    tables = dp.LogTables(hyp, 4)
    rng = RngStream(220)
    empty = np.zeros(0, dtype=np.int8)
    n_trials = 120_000
    hits = 0
    for _ in range(n_trials):
        stats = dp.MixtureStats(0, capacity=5)
        for _ in range(4):
            lw = dp.assignment_log_weights(stats, 1.0, empty, tables)
            stats.add(sample_categorical_log(rng, lw), empty)
        hits += stats.n_components == 4
    p_hat = hits / n_trials
    se = np.sqrt((1 / 24) * (23 / 24) / n_trials)
    singles_ok = abs(p_hat - 1.0 / 24.0) <= 3 * se

    # exchangeability: permuting the recordings leaves the partition law fixed
    y_a = np.array([[1], [1], [0], [0]], dtype=np.int8)
    perm = np.array([2, 0, 3, 1])

    def partition_counts(y, mapping, seed):
        z = np.zeros(4, dtype=np.int64)
        stats = dp.MixtureStats.from_assignments(z, y)
        state = dp.DpState(z=z.copy(), gamma=1.0, stats=stats, y=y.copy(),
                           tables=dp.LogTables(hyp, 4))
        rng = RngStream(seed)
        counts = {}
        for sweep in range(50_500):
            dp.assignment_sweep(rng, state)
            if sweep >= 500 and sweep % 5 == 0:
                blocks = {}
                for i, r in enumerate(state.z):
                    blocks.setdefault(int(r), []).append(int(mapping[i]))
                key = tuple(sorted(tuple(sorted(b)) for b in blocks.values()))
                counts[key] = counts.get(key, 0) + 1
        return counts

    ca = partition_counts(y_a, np.arange(4), seed=221)
    cb = partition_counts(y_a[perm], perm, seed=222)
    keys = sorted(set(ca) | set(cb))
    table = np.array([[ca.get(k, 0) for k in keys], [cb.get(k, 0) for k in keys]])
    keep = table.min(axis=0) >= 5
    _, p_value, _, _ = chi2_contingency(table[:, keep])
    exch_ok = p_value > 0.01

    ok = singles_ok and exch_ok
    _criterion(10, ok, f"CRP prior: P(4 singletons at gamma=1) = {p_hat:.5f} "
                       f"(1/24 = {1/24:.5f} ± {3*se:.5f}); exchangeability chi2 p = {p_value:.3f}")


def test_criterion_11_adaptive_metropolis():
    # exact acceptance-ratio arithmetic
    log_alpha = dp.gamma_log_accept(1.0, 2.0, 3, 0.5, 0.5, 2)
    expect = 2.5 * np.log(2.0) - 0.5 + np.log(1.0 / 3.0)
    arith_ok = abs(log_alpha - expect) < 1e-12 and abs(np.exp(log_alpha) - 1.1435) < 2e-4
    ident_ok = dp.gamma_log_accept(0.7, 0.7, 5, 0.5, 0.5, 9) == pytest.approx(0.0, abs=1e-12)

    # frozen adaptation, pinned partition: gamma draws match quadrature of
    # Gamma(0.5, 0.5) x p(z | gamma)
    n1, r_comp = 6, 3
    z = np.array([0, 0, 0, 1, 1, 2], dtype=np.int64)
    y = np.zeros((n1, 0), dtype=np.int8)
    state = dp.DpState(z=z, gamma=1.0, stats=dp.MixtureStats.from_assignments(z, y),
                       y=y, s_gamma=1.0,
                       tables=dp.LogTables(HyperParams(u1=0.5, u2=0.5).dp(), n1))
    rng = RngStream(230)
    draws = []
    thin = 25
    for it in range(2000 + 10_000 * thin):
        dp.update_gamma(rng, state, 0.5, 0.5, adapting=False)
        if it >= 2000 and it % thin == 0:
            draws.append(state.gamma)

    def log_density(g):
        out = (r_comp + 0.5 - 1.0) * np.log(g) - 0.5 * g
        for i in range(1, n1 + 1):
            out = out - np.log(i - 1.0 + g)
        return out

    stat = ks_against_quadrature(np.asarray(draws), log_density, 1e-9, 80.0)
    ks_ok = stat < ks_critical(len(draws))
    ok = arith_ok and ident_ok and ks_ok
    _criterion(11, ok, f"concentration move: exact ratio arithmetic ok={arith_ok}, "
                       f"identity ok={ident_ok}, frozen-kernel KS {stat:.4f} "
                       f"(crit {ks_critical(len(draws)):.4f})")


def test_criterion_12_pg_augmented_conditional():
    # stationary marginal of the species-level TPR for (delta, delta_bar) =
    # (3, 1) matches quadrature of N(center, phi*^2) sigma^3 sigma_bar
    import chorus.expertise as ex
    from chorus.data import ExpertiseSets
    from chorus.expertise import HierExpertiseState

    center, phi_star = 0.3, 1.0
    rows = [(i, 0, 0, 1 if i < 3 else 0) for i in range(4)]
    tensor = make_tensor(rows, dims=(4, 1, 1))
    mask = ExpertiseSets.full(1, 1).mask
    state = HierExpertiseState(
        lam_overall=np.array([center]), psi_overall=np.array([0.0]),
        lam_species=np.array([[center]]), psi_species=np.array([[0.0]]),
        phi_lambda=phi_star, phi_psi=1.0, mask=mask,
    )
    y = np.ones((4, 1), dtype=np.int8)
    rng = RngStream(240)
    draws = []
    thin = 5
    for it in range(1000 + 10_000 * thin):
        ex.update_species_tpr(rng, state, tensor, y)
        if it >= 1000 and it % thin == 0:
            draws.append(state.lam_species[0, 0])

    def log_density(x):
        return (-0.5 * ((x - center) / phi_star) ** 2
                + 3.0 * (-np.logaddexp(0.0, -x)) - np.logaddexp(0.0, x))

    stat = ks_against_quadrature(np.asarray(draws), log_density, -8.0, 8.0)
    ok = stat < ks_critical(len(draws))
    _criterion(12, ok, f"PG-augmented conditional (3,1): KS {stat:.4f} vs quadrature "
                       f"(crit {ks_critical(len(draws)):.4f})")


def test_criterion_13_metric_identities():
    rng = np.random.default_rng(250)
    scores = rng.random(300)
    labels = rng.integers(0, 2, 300)
    auc1, pts1 = roc_auc(scores, labels)
    auc2, pts2 = roc_auc(10.0 * np.tanh(scores) + 3.0, labels)
    auc_ok = auc1 == auc2 and [(f, t) for f, t, _ in pts1] == [(f, t) for f, t, _ in pts2]

    ll = rng.normal(-1.0, 0.7, size=(25, 11))
    lppd, p_w, w = waic(ll)
    waic_ok = w == -2.0 * (lppd - p_w)

    brier_ok = (
        brier([1.0, 0.0], [1, 0]) == 0.0
        and brier([0.5, 0.5], [1, 0]) == 0.25
        and brier([0.8, 0.1], [1, 0]) == pytest.approx(0.025, abs=1e-15)
    )
    ok = auc_ok and waic_ok and brier_ok
    _criterion(13, ok, f"metric identities exact: AUC transform-invariance {auc_ok}, "
                       f"WAIC decomposition {waic_ok}, Brier arithmetic {brier_ok}")


def test_criterion_14_byte_identical_reruns(tmp_path):
    sim = tmp_path / "sim"
    fits = []
    cli = [sys.executable, "-m", "chorus.cli"]
    subprocess.run(cli + ["simulate", "--scenario", "1", "--density", "2.4", "--seed", "77",
                          "--recordings", "80", "--out", str(sim)], check=True)
    for name in ("f1", "f2"):
        out = tmp_path / name
        subprocess.run(cli + ["fit", "--model", "dp-bmm", "--annotations",
                              str(sim / "annotations.csv"), "--iters", "150", "--burn", "50",
                              "--chains", "2", "--seed", "9", "--out", str(out)], check=True)
        fits.append(out)
    pairs = []
    for fname in ("chain_00.jsonl.gz", "chain_01.jsonl.gz", "chain_00_ymean.txt",
                  "chain_01_ymean.txt"):
        a = (fits[0] / fname).read_bytes()
        b = (fits[1] / fname).read_bytes()
        pairs.append(a == b)
    with open(fits[0] / "manifest.json") as fh:
        m1 = json.load(fh)
    with open(fits[1] / "manifest.json") as fh:
        m2 = json.load(fh)
    hash_ok = m1["chain_hashes"] == m2["chain_hashes"]
    ok = all(pairs) and hash_ok
    _criterion(14, ok, f"rerun with identical config+seed: draw files byte-identical {all(pairs)}, "
                       f"manifest hashes equal {hash_ok}")
