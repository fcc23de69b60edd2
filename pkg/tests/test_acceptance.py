"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s``. The simulation-backed
criteria share module-scoped runs; everything is seeded and deterministic.
Wall time is dominated by the two comparison studies (several minutes each
on one core).
"""

import os

import numpy as np
import pytest
from scipy.stats import spearmanr

from annoknock.adaptive_lasso import (
    LassoProblem,
    fit_individual,
    kkt_violation,
    solve,
)
from annoknock.anno_weights import PenaltyState, maximize_lambda
from annoknock.annogk_pipeline import annogk_fit, make_pseudo_split
from annoknock.annokn_pipeline import PipelineConfig, annokn_fit
from annoknock.cli import main as cli_main
from annoknock.data_model import (
    SummaryStats,
    annotations_from_array,
    ld_from_array,
    standardize,
    standardize_vector,
)
from annoknock.knockoff_filter import knockoff_threshold, lcd_stats
from annoknock.knockoff_gen import build_knockoff_model, build_sigma_m, sample_knockoffs
from annoknock.simulation import SimScenario, ar1_correlation, run_comparison

N_JOBS = os.cpu_count() or 1

# tau2 = 0.02 and d = 1 put the learned penalty tilt in the moderate regime;
# the weight-prior hyperparameters are exposed knobs with no assigned values
# in the protocol being reproduced.
INDIVIDUAL_CFG = PipelineConfig(
    grid_size=10, grid_min_frac=0.03, seed=101, tau2=0.005, d=1.0
)
SUMMARY_CFG = PipelineConfig(
    grid_size=10, grid_min_frac=0.03, seed=202, tau2=0.01, d=1.0
)


def _report(criterion, ok, detail):
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {criterion}: {detail}"


# ------------------------------------------------------------------ shared runs

@pytest.fixture(scope="module")
def individual_runs():
    """100 replicates of the individual-level comparison study."""
    scenario = SimScenario(
        n=1000, p=900, rho=0.5, n_causal=150, causal_pool=300,
        replicates=100, seed=20_250_101, amplitude=3.5 / np.sqrt(1000),
        annotation_kind="index",
    )
    return run_comparison(
        scenario, ["knockoffs", "annokn", "annokn_lite"], (0.1, 0.2, 0.3),
        config=INDIVIDUAL_CFG, n_jobs=N_JOBS,
    )


def _summary_runs(annotation_kind):
    scenario = SimScenario(
        n=5000, p=300, rho=0.5, n_causal=30, causal_pool=60,
        replicates=50, seed=20_250_202, h2=0.2, annotation_kind=annotation_kind,
    )
    return run_comparison(
        scenario, ["ghostknockoff", "annogk"], (0.1, 0.2),
        config=SUMMARY_CFG, n_jobs=N_JOBS,
    )


@pytest.fixture(scope="module")
def summary_runs_index():
    return _summary_runs("index")


@pytest.fixture(scope="module")
def summary_runs_binary():
    return _summary_runs("binary_pool")


# ------------------------------------------------------------------ criterion 1

def test_criterion_1_flip_sign():
    """Swapping a covariate with its knockoff flips its statistic's sign."""
    rng = np.random.default_rng(1)
    n, p = 200, 10
    worst_other = 0.0
    ok = True
    for trial in range(20):
        x = standardize(rng.standard_normal((n, p)))
        model = build_knockoff_model(ld_from_array(np.eye(p)), m=1)
        xk = sample_knockoffs(x, model, seed=trial)
        xx = np.hstack([x.values, xk.values])
        beta = np.zeros(p)
        beta[rng.choice(p, 3, replace=False)] = rng.normal(0, 0.5, 3)
        y = standardize_vector(x.values @ beta + rng.standard_normal(n))
        phi = rng.uniform(0.5, 2.0, p)
        lam = 0.3 * np.max(np.abs(xx.T @ y / n))
        base = lcd_stats(fit_individual(y, xx, phi, lam, tol=1e-10), p)

        j = int(rng.integers(p))
        swapped = xx.copy()
        swapped[:, [j, j + p]] = swapped[:, [j + p, j]]
        flipped = lcd_stats(fit_individual(y, swapped, phi, lam, tol=1e-10), p)

        if abs(flipped.w[j] + base.w[j]) > 1e-6:
            ok = False
        others = np.delete(np.abs(flipped.w - base.w), j)
        worst_other = max(worst_other, float(others.max()))
        if worst_other > 1e-6:
            ok = False
    _report(1, ok, f"20 datasets, max |w_k change| off-swap {worst_other:.2e}")


# -------------------------------------------------------------- criteria 2 & 3

def test_criterion_2_fdr_individual(individual_runs):
    details = []
    ok = True
    for method in ("knockoffs", "annokn", "annokn_lite"):
        for q in (0.1, 0.2, 0.3):
            fdp = individual_runs[method].mean_fdp(q)
            details.append(f"{method}@{q}: {fdp:.3f}")
            if fdp > q + 0.05:
                ok = False
    _report(2, ok, "mean FDP " + ", ".join(details))


def test_criterion_3_power_ordering_individual(individual_runs):
    p_annokn = individual_runs["annokn"].mean_power(0.2)
    p_plain = individual_runs["knockoffs"].mean_power(0.2)
    p_lite = individual_runs["annokn_lite"].mean_power(0.2)
    gap = p_annokn - p_plain
    lite_diff = abs(p_annokn - p_lite)
    ok = gap >= 0.05 and lite_diff <= 0.05
    _report(
        3, ok,
        f"power annokn={p_annokn:.3f} knockoffs={p_plain:.3f} gap={gap:+.3f} "
        f"(need >= +0.05); |annokn-lite|={lite_diff:.3f} (need <= 0.05)",
    )


# ------------------------------------------------------------------ criterion 4

def test_criterion_4_summary_fdr_and_power(summary_runs_index, summary_runs_binary):
    details = []
    ok = True
    for label, runs in (("index", summary_runs_index), ("binary", summary_runs_binary)):
        for method in ("ghostknockoff", "annogk"):
            for q in (0.1, 0.2):
                fdp = runs[method].mean_fdp(q)
                if fdp > q + 0.05:
                    ok = False
                    details.append(f"{label}/{method}@{q} FDP {fdp:.3f} > {q + 0.05}")
        gap = runs["annogk"].mean_power(0.2) - runs["ghostknockoff"].mean_power(0.2)
        details.append(f"{label} power gap {gap:+.3f}")
        if gap <= 0.0:
            ok = False
    fdp_note = ", ".join(
        f"{m}@0.2={summary_runs_index[m].mean_fdp(0.2):.3f}"
        for m in ("ghostknockoff", "annogk")
    )
    _report(4, ok, "; ".join(details) + f"; index FDP {fdp_note}")


# ------------------------------------------------------------------ criterion 5

def test_criterion_5_individual_summary_agreement():
    """In-sample gram/z: the two pipelines agree on W and power.

    The sample size is larger than in the comparison study so that the
    in-sample gram and z-scores sit close to their model values, which is
    what the agreement claim is about.
    """
    n, p, reps = 40_000, 150, 20
    sigma = ar1_correlation(p, 0.5)
    chol = np.linalg.cholesky(sigma)
    rhos, dpowers = [], []
    for rep in range(reps):
        rng = np.random.default_rng([303, rep])
        raw = rng.standard_normal((n, p)) @ chol.T
        x = standardize(raw, names=tuple(f"s{j}" for j in range(p)))
        pool_w = np.arange(1, 61, dtype=float) ** -2.0
        support = []
        w = pool_w.copy()
        for _ in range(30):
            probs = w / w.sum()
            j = int(rng.choice(60, p=probs))
            support.append(j)
            w[j] = 0.0
        direction = np.zeros(p)
        direction[support] = rng.integers(0, 2, 30) * 2.0 - 1.0
        amp = np.sqrt(0.2 / (direction @ sigma @ direction))
        y = x.values @ (amp * direction) + np.sqrt(0.8) * rng.standard_normal(n)
        ys = standardize_vector(y)

        sample_ld = ld_from_array(x.values.T @ x.values / (n - 1))
        model = build_knockoff_model(sample_ld, m=1)
        xk = sample_knockoffs(x, model, seed=int(rng.integers(2**32)))
        anno = annotations_from_array(np.arange(1.0, p + 1.0)[:, None], names=("index",))

        cfg = PipelineConfig(grid_size=10, grid_min_frac=0.03, seed=rep, tau2=0.01, d=1.0)
        res_ind = annokn_fit(ys, x, xk, anno, cfg)
        stats = SummaryStats(snp_ids=x.col_names, z=x.values.T @ ys / np.sqrt(n), n=n)
        res_sum = annogk_fit(
            stats, sample_ld, anno, cfg, z_knock=xk.values.T @ ys / np.sqrt(n)
        )
        rhos.append(spearmanr(res_ind.stats.w, res_sum.stats.w).statistic)
        sup = set(support)

        def power(res):
            sel = set(res.selection.selected)
            return len(sel & sup) / len(sup)

        dpowers.append(power(res_ind) - power(res_sum))
    mean_rho = float(np.mean(rhos))
    mean_dp = abs(float(np.mean(dpowers)))
    ok = mean_rho >= 0.9 and mean_dp <= 0.07
    _report(5, ok, f"rank corr {mean_rho:.3f} (need >= 0.9); |dpower| {mean_dp:.3f} (need <= 0.07)")


# ------------------------------------------------------------------ criterion 6

def test_criterion_6_noise_annotation_robustness():
    base = dict(
        n=1000, p=900, rho=0.5, n_causal=150, causal_pool=300,
        replicates=50, seed=20_250_606, amplitude=3.5 / np.sqrt(1000),
    )
    scen1 = SimScenario(annotation_kind="index", **base)
    scen5 = SimScenario(annotation_kind="permuted_noise:4", **base)
    runs1 = run_comparison(scen1, ["annokn"], (0.2,), config=INDIVIDUAL_CFG, n_jobs=N_JOBS)
    runs5 = run_comparison(scen5, ["annokn"], (0.2,), config=INDIVIDUAL_CFG, n_jobs=N_JOBS)
    p1 = runs1["annokn"].mean_power(0.2)
    p5 = runs5["annokn"].mean_power(0.2)

    # Re-fit a subsample to collect learned weights for the ordering check.
    from annoknock.simulation import _scenario_shared, prepare_replicate

    shared = _scenario_shared(scen5)
    lam_inf, lam_perm = [], []
    for rep in range(12):
        x, y, support, anno, xk, *_ = prepare_replicate(scen5, rep, shared, True, False)
        res = annokn_fit(y, x, xk, anno, INDIVIDUAL_CFG)
        lam_inf.append(abs(res.penalty.lambda_anno[0]))
        lam_perm.append(np.median(np.abs(res.penalty.lambda_anno[1:])))
    med_inf = float(np.median(lam_inf))
    med_perm = float(np.median(lam_perm))
    ok = abs(p5 - p1) <= 0.05 and med_perm < med_inf
    _report(
        6, ok,
        f"power 1-anno {p1:.3f} vs 5-anno {p5:.3f} (|diff| {abs(p5 - p1):.3f} <= 0.05); "
        f"median |lam| informative {med_inf:.3f} > permuted {med_perm:.3f}",
    )


# ------------------------------------------------------------------ criterion 7

def test_criterion_7_solver_oracles():
    rng = np.random.default_rng(7)
    ok = True
    details = []

    # KKT certificate on 100 random problems.
    worst = 0.0
    for _ in range(100):
        n, p = int(rng.integers(40, 120)), int(rng.integers(2, 8))
        x = standardize(rng.standard_normal((n, 2 * p))).values
        y = standardize_vector(x[:, :p] @ rng.standard_normal(p) + rng.standard_normal(n))
        problem = LassoProblem(
            gram=x.T @ x / n, linear=x.T @ y / n,
            penalty_weights=rng.uniform(0.5, 2.0, p),
            lambda0=float(rng.uniform(0.02, 0.4)),
        )
        worst = max(worst, kkt_violation(problem, solve(problem).beta))
    details.append(f"KKT worst {worst:.2e}")
    ok &= worst <= 1e-6

    # Orthonormal closed form.
    worst_ortho = 0.0
    for _ in range(50):
        p = 5
        lin = rng.normal(0, 0.5, 2 * p)
        phi = rng.uniform(0.5, 2.0, p)
        lam = float(rng.uniform(0.05, 0.3))
        fit = solve(LassoProblem(gram=np.eye(2 * p), linear=lin,
                                 penalty_weights=phi, lambda0=lam))
        expected = np.sign(lin) * np.maximum(np.abs(lin) - lam * np.tile(phi, 2), 0.0)
        worst_ortho = max(worst_ortho, float(np.max(np.abs(fit.beta - expected))))
    details.append(f"orthonormal {worst_ortho:.2e}")
    ok &= worst_ortho <= 1e-8

    # Weight update vs 1-D bisection oracle.
    a = np.array([[1.0], [-1.0]])
    b = np.array([1.0, 0.0])
    state = PenaltyState.initial(2, 1, d=1.0, tau2=1.0, lambda0=0.1)
    out = maximize_lambda(state, b, a, 100)
    lo, hi = -10.0, 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if -10.0 * np.exp(mid) - mid > 0:
            lo = mid
        else:
            hi = mid
    gap = abs(out.lambda_anno[0] - 0.5 * (lo + hi))
    details.append(f"newton-vs-bisect {gap:.2e}")
    ok &= gap <= 1e-6

    # Analytic gradient vs central differences at 20 random points.
    from annoknock.anno_weights import compute_phi, objective

    worst_rel = 0.0
    for _ in range(20):
        p, L = 25, 3
        av = rng.standard_normal((p, L))
        av -= av.mean(axis=0)
        bv = rng.uniform(0, 0.4, p)
        lam_v = rng.standard_normal(L) * 0.5
        nn, lam0, d, tau2 = 120, 0.08, 1.3, 1.7
        phi = compute_phi(lam_v, av, d)
        grad = -(nn * lam0 / d) * (av.T @ (phi * bv)) - lam_v / tau2
        h = 1e-5
        for l in range(L):
            e = np.zeros(L)
            e[l] = h
            num = (
                objective(lam_v + e, bv, av, nn, lam0, d, tau2)
                - objective(lam_v - e, bv, av, nn, lam0, d, tau2)
            ) / (2 * h)
            worst_rel = max(worst_rel, abs(num - grad[l]) / max(1.0, abs(grad[l])))
    details.append(f"grad-vs-fd {worst_rel:.2e}")
    ok &= worst_rel <= 1e-4

    _report(7, ok, "; ".join(details))


# ------------------------------------------------------------------ criterion 8

def test_criterion_8_filter_oracle():
    rng = np.random.default_rng(8)
    mismatches = 0
    for _ in range(1000):
        size = int(rng.integers(1, 60))
        w = rng.standard_normal(size)
        if rng.uniform() < 0.3:
            w[rng.uniform(size=size) < 0.2] = 0.0
        q = float(rng.uniform(0.05, 0.6))
        res = knockoff_threshold(w, q)

        best = np.inf
        for t in sorted(set(np.abs(w[w != 0.0]))):
            if (1 + np.sum(w <= -t)) / max(np.sum(w >= t), 1) <= q:
                best = t
                break
        selected = (
            tuple(int(j) for j in np.flatnonzero(w >= best)) if np.isfinite(best) else ()
        )
        if res.threshold != best or res.selected != selected:
            mismatches += 1
    _report(8, mismatches == 0, f"{mismatches} mismatches over 1000 random W vectors")


# ------------------------------------------------------------------ criterion 9

def test_criterion_9_pseudo_split_contract():
    p = 5
    ld = ld_from_array(ar1_correlation(p, 0.5))
    model = build_knockoff_model(ld, m=1)
    sm = build_sigma_m(ld, model.d_diag, m=1)
    factor = sm.factor()
    rng = np.random.default_rng(9)
    draws, n = 5000, 1000
    zts = np.empty((draws, 2 * p))
    zvs = np.empty((draws, 2 * p))
    for i in range(draws):
        zm = factor @ rng.standard_normal(2 * p)
        split = make_pseudo_split(zm, sm, n, 0.8, seed=int(rng.integers(2**32)))
        zts[i] = split.z_train
        zvs[i] = split.z_valid
    cross = (zts - zts.mean(0)).T @ (zvs - zvs.mean(0)) / (draws - 1)
    max_cross = float(np.max(np.abs(cross)))
    max_var = float(np.max(np.abs(np.cov(zts.T) - sm.matrix)))
    ok = max_cross < 0.05 and max_var < 0.05
    _report(9, ok, f"max |Cov(z_t, z_v)| {max_cross:.3f}; max |Cov(z_t) - Sigma_M| {max_var:.3f}")


# ----------------------------------------------------------------- criterion 10

def test_criterion_10_cli_determinism(tmp_path):
    scen = tmp_path / "scenario.cfg"
    scen.write_text(
        "n = 150\np = 20\nrho = 0.4\nn_causal = 4\ncausal_pool = 8\n"
        "replicates = 3\nseed = 55\nh2 = 0.4\nannotation = index\n"
        "methods = knockoffs,annokn\nqs = 0.2\ngrid_size = 5\n"
        "grid_min_frac = 0.1\ntau2 = 0.02\n"
    )
    outputs = []
    for threads in (1, 2, 8):
        out = tmp_path / f"t{threads}"
        code = cli_main(["simulate", str(scen), "--out", str(out), "--threads", str(threads)])
        assert code == 0
        outputs.append(
            tuple((out / name).read_bytes() for name in
                  ("aggregate.csv", "replicates.csv", "plotdata.csv"))
        )
    ok = outputs[0] == outputs[1] == outputs[2]
    _report(10, ok, "byte-identical CSVs across --threads {1, 2, 8}")
