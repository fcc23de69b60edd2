"""Synthetic-data generation and method comparison harness.

Generates AR(1) Gaussian designs with a sparse causal signal concentrated at
low covariate indices, runs the selection methods on shared knockoff draws
(paired design), and aggregates per-replicate false discovery proportion and
power over a grid of target levels. Every replicate is reproducible from
(scenario seed, replicate index).
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform
from threadpoolctl import threadpool_limits

from .annogk_pipeline import annogk_fit, ghostknockoff_fit
from .annokn_pipeline import PipelineConfig, annokn_fit, annokn_lite_fit, plain_knockoff_fit
from .data_model import (
    AnnotationMatrix,
    LdMatrix,
    StandardizedMatrix,
    SummaryStats,
    annotations_from_array,
    empty_annotations,
    ld_from_array,
    standardize,
    standardize_vector,
)
from .knockoff_filter import knockoff_threshold
from .knockoff_gen import build_knockoff_model, sample_knockoff_zscores, sample_knockoffs

METHODS = ("knockoffs", "annokn", "annokn_lite", "ghostknockoff", "annogk")
INDIVIDUAL_METHODS = {"knockoffs", "annokn", "annokn_lite"}
SUMMARY_METHODS = {"ghostknockoff", "annogk"}
ANNOTATED_METHODS = {"annokn", "annokn_lite", "annogk"}


@dataclass(frozen=True)
class SimScenario:
    """One simulation protocol.

    Exactly one of ``h2`` (signal variance fraction of a unit-variance
    response) or ``amplitude`` (fixed |beta| per causal covariate, noise sd
    1) must be set. ``annotation_kind`` is one of ``index``, ``binary_pool``,
    ``permuted_noise:<k>`` (the index annotation plus k permuted copies), or
    ``none``.
    """

    n: int
    p: int
    rho: float
    n_causal: int
    causal_pool: int
    replicates: int
    seed: int
    causal_prob_exponent: float = 2.0
    h2: float | None = None
    amplitude: float | None = None
    annotation_kind: str = "index"

    def __post_init__(self):
        if not (0 < self.n_causal <= self.causal_pool <= self.p):
            raise ValueError("need 0 < n_causal <= causal_pool <= p")
        if not (0.0 <= self.rho < 1.0):
            raise ValueError("rho must be in [0, 1)")
        if (self.h2 is None) == (self.amplitude is None):
            raise ValueError("exactly one of h2 / amplitude must be set")
        if self.h2 is not None and not (0.0 < self.h2 < 1.0):
            raise ValueError("h2 must be in (0, 1)")
        kind = self.annotation_kind
        if kind not in ("index", "binary_pool", "none") and not kind.startswith("permuted_noise:"):
            raise ValueError(f"unknown annotation_kind '{kind}'")


@dataclass
class SimMetrics:
    """FDP and power per replicate at each target level, plus summaries."""

    method: str
    q_grid: tuple[float, ...]
    fdp: np.ndarray    # (n_q, replicates)
    power: np.ndarray  # (n_q, replicates)
    selections: list = field(default_factory=list)  # (replicate, q, selected, support)

    def mean_fdp(self, q) -> float:
        return float(self.fdp[self.q_grid.index(q)].mean())

    def mean_power(self, q) -> float:
        return float(self.power[self.q_grid.index(q)].mean())

    def se_fdp(self, q) -> float:
        row = self.fdp[self.q_grid.index(q)]
        return float(row.std(ddof=1) / np.sqrt(row.size)) if row.size > 1 else 0.0

    def se_power(self, q) -> float:
        row = self.power[self.q_grid.index(q)]
        return float(row.std(ddof=1) / np.sqrt(row.size)) if row.size > 1 else 0.0


def ar1_correlation(p, rho) -> np.ndarray:
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def weighted_sample_without_replacement(rng, weights, k) -> np.ndarray:
    """Sequential weighted draws with renormalization after each draw."""
    w = np.array(weights, dtype=np.float64)
    chosen = []
    for _ in range(k):
        probs = w / w.sum()
        j = int(rng.choice(w.size, p=probs))
        chosen.append(j)
        w[j] = 0.0
    return np.array(sorted(chosen))


def _build_annotations(kind, p, causal_pool, rng) -> AnnotationMatrix:
    index = np.arange(1, p + 1, dtype=np.float64)
    if kind == "none":
        return empty_annotations(p)
    if kind == "index":
        return annotations_from_array(index[:, None], names=("index",))
    if kind == "binary_pool":
        col = (index <= causal_pool).astype(np.float64)
        return annotations_from_array(col[:, None], names=("in_pool",))
    k = int(kind.split(":", 1)[1])
    cols = [index] + [rng.permutation(index) for _ in range(k)]
    names = ("index",) + tuple(f"permuted{i + 1}" for i in range(k))
    return annotations_from_array(np.column_stack(cols), names=names)


def generate_ar1(scenario: SimScenario, replicate_seed, chol=None):
    """Draw one replicate: (design, response, causal support, annotations).

    Rows are i.i.d. N(0, Sigma_rho) via the Cholesky factor; the causal set
    is drawn without replacement with probability proportional to
    j^(-causal_prob_exponent) within the pool; signs are +/- with equal
    probability. Under ``h2`` the amplitude solves beta' Sigma beta = h2 with
    noise variance 1 - h2; under ``amplitude`` the noise variance is 1.
    """
    rng = np.random.default_rng(replicate_seed)
    sigma = ar1_correlation(scenario.p, scenario.rho)
    if chol is None:
        chol = np.linalg.cholesky(sigma)
    raw = rng.standard_normal((scenario.n, scenario.p)) @ chol.T
    x = standardize(raw, names=tuple(f"snp{j + 1}" for j in range(scenario.p)))

    pool_weights = np.arange(1, scenario.causal_pool + 1, dtype=np.float64) ** (
        -scenario.causal_prob_exponent
    )
    support = weighted_sample_without_replacement(rng, pool_weights, scenario.n_causal)
    signs = rng.integers(0, 2, size=scenario.n_causal) * 2.0 - 1.0
    direction = np.zeros(scenario.p)
    direction[support] = signs

    if scenario.h2 is not None:
        quad = float(direction @ (sigma @ direction))
        amp = np.sqrt(scenario.h2 / quad)
        noise_sd = np.sqrt(1.0 - scenario.h2)
    else:
        amp = scenario.amplitude
        noise_sd = 1.0
    beta = amp * direction
    y = x.values @ beta + noise_sd * rng.standard_normal(scenario.n)
    annotations = _build_annotations(
        scenario.annotation_kind, scenario.p, scenario.causal_pool, rng
    )
    # Zero amplitude is the null-calibration case: nothing is truly causal.
    effective_support = tuple(int(j) for j in support) if amp != 0.0 else ()
    return x, y, effective_support, annotations


def _fdp_and_power(selected, support):
    sel = set(selected)
    sup = set(support)
    fdp = len(sel - sup) / max(len(sel), 1)
    power = len(sel & sup) / max(len(sup), 1)
    return fdp, power


@dataclass(frozen=True)
class _Shared:
    """Per-scenario precomputation shipped to replicate workers."""

    chol: np.ndarray
    model: object
    ld: LdMatrix


def prepare_replicate(scenario: SimScenario, replicate, shared: _Shared, need_individual,
                      need_summary):
    """Data plus the shared knockoff draws for one replicate."""
    seeds = np.random.SeedSequence([scenario.seed, replicate]).generate_state(4)
    x, y, support, annotations = generate_ar1(scenario, int(seeds[0]), chol=shared.chol)
    x_knock = sample_knockoffs(x, shared.model, int(seeds[1])) if need_individual else None
    zm = None
    stats = None
    if need_summary:
        y_std = standardize_vector(y)
        stats = SummaryStats(
            snp_ids=x.col_names,
            z=x.values.T @ y_std / np.sqrt(scenario.n),
            n=scenario.n,
        )
        zm = sample_knockoff_zscores(stats, shared.model, int(seeds[2]))
    return x, y, support, annotations, x_knock, stats, zm, int(seeds[3])


def _run_replicate(args):
    scenario, replicate, methods, q_grid, config = args
    with threadpool_limits(limits=1):
        shared = _scenario_shared(scenario)
        need_ind = bool(INDIVIDUAL_METHODS & set(methods))
        need_sum = bool(SUMMARY_METHODS & set(methods))
        x, y, support, annotations, x_knock, stats, zm, fit_seed = prepare_replicate(
            scenario, replicate, shared, need_ind, need_sum
        )
        cfg = replace(config, seed=fit_seed)
        rows = []
        for method in methods:
            if method == "knockoffs":
                result = plain_knockoff_fit(y, x, x_knock, cfg)
            elif method == "annokn":
                result = annokn_fit(y, x, x_knock, annotations, cfg)
            elif method == "annokn_lite":
                result = annokn_lite_fit(y, x, x_knock, annotations, cfg)
            elif method == "ghostknockoff":
                result = ghostknockoff_fit(stats, shared.ld, cfg, z_knock=zm[scenario.p:])
            elif method == "annogk":
                result = annogk_fit(stats, shared.ld, annotations, cfg, z_knock=zm[scenario.p:])
            else:
                raise ValueError(f"unknown method '{method}'")
            for q in q_grid:
                selected = knockoff_threshold(result.stats, q).selected
                fdp, power = _fdp_and_power(selected, support)
                rows.append((method, q, replicate, fdp, power, selected, support))
        return rows


_SHARED_CACHE = {}


def _scenario_shared(scenario: SimScenario) -> _Shared:
    key = (scenario.p, scenario.rho)
    if key not in _SHARED_CACHE:
        sigma = ar1_correlation(scenario.p, scenario.rho)
        ld = ld_from_array(sigma, shrinkage=0.0)
        _SHARED_CACHE[key] = _Shared(
            chol=np.linalg.cholesky(sigma),
            model=build_knockoff_model(ld, m=1),
            ld=ld,
        )
    return _SHARED_CACHE[key]


def run_comparison(scenario: SimScenario, methods, q_grid, config: PipelineConfig | None = None,
                   n_jobs: int = 1) -> dict[str, SimMetrics]:
    """Run each method on every replicate and aggregate FDP/power.

    Within a replicate all individual-level methods see the same knockoff
    draw and all summary-level methods see the same knockoff z-scores, so
    method contrasts are paired. Results are merged by replicate index and
    do not depend on ``n_jobs``.
    """
    methods = tuple(methods)
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    q_grid = tuple(float(q) for q in q_grid)
    config = config or PipelineConfig()
    tasks = [(scenario, rep, methods, q_grid, config) for rep in range(scenario.replicates)]
    if n_jobs > 1 and scenario.replicates > 1:
        with multiprocessing.Pool(min(n_jobs, scenario.replicates)) as pool:
            per_rep = pool.map(_run_replicate, tasks)
    else:
        per_rep = [_run_replicate(t) for t in tasks]

    out = {}
    for method in methods:
        fdp = np.zeros((len(q_grid), scenario.replicates))
        power = np.zeros((len(q_grid), scenario.replicates))
        selections = []
        for rep, rows in enumerate(per_rep):
            for m, q, r, f, pw, selected, support in rows:
                if m != method:
                    continue
                qi = q_grid.index(q)
                fdp[qi, r] = f
                power[qi, r] = pw
                selections.append((r, q, selected, support))
        out[method] = SimMetrics(
            method=method, q_grid=q_grid, fdp=fdp, power=power, selections=selections
        )
    return out


def cluster_representatives(sigma: LdMatrix, pvals, r_threshold: float):
    """Pick one representative per correlation cluster.

    Single-linkage clustering on distance 1 - |r|, cut so that covariates
    linked by |r| > r_threshold share a cluster; within each cluster the
    index with the smallest p-value wins (ties go to the lowest index).
    """
    pvals = np.asarray(pvals, dtype=np.float64)
    if np.any(pvals <= 0) or np.any(pvals > 1):
        raise ValueError("p-values must lie in (0, 1]")
    mat = sigma.sigma if hasattr(sigma, "sigma") else np.asarray(sigma)
    p = mat.shape[0]
    if p == 1:
        return (0,)
    dist = 1.0 - np.abs(mat)
    np.fill_diagonal(dist, 0.0)
    dist = np.clip(dist, 0.0, None)
    z = linkage(squareform(dist, checks=False), method="single")
    # Strict |r| > threshold: shave the cut height by an epsilon so exact
    # threshold ties stay separate.
    labels = fcluster(z, t=(1.0 - r_threshold) * (1.0 - 1e-12), criterion="distance")
    reps = []
    for lab in np.unique(labels):
        members = np.flatnonzero(labels == lab)
        reps.append(int(members[np.argmin(pvals[members])]))
    return tuple(sorted(reps))
