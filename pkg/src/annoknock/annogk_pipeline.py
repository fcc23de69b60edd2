"""Summary-statistics pipeline: knockoff z-scores plus annotation-informed
weighted regression, with lambda0 tuned on pseudo summary statistics.

A z-score vector and an LD matrix stand in for individual-level data. The
coefficient update minimizes the quadratic-form objective over (Z_M, Sigma_M);
lambda0 is tuned by decomposing Z_M into independent training/validation
pieces and scoring candidate fits on the held-out piece.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import adaptive_lasso as al
from .anno_weights import PenaltyState
from .annokn_pipeline import PipelineConfig, PipelineResult, _alternate, _finish
from .data_model import LdMatrix, SummaryStats, empty_annotations
from .knockoff_gen import SigmaM, build_knockoff_model, build_sigma_m, sample_knockoff_zscores


@dataclass(frozen=True)
class PseudoSplit:
    """Independent train/validation decomposition of a z-score vector.

    sqrt(n_t/n) z_train + sqrt(n_v/n) z_valid reconstructs the input exactly;
    the two pieces are independent, each with covariance Sigma_M and means
    scaled by sqrt(n_t/n) and sqrt(n_v/n).
    """

    z_train: np.ndarray
    z_valid: np.ndarray
    n_train: int
    n_valid: int


def make_pseudo_split(zm, sigma_m: SigmaM, n, frac_train, seed) -> PseudoSplit:
    """Split z-scores into independent training/validation pieces.

    With eps ~ N(0, Sigma_M) drawn from the PSD factor of Sigma_M under
    ``seed``:

        z_train = sqrt(n_t/n) z + sqrt(n_v/n) eps
        z_valid = sqrt(n_v/n) z - sqrt(n_t/n) eps

    which makes Cov(z_train, z_valid) = 0 and leaves each piece with
    covariance Sigma_M when z itself has covariance Sigma_M.
    """
    if not (0.0 < frac_train < 1.0):
        raise ValueError("frac_train must be in (0, 1)")
    zm = np.asarray(zm, dtype=np.float64)
    n_t = int(round(frac_train * n))
    n_v = n - n_t
    if n_t < 1 or n_v < 1:
        raise ValueError(f"split of n={n} at frac_train={frac_train} leaves an empty piece")
    rng = np.random.default_rng(seed)
    eps = sigma_m.factor() @ rng.standard_normal(zm.size)
    a, b = np.sqrt(n_t / n), np.sqrt(n_v / n)
    return PseudoSplit(
        z_train=a * zm + b * eps,
        z_valid=b * zm - a * eps,
        n_train=n_t,
        n_valid=n_v,
    )


def pseudo_validation_score(beta_hat, z_valid, sigma_m, n_valid) -> float:
    """Held-out fit quality: beta' z_valid / sqrt(n_valid) - beta' Sigma_M beta / 2.

    Higher is better; this is the summary-statistics analogue of out-of-sample
    R^2 up to constants.
    """
    beta_hat = np.asarray(beta_hat, dtype=np.float64)
    mat = sigma_m.matrix if hasattr(sigma_m, "matrix") else np.asarray(sigma_m)
    return float(
        beta_hat @ np.asarray(z_valid) / np.sqrt(n_valid)
        - 0.5 * beta_hat @ (mat @ beta_hat)
    )


def _summary_log_posterior(beta, state, gram, zm, n, anno_values, m):
    p = state.phi.size
    log_phi = (anno_values @ state.lambda_anno) / state.d if anno_values.shape[1] else np.zeros(p)
    blocks = beta.size // p
    b = np.abs(beta.reshape(blocks, p)).sum(axis=0)
    return (
        -0.5 * n * float(beta @ (gram @ beta))
        + np.sqrt(n) * float(beta @ zm)
        + (m + 1) * float(log_phi.sum())
        - n * state.lambda0 * float(state.phi @ b)
        - float(state.lambda_anno @ state.lambda_anno) / (2.0 * state.tau2)
    )


def annogk_fit(
    z: SummaryStats,
    ld: LdMatrix,
    annotations,
    config: PipelineConfig,
    z_knock=None,
) -> PipelineResult:
    """Fit the summary-statistics pipeline and select covariates.

    Builds the decoupling diagonal and Sigma_M from the LD matrix, samples
    knockoff z-scores (or takes ``z_knock`` as given, e.g. scores computed
    in-sample from a knockoff design), tunes lambda0 by averaging the
    pseudo-validation score over ``cv_folds`` independent splits, then runs
    the alternating fit on the full z-vector. With an empty annotation
    matrix the weight updates are skipped and the result is the plain
    z-score knockoff filter. ``cv_errors`` holds negated mean scores, so
    smaller is better as in the individual-level pipelines.
    """
    p = z.p
    if annotations is None:
        annotations = empty_annotations(p)
    if annotations.p != p:
        raise ValueError(f"annotation rows {annotations.p} do not match z length {p}")
    if ld.p != p:
        raise ValueError(f"LD size {ld.p} does not match z length {p}")
    n = z.n
    d = config.resolve_d(annotations.n_annotations)

    seeds = np.random.SeedSequence(config.seed).generate_state(config.cv_folds + 1)
    model = build_knockoff_model(ld, m=1, d_method=config.d_method)
    sigma_m = build_sigma_m(ld, model.d_diag, m=1)
    if z_knock is None:
        zm = sample_knockoff_zscores(z, model, seed=int(seeds[0]))
    else:
        z_knock = np.asarray(z_knock, dtype=np.float64)
        if z_knock.shape != (p,):
            raise ValueError("z_knock must have one entry per covariate")
        zm = np.concatenate([z.z, z_knock])

    gram = sigma_m.matrix
    ones = np.ones(p)
    grid = config.resolve_grid(
        al.lambda_max(
            al.LassoProblem(gram=gram, linear=zm / np.sqrt(n), penalty_weights=ones, lambda0=0.0)
        )
    )
    splits = [
        make_pseudo_split(zm, sigma_m, n, config.frac_train, seed=int(seeds[k + 1]))
        for k in range(config.cv_folds)
    ]

    mean_scores = []
    for lam in grid:
        scores = []
        for split in splits:
            state0 = PenaltyState.initial(
                p, annotations.n_annotations, d=d, tau2=config.tau2, lambda0=float(lam)
            )
            lin_t = split.z_train / np.sqrt(split.n_train)

            def log_post(beta, state, _lin=split.z_train, _nt=split.n_train):
                return _summary_log_posterior(
                    beta, state, gram, _lin, _nt, annotations.values, m=1
                )

            fit, _, _ = _alternate(
                gram, lin_t, annotations, split.n_train, state0, None, config, log_post
            )
            scores.append(
                pseudo_validation_score(fit.beta, split.z_valid, sigma_m, split.n_valid)
            )
        mean_scores.append(float(np.mean(scores)))

    lam_best = float(grid[int(np.argmax(mean_scores))])
    state0 = PenaltyState.initial(
        p, annotations.n_annotations, d=d, tau2=config.tau2, lambda0=lam_best
    )

    def log_post_full(beta, state):
        return _summary_log_posterior(beta, state, gram, zm, n, annotations.values, m=1)

    fit, state, trace = _alternate(
        gram, zm / np.sqrt(n), annotations, n, state0, None, config, log_post_full
    )
    cv_errors = [-s for s in mean_scores]
    return _finish(fit, state, trace, cv_errors, p, config.q)


def ghostknockoff_fit(z: SummaryStats, ld: LdMatrix, config: PipelineConfig,
                      z_knock=None) -> PipelineResult:
    """Plain z-score knockoff filter: the pipeline with no annotations."""
    return annogk_fit(z, ld, None, config, z_knock=z_knock)
