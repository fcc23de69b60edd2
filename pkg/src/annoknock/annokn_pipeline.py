"""Individual-level pipelines: annotation-informed knockoffs and the lite variant.

Both alternate two maximization steps over a shared log posterior: a weighted
lasso solve for the coefficients given the penalty multipliers, and a Newton
update of the annotation weights given the coefficients. The full pipeline
(`annokn_fit`) runs the alternating loop at every lambda0 on a grid and picks
the grid point by cross-validation; the lite variant (`annokn_lite_fit`)
tunes lambda0 on the plain lasso first, runs one alternating loop, then
re-tunes with the learned multipliers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import adaptive_lasso as al
from .anno_weights import PenaltyState, maximize_lambda
from .data_model import AnnotationMatrix, empty_annotations, standardize_vector
from .errors import DegenerateCV
from .knockoff_filter import FeatureStats, SelectionResult, knockoff_threshold, lcd_stats

TRACE_TOL = 1e-6


@dataclass(frozen=True)
class PipelineConfig:
    """Shared knobs for the fitting pipelines.

    ``lambda0_grid`` may be given explicitly (strictly positive, sorted
    descending); otherwise a log-spaced grid of ``grid_size`` points from
    lambda_max down to ``grid_min_frac * lambda_max`` is built per dataset.
    ``d`` defaults to sqrt(L) when unset. ``frac_train`` only matters for the
    summary-statistics pipeline.
    """

    lambda0_grid: tuple[float, ...] | None = None
    grid_size: int = 20
    grid_min_frac: float = 0.01
    cv_folds: int = 5
    d: float | None = None
    tau2: float = 1.0
    max_outer_iter: int = 50
    outer_tol: float = 1e-4
    seed: int = 0
    q: float = 0.2
    frac_train: float = 0.8
    d_method: str = "equi"
    # Inner-solve budget for pipeline fits. Learned multipliers can drive
    # penalties to ~0 on a large correlated block, where coordinate descent
    # to the engine's default 1e-7 costs tens of thousands of sweeps per fit
    # without changing the statistics; pipeline fits therefore run inexact
    # (the standalone fit_* operations keep the engine defaults).
    solver_tol: float = 1e-4
    solver_max_sweeps: int = 300

    def __post_init__(self):
        if self.lambda0_grid is not None:
            grid = tuple(float(v) for v in self.lambda0_grid)
            if not grid:
                raise ValueError("lambda0 grid must be non-empty")
            if any(v <= 0 for v in grid):
                raise ValueError("lambda0 grid must be strictly positive")
            if any(nxt >= cur for nxt, cur in zip(grid[1:], grid)):
                raise ValueError("lambda0 grid must be sorted descending")
            object.__setattr__(self, "lambda0_grid", grid)
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        if not (0.0 < self.frac_train < 1.0):
            raise ValueError("frac_train must be in (0, 1)")

    def resolve_grid(self, lam_max: float) -> np.ndarray:
        if self.lambda0_grid is not None:
            return np.array(self.lambda0_grid)
        lam_max = max(lam_max, 1e-12)
        return np.geomspace(lam_max, self.grid_min_frac * lam_max, self.grid_size)

    def resolve_d(self, n_annotations: int) -> float:
        if self.d is not None:
            return float(self.d)
        return float(np.sqrt(max(n_annotations, 1)))


@dataclass(frozen=True)
class PipelineResult:
    """Final fit, learned penalties, selection, and diagnostics.

    ``cv_errors`` holds the per-lambda0 tuning criterion (cross-validation
    error here; negated pseudo-validation score in the summary pipeline), and
    ``trace`` the per-outer-iteration log-posterior values of the winning
    alternating run (non-decreasing within 1e-6).
    """

    fit: al.FitResult
    penalty: PenaltyState
    selection: SelectionResult
    stats: FeatureStats
    cv_errors: tuple[float, ...]
    trace: tuple[float, ...]


class CvPlan:
    """Seeded fold partition with precomputed per-fold gram blocks.

    Folds are drawn once from a seeded permutation so cross-validation errors
    are comparable across a lambda0 grid; training grams are obtained by
    subtracting each held-out block from the full gram.
    """

    def __init__(self, y, xx_values, folds, seed):
        n = xx_values.shape[0]
        if folds < 2:
            raise DegenerateCV("need at least 2 folds")
        if n // folds < 2:
            raise DegenerateCV(f"fold of {n} samples into {folds} folds leaves < 2 per fold")
        perm = np.random.default_rng(seed).permutation(n)
        self.fold_indices = [np.sort(part) for part in np.array_split(perm, folds)]
        self.n = n
        self.y = y
        full_gram = xx_values.T @ xx_values
        full_lin = xx_values.T @ y
        self.folds = []
        for idx in self.fold_indices:
            xf = xx_values[idx]
            yf = y[idx]
            n_train = n - idx.size
            self.folds.append(
                (
                    (full_gram - xf.T @ xf) / n_train,
                    (full_lin - xf.T @ yf) / n_train,
                    xf,
                    yf,
                )
            )

    def errors_path(self, phi, grid, tol=al.SWEEP_TOL, max_sweeps=al.MAX_SWEEPS) -> np.ndarray:
        """Mean held-out squared error for each lambda0 (warm-started per fold)."""
        total = np.zeros(len(grid))
        for gram, lin, xf, yf in self.folds:
            beta = None
            for gi, lam in enumerate(grid):
                problem = al.LassoProblem(gram=gram, linear=lin, penalty_weights=phi, lambda0=lam)
                res = al.solve(problem, beta0=beta, tol=tol, max_sweeps=max_sweeps)
                beta = res.beta
                resid = yf - xf @ beta
                total[gi] += float(resid @ resid)
        return total / self.n

    def error(self, phi, lambda0, tol=al.SWEEP_TOL, max_sweeps=al.MAX_SWEEPS) -> float:
        return float(self.errors_path(phi, [lambda0], tol=tol, max_sweeps=max_sweeps)[0])


def cross_validate(y, xx, phi, lambda0, folds=5, seed=0) -> float:
    """Mean held-out squared prediction error with ``phi`` held fixed."""
    values = xx.values if hasattr(xx, "values") else np.asarray(xx, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return CvPlan(y, values, folds, seed).error(np.asarray(phi, dtype=np.float64), lambda0)


def _ridge_init(gram, linear):
    # OLS is ill-posed for 2p >= n; this ridge surrogate matches OLS when the
    # gram is well-conditioned and is defined always.
    dim = gram.shape[0]
    rho = 1e-3 * np.trace(gram) / dim
    chol = cho_factor(gram + rho * np.eye(dim), lower=True)
    return cho_solve(chol, linear)


def _individual_log_posterior(beta, state, gram, linear, y_sq, n, anno_values):
    resid_term = -0.5 * (y_sq - 2.0 * n * float(beta @ linear) + n * float(beta @ (gram @ beta)))
    p = state.phi.size
    log_phi = (anno_values @ state.lambda_anno) / state.d if anno_values.shape[1] else np.zeros(p)
    b = np.abs(beta[:p]) + np.abs(beta[p:])
    return (
        resid_term
        + 2.0 * float(log_phi.sum())
        - n * state.lambda0 * float(state.phi @ b)
        - float(state.lambda_anno @ state.lambda_anno) / (2.0 * state.tau2)
    )


def _alternate(gram, linear, annotations, n, state, beta0, config, log_posterior):
    """Alternating maximization at a fixed lambda0.

    Returns (fit, state, trace). The trace records the log posterior after
    each outer iteration and is checked to be non-decreasing within 1e-6.
    Exits when both coefficient and weight updates fall below the outer
    tolerance, when the iteration cap is hit, or when the log posterior
    stalls (inexact inner solves put a noise floor under the coefficient
    change, so stalled ascent is the sharper signal that nothing moves).
    """
    anno_values = annotations.values
    p = state.phi.size
    beta = beta0
    trace = []
    fit = None
    for _ in range(config.max_outer_iter):
        problem = al.LassoProblem(
            gram=gram, linear=linear, penalty_weights=state.phi, lambda0=state.lambda0
        )
        fit = al.solve(
            problem, beta0=beta, tol=config.solver_tol, max_sweeps=config.solver_max_sweeps
        )
        blocks = fit.beta.size // p
        b = np.abs(fit.beta.reshape(blocks, p)).sum(axis=0)
        new_state = maximize_lambda(state, b, anno_values, n)
        lp = log_posterior(fit.beta, new_state)
        if trace and lp < trace[-1] - TRACE_TOL * (1.0 + abs(trace[-1])):
            raise AssertionError(f"log posterior decreased: {trace[-1]} -> {lp}")
        stalled = trace and lp - trace[-1] < 1e-7 * (1.0 + abs(trace[-1]))
        trace.append(lp)
        d_beta = np.max(np.abs(fit.beta - beta)) if beta is not None else np.inf
        d_lam = (
            np.max(np.abs(new_state.lambda_anno - state.lambda_anno))
            if state.lambda_anno.size
            else 0.0
        )
        beta = fit.beta
        state = new_state
        if d_lam < config.outer_tol and (d_beta < config.outer_tol or stalled):
            break
    return fit, state, tuple(trace)


def _prepare(y, x, x_knock, annotations):
    y = standardize_vector(np.asarray(y, dtype=np.float64))
    xv = x.values if hasattr(x, "values") else np.asarray(x, dtype=np.float64)
    kv = x_knock.values if hasattr(x_knock, "values") else np.asarray(x_knock, dtype=np.float64)
    if xv.shape != kv.shape:
        raise ValueError(f"design {xv.shape} and knockoff {kv.shape} shapes differ")
    if annotations is None:
        annotations = empty_annotations(xv.shape[1])
    if annotations.p != xv.shape[1]:
        raise ValueError(
            f"annotation rows {annotations.p} do not match covariate count {xv.shape[1]}"
        )
    xx = np.hstack([xv, kv])
    n = xx.shape[0]
    gram = xx.T @ xx / n
    linear = xx.T @ y / n
    return y, xx, gram, linear, annotations


def _finish(fit, state, trace, cv_errors, p, q):
    stats = lcd_stats(fit, p)
    selection = knockoff_threshold(stats, q)
    return PipelineResult(
        fit=fit,
        penalty=state,
        selection=selection,
        stats=stats,
        cv_errors=tuple(float(c) for c in cv_errors),
        trace=trace,
    )


def annokn_fit(y, x, x_knock, annotations, config: PipelineConfig) -> PipelineResult:
    """Full pipeline: alternating fit at every lambda0, winner by CV error.

    For each grid point the multipliers start at 1 and the coefficients at a
    ridge surrogate; the alternating loop runs to convergence, then the
    cross-validation error of the weighted lasso with the learned multipliers
    is computed on seeded folds (multipliers held fixed, coefficients refit
    per fold). The (lambda0, phi) pair with the smallest CV error is refit on
    the full data and pushed through the selection filter.
    """
    y, xx, gram, linear, annotations = _prepare(y, x, x_knock, annotations)
    n, p = xx.shape[0], xx.shape[1] // 2
    y_sq = float(y @ y)
    d = config.resolve_d(annotations.n_annotations)

    grid = config.resolve_grid(
        al.lambda_max(al.LassoProblem(gram=gram, linear=linear,
                                      penalty_weights=np.ones(p), lambda0=0.0))
    )
    ridge_beta = _ridge_init(gram, linear)
    plan = CvPlan(y, xx, config.cv_folds, config.seed)

    def log_posterior(beta, state):
        return _individual_log_posterior(beta, state, gram, linear, y_sq, n, annotations.values)

    cv_errors = []
    best = None
    for lam in grid:
        state0 = PenaltyState.initial(
            p, annotations.n_annotations, d=d, tau2=config.tau2, lambda0=float(lam)
        )
        fit, state, trace = _alternate(
            gram, linear, annotations, n, state0, ridge_beta.copy(), config, log_posterior
        )
        err = plan.error(state.phi, float(lam), tol=config.solver_tol,
                         max_sweeps=config.solver_max_sweeps)
        cv_errors.append(err)
        if best is None or err < best[0]:
            best = (err, state, trace, fit.beta)

    _, state, trace, warm = best
    problem = al.LassoProblem(
        gram=gram, linear=linear, penalty_weights=state.phi, lambda0=state.lambda0
    )
    fit = al.solve(problem, beta0=warm, tol=config.solver_tol,
                   max_sweeps=config.solver_max_sweeps)
    return _finish(fit, state, trace, cv_errors, p, config.q)


def annokn_lite_fit(y, x, x_knock, annotations, config: PipelineConfig) -> PipelineResult:
    """Lite pipeline: tune lambda0 once on the plain lasso, one alternating
    loop, re-tune with the learned multipliers, final fit."""
    y, xx, gram, linear, annotations = _prepare(y, x, x_knock, annotations)
    n, p = xx.shape[0], xx.shape[1] // 2
    y_sq = float(y @ y)
    d = config.resolve_d(annotations.n_annotations)
    ones = np.ones(p)

    grid = config.resolve_grid(
        al.lambda_max(al.LassoProblem(gram=gram, linear=linear, penalty_weights=ones, lambda0=0.0))
    )
    plan = CvPlan(y, xx, config.cv_folds, config.seed)

    stage1 = plan.errors_path(ones, grid, tol=config.solver_tol,
                              max_sweeps=config.solver_max_sweeps)
    lam1 = float(grid[int(np.argmin(stage1))])

    def log_posterior(beta, state):
        return _individual_log_posterior(beta, state, gram, linear, y_sq, n, annotations.values)

    state0 = PenaltyState.initial(
        p, annotations.n_annotations, d=d, tau2=config.tau2, lambda0=lam1
    )
    fit, state, trace = _alternate(
        gram, linear, annotations, n, state0, None, config, log_posterior
    )

    stage2 = plan.errors_path(state.phi, grid, tol=config.solver_tol,
                              max_sweeps=config.solver_max_sweeps)
    lam2 = float(grid[int(np.argmin(stage2))])
    state = replace(state, lambda0=lam2)
    problem = al.LassoProblem(gram=gram, linear=linear, penalty_weights=state.phi, lambda0=lam2)
    fit = al.solve(problem, beta0=fit.beta, tol=config.solver_tol,
                   max_sweeps=config.solver_max_sweeps)
    return _finish(fit, state, trace, stage2, p, config.q)


def plain_knockoff_fit(y, x, x_knock, config: PipelineConfig) -> PipelineResult:
    """Cross-validated lasso knockoffs with no annotation information."""
    y, xx, gram, linear, annotations = _prepare(y, x, x_knock, None)
    n, p = xx.shape[0], xx.shape[1] // 2
    ones = np.ones(p)
    grid = config.resolve_grid(
        al.lambda_max(al.LassoProblem(gram=gram, linear=linear, penalty_weights=ones, lambda0=0.0))
    )
    plan = CvPlan(y, xx, config.cv_folds, config.seed)
    errors = plan.errors_path(ones, grid, tol=config.solver_tol,
                              max_sweeps=config.solver_max_sweeps)
    lam = float(grid[int(np.argmin(errors))])
    state = PenaltyState.initial(p, 0, d=config.resolve_d(0), tau2=config.tau2, lambda0=lam)
    problem = al.LassoProblem(gram=gram, linear=linear, penalty_weights=ones, lambda0=lam)
    fit = al.solve(problem, tol=config.solver_tol, max_sweeps=config.solver_max_sweeps)
    return _finish(fit, state, (), errors, p, config.q)
