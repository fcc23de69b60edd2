"""Weighted-L1 penalized regression by cyclic coordinate descent.

One engine covers both data modes. A problem is stated in covariance form
(gram matrix + linear term), which is what the individual-level objective
reduces to after precomputing X'X/n and X'y/n, and what the summary mode is
natively: minimize

    0.5 * b' G b - b' l + lambda0 * sum_j phi_j * sum_k |b_{j + k p}|

over coefficient vectors spanning the original covariates and their knockoff
copies. Penalty weights are per covariate: index j and j + k*p always share
phi_j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import NonFiniteObjective

KKT_TOL = 1e-6
SWEEP_TOL = 1e-7
MAX_SWEEPS = 10_000


# The gram matrix is symmetric, so row i doubles as column i; rows are
# contiguous in C order, which keeps the gradient update a unit-stride axpy.

@njit(
    "float64(float64[:, ::1], float64[::1], float64[::1], float64[::1], float64[::1], int64[::1])",
    cache=True,
)
def _pass_over(gram, g, beta, weights, diag, indices):
    """One cyclic pass over ``indices``; returns the max coefficient change."""
    dim = g.size
    max_delta = 0.0
    for pos in range(indices.size):
        i = indices[pos]
        bi = beta[i]
        rho = diag[i] * bi - g[i]
        wi = weights[i]
        if rho > wi:
            new = (rho - wi) / diag[i]
        elif rho < -wi:
            new = (rho + wi) / diag[i]
        else:
            new = 0.0
        delta = new - bi
        if delta != 0.0:
            beta[i] = new
            row = gram[i]
            for t in range(dim):
                g[t] += delta * row[t]
            ad = abs(delta)
            if ad > max_delta:
                max_delta = ad
    return max_delta


@dataclass(frozen=True)
class LassoProblem:
    """Covariance-form weighted lasso problem.

    ``gram`` is (k p) x (k p) symmetric PSD, ``linear`` a (k p)-vector,
    ``penalty_weights`` the positive p-vector phi, shared across the k
    coordinate blocks.
    """

    gram: np.ndarray
    linear: np.ndarray
    penalty_weights: np.ndarray
    lambda0: float

    def __post_init__(self):
        gram = np.ascontiguousarray(self.gram, dtype=np.float64)
        linear = np.ascontiguousarray(self.linear, dtype=np.float64)
        phi = np.ascontiguousarray(self.penalty_weights, dtype=np.float64)
        if gram.shape != (linear.size, linear.size):
            raise ValueError(f"gram shape {gram.shape} does not match linear size {linear.size}")
        if linear.size % phi.size != 0:
            raise ValueError("linear length must be a multiple of the weight count")
        if np.any(phi <= 0) or not np.all(np.isfinite(phi)):
            raise ValueError("penalty weights must be positive and finite")
        if self.lambda0 < 0:
            raise ValueError("lambda0 must be >= 0")
        object.__setattr__(self, "gram", gram)
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "penalty_weights", phi)

    @property
    def p(self) -> int:
        return self.penalty_weights.size

    @property
    def blocks(self) -> int:
        return self.linear.size // self.p

    def coordinate_weights(self) -> np.ndarray:
        """lambda0 * phi expanded to all k*p coordinates."""
        return self.lambda0 * np.tile(self.penalty_weights, self.blocks)


@dataclass(frozen=True)
class FitResult:
    """Solver output: coefficients plus convergence diagnostics.

    ``objective`` is in the covariance parameterization (it differs from the
    residual-sum form by the constant ||y||^2 / 2n). ``objective_trace``
    holds the per-sweep objective values, which are non-increasing.
    """

    beta: np.ndarray
    objective: float
    iterations: int
    converged: bool
    objective_trace: tuple[float, ...] = ()


class _Trace:
    """Objective log with the monotonicity assertion built in."""

    def __init__(self):
        self.values = []
        self.prev = np.inf

    def record(self, obj, sweeps):
        if not np.isfinite(obj):
            raise NonFiniteObjective(f"objective became non-finite at sweep {sweeps}")
        if obj > self.prev + 1e-9 * (1.0 + abs(self.prev)):
            raise AssertionError(f"objective increased: {self.prev} -> {obj}")
        self.prev = obj
        self.values.append(obj)


def solve(problem: LassoProblem, beta0=None, tol=SWEEP_TOL, max_sweeps=MAX_SWEEPS) -> FitResult:
    """Cyclic coordinate descent with an active-set inner loop.

    Each full sweep updates, in ascending order, every coordinate that is
    nonzero or violates its zero-subgradient condition (all other updates are
    provably no-ops); between full sweeps the nonzero coordinates are cycled
    on an extracted submatrix until stable. Convergence: max absolute
    coefficient change per sweep below ``tol`` and no screened violator left.
    """
    gram = problem.gram
    linear = problem.linear
    weights = problem.coordinate_weights()
    diag = np.ascontiguousarray(np.diag(gram))
    if np.any(diag <= 0):
        raise ValueError("gram matrix has a non-positive diagonal entry")
    dim = linear.size

    if beta0 is None:
        beta = np.zeros(dim)
        g = -linear.copy()
    else:
        beta = np.ascontiguousarray(beta0, dtype=np.float64).copy()
        if beta.shape != (dim,):
            raise ValueError("beta0 has wrong length")
        g = gram @ beta - linear

    trace = _Trace()
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        candidates = np.flatnonzero((beta != 0.0) | (np.abs(g) > weights))
        md = _pass_over(gram, g, beta, weights, diag, candidates)
        sweeps += 1
        trace.record(0.5 * float(beta @ (g - linear)) + float(weights @ np.abs(beta)), sweeps)
        if md < tol:
            violators = (beta == 0.0) & (np.abs(g) > weights + tol * diag)
            if not violators.any():
                converged = True
                break
            continue

        active = np.flatnonzero(beta != 0.0)
        if active.size == 0:
            continue
        sub = np.ascontiguousarray(gram[np.ix_(active, active)])
        g_act = np.ascontiguousarray(g[active])
        b_act = np.ascontiguousarray(beta[active])
        b_start = b_act.copy()
        w_act = np.ascontiguousarray(weights[active])
        d_act = np.ascontiguousarray(diag[active])
        lin_act = np.ascontiguousarray(linear[active])
        all_act = np.arange(active.size)
        while sweeps < max_sweeps:
            md = _pass_over(sub, g_act, b_act, w_act, d_act, all_act)
            sweeps += 1
            trace.record(
                0.5 * float(b_act @ (g_act - lin_act)) + float(w_act @ np.abs(b_act)), sweeps
            )
            if md < tol:
                break
        beta[active] = b_act
        delta = b_act - b_start
        if np.any(delta != 0.0):
            g += delta @ gram[active]

    objective = 0.5 * float(beta @ (g - linear)) + float(weights @ np.abs(beta))
    if converged and kkt_violation(problem, beta) > KKT_TOL:
        converged = False
    return FitResult(
        beta=beta,
        objective=objective,
        iterations=sweeps,
        converged=converged,
        objective_trace=tuple(trace.values),
    )


def kkt_violation(problem: LassoProblem, beta) -> float:
    """Stationarity residual, recomputed from scratch (solver-independent).

    For active coordinates this is |grad_i + w_i sign(beta_i)|; for inactive
    ones, max(0, |grad_i| - w_i). Returns the maximum over coordinates.
    """
    beta = np.asarray(beta, dtype=np.float64)
    g = problem.gram @ beta - problem.linear
    weights = problem.coordinate_weights()
    active = beta != 0.0
    viol_active = np.abs(g[active] + weights[active] * np.sign(beta[active]))
    viol_inactive = np.abs(g[~active]) - weights[~active]
    out = 0.0
    if viol_active.size:
        out = max(out, float(viol_active.max()))
    if viol_inactive.size:
        out = max(out, float(max(viol_inactive.max(), 0.0)))
    return out


def individual_problem(y, xx, phi, lambda0) -> LassoProblem:
    """Covariance form of the individual-level objective over [X, X~]."""
    values = xx.values if hasattr(xx, "values") else np.asarray(xx, dtype=np.float64)
    n = values.shape[0]
    return LassoProblem(
        gram=values.T @ values / n,
        linear=values.T @ np.asarray(y, dtype=np.float64) / n,
        penalty_weights=phi,
        lambda0=lambda0,
    )


def fit_individual(y, xx, phi, lambda0, tol=SWEEP_TOL, max_sweeps=MAX_SWEEPS) -> FitResult:
    """Solve (1/2n)||y - [X, X~] b||^2 + lambda0 sum_j phi_j (|b_j| + |b_{j+p}|)."""
    return solve(individual_problem(y, xx, phi, lambda0), tol=tol, max_sweeps=max_sweeps)


def summary_problem(zm, sigma_m, n, phi, lambda0) -> LassoProblem:
    """Covariance form of the summary-statistics objective over Z_M, Sigma_M."""
    gram = sigma_m.matrix if hasattr(sigma_m, "matrix") else np.asarray(sigma_m, dtype=np.float64)
    return LassoProblem(
        gram=gram,
        linear=np.asarray(zm, dtype=np.float64) / np.sqrt(n),
        penalty_weights=phi,
        lambda0=lambda0,
    )


def fit_summary(zm, sigma_m, n, phi, lambda0, tol=SWEEP_TOL, max_sweeps=MAX_SWEEPS) -> FitResult:
    """Solve 0.5 b' Sigma_M b - b' Z_M / sqrt(n) + lambda0 sum phi_j sum_k |b_{j+kp}|."""
    return solve(summary_problem(zm, sigma_m, n, phi, lambda0), tol=tol, max_sweeps=max_sweeps)


def lambda_max(problem: LassoProblem) -> float:
    """Smallest lambda0 at which the solution is identically zero."""
    phi_full = np.tile(problem.penalty_weights, problem.blocks)
    return float(np.max(np.abs(problem.linear) / phi_full))


def fit_path(gram, linear, phi, lambda0_grid, beta0=None, tol=SWEEP_TOL,
             max_sweeps=MAX_SWEEPS) -> list[FitResult]:
    """Warm-started fits along a descending lambda0 grid."""
    results = []
    beta = beta0
    for lam in lambda0_grid:
        problem = LassoProblem(gram=gram, linear=linear, penalty_weights=phi, lambda0=lam)
        res = solve(problem, beta0=beta, tol=tol, max_sweeps=max_sweeps)
        results.append(res)
        beta = res.beta
    return results
