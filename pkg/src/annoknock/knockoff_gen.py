"""Second-order Gaussian knockoff construction.

Builds the diagonal decoupling matrix D, samples knockoff copies of a
standardized design matrix, and samples knockoff z-scores for the
summary-statistics mode. All sampling is a pure function of (inputs, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .data_model import LdMatrix, StandardizedMatrix, standardize
from .errors import NotPositiveDefinite

# Eigenvalues of a nominally-PSD matrix in [-PSD_TOL, 0) are treated as
# numerical noise and clamped to zero; anything more negative is an error.
PSD_TOL = 1e-8


@dataclass(frozen=True)
class KnockoffModel:
    """Everything needed to sample knockoff columns or knockoff z-scores.

    ``mean_map`` is I - Sigma^{-1} D (applied on the right to data rows, on
    the left transposed to z-scores); ``cov_factor`` is C with C'C equal to
    the conditional covariance 2D - D Sigma^{-1} D (M = 1).
    """

    sigma: np.ndarray
    d_diag: np.ndarray
    m: int
    mean_map: np.ndarray
    cov_factor: np.ndarray

    @property
    def p(self) -> int:
        return self.sigma.shape[0]


@dataclass(frozen=True)
class SigmaM:
    """Joint correlation of the original covariates and M knockoff copies.

    (M+1) x (M+1) block grid over p x p: Sigma on the diagonal, Sigma - D off
    the diagonal.
    """

    matrix: np.ndarray
    p: int
    m: int

    def factor(self) -> np.ndarray:
        """A factor F with F F' = matrix (PSD square root, noise-clamped).

        The equicorrelated D puts Sigma_M exactly on the PSD boundary, so a
        Cholesky factorization generically fails; an eigendecomposition with
        small negative eigenvalues clamped to zero is used instead. The
        result is memoized.
        """
        cached = getattr(self, "_factor", None)
        if cached is None:
            cached = _psd_factor(self.matrix)
            object.__setattr__(self, "_factor", cached)
        return cached


def _psd_factor(mat):
    vals, vecs = np.linalg.eigh(mat)
    if vals.min() < -PSD_TOL:
        raise NotPositiveDefinite(
            f"matrix eigenvalue {vals.min():.3e} below tolerance -{PSD_TOL}"
        )
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


def solve_d_equicorrelated(sigma: LdMatrix, m: int = 1) -> np.ndarray:
    """Closed-form equicorrelated D: s_j = min(1, ((M+1)/M) lambda_min)."""
    if m < 1:
        raise ValueError("knockoff count m must be >= 1")
    eigmin = float(np.linalg.eigvalsh(sigma.sigma)[0])
    if eigmin <= 0:
        raise NotPositiveDefinite(f"correlation matrix has lambda_min {eigmin:.3e}")
    s = min(1.0, (m + 1) / m * eigmin)
    return np.full(sigma.p, s)


def solve_d_coordinate(sigma: LdMatrix, m: int = 1, max_iter: int = 10) -> np.ndarray:
    """Coordinate-ascent refinement of the equicorrelated solution.

    Starting from ``solve_d_equicorrelated``, each s_j is pushed toward 1 as
    far as a Cholesky feasibility check on ((M+1)/M) Sigma - D permits
    (bisection, tolerance 1e-6). The objective sum |1 - s_j| never increases
    and the result dominates the equicorrelated start coordinate-wise.
    """
    s = solve_d_equicorrelated(sigma, m)
    scale = (m + 1) / m
    base = scale * sigma.sigma

    def feasible(vec):
        # Jitter keeps boundary solutions (eigenvalue ~ 0) acceptable.
        try:
            np.linalg.cholesky(base - np.diag(vec) + 1e-9 * np.eye(sigma.p))
            return True
        except np.linalg.LinAlgError:
            return False

    if not feasible(s):
        raise NotPositiveDefinite("equicorrelated start infeasible")
    for _ in range(max_iter):
        changed = False
        for j in range(sigma.p):
            if s[j] >= 1.0 - 1e-12:
                continue
            trial = s.copy()
            trial[j] = 1.0
            if feasible(trial):
                s = trial
                changed = True
                continue
            lo, hi = s[j], 1.0
            while hi - lo > 1e-6:
                mid = 0.5 * (lo + hi)
                trial[j] = mid
                if feasible(trial):
                    lo = mid
                else:
                    hi = mid
            if lo > s[j]:
                s[j] = lo
                changed = True
        if not changed:
            break
    return s


def build_knockoff_model(sigma: LdMatrix, m: int = 1, d_method: str = "equi") -> KnockoffModel:
    """Assemble the sampling model for a correlation matrix.

    Sigma^{-1} applications use a Cholesky solve. Conditional-covariance
    eigenvalues in [-1e-8, 0) are clamped to zero; more negative values raise
    ``NotPositiveDefinite``.
    """
    if d_method == "equi":
        s = solve_d_equicorrelated(sigma, m)
    elif d_method == "coordinate":
        s = solve_d_coordinate(sigma, m)
    else:
        raise ValueError(f"unknown d_method '{d_method}'")
    p = sigma.p
    try:
        chol = cho_factor(sigma.sigma, lower=True)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("correlation matrix is not positive definite") from None
    sigma_inv_d = cho_solve(chol, np.diag(s))
    mean_map = np.eye(p) - sigma_inv_d
    cond_cov = 2.0 * np.diag(s) - s[:, None] * sigma_inv_d
    cond_cov = 0.5 * (cond_cov + cond_cov.T)
    factor = _psd_factor(cond_cov)  # F F' = cond_cov
    # Stored as C with C'C = cond_cov so data rows transform as E @ C.
    return KnockoffModel(
        sigma=sigma.sigma, d_diag=s, m=m, mean_map=mean_map, cov_factor=factor.T
    )


def build_sigma_m(sigma: LdMatrix, d: np.ndarray, m: int = 1) -> SigmaM:
    """Block matrix with Sigma diagonal blocks and Sigma - D off-blocks."""
    p = sigma.p
    off = sigma.sigma - np.diag(d)
    out = np.empty(((m + 1) * p, (m + 1) * p))
    for a in range(m + 1):
        for b in range(m + 1):
            out[a * p:(a + 1) * p, b * p:(b + 1) * p] = sigma.sigma if a == b else off
    return SigmaM(matrix=out, p=p, m=m)


def sample_knockoffs(x: StandardizedMatrix, model: KnockoffModel, seed) -> StandardizedMatrix:
    """Sample a second-order Gaussian knockoff copy of ``x``.

    X~ = X (I - Sigma^{-1} D) + E C with C'C = 2D - D Sigma^{-1} D and E
    i.i.d. standard normal under ``seed``. The sampled columns are
    re-standardized before being returned.
    """
    if model.m != 1:
        raise ValueError("column sampling is implemented for m = 1 only")
    rng = np.random.default_rng(seed)
    n, p = x.values.shape
    noise = rng.standard_normal((n, p))
    raw = x.values @ model.mean_map + noise @ model.cov_factor
    return standardize(raw, names=x.col_names)


def sample_knockoff_zscores(z, model: KnockoffModel, seed) -> np.ndarray:
    """Sample knockoff z-scores and return the stacked (M+1)p vector.

    z~ = (I - D Sigma^{-1}) z + C' eps, so that (z, z~) has covariance
    Sigma_M under the exchangeability model.
    """
    if model.m != 1:
        raise ValueError("z-score sampling is implemented for m = 1 only")
    zvec = np.asarray(z.z if hasattr(z, "z") else z, dtype=np.float64)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(model.p)
    z_knock = model.mean_map.T @ zvec + model.cov_factor.T @ eps
    return np.concatenate([zvec, z_knock])
