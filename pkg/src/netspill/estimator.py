"""OLS and two-stage least squares on absorbed data with cluster-robust
inference and weak/over-identification diagnostics.

All estimators expect columns that have already been within-transformed;
the count of absorbed parameters enters the small-sample correction through
``dof_absorbed``.  Covariances use the CR1 factor
G/(G-1) * (N-1)/(N-K_effective) and p-values a t distribution with G-1
degrees of freedom.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import stats

WEAK_F_THRESHOLD = 10.0


class RankError(ValueError):
    """Design matrix is rank deficient; names the offending columns."""


@dataclass
class ClusterSpec:
    """Dense cluster codes over the sample rows."""

    name: str
    codes: np.ndarray
    n_clusters: int


def make_clusters(name: str, codes: np.ndarray) -> ClusterSpec:
    dense, n = _dense(codes)
    return ClusterSpec(name=name, codes=dense, n_clusters=n)


def _dense(codes):
    uniq, dense = np.unique(codes, return_inverse=True)
    return dense.astype(np.int64), int(uniq.size)


@dataclass
class EstimationResult:
    """Coefficients, cluster-robust covariance and sample diagnostics."""

    method: str
    labels: list[str]
    coef: np.ndarray
    cov: np.ndarray
    se: np.ndarray
    tstats: np.ndarray
    pvalues: np.ndarray
    nobs: int
    n_clusters: int
    dof_absorbed: int
    dof_absorbed_approximate: bool
    r2_within: float
    cluster_name: str = ""
    fixed_effects: tuple[str, ...] = ()
    diagnostics: dict = field(default_factory=dict)
    drop_ledger: dict = field(default_factory=dict)
    spec_name: str = ""

    def __getitem__(self, label: str) -> float:
        return float(self.coef[self.labels.index(label)])

    def se_of(self, label: str) -> float:
        return float(self.se[self.labels.index(label)])

    def pvalue_of(self, label: str) -> float:
        return float(self.pvalues[self.labels.index(label)])

    def linear_combination(self, weights: dict[str, float]) -> tuple[float, float]:
        """Point estimate and SE of a linear combination of coefficients."""
        r = np.zeros(len(self.labels))
        for label, w in weights.items():
            r[self.labels.index(label)] = w
        return float(r @ self.coef), float(np.sqrt(r @ self.cov @ r))

    def confidence_interval(self, label: str, level: float = 0.95) -> tuple[float, float]:
        crit = stats.t.ppf(0.5 + level / 2, max(self.n_clusters - 1, 1))
        k = self.labels.index(label)
        return (float(self.coef[k] - crit * self.se[k]),
                float(self.coef[k] + crit * self.se[k]))


def _solve_least_squares(x: np.ndarray, y: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    """Least squares via SVD with a rank check naming collinear columns."""
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    tol = 1e-10 * s[0] if s.size and s[0] > 0 else 0.0
    rank = int((s > tol).sum())
    if rank < x.shape[1]:
        _, _, pivot = scipy.linalg.qr(x, mode="economic", pivoting=True)
        bad = sorted(pivot[rank:])
        names = [labels[j] for j in bad] if labels else [str(j) for j in bad]
        raise RankError(
            f"design matrix is rank deficient (rank {rank} of {x.shape[1]}); "
            f"collinear column(s): {', '.join(names)}.")
    coef = vt.T @ ((u.T @ y) / s)
    xtx_inv = (vt.T / s ** 2) @ vt
    return coef, xtx_inv


def cluster_covariance(x: np.ndarray, resid: np.ndarray, clusters: ClusterSpec,
                       xtx_inv: np.ndarray, dof_absorbed: int) -> np.ndarray:
    """CR1 cluster-robust sandwich for a (possibly projected) regressor block."""
    n, k = x.shape
    scores = x * resid[:, None]
    summed = np.empty((clusters.n_clusters, k))
    for j in range(k):
        summed[:, j] = np.bincount(clusters.codes, weights=scores[:, j],
                                   minlength=clusters.n_clusters)
    meat = summed.T @ summed
    g = clusters.n_clusters
    k_eff = k + dof_absorbed
    correction = g / max(g - 1, 1) * (n - 1) / max(n - k_eff, 1)
    return correction * xtx_inv @ meat @ xtx_inv


def _finish(method, labels, coef, cov, y, resid, clusters, dof_absorbed,
            dof_approx) -> EstimationResult:
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstats = np.where(se > 0, coef / se, np.inf * np.sign(coef))
    dof_t = max(clusters.n_clusters - 1, 1)
    pvalues = 2 * stats.t.sf(np.abs(tstats), dof_t)
    tss = float(y @ y)
    r2 = 1.0 - float(resid @ resid) / tss if tss > 0 else np.nan
    return EstimationResult(
        method=method, labels=list(labels), coef=coef, cov=cov, se=se,
        tstats=tstats, pvalues=pvalues, nobs=y.size,
        n_clusters=clusters.n_clusters, dof_absorbed=dof_absorbed,
        dof_absorbed_approximate=dof_approx, r2_within=r2,
        cluster_name=clusters.name,
    )


def ols(y: np.ndarray, x: np.ndarray, clusters: ClusterSpec, *,
        labels=None, dof_absorbed: int = 0, dof_approx: bool = False) -> EstimationResult:
    """OLS on absorbed columns with CR1 cluster-robust covariance."""
    y = np.asarray(y, dtype=float).ravel()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] != y.size:
        x = x.T
    labels = list(labels) if labels is not None else [f"x{j}" for j in range(x.shape[1])]
    coef, xtx_inv = _solve_least_squares(x, y, labels)
    resid = y - x @ coef
    cov = cluster_covariance(x, resid, clusters, xtx_inv, dof_absorbed)
    return _finish("ols", labels, coef, cov, y, resid, clusters, dof_absorbed, dof_approx)


def tsls(y: np.ndarray, x_endog: np.ndarray, x_exog: np.ndarray | None,
         z: np.ndarray, clusters: ClusterSpec, *, endog_labels=None,
         exog_labels=None, instrument_labels=None, dof_absorbed: int = 0,
         dof_approx: bool = False) -> EstimationResult:
    """Two-stage least squares on absorbed columns.

    Instruments are the excluded columns ``z`` plus the exogenous block.
    The covariance uses the projected regressors with residuals computed
    from the actual (unprojected) regressors; first-stage fitted values are
    never reused for the error variance.  When over-identified, the Hansen J
    statistic is computed from the efficient two-step GMM update.
    """
    y = np.asarray(y, dtype=float).ravel()
    x_endog = np.atleast_2d(np.asarray(x_endog, dtype=float))
    if x_endog.shape[0] != y.size:
        x_endog = x_endog.T
    n, k_end = x_endog.shape
    if x_exog is None or (hasattr(x_exog, "size") and x_exog.size == 0):
        x_exog = np.empty((n, 0))
    x_exog = np.atleast_2d(np.asarray(x_exog, dtype=float))
    if x_exog.shape[0] != n:
        x_exog = x_exog.T
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[0] != n:
        z = z.T
    if z.shape[1] < k_end:
        raise ValueError(
            f"under-identified: {z.shape[1]} excluded instrument(s) for {k_end} "
            f"endogenous regressor(s).")

    endog_labels = list(endog_labels) if endog_labels else [f"endog{j}" for j in range(k_end)]
    exog_labels = list(exog_labels) if exog_labels else [f"exog{j}" for j in range(x_exog.shape[1])]
    instrument_labels = (list(instrument_labels) if instrument_labels
                         else [f"z{j}" for j in range(z.shape[1])])
    labels = endog_labels + exog_labels

    w = np.hstack([z, x_exog])
    _, _ = _solve_least_squares(w, y, instrument_labels + exog_labels)  # rank check
    x = np.hstack([x_endog, x_exog])
    # first stage: project the endogenous block on the full instrument set
    gamma = np.linalg.lstsq(w, x_endog, rcond=None)[0]
    x_hat = np.hstack([w @ gamma, x_exog])
    coef, xtx_inv = _solve_least_squares(x_hat, y, labels)
    resid = y - x @ coef
    cov = cluster_covariance(x_hat, resid, clusters, xtx_inv, dof_absorbed)
    result = _finish("tsls", labels, coef, cov, y, resid, clusters, dof_absorbed, dof_approx)
    result.diagnostics["n_endogenous"] = k_end
    result.diagnostics["n_instruments"] = z.shape[1]

    fs = first_stage_diagnostics(x_endog, z, x_exog, clusters,
                                 endog_labels=endog_labels)
    result.diagnostics.update(fs)
    min_f = min(fs["first_stage_F"].values())
    if min_f < WEAK_F_THRESHOLD:
        result.diagnostics["weak_instruments"] = True
        warnings.warn(
            f"weak instruments: smallest first-stage F = {min_f:.2f} < {WEAK_F_THRESHOLD}.")
    else:
        result.diagnostics["weak_instruments"] = False

    if z.shape[1] > k_end:
        e_gmm = _two_step_gmm_residuals(y, x, w, clusters, resid)
        j_stat, j_p = hansen_j(e_gmm, w, clusters, n_endogenous=k_end,
                               n_exogenous=x_exog.shape[1])
    else:
        j_stat, j_p = hansen_j(resid, w, clusters, n_endogenous=k_end,
                               n_exogenous=x_exog.shape[1])
    result.diagnostics["hansen_j"] = j_stat
    result.diagnostics["hansen_j_p"] = j_p
    result.diagnostics["hansen_j_dof"] = z.shape[1] - k_end
    return result


def _moment_covariance(w: np.ndarray, resid: np.ndarray, clusters: ClusterSpec) -> np.ndarray:
    scores = w * resid[:, None]
    summed = np.empty((clusters.n_clusters, w.shape[1]))
    for j in range(w.shape[1]):
        summed[:, j] = np.bincount(clusters.codes, weights=scores[:, j],
                                   minlength=clusters.n_clusters)
    return summed.T @ summed / resid.size


def _two_step_gmm_residuals(y, x, w, clusters, resid_2sls) -> np.ndarray:
    """Efficient two-step GMM update used only to evaluate the J statistic."""
    omega = _moment_covariance(w, resid_2sls, clusters)
    omega_inv = np.linalg.pinv(omega)
    wx = w.T @ x
    wy = w.T @ y
    beta = np.linalg.solve(wx.T @ omega_inv @ wx, wx.T @ omega_inv @ wy)
    return y - x @ beta


def hansen_j(resid: np.ndarray, instruments: np.ndarray, clusters: ClusterSpec,
             *, n_endogenous: int, n_exogenous: int = 0) -> tuple[float, float]:
    """Over-identification J statistic with cluster-aggregated moments.

    J = N ghat' OmegaHat^{-1} ghat where ghat averages the instrument-residual
    moments and OmegaHat is their cluster-robust covariance.  The reference
    distribution is chi-square with (#excluded instruments - #endogenous)
    degrees of freedom; a just-identified model returns (0.0, 1.0).
    """
    resid = np.asarray(resid, dtype=float).ravel()
    w = np.atleast_2d(np.asarray(instruments, dtype=float))
    if w.shape[0] != resid.size:
        w = w.T
    dof = (w.shape[1] - n_exogenous) - n_endogenous
    if dof < 0:
        raise ValueError("under-identified model has no J statistic.")
    if dof == 0:
        return 0.0, 1.0
    n = resid.size
    ghat = w.T @ resid / n
    omega = _moment_covariance(w, resid, clusters)
    stat = float(n * ghat @ np.linalg.pinv(omega) @ ghat)
    return stat, float(stats.chi2.sf(stat, dof))


def first_stage_diagnostics(x_endog: np.ndarray, z: np.ndarray,
                            x_exog: np.ndarray | None, clusters: ClusterSpec,
                            *, endog_labels=None) -> dict:
    """Per-endogenous-regressor cluster-robust F on the excluded instruments
    plus the homoskedastic Cragg-Donald minimum-eigenvalue Wald statistic."""
    x_endog = np.atleast_2d(np.asarray(x_endog, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if x_endog.shape[0] != z.shape[0] and x_endog.shape[1] == z.shape[0]:
        x_endog = x_endog.T
    n = x_endog.shape[0]
    if x_exog is None:
        x_exog = np.empty((n, 0))
    x_exog = np.atleast_2d(np.asarray(x_exog, dtype=float))
    if x_exog.shape[0] != n:
        x_exog = x_exog.T
    endog_labels = (list(endog_labels) if endog_labels
                    else [f"endog{j}" for j in range(x_endog.shape[1])])

    w = np.hstack([z, x_exog])
    m = z.shape[1]
    per_f = {}
    for j in range(x_endog.shape[1]):
        xj = x_endog[:, j]
        coef, wtw_inv = _solve_least_squares(w, xj, None)
        resid = xj - w @ coef
        cov = cluster_covariance(w, resid, clusters, wtw_inv, 0)
        sub = coef[:m]
        sub_cov = cov[:m, :m]
        wald = float(sub @ np.linalg.solve(sub_cov, sub))
        per_f[endog_labels[j]] = min(wald / m, 1e12)

    # Cragg-Donald: partial out exogenous columns, then the smallest
    # eigenvalue of the concentration matrix scaled to an F statistic
    if x_exog.shape[1]:
        proj = np.linalg.lstsq(x_exog, np.hstack([x_endog, z]), rcond=None)[0]
        purged = np.hstack([x_endog, z]) - x_exog @ proj
        xe = purged[:, : x_endog.shape[1]]
        ze = purged[:, x_endog.shape[1]:]
    else:
        xe, ze = x_endog, z
    gz = np.linalg.lstsq(ze, xe, rcond=None)[0]
    fitted = ze @ gz
    v = xe - fitted
    dof_resid = max(n - m - x_exog.shape[1], 1)
    sigma_vv = v.T @ v / dof_resid
    try:
        chol = np.linalg.cholesky(sigma_vv)
        mat = np.linalg.solve(chol, np.linalg.solve(chol, fitted.T @ fitted).T)
        cd = float(np.min(np.linalg.eigvalsh(mat)) / m)
    except np.linalg.LinAlgError:
        cd = np.nan
    out = {"first_stage_F": per_f,
           "cragg_donald": min(cd, 1e12) if np.isfinite(cd) else cd}
    # Anderson canonical-correlation LM as the (non-robust) analog of the
    # under-identification rank statistic
    try:
        ccs = scipy.linalg.eigh(xe.T @ fitted, xe.T @ xe, eigvals_only=True)
        r2_min = float(np.clip(np.min(ccs), 0.0, 1.0))
        lm = n * r2_min
        out["anderson_lm"] = lm
        out["anderson_lm_p"] = float(stats.chi2.sf(lm, m - x_endog.shape[1] + 1))
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        pass
    return out
