"""Test statistics, p-values, FDR estimation, and threshold selection.

Three families of t-scores share the same cross-sectional statistic theta:
the original scores standardize theta by the total residual variance, the
oracle scores subtract the true factor contribution, and the adjusted
scores subtract the estimated one. Two-sided p-values feed an estimated
false discovery rate whose largest feasible threshold defines the
rejection set; the classic step-up baseline is the special case of a unit
null-proportion estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import (
    BadSpecError,
    MissingOracleError,
    MissingTruthError,
    ZeroVarianceError,
)
from .factors import (
    FactorConfig,
    FactorEstimate,
    estimate_factors,
    estimate_zeta,
    pca_top_k,
    residual_panel,
    select_q,
)
from .model import Dataset, FactorModel, HypothesisSplit
from .regression import ThetaDecomposition, compute_theta, decompose_theta_oracle, residualize

METHODS = ("ori", "ora", "fatdw", "adafat", "fatld", "bh")

VARIANCE_FLOOR = 1e-14


@dataclass(frozen=True)
class TestConfig:
    """Settings shared by every testing procedure.

    ``tau`` is the target FDR level, ``nu`` the null-proportion tuning
    parameter, ``kappa``/``penalty`` configure factor-count selection,
    ``clip_pi0`` caps the estimated null proportion at 1, and ``max_iter``
    bounds the adaptive refinement.
    """

    tau: float = 0.1
    nu: float = 0.5
    kappa: int = 8
    penalty: str = "bai-ng"
    clip_pi0: bool = False
    max_iter: int = 50

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise BadSpecError(f"tau must be in (0, 1), got {self.tau}")
        if not 0.0 <= self.nu < 1.0:
            raise BadSpecError(f"nu must be in [0, 1), got {self.nu}")
        if self.max_iter < 1:
            raise BadSpecError("max_iter must be at least 1")

    def factor_config(self) -> FactorConfig:
        return FactorConfig(kappa=self.kappa, penalty=self.penalty)


@dataclass(frozen=True)
class TestOutcome:
    """Result of one multiple-testing procedure on one dataset."""

    method: str
    t_scores: np.ndarray
    p_values: np.ndarray
    threshold: float
    rejected: np.ndarray
    fdr_estimate: float
    pi0_hat: float
    nu: float
    tau: float

    def to_json_dict(self, emit_pvalues: bool = False) -> dict:
        out = {
            "schema_version": 1,
            "method": self.method,
            "tau": self.tau,
            "nu": self.nu,
            "threshold": self.threshold,
            "pi0_hat": self.pi0_hat,
            "fdr_estimate": self.fdr_estimate,
            "m": int(self.p_values.shape[0]),
            "n_rejected": int(self.rejected.size),
            "rejected": [int(j) for j in self.rejected],
        }
        if emit_pvalues:
            out["p_values"] = [float(p) for p in self.p_values]
        return out


@dataclass(frozen=True)
class ErrorMetrics:
    """Discovery counts and the derived proportion metrics."""

    V: int
    S: int
    R: int
    FDP: float
    POW: float


def t_original(data: Dataset) -> np.ndarray:
    """Original t-scores: theta standardized by the total residual variance.

    The per-test variance is the mean square of the panel residualized by
    the intercept-augmented design, which estimates the variance of the
    combined factor-plus-idiosyncratic residual.

    Raises
    ------
    ZeroVarianceError
        If any column variance falls at or below 1e-14.
    """
    panel = residual_panel(data)
    lam = np.einsum("ij,ij->j", panel, panel) / data.n
    if np.any(lam <= VARIANCE_FLOOR):
        raise ZeroVarianceError("a test column has zero residual variance")
    return compute_theta(data).theta / np.sqrt(lam)


def t_oracle(theta: ThetaDecomposition, truth: FactorModel) -> np.ndarray:
    """Oracle t-scores using the true loadings, drift, and variances."""
    if theta.zeta is None:
        raise MissingOracleError("theta carries no ground-truth zeta")
    sigma = np.diag(truth.Sigma_eps)
    return (theta.theta - truth.Gamma.T @ theta.zeta) / np.sqrt(sigma)


def t_adjusted(
    theta: ThetaDecomposition, estimate: FactorEstimate, zeta_hat
) -> np.ndarray:
    """Factor-adjusted t-scores using estimated loadings and drift."""
    zeta_hat = np.asarray(zeta_hat, dtype=float)
    lam = estimate.Lambda_eps_hat
    if np.any(lam <= VARIANCE_FLOOR):
        raise ZeroVarianceError("an estimated idiosyncratic variance is zero")
    return (theta.theta - estimate.Gamma_hat.T @ zeta_hat) / np.sqrt(lam)


def p_values(t) -> np.ndarray:
    """Two-sided standard normal p-values, p = 2 Phi(-|t|).

    Evaluated through the complementary error function (absolute error well
    below 1e-12) and floored at the smallest positive normal double so the
    result stays inside (0, 1] under extreme scores.
    """
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("t-scores must be finite")
    p = erfc(np.abs(t) / np.sqrt(2.0))
    return np.maximum(p, np.finfo(float).tiny)


def count_processes(p, t: float, split: HypothesisSplit | None = None) -> ErrorMetrics:
    """Discovery counts at threshold ``t`` given the true hypothesis split.

    ``t`` may be 0, meaning an empty rejection set. The counts satisfy
    V + S = R; FDP = V / max(R, 1) and POW = S / max(m1, 1).

    Raises
    ------
    MissingTruthError
        If ``split`` is absent (only R is computable without truth).
    """
    if split is None:
        raise MissingTruthError(
            "false/true discovery counts require the simulation truth split"
        )
    p = np.asarray(p, dtype=float)
    reject = p <= t
    R = int(reject.sum())
    V = int(reject[split.null_set].sum())
    S = int(reject[split.alt_set].sum())
    return ErrorMetrics(
        V=V, S=S, R=R, FDP=V / max(R, 1), POW=S / max(split.m1, 1)
    )


def storey_pi0(p, nu: float, clip_pi0: bool = False) -> float:
    """Estimated proportion of true nulls, [m - R(nu)] / [(1 - nu) m]."""
    p = np.asarray(p, dtype=float)
    if not 0.0 <= nu < 1.0:
        raise ValueError(f"nu must be in [0, 1), got {nu}")
    m = p.shape[0]
    pi0 = (m - int((p <= nu).sum())) / ((1.0 - nu) * m)
    return min(pi0, 1.0) if clip_pi0 else pi0


def storey_fdr_hat(p, nu: float, t: float, clip_pi0: bool = False) -> tuple[float, float]:
    """Plug-in FDR estimate at threshold ``t`` with tuning parameter ``nu``.

    Returns ``(fdr_hat, pi0_hat)`` where
    fdr_hat = pi0_hat * m * t / max(R(t), 1). The null-proportion estimate
    may exceed 1 and is kept as computed unless ``clip_pi0`` is set.
    ``t = 0`` yields an estimate of 0 (empty rejection set).
    """
    p = np.asarray(p, dtype=float)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must be in [0, 1], got {t}")
    pi0 = storey_pi0(p, nu, clip_pi0)
    m = p.shape[0]
    R = int((p <= t).sum())
    return pi0 * m * t / max(R, 1), pi0


def threshold_star(p, nu: float, tau: float, clip_pi0: bool = False) -> float:
    """Largest threshold whose estimated FDR stays at or below ``tau``.

    The search runs over the sorted distinct p-values, where every
    achievable rejection set changes; between those points the estimate is
    linear in t with a fixed denominator, so the supremum restricted to
    achievable sets is attained at a p-value. Returns 0.0 (reject nothing)
    when no candidate is feasible.
    """
    if tau <= 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    p = np.asarray(p, dtype=float)
    m = p.shape[0]
    pi0 = storey_pi0(p, nu, clip_pi0)
    p_sorted = np.sort(p)
    candidates = np.unique(p_sorted)
    counts = np.searchsorted(p_sorted, candidates, side="right")
    fdr = pi0 * m * candidates / np.maximum(counts, 1)
    feasible = np.flatnonzero(fdr <= tau)
    if feasible.size == 0:
        return 0.0
    return float(candidates[feasible[-1]])


def bh_procedure(p, tau: float) -> np.ndarray:
    """Classic step-up rejection set at level ``tau``.

    Rejects the k* smallest p-values where k* is the largest k with
    p_(k) <= k tau / m; returns sorted indices (possibly empty).
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    p = np.asarray(p, dtype=float)
    m = p.shape[0]
    order = np.argsort(p, kind="stable")
    passed = np.flatnonzero(p[order] <= tau * np.arange(1, m + 1) / m)
    if passed.size == 0:
        return np.empty(0, dtype=np.intp)
    return np.sort(order[: passed[-1] + 1])


def _finish_outcome(
    method: str, t: np.ndarray, config: TestConfig, nu: float
) -> TestOutcome:
    p = p_values(t)
    t_star = threshold_star(p, nu, config.tau, config.clip_pi0)
    rejected = np.flatnonzero(p <= t_star) if t_star > 0 else np.empty(0, dtype=np.intp)
    fdr_hat, pi0_hat = storey_fdr_hat(p, nu, t_star, config.clip_pi0)
    return TestOutcome(
        method=method,
        t_scores=t,
        p_values=p,
        threshold=t_star,
        rejected=rejected,
        fdr_estimate=fdr_hat,
        pi0_hat=pi0_hat,
        nu=nu,
        tau=config.tau,
    )


def _t_factor_ld(data: Dataset, config: TestConfig) -> np.ndarray:
    # Baseline variant: eigenvectors come from the panel projected by X
    # only, so the intercept direction stays in the panel, and the drift
    # regression skips the cross-sectional centering. Any common intercept
    # component then contaminates the adjustment. The factor count is
    # selected as in the main procedure (on the intercept-projected panel);
    # only the decomposition differs.
    panel = residualize(data.Y, data.X) if data.p > 0 else np.asarray(data.Y, dtype=float)
    fc = config.factor_config()
    q_hat = select_q(residual_panel(data), fc)
    Z_hat, Gamma_hat, _ = pca_top_k(panel, q_hat)
    E_hat = panel - Z_hat @ Gamma_hat
    lam = np.einsum("ij,ij->j", E_hat, E_hat) / data.n
    if np.any(lam <= VARIANCE_FLOOR):
        raise ZeroVarianceError("an estimated idiosyncratic variance is zero")
    theta = compute_theta(data)
    gram = Gamma_hat @ Gamma_hat.T
    w = np.linalg.eigvalsh(gram)
    if w[-1] <= 0.0 or w[0] <= w[-1] / 1e12:
        from .errors import SingularGramError

        raise SingularGramError("loading Gram matrix is singular at condition 1e12")
    zeta_hat = np.linalg.solve(gram, Gamma_hat @ theta.theta)
    return (theta.theta - Gamma_hat.T @ zeta_hat) / np.sqrt(lam)


def run_procedure(
    method: str,
    data: Dataset,
    config: TestConfig = TestConfig(),
    truth: FactorModel | None = None,
    Z=None,
    E=None,
) -> TestOutcome:
    """Run one named procedure end to end and return its outcome.

    Methods: ``ori`` (original scores), ``ora`` (oracle scores; requires
    ``truth`` plus the realized ``Z`` and ``E``), ``fatdw`` (factor-adjusted
    scores with the full-set drift regression), ``adafat`` (iterative
    refinement on an estimated null subset), ``fatld`` (baseline without
    intercept projection or centering), and ``bh`` (original scores with the
    step-up threshold, i.e. nu = 0).
    """
    method = method.lower()
    if method not in METHODS:
        raise BadSpecError(f"unknown method {method!r}; known: {METHODS}")
    if method == "ori":
        return _finish_outcome("ori", t_original(data), config, config.nu)
    if method == "bh":
        return _finish_outcome("bh", t_original(data), config, 0.0)
    if method == "ora":
        if truth is None or Z is None or E is None:
            raise MissingOracleError(
                "oracle requires simulation truth (model, Z, E)"
            )
        theta = decompose_theta_oracle(data, truth, Z, E)
        return _finish_outcome("ora", t_oracle(theta, truth), config, config.nu)
    if method == "fatdw":
        theta = compute_theta(data)
        estimate = estimate_factors(data, config.factor_config())
        zeta_hat = estimate_zeta(estimate, theta)
        return _finish_outcome(
            "fatdw", t_adjusted(theta, estimate, zeta_hat), config, config.nu
        )
    if method == "fatld":
        return _finish_outcome("fatld", _t_factor_ld(data, config), config, config.nu)
    # adafat: delegate to the iterative module (imported lazily to avoid a cycle)
    from .adaptive import adafat_run

    outcome, _ = adafat_run(data, config)
    return outcome
