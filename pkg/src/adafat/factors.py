"""Latent factor estimation from the residualized panel.

The pipeline residualizes the panel by the intercept-augmented design,
extracts principal components of the n x n Gram matrix of the panel (the
time-efficient side when m >> n), selects the factor count by a penalized
information criterion, and recovers the factor drift by a centered
cross-sectional regression of theta on the estimated loadings.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadSpecError,
    DegenerateSpectrumWarning,
    EigenFailureError,
    SingularEigenvalueError,
    SingularGramError,
    SubsetTooSmallError,
)
from .model import Dataset
from .regression import ThetaDecomposition, residualize

# Relative eigenvalue gap under which the spectrum counts as degenerate.
SPECTRUM_SEP_RTOL = 1e-12
# Residual sums of squares below this times ||panel||_F^2 are treated as an
# exact fit when evaluating the information criterion.
SSR_FLOOR_RTOL = 1e-12
# Condition number limit for the centered loading Gram matrix.
GRAM_COND_MAX = 1e12


def penalty_bai_ng(m: int, n: int) -> float:
    """Default information-criterion penalty g(m, n)."""
    return (m + n) / (m * n) * math.log(m * n / (m + n))


PENALTIES = {"bai-ng": penalty_bai_ng}


@dataclass(frozen=True)
class FactorConfig:
    """Settings for factor-count selection.

    ``kappa`` is the upper bound of the factor search; it must satisfy
    1 <= kappa <= min(m, n) - 1 for the panel it is applied to.
    """

    kappa: int = 8
    penalty: str = "bai-ng"

    def penalty_fn(self):
        try:
            return PENALTIES[self.penalty]
        except KeyError:
            raise BadSpecError(
                f"unknown penalty {self.penalty!r}; known: {sorted(PENALTIES)}"
            ) from None


@dataclass(frozen=True)
class FactorEstimate:
    """Estimated factor structure of a residualized panel.

    Attributes
    ----------
    Z_hat : ndarray, shape (n, q_hat)
        Scaled eigenvectors with Z_hat' Z_hat / n = I.
    Gamma_hat : ndarray, shape (q_hat, m)
        Estimated loadings, Z_hat' panel / n.
    q_hat : int
        Selected factor count.
    eigvals : ndarray, shape (q_hat,)
        Leading eigenvalues of panel panel' / (m n), decreasing.
    Lambda_eps_hat : ndarray, shape (m,)
        Estimated idiosyncratic variances, diag(E_hat' E_hat / n).
    E_hat : ndarray, shape (n, m)
        Residual panel, panel - Z_hat Gamma_hat.
    """

    Z_hat: np.ndarray
    Gamma_hat: np.ndarray
    q_hat: int
    eigvals: np.ndarray
    Lambda_eps_hat: np.ndarray
    E_hat: np.ndarray


def augmented_design(data: Dataset) -> np.ndarray:
    """Intercept-augmented design matrix (1_n, X)."""
    if data.p == 0:
        return np.ones((data.n, 1))
    return np.column_stack([np.ones(data.n), data.X])


def residual_panel(data: Dataset) -> np.ndarray:
    """Panel after projecting out the intercept-augmented design."""
    return residualize(data.Y, augmented_design(data))


def _check_kappa(kappa: int, n: int, m: int) -> None:
    if not 1 <= kappa <= min(m, n) - 1:
        raise BadSpecError(
            f"kappa={kappa} outside [1, min(m, n) - 1] = [1, {min(m, n) - 1}]"
        )


def _gram_spectrum(Y_tilde: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending, clipped at 0) and eigenvectors of panel panel'."""
    S = Y_tilde @ Y_tilde.T
    try:
        w, v = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise EigenFailureError(f"symmetric eigensolver failed: {exc}") from exc
    order = np.argsort(w)[::-1]
    return np.maximum(w[order], 0.0), v[:, order]


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # Deterministic orientation: the entry of largest magnitude is positive.
    pivot = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivot, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _warn_if_unseparated(w: np.ndarray, k: int) -> None:
    top = w[0] if w.size else 0.0
    scale = max(top, np.finfo(float).tiny)
    lam_k = w[k - 1] if k - 1 < w.size else 0.0
    lam_next = w[k] if k < w.size else 0.0
    if (lam_k - lam_next) / scale < SPECTRUM_SEP_RTOL or top == 0.0:
        warnings.warn(
            f"eigenvalue {k} is not separated from eigenvalue {k + 1} "
            "at relative tolerance 1e-12",
            DegenerateSpectrumWarning,
            stacklevel=3,
        )


def pca_top_k(Y_tilde, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top-k principal components of the residualized panel.

    Returns ``(Z_hat_k, Gamma_hat_k, eigvals)`` where ``Z_hat_k`` holds the
    leading eigenvectors of panel panel' scaled by sqrt(n),
    ``Gamma_hat_k = Z_hat_k' panel / n``, and ``eigvals`` are the
    corresponding eigenvalues of panel panel' / (m n). Since the panel is
    already orthogonal to the projected design, regressing the raw or the
    residualized panel on Z_hat gives identical loadings.

    Raises
    ------
    EigenFailureError
        If the eigensolver does not converge.

    Warns
    -----
    DegenerateSpectrumWarning
        If eigenvalues k and k+1 are not separated at relative 1e-12.
    """
    Y_tilde = np.asarray(Y_tilde, dtype=float)
    n, m = Y_tilde.shape
    if not 1 <= k <= min(m, n) - 1:
        raise ValueError(f"k={k} outside [1, min(m, n) - 1]")
    w, v = _gram_spectrum(Y_tilde)
    _warn_if_unseparated(w, k)
    xi = _fix_signs(v[:, :k])
    Z_hat = math.sqrt(n) * xi
    Gamma_hat = Z_hat.T @ Y_tilde / n
    return Z_hat, Gamma_hat, w[:k] / (m * n)


def select_q(Y_tilde, config: FactorConfig) -> int:
    """Select the factor count by the penalized information criterion.

    For each k in 1..kappa the criterion is the log mean squared residual of
    the rank-k fit plus k * g(m, n). The rank-k residual sum of squares
    equals the eigenvalue tail sum of the panel Gram matrix, so a single
    eigendecomposition serves every candidate. Ties break toward smaller k,
    and residuals below a relative floor are treated as exact fits so that
    an exactly low-rank panel selects its true rank.
    """
    Y_tilde = np.asarray(Y_tilde, dtype=float)
    n, m = Y_tilde.shape
    _check_kappa(config.kappa, n, m)
    g = config.penalty_fn()(m, n)
    S = Y_tilde @ Y_tilde.T
    try:
        w = np.linalg.eigvalsh(S)
    except np.linalg.LinAlgError as exc:
        raise EigenFailureError(f"symmetric eigensolver failed: {exc}") from exc
    w = np.maximum(w[::-1], 0.0)
    total = float(w.sum())
    if total <= 0.0:
        warnings.warn(
            "panel is identically zero; factor count defaults to 1",
            DegenerateSpectrumWarning,
            stacklevel=2,
        )
        return 1
    ks = np.arange(1, config.kappa + 1)
    ssr = total - np.cumsum(w[: config.kappa])
    ssr = np.maximum(ssr, SSR_FLOOR_RTOL * total)
    ic = np.log(ssr / (m * n)) + ks * g
    return int(ks[np.argmin(ic)])


def estimate_factors(data: Dataset, config: FactorConfig = FactorConfig()) -> FactorEstimate:
    """Run the full estimation pipeline on a validated dataset.

    Residualizes the panel by (1_n, X), selects q_hat, extracts the top
    q_hat components, and estimates idiosyncratic variances from the
    residual panel.
    """
    panel = residual_panel(data)
    if np.linalg.norm(panel) <= 1e-12 * max(np.linalg.norm(data.Y), np.finfo(float).tiny):
        warnings.warn(
            "residualized panel is numerically zero; the design explains the "
            "panel exactly and no factor structure is identifiable",
            DegenerateSpectrumWarning,
            stacklevel=2,
        )
    q_hat = select_q(panel, config)
    Z_hat, Gamma_hat, eigvals = pca_top_k(panel, q_hat)
    E_hat = panel - Z_hat @ Gamma_hat
    Lambda_eps_hat = np.einsum("ij,ij->j", E_hat, E_hat) / data.n
    return FactorEstimate(
        Z_hat=Z_hat,
        Gamma_hat=Gamma_hat,
        q_hat=q_hat,
        eigvals=eigvals,
        Lambda_eps_hat=Lambda_eps_hat,
        E_hat=E_hat,
    )


def estimate_zeta(
    estimate: FactorEstimate,
    theta: ThetaDecomposition,
    subset=None,
) -> np.ndarray:
    """Recover the factor drift by a centered cross-sectional regression.

    Regresses the entries of theta restricted to ``subset`` on the matching
    columns of the estimated loadings, after centering across the subset:

        zeta_hat = [G0 Q(1) G0']^-1 G0 Q(1) theta0.

    ``subset=None`` uses all m tests. The centering makes the regression
    immune to a common shift of theta across the subset, which is what lets
    a null-restricted subset remove the intercept contamination entirely.

    Raises
    ------
    SubsetTooSmallError
        If the subset has fewer than q_hat + 2 elements.
    SingularGramError
        If the centered Gram matrix is singular at condition 1e12.
    """
    G = estimate.Gamma_hat
    th = np.asarray(theta.theta, dtype=float)
    if subset is None:
        idx = slice(None)
        size = th.shape[0]
    else:
        idx = np.asarray(subset, dtype=np.intp)
        size = idx.size
    if size <= estimate.q_hat + 1:
        raise SubsetTooSmallError(
            f"subset of size {size} cannot identify {estimate.q_hat} factors"
        )
    G0 = G[:, idx]
    th0 = th[idx]
    Gc = G0 - G0.mean(axis=1, keepdims=True)
    gram = Gc @ Gc.T
    w = np.linalg.eigvalsh(gram)
    if w[-1] <= 0.0 or w[0] <= w[-1] / GRAM_COND_MAX:
        raise SingularGramError(
            "centered loading Gram matrix is singular at condition 1e12"
        )
    return np.linalg.solve(gram, Gc @ th0)


def rotation_H(estimate: FactorEstimate, Gamma, Z_tilde) -> np.ndarray:
    """Diagnostic rotation linking estimated and true loadings.

    Given the true loadings and the residualized true factors, returns the
    q x q matrix H = Gamma Gamma' Z_tilde' Z_hat D^-1 / (m n), where D is the
    diagonal of stored eigenvalues. Up to estimation error,
    Gamma_hat = H^-1 Gamma; all adjusted statistics are invariant to H.

    Raises
    ------
    SingularEigenvalueError
        If any stored eigenvalue is at or below 1e-14.
    """
    Gamma = np.asarray(Gamma, dtype=float)
    Z_tilde = np.asarray(Z_tilde, dtype=float)
    if Gamma.shape[0] != estimate.q_hat:
        raise ValueError(
            f"true factor count {Gamma.shape[0]} != estimated {estimate.q_hat}"
        )
    if np.any(estimate.eigvals <= 1e-14):
        raise SingularEigenvalueError("leading eigenvalue at or below 1e-14")
    m = Gamma.shape[1]
    n = Z_tilde.shape[0]
    base = (Gamma @ Gamma.T) @ (Z_tilde.T @ estimate.Z_hat) / (m * n)
    return base / estimate.eigvals[np.newaxis, :]
