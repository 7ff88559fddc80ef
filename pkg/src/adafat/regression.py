"""Projection matrices and the cross-sectional regression statistic.

The central quantity is the m-vector

    theta = Y' Q(X) 1_n / c_n,    c_n = sqrt(1_n' Q(X) 1_n),

where Q(W) = I - W (W'W)^-1 W' projects orthogonally to the columns of W.
With known ground truth the statistic decomposes exactly as

    theta = c_n * alpha + Gamma' zeta + eta,

with zeta = Z' Q(X) 1_n / c_n and eta = E' Q(X) 1_n / c_n. Note Q(X) here
uses the raw explanatory variables only; the factor-estimation panel uses
the intercept-augmented design instead (see :mod:`adafat.factors`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProjectionError, SingularProjectionError
from .model import Dataset, FactorModel

# W is rank deficient when its singular value ratio drops below this.
PROJECTION_RTOL = 1e-10
# 1'Q(X)1 below this multiple of n means 1_n is numerically in span(X).
DEGENERATE_RTOL = 1e-8


@dataclass(frozen=True)
class ThetaDecomposition:
    """Cross-sectional statistic with optional ground-truth components.

    ``zeta`` and ``eta`` are populated only in simulation contexts where the
    factor realizations and idiosyncratic errors are known; then
    ``theta == c_n * alpha + Gamma' zeta + eta`` up to float rounding.
    """

    theta: np.ndarray
    c_n: float
    zeta: np.ndarray | None = None
    eta: np.ndarray | None = None


def residualize(M, W) -> np.ndarray:
    """Project the columns of ``M`` orthogonally to the columns of ``W``.

    Computes Q(W) @ M through an orthonormal basis of W (SVD) rather than an
    explicit inverse, for stability under near-collinear W. An empty or
    ``None`` W returns ``M`` unchanged.

    Raises
    ------
    SingularProjectionError
        If W is rank deficient at tolerance (W'W not invertible).
    """
    M = np.asarray(M, dtype=float)
    if W is None:
        return M
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W.reshape(-1, 1)
    if W.size == 0:
        return M
    U, s, _ = np.linalg.svd(W, full_matrices=False)
    if s[0] <= 0 or s[-1] / s[0] < PROJECTION_RTOL:
        raise SingularProjectionError("projection target W is rank deficient")
    return M - U @ (U.T @ M)


def _projected_ones(data: Dataset) -> tuple[np.ndarray, float]:
    """Return (Q(X) 1_n, c_n); Q(X) is the identity when X is absent."""
    ones = np.ones(data.n)
    if data.p == 0:
        q1 = ones
    else:
        q1 = residualize(ones.reshape(-1, 1), data.X).ravel()
    c_sq = float(q1 @ q1)  # equals 1' Q(X) 1 since Q is idempotent
    if c_sq < DEGENERATE_RTOL * data.n:
        raise DegenerateProjectionError(
            "1_n lies in the span of X at tolerance; theta is not identified"
        )
    return q1, float(np.sqrt(c_sq))


def compute_theta(data: Dataset) -> ThetaDecomposition:
    """Compute the cross-sectional statistic from observed data alone.

    Without explanatory variables this reduces to theta_j = sqrt(n) * mean(y_j)
    and c_n = sqrt(n).

    Raises
    ------
    DegenerateProjectionError
        If 1_n' Q(X) 1_n is below tolerance.
    """
    q1, c_n = _projected_ones(data)
    theta = data.Y.T @ q1 / c_n
    return ThetaDecomposition(theta=theta, c_n=c_n)


def decompose_theta_oracle(
    data: Dataset, truth: FactorModel, Z, E
) -> ThetaDecomposition:
    """Compute theta together with its ground-truth components zeta and eta.

    ``Z`` (n, q) and ``E`` (n, m) are the realized latent factors and
    idiosyncratic errors from the generating model. The returned object
    satisfies the exact decomposition identity of the statistic.
    """
    q1, c_n = _projected_ones(data)
    Z = np.asarray(Z, dtype=float)
    E = np.asarray(E, dtype=float)
    theta = data.Y.T @ q1 / c_n
    zeta = Z.T @ q1 / c_n
    eta = E.T @ q1 / c_n
    return ThetaDecomposition(theta=theta, c_n=c_n, zeta=zeta, eta=eta)
