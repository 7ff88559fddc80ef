"""Core data containers and validation shared by all procedures.

A :class:`Dataset` is the observed panel ``Y`` (n observations by m tests)
plus an optional explanatory matrix ``X`` (n by p, without an intercept
column; the intercept is appended internally wherever the augmented design
is needed). All containers are immutable after construction and safe to
share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BadSpecError,
    NonFiniteError,
    RankDeficientError,
    TooFewRowsError,
)

# Rank test: smallest/largest singular value of the intercept-augmented
# design below this ratio counts as rank deficient (scale free).
RANK_RTOL = 1e-10


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 1- or 2-dimensional, got ndim={arr.ndim}")
    return arr


@dataclass(frozen=True)
class Dataset:
    """Validated observation panel.

    Attributes
    ----------
    Y : ndarray, shape (n, m)
        Observed panel, one row per observation, one column per test.
    X : ndarray of shape (n, p) or None
        Explanatory variables without an intercept column.
    n, m, p : int
        Panel dimensions (p == 0 when X is absent).
    """

    Y: np.ndarray
    X: np.ndarray | None
    n: int
    m: int
    p: int


def validate_dataset(Y, X=None) -> Dataset:
    """Validate raw matrices and return an immutable :class:`Dataset`.

    Checks, in order: finiteness of ``Y`` and ``X``, row-count agreement,
    enough observations (n >= p + 2), and full column rank of the
    intercept-augmented design ``(1, X)``.

    Raises
    ------
    NonFiniteError, TooFewRowsError, RankDeficientError
    """
    Y = _as_matrix(Y, "Y")
    if not np.all(np.isfinite(Y)):
        raise NonFiniteError("Y contains non-finite entries")
    n, m = Y.shape
    if X is not None:
        X = _as_matrix(X, "X")
        if not np.all(np.isfinite(X)):
            raise NonFiniteError("X contains non-finite entries")
        if X.shape[0] != n:
            raise ValueError(f"X has {X.shape[0]} rows but Y has {n}")
        if X.shape[1] == 0:
            X = None
    p = 0 if X is None else X.shape[1]
    if n <= p + 1:
        raise TooFewRowsError(f"need n >= p + 2 rows, got n={n} with p={p}")
    if X is not None:
        augmented = np.column_stack([np.ones(n), X])
        s = np.linalg.svd(augmented, compute_uv=False)
        if s[0] <= 0 or s[-1] / s[0] < RANK_RTOL:
            raise RankDeficientError(
                "intercept-augmented design (1, X) is rank deficient; "
                "drop constant or collinear columns of X"
            )
    Y.flags.writeable = False
    if X is not None:
        X.flags.writeable = False
    return Dataset(Y=Y, X=X, n=n, m=m, p=p)


@dataclass(frozen=True)
class FactorModel:
    """Ground-truth model parameters for simulation and oracle use.

    ``alpha`` (m,) holds the tested intercepts, ``B`` (p, m) the loadings on
    explanatory variables, ``Gamma`` (q, m) the latent factor loadings, and
    ``Sigma_eps`` (m, m) the idiosyncratic covariance.
    """

    alpha: np.ndarray
    B: np.ndarray
    Gamma: np.ndarray
    Sigma_eps: np.ndarray
    q: int

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float).ravel()
        m = alpha.shape[0]
        Gamma = np.asarray(self.Gamma, dtype=float)
        Sigma = np.asarray(self.Sigma_eps, dtype=float)
        if self.q < 1 or Gamma.ndim != 2 or Gamma.shape != (self.q, m):
            raise BadSpecError(
                f"Gamma must have shape (q, m) = ({self.q}, {m}), got {Gamma.shape}"
            )
        B = np.asarray(self.B, dtype=float)
        if B.ndim != 2 or B.shape[1] != m:
            raise BadSpecError(f"B must have shape (p, {m}), got {B.shape}")
        if Sigma.shape != (m, m):
            raise BadSpecError(f"Sigma_eps must be {m}x{m}, got {Sigma.shape}")
        if not np.allclose(Sigma, Sigma.T, rtol=0, atol=1e-8 * max(1.0, np.abs(Sigma).max())):
            raise BadSpecError("Sigma_eps must be symmetric")
        if np.any(np.diag(Sigma) <= 0):
            raise BadSpecError("Sigma_eps must have strictly positive diagonal")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Gamma", Gamma)
        object.__setattr__(self, "Sigma_eps", Sigma)

    @property
    def m(self) -> int:
        return self.alpha.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[0]


@dataclass(frozen=True)
class HypothesisSplit:
    """Partition of test indices into true nulls and alternatives."""

    null_set: np.ndarray
    alt_set: np.ndarray
    m0: int
    m1: int

    def __post_init__(self):
        null_set = np.asarray(self.null_set, dtype=np.intp)
        alt_set = np.asarray(self.alt_set, dtype=np.intp)
        m = null_set.size + alt_set.size
        combined = np.concatenate([null_set, alt_set])
        if np.unique(combined).size != m or (m and (combined.min() < 0 or combined.max() >= m)):
            raise BadSpecError("null_set and alt_set must partition range(m)")
        if self.m0 != null_set.size or self.m1 != alt_set.size:
            raise BadSpecError("m0/m1 do not match set cardinalities")
        object.__setattr__(self, "null_set", np.sort(null_set))
        object.__setattr__(self, "alt_set", np.sort(alt_set))

    @classmethod
    def from_alpha(cls, alpha) -> "HypothesisSplit":
        """Split indices by whether the tested intercept is exactly zero."""
        alpha = np.asarray(alpha, dtype=float).ravel()
        alt = np.flatnonzero(alpha != 0.0)
        null = np.flatnonzero(alpha == 0.0)
        return cls(null_set=null, alt_set=alt, m0=null.size, m1=alt.size)

    @property
    def m(self) -> int:
        return self.m0 + self.m1


def load_csv_matrix(path) -> np.ndarray:
    """Read a headerless numeric CSV as a 2-D float array.

    Parsing is locale independent (decimal point only).
    """
    return np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)


def load_dataset(y_path, x_path=None) -> Dataset:
    """Load and validate a panel from CSV files (see :func:`validate_dataset`)."""
    Y = load_csv_matrix(y_path)
    X = load_csv_matrix(x_path) if x_path is not None else None
    return validate_dataset(Y, X)
