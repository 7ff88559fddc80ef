"""Synthetic panel generation, calibration, and the Monte Carlo driver.

Each replication draws explanatory variables, latent factors (optionally
mean-shifted), and weakly correlated idiosyncratic errors, then assembles
the panel from a per-replication ground-truth model. Replications are
keyed substreams of one master seed, so results are reproducible and
independent of execution order or parallelism.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import BadSpecError, TooFewRowsError
from .factors import FactorConfig, pca_top_k, select_q
from .model import (
    Dataset,
    FactorModel,
    HypothesisSplit,
    load_csv_matrix,
    validate_dataset,
)
from .regression import decompose_theta_oracle, residualize
from .testing import METHODS, TestConfig, count_processes, run_procedure

logger = logging.getLogger(__name__)

# Defaults calibrated by pilot runs: the oracle procedure exceeds power
# 0.9 at n = 200 and the original-test screen reliably clears the
# alternatives out of the adaptive procedure's starting subset.
DEFAULT_ALPHA_MAGNITUDE = 0.6
DEFAULT_MU_X = 0.05

ERROR_DISTS = ("normal", "t3")
SIGMA_KINDS = ("identity", "banded", "user")


@dataclass(frozen=True)
class SimConfig:
    """Full specification of one simulation cell.

    ``pi1`` is the true proportion of alternatives; nonzero intercepts have
    magnitude ``alpha_magnitude * sqrt(sigma_jj) * (1 + 0.5 u)`` with
    uniform u, and the alternatives are the tests with the largest
    information ratio |alpha_j| / sqrt(sigma_jj). ``alpha_sign`` draws the
    signs at random ("mixed") or makes every alternative positive
    ("positive", the shifted-alpha regime where the intercepts carry a
    significant common mean). ``mu_z_scale`` shifts the latent factor mean
    to mu_z_scale * mu_x[0] in every factor coordinate, which ties the
    effective intercepts to the loadings.

    ``market_skew`` is the probability that a first-row loading entry is
    positive; the default mimics a dominant market-style factor whose
    loadings mostly share one sign, so the loading rows carry a nonzero
    mean. The remaining rows mix signs evenly.
    """

    m: int
    n: int
    q: int = 3
    p: int = 1
    pi1: float = 0.1
    alpha_magnitude: float = DEFAULT_ALPHA_MAGNITUDE
    alpha_sign: str = "mixed"
    market_skew: float = 0.8
    error_dist: str = "normal"
    mu_x: tuple[float, ...] = (DEFAULT_MU_X,)
    mu_z_scale: float = 0.0
    sigma_eps: str = "banded"
    bandwidth: int = 3
    rho: float = 0.3
    sigma_eps_matrix: tuple[tuple[float, ...], ...] | None = None
    reps: int = 100
    seed: int = 0
    tau: float = 0.1
    nu: float = 0.5
    kappa: int = 8
    penalty: str = "bai-ng"
    clip_pi0: bool = False
    max_iter: int = 50

    def __post_init__(self):
        if self.m < 2 or self.n < 2:
            raise BadSpecError("m and n must both be at least 2")
        if self.q < 1:
            raise BadSpecError("q must be at least 1")
        if self.p < 0:
            raise BadSpecError("p must be non-negative")
        if not 0.0 <= self.pi1 < 1.0:
            raise BadSpecError(f"pi1 must be in [0, 1), got {self.pi1}")
        if self.reps < 1:
            raise BadSpecError("reps must be at least 1")
        if self.alpha_sign not in ("mixed", "positive"):
            raise BadSpecError("alpha_sign must be 'mixed' or 'positive'")
        if not 0.0 <= self.market_skew <= 1.0:
            raise BadSpecError("market_skew must be in [0, 1]")
        if self.error_dist not in ERROR_DISTS:
            raise BadSpecError(f"error_dist must be one of {ERROR_DISTS}")
        if self.sigma_eps not in SIGMA_KINDS:
            raise BadSpecError(f"sigma_eps must be one of {SIGMA_KINDS}")
        if self.sigma_eps == "user" and self.sigma_eps_matrix is None:
            raise BadSpecError("sigma_eps='user' requires sigma_eps_matrix")
        if self.bandwidth < 0 or not -1.0 < self.rho < 1.0:
            raise BadSpecError("need bandwidth >= 0 and |rho| < 1")
        mu_x = self.mu_x
        if np.isscalar(mu_x):
            mu_x = (float(mu_x),) * max(self.p, 1)
        else:
            mu_x = tuple(float(v) for v in mu_x)
            if self.p > 0 and len(mu_x) != self.p:
                raise BadSpecError(f"mu_x must have length p={self.p}")
        object.__setattr__(self, "mu_x", mu_x)
        # Validate the threshold settings eagerly.
        self.test_config()

    def test_config(self) -> TestConfig:
        return TestConfig(
            tau=self.tau,
            nu=self.nu,
            kappa=self.kappa,
            penalty=self.penalty,
            clip_pi0=self.clip_pi0,
            max_iter=self.max_iter,
        )

    def mu_z_vector(self) -> np.ndarray:
        return self.mu_z_scale * self.mu_x[0] * np.ones(self.q)

    def to_json_dict(self) -> dict:
        out = asdict(self)
        out["mu_x"] = list(self.mu_x)
        if self.sigma_eps_matrix is not None:
            out["sigma_eps_matrix"] = [list(row) for row in self.sigma_eps_matrix]
        return out


def build_sigma_eps(config: SimConfig) -> np.ndarray:
    """Idiosyncratic covariance per the config's spec.

    The banded default has unit diagonal and entries rho^|j-k| within the
    bandwidth, which keeps cross-correlation weak and the matrix positive
    definite at the default (bandwidth 3, rho 0.3).
    """
    m = config.m
    if config.sigma_eps == "identity":
        return np.eye(m)
    if config.sigma_eps == "banded":
        sigma = np.eye(m)
        for d in range(1, config.bandwidth + 1):
            val = config.rho ** d
            idx = np.arange(m - d)
            sigma[idx, idx + d] = val
            sigma[idx + d, idx] = val
    else:
        sigma = np.array(config.sigma_eps_matrix, dtype=float)
        if sigma.shape != (m, m):
            raise BadSpecError(f"sigma_eps_matrix must be {m}x{m}")
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise BadSpecError("sigma_eps is not positive definite") from None
    return sigma


def _rep_rng(seed: int, rep_index: int) -> np.random.Generator:
    # Keyed substream: deterministic per (seed, rep), order independent.
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(rep_index,))
    )


def _standardized(rng: np.random.Generator, dist: str, size) -> np.ndarray:
    if dist == "normal":
        return rng.standard_normal(size)
    # t with 3 degrees of freedom scaled to unit variance
    return rng.standard_t(3, size) / math.sqrt(3.0)


def _select_alternatives(
    alpha_draw: np.ndarray, sqrt_sigma: np.ndarray, pi1: float
) -> np.ndarray:
    """Zero all but the ceil(pi1 * m) entries of largest information ratio."""
    m = alpha_draw.shape[0]
    m1 = math.ceil(pi1 * m)
    alpha = np.zeros(m)
    if m1 > 0:
        ratio = np.abs(alpha_draw) / sqrt_sigma
        keep = np.argsort(-ratio, kind="stable")[:m1]
        alpha[keep] = alpha_draw[keep]
    return alpha


def generate(
    config: SimConfig, rep_index: int, truth: FactorModel | None = None
) -> tuple[Dataset, FactorModel, HypothesisSplit, np.ndarray, np.ndarray]:
    """Draw one replication: panel, ground truth, split, factors, errors.

    With ``truth`` given (e.g. from :func:`calibrate_from_returns`), its
    parameters are held fixed and only the samples are redrawn; the
    alternatives are re-selected from its intercepts by information ratio
    at the configured ``pi1``. Without it, fresh parameters are drawn per
    replication: loading magnitudes uniform on [0.5, 1.5], first-row signs
    positive with probability ``market_skew`` and the other rows evenly
    sign-mixed (which keeps the centered loading Gram well conditioned),
    and standard normal explanatory loadings.

    Deterministic given ``(config.seed, rep_index)``.
    """
    rng = _rep_rng(config.seed, rep_index)

    if truth is not None:
        if truth.m != config.m:
            raise BadSpecError(f"truth has m={truth.m}, config has m={config.m}")
        if truth.p != config.p:
            raise BadSpecError(f"truth has p={truth.p}, config has p={config.p}")
        q = truth.q
        Gamma, B, sigma = truth.Gamma, truth.B, truth.Sigma_eps
        sqrt_sigma = np.sqrt(np.diag(sigma))
        alpha = _select_alternatives(truth.alpha, sqrt_sigma, config.pi1)
    else:
        q = config.q
        sigma = build_sigma_eps(config)
        sqrt_sigma = np.sqrt(np.diag(sigma))
        loading_signs = rng.choice([-1.0, 1.0], (q, config.m))
        loading_signs[0] = np.where(
            rng.uniform(size=config.m) < config.market_skew, 1.0, -1.0
        )
        Gamma = rng.uniform(0.5, 1.5, (q, config.m)) * loading_signs
        B = rng.standard_normal((config.p, config.m))
        u = rng.uniform(0.0, 1.0, config.m)
        signs = rng.choice([-1.0, 1.0], config.m)
        if config.alpha_sign == "positive":
            # shifted-alpha regime: one-signed intercepts with a common mean
            signs = np.ones(config.m)
        alpha_draw = config.alpha_magnitude * sqrt_sigma * (1.0 + 0.5 * u) * signs
        alpha = _select_alternatives(alpha_draw, sqrt_sigma, config.pi1)

    chol = np.linalg.cholesky(sigma)
    X = None
    if config.p > 0:
        X = np.asarray(config.mu_x) + _standardized(
            rng, config.error_dist, (config.n, config.p)
        )
    Z = config.mu_z_scale * config.mu_x[0] + _standardized(
        rng, config.error_dist, (config.n, q)
    )
    E = _standardized(rng, config.error_dist, (config.n, config.m)) @ chol.T

    Y = alpha[np.newaxis, :] + Z @ Gamma + E
    if X is not None:
        Y = Y + X @ B

    data = validate_dataset(Y, X)
    model = FactorModel(alpha=alpha, B=B, Gamma=Gamma, Sigma_eps=sigma, q=q)
    split = HypothesisSplit.from_alpha(alpha)

    if logger.isEnabledFor(logging.DEBUG):
        dec = decompose_theta_oracle(data, model, Z, E)
        resid = dec.theta - (dec.c_n * alpha + Gamma.T @ dec.zeta + dec.eta)
        logger.debug(
            "rep %d decomposition residual max abs %.3e",
            rep_index,
            float(np.abs(resid).max()),
        )
    return data, model, split, Z, E


@dataclass
class SimReport:
    """Per-method FDP/POW arrays across replications, with summaries."""

    config: SimConfig
    methods: list[str]
    fdp: dict[str, np.ndarray]
    pow: dict[str, np.ndarray]
    summary: dict[str, dict[str, float]]
    failures: list[tuple[int, str, str]]
    elapsed_seconds: float

    def to_json_dict(self) -> dict:
        # elapsed_seconds is intentionally omitted: primary outputs must be
        # byte-identical across runs of the same config and seed.
        def _col(values: np.ndarray) -> list:
            return [None if math.isnan(v) else float(v) for v in values]

        return {
            "schema_version": 1,
            "config": self.config.to_json_dict(),
            "methods": list(self.methods),
            "reps": self.config.reps,
            "failure_count": len(self.failures),
            "failures": [
                {"rep": r, "method": meth, "error": msg}
                for r, meth, msg in self.failures
            ],
            "fdp": {meth: _col(self.fdp[meth]) for meth in self.methods},
            "pow": {meth: _col(self.pow[meth]) for meth in self.methods},
            "summary": self.summary,
        }

    def write_csv(self, path) -> None:
        """Long-form rows (rep, method, fdp, pow) for external plotting."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("rep,method,fdp,pow\n")
            for r in range(self.config.reps):
                for meth in self.methods:
                    fh.write(
                        f"{r},{meth},{self.fdp[meth][r]!r},{self.pow[meth][r]!r}\n"
                    )


def _summarize(values: np.ndarray) -> dict[str, float]:
    ok = values[np.isfinite(values)]
    if ok.size == 0:
        return {k: math.nan for k in ("mean", "median", "q25", "q75", "q90")}
    return {
        "mean": float(np.mean(ok)),
        "median": float(np.median(ok)),
        "q25": float(np.quantile(ok, 0.25)),
        "q75": float(np.quantile(ok, 0.75)),
        "q90": float(np.quantile(ok, 0.90)),
    }


def _run_one_rep(
    config: SimConfig,
    rep_index: int,
    methods: list[str],
    truth: FactorModel | None,
) -> tuple[dict[str, tuple[float, float]], list[tuple[int, str, str]]]:
    failures: list[tuple[int, str, str]] = []
    results: dict[str, tuple[float, float]] = {}
    try:
        data, model, split, Z, E = generate(config, rep_index, truth)
    except Exception as exc:  # a bad draw poisons every method of this rep
        for meth in methods:
            results[meth] = (math.nan, math.nan)
            failures.append((rep_index, meth, repr(exc)))
        return results, failures
    tc = config.test_config()
    for meth in methods:
        try:
            outcome = run_procedure(meth, data, tc, truth=model, Z=Z, E=E)
            metrics = count_processes(outcome.p_values, outcome.threshold, split)
            results[meth] = (metrics.FDP, metrics.POW)
        except Exception as exc:
            results[meth] = (math.nan, math.nan)
            failures.append((rep_index, meth, repr(exc)))
    return results, failures


def run_monte_carlo(
    config: SimConfig,
    methods,
    truth: FactorModel | None = None,
    jobs: int = 1,
) -> SimReport:
    """Run all replications of one cell and aggregate FDP/POW per method.

    Individual replication failures are recorded in the report rather than
    raised; the affected cells hold NaN. With ``jobs > 1`` replications run
    in parallel processes; per-replication seeding makes the report
    identical regardless of the degree of parallelism.
    """
    methods = [m.lower() for m in methods]
    for meth in methods:
        if meth not in METHODS:
            raise BadSpecError(f"unknown method {meth!r}; known: {METHODS}")
    start = time.perf_counter()
    if jobs == 1:
        per_rep = [
            _run_one_rep(config, r, methods, truth) for r in range(config.reps)
        ]
    else:
        from joblib import Parallel, delayed

        per_rep = Parallel(n_jobs=jobs)(
            delayed(_run_one_rep)(config, r, methods, truth)
            for r in range(config.reps)
        )
    elapsed = time.perf_counter() - start

    fdp = {meth: np.full(config.reps, math.nan) for meth in methods}
    pow_ = {meth: np.full(config.reps, math.nan) for meth in methods}
    failures: list[tuple[int, str, str]] = []
    for r, (results, rep_failures) in enumerate(per_rep):
        failures.extend(rep_failures)
        for meth in methods:
            fdp[meth][r], pow_[meth][r] = results[meth]
    summary = {
        meth: {
            "fdp": _summarize(fdp[meth]),
            "pow": _summarize(pow_[meth]),
        }
        for meth in methods
    }
    return SimReport(
        config=config,
        methods=methods,
        fdp=fdp,
        pow=pow_,
        summary=summary,
        failures=failures,
        elapsed_seconds=elapsed,
    )


def calibrate_from_returns(
    returns_path,
    market_path,
    overrides: dict | None = None,
    kappa: int = 8,
    penalty: str = "bai-ng",
    corr_threshold_scale: float = 2.0,
) -> tuple[FactorModel, SimConfig]:
    """Calibrate a generator truth from observed returns and a market factor.

    Intercepts and market loadings come from per-asset least squares on the
    market column; the factor count and loadings come from the residualized
    panel; the idiosyncratic covariance is the residual covariance with
    off-diagonal entries kept only where the residual correlation exceeds
    ``corr_threshold_scale * sqrt(log(m) / n)``, then shrunk toward its
    diagonal until positive definite.

    Returns the calibrated model plus a matching :class:`SimConfig`
    (``overrides`` may set any config field, e.g. pi1, reps, seed).
    """
    Y = load_csv_matrix(returns_path)
    x = load_csv_matrix(market_path)
    data = validate_dataset(Y, x)
    if data.n <= 10:
        raise TooFewRowsError(f"calibration needs n > 10 observations, got {data.n}")

    design = np.column_stack([np.ones(data.n), data.X])
    coef, *_ = np.linalg.lstsq(design, data.Y, rcond=None)
    alpha_hat = coef[0]
    B_hat = coef[1:]

    panel = residualize(data.Y, design)
    fc = FactorConfig(kappa=kappa, penalty=penalty)
    q_hat = select_q(panel, fc)
    Z_hat, Gamma_hat, _ = pca_top_k(panel, q_hat)
    resid = panel - Z_hat @ Gamma_hat

    S = resid.T @ resid / data.n
    d = np.sqrt(np.diag(S))
    corr = S / np.outer(d, d)
    thr = corr_threshold_scale * math.sqrt(math.log(data.m) / data.n)
    keep = np.abs(corr) >= thr
    np.fill_diagonal(keep, True)
    sigma = np.where(keep, S, 0.0)
    # Shrink off-diagonals until positive definite (preserves variances).
    off = sigma - np.diag(np.diag(sigma))
    diag = np.diag(np.diag(sigma))
    scale = 1.0
    for _ in range(60):
        candidate = diag + scale * off
        if np.linalg.eigvalsh(candidate)[0] > 1e-8 * float(np.mean(np.diag(diag))):
            sigma = candidate
            break
        scale *= 0.5
    else:
        sigma = diag

    model = FactorModel(
        alpha=alpha_hat, B=B_hat, Gamma=Gamma_hat, Sigma_eps=sigma, q=q_hat
    )
    fields = {
        "m": data.m,
        "n": data.n,
        "q": q_hat,
        "p": data.p,
        "mu_x": tuple(float(v) for v in data.X.mean(axis=0)),
        "sigma_eps": "user",
        "sigma_eps_matrix": tuple(tuple(float(v) for v in row) for row in sigma),
        "kappa": kappa,
        "penalty": penalty,
    }
    if overrides:
        fields.update(overrides)
    return model, SimConfig(**fields)
