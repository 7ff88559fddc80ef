"""Iterative refinement of the factor drift on an estimated null subset.

The full-set drift regression leaks the tested intercepts into the
adjustment whenever they correlate with the loadings. The adaptive
procedure bootstraps itself with the original t-tests: their rejections
are removed to form an initial null-subset estimate, the drift is
re-estimated on that subset, the adjusted tests are re-thresholded, newly
rejected indices leave the subset, and the loop repeats until the
rejection set is stable. Loadings, variances, and the factor count are
estimated once from the full panel and stay frozen across iterations; the
stable rejection set is the output of interest.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConvergenceWarning,
    SingularGramError,
    SubsetTooSmallError,
)
from .factors import estimate_factors, estimate_zeta
from .model import Dataset
from .regression import compute_theta
from .testing import (
    TestConfig,
    TestOutcome,
    _finish_outcome,
    p_values,
    storey_fdr_hat,
    t_adjusted,
    t_original,
    threshold_star,
)

# Cycle detection window: rejection-set hashes kept from recent iterations.
CYCLE_WINDOW = 8

# The preprocessing screen runs the original tests at the same tau but with
# the conservative unit null-proportion (nu = 0). The adaptive estimate can
# collapse when the original scores share a strong factor shift, and an
# over-loosened screen then ejects enough true nulls that the first subset
# regression is fit to a hard-truncated response, biasing the drift.
S1_NU = 0.0


@dataclass(frozen=True)
class AdaFatIteration:
    """One refinement round: the subset used, and what it produced."""

    null_subset: np.ndarray
    rejected: np.ndarray
    zeta_hat: np.ndarray
    threshold: float
    fdr_estimate: float
    pi0_hat: float


@dataclass
class AdaFatTrace:
    """Diagnostic record of an adaptive run."""

    iterations: list[AdaFatIteration] = field(default_factory=list)
    converged: bool = False
    iterations_used: int = 0
    stopped_early: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "converged": self.converged,
            "iterations_used": self.iterations_used,
            "stopped_early": self.stopped_early,
            "subset_sizes": [int(it.null_subset.size) for it in self.iterations],
            "rejection_sizes": [int(it.rejected.size) for it in self.iterations],
        }


def _reject_set(p: np.ndarray, t_star: float) -> np.ndarray:
    if t_star <= 0.0:
        return np.empty(0, dtype=np.intp)
    return np.flatnonzero(p <= t_star)


def adafat_run(
    data: Dataset, config: TestConfig = TestConfig()
) -> tuple[TestOutcome, AdaFatTrace]:
    """Run the adaptive procedure and return its outcome plus trace.

    Steps: (1) reject with the original t-tests at tau (conservative
    screen, see ``S1_NU``) and take the complement as the initial null
    subset; (2) re-estimate the drift on the subset with frozen loadings
    and variances; (3) threshold the adjusted scores over all m tests at
    (nu, tau) and remove the rejections from the subset; (4) repeat until
    two consecutive rejection sets are identical.

    Termination guards: ``max_iter`` caps the loop (a result is still
    returned, flagged unconverged); a cycle among the last few rejection
    sets returns the member with the smallest estimated FDR; a subset too
    small or collinear to identify the drift stops with the last valid
    iteration. Each guard emits :class:`ConvergenceWarning`.

    Raises
    ------
    SubsetTooSmallError
        If the initial subset (or the first iteration's) cannot identify
        the drift; the partial trace rides on the exception.
    """
    theta = compute_theta(data)
    estimate = estimate_factors(data, config.factor_config())

    p_ori = p_values(t_original(data))
    t_star_ori = threshold_star(p_ori, S1_NU, config.tau, config.clip_pi0)
    rejected_ori = _reject_set(p_ori, t_star_ori)
    null_subset = np.setdiff1d(np.arange(data.m), rejected_ori)

    trace = AdaFatTrace()
    if null_subset.size <= estimate.q_hat + 1:
        raise SubsetTooSmallError(
            f"original tests leave only {null_subset.size} candidate nulls, "
            f"too few to identify {estimate.q_hat} factors",
            trace=trace,
        )

    seen: deque[tuple[int, int]] = deque(maxlen=CYCLE_WINDOW)
    prev_rejected: np.ndarray | None = None
    final_index: int | None = None

    for _ in range(config.max_iter):
        try:
            zeta_hat = estimate_zeta(estimate, theta, null_subset)
        except (SubsetTooSmallError, SingularGramError) as exc:
            if not trace.iterations:
                raise SubsetTooSmallError(str(exc), trace=trace) from exc
            warnings.warn(
                f"stopping early ({exc}); returning the last valid iteration",
                ConvergenceWarning,
                stacklevel=2,
            )
            trace.stopped_early = "subset_too_small"
            break
        t_adj = t_adjusted(theta, estimate, zeta_hat)
        p_adj = p_values(t_adj)
        t_star = threshold_star(p_adj, config.nu, config.tau, config.clip_pi0)
        rejected = _reject_set(p_adj, t_star)
        fdr_hat, pi0_hat = storey_fdr_hat(p_adj, config.nu, t_star, config.clip_pi0)
        trace.iterations.append(
            AdaFatIteration(
                null_subset=null_subset,
                rejected=rejected,
                zeta_hat=zeta_hat,
                threshold=t_star,
                fdr_estimate=fdr_hat,
                pi0_hat=pi0_hat,
            )
        )
        if prev_rejected is not None and np.array_equal(rejected, prev_rejected):
            trace.converged = True
            break
        key = hash(rejected.tobytes())
        cycle_start = next((i for k, i in seen if k == key), None)
        if cycle_start is not None:
            members = trace.iterations[cycle_start:]
            best = min(range(len(members)), key=lambda i: members[i].fdr_estimate)
            final_index = cycle_start + best
            warnings.warn(
                "rejection sets cycle; returning the smallest estimated-FDR member",
                ConvergenceWarning,
                stacklevel=2,
            )
            trace.stopped_early = "cycle"
            break
        seen.append((key, len(trace.iterations) - 1))
        null_subset = np.setdiff1d(null_subset, rejected)
        prev_rejected = rejected
    else:
        warnings.warn(
            f"no stable rejection set within max_iter={config.max_iter}",
            ConvergenceWarning,
            stacklevel=2,
        )

    trace.iterations_used = len(trace.iterations)
    chosen = trace.iterations[final_index if final_index is not None else -1]
    # Rebuild the outcome from the chosen iteration's drift (pure recompute).
    outcome = _finish_outcome(
        "adafat", t_adjusted(theta, estimate, chosen.zeta_hat), config, config.nu
    )
    return outcome, trace
