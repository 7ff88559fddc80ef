"""Shared builders for the test suite."""

import numpy as np

from adafat import FactorModel, HypothesisSplit, validate_dataset


def projection_matrix(W):
    """Dense oracle for Q(W) = I - W (W'W)^-1 W'."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[0] == 1:
        W = W.T
    n = W.shape[0]
    return np.eye(n) - W @ np.linalg.inv(W.T @ W) @ W.T


def bh_oracle(p, tau):
    """Brute-force step-up: largest k with p_(k) <= k tau / m, by enumeration."""
    p = np.asarray(p, dtype=float)
    m = p.size
    order = np.argsort(p)
    k_star = 0
    for k in range(1, m + 1):
        if p[order[k - 1]] <= k * tau / m:
            k_star = k
    return np.sort(order[:k_star])


def make_panel(
    rng,
    n=120,
    m=200,
    q=3,
    p=1,
    alpha=None,
    mu_x=0.3,
    mu_z=0.0,
    sigma_scale=1.0,
):
    """Seeded factor panel with known truth; returns (data, model, split, Z, E)."""
    Gamma = rng.uniform(0.5, 1.5, (q, m)) * rng.choice([-1.0, 1.0], (q, m))
    B = rng.standard_normal((p, m)) if p else np.zeros((0, m))
    if alpha is None:
        alpha = np.zeros(m)
    alpha = np.asarray(alpha, dtype=float)
    sigma = np.eye(m) * sigma_scale**2
    X = mu_x + rng.standard_normal((n, p)) if p else None
    Z = mu_z + rng.standard_normal((n, q))
    E = sigma_scale * rng.standard_normal((n, m))
    Y = alpha[None, :] + Z @ Gamma + E
    if X is not None:
        Y = Y + X @ B
    data = validate_dataset(Y, X)
    model = FactorModel(alpha=alpha, B=B, Gamma=Gamma, Sigma_eps=sigma, q=q)
    split = HypothesisSplit.from_alpha(alpha)
    return data, model, split, Z, E


def random_pvector(rng, max_m=200, with_ties=True):
    """Random p-values in (0, 1], optionally with exact ties."""
    m = int(rng.integers(1, max_m + 1))
    p = rng.uniform(0.0, 1.0, m)
    p[p == 0.0] = 0.5
    if with_ties and m >= 4 and rng.random() < 0.5:
        p = np.round(p, 2)
        p[p == 0.0] = 0.01
    return p
