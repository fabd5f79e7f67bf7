"""Dense ground-truth computations for small and medium chains.

Everything here is deterministic and exact up to floating point: the QSD by
power iteration, the stationary law of ``K_alpha``, the average reward, the
differential value function and the policy gradient.  These serve as oracles
for the stochastic algorithms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import kl_div

from .kernel import SubMarkovKernel, k_alpha, one_step_distribution
from .policy import ValueTable, alpha_of, grad_alpha_rows, grad_beta_rows


class ConvergenceError(RuntimeError):
    pass


def _lazy_power(step, v, residual, tol, max_iter, what):
    # v <- (v + step(v)) / 2 shares the Perron vector with step() but is aperiodic
    for _ in range(max_iter):
        w = step(v)
        if residual(v, w) <= tol:
            return v
        v = 0.5 * (v + w)
        v /= v.sum()
    raise ConvergenceError(f"{what} did not converge in {max_iter} iterations")


def qsd_power(K: SubMarkovKernel, tol: float = 1e-12, max_iter: int = 10**6) -> np.ndarray:
    """Quasi-stationary distribution by power iteration from the uniform vector.

    Returns ``alpha`` with ``||alpha - alpha K / (alpha K 1)||_1 <= tol``.
    The iteration is applied to the lazy operator ``(v + vK/|vK|) / 2`` so
    that periodic kernels (e.g. birth-death chains without holding) converge.

    Raises
    ------
    ValueError
        If ``K`` is Markovian (no exit mass anywhere).
    ConvergenceError
        After ``max_iter`` iterations without reaching ``tol``.
    """
    if K.exit_mass.max() <= 0.0:
        raise ValueError("QSD is undefined for a Markovian kernel")
    P = K.entries

    def step(v):
        w = v @ P
        return w / w.sum()

    v = np.full(K.n_states, 1.0 / K.n_states)
    return _lazy_power(step, v, lambda v, w: np.abs(v - w).sum(), tol, max_iter, "qsd_power")


def stationary(K: SubMarkovKernel, alpha, tol: float = 1e-12, max_iter: int = 10**6) -> np.ndarray:
    """Invariant law ``mu`` of ``K_alpha`` with ``||mu - mu K_alpha||_1 <= tol``."""
    P = k_alpha(K, alpha)
    v = np.full(K.n_states, 1.0 / K.n_states)
    return _lazy_power(lambda v: v @ P, v, lambda v, w: np.abs(v - w).sum(), tol, max_iter, "stationary")


@dataclass
class PolicyTables:
    """Dense quantities induced by ``theta``; ``reward[x, y]`` is 0 off the support."""

    alpha: np.ndarray
    beta: np.ndarray
    k_alpha: np.ndarray
    k_beta: np.ndarray
    reward: np.ndarray
    mu: np.ndarray

    @property
    def average_reward(self) -> float:
        # kl_div(p, q) = p ln(p/q) - p + q sums to the row KL; clipping keeps r <= 0 under rounding
        kl = np.maximum(kl_div(self.k_alpha, self.k_beta), 0.0).sum(axis=1)
        return -float(self.mu @ kl)


def policy_tables(K: SubMarkovKernel, theta, tol: float = 1e-12) -> PolicyTables:
    alpha = alpha_of(theta)
    beta = one_step_distribution(K, alpha)
    ka = k_alpha(K, alpha)
    kb = k_alpha(K, beta)
    live = (ka > 0.0) & (K.exit_mass[:, None] > 0.0)
    R = np.zeros_like(ka)
    R[live] = -np.log(ka[live] / kb[live])
    mu = stationary(K, alpha, tol=tol)
    return PolicyTables(alpha, beta, ka, kb, R, mu)


def exact_average_reward(K: SubMarkovKernel, theta) -> float:
    """``r(theta) = -sum_x mu(x) KL(K_alpha(x, .) || K_beta(x, .))``; always ``<= 0``."""
    return policy_tables(K, theta).average_reward


def value_function_from_tables(t: PolicyTables) -> np.ndarray:
    # (I - P) V = c has a one-dimensional kernel of constants; pin V(N-1) = 0
    n = t.k_alpha.shape[0]
    c = (t.k_alpha * t.reward).sum(axis=1) - t.average_reward
    A = np.eye(n) - t.k_alpha
    V = np.zeros(n)
    if n > 1:
        V[:-1] = np.linalg.solve(A[:-1, :-1], c[:-1])
    return V


def bellman_residual(t: PolicyTables, V, r: float | None = None) -> np.ndarray:
    """Per-state ``sum_y K_alpha(x,y)[V(y) + R(x,y) - r] - V(x)``."""
    if r is None:
        r = t.average_reward
    return t.k_alpha @ V + (t.k_alpha * t.reward).sum(axis=1) - r - V


def exact_value_function(K: SubMarkovKernel, theta) -> ValueTable:
    """Differential value function (normalized so the last state has value 0)."""
    t = policy_tables(K, theta)
    V = value_function_from_tables(t)
    res = np.abs(bellman_residual(t, V)).max()
    if not np.isfinite(res) or res > 1e-9:
        raise np.linalg.LinAlgError(f"Bellman system is ill-conditioned (residual {res:.3g})")
    return ValueTable(V, t.average_reward)


def gradient_from_tables(K: SubMarkovKernel, t: PolicyTables, V, baseline: float | None = None) -> np.ndarray:
    """Policy gradient as a dense expectation over ``(X, Y) ~ mu(x) K_alpha(x, y)``.

    ``baseline`` replaces ``r(theta)`` inside the TD bracket; any constant gives
    the same result.
    """
    n = K.n_states
    b = t.average_reward if baseline is None else baseline
    advantage = V[None, :] - V[:, None] + t.reward - b
    w = t.mu[:, None] * t.k_alpha
    live = w > 0.0
    # E[adv * exit(x)/K_alpha(x,y) * grad alpha(y)] collapses onto a weight per y
    coef_a = np.zeros_like(w)
    coef_b = np.zeros_like(w)
    ex = np.broadcast_to(K.exit_mass[:, None], w.shape)
    coef_a[live] = w[live] * advantage[live] * ex[live] / t.k_alpha[live]
    coef_b[live] = w[live] * ex[live] / t.k_beta[live]
    ys = np.arange(n)
    ga = grad_alpha_rows(t.alpha, ys)
    gb = grad_beta_rows(K, t.alpha, ys, t.beta)
    return coef_a.sum(axis=0) @ ga + coef_b.sum(axis=0) @ gb


def exact_policy_gradient(K: SubMarkovKernel, theta, baseline: float | None = None) -> np.ndarray:
    t = policy_tables(K, theta)
    return gradient_from_tables(K, t, value_function_from_tables(t), baseline)


def finite_difference_gradient(K: SubMarkovKernel, theta, h: float = 1e-5) -> np.ndarray:
    """Central differences of :func:`exact_average_reward`, one component at a time."""
    if h <= 0.0:
        raise ValueError("step h must be positive")
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(theta.shape[0]):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (exact_average_reward(K, theta + e) - exact_average_reward(K, theta - e)) / (2.0 * h)
    return g
