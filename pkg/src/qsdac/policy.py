"""Softmax parametrization of alpha, tabular values, rewards and score functions.

``theta`` always denotes the ``N - 1`` free logits; the logit of the last
state is pinned to zero.  Gradients are therefore vectors of length ``N - 1``.

``beta`` can be computed exactly (a dense ``O(N^2)`` sum) or estimated from
samples ``Z_i`` as an average of regenerative rows,
``beta_hat = mean_i K_alpha(Z_i, .)``; see :func:`beta_of`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .kernel import SubMarkovKernel, one_step_distribution

EXACT = "exact"
STOCHASTIC = "stochastic"
BETA_MODES = (EXACT, STOCHASTIC)


@dataclass
class SoftmaxPolicy:
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=float).ravel()

    @property
    def n_states(self) -> int:
        return self.theta.shape[0] + 1

    @property
    def alpha(self) -> np.ndarray:
        return alpha_of(self.theta)

    @classmethod
    def uniform(cls, n_states: int) -> "SoftmaxPolicy":
        return cls(np.zeros(n_states - 1))

    @classmethod
    def from_alpha(cls, alpha) -> "SoftmaxPolicy":
        """Logits reproducing a full-support distribution exactly (up to rounding)."""
        alpha = np.asarray(alpha, dtype=float)
        if np.any(alpha <= 0.0):
            raise ValueError("softmax policies need a full-support alpha")
        return cls(np.log(alpha[:-1]) - np.log(alpha[-1]))


@dataclass
class ValueTable:
    psi: np.ndarray
    r_estimate: float = 0.0

    def __post_init__(self):
        self.psi = np.array(self.psi, dtype=float).ravel()
        self.r_estimate = float(self.r_estimate)
        if not (np.all(np.isfinite(self.psi)) and np.isfinite(self.r_estimate)):
            raise ValueError("value table entries must be finite")

    @classmethod
    def zeros(cls, n_states: int) -> "ValueTable":
        return cls(np.zeros(n_states), 0.0)


def alpha_of(theta) -> np.ndarray:
    """Softmax over ``(theta, 0)`` with max-logit subtraction."""
    z = np.append(np.asarray(theta, dtype=float), 0.0)
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def grad_log_alpha(theta, x: int) -> np.ndarray:
    """Score ``d/dtheta ln alpha_theta(x)``: ``1{x=j} - alpha(j)`` for ``j < N-1``."""
    alpha = alpha_of(theta)
    g = -alpha[:-1]
    if x < alpha.shape[0] - 1:
        g[x] += 1.0
    return g


def grad_alpha_rows(alpha: np.ndarray, ys) -> np.ndarray:
    """Rows ``d/dtheta alpha(y)`` for each ``y`` in ``ys``, shape ``(len(ys), N-1)``."""
    ys = np.asarray(ys, dtype=np.intp)
    n = alpha.shape[0]
    g = -np.outer(alpha[ys], alpha[:-1])
    inner = ys < n - 1
    g[np.nonzero(inner)[0], ys[inner]] += alpha[ys[inner]]
    return g


def grad_beta_rows(K: SubMarkovKernel, alpha: np.ndarray, ys, beta: np.ndarray | None = None) -> np.ndarray:
    """Exact ``d/dtheta beta(y)`` for each ``y`` in ``ys``, shape ``(len(ys), N-1)``.

    Expands ``sum_x grad alpha(x) K_alpha(x, y) + (alpha . exit) grad alpha(y)``
    using ``grad alpha(x) = alpha(x) (e_x - alpha)``, which costs ``O(N)`` per ``y``.
    """
    ys = np.asarray(ys, dtype=np.intp)
    if beta is None:
        beta = one_step_distribution(K, alpha)
    head = alpha[:-1]
    # K_alpha(j, y) for j < N-1, one column per requested y
    ka_cols = K.entries[:-1, ys] + np.outer(K.exit_mass[:-1], alpha[ys])
    g = (head[:, None] * ka_cols).T - np.outer(beta[ys], head)
    g += (alpha @ K.exit_mass) * grad_alpha_rows(alpha, ys)
    return g


def beta_of(K: SubMarkovKernel, theta, mode: str = EXACT, z=None) -> np.ndarray:
    """One-step distribution for ``alpha_theta``.

    In ``"stochastic"`` mode ``z`` holds the samples ``Z_1..Z_n`` and the
    estimate ``(1/n) sum_i [K(Z_i, .) + exit(Z_i) alpha]`` is returned.  With
    ``n = 1`` and ``Z_1`` the current chain state this is ``K_alpha(x, .)``.
    """
    alpha = alpha_of(theta)
    if mode == EXACT:
        return one_step_distribution(K, alpha)
    if mode != STOCHASTIC:
        raise ValueError(f"unknown beta mode {mode!r}")
    z = np.atleast_1d(np.asarray(z, dtype=np.intp))
    if z.size == 0:
        raise ValueError("stochastic beta needs at least one sample")
    return K.entries[z].mean(axis=0) + K.exit_mass[z].mean() * alpha


def grad_beta_exact(K: SubMarkovKernel, theta, y: int) -> np.ndarray:
    alpha = alpha_of(theta)
    return grad_beta_rows(K, alpha, [y])[0]


def grad_beta_stochastic(K: SubMarkovKernel, theta, y, z) -> np.ndarray:
    """n-sample estimate of ``d/dtheta beta(y)`` from samples ``Z_i``.

    ``(1/n) sum_i grad ln alpha(Z_i) K_alpha(Z_i, y) + exit(Z_i) grad alpha(y)``;
    unbiased when ``Z_i ~ alpha_theta``.  An array ``y`` gives one row per target.
    """
    alpha = alpha_of(theta)
    z = np.atleast_1d(np.asarray(z, dtype=np.intp))
    ys = np.atleast_1d(np.asarray(y, dtype=np.intp))
    ka = K.entries[np.ix_(z, ys)] + np.outer(K.exit_mass[z], alpha[ys])
    scores = grad_alpha_rows(alpha, z) / alpha[z][:, None]
    g = ka.T @ scores / z.shape[0] + K.exit_mass[z].mean() * grad_alpha_rows(alpha, ys)
    return g if np.ndim(y) else g[0]


def _kernel_entry(K: SubMarkovKernel, dist: np.ndarray, x: int, y: int) -> float:
    return K.entries[x, y] + K.exit_mass[x] * dist[y]


def reward(K: SubMarkovKernel, theta, x: int, y: int, *, beta=None) -> float:
    """One-step reward ``-ln(K_alpha(x, y) / K_beta(x, y))``.

    Rows without exit mass give exactly 0 since both kernels coincide there.
    ``beta`` defaults to the exact one-step distribution.
    """
    if K.exit_mass[x] == 0.0:
        return 0.0
    alpha = alpha_of(theta)
    if beta is None:
        beta = one_step_distribution(K, alpha)
    ka = _kernel_entry(K, alpha, x, y)
    if ka <= 0.0:
        raise ValueError(f"transition {x}->{y} has zero probability under K_alpha")
    return -float(np.log(ka / _kernel_entry(K, beta, x, y)))


def grad_log_k_alpha(K: SubMarkovKernel, theta, x: int, y: int) -> np.ndarray:
    """``exit(x) / K_alpha(x, y) * grad alpha(y)``."""
    alpha = alpha_of(theta)
    if K.exit_mass[x] == 0.0:
        return np.zeros(alpha.shape[0] - 1)
    ka = _kernel_entry(K, alpha, x, y)
    if ka <= 0.0:
        raise ValueError(f"transition {x}->{y} has zero probability under K_alpha")
    return K.exit_mass[x] / ka * grad_alpha_rows(alpha, [y])[0]


def grad_log_k_beta(K: SubMarkovKernel, theta, x: int, y: int, mode: str = EXACT, z=None) -> np.ndarray:
    """``exit(x) / K_beta(x, y) * grad beta(y)`` with exact or sampled ``beta``."""
    alpha = alpha_of(theta)
    if K.exit_mass[x] == 0.0:
        return np.zeros(alpha.shape[0] - 1)
    beta = beta_of(K, theta, mode, z)
    if mode == EXACT:
        gb = grad_beta_rows(K, alpha, [y], beta)[0]
    else:
        gb = grad_beta_stochastic(K, theta, y, z)
    kb = _kernel_entry(K, beta, x, y)
    if kb <= 0.0:
        raise ValueError(f"transition {x}->{y} has zero probability under K_beta")
    return K.exit_mass[x] / kb * gb


def save_vector(path, values) -> None:
    """Checkpoint a vector as ``index,value`` CSV rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "value"])
        for i, v in enumerate(np.asarray(values, dtype=float)):
            w.writerow([i, repr(float(v))])


def load_vector(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = np.empty(len(rows))
    for row in rows:
        out[int(row["index"])] = float(row["value"])
    return out


def save_checkpoint(prefix, policy: SoftmaxPolicy, values: ValueTable) -> list:
    """Write ``<prefix>.theta.csv``, ``<prefix>.psi.csv`` and ``<prefix>.r.csv``."""
    paths = [f"{prefix}.theta.csv", f"{prefix}.psi.csv", f"{prefix}.r.csv"]
    save_vector(paths[0], policy.theta)
    save_vector(paths[1], values.psi)
    save_vector(paths[2], [values.r_estimate])
    return paths


def load_checkpoint(prefix) -> tuple:
    theta = load_vector(f"{prefix}.theta.csv")
    psi = load_vector(f"{prefix}.psi.csv")
    r = load_vector(f"{prefix}.r.csv")
    return SoftmaxPolicy(theta), ValueTable(psi, float(r[0]))
