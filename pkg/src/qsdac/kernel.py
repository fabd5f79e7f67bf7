"""Finite-state sub-Markovian kernels and the regenerative kernel K_alpha.

A kernel is stored as a dense ``(N, N)`` array ``K`` of transition
probabilities between the non-absorbing states ``0..N-1``.  The mass that
leaves the state space from ``x`` (the exit mass ``1 - sum_y K(x, y)``) is
precomputed at construction; the absorbing state itself is never stored and
is represented by the sentinel :data:`ABSORBED` when sampling.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

ABSORBED = -1

STRUCTURAL_TOL = 1e-12
DISTRIBUTION_TOL = 1e-10


class SubMarkovKernel:
    """Dense row-substochastic transition matrix.

    Parameters
    ----------
    matrix : (N, N) array_like
        Transition probabilities ``K(x, y)`` between non-absorbing states.

    Notes
    -----
    Only shape and finiteness are enforced here so that degenerate matrices
    can still be diagnosed with :func:`validate`.  Instances are immutable.
    """

    def __init__(self, matrix):
        entries = np.array(matrix, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1] or entries.shape[0] == 0:
            raise ValueError(f"kernel must be a non-empty square matrix, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise ValueError("kernel entries must be finite")
        row_sums = entries.sum(axis=1)
        exit_mass = 1.0 - row_sums
        # rounding can push a full row a hair above 1
        exit_mass[(exit_mass < 0.0) & (exit_mass >= -STRUCTURAL_TOL)] = 0.0
        entries.setflags(write=False)
        exit_mass.setflags(write=False)
        self._entries = entries
        self._exit_mass = exit_mass
        self._cdf = None

    @property
    def n_states(self) -> int:
        return self._entries.shape[0]

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def exit_mass(self) -> np.ndarray:
        return self._exit_mass

    @property
    def transition_cdf(self) -> np.ndarray:
        """Row-wise CDF of the extended kernel; column ``N`` is absorption."""
        if self._cdf is None:
            cdf = np.cumsum(np.hstack([self._entries, np.clip(self._exit_mass, 0.0, None)[:, None]]), axis=1)
            cdf[:, -1] = 1.0
            cdf.setflags(write=False)
            self._cdf = cdf
        return self._cdf

    def __repr__(self):
        return f"SubMarkovKernel(n_states={self.n_states}, max_exit={self._exit_mass.max():.3g})"


@dataclass
class ValidationReport:
    """Outcome of :func:`validate`: one boolean per invariant plus irreducibility."""

    checks: dict = field(default_factory=dict)
    irreducible: bool = False

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> list:
        return [name for name, ok in self.checks.items() if not ok]

    def lines(self) -> list:
        out = [f"{name}: {'pass' if ok else 'FAIL'}" for name, ok in self.checks.items()]
        out.append(f"irreducible: {'yes' if self.irreducible else 'no'}")
        return out


def validate(K: SubMarkovKernel) -> ValidationReport:
    """Check the kernel invariants without raising."""
    P = K.entries
    row_sums = P.sum(axis=1)
    checks = {
        "entries_in_unit_interval": bool(np.all((P >= 0.0) & (P <= 1.0))),
        "row_sums_at_most_one": bool(np.all(row_sums <= 1.0 + STRUCTURAL_TOL)),
        "nonzero_measure": bool(np.all(row_sums > 0.0)),
        "exit_mass_consistent": bool(
            np.all((K.exit_mass >= 0.0) & (K.exit_mass <= 1.0))
            and np.allclose(K.exit_mass, 1.0 - row_sums, rtol=0.0, atol=STRUCTURAL_TOL)
        ),
        "strictly_sub_markovian": bool(K.exit_mass.max() > 0.0),
    }
    n_comp, _ = connected_components(P > 0.0, directed=True, connection="strong")
    return ValidationReport(checks=checks, irreducible=bool(n_comp == 1))


def as_distribution(weights, n_states: int | None = None, tol: float = DISTRIBUTION_TOL) -> np.ndarray:
    """Return ``weights`` as a float vector after checking it is a probability vector."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1:
        raise ValueError("distribution must be one-dimensional")
    if n_states is not None and w.shape[0] != n_states:
        raise ValueError(f"distribution has length {w.shape[0]}, expected {n_states}")
    if np.any(w < 0.0) or not np.all(np.isfinite(w)):
        raise ValueError("distribution weights must be finite and nonnegative")
    if abs(w.sum() - 1.0) > tol:
        raise ValueError(f"distribution weights sum to {w.sum()!r}, not 1")
    return w


def _check_state(K: SubMarkovKernel, x) -> int:
    x = int(x)
    if not 0 <= x < K.n_states:
        raise IndexError(f"state {x} out of range for {K.n_states} states")
    return x


def k_alpha_row(K: SubMarkovKernel, alpha, x: int) -> np.ndarray:
    """Row ``x`` of the regenerative kernel: ``K(x, .) + exit_mass(x) * alpha``."""
    x = _check_state(K, x)
    return K.entries[x] + K.exit_mass[x] * np.asarray(alpha, dtype=float)


def k_alpha(K: SubMarkovKernel, alpha) -> np.ndarray:
    """Full Markovian matrix ``K_alpha``."""
    return K.entries + np.outer(K.exit_mass, np.asarray(alpha, dtype=float))


def one_step_distribution(K: SubMarkovKernel, alpha) -> np.ndarray:
    """``beta = alpha K_alpha``, the law after one regenerative step from ``alpha``."""
    alpha = np.asarray(alpha, dtype=float)
    return alpha @ K.entries + (alpha @ K.exit_mass) * alpha


def sample_from(p_cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Invert a CDF at uniforms ``u``; zero-probability cells are never returned."""
    idx = np.searchsorted(p_cdf, u, side="right")
    return np.minimum(idx, p_cdf.shape[0] - 1)


def sample_transitions(K: SubMarkovKernel, alpha, xs, rng: np.random.Generator) -> np.ndarray:
    """Draw ``y ~ K_alpha(x, .)`` independently for every state in ``xs``.

    Two-stage scheme: step with the extended kernel; chains that hit the
    absorbing state are redrawn from ``alpha``.
    """
    xs = np.asarray(xs, dtype=np.intp)
    u = rng.random(xs.shape[0])
    ys = (K.transition_cdf[xs] <= u[:, None]).sum(axis=1)
    absorbed = ys == K.n_states
    n_abs = int(absorbed.sum())
    if n_abs:
        ys[absorbed] = sample_from(np.cumsum(alpha), rng.random(n_abs))
    return ys


def sample_transition(K: SubMarkovKernel, alpha, x: int, rng: np.random.Generator) -> int:
    """Single draw from ``K_alpha(x, .)``."""
    x = _check_state(K, x)
    return int(sample_transitions(K, alpha, np.array([x]), rng)[0])


def load_kernel(path) -> SubMarkovKernel:
    """Read a kernel file: first line ``N``, then ``N`` rows of ``N`` probabilities."""
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError(f"{path}: empty kernel file")
    try:
        n = int(lines[0])
        rows = [[float(tok) for tok in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise ValueError(f"{path}: malformed kernel file ({exc})") from None
    if len(rows) != n or any(len(r) != n for r in rows):
        raise ValueError(f"{path}: expected {n} rows of {n} entries")
    return SubMarkovKernel(rows)


def save_kernel(K: SubMarkovKernel, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{K.n_states}\n")
        for row in K.entries:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
