"""Episode-based stochastic-approximation estimators of the QSD.

Three comparison methods, all driven by episodes of the killed chain that
start from the current estimate ``alpha_n`` and run until absorption:

* vanilla: weighted average of occupation measures, normalized by the running
  mean extinction time;
* projection: Robbins-Monro step ``alpha_n + eps_n (visits - tau alpha_n)``
  followed by Euclidean projection onto the simplex;
* polyak: running mean of the projection iterates.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numba
import numpy as np

from .kernel import SubMarkovKernel, sample_from
from .schedules import Power, parse_schedule
from .trace import Trace

MAX_EPISODE_STEPS = 10**9


@dataclass
class EpisodeTrace:
    visits: np.ndarray
    extinction_time: int


class RunawayEpisodeError(RuntimeError):
    """Raised when an episode exceeds ``MAX_EPISODE_STEPS`` without absorption."""


@numba.njit(cache=True)
def _walk(cdf, state, uniforms, visits):
    # returns (state after the last consumed draw, draws consumed); state -1 means absorbed
    n = cdf.shape[0]
    for k in range(uniforms.shape[0]):
        visits[state] += 1
        u = uniforms[k]
        row = cdf[state]
        lo, hi = 0, n
        while lo < hi:
            mid = (lo + hi) // 2
            if row[mid] <= u:
                lo = mid + 1
            else:
                hi = mid
        if lo >= n:
            return -1, k + 1
        state = lo
    return state, uniforms.shape[0]


def simulate_episode(K: SubMarkovKernel, alpha_n, rng: np.random.Generator,
                     max_steps: int = MAX_EPISODE_STEPS) -> EpisodeTrace:
    """Start from ``X_0 ~ alpha_n`` and evolve under the killed chain until absorption."""
    cdf = K.transition_cdf
    visits = np.zeros(K.n_states, dtype=np.int64)
    state = int(sample_from(np.cumsum(alpha_n), rng.random()))
    steps = 0
    chunk = 64
    while True:
        state, used = _walk(cdf, state, rng.random(chunk), visits)
        steps += used
        if state < 0:
            return EpisodeTrace(visits, steps)
        if steps >= max_steps:
            raise RunawayEpisodeError(f"episode exceeded {max_steps} steps without absorption")
        chunk = min(chunk * 2, 1 << 20, max_steps - steps)


def vanilla_update(alpha_n, episode: EpisodeTrace, n: int, tau_sum: int):
    """One step of the occupation-measure recursion.

    ``tau_sum`` is the sum of extinction times of episodes ``1..n``; the new
    episode's time is added before forming the denominator.  Returns
    ``(alpha_{n+1}, tau_sum + tau)``.
    """
    if n < 0:
        raise ValueError("iteration index must be nonnegative")
    alpha_n = np.asarray(alpha_n, dtype=float)
    tau = episode.extinction_time
    new_sum = int(tau_sum) + int(tau)
    innovation = episode.visits - tau * alpha_n
    mean_tau = new_sum / (n + 1)
    return alpha_n + innovation / (n + 1) / mean_tau, new_sum


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum(w) = 1}`` by sorting and thresholding."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.shape[0] + 1)
    k = np.count_nonzero(u - css / ind > 0)
    shift = css[k - 1] / k
    return np.maximum(v - shift, 0.0)


def projection_update(alpha_n, episode: EpisodeTrace, eps_n: float) -> np.ndarray:
    if eps_n <= 0:
        raise ValueError("step size must be positive")
    alpha_n = np.asarray(alpha_n, dtype=float)
    return project_simplex(alpha_n + eps_n * (episode.visits - episode.extinction_time * alpha_n))


def polyak_average(running_mean, alpha_n, n: int) -> np.ndarray:
    """Streaming mean ``nu_n = nu_{n-1} + (alpha_n - nu_{n-1}) / n``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if n == 1:
        return np.array(alpha_n, dtype=float)
    return running_mean + (np.asarray(alpha_n, dtype=float) - running_mean) / n


METHODS = ("vanilla", "projection", "polyak")


@dataclass
class BaselineResult:
    trace: Trace
    alpha: np.ndarray
    iterations: int
    reached_at: int | None = None
    seconds_to_target: float | None = None
    aborted: str | None = None


def run_baseline(K: SubMarkovKernel, method: str, n_iters: int, rng: np.random.Generator,
                 alpha0=None, step_size="power:0.99", reference=None, target_error: float | None = None,
                 time_limit: float | None = None, record_every: int = 1,
                 max_steps: int = MAX_EPISODE_STEPS) -> BaselineResult:
    """Run ``n_iters`` episodes of ``method`` from ``alpha0`` (uniform by default).

    The projection and polyak methods share the same iterates; polyak reports
    the running mean.  ``step_size`` is the ``eps_n`` schedule, evaluated at
    ``n = 1, 2, ...``.  A runaway episode ends the run with ``aborted`` set.
    """
    if method not in METHODS:
        raise ValueError(f"unknown baseline method {method!r}")
    t0 = time.perf_counter()
    eps = parse_schedule(step_size) if not isinstance(step_size, (int, float)) else Power(float(step_size))
    alpha = np.full(K.n_states, 1.0 / K.n_states) if alpha0 is None else np.array(alpha0, dtype=float)
    ref = None if reference is None else np.asarray(reference, dtype=float)
    trace = Trace()
    result = BaselineResult(trace, alpha, 0)
    tau_sum = 0
    nu = None
    for n in range(n_iters):
        try:
            episode = simulate_episode(K, alpha, rng, max_steps)
        except RunawayEpisodeError as exc:
            result.aborted = str(exc)
            break
        if method == "vanilla":
            alpha, tau_sum = vanilla_update(alpha, episode, n, tau_sum)
            estimate = alpha
        else:
            alpha = projection_update(alpha, episode, eps(n + 1))
            if method == "polyak":
                nu = polyak_average(nu, alpha, n + 1)
                estimate = nu
            else:
                estimate = alpha
        it = n + 1
        result.iterations = it
        err = None if ref is None else float(np.linalg.norm(estimate - ref))
        elapsed = time.perf_counter() - t0
        hit = target_error is not None and err is not None and err <= target_error
        if hit and result.reached_at is None:
            result.reached_at, result.seconds_to_target = it, elapsed
        if it % record_every == 0 or it == n_iters or hit:
            trace.append(it, err, None, elapsed * 1e3)
        if hit or (time_limit is not None and elapsed > time_limit):
            break
    result.alpha = np.array(estimate if result.iterations else alpha)
    return result
