"""Actor-critic learning of the quasi-stationary distribution.

Each iteration advances ``batch_size`` persistent chains under ``K_alpha``
(warm start), consumes one transition ``(X, Y)`` per chain and applies the
three coupled updates driven by the TD error
``delta = R(X, Y) - r + psi(Y) - psi(X)``::

    theta += eta_theta * mean(delta * grad ln K_alpha(X, Y) + grad ln K_beta(X, Y))
    psi[X] += eta_psi * delta / batch_size
    r      += eta_r * mean(delta)

When the kernel exits from a single state ``x0``, the reward vanishes off
``x0`` and the gradient is a positive multiple of the expectation over
``Y ~ K_alpha(x0, .)`` alone.  Setting ``anchor_state = x0`` draws every
batch transition from ``x0`` instead of from the chains, which matters when
``mu_theta(x0)`` is too small for the chains to ever visit it.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .exact import gradient_from_tables, policy_tables
from .kernel import SubMarkovKernel, one_step_distribution, sample_transitions
from .policy import EXACT, STOCHASTIC, SoftmaxPolicy, ValueTable, alpha_of, grad_alpha_rows, grad_beta_rows
from .schedules import parse_schedule
from .trace import Trace

INITIAL_BURN_IN = 100


@dataclass
class TrainerConfig:
    eta_theta: object = 0.01
    eta_psi: object = 1e-4
    eta_r: object = 1e-4
    batch_size: int = 1
    burn_in: int = 1
    max_iters: int = 1000
    seed: int = 0
    beta_mode: str = EXACT
    record_every: int = 1
    anchor_state: int | None = None

    def __post_init__(self):
        self.eta_theta = parse_schedule(self.eta_theta)
        self.eta_psi = parse_schedule(self.eta_psi)
        self.eta_r = parse_schedule(self.eta_r)
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.burn_in < 0 or self.max_iters < 0:
            raise ValueError("burn_in and max_iters must be nonnegative")
        if self.beta_mode not in (EXACT, STOCHASTIC):
            raise ValueError(f"unknown beta mode {self.beta_mode!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")
        if self.anchor_state is not None and self.anchor_state < 0:
            raise ValueError("anchor_state must be a state index")


@dataclass
class TrainerState:
    policy: SoftmaxPolicy
    values: ValueTable
    chain_states: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        self.chain_states = np.asarray(self.chain_states, dtype=np.intp)
        n = self.policy.n_states
        if self.values.psi.shape[0] != n:
            raise ValueError("value table and policy disagree on the number of states")
        if np.any((self.chain_states < 0) | (self.chain_states >= n)):
            raise ValueError("chain states out of range")


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator; all randomness in a run flows from this one seed."""
    return np.random.Generator(np.random.Philox(seed))


def transition_terms(K: SubMarkovKernel, alpha, beta, psi, r, xs, ys, beta_mode: str = EXACT):
    """TD errors and per-transition actor directions for a batch of transitions.

    Returns ``(delta, direction)`` where ``direction[b]`` is
    ``delta[b] * grad ln K_alpha(x_b, y_b) + grad ln K_beta(x_b, y_b)``.
    In stochastic mode ``beta`` is ignored and estimated per transition from
    the single sample ``Z = x_b``.
    """
    xs = np.asarray(xs, dtype=np.intp)
    ys = np.asarray(ys, dtype=np.intp)
    ex = K.exit_mass[xs]
    kxy = K.entries[xs, ys]
    ka = kxy + ex * alpha[ys]
    ga = grad_alpha_rows(alpha, ys)
    if beta_mode == EXACT:
        kb = kxy + ex * beta[ys]
        gb = grad_beta_rows(K, alpha, ys, beta)
    else:
        # beta_hat = K_alpha(x, .), grad beta_hat(y) = grad ln alpha(x) K_alpha(x, y) + exit(x) grad alpha(y)
        kb = kxy + ex * ka
        gb = grad_alpha_rows(alpha, xs) / alpha[xs][:, None] * ka[:, None] + ex[:, None] * ga
    live = ex > 0.0
    if np.any(live & (ka <= 0.0)):
        raise ValueError("transition with zero probability under K_alpha")
    R = np.zeros(xs.shape[0])
    R[live] = -np.log(ka[live] / kb[live])
    delta = R - r + psi[ys] - psi[xs]
    coef_a = np.zeros_like(R)
    coef_b = np.zeros_like(R)
    coef_a[live] = delta[live] * ex[live] / ka[live]
    coef_b[live] = ex[live] / kb[live]
    return delta, coef_a[:, None] * ga + coef_b[:, None] * gb


def td_error(K: SubMarkovKernel, state: TrainerState, x: int, y: int, beta_mode: str = EXACT) -> float:
    alpha = state.policy.alpha
    beta = one_step_distribution(K, alpha) if beta_mode == EXACT else None
    delta, _ = transition_terms(K, alpha, beta, state.values.psi, state.values.r_estimate, [x], [y], beta_mode)
    return float(delta[0])


def step(K: SubMarkovKernel, state: TrainerState, config: TrainerConfig, rng: np.random.Generator) -> TrainerState:
    """One actor-critic iteration; returns a new state."""
    theta = state.policy.theta
    alpha = alpha_of(theta)
    beta = one_step_distribution(K, alpha) if config.beta_mode == EXACT else None
    if config.anchor_state is None:
        xs = state.chain_states
        for _ in range(config.burn_in):
            xs = sample_transitions(K, alpha, xs, rng)
    else:
        xs = np.full(config.batch_size, config.anchor_state, dtype=np.intp)
    ys = sample_transitions(K, alpha, xs, rng)
    psi, r = state.values.psi, state.values.r_estimate
    delta, direction = transition_terms(K, alpha, beta, psi, r, xs, ys, config.beta_mode)

    n = state.iteration + 1
    new_theta = theta + config.eta_theta(n) * direction.mean(axis=0)
    new_psi = psi.copy()
    np.add.at(new_psi, xs, config.eta_psi(n) * delta / delta.shape[0])
    new_r = r + config.eta_r(n) * delta.mean()
    return TrainerState(SoftmaxPolicy(new_theta), ValueTable(new_psi, new_r), ys, n)


def initial_state(K: SubMarkovKernel, config: TrainerConfig, theta0, psi0=None, r0: float = 0.0,
                  rng: np.random.Generator | None = None, burn_in: int = INITIAL_BURN_IN) -> TrainerState:
    """Chains started uniformly and run ``burn_in`` steps toward ``mu_theta0``."""
    if rng is None:
        rng = make_rng(config.seed)
    policy = SoftmaxPolicy(theta0)
    if policy.n_states != K.n_states:
        raise ValueError(f"theta0 has {policy.theta.shape[0]} entries, expected {K.n_states - 1}")
    if config.anchor_state is not None and config.anchor_state >= K.n_states:
        raise ValueError(f"anchor_state {config.anchor_state} out of range for {K.n_states} states")
    values = ValueTable(np.zeros(K.n_states) if psi0 is None else psi0, r0)
    alpha = policy.alpha
    xs = rng.integers(K.n_states, size=config.batch_size)
    for _ in range(burn_in):
        xs = sample_transitions(K, alpha, xs, rng)
    return TrainerState(policy, values, xs, 0)


@dataclass
class TrainResult:
    trace: Trace
    state: TrainerState
    reached_at: int | None = None
    seconds_to_target: float | None = None
    extra: dict = field(default_factory=dict)


def train(K: SubMarkovKernel, config: TrainerConfig, theta0, psi0=None, r0: float = 0.0,
          reference=None, target_error: float | None = None, time_limit: float | None = None) -> TrainResult:
    """Run ``config.max_iters`` iterations (fewer if a stop condition triggers).

    ``reference`` is the true QSD; when given, the trace records the L2 error of
    ``alpha_theta`` and training may stop once it falls to ``target_error``.
    ``time_limit`` (seconds) bounds the wall time.
    """
    t0 = time.perf_counter()
    rng = make_rng(config.seed)
    state = initial_state(K, config, theta0, psi0, r0, rng)
    ref = None if reference is None else np.asarray(reference, dtype=float)
    trace = Trace()
    result = TrainResult(trace, state)
    for _ in range(config.max_iters):
        state = step(K, state, config, rng)
        n = state.iteration
        err = None
        if ref is not None:
            err = float(np.linalg.norm(state.policy.alpha - ref))
        elapsed = time.perf_counter() - t0
        hit = target_error is not None and err is not None and err <= target_error
        if hit and result.reached_at is None:
            result.reached_at, result.seconds_to_target = n, elapsed
        if n % config.record_every == 0 or n == config.max_iters or hit:
            trace.append(n, err, state.values.r_estimate, elapsed * 1e3)
        if hit or (time_limit is not None and elapsed > time_limit):
            break
    result.state = state
    return result


def expected_increments(K: SubMarkovKernel, theta, values: ValueTable, tables=None):
    """Dense expectations of the three update directions under ``mu_theta(x) K_alpha(x, y)``.

    Returns ``(d_theta, d_psi, d_r)``; step sizes are not applied.
    """
    t = policy_tables(K, theta) if tables is None else tables
    psi, r = values.psi, values.r_estimate
    delta = t.reward - r + psi[None, :] - psi[:, None]
    w = t.mu[:, None] * t.k_alpha
    d_theta = gradient_from_tables(K, t, psi, baseline=r)
    d_psi = (w * delta).sum(axis=1)
    return d_theta, d_psi, float(d_psi.sum())
