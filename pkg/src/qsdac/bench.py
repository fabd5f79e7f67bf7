"""Benchmark chains, error metrics, presets and the experiment harness."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .actor_critic import TrainerConfig, make_rng, train
from .baselines import MAX_EPISODE_STEPS, METHODS as BASELINE_METHODS, run_baseline
from .exact import qsd_power
from .kernel import SubMarkovKernel, load_kernel

ALL_METHODS = BASELINE_METHODS + ("ac",)
TIMING_HEADER = ("method", "accuracy_threshold", "wall_seconds", "iterations", "final_l2_error")


def loopy_chain(eps: float) -> SubMarkovKernel:
    """Three states, each moving to every state w.p. ``(1-eps)/3`` and exiting w.p. ``eps``."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    return SubMarkovKernel(np.full((3, 3), (1.0 - eps) / 3.0))


def constant_rho(value: float):
    return lambda i: value


def linear_rho(n_states: int):
    """``rho_i = 2 - 3 (i - 1) / (2N - 4)``; crosses 1 near ``i = 2N/3``."""
    return lambda i: 2.0 - 3.0 * (i - 1) / (2 * n_states - 4)


def mm1n_queue(n_states: int, rho) -> SubMarkovKernel:
    """Birth-death queue on states ``1..N`` (stored 0-based) killed from state 1.

    ``rho`` maps a 1-based state ``i < N`` to ``rho_i > 0`` (a number means
    constant).  State ``i`` moves up w.p. ``rho_i / (rho_i + 1)`` and down (or
    out, from state 1) w.p. ``1 / (rho_i + 1)``; state ``N`` always moves to ``N - 1``.
    """
    if n_states < 3:
        raise ValueError("queue needs at least 3 states")
    if not callable(rho):
        rho = constant_rho(float(rho))
    K = np.zeros((n_states, n_states))
    for i in range(1, n_states):
        r = float(rho(i))
        if not r > 0.0:
            raise ValueError(f"rho_{i} = {r} must be positive")
        up, down = r / (r + 1.0), 1.0 / (r + 1.0)
        K[i - 1, i] = up
        if i > 1:
            K[i - 1, i - 2] = down
    K[n_states - 1, n_states - 2] = 1.0
    return SubMarkovKernel(K)


def l2_error(alpha, alpha_star) -> float:
    a = np.asarray(alpha, dtype=float)
    b = np.asarray(alpha_star, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def fit_loglog_slope(iterations, errors, window=None) -> float:
    """Least-squares slope of ``ln(error)`` against ``ln(iteration)`` inside ``window``."""
    it = np.asarray(iterations, dtype=float)
    err = np.asarray([np.nan if e is None else e for e in errors], dtype=float)
    mask = np.isfinite(err) & (err > 0) & (it > 0)
    if window is not None:
        lo, hi = window
        mask &= (it >= lo) & (it <= hi)
    if mask.sum() < 10:
        raise ValueError(f"need at least 10 positive points in the window, got {int(mask.sum())}")
    slope, _ = np.polyfit(np.log(it[mask]), np.log(err[mask]), 1)
    return float(slope)


# -- presets -----------------------------------------------------------------

def queue_const_theta0(n_states: int = 500) -> np.ndarray:
    """Initial logits for the constant-rho queue: a ramp from -35 then a spike of 3."""
    m = n_states - 1
    theta = -35.0 + 35.0 / (m - 1) * np.arange(m - 1)
    return np.append(theta, 3.0)


def queue_linear_theta0() -> np.ndarray:
    """Initial logits for the state-dependent queue with ``N = 500`` (1-based pieces)."""
    theta = np.empty(499)
    i = np.arange(1, 500)
    theta[i <= 250] = 8.0 + 35.0 / 250.0 * (i[i <= 250] - 1)
    theta[250] = 44.0
    theta[(i >= 252) & (i <= 305)] = 43.0
    theta[305] = 48.0
    theta[306] = 42.0
    tail = i >= 308
    theta[tail] = 43.0 - 38.0 / 293.0 * (i[tail] - 1)
    return theta


def resample_theta(theta: np.ndarray, n_states: int) -> np.ndarray:
    """Shrink a logit profile to ``n_states - 1`` entries by nearest-index sampling."""
    src = np.asarray(theta, dtype=float)
    idx = np.rint(np.linspace(0, src.shape[0] - 1, n_states - 1)).astype(int)
    return src[idx]


@dataclass
class Preset:
    name: str
    chain: str
    eps: float | None = None
    n_states: int | None = None
    rho: str | None = None
    theta0: np.ndarray | None = None
    eta_theta: str = "const:0.01"
    eta_psi: str = "const:0.0001"
    eta_r: str = "const:0.0001"
    batch: int = 1
    step_size: str = "power:0.99"
    anchor_state: int | None = None

    def kernel(self) -> SubMarkovKernel:
        return build_chain(self.chain, eps=self.eps, n_states=self.n_states, rho=self.rho)

    def trainer_kwargs(self) -> dict:
        return dict(eta_theta=self.eta_theta, eta_psi=self.eta_psi, eta_r=self.eta_r, batch_size=self.batch,
                    anchor_state=self.anchor_state)


SMALL_QUEUE_STATES = 50


def preset(name: str, small: bool = False) -> Preset:
    """The experiment settings reported for each benchmark, by name."""
    if name == "loopy-01":
        return Preset(name, "loopy", eps=0.1, theta0=np.array([-1.0, 1.0]), eta_theta="loopy-01",
                      batch=4, step_size="power:0.99")
    if name == "loopy-09":
        return Preset(name, "loopy", eps=0.9, theta0=np.array([4.0, -2.0]), eta_theta="const:0.04",
                      batch=32, step_size="power:0.99")
    if name in ("queue-const", "queue-linear"):
        n = SMALL_QUEUE_STATES if small else 500
        if name == "queue-const":
            theta0, rho, eta, batch = queue_const_theta0(), "const:1.25", "const:0.0003", 64
        else:
            theta0, rho, eta, batch = queue_linear_theta0(), "linear", "const:0.0002", 128
        if small:
            theta0 = resample_theta(theta0, n)
        return Preset(name, "mm1n", n_states=n, rho=rho, theta0=theta0, eta_theta=eta, batch=batch,
                      step_size="power:0.95", anchor_state=0)
    raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")


PRESET_NAMES = ("loopy-01", "loopy-09", "queue-const", "queue-linear")


def parse_rho(text: str, n_states: int):
    text = str(text).strip()
    if text == "linear":
        return linear_rho(n_states)
    if text.startswith("const:"):
        return constant_rho(float(text[6:]))
    return constant_rho(float(text))


def build_chain(chain: str, eps: float | None = None, n_states: int | None = None, rho=None,
                kernel_file=None) -> SubMarkovKernel:
    if chain == "loopy":
        return loopy_chain(0.1 if eps is None else float(eps))
    if chain == "mm1n":
        n = 500 if n_states is None else int(n_states)
        return mm1n_queue(n, parse_rho("const:1.25" if rho is None else rho, n))
    if chain == "file":
        if kernel_file is None:
            raise ValueError("chain 'file' needs a kernel file")
        return load_kernel(kernel_file)
    raise ValueError(f"unknown chain {chain!r}")


# -- experiments -------------------------------------------------------------

@dataclass
class ExperimentSpec:
    """Everything needed to reproduce one benchmark run.

    ``method`` is one of ``vanilla``, ``projection``, ``polyak`` or ``ac``.
    ``iters`` counts episodes for the baselines and updates for ``ac``.
    """

    kernel: SubMarkovKernel
    method: str
    seeds: tuple = (0,)
    iters: int = 1000
    out_dir: str = "."
    theta0: np.ndarray | None = None
    trainer: dict = field(default_factory=dict)
    step_size: str = "power:0.99"
    reference: np.ndarray | None = None
    threshold: float | None = None
    time_limit: float | None = None
    record_every: int = 1
    max_episode_steps: int = MAX_EPISODE_STEPS
    stop_at_threshold: bool = False
    svg: bool = False
    wall_clock: bool = False
    label: str = ""


@dataclass
class TimingRow:
    method: str
    threshold: float | None
    seconds: float | None
    iterations: int
    final_error: float | None


def run_single(spec: ExperimentSpec, seed: int):
    """One seed of one method; returns ``(trace, timing_row)``."""
    ref = spec.reference if spec.reference is not None else qsd_power(spec.kernel)
    target = spec.threshold if spec.stop_at_threshold else None
    if spec.method == "ac":
        theta0 = np.zeros(spec.kernel.n_states - 1) if spec.theta0 is None else spec.theta0
        cfg = TrainerConfig(max_iters=spec.iters, seed=seed, record_every=spec.record_every, **spec.trainer)
        res = train(spec.kernel, cfg, theta0, reference=ref, target_error=target, time_limit=spec.time_limit)
        iterations = res.state.iteration
    elif spec.method in BASELINE_METHODS:
        res = run_baseline(spec.kernel, spec.method, spec.iters, make_rng(seed), step_size=spec.step_size,
                           reference=ref, target_error=target, time_limit=spec.time_limit,
                           record_every=spec.record_every, max_steps=spec.max_episode_steps)
        iterations = res.iterations
    else:
        raise ValueError(f"unknown method {spec.method!r}")
    trace = res.trace
    seconds = res.seconds_to_target
    if seconds is None and spec.threshold is not None:
        # first recorded crossing when not stopping early
        i = trace.first_below(spec.threshold)
        seconds = None if i is None else trace.wall_ms[i] / 1e3
    final = trace.l2_error[-1] if len(trace) else None
    return trace, TimingRow(spec.method, spec.threshold, seconds, iterations, final)


def run_experiment(spec: ExperimentSpec) -> dict:
    """Run every seed, write ``<label><method>_seed<k>.csv`` per seed and return paths and timings."""
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if spec.reference is None:
        spec.reference = qsd_power(spec.kernel)
    paths, traces, rows = [], [], []
    for seed in spec.seeds:
        trace, row = run_single(spec, seed)
        path = out / f"{spec.label}{spec.method}_seed{seed}.csv"
        trace.write_csv(path, wall_clock=spec.wall_clock)
        paths.append(path)
        traces.append(trace)
        rows.append(row)
    if spec.svg:
        svg_path = out / f"{spec.label}{spec.method}.svg"
        write_loglog_svg(svg_path, traces, title=f"{spec.label}{spec.method}")
        paths.append(svg_path)
    return {"paths": paths, "traces": traces, "timing": rows}


def summarize_timing(rows) -> TimingRow:
    """Median seconds-to-threshold across seeds (blank if any seed missed it)."""
    secs = [r.seconds for r in rows]
    seconds = None if any(s is None for s in secs) else float(np.median(secs))
    finals = [r.final_error for r in rows if r.final_error is not None]
    return TimingRow(rows[0].method, rows[0].threshold, seconds, int(np.median([r.iterations for r in rows])),
                     float(np.median(finals)) if finals else None)


def write_timing_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMING_HEADER)
        for r in rows:
            w.writerow([
                r.method,
                "" if r.threshold is None else repr(r.threshold),
                "" if r.seconds is None else f"{r.seconds:.4f}",
                r.iterations,
                "" if r.final_error is None else repr(r.final_error),
            ])


def write_loglog_svg(path, traces, title: str = "", width: int = 480, height: int = 320) -> None:
    """Log-log polylines of L2 error against iteration, one per trace."""
    pts = []
    for tr in traces:
        pts.append([(i, e) for i, e in zip(tr.iteration, tr.l2_error) if e is not None and e > 0 and i > 0])
    flat = [p for line in pts for p in line]
    pad = 40
    body = []
    if flat:
        lx = [math.log10(i) for i, _ in flat]
        ly = [math.log10(e) for _, e in flat]
        x0, x1 = min(lx), max(max(lx), min(lx) + 1e-9)
        y0, y1 = min(ly), max(max(ly), min(ly) + 1e-9)

        def sx(v):
            return pad + (math.log10(v) - x0) / (x1 - x0) * (width - 2 * pad)

        def sy(v):
            return height - pad - (math.log10(v) - y0) / (y1 - y0) * (height - 2 * pad)

        colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
        for k, line in enumerate(pts):
            coords = " ".join(f"{sx(i):.2f},{sy(e):.2f}" for i, e in line)
            body.append(f'<polyline fill="none" stroke="{colors[k % len(colors)]}" stroke-width="1" points="{coords}"/>')
        body.append(f'<text x="{pad}" y="{height - 8}" font-size="10">log10 iteration {x0:.2f} .. {x1:.2f}</text>')
        body.append(f'<text x="4" y="{pad - 8}" font-size="10">log10 L2 error {y0:.2f} .. {y1:.2f}</text>')
    Path(path).write_text(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" fill="none" stroke="black"/>\n'
        f'<text x="{width / 2:.0f}" y="16" font-size="12" text-anchor="middle">{title}</text>\n'
        + "\n".join(body) + "\n</svg>\n"
    )
