"""Command-line front end.

Subcommands: ``exact``, ``train``, ``baseline``, ``bench``, ``validate``.
Settings are resolved as defaults < preset < config file < flags; the
resolved set is printed by ``--dump-config`` in the same ``key = value``
format that ``--config`` reads.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import bench
from .actor_critic import TrainerConfig, make_rng, train
from .baselines import MAX_EPISODE_STEPS, METHODS as BASELINE_METHODS, run_baseline
from .exact import qsd_power
from .kernel import validate
from .policy import BETA_MODES, save_checkpoint

DEFAULTS = {
    "chain": "loopy",
    "eps": 0.1,
    "n_states": 500,
    "rho": "const:1.25",
    "kernel_file": None,
    "method": "vanilla",
    "seed": 0,
    "seeds": 1,
    "iters": 10000,
    "episodes": None,
    "batch": 1,
    "burn_in": 1,
    "beta_mode": "exact",
    "anchor_state": None,
    "eta_theta": "const:0.01",
    "eta_psi": "const:0.0001",
    "eta_r": "const:0.0001",
    "theta0": None,
    "step_size": "power:0.99",
    "threshold": None,
    "time_limit": None,
    "stop_at_threshold": False,
    "record_every": 1,
    "max_episode_steps": MAX_EPISODE_STEPS,
    "out": None,
    "svg": False,
    "wall_clock": False,
    "small": False,
    "checkpoint": None,
}

INT_KEYS = {"n_states", "seed", "seeds", "iters", "episodes", "batch", "burn_in", "record_every", "max_episode_steps"}
FLOAT_KEYS = {"eps", "threshold", "time_limit"}
BOOL_KEYS = {"svg", "wall_clock", "small", "stop_at_threshold"}


class UsageError(Exception):
    pass


def _coerce(key: str, value):
    if value is None or value == "":
        return None
    if key not in DEFAULTS:
        raise UsageError(f"unknown setting {key!r}")
    if isinstance(value, str):
        value = value.strip()
    try:
        if key in INT_KEYS:
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
        if key in BOOL_KEYS:
            if isinstance(value, bool):
                return value
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if key == "anchor_state":
            return "none" if str(value).lower() == "none" else int(value)
        if key == "theta0":
            if isinstance(value, str):
                return np.array([float(v) for v in value.split(",") if v.strip()])
            return np.asarray(value, dtype=float)
    except ValueError:
        raise UsageError(f"bad value for {key}: {value!r}") from None
    return value


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment; dashes in keys become underscores."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key = key.strip().replace("-", "_")
        if key == "preset":
            out["preset"] = value.strip() or None
            continue
        out[key] = _coerce(key, value)
    return out


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, np.ndarray):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(settings: dict) -> str:
    lines = [f"preset = {settings.get('preset') or ''}"]
    lines += [f"{k} = {_format_value(settings[k])}" for k in DEFAULTS]
    return "\n".join(lines) + "\n"


def _preset_settings(name: str, small: bool) -> dict:
    p = bench.preset(name, small=small)
    out = {"chain": p.chain, "theta0": p.theta0, "eta_theta": p.eta_theta, "eta_psi": p.eta_psi,
           "eta_r": p.eta_r, "batch": p.batch, "step_size": p.step_size, "anchor_state": p.anchor_state}
    if p.eps is not None:
        out["eps"] = p.eps
    if p.n_states is not None:
        out["n_states"] = p.n_states
        out["rho"] = p.rho
    if p.chain == "mm1n":
        out.update(threshold=0.2, stop_at_threshold=True, time_limit=600.0)
    else:
        out.update(threshold=0.01)
    return out


def resolve(args: argparse.Namespace) -> dict:
    explicit = {}
    if args.config:
        explicit.update(read_config(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            explicit[key] = _coerce(key, value)
    name = getattr(args, "preset_name", None) or args.preset or explicit.pop("preset", None)
    explicit.pop("preset", None)
    settings = dict(DEFAULTS)
    if name:
        small = bool(explicit.get("small", False))
        try:
            settings.update(_preset_settings(name, small))
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    settings.update(explicit)
    settings["preset"] = name
    if settings["beta_mode"] not in BETA_MODES:
        raise UsageError(f"--beta-mode must be one of {', '.join(BETA_MODES)}")
    return settings


def _kernel(s: dict):
    try:
        return bench.build_chain(s["chain"], eps=s["eps"], n_states=s["n_states"], rho=s["rho"],
                                 kernel_file=s["kernel_file"])
    except OSError as exc:
        raise UsageError(f"cannot read kernel file: {exc}") from None


def _trainer_kwargs(s: dict) -> dict:
    return dict(eta_theta=s["eta_theta"], eta_psi=s["eta_psi"], eta_r=s["eta_r"], batch_size=s["batch"],
                burn_in=s["burn_in"], beta_mode=s["beta_mode"],
                anchor_state=None if s["anchor_state"] in (None, "none") else s["anchor_state"])


def _theta0(s: dict, n_states: int) -> np.ndarray:
    theta0 = s["theta0"]
    if theta0 is None:
        return np.zeros(n_states - 1)
    if theta0.shape[0] != n_states - 1:
        raise UsageError(f"theta0 has {theta0.shape[0]} entries; chain needs {n_states - 1}")
    return theta0


def cmd_exact(s: dict) -> int:
    K = _kernel(s)
    alpha = qsd_power(K)
    fh = open(s["out"], "w", newline="") if s["out"] else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["state", "weight"])
        for i, a in enumerate(alpha):
            w.writerow([i, repr(float(a))])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_validate(s: dict) -> int:
    K = _kernel(s)
    report = validate(K)
    for line in report.lines():
        print(line)
    if not report.passed:
        print(f"error: kernel fails {', '.join(report.failures())}", file=sys.stderr)
        return 1
    return 0


def cmd_train(s: dict) -> int:
    K = _kernel(s)
    ref = qsd_power(K)
    cfg = TrainerConfig(max_iters=s["iters"], seed=s["seed"], record_every=s["record_every"], **_trainer_kwargs(s))
    res = train(K, cfg, _theta0(s, K.n_states), reference=ref, time_limit=s["time_limit"])
    out = s["out"] or "train.csv"
    res.trace.write_csv(out, wall_clock=s["wall_clock"])
    if s["svg"]:
        bench.write_loglog_svg(Path(out).with_suffix(".svg"), [res.trace], title="actor-critic")
    if s["checkpoint"]:
        save_checkpoint(s["checkpoint"], res.state.policy, res.state.values)
    final = res.trace.l2_error[-1] if len(res.trace) else float(np.linalg.norm(res.state.policy.alpha - ref))
    print(f"iterations={res.state.iteration} l2_error={final:.6g} r_estimate={res.state.values.r_estimate:.6g}")
    return 0


def cmd_baseline(s: dict) -> int:
    if s["method"] not in BASELINE_METHODS:
        raise UsageError(f"--method must be one of {', '.join(BASELINE_METHODS)}")
    K = _kernel(s)
    ref = qsd_power(K)
    n = s["episodes"] or s["iters"]
    res = run_baseline(K, s["method"], n, make_rng(s["seed"]), step_size=s["step_size"], reference=ref,
                       time_limit=s["time_limit"], record_every=s["record_every"],
                       max_steps=s["max_episode_steps"])
    out = s["out"] or f"{s['method']}.csv"
    res.trace.write_csv(out, wall_clock=s["wall_clock"])
    if s["svg"]:
        bench.write_loglog_svg(Path(out).with_suffix(".svg"), [res.trace], title=s["method"])
    if res.aborted:
        print(f"error: {res.aborted}", file=sys.stderr)
        return 2
    print(f"episodes={res.iterations} l2_error={bench.l2_error(res.alpha, ref):.6g}")
    return 0


def cmd_bench(s: dict) -> int:
    if not s["preset"]:
        raise UsageError("bench needs a preset name")
    K = _kernel(s)
    ref = qsd_power(K)
    out_dir = Path(s["out"] or f"bench-{s['preset']}")
    seeds = tuple(range(s["seed"], s["seed"] + s["seeds"]))
    summary = []
    for method in bench.ALL_METHODS:
        iters = s["iters"] if method == "ac" else (s["episodes"] or s["iters"])
        spec = bench.ExperimentSpec(
            K, method, seeds=seeds, iters=iters, out_dir=str(out_dir), theta0=_theta0(s, K.n_states),
            trainer=_trainer_kwargs(s), step_size=s["step_size"], reference=ref, threshold=s["threshold"],
            time_limit=s["time_limit"], record_every=s["record_every"], stop_at_threshold=s["stop_at_threshold"],
            max_episode_steps=s["max_episode_steps"],
            svg=s["svg"], wall_clock=s["wall_clock"], label=f"{s['preset']}_",
        )
        result = bench.run_experiment(spec)
        summary.append(bench.summarize_timing(result["timing"]))
    bench.write_timing_csv(out_dir / "timing.csv", summary)
    for row in summary:
        secs = "not reached" if row.seconds is None else f"{row.seconds:.3f} s"
        print(f"{row.method:<11} threshold={row.threshold} time={secs} iterations={row.iterations} "
              f"final_l2={row.final_error if row.final_error is None else format(row.final_error, '.4g')}")
    return 0


COMMANDS = {"exact": cmd_exact, "train": cmd_train, "baseline": cmd_baseline, "bench": cmd_bench,
            "validate": cmd_validate}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--preset", choices=bench.PRESET_NAMES)
    p.add_argument("--chain", choices=("loopy", "mm1n", "file"))
    p.add_argument("--eps", type=float)
    p.add_argument("--n-states", dest="n_states", type=int)
    p.add_argument("--rho", help="const:<v> or linear")
    p.add_argument("--kernel-file", dest="kernel_file")
    p.add_argument("--method")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, help="number of consecutive seeds (bench)")
    p.add_argument("--iters", type=int)
    p.add_argument("--episodes", type=int, help="baseline episode budget (defaults to --iters)")
    p.add_argument("--batch", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--beta-mode", dest="beta_mode", choices=BETA_MODES)
    p.add_argument("--anchor-state", dest="anchor_state",
                   help="draw actor transitions from this state (or 'none' to use the chains)")
    p.add_argument("--eta-theta", dest="eta_theta")
    p.add_argument("--eta-psi", dest="eta_psi")
    p.add_argument("--eta-r", dest="eta_r")
    p.add_argument("--theta0", help="comma-separated initial logits")
    p.add_argument("--step-size", dest="step_size", help="baseline eps_n schedule, e.g. power:0.99")
    p.add_argument("--threshold", type=float)
    p.add_argument("--time-limit", dest="time_limit", type=float, help="seconds per run")
    p.add_argument("--stop-at-threshold", dest="stop_at_threshold", action="store_true", default=None)
    p.add_argument("--record-every", dest="record_every", type=int)
    p.add_argument("--max-episode-steps", dest="max_episode_steps", type=int,
                   help="abort a baseline run when one episode exceeds this many steps")
    p.add_argument("--out")
    p.add_argument("--checkpoint", help="prefix for theta/psi/r checkpoint CSVs (train)")
    p.add_argument("--svg", action="store_true", default=None)
    p.add_argument("--wall-clock", dest="wall_clock", action="store_true", default=None,
                   help="fill the wall_ms column (makes output machine dependent)")
    p.add_argument("--small", action="store_true", default=None, help="50-state queue instead of 500")
    p.add_argument("--dump-config", dest="dump_config", action="store_true",
                   help="print the resolved settings and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsdac", description="Learn quasi-stationary distributions.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("exact", "train", "baseline", "validate"):
        _add_common(sub.add_parser(name))
    p = sub.add_parser("bench")
    p.add_argument("preset_name", choices=bench.PRESET_NAMES)
    _add_common(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        settings = resolve(args)
        if args.dump_config:
            sys.stdout.write(dump_config(settings))
            return 0
        return COMMANDS[args.command](settings)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
