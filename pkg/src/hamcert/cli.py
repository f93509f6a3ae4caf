"""Command-line front end: experiment presets, figure-data reproduction,
seeded runs, and CSV/JSON file output.

Subcommands: `certify` (verdict sweeps over deviation size), `monitor`
(drift scenarios through the online detector, or a reject-count stream on
stdin), `arl` (exact and Monte Carlo run-length tables).  Every output
file starts with a header block echoing the tool version, the full
configuration, and the seed; identical config and seed give byte-identical
files.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, certify, cusum, monitor, qstate, rng
from .pauli import CapacityError, SparseHamiltonian, frobenius_distance, rydberg_hamiltonian

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAPACITY = 3
EXIT_COMMENSURABILITY = 4

GOLDEN_RATIO = (1 + math.sqrt(5)) / 2

#: Rydberg chain constants shared by every figure preset.
RYDBERG_PARAMS = {"omega": 1.0, "delta": 2.5, "rb": 1.5, "a": 1.0}

#: Deviation-norm grid of the certification sweep (20 values).
FIG2_DEV_GRID = [round(0.025 * k, 3) for k in range(1, 21)]

#: Change-scenario window and horizon of the monitoring presets
#: (total-evolution-time units; one step advances t*shots = 10).
FIG3_WINDOW_START = 300.0
FIG3_WINDOW_WIDTH = 30.0
FIG3_HORIZON = 250

#: Deviation norms of the delay-vs-deviation sweep.
FIG4_NORM_GRID = [0.4, 0.6, 0.8, 1.2]
FIG4_HORIZON = 1500


def _rydberg(n: int, params: dict = RYDBERG_PARAMS) -> SparseHamiltonian:
    return rydberg_hamiltonian(
        n, params["omega"], params["delta"], params["rb"], params["a"]
    )


def _fig_plan(shots: int) -> certify.ProtocolPlan:
    """Shared protocol plan of the figure presets: t = 0.1, xi = 0.002."""
    return certify.plan_parameters(
        3, 1.0, epsilon=math.sqrt(4 * 0.002), delta=0.01, shots=shots
    )


def _seeded_unit_direction(seed: int, n: int) -> dict:
    """Unit-Frobenius GUE deviation direction pinned by the seed."""
    return monitor.unit_frobenius_direction(rng.stream(seed, 0xD17), n)


def _header_lines(tool: str, config: dict, seed: int) -> list[str]:
    echo = " ".join(f"{k}={config[k]}" for k in sorted(config))
    return [
        f"# hamcert {__version__} {tool}",
        f"# config: {echo}",
        f"# seed: {seed}",
    ]


def _write_text(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path: Path, tool: str, config: dict, seed: int, payload: dict) -> None:
    doc = {
        "tool": f"hamcert {__version__} {tool}",
        "config": {k: config[k] for k in sorted(config)},
        "seed": seed,
        **payload,
    }
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def wilson_interval(successes: int, total: int, z: float = 1.0) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if total <= 0:
        raise ValueError("total must be positive")
    p_hat = successes / total
    denom = 1 + z * z / total
    center = (p_hat + z * z / (2 * total)) / denom
    half = z * math.sqrt(p_hat * (1 - p_hat) / total + z * z / (4 * total * total)) / denom
    return center - half, center + half


def _perturbed(h0: SparseHamiltonian, direction: dict, norm: float) -> SparseHamiltonian:
    terms = dict(h0.terms)
    for word, mu in direction.items():
        terms[word] = terms.get(word, 0.0) + norm * mu
    return SparseHamiltonian.with_exact_norm_bound(
        h0.n, terms, relaxed_coefficients=True
    )


# ----------------------------------------------------------------------
# certify
# ----------------------------------------------------------------------

def _certify_point(args: tuple) -> tuple[float, int, int]:
    """Worker: (dev_norm, rejects, total_shots) for one sweep point."""
    n, dev_norm, rounds, shots, seed, point_index = args
    h0 = _rydberg(n)
    direction = _seeded_unit_direction(seed, n)
    h_lab = _perturbed(h0, direction, dev_norm) if dev_norm else h0
    plan = certify.plan_parameters(
        n, 1.0, epsilon=0.2, delta=0.01, shots=shots, rounds=rounds
    )
    stream = rng.stream(seed, 1, point_index)
    evolve = certify.hamiltonian_evolver(h_lab)
    rejects = sum(
        certify.certification_round(evolve, h0, plan, stream)
        for _ in range(plan.rounds)
    )
    return dev_norm, rejects, plan.rounds * plan.shots


def cmd_certify(args: argparse.Namespace) -> int:
    n = args.n
    rounds = args.rounds
    config = {
        "preset": args.preset or "",
        "n": n,
        "rounds": rounds,
        "shots": args.shots,
        "mode": args.mode,
        "threshold": args.threshold,
        "dev_norm": args.dev_norm,
        "sweep": bool(args.sweep or args.preset == "fig2"),
        **RYDBERG_PARAMS,
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = FIG2_DEV_GRID if config["sweep"] else [args.dev_norm]
    jobs = [
        (n, dev, rounds, args.shots, args.seed, i) for i, dev in enumerate(grid)
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_certify_point, jobs))
    else:
        results = [_certify_point(job) for job in jobs]
    plan = certify.plan_parameters(
        n, 1.0, epsilon=0.2, delta=0.01, shots=args.shots, rounds=rounds
    )
    lines = _header_lines("certify", config, args.seed)
    lines.append("n,dev_norm,accept_prob,wilson_lo,wilson_hi")
    summary_rows = []
    for dev_norm, rejects, total in results:
        accepts = total - rejects
        lo, hi = wilson_interval(accepts, total)
        lines.append(f"{n},{dev_norm!r},{accepts / total!r},{lo!r},{hi!r}")
        fraction = rejects / total
        decision = "Fail" if fraction > args.threshold else "Pass"
        if args.mode == "LRT":
            decision = certify.decide(
                [rejects], plan_with_totals(plan, total), "LRT"
            ).decision
        summary_rows.append(
            {
                "dev_norm": dev_norm,
                "rejects": rejects,
                "total_shots": total,
                "reject_fraction": fraction,
                "decision": decision,
            }
        )
    _write_text(out / "certify_sweep.csv", lines)
    _write_json(
        out / "certify_summary.json",
        "certify",
        config,
        args.seed,
        {
            "plan": plan_dict(plan),
            "points": summary_rows,
        },
    )
    return EXIT_OK


def plan_with_totals(plan: certify.ProtocolPlan, total: int) -> certify.ProtocolPlan:
    """View of a plan treating the whole sweep point as one N*s-shot round."""
    return certify.ProtocolPlan(
        n=plan.n,
        norm_bound=plan.norm_bound,
        epsilon=plan.epsilon,
        delta=plan.delta,
        c=plan.c,
        t=plan.t,
        taylor_order=plan.taylor_order,
        xi=plan.xi,
        kappa=plan.kappa,
        rounds=1,
        shots=total,
    )


def plan_dict(plan: certify.ProtocolPlan) -> dict:
    return {
        "n": plan.n,
        "norm_bound": plan.norm_bound,
        "epsilon": plan.epsilon,
        "delta": plan.delta,
        "c": plan.c,
        "t": plan.t,
        "taylor_order": plan.taylor_order,
        "xi": plan.xi,
        "kappa": plan.kappa,
        "rounds": plan.rounds,
        "shots": plan.shots,
    }


# ----------------------------------------------------------------------
# monitor
# ----------------------------------------------------------------------

SCENARIO_KEYS = {
    "n": int,
    "omega": float,
    "delta": float,
    "rb": float,
    "a": float,
    "sigma_small": float,
    "sigma_large": float,
    "window_start": float,
    "window_width": float,
    "shots": int,
    "h": float,
    "seed": int,
    "xi": float,
    "horizon": int,
    "trials": int,
    "accumulate": int,
    "law": str,
}


def load_scenario_config(path: Path) -> dict:
    """Parse a line-oriented key=value scenario file."""
    if not path.is_file():
        raise FileNotFoundError(f"config file {path} not found")
    values: dict = {}
    for ln in path.read_text(encoding="utf-8").splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if "=" not in ln:
            raise ValueError(f"bad config line {ln!r}")
        key, raw = (part.strip() for part in ln.split("=", 1))
        if key not in SCENARIO_KEYS:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = SCENARIO_KEYS[key](raw)
    return values


def _monitor_defaults(preset: str | None) -> dict:
    base = {
        "n": 3,
        **RYDBERG_PARAMS,
        "sigma_small": 0.01,
        "sigma_large": 0.1,
        "window_start": FIG3_WINDOW_START,
        "window_width": FIG3_WINDOW_WIDTH,
        "shots": 100,
        "h": 3.0,
        "xi": 0.002,
        "horizon": FIG3_HORIZON,
        "trials": 1,
        "accumulate": 1,
        "law": "gue",
        "seed": 7,
    }
    if preset == "fig3-left":
        base["trials"] = 120
    elif preset == "fig3-right":
        # no-change regime: independent small jitter about the target,
        # no disturbance window
        base.update({"window_width": 0.0, "accumulate": 0, "trials": 120})
    elif preset is not None:
        raise ValueError(f"unknown monitor preset {preset!r}")
    return base


def _monitor_trial(args: tuple) -> dict:
    cfg, trial = args
    h0 = rydberg_hamiltonian(
        cfg["n"], cfg["omega"], cfg["delta"], cfg["rb"], cfg["a"]
    )
    plan = certify.plan_parameters(
        cfg["n"],
        1.0,
        epsilon=math.sqrt(4 * cfg["xi"]),
        delta=0.01,
        shots=cfg["shots"],
    )
    det_cfg = cusum.CusumConfig(
        p=plan.p_null, q=plan.q_alt, h=cfg["h"], shots=cfg["shots"]
    )
    scenario = monitor.DriftScenario(
        base=h0,
        sigma_small=cfg["sigma_small"],
        sigma_large=cfg["sigma_large"],
        window_start=cfg["window_start"],
        window_width=cfg["window_width"],
        law=cfg["law"],
        accumulate=bool(cfg["accumulate"]),
    )
    result = monitor.detect(
        scenario, h0, plan, det_cfg, rng.stream(cfg["seed"], 2, trial),
        horizon=cfg["horizon"],
    )
    return {
        "trial": trial,
        "steps": result.steps,
        "total_time": result.total_time,
        "changepoint_estimate": result.changepoint_estimate,
        "censored": result.censored,
        "trace": [
            (tr.step, tr.total_time, tr.reject_count, tr.score_increment,
             tr.cumulative_score, tr.frobenius_deviation)
            for tr in result.trace
        ],
    }


def _run_stdin_detector(cfg: dict, stream) -> dict:
    """CUSUM over a line-oriented stream of reject counts."""
    plan_q = cfg["xi"] / cfg["n"]
    plan_p = cfg["xi"] / (2 * cfg["n"])
    det_cfg = cusum.CusumConfig(p=plan_p, q=plan_q, h=cfg["h"], shots=cfg["shots"])
    state = cusum.CusumState()
    for ln in stream:
        ln = ln.strip()
        if not ln:
            continue
        state = cusum.cusum_step(state, cusum.llr(int(ln), det_cfg), det_cfg.h)
        if state.terminated:
            break
    return {
        "steps": state.step,
        "terminated": state.terminated,
        "changepoint_estimate": state.last_zero,
        "cumulative_score": state.score,
    }


def cmd_monitor(args: argparse.Namespace) -> int:
    cfg = _monitor_defaults(args.preset)
    if args.config:
        cfg.update(load_scenario_config(Path(args.config)))
    if args.trials is not None:
        cfg["trials"] = args.trials
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.stdin:
        result = _run_stdin_detector(cfg, sys.stdin)
        json.dump(result, sys.stdout, sort_keys=True)
        sys.stdout.write("\n")
        return EXIT_OK
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, trial) for trial in range(cfg["trials"])]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_monitor_trial, jobs))
    else:
        results = [_monitor_trial(job) for job in jobs]
    lines = _header_lines("monitor", cfg, cfg["seed"])
    lines.append("trial,step,total_time,reject_count,z,s,frobenius_deviation")
    for res in results:
        for step, total_time, rejects, z, s, dev in res["trace"]:
            lines.append(
                f"{res['trial']},{step},{total_time!r},{rejects},{z!r},{s!r},{dev!r}"
            )
    _write_text(out / "monitor_trace.csv", lines)
    _write_json(
        out / "monitor_result.json",
        "monitor",
        cfg,
        cfg["seed"],
        {
            "trials": [
                {k: v for k, v in res.items() if k != "trace"} for res in results
            ]
        },
    )
    return EXIT_OK


# ----------------------------------------------------------------------
# arl
# ----------------------------------------------------------------------

def _golden_config(h_units: float) -> cusum.CusumConfig:
    return cusum.CusumConfig(p=1 - GOLDEN_RATIO / 2, q=0.5, h=h_units)


def cmd_arl(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed
    if args.preset == "fig4-right":
        cfg = {
            "preset": args.preset,
            "n": 3,
            "xi": 0.002,
            "shots": 100,
            "h": 3.0,
            "trials": args.trials,
            "norm_grid": ",".join(map(str, FIG4_NORM_GRID)),
            "horizon": FIG4_HORIZON,
        }
        h0 = _rydberg(3)
        plan = _fig_plan(shots=100)
        det_cfg = cusum.CusumConfig(p=plan.p_null, q=plan.q_alt, h=3.0, shots=100)
        rows = monitor.delay_vs_deviation_sweep(
            h0, FIG4_NORM_GRID, args.trials, plan, det_cfg,
            rng.stream(seed, 3), horizon=FIG4_HORIZON,
        )
        lines = _header_lines("arl", cfg, seed)
        lines.append("h,theta_or_norm,arl,method")
        for row in rows:
            lines.append(f"3.0,{row.deviation_norm!r},{row.median_steps!r},monte-carlo")
        _write_text(out / "arl_fig4_right.csv", lines)
        _write_json(
            out / "arl_fig4_right.json", "arl", cfg, seed,
            {
                "rows": [
                    {
                        "deviation_norm": row.deviation_norm,
                        "median_steps": row.median_steps,
                        "lo_steps": row.lo_steps,
                        "hi_steps": row.hi_steps,
                        "censored_fraction": row.censored_fraction,
                    }
                    for row in rows
                ]
            },
        )
        return EXIT_OK
    # lattice table (golden preset or explicit overrides)
    p = args.p if args.p is not None else 1 - GOLDEN_RATIO / 2
    q = args.q if args.q is not None else 0.5
    try:
        up, down, unit = cusum.bernoulli_lattice_units(p, q)
    except cusum.CommensurabilityError as exc:
        print(f"commensurability error: {exc}", file=sys.stderr)
        return EXIT_COMMENSURABILITY
    h_values = args.h or list(range(2, 53, 5))
    thetas = args.theta or [round(0.02 + 0.04 * k, 2) for k in range(25)]
    cfg = {
        "preset": args.preset or "lattice",
        "p": p,
        "q": q,
        "up": up,
        "down": down,
        "unit": unit,
        "h_values": ",".join(map(str, h_values)),
        "mc_trials": args.trials,
    }
    lines = _header_lines("arl", cfg, seed)
    lines.append("h,theta_or_norm,arl,method")
    for h in h_values:
        for theta in thetas + [p, q]:
            val = cusum.arl_lattice(theta, up, down, int(h))
            lines.append(f"{h},{theta!r},{val!r},exact-lattice")
    # Monte Carlo cross-check rows at the hypothesis points, small h only
    stream = rng.stream(seed, 4)
    mc_rows = []
    for h in [hv for hv in h_values if hv <= 12]:
        for theta in (p, q):
            sampler = _lattice_score_sampler(theta, up, down)
            mc = cusum.arl_monte_carlo(sampler, float(h), args.trials, stream)
            lines.append(f"{h},{theta!r},{mc.mean!r},monte-carlo")
            mc_rows.append(
                {"h": h, "theta": theta, "mean": mc.mean, "stderr": mc.stderr}
            )
    _write_text(out / "arl_table.csv", lines)
    _write_json(out / "arl_table.json", "arl", cfg, seed, {"monte_carlo": mc_rows})
    return EXIT_OK


def _lattice_score_sampler(theta: float, up: int, down: int) -> cusum.ScoreSampler:
    def sample(stream: np.random.Generator, size: int) -> np.ndarray:
        return np.where(stream.random(size) < theta, float(up), float(-down))

    return sample


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hamcert",
        description="Hamiltonian certification and drift-detection experiments",
    )
    parser.add_argument("--version", action="version", version=f"hamcert {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    cert = sub.add_parser("certify", help="certification verdicts vs deviation size")
    cert.add_argument("--preset", choices=["fig2"])
    cert.add_argument("--n", type=int, default=3)
    cert.add_argument("--dev-norm", type=float, default=0.0)
    cert.add_argument("--sweep", action="store_true", help="run the deviation grid")
    cert.add_argument("--rounds", type=int, default=20000)
    cert.add_argument("--shots", type=int, default=1)
    cert.add_argument("--mode", choices=["FRACTION", "LRT"], default="FRACTION")
    cert.add_argument("--threshold", type=float, default=1e-4)
    cert.add_argument("--seed", type=int, default=7)
    cert.add_argument("--out", default="out")
    cert.add_argument("--jobs", type=int, default=1)
    cert.set_defaults(func=cmd_certify)

    mon = sub.add_parser("monitor", help="online drift detection scenarios")
    mon.add_argument("--preset", choices=["fig3-left", "fig3-right"])
    mon.add_argument("--config", help="key=value scenario file")
    mon.add_argument("--trials", type=int)
    mon.add_argument("--seed", type=int)
    mon.add_argument("--out", default="out")
    mon.add_argument("--jobs", type=int, default=1)
    mon.add_argument(
        "--stdin", action="store_true",
        help="read reject counts from standard input instead of simulating",
    )
    mon.set_defaults(func=cmd_monitor)

    arl = sub.add_parser("arl", help="expected run-length tables")
    arl.add_argument("--preset", choices=["fig4-left", "fig4-right"])
    arl.add_argument("--h", type=float, nargs="*")
    arl.add_argument("--theta", type=float, nargs="*")
    arl.add_argument("--p", type=float)
    arl.add_argument("--q", type=float)
    arl.add_argument("--trials", type=int, default=100000)
    arl.add_argument("--seed", type=int, default=7)
    arl.add_argument("--out", default="out")
    arl.set_defaults(func=cmd_arl)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY


if __name__ == "__main__":
    sys.exit(main())
