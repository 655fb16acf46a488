"""Command-line harness: convergence traces, approach comparisons, adherence
sweeps, the exact oracle, scripted replays, and the live session server."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .experiments import (
    APPROACHES,
    ExperimentConfig,
    resolve_env,
    run_comparison,
    run_convergence,
    run_theta_sweep,
    write_csv,
    write_manifest,
)
from .learner import AdherenceLearner, LearnerConfig, ScriptedHdm, run_episode
from .oracle import NonConvergenceError, value_iteration

OUT_DIR_ENV_VAR = "ADHERENCEQ_OUT_DIR"


def _parse_seeds(text: str) -> tuple[int, ...]:
    """Either a count ("20" means seeds 0..19) or an explicit comma list."""
    if "," in text:
        return tuple(int(part) for part in text.split(",") if part.strip())
    return tuple(range(int(text)))


def _parse_grid(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _add_experiment_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--env", default="machine_replacement",
                        help="preset name (machine_replacement, inventory, inventory_small) "
                             "or path to an environment document")
    parser.add_argument("--theta", type=float, default=0.7,
                        help="true adherence level of the simulated decision-maker")
    parser.add_argument("--steps", type=int, default=10_000)
    parser.add_argument("--seeds", type=_parse_seeds, default=(0,),
                        help="seed count, or explicit comma-separated seed list")
    parser.add_argument("--alpha", type=float, default=0.85,
                        help="step size (constant mode) or decay exponent (polynomial mode)")
    parser.add_argument("--alpha-mode", choices=("constant", "polynomial"), default="polynomial")
    parser.add_argument("--epsilon", type=float, default=0.1)
    parser.add_argument("--discount", type=float, default=0.9)
    parser.add_argument("--episode-len", type=int, default=100)
    parser.add_argument("--episode-start", choices=("uniform", "initial"), default="uniform")
    parser.add_argument("--log-every", type=int, default=None)
    parser.add_argument("--initial-q", type=float, default=None,
                        help="initial Q value; default is the optimistic bound "
                             "max(0, R_max) / (1 - discount)")
    parser.add_argument("--approaches", default=",".join(APPROACHES),
                        help="comma-separated subset of "
                             "adherence_aware,classical_q,baseline_only")
    parser.add_argument("--eval-rollouts", type=int, default=30)
    parser.add_argument("--rollout-horizon", type=int, default=200)
    parser.add_argument("--workers", type=int, default=1,
                        help="fan seeds out across this many processes")
    parser.add_argument("--timing", action="store_true",
                        help="write measured wall_ms into the CSV instead of the "
                             "deterministic 0 (breaks byte-identical reruns)")
    parser.add_argument("--preset", choices=("paper",), default=None,
                        help="canonical reproduction preset: constant step size 0.9, "
                             "discount 0.9, one continuing episode from the initial state")
    parser.add_argument("--out", default=None,
                        help=f"output directory (default ${OUT_DIR_ENV_VAR} or cwd)")


def _experiment_config(args, need_grid: bool = False) -> ExperimentConfig:
    alpha_mode, alpha = args.alpha_mode, args.alpha
    episode_len, episode_start = args.episode_len, args.episode_start
    if args.preset == "paper":
        alpha_mode, alpha = "constant", 0.9
        episode_len, episode_start = args.steps, "initial"
    approaches = tuple(part for part in args.approaches.split(",") if part.strip())
    return ExperimentConfig(
        env=args.env,
        theta_true=args.theta,
        theta_grid=_parse_grid(args.theta_grid) if need_grid else None,
        approaches=approaches,
        steps=args.steps,
        seeds=args.seeds,
        discount=args.discount,
        alpha_mode=alpha_mode,
        alpha=alpha,
        epsilon=args.epsilon,
        initial_q=args.initial_q,
        episode_len=episode_len,
        episode_start=episode_start,
        log_every=args.log_every,
        eval_rollouts=args.eval_rollouts,
        rollout_horizon=args.rollout_horizon,
        deterministic_output=not args.timing,
        workers=args.workers,
    )


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUT_DIR_ENV_VAR) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _run_family(args, name: str, runner, need_grid: bool = False) -> int:
    config = _experiment_config(args, need_grid=need_grid)
    out_dir = _out_dir(args)
    started = time.perf_counter()
    warnings: list[str] = []
    try:
        records = write_csv(runner(config), out_dir / f"{name}.csv")
    except NonConvergenceError as exc:
        warnings.append(str(exc))
        raise
    wall = time.perf_counter() - started
    write_manifest(config, out_dir / f"{name}_manifest.json", command=name,
                   wall_seconds=wall, warnings=warnings)
    print(f"{name}: wrote {len(records)} rows to {out_dir / f'{name}.csv'} "
          f"({wall:.1f}s)")
    return 0


def _cmd_converge(args) -> int:
    return _run_family(args, "converge", run_convergence)


def _cmd_compare(args) -> int:
    return _run_family(args, "compare", run_comparison)


def _cmd_sweep(args) -> int:
    return _run_family(args, "sweep", run_theta_sweep, need_grid=True)


def _cmd_oracle(args) -> int:
    bundle = resolve_env(args.env, discount=args.discount)
    solution = value_iteration(bundle.mdp, bundle.baseline, args.theta, tol=args.tol)
    doc = {
        "env": bundle.name,
        "theta": args.theta,
        "discount": bundle.mdp.discount,
        "iterations": solution.iterations,
        "residual": solution.residual,
        "v_star": solution.v_star.tolist(),
        "q_star": solution.q_star.tolist(),
        "recommendation": solution.g_r_star.actions.tolist(),
    }
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(doc, indent=1))
        print(f"oracle: wrote {out}")
    else:
        json.dump(doc, sys.stdout, indent=1)
        print()
    print(f"V*(x0={bundle.x0}) = {float(solution.v_star[bundle.x0])!r} "
          f"after {solution.iterations} sweeps", file=sys.stderr)
    return 0


def _cmd_replay(args) -> int:
    """Print the history CSV of a scripted session; mirrors the live service."""
    from .service import HISTORY_CSV_HEADER

    bundle = resolve_env(args.env, discount=args.discount)
    config = LearnerConfig(
        discount=args.discount,
        baseline=bundle.baseline,
        epsilon=args.epsilon,
        initial_q=args.initial_q if args.initial_q is not None else 0.0,
    )
    learner = AdherenceLearner.for_mdp(bundle.mdp, config)
    choices = [part for part in args.choices.split(",") if part.strip()]
    hdm = ScriptedHdm(bundle.baseline, choices)
    rng = np.random.default_rng(args.seed)
    trajectory = run_episode(learner, bundle.mdp, hdm, bundle.x0, len(choices), rng)
    lines = [HISTORY_CSV_HEADER]
    for step, record in enumerate(trajectory):
        lines.append(
            f"{step},{record.x},{record.u_r},{learner.config.baseline(record.x)},"
            f"{record.u},{float(record.reward)!r},{record.x_next},"
            f"{record.observation.value},{float(record.theta_hat)!r}"
        )
    print("\n".join(lines))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(sessions_dir=args.sessions_dir, static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level=args.log_level)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adherenceq",
        description="Adherence-aware Q-learning experiments and live sessions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    converge = sub.add_parser("converge", help="track the initial-state value while training")
    _add_experiment_args(converge)
    converge.set_defaults(func=_cmd_converge)

    compare = sub.add_parser("compare", help="train each approach and score its actual law")
    _add_experiment_args(compare)
    compare.set_defaults(func=_cmd_compare)

    sweep = sub.add_parser("sweep", help="comparison across an adherence grid")
    _add_experiment_args(sweep)
    sweep.add_argument("--theta-grid", required=True,
                       help="comma-separated adherence levels, e.g. 0,0.1,...,1")
    sweep.set_defaults(func=_cmd_sweep)

    oracle = sub.add_parser("oracle", help="solve an environment exactly")
    oracle.add_argument("--env", default="machine_replacement")
    oracle.add_argument("--theta", type=float, default=0.7)
    oracle.add_argument("--discount", type=float, default=0.9)
    oracle.add_argument("--tol", type=float, default=1e-9)
    oracle.add_argument("--out", default=None)
    oracle.set_defaults(func=_cmd_oracle)

    replay = sub.add_parser("replay", help="print the history CSV of a scripted session")
    replay.add_argument("--env", default="machine_replacement")
    replay.add_argument("--seed", type=int, default=0)
    replay.add_argument("--choices", required=True,
                        help="comma-separated: adhere, baseline, or raw action indices")
    replay.add_argument("--discount", type=float, default=0.9)
    replay.add_argument("--epsilon", type=float, default=0.1)
    replay.add_argument("--initial-q", type=float, default=None)
    replay.set_defaults(func=_cmd_replay)

    serve = sub.add_parser("serve", help="run the live session service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--sessions-dir", default=None)
    serve.add_argument("--static-dir", default=None,
                       help="directory with the built browser UI, served at /")
    serve.add_argument("--log-level", default="warning")
    serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
