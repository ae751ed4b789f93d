"""``pgff`` command line: generate, train, evaluate, verify.

Exit codes: 0 success, 1 computational failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import checks
from .evaluation import EvalReport, FilterUnderTest, evaluate, nonuniqueness_study, save_json
from .experiment import (
    OBJECTIVE_CHOICES,
    ExperimentConfig,
    IntegrityError,
    evaluation_references,
    generate,
    load_config,
    open_dataset,
    run_name,
    write_config,
)
from .linmodel import RankDeficiencyError
from .objectives import FitProblem
from .plant import SimulationError, StribeckPlant, load_dataset
from .signals import InfeasibleReferenceError
from .training import DivergenceError, load_report, train

log = logging.getLogger("pgff")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

COMPUTATIONAL_ERRORS = (
    RankDeficiencyError,
    SimulationError,
    DivergenceError,
    IntegrityError,
    InfeasibleReferenceError,
    ArithmeticError,
)


class UsageError(Exception):
    pass


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    seeds = None
    if getattr(args, "seeds", None) is not None:
        if args.seeds < 1:
            raise UsageError("--seeds must be at least 1")
        base = args.seed if args.seed is not None else 0
        seeds = list(range(base, base + args.seeds))
    elif getattr(args, "seed", None) is not None:
        seeds = [args.seed]
    return cfg.with_overrides(
        objective=getattr(args, "objective", None),
        lam=getattr(args, "lam", None),
        seeds=seeds,
        out=getattr(args, "out", None),
        linear=getattr(args, "linear", False),
        max_iterations=getattr(args, "max_iterations", None),
    )


def _existing_dir(path, what) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{what} {p} does not exist")
    return p


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out)
    dataset = generate(cfg, out)
    print(f"wrote {len(dataset)} entries to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _train_one(job):
    train_cfg, dataset_dir, run_dir, experiment = job
    dataset = open_dataset(dataset_dir)
    report = train(train_cfg, FitProblem(dataset))
    report.save(run_dir)
    write_config(experiment, run_dir)
    return str(run_dir), report.final_theta.theta.tolist(), report.final_loss, report.stop_reason


def cmd_train(args) -> int:
    cfg = _config(args)
    dataset_dir = _existing_dir(args.dataset, "dataset directory")
    # integrity check once up front so a bad dataset fails before any training
    open_dataset(dataset_dir)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out)
    jobs = []
    for seed in cfg.seeds:
        run_dir = out / run_name(cfg.objective, cfg.lam, seed)
        jobs.append((replace(cfg.train, seed=seed), dataset_dir, run_dir, replace(cfg, seeds=[seed])))
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_train_one, jobs))
    else:
        results = [_train_one(job) for job in jobs]
    for run_dir, theta, loss, reason in results:
        print(f"{run_dir}: theta={theta} loss={loss:.6g} ({reason})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _run_plant(run_dir: Path, fallback: StribeckPlant) -> StribeckPlant:
    cfg_path = run_dir / "config.json"
    if cfg_path.exists():
        return load_config(cfg_path).plant
    return fallback


def cmd_evaluate(args) -> int:
    if not args.runs and not args.seed_study:
        raise UsageError("evaluate needs at least one run directory (or --seed-study N)")
    cfg = _config(args)
    out = Path(cfg.out)
    refs = evaluation_references(cfg)
    names = list(refs)
    comparison = {"references": {k: v.to_dict() for k, v in cfg.evaluation_references.items()}, "runs": []}
    for run in args.runs:
        run_dir = _existing_dir(run, "run directory")
        if not (run_dir / "report.json").exists():
            raise UsageError(f"{run_dir} has no report.json")
        report = load_report(run_dir)
        filt = FilterUnderTest.from_report(report, name=run_dir.name)
        plant = _run_plant(run_dir, cfg.plant)
        result: EvalReport = evaluate(filt, [refs[n] for n in names], plant, names)
        result.write_series(out / "series")
        entry = result.to_dict()
        entry["run"] = str(run_dir)
        entry["objective"] = filt.objective_kind
        entry["parametrization"] = report["config"].parametrization
        comparison["runs"].append(entry)
        print(f"{run_dir.name}: theta={[round(t, 5) for t in result.theta.tolist()]} "
              f"theta_error={result.theta_error:.4g} "
              + " ".join(f"{r.name}_ffw_rmse={r.ffw_rmse:.4g}" for r in result.references))
    if args.seed_study:
        if not args.dataset:
            raise UsageError("--seed-study needs --dataset")
        if args.seed_study < 5:
            raise UsageError("--seed-study needs at least 5 seeds")
        dataset = open_dataset(_existing_dir(args.dataset, "dataset directory"))
        base = args.seed if args.seed is not None else 0
        study = nonuniqueness_study(cfg.train, dataset, args.seed_study, base_seed=base)
        comparison["seed_study"] = study.to_dict()
        print(f"seed study: objective={cfg.objective} parametrization={cfg.train.parametrization} "
              f"seeds={study.seeds}")
        print(study.table())
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out)
    save_json(comparison, out / "comparison.json")
    print(f"wrote {out / 'comparison.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    dataset_dir = _existing_dir(args.dataset, "dataset directory")
    dataset = load_dataset(dataset_dir)
    results = checks.run_all(dataset, seed=args.seed if args.seed is not None else 0)
    print(checks.format_table(results))
    failed = [r.name for r in results if r.passed is False]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_json({"checks": [{"name": r.name, "status": r.status, "detail": r.detail} for r in results]},
                  out / "verify.json")
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pgff", description="Physics-guided feedforward filter experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="experiment config JSON (defaults fill missing keys)")
        p.add_argument("--out", required=out_required, help="output directory")

    def seeding(p):
        p.add_argument("--seed", type=int, help="seed, or first seed with --seeds")
        p.add_argument("--seeds", type=int, help="number of consecutive seeds")

    def objective(p):
        p.add_argument("--objective", choices=OBJECTIVE_CHOICES)
        p.add_argument("--lambda", dest="lam", type=float, help="regularization weight")
        p.add_argument("--max-iterations", type=int, help="cap on ADAM iterations")

    p = sub.add_parser("generate", help="synthesize the training dataset")
    common(p)
    p.add_argument("--linear", action="store_true", help="use the plant without its friction nonlinearity")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one run per seed")
    p.add_argument("dataset", help="dataset directory written by generate")
    common(p)
    seeding(p)
    objective(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes for seed sweeps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="compare trained runs on the evaluation references")
    p.add_argument("runs", nargs="*", help="run directories written by train")
    common(p)
    seeding(p)
    objective(p)
    p.add_argument("--seed-study", type=int, metavar="N", help="also train N seeds and report theta spread")
    p.add_argument("--dataset", help="dataset directory for --seed-study")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("verify", help="run the numerical property checks on a dataset")
    p.add_argument("dataset", help="dataset directory")
    p.add_argument("--out", help="optional directory for verify.json")
    p.add_argument("--seed", type=int, help="seed for the random instances")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"pgff: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, COMPUTATIONAL_ERRORS):
            print(f"pgff: computation failed: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        print(f"pgff: error: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except COMPUTATIONAL_ERRORS as exc:
        print(f"pgff: computation failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"pgff: I/O error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
