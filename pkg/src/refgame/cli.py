"""Command-line surface: dataset generation, training, evaluation, experiment
orchestration, and report re-rendering.

Exit codes: 0 success, 1 usage error (bad flags), 2 runtime failure. Every
run echoes its fully resolved configuration as JSON before doing any work,
and that echo is sufficient to reproduce the run.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from pathlib import Path

from . import language
from .util import tune_allocator

ENV_CHOICES = ("uniform", "typicality", "low-salience")


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _echo_config(command: str, values: dict) -> None:
    print(json.dumps({"command": command, "config": values}, sort_keys=True))


def _environment(name: str, image_side: int = 64):
    from .scenes import EnvironmentConfig

    if name == "uniform":
        return EnvironmentConfig(image_side=image_side)
    if name == "typicality":
        return EnvironmentConfig(distribution="typicality", image_side=image_side)
    return EnvironmentConfig(salience="low", image_side=image_side)


def cmd_gen(args) -> int:
    from .dataset import generate_dataset
    from .scenes import Shape

    env = _environment(args.env)
    _echo_config("gen", {"env": args.env, "num_games": args.num_games,
                         "seed": args.seed, "out": str(args.out)})
    manifest = generate_dataset(env, args.num_games, args.seed, args.out)
    print("condition counts:")
    for cond, n in sorted(manifest.counts.items()):
        print(f"  {cond}: {n}")
    feature_counts = Counter()
    circle_targets = red_circles = 0
    for rec in manifest.records:
        target = rec.referents[rec.target_index]
        feature_counts[(target.color.name.lower(), target.shape.value)] += 1
        if target.shape is Shape.CIRCLE:
            circle_targets += 1
            red_circles += target.color.name.lower() == "red"
    print("target feature counts:")
    for (color, shape), n in sorted(feature_counts.items()):
        print(f"  {color} {shape}: {n}")
    if circle_targets:
        print(f"red share of circle targets: {red_circles / circle_targets:.4f}")
    return 0


def cmd_train(args) -> int:
    from .agents import save_literal_speaker, train_literal_speaker
    from .dataset import load_games, load_manifest
    from .experiments import plan_subsets
    from .nn import EncoderConfig
    from .semantics import (TrainingHyperparams, save_model,
                            train_semantic_function, write_training_log)

    lr = args.lr if args.lr is not None else (
        0.001 if args.role == "literal-speaker" else 0.01)
    _echo_config("train", {"role": args.role, "data": str(args.data),
                           "subset_index": args.subset_index, "d": args.d,
                           "epochs": args.epochs, "lr": lr, "seed": args.seed,
                           "out": str(args.out)})
    manifest = load_manifest(args.data)
    plan = plan_subsets(manifest, args.seed)
    if not 0 <= args.subset_index < len(plan.subsets):
        raise ValueError(f"subset index {args.subset_index} out of range")
    by_id = {r.id: r for r in manifest.records}
    ids = plan.subsets[args.subset_index]
    games = load_games(args.data, [by_id[i] for i in ids])
    config = EncoderConfig(image_side=manifest.env.image_side, embed_dim=args.d)
    hyper = TrainingHyperparams(epochs=args.epochs, learning_rate=lr,
                                seed=args.seed)
    if args.role == "semantic":
        model, logs = train_semantic_function(games, hyper, config)
        save_model(args.out, model, role="semantic")
        print(f"selected validation BCE: {model.val_loss!r}")
    else:
        speaker, logs = train_literal_speaker(games, hyper, config)
        save_literal_speaker(args.out, speaker)
        print(f"selected validation exact-match: {speaker.val_accuracy!r}")
    write_training_log(str(args.out) + ".log.csv", logs)
    return 0


def cmd_eval(args) -> int:
    from .agents import (EnsembleSemantics, EvalListener, ModelSemantics,
                         RSASpeaker, load_literal_speaker)
    from .dataset import load_games, load_manifest
    from .experiments import (communication_accuracy, overmodification_rate,
                              plan_subsets, produced_utterances, accuracy_from,
                              overmod_from)
    from .games import ContextCondition
    from .semantics import Ensemble, load_model

    _echo_config("eval", {"data": str(args.data), "listener": str(args.listener),
                          "literal": args.literal and str(args.literal),
                          "rsa_member": [str(p) for p in args.rsa_member],
                          "limit": args.limit})
    manifest = load_manifest(args.data)
    plan = plan_subsets(manifest, manifest.seed)
    by_id = {r.id: r for r in manifest.records}
    eval_ids = plan.eval_ids[:args.limit] if args.limit else plan.eval_ids
    games = load_games(args.data, [by_id[i] for i in eval_ids])
    listener = EvalListener(ModelSemantics(load_model(args.listener)[0]))
    results = {}
    speakers = {}
    if args.literal:
        speakers["literal"] = load_literal_speaker(args.literal)[0]
    if args.rsa_member:
        members = [load_model(p)[0] for p in args.rsa_member]
        speakers["rsa"] = RSASpeaker(EnsembleSemantics(Ensemble(members)))
    for name, sp in speakers.items():
        utts = produced_utterances(sp, games)
        shape_needed = [(g, u) for g, u in zip(games, utts)
                        if g.condition is ContextCondition.SHAPE_NEEDED]
        results[name] = {
            "accuracy": accuracy_from(listener, games, utts),
            "overmodification": overmod_from([u for _, u in shape_needed]),
            "games": len(games),
        }
    print(json.dumps(results, sort_keys=True, indent=2))
    return 0


def cmd_experiment(args) -> int:
    from .experiments import ExperimentConfig, run_experiment

    cfg = ExperimentConfig(experiment=args.id, scale=args.scale,
                           seeds=tuple(args.seeds), embed_dim=args.d,
                           ensemble_size=args.n, epochs=args.epochs,
                           jobs=args.jobs)
    _echo_config("experiment", {
        "id": cfg.experiment, "scale": cfg.scale, "seeds": list(cfg.seeds),
        "n": cfg.ensemble_size, "d": cfg.embed_dim, "epochs": cfg.epochs,
        "jobs": cfg.jobs, "out": str(args.out),
        "total_games": cfg.total_games, "train_games": cfg.train_games,
        "eval_games": cfg.eval_games, "semantic_lr": cfg.semantic_lr,
        "literal_lr": cfg.literal_lr, "cost_weight": cfg.cost_weight,
    })
    report = run_experiment(cfg, args.out)
    print(f"wrote report for experiment {cfg.experiment} "
          f"({len(report.rows)} metric rows) to {args.out}")
    if report.failures:
        print(f"PARTIAL RESULTS: {len(report.failures)} stage(s) failed:",
              file=sys.stderr)
        for f in report.failures:
            print(f"  {f}", file=sys.stderr)
        return 2
    return 0


def cmd_report(args) -> int:
    from .reports import (experiment_charts, load_report, report_to_json,
                          rows_to_csv)
    from .util import atomic_write_text

    _echo_config("report", {"in": str(args.indir), "format": args.format})
    workdir = Path(args.indir)
    if not (workdir / "metrics.json").exists():
        print(f"error: {workdir}/metrics.json not found", file=sys.stderr)
        return 2
    report = load_report(workdir)
    if args.format == "csv":
        atomic_write_text(workdir / "report.csv", rows_to_csv(report.rows))
        print(f"wrote {workdir / 'report.csv'}")
    elif args.format == "json":
        atomic_write_text(workdir / "metrics.json", report_to_json(report))
        print(f"wrote {workdir / 'metrics.json'}")
    else:
        for name, svg in experiment_charts(report).items():
            atomic_write_text(workdir / f"{name}.svg", svg)
            print(f"wrote {workdir / (name + '.svg')}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="refgame",
                     description="Reference-game laboratory for neural "
                                 "literal and pragmatic speakers")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen", parents=[], help="generate a dataset")
    p.add_argument("--env", choices=ENV_CHOICES, required=True)
    p.add_argument("--num-games", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train one model on one data subset")
    p.add_argument("--role", choices=("semantic", "literal-speaker"),
                   required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--subset-index", type=int, default=0)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=None,
                   help="default 0.01 for semantic, 0.001 for literal-speaker")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate trained speakers on a dataset")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--listener", type=Path, required=True)
    p.add_argument("--literal", type=Path, default=None)
    p.add_argument("--rsa-member", type=Path, action="append", default=[])
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run a full experiment pipeline")
    p.add_argument("--id", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--scale", type=float, default=0.1)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="re-render report artifacts")
    p.add_argument("--in", dest="indir", type=Path, required=True)
    p.add_argument("--format", choices=("csv", "json", "svg"), required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    tune_allocator()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
