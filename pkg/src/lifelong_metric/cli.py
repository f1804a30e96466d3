"""Command-line entry point ``lml``.

Subcommands::

    synth-gen        write synthetic task CSVs and the ground truth
    init-dict        seed a dictionary from one task CSV
    train-sequence   train tasks in order; write a JSONL report and a checkpoint
    eval             kNN test error of every checkpointed task
    sweep-d          average error for each dictionary size
    sweep-lambda     average error for each sparsity weight
    checkpoint save  train on whole CSVs and write a checkpoint
    checkpoint load  validate a checkpoint and print its summary

Every configuration field has a ``--kebab-case`` flag.  ``--config FILE``
reads ``key = value`` lines (``#`` starts a comment) as defaults; flags given
on the command line win.  Exit status is 0 on success, 2 for usage or
configuration errors and 1 for runtime failures.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import fields, replace

from .data import SyntheticSpec, generate_synthetic, load_csv, save_csv, stratified_split
from .dictionary import init_dictionary, save_dictionary
from ._textio import format_matrix
from .engine import EngineConfig, LifelongMetricLearner
from .evaluation import DEFAULT_K, DEFAULT_SPLITS, knn_error, run_sequence_experiment
from .exceptions import ConfigurationError
from .learners import BaseLearnerConfig
from .solver import SolverConfig

REPORT_FIELDS = ("stage", "task", "rep", "error", "seconds", "lambda", "d")
DEFAULT_LAMBDAS = (0.001, 0.01, 0.1, 1.0, 10.0)
DEFAULT_DS = (2, 5, 10, 15)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _parse_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text):
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _float_list(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


# (key, parser, help); keys are config-file names, flags are the kebab form
ENGINE_OPTIONS = [
    ("d", int, "dictionary size"),
    ("lambda_t", float, "off-diagonal sparsity weight"),
    ("gamma", float, "dictionary Frobenius weight"),
    ("dict_step", float, "dictionary gradient step"),
    ("dict_steps", int, "dictionary gradient steps per task update"),
    ("symmetrized", _parse_bool, "use the full derivative for the dictionary gradient"),
    ("num_clusters", int, "k-means clusters for initialization"),
    ("j_scales", _int_list, "neighborhood sizes for initialization, comma separated"),
    ("neighbors", int, "same-class neighbors per anchor"),
    ("impostors", int, "impostors per (anchor, neighbor) pair"),
    ("mining_mode", str, "sample or enumerate"),
    ("delta_at", str, "where the stored gradient summary is evaluated: base, task or live"),
    ("rounds", int, "weight/dictionary alternations per batch in live mode"),
    ("seed", int, "base seed"),
]
BASE_OPTIONS = [
    ("kind", str, "similarity or distance"),
    ("c", float, "OASIS aggressiveness C"),
    ("iterations", int, "base learner iterations"),
    ("batch_step", float, "batch distance learner step"),
    ("pa_eta", float, "passive-aggressive rate in the target"),
]
SOLVER_OPTIONS = [
    ("eta0", float, "initial FISTA step"),
    ("backtrack_shrink", float, "FISTA backtracking factor"),
    ("max_iter", int, "FISTA iteration cap"),
    ("rel_tol", float, "FISTA relative tolerance"),
]
RUN_OPTIONS = [
    ("splits", _float_list, "train,validation,test fractions"),
    ("reps", int, "repetitions"),
    ("seeds", _int_list, "one seed per repetition, comma separated"),
    ("k", int, "kNN neighbors"),
]
SYNTH_OPTIONS = [(f.name, type(f.default), "") for f in fields(SyntheticSpec)]
SYNTH_OPTIONS = [(name, kind if kind is not bool else _parse_bool, "synthetic " + name.replace("_", " "))
                 for name, kind, _ in SYNTH_OPTIONS]


def _add(parser, options):
    for key, conv, help_text in options:
        parser.add_argument("--" + key.replace("_", "-"), dest=key, type=conv,
                            default=argparse.SUPPRESS, help=help_text)


def _add_common(parser, options, output_help):
    parser.add_argument("--config", default=None, help="key = value defaults file")
    parser.add_argument("--output", "-o", default=None, help=output_help)
    _add(parser, options)


def build_parser():
    parser = _Parser(prog="lml", description="Lifelong metric learning experiments.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    learn = ENGINE_OPTIONS + BASE_OPTIONS + SOLVER_OPTIONS

    p = sub.add_parser("synth-gen", help="write synthetic task CSVs")
    _add_common(p, SYNTH_OPTIONS, "output directory")

    p = sub.add_parser("init-dict", help="seed a dictionary from one task")
    p.add_argument("--data", required=True, help="task CSV")
    _add_common(p, ENGINE_OPTIONS, "dictionary text file")

    p = sub.add_parser("train-sequence", help="train tasks in order")
    p.add_argument("--data", nargs="+", required=True, help="task CSVs in arrival order")
    p.add_argument("--record-timing", action="store_true", help="write wall-clock seconds")
    _add_common(p, learn + RUN_OPTIONS, "output directory (report.jsonl, checkpoint.zip)")

    p = sub.add_parser("eval", help="test error of checkpointed tasks")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", nargs="+", required=True, help="task CSVs, same order as training")
    _add_common(p, [o for o in RUN_OPTIONS if o[0] != "reps"], "report file (default stdout)")

    for name, key in (("sweep-d", "d"), ("sweep-lambda", "lambda")):
        p = sub.add_parser(name, help=f"average error over a grid of {key}")
        p.add_argument("--data", nargs="+", required=True, help="task CSVs in arrival order")
        p.add_argument("--values", type=_float_list, default=None, help="comma separated grid")
        p.add_argument("--record-timing", action="store_true", help="write wall-clock seconds")
        _add_common(p, learn + RUN_OPTIONS, "report file (default stdout)")

    p = sub.add_parser("checkpoint", help="save or inspect checkpoints")
    csub = p.add_subparsers(dest="action", parser_class=_Parser)
    csub.required = True
    c = csub.add_parser("save", help="train on whole CSVs and write a checkpoint")
    c.add_argument("--data", nargs="+", required=True, help="task CSVs in arrival order")
    _add_common(c, learn, "checkpoint file")
    c = csub.add_parser("load", help="validate a checkpoint and print its summary")
    c.add_argument("checkpoint")
    c.add_argument("--output", "-o", default=None, help="summary file (default stdout)")
    return parser


def read_config_file(path, known):
    """Parse ``key = value`` lines; keys may use ``-`` or ``_``."""
    if not os.path.isfile(path):
        raise ConfigurationError(f"config file not found: {path}")
    table = {key: conv for key, conv, _ in known}
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_").lower()
            if key not in table:
                raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = table[key](value)
            except ValueError as exc:
                raise ConfigurationError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return out


def _settings(args, options):
    merged = read_config_file(args.config, options) if args.config else {}
    merged.update({key: getattr(args, key) for key, _, _ in options if hasattr(args, key)})
    return merged


def engine_config(settings):
    base = {key: settings[key] for key, _, _ in BASE_OPTIONS if key in settings}
    if "c" in base:
        base["C"] = base.pop("c")
    solver = {key: settings[key] for key, _, _ in SOLVER_OPTIONS if key in settings}
    top = {key: settings[key] for key, _, _ in ENGINE_OPTIONS if key in settings}
    try:
        base_cfg = BaseLearnerConfig(**base)
        return EngineConfig(base=replace(base_cfg, seed=top.get("seed", base_cfg.seed)),
                            solver=SolverConfig(**solver), **top)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None


def _load_tasks(paths):
    for path in paths:
        if not os.path.isfile(path):
            raise ConfigurationError(f"dataset not found: {path}")
    return [load_csv(path) for path in paths]


def _number(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def report_line(**values):
    row = {name: values.get(name) for name in REPORT_FIELDS}
    for name in ("error", "seconds", "lambda"):
        row[name] = _number(row[name])
    return json.dumps(row) + "\n"


def _write(path, text):
    if path is None:
        sys.stdout.write(text)
        return
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _run_settings(settings, cfg):
    splits = settings.get("splits", DEFAULT_SPLITS)
    reps = settings.get("reps", 1)
    seeds = settings.get("seeds")
    if seeds is not None and "reps" not in settings:
        reps = len(seeds)
    return splits, reps, seeds, settings.get("k", DEFAULT_K)


def cmd_synth_gen(args):
    settings = _settings(args, SYNTH_OPTIONS)
    spec = SyntheticSpec(**settings)
    out = args.output or "synthetic"
    os.makedirs(out, exist_ok=True)
    tasks, truth = generate_synthetic(spec)
    for task in tasks:
        save_csv(os.path.join(out, f"{task.task_id}.csv"), task)
    _write(os.path.join(out, "truth_dictionary.txt"), format_matrix(truth.L0))
    for t, W in enumerate(truth.W):
        _write(os.path.join(out, f"truth_W_{t:02d}.txt"), format_matrix(W))
    return 0


def cmd_init_dict(args):
    settings = _settings(args, ENGINE_OPTIONS)
    cfg = engine_config(settings)
    (task,) = _load_tasks([args.data])
    dictionary = init_dictionary(task, cfg.d, num_clusters=cfg.num_clusters,
                                 J_scales=cfg.j_scales, seed=cfg.seed)
    if args.output is None:
        sys.stdout.write(format_matrix(dictionary.L0))
    else:
        save_dictionary(args.output, dictionary)
    return 0


def cmd_train_sequence(args):
    options = ENGINE_OPTIONS + BASE_OPTIONS + SOLVER_OPTIONS + RUN_OPTIONS
    settings = _settings(args, options)
    cfg = engine_config(settings)
    splits, reps, seeds, k = _run_settings(settings, cfg)
    tasks = _load_tasks(args.data)
    result = run_sequence_experiment(tasks, splits, cfg, reps, seeds, k)
    lines = [
        report_line(stage=rec["stage"], task=rec["task"], rep=rec["rep"], error=rec["error"],
                    seconds=rec["seconds"] if args.record_timing else None,
                    **{"lambda": cfg.lambda_t}, d=cfg.d)
        for rec in result.records
    ]
    out = args.output or "lml-run"
    os.makedirs(out, exist_ok=True)
    _write(os.path.join(out, "report.jsonl"), "".join(lines))
    result.learners[0].save(os.path.join(out, "checkpoint.zip"))
    return 0


def cmd_eval(args):
    settings = _settings(args, [o for o in RUN_OPTIONS if o[0] != "reps"])
    if not os.path.isfile(args.checkpoint):
        raise ConfigurationError(f"checkpoint not found: {args.checkpoint}")
    learner = LifelongMetricLearner.load(args.checkpoint)
    tasks = _load_tasks(args.data)
    splits = settings.get("splits", DEFAULT_SPLITS)
    seed = settings.get("seeds", (learner.config.seed,))[0]
    k = settings.get("k", DEFAULT_K)
    stage = learner.m - 1
    lines = []
    for t, task in enumerate(tasks):
        if task.task_id not in learner.tasks:
            raise ConfigurationError(f"task {task.task_id!r} is not in the checkpoint")
        train, _, test = stratified_split(task, splits, seed * 1000 + t)
        err = knn_error(learner.task_metric(task.task_id), train, test, k)
        lines.append(report_line(stage=stage, task=task.task_id, rep=0, error=err,
                                 **{"lambda": learner.config.lambda_t}, d=learner.dictionary.d))
    _write(args.output, "".join(lines))
    return 0


def _cmd_sweep(args, key, field_name, defaults, cast):
    options = ENGINE_OPTIONS + BASE_OPTIONS + SOLVER_OPTIONS + RUN_OPTIONS
    settings = _settings(args, options)
    cfg = engine_config(settings)
    splits, reps, seeds, k = _run_settings(settings, cfg)
    tasks = _load_tasks(args.data)
    values = args.values if args.values is not None else defaults
    if not values:
        raise ConfigurationError("--values is empty")
    lines = []
    for v in values:
        row = {"lambda": cfg.lambda_t, "d": cfg.d, key: v}
        try:
            point = replace(cfg, **{field_name: cast(v)})
            result = run_sequence_experiment(tasks, splits, point, reps, seeds, k)
        except ConfigurationError as exc:
            # an unusable grid point is reported with a null error; the sweep goes on
            print(f"lml: {key}={v}: {exc}", file=sys.stderr)
            lines.append(report_line(error=None, **row))
            continue
        seconds = result.report.train_seconds if args.record_timing else None
        lines.append(report_line(error=result.report.avg_error, seconds=seconds,
                                 **{"lambda": point.lambda_t}, d=point.d))
    _write(args.output, "".join(lines))
    return 0


def _as_int(v):
    if float(v) != int(v):
        raise ConfigurationError(f"d must be an integer, got {v}")
    return int(v)


def cmd_checkpoint(args):
    if args.action == "load":
        if not os.path.isfile(args.checkpoint):
            raise ConfigurationError(f"checkpoint not found: {args.checkpoint}")
        learner = LifelongMetricLearner.load(args.checkpoint)
        summary = {"d": learner.dictionary.d, "d_hat": learner.dictionary.d_hat,
                   "tasks": learner.task_ids, "config": learner.config.to_dict()}
        _write(args.output, json.dumps(summary, indent=1, sort_keys=True) + "\n")
        return 0
    settings = _settings(args, ENGINE_OPTIONS + BASE_OPTIONS + SOLVER_OPTIONS)
    learner = LifelongMetricLearner(engine_config(settings))
    for task in _load_tasks(args.data):
        learner.observe_batch(task)
    learner.save(args.output or "checkpoint.zip")
    return 0


COMMANDS = {
    "synth-gen": cmd_synth_gen,
    "init-dict": cmd_init_dict,
    "train-sequence": cmd_train_sequence,
    "eval": cmd_eval,
    "sweep-d": lambda a: _cmd_sweep(a, "d", "d", DEFAULT_DS, _as_int),
    "sweep-lambda": lambda a: _cmd_sweep(a, "lambda", "lambda_t", DEFAULT_LAMBDAS, float),
    "checkpoint": cmd_checkpoint,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except ConfigurationError as exc:
        print(f"lml: configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        print(f"lml: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
