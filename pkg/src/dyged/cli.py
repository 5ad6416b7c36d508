"""``dyged`` command line: gen, train, eval, export, gradcheck, experiment.

Exit codes: 0 ok, 1 check failed, 2 configuration, 3 IO, 4 parse, 5 shape.
Set ``DYGED_LOG`` to ``error``, ``info`` or ``debug`` for log output on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from . import kvconfig
from .autodiff import Op, corrupted_adjoint
from .errors import ConfigError, ContractError, DimensionError, DygedError, ParseError
from .evaluator import evaluate, export, minmax_scale
from .graph import FEATURE_MODES, read_graph, write_graph
from .gradcheck import GradcheckConfig, check_all
from .model import VARIANTS, WindowDataset, load_checkpoint, save_checkpoint
from .synthgen import GenSpec, expected_separability, generate
from .trainer import TrainConfig, run_experiment, train

__all__ = ["main", "EXIT_OK", "EXIT_CHECK", "EXIT_CONFIG", "EXIT_IO", "EXIT_PARSE", "EXIT_SHAPE"]

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO, EXIT_PARSE, EXIT_SHAPE = range(6)

log = logging.getLogger("dyged")

CHECKPOINT = "model.ckpt"
LOSS_TRACE = "loss_trace.tsv"
CONFIG_ECHO = "config.txt"
GENSPEC_ECHO = "genspec.txt"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _load_kv(path) -> dict[str, str]:
    if path is None:
        return {}
    return {key: value for key, (_, value) in kvconfig.read_kv(path).items()}


def _out_dir(path) -> Path:
    """Create ``path`` (not its parents); a missing parent is an IO error."""
    out = Path(path)
    if not out.parent.is_dir():
        raise FileNotFoundError(f"parent directory of output does not exist: {out.parent}")
    out.mkdir(exist_ok=True)
    return out


def _train_config(args, extra_keys=()) -> tuple[TrainConfig, dict[str, str]]:
    values = _load_kv(args.config)
    extra = {k: values.pop(k) for k in extra_keys if k in values}
    overrides = {
        "seed": args.seed,
        "variant": args.variant,
        "feature_mode": args.features,
        "k": args.k,
        "epochs": args.epochs,
    }
    values.update({k: str(v) for k, v in overrides.items() if v is not None})
    return kvconfig.build(TrainConfig, values, source=args.config or "command line"), extra


def _dataset(path, cfg: TrainConfig) -> WindowDataset:
    g = read_graph(path)
    return WindowDataset.from_graph(g, cfg.k, cfg.feature_mode)


# -- verbs --------------------------------------------------------------------


def cmd_gen(args) -> int:
    values = _load_kv(args.config)
    if args.seed is not None:
        values["seed"] = str(args.seed)
    spec = kvconfig.build(GenSpec, values, source=args.config or "command line")
    out = _out_dir(args.out)
    g = generate(spec)
    write_graph(g, out)
    kvconfig.write(spec, out / GENSPEC_ECHO)
    print(f"wrote {g.T} snapshots, {int(g.labels.sum())} events ({expected_separability(spec)}) to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg, _ = _train_config(args)
    ds = _dataset(args.dataset, cfg)
    out = _out_dir(args.out)
    log.info("training %s on %d windows", cfg.variant, ds.n_windows)
    params, trace = train(ds, cfg)
    save_checkpoint(params, out / CHECKPOINT)
    with open(out / LOSS_TRACE, "w", encoding="utf-8") as fh:
        fh.write("epoch\tloss\n")
        for i, v in enumerate(trace):
            fh.write(f"{i}\t{format(v, '.17g')}\n")
    kvconfig.write(cfg, out / CONFIG_ECHO)
    print(f"loss {trace[0]:.6g} -> {trace[-1]:.6g}; checkpoint {out / CHECKPOINT}")
    return EXIT_OK


def _score(args):
    cfg, _ = _train_config(args)
    params = load_checkpoint(args.checkpoint)
    if params.config.k != cfg.k:
        if args.k is not None:
            raise DimensionError(f"checkpoint has k={params.config.k} but --k={args.k}")
        cfg = dataclasses.replace(cfg, k=params.config.k)
    ds = _dataset(args.dataset, cfg)
    if ds.d_in != params.config.d_in:
        raise DimensionError(
            f"dataset features have d_in={ds.d_in} ({cfg.feature_mode}) but checkpoint expects d_in={params.config.d_in}"
        )
    return evaluate(params, ds)


def cmd_eval(args) -> int:
    report = _score(args)
    out = _out_dir(args.out)
    export(report, out)
    print(f"AUC={format(report.auc, '.17g')}")
    return EXIT_OK


def cmd_export(args) -> int:
    report = _score(args)
    out = _out_dir(args.out)
    paths = export(report, out)
    scaled = out / "scores_scaled.tsv"
    with open(scaled, "w", encoding="utf-8") as fh:
        fh.write("t\tscaled_score\tlabel\n")
        if len(report):
            for t, s, lab in zip(report.t, minmax_scale(report.scores), report.labels):
                fh.write(f"{int(t)}\t{format(float(s), '.17g')}\t{int(lab)}\n")
    for p in [*paths.values(), scaled]:
        print(p)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    values = _load_kv(args.config)
    if args.seed is not None:
        values["seed"] = str(args.seed)
    cfg = kvconfig.build(GradcheckConfig, values, source=args.config or "command line")
    variants = VARIANTS if args.variant is None else (args.variant,)
    if args.corrupt_adjoint:
        with corrupted_adjoint(Op[args.corrupt_adjoint.upper()]):
            checks = check_all(cfg, variants)
    else:
        checks = check_all(cfg, variants)
    for c in checks:
        print(f"{c.variant}\t{c.name}\t{c.max_rel_error:.3e}\t{'ok' if c.passed else 'FAIL'}")
    failed = [c for c in checks if not c.passed]
    if failed:
        names = ", ".join(f"{c.variant}:{c.name}" for c in failed)
        print(f"gradcheck failed for {names}", file=sys.stderr)
        return EXIT_CHECK
    print(f"gradcheck passed: {len(checks)} tensors over {len(variants)} variants")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg, extra = _train_config(args, extra_keys=("p", "repetitions"))
    try:
        p = int(extra.get("p", "2"))
        reps = int(extra.get("repetitions", "1"))
    except ValueError as exc:
        raise ConfigError(f"{args.config}: {exc}") from None
    ds = _dataset(args.dataset, cfg)
    out = _out_dir(args.out)
    result = run_experiment(ds, cfg, p, repetitions=reps, jobs=args.jobs)
    with open(out / "folds.tsv", "w", encoding="utf-8") as fh:
        fh.write("fold\trepetition\tn_test\tauc\n")
        for (fold, rep), r in zip(result.fold_ids, result.reports):
            fh.write(f"{fold}\t{rep}\t{len(r)}\t{format(r.auc, '.17g')}\n")
    with open(out / "summary.txt", "w", encoding="utf-8") as fh:
        for key, value in result.config.items():
            fh.write(f"{key}={','.join(map(str, value)) if isinstance(value, tuple) else value}\n")
        fh.write(f"dataset={args.dataset}\nmean_auc={result.mean_auc!r}\nstd_auc={result.std_auc!r}\n")
    print(f"AUC={result.mean_auc:.6f} +- {result.std_auc:.6f} over {len(result.reports)} runs")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dyged", description="Event detection on dynamic graph snapshots.")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def add(name, func, help_text, *, dataset=False, out=True, checkpoint=False, model_flags=False):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.set_defaults(func=func)
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--seed", type=int, help="override the config seed")
        if dataset:
            sp.add_argument("--dataset", required=True, help="dataset directory")
        if checkpoint:
            sp.add_argument("--checkpoint", required=True, help="model checkpoint file")
        if out:
            sp.add_argument("--out", required=True, help="output directory (created if its parent exists)")
        if model_flags:
            sp.add_argument("--variant", help=f"one of {', '.join(VARIANTS)}")
            sp.add_argument("--features", choices=FEATURE_MODES, help="node feature mode")
            sp.add_argument("--k", type=int, help="window order")
            sp.add_argument("--epochs", type=int, help="training epochs")
        return sp

    add("gen", cmd_gen, "generate a synthetic dataset with planted events")
    add("train", cmd_train, "train a model on every window of a dataset", dataset=True, model_flags=True)
    add("eval", cmd_eval, "score a dataset, write exports, print AUC", dataset=True, checkpoint=True, model_flags=True)
    add("export", cmd_export, "write score/attention/embedding exports", dataset=True, checkpoint=True, model_flags=True)
    gc = add("gradcheck", cmd_gradcheck, "compare analytic and finite-difference gradients", out=False)
    gc.add_argument("--variant", choices=VARIANTS, help="check one variant only (default: all)")
    gc.add_argument("--corrupt-adjoint", choices=[op.name.lower() for op in Op if op is not Op.LEAF], help=argparse.SUPPRESS)
    ex = add("experiment", cmd_experiment, "nested time-series cross-validation", dataset=True, model_flags=True)
    ex.add_argument("--jobs", type=int, default=1, help="parallel worker processes for folds")
    return parser


def main(argv=None) -> int:
    level = os.environ.get("DYGED_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (DimensionError, ContractError) as exc:
        print(f"shape error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except DygedError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
