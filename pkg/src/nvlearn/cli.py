"""``nvlearn`` command line: gen, train, sweep, eval, replay.

Every command writes a ``manifest.json`` next to its outputs. The manifest
records the exact argument vector, so ``nvlearn replay manifest.json``
rebuilds the same bytes.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .core_math import make_rng
from .data import (
    DataError,
    gen_synthetic,
    group_blocks,
    inject_outliers,
    load_csv,
    sample_blocks,
    save_csv,
    split,
    table1_dataset,
    TABLE1_SEED,
)
from .experiments import (
    DEFAULT_CH,
    DEFAULT_DEMAND_SCALE,
    DUMP_CP,
    ModelSpec,
    SweepConfig,
    SweepError,
    dump_predictions,
    fit_kinds,
    parse_ratio_grid,
    run_sweep,
    test_err,
)
from .losses import CostPair, LossKind, newsvendor_cost
from .models import load_model, save_model
from .optim import TrainConfig, TrainingError, train, write_trace_csv

OUT_ENV = "NVLEARN_OUT"
MANIFEST = "manifest.json"

log = logging.getLogger("nvlearn")


class CliError(Exception):
    pass


def _loss_kind(text):
    try:
        return LossKind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _kinds(text):
    return tuple(_loss_kind(t) for t in text.split(",") if t.strip())


def _ratios(text):
    try:
        return parse_ratio_grid(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _model_spec(text):
    try:
        ModelSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _scale(text):
    # accepts "1/66" as well as plain decimals
    try:
        if "/" in text:
            num, den = text.split("/")
            value = float(num) / float(den)
        else:
            value = float(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad scale {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError("scale must be positive")
    return value


def _add_out(p):
    p.add_argument("--out", default=os.environ.get(OUT_ENV),
                   help=f"output directory (default: ${OUT_ENV})")


def _add_training(p):
    p.add_argument("--model", type=_model_spec, default="mlp:3,10,10,1",
                   help="'linear' or 'mlp:n_in,h1,h2,m_out' (default mlp:3,10,10,1)")
    p.add_argument("--ch", type=float, default=DEFAULT_CH)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    p.add_argument("--scale", type=_scale, default=DEFAULT_DEMAND_SCALE,
                   help="demand scaling applied to MLP targets (default 1/66)")
    p.add_argument("--activation", choices=("sigmoid", "relu"), default="sigmoid")
    p.add_argument("--optimizer", choices=("lbfgs", "momentum"), default="lbfgs")
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--memory", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--n-demand", type=int, default=1, help="number of trailing demand columns")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="nvlearn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nvlearn {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate or transform datasets")
    gsub = gen.add_subparsers(dest="what", required=True)
    g = gsub.add_parser("table1", help="the two-week toy training/testing sets")
    _add_out(g)
    g = gsub.add_parser("synthetic", help="random daily demand with binary flags")
    _add_out(g)
    g.add_argument("--days", type=int, default=28)
    g.add_argument("--low", type=int, default=3)
    g.add_argument("--high", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g = gsub.add_parser("blocks", help="resample whole groups of identical-feature rows")
    _add_out(g)
    g.add_argument("--in", dest="input", required=True)
    g.add_argument("--count", type=int, default=500)
    g.add_argument("--n-demand", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g = gsub.add_parser("outliers", help="inflate large demands in a random subset")
    _add_out(g)
    g.add_argument("--in", dest="input", required=True)
    g.add_argument("--subset", type=int, default=None, help="rows eligible for inflation (default all)")
    g.add_argument("--threshold", type=float, default=60.0)
    g.add_argument("--factor", type=float, default=10.0)
    g.add_argument("--only-subset", action="store_true", help="write only the drawn subset")
    g.add_argument("--n-demand", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="fit one model under one loss")
    _add_out(t)
    t.add_argument("--data", required=True)
    t.add_argument("--loss", type=_loss_kind, default=LossKind.ORIGINAL)
    t.add_argument("--cp", type=float, default=DUMP_CP)
    _add_training(t)

    s = sub.add_parser("sweep", help="train across a grid of cp/ch ratios")
    _add_out(s)
    s.add_argument("--train", help="training CSV")
    s.add_argument("--test", help="testing CSV")
    s.add_argument("--data", help="single CSV to split instead of --train/--test")
    s.add_argument("--split", type=float, default=0.75)
    s.add_argument("--ratios", type=_ratios, default="1:10:0.5")
    s.add_argument("--kinds", type=_kinds, default="original,quadratic")
    s.add_argument("--dump-first", type=int, default=0, metavar="K",
                   help="also dump the first K training predictions at --dump-cp")
    s.add_argument("--dump-cp", type=float, default=DUMP_CP)
    s.add_argument("--timing", action="store_true",
                   help="record wall-clock ms per cell (makes output non-reproducible)")
    _add_training(s)

    e = sub.add_parser("eval", help="score a saved model on a dataset")
    _add_out(e)
    e.add_argument("--model", dest="model_path", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--cp", type=float, default=DUMP_CP)
    e.add_argument("--ch", type=float, default=DEFAULT_CH)
    e.add_argument("--n-demand", type=int, default=1)

    r = sub.add_parser("replay", help="re-run a command from its manifest")
    r.add_argument("manifest")
    r.add_argument("--out", help="override the recorded output directory")
    return parser


def _train_config(args):
    return TrainConfig(lam=args.lam, max_iters=args.max_iters, tolerance=args.tol,
                       lbfgs_memory=args.memory, seed=args.seed, optimizer=args.optimizer,
                       learning_rate=args.lr, momentum=args.momentum)


def _spec(args):
    return ModelSpec.parse(args.model, args.scale, args.activation)


def _out_path(args, name):
    return os.path.join(args.out, name)


def cmd_gen(args):
    if args.what == "table1":
        tr, te = table1_dataset()
        note = [f"seed={TABLE1_SEED}"]
        save_csv(tr, _out_path(args, "table1_train.csv"), note)
        save_csv(te, _out_path(args, "table1_test.csv"), note)
        return ["table1_train.csv", "table1_test.csv"]
    if args.what == "synthetic":
        ds = gen_synthetic(make_rng(args.seed), args.days, args.low, args.high)
        save_csv(ds, _out_path(args, "synthetic.csv"), [f"seed={args.seed}"])
        return ["synthetic.csv"]
    src = load_csv(args.input, args.n_demand)
    if args.what == "blocks":
        blocks = group_blocks(src)
        ds = sample_blocks(src, blocks, args.count, make_rng(args.seed))
        save_csv(ds, _out_path(args, "blocks.csv"),
                 [f"seed={args.seed}", f"blocks={len(blocks)}", f"drawn={args.count}"])
        return ["blocks.csv"]
    rng = make_rng(args.seed)
    subset = args.subset if args.subset is not None else src.n_rows
    if args.only_subset:
        # draw the subset first, then inflate every qualifying row of it
        src = src.take(np.sort(rng.choice(src.n_rows, size=subset, replace=False)))
        subset = None
    ds, mask = inject_outliers(src, args.threshold, args.factor, rng, subset)
    save_csv(ds, _out_path(args, "outliers.csv"), [f"seed={args.seed}", f"outliers={int(mask.sum())}"])
    with open(_out_path(args, "outlier_mask.csv"), "w", encoding="utf-8") as fh:
        fh.write("index,outlier\n")
        fh.writelines(f"{i},{int(m)}\n" for i, m in enumerate(mask))
    return ["outliers.csv", "outlier_mask.csv"]


def cmd_train(args):
    data = load_csv(args.data, args.n_demand)
    model = _spec(args).build(data.n_features, args.seed)
    report = train(model, data, CostPair(args.cp, args.ch), args.loss, _train_config(args))
    save_model(report.model, _out_path(args, "model.json"))
    write_trace_csv(report, _out_path(args, "trace.csv"))
    log.info("stop=%s iterations=%d objective=%.6g", report.stop_reason, report.iterations,
             report.final_objective)
    return ["model.json", "trace.csv"]


def cmd_sweep(args):
    if args.data:
        tr, te = split(load_csv(args.data, args.n_demand), args.split, args.seed)
    elif args.train and args.test:
        tr, te = load_csv(args.train, args.n_demand), load_csv(args.test, args.n_demand)
    else:
        raise CliError("sweep needs --data, or both --train and --test")
    cfg = SweepConfig(ch=args.ch, ratios=args.ratios, kinds=args.kinds, model=_spec(args),
                      train=_train_config(args), seed=args.seed)
    result = run_sweep(cfg, tr, te, timing=args.timing)
    outputs = ["sweep.csv"]
    dump = None
    if args.dump_first:
        models = fit_kinds(cfg.model, tr, CostPair(args.dump_cp, args.ch), cfg.kinds, cfg.train, cfg.seed)
        dump = dump_predictions(models, tr, args.dump_first)
        outputs.append("predictions.csv")
    result.to_csv(_out_path(args, "sweep.csv"))
    if dump is not None:
        dump.to_csv(_out_path(args, "predictions.csv"))
    return outputs


def cmd_eval(args):
    model = load_model(args.model_path)
    data = load_csv(args.data, args.n_demand)
    c = CostPair(args.cp, args.ch)
    pred = model.predict(data.features)
    metrics = {
        "rows": data.n_rows,
        "squared_err": test_err(model, data),
        "mean_newsvendor_cost": newsvendor_cost(data.demands, pred, c) / data.n_rows,
    }
    with open(_out_path(args, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(_out_path(args, "eval_predictions.csv"), "w", encoding="utf-8") as fh:
        fh.write("index,demand,prediction\n")
        for i, (d, p) in enumerate(zip(data.demands[:, 0], pred[:, 0])):
            fh.write(f"{i},{float(d)!r},{float(p)!r}\n")
    print(json.dumps(metrics, sort_keys=True))
    return ["metrics.json", "eval_predictions.csv"]


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "sweep": cmd_sweep, "eval": cmd_eval}


def _config_echo(args):
    echo = {}
    for k, v in sorted(vars(args).items()):
        if isinstance(v, LossKind):
            v = v.value
        elif isinstance(v, tuple):
            v = [x.value if isinstance(x, LossKind) else x for x in v]
        echo[k] = v
    return echo


def write_manifest(args, argv, artifacts):
    doc = {
        "tool": "nvlearn",
        "version": __version__,
        "command": args.command,
        "argv": list(argv),
        "seed": getattr(args, "seed", None),
        "config": _config_echo(args),
        "artifacts": artifacts + [MANIFEST],
    }
    with open(_out_path(args, MANIFEST), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _replay_argv(args):
    with open(args.manifest, encoding="utf-8") as fh:
        doc = json.load(fh)
    argv = list(doc["argv"])
    if args.out:
        argv = _replace_out(argv, args.out)
    return argv


def _replace_out(argv, out):
    res, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        res.append(a)
    return res + ["--out", out]


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "replay":
        try:
            return main(_replay_argv(args))
        except (OSError, KeyError, ValueError) as exc:
            print(f"nvlearn: cannot replay {args.manifest}: {exc}", file=sys.stderr)
            return 2
    if not args.out:
        parser.error(f"--out is required (or set ${OUT_ENV})")
    # record the resolved output directory so replay writes to the same place
    argv = _replace_out(argv, args.out)
    try:
        os.makedirs(args.out, exist_ok=True)
        artifacts = COMMANDS[args.command](args)
        write_manifest(args, argv, artifacts)
    except TrainingError as exc:
        print(f"nvlearn: training diverged at iteration {exc.iteration}: {exc}", file=sys.stderr)
        return 3
    except SweepError as exc:
        print(f"nvlearn: {exc}", file=sys.stderr)
        return 3
    except (CliError, DataError, OSError, ValueError) as exc:
        print(f"nvlearn: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
