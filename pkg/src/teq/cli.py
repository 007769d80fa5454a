"""Command-line entry point: ``teq <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .pipeline import ConfigError, Run, StageError, load_config, parse_duration, run_pipeline, write_json

log = logging.getLogger("teq")


def _months(text: str) -> tuple[int, int]:
    a, _, b = text.partition("-")
    try:
        lo, hi = int(a), int(b or a)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MONTH or FIRST-LAST, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"bad month range {text!r}")
    return lo, hi


def _durations(text: str) -> list[int]:
    try:
        return [parse_duration(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _run(args, **overrides) -> Run:
    over = {k: v for k, v in overrides.items() if v is not None}
    if getattr(args, "dataset", None):
        over["dataset.path"] = str(args.dataset)
        over["dataset.generate"] = False
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    cfg = load_config(args.config, over)
    return Run(cfg, args.out)


def cmd_synth(args) -> int:
    from .synth import SynthConfig, generate_dataset

    cfg = load_config(args.config).synth if args.config else SynthConfig()
    doc = cfg.to_dict()
    for key in ("seed", "alerts", "months", "customers", "label_noise"):
        if getattr(args, key) is not None:
            doc[key] = getattr(args, key)
    if args.no_drift:
        doc["drift_day"] = None
    elif args.drift_day is not None:
        doc["drift_day"] = args.drift_day
    paths = generate_dataset(SynthConfig.from_dict(doc), args.out)
    print(json.dumps({k: str(v) for k, v in paths.items()}, indent=1))
    return 0


def cmd_featurize(args) -> int:
    from .alerts import load_alerts
    from .experiment import content_record
    from .featurize import FeatureSpec, fit_feature_spec, transform_batch

    alerts = load_alerts(args.alerts)
    records = [content_record(a) for a in alerts]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.transform:
        spec = FeatureSpec.loads(Path(args.transform).read_text(encoding="utf-8"))
        np.save(out / "content.npy", transform_batch(records, spec))
        print(f"{len(alerts)} alerts encoded at width {spec.width} into {out / 'content.npy'}")
        return 0
    spec = fit_feature_spec(records, args.rare_threshold)
    (out / "feature_spec.json").write_text(spec.dumps() + "\n", encoding="utf-8")
    if args.matrix:
        np.save(out / "content.npy", transform_batch(records, spec))
    print(f"{len(alerts)} alerts -> width {spec.width}; spec at {out / 'feature_spec.json'}")
    return 0


def cmd_context(args) -> int:
    from .alerts import load_alerts
    from .context import ContextConfig, context_matrix

    cfg = ContextConfig(tuple(args.windows)) if args.windows else ContextConfig()
    X = context_matrix(load_alerts(args.alerts), cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "context.npy", X)
    write_json(out / "context_columns.json", cfg.feature_names)
    print(f"context matrix {X.shape} at {out / 'context.npy'}")
    return 0


def cmd_train(args) -> int:
    from .featurize import fit_feature_spec, transform_batch
    from .learners import TrainConfig, save_model, train

    run = _run(args)
    corpus = run.corpus
    lo, hi = args.months
    rows = corpus.rows_for(corpus.incidents_in(run.timeline.span(lo, hi)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.task == "content":
        recs = [corpus.records[r] for r in rows]
        spec = fit_feature_spec(recs, run.config.zoo.rare_threshold)
        X = transform_batch(recs, spec)
        (out / "feature_spec.json").write_text(spec.dumps() + "\n", encoding="utf-8")
    else:
        X = corpus.context[rows]
    cfg = TrainConfig(args.algo, run.config.seed, run.config.zoo.params.get(args.algo, {}))
    model = train(X, corpus.labels[rows], cfg)
    save_model(model, out / f"{args.task}_{args.algo}.json")
    print(f"trained {args.task}:{args.algo} on {len(rows)} alerts (months {lo}-{hi})")
    return 0


def cmd_zoo(args) -> int:
    run = _run(args)
    if args.train_months:
        lo, hi = args.train_months
        test = args.test_month or hi + 1
        run.set_window(args.window, run.timeline.span(lo, hi), run.timeline.month(test))
    run.write_window(args.window)
    res = run.window(args.window)
    print(f"window {args.window}: winner {res.selection.winner} ROC AUC {res.selection.roc_auc:.4f}")
    return 0


def cmd_triage(args) -> int:
    run = _run(args, **{"triage.slices": args.slices, "triage.target_recall": args.target_recall})
    doc = run.write_triage()
    s = doc["suppression"]
    print(f"threshold {s['threshold']:.4f}: recall {s['recall']:.3f}, "
          f"{s['fp_suppression_rate']:.1%} of negatives suppressed")
    return 0


def cmd_decay(args) -> int:
    run = _run(args)
    doc = run.write_decay(modes=(args.mode,))
    for row in doc[args.mode]:
        print(f"{args.mode} month {row['test_month']}: {row['winner']} ROC AUC {row['roc_auc']:.4f}")
    return 0


def cmd_explain(args) -> int:
    method = {"perm": "permutation", "shapley": "shapley"}[args.method]
    run = _run(args, **{"explain.methods": [method]})
    doc = run.explain()
    for name, value in [(f["name"], f["value"]) for f in doc[method]["features"][:10]]:
        print(f"{value:10.5f}  {name}")
    return 0


def cmd_pipeline(args) -> int:
    res = run_pipeline(args.config, args.run_dir)
    print(f"pipeline completed in {res.timings['total']:.1f}s; manifest at {res.manifest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="teq", description="Alert triage toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default="runs/cli"):
        sp.add_argument("--config", help="YAML config (default: bundled)")
        sp.add_argument("--dataset", help="dataset directory (alerts.jsonl, incidents.jsonl, ...)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", default=out_default, help="output directory")

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    sp.add_argument("--config")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--alerts", type=int)
    sp.add_argument("--months", type=int)
    sp.add_argument("--customers", type=int)
    sp.add_argument("--label-noise", type=float)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--drift-day", type=float)
    g.add_argument("--no-drift", action="store_true")
    sp.set_defaults(fn=cmd_synth)

    sp = sub.add_parser("featurize", help="fit a feature spec on an alert file")
    sp.add_argument("--alerts", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--rare-threshold", type=int, default=50)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--fit", action="store_true", help="fit a spec (the default)")
    g.add_argument("--transform", metavar="SPEC", help="encode with an existing feature_spec.json")
    sp.add_argument("--matrix", action="store_true", help="with --fit, also write the encoded matrix")
    sp.set_defaults(fn=cmd_featurize)

    sp = sub.add_parser("context", help="compute context features for an alert file")
    sp.add_argument("--alerts", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--windows", type=_durations, help="comma list, e.g. 1m,5m,1h")
    sp.set_defaults(fn=cmd_context)

    sp = sub.add_parser("train", help="train one content or context model")
    common(sp)
    sp.add_argument("--task", choices=("content", "context"), required=True)
    sp.add_argument("--algo", choices=("lr", "rf", "gbt", "mlp"), required=True)
    sp.add_argument("--months", type=_months, default=(1, 5))
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("zoo", help="build and select the 72-model zoo for one window")
    common(sp)
    sp.add_argument("--window", type=int, default=0, help="sliding window index")
    sp.add_argument("--train-months", type=_months, help="explicit train range, e.g. 1-5")
    sp.add_argument("--test-month", type=int, help="explicit test month (default: the next one)")
    sp.set_defaults(fn=cmd_zoo)

    sp = sub.add_parser("triage", help="queue, suppression and within-incident simulations")
    common(sp)
    sp.add_argument("--slices", type=_durations)
    sp.add_argument("--target-recall", type=float)
    sp.set_defaults(fn=cmd_triage)

    sp = sub.add_parser("decay", help="fixed or sliding-retraining decay experiment")
    common(sp)
    sp.add_argument("--mode", choices=("fixed", "retrain"), required=True)
    sp.set_defaults(fn=cmd_decay)

    sp = sub.add_parser("explain", help="feature importance for the latest winner")
    common(sp)
    sp.add_argument("--method", choices=("perm", "shapley"), required=True)
    sp.set_defaults(fn=cmd_explain)

    sp = sub.add_parser("pipeline", help="run every stage and write a run directory")
    sp.add_argument("--config", help="YAML config (default: bundled)")
    sp.add_argument("--run-dir")
    sp.set_defaults(fn=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"stage failed: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
