"""Command-line entry point.

Subcommands: generate, adjudicate, pretrain, train, evaluate,
fit-explainer, explain, score. Every artifact-producing command writes a
``manifest.json`` describing its inputs, outputs and configuration, and a
separate ``timing.json`` with the wall-clock duration, so manifests of two
identical runs are byte-identical.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cohort import (GeneratorConfig, adjudicate, apply_exclusions, cohort_manifest, generate_cohort, get_schema,
                     load_cohort, read_records_jsonl, read_streams_csv, save_cohort, write_streams_csv)
from .cohort.preprocess import preprocess, preprocess_many
from .evaluation import (FIXED_AGE_EDGES, evaluate, first_alarm_hour, outcome_pairs, roc_curve, write_metrics_json,
                         write_roc_csv, write_subgroup_csv)
from .interpret import (Explainer, ExplainerConfig, beeswarm_rows, explain, full_input_auroc, rank_features,
                        topk_retention_curve, train_explainer, train_surrogate, write_attributions_csv,
                        write_ranking_json, write_retention_csv)
from .model import RiskTrajectory, load_model, save_model
from .reporting import config_hash, file_digest, read_json, write_csv, write_json
from .tensor import ShapeError
from .training import (NumericalAbort, TrainRunConfig, cross_validate, load_init, make_splits, pretrain_mortality,
                       save_fold, write_training_log)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
OUTPUT_ENV = "DYNRISK_OUTPUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# manifests -------------------------------------------------------------------------

class Run:
    """Collects what a command read and wrote, then writes the manifest."""

    def __init__(self, command: str, out: Path, seed=None, config=None):
        self.command, self.out, self.seed, self.config = command, out, seed, config or {}
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []
        self.extra: dict = {}
        self.started = time.perf_counter()
        out.mkdir(parents=True, exist_ok=True)

    def read(self, *paths):
        self.inputs += [Path(p) for p in paths]

    def wrote(self, *names):
        self.outputs += [self.out / n for n in names]

    def finish(self, schema_fingerprint: str | None = None):
        def entry(p: Path, root: Path | None):
            name = str(p.relative_to(root)) if root is not None else p.name
            return {"name": name, "sha256": file_digest(p)}
        doc = {
            "command": self.command,
            "tool_version": __version__,
            "master_seed": self.seed,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "schema_fingerprint": schema_fingerprint,
            "inputs": [entry(p, None) for p in self.inputs],
            "outputs": [entry(p, self.out) for p in self.outputs],
        }
        doc.update(self.extra)
        write_json(self.out / "manifest.json", doc)
        write_json(self.out / "timing.json", {"command": self.command,
                                              "wall_clock_seconds": round(time.perf_counter() - self.started, 3)})


def _out_dir(args, command: str) -> Path:
    if args.out:
        return Path(args.out)
    base = os.environ.get(OUTPUT_ENV)
    if not base:
        raise UsageError(f"--out is required (or set {OUTPUT_ENV})")
    return Path(base) / command


def _cohort_paths(directory) -> list[Path]:
    d = Path(directory)
    return [d / "cohort.jsonl", d / "schema.json"]


def _load_cohort(directory):
    d = Path(directory)
    if not (d / "cohort.jsonl").exists():
        raise FileNotFoundError(f"{d} has no cohort.jsonl")
    return load_cohort(d)


def _load_config(args) -> TrainRunConfig:
    base = read_json(args.config) if getattr(args, "config", None) else {}
    if "preset" not in base and "model" not in base:
        base["preset"] = getattr(args, "preset", None) or "desk"
    cfg = TrainRunConfig.from_dict(base)
    for flag, attr in (("epochs", "epochs"), ("seed", "seed"), ("batch_size", "batch_size"),
                       ("learning_rate", "learning_rate"), ("folds", "fold_count")):
        v = getattr(args, flag, None)
        if v is not None:
            setattr(cfg, attr, v)
    if getattr(args, "split_scheme", None):
        cfg.split_scheme = args.split_scheme
    TrainRunConfig(**{**cfg.to_dict()})  # re-validate after overrides
    return cfg


def _splits_for(records, cfg: TrainRunConfig, splits_path=None):
    if splits_path:
        doc = read_json(splits_path)
        from .training import SplitPlan
        return SplitPlan(doc["fold_count"], doc["seed"], doc["scheme"], doc["folds"])
    return make_splits(records, cfg.seed, cfg.fold_count, cfg.split_scheme)


# commands --------------------------------------------------------------------------

def cmd_generate(args) -> int:
    out = _out_dir(args, "generate")
    schema = get_schema(args.schema)
    gcfg = GeneratorConfig(task=args.task, id_prefix=args.id_prefix, ineligible_rate=args.ineligible_rate)
    if args.signal is not None:
        gcfg.signal = args.signal
    run = Run("generate", out, args.seed, {"size": args.size, "positive_rate": args.positive_rate,
                                           "schema": args.schema, "generator": gcfg.to_dict()})
    pairs = generate_cohort(args.size, args.positive_rate, args.seed, schema, gcfg)
    records = [r for _, r in pairs]
    streams = [s for s, _ in pairs if s is not None]
    if streams:
        adjudicated = {s.patient_id: adjudicate(s) for s in streams}
        for r in records:
            res = adjudicated[r.patient_id]
            if res.label != r.outcome or res.onset_hour != r.onset_hour:
                raise ValueError(f"{r.patient_id}: generated outcome disagrees with adjudication")
    kept, report = apply_exclusions(records)
    save_cohort(out, kept, schema)
    write_json(out / "exclusions.json", report)
    write_json(out / "ground_truth.json", cohort_manifest(schema, gcfg, args.size, args.positive_rate, args.seed))
    run.wrote("cohort.jsonl", "schema.json", "exclusions.json", "ground_truth.json")
    if streams:
        kept_ids = {r.patient_id for r in kept}
        write_streams_csv(out / "streams.csv", [s for s in streams if s.patient_id in kept_ids])
        run.wrote("streams.csv")
    run.extra["exclusion_report"] = report
    run.finish(schema.fingerprint)
    positives = sum(r.label for r in kept)
    print(f"wrote {len(kept)} stays ({positives} positive) to {out}")
    return EXIT_OK


def cmd_adjudicate(args) -> int:
    out = _out_dir(args, "adjudicate")
    run = Run("adjudicate", out)
    run.read(args.streams)
    streams = read_streams_csv(args.streams)
    rows = [(s.patient_id, adjudicate(s)) for s in streams]
    with open(out / "adjudication.jsonl", "w") as fh:
        for pid, res in rows:
            fh.write(json.dumps({"patient_id": pid, **res.to_dict()}, sort_keys=True) + "\n")
    write_csv(out / "onsets.csv", ["patient_id", "label", "onset_time", "onset_hour", "triggering_rule"],
              [(pid, r.label, r.onset_time, r.onset_hour, r.triggering_rule) for pid, r in rows])
    run.wrote("adjudication.jsonl", "onsets.csv")
    run.finish()
    print(f"adjudicated {len(rows)} streams")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    out = _out_dir(args, "pretrain")
    cfg = _load_config(args)
    records, schema, _ = _load_cohort(args.cohort)
    study, study_schema, _ = _load_cohort(args.study_cohort)
    if study_schema.fingerprint != schema.fingerprint:
        raise ValueError(f"schema mismatch: pretraining {schema.fingerprint} vs study {study_schema.fingerprint}")
    run = Run("pretrain", out, cfg.seed, cfg.to_dict())
    run.read(*_cohort_paths(args.cohort), *_cohort_paths(args.study_cohort))
    res = pretrain_mortality(records, [r.patient_id for r in study], schema, cfg)
    save_fold(out / "pretrained.ckpt.json", res, schema, {"task": "mortality"})
    write_training_log(out / "pretrain_log.csv", res.log)
    run.wrote("pretrained.ckpt.json", "pretrain_log.csv")
    run.extra["assumptions"] = ["pretraining reuses the risk loss with in-hospital death as the positive event"]
    run.finish(schema.fingerprint)
    print(f"pretrained: best validation AUROC {res.best_val_auroc:.4f} at epoch {res.best_epoch}")
    return EXIT_OK


def cmd_train(args) -> int:
    out = _out_dir(args, "train")
    cfg = _load_config(args)
    records, schema, _ = _load_cohort(args.cohort)
    run = Run("train", out, cfg.seed, cfg.to_dict())
    run.read(*_cohort_paths(args.cohort))
    init = None
    if args.pretrained:
        run.read(args.pretrained)
        init = load_init(args.pretrained)
        cfg.pretrained_init = Path(args.pretrained).name
        run.config = cfg.to_dict()
    plan = make_splits(records, cfg.seed, cfg.fold_count, cfg.split_scheme)
    write_json(out / "splits.json", plan.to_dict())
    run.wrote("splits.json")
    folds = args.only_fold if args.only_fold else None
    try:
        cv = cross_validate(records, schema, cfg, init=init, folds=folds, plan=plan)
    except NumericalAbort as exc:
        print(f"numerical abort in fold {exc.fold}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for res in cv.folds:
        save_fold(out / f"fold{res.fold}.ckpt.json", res, schema, {"splits_fingerprint": plan.fingerprint})
        write_training_log(out / f"fold{res.fold}_log.csv", res.log)
        run.wrote(f"fold{res.fold}.ckpt.json", f"fold{res.fold}_log.csv")
    summary = {"folds": [f.fold for f in cv.folds], **cv.summary(),
               "pretrained_init": file_digest(args.pretrained) if args.pretrained else None}
    write_json(out / "summary.json", summary)
    run.wrote("summary.json")
    run.extra["splits_fingerprint"] = plan.fingerprint
    run.finish(schema.fingerprint)
    print(f"test AUROC per fold: {', '.join(f'{a:.4f}' for a in cv.test_aurocs)}; "
          f"mean {cv.mean:.4f} +/- {cv.sd:.4f}")
    return EXIT_OK


def _select(records, splits_path, fold, role):
    if not splits_path:
        return records
    doc = read_json(splits_path)
    ids = set(doc["folds"][fold][role])
    return [r for r in records if r.patient_id in ids]


def cmd_evaluate(args) -> int:
    out = _out_dir(args, "evaluate")
    records, schema, _ = _load_cohort(args.cohort)
    model, state, ck_schema, meta = load_model(args.checkpoint)
    if ck_schema.fingerprint != schema.fingerprint:
        raise ValueError(f"schema mismatch: cohort {schema.fingerprint}, checkpoint {ck_schema.fingerprint}")
    fold = args.fold if args.fold is not None else meta.get("fold", 0)
    chosen = _select(records, args.splits, fold, args.role)
    run = Run("evaluate", out, None, {"sensitivity": args.sensitivity, "threshold": args.threshold,
                                      "strict": args.strict, "age_edges": args.age_edges,
                                      "role": args.role if args.splits else "all", "fold": fold})
    run.read(*_cohort_paths(args.cohort), args.checkpoint, *([args.splits] if args.splits else []))
    scores = model.score_arrays(preprocess_many(chosen, state))
    trajs = [RiskTrajectory(r.patient_id, s, r.observed_time, r.label) for r, s in zip(chosen, scores)]
    pairs = outcome_pairs(trajs, chosen)
    edges = FIXED_AGE_EDGES if args.age_edges == "fixed" else None
    report = evaluate(pairs, trajs, args.sensitivity, args.strict, args.threshold, edges)
    report["checkpoint"] = {"name": Path(args.checkpoint).name, "fold": meta.get("fold")}
    write_metrics_json(out / "metrics.json", report)
    s = [p.summary_score for p in pairs]
    y = [p.label for p in pairs]
    write_roc_csv(out / "roc.csv", roc_curve(s, y))
    rows = []
    for grouping, groups in (("age", report["subgroups"]["age"]), ("sex", report["subgroups"]["sex"])):
        for g in groups:
            rows.append({"grouping": grouping, "group": g["group"], "n": g["n"], "positives": g["positives"],
                         "folds": 1 if g["auroc"] is not None else 0, "auroc_mean": g["auroc"],
                         "auroc_sd": None, "absent_reason": g["absent_reason"]})
    write_subgroup_csv(out / "subgroups.csv", rows)
    write_csv(out / "trajectories.csv", ["patient_id", "hour", "score"],
              [(t.patient_id, k, float(v)) for t in trajs for k, v in enumerate(t.scores)])
    run.wrote("metrics.json", "roc.csv", "subgroups.csv", "trajectories.csv")
    run.finish(schema.fingerprint)
    lt = report["lead_time"]
    lead = f"{lt['mean_hours']:.1f} h" if lt["mean_hours"] is not None else lt["absent_reason"]
    print(f"AUROC {report['auroc']:.4f}; threshold {report['threshold']:.4f}; mean lead time {lead}")
    return EXIT_OK


def cmd_fit_explainer(args) -> int:
    out = _out_dir(args, "fit-explainer")
    cfg = _load_config(args)
    records, schema, _ = _load_cohort(args.cohort)
    plan = _splits_for(records, cfg, args.splits)
    roles = plan.roles(args.fold)
    by_id = {r.patient_id: r for r in records}
    train = [by_id[p] for p in roles["train"]]
    val = [by_id[p] for p in roles["validation"]]
    ecfg = ExplainerConfig(epochs=args.explainer_epochs, subset_pairs=args.subset_pairs, seed=cfg.seed)
    run = Run("fit-explainer", out, cfg.seed, {"train": cfg.to_dict(), "explainer": ecfg.__dict__,
                                               "fold": args.fold})
    run.read(*_cohort_paths(args.cohort), *([args.splits] if args.splits else []))
    try:
        sur = train_surrogate(train, val, schema, cfg)
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    save_model(out / "surrogate.ckpt.json", sur.model, sur.preprocessor, schema,
               {"role": "surrogate", "fold": args.fold, "best_epoch": sur.best_epoch,
                "masked_val_auroc": sur.best_val_auroc, "masking": sur.masking})
    write_training_log(out / "surrogate_log.csv", sur.log)
    explainer, losses = train_explainer(sur.model, preprocess_many(train, sur.preprocessor), schema, ecfg)
    explainer.save(out / "explainer.ckpt.json", {"efficiency_correction": "additive", "fold": args.fold})
    write_csv(out / "explainer_log.csv", ["epoch", "loss"], [(i + 1, v) for i, v in enumerate(losses)])
    write_json(out / "masking_audit.json", sur.masking)
    run.wrote("surrogate.ckpt.json", "surrogate_log.csv", "explainer.ckpt.json", "explainer_log.csv",
              "masking_audit.json")
    run.extra["assumptions"] = ["explainer predictions are shifted additively to satisfy efficiency"]
    run.finish(schema.fingerprint)
    print(f"surrogate masked validation AUROC {sur.best_val_auroc:.4f}; "
          f"realized keep rate {sur.masking['realized_keep_rate']:.4f}")
    return EXIT_OK


def cmd_explain(args) -> int:
    out = _out_dir(args, "explain")
    for p in (args.surrogate, args.explainer):
        if not Path(p).exists():
            raise FileNotFoundError(f"model file {p} not found")
    records, schema, _ = _load_cohort(args.cohort)
    surrogate, state, s_schema, s_meta = load_model(args.surrogate)
    if s_schema.fingerprint != schema.fingerprint:
        raise ValueError(f"schema mismatch: cohort {schema.fingerprint}, surrogate {s_schema.fingerprint}")
    explainer, _ = Explainer.load(args.explainer)
    fold = s_meta.get("fold", 0)
    if args.splits:
        rank_set = _select(records, args.splits, fold, args.rank_role)
        eval_set = _select(records, args.splits, fold, args.eval_role)
    else:
        rank_set = eval_set = records
    run = Run("explain", out, None, {"topk": args.topk, "rank_role": args.rank_role, "eval_role": args.eval_role,
                                     "fold": fold})
    run.read(*_cohort_paths(args.cohort), args.surrogate, args.explainer, *([args.splits] if args.splits else []))
    names = [f.name for f in schema.maskable]
    attributions = [explain(surrogate, explainer, preprocess(r, state), schema, r.patient_id) for r in rank_set]
    ranking = rank_features(attributions, names)
    rows = beeswarm_rows(attributions, rank_set, schema)
    write_attributions_csv(out / "attributions.csv", rows)
    write_beeswarm_csv(out / "beeswarm.csv", rows, ranking)
    d = len(names)
    ks = sorted({k for k in list(range(0, min(args.topk, d) + 1)) + [args.topk, d] + list(range(20, d, 10))})
    arrays = preprocess_many(eval_set, state)
    labels = [r.label for r in eval_set]
    curve = topk_retention_curve(surrogate, ranking, arrays, labels, schema, ks)
    write_retention_csv(out / "retention.csv", curve)
    write_ranking_json(out / "ranking.json", ranking, {"full_input_auroc": full_input_auroc(surrogate, arrays, labels),
                                                       "patients_ranked": len(rank_set)})
    run.wrote("attributions.csv", "beeswarm.csv", "retention.csv", "ranking.json")
    run.finish(schema.fingerprint)
    print("top features: " + ", ".join(ranking.top(min(args.topk, d))))
    return EXIT_OK


def write_beeswarm_csv(path, rows, ranking):
    """Per-stay dots with a color value: the within-feature percentile of the mean feature value."""
    by_feature: dict[str, list] = {}
    for row in rows:
        by_feature.setdefault(row[1], []).append(row)
    rank = {f: i + 1 for i, f in enumerate(ranking.features)}
    out = []
    for f in ranking.features:
        frows = by_feature.get(f, [])
        vals = np.array([r[3] for r in frows], dtype=np.float64)
        finite = vals[~np.isnan(vals)]
        for pid, _, phi, v in frows:
            color = None if np.isnan(v) or finite.size == 0 else float(np.mean(finite <= v))
            out.append((rank[f], f, pid, phi, v, color))
    write_csv(path, ["rank", "feature", "patient_id", "phi", "mean_feature_value", "color"], out)


def _read_single_record(path):
    """One record from a JSON file or a one-line JSONL file."""
    from .cohort.records import PatientRecord
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        recs = read_records_jsonl(path)
        if len(recs) != 1:
            raise ValueError(f"{path}: expected exactly one record, found {len(recs)}")
        return recs[0]
    try:
        return PatientRecord.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}:1: malformed record ({exc})") from exc


def cmd_score(args) -> int:
    record = _read_single_record(args.record)
    model, state, schema, _ = load_model(args.checkpoint)
    if state is None:
        raise ValueError(f"{args.checkpoint} has no preprocessor")
    x = preprocess(record, state)
    scores = model.score_arrays([x])[0]
    alarm = first_alarm_hour(scores, args.threshold, args.strict) if args.threshold is not None else None
    rows = [(record.patient_id, k, float(v)) for k, v in enumerate(scores)]
    if args.out:
        write_csv(args.out, ["patient_id", "hour", "score"], rows)
    else:
        print("patient_id,hour,score")
        for pid, k, v in rows:
            print(f"{pid},{k},{v!r}")
    if args.threshold is not None:
        msg = f"first alarm at hour {alarm}" if alarm is not None else "no alarm"
        print(msg, file=sys.stderr)
    return EXIT_OK


# parser ----------------------------------------------------------------------------

def _train_flags(p):
    p.add_argument("--config", help="JSON training config (TrainRunConfig fields or {'preset': ...})")
    p.add_argument("--preset", choices=["desk", "large"], help="size preset used when no config is given")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dynrisk", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="simulate a cohort, adjudicate onsets, apply exclusions")
    p.add_argument("--size", type=int, default=1500)
    p.add_argument("--positive-rate", type=float, default=0.136)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--schema", choices=["full", "reduced"], default="full")
    p.add_argument("--task", choices=["shock", "mortality"], default="shock")
    p.add_argument("--id-prefix", default="P")
    p.add_argument("--signal", type=float, help="override the generator's signal strength")
    p.add_argument("--ineligible-rate", type=float, default=0.0,
                   help="fraction of stays made ineligible to exercise the exclusion rules")
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("adjudicate", help="apply the onset rules to raw streams")
    p.add_argument("--streams", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_adjudicate)

    p = sub.add_parser("pretrain", help="train on in-hospital mortality for initialization")
    p.add_argument("--cohort", required=True, help="mortality cohort directory")
    p.add_argument("--study-cohort", required=True, help="study cohort that must be disjoint")
    _train_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="cross-validated training")
    p.add_argument("--cohort", required=True)
    _train_flags(p)
    p.add_argument("--pretrained", help="checkpoint to initialize from")
    p.add_argument("--folds", type=int, default=None, help="number of folds (default 4)")
    p.add_argument("--only-fold", type=int, action="append", help="train just this fold (repeatable)")
    p.add_argument("--split-scheme", choices=["rotate", "resample"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metrics, ROC, subgroups and trajectories for a checkpoint")
    p.add_argument("--cohort", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sensitivity", type=float, default=0.8)
    p.add_argument("--threshold", type=float, help="fixed alarm threshold instead of --sensitivity")
    p.add_argument("--strict", action="store_true", help="alarm only when the score exceeds the threshold")
    p.add_argument("--splits", help="splits.json from train; evaluates one role of the checkpoint's fold")
    p.add_argument("--fold", type=int)
    p.add_argument("--role", choices=["train", "validation", "test"], default="test")
    p.add_argument("--age-edges", choices=["cohort", "fixed"], default="cohort",
                   help="age groups from cohort quartiles or the fixed 59/70/80 edges")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fit-explainer", help="train the masked surrogate and the amortized explainer")
    p.add_argument("--cohort", required=True)
    _train_flags(p)
    p.add_argument("--splits")
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--explainer-epochs", type=int, default=ExplainerConfig.epochs)
    p.add_argument("--subset-pairs", type=int, default=ExplainerConfig.subset_pairs)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit_explainer)

    p = sub.add_parser("explain", help="attributions, feature ranking and top-k retention curve")
    p.add_argument("--cohort", required=True)
    p.add_argument("--surrogate", required=True)
    p.add_argument("--explainer", required=True)
    p.add_argument("--topk", type=int, default=10)
    p.add_argument("--splits")
    p.add_argument("--rank-role", choices=["train", "validation", "test"], default="train")
    p.add_argument("--eval-role", choices=["train", "validation", "test"], default="test")
    p.add_argument("--out")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("score", help="hourly scores for one record")
    p.add_argument("--record", required=True, help="JSON or single-line JSONL record")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out", help="CSV path; prints to stdout when omitted")
    p.set_defaults(func=cmd_score)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dynrisk {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalAbort as exc:
        print(f"dynrisk {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, ShapeError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"dynrisk {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
