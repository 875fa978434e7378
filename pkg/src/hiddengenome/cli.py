"""Command-line front end.

Subcommands: simulate, ingest, screen, fit, predict, evaluate, report.
Every run writes ``manifest.json`` next to its outputs. The manifest holds
the resolved options, package versions and input checksums. It contains no
timestamps, so repeated runs give identical bytes.

Exit codes: 0 success, 2 usage or configuration error, 3 data or format
error, 4 numerical failure (a fit that did not meet its KKT certificate).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from importlib import metadata

import numpy as np

from .evaluation import Cohort, EvaluationError, ExperimentConfig, cv_experiment
from .ingest import DataError, FormatError, build_cohort, read_id_list, read_mutations, recurrence_table
from .inference import aggregate_signature_groups, odds_ratios, predict, read_signature_groups
from .metafeatures import MetaFeatureSpace, build_meta_design, burden_matrix, default_gene_roster, read_gene_roster
from .model import ModelFit
from .pipeline import METHODS, TrainConfig, train
from .screening import screen_variants
from .simulate import SimConfig, generate_cohort, write_simulation
from .solver import ConfigError, ConvergenceError, SolverConfig

log = logging.getLogger("hiddengenome")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers

def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _unit_interval(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def read_config_file(path: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment. Keys use option names
    with dashes or underscores (``n-lambda`` or ``n_lambda``)."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value.strip("\"'")
    return out


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions() -> dict[str, str]:
    out = {}
    for pkg in ("hiddengenome", "numpy", "scipy", "scikit-learn", "joblib"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def write_manifest(outdir: str, args: argparse.Namespace, inputs: dict[str, str], outputs: list[str]) -> None:
    options = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}
    manifest = {
        "subcommand": args.command,
        "options": options,
        "seed": getattr(args, "seed", None),
        "inputs": {name: {"path": p, "sha256": _sha256(p)} for name, p in sorted(inputs.items()) if p},
        "outputs": sorted(outputs),
        "versions": _versions(),
    }
    with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write(outdir: str, name: str, text: str) -> str:
    with open(os.path.join(outdir, name), "w", encoding="utf-8") as fh:
        fh.write(text)
    return name


def _space(args) -> MetaFeatureSpace:
    roster = read_gene_roster(args.gene_roster) if args.gene_roster else default_gene_roster()
    return MetaFeatureSpace(tuple(roster))


def _load_training(args):
    """Records, design and labels; unlabeled tumors count as test tumors
    unless ``--test-ids`` names them explicitly."""
    records = read_mutations(args.mutations)
    if getattr(args, "test_ids", None):
        test = read_id_list(args.test_ids)
    else:
        test = sorted({r.tumor_id for r in records if r.cancer_type is None})
    design, labels = build_cohort(records, test)
    if labels.n_train == 0:
        raise DataError("no labeled training tumors in the input")
    return records, design, labels


def _solver(args) -> SolverConfig:
    return SolverConfig(kkt_tol=args.kkt_tol, max_iter=args.max_iter, strict=True)


def _require_seed(args) -> None:
    if args.seed is None:
        raise UsageError(f"{args.command} requires --seed (reproducibility contract)")


# ------------------------------------------------------------ subcommands

def cmd_simulate(args) -> list[str]:
    _require_seed(args)
    kwargs = {f.name: getattr(args, f.name) for f in dataclasses.fields(SimConfig) if f.name != "seed"}
    try:
        config = SimConfig(seed=args.seed, **kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    paths = write_simulation(generate_cohort(config), args.out)
    return [os.path.basename(p) for p in paths.values()]


def cmd_ingest(args) -> list[str]:
    _, design, labels = _load_training(args)
    counts = np.bincount(labels.labels, minlength=labels.n_classes)
    summary = ["key\tvalue", f"n_tumors\t{design.n_tumors}", f"n_train\t{labels.n_train}",
               f"n_test\t{design.n_tumors - labels.n_train}", f"d\t{design.d}", f"d1\t{design.d1}",
               f"presence_entries\t{design.X.nnz}"]
    summary += [f"class_count:{c}\t{int(n)}" for c, n in zip(labels.class_names, counts)]
    rec = ["r\tn_variants"] + [f"{r}\t{n}" for r, n in recurrence_table(design).items()]
    return [_write(args.out, "cohort_summary.tsv", "\n".join(summary) + "\n"),
            _write(args.out, "recurrence.tsv", "\n".join(rec) + "\n")]


def cmd_screen(args) -> list[str]:
    _, design, labels = _load_training(args)
    ranking = screen_variants(design, labels, args.nmi_top)
    return [_write(args.out, "screening.tsv", ranking.to_tsv())]


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        method=args.method, top=args.nmi_top, n_folds=args.folds, n_lambda=args.n_lambda,
        lambda_min_ratio=args.lambda_min_ratio, cv_rule=args.cv_rule, seed=args.seed or 0,
        lam=args.lam, solver=_solver(args),
    )


def cmd_fit(args) -> list[str]:
    records, design, labels = _load_training(args)
    space = _space(args)
    meta = build_meta_design(design, records, space)
    trained = train(design, labels, burden_matrix(design, meta), space, _train_config(args))
    trained.model.save(os.path.join(args.out, "model.json"))
    out = ["model.json"]
    if trained.cv is not None:
        out.append(_write(args.out, "cv.tsv", trained.cv.to_tsv()))
    log.info("chosen lambda %.6g, %d active groups", trained.model.lam,
             trained.model.diagnostics["n_active_groups"])
    return out


def cmd_predict(args) -> list[str]:
    model = ModelFit.load(args.model)
    records = read_mutations(args.mutations)
    if args.test_ids:
        ids = set(read_id_list(args.test_ids))
        unknown = ids - {r.tumor_id for r in records}
        if unknown:
            raise DataError(f"test tumor ids not found in records: {', '.join(sorted(unknown)[:10])}")
        records = [r for r in records if r.tumor_id in ids]
    ids = sorted({r.tumor_id for r in records})
    design, _ = build_cohort(records, ids)
    meta = build_meta_design(design, records, model.meta_space)
    preds = predict(model, design, meta)
    log.info("%d tumors, %d with unseen variants", len(ids), int(np.sum(preds.n_unseen > 0)))
    return [_write(args.out, "predictions.csv", preds.to_csv())]


def _evaluate_tops(args) -> dict[str, int]:
    tops = {"multilevel": args.nmi_top, "recorded": args.recorded_top}
    return {m: t for m, t in tops.items() if t is not None}


def cmd_evaluate(args) -> list[str]:
    _require_seed(args)
    records = read_mutations(args.mutations)
    cohort = Cohort.from_records(records, _space(args))
    config = ExperimentConfig(
        repetitions=args.repetitions, folds=args.folds, methods=tuple(args.methods), seed=args.seed,
        inner_folds=args.inner_folds, n_lambda=args.n_lambda, lambda_min_ratio=args.lambda_min_ratio,
        cv_rule=args.cv_rule, top=_evaluate_tops(args),
        solver=_solver(args), n_jobs=args.threads, keep_curves=args.pr_points,
    )
    report = cv_experiment(cohort, config)
    out = [_write(args.out, "report.tsv", report.report_tsv()),
           _write(args.out, "summary.tsv", report.summary_tsv()),
           _write(args.out, "hard_metrics.tsv", report.hard_metrics_tsv())]
    if args.pr_points:
        out.append(_write(args.out, "pr_points.tsv", report.pr_points_tsv()))
    return out


def cmd_report(args) -> list[str]:
    model = ModelFit.load(args.model)
    ors = odds_ratios(model, args.reference)
    text = ors.to_tsv()
    if args.signature_groups:
        if not args.mutations:
            raise UsageError("--signature-groups needs --mutations to compute group scales")
        groups = read_signature_groups(args.signature_groups)
        records = read_mutations(args.mutations)
        if args.scale_cohort == "train":
            records = [r for r in records if r.cancer_type is not None]
        design, _ = build_cohort(records, sorted({r.tumor_id for r in records if r.cancer_type is None}))
        meta = build_meta_design(design, records, model.meta_space)
        groups_report = aggregate_signature_groups(model, burden_matrix(design, meta), groups, args.reference)
        text += groups_report.to_tsv(header=False)
    return [_write(args.out, "odds_ratios.tsv", text)]


# ----------------------------------------------------------------- parser

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, help="output directory (created if missing)")
    p.add_argument("--config", help="key=value file supplying defaults for any option")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _add_cohort(p, test_ids: bool = True) -> None:
    p.add_argument("--mutations", required=True, help="mutations.tsv")
    if test_ids:
        p.add_argument("--test-ids", help="file of test tumor ids (default: tumors without cancer_type)")


def _add_roster(p) -> None:
    p.add_argument("--gene-roster", help="gene roster file, one gene per line (default: bundled roster)")


def _add_fit_options(p) -> None:
    p.add_argument("--nmi-top", type=int, default=None,
                   help="keep variants with NMI rank below this (default 250; 1000 for 'recorded')")
    p.add_argument("--n-lambda", type=_positive_int, default=50, help="penalty grid size (default 50)")
    p.add_argument("--lambda-min-ratio", type=_unit_interval, default=0.01,
                   help="smallest penalty as a fraction of lambda_max (default 0.01)")
    p.add_argument("--cv-rule", choices=("min", "1sd"), default="min", help="penalty selection rule")
    p.add_argument("--kkt-tol", type=_positive_float, default=1e-4, help="solver stationarity tolerance")
    p.add_argument("--max-iter", type=_positive_int, default=10_000, help="solver iteration cap per penalty")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="hiddengenome", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["simulate"] = sub.add_parser("simulate", help="generate a synthetic cohort with known truth")
    _add_common(p)
    p.add_argument("--seed", type=int, help="master seed (required)")
    for f in dataclasses.fields(SimConfig):
        if f.name == "seed":
            continue
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=type(f.default), default=f.default,
                       help=f"default {f.default}")
    p.set_defaults(func=cmd_simulate)

    p = subs["ingest"] = sub.add_parser("ingest", help="validate records; write cohort summary and recurrence table")
    _add_common(p)
    _add_cohort(p)
    p.set_defaults(func=cmd_ingest)

    p = subs["screen"] = sub.add_parser("screen", help="rank training variants by NMI with the label")
    _add_common(p)
    _add_cohort(p)
    p.add_argument("--nmi-top", type=_positive_int, default=250, help="retain ranks below this (default 250)")
    p.set_defaults(func=cmd_screen)

    p = subs["fit"] = sub.add_parser("fit", help="screen, choose lambda by CV and fit; writes model.json, cv.tsv")
    _add_common(p)
    _add_cohort(p)
    _add_roster(p)
    _add_fit_options(p)
    p.add_argument("--method", choices=METHODS, default="multilevel")
    p.add_argument("--folds", type=_positive_int, default=10, help="inner CV folds (default 10)")
    p.add_argument("--lambda", dest="lam", type=_positive_float, default=None, help="fixed penalty; skips CV")
    p.add_argument("--seed", type=int, default=0, help="CV fold seed (default 0)")
    p.set_defaults(func=cmd_fit)

    p = subs["predict"] = sub.add_parser("predict", help="class probabilities for new tumors")
    _add_common(p)
    _add_cohort(p)
    p.add_argument("--model", required=True, help="model.json from fit")
    p.set_defaults(func=cmd_predict)

    p = subs["evaluate"] = sub.add_parser("evaluate", help="repeated stratified CV comparison of the methods")
    _add_common(p)
    _add_cohort(p, test_ids=False)
    _add_roster(p)
    _add_fit_options(p)
    p.add_argument("--seed", type=int, help="master seed (required)")
    p.add_argument("--recorded-top", type=_positive_int, default=None,
                   help="screening cutoff for the 'recorded' method (default 1000)")
    p.add_argument("--repetitions", type=_positive_int, default=5)
    p.add_argument("--folds", type=_positive_int, default=5, help="outer folds (default 5)")
    p.add_argument("--inner-folds", type=_positive_int, default=10, help="folds for choosing lambda (default 10)")
    p.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS))
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1,
                   help="worker processes (default: available CPUs)")
    p.add_argument("--pr-points", action="store_true", help="also write pr_points.tsv")
    p.set_defaults(func=cmd_evaluate)

    p = subs["report"] = sub.add_parser("report", help="odds ratios and signature-group effects")
    _add_common(p)
    p.add_argument("--model", required=True, help="model.json from fit")
    p.add_argument("--reference", default="0", help="reference class name or index (default 0)")
    p.add_argument("--signature-groups", help="TSV: category, then one weight column per group")
    p.add_argument("--mutations", help="cohort used for signature-group scales")
    p.add_argument("--scale-cohort", choices=("train", "all"), default="train",
                   help="tumors whose burden sets the group scales (default: labeled training tumors)")
    p.set_defaults(func=cmd_report)
    return parser, subs


def _reference(value: str):
    return int(value) if value.lstrip("-").isdigit() else value


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            values = read_config_file(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from exc
        sp = subs[args.command]
        known = {a.dest for a in sp._actions}
        unknown = sorted(set(values) - known - {"config", "out"})
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        # config supplies defaults; explicit flags still win
        sp.set_defaults(**{k: v for k, v in values.items() if k in known})
        for action in sp._actions:
            if action.dest in values:
                action.required = False
        args = parser.parse_args(argv)
        # argparse converts string defaults through ``type`` but not lists or flags
        for action in sp._actions:
            value = getattr(args, action.dest, None)
            if action.dest not in values or not isinstance(value, str):
                continue
            if action.nargs == "+":
                items = value.replace(",", " ").split()
                bad = [v for v in items if action.choices and v not in action.choices]
                if bad:
                    raise UsageError(f"invalid {action.dest}: {', '.join(bad)}")
                setattr(args, action.dest, items)
            elif action.nargs == 0:
                setattr(args, action.dest, value.lower() in ("1", "true", "yes", "on"))
    if hasattr(args, "reference"):
        args.reference = _reference(args.reference)
    return args


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, argparse.ArgumentTypeError, ValueError) as exc:
        print(f"hiddengenome: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        os.makedirs(args.out, exist_ok=True)
        outputs = args.func(args)
        inputs = {k: getattr(args, k, None) for k in ("mutations", "test_ids", "gene_roster", "model",
                                                      "signature_groups", "config")}
        write_manifest(args.out, args, inputs, outputs + ["manifest.json"])
    except (UsageError, ConfigError) as exc:
        print(f"hiddengenome: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"hiddengenome: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, FormatError, EvaluationError, OSError, ValueError, KeyError) as exc:
        print(f"hiddengenome: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
