"""Command-line entry point: generate, preprocess, train, evaluate, pipeline.

stdout carries one machine-readable key=value summary line per command;
diagnostics go to stderr. Exit codes: 0 success, 2 configuration or data
precondition errors, 3 file format or I/O errors, 4 split/fold errors,
5 training divergence, 6 checkpoint or tensor cache errors.

Seed derivation from the master seed: cohort generation uses the seed
itself, the train/test split uses seed + 1000003, fold assignment uses
seed + 3000017, the stochastic baseline uses seed + 2000003, and fold f
trains with seed + f.
"""

import argparse
import hashlib
import re
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .cohort import (CohortConfig, cohort_summary, generate_cohort,
                     read_cohort, write_cohort)
from .errors import (CheckpointError, ConfigError, ContractViolationError,
                     EmptySeriesError, FitError, FoldError, FormatError,
                     HemocultError, SchemaError, ShapeError,
                     StratificationError, TensorCacheError,
                     TrainingDivergence, UndefinedRecallError)
from .lstm import load_params, save_params
from .metrics import (EvalReport, baseline_constant, baseline_proportional,
                      export_curve, export_curve_svg, pr_curve)
from .prep import (build_tensor, filter_outliers, fit_normalizer, read_stats,
                   read_tensors, write_stats, write_tensors)
from .training import (GRID_HIDDEN, GRID_LR, Ensemble, HyperParams,
                       ensemble_scores, grid_search, make_folds,
                       stratified_split, train_cell)

SPLIT_SEED_OFFSET = 1_000_003
BASELINE2_SEED_OFFSET = 2_000_003
FOLDS_SEED_OFFSET = 3_000_017

SPLIT_MAGIC = "#hemocult-split v1"

QUICK_PROFILE = {
    "n": 300, "positives": 40, "horizon": (12.0, 48.0),
    "hidden": 10, "lr": 0.01, "max_epochs": 20,
}

_EXIT_CODES = (
    ((ConfigError, FitError, EmptySeriesError, SchemaError, UndefinedRecallError), 2),
    ((FormatError,), 3),
    ((StratificationError, FoldError), 4),
    ((TrainingDivergence,), 5),
    ((CheckpointError, TensorCacheError, ShapeError, ContractViolationError), 6),
)


def _parse_horizon(text: str):
    match = re.fullmatch(r"([0-9.]+):([0-9.]+)", text)
    if not match:
        raise ConfigError(f"horizon must look like LO:HI in hours, got {text!r}")
    return float(match.group(1)), float(match.group(2))


def _parse_float_list(text: str):
    return tuple(float(tok) for tok in text.split(",") if tok)


def _parse_int_list(text: str):
    return tuple(int(tok) for tok in text.split(",") if tok)


def write_split(path, ids, partitions):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(SPLIT_MAGIC + "\n")
        for admission_id, partition in zip(ids, partitions):
            fh.write(f"{admission_id}\t{partition}\n")


def read_split(path):
    partition_of = {}
    with open(path, "r", encoding="utf-8") as fh:
        if fh.readline().rstrip("\n") != SPLIT_MAGIC:
            raise FormatError(f"{path}: bad split header")
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2 or parts[1] not in ("train", "test"):
                raise FormatError(f"{path}:{lineno}: malformed split record")
            partition_of[parts[0]] = parts[1]
    return partition_of


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(run_dir: Path):
    entries = sorted(p for p in run_dir.iterdir()
                     if p.is_file() and p.name != "manifest.txt")
    with open(run_dir / "manifest.txt", "w", encoding="utf-8") as fh:
        for path in entries:
            fh.write(f"{_sha256(path)}  {path.name}\n")


def _cohort_config_from(args) -> CohortConfig:
    config = CohortConfig()
    if getattr(args, "quick", False):
        config = replace(config,
                         n_admissions=QUICK_PROFILE["n"],
                         n_positive=QUICK_PROFILE["positives"],
                         horizon_hours=QUICK_PROFILE["horizon"])
    overrides = {}
    if args.n is not None:
        overrides["n_admissions"] = args.n
    if args.positives is not None:
        overrides["n_positive"] = args.positives
    if args.outlier_rate is not None:
        overrides["outlier_rate"] = args.outlier_rate
    if args.signal_strength is not None:
        overrides["signal_strength"] = args.signal_strength
    if args.horizon is not None:
        overrides["horizon_hours"] = _parse_horizon(args.horizon)
    config = replace(config, seed=args.seed, **overrides)
    config.validate()
    return config


def _hyper_from(args, quick: bool) -> HyperParams:
    hyper = HyperParams(seed=args.seed)
    if quick:
        hyper = replace(hyper,
                        hidden_size=QUICK_PROFILE["hidden"],
                        learning_rate=QUICK_PROFILE["lr"],
                        max_epochs=QUICK_PROFILE["max_epochs"])
    overrides = {}
    if getattr(args, "hidden", None) is not None:
        overrides["hidden_size"] = args.hidden
    if getattr(args, "lr", None) is not None:
        overrides["learning_rate"] = args.lr
    if getattr(args, "max_epochs", None) is not None:
        overrides["max_epochs"] = args.max_epochs
    if getattr(args, "batch_size", None) is not None:
        overrides["batch_size"] = args.batch_size
    if getattr(args, "patience", None) is not None:
        overrides["patience"] = args.patience
    if getattr(args, "w_pos", None) is not None:
        overrides["w_pos"] = args.w_pos
    if getattr(args, "w_neg", None) is not None:
        overrides["w_neg"] = args.w_neg
    hyper = replace(hyper, **overrides)
    hyper.validate()
    return hyper


def _preprocess_cohort(cohort, out_dir: Path, master_seed: int, test_fraction: float):
    """Split first, fit stats on the training side only, tensorize everything."""
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = [series.admission_id for series in cohort]
    labels = [series.label for series in cohort]
    train_ids, test_ids = stratified_split(ids, labels, test_fraction,
                                           seed=master_seed + SPLIT_SEED_OFFSET)
    train_set = set(train_ids)
    filtered = []
    removed_total = 0
    for series in cohort:
        clean, removed = filter_outliers(series)
        filtered.append(clean)
        removed_total += removed
    stats = fit_normalizer([s for s in filtered if s.admission_id in train_set])
    tensors = [build_tensor(series, stats=stats) for series in filtered]
    partitions = ["train" if aid in train_set else "test" for aid in ids]
    write_split(out_dir / "split.tsv", ids, partitions)
    write_stats(stats, out_dir / "stats.tsv")
    write_tensors(tensors, out_dir / "tensors.bin")
    by_partition = {"train": [], "test": []}
    for tensor, partition in zip(tensors, partitions):
        by_partition[partition].append(tensor)
    return by_partition, stats, removed_total


def _load_partitioned_tensors(tensors_dir: Path):
    tensors = read_tensors(tensors_dir / "tensors.bin")
    partition_of = read_split(tensors_dir / "split.tsv")
    by_partition = {"train": [], "test": []}
    for tensor in tensors:
        partition = partition_of.get(tensor.admission_id)
        if partition is None:
            raise FormatError(f"{tensor.admission_id} missing from split file")
        by_partition[partition].append(tensor)
    return by_partition


def _write_run_config(run_dir: Path, master_seed: int, hyper: HyperParams,
                      use_grid: bool, grid_cells, folds_k: int, jobs: int,
                      extra=None):
    lines = [f"master_seed={master_seed}",
             f"split_seed={master_seed + SPLIT_SEED_OFFSET}",
             f"folds_seed={master_seed + FOLDS_SEED_OFFSET}",
             f"baseline2_seed={master_seed + BASELINE2_SEED_OFFSET}",
             f"grid={int(use_grid)}",
             f"grid_cells={';'.join(f'{h}x{lr!r}' for h, lr in grid_cells) if use_grid else '-'}",
             f"folds={folds_k}",
             f"jobs={jobs}"]
    for key, value in asdict(hyper).items():
        lines.append(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
    for key, value in (extra or {}).items():
        lines.append(f"{key}={value}")
    with open(run_dir / "config.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_cv_table(run_dir: Path, rows):
    with open(run_dir / "cv_table.csv", "w", encoding="utf-8") as fh:
        fh.write("hidden,lr,fold,best_epoch,val_pr_auc\n")
        for hidden, lr, fold, best_epoch, val in rows:
            fh.write(f"{hidden},{lr!r},{fold},{best_epoch},{val!r}\n")


def _train_tensors(train_tensors, run_dir: Path, master_seed: int, hyper: HyperParams,
                   use_grid: bool, grid_cells, folds_k: int, jobs: int, stats=None):
    run_dir.mkdir(parents=True, exist_ok=True)
    ids = [t.admission_id for t in train_tensors]
    labels = [t.label for t in train_tensors]
    plan = make_folds(ids, labels, k=folds_k, seed=master_seed + FOLDS_SEED_OFFSET)
    if use_grid:
        result = grid_search(train_tensors, plan, hyper, grid=grid_cells, jobs=jobs)
        best = result.best
        rows = result.rows
        ensemble, _ = train_cell(train_tensors, plan, best, jobs=jobs, stats=stats)
        cell_mean = next(m for h, lr, m in result.cell_means
                         if h == best.hidden_size and lr == best.learning_rate)
    else:
        best = hyper
        ensemble, fold_results = train_cell(train_tensors, plan, best, jobs=jobs, stats=stats)
        rows = [(best.hidden_size, best.learning_rate, fold, res.best_epoch, res.best_val)
                for fold, res in enumerate(fold_results)]
        cell_mean = float(np.mean([res.best_val for res in fold_results]))
    _write_run_config(run_dir, master_seed, best, use_grid, grid_cells, folds_k, jobs)
    _write_cv_table(run_dir, rows)
    for fold, member in enumerate(ensemble.members):
        save_params(member, run_dir / f"ensemble_fold{fold}.ckpt")
    _write_manifest(run_dir)
    summary = (f"hidden={best.hidden_size} lr={best.learning_rate!r} "
               f"cv_pr_auc={cell_mean!r} folds={folds_k}")
    return ensemble, best, summary


def _load_ensemble(run_dir: Path) -> Ensemble:
    paths = sorted(run_dir.glob("ensemble_fold*.ckpt"),
                   key=lambda p: int(re.search(r"(\d+)", p.stem).group(1)))
    if not paths:
        raise CheckpointError(f"{run_dir}: no ensemble checkpoints found")
    members = [load_params(p) for p in paths]
    if len({m.hidden_size for m in members}) != 1:
        raise CheckpointError(f"{run_dir}: ensemble members disagree on hidden size")
    return Ensemble(members=members)


def _evaluate_ensemble(ensemble: Ensemble, test_tensors, out_dir: Path, baseline2_seed: int):
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = np.array([t.label for t in test_tensors], dtype=int)
    scores = ensemble_scores(ensemble, test_tensors)
    curve = pr_curve(scores, labels)
    baseline1 = baseline_constant(labels)
    baseline2 = baseline_proportional(labels, seed=baseline2_seed)
    report = EvalReport(
        test_pr_auc=curve.auc,
        baseline1_pr_auc=baseline1,
        baseline2_pr_auc=baseline2,
        prevalence=float(labels.sum() / labels.size),
        n=int(labels.size),
        n_pos=int(labels.sum()),
    )
    export_curve(curve, out_dir / "pr_curve.csv")
    export_curve_svg(curve, out_dir / "pr_curve.svg")
    with open(out_dir / "report.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(report.lines() + [f"baseline2_seed={baseline2_seed}"]) + "\n")
    summary = (f"test_pr_auc={report.test_pr_auc!r} "
               f"baseline1={report.baseline1_pr_auc!r} "
               f"baseline2={report.baseline2_pr_auc!r}")
    return report, summary


def cmd_generate(args) -> int:
    config = _cohort_config_from(args)
    cohort = generate_cohort(config)
    write_cohort(cohort, args.out)
    print(cohort_summary(cohort))
    return 0


def cmd_preprocess(args) -> int:
    cohort = read_cohort(args.cohort)
    by_partition, _, removed = _preprocess_cohort(
        cohort, Path(args.out_dir), args.seed, args.test_fraction)
    print(f"tensors={len(by_partition['train']) + len(by_partition['test'])} "
          f"train={len(by_partition['train'])} test={len(by_partition['test'])} "
          f"removed_outliers={removed}")
    return 0


def _grid_cells_from(args):
    hiddens = _parse_int_list(args.grid_hidden) if args.grid_hidden else GRID_HIDDEN
    rates = _parse_float_list(args.grid_lr) if args.grid_lr else GRID_LR
    return [(h, lr) for h in hiddens for lr in rates]


def cmd_train(args) -> int:
    if not args.grid and (args.grid_hidden or args.grid_lr):
        raise ConfigError("--grid-hidden/--grid-lr require --grid")
    by_partition = _load_partitioned_tensors(Path(args.tensors))
    stats = read_stats(Path(args.tensors) / "stats.tsv")
    hyper = _hyper_from(args, quick=False)
    _, _, summary = _train_tensors(
        by_partition["train"], Path(args.run_dir), args.seed, hyper,
        use_grid=args.grid, grid_cells=_grid_cells_from(args),
        folds_k=args.folds, jobs=args.jobs, stats=stats)
    print(summary)
    return 0


def cmd_evaluate(args) -> int:
    by_partition = _load_partitioned_tensors(Path(args.tensors))
    if not by_partition["test"]:
        raise ConfigError("no test tensors in the cache")
    ensemble = _load_ensemble(Path(args.run_dir))
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.run_dir)
    _, summary = _evaluate_ensemble(ensemble, by_partition["test"], out_dir,
                                    baseline2_seed=args.seed + BASELINE2_SEED_OFFSET)
    print(summary)
    return 0


def cmd_pipeline(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = _cohort_config_from(args)
    cohort = generate_cohort(config)
    write_cohort(cohort, out / "cohort.tsv")
    by_partition, stats, _ = _preprocess_cohort(
        cohort, out / "prep", args.seed, args.test_fraction)
    del cohort
    hyper = _hyper_from(args, quick=args.quick)
    use_grid = bool(args.grid)
    ensemble, _, _ = _train_tensors(
        by_partition["train"], out / "run", args.seed, hyper,
        use_grid=use_grid, grid_cells=_grid_cells_from(args),
        folds_k=args.folds, jobs=args.jobs, stats=stats)
    _, summary = _evaluate_ensemble(ensemble, by_partition["test"], out / "eval",
                                    baseline2_seed=args.seed + BASELINE2_SEED_OFFSET)
    print(summary)
    return 0


def _add_cohort_flags(sub):
    sub.add_argument("--n", type=int, default=None, help="number of admissions")
    sub.add_argument("--positives", type=int, default=None, help="number of positive admissions")
    sub.add_argument("--outlier-rate", type=float, default=None)
    sub.add_argument("--signal-strength", type=float, default=None)
    sub.add_argument("--horizon", type=str, default=None, help="admission length range, hours, LO:HI")


def _add_train_flags(sub):
    sub.add_argument("--grid", action="store_true", help="search the declared hyperparameter grid")
    sub.add_argument("--grid-hidden", type=str, default=None, help="comma list overriding grid hidden sizes")
    sub.add_argument("--grid-lr", type=str, default=None, help="comma list overriding grid learning rates")
    sub.add_argument("--hidden", type=int, default=None)
    sub.add_argument("--lr", type=float, default=None)
    sub.add_argument("--max-epochs", type=int, default=None)
    sub.add_argument("--batch-size", type=int, default=None)
    sub.add_argument("--patience", type=int, default=None)
    sub.add_argument("--w-pos", type=float, default=None)
    sub.add_argument("--w-neg", type=float, default=None)
    sub.add_argument("--folds", type=int, default=10)
    sub.add_argument("--jobs", type=int, default=1, help="parallel fold trainings")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hemocult",
        description="Synthetic ICU cohorts and a from-scratch bidirectional "
                    "LSTM pipeline for predicting positive blood cultures.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("generate", help="write a synthetic cohort file")
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=0)
    _add_cohort_flags(gen)
    gen.set_defaults(func=cmd_generate)

    pre = subs.add_parser("preprocess", help="split, normalize, and tensorize a cohort")
    pre.add_argument("--cohort", required=True)
    pre.add_argument("--out-dir", required=True)
    pre.add_argument("--seed", type=int, default=0)
    pre.add_argument("--test-fraction", type=float, default=0.10)
    pre.set_defaults(func=cmd_preprocess)

    tr = subs.add_parser("train", help="cross-validated training on cached tensors")
    tr.add_argument("--tensors", required=True, help="preprocess output directory")
    tr.add_argument("--run-dir", required=True)
    tr.add_argument("--seed", type=int, default=0)
    _add_train_flags(tr)
    tr.set_defaults(func=cmd_train)

    ev = subs.add_parser("evaluate", help="score the test partition with a trained ensemble")
    ev.add_argument("--tensors", required=True, help="preprocess output directory")
    ev.add_argument("--run-dir", required=True)
    ev.add_argument("--out-dir", default=None)
    ev.add_argument("--seed", type=int, default=0)
    ev.set_defaults(func=cmd_evaluate)

    pipe = subs.add_parser("pipeline", help="generate, preprocess, train, evaluate")
    pipe.add_argument("--out-dir", required=True)
    pipe.add_argument("--seed", type=int, default=0)
    pipe.add_argument("--quick", action="store_true",
                      help="reduced cohort and a single fast training cell")
    pipe.add_argument("--test-fraction", type=float, default=0.10)
    _add_cohort_flags(pipe)
    _add_train_flags(pipe)
    pipe.set_defaults(func=cmd_pipeline)

    return parser


def entrypoint(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingDivergence as exc:
        where = []
        if hasattr(exc, "cell"):
            where.append(f"cell hidden={exc.cell[0]} lr={exc.cell[1]}")
        if hasattr(exc, "fold"):
            where.append(f"fold {exc.fold}")
        suffix = f" ({', '.join(where)})" if where else ""
        print(f"error: training diverged: {exc}{suffix}", file=sys.stderr)
        return 5
    except HemocultError as exc:
        for types, code in _EXIT_CODES:
            if isinstance(exc, types):
                print(f"error: {exc}", file=sys.stderr)
                return code
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main():
    sys.exit(entrypoint())


if __name__ == "__main__":
    main()
