"""
Command-line entry point: ingest | augment | split | train | evaluate | report.

Exit codes: 0 success, 1 usage or configuration error, 2 data error, 3 numeric failure.
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import pandas as pd

from . import __version__
from .augment import (
    back_translate_corpus,
    build_default_plan,
    build_translator,
    load_plan,
    translate_train,
)
from .config import DEFAULT_POLICY, RunConfig, derive_seed
from .corpus import (
    ArticleRecord,
    FoldAssignment,
    load_dataset,
    load_records,
    save_records,
    split_kfold,
)
from .exceptions import (
    ConfigError,
    DataError,
    NewsSimilarityError,
    NumericError,
    UnsupportedLanguagePairError,
)
from .metrics import per_pair_report, save_predictions
from .tokenizer import TruncationPolicy, encode_pair
from .training import (
    EnsembleModel,
    cross_validate,
    load_metrics_log,
    predict_overall,
    split_fold,
    summarize_metrics,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class UsageError(Exception):
    """Invalid combination of command-line arguments."""


class _ArgumentParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with status 1."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Provenance of one command invocation, written as manifest.json."""

    command: str
    config: Dict
    seeds: Dict[str, int]
    inputs: List[str]
    out: str
    version: str = __version__
    started_at: str = field(default_factory=_now)
    finished_at: Optional[str] = None

    def save(self, out_dir: Path) -> None:
        self.finished_at = _now()
        (out_dir / "manifest.json").write_text(
            json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def _run_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = config.to_dict()
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "folds", None) is not None:
        overrides["folds"] = args.folds
    return RunConfig.from_dict(overrides)


def _require_out(args: argparse.Namespace) -> Path:
    if not args.out:
        raise UsageError(f"{args.command} needs --out DIR")
    return Path(args.out)


def _load_datasets(paths: Sequence[str]) -> List[ArticleRecord]:
    records: List[ArticleRecord] = []
    for path in paths:
        if not Path(path).is_file():
            raise DataError(f"{path}: dataset file not found")
        records.extend(load_records(path))
    seen = set()
    for record in records:
        if record.pair_id in seen:
            raise DataError(f"duplicate pair_id {record.pair_id} across datasets")
        seen.add(record.pair_id)
    return records


def cmd_ingest(args: argparse.Namespace) -> int:
    out = _require_out(args)
    result = load_dataset(args.index, args.articles)
    out.mkdir(parents=True, exist_ok=True)
    save_records(result.records, out / "dataset.jsonl")
    RunManifest(
        command="ingest",
        config={},
        seeds={},
        inputs=[str(args.index), str(args.articles)],
        out=str(out),
    ).save(out)
    print(f"loaded={len(result.records)} skipped={result.skipped} malformed={result.malformed}")
    return EXIT_OK


def cmd_augment(args: argparse.Namespace) -> int:
    out = _require_out(args)
    config = _run_config(args)
    records = _load_datasets([args.dataset])
    plan = load_plan(args.plan) if args.plan else build_default_plan()
    translator = build_translator(args.translator)

    augmented: List[ArticleRecord] = []
    if args.back_translate:
        augmented.extend(back_translate_corpus(records, translator, args.pivot))
    translated = translate_train(
        records, plan, translator, config.seed, pivot=args.pivot, max_in_flight=args.max_in_flight
    )
    augmented.extend(translated)

    out.mkdir(parents=True, exist_ok=True)
    save_records(augmented, out / "augmented.jsonl")
    RunManifest(
        command="augment",
        config={"plan": [row.to_dict() for row in plan.rows], "translator": args.translator},
        seeds={"seed": config.seed},
        inputs=[str(args.dataset)] + ([str(args.plan)] if args.plan else []),
        out=str(out),
    ).save(out)
    print(
        f"back_translated={len(augmented) - len(translated)} "
        f"translate_train={len(translated)} total={len(augmented)}"
    )
    return EXIT_OK


def cmd_split(args: argparse.Namespace) -> int:
    out = _require_out(args)
    config = _run_config(args)
    records = _load_datasets(args.dataset)
    folds = split_kfold(records, config.folds, derive_seed(config.seed, "split"))
    out.mkdir(parents=True, exist_ok=True)
    folds.save(out / "folds.json")
    RunManifest(
        command="split",
        config={"folds": config.folds},
        seeds={"seed": config.seed, "split": folds.seed},
        inputs=list(args.dataset),
        out=str(out),
    ).save(out)
    print(f"folds={folds.k} sizes={folds.sizes()}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    out = _require_out(args)
    config = _run_config(args)
    records = _load_datasets(args.dataset)
    if args.folds_file:
        folds = FoldAssignment.load(args.folds_file)
        config = RunConfig.from_dict({**config.to_dict(), "folds": folds.k})
    else:
        folds = split_kfold(records, config.folds, derive_seed(config.seed, "split"))
    for fold_index in range(folds.k):
        split_fold(records, folds, fold_index, config.validate_on_augmented)

    out.mkdir(parents=True, exist_ok=True)
    results = cross_validate(
        records,
        folds,
        config,
        jobs=args.jobs,
        metrics_path=out / "metrics.jsonl",
        progress=args.progress,
    )
    checkpoints = out / "checkpoints"
    EnsembleModel.from_results(results).save(checkpoints)
    config.save(checkpoints / "config.json")
    folds.save(out / "folds.json")
    RunManifest(
        command="train",
        config=config.to_dict(),
        seeds={"seed": config.seed, "split": folds.seed},
        inputs=list(args.dataset) + ([str(args.folds_file)] if args.folds_file else []),
        out=str(out),
    ).save(out)
    for result in results:
        shown = "n/a" if result.best_val_pearson is None else f"{result.best_val_pearson * 100:.2f}"
        print(f"fold {result.fold_index}: best epoch {result.best_epoch}, val pearson {shown}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    out = _require_out(args)
    records = _load_datasets([args.dataset])
    ensemble_dir = Path(args.ensemble)
    ensemble = EnsembleModel.load(ensemble_dir)
    config_path = ensemble_dir / "config.json"
    policy_name = RunConfig.load(config_path).policy if config_path.is_file() else None
    policy = TruncationPolicy.from_preset(args.policy or policy_name or DEFAULT_POLICY)

    vocab_size = ensemble.members[0].config.vocab_size
    pairs = [encode_pair(r.document1, r.document2, policy, vocab_size) for r in records]
    overall = predict_overall(ensemble, pairs, clip=True)
    predictions = dict(zip((r.pair_id for r in records), overall.tolist()))
    report = per_pair_report(records, predictions)

    out.mkdir(parents=True, exist_ok=True)
    save_predictions(predictions, out / "predictions.csv")
    report.save(out)
    RunManifest(
        command="evaluate",
        config={"policy": policy.name, "members": len(ensemble.members)},
        seeds={},
        inputs=[str(args.dataset), str(ensemble_dir)],
        out=str(out),
    ).save(out)
    print(report.to_frame().to_string(index=False))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    labels = args.labels or [Path(path).parent.name or Path(path).stem for path in args.metrics]
    if len(labels) != len(args.metrics):
        raise UsageError("--labels must name every metrics log")
    frames = [load_metrics_log(path) for path in args.metrics]

    rows, curves = [], []
    for label, frame in zip(labels, frames):
        mean_best, per_epoch = summarize_metrics(frame)
        rows.append(
            {
                "run": label,
                "folds": int(frame["fold"].nunique()),
                "pearson": "n/a" if mean_best is None else f"{mean_best * 100:.2f}",
            }
        )
        curves.append(per_epoch.assign(run=label))
    summary = pd.DataFrame(rows, columns=["run", "folds", "pearson"])
    per_epoch = pd.concat(curves, ignore_index=True)[["run", "epoch", "train_loss", "val_pearson"]]

    print(summary.to_string(index=False))
    print()
    print(per_epoch.to_string(index=False, float_format=lambda v: f"{v:.4f}"))

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        summary.to_csv(out / "summary.csv", index=False)
        per_epoch.to_csv(out / "per_epoch.csv", index=False)
        RunManifest(
            command="report",
            config={"labels": labels},
            seeds={},
            inputs=list(args.metrics),
            out=str(out),
        ).save(out)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "ingest": cmd_ingest,
    "augment": cmd_augment,
    "split": cmd_split,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = _ArgumentParser(add_help=False)
    common.add_argument("--config", help="Run configuration JSON")
    common.add_argument("--seed", type=int, help="Global seed (overrides the config)")
    common.add_argument("--jobs", type=int, default=1, help="Folds trained in parallel")
    common.add_argument("--out", help="Output directory")
    common.add_argument(
        "--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"]
    )

    parser = _ArgumentParser(
        prog="news-similarity", description="Multilingual news similarity engine"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    ingest = sub.add_parser("ingest", parents=[common], help="Load and clean the raw corpus")
    ingest.add_argument("--index", required=True, help="Pair index CSV")
    ingest.add_argument("--articles", required=True, help="Directory of <article_id>.json files")

    augment = sub.add_parser(
        "augment", parents=[common], help="Back-translation and translate-train"
    )
    augment.add_argument("--dataset", required=True)
    augment.add_argument("--plan", help="JSON-lines translate-train plan (default when omitted)")
    augment.add_argument(
        "--translator", default="identity", help="identity, tagging, google, deepl, microsoft"
    )
    augment.add_argument("--pivot", default="en")
    augment.add_argument(
        "--back-translate", dest="back_translate", action="store_true", default=True
    )
    augment.add_argument("--no-back-translate", dest="back_translate", action="store_false")
    augment.add_argument("--max-in-flight", type=int, default=1)

    split = sub.add_parser("split", parents=[common], help="Assign source pairs to folds")
    split.add_argument("--dataset", required=True, action="append")
    split.add_argument("--folds", type=int)

    train = sub.add_parser(
        "train", parents=[common], help="Cross-validate and save the fold-best ensemble"
    )
    train.add_argument(
        "--dataset", required=True, action="append", help="Repeat for original and augmented sets"
    )
    train.add_argument("--folds", type=int)
    train.add_argument("--folds-file", help="folds.json from the split command")
    train.add_argument("--progress", action="store_true")

    evaluate = sub.add_parser(
        "evaluate", parents=[common], help="Ensemble predictions and per-pair report"
    )
    evaluate.add_argument("--dataset", required=True)
    evaluate.add_argument("--ensemble", required=True, help="Directory of fold_<i>.nsim files")
    evaluate.add_argument("--policy", help="Truncation preset (default: the ensemble config.json)")

    report = sub.add_parser("report", parents=[common], help="Summarize metrics logs")
    report.add_argument("--metrics", required=True, nargs="+")
    report.add_argument("--labels", nargs="+")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)

    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, UnsupportedLanguagePairError, NewsSimilarityError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
