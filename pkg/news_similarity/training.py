"""
Training loop, k-fold cross-validation and fold-best ensembling.
"""

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from .config import OVERALL_INDEX, LossConfig, ModelConfig, OptimizerConfig, RunConfig, derive_seed
from .corpus import ArticleRecord, FoldAssignment, Provenance
from .exceptions import DataError, NonFiniteInputError, NumericError
from .losses import rdrop_loss, rdrop_loss_gradients
from .metrics import clip_scores, pearson_or_none
from .models import (
    Gradients,
    ModelParameters,
    backward,
    forward,
    forward_with_tape,
    init_model,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .optimization import AdamOptimizer, LinearSchedule
from .tokenizer import EncodedPair, TruncationPolicy, encode_pair

logger = logging.getLogger(__name__)

CHECKPOINT_PATTERN = re.compile(r"^fold_(\d+)\.nsim$")
METRICS_COLUMNS = ("fold", "epoch", "train_loss", "val_pearson")


@dataclass
class EpochMetrics:
    """One line of the metrics log."""

    fold: int
    epoch: int
    train_loss: float
    val_pearson: Optional[float]

    def to_dict(self) -> Dict:
        return {
            "fold": self.fold,
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_pearson": self.val_pearson,
        }


@dataclass
class FoldResult:
    """
    Outcome of training on one fold.

    Attributes:
        fold_index: Held-out fold
        best_checkpoint: Parameters after the best epoch
        best_val_pearson: Highest validation Pearson on the curve (None if never defined)
        best_epoch: Epoch the checkpoint comes from (1-based)
        training_curve: (epoch, validation Pearson) after every epoch
        epoch_metrics: Full per-epoch log lines
    """

    fold_index: int
    best_checkpoint: ModelParameters
    best_val_pearson: Optional[float]
    best_epoch: int
    training_curve: List[Tuple[int, Optional[float]]] = field(default_factory=list)
    epoch_metrics: List[EpochMetrics] = field(default_factory=list)


@dataclass
class EnsembleModel:
    """Best checkpoint of every fold."""

    members: List[ModelParameters] = field(default_factory=list)

    @classmethod
    def from_results(cls, results: Sequence[FoldResult]) -> "EnsembleModel":
        ordered = sorted(results, key=lambda r: r.fold_index)
        return cls(members=[r.best_checkpoint for r in ordered])

    def save(self, directory: Union[str, Path]) -> List[Path]:
        """Write one ``fold_<i>.nsim`` checkpoint per member."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for index, member in enumerate(self.members):
            path = directory / f"fold_{index}.nsim"
            save_checkpoint(member, path)
            paths.append(path)
        return paths

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "EnsembleModel":
        directory = Path(directory)
        if not directory.is_dir():
            raise DataError(f"{directory}: ensemble directory not found")
        found = []
        for path in directory.iterdir():
            match = CHECKPOINT_PATTERN.match(path.name)
            if match:
                found.append((int(match.group(1)), path))
        if not found:
            raise DataError(f"{directory}: no fold_<i>.nsim checkpoints")
        return cls(members=[load_checkpoint(path) for _, path in sorted(found)])


def _encode_records(
    records: Sequence[ArticleRecord], policy: TruncationPolicy, vocab_size: int
) -> List[EncodedPair]:
    return [encode_pair(r.document1, r.document2, policy, vocab_size) for r in records]


def split_fold(
    records: Sequence[ArticleRecord],
    folds: FoldAssignment,
    fold_index: int,
    validate_on_augmented: bool = False,
) -> Tuple[List[ArticleRecord], List[ArticleRecord]]:
    """
    Training and validation records for one fold.

    Augmented records follow the fold of their source pair. Validation keeps only original
    records unless ``validate_on_augmented`` is set.
    """
    if not 0 <= fold_index < folds.k:
        raise DataError(f"fold_index {fold_index} outside [0, {folds.k})")
    train, val = [], []
    for record in records:
        if folds.fold_for(record.pair_id) != fold_index:
            train.append(record)
        elif validate_on_augmented or record.provenance is Provenance.ORIGINAL:
            val.append(record)
    if not train:
        raise DataError(f"fold {fold_index}: empty training split")
    if not val:
        raise DataError(f"fold {fold_index}: empty validation split")
    return train, val


def _validation_pearson(
    params: ModelParameters, pairs: Sequence[EncodedPair], gold: np.ndarray
) -> Optional[float]:
    overall = clip_scores(predict(params, pairs)[:, OVERALL_INDEX])
    try:
        return pearson_or_none(overall, gold)
    except NonFiniteInputError as e:
        raise NumericError(f"non-finite validation predictions: {e}") from e


def train_fold(
    records: Sequence[ArticleRecord],
    folds: FoldAssignment,
    fold_index: int,
    model_cfg: ModelConfig,
    loss_cfg: LossConfig,
    opt_cfg: OptimizerConfig,
    seed: int,
    policy: Optional[TruncationPolicy] = None,
    validate_on_augmented: bool = False,
    progress: bool = False,
) -> FoldResult:
    """
    Train one model with ``fold_index`` held out.

    Every step draws a batch from the shuffled training split, runs ``loss_cfg.forwards``
    stochastic forwards per sample, averages the R-Drop loss over the batch and applies
    one Adam update. After each epoch the clipped Overall predictions on the validation
    split are scored; the epoch with the highest Pearson wins (ties go to the earlier one,
    an undefined Pearson ranks lowest).

    Args:
        records: Original and augmented records
        folds: Fold assignment over source pair ids
        fold_index: Validation fold
        model_cfg: Model shape
        loss_cfg: Multi-label and R-Drop settings
        opt_cfg: Optimizer settings
        seed: Global seed; init, shuffling and dropout seeds derive from it
        policy: Truncation policy (default preset when None)
        validate_on_augmented: Also score augmented copies of held-out sources
        progress: Show a progress bar over epochs

    Returns:
        FoldResult

    Raises:
        DataError: Empty training or validation split
        NumericError: Loss became non-finite
    """
    policy = policy or TruncationPolicy.from_preset()
    train_records, val_records = split_fold(records, folds, fold_index, validate_on_augmented)
    train_pairs = _encode_records(train_records, policy, model_cfg.vocab_size)
    val_pairs = _encode_records(val_records, policy, model_cfg.vocab_size)
    train_labels = [r.scores.as_array() for r in train_records]
    val_gold = np.array([r.scores.overall for r in val_records], dtype=np.float64)

    n_train = len(train_pairs)
    batch_size = opt_cfg.batch_size
    steps_per_epoch = math.ceil(n_train / batch_size)
    params = init_model(model_cfg, derive_seed(seed, "init", fold_index))
    optimizer = AdamOptimizer(
        params, opt_cfg, LinearSchedule.from_config(opt_cfg, steps_per_epoch * opt_cfg.epochs)
    )
    logger.info(
        "fold %d: %d train / %d validation records, %d steps per epoch",
        fold_index,
        n_train,
        len(val_pairs),
        steps_per_epoch,
    )

    curve: List[Tuple[int, Optional[float]]] = []
    epoch_metrics: List[EpochMetrics] = []
    best_params: Optional[ModelParameters] = None
    best_score = -math.inf
    best_epoch = 0
    step = 0

    epochs = tqdm(range(1, opt_cfg.epochs + 1), desc=f"fold {fold_index}", disable=not progress)
    for epoch in epochs:
        shuffle_rng = np.random.default_rng(derive_seed(seed, "shuffle", fold_index, epoch))
        order = shuffle_rng.permutation(n_train)
        loss_sum = 0.0
        for start in range(0, n_train, batch_size):
            batch = order[start : start + batch_size]
            grads = Gradients.zeros_like(params)
            for sample in batch:
                sample = int(sample)
                preds, tapes = [], []
                for k in range(loss_cfg.forwards):
                    pred, tape = forward_with_tape(
                        params,
                        train_pairs[sample],
                        train_mode=True,
                        dropout_seed=derive_seed(seed, "dropout", fold_index, step, sample, k),
                    )
                    preds.append(pred)
                    tapes.append(tape)
                breakdown = rdrop_loss(preds, train_labels[sample], loss_cfg)
                if not math.isfinite(breakdown.total):
                    raise NumericError(
                        f"fold {fold_index} epoch {epoch} step {step}: non-finite loss "
                        f"for {train_records[sample].pair_id}"
                    )
                loss_sum += breakdown.total
                sample_grads = rdrop_loss_gradients(preds, train_labels[sample], loss_cfg)
                for tape, grad in zip(tapes, sample_grads):
                    backward(tape, grad / len(batch), into=grads)
            optimizer.step(grads)
            step += 1

        train_loss = loss_sum / n_train
        val_pearson = _validation_pearson(params, val_pairs, val_gold)
        curve.append((epoch, val_pearson))
        epoch_metrics.append(EpochMetrics(fold_index, epoch, train_loss, val_pearson))
        logger.info(
            "fold %d epoch %d: train_loss=%.6f val_pearson=%s",
            fold_index,
            epoch,
            train_loss,
            "null" if val_pearson is None else f"{val_pearson:.4f}",
        )

        score = -math.inf if val_pearson is None else val_pearson
        if best_params is None or score > best_score:
            best_params = params.copy()
            best_score = score
            best_epoch = epoch

    defined = [p for _, p in curve if p is not None]
    return FoldResult(
        fold_index=fold_index,
        best_checkpoint=best_params,
        best_val_pearson=max(defined) if defined else None,
        best_epoch=best_epoch,
        training_curve=curve,
        epoch_metrics=epoch_metrics,
    )


def cross_validate(
    records: Sequence[ArticleRecord],
    folds: FoldAssignment,
    run_config: RunConfig,
    jobs: int = 1,
    metrics_path: Optional[Union[str, Path]] = None,
    progress: bool = False,
) -> List[FoldResult]:
    """
    Train one model per fold.

    Folds share no mutable state and may run in parallel; results come back in fold order
    whatever the job count.
    """
    policy = TruncationPolicy.from_preset(run_config.policy)
    results = Parallel(n_jobs=jobs)(
        delayed(train_fold)(
            records,
            folds,
            fold_index,
            run_config.model,
            run_config.loss,
            run_config.optimizer,
            run_config.seed,
            policy=policy,
            validate_on_augmented=run_config.validate_on_augmented,
            progress=progress and jobs == 1,
        )
        for fold_index in range(folds.k)
    )
    if metrics_path is not None:
        write_metrics_log(results, metrics_path)
    return list(results)


def write_metrics_log(results: Sequence[FoldResult], filepath: Union[str, Path]) -> int:
    """Write the JSON-lines metrics log, one line per fold and epoch; returns the line count."""
    lines = [
        json.dumps(m.to_dict(), sort_keys=True)
        for result in sorted(results, key=lambda r: r.fold_index)
        for m in result.epoch_metrics
    ]
    Path(filepath).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return len(lines)


def load_metrics_log(filepath: Union[str, Path]) -> pd.DataFrame:
    """Read a metrics log into a frame with columns fold, epoch, train_loss, val_pearson."""
    rows = []
    with open(filepath, "r", encoding="utf-8") as fin:
        for number, line in enumerate(fin, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
                rows.append({key: payload[key] for key in METRICS_COLUMNS})
            except (json.JSONDecodeError, KeyError) as e:
                raise DataError(f"{filepath}:{number}: invalid metrics line ({e})") from e
    frame = pd.DataFrame(rows, columns=list(METRICS_COLUMNS))
    frame["val_pearson"] = pd.to_numeric(frame["val_pearson"], errors="coerce")
    return frame


def summarize_metrics(frame: pd.DataFrame) -> Tuple[Optional[float], pd.DataFrame]:
    """
    Cross-fold summary of a metrics log.

    Returns:
        Tuple of (mean over folds of each fold's best validation Pearson, or None when no
        fold has a defined value; per-epoch averages of train_loss and val_pearson)
    """
    if frame.empty:
        raise DataError("empty metrics log")
    best = frame.groupby("fold")["val_pearson"].max().dropna()
    mean_best = float(best.mean()) if len(best) else None
    per_epoch = frame.groupby("epoch")[["train_loss", "val_pearson"]].mean().reset_index()
    return mean_best, per_epoch


def ensemble_predict(ensemble: EnsembleModel, pair: EncodedPair) -> np.ndarray:
    """Mean of the members' eval-mode predictions; unclipped."""
    if not ensemble.members:
        raise DataError("cannot predict with an empty ensemble")
    outputs = [forward(member, pair).astype(np.float64) for member in ensemble.members]
    return np.mean(outputs, axis=0)


def predict_overall(
    ensemble: EnsembleModel, pairs: Sequence[EncodedPair], clip: bool = True
) -> np.ndarray:
    """Ensemble Overall predictions, averaged first and clipped once at the end."""
    overall = np.array(
        [ensemble_predict(ensemble, pair)[OVERALL_INDEX] for pair in pairs], dtype=np.float64
    )
    return clip_scores(overall) if clip else overall


def dropout_disagreement(params: ModelParameters, pairs: Sequence[EncodedPair], seed: int) -> float:
    """Mean |Overall difference| between two dropout-enabled forwards of the same pair."""
    if not pairs:
        raise DataError("no pairs to measure")
    gaps = []
    for index, pair in enumerate(pairs):
        pass_seeds = [derive_seed(seed, "disagreement", index, k) for k in (0, 1)]
        first, second = (
            forward(params, pair, train_mode=True, dropout_seed=s) for s in pass_seeds
        )
        gaps.append(abs(float(first[OVERALL_INDEX]) - float(second[OVERALL_INDEX])))
    return float(np.mean(gaps))
