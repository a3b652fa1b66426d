"""
Evaluation metrics: Pearson's correlation, score clipping and per-language-pair reports.
"""

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .config import SCORE_MAX, SCORE_MIN
from .corpus import ArticleRecord
from .exceptions import (
    DataError,
    LengthMismatchError,
    NonFiniteInputError,
    PearsonError,
    TooFewSamplesError,
    ZeroVarianceError,
)

UNDEFINED = "n/a"


class SimilarityMetrics:
    """Score-level metrics for Overall predictions."""

    @staticmethod
    def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
        """
        Sample Pearson correlation coefficient.

        Uses the two-pass (mean-subtracted) formula with compensated summation.

        Raises:
            LengthMismatchError: Series of different length
            NonFiniteInputError: Either series holds NaN or infinity
            TooFewSamplesError: Fewer than two samples
            ZeroVarianceError: Either series is constant
        """
        x = np.asarray(xs, dtype=np.float64)
        y = np.asarray(ys, dtype=np.float64)
        if x.shape != y.shape:
            raise LengthMismatchError(f"length mismatch: {x.size} vs {y.size}")
        n = x.size
        if n < 2:
            raise TooFewSamplesError(f"need at least 2 samples, got {n}")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise NonFiniteInputError("series must be finite")

        dx = x - math.fsum(x) / n
        dy = y - math.fsum(y) / n
        sxx = math.fsum(dx * dx)
        syy = math.fsum(dy * dy)
        if sxx == 0.0 or syy == 0.0:
            raise ZeroVarianceError("zero variance")
        r = math.fsum(dx * dy) / math.sqrt(sxx * syy)
        return max(-1.0, min(1.0, r))

    @staticmethod
    def pearson_or_none(xs: Sequence[float], ys: Sequence[float]) -> Optional[float]:
        """Pearson's correlation, or None where it is undefined; non-finite input still raises."""
        try:
            return SimilarityMetrics.pearson(xs, ys)
        except NonFiniteInputError:
            raise
        except PearsonError:
            return None

    @staticmethod
    def clip_scores(
        preds: Union[Sequence[float], np.ndarray], lo: float = SCORE_MIN, hi: float = SCORE_MAX
    ) -> np.ndarray:
        """Clamp predictions into [lo, hi]."""
        if not lo < hi:
            raise ValueError(f"lo ({lo}) must be below hi ({hi})")
        return np.clip(np.asarray(preds, dtype=np.float64), lo, hi)

    @staticmethod
    def mean_absolute_error(preds: Sequence[float], gold: Sequence[float]) -> float:
        """Mean |prediction - gold|, on the 1-4 annotation scale."""
        p = np.asarray(preds, dtype=np.float64)
        g = np.asarray(gold, dtype=np.float64)
        if p.shape != g.shape:
            raise LengthMismatchError(f"length mismatch: {p.size} vs {g.size}")
        if p.size == 0:
            raise TooFewSamplesError("need at least 1 sample")
        return float(np.mean(np.abs(p - g)))


pearson = SimilarityMetrics.pearson
pearson_or_none = SimilarityMetrics.pearson_or_none
clip_scores = SimilarityMetrics.clip_scores


@dataclass(frozen=True)
class GroupResult:
    count: int
    pearson: Optional[float]


@dataclass
class EvalReport:
    """Overall and per-language-pair Pearson's correlation of Overall predictions."""

    overall_pearson: Optional[float]
    per_pair: Dict[str, GroupResult] = field(default_factory=dict)
    predictions: List[Tuple[str, float, float]] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        """Table with one row per group plus an "all" row; Pearson x100, 2 decimals."""
        rows = [
            {"group": group, "count": result.count, "pearson": _format_score(result.pearson)}
            for group, result in sorted(self.per_pair.items())
        ]
        rows.append(
            {
                "group": "all",
                "count": len(self.predictions),
                "pearson": _format_score(self.overall_pearson),
            }
        )
        return pd.DataFrame(rows, columns=["group", "count", "pearson"])

    @property
    def mean_absolute_error(self) -> Optional[float]:
        if not self.predictions:
            return None
        return SimilarityMetrics.mean_absolute_error(
            [p for _, p, _ in self.predictions], [g for _, _, g in self.predictions]
        )

    def summary(self) -> Dict:
        return {
            "count": len(self.predictions),
            "overall_pearson": _format_score(self.overall_pearson),
            "mean_absolute_error": _round_or_none(self.mean_absolute_error),
            "per_pair": {
                group: {"count": result.count, "pearson": _format_score(result.pearson)}
                for group, result in sorted(self.per_pair.items())
            },
        }

    def save(self, out_dir: Union[str, Path]) -> None:
        """Write report.csv and report.json."""
        out_dir = Path(out_dir)
        self.to_frame().to_csv(out_dir / "report.csv", index=False)
        (out_dir / "report.json").write_text(
            json.dumps(self.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def _format_score(value: Optional[float]) -> str:
    return UNDEFINED if value is None else f"{value * 100:.2f}"


def _round_or_none(value: Optional[float]) -> Optional[float]:
    return None if value is None else round(value, 4)


def per_pair_report(
    records: Sequence[ArticleRecord], predictions: Mapping[str, float]
) -> EvalReport:
    """
    Group predictions by language pair and compute Pearson's correlation per group.

    Args:
        records: Evaluated records (gold Overall taken from their scores)
        predictions: pair_id -> predicted Overall

    Returns:
        EvalReport; groups with fewer than two samples or zero variance report None

    Raises:
        DataError: Predictions do not cover exactly the given records
    """
    record_ids = [r.pair_id for r in records]
    missing = sorted(set(record_ids) - set(predictions))
    extra = sorted(set(predictions) - set(record_ids))
    if missing or extra:
        raise DataError(f"prediction coverage mismatch: missing={missing} extra={extra}")

    grouped: Dict[str, Tuple[List[float], List[float]]] = defaultdict(lambda: ([], []))
    rows = []
    for record in records:
        predicted = float(predictions[record.pair_id])
        gold = record.scores.overall
        rows.append((record.pair_id, predicted, gold))
        preds, golds = grouped[record.language_pair]
        preds.append(predicted)
        golds.append(gold)

    per_pair = {
        group: GroupResult(count=len(preds), pearson=pearson_or_none(preds, golds))
        for group, (preds, golds) in grouped.items()
    }
    overall = pearson_or_none([p for _, p, _ in rows], [g for _, _, g in rows])
    return EvalReport(overall_pearson=overall, per_pair=per_pair, predictions=rows)


def save_predictions(predictions: Mapping[str, float], filepath: Union[str, Path]) -> None:
    """Write the submission-shaped CSV "pair_id,Overall"."""
    frame = pd.DataFrame({"pair_id": list(predictions), "Overall": list(predictions.values())})
    frame.to_csv(filepath, index=False)


def load_predictions(filepath: Union[str, Path]) -> Dict[str, float]:
    frame = pd.read_csv(filepath, dtype={"pair_id": str})
    if list(frame.columns) != ["pair_id", "Overall"]:
        raise DataError(f"{filepath}: expected columns pair_id,Overall")
    return dict(zip(frame["pair_id"], frame["Overall"].astype(float)))
