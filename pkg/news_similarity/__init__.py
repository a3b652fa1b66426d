"""
Multilingual News Article Similarity Engine

This package provides tools for:
- Corpus ingestion, cleaning and k-fold splitting
- Back-translation and translate-train augmentation
- Hashing tokenization with head-tail truncation
- A numpy cross-encoder with manual backpropagation
- Multi-label and R-Drop training with fold-best ensembling
- Pearson evaluation per language pair
"""

__version__ = "1.0.0"
__author__ = "News Analytics Team"

from .augment import (
    AugmentPlan,
    AugmentPlanRow,
    back_translate,
    back_translate_corpus,
    build_default_plan,
    translate_train,
)
from .config import LossConfig, ModelConfig, OptimizerConfig, RunConfig
from .corpus import ArticleRecord, FoldAssignment, ScoreVector, load_dataset, split_kfold
from .losses import multi_label_loss, rdrop_loss
from .metrics import EvalReport, clip_scores, pearson, per_pair_report
from .models import ModelParameters, backward, forward, forward_with_tape, init_model
from .tokenizer import EncodedPair, TruncationPolicy, encode_pair, head_tail_truncate, tokenize
from .training import EnsembleModel, FoldResult, cross_validate, ensemble_predict, train_fold

__all__ = [
    "ArticleRecord",
    "ScoreVector",
    "FoldAssignment",
    "load_dataset",
    "split_kfold",
    "AugmentPlan",
    "AugmentPlanRow",
    "back_translate",
    "back_translate_corpus",
    "build_default_plan",
    "translate_train",
    "tokenize",
    "TruncationPolicy",
    "head_tail_truncate",
    "EncodedPair",
    "encode_pair",
    "ModelConfig",
    "ModelParameters",
    "init_model",
    "forward",
    "forward_with_tape",
    "backward",
    "LossConfig",
    "OptimizerConfig",
    "RunConfig",
    "multi_label_loss",
    "rdrop_loss",
    "FoldResult",
    "EnsembleModel",
    "train_fold",
    "cross_validate",
    "ensemble_predict",
    "pearson",
    "clip_scores",
    "EvalReport",
    "per_pair_report",
]
