"""
Example usage script for the news similarity engine.

Everything runs on a generated two-language corpus, so no downloads are needed.
"""

import logging
import tempfile

from news_similarity import (
    EnsembleModel,
    LossConfig,
    ModelConfig,
    OptimizerConfig,
    RunConfig,
    TruncationPolicy,
    build_default_plan,
    cross_validate,
    encode_pair,
    per_pair_report,
    split_kfold,
    tokenize,
)
from news_similarity.augment import TaggingTranslator, back_translate, is_back_translatable
from news_similarity.synthetic import generate_synthetic_corpus
from news_similarity.training import predict_overall

SMALL_MODEL = ModelConfig(vocab_size=4096, embed_dim=32, num_layers=1, num_heads=2, ff_dim=64)
QUICK_OPTIMIZER = OptimizerConfig(learning_rate=3e-3, batch_size=16, epochs=4)


def example_tokenization():
    """Example: Hashing tokenizer and head-tail truncation."""
    print("=" * 60)
    print("EXAMPLE 1: Tokenization")
    print("=" * 60)

    print(f"\nTokens: {tokenize('Floods in Bavaria. River levels keep rising.')}")
    for preset in ("h256t0", "h200t56", "h0t256"):
        policy = TruncationPolicy.from_preset(preset)
        pair = encode_pair("word " * 400, "word " * 10, policy, SMALL_MODEL.vocab_size)
        print(f"  {preset}: length={pair.length} boundaries={pair.article_boundaries}")


def example_augmentation():
    """Example: Back-translation and the default translate-train plan."""
    print("\n" + "=" * 60)
    print("EXAMPLE 2: Augmentation")
    print("=" * 60)

    record = next(r for r in generate_synthetic_corpus(20, seed=0) if is_back_translatable(r))
    rewritten = back_translate(record, "en", TaggingTranslator())
    print(f"\n{record.pair_id} ({record.language_pair}) -> {rewritten.pair_id}")
    print(f"  title1: {rewritten.title1}")

    plan = build_default_plan()
    print(f"\nDefault plan ({plan.total_records} records):")
    for row in plan.rows:
        print(f"  {row.describe()}")


def example_cross_validation():
    """Example: Train a three-fold ensemble and report per language pair."""
    print("\n" + "=" * 60)
    print("EXAMPLE 3: Cross-Validation and Ensembling")
    print("=" * 60)

    records = generate_synthetic_corpus(300, seed=1)
    config = RunConfig(
        model=SMALL_MODEL,
        loss=LossConfig(overall_weight=0.75, rdrop_alpha=0.3, forwards=2),
        optimizer=QUICK_OPTIMIZER,
        folds=3,
        seed=1,
    )
    folds = split_kfold(records, config.folds, config.seed)
    results = cross_validate(records, folds, config)
    for result in results:
        shown = "n/a" if result.best_val_pearson is None else f"{result.best_val_pearson:.3f}"
        print(f"  fold {result.fold_index}: best epoch {result.best_epoch}, val pearson {shown}")

    with tempfile.TemporaryDirectory() as tmp:
        EnsembleModel.from_results(results).save(tmp)
        ensemble = EnsembleModel.load(tmp)

    held_out = generate_synthetic_corpus(100, seed=2)
    policy = TruncationPolicy.from_preset(config.policy)
    pairs = [
        encode_pair(r.document1, r.document2, policy, SMALL_MODEL.vocab_size) for r in held_out
    ]
    overall = predict_overall(ensemble, pairs)
    report = per_pair_report(held_out, dict(zip((r.pair_id for r in held_out), overall.tolist())))
    print("\nHeld-out report (Pearson x100):")
    print(report.to_frame().to_string(index=False))


if __name__ == "__main__":
    logging.basicConfig(level=logging.WARNING)
    print("\nNews Similarity Engine - Usage Examples\n")

    example_tokenization()
    example_augmentation()
    example_cross_validation()

    print("\n" + "=" * 60)
    print("Examples completed!")
    print("=" * 60)
