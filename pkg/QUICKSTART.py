#!/usr/bin/env python
"""
Quick Start Guide - News Similarity Engine

This script prints the basic usage patterns.
"""

print("=" * 70)
print("NEWS SIMILARITY ENGINE - QUICK START GUIDE")
print("=" * 70)

print("\n📦 Installation:")
print("-" * 70)
print("pip install -e .")
print("pip install -e '.[dev]'        # For development")
print("pip install -e '.[translate]'  # Online translation providers")

print("\n🚀 Command-line Pipeline:")
print("-" * 70)
print("""
news-similarity ingest   --index pairs.csv --articles articles/ --out data/
news-similarity augment  --dataset data/dataset.jsonl --translator google --out aug/
news-similarity split    --dataset data/dataset.jsonl --folds 10 --out split/
news-similarity train    --dataset data/dataset.jsonl --dataset aug/augmented.jsonl \\
                         --folds-file split/folds.json --config run.json --out run/
news-similarity evaluate --dataset test/dataset.jsonl --ensemble run/checkpoints --out eval/
news-similarity report   --metrics run/metrics.jsonl other/metrics.jsonl --labels base rdrop
""")

print("\n📊 Python API Usage:")
print("-" * 70)
print("""
from news_similarity import LossConfig, RunConfig, cross_validate, split_kfold
from news_similarity.synthetic import generate_synthetic_corpus

records = generate_synthetic_corpus(300, seed=0)
config = RunConfig(loss=LossConfig(overall_weight=0.75, rdrop_alpha=0.3, forwards=2), folds=3)
folds = split_kfold(records, config.folds, config.seed)
results = cross_validate(records, folds, config, jobs=3)

for result in results:
    print(result.fold_index, result.best_epoch, result.best_val_pearson)
""")

print("\n🧪 Run Tests:")
print("-" * 70)
print("pytest tests/ -v")
print("pytest tests/ -m slow          # Long-running trend checks")
print("pytest tests/ --cov=news_similarity")

print("\n📖 Documentation:")
print("-" * 70)
print("See README.md for comprehensive documentation")
print("See DESIGN.md for design decisions")
print("See CHANGELOG.md for version history")

print("\n" + "=" * 70)
print("Ready to get started? Run: python examples.py")
print("=" * 70 + "\n")
