"""
Shared fixtures for the news similarity tests.
"""

import json
import sys
import types

import pytest

from news_similarity.config import INDEX_COLUMNS, LossConfig, ModelConfig, OptimizerConfig
from news_similarity.corpus import ArticleRecord, Provenance, ScoreVector
from news_similarity.synthetic import generate_synthetic_corpus

TINY_ARTICLES = {
    "1626170156": {
        "title": "Hochwasser in Bayern",
        "text": "Die Pegel steigen weiter. Mehr unter https://example.org/flut heute.",
        "description": "ignored",
    },
    "1623571850": {"title": "Floods in Bavaria", "text": "River levels keep rising."},
    "1000000001": {"title": "Election night", "text": "Votes are counted in the capital."},
    "1000000002": {"title": "Election results", "text": "The count finished overnight."},
    "1000000003": {"title": "Tormenta", "text": "La lluvia cae sobre la ciudad."},
    "1000000004": {"title": "", "text": "Cielo despejado en la costa."},
}

TINY_ROWS = [
    ["1626170156_1623571850", "de", "en", "1", "1.5", "1", "1", "4", "2", "2"],
    ["1000000001_1000000002", "en", "en", "2", "3", "2.5", "3", "3", "2", "2"],
    ["1000000003_1000000004", "es", "es", "1", "1", "1", "1", "1.5", "3", "3"],
]


def write_index(path, rows):
    """Write a pair index CSV with the canonical header."""
    lines = [",".join(INDEX_COLUMNS)] + [",".join(row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@pytest.fixture
def tiny_corpus(tmp_path):
    """Pair index and article directory for three valid pairs."""
    article_dir = tmp_path / "articles"
    article_dir.mkdir()
    for article_id, payload in TINY_ARTICLES.items():
        (article_dir / f"{article_id}.json").write_text(json.dumps(payload), encoding="utf-8")
    index = tmp_path / "pairs.csv"
    write_index(index, TINY_ROWS)
    return index, article_dir


@pytest.fixture
def make_record():
    """Factory for records with uniform scores."""

    def _make(
        pair_id="1_2",
        lang1="en",
        lang2="en",
        title1="Title one",
        text1="Body one.",
        title2="Title two",
        text2="Body two.",
        overall=2.5,
        provenance=Provenance.ORIGINAL,
    ):
        values = [2.0] * 7
        values[4] = overall
        return ArticleRecord(
            pair_id=pair_id,
            lang1=lang1,
            lang2=lang2,
            title1=title1,
            text1=text1,
            title2=title2,
            text2=text2,
            scores=ScoreVector.from_sequence(values),
            provenance=provenance,
        )

    return _make


@pytest.fixture
def small_model_config():
    """Cross-encoder small enough for finite-difference checks."""
    return ModelConfig(
        vocab_size=64, embed_dim=8, num_layers=1, num_heads=1, ff_dim=16, dropout_p=0.1
    )


@pytest.fixture
def fast_optimizer_config():
    """Optimizer settings that move a freshly initialized model within a few epochs."""
    return OptimizerConfig(
        learning_rate=3e-3, weight_decay=1e-4, warmup_rate=0.1, batch_size=8, epochs=2
    )


@pytest.fixture
def baseline_loss_config():
    return LossConfig(overall_weight=1.0, rdrop_alpha=0.0, forwards=1)


@pytest.fixture
def synthetic_records():
    """Sixty labeled pairs in the two toy languages."""
    return generate_synthetic_corpus(60, seed=0)


class ServiceError(Exception):
    pass


class LanguageNotSupported(ServiceError):
    pass


class TooManyRequests(Exception):
    pass


@pytest.fixture
def fake_deep_translator(monkeypatch):
    """
    Stand-in ``deep_translator`` module.

    Each provider accepts only its own spelling of Chinese and never Arabic. Calls are
    recorded in ``service.calls``; setting ``service.outage`` makes every request fail.
    """
    service = types.SimpleNamespace(calls=[], outage=False)
    errors = types.ModuleType("deep_translator.exceptions")
    errors.BaseError = ServiceError
    errors.LanguageNotSupportedException = LanguageNotSupported
    errors.TooManyRequests = TooManyRequests

    def provider(chinese):
        accepted = {"en", "de", "fr", "es", "it", "pl", "ru", chinese}

        class Provider:
            def __init__(self, source, target, **kwargs):
                if source not in accepted or target not in accepted:
                    raise LanguageNotSupported(f"{source}->{target}")
                service.calls.append((source, target, kwargs))
                self.target = target

            def translate(self, text):
                if service.outage:
                    raise TooManyRequests("slow down")
                return f"<{self.target}>{text}"

        return Provider

    module = types.ModuleType("deep_translator")
    module.GoogleTranslator = provider("zh-CN")
    module.MicrosoftTranslator = provider("zh-Hans")
    module.DeeplTranslator = provider("zh")
    module.exceptions = errors
    monkeypatch.setitem(sys.modules, "deep_translator", module)
    monkeypatch.setitem(sys.modules, "deep_translator.exceptions", errors)
    return service
