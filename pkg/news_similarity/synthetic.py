"""
Synthetic article-pair corpus with a programmatic similarity label.

Two toy languages share one story inventory: story word ``j`` of topic ``t`` is written
``s<t>w<j>`` in the language tagged "en" and ``s<t>w<j>x`` in the one tagged "de"; filler
words are ``f<j>`` and ``f<j>x``. The first article of a pair tells a story from one
topic. The second keeps ``k`` of its story words and pads the rest with filler, so

    Overall = 1 + 3 * k / words_per_article

Auxiliary dimensions are noisy copies of Overall shifted by a per-topic bias, which makes
them informative about the topic as well as the overlap.
"""

from typing import List, Tuple

import numpy as np

from .config import OVERALL_INDEX, SCORE_DIMENSIONS, SCORE_MAX, SCORE_MIN
from .corpus import ArticleRecord, ScoreVector

TOY_LANGUAGES: Tuple[str, str] = ("en", "de")
FIRST_ARTICLE_ID = 1_000_000


def story_word(topic: int, index: int, lang: str) -> str:
    return f"s{topic}w{index}" if lang == "en" else f"s{topic}w{index}x"


def filler_word(index: int, lang: str) -> str:
    return f"f{index}" if lang == "en" else f"f{index}x"


def _write_article(words: List[str], title_words: int) -> Tuple[str, str]:
    return " ".join(words[:title_words]), " ".join(words[title_words:]) + " ."


def generate_synthetic_corpus(
    n_pairs: int,
    seed: int,
    topics: int = 8,
    story_words: int = 12,
    filler_words: int = 12,
    words_per_article: int = 10,
    title_words: int = 3,
    cross_lingual_rate: float = 0.25,
    aux_noise: float = 0.3,
    topic_bias: float = 0.5,
) -> List[ArticleRecord]:
    """
    Generate labeled pairs in the two toy languages.

    Args:
        n_pairs: Number of pairs
        seed: Generator seed; the per-topic biases are drawn from it too
        topics: Number of story topics
        story_words: Story vocabulary per topic and language
        filler_words: Filler vocabulary per language
        words_per_article: Words per article, title included
        title_words: Leading words that form the title
        cross_lingual_rate: Share of en-de pairs; the rest are split between en-en and de-de
        aux_noise: Standard deviation of the noise on auxiliary dimensions
        topic_bias: Per-topic auxiliary shifts are drawn from [-topic_bias, topic_bias]

    Returns:
        List of original records with numeric pair ids
    """
    if topics < 1:
        raise ValueError("topics must be positive")
    if not 0 < words_per_article <= story_words:
        raise ValueError("words_per_article must lie in [1, story_words]")
    if not 0 <= title_words < words_per_article:
        raise ValueError("title_words must leave at least one body word")
    rng = np.random.default_rng(seed)
    biases = rng.uniform(-topic_bias, topic_bias, size=(topics, len(SCORE_DIMENSIONS)))
    biases[:, OVERALL_INDEX] = 0.0

    records = []
    for i in range(n_pairs):
        if rng.random() < cross_lingual_rate:
            lang1, lang2 = "en", "de"
        else:
            lang1 = lang2 = TOY_LANGUAGES[int(rng.integers(2))]
        topic = int(rng.integers(topics))

        first = rng.choice(story_words, size=words_per_article, replace=False)
        kept = int(rng.integers(0, words_per_article + 1))
        words1 = [story_word(topic, int(j), lang1) for j in first]
        retold = rng.choice(first, size=kept, replace=False)
        words2 = [story_word(topic, int(j), lang2) for j in retold]
        fill = rng.integers(filler_words, size=words_per_article - kept)
        words2 += [filler_word(int(j), lang2) for j in fill]
        words2 = [words2[j] for j in rng.permutation(len(words2))]

        overall = SCORE_MIN + (SCORE_MAX - SCORE_MIN) * kept / words_per_article
        noise = rng.normal(0.0, aux_noise, size=len(SCORE_DIMENSIONS))
        values = np.clip(overall + biases[topic] + noise, SCORE_MIN, SCORE_MAX)
        values[OVERALL_INDEX] = overall

        title1, text1 = _write_article(words1, title_words)
        title2, text2 = _write_article(words2, title_words)
        records.append(
            ArticleRecord(
                pair_id=f"{FIRST_ARTICLE_ID + 2 * i}_{FIRST_ARTICLE_ID + 2 * i + 1}",
                lang1=lang1,
                lang2=lang2,
                title1=title1,
                text1=text1,
                title2=title2,
                text2=text2,
                scores=ScoreVector.from_sequence(values.tolist()),
            )
        )
    return records
