"""
Data augmentation by back-translation and translate-train.

Translation goes through ``TranslatorPort``; the shipped stubs make augmentation runs
hermetic, and ``DeepTranslatorAdapter`` talks to a real service when the optional
``deep-translator`` package is installed.
"""

import json
import logging
import os
import threading
import time
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from .config import DEFAULT_PLAN_ROWS, LANGUAGES, PIVOT_LANGUAGE, derive_seed
from .corpus import ArticleRecord, Provenance, compose_document
from .exceptions import DataError, InsufficientOriginError, UnsupportedLanguagePairError

logger = logging.getLogger(__name__)

BACK_TRANSLATION_SUFFIX = "_bt"
TRANSLATE_TRAIN_SUFFIX = "_tt_"


class TranslatorPort(Protocol):
    """Anything that can translate text between two languages, deterministically."""

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        ...


def _check_direction(source_lang: str, target_lang: str) -> None:
    if source_lang not in LANGUAGES or target_lang not in LANGUAGES:
        raise UnsupportedLanguagePairError(f"unsupported direction {source_lang}->{target_lang}")


class IdentityTranslator:
    """Returns the input unchanged."""

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        _check_direction(source_lang, target_lang)
        return text


class TaggingTranslator:
    """Wraps text as "[tgt]...[/tgt]" so every translation is visible in the output."""

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        _check_direction(source_lang, target_lang)
        return f"[{target_lang}]{text}[/{target_lang}]"


class CountingTranslator:
    """Counts calls per (source, target) direction and per input text."""

    def __init__(self, inner: TranslatorPort):
        self.inner = inner
        self.calls: Counter = Counter()
        self.texts: Counter = Counter()
        self._lock = threading.Lock()

    @property
    def total_calls(self) -> int:
        return sum(self.calls.values())

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        with self._lock:
            self.calls[(source_lang, target_lang)] += 1
            self.texts[(text, target_lang)] += 1
        return self.inner.translate(text, source_lang, target_lang)


@dataclass(frozen=True)
class TranslatorSettings:
    """Settings of a real translation service."""

    provider: str = "google"
    api_key_env: Optional[str] = None
    rate_limit: float = 5.0


class DeepTranslatorAdapter:
    """
    Translator backed by ``deep_translator``.

    The provider owns its endpoint; an API key, when the provider needs one, is read from
    the environment variable named in the settings. Calls are throttled to
    ``rate_limit`` per second across threads. Language codes are mapped to the
    provider's own spelling, and service failures surface as package errors.
    """

    _PROVIDERS = {
        "google": "GoogleTranslator",
        "deepl": "DeeplTranslator",
        "microsoft": "MicrosoftTranslator",
    }
    _LANGUAGE_CODES: Dict[str, Dict[str, str]] = {
        "google": {"zh": "zh-CN"},
        "microsoft": {"zh": "zh-Hans"},
    }
    _UNSUPPORTED_ERRORS = ("LanguageNotSupportedException", "InvalidSourceOrTargetLanguage")
    _SERVICE_ERRORS = (
        "BaseError",
        "RequestError",
        "TooManyRequests",
        "ServerException",
        "MicrosoftAPIerror",
        "AuthorizationException",
    )

    def __init__(self, settings: TranslatorSettings = TranslatorSettings()):
        try:
            import deep_translator
            from deep_translator import exceptions as service_errors
        except ImportError as e:
            raise ImportError(
                "DeepTranslatorAdapter needs the optional dependency: "
                "pip install 'news-similarity-modelling[translate]'"
            ) from e
        if settings.provider not in self._PROVIDERS:
            raise UnsupportedLanguagePairError(
                f"unknown translation provider {settings.provider!r}"
            )
        self.settings = settings
        self._factory = getattr(deep_translator, self._PROVIDERS[settings.provider])
        self._codes = self._LANGUAGE_CODES.get(settings.provider, {})
        self._unsupported = tuple(
            getattr(service_errors, name)
            for name in self._UNSUPPORTED_ERRORS
            if hasattr(service_errors, name)
        )
        self._failures = tuple(
            getattr(service_errors, name)
            for name in self._SERVICE_ERRORS
            if hasattr(service_errors, name)
        )
        self._api_key = os.environ.get(settings.api_key_env) if settings.api_key_env else None
        self._lock = threading.Lock()
        self._next_slot = 0.0

    def _throttle(self) -> None:
        if self.settings.rate_limit <= 0:
            return
        with self._lock:
            now = time.monotonic()
            wait = self._next_slot - now
            self._next_slot = max(now, self._next_slot) + 1.0 / self.settings.rate_limit
        if wait > 0:
            time.sleep(wait)

    def service_code(self, lang: str) -> str:
        """Provider spelling of an ISO-639-1 code."""
        return self._codes.get(lang, lang)

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        _check_direction(source_lang, target_lang)
        kwargs = {
            "source": self.service_code(source_lang),
            "target": self.service_code(target_lang),
        }
        if self._api_key:
            kwargs["api_key"] = self._api_key
        self._throttle()
        logger.debug("translating %d chars %s->%s", len(text), source_lang, target_lang)
        try:
            return self._factory(**kwargs).translate(text)
        except self._unsupported as e:
            raise UnsupportedLanguagePairError(
                f"{self.settings.provider} cannot translate {source_lang}->{target_lang}: {e}"
            ) from e
        except self._failures as e:
            raise DataError(
                f"{self.settings.provider} translation {source_lang}->{target_lang} failed: {e}"
            ) from e


def build_translator(name: str, settings: Optional[TranslatorSettings] = None) -> TranslatorPort:
    """Translator by name: "identity", "tagging", or a deep-translator provider."""
    if name == "identity":
        return IdentityTranslator()
    if name == "tagging":
        return TaggingTranslator()
    return DeepTranslatorAdapter(settings or TranslatorSettings(provider=name))


def parse_pair_tag(tag: str) -> Tuple[str, str]:
    """ "de-en" -> ("de", "en"); both sides must be task languages."""
    parts = tag.split("-")
    if len(parts) != 2 or not all(p in LANGUAGES for p in parts):
        raise DataError(f"malformed language-pair tag {tag!r}")
    return parts[0], parts[1]


@dataclass(frozen=True)
class AugmentPlanRow:
    """Translate ``quantity`` samples of ``origin_pair`` into every target pair."""

    origin_pair: str
    quantity: int
    targets: Tuple[str, ...]

    def __post_init__(self) -> None:
        parse_pair_tag(self.origin_pair)
        for target in self.targets:
            parse_pair_tag(target)
        if self.quantity < 0:
            raise DataError(f"negative quantity in plan row {self.origin_pair}")
        if len(set(self.targets)) != len(self.targets):
            raise DataError(f"duplicate targets in plan row {self.origin_pair}")

    def to_dict(self) -> Dict:
        return {
            "origin": self.origin_pair,
            "quantity": self.quantity,
            "targets": list(self.targets),
        }

    @classmethod
    def from_dict(cls, payload: Dict) -> "AugmentPlanRow":
        return cls(
            origin_pair=payload["origin"],
            quantity=int(payload["quantity"]),
            targets=tuple(payload["targets"]),
        )

    def describe(self) -> str:
        return f"{self.origin_pair} x{self.quantity} -> {'/'.join(self.targets)}"


@dataclass(frozen=True)
class AugmentPlan:
    rows: Tuple[AugmentPlanRow, ...] = field(default_factory=tuple)

    @property
    def total_records(self) -> int:
        return sum(row.quantity * len(row.targets) for row in self.rows)

    def target_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = defaultdict(int)
        for row in self.rows:
            for target in row.targets:
                counts[target] += row.quantity
        return dict(counts)


def build_default_plan() -> AugmentPlan:
    """The translate-train arrangement used for the multilingual news task."""
    return AugmentPlan(
        rows=tuple(
            AugmentPlanRow(origin, quantity, targets)
            for origin, quantity, targets in DEFAULT_PLAN_ROWS
        )
    )


def load_plan(filepath: Union[str, Path]) -> AugmentPlan:
    """Read a JSON-lines plan: {"origin": "en-en", "quantity": 800, "targets": [...]}."""
    rows = []
    with open(filepath, "r", encoding="utf-8") as fin:
        for number, line in enumerate(fin, start=1):
            if not line.strip():
                continue
            try:
                rows.append(AugmentPlanRow.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise DataError(f"{filepath}:{number}: invalid plan row ({e})") from e
    return AugmentPlan(rows=tuple(rows))


def save_plan(plan: AugmentPlan, filepath: Union[str, Path]) -> None:
    with open(filepath, "w", encoding="utf-8") as fout:
        for row in plan.rows:
            fout.write(json.dumps(row.to_dict()) + "\n")


def _translate_article(
    translator: TranslatorPort, title: str, text: str, source_lang: str, target_lang: str
) -> Tuple[str, str]:
    """
    Translate a whole article with one call.

    Title and body travel together joined by a newline and are split again at the first
    newline of the translation.
    """
    document = compose_document(title, text)
    if not document:
        return title, text
    translated = translator.translate(document, source_lang, target_lang)
    if title and text and "\n" in translated:
        new_title, new_text = translated.split("\n", 1)
        return new_title, new_text
    if title and not text:
        return translated, ""
    return "", translated


def back_translate(
    record: ArticleRecord, pivot: str = PIVOT_LANGUAGE, translator: Optional[TranslatorPort] = None
) -> ArticleRecord:
    """
    Paraphrase a record by translating it to a pivot language and back.

    Monolingual records have both articles round-tripped. Cross-lingual records with one
    side already in the pivot language only round-trip the other side and keep the pivot
    side untouched.

    Args:
        record: Non-pivot monolingual record, or cross-lingual record with one pivot side
        pivot: Pivot language
        translator: Translation port

    Returns:
        New record with the same scores, provenance back_translated and suffix "_bt"

    Raises:
        DataError: Record is pivot-monolingual or has no pivot side
    """
    if translator is None:
        raise DataError("back_translate needs a translator")
    if record.lang1 == record.lang2 == pivot:
        raise DataError(f"{record.pair_id}: {pivot}-{pivot} records are not back-translated")
    if record.lang1 != record.lang2 and pivot not in (record.lang1, record.lang2):
        raise DataError(
            f"{record.pair_id}: cross-lingual {record.language_pair} has no {pivot} side to keep"
        )

    sides = {
        1: (record.title1, record.text1, record.lang1),
        2: (record.title2, record.text2, record.lang2),
    }
    updated = {}
    for side, (title, text, lang) in sides.items():
        if lang == pivot:
            continue
        mid_title, mid_text = _translate_article(translator, title, text, lang, pivot)
        updated[side] = _translate_article(translator, mid_title, mid_text, pivot, lang)

    title1, text1 = updated.get(1, (record.title1, record.text1))
    title2, text2 = updated.get(2, (record.title2, record.text2))
    return replace(
        record,
        pair_id=record.pair_id + BACK_TRANSLATION_SUFFIX,
        title1=title1,
        text1=text1,
        title2=title2,
        text2=text2,
        provenance=Provenance.BACK_TRANSLATED,
    )


def is_back_translatable(record: ArticleRecord, pivot: str = PIVOT_LANGUAGE) -> bool:
    if record.provenance is not Provenance.ORIGINAL:
        return False
    if record.lang1 == record.lang2:
        return record.lang1 != pivot
    return pivot in (record.lang1, record.lang2)


def back_translate_corpus(
    records: Iterable[ArticleRecord],
    translator: TranslatorPort,
    pivot: str = PIVOT_LANGUAGE,
) -> List[ArticleRecord]:
    """Back-translate every eligible original record."""
    out = [back_translate(r, pivot, translator) for r in records if is_back_translatable(r, pivot)]
    logger.info("back-translated %d records via %s", len(out), pivot)
    return out


# A translation job: (record index, side, target language)
_Job = Tuple[int, int, str]


class _ArticleTranslations:
    """
    Translations of article sides, computed at most once per (side, target language).

    Directions between two non-pivot languages hop through the pivot, whose translation is
    itself cached and counts as the side's pivot-language version.
    """

    def __init__(
        self,
        records: Sequence[ArticleRecord],
        translator: TranslatorPort,
        pivot: str,
        max_in_flight: int,
    ):
        self.records = records
        self.translator = translator
        self.pivot = pivot
        self.max_in_flight = max(1, max_in_flight)
        self.done: Dict[_Job, Tuple[str, str]] = {}

    def _original(self, index: int, side: int) -> Tuple[str, str, str]:
        record = self.records[index]
        if side == 1:
            return record.title1, record.text1, record.lang1
        return record.title2, record.text2, record.lang2

    def _source_for(self, job: _Job) -> Tuple[str, str, str]:
        index, side, target = job
        title, text, lang = self._original(index, side)
        if lang != self.pivot and target != self.pivot:
            title, text = self.done[(index, side, self.pivot)]
            lang = self.pivot
        return title, text, lang

    def _run(self, jobs: List[_Job]) -> None:
        def work(job: _Job) -> Tuple[str, str]:
            title, text, lang = self._source_for(job)
            return _translate_article(self.translator, title, text, lang, job[2])

        if self.max_in_flight == 1:
            results = [work(job) for job in jobs]
        else:
            with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
                results = list(pool.map(work, jobs))
        self.done.update(zip(jobs, results))

    def resolve(self, jobs: Iterable[_Job]) -> None:
        """Translate every requested job; pivot hops run in a first wave."""
        pending = sorted({job for job in jobs if self._original(job[0], job[1])[2] != job[2]})
        first_wave, second_wave = set(), set()
        for index, side, target in pending:
            lang = self._original(index, side)[2]
            if lang != self.pivot and target != self.pivot:
                first_wave.add((index, side, self.pivot))
                second_wave.add((index, side, target))
            else:
                first_wave.add((index, side, target))
        self._run(sorted(first_wave - set(self.done)))
        self._run(sorted(second_wave - set(self.done)))

    def get(self, index: int, side: int, target: str) -> Tuple[str, str]:
        title, text, lang = self._original(index, side)
        if lang == target:
            return title, text
        return self.done[(index, side, target)]


def translate_train(
    records: Sequence[ArticleRecord],
    plan: AugmentPlan,
    translator: TranslatorPort,
    seed: int,
    pivot: str = PIVOT_LANGUAGE,
    max_in_flight: int = 1,
) -> List[ArticleRecord]:
    """
    Build the translate-train set for a plan.

    For every row, ``quantity`` original records of the origin pair are drawn by seeded
    sampling without replacement; rows sharing an origin draw disjoint samples. Each
    article side is translated at most once per target language and the translations are
    recombined into every target pair of the row.

    Args:
        records: Labeled records (only original ones are used as origins)
        plan: Translate-train arrangement
        translator: Translation port
        seed: Sampling seed
        pivot: Language used between two non-pivot languages
        max_in_flight: Concurrent translate() calls

    Returns:
        Records in plan order, provenance translate_train, pair_id suffix "_tt_<target>"

    Raises:
        InsufficientOriginError: A row asks for more samples than remain
        UnsupportedLanguagePairError: The translator rejects a direction
    """
    originals = sorted(
        (r for r in records if r.provenance is Provenance.ORIGINAL), key=lambda r: r.pair_id
    )
    pools: Dict[Tuple[str, str], List[int]] = defaultdict(list)
    for index, record in enumerate(originals):
        pools[(record.lang1, record.lang2)].append(index)

    selections: List[Tuple[AugmentPlanRow, List[int]]] = []
    for row_number, row in enumerate(plan.rows):
        origin = parse_pair_tag(row.origin_pair)
        pool = pools[origin]
        if len(pool) < row.quantity:
            raise InsufficientOriginError(
                f"plan row {row_number} ({row.describe()}): needs {row.quantity} "
                f"{row.origin_pair} samples, only {len(pool)} available"
            )
        rng = np.random.default_rng(derive_seed(seed, "sampling", row_number))
        picked = set(rng.choice(len(pool), size=row.quantity, replace=False).tolist())
        chosen = [pool[i] for i in sorted(picked)]
        pools[origin] = [idx for i, idx in enumerate(pool) if i not in picked]
        selections.append((row, chosen))

    translations = _ArticleTranslations(originals, translator, pivot, max_in_flight)
    jobs = []
    for row, chosen in selections:
        for target in row.targets:
            lang1, lang2 = parse_pair_tag(target)
            for index in chosen:
                jobs.append((index, 1, lang1))
                jobs.append((index, 2, lang2))
    translations.resolve(jobs)

    out: List[ArticleRecord] = []
    for row, chosen in selections:
        for target in row.targets:
            lang1, lang2 = parse_pair_tag(target)
            for index in chosen:
                source = originals[index]
                title1, text1 = translations.get(index, 1, lang1)
                title2, text2 = translations.get(index, 2, lang2)
                out.append(
                    replace(
                        source,
                        pair_id=f"{source.pair_id}{TRANSLATE_TRAIN_SUFFIX}{target}",
                        lang1=lang1,
                        lang2=lang2,
                        title1=title1,
                        text1=text1,
                        title2=title2,
                        text2=text2,
                        provenance=Provenance.TRANSLATE_TRAIN,
                    )
                )
    logger.info("translate-train emitted %d records from %d plan rows", len(out), len(plan.rows))
    return out
