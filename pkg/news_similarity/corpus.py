"""
Corpus ingestion: article records, text cleaning and k-fold splitting.
"""

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from sklearn.model_selection import KFold

from .config import INDEX_COLUMNS, LANGUAGES, SCORE_DIMENSIONS, SCORE_MAX, SCORE_MIN
from .exceptions import DataError

logger = logging.getLogger(__name__)

PAIR_ID_PATTERN = re.compile(r"^(\d+)_(\d+)$")

_URL_PATTERN = re.compile(r"(?:[A-Za-z][A-Za-z0-9+.\-]*://|www\.)\S*")
_PATH_PATTERNS = (
    # C:\dir\file or C:/dir
    re.compile(r"(?<!\S)[A-Za-z]:[\\/]\S*"),
    # \\server\share
    re.compile(r"(?<!\S)\\\\\S+"),
    # /usr/local/bin
    re.compile(r"(?<!\S)/[^\s/]\S*"),
    # dir/sub/file.ext or dir\file.ext
    re.compile(r"(?<!\S)(?:[\w.\-]+[/\\])+[\w.\-]*\.[A-Za-z0-9]{1,8}(?!\w)"),
)
_WHITESPACE = re.compile(r"\s+")


class Provenance(str, Enum):
    """Where a record came from."""

    ORIGINAL = "original"
    BACK_TRANSLATED = "back_translated"
    TRANSLATE_TRAIN = "translate_train"


@dataclass(frozen=True)
class ScoreVector:
    """Seven annotation scores, each on the 1-4 scale."""

    geography: float
    entities: float
    time: float
    narrative: float
    overall: float
    style: float
    tone: float

    def __post_init__(self) -> None:
        for name in SCORE_DIMENSIONS:
            value = getattr(self, name)
            if not SCORE_MIN <= value <= SCORE_MAX:
                raise DataError(f"score {name}={value} outside [{SCORE_MIN}, {SCORE_MAX}]")

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "ScoreVector":
        if len(values) != len(SCORE_DIMENSIONS):
            raise DataError(f"expected {len(SCORE_DIMENSIONS)} scores, got {len(values)}")
        return cls(*(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in SCORE_DIMENSIONS], dtype=np.float64)

    def to_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in SCORE_DIMENSIONS}


@dataclass(frozen=True)
class ArticleRecord:
    """One labeled pair of news articles."""

    pair_id: str
    lang1: str
    lang2: str
    title1: str
    text1: str
    title2: str
    text2: str
    scores: ScoreVector
    provenance: Provenance = Provenance.ORIGINAL

    def __post_init__(self) -> None:
        source = source_pair_id(self.pair_id)
        if not PAIR_ID_PATTERN.match(source):
            raise DataError(f"malformed pair_id {self.pair_id!r}")
        for lang in (self.lang1, self.lang2):
            if lang not in LANGUAGES:
                raise DataError(f"unsupported language {lang!r} in pair {self.pair_id}")

    @property
    def source_id(self) -> str:
        return source_pair_id(self.pair_id)

    @property
    def language_pair(self) -> str:
        return language_pair_tag(self.lang1, self.lang2)

    @property
    def document1(self) -> str:
        return compose_document(self.title1, self.text1)

    @property
    def document2(self) -> str:
        return compose_document(self.title2, self.text2)

    def to_dict(self) -> Dict:
        return {
            "pair_id": self.pair_id,
            "lang1": self.lang1,
            "lang2": self.lang2,
            "title1": self.title1,
            "text1": self.text1,
            "title2": self.title2,
            "text2": self.text2,
            "scores": self.scores.to_dict(),
            "provenance": self.provenance.value,
        }

    @classmethod
    def from_dict(cls, payload: Dict) -> "ArticleRecord":
        return cls(
            pair_id=payload["pair_id"],
            lang1=payload["lang1"],
            lang2=payload["lang2"],
            title1=payload["title1"],
            text1=payload["text1"],
            title2=payload["title2"],
            text2=payload["text2"],
            scores=ScoreVector(**payload["scores"]),
            provenance=Provenance(payload.get("provenance", Provenance.ORIGINAL.value)),
        )


@dataclass
class LoadResult:
    """Records read from a pair index, plus the rows that could not be used."""

    records: List[ArticleRecord] = field(default_factory=list)
    skipped: int = 0
    malformed: int = 0


def source_pair_id(pair_id: str) -> str:
    """Strip augmentation suffixes: "1_2_tt_zh-zh" -> "1_2"."""
    return "_".join(pair_id.split("_")[:2])


def language_pair_tag(lang1: str, lang2: str) -> str:
    """Canonical group tag: "de" for de-de, "de-en" for cross-lingual pairs."""
    return lang1 if lang1 == lang2 else f"{lang1}-{lang2}"


def clean_text(raw: str) -> str:
    """
    Remove URLs and file paths, collapse whitespace and trim.

    Matches are replaced by a space so that neighbouring words never fuse, and the
    substitution is repeated until nothing changes, which makes the function idempotent.
    """
    text = raw
    while True:
        previous = text
        text = _URL_PATTERN.sub(" ", text)
        for pattern in _PATH_PATTERNS:
            text = pattern.sub(" ", text)
        if text == previous:
            break
    return _WHITESPACE.sub(" ", text).strip()


def compose_document(title: str, body: str) -> str:
    """Join title and body with a single newline; empty parts are dropped."""
    if not title:
        return body
    if not body:
        return title
    return f"{title}\n{body}"


def _read_article(article_dir: Path, article_id: str) -> Optional[Dict[str, str]]:
    """Read one article file; None when missing, raises ValueError when malformed."""
    path = article_dir / f"{article_id}.json"
    if not path.exists():
        return None
    payload = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(payload, dict):
        raise ValueError("article JSON is not an object")
    title, text = payload.get("title"), payload.get("text")
    if not isinstance(title, str) or not isinstance(text, str):
        raise ValueError("article JSON lacks string 'title' and 'text' fields")
    return {"title": title, "text": text}


def _read_index(pair_index_path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(
            pair_index_path,
            dtype=str,
            keep_default_na=False,
            on_bad_lines="error",
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError as e:
        raise DataError(f"{pair_index_path}: pair index has no header row") from e
    except pd.errors.ParserError as e:
        raise DataError(f"{pair_index_path}: malformed CSV ({e})") from e

    if tuple(frame.columns) != INDEX_COLUMNS:
        raise DataError(
            f"{pair_index_path}: expected columns {','.join(INDEX_COLUMNS)}, "
            f"got {','.join(frame.columns)}"
        )
    return frame


def load_dataset(
    pair_index_path: Union[str, Path], article_dir: Union[str, Path]
) -> LoadResult:
    """
    Load labeled article pairs from a CSV pair index and a directory of article JSON files.

    Title and text of every article are cleaned; all other JSON fields are ignored.
    Rows whose article files are missing or malformed are skipped and counted.

    Args:
        pair_index_path: CSV with columns pair_id,lang1,lang2 and the seven scores
        article_dir: Directory holding <article_id>.json files

    Returns:
        LoadResult with records and skip counters

    Raises:
        DataError: Malformed CSV row (with its line number) or out-of-range score
    """
    article_dir = Path(article_dir)
    frame = _read_index(Path(pair_index_path))
    result = LoadResult()

    for position, row in enumerate(frame.itertuples(index=False)):
        line = position + 2  # header is line 1
        pair_id, lang1, lang2 = row[0].strip(), row[1].strip(), row[2].strip()
        match = PAIR_ID_PATTERN.match(pair_id)
        if not match:
            raise DataError(f"row {line}: malformed pair_id {pair_id!r}")
        if lang1 not in LANGUAGES or lang2 not in LANGUAGES:
            raise DataError(f"row {line}: unsupported language pair {lang1}-{lang2}")
        try:
            values = [float(v) for v in row[3:]]
        except ValueError as e:
            raise DataError(f"row {line}: non-numeric score ({e})") from e
        try:
            scores = ScoreVector.from_sequence(values)
        except DataError as e:
            raise DataError(f"row {line}: {e}") from e

        articles = []
        for article_id in match.groups():
            try:
                article = _read_article(article_dir, article_id)
            except (ValueError, UnicodeDecodeError) as e:
                logger.warning("row %d: malformed article %s.json (%s)", line, article_id, e)
                result.malformed += 1
                article = None
                articles = None
                break
            if article is None:
                logger.warning("row %d: article %s.json not found", line, article_id)
                articles = None
                break
            articles.append(article)

        if articles is None:
            result.skipped += 1
            continue

        first, second = articles
        result.records.append(
            ArticleRecord(
                pair_id=pair_id,
                lang1=lang1,
                lang2=lang2,
                title1=clean_text(first["title"]),
                text1=clean_text(first["text"]),
                title2=clean_text(second["title"]),
                text2=clean_text(second["text"]),
                scores=scores,
            )
        )

    logger.info("loaded %d records, skipped %d", len(result.records), result.skipped)
    return result


def save_records(records: Iterable[ArticleRecord], filepath: Union[str, Path]) -> int:
    """Write records as JSON lines; returns the number written."""
    count = 0
    with open(filepath, "w", encoding="utf-8") as fout:
        for record in records:
            fout.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
            count += 1
    return count


def load_records(filepath: Union[str, Path]) -> List[ArticleRecord]:
    """Read a JSON-lines dataset dump."""
    records = []
    with open(filepath, "r", encoding="utf-8") as fin:
        for number, line in enumerate(fin, start=1):
            if not line.strip():
                continue
            try:
                records.append(ArticleRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise DataError(f"{filepath}:{number}: invalid record ({e})") from e
    return records


@dataclass(frozen=True)
class FoldAssignment:
    """Mapping of source pair ids to cross-validation folds."""

    fold_of: Dict[str, int]
    k: int
    seed: int

    def fold_for(self, pair_id: str) -> int:
        """Fold of a record; augmented records resolve through their source id."""
        try:
            return self.fold_of[source_pair_id(pair_id)]
        except KeyError:
            raise DataError(f"pair {pair_id} has no fold assignment") from None

    def members(self, fold: int) -> List[str]:
        return sorted(pid for pid, f in self.fold_of.items() if f == fold)

    def sizes(self) -> List[int]:
        counts = [0] * self.k
        for fold in self.fold_of.values():
            counts[fold] += 1
        return counts

    def to_dict(self) -> Dict:
        return {"k": self.k, "seed": self.seed, "fold_of": dict(sorted(self.fold_of.items()))}

    @classmethod
    def from_dict(cls, payload: Dict) -> "FoldAssignment":
        return cls(
            fold_of={str(k): int(v) for k, v in payload["fold_of"].items()},
            k=int(payload["k"]),
            seed=int(payload["seed"]),
        )

    def save(self, filepath: Union[str, Path]) -> None:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        Path(filepath).write_text(payload + "\n", encoding="utf-8")

    @classmethod
    def load(cls, filepath: Union[str, Path]) -> "FoldAssignment":
        return cls.from_dict(json.loads(Path(filepath).read_text(encoding="utf-8")))


def split_kfold(records: Sequence[ArticleRecord], k: int, seed: int) -> FoldAssignment:
    """
    Split source pairs into k disjoint folds whose sizes differ by at most one.

    Folds are assigned to distinct source pair ids, so augmented copies always land in
    the fold of the record they were derived from.

    Args:
        records: Original and/or augmented records
        k: Number of folds (>= 2)
        seed: Shuffling seed

    Returns:
        FoldAssignment over the distinct source ids
    """
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    if not records:
        raise DataError("cannot split an empty dataset")
    source_ids = sorted({source_pair_id(r.pair_id) for r in records})
    if k > len(source_ids):
        raise DataError(f"k={k} exceeds the number of distinct source pairs ({len(source_ids)})")

    splitter = KFold(n_splits=k, shuffle=True, random_state=seed % 2**32)
    fold_of: Dict[str, int] = {}
    for fold, (_, test_index) in enumerate(splitter.split(np.arange(len(source_ids)))):
        for i in test_index:
            fold_of[source_ids[i]] = fold
    return FoldAssignment(fold_of=fold_of, k=k, seed=seed)
