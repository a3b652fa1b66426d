"""
Configuration and constants for the news similarity system.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

from .exceptions import ConfigError

# Languages of the multilingual news similarity task
LANGUAGES: Tuple[str, ...] = ("es", "it", "de", "en", "zh", "ar", "pl", "fr", "tr", "ru")

# Annotation dimensions, in the order they appear in the pair index
SCORE_DIMENSIONS: Tuple[str, ...] = (
    "geography",
    "entities",
    "time",
    "narrative",
    "overall",
    "style",
    "tone",
)
OVERALL_INDEX: int = 4
NUM_DIMENSIONS: int = len(SCORE_DIMENSIONS)

# Annotators rate on a 4-point scale
SCORE_MIN: float = 1.0
SCORE_MAX: float = 4.0
SCORE_MIDPOINT: float = (SCORE_MIN + SCORE_MAX) / 2

# Pair index columns, exactly and in order
INDEX_COLUMNS: Tuple[str, ...] = ("pair_id", "lang1", "lang2") + SCORE_DIMENSIONS

# Tokenizer
VOCAB_SIZE: int = 32768
PAD_ID: int = 0
CLS_ID: int = 1
SEP_ID: int = 2
UNK_ID: int = 3
NUM_SPECIAL_IDS: int = 4

# Head-tail presets: name -> (head_len, tail_len)
TRUNCATION_PRESETS: Dict[str, Tuple[int, int]] = {
    "h256t0": (256, 0),
    "h200t56": (200, 56),
    "h128t128": (128, 128),
    "h56t200": (56, 200),
    "h0t256": (0, 256),
}
DEFAULT_POLICY: str = "h200t56"

# Hidden widths of the regression head per number of head layers
HEAD_HIDDEN_WIDTHS: Dict[int, Tuple[int, ...]] = {
    1: (),
    2: (32,),
    3: (48, 16),
}

# [CLS] doc1 [SEP] doc2 [SEP] with 256 tokens per article
MAX_PAIR_LENGTH: int = 2 * 256 + 3

# Cross-validation
DEFAULT_FOLDS: int = 10

# Default translate-train arrangement: (origin, quantity, targets)
DEFAULT_PLAN_ROWS: List[Tuple[str, int, Tuple[str, ...]]] = [
    ("en-en", 401, ("ru-ru",)),
    ("en-en", 800, ("zh-zh", "zh-en")),
    ("en-en", 586, ("it-it", "es-en", "es-it")),
    ("pl-pl", 349, ("pl-en",)),
    ("de-en", 317, ("de-fr", "fr-fr")),
]
PIVOT_LANGUAGE: str = "en"

# Checkpoint container
CHECKPOINT_MAGIC: bytes = b"NSIM"
CHECKPOINT_VERSION: int = 1


def derive_seed(seed: int, name: str, *parts: Union[int, str]) -> int:
    """
    Derive an independent 64-bit sub-seed from a global seed.

    Args:
        seed: Global seed
        name: Component name ("split", "init", "dropout", "shuffle", "sampling", ...)
        parts: Extra discriminators (fold, epoch, step, ...)

    Returns:
        Non-negative 64-bit integer
    """
    key = "/".join([str(int(seed)), name] + [str(p) for p in parts])
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def canonical_json(payload: Any) -> str:
    """Serialize to canonical JSON (sorted keys, compact separators)."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class ModelConfig:
    """Shape and regularization settings of the reference cross-encoder."""

    vocab_size: int = VOCAB_SIZE
    embed_dim: int = 64
    num_layers: int = 2
    num_heads: int = 2
    ff_dim: int = 128
    dropout_p: float = 0.1
    max_positions: int = 520
    head_layers: int = 1
    head_activation: bool = True
    output_offset: float = SCORE_MIDPOINT

    def __post_init__(self) -> None:
        if self.vocab_size <= NUM_SPECIAL_IDS:
            raise ConfigError(f"vocab_size must exceed {NUM_SPECIAL_IDS}, got {self.vocab_size}")
        if self.embed_dim <= 0 or self.num_heads <= 0 or self.embed_dim % self.num_heads:
            raise ConfigError(
                f"embed_dim ({self.embed_dim}) must be divisible by num_heads ({self.num_heads})"
            )
        if self.num_layers < 0 or self.ff_dim <= 0:
            raise ConfigError("num_layers must be >= 0 and ff_dim > 0")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.max_positions < MAX_PAIR_LENGTH:
            raise ConfigError(f"max_positions must be >= {MAX_PAIR_LENGTH}")
        if self.head_layers not in HEAD_HIDDEN_WIDTHS:
            raise ConfigError(f"head_layers must be one of 1, 2, 3, got {self.head_layers}")

    @property
    def head_widths(self) -> Tuple[int, ...]:
        """Input/output widths of the head ladder, e.g. (d, 32, 7)."""
        return (self.embed_dim,) + HEAD_HIDDEN_WIDTHS[self.head_layers] + (NUM_DIMENSIONS,)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "ModelConfig":
        return cls(**payload)


@dataclass(frozen=True)
class LossConfig:
    """
    Multi-label weighting and adapted R-Drop settings.

    Attributes:
        overall_weight: Share w of the loss given to Overall; the other six share 1 - w
        rdrop_alpha: Weight alpha of the consistency term
        forwards: Number F of stochastic forward passes per sample
    """

    overall_weight: float = 1.0
    rdrop_alpha: float = 0.0
    forwards: int = 1

    def __post_init__(self) -> None:
        if not 0.0 <= self.overall_weight <= 1.0:
            raise ConfigError(f"overall_weight must lie in [0, 1], got {self.overall_weight}")
        if not 0.0 <= self.rdrop_alpha <= 1.0:
            raise ConfigError(f"rdrop_alpha must lie in [0, 1], got {self.rdrop_alpha}")
        if self.forwards not in (1, 2, 3):
            raise ConfigError(f"forwards must be 1, 2 or 3, got {self.forwards}")

    @property
    def effective_alpha(self) -> float:
        """A single forward has nothing to compare against."""
        return 0.0 if self.forwards == 1 else self.rdrop_alpha

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "LossConfig":
        return cls(**payload)


@dataclass(frozen=True)
class OptimizerConfig:
    """Adam with decoupled weight decay and a linear warmup/decay schedule."""

    learning_rate: float = 2e-5
    weight_decay: float = 1e-4
    warmup_rate: float = 0.1
    batch_size: int = 32
    epochs: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if not 0.0 <= self.warmup_rate <= 1.0:
            raise ConfigError("warmup_rate must lie in [0, 1]")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")

    def warmup_steps(self, total_steps: int) -> int:
        return int(round(self.warmup_rate * total_steps))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "OptimizerConfig":
        return cls(**payload)


@dataclass(frozen=True)
class RunConfig:
    """Everything a training run needs, stored as one canonical JSON file."""

    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    policy: str = DEFAULT_POLICY
    folds: int = DEFAULT_FOLDS
    seed: int = 42
    validate_on_augmented: bool = False

    def __post_init__(self) -> None:
        if self.policy not in TRUNCATION_PRESETS:
            raise ConfigError(
                f"unknown truncation preset {self.policy!r}; "
                f"expected one of {sorted(TRUNCATION_PRESETS)}"
            )
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model.to_dict(),
            "loss": self.loss.to_dict(),
            "optimizer": self.optimizer.to_dict(),
            "policy": self.policy,
            "folds": self.folds,
            "seed": self.seed,
            "validate_on_augmented": self.validate_on_augmented,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "RunConfig":
        known = {"model", "loss", "optimizer", "policy", "folds", "seed", "validate_on_augmented"}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown run config keys: {sorted(unknown)}")
        try:
            return cls(
                model=ModelConfig.from_dict(payload.get("model", {})),
                loss=LossConfig.from_dict(payload.get("loss", {})),
                optimizer=OptimizerConfig.from_dict(payload.get("optimizer", {})),
                policy=payload.get("policy", DEFAULT_POLICY),
                folds=int(payload.get("folds", DEFAULT_FOLDS)),
                seed=int(payload.get("seed", 42)),
                validate_on_augmented=bool(payload.get("validate_on_augmented", False)),
            )
        except TypeError as e:
            raise ConfigError(f"invalid run config: {e}") from e

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def save(self, filepath: Union[str, Path]) -> None:
        Path(filepath).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, filepath: Union[str, Path]) -> "RunConfig":
        try:
            payload = json.loads(Path(filepath).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{filepath}: not valid JSON ({e})") from e
        return cls.from_dict(payload)
