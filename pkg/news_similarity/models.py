"""
Reference cross-encoder for article-pair similarity regression.

A small pre-norm transformer encoder reads [CLS] doc1 [SEP] doc2 [SEP] as one sequence
and regresses seven scores from the final [CLS] vector. Forward and backward passes are
written out in numpy; ``forward_with_tape`` records everything ``backward`` needs,
including the dropout masks, so a gradient always belongs to the forward it came from.
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import ndtr

from .config import (
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
    NUM_DIMENSIONS,
    ModelConfig,
    canonical_json,
)
from .exceptions import DataError
from .tokenizer import EncodedPair

logger = logging.getLogger(__name__)

PredictionVector = np.ndarray

INIT_STD: float = 0.02
LN_EPS: float = 1e-5
_INV_SQRT_2PI: float = 1.0 / np.sqrt(2.0 * np.pi)


def parameter_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Names and shapes of all trainable tensors, in checkpoint order."""
    d, ff = config.embed_dim, config.ff_dim
    shapes: Dict[str, Tuple[int, ...]] = {
        "embed.token.weight": (config.vocab_size, d),
        "embed.position.weight": (config.max_positions, d),
    }
    for layer in range(config.num_layers):
        p = f"layers.{layer}."
        shapes[p + "ln1.gain"] = (d,)
        shapes[p + "ln1.bias"] = (d,)
        for proj in ("q", "k", "v", "out"):
            shapes[p + f"attn.{proj}.weight"] = (d, d)
            shapes[p + f"attn.{proj}.bias"] = (d,)
        shapes[p + "ln2.gain"] = (d,)
        shapes[p + "ln2.bias"] = (d,)
        shapes[p + "ff.in.weight"] = (d, ff)
        shapes[p + "ff.in.bias"] = (ff,)
        shapes[p + "ff.out.weight"] = (ff, d)
        shapes[p + "ff.out.bias"] = (d,)
    shapes["final_ln.gain"] = (d,)
    shapes["final_ln.bias"] = (d,)
    widths = config.head_widths
    for i in range(len(widths) - 1):
        shapes[f"head.{i}.weight"] = (widths[i], widths[i + 1])
        shapes[f"head.{i}.bias"] = (widths[i + 1],)
    return shapes


def parameter_names(config: ModelConfig) -> List[str]:
    return list(parameter_shapes(config))


def parameter_count(config: ModelConfig) -> int:
    return int(sum(np.prod(shape) for shape in parameter_shapes(config).values()))


@dataclass
class ModelParameters:
    """All trainable tensors of the cross-encoder, keyed by name."""

    config: ModelConfig
    tensors: Dict[str, np.ndarray]

    @property
    def dtype(self) -> np.dtype:
        return self.tensors["final_ln.gain"].dtype

    def copy(self) -> "ModelParameters":
        return ModelParameters(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> "ModelParameters":
        return ModelParameters(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()})

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))


@dataclass
class Gradients:
    """Gradients congruent to ModelParameters."""

    config: ModelConfig
    tensors: Dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, params: ModelParameters) -> "Gradients":
        return cls(params.config, {k: np.zeros_like(v) for k, v in params.tensors.items()})

    def scale(self, factor: float) -> "Gradients":
        for value in self.tensors.values():
            value *= factor
        return self

    def global_norm(self) -> float:
        total = sum(float(np.sum(g.astype(np.float64) ** 2)) for g in self.tensors.values())
        return float(np.sqrt(total))


def init_model(config: ModelConfig, seed: int) -> ModelParameters:
    """
    Initialize a model deterministically.

    Weights are drawn from normal(0, 0.02), biases are zero and layer-norm gains are one.

    Args:
        config: Validated model configuration
        seed: Initialization seed

    Returns:
        ModelParameters in float32
    """
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".gain"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        elif name.endswith(".bias"):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        else:
            tensors[name] = rng.normal(0.0, INIT_STD, size=shape).astype(np.float32)
    return ModelParameters(config, tensors)


class _Dropout:
    """Inverted dropout driven by one seeded generator; masks are drawn in forward order."""

    def __init__(self, p: float, seed: int):
        self.p = p
        self.rng = np.random.default_rng(seed) if p > 0 else None

    def mask(self, shape: Tuple[int, ...], dtype) -> Optional[np.ndarray]:
        if self.rng is None:
            return None
        keep = self.rng.random(shape) >= self.p
        return keep.astype(dtype) / dtype.type(1.0 - self.p)


def _apply(x: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    return x if mask is None else x * mask


def _layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray):
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = centered * inv
    return xhat * gain + bias, (xhat, inv)


def _layer_norm_backward(dy: np.ndarray, gain: np.ndarray, cache):
    xhat, inv = cache
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgain, dbias


def _gelu(x: np.ndarray):
    cdf = ndtr(x).astype(x.dtype, copy=False)
    return x * cdf, cdf


def _gelu_backward(dy: np.ndarray, x: np.ndarray, cdf: np.ndarray) -> np.ndarray:
    pdf = np.exp(-0.5 * x * x) * x.dtype.type(_INV_SQRT_2PI)
    return dy * (cdf + x * pdf)


@dataclass
class _LayerCache:
    h1: np.ndarray
    ln1: tuple
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    attn: np.ndarray
    context: np.ndarray
    attn_mask: Optional[np.ndarray]
    h2: np.ndarray
    ln2: tuple
    pre_act: np.ndarray
    cdf: np.ndarray
    act: np.ndarray
    ff_mask: Optional[np.ndarray]


@dataclass
class ForwardTape:
    """Opaque record of one forward pass, consumed by ``backward``."""

    params: ModelParameters
    ids: np.ndarray
    train_mode: bool
    dropout_seed: int
    output: np.ndarray
    embed_mask: Optional[np.ndarray] = None
    layers: List[_LayerCache] = field(default_factory=list)
    final_ln: Optional[tuple] = None
    head_inputs: List[np.ndarray] = field(default_factory=list)
    head_masks: List[Optional[np.ndarray]] = field(default_factory=list)
    head_pre_acts: List[np.ndarray] = field(default_factory=list)
    head_cdfs: List[Optional[np.ndarray]] = field(default_factory=list)


def _split_heads(x: np.ndarray, num_heads: int) -> np.ndarray:
    n, d = x.shape
    return x.reshape(n, num_heads, d // num_heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    h, n, dh = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * dh)


def _layer_forward(
    T: Dict[str, np.ndarray], p: str, x: np.ndarray, config: ModelConfig, drop: _Dropout
):
    h1, ln1 = _layer_norm(x, T[p + "ln1.gain"], T[p + "ln1.bias"])
    q = _split_heads(h1 @ T[p + "attn.q.weight"] + T[p + "attn.q.bias"], config.num_heads)
    k = _split_heads(h1 @ T[p + "attn.k.weight"] + T[p + "attn.k.bias"], config.num_heads)
    v = _split_heads(h1 @ T[p + "attn.v.weight"] + T[p + "attn.v.bias"], config.num_heads)

    scale = x.dtype.type(1.0 / np.sqrt(q.shape[-1]))
    scores = (q @ k.transpose(0, 2, 1)) * scale
    scores = scores - scores.max(axis=-1, keepdims=True)
    attn = np.exp(scores)
    attn /= attn.sum(axis=-1, keepdims=True)
    context = _merge_heads(attn @ v)

    out = context @ T[p + "attn.out.weight"] + T[p + "attn.out.bias"]
    attn_mask = drop.mask(out.shape, x.dtype)
    x1 = x + _apply(out, attn_mask)

    h2, ln2 = _layer_norm(x1, T[p + "ln2.gain"], T[p + "ln2.bias"])
    pre_act = h2 @ T[p + "ff.in.weight"] + T[p + "ff.in.bias"]
    act, cdf = _gelu(pre_act)
    ff = act @ T[p + "ff.out.weight"] + T[p + "ff.out.bias"]
    ff_mask = drop.mask(ff.shape, x.dtype)
    x2 = x1 + _apply(ff, ff_mask)

    cache = _LayerCache(
        h1, ln1, q, k, v, attn, context, attn_mask, h2, ln2, pre_act, cdf, act, ff_mask
    )
    return x2, cache


def _layer_backward(
    T: Dict[str, np.ndarray], G: Dict[str, np.ndarray], p: str, dx2: np.ndarray, c: _LayerCache
) -> np.ndarray:
    # feed-forward block
    dff = _apply(dx2, c.ff_mask)
    G[p + "ff.out.weight"] += c.act.T @ dff
    G[p + "ff.out.bias"] += dff.sum(axis=0)
    dpre = _gelu_backward(dff @ T[p + "ff.out.weight"].T, c.pre_act, c.cdf)
    G[p + "ff.in.weight"] += c.h2.T @ dpre
    G[p + "ff.in.bias"] += dpre.sum(axis=0)
    dh2 = dpre @ T[p + "ff.in.weight"].T
    dx_ln2, dgain, dbias = _layer_norm_backward(dh2, T[p + "ln2.gain"], c.ln2)
    G[p + "ln2.gain"] += dgain
    G[p + "ln2.bias"] += dbias
    dx1 = dx2 + dx_ln2

    # attention block
    dout = _apply(dx1, c.attn_mask)
    G[p + "attn.out.weight"] += c.context.T @ dout
    G[p + "attn.out.bias"] += dout.sum(axis=0)
    dcontext = _split_heads(dout @ T[p + "attn.out.weight"].T, c.q.shape[0])
    dattn = dcontext @ c.v.transpose(0, 2, 1)
    dv = c.attn.transpose(0, 2, 1) @ dcontext
    dscores = c.attn * (dattn - (dattn * c.attn).sum(axis=-1, keepdims=True))
    dscores *= dx1.dtype.type(1.0 / np.sqrt(c.q.shape[-1]))
    dq = dscores @ c.k
    dk = dscores.transpose(0, 2, 1) @ c.q

    dh1 = np.zeros_like(c.h1)
    for proj, grad in (("q", dq), ("k", dk), ("v", dv)):
        merged = _merge_heads(grad)
        G[p + f"attn.{proj}.weight"] += c.h1.T @ merged
        G[p + f"attn.{proj}.bias"] += merged.sum(axis=0)
        dh1 += merged @ T[p + f"attn.{proj}.weight"].T
    dx_ln1, dgain, dbias = _layer_norm_backward(dh1, T[p + "ln1.gain"], c.ln1)
    G[p + "ln1.gain"] += dgain
    G[p + "ln1.bias"] += dbias
    return dx1 + dx_ln1


def forward_with_tape(
    params: ModelParameters,
    pair: EncodedPair,
    train_mode: bool = False,
    dropout_seed: int = 0,
) -> Tuple[PredictionVector, ForwardTape]:
    """
    Run the encoder on one pair and keep the tape for ``backward``.

    Args:
        params: Model parameters (not modified)
        pair: Encoded article pair
        train_mode: Enables dropout
        dropout_seed: Sole source of dropout randomness

    Returns:
        Tuple of (seven predicted scores, tape)

    Raises:
        DataError: Sequence longer than max_positions or token id out of range
    """
    config, T = params.config, params.tensors
    ids = np.asarray(pair.ids, dtype=np.int64)
    n = len(ids)
    if n == 0:
        raise DataError("cannot encode an empty sequence")
    if n > config.max_positions:
        raise DataError(f"sequence length {n} exceeds max_positions {config.max_positions}")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise DataError(f"token ids must lie in [0, {config.vocab_size})")

    drop = _Dropout(config.dropout_p if train_mode else 0.0, dropout_seed)
    x = T["embed.token.weight"][ids] + T["embed.position.weight"][:n]
    embed_mask = drop.mask(x.shape, x.dtype)
    x = _apply(x, embed_mask)

    tape = ForwardTape(
        params, ids, train_mode, dropout_seed, output=np.empty(0), embed_mask=embed_mask
    )
    for layer in range(config.num_layers):
        x, cache = _layer_forward(T, f"layers.{layer}.", x, config, drop)
        tape.layers.append(cache)

    h, tape.final_ln = _layer_norm(x[:1], T["final_ln.gain"], T["final_ln.bias"])
    num_head = len(config.head_widths) - 1
    for i in range(num_head):
        mask = drop.mask(h.shape, h.dtype)
        h_in = _apply(h, mask)
        z = h_in @ T[f"head.{i}.weight"] + T[f"head.{i}.bias"]
        tape.head_inputs.append(h_in)
        tape.head_masks.append(mask)
        tape.head_pre_acts.append(z)
        if i < num_head - 1 and config.head_activation:
            h, cdf = _gelu(z)
            tape.head_cdfs.append(cdf)
        else:
            h = z
            tape.head_cdfs.append(None)

    output = h[0] + h.dtype.type(config.output_offset)
    tape.output = output
    return output, tape


def forward(
    params: ModelParameters,
    pair: EncodedPair,
    train_mode: bool = False,
    dropout_seed: int = 0,
) -> PredictionVector:
    """Predict the seven scores of one pair; deterministic when train_mode is False."""
    output, _ = forward_with_tape(params, pair, train_mode, dropout_seed)
    return output


def backward(
    tape: ForwardTape,
    loss_gradient: np.ndarray,
    into: Optional[Gradients] = None,
) -> Gradients:
    """
    Back-propagate dLoss/dPrediction through the forward pass recorded in ``tape``.

    Args:
        tape: Tape returned by ``forward_with_tape``
        loss_gradient: Gradient of the loss w.r.t. the seven outputs
        into: Accumulate into these gradients instead of allocating new ones

    Returns:
        Gradients w.r.t. every parameter (``into`` when given)
    """
    params = tape.params
    config, T = params.config, params.tensors
    grads = into if into is not None else Gradients.zeros_like(params)
    G = grads.tensors

    dz = np.asarray(loss_gradient, dtype=params.dtype).reshape(1, NUM_DIMENSIONS)
    for i in reversed(range(len(tape.head_inputs))):
        G[f"head.{i}.weight"] += tape.head_inputs[i].T @ dz
        G[f"head.{i}.bias"] += dz[0]
        dh = _apply(dz @ T[f"head.{i}.weight"].T, tape.head_masks[i])
        if i > 0:
            cdf = tape.head_cdfs[i - 1]
            dz = dh if cdf is None else _gelu_backward(dh, tape.head_pre_acts[i - 1], cdf)
        else:
            dz = dh

    dcls, dgain, dbias = _layer_norm_backward(dz, T["final_ln.gain"], tape.final_ln)
    G["final_ln.gain"] += dgain
    G["final_ln.bias"] += dbias

    n = len(tape.ids)
    dx = np.zeros((n, config.embed_dim), dtype=params.dtype)
    dx[0] = dcls[0]
    for layer in reversed(range(config.num_layers)):
        dx = _layer_backward(T, G, f"layers.{layer}.", dx, tape.layers[layer])

    dx = _apply(dx, tape.embed_mask)
    np.add.at(G["embed.token.weight"], tape.ids, dx)
    G["embed.position.weight"][:n] += dx
    return grads


def predict(params: ModelParameters, pairs: Sequence[EncodedPair]) -> np.ndarray:
    """Eval-mode predictions, one row of seven scores per pair."""
    if not pairs:
        return np.zeros((0, NUM_DIMENSIONS), dtype=np.float64)
    return np.stack([forward(params, pair).astype(np.float64) for pair in pairs])


def save_checkpoint(params: ModelParameters, filepath: Union[str, Path]) -> None:
    """
    Write a checkpoint.

    Layout: magic "NSIM", uint16 format version, uint32 byte length of the canonical
    ModelConfig JSON, the JSON itself, then every tensor of ``parameter_names`` in order
    as little-endian float32. All integers are little-endian.
    """
    header = canonical_json(params.config.to_dict()).encode("utf-8")
    with open(filepath, "wb") as fout:
        fout.write(CHECKPOINT_MAGIC)
        fout.write(struct.pack("<HI", CHECKPOINT_VERSION, len(header)))
        fout.write(header)
        for name in parameter_names(params.config):
            fout.write(np.ascontiguousarray(params.tensors[name], dtype="<f4").tobytes())


def load_checkpoint(filepath: Union[str, Path]) -> ModelParameters:
    """Read a checkpoint written by ``save_checkpoint``."""
    data = Path(filepath).read_bytes()
    magic_len = len(CHECKPOINT_MAGIC)
    if data[:magic_len] != CHECKPOINT_MAGIC:
        raise DataError(f"{filepath}: not a checkpoint (bad magic)")
    offset = magic_len
    version, header_len = struct.unpack_from("<HI", data, offset)
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{filepath}: unsupported checkpoint version {version}")
    offset += struct.calcsize("<HI")
    config = ModelConfig.from_dict(json.loads(data[offset : offset + header_len].decode("utf-8")))
    offset += header_len

    tensors = {}
    for name, shape in parameter_shapes(config).items():
        count = int(np.prod(shape))
        if offset + 4 * count > len(data):
            raise DataError(f"{filepath}: truncated at tensor {name}")
        raw = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        tensors[name] = raw.reshape(shape).astype(np.float32)
        offset += 4 * count
    if offset != len(data):
        raise DataError(f"{filepath}: {len(data) - offset} trailing bytes")
    return ModelParameters(config, tensors)
