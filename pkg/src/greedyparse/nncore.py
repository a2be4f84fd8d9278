"""Dense numeric kernel: parameters, layers, dropout, SGD, gradient checks.

Everything is plain numpy with hand-written backward passes; there is no
autodiff. Parameters live in :class:`ModelParams` and gradients accumulate
in :class:`GradAccumulator`, which keeps lookup-table gradients sparse
(per touched column).

Precision is selectable: float64 for gradient checking and reproducible
experiments, float32 for faster training.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import GreedyParseError
from .vocab import TagSet


class NNError(GreedyParseError):
    pass


class ShapeMismatch(NNError):
    pass


class IndexOutOfRange(NNError):
    pass


class NonFiniteValue(NNError):
    pass


class MissingForwardCache(NNError):
    pass


def _as_dtype(precision) -> np.dtype:
    if precision in (np.float64, "float64", "double", 8):
        return np.dtype(np.float64)
    if precision in (np.float32, "float32", "single", 4):
        return np.dtype(np.float32)
    raise NNError(f"unsupported precision {precision!r}")


@dataclass
class ModelParams:
    """All trainable tensors.

    word_table   (D, n_words)        word embeddings, one column per word
    tag_table    (T, n_pos+n_labels) embeddings for POS tags and parse labels
    compose      {k: (D, k*(D+T))}   one composition matrix per arity k
    m1           (H, K*(D+T))        tagger hidden layer
    m2           (n_bioes, H)        tagger output layer
    pad          (D+T,)              learned padding slot for window edges

    ``p_drop`` is the embedding dropout rate the model was trained with;
    inference rescales lookup outputs by (1 - p_drop).
    """

    word_table: np.ndarray
    tag_table: np.ndarray
    compose: dict[int, np.ndarray]
    m1: np.ndarray
    m2: np.ndarray
    pad: np.ndarray
    p_drop: float = 0.0

    @property
    def dim_word(self) -> int:
        return self.word_table.shape[0]

    @property
    def dim_tag(self) -> int:
        return self.tag_table.shape[0]

    @property
    def dim_input(self) -> int:
        """Size of one constituent slot: word/node vector plus tag vector."""
        return self.dim_word + self.dim_tag

    @property
    def hidden(self) -> int:
        return self.m1.shape[0]

    @property
    def window(self) -> int:
        return self.m1.shape[1] // self.dim_input

    @property
    def max_arity(self) -> int:
        return max(self.compose)

    @property
    def n_bioes(self) -> int:
        return self.m2.shape[0]

    @property
    def dtype(self) -> np.dtype:
        return self.word_table.dtype

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        out = [
            ("word_table", self.word_table),
            ("tag_table", self.tag_table),
            ("m1", self.m1),
            ("m2", self.m2),
            ("pad", self.pad),
        ]
        for k in sorted(self.compose):
            out.append((f"compose_{k}", self.compose[k]))
        return out


def init_params(
    tagset: TagSet,
    dim_word: int,
    dim_tag: int,
    hidden: int,
    window: int,
    max_arity: int,
    rng: np.random.Generator,
    p_drop: float = 0.0,
    precision="float64",
    word_init: np.ndarray | None = None,
) -> ModelParams:
    """Random initialization: layers uniform in +-1/sqrt(fan_in), tables in +-0.1.

    ``word_init`` replaces the random word table (e.g. pretrained
    embeddings); it must already have shape (dim_word, n_words).
    """
    if window % 2 == 0 or window < 1:
        raise NNError(f"window size must be odd and positive, got {window}")
    dtype = _as_dtype(precision)
    d_in = dim_word + dim_tag

    def layer(rows: int, cols: int) -> np.ndarray:
        bound = 1.0 / np.sqrt(cols)
        return rng.uniform(-bound, bound, size=(rows, cols)).astype(dtype)

    def table(rows: int, cols: int) -> np.ndarray:
        return rng.uniform(-0.1, 0.1, size=(rows, cols)).astype(dtype)

    # drawn even when word_init replaces it, so the other tensors come out
    # identical with and without pretrained vectors
    word_table = table(dim_word, tagset.n_words)
    if word_init is not None:
        if word_init.shape != (dim_word, tagset.n_words):
            raise ShapeMismatch(
                f"word_init has shape {word_init.shape}, expected {(dim_word, tagset.n_words)}"
            )
        word_table = word_init.astype(dtype)
    tag_table = table(dim_tag, tagset.n_tags)
    compose = {k: layer(dim_word, k * d_in) for k in range(1, max_arity + 1)}
    m1 = layer(hidden, window * d_in)
    m2 = layer(tagset.n_bioes, hidden)
    pad = rng.uniform(-0.1, 0.1, size=d_in).astype(dtype)
    return ModelParams(word_table, tag_table, compose, m1, m2, pad, p_drop=p_drop)


# ---------------------------------------------------------------------------
# elementary operations


def lookup(table: np.ndarray, index: int) -> np.ndarray:
    """Copy of column ``index`` of a lookup table."""
    if not 0 <= index < table.shape[1]:
        raise IndexOutOfRange(f"index {index} outside table with {table.shape[1]} columns")
    return table[:, index].copy()


def affine(matrix: np.ndarray, vec: np.ndarray) -> np.ndarray:
    if matrix.shape[1] != vec.shape[0]:
        raise ShapeMismatch(f"matrix {matrix.shape} cannot multiply vector {vec.shape}")
    return matrix @ vec


def affine_tanh(matrix: np.ndarray, vec: np.ndarray) -> np.ndarray:
    return np.tanh(affine(matrix, vec))


def dropout_mask(
    vec: np.ndarray, p_drop: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Zero each element with probability ``p_drop``; returns (output, mask)."""
    if not 0.0 <= p_drop < 1.0:
        raise NNError(f"dropout probability must be in [0, 1), got {p_drop}")
    if p_drop == 0.0:
        mask = np.ones_like(vec)
    else:
        mask = (rng.random(vec.shape) >= p_drop).astype(vec.dtype)
    return vec * mask, mask


def dropout_rescale_eval(vec: np.ndarray, p_drop: float) -> np.ndarray:
    """Inference-time counterpart of dropout: scale by the keep probability."""
    if p_drop == 0.0:
        return vec
    return vec * (1.0 - p_drop)


def sgd_update(param: np.ndarray, grad: np.ndarray, base_lr: float, fan_in: int) -> None:
    """In-place step ``param -= (base_lr / fan_in) * grad``.

    Matrix layers pass their input size as ``fan_in``; lookup-table
    columns and the padding vector use fan_in = 1.
    """
    if param.shape != grad.shape:
        raise ShapeMismatch(f"param {param.shape} vs grad {grad.shape}")
    param -= (base_lr / fan_in) * grad


# ---------------------------------------------------------------------------
# gradient accumulation


@dataclass
class GradAccumulator:
    """Gradients mirroring :class:`ModelParams`, sparse over table columns."""

    params: ModelParams
    word_cols: dict[int, np.ndarray] = field(default_factory=dict)
    tag_cols: dict[int, np.ndarray] = field(default_factory=dict)
    compose: dict[int, np.ndarray] = field(default_factory=dict)
    m1: np.ndarray | None = None
    m2: np.ndarray | None = None
    pad: np.ndarray | None = None

    def add_word_col(self, index: int, grad: np.ndarray) -> None:
        slot = self.word_cols.get(index)
        if slot is None:
            self.word_cols[index] = grad.copy()
        else:
            slot += grad

    def add_tag_col(self, index: int, grad: np.ndarray) -> None:
        slot = self.tag_cols.get(index)
        if slot is None:
            self.tag_cols[index] = grad.copy()
        else:
            slot += grad

    def add_compose(self, arity: int, grad: np.ndarray) -> None:
        slot = self.compose.get(arity)
        if slot is None:
            self.compose[arity] = grad.copy()
        else:
            slot += grad

    def add_m1(self, grad: np.ndarray) -> None:
        if self.m1 is None:
            self.m1 = grad.copy()
        else:
            self.m1 += grad

    def add_m2(self, grad: np.ndarray) -> None:
        if self.m2 is None:
            self.m2 = grad.copy()
        else:
            self.m2 += grad

    def add_pad(self, grad: np.ndarray) -> None:
        if self.pad is None:
            self.pad = grad.copy()
        else:
            self.pad += grad

    def apply(self, base_lr: float) -> None:
        """SGD step with the learning rate scaled by each layer's fan-in."""
        p = self.params
        d_in = p.dim_input
        for k, grad in self.compose.items():
            sgd_update(p.compose[k], grad, base_lr, k * d_in)
        if self.m1 is not None:
            sgd_update(p.m1, self.m1, base_lr, p.window * d_in)
        if self.m2 is not None:
            sgd_update(p.m2, self.m2, base_lr, p.hidden)
        if self.pad is not None:
            sgd_update(p.pad, self.pad, base_lr, 1)
        for index, grad in self.word_cols.items():
            p.word_table[:, index] -= base_lr * grad
        for index, grad in self.tag_cols.items():
            p.tag_table[:, index] -= base_lr * grad


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(
    func,
    x0: np.ndarray,
    analytic: np.ndarray,
    eps: float = 1e-5,
) -> float:
    """Max relative error between ``analytic`` and central differences of ``func``.

    ``func`` maps a flat float64 vector to a scalar. Use small fixtures:
    the cost is two evaluations per coordinate.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    analytic = np.asarray(analytic, dtype=np.float64)
    if x0.shape != analytic.shape:
        raise ShapeMismatch(f"point {x0.shape} vs gradient {analytic.shape}")
    worst = 0.0
    for i in range(x0.size):
        x = x0.copy()
        x[i] += eps
        hi = func(x)
        x[i] -= 2 * eps
        lo = func(x)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NonFiniteValue(f"function not finite near coordinate {i}")
        numeric = (hi - lo) / (2 * eps)
        denom = max(abs(numeric), abs(analytic[i]), 1e-6)
        worst = max(worst, abs(numeric - analytic[i]) / denom)
    return worst


# ---------------------------------------------------------------------------
# model file format
#
# header:  magic "GPNMODEL", u32 version, u8 precision (4 or 8),
#          f8 p_drop, u32 tensor count
# tensor:  u16 name length, name utf-8, u32 rows, u32 cols (0 for vectors),
#          raw little-endian values, row-major

_MAGIC = b"GPNMODEL"
_VERSION = 1


def save_model(params: ModelParams, path) -> None:
    dtype = params.dtype
    precision = dtype.itemsize
    tensors = params.named_tensors()
    with open(path, "wb") as handle:
        handle.write(_MAGIC)
        handle.write(struct.pack("<IBd", _VERSION, precision, params.p_drop))
        handle.write(struct.pack("<I", len(tensors)))
        for name, tensor in tensors:
            encoded = name.encode("utf-8")
            handle.write(struct.pack("<H", len(encoded)))
            handle.write(encoded)
            if tensor.ndim == 1:
                rows, cols = tensor.shape[0], 0
            else:
                rows, cols = tensor.shape
            handle.write(struct.pack("<II", rows, cols))
            handle.write(np.ascontiguousarray(tensor, dtype=dtype.newbyteorder("<")).tobytes())


def load_model(path) -> ModelParams:
    with open(path, "rb") as handle:
        magic = handle.read(len(_MAGIC))
        if magic != _MAGIC:
            raise NNError(f"{path}: not a model file (bad magic {magic!r})")
        version, precision, p_drop = struct.unpack("<IBd", handle.read(13))
        if version != _VERSION:
            raise NNError(f"{path}: unsupported model format version {version}")
        dtype = np.dtype("<f8") if precision == 8 else np.dtype("<f4")
        (count,) = struct.unpack("<I", handle.read(4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", handle.read(2))
            name = handle.read(name_len).decode("utf-8")
            rows, cols = struct.unpack("<II", handle.read(8))
            n_values = rows * (cols if cols else 1)
            raw = handle.read(n_values * dtype.itemsize)
            if len(raw) != n_values * dtype.itemsize:
                raise NNError(f"{path}: truncated tensor {name!r}")
            values = np.frombuffer(raw, dtype=dtype).copy()
            tensors[name] = values if cols == 0 else values.reshape(rows, cols)
    try:
        compose = {
            int(name.split("_")[1]): tensor
            for name, tensor in tensors.items()
            if name.startswith("compose_")
        }
        return ModelParams(
            tensors["word_table"],
            tensors["tag_table"],
            compose,
            tensors["m1"],
            tensors["m2"],
            tensors["pad"],
            p_drop=p_drop,
        )
    except KeyError as exc:
        raise NNError(f"{path}: missing tensor {exc}") from None
