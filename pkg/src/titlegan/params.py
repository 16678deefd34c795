"""Named parameter storage, first-order optimizers, checkpoints and RNG.

Randomness comes from numpy's Philox bit generator, a counter-based PRNG:
``make_rng(seed)`` streams are reproducible across platforms, and
``derive_seed`` folds stream ids into child seeds with splitmix64 so every
sampling site can be given an independent deterministic stream.
"""

from __future__ import annotations

import struct

import numpy as np

from .tensor import Tensor

_MASK64 = (1 << 64) - 1

CHECKPOINT_MAGIC = b"TGCP"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


def derive_seed(seed: int, *ids: int) -> int:
    """Deterministically mix stream ids into a 64-bit child seed (splitmix64)."""
    x = seed & _MASK64
    for i in ids:
        x = (x + 0x9E3779B97F4A7C15 + (i & _MASK64)) & _MASK64
        x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
        x = x ^ (x >> 31)
    return x


def make_rng(seed: int, *ids: int) -> np.random.Generator:
    """Counter-based generator for the given seed and optional stream ids."""
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, *ids)))


def init_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(float(fan_in))
    return rng.uniform(-bound, bound, size=shape)


class ParamStore:
    """Insertion-ordered map of parameter name -> Tensor, plus optimizer state."""

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self.opt_state: dict[str, dict] = {}

    def add(self, name: str, array) -> Tensor:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        if "/" in name:
            raise ValueError(f"parameter name {name!r} may not contain '/'")
        t = Tensor(np.array(array, dtype=np.float64))
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    @property
    def tensors(self) -> dict:
        return self._tensors

    def n_values(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def state_bytes(self) -> bytes:
        """Concatenated raw values; handy for change/identity assertions."""
        return b"".join(t.data.tobytes() for t in self._tensors.values())


def clip_global_norm(grads: dict, max_norm: float):
    """Scale the whole gradient dict so its global L2 norm is <= max_norm.

    Returns (grads, pre-clip norm). max_norm <= 0 disables clipping.
    """
    sq = 0.0
    for g in grads.values():
        sq += float(np.sum(g * g))
    norm = float(np.sqrt(sq))
    if max_norm is not None and max_norm > 0 and norm > max_norm:
        factor = max_norm / norm
        grads = {k: g * factor for k, g in grads.items()}
    return grads, norm


def _check_finite(name: str, grad: np.ndarray):
    if not np.all(np.isfinite(grad)):
        raise ValueError(f"non-finite gradient for parameter {name!r}")


class SGD:
    """Plain gradient descent: p <- p - lr * g."""

    def __init__(self, lr: float):
        self.lr = float(lr)

    def step(self, store: ParamStore, grads: dict):
        for name, g in grads.items():
            _check_finite(name, g)
            p = store[name]
            p.data = p.data - self.lr * g


class Adam:
    """Adam with bias correction; moment accumulators live in the store."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self, store: ParamStore, grads: dict):
        for name, g in grads.items():
            _check_finite(name, g)
            p = store[name]
            state = store.opt_state.setdefault(
                name, {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data), "t": 0}
            )
            state["t"] += 1
            state["m"] = self.beta1 * state["m"] + (1 - self.beta1) * g
            state["v"] = self.beta2 * state["v"] + (1 - self.beta2) * g * g
            mhat = state["m"] / (1 - self.beta1 ** state["t"])
            vhat = state["v"] / (1 - self.beta2 ** state["t"])
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(kind: str, lr: float):
    if kind == "sgd":
        return SGD(lr)
    if kind == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {kind!r}")


def save_checkpoint(path, groups: dict, seed: int, step: int):
    """Write a versioned binary checkpoint.

    Layout: magic, u32 version, u64 seed, u64 step, u32 count, then per
    parameter a 'group/name' utf-8 string, u8 ndim, u64 dims, and the raw
    little-endian float64 payload.
    """
    entries = []
    for group, store in groups.items():
        for name, t in store.items():
            entries.append((f"{group}/{name}", t.data))
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQQI", CHECKPOINT_VERSION, seed & _MASK64,
                             step & _MASK64, len(entries)))
        for full_name, data in entries:
            raw = full_name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns ({group: ParamStore}, seed, step)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, seed, step, count = struct.unpack_from("<IQQI", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    offset = 4 + struct.calcsize("<IQQI")
    groups: dict[str, ParamStore] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        full_name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}Q", blob, offset) if ndim else ()
        offset += 8 * ndim
        n = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(shape)
        offset += 8 * n
        group, _, name = full_name.partition("/")
        if not name:
            raise CheckpointError(f"{path}: parameter {full_name!r} lacks a group prefix")
        groups.setdefault(group, ParamStore()).add(name, data.copy())
    if offset != len(blob):
        raise CheckpointError(f"{path}: trailing bytes after last parameter")
    return groups, seed, step
