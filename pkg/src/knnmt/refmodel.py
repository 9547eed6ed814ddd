"""Small trainable encoder-decoder used as the base translation model.

The encoder is a mean of source embeddings; the decoder is a single
recurrent cell queried one step at a time, so decoding strategies and
datastore construction only ever talk to the per-step interface. Residual
bottleneck adapters can be inserted before the output projection and
trained with the base parameters frozen. Gradients are written out by
hand, which keeps the whole model checkable against finite differences.
"""

from __future__ import annotations

import hashlib
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .core import BOS_ID, EOS_ID, ParallelCorpus, Sentence, SentencePair

BASE_PARAM_NAMES = ("E", "W_c", "W_y", "W_h", "b", "U", "b_o")
CHECKPOINT_MAGIC = b"RMDL"
CHECKPOINT_VERSION = 1


class StepModel(ABC):
    """Per-step decoding interface.

    encode() turns a source sentence into a fixed context; step() consumes
    one previous token and returns the new hidden state, the distribution
    over the vocabulary, and the recurrent state to carry forward.
    """

    @abstractmethod
    def encode(self, source: Sentence) -> Any: ...

    @abstractmethod
    def initial_state(self) -> Any: ...

    @abstractmethod
    def step(
        self, context: Any, state: Any, prev_token: int
    ) -> tuple[np.ndarray, np.ndarray, Any]: ...

    @abstractmethod
    def hidden_dim(self) -> int: ...


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


@dataclass
class RefModelParams:
    E: np.ndarray  # (V, d_e) shared source/target embeddings
    W_c: np.ndarray  # (d, d_e)
    W_y: np.ndarray  # (d, d_e)
    W_h: np.ndarray  # (d, d)
    b: np.ndarray  # (d,)
    U: np.ndarray  # (V, d)
    b_o: np.ndarray  # (V,)

    @property
    def embed_dim(self) -> int:
        return self.E.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W_h.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.E.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in BASE_PARAM_NAMES}


def init_params(
    vocab_size: int, embed_dim: int = 32, hidden_dim: int = 64, seed: int = 0
) -> RefModelParams:
    """Uniform [-0.1, 0.1] init from a PCG64 stream; array creation order is
    fixed (E, W_c, W_y, W_h, b, U, b_o) so a seed pins every weight."""
    rng = np.random.default_rng(seed)

    def u(*shape: int) -> np.ndarray:
        return rng.uniform(-0.1, 0.1, size=shape)

    return RefModelParams(
        E=u(vocab_size, embed_dim),
        W_c=u(hidden_dim, embed_dim),
        W_y=u(hidden_dim, embed_dim),
        W_h=u(hidden_dim, hidden_dim),
        b=u(hidden_dim),
        U=u(vocab_size, hidden_dim),
        b_o=u(vocab_size),
    )


@dataclass
class AdapterParams:
    """Residual bottleneck: h + W_up @ relu(W_down @ h). W_up starts at zero
    so a fresh adapter is an exact identity."""

    W_down: np.ndarray  # (r, d)
    W_up: np.ndarray  # (d, r)

    @property
    def rank(self) -> int:
        return self.W_down.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"A.W_down": self.W_down, "A.W_up": self.W_up}


def init_adapter(rank: int, hidden_dim: int, seed: int = 0) -> AdapterParams:
    rng = np.random.default_rng(seed)
    return AdapterParams(
        W_down=rng.uniform(-0.1, 0.1, size=(rank, hidden_dim)),
        W_up=np.zeros((hidden_dim, rank)),
    )


class RefModel(StepModel):
    def __init__(self, params: RefModelParams, adapter_rank: int = 8):
        self.params = params
        self.adapter_rank = adapter_rank
        self.adapters: dict[str, AdapterParams] = {}
        self.active_adapter: str | None = None

    def hidden_dim(self) -> int:
        return self.params.hidden_dim

    def add_adapter(self, tag: str, seed: int = 0) -> AdapterParams:
        if tag in self.adapters:
            raise ValueError(f"adapter {tag!r} already exists")
        adapter = init_adapter(self.adapter_rank, self.params.hidden_dim, seed)
        self.adapters[tag] = adapter
        return adapter

    def set_active_adapter(self, tag: str | None) -> None:
        if tag is not None and tag not in self.adapters:
            raise KeyError(f"no adapter {tag!r}; have {sorted(self.adapters)}")
        self.active_adapter = tag

    def _adapter(self) -> AdapterParams | None:
        return self.adapters[self.active_adapter] if self.active_adapter else None

    def encode(self, source: Sentence) -> np.ndarray:
        if not source.token_ids:
            raise ValueError("cannot encode an empty source")
        return self.params.E[list(source.token_ids)].mean(axis=0)

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.params.hidden_dim)

    def step(
        self, context: np.ndarray, state: np.ndarray, prev_token: int
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        p = self.params
        if context.shape != (p.embed_dim,):
            raise ValueError(f"context shape {context.shape}, want ({p.embed_dim},)")
        if state.shape != (p.hidden_dim,):
            raise ValueError(f"state shape {state.shape}, want ({p.hidden_dim},)")
        if not 0 <= prev_token < p.vocab_size:
            raise ValueError(f"token id {prev_token} outside vocabulary")
        pre = np.tanh(p.W_c @ context + p.W_y @ p.E[prev_token] + p.W_h @ state + p.b)
        adapter = self._adapter()
        if adapter is not None:
            z = adapter.W_down @ pre
            h = pre + adapter.W_up @ np.maximum(z, 0.0)
        else:
            h = pre
        dist = softmax(p.U @ h + p.b_o)
        return h, dist, h


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 10
    batch_size: int = 8
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        # lr 0 is allowed: one epoch at lr 0 must leave params untouched
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")


def _pair_grads(
    model: RefModel, pair_src: Sentence, pair_tgt: Sentence
) -> tuple[float, int, dict[str, np.ndarray]]:
    """Summed next-token NLL over the target (EOS appended) and its gradient
    with respect to every parameter array, adapters included when active."""
    p = model.params
    adapter = model._adapter()
    context = model.encode(pair_src)
    targets = list(pair_tgt.token_ids) + [EOS_ID]
    prevs = [BOS_ID] + targets[:-1]

    states = [model.initial_state()]
    pres: list[np.ndarray] = []
    zs: list[np.ndarray] = []
    hs: list[np.ndarray] = []
    dists: list[np.ndarray] = []
    loss = 0.0
    for prev, tgt in zip(prevs, targets):
        pre = np.tanh(
            p.W_c @ context + p.W_y @ p.E[prev] + p.W_h @ states[-1] + p.b
        )
        if adapter is not None:
            z = adapter.W_down @ pre
            h = pre + adapter.W_up @ np.maximum(z, 0.0)
            zs.append(z)
        else:
            h = pre
        dist = softmax(p.U @ h + p.b_o)
        loss -= float(np.log(dist[tgt]))
        pres.append(pre)
        hs.append(h)
        dists.append(dist)
        states.append(h)

    grads = {name: np.zeros_like(arr) for name, arr in p.arrays().items()}
    if adapter is not None:
        grads.update({name: np.zeros_like(arr) for name, arr in adapter.arrays().items()})

    d_context = np.zeros(p.embed_dim)
    d_state = np.zeros(p.hidden_dim)
    for t in range(len(targets) - 1, -1, -1):
        d_logits = dists[t].copy()
        d_logits[targets[t]] -= 1.0
        grads["U"] += np.outer(d_logits, hs[t])
        grads["b_o"] += d_logits
        dh = p.U.T @ d_logits + d_state
        if adapter is not None:
            relu_z = np.maximum(zs[t], 0.0)
            grads["A.W_up"] += np.outer(dh, relu_z)
            dz = (adapter.W_up.T @ dh) * (zs[t] > 0)
            grads["A.W_down"] += np.outer(dz, pres[t])
            d_pre = dh + adapter.W_down.T @ dz
        else:
            d_pre = dh
        da = (1.0 - pres[t] ** 2) * d_pre
        grads["W_c"] += np.outer(da, context)
        grads["W_y"] += np.outer(da, p.E[prevs[t]])
        grads["W_h"] += np.outer(da, states[t])
        grads["b"] += da
        grads["E"][prevs[t]] += p.W_y.T @ da
        d_context += p.W_c.T @ da
        d_state = p.W_h.T @ da

    src_ids = list(pair_src.token_ids)
    for sid in src_ids:
        grads["E"][sid] += d_context / len(src_ids)
    return loss, len(targets), grads


def _trainable_arrays(model: RefModel, trainable: str) -> dict[str, np.ndarray]:
    if trainable == "all":
        arrays = dict(model.params.arrays())
        if model.active_adapter is not None:
            arrays.update(model.adapters[model.active_adapter].arrays())
        return arrays
    if trainable == "adapters_only":
        if model.active_adapter is None:
            raise ValueError("adapters_only training needs an active adapter")
        return dict(model.adapters[model.active_adapter].arrays())
    raise ValueError(f"trainable must be 'all' or 'adapters_only', got {trainable!r}")


def train(
    model: RefModel,
    corpus: ParallelCorpus,
    cfg: TrainConfig,
    trainable: str = "all",
) -> list[float]:
    """Minibatch SGD on mean next-token NLL; returns per-epoch mean loss.

    The config seed drives only the shuffle order, so a fixed seed makes the
    whole run bit-reproducible. With trainable='adapters_only' every base
    array is left bit-identical. A non-finite loss aborts immediately.
    """
    if len(corpus) == 0:
        raise ValueError("training corpus is empty")
    arrays = _trainable_arrays(model, trainable)
    rng = np.random.default_rng(cfg.seed)
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(corpus.pairs))
        epoch_loss = 0.0
        epoch_tokens = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            sums = {name: np.zeros_like(arr) for name, arr in arrays.items()}
            batch_loss = 0.0
            batch_tokens = 0
            for idx in batch:
                pair = corpus.pairs[idx]
                loss, n_tok, grads = _pair_grads(model, pair.source, pair.target)
                batch_loss += loss
                batch_tokens += n_tok
                for name in sums:
                    sums[name] += grads[name]
            if not np.isfinite(batch_loss):
                raise RuntimeError(
                    f"non-finite loss {batch_loss} in epoch {epoch}, "
                    f"batch starting at {start}; aborting"
                )
            epoch_loss += batch_loss
            epoch_tokens += batch_tokens
            norm = float(
                np.sqrt(sum(float((g**2).sum()) for g in sums.values()))
            ) / batch_tokens
            scale = cfg.learning_rate / batch_tokens
            if norm > cfg.clip_norm:
                scale *= cfg.clip_norm / norm
            for name, arr in arrays.items():
                arr -= scale * sums[name]
        losses.append(epoch_loss / epoch_tokens)
    return losses


def grad_check(
    model: RefModel,
    pair: SentencePair,
    epsilon: float = 1e-4,
    samples_per_array: int = 8,
    seed: int = 0,
    grads: dict[str, np.ndarray] | None = None,
) -> float:
    """Max relative error between analytic gradients and central finite
    differences over sampled coordinates of every parameter array.

    Pass `grads` to check a supplied gradient (e.g. one with an injected
    fault) instead of the freshly computed one.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError("epsilon must be in [1e-6, 1e-3]")
    if grads is None:
        _, _, grads = _pair_grads(model, pair.source, pair.target)
    arrays = dict(model.params.arrays())
    adapter = model._adapter()
    if adapter is not None:
        arrays.update(adapter.arrays())

    def loss_of_current() -> float:
        loss, _, _ = _pair_grads(model, pair.source, pair.target)
        return loss

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, arr in arrays.items():
        n = min(samples_per_array, arr.size)
        for flat_i in rng.choice(arr.size, size=n, replace=False):
            idx = np.unravel_index(flat_i, arr.shape)
            orig = arr[idx]
            arr[idx] = orig + epsilon
            up = loss_of_current()
            arr[idx] = orig - epsilon
            down = loss_of_current()
            arr[idx] = orig
            fd = (up - down) / (2.0 * epsilon)
            analytic = float(grads[name][idx])
            err = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-6)
            worst = max(worst, err)
    return worst


def base_param_checksum(model: RefModel) -> str:
    """Hex digest over the base arrays, for freeze verification."""
    digest = hashlib.sha256()
    for name in BASE_PARAM_NAMES:
        digest.update(np.ascontiguousarray(getattr(model.params, name)).tobytes())
    return digest.hexdigest()


def save_checkpoint(model: RefModel, path: str | Path) -> None:
    """Binary checkpoint: magic, version, dims, base arrays as little-endian
    float64 row-major, then tagged adapter blocks sorted by tag."""
    p = model.params
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += struct.pack(
        "<5I", CHECKPOINT_VERSION, p.embed_dim, p.hidden_dim, p.vocab_size,
        model.adapter_rank,
    )
    for name in BASE_PARAM_NAMES:
        out += np.ascontiguousarray(getattr(p, name), dtype="<f8").tobytes()
    out += struct.pack("<I", len(model.adapters))
    for tag in sorted(model.adapters):
        adapter = model.adapters[tag]
        raw = tag.encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw
        out += np.ascontiguousarray(adapter.W_down, dtype="<f8").tobytes()
        out += np.ascontiguousarray(adapter.W_up, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path: str | Path) -> RefModel:
    blob = Path(path).read_bytes()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    version, d_e, d, v, rank = struct.unpack_from("<5I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 4 + 20

    def take(*shape: int) -> np.ndarray:
        nonlocal offset
        size = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
        offset += size * 8
        return arr.reshape(shape).copy()

    params = RefModelParams(
        E=take(v, d_e),
        W_c=take(d, d_e),
        W_y=take(d, d_e),
        W_h=take(d, d),
        b=take(d),
        U=take(v, d),
        b_o=take(v),
    )
    model = RefModel(params, adapter_rank=rank)
    (n_adapters,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    for _ in range(n_adapters):
        (tag_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        tag = blob[offset : offset + tag_len].decode("utf-8")
        offset += tag_len
        model.adapters[tag] = AdapterParams(W_down=take(rank, d), W_up=take(d, rank))
    return model
