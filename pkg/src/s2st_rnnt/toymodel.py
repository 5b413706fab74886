"""A small numpy transducer with hand-written backprop, and a synthetic task.

Encoder: symbol embedding -> mean-pool groups of ``time_reduction`` frames ->
causal tanh RNN. Predictor: tanh RNN over target embeddings, primed with the
blank embedding as start symbol. Joiner: one tanh layer then a projection to
``V_tgt + 1`` outputs, the last of which is blank.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from typing import Iterator, Sequence

import numpy as np

from . import lattice as lat

logger = logging.getLogger(__name__)

PARAM_NAMES = (
    "src_emb", "tgt_emb",
    "enc_wx", "enc_wh", "enc_b",
    "pred_wx", "pred_wh", "pred_b",
    "join_we", "join_wp", "join_b", "out_w", "out_b",
)


@dataclass
class ModelParams:
    src_emb: np.ndarray   # (V_src, d)
    tgt_emb: np.ndarray   # (V_tgt + 1, d); last row is blank / start symbol
    enc_wx: np.ndarray
    enc_wh: np.ndarray
    enc_b: np.ndarray
    pred_wx: np.ndarray
    pred_wh: np.ndarray
    pred_b: np.ndarray
    join_we: np.ndarray
    join_wp: np.ndarray
    join_b: np.ndarray
    out_w: np.ndarray     # (V_tgt + 1, d)
    out_b: np.ndarray     # (V_tgt + 1,)

    @property
    def dim(self) -> int:
        return self.src_emb.shape[1]

    @property
    def src_vocab(self) -> int:
        return self.src_emb.shape[0]

    @property
    def out_vocab(self) -> int:
        return self.out_w.shape[0]

    @property
    def blank_id(self) -> int:
        return self.out_vocab - 1

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def map(self, fn) -> "ModelParams":
        return ModelParams(**{k: fn(v) for k, v in self.arrays().items()})

    def zip_map(self, other: "ModelParams", fn) -> "ModelParams":
        o = other.arrays()
        return ModelParams(**{k: fn(v, o[k]) for k, v in self.arrays().items()})

    def copy(self) -> "ModelParams":
        return self.map(np.copy)

    def global_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(v * v) for v in self.arrays().values())))

    def check(self) -> None:
        d, V = self.dim, self.out_vocab
        expected = {
            "tgt_emb": (V, d), "enc_wx": (d, d), "enc_wh": (d, d), "enc_b": (d,),
            "pred_wx": (d, d), "pred_wh": (d, d), "pred_b": (d,),
            "join_we": (d, d), "join_wp": (d, d), "join_b": (d,), "out_w": (V, d), "out_b": (V,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if not all(np.all(np.isfinite(v)) for v in self.arrays().values()):
            raise ValueError("non-finite parameter values")


def init_params(src_vocab: int, tgt_vocab: int, dim: int, seed: int = 0, scale: float = 0.1) -> ModelParams:
    rng = np.random.default_rng(seed)
    V = tgt_vocab + 1
    shapes = {
        "src_emb": (src_vocab, dim), "tgt_emb": (V, dim),
        "enc_wx": (dim, dim), "enc_wh": (dim, dim), "enc_b": (dim,),
        "pred_wx": (dim, dim), "pred_wh": (dim, dim), "pred_b": (dim,),
        "join_we": (dim, dim), "join_wp": (dim, dim), "join_b": (dim,),
        "out_w": (V, dim), "out_b": (V,),
    }
    return ModelParams(**{k: rng.uniform(-scale, scale, shapes[k]) for k in PARAM_NAMES})


def zeros_like(params: ModelParams) -> ModelParams:
    return params.map(np.zeros_like)


# ---------------------------------------------------------------- forward pieces

def _reduce(params: ModelParams, source_frames: Sequence[int], time_reduction: int) -> np.ndarray:
    frames = np.asarray(source_frames, dtype=np.int64)
    if len(frames) < time_reduction:
        raise ValueError(f"need at least {time_reduction} frames, got {len(frames)}")
    if frames.min() < 0 or frames.max() >= params.src_vocab:
        raise ValueError("source symbol outside vocabulary")
    n = len(frames) // time_reduction
    emb = params.src_emb[frames[: n * time_reduction]]
    return emb.reshape(n, time_reduction, -1).mean(axis=1)


def _rnn(wx, wh, b, inputs: np.ndarray) -> np.ndarray:
    h = np.zeros(wx.shape[0])
    out = np.empty((len(inputs), wx.shape[0]))
    for t, x in enumerate(inputs):
        h = np.tanh(wx @ x + wh @ h + b)
        out[t] = h
    return out


def encode(params: ModelParams, source_frames: Sequence[int], time_reduction: int = 4) -> np.ndarray:
    """Encoder states of shape (floor(T / time_reduction), d)."""
    return _rnn(params.enc_wx, params.enc_wh, params.enc_b, _reduce(params, source_frames, time_reduction))


def _predictor_inputs(params: ModelParams, tokens: Sequence[int]) -> np.ndarray:
    tokens = np.asarray(tokens, dtype=np.int64).reshape(-1)
    if len(tokens) and (tokens.min() < 0 or tokens.max() >= params.blank_id):
        raise ValueError("predictor tokens must be non-blank vocabulary entries")
    return params.tgt_emb[np.concatenate([[params.blank_id], tokens]).astype(np.int64)]


def predictor_states(params: ModelParams, tokens: Sequence[int]) -> np.ndarray:
    """States after each prefix of ``tokens``; row u has seen the first u tokens."""
    return _rnn(params.pred_wx, params.pred_wh, params.pred_b, _predictor_inputs(params, tokens))


def predict(params: ModelParams, previous_tokens: Sequence[int]) -> np.ndarray:
    return predictor_states(params, previous_tokens)[-1]


def _joint_logits(params: ModelParams, enc: np.ndarray, pred: np.ndarray):
    hidden = np.tanh(enc @ params.join_we.T + pred @ params.join_wp.T + params.join_b)
    return hidden, hidden @ params.out_w.T + params.out_b


def joint(params: ModelParams, encoder_state: np.ndarray, predictor_state: np.ndarray) -> np.ndarray:
    _, logits = _joint_logits(params, encoder_state, predictor_state)
    return lat.log_softmax(logits)


def build_lattice(params: ModelParams, enc: np.ndarray, pred: np.ndarray) -> lat.LogProbLattice:
    _, logits = _joint_logits(params, enc[:, None, :], pred[None, :, :])
    return lat.LogProbLattice.from_logits(logits, params.blank_id)


# ---------------------------------------------------------------- backward

def _rnn_backward(wx, wh, inputs, states, d_states):
    """Backprop through h_t = tanh(wx x_t + wh h_{t-1} + b)."""
    T, d = states.shape
    d_pre = np.empty_like(states)
    carry = np.zeros(d)
    for t in range(T - 1, -1, -1):
        dh = d_states[t] + carry
        d_pre[t] = dh * (1.0 - states[t] ** 2)
        carry = wh.T @ d_pre[t]
    prev = np.vstack([np.zeros((1, d)), states[:-1]])
    return d_pre.T @ inputs, d_pre.T @ prev, d_pre.sum(axis=0), d_pre @ wx


def loss_and_grad(params: ModelParams, source_frames, target_tokens, time_reduction: int = 4) -> tuple[float, ModelParams]:
    """Transducer loss of one utterance and its gradient for every parameter."""
    reduced = _reduce(params, source_frames, time_reduction)
    enc = _rnn(params.enc_wx, params.enc_wh, params.enc_b, reduced)
    pred_in = _predictor_inputs(params, target_tokens)
    pred = _rnn(params.pred_wx, params.pred_wh, params.pred_b, pred_in)
    hidden, logits = _joint_logits(params, enc[:, None, :], pred[None, :, :])
    lattice = lat.LogProbLattice.from_logits(logits, params.blank_id)
    value = lat.loss(lattice, target_tokens)
    d_logits = lat.logits_gradient(lattice, target_tokens)

    g = zeros_like(params)
    g.out_w = np.einsum("tuv,tud->vd", d_logits, hidden)
    g.out_b = d_logits.sum(axis=(0, 1))
    d_pre = (d_logits @ params.out_w) * (1.0 - hidden ** 2)
    g.join_b = d_pre.sum(axis=(0, 1))
    d_a = d_pre.sum(axis=1)
    d_b = d_pre.sum(axis=0)
    g.join_we = d_a.T @ enc
    g.join_wp = d_b.T @ pred

    g.enc_wx, g.enc_wh, g.enc_b, d_reduced = _rnn_backward(
        params.enc_wx, params.enc_wh, reduced, enc, d_a @ params.join_we)
    g.pred_wx, g.pred_wh, g.pred_b, d_pred_in = _rnn_backward(
        params.pred_wx, params.pred_wh, pred_in, pred, d_b @ params.join_wp)

    frames = np.asarray(source_frames, dtype=np.int64)[: len(reduced) * time_reduction]
    np.add.at(g.src_emb, frames, np.repeat(d_reduced / time_reduction, time_reduction, axis=0))
    ids = np.concatenate([[params.blank_id], np.asarray(target_tokens, dtype=np.int64)]).astype(np.int64)
    np.add.at(g.tgt_emb, ids, d_pred_in)
    return value, g


def utterance_loss(params: ModelParams, source_frames, target_tokens, time_reduction: int = 4) -> float:
    enc = encode(params, source_frames, time_reduction)
    pred = predictor_states(params, target_tokens)
    return lat.loss(build_lattice(params, enc, pred), target_tokens)


# ---------------------------------------------------------------- training

class NonFiniteLossError(RuntimeError):
    pass


def clip_by_global_norm(grads: ModelParams, max_norm: float) -> tuple[ModelParams, float]:
    norm = grads.global_norm()
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        return grads.map(lambda g: g * scale), norm
    return grads, norm


def batch_loss_and_grad(params: ModelParams, batch: Sequence["Utterance"], time_reduction: int = 4):
    if not batch:
        raise ValueError("empty batch")
    total = zeros_like(params)
    losses = []
    for utt in batch:
        value, g = loss_and_grad(params, utt.source_frames, utt.target_tokens, time_reduction)
        losses.append(value)
        total = total.zip_map(g, np.add)
    n = len(batch)
    return float(np.mean(losses)), total.map(lambda g: g / n)


def train_step(
    params: ModelParams,
    batch: Sequence["Utterance"],
    learning_rate: float,
    time_reduction: int = 4,
    clip_norm: float = 5.0,
) -> tuple[ModelParams, float]:
    """One step of clipped gradient descent on the mean transducer loss."""
    mean_loss, grads = batch_loss_and_grad(params, batch, time_reduction)
    if not np.isfinite(mean_loss):
        raise NonFiniteLossError(f"non-finite batch loss {mean_loss}; lengths="
                                 f"{[(len(u.source_frames), len(u.target_tokens)) for u in batch]}")
    grads, _ = clip_by_global_norm(grads, clip_norm)
    return params.zip_map(grads, lambda p, g: p - learning_rate * g), mean_loss


@dataclass
class AdamState:
    step: int
    m: ModelParams
    v: ModelParams

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        return cls(0, zeros_like(params), zeros_like(params))


def adam_step(
    params: ModelParams,
    state: AdamState,
    batch: Sequence["Utterance"],
    learning_rate: float,
    time_reduction: int = 4,
    clip_norm: float = 5.0,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> tuple[ModelParams, AdamState, float]:
    mean_loss, grads = batch_loss_and_grad(params, batch, time_reduction)
    if not np.isfinite(mean_loss):
        raise NonFiniteLossError(f"non-finite batch loss {mean_loss}")
    grads, _ = clip_by_global_norm(grads, clip_norm)
    b1, b2 = betas
    step = state.step + 1
    m = state.m.zip_map(grads, lambda a, g: b1 * a + (1 - b1) * g)
    v = state.v.zip_map(grads, lambda a, g: b2 * a + (1 - b2) * g * g)
    c1, c2 = 1 - b1 ** step, 1 - b2 ** step
    update = m.zip_map(v, lambda a, b: (a / c1) / (np.sqrt(b / c2) + eps))
    return params.zip_map(update, lambda p, u: p - learning_rate * u), AdamState(step, m, v), mean_loss


@dataclass
class TrainConfig:
    steps: int = 3000
    batch_size: int = 8
    learning_rate: float = 0.005
    optimizer: str = "adam"  # or "sgd"
    clip_norm: float = 5.0
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.batch_size < 1 or self.steps < 0:
            raise ValueError("batch_size must be >= 1 and steps >= 0")


def train(params: ModelParams, corpus: Sequence["Utterance"], config: TrainConfig, time_reduction: int = 4,
          callback=None) -> tuple[ModelParams, list[float]]:
    """Minibatch training loop; batches are drawn without replacement per epoch."""
    if not corpus:
        raise ValueError("cannot train on an empty corpus")
    rng = np.random.default_rng(config.seed)
    adam = AdamState.zeros(params)
    history = []
    order: list[int] = []
    for step in range(1, config.steps + 1):
        if len(order) < config.batch_size:
            order.extend(rng.permutation(len(corpus)).tolist())
        idx, order = order[: config.batch_size], order[config.batch_size:]
        batch = [corpus[i] for i in idx]
        if config.optimizer == "adam":
            params, adam, value = adam_step(params, adam, batch, config.learning_rate,
                                            time_reduction, config.clip_norm)
        else:
            params, value = train_step(params, batch, config.learning_rate, time_reduction, config.clip_norm)
        history.append(value)
        if config.log_every and step % config.log_every == 0:
            recent = float(np.mean(history[-config.log_every:]))
            logger.info("step %d loss %.4f", step, recent)
            if callback is not None:
                callback(step, recent)
    return params, history


# ---------------------------------------------------------------- decoding adapter

class ToyTransducer:
    """Adapter exposing a :class:`ModelParams` to the decoder."""

    def __init__(self, params: ModelParams, time_reduction: int = 4):
        self.params = params
        self.time_reduction = time_reduction
        self.blank_id = params.blank_id
        self._start = predict(params, [])

    def encode(self, source_frames: Sequence[int]) -> np.ndarray:
        return encode(self.params, source_frames, self.time_reduction)

    def initial_state(self) -> np.ndarray:
        return self._start

    def advance(self, state: np.ndarray, token: int) -> np.ndarray:
        p = self.params
        return np.tanh(p.pred_wx @ p.tgt_emb[token] + p.pred_wh @ state + p.pred_b)

    def joint_logprobs(self, encoder_frame: np.ndarray, state: np.ndarray) -> np.ndarray:
        return joint(self.params, encoder_frame, state)


# ---------------------------------------------------------------- synthetic task

@dataclass
class SynthTaskConfig:
    """Toy "translation": bijective symbol map with local reordering.

    ``swap_period=0`` disables reordering. Source lengths are drawn uniformly
    from ``[min_len, max_len]``; a length whose last symbol would open a swap
    pair without partner is extended by one, since a causal model cannot know
    the utterance ends there.
    """

    src_vocab: int = 16
    tgt_vocab: int = 16
    swap_period: int = 2
    dup_prob: float = 0.0
    upsample_r: int = 4
    noise_prob: float = 0.0
    min_len: int = 4
    max_len: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.src_vocab < 4 or self.tgt_vocab < 4:
            raise ValueError("vocabulary sizes must be >= 4")
        if self.src_vocab > self.tgt_vocab:
            raise ValueError("src_vocab must not exceed tgt_vocab (the symbol map is injective)")
        if not (0 <= self.dup_prob <= 1 and 0 <= self.noise_prob <= 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.upsample_r < 1:
            raise ValueError("upsample_r must be >= 1")
        if self.swap_period == 1 or self.swap_period < 0:
            raise ValueError("swap_period must be 0 (off) or >= 2")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")


@dataclass
class Utterance:
    source_frames: list[int]
    target_tokens: list[int]
    source_symbols: list[int] = field(default_factory=list, compare=False)


def symbol_map(config: SynthTaskConfig) -> np.ndarray:
    rng = np.random.default_rng([config.seed, 1])
    return rng.permutation(config.tgt_vocab)[: config.src_vocab]


def reorder(symbols: Sequence, swap_period: int) -> list:
    out = list(symbols)
    if swap_period:
        for i in range(0, len(out) - 1, swap_period):
            out[i], out[i + 1] = out[i + 1], out[i]
    return out


def generate_corpus(config: SynthTaskConfig, n: int, offset: int = 0) -> list[Utterance]:
    """``n`` utterances, deterministic in ``(config.seed, offset)``.

    Different ``offset`` values give disjoint random streams (held-out data).
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    fmap = symbol_map(config)
    rng = np.random.default_rng([config.seed, 2, offset])
    corpus = []
    for _ in range(n):
        L = int(rng.integers(config.min_len, config.max_len + 1))
        if config.swap_period and (L - 1) % config.swap_period == 0:
            L += 1
        src = rng.integers(0, config.src_vocab, size=L)
        target = []
        for s in reorder(src.tolist(), config.swap_period):
            target.append(int(fmap[s]))
            if config.dup_prob and rng.random() < config.dup_prob:
                target.append(int(fmap[s]))
        frames = np.repeat(src, config.upsample_r)
        if config.noise_prob:
            hit = rng.random(len(frames)) < config.noise_prob
            frames[hit] = rng.integers(0, config.src_vocab, size=int(hit.sum()))
        corpus.append(Utterance(frames.tolist(), target, src.tolist()))
    return corpus


def iter_batches(corpus: Sequence[Utterance], batch_size: int) -> Iterator[list[Utterance]]:
    for i in range(0, len(corpus), batch_size):
        yield list(corpus[i:i + batch_size])
