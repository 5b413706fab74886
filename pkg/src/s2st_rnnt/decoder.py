"""Greedy and beam-search decoding for transducer models.

A model only needs the small surface described by :class:`TransducerModel`;
the decoder never looks inside predictor states.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class TransducerModel(Protocol):
    blank_id: int

    def initial_state(self) -> Any: ...

    def advance(self, state: Any, token: int) -> Any: ...

    def joint_logprobs(self, encoder_frame: Any, state: Any) -> np.ndarray: ...


@dataclass
class BeamConfig:
    beam_size: int = 10
    length_penalty_alpha: float = 0.5
    max_labels_per_frame: int = 8

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.length_penalty_alpha < 0:
            raise ValueError("length_penalty_alpha must be >= 0")
        if self.max_labels_per_frame < 1:
            raise ValueError("max_labels_per_frame must be >= 1")


@dataclass
class Hypothesis:
    tokens: tuple[int, ...]
    log_prob: float
    predictor_state: Any = field(repr=False, compare=False)
    frame_index: int = 0
    token_frames: tuple[int, ...] = ()
    capped_frames: tuple[int, ...] = ()

    def normalized_score(self, alpha: float) -> float:
        return self.log_prob / max(1, len(self.tokens)) ** alpha


@dataclass
class DecodeResult:
    tokens: list[int]
    frame_indices: list[int]
    log_prob: float
    capped_frames: list[int]


def greedy_decode(model: TransducerModel, encoder_outputs: Sequence, max_labels_per_frame: int = 8) -> DecodeResult:
    """Argmax decode. Records the frame on which each token was emitted."""
    T = len(encoder_outputs)
    if T < 1:
        raise ValueError("encoder_outputs must contain at least one frame")
    blank = model.blank_id
    state = model.initial_state()
    tokens, frames, capped = [], [], []
    score = 0.0
    for t in range(T):
        emitted = 0
        while True:
            lp = model.joint_logprobs(encoder_outputs[t], state)
            if emitted >= max_labels_per_frame:
                # label loop on this frame: force the blank and move on
                capped.append(t)
                logger.debug("emission cap hit at frame %d", t)
                score += float(lp[blank])
                break
            k = int(np.argmax(lp))
            score += float(lp[k])
            if k == blank:
                break
            tokens.append(k)
            frames.append(t)
            state = model.advance(state, k)
            emitted += 1
    return DecodeResult(tokens, frames, score, capped)


def _merge_into(pool: dict, hyp: Hypothesis) -> None:
    prev = pool.get(hyp.tokens)
    if prev is None:
        pool[hyp.tokens] = hyp
        return
    merged = float(np.logaddexp(prev.log_prob, hyp.log_prob))
    # keep the emission timing of the stronger branch
    keep = prev if (prev.log_prob, -len(prev.capped_frames)) >= (hyp.log_prob, -len(hyp.capped_frames)) else hyp
    pool[hyp.tokens] = Hypothesis(
        keep.tokens, merged, keep.predictor_state, keep.frame_index, keep.token_frames, keep.capped_frames
    )


def _rank_key(h: Hypothesis):
    return (-h.log_prob, h.tokens, len(h.tokens))


def beam_decode(model: TransducerModel, encoder_outputs: Sequence, config: BeamConfig | None = None) -> list[Hypothesis]:
    """Frame-synchronous transducer beam search.

    Within a frame, all blank and label extensions of the active hypotheses are
    pooled and the best ``beam_size`` survive. Survivors that took a blank have
    finished the frame; hypotheses with identical tokens that finish the same
    frame are merged with logaddexp. With ``beam_size=1`` this is exactly
    :func:`greedy_decode`.

    Returns up to ``beam_size`` hypotheses ordered by length-normalized score.
    """
    config = config or BeamConfig()
    T = len(encoder_outputs)
    if T < 1:
        raise ValueError("encoder_outputs must contain at least one frame")
    K = config.beam_size
    blank = model.blank_id
    beam = [Hypothesis((), 0.0, model.initial_state())]
    cache: dict = {}

    for t in range(T):
        cache.clear()
        active = beam
        finished: dict = {}
        for step in range(config.max_labels_per_frame + 1):
            if not active:
                break
            cands = []
            for rank, h in enumerate(active):
                key = (h.tokens, t)
                lp = cache.get(key)
                if lp is None:
                    lp = np.asarray(model.joint_logprobs(encoder_outputs[t], h.predictor_state), dtype=np.float64)
                    cache[key] = lp
                at_cap = step == config.max_labels_per_frame
                for k in range(len(lp)):
                    if at_cap and k != blank:
                        continue
                    cands.append((-(h.log_prob + float(lp[k])), -float(lp[k]), k, len(h.tokens), rank, h))
            cands.sort(key=lambda c: c[:5])
            active = []
            for neg, _, k, _, _, h in cands[:K]:
                score = -neg
                if k == blank:
                    capped = h.capped_frames + ((t,) if step == config.max_labels_per_frame else ())
                    _merge_into(finished, Hypothesis(h.tokens, score, h.predictor_state, t + 1, h.token_frames, capped))
                else:
                    active.append(Hypothesis(
                        h.tokens + (k,), score, model.advance(h.predictor_state, k), t, h.token_frames + (t,), h.capped_frames
                    ))
            if len(finished) >= K and active:
                worst_kept = sorted(finished.values(), key=_rank_key)[K - 1].log_prob
                if max(h.log_prob for h in active) < worst_kept:
                    break
        beam = sorted(finished.values(), key=_rank_key)[:K]

    alpha = config.length_penalty_alpha
    return sorted(beam, key=lambda h: (-h.normalized_score(alpha), h.tokens, len(h.tokens)))


class LatticeModel:
    """A model whose joint output is read from a fixed ``(T, U_max + 1, V)`` table.

    The predictor state is just the number of emitted tokens, so the output
    distribution depends on ``(frame, #tokens)`` only. Encoder outputs are the
    frame indices ``range(T)``.
    """

    def __init__(self, table: np.ndarray, blank_id: int | None = None):
        self.table = np.asarray(table, dtype=np.float64)
        self.blank_id = self.table.shape[-1] - 1 if blank_id is None else blank_id

    @property
    def encoder_outputs(self) -> range:
        return range(self.table.shape[0])

    def initial_state(self) -> int:
        return 0

    def advance(self, state: int, token: int) -> int:
        return state + 1

    def joint_logprobs(self, encoder_frame: int, state: int) -> np.ndarray:
        u = min(state, self.table.shape[1] - 1)
        return self.table[encoder_frame, u]
