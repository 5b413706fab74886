"""End-to-end streaming simulation: decode -> emission times -> relay -> metrics."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import metrics
from .codec import RelayConfig, SemanticStream, relay_stream
from .decoder import BeamConfig, beam_decode, greedy_decode
from .streaming import EmissionTimeline, StreamConfig, emission_timeline

logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    stream: StreamConfig = field(default_factory=StreamConfig)
    relay: RelayConfig = field(default_factory=RelayConfig)
    beam: BeamConfig = field(default_factory=BeamConfig)


@dataclass
class UtteranceReport:
    index: int
    tokens: list[int] = field(default_factory=list)
    frame_indices: list[int] = field(default_factory=list)
    num_encoder_frames: int = 0
    semantic_al_ms: float | None = None
    acoustic_al_ms: float | None = None
    num_acoustic_frames: int = 0
    bleu_stats: metrics.BleuStats = field(default_factory=metrics.BleuStats)
    exact_match: bool = False
    error: str | None = None


@dataclass
class RunReport:
    utterances: list[UtteranceReport] = field(default_factory=list)
    mean_semantic_al_ms: float = 0.0
    mean_acoustic_al_ms: float = 0.0
    bleu: float = 0.0
    exact_match_rate: float = 0.0
    num_errors: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def decode_utterance(model, source_frames, beam: BeamConfig):
    """Best hypothesis as ``(tokens, frame_indices, num_encoder_frames)``.

    ``beam_size == 1`` uses the greedy decoder (identical output, less work).
    """
    enc = model.encode(source_frames)
    if beam.beam_size == 1:
        r = greedy_decode(model, enc, beam.max_labels_per_frame)
        return r.tokens, r.frame_indices, len(enc)
    best = beam_decode(model, enc, beam)[0]
    return list(best.tokens), list(best.token_frames), len(enc)


def latency_for_trace(frame_indices: Sequence[int], num_encoder_frames: int, config: PipelineConfig, tokens=None):
    """Semantic and acoustic AL for one decode trace."""
    timeline = emission_timeline(frame_indices, config.stream, num_encoder_frames)
    sem = metrics.average_lagging(timeline)
    stream = SemanticStream(list(tokens) if tokens is not None else [0] * len(frame_indices),
                            config.stream.frame_ms)
    acoustic = relay_stream(stream, config.relay, timeline.emission_times_ms)
    ac_timeline = EmissionTimeline(acoustic.available_ms.tolist(), timeline.source_duration_ms)
    ac = metrics.average_lagging(ac_timeline)
    return sem, ac, len(acoustic)


def aggregate(utterances: list[UtteranceReport]) -> RunReport:
    sem = [u.semantic_al_ms for u in utterances if u.semantic_al_ms is not None]
    ac = [u.acoustic_al_ms for u in utterances if u.acoustic_al_ms is not None]
    ok = [u for u in utterances if u.error is None]
    stats = metrics.BleuStats()
    for u in ok:
        stats = stats + u.bleu_stats
    return RunReport(
        utterances=utterances,
        mean_semantic_al_ms=float(np.mean(sem)) if sem else 0.0,
        mean_acoustic_al_ms=float(np.mean(ac)) if ac else 0.0,
        bleu=metrics.bleu_from_stats(stats).bleu if ok else 0.0,
        exact_match_rate=sum(u.exact_match for u in ok) / len(utterances) if utterances else 0.0,
        num_errors=len(utterances) - len(ok),
    )


def run_pipeline(model, corpus: Sequence, config: PipelineConfig, decoded: Sequence | None = None) -> RunReport:
    """Evaluate ``model`` on ``corpus`` under the streaming schedule and relay buffer.

    ``decoded`` may carry precomputed ``(tokens, frame_indices, num_encoder_frames)``
    per utterance so latency sweeps can reuse one decode pass.
    """
    reports = []
    for i, utt in enumerate(corpus):
        rep = UtteranceReport(i)
        try:
            if decoded is not None:
                tokens, frames, n_enc = decoded[i]
            else:
                tokens, frames, n_enc = decode_utterance(model, utt.source_frames, config.beam)
            rep.tokens, rep.frame_indices, rep.num_encoder_frames = list(tokens), list(frames), n_enc
            sem, ac, n_ac = latency_for_trace(frames, n_enc, config, tokens)
            rep.semantic_al_ms = sem.average_lagging_ms
            rep.acoustic_al_ms = ac.average_lagging_ms
            rep.num_acoustic_frames = n_ac
            rep.bleu_stats = metrics.sentence_stats(rep.tokens, list(utt.target_tokens))
            rep.exact_match = rep.tokens == list(utt.target_tokens)
        except (ValueError, RuntimeError) as exc:
            logger.warning("utterance %d failed: %s", i, exc)
            rep.error = str(exc)
        reports.append(rep)
    return aggregate(reports)
