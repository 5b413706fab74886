"""Corpus BLEU over token sequences and Average Lagging over emission timelines."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .streaming import EmissionTimeline

MAX_ORDER = 4


@dataclass
class LatencyReport:
    average_lagging_ms: float | None
    per_token_lags_ms: list[float] = field(default_factory=list)
    cutoff_index: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def average_lagging(timeline: EmissionTimeline, target_len: int | None = None) -> LatencyReport:
    """Average Lagging with a millisecond-domain source duration.

    Token i (1-based) ideally appears at (i - 1) * D / |y|. Lags are averaged up
    to and including the first token emitted at or after the end of the source.
    An empty timeline yields ``average_lagging_ms=None``.
    """
    delays = list(timeline.emission_times_ms)
    if target_len is None:
        target_len = len(delays)
    if target_len != len(delays):
        raise ValueError(f"target_len {target_len} != number of emission times {len(delays)}")
    D = timeline.source_duration_ms
    if D <= 0:
        raise ValueError("source duration must be positive")
    if target_len == 0:
        return LatencyReport(None, [], 0)
    step = D / target_len
    tau = target_len
    for i, d in enumerate(delays, start=1):
        if d >= D:
            tau = i
            break
    lags = [d - i * step for i, d in enumerate(delays[:tau])]
    return LatencyReport(math.fsum(lags) / tau, lags, tau)


@dataclass
class BleuStats:
    """Sufficient statistics for corpus BLEU; additive over sentences."""

    hyp_len: int = 0
    ref_len: int = 0
    matches: list[int] = field(default_factory=lambda: [0] * MAX_ORDER)
    totals: list[int] = field(default_factory=lambda: [0] * MAX_ORDER)

    def __add__(self, other: "BleuStats") -> "BleuStats":
        return BleuStats(
            self.hyp_len + other.hyp_len,
            self.ref_len + other.ref_len,
            [a + b for a, b in zip(self.matches, other.matches)],
            [a + b for a, b in zip(self.totals, other.totals)],
        )


@dataclass
class BleuReport:
    bleu: float
    n_gram_precisions: list[float]
    brevity_penalty: float
    hyp_len: int = 0
    ref_len: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _ngrams(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def sentence_stats(hypothesis: Sequence, reference: Sequence) -> BleuStats:
    stats = BleuStats(len(hypothesis), len(reference))
    for n in range(1, MAX_ORDER + 1):
        hyp_counts = _ngrams(hypothesis, n)
        ref_counts = _ngrams(reference, n)
        stats.matches[n - 1] = sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
        stats.totals[n - 1] = max(0, len(hypothesis) - n + 1)
    return stats


def bleu_from_stats(stats: BleuStats) -> BleuReport:
    precisions = [m / t if t else 0.0 for m, t in zip(stats.matches, stats.totals)]
    if stats.hyp_len == 0:
        bp = 0.0
    elif stats.hyp_len < stats.ref_len:
        bp = math.exp(1.0 - stats.ref_len / stats.hyp_len)
    else:
        bp = 1.0
    if min(precisions) <= 0.0:
        bleu = 0.0
    else:
        bleu = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / MAX_ORDER)
    return BleuReport(bleu, precisions, bp, stats.hyp_len, stats.ref_len)


def corpus_bleu(hypotheses: Sequence[Sequence], references: Sequence[Sequence]) -> BleuReport:
    """Unsmoothed corpus BLEU-4 with a single reference per sentence."""
    if len(hypotheses) != len(references):
        raise ValueError("hypotheses and references differ in length")
    if not hypotheses:
        raise ValueError("corpus_bleu needs at least one sentence pair")
    total = BleuStats()
    for h, r in zip(hypotheses, references):
        total = total + sentence_stats(list(h), list(r))
    return bleu_from_stats(total)
