"""Token-level stand-in for the semantic -> acoustic relay.

The neural acoustic LM is replaced by a seeded hash of (token, layer, frame
position). What is kept exact is the contract around it: fixed-size training
buffer with zero padding, 3 acoustic frames per semantic token, K codebook
layers in a delayed pattern, and chunked, FIFO streaming.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

SEMANTIC_VOCAB = 4096
PAD = -1  # outside every codebook range

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass
class SemanticStream:
    tokens: list[int]
    frame_period_ms: float = 40.0

    def __post_init__(self):
        if self.frame_period_ms <= 0:
            raise ValueError("frame_period_ms must be positive")
        if any(not 0 <= t < SEMANTIC_VOCAB for t in self.tokens):
            raise ValueError(f"semantic tokens must lie in [0, {SEMANTIC_VOCAB})")


@dataclass
class AcousticFrameMatrix:
    """``codes`` has shape (K, F). ``keep`` flags frames not originating from padding."""

    codes: np.ndarray
    codebook_size: int = 1024
    keep: np.ndarray | None = None

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int64)
        if self.codes.ndim != 2:
            raise ValueError("codes must be 2-d (layers, frames)")
        if self.codes.size and (self.codes.min() < 0 or self.codes.max() >= self.codebook_size):
            raise ValueError("code outside codebook range")
        if self.keep is None:
            self.keep = np.ones(self.num_frames, dtype=bool)

    @property
    def num_layers(self) -> int:
        return self.codes.shape[0]

    @property
    def num_frames(self) -> int:
        return self.codes.shape[1]

    def retained(self) -> "AcousticFrameMatrix":
        return AcousticFrameMatrix(self.codes[:, self.keep], self.codebook_size)


@dataclass
class DelayedSequence:
    steps: np.ndarray  # (F + K - 1, K); PAD where the pattern has no code

    @property
    def num_steps(self) -> int:
        return self.steps.shape[0]


@dataclass
class RelayConfig:
    inference_buffer: int = 50
    training_buffer: int = 100
    per_chunk_compute_ms: float = 0.0
    ratio: int = 3
    num_layers: int = 16
    codebook_size: int = 1024
    pad_token: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.inference_buffer <= self.training_buffer:
            raise ValueError("need 1 <= inference_buffer <= training_buffer")
        if self.per_chunk_compute_ms < 0:
            raise ValueError("per_chunk_compute_ms must be >= 0")
        if self.ratio < 1 or self.num_layers < 1 or self.codebook_size < 1:
            raise ValueError("ratio, num_layers and codebook_size must be positive")


@dataclass
class AcousticTimeline:
    codes: np.ndarray  # (K, F)
    available_ms: np.ndarray  # (F,)

    def __len__(self) -> int:
        return len(self.available_ms)


def interleave_delayed(matrix: AcousticFrameMatrix) -> DelayedSequence:
    K, F = matrix.codes.shape
    steps = np.full((F + K - 1, K), PAD, dtype=np.int64)
    for k in range(K):
        steps[k:k + F, k] = matrix.codes[k]
    return DelayedSequence(steps)


def deinterleave_delayed(seq: DelayedSequence, K: int, F: int, codebook_size: int = 1024) -> AcousticFrameMatrix:
    steps = np.asarray(seq.steps)
    if steps.shape != (F + K - 1, K):
        raise ValueError(f"expected {(F + K - 1, K)} delayed steps, got {steps.shape}")
    codes = np.empty((K, F), dtype=np.int64)
    expected_pad = np.ones_like(steps, dtype=bool)
    for k in range(K):
        codes[k] = steps[k:k + F, k]
        expected_pad[k:k + F, k] = False
    if np.any(codes == PAD):
        raise ValueError("PAD found where the delayed pattern expects a code")
    if np.any(steps[expected_pad] != PAD):
        raise ValueError("code found where the delayed pattern expects PAD")
    return AcousticFrameMatrix(codes, codebook_size)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = (x + np.uint64(0x9E3779B97F4A7C15)) & _MASK64
        x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
        x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
        return x ^ (x >> np.uint64(31))


def map_semantic_chunk(chunk: Sequence[int], config: RelayConfig) -> AcousticFrameMatrix:
    """Map one chunk of semantic tokens to (K, ratio * training_buffer) acoustic codes.

    The chunk is zero-padded to the training buffer. Frames produced by padded
    positions are flagged in ``keep`` so the caller can drop them.
    """
    n = len(chunk)
    if n > config.training_buffer:
        raise ValueError(f"chunk of {n} tokens exceeds training buffer {config.training_buffer}")
    padded = np.full(config.training_buffer, config.pad_token, dtype=np.uint64)
    padded[:n] = np.asarray(chunk, dtype=np.uint64)
    F = config.ratio * config.training_buffer
    frame_pos = np.arange(F, dtype=np.uint64)
    token = np.repeat(padded, config.ratio)
    layer = np.arange(config.num_layers, dtype=np.uint64)[:, None]
    with np.errstate(over="ignore"):
        key = _splitmix64(np.uint64(config.seed)) ^ (token << np.uint64(20)) ^ (layer << np.uint64(12)) ^ frame_pos
    codes = (_splitmix64(key) % np.uint64(config.codebook_size)).astype(np.int64)
    keep = np.arange(F) < config.ratio * n
    return AcousticFrameMatrix(codes, config.codebook_size, keep)


def relay_stream(semantic: SemanticStream, config: RelayConfig, semantic_ready_times: Sequence[float]) -> AcousticTimeline:
    """Chunk the semantic stream by ``inference_buffer`` and time-stamp the acoustic output.

    A chunk is processed when its last token is ready; its frames become
    available after ``per_chunk_compute_ms``. A chunk cannot start before the
    previous one has finished (single FIFO worker).
    """
    tokens = list(semantic.tokens)
    ready = np.asarray(semantic_ready_times, dtype=np.float64)
    if len(ready) != len(tokens):
        raise ValueError("need one ready time per semantic token")
    if np.any(np.diff(ready) < 0):
        raise ValueError("ready times must be non-decreasing")
    if not tokens:
        return AcousticTimeline(np.zeros((config.num_layers, 0), dtype=np.int64), np.zeros(0))
    codes, times = [], []
    worker_free = 0.0
    B = config.inference_buffer
    for start in range(0, len(tokens), B):
        chunk = tokens[start:start + B]
        begin = max(ready[start + len(chunk) - 1], worker_free)
        done = begin + config.per_chunk_compute_ms
        worker_free = done
        mat = map_semantic_chunk(chunk, config).retained()
        codes.append(mat.codes)
        times.append(np.full(mat.num_frames, done))
    return AcousticTimeline(np.concatenate(codes, axis=1), np.concatenate(times))
