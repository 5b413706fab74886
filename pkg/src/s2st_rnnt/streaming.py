"""Block-processing schedule of a segment + right-context streaming encoder.

Only the timing contract is modelled: an encoder frame becomes available once
all input audio of its segment and of the right context after it has arrived.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass
class StreamConfig:
    hop_ms: float = 10.0
    time_reduction: int = 4
    segment_frames: int = 20
    right_context_frames: int = 4
    segment_compute_ms: float = 0.0

    def __post_init__(self):
        if self.hop_ms <= 0 or self.time_reduction < 1 or self.segment_frames < 1:
            raise ValueError("hop_ms, time_reduction and segment_frames must be positive")
        if self.right_context_frames < 0 or self.segment_compute_ms < 0:
            raise ValueError("right_context_frames and segment_compute_ms must be >= 0")

    @property
    def frame_ms(self) -> float:
        """Duration of one encoder frame after time reduction."""
        return self.hop_ms * self.time_reduction

    @property
    def segment_ms(self) -> float:
        return self.segment_frames * self.frame_ms

    @property
    def right_context_ms(self) -> float:
        return self.right_context_frames * self.frame_ms


@dataclass
class EmissionTimeline:
    emission_times_ms: list[float]
    source_duration_ms: float

    def __post_init__(self):
        times = np.asarray(self.emission_times_ms, dtype=np.float64)
        if np.any(times < 0):
            raise ValueError("emission times must be >= 0")
        if np.any(np.diff(times) < 0):
            raise ValueError("emission times must be non-decreasing")

    def __len__(self) -> int:
        return len(self.emission_times_ms)


def encoder_frame_ready_time(config: StreamConfig, encoder_frame_index: int) -> float:
    if encoder_frame_index < 0:
        raise ValueError("encoder frame index must be >= 0")
    segment_end = (encoder_frame_index // config.segment_frames + 1) * config.segment_frames
    return (segment_end + config.right_context_frames) * config.frame_ms + config.segment_compute_ms


def emission_timeline(
    frame_indices: Sequence[int],
    config: StreamConfig,
    num_encoder_frames: int,
    token_delay_ms: float = 0.0,
) -> EmissionTimeline:
    """Wall-clock emission time of each decoded token from the frame it was emitted on."""
    frames = list(frame_indices)
    for f in frames:
        if not 0 <= f < num_encoder_frames:
            raise ValueError(f"frame index {f} outside [0, {num_encoder_frames})")
    if any(b < a for a, b in zip(frames, frames[1:])):
        raise ValueError("frame indices must be non-decreasing")
    times = [encoder_frame_ready_time(config, f) + token_delay_ms for f in frames]
    return EmissionTimeline(times, num_encoder_frames * config.frame_ms)
