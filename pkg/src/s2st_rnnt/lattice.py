"""RNN-Transducer alignment lattice: loss, forward/backward tables and gradients.

Path convention: a blank at state ``(t, u)`` moves to ``(t + 1, u)``, a label
moves to ``(t, u + 1)``, and the sequence terminates with a blank taken from
``(T - 1, U)``. Everything is computed in the natural-log domain in float64.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

NEG_INF = -np.inf
MAX_ENUM_LEN = 14

BLANK = "BLANK"
LABEL = "LABEL"


class LatticeError(ValueError):
    pass


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    shifted = x - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def logsumexp(x, axis=None):
    """Max-shifted logsumexp that returns -inf for all -inf inputs."""
    x = np.asarray(x, dtype=np.float64)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


@dataclass
class LogProbLattice:
    """Joint log-probabilities of shape ``(T, U + 1, V)``.

    ``values[t, u]`` is the output distribution after consuming frame ``t``
    with ``u`` target tokens already emitted. Entries may be ``-inf``
    (probability zero) but never NaN or ``+inf``.
    """

    values: np.ndarray
    blank_id: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise LatticeError(f"lattice must be 3-d (T, U+1, V), got shape {self.values.shape}")
        if self.num_frames == 0:
            raise LatticeError("lattice has no frames (T = 0)")
        if self.blank_id is None:
            self.blank_id = self.vocab_size - 1
        if not 0 <= self.blank_id < self.vocab_size:
            raise LatticeError(f"blank_id {self.blank_id} outside [0, {self.vocab_size})")
        if np.isnan(self.values).any() or np.isposinf(self.values).any():
            raise LatticeError("lattice contains NaN or +inf")

    @classmethod
    def from_logits(cls, logits: np.ndarray, blank_id: int | None = None) -> "LogProbLattice":
        return cls(log_softmax(np.asarray(logits, dtype=np.float64)), blank_id)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def target_len(self) -> int:
        return self.values.shape[1] - 1

    @property
    def vocab_size(self) -> int:
        return self.values.shape[2]

    def is_normalized(self, tol: float = 1e-6) -> bool:
        return bool(np.all(np.abs(logsumexp(self.values, axis=-1)) <= tol))


def _check_target(lattice: LogProbLattice, target: Sequence[int]) -> np.ndarray:
    target = np.asarray(target, dtype=np.int64).reshape(-1)
    if len(target) != lattice.target_len:
        raise LatticeError(
            f"target length {len(target)} does not match lattice U={lattice.target_len}"
        )
    if len(target) and (target.min() < 0 or target.max() >= lattice.vocab_size):
        raise LatticeError("target token outside vocabulary")
    if np.any(target == lattice.blank_id):
        raise LatticeError("target contains the blank token")
    return target


def _emissions(lattice: LogProbLattice, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Blank log-probs (T, U+1) and next-label log-probs (T, U)."""
    blank = lattice.values[:, :, lattice.blank_id]
    U = lattice.target_len
    label = lattice.values[:, np.arange(U), target] if U else np.zeros((lattice.num_frames, 0))
    return blank, label


def forward(lattice: LogProbLattice, target: Sequence[int]) -> tuple[float, np.ndarray]:
    """Return ``(log P(target | x), alpha)`` with alpha of shape ``(T, U + 1)``."""
    target = _check_target(lattice, target)
    blank, label = _emissions(lattice, target)
    T, U = lattice.num_frames, lattice.target_len
    alpha = np.full((T, U + 1), NEG_INF)
    alpha[0, 0] = 0.0
    # anti-diagonal sweep: cells with t + u = n only depend on diagonal n - 1
    for n in range(1, T + U):
        t = np.arange(max(0, n - U), min(T - 1, n) + 1)
        u = n - t
        from_blank = np.full(len(t), NEG_INF)
        from_label = np.full(len(t), NEG_INF)
        m = t > 0
        from_blank[m] = alpha[t[m] - 1, u[m]] + blank[t[m] - 1, u[m]]
        m = u > 0
        from_label[m] = alpha[t[m], u[m] - 1] + label[t[m], u[m] - 1]
        alpha[t, u] = np.logaddexp(from_blank, from_label)
    log_prob = float(alpha[T - 1, U] + blank[T - 1, U])
    return log_prob, alpha


def backward(lattice: LogProbLattice, target: Sequence[int]) -> np.ndarray:
    """Return beta of shape ``(T, U + 1)``; ``beta[0, 0]`` equals the log marginal."""
    target = _check_target(lattice, target)
    blank, label = _emissions(lattice, target)
    T, U = lattice.num_frames, lattice.target_len
    beta = np.full((T, U + 1), NEG_INF)
    beta[T - 1, U] = blank[T - 1, U]
    for n in range(T + U - 2, -1, -1):
        t = np.arange(max(0, n - U), min(T - 1, n) + 1)
        u = n - t
        via_blank = np.full(len(t), NEG_INF)
        via_label = np.full(len(t), NEG_INF)
        m = t < T - 1
        via_blank[m] = beta[t[m] + 1, u[m]] + blank[t[m], u[m]]
        m = u < U
        via_label[m] = beta[t[m], u[m] + 1] + label[t[m], u[m]]
        beta[t, u] = np.logaddexp(via_blank, via_label)
    return beta


def loss(lattice: LogProbLattice, target: Sequence[int]) -> float:
    log_prob, _ = forward(lattice, target)
    return -log_prob


def _edge_posteriors(lattice, target):
    target = _check_target(lattice, target)
    blank, label = _emissions(lattice, target)
    log_prob, alpha = forward(lattice, target)
    beta = backward(lattice, target)
    if not np.isfinite(log_prob):
        raise LatticeError("target has zero probability under the lattice")
    T, U = lattice.num_frames, lattice.target_len
    next_blank = np.full((T, U + 1), NEG_INF)
    next_blank[:-1] = beta[1:]
    next_blank[T - 1, U] = 0.0
    with np.errstate(invalid="ignore"):
        blank_post = np.exp(alpha + blank + next_blank - log_prob)
        label_post = np.exp(alpha[:, :U] + label + beta[:, 1:] - log_prob)
    return target, np.nan_to_num(blank_post), np.nan_to_num(label_post)


def gradient(lattice: LogProbLattice, target: Sequence[int]) -> np.ndarray:
    """d loss / d lattice.values, each entry treated as a free variable.

    Only blank entries and the next-target-label entries of reachable cells
    are nonzero; the value is minus the posterior of using that arc.
    """
    target, blank_post, label_post = _edge_posteriors(lattice, target)
    grad = np.zeros_like(lattice.values)
    grad[:, :, lattice.blank_id] = -blank_post
    U = lattice.target_len
    if U:
        grad[:, np.arange(U), target] -= label_post
    return grad


def logits_gradient(lattice: LogProbLattice, target: Sequence[int]) -> np.ndarray:
    """d loss / d logits, when ``lattice.values == log_softmax(logits)``.

    Equals ``occupancy(t, u) * softmax(t, u) - arc posteriors``.
    """
    grad = gradient(lattice, target)
    occupancy = -grad.sum(axis=-1, keepdims=True)
    return grad + occupancy * np.exp(lattice.values)


@dataclass(frozen=True)
class Alignment:
    moves: tuple[str, ...]

    def __post_init__(self):
        if not self.moves or self.moves[-1] != BLANK:
            raise LatticeError("alignment must end with a BLANK move")

    @property
    def num_frames(self) -> int:
        return sum(m == BLANK for m in self.moves)

    @property
    def num_labels(self) -> int:
        return sum(m == LABEL for m in self.moves)

    def states(self) -> list[tuple[int, int]]:
        """Lattice states visited before each move, starting at (0, 0)."""
        t = u = 0
        out = []
        for m in self.moves:
            out.append((t, u))
            if m == BLANK:
                t += 1
            else:
                u += 1
        return out


def enumerate_alignments(T: int, U: int) -> list[Alignment]:
    if T < 1 or U < 0:
        raise LatticeError("need T >= 1 and U >= 0")
    if T + U > MAX_ENUM_LEN:
        raise LatticeError(f"T + U = {T + U} exceeds enumeration guard {MAX_ENUM_LEN}")
    n = T + U - 1
    out = []
    for label_slots in itertools.combinations(range(n), U):
        moves = [BLANK] * n
        for i in label_slots:
            moves[i] = LABEL
        out.append(Alignment(tuple(moves) + (BLANK,)))
    return out


def alignment_logprob(lattice: LogProbLattice, target: Sequence[int], alignment: Alignment) -> float:
    total = 0.0
    for (t, u), move in zip(alignment.states(), alignment.moves):
        v = lattice.blank_id if move == BLANK else int(target[u])
        total += lattice.values[t, u, v]
    return total


def brute_force_logprob(lattice: LogProbLattice, target: Sequence[int]) -> float:
    """Log marginal by explicitly summing every alignment (small instances only)."""
    target = _check_target(lattice, target)
    aligns = enumerate_alignments(lattice.num_frames, lattice.target_len)
    scores = [alignment_logprob(lattice, target, a) for a in aligns]
    return logsumexp(np.array(scores))


def num_alignments(T: int, U: int) -> int:
    return math.comb(T + U - 1, U)
