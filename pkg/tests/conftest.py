import time

import numpy as np
import pytest

from s2st_rnnt import lattice as lat
from s2st_rnnt import toymodel as tm

ACCEPTANCE_RESULTS: list[str] = []


def record(criterion: int, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion:>2}: {detail}"
    ACCEPTANCE_RESULTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


def random_lattice(rng, T, U, V=6, scale=1.0):
    logits = rng.normal(size=(T, U + 1, V)) * scale
    target = rng.integers(0, V - 1, size=U)
    return lat.LogProbLattice.from_logits(logits), target


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def _train(task, training):
    corpus = tm.generate_corpus(task, 2000)
    start = time.perf_counter()
    params, history = tm.train(tm.init_params(task.src_vocab, task.tgt_vocab, 32, seed=0), corpus, training)
    elapsed = time.perf_counter() - start
    return {"params": params, "model": tm.ToyTransducer(params), "task": task,
            "history": history, "seconds": elapsed, "steps": len(history)}


@pytest.fixture(scope="session")
def trained():
    """Toy model trained with the default recipe (V=16, d=32, swap_period=2, 2k utterances)."""
    return _train(tm.SynthTaskConfig(), tm.TrainConfig(log_every=0))


@pytest.fixture(scope="session")
def trained_long():
    """Model trained on utterances up to 20 symbols; the default one does not extrapolate to 40-80."""
    return _train(tm.SynthTaskConfig(max_len=20), tm.TrainConfig(steps=4000, learning_rate=0.003, log_every=0))


@pytest.fixture(scope="session")
def long_eval(trained_long):
    """Held-out long utterances plus one greedy decode pass reused by latency sweeps."""
    from dataclasses import replace

    from s2st_rnnt.decoder import BeamConfig
    from s2st_rnnt.pipeline import decode_utterance

    task = replace(trained_long["task"], min_len=40, max_len=80)
    corpus = tm.generate_corpus(task, 50, offset=2)
    beam = BeamConfig(beam_size=1)
    decoded = [decode_utterance(trained_long["model"], u.source_frames, beam) for u in corpus]
    return trained_long["model"], corpus, decoded
