"""Command-line entry point: gen-data, train, decode, simulate-latency, eval."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import checkpoint as ckpt
from .config import ExperimentConfig, from_dict, load_config
from .metrics import average_lagging
from .pipeline import latency_for_trace, run_pipeline
from .streaming import emission_timeline
from .toymodel import ToyTransducer, Utterance, generate_corpus, init_params, train

logger = logging.getLogger("s2st_rnnt")


class CliError(Exception):
    pass


# ---------------------------------------------------------------- file formats

def write_corpus(path, corpus) -> None:
    lines = [json.dumps({"source": u.source_frames, "target": u.target_tokens}, sort_keys=True) for u in corpus]
    _write_text(path, "".join(line + "\n" for line in lines))


def read_corpus(path) -> list[Utterance]:
    out = []
    for n, line in enumerate(_read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out.append(Utterance([int(x) for x in rec["source"]], [int(x) for x in rec["target"]]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CliError(f"{path}:{n}: malformed corpus record ({exc})") from exc
    return out


def read_jsonl(path) -> list[dict]:
    out = []
    for n, line in enumerate(_read_text(path).splitlines(), start=1):
        if line.strip():
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CliError(f"{path}:{n}: malformed JSON ({exc})") from exc
    return out


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _write_text(path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_json(path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_model(path, config: ExperimentConfig) -> ToyTransducer:
    try:
        params, meta = ckpt.load(path)
    except OSError as exc:
        raise CliError(f"cannot read checkpoint {path}: {exc.strerror or exc}") from exc
    except ckpt.CheckpointError as exc:
        raise CliError(f"{path}: {exc}") from exc
    reduction = meta.get("time_reduction", config.time_reduction)
    if reduction != config.time_reduction:
        raise CliError(f"checkpoint was trained with time_reduction={reduction}, config has {config.time_reduction}")
    return ToyTransducer(params, reduction)


# ---------------------------------------------------------------- commands

def cmd_gen_data(config: ExperimentConfig, out_path, n: int | None = None, offset: int = 0) -> int:
    n = config.data.num_train if n is None else n
    corpus = generate_corpus(config.task, n, offset)
    write_corpus(out_path, corpus)
    logger.info("wrote %d utterances to %s", len(corpus), out_path)
    return len(corpus)


def cmd_train(config: ExperimentConfig, data_path, out_path) -> None:
    corpus = read_corpus(data_path)
    if not corpus:
        raise CliError(f"{data_path}: corpus is empty")
    t = config.task
    params = init_params(t.src_vocab, t.tgt_vocab, config.model.dim, config.model.init_seed, config.model.init_scale)
    params, history = train(params, corpus, config.training, config.time_reduction)
    meta = {
        "config": config.to_dict(),
        "time_reduction": config.time_reduction,
        "final_loss": history[-1] if history else None,
    }
    try:
        ckpt.save(out_path, params, meta)
    except OSError as exc:
        raise CliError(f"cannot write {out_path}: {exc.strerror or exc}") from exc


def cmd_decode(config: ExperimentConfig, checkpoint_path, data_path, out_path) -> None:
    from .pipeline import decode_utterance

    model = load_model(checkpoint_path, config)
    lines = []
    for i, utt in enumerate(read_corpus(data_path)):
        tokens, frames, n_enc = decode_utterance(model, utt.source_frames, config.pipeline.beam)
        rec = {"index": i, "tokens": tokens, "frame_indices": frames,
               "num_encoder_frames": n_enc, "reference": utt.target_tokens}
        lines.append(json.dumps(rec, sort_keys=True) + "\n")
    _write_text(out_path, "".join(lines))


def cmd_simulate_latency(config: ExperimentConfig, hypotheses_path, out_path) -> dict:
    entries = []
    for rec in read_jsonl(hypotheses_path):
        try:
            frames, n_enc, tokens = rec["frame_indices"], rec["num_encoder_frames"], rec["tokens"]
        except KeyError as exc:
            raise CliError(f"{hypotheses_path}: record missing field {exc}") from exc
        sem, ac, n_ac = latency_for_trace(frames, n_enc, config.pipeline, tokens)
        entries.append({
            "index": rec.get("index", len(entries)),
            "semantic": sem.to_dict(),
            "acoustic": ac.to_dict(),
            "emission_times_ms": emission_timeline(frames, config.pipeline.stream, n_enc).emission_times_ms,
            "num_acoustic_frames": n_ac,
        })
    sem_vals = [e["semantic"]["average_lagging_ms"] for e in entries if e["semantic"]["average_lagging_ms"] is not None]
    ac_vals = [e["acoustic"]["average_lagging_ms"] for e in entries if e["acoustic"]["average_lagging_ms"] is not None]
    report = {
        "config": config.to_dict(),
        "utterances": entries,
        "mean_semantic_al_ms": sum(sem_vals) / len(sem_vals) if sem_vals else 0.0,
        "mean_acoustic_al_ms": sum(ac_vals) / len(ac_vals) if ac_vals else 0.0,
    }
    write_json(out_path, report)
    return report


def cmd_eval(config: ExperimentConfig, checkpoint_path, data_path, out_path, buffers=None) -> dict:
    model = load_model(checkpoint_path, config)
    corpus = read_corpus(data_path)
    report = run_pipeline(model, corpus, config.pipeline)
    out = {"config": config.to_dict(), "report": report.to_dict()}
    if buffers:
        decoded = [(u.tokens, u.frame_indices, u.num_encoder_frames) for u in report.utterances]
        sweep = []
        for b in buffers:
            relay = replace(config.pipeline.relay, inference_buffer=b)
            pipe = replace(config.pipeline, relay=relay)
            r = run_pipeline(model, corpus, pipe, decoded=decoded)
            sweep.append({"inference_buffer": b, "mean_semantic_al_ms": r.mean_semantic_al_ms,
                          "mean_acoustic_al_ms": r.mean_acoustic_al_ms, "bleu": r.bleu})
        out["buffer_sweep"] = sweep
    write_json(out_path, out)
    return out


# ---------------------------------------------------------------- argparse

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="s2st-rnnt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment config (defaults used if omitted)")
        p.add_argument("--seed", type=int, help="override task, init and training seeds")
        p.add_argument("--out", help="output path (defaults from config paths)")

    p = sub.add_parser("gen-data", help="write a synthetic corpus as JSON lines")
    common(p)
    p.add_argument("--split", choices=["train", "eval"], default="train")
    p.add_argument("--n", type=int, help="number of utterances")

    p = sub.add_parser("train", help="train the toy transducer and write a checkpoint")
    common(p)
    p.add_argument("--data")

    p = sub.add_parser("decode", help="decode a corpus, recording per-token frame indices")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--data")

    p = sub.add_parser("simulate-latency", help="latency report from a hypotheses file")
    common(p)
    p.add_argument("--hypotheses", required=True)

    p = sub.add_parser("eval", help="full streaming pipeline evaluation")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--buffers", help="comma-separated relay buffer sweep, e.g. 10,30,50")
    return parser


def _config(args) -> ExperimentConfig:
    if args.config:
        try:
            config = load_config(args.config)
        except OSError as exc:
            raise CliError(f"cannot read config {args.config}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise CliError(f"{args.config}: invalid JSON ({exc})") from exc
    else:
        config = from_dict({})
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config = _config(args)
        paths = config.paths
        if args.command == "gen-data":
            if args.split == "train":
                n, offset, out = config.data.num_train, 0, paths.data
            else:
                n, offset, out = config.data.num_eval, config.data.eval_offset, paths.eval_data
            cmd_gen_data(config, args.out or out, args.n if args.n is not None else n, offset)
        elif args.command == "train":
            cmd_train(config, args.data or paths.data, args.out or paths.checkpoint)
        elif args.command == "decode":
            cmd_decode(config, args.checkpoint or paths.checkpoint, args.data or paths.eval_data,
                       args.out or "hypotheses.jsonl")
        elif args.command == "simulate-latency":
            cmd_simulate_latency(config, args.hypotheses, args.out or paths.report)
        elif args.command == "eval":
            buffers = [int(b) for b in args.buffers.split(",")] if args.buffers else None
            cmd_eval(config, args.checkpoint or paths.checkpoint, args.data or paths.eval_data,
                     args.out or paths.report, buffers)
    except (CliError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
