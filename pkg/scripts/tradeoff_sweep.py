"""Latency/quality trade-off of a trained checkpoint over relay buffers and segment schedules.

Decodes once, then replays the same traces under each schedule. Prints a table.

    python3 scripts/train_toy.py --max-len 20 --steps 4000 --lr 0.003 --out runs/long.ckpt
    python3 scripts/tradeoff_sweep.py runs/long.ckpt
"""

import argparse
from dataclasses import replace

from s2st_rnnt import checkpoint
from s2st_rnnt import toymodel as tm
from s2st_rnnt.codec import RelayConfig
from s2st_rnnt.decoder import BeamConfig
from s2st_rnnt.pipeline import PipelineConfig, decode_utterance, run_pipeline
from s2st_rnnt.streaming import StreamConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("checkpoint")
    ap.add_argument("--buffers", default="10,30,50")
    ap.add_argument("--segments", default="20/4,32/6", help="segment/right-context pairs in encoder frames")
    ap.add_argument("--beam", type=int, default=1)
    ap.add_argument("--min-len", type=int, default=40)
    ap.add_argument("--max-len", type=int, default=80)
    ap.add_argument("-n", type=int, default=50)
    args = ap.parse_args()

    params, _ = checkpoint.load(args.checkpoint)
    model = tm.ToyTransducer(params)
    task = replace(tm.SynthTaskConfig(), min_len=args.min_len, max_len=args.max_len)
    corpus = tm.generate_corpus(task, args.n, offset=2)
    beam = BeamConfig(beam_size=args.beam)
    decoded = [decode_utterance(model, u.source_frames, beam) for u in corpus]

    print(f"{'segment':>8} {'buffer':>6} {'sem AL ms':>10} {'ac AL ms':>10} {'BLEU':>6}")
    for seg in args.segments.split(","):
        s, rc = (int(x) for x in seg.split("/"))
        for b in (int(x) for x in args.buffers.split(",")):
            cfg = PipelineConfig(StreamConfig(segment_frames=s, right_context_frames=rc),
                                 RelayConfig(inference_buffer=b), beam)
            r = run_pipeline(model, corpus, cfg, decoded)
            print(f"{seg:>8} {b:>6} {r.mean_semantic_al_ms:>10.1f} {r.mean_acoustic_al_ms:>10.1f} {r.bleu:>6.2f}")


if __name__ == "__main__":
    main()
