"""Train the toy transducer on the synthetic swap task and report held-out accuracy.

    python3 scripts/train_toy.py --steps 3000 --max-len 10 --out runs/toy.ckpt
"""

import argparse
import logging
import time
from dataclasses import replace

from s2st_rnnt import checkpoint
from s2st_rnnt import toymodel as tm
from s2st_rnnt.decoder import greedy_decode


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=3000)
    ap.add_argument("--lr", type=float, default=0.005)
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--max-len", type=int, default=10)
    ap.add_argument("--num-train", type=int, default=2000)
    ap.add_argument("--num-eval", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="optional checkpoint path")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    task = replace(tm.SynthTaskConfig(), max_len=args.max_len, seed=args.seed)
    corpus = tm.generate_corpus(task, args.num_train)
    params = tm.init_params(task.src_vocab, task.tgt_vocab, args.dim, seed=args.seed)
    start = time.perf_counter()
    params, history = tm.train(params, corpus, tm.TrainConfig(steps=args.steps, learning_rate=args.lr, seed=args.seed))
    elapsed = time.perf_counter() - start

    model = tm.ToyTransducer(params)
    heldout = tm.generate_corpus(task, args.num_eval, offset=1)
    correct = sum(greedy_decode(model, model.encode(u.source_frames)).tokens == u.target_tokens for u in heldout)
    print(f"steps={len(history)} final_loss={history[-1]:.4f} seconds={elapsed:.1f} "
          f"heldout_exact={correct / len(heldout):.3f}")
    if args.out:
        checkpoint.save(args.out, params, {"task": vars(task), "steps": len(history)})


if __name__ == "__main__":
    main()
