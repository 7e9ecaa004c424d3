"""Train the fusion network and its pair-subset baselines, then ablate modalities.

    python3 scripts/fusion_trend.py --epochs 200 --variants vista baseline#2 baseline#6
"""

import argparse
import time

from vistakaap.errors import RejectedConfigurationError
from vistakaap.fusionnet import build_topology, make_synthetic_dataset, modality_ablation, split, train
from vistakaap.predictor import InputSpec


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--D", type=int, default=32)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--optimizer", default="adam")
    ap.add_argument("--variants", nargs="+", default=["vista"])
    args = ap.parse_args()

    spec = InputSpec(image_shape=(16, 16, 3), speech_shape=(16, 16), text_length=6, vocab_size=16)
    tr, te = split(make_synthetic_dataset(args.n, args.seed, spec), 0.8)
    print("variant     epochs  train   all     image   speech  text    seconds")
    for v in args.variants:
        t0 = time.perf_counter()
        try:
            topo = build_topology(seed=args.seed, D=args.D, variant=v, spec=spec)
        except RejectedConfigurationError as e:
            print(f"{v:<11} skipped: {e}")
            continue
        rep = train(topo, tr, epochs=args.epochs, lr=args.lr, optimizer=args.optimizer, val_set=te)
        acc = modality_ablation(topo, te)
        print(f"{v:<11} {len(rep.records):>6}  {rep.final_train_accuracy:.3f}   {acc['all']:.3f}   "
              f"{acc['image']:.3f}   {acc['speech']:.3f}   {acc['text']:.3f}   {time.perf_counter() - t0:.1f}")


if __name__ == "__main__":
    main()
