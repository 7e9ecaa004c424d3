"""Dice convergence of attribution maps as k grows, for a random additive or network model."""

import argparse
import warnings

import numpy as np

from vistakaap.fusionnet import FusionPredictor, build_topology
from vistakaap.kselect import select_k
from vistakaap.predictor import MODALITIES, AdditiveModel, InputSpec


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", choices=["additive", "fusion"], default="fusion")
    ap.add_argument("--samples", type=int, default=3)
    ap.add_argument("--k-max", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()
    spec = InputSpec(image_shape=(16, 16, 3), speech_shape=(16, 16), text_length=12, vocab_size=16)
    if args.model == "additive":
        model = AdditiveModel.random(spec, args.seed, output="probs")
    else:
        model = FusionPredictor(build_topology(seed=args.seed, D=8, spec=spec))
    rng = np.random.default_rng(args.seed)
    samples = [spec.random_sample(rng) for _ in range(args.samples)]
    for m in MODALITIES:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            curve = select_k(model, samples, m, k_max=args.k_max, threads=args.threads)
        pts = "  ".join(f"{k}:{d:.2f}" for k, d in curve.points)
        print(f"{m:<7} selected k={curve.selected_k:<3} {pts}")


if __name__ == "__main__":
    main()
