"""Per-class kept share as the confidence threshold rises, on random probability records."""

import argparse

import numpy as np

from vistakaap.labelfuse import ModalityProbRecord, fuse_label, threshold_filter
from vistakaap.predictor import CLASSES


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--alpha", type=float, default=1.0, help="Dirichlet concentration")
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    recs = [fuse_label(ModalityProbRecord(*(rng.dirichlet(np.full(4, args.alpha)) for _ in range(3))))
            for _ in range(args.n)]
    print("tau    kept  " + "  ".join(f"{c:>6}" for c in CLASSES))
    for tau in (0.0, 0.2, 0.33, 0.45, 0.55, 0.7, 0.85, 1.0):
        kept, rep = threshold_filter(recs, tau)
        ratio = rep.kept_ratio()
        print(f"{tau:<5}  {len(kept):>4}  " + "  ".join(f"{ratio[c]:6.3f}" for c in range(4)))


if __name__ == "__main__":
    main()
