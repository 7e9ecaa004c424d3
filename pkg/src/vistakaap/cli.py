"""Command-line entry point: ``vistakaap <subcommand> ...``.

Exit codes: 0 success, 1 validation breach, 2 parse/config error,
3 shape mismatch, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import labelfuse as lf
from .errors import ConfigError, NumericError, ShapeError
from .heatmap import write_pgm
from .kaap import DEFAULT_K, explain
from .kselect import DEFAULT_Q, DEFAULT_THRESHOLD, select_k
from .predictor import (
    CLASSES,
    MODALITIES,
    InputSpec,
    ModalityMask,
    MultimodalSample,
    load_model,
    make_toy_model,
    save_model,
)
from .tensorio import dumps_json, dumps_jsonl_record, fmt_float, write_text

log = logging.getLogger("vistakaap")

EXIT_BREACH, EXIT_CONFIG, EXIT_SHAPE, EXIT_NUMERIC = 1, 2, 3, 4


def _load_sample(path) -> MultimodalSample:
    try:
        with open(path, encoding="utf-8") as fh:
            return MultimodalSample.from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read sample {path}: {exc}") from exc


def _load_samples(paths: list[str]) -> list[MultimodalSample]:
    out = []
    for p in paths:
        try:
            with open(p, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read samples {p}: {exc}") from exc
        docs = doc if isinstance(doc, list) else [doc]
        out += [MultimodalSample.from_dict(d) for d in docs]
    return out


def _outdir(path) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _threads(n: int | None) -> int:
    return max(1, n or os.cpu_count() or 1)


# subcommands ---------------------------------------------------------------

def cmd_predict(args) -> int:
    model = load_model(args.model)
    sample = _load_sample(args.sample)
    mask = ModalityMask.all()
    if args.mask:
        keep = set(args.mask.split(","))
        unknown = keep - set(MODALITIES) - {"none"}
        if unknown:
            raise ConfigError(f"unknown modalities in --mask: {sorted(unknown)}")
        mask = ModalityMask(*(m in keep for m in MODALITIES))
    probs = model.predict_masked(sample, mask)
    sys.stdout.write(dumps_json({"scores": [float(p) for p in probs], "label": CLASSES[int(np.argmax(probs))]}))
    return 0


def cmd_explain(args) -> int:
    model = load_model(args.model)
    sample = _load_sample(args.sample)
    out = _outdir(args.out)
    ks = {"image": args.k_image, "speech": args.k_speech, "text": args.k_text}
    report = explain(model, sample, k=ks, target=args.target, threads=_threads(args.threads))
    doc = report.to_dict()
    doc["seed"] = args.seed
    write_text(out / "report.json", dumps_json(doc))
    write_pgm(out / "image_map.pgm", report.maps["image"].values)
    write_pgm(out / "speech_map.pgm", report.maps["speech"].values[None, :])
    lines = ["position,token,attribution\n"]
    for i, (tok, v) in enumerate(zip(sample.text, report.maps["text"].values)):
        lines.append(f"{i},{int(tok)},{fmt_float(v)}\n")
    write_text(out / "text_map.csv", "".join(lines))
    imp = report.importance
    log.info("target=%s visual=%.6g spoken=%.6g textual=%.6g", CLASSES[report.target_class],
             imp.upsilon, imp.delta, imp.tau)
    return 0


def cmd_validate(args) -> int:
    from .kaap import kp_value
    from .validation import swapped_coefficient_kp, run_all

    kp_fn = swapped_coefficient_kp if args.mutate_kp_weight else kp_value
    report = run_all(seed=args.seed, kp_fn=kp_fn, threads=_threads(args.threads), n_games=args.games,
                     n_models=args.models, n_instances=args.instances)
    text = dumps_json(report)
    if args.out:
        write_text(_outdir(args.out) / "oracle_report.json", text)
    for name in ("shapley_equivalence", "additive_efficiency", "differential_kaap"):
        r = report[name]
        status = "PASS" if r["passed"] else "FAIL"
        worst = r.get("max_abs_diff", max(r.get("max_contribution_error", 0), r.get("max_efficiency_error", 0)))
        print(f"{status} {name}: max error {worst:.3e} (tol {r['tolerance']:.0e})")
    gap = report["kp_vs_shapley_gap_3p"]
    print(f"INFO kp(k=3) vs 3-player Shapley: mean gap {gap['mean_gap']:.4f}, max {gap['max_gap']:.4f}")
    if not report["passed"]:
        for name in ("shapley_equivalence", "additive_efficiency", "differential_kaap"):
            r = report[name]
            if not r["passed"]:
                offending = r.get("worst_instance")
                if name == "differential_kaap":
                    offending = max(r["per_instance"], key=lambda x: x["max_abs_diff"])
                print(f"offending instance for {name}: {json.dumps(offending, default=float)}", file=sys.stderr)
        return EXIT_BREACH
    return 0


def cmd_train(args) -> int:
    from .fusionnet import TrainConfig, build_topology, make_synthetic_dataset, modality_ablation, split, train

    spec = InputSpec(image_shape=(args.side, args.side, 3), speech_shape=(args.side, args.side),
                     text_length=args.text_length, vocab_size=args.vocab)
    topo = build_topology(seed=args.seed, D=args.D, variant=args.variant, spec=spec)
    data = make_synthetic_dataset(args.n_samples, args.seed, spec)
    tr, te = split(data, 0.8)
    cfg = TrainConfig(epochs=args.epochs, lr=args.lr, batch_size=args.batch_size, optimizer=args.optimizer,
                      patience=args.patience if args.patience > 0 else None, seed=args.seed)
    report = train(topo, tr, cfg, val_set=te)
    out = _outdir(args.out)
    from .fusionnet import FusionPredictor

    save_model(FusionPredictor(topo), out / "checkpoint.json")
    write_text(out / "training.jsonl", "".join(dumps_jsonl_record(r) for r in report.records))
    summary = {
        "variant": topo.variant,
        "epochs_run": len(report.records),
        "stopped_early": report.stopped_early,
        "final_train_accuracy": report.final_train_accuracy,
        "test_accuracy_by_mask": modality_ablation(topo, te),
    }
    write_text(out / "summary.json", dumps_json(summary))
    print(f"train accuracy {summary['final_train_accuracy']:.4f} after {summary['epochs_run']} epochs")
    return 0


def cmd_selectk(args) -> int:
    model = load_model(args.model)
    samples = _load_samples(args.samples)
    mods = MODALITIES if args.modality == "all" else (args.modality,)
    rows = ["modality,k,dice,selected\n"]
    for m in mods:
        curve = select_k(model, samples, m, k_max=args.k_max, threshold=args.threshold, q=args.q,
                         threads=_threads(args.threads))
        for mod, k, d, sel in curve.csv_rows():
            rows.append(f"{mod},{k},{fmt_float(d)},{sel}\n")
        print(f"{m}: selected k = {curve.selected_k}")
    write_text(_outdir(args.out) / "dice_curve.csv", "".join(rows))
    return 0


def cmd_labelfuse(args) -> int:
    try:
        text = Path(args.input).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {args.input}: {exc}") from exc
    recs = lf.read_records_csv(text)
    fused = [lf.fuse_label(r) for r in recs]
    kept, rep = lf.threshold_filter(fused, args.tau)
    kept_objs = {id(k) for k in kept}
    kept_idx = {i for i, f in enumerate(fused) if id(f) in kept_objs}
    out = _outdir(args.out)
    write_text(out / "fused.csv", lf.fused_csv(recs, fused, kept_idx))
    taus = [float(t) for t in args.sweep.split(",")] if args.sweep else [0.0, 0.33, 0.55, 1.0]
    write_text(out / "sweep.csv", lf.sweep_csv(lf.threshold_sweep(fused, taus)))
    for note in rep.notes:
        log.warning(note)
    print(f"kept {len(kept)} of {len(fused)} records at tau={args.tau}")
    return 0


def cmd_toy(args) -> int:
    """Write a toy model and a random sample, handy for trying the other commands."""
    spec = InputSpec(image_shape=(args.side, args.side, 3), speech_shape=(args.side, args.side),
                     text_length=args.text_length, vocab_size=args.vocab)
    config = {"input": spec.to_dict(), "seed": args.seed, "output": args.output}
    if args.kind == "table-game":
        config["values"] = [float(v) for v in args.values.split(",")]
    if args.kind == "fusion":
        config["D"] = args.D
    model = make_toy_model(args.kind, config)
    out = _outdir(args.out)
    save_model(model, out / "model.json")
    sample = spec.random_sample(np.random.default_rng(args.seed))
    write_text(out / "sample.json", dumps_json(sample.to_dict()))
    return 0


# parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vistakaap", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("predict", help="class scores for one sample")
    s.add_argument("--model", required=True)
    s.add_argument("--sample", required=True)
    s.add_argument("--mask", help="comma-separated modalities to keep (others zeroed), or 'none'")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("explain", help="KAAP maps and modality importance for one sample")
    s.add_argument("--model", required=True)
    s.add_argument("--sample", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--k-image", type=int, default=DEFAULT_K["image"])
    s.add_argument("--k-speech", type=int, default=DEFAULT_K["speech"])
    s.add_argument("--k-text", type=int, default=DEFAULT_K["text"])
    s.add_argument("--target", type=int, default=None, help="class index override (default: predicted)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int, default=None)
    s.set_defaults(func=cmd_explain)

    s = sub.add_parser("validate", help="oracle comparison suites")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--out", default=None)
    s.add_argument("--games", type=int, default=1000)
    s.add_argument("--models", type=int, default=100)
    s.add_argument("--instances", type=int, default=50)
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--mutate-kp-weight", action="store_true",
                   help="negative control: weight the full-coalition term by 1/(1-k)")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("train", help="train a fusion topology on seeded synthetic data")
    s.add_argument("--variant", default="vista")
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--n-samples", type=int, default=500)
    s.add_argument("--side", type=int, default=16)
    s.add_argument("--text-length", type=int, default=6)
    s.add_argument("--vocab", type=int, default=16)
    s.add_argument("--D", type=int, default=32)
    s.add_argument("--epochs", type=int, default=50)
    s.add_argument("--lr", type=float, default=1e-4)
    s.add_argument("--batch-size", type=int, default=64)
    s.add_argument("--optimizer", choices=("sgd", "adam"), default="sgd")
    s.add_argument("--patience", type=int, default=5, help="early-stopping patience; 0 disables")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("selectk", help="dice-based k selection")
    s.add_argument("--model", required=True)
    s.add_argument("--samples", nargs="+", required=True, help="sample JSON files (object or list)")
    s.add_argument("--modality", choices=MODALITIES + ("all",), default="all")
    s.add_argument("--k-max", type=int, default=10)
    s.add_argument("--q", type=float, default=DEFAULT_Q)
    s.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_selectk)

    s = sub.add_parser("labelfuse", help="fuse per-modality probabilities into labels")
    s.add_argument("--input", required=True)
    s.add_argument("--tau", type=float, default=0.55)
    s.add_argument("--sweep", default=None, help="comma-separated tau grid for the sweep report")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_labelfuse)

    s = sub.add_parser("toy", help="write a toy model and a random sample")
    s.add_argument("--kind", choices=("constant", "additive", "table-game", "fusion"), default="additive")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--side", type=int, default=16)
    s.add_argument("--text-length", type=int, default=6)
    s.add_argument("--vocab", type=int, default=16)
    s.add_argument("--D", type=int, default=8)
    s.add_argument("--output", choices=("scores", "probs"), default="probs")
    s.add_argument("--values", default="0,0,0,1,0,1,1,1", help="table-game values by bitmask")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_toy)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ShapeError as exc:
        print(f"shape error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
