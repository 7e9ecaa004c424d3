"""Seeded comparison suites between the attribution engine and the oracles."""

from __future__ import annotations

import time
import warnings

import numpy as np

from .fusionnet import FusionPredictor, build_topology
from .kaap import KPFunction, kaap_map, kp_value, modality_importance
from .oracle import exact_shapley, reference_kaap, reference_modality_importance
from .predictor import MODALITIES, AdditiveModel, InputSpec, TableGameModel, ValueFunction

SMALL_SPEC = InputSpec(image_shape=(8, 8, 3), speech_shape=(8, 8), text_length=6, vocab_size=10)

TOLERANCES = {
    "shapley_equivalence": 1e-12,
    "additive_efficiency": 1e-9,
    "differential_kaap": 1e-12,
}


def swapped_coefficient_kp(mc_single: float, mc_full: float, k: int) -> float:
    """KP with 1/(1-k) on the full-coalition term; a negative control that must fail."""
    return (1.0 / k) * mc_single + (1.0 / (1 - k)) * mc_full


def random_game(rng: np.random.Generator, n: int) -> ValueFunction:
    return ValueFunction(n, tuple(rng.normal(size=1 << n)))


def shapley_equivalence(n_games: int = 1000, seed: int = 42, kp_fn: KPFunction = kp_value) -> dict:
    """max |KP(k=2) - Shapley| over random two-player games."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst, worst_idx = 0.0, -1
    for g in range(n_games):
        game = random_game(rng, 2)
        phi = exact_shapley(game).phi
        for i in range(2):
            other = 1 - i
            mc_single = game(1 << i) - game(0)
            mc_full = game(3) - game(1 << other)
            err = abs(kp_fn(mc_single, mc_full, 2) - phi[i])
            if err > worst:
                worst, worst_idx = err, g
    return {
        "instances": n_games,
        "max_abs_diff": float(worst),
        "worst_instance": worst_idx,
        "tolerance": TOLERANCES["shapley_equivalence"],
        "passed": bool(worst < TOLERANCES["shapley_equivalence"]),
        "seconds": time.perf_counter() - t0,
    }


def additive_efficiency(n_models: int = 100, seed: int = 42) -> dict:
    """Modality importance on additive score models versus true contributions."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst_contrib, worst_sum, worst_idx = 0.0, 0.0, -1
    for idx in range(n_models):
        model = AdditiveModel.random(SMALL_SPEC, int(rng.integers(2**31)), output="scores")
        sample = SMALL_SPEC.random_sample(rng)
        imp = modality_importance(model, sample)
        c = imp.target_class
        contrib = model.contributions(sample)
        p_f = model.predict(sample)[c]
        p_b = model.predict(SMALL_SPEC.zeros())[c]
        e1 = max(abs(imp.as_dict()[m] - contrib[m][c]) for m in MODALITIES)
        e2 = abs(imp.total() - (p_f - p_b))
        if max(e1, e2) > max(worst_contrib, worst_sum):
            worst_idx = idx
        worst_contrib, worst_sum = max(worst_contrib, e1), max(worst_sum, e2)
    tol = TOLERANCES["additive_efficiency"]
    return {
        "instances": n_models,
        "max_contribution_error": float(worst_contrib),
        "max_efficiency_error": float(worst_sum),
        "worst_instance": worst_idx,
        "tolerance": tol,
        "passed": bool(worst_contrib < tol and worst_sum < tol),
        "seconds": time.perf_counter() - t0,
    }


def random_instance(rng: np.random.Generator, idx: int):
    """A small model/sample pair; cycles through linear, softmax and network models."""
    kind = idx % 3
    if kind == 0:
        model = AdditiveModel.random(SMALL_SPEC, int(rng.integers(2**31)), output="scores")
    elif kind == 1:
        model = AdditiveModel.random(SMALL_SPEC, int(rng.integers(2**31)), scale=3.0, output="probs")
    else:
        model = FusionPredictor(build_topology(seed=int(rng.integers(2**31)), D=4, spec=SMALL_SPEC))
    sample = SMALL_SPEC.random_sample(rng)
    text = sample.text.copy()
    text[rng.random(text.size) < 0.2] = 0  # some padding positions
    return model, sample.replace(text=text)


def differential_kaap(
    n_instances: int = 50,
    seed: int = 42,
    kp_fn: KPFunction = kp_value,
    threads: int = 1,
) -> dict:
    """Element-wise max difference between kaap_map and the literal reference."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    per_instance = []
    for idx in range(n_instances):
        model, sample = random_instance(rng, idx)
        k_max = int(rng.integers(2, 6))
        diffs = {}
        mismatch = []
        for m in MODALITIES:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                fast = kaap_map(model, sample, m, k_max, threads=threads, kp_fn=kp_fn)
                ref = reference_kaap(model, sample, m, k_max, target=fast.target_class)
            d = float(np.max(np.abs(fast.values - ref.values)))
            if fast.normalized != ref.normalized:
                mismatch.append(m)
            diffs[m] = d
        imp = modality_importance(model, sample)
        ref_imp = reference_modality_importance(model, sample)
        diffs["modality_importance"] = max(
            abs(imp.upsilon - ref_imp.upsilon), abs(imp.delta - ref_imp.delta), abs(imp.tau - ref_imp.tau)
        )
        per_instance.append({"instance": idx, "k_max": k_max, "max_abs_diff": max(diffs.values()),
                             "normalized_mismatch": mismatch, **diffs})
    worst = max(r["max_abs_diff"] for r in per_instance)
    tol = TOLERANCES["differential_kaap"]
    flags_ok = not any(r["normalized_mismatch"] for r in per_instance)
    return {
        "instances": n_instances,
        "max_abs_diff": float(worst),
        "per_instance": per_instance,
        "tolerance": tol,
        "passed": bool(worst < tol and flags_ok),
        "seconds": time.perf_counter() - t0,
    }


def kp_shapley_gap(n_games: int = 1000, seed: int = 42, bins: int = 10) -> dict:
    """Distribution of |KP(k=3) - Shapley| on random three-player table games.

    KP is an approximation for three players, so this is recorded rather
    than asserted.
    """
    rng = np.random.default_rng(seed)
    spec = InputSpec(image_shape=(2, 2, 1), speech_shape=(2, 2), text_length=2, vocab_size=3)
    sample = spec.random_sample(rng)
    gaps = []
    for _ in range(n_games):
        game = random_game(rng, 3)
        model = TableGameModel(spec, game)
        imp = reference_modality_importance(model, sample, target=0)
        kp = np.array([imp.upsilon, imp.delta, imp.tau])
        gaps.append(float(np.max(np.abs(kp - exact_shapley(game).phi))))
    gaps = np.array(gaps)
    hi = float(gaps.max()) if gaps.size and gaps.max() > 0 else 1.0
    counts, edges = np.histogram(gaps, bins=bins, range=(0.0, hi))
    return {
        "instances": n_games,
        "mean_gap": float(gaps.mean()),
        "max_gap": float(gaps.max()),
        "histogram": {"edges": [float(e) for e in edges], "counts": [int(c) for c in counts]},
    }


def run_all(seed: int = 42, kp_fn: KPFunction = kp_value, threads: int = 1,
            n_games: int = 1000, n_models: int = 100, n_instances: int = 50) -> dict:
    report = {
        "seed": seed,
        "shapley_equivalence": shapley_equivalence(n_games, seed, kp_fn),
        "additive_efficiency": additive_efficiency(n_models, seed),
        "differential_kaap": differential_kaap(n_instances, seed, kp_fn, threads),
        "kp_vs_shapley_gap_3p": kp_shapley_gap(n_games, seed),
    }
    report["passed"] = all(report[k]["passed"] for k in TOLERANCES)
    return report
