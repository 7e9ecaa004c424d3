import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vistakaap.errors import ConfigError, ShapeError
from vistakaap.kselect import dice, select_k, top_fraction_mask
from vistakaap.predictor import AdditiveModel, ConstantModel

from conftest import SMALL

maps = arrays(np.float64, st.integers(1, 64), elements=st.floats(-10, 10))


def test_identical_maps():
    a = np.array([0.1, 0.5, 0.2, 0.9])
    assert dice(a, a) == 1.0


def test_disjoint_supports():
    assert dice(np.array([1.0, 0, 0, 0]), np.array([0, 0, 0, 1.0])) == 0.0


def test_singleton_overlap():
    assert dice(np.array([5.0, 1, 2, 3]), np.array([9.0, 0, 0, 0]), q=0.25) == 1.0


def test_tie_break_lowest_index():
    assert top_fraction_mask(np.zeros(4), 0.5).tolist() == [True, True, False, False]


def test_domain_mismatch():
    with pytest.raises(ShapeError):
        dice(np.zeros(4), np.zeros(5))


def test_bad_q():
    with pytest.raises(ConfigError):
        dice(np.zeros(4), np.zeros(4), q=0.0)


@given(maps, st.floats(0.01, 1.0))
def test_symmetric_and_reflexive(a, q):
    b = a[::-1].copy()
    assert dice(a, b, q) == dice(b, a, q)
    assert dice(a, a, q) == 1.0
    assert 0.0 <= dice(a, b, q) <= 1.0


def test_constant_model_selects_three():
    s = SMALL.random_sample(np.random.default_rng(0))
    curve = select_k(ConstantModel(SMALL), [s], "text", k_max=6)
    assert curve.selected_k == 3 and all(d == 1.0 for _, d in curve.points)
    assert [k for k, _ in curve.points] == [3, 4, 5, 6]


def test_fallback_to_k_max_warns():
    rng = np.random.default_rng(1)
    model = AdditiveModel.random(SMALL, 3, output="probs")
    samples = [SMALL.random_sample(rng) for _ in range(2)]
    with pytest.warns(RuntimeWarning, match="never reached"):
        curve = select_k(model, samples, "image", k_max=5, threshold=1.01)
    assert curve.selected_k == 5


def test_deterministic_and_in_range():
    rng = np.random.default_rng(2)
    model = AdditiveModel.random(SMALL, 4, output="probs")
    samples = [SMALL.random_sample(rng) for _ in range(2)]
    a = select_k(model, samples, "speech", k_max=6, threshold=0.9)
    b = select_k(model, samples, "speech", k_max=6, threshold=0.9)
    assert a.points == b.points and a.selected_k == b.selected_k
    assert 2 <= a.selected_k <= 6


def test_empty_samples():
    with pytest.raises(ConfigError):
        select_k(ConstantModel(SMALL), [], "image")
