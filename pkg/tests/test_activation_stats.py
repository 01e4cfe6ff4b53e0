import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import stats_loops
from repsim.activation_stats import layer_stats, model_stats, stats_csv
from repsim.activation_store import ActivationSet, ActivationTensor
from repsim.errors import EmptySet
from repsim.fixtures import gaussian_stream


def tensor(values, shape, layer=0, model="m"):
    return ActivationTensor(model, layer, np.asarray(values, dtype=np.float32).reshape(shape))


def test_constant_tensor():
    s = layer_stats(tensor([0.5] * 16, (2, 2, 2, 2)))
    assert s.row() == (0.5, 0.5, 0.0, 0.5, 0.5)


def test_four_values():
    s = layer_stats(tensor([1, 2, 3, 4], (1, 1, 1, 4)))
    assert (s.mean, s.median, s.min, s.max) == (2.5, 2.5, 1.0, 4.0)
    assert s.std == pytest.approx(math.sqrt(1.25), abs=1e-15)


def test_odd_count_median():
    assert layer_stats(tensor([5, 1, 3], (3, 1))).median == 3.0


def test_loop_oracle_large_layer():
    values = gaussian_stream(21, 200 * 8 * 8 * 16).astype(np.float32).reshape(200, 8, 8, 16)
    got = layer_stats(tensor(values, values.shape)).row()
    expected = stats_loops(values)
    for a, b in zip(got, expected):
        assert a == pytest.approx(b, abs=1e-9, rel=0)


def _set(layers, model="m"):
    return ActivationSet(model, 0, (1, 1), {i: tensor(v, (len(v), 1), i, model) for i, v in enumerate(layers)})


def test_model_average_is_unweighted_over_layers():
    m = model_stats(_set([[0.0, 0.0], [1.0, 3.0]]))
    assert [ls.mean for ls in m.per_layer] == [0.0, 2.0]
    assert m.averaged.mean == 1.0
    assert m.averaged.std == 0.5
    assert m.averaged.min == 0.5 and m.averaged.max == 1.5
    assert not m.pooled


def test_model_pooled():
    m = model_stats(_set([[0.0, 0.0], [1.0, 3.0]]), pooled=True)
    assert m.averaged.row() == (1.0, 0.5, pytest.approx(math.sqrt(1.5)), 0.0, 3.0)
    assert m.pooled


def test_constant_model_has_zero_spread():
    m = model_stats(_set([[0.25] * 4] * 3))
    assert m.averaged.std == 0.0


def test_empty_set_rejected():
    with pytest.raises(EmptySet):
        model_stats(None)


@given(st.integers(0, 2**31), st.floats(0.01, 100.0))
def test_positive_scaling(seed, alpha):
    v = gaussian_stream(seed, 60).astype(np.float32)
    base = layer_stats(tensor(v, (6, 10)))
    scaled = layer_stats(tensor(v.astype(np.float64) * alpha, (6, 10)))
    # float32 storage of the scaled copy costs a relative 2^-24 per value
    for a, b in zip(scaled.row(), base.row()):
        assert a == pytest.approx(alpha * b, rel=1e-6, abs=1e-6 * alpha)


@given(st.integers(0, 2**31), st.randoms(use_true_random=False))
def test_shuffle_invariance(seed, rnd):
    v = gaussian_stream(seed, 48).astype(np.float32)
    perm = list(range(48))
    rnd.shuffle(perm)
    a = layer_stats(tensor(v, (4, 12))).row()
    b = layer_stats(tensor(v[perm], (4, 12))).row()
    for x, y in zip(a, b):
        assert x == pytest.approx(y, abs=1e-12)


def test_csv_layout():
    text = stats_csv(model_stats(_set([[1.0, 2.0, 3.0, 4.0]], model="a")))
    lines = text.splitlines()
    assert lines[0] == "model_id,layer_index,mean,median,std,min,max"
    assert lines[1] == "a,0,2.5,2.5,1.11803399,1,4"
    assert lines[2] == "a,ALL,2.5,2.5,1.11803399,1,4"
