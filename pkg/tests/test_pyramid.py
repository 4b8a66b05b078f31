import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import range_mean
from tpmkl.errors import GranularityError, ParameterError
from tpmkl.features_io import FrameSequence
from tpmkl.pyramid import (NodeId, aggregate, all_nodes, children, level_nodes,
                           levels_from_rows, n_nodes, node_frames, spectrogram)


def test_node_order_and_count():
    assert all_nodes(3) == [(1, 1), (2, 1), (2, 2), (3, 1), (3, 2), (3, 3), (3, 4)]
    assert n_nodes(4) == len(all_nodes(4)) == 15
    assert level_nodes(2) == [(2, 1), (2, 2)]
    assert str(NodeId(3, 2)) == "3:2" and NodeId.parse("3:2") == (3, 2)
    assert children(NodeId(2, 2)) == ((3, 3), (3, 4))


@given(st.integers(1, 64), st.integers(1, 6))
def test_level_ranges_partition_frames(T, level):
    if T < 2 ** (level - 1):
        with pytest.raises(GranularityError):
            node_frames(T, (level, 1))
        return
    covered = [t for node in level_nodes(level) for t in node_frames(T, node)]
    assert covered == list(range(T))


def test_odd_length_ranges():
    assert [tuple(node_frames(5, n)) for n in level_nodes(2)] == [(0, 1), (2, 3, 4)]


@given(st.integers(1, 32), st.integers(1, 8), st.integers(1, 4), st.integers(0, 2**31))
def test_matches_oracle(T, q, L, seed):
    if T < 2 ** (L - 1):
        return
    x = np.random.default_rng(seed).normal(size=(T, q)).astype(np.float32)
    rep = aggregate(FrameSequence("v", x), L)
    for node in all_nodes(L):
        ref, _ = range_mean(x, *node)
        assert np.allclose(rep.vector(node), ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())


def test_single_frame_and_constant():
    x = np.full((1, 3), 2.5, np.float32)
    rep = aggregate(FrameSequence("v", x), 1)
    assert np.array_equal(rep.vectors, [[2.5, 2.5, 2.5]])
    const = np.full((7, 2), 1.25, np.float32)
    assert np.all(aggregate(FrameSequence("v", const), 3).vectors == 1.25)


def test_permutation_within_node_is_exact(rng):
    x = rng.normal(size=(16, 3)).astype(np.float32)
    y = x.copy()
    y[8:12] = y[[11, 9, 8, 10]]
    a = aggregate(FrameSequence("v", x), 3).vector((3, 3))
    b = aggregate(FrameSequence("v", y), 3).vector((3, 3))
    assert np.array_equal(a, b)


def test_errors():
    with pytest.raises(GranularityError):
        aggregate(FrameSequence("v", np.zeros((3, 1), np.float32)), 3)
    with pytest.raises(ParameterError):
        aggregate(FrameSequence("v", np.zeros((3, 1), np.float32)), 0)
    with pytest.raises(ParameterError):
        levels_from_rows(6)
    assert levels_from_rows(7) == 3


def test_spectrogram():
    x = np.arange(12, dtype=np.float32).reshape(6, 2)
    assert spectrogram(FrameSequence("v", x), 3).tolist() == [0, 1, 4, 5, 8, 9]


def test_hand_examples():
    assert [tuple(node_frames(8, n)) for n in level_nodes(3)] == [(0, 1), (2, 3), (4, 5), (6, 7)]
    assert tuple(node_frames(8, (1, 1))) == tuple(range(8))
    rep = aggregate(FrameSequence("v", np.array([[1], [3], [5], [7]], np.float32)), 2)
    assert rep.vectors[:, 0].tolist() == [4, 2, 6]
    x = np.array([[1, 2], [3, 4]], np.float32)
    assert spectrogram(FrameSequence("v", x), 1).tolist() == [1, 2]


@given(st.integers(2, 32), st.integers(1, 4), st.integers(2, 4), st.integers(0, 2**31))
def test_parent_is_weighted_mean_of_children(T, q, L, seed):
    if T < 2 ** (L - 1):
        return
    x = np.random.default_rng(seed).normal(size=(T, q))
    rep = aggregate(FrameSequence("v", x), L)
    for node in all_nodes(L - 1):
        a, b = children(node)
        na, nb = len(node_frames(T, a)), len(node_frames(T, b))
        mix = (na * rep.vector(a) + nb * rep.vector(b)) / (na + nb)
        assert np.allclose(rep.vector(node), mix, rtol=1e-10, atol=1e-10)
