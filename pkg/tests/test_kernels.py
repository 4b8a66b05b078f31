import numpy as np
import pytest

from tpmkl.errors import DegenerateKernelError, ShapeError
from tpmkl.features_io import FrameSequence
from tpmkl.kernels import (build_bank, check_simplex, combine, is_psd, load_bank, node_gram,
                           normalize_gram, save_bank, test_kernel_matrix, test_kernel_row,
                           weights_on_level)
from tpmkl.pyramid import aggregate


def reps_for(rng, n, T=8, q=3, L=3):
    return [aggregate(FrameSequence(f"v{i}", rng.normal(size=(T, q)).astype(np.float32)), L)
            for i in range(n)]


def test_gram_symmetric_and_correct(rng):
    reps = reps_for(rng, 6)
    G = node_gram(reps, (2, 1))
    X = np.array([r.vector((2, 1)) for r in reps])
    assert np.array_equal(G, G.T)
    assert np.allclose(G, [[a @ b for b in X] for a in X], rtol=1e-12)


def test_normalization(rng):
    G = node_gram(reps_for(rng, 5), (1, 1))
    Gn, s = normalize_gram(G)
    assert np.isclose(np.trace(Gn), 5.0)
    assert np.allclose(Gn, G * s)
    with pytest.raises(DegenerateKernelError):
        normalize_gram(np.zeros((3, 3)))


def test_combine_and_psd(rng):
    bank = build_bank(reps_for(rng, 7))
    beta = rng.dirichlet(np.ones(7))
    K = combine(bank, beta)
    assert np.allclose(K, sum(b * g for b, g in zip(beta, bank.grams)))
    assert is_psd(K)
    e = np.zeros(7)
    e[3] = 1.0
    assert np.array_equal(combine(bank, e), bank.grams[3])
    with pytest.raises(ShapeError):
        combine(bank, np.ones(3) / 3)


def test_check_simplex():
    check_simplex([0.5, 0.5])
    with pytest.raises(ShapeError):
        check_simplex([0.7, 0.7])
    with pytest.raises(ShapeError):
        check_simplex([1.1, -0.1])


def test_weights_on_level():
    from tpmkl.pyramid import all_nodes
    w = weights_on_level(all_nodes(3), 2)
    assert w.tolist() == [0, 0.5, 0.5, 0, 0, 0, 0]


def test_test_rows_match_train_gram(rng):
    reps = reps_for(rng, 6)
    bank = build_bank(reps)
    beta = rng.dirichlet(np.ones(7))
    K = combine(bank, beta)
    rows = test_kernel_matrix(reps, reps, beta, bank.node_ids, bank.scales)
    assert np.allclose(rows, K, rtol=1e-12, atol=1e-12)
    assert np.allclose(test_kernel_row(reps, reps[2], beta, bank.node_ids, bank.scales), K[2])


def test_bank_roundtrip(tmp_path, rng):
    bank = build_bank(reps_for(rng, 4))
    save_bank(tmp_path / "b", bank, {"levels": 3})
    back, meta = load_bank(tmp_path / "b")
    assert meta["levels"] == 3 and back.node_ids == bank.node_ids
    assert np.array_equal(back.grams, bank.grams) and np.array_equal(back.scales, bank.scales)
    assert back.subset([(3, 2)]).grams.shape == (1, 4, 4)


def test_hand_examples():
    reps = [aggregate(FrameSequence(f"v{i}", np.array([v], np.float32)), 1)
            for i, v in enumerate([[1, 0], [1, 1]])]
    assert node_gram(reps, (1, 1)).tolist() == [[1, 1], [1, 2]]
    G, s = normalize_gram(np.eye(3))
    assert s == 1.0 and np.array_equal(G, np.eye(3))
    G, s = normalize_gram(2 * np.eye(3))
    assert s == 0.5 and np.array_equal(G, np.eye(3))
    G, s = normalize_gram(np.array([[4.0, 4.0], [4.0, 4.0]]))
    assert s == 0.25 and np.array_equal(G, np.ones((2, 2)))


def test_zero_test_video_gives_zero_row(rng):
    reps = reps_for(rng, 4)
    zero = aggregate(FrameSequence("z", np.zeros((8, 3), np.float32)), 3)
    bank = build_bank(reps)
    row = test_kernel_row(reps, zero, np.ones(7) / 7, bank.node_ids, bank.scales)
    assert np.array_equal(row, np.zeros(4))


def test_test_row_brute_force(rng):
    reps = reps_for(rng, 5)
    t = reps_for(rng, 1)[0]
    bank = build_bank(reps)
    beta = rng.dirichlet(np.ones(7))
    ref = np.zeros(5)
    for i in range(5):
        for p, node in enumerate(bank.node_ids):
            for d in range(3):
                ref[i] += beta[p] * bank.scales[p] * reps[i].vector(node)[d] * t.vector(node)[d]
    got = test_kernel_row(reps, t, beta, bank.node_ids, bank.scales)
    assert np.allclose(got, ref, rtol=1e-12, atol=1e-12)
