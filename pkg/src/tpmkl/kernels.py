"""Per-node linear Gram matrices and their convex combination."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateKernelError, ShapeError
from .features_io import read_container, write_container
from .pyramid import NodeId

BANK_MAGIC = b"TPKB"
PSD_RTOL = 1e-8
SIMPLEX_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class KernelBank:
    """Stacked elementary Gram matrices over one ordered set of videos.

    ``grams[p]`` belongs to ``node_ids[p]`` and is already multiplied by
    ``scales[p]`` (1.0 everywhere when normalization is off).
    """

    node_ids: list
    grams: np.ndarray
    scales: np.ndarray
    video_ids: list

    def __post_init__(self):
        p, n, n2 = self.grams.shape
        if n != n2 or p != len(self.node_ids) or len(self.scales) != p or len(self.video_ids) != n:
            raise ShapeError(
                f"bank shape mismatch: grams {self.grams.shape}, {len(self.node_ids)} nodes, "
                f"{len(self.scales)} scales, {len(self.video_ids)} videos")

    @property
    def n(self) -> int:
        return self.grams.shape[1]

    def gram(self, node) -> np.ndarray:
        return self.grams[self.node_ids.index(tuple(node))]

    def subset(self, nodes) -> "KernelBank":
        idx = [self.node_ids.index(tuple(v)) for v in nodes]
        return KernelBank([self.node_ids[i] for i in idx], self.grams[idx],
                          self.scales[idx], list(self.video_ids))


def check_simplex(beta, tol=SIMPLEX_TOL) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim != 1 or beta.size == 0:
        raise ShapeError("weights must be a non-empty vector")
    if np.any(beta < 0) or abs(beta.sum() - 1.0) > tol:
        raise ShapeError(f"weights are not on the simplex (min {beta.min()}, sum {beta.sum()})")
    return beta


def uniform_weights(p: int) -> np.ndarray:
    return np.full(p, 1.0 / p)


def weights_on_level(node_ids, level: int) -> np.ndarray:
    """Uniform weights over one level's nodes, zero elsewhere."""
    mask = np.array([v[0] == level for v in node_ids])
    if not mask.any():
        raise ShapeError(f"bank has no node at level {level}")
    return mask / mask.sum()


def _symmetric_gram(X: np.ndarray) -> np.ndarray:
    G = X @ X.T
    upper = np.triu(G)
    return upper + np.triu(G, 1).T


def node_matrix(reps, node) -> np.ndarray:
    """Stack the ``node`` vectors of ``reps`` into an ``(n, q)`` matrix."""
    rows = []
    q = None
    for rep in reps:
        try:
            v = rep.vector(node)
        except KeyError:
            raise ShapeError(f"video {rep.video_id!r} has no node {tuple(node)}") from None
        if q is None:
            q = v.shape[0]
        elif v.shape[0] != q:
            raise ShapeError(f"video {rep.video_id!r}: node width {v.shape[0]} != {q}")
        rows.append(v)
    return np.vstack(rows).astype(np.float64)


def node_gram(reps, node) -> np.ndarray:
    """Linear kernel between the ``node`` vectors of every pair of videos."""
    return _symmetric_gram(node_matrix(reps, node))


def normalize_gram(G: np.ndarray) -> tuple:
    """Rescale ``G`` to unit mean diagonal; returns ``(G * scale, scale)``."""
    G = np.asarray(G, dtype=np.float64)
    tr = float(np.trace(G))
    if not tr > 0:
        raise DegenerateKernelError(f"gram has trace {tr}; all node vectors are zero")
    scale = G.shape[0] / tr
    return G * scale, scale


def build_bank(reps, node_ids=None, normalize=True) -> KernelBank:
    reps = list(reps)
    if node_ids is None:
        node_ids = reps[0].node_ids
    node_ids = [NodeId(*v) for v in node_ids]
    n = len(reps)
    grams = np.empty((len(node_ids), n, n))
    scales = np.ones(len(node_ids))
    for p, node in enumerate(node_ids):
        G = node_gram(reps, node)
        if normalize:
            G, scales[p] = normalize_gram(G)
        grams[p] = G
    return KernelBank(node_ids, grams, scales, [r.video_id for r in reps])


def combine(bank: KernelBank, beta) -> np.ndarray:
    """Convex combination ``sum_p beta[p] * grams[p]``."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (len(bank.node_ids),):
        raise ShapeError(f"{beta.size} weights for {len(bank.node_ids)} kernels")
    return np.tensordot(beta, bank.grams, axes=1)


def test_kernel_row(train_reps, test_rep, beta, node_ids, scales) -> np.ndarray:
    """Combined kernel between one test video and every training video.

    Uses the training-set normalizers ``scales``.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (len(node_ids),) or len(scales) != len(node_ids):
        raise ShapeError(f"{beta.size} weights / {len(scales)} scales for {len(node_ids)} nodes")
    row = np.zeros(len(train_reps))
    for p, node in enumerate(node_ids):
        if beta[p] == 0:
            continue
        X = node_matrix(train_reps, node)
        t = test_rep.vector(node)
        if t.shape[0] != X.shape[1]:
            raise ShapeError(f"test width {t.shape[0]} != train width {X.shape[1]}")
        row += beta[p] * scales[p] * (X @ t)
    return row


# keep pytest from collecting the public name above as a test
test_kernel_row.__test__ = False


def test_kernel_matrix(train_reps, test_reps, beta, node_ids, scales) -> np.ndarray:
    """Rows of :func:`test_kernel_row` for several test videos, shape ``(m, n)``."""
    beta = np.asarray(beta, dtype=np.float64)
    out = np.zeros((len(test_reps), len(train_reps)))
    for p, node in enumerate(node_ids):
        if beta[p] == 0:
            continue
        X = node_matrix(train_reps, node)
        Y = node_matrix(test_reps, node)
        out += beta[p] * scales[p] * (Y @ X.T)
    return out


test_kernel_matrix.__test__ = False


def min_eig_ratio(G: np.ndarray) -> float:
    """``min eigenvalue / max |eigenvalue|`` (0 for the zero matrix)."""
    w = np.linalg.eigvalsh(G)
    top = np.max(np.abs(w))
    return 0.0 if top == 0 else float(w[0] / top)


def is_psd(G: np.ndarray, rtol=PSD_RTOL) -> bool:
    return min_eig_ratio(G) >= -rtol


def save_bank(path, bank: KernelBank, meta=None) -> None:
    info = {"node_ids": [str(v) for v in bank.node_ids], "video_ids": list(bank.video_ids)}
    info.update(meta or {})
    write_container(path, BANK_MAGIC, info, {"scales": bank.scales, "grams": bank.grams})


def load_bank(path) -> tuple:
    meta, arrays = read_container(path, BANK_MAGIC)
    nodes = [NodeId.parse(s) for s in meta["node_ids"]]
    bank = KernelBank(nodes, arrays["grams"], arrays["scales"], list(meta["video_ids"]))
    return bank, meta

