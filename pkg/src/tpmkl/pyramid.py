"""Binary temporal pyramid over frame features.

Nodes are indexed level-major: level 1 is the root (global average
pooling), level ``l`` holds ``2**(l-1)`` contiguous, near-equal segments
of ``[0, T)``. Node ``(l, k)`` covers frames
``floor((k-1)*T/2**(l-1)) .. floor(k*T/2**(l-1)) - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import GranularityError, ParameterError
from .features_io import FrameSequence, resample


class NodeId(NamedTuple):
    level: int
    index: int

    def __str__(self):
        return f"{self.level}:{self.index}"

    @classmethod
    def parse(cls, text: str) -> "NodeId":
        level, index = text.split(":")
        return cls(int(level), int(index))


def all_nodes(L: int) -> list:
    """Every node of an ``L``-level pyramid in (level, index) order."""
    if L < 1:
        raise ParameterError(f"L must be >= 1, got {L}")
    return [NodeId(l, k) for l in range(1, L + 1) for k in range(1, 2 ** (l - 1) + 1)]


def level_nodes(level: int) -> list:
    return [NodeId(level, k) for k in range(1, 2 ** (level - 1) + 1)]


def n_nodes(L: int) -> int:
    return 2 ** L - 1


def node_frames(T: int, node) -> range:
    """Frame index range of ``node`` in a sequence of ``T`` frames."""
    level, k = node
    width = 2 ** (level - 1)
    if level < 1 or not 1 <= k <= width:
        raise ParameterError(f"invalid node {tuple(node)}")
    if T < width:
        raise GranularityError(
            f"T={T} frames cannot fill {width} nodes at level {level}; "
            f"use at most {T.bit_length()} levels")
    return range(((k - 1) * T) // width, (k * T) // width)


def children(node) -> tuple:
    level, k = node
    return NodeId(level + 1, 2 * k - 1), NodeId(level + 1, 2 * k)


@dataclass(frozen=True, eq=False)
class PyramidRep:
    """Node-averaged vectors of one video.

    ``vectors[i]`` is the mean frame of ``node_ids[i]``; rows follow
    :func:`all_nodes` order.
    """

    video_id: str
    vectors: np.ndarray
    T_source: int
    L: int

    @property
    def node_ids(self) -> list:
        return all_nodes(self.L)

    @property
    def q(self) -> int:
        return self.vectors.shape[1]

    def row(self, node) -> int:
        level, k = node
        if not 1 <= level <= self.L or not 1 <= k <= 2 ** (level - 1):
            raise KeyError(tuple(node))
        return 2 ** (level - 1) - 1 + (k - 1)

    def vector(self, node) -> np.ndarray:
        return self.vectors[self.row(node)]

    def level_vectors(self, level: int) -> np.ndarray:
        lo = 2 ** (level - 1) - 1
        return self.vectors[lo:2 * lo + 1]


def _range_mean(frames, r: range) -> np.ndarray:
    # sorting makes the sum independent of row order inside the range
    block = np.sort(np.asarray(frames[r.start:r.stop], dtype=np.float64), axis=0)
    return block.sum(axis=0) / len(r)


def aggregate(seq: FrameSequence, L: int) -> PyramidRep:
    """Average the frames of ``seq`` over every node of an ``L``-level pyramid."""
    if L < 1:
        raise ParameterError(f"L must be >= 1, got {L}")
    T = seq.T
    # raises GranularityError for the deepest level first
    node_frames(T, NodeId(L, 1))
    vectors = np.empty((n_nodes(L), seq.q), dtype=np.float64)
    for i, node in enumerate(all_nodes(L)):
        vectors[i] = _range_mean(seq.frames, node_frames(T, node))
    return PyramidRep(seq.video_id, vectors, T, L)


def aggregate_many(seqs, L: int) -> list:
    return [aggregate(s, L) for s in seqs]


def spectrogram(seq: FrameSequence, T_target: int) -> np.ndarray:
    """Concatenate the rows of ``resample(seq, T_target)`` in time order."""
    return np.asarray(resample(seq, T_target).frames, dtype=np.float64).reshape(-1)


def levels_from_rows(rows: int) -> int:
    L = (rows + 1).bit_length() - 1
    if 2 ** L - 1 != rows:
        raise ParameterError(f"{rows} rows is not a complete binary pyramid")
    return L
