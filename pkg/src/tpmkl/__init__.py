"""Temporal-pyramid multiple kernel learning for video-level classification."""
from .errors import TPMKLError
from .features_io import FrameSequence, Manifest, gen_synthetic, load_manifest
from .kernels import KernelBank, build_bank, combine
from .mkl import MklModel, train_mkl
from .pyramid import NodeId, PyramidRep, aggregate
from .svm import SvmModel, solve_binary, train_one_vs_rest

__version__ = "0.1.0"

__all__ = [
    "FrameSequence", "KernelBank", "Manifest", "MklModel", "NodeId", "PyramidRep",
    "SvmModel", "TPMKLError", "aggregate", "build_bank", "combine", "gen_synthetic",
    "load_manifest", "solve_binary", "train_mkl", "train_one_vs_rest",
]
