"""Per-frame feature files, dataset manifests and the synthetic generator.

A feature file is a little-endian binary blob::

    b"TPFV" | u32 version (=1) | u64 T | u64 q | T*q float32, time-major

The same layout is reused for pyramid files (one row per node). Kernel
banks and trained models use a second, self-describing container (see
:func:`write_container`).
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError

MAGIC = b"TPFV"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")
HEADER_SIZE = _HEADER.size  # 24

SPLITS = ("train", "test")


@dataclass(frozen=True, eq=False)
class FrameSequence:
    """One video's frame-level features for a single stream.

    ``frames`` has shape ``(T, q)``; rows are time steps.
    """

    video_id: str
    frames: np.ndarray
    stream_name: str = "appearance"

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise ParameterError(
                f"frames of {self.video_id!r} must be a non-empty T x q matrix, "
                f"got shape {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ParameterError(f"frames of {self.video_id!r} contain NaN/Inf")
        object.__setattr__(self, "frames", frames)

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def q(self) -> int:
        return self.frames.shape[1]


@dataclass
class ManifestEntry:
    video_id: str
    label: int
    split: str
    streams: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"id": self.video_id, "label": self.label, "split": self.split,
                "streams": dict(sorted(self.streams.items()))}


@dataclass
class Manifest:
    entries: list
    root: Path | None = None

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.video_id in seen:
                raise ParameterError(f"duplicate video id {e.video_id!r}")
            seen.add(e.video_id)
            if not isinstance(e.label, (int, np.integer)) or e.label < 1:
                raise ParameterError(
                    f"label of {e.video_id!r} must be an integer >= 1, got {e.label!r}")
            if e.split not in SPLITS:
                raise ParameterError(f"split of {e.video_id!r} must be train|test, got {e.split!r}")

    @property
    def n_classes(self) -> int:
        return max(e.label for e in self.entries)

    def split(self, name: str) -> list:
        return [e for e in self.entries if e.split == name]

    def stream_names(self) -> list:
        names = set()
        for e in self.entries:
            names.update(e.streams)
        return sorted(names)

    def path_for(self, entry: ManifestEntry, stream: str) -> Path:
        try:
            rel = entry.streams[stream]
        except KeyError:
            raise ParameterError(f"video {entry.video_id!r} has no stream {stream!r}") from None
        root = self.root if self.root is not None else Path(".")
        return root / rel


# ---------------------------------------------------------------------------
# feature files

def dumps_features(frames: np.ndarray) -> bytes:
    frames = np.asarray(frames)
    T, q = frames.shape
    payload = np.ascontiguousarray(frames, dtype="<f4").tobytes()
    return _HEADER.pack(MAGIC, VERSION, T, q) + payload


def loads_features(data: bytes, path="<bytes>") -> np.ndarray:
    """Decode a feature blob into a ``(T, q)`` float32 array."""
    if len(data) < HEADER_SIZE:
        raise FormatError("truncated header", path, len(data))
    magic, version, T, q = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", path, 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", path, 4)
    if T < 1 or q < 1:
        raise FormatError(f"empty matrix T={T} q={q}", path, 8 if T < 1 else 16)
    expected = HEADER_SIZE + 4 * T * q
    if len(data) < expected:
        raise FormatError(f"truncated payload: need {expected} bytes, have {len(data)}",
                          path, len(data))
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes", path, expected)
    frames = np.frombuffer(data, dtype="<f4", count=T * q, offset=HEADER_SIZE)
    bad = np.flatnonzero(~np.isfinite(frames))
    if bad.size:
        raise FormatError("non-finite value", path, HEADER_SIZE + 4 * int(bad[0]))
    return frames.reshape(T, q).astype(np.float32)


def load_feature_file(path, video_id=None, stream_name="appearance") -> FrameSequence:
    path = Path(path)
    frames = loads_features(path.read_bytes(), path)
    if video_id is None:
        video_id = path.stem
    return FrameSequence(video_id, frames, stream_name)


def write_feature_file(path, seq) -> None:
    """Store a sequence (or a bare matrix) as float32; values are rounded to float32."""
    frames = seq.frames if isinstance(seq, FrameSequence) else seq
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_features(frames))


# ---------------------------------------------------------------------------
# generic container for kernel banks and models

def write_container(path, magic: bytes, meta: dict, arrays: dict) -> None:
    """Write ``meta`` (JSON) plus named arrays in a byte-stable layout.

    Layout: magic(4) | u32 version | u64 header length | JSON header | raw
    little-endian array bytes in header order.
    """
    specs = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = "<i8" if np.issubdtype(arr.dtype, np.integer) else "<f8"
        arr = np.ascontiguousarray(arr, dtype=dtype)
        specs.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = json.dumps({"meta": meta, "arrays": specs}, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIQ", magic, VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_container(path, magic: bytes) -> tuple:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 16:
        raise FormatError("truncated header", path, len(data))
    got, version, hlen = struct.unpack_from("<4sIQ", data, 0)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}", path, 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", path, 4)
    if len(data) < 16 + hlen:
        raise FormatError("truncated JSON header", path, len(data))
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable header ({exc})", path, 16) from None
    offset = 16 + hlen
    arrays = {}
    for desc in header["arrays"]:
        count = math.prod(desc["shape"])
        nbytes = 8 * count
        if len(data) < offset + nbytes:
            raise FormatError(f"truncated array {desc['name']!r}", path, len(data))
        arr = np.frombuffer(data, dtype=desc["dtype"], count=count, offset=offset)
        arrays[desc["name"]] = arr.reshape(desc["shape"]).copy()
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes", path, offset)
    return header["meta"], arrays


# ---------------------------------------------------------------------------
# manifests

def load_manifest(path, check_files=True) -> Manifest:
    path = Path(path)
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                entry = ManifestEntry(str(obj["id"]), obj["label"], obj["split"],
                                      dict(obj.get("streams", {})))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(f"line {lineno}: {exc}", path) from None
            entries.append(entry)
    if not entries:
        raise FormatError("manifest has no entries", path)
    manifest = Manifest(entries, root=path.parent)
    if check_files:
        for e in entries:
            for stream in e.streams:
                p = manifest.path_for(e, stream)
                if not p.is_file():
                    raise FormatError(f"missing feature file {p} for {e.video_id!r}", path)
    return manifest


def write_manifest(path, manifest: Manifest) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in manifest.entries:
            fh.write(json.dumps(e.to_json(), sort_keys=True) + "\n")


def load_stream(manifest: Manifest, stream: str, entries=None) -> dict:
    """Load one stream's sequences keyed by video id, checking a shared width."""
    entries = manifest.entries if entries is None else entries
    seqs = {}
    q = None
    for e in entries:
        seq = load_feature_file(manifest.path_for(e, stream), e.video_id, stream)
        if q is None:
            q = seq.q
        elif seq.q != q:
            raise FormatError(f"stream {stream!r}: width {seq.q} != {q}",
                              manifest.path_for(e, stream))
        seqs[e.video_id] = seq
    return seqs


# ---------------------------------------------------------------------------
# resampling

def resample(seq: FrameSequence, T_target: int) -> FrameSequence:
    """Nearest-index uniform sampling: output row j is input row floor(j*T/T_target)."""
    if T_target < 1:
        raise ParameterError(f"T_target must be >= 1, got {T_target}")
    idx = (np.arange(T_target, dtype=np.int64) * seq.T) // T_target
    return FrameSequence(seq.video_id, seq.frames[idx], seq.stream_name)


# ---------------------------------------------------------------------------
# synthetic data

def _dyadic(rng, shape, step=1 / 16, bound=4.0):
    # coarse dyadic grid keeps noise-free frames exactly representable in float32
    return np.clip(np.round(rng.standard_normal(shape) / step) * step, -bound, bound)


def _segment_bounds(T, n_segments):
    k = np.arange(n_segments + 1, dtype=np.int64)
    return (k * T) // n_segments


def _class_patterns(rng, C, n_pairs, q):
    # one q-vector per sibling pair and class; resample until classes differ
    for _ in range(1000):
        v = _dyadic(rng, (C, n_pairs, q))
        flat = v.reshape(C, -1)
        if len({row.tobytes() for row in flat}) == C and np.all(np.any(flat != 0, axis=1)):
            return v
    raise ParameterError("could not draw distinct class patterns; increase q")


def prototypes(C, T, q, signal_level, rng, active_classes=None) -> np.ndarray:
    """Noise-free class prototypes of shape ``(C, T, q)``.

    Classes differ only through segment means at ``signal_level``; every
    coarser node has the same mean for all classes. Classes outside
    ``active_classes`` (1-based) share one common pattern.
    """
    n_seg = 2 ** (signal_level - 1)
    bounds = _segment_bounds(T, n_seg)
    base = _dyadic(rng, (n_seg, q))
    if signal_level == 1:
        v = _class_patterns(rng, C + 1, 1, q)
    else:
        v = _class_patterns(rng, C + 1, n_seg // 2, q)
    # row C of v is the shared pattern for inactive classes
    if active_classes is not None:
        active = set(int(c) for c in active_classes)
        idx = [c - 1 if c in active else C for c in range(1, C + 1)]
        v = v[idx]
    else:
        v = v[:C]

    protos = np.empty((C, T, q))
    for s in range(n_seg):
        protos[:, bounds[s]:bounds[s + 1], :] = base[s]
    if signal_level == 1:
        protos += v[:, 0, None, :]
        return protos
    for p in range(n_seg // 2):
        lo, mid, hi = bounds[2 * p], bounds[2 * p + 1], bounds[2 * p + 2]
        a, b = mid - lo, hi - mid
        # power-of-two scale keeps a*v*b and b*v*a exact and of order |v|
        scale = 2.0 ** -round(math.log2(max(a, b)))
        protos[:, lo:mid, :] += (v[:, p, :] * (b * scale))[:, None, :]
        protos[:, mid:hi, :] -= (v[:, p, :] * (a * scale))[:, None, :]
    return protos


def gen_synthetic(n_per_class, C, T, q, signal_level, noise_std, seed,
                  stream="appearance", active_classes=None):
    """Generate a labelled dataset whose classes differ only at ``signal_level``.

    Returns ``(manifest, sequences)`` where ``sequences`` maps video id to
    :class:`FrameSequence`. Videos are interleaved across classes; within a
    class, every position ``i`` with ``i % 10 in {3, 6, 9}`` goes to the test
    split (70/30). The manifest paths are ``<stream>/<id>.tpfv``.
    """
    if signal_level < 1:
        raise ParameterError(f"signal_level must be >= 1, got {signal_level}")
    if T < 2 ** (signal_level - 1):
        raise ParameterError(
            f"T={T} too short for signal_level={signal_level} (need >= {2 ** (signal_level - 1)})")
    if C < 2:
        raise ParameterError(f"need at least 2 classes, got {C}")
    if n_per_class < 1 or q < 1:
        raise ParameterError("n_per_class and q must be >= 1")
    if noise_std < 0 or not math.isfinite(noise_std):
        raise ParameterError(f"noise_std must be finite and >= 0, got {noise_std}")

    rng = np.random.default_rng(seed)
    protos = prototypes(C, T, q, signal_level, rng, active_classes)
    width = len(str(n_per_class * C - 1))
    entries = []
    seqs = {}
    n = 0
    for i in range(n_per_class):
        split = "test" if i % 10 in (3, 6, 9) else "train"
        for c in range(1, C + 1):
            vid = f"v{n:0{width}d}"
            frames = protos[c - 1]
            if noise_std > 0:
                frames = frames + rng.normal(0.0, noise_std, size=(T, q))
            seqs[vid] = FrameSequence(vid, frames.astype(np.float32), stream)
            entries.append(ManifestEntry(vid, c, split, {stream: f"{stream}/{vid}.tpfv"}))
            n += 1
    return Manifest(entries), seqs


def merge_streams(*datasets):
    """Merge ``(manifest, sequences)`` pairs that share ids/labels/splits into one manifest.

    Returns ``(manifest, {stream: sequences})``.
    """
    first, _ = datasets[0]
    if any(len(m.entries) != len(first.entries) for m, _ in datasets):
        raise ParameterError("datasets have different numbers of videos")
    merged = []
    by_stream = {}
    for k, e in enumerate(first.entries):
        streams = {}
        for m, _ in datasets:
            other = m.entries[k]
            if (other.video_id, other.label, other.split) != (e.video_id, e.label, e.split):
                raise ParameterError("datasets disagree on ids, labels or splits")
            streams.update(other.streams)
        merged.append(ManifestEntry(e.video_id, e.label, e.split, streams))
    for m, seqs in datasets:
        (name,) = {s for e in m.entries for s in e.streams}
        by_stream[name] = seqs
    return Manifest(merged), by_stream


def write_dataset(out_dir, manifest: Manifest, sequences_by_stream: dict) -> Path:
    """Write feature files plus ``manifest.jsonl`` under ``out_dir``."""
    out_dir = Path(out_dir)
    for e in manifest.entries:
        for stream, rel in sorted(e.streams.items()):
            write_feature_file(out_dir / rel, sequences_by_stream[stream][e.video_id])
    manifest_path = out_dir / "manifest.jsonl"
    write_manifest(manifest_path, manifest)
    manifest.root = out_dir
    return manifest_path

