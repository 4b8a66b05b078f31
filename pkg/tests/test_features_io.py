import json
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tpmkl.errors import FormatError, ParameterError
from tpmkl.features_io import (HEADER_SIZE, FrameSequence, Manifest, ManifestEntry,
                               dumps_features, gen_synthetic, load_manifest, load_stream,
                               loads_features, merge_streams, read_container, resample,
                               write_container, write_dataset)
from tpmkl.pyramid import aggregate


@given(st.integers(1, 12), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_feature_roundtrip(T, q, seed):
    x = np.random.default_rng(seed).normal(size=(T, q)).astype(np.float32)
    blob = dumps_features(x)
    assert len(blob) == HEADER_SIZE + 4 * T * q
    assert np.array_equal(loads_features(blob), x)
    assert dumps_features(loads_features(blob)) == blob


def test_header_layout():
    blob = dumps_features(np.zeros((3, 2), np.float32))
    assert blob[:4] == b"TPFV"
    assert struct.unpack_from("<IQQ", blob, 4) == (1, 3, 2)


@pytest.mark.parametrize("mutate, offset", [
    (lambda b: b"XXXX" + b[4:], 0),
    (lambda b: b[:10], 10),
    (lambda b: b[:-1], None),
    (lambda b: b + b"\0", None),
])
def test_corrupt_files(mutate, offset):
    blob = dumps_features(np.ones((2, 2), np.float32))
    with pytest.raises(FormatError) as err:
        loads_features(mutate(blob))
    if offset is not None:
        assert err.value.offset == offset


def test_nonfinite_reports_first_offset():
    x = np.zeros((3, 2), np.float32)
    x[1, 1] = np.nan
    x[2, 0] = np.inf
    with pytest.raises(FormatError) as err:
        loads_features(dumps_features(x))
    assert err.value.offset == HEADER_SIZE + 4 * 3


def test_frame_sequence_validation():
    with pytest.raises(Exception):
        FrameSequence("a", np.zeros(3))
    with pytest.raises(Exception):
        FrameSequence("a", np.array([[np.nan]]))


def test_manifest_validation():
    with pytest.raises(ParameterError):
        Manifest([ManifestEntry("a", 1, "train"), ManifestEntry("a", 2, "test")])
    with pytest.raises(ParameterError):
        Manifest([ManifestEntry("a", 0, "train")])
    with pytest.raises(ParameterError):
        Manifest([ManifestEntry("a", 1, "val")])


def test_manifest_roundtrip_and_missing_file(tmp_path):
    man, seqs = gen_synthetic(3, 2, 8, 3, 2, 0.5, seed=1)
    path = write_dataset(tmp_path, man, {"appearance": seqs})
    loaded = load_manifest(path)
    assert [e.to_json() for e in loaded.entries] == [e.to_json() for e in man.entries]
    back = load_stream(loaded, "appearance")
    for vid, s in seqs.items():
        assert np.array_equal(back[vid].frames, s.frames)
    (tmp_path / man.entries[0].streams["appearance"]).unlink()
    with pytest.raises(FormatError):
        load_manifest(path)


def test_manifest_bad_line(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text(json.dumps({"id": "a", "label": 1}) + "\n")
    with pytest.raises(FormatError):
        load_manifest(p, check_files=False)


def test_container_roundtrip(tmp_path):
    arrays = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([1, 2], dtype=np.int64)}
    write_container(tmp_path / "x", b"TEST", {"k": [1, "z"]}, arrays)
    meta, back = read_container(tmp_path / "x", b"TEST")
    assert meta == {"k": [1, "z"]}
    assert np.array_equal(back["a"], arrays["a"]) and back["b"].dtype == np.int64
    with pytest.raises(FormatError):
        read_container(tmp_path / "x", b"NOPE")
    data = (tmp_path / "x").read_bytes()
    (tmp_path / "y").write_bytes(data[:-3])
    with pytest.raises(FormatError):
        read_container(tmp_path / "y", b"TEST")


def test_resample_indices():
    x = np.arange(10, dtype=np.float32)[:, None]
    out = resample(FrameSequence("a", x), 4).frames[:, 0]
    assert out.tolist() == [0, 2, 5, 7]
    assert np.array_equal(resample(FrameSequence("a", x), 10).frames, x)


def test_synthetic_is_deterministic_and_split():
    m1, s1 = gen_synthetic(10, 3, 16, 4, 3, 1.0, seed=5)
    m2, s2 = gen_synthetic(10, 3, 16, 4, 3, 1.0, seed=5)
    assert all(np.array_equal(s1[k].frames, s2[k].frames) for k in s1)
    assert len(m1.split("test")) == 9 and len(m1.split("train")) == 21
    assert all(s.frames.dtype == np.float32 for s in s1.values())


@pytest.mark.parametrize("level", [1, 2, 3, 4])
def test_synthetic_signal_only_at_planted_level(level):
    man, seqs = gen_synthetic(1, 4, 27, 3, level, 0.0, seed=level)
    reps = {e.label: aggregate(seqs[e.video_id], 4) for e in man.entries}
    for lev in range(1, 5):
        vecs = [reps[c].level_vectors(lev) for c in range(1, 5)]
        same = all(np.array_equal(vecs[0], v) for v in vecs[1:])
        assert same == (lev < level)


def test_synthetic_parameter_errors():
    with pytest.raises(ParameterError):
        gen_synthetic(2, 2, 3, 2, 3, 0.0, seed=0)
    with pytest.raises(ParameterError):
        gen_synthetic(2, 1, 8, 2, 1, 0.0, seed=0)
    with pytest.raises(ParameterError):
        gen_synthetic(2, 2, 8, 2, 1, -1.0, seed=0)


def test_inactive_classes_share_a_pattern():
    man, seqs = gen_synthetic(1, 4, 8, 3, 2, 0.0, seed=2, active_classes=[1, 2])
    frames = {e.label: seqs[e.video_id].frames for e in man.entries}
    assert np.array_equal(frames[3], frames[4])
    assert not np.array_equal(frames[1], frames[2])


def test_merge_streams():
    a = gen_synthetic(2, 2, 8, 2, 2, 0.1, seed=3, stream="rgb")
    b = gen_synthetic(2, 2, 8, 2, 2, 0.1, seed=4, stream="flow")
    man, by_stream = merge_streams(a, b)
    assert man.stream_names() == ["flow", "rgb"]
    assert set(by_stream) == {"rgb", "flow"}
    c = gen_synthetic(3, 2, 8, 2, 2, 0.1, seed=4, stream="x")
    with pytest.raises(Exception):
        merge_streams(a, c)


def test_single_frame_file_and_wide_stream():
    blob = dumps_features(np.array([[1.0, 2.0, 3.0]], np.float32))
    assert loads_features(blob).tolist() == [[1, 2, 3]]
    wide = np.random.default_rng(0).normal(size=(4, 2048)).astype(np.float32)
    assert loads_features(dumps_features(wide)).shape == (4, 2048)


def test_resample_upsampling():
    x = np.array([[0.0], [1.0]], np.float32)
    assert resample(FrameSequence("a", x), 4).frames[:, 0].tolist() == [0, 0, 1, 1]
