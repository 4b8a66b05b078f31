"""Experiment driver: level-wise baselines, MKL, spectrograms and late fusion."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError, ShapeError
from .features_io import Manifest, load_manifest, load_stream
from .kernels import build_bank, normalize_gram, test_kernel_matrix, weights_on_level
from .mkl import MklModel, attach_node_weights, fixed_beta_model, model_decisions, train_mkl
from .pyramid import aggregate, level_nodes, spectrogram
from .svm import argmax_classes, decision_matrix, train_one_vs_rest


@dataclass
class Dataset:
    """A manifest plus in-memory sequences, keyed ``streams[name][video_id]``."""

    manifest: Manifest
    streams: dict

    @classmethod
    def load(cls, manifest_path, streams=None) -> "Dataset":
        manifest = load_manifest(manifest_path)
        names = manifest.stream_names() if streams is None else list(streams)
        return cls(manifest, {s: load_stream(manifest, s) for s in names})

    def default_stream(self, stream=None) -> str:
        if stream is not None:
            if stream not in self.streams:
                raise ParameterError(f"unknown stream {stream!r}; have {sorted(self.streams)}")
            return stream
        if len(self.streams) != 1:
            raise ParameterError(f"several streams {sorted(self.streams)}; pick one")
        return next(iter(self.streams))

    def sequences(self, split, stream=None) -> list:
        seqs = self.streams[self.default_stream(stream)]
        return [seqs[e.video_id] for e in self.manifest.split(split)]

    def labels(self, split) -> np.ndarray:
        return np.array([e.label for e in self.manifest.split(split)], dtype=np.int64)

    def ids(self, split) -> list:
        return [e.video_id for e in self.manifest.split(split)]

    @property
    def classes(self) -> list:
        return list(range(1, self.manifest.n_classes + 1))


@dataclass
class DecisionTable:
    """Per-video decision values of a trained classifier on the test split."""

    video_ids: list
    true_labels: np.ndarray
    class_ids: list
    scores: np.ndarray

    @property
    def predicted(self) -> np.ndarray:
        return argmax_classes(self.scores, self.class_ids)

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        pred = self.predicted
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["video_id", "true_label", "predicted_label"]
                       + [f"dec_{c}" for c in self.class_ids])
            for vid, t, p, row in zip(self.video_ids, self.true_labels, pred, self.scores):
                w.writerow([vid, int(t), int(p)] + [repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path) -> "DecisionTable":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:3] != ["video_id", "true_label", "predicted_label"]:
            raise ParameterError(f"{path}: not a decision CSV")
        class_ids = [int(h.split("_", 1)[1]) for h in rows[0][3:]]
        body = rows[1:]
        return cls([r[0] for r in body], np.array([int(r[1]) for r in body], dtype=np.int64),
                   class_ids, np.array([[float(v) for v in r[3:]] for r in body]).reshape(
                       len(body), len(class_ids)))


@dataclass
class RunReport:
    setting: str
    accuracy: float
    mean_class_accuracy: float
    per_class_accuracy: dict
    confusion: np.ndarray
    beta_by_level: list | None = None
    decisions: DecisionTable | None = field(default=None, repr=False)
    model: MklModel | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "setting": self.setting,
            "accuracy": self.accuracy,
            "mean_class_accuracy": self.mean_class_accuracy,
            "confusion": [int(v) for v in self.confusion.reshape(-1)],
            "beta_by_level": None if self.beta_by_level is None else list(self.beta_by_level),
        }


def make_report(setting, true_labels, predicted, class_ids, beta_by_level=None,
                decisions=None, model=None) -> RunReport:
    class_ids = list(class_ids)
    index = {c: k for k, c in enumerate(class_ids)}
    conf = np.zeros((len(class_ids), len(class_ids)), dtype=np.int64)
    for t, p in zip(true_labels, predicted):
        conf[index[int(t)], index[int(p)]] += 1
    total = conf.sum()
    acc = float(np.trace(conf) / total) if total else 0.0
    per_class = {}
    for k, c in enumerate(class_ids):
        if conf[k].sum():
            per_class[c] = float(conf[k, k] / conf[k].sum())
    mean_cls = float(np.mean(list(per_class.values()))) if per_class else 0.0
    if beta_by_level is not None:
        beta_by_level = [float(v) for v in beta_by_level]
    return RunReport(setting, acc, mean_cls, per_class, conf, beta_by_level, decisions, model)


def _report_from_scores(setting, dataset, scores, class_ids, beta_by_level=None, model=None):
    table = DecisionTable(dataset.ids("test"), dataset.labels("test"), list(class_ids), scores)
    return make_report(setting, table.true_labels, table.predicted, class_ids, beta_by_level,
                       table, model)


def pyramid_reps(dataset, L, stream=None):
    train = [aggregate(s, L) for s in dataset.sequences("train", stream)]
    test = [aggregate(s, L) for s in dataset.sequences("test", stream)]
    return train, test


def fit_mkl(dataset, L, C_reg=1.0, stream=None, normalize=True, tol=1e-6, max_outer=50,
            tol_outer=1e-4, fixed_level=None, loss="ovr"):
    """Train on the train split; returns ``(model, train_reps, test_reps)``."""
    train, test = pyramid_reps(dataset, L, stream)
    bank = build_bank(train, normalize=normalize)
    labels = dataset.labels("train")
    if fixed_level is not None:
        beta = weights_on_level(bank.node_ids, fixed_level)
        model = fixed_beta_model(bank, beta, labels, C_reg, tol, dataset.classes, loss)
    else:
        model = train_mkl(bank, labels, C_reg, tol, max_outer, tol_outer, loss,
                          classes=dataset.classes)
    attach_node_weights(model, train)
    model.meta.update({"levels": int(L), "normalize": bool(normalize)})
    if stream is not None:
        model.meta["stream"] = stream
    return model, train, test


def mkl_scores(model, train_reps, test_reps) -> np.ndarray:
    rows = test_kernel_matrix(train_reps, test_reps, model.beta, model.node_ids, model.scales)
    return model_decisions(model, rows)


def run_levelwise(dataset, level, C_reg=1.0, stream=None, normalize=True, tol=1e-6) -> RunReport:
    """One-vs-rest SVMs on the uniform combination of one level's node kernels."""
    train, test = pyramid_reps(dataset, level, stream)
    bank = build_bank(train, level_nodes(level), normalize=normalize)
    beta = np.full(len(bank.node_ids), 1.0 / len(bank.node_ids))
    model = fixed_beta_model(bank, beta, dataset.labels("train"), C_reg, tol, dataset.classes)
    beta_by_level = np.zeros(level)
    beta_by_level[level - 1] = 1.0
    return _report_from_scores(f"level-{level}", dataset, mkl_scores(model, train, test),
                               dataset.classes, beta_by_level, model)


def run_mkl(dataset, L, C_reg=1.0, stream=None, normalize=True, tol=1e-6, max_outer=50,
            tol_outer=1e-4, loss="ovr") -> RunReport:
    model, train, test = fit_mkl(dataset, L, C_reg, stream, normalize, tol, max_outer, tol_outer,
                                 loss=loss)
    return _report_from_scores("mkl", dataset, mkl_scores(model, train, test),
                               dataset.classes, model.beta_by_level(), model)


def run_spectrogram(dataset, T_target=None, C_reg=1.0, stream=None, normalize=True,
                    tol=1e-6) -> RunReport:
    """Linear kernel on concatenated (resampled) frames."""
    train_seqs = dataset.sequences("train", stream)
    test_seqs = dataset.sequences("test", stream)
    if T_target is None:
        T_target = min(s.T for s in train_seqs + test_seqs)
    X = np.vstack([spectrogram(s, T_target) for s in train_seqs])
    Y = np.vstack([spectrogram(s, T_target) for s in test_seqs])
    G = X @ X.T
    G = np.triu(G) + np.triu(G, 1).T
    scale = 1.0
    if normalize:
        G, scale = normalize_gram(G)
    models = train_one_vs_rest(G, dataset.labels("train"), C_reg, tol, dataset.classes)
    scores = decision_matrix(models, scale * (Y @ X.T))
    return _report_from_scores(f"spectrogram-{T_target}", dataset, scores, dataset.classes)


def late_fusion(tables, weights=None, setting="fusion") -> RunReport:
    """Weighted mean of decision vectors, then arg max (ties to smallest class)."""
    tables = list(tables)
    if not tables:
        raise ParameterError("nothing to fuse")
    first = tables[0]
    for t in tables[1:]:
        if t.video_ids != first.video_ids or list(t.class_ids) != list(first.class_ids):
            raise ShapeError("decision tables cover different videos or classes")
        if not np.array_equal(t.true_labels, first.true_labels):
            raise ShapeError("decision tables disagree on true labels")
    if weights is None:
        weights = np.full(len(tables), 1.0 / len(tables))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(tables),):
        raise ShapeError(f"{weights.size} weights for {len(tables)} tables")
    weights = weights / weights.sum()
    scores = sum(w * t.scores for w, t in zip(weights, tables))
    fused = DecisionTable(list(first.video_ids), first.true_labels.copy(),
                          list(first.class_ids), scores)
    return make_report(setting, fused.true_labels, fused.predicted, fused.class_ids,
                       decisions=fused)


def write_reports(path, reports) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = [r.to_json() for r in reports]
    path.write_text(json.dumps(data if len(data) != 1 else data[0], indent=2, sort_keys=True)
                    + "\n", encoding="utf-8")

