"""Command-line entry point: ``tpmkl <command> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ParameterError, TPMKLError
from .evaluation import (Dataset, DecisionTable, fit_mkl, late_fusion, run_levelwise, run_mkl,
                         run_spectrogram, write_reports)
from .features_io import (FrameSequence, gen_synthetic, load_manifest, load_stream,
                          write_dataset, write_feature_file)
from .kernels import build_bank, save_bank
from .mkl import LOSSES, load_model, predict_reps, save_model
from .pyramid import aggregate

log = logging.getLogger("tpmkl")
SETTINGS = ("levelwise", "mkl", "spectrogram")


def _int_list(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _fixed_level(text):
    kind, _, value = text.partition(":")
    if kind != "level" or not value.isdigit() or int(value) < 1:
        raise argparse.ArgumentTypeError(f"expected level:<l>, got {text!r}")
    return int(value)


def cmd_gen_synth(a):
    manifest, seqs = gen_synthetic(a.per_class, a.classes, a.frames, a.dim, a.signal_level,
                                   a.noise, a.seed, a.stream, a.active_classes)
    path = write_dataset(a.out, manifest, {a.stream: seqs})
    print(f"wrote {len(manifest.entries)} videos to {path}")


def cmd_aggregate(a):
    manifest = load_manifest(a.manifest)
    seqs = load_stream(manifest, a.stream)
    out = Path(a.out)
    for vid, seq in seqs.items():
        rep = aggregate(seq, a.levels)
        # pyramid rows are float64; the feature container stores float32
        write_feature_file(out / f"{vid}.tpfv",
                           FrameSequence(vid, rep.vectors.astype(np.float32), a.stream))
    print(f"wrote {len(seqs)} pyramids (L={a.levels}) to {out}")


def cmd_kernels(a):
    ds = Dataset.load(a.manifest)
    stream = ds.default_stream(a.stream)
    reps = [aggregate(s, a.levels) for s in ds.sequences(a.split, stream)]
    bank = build_bank(reps, normalize=not a.no_kernel_norm)
    save_bank(a.out, bank, {"levels": a.levels, "stream": stream, "split": a.split,
                            "normalize": not a.no_kernel_norm})
    print(f"wrote {len(bank.node_ids)} grams of size {bank.n} to {a.out}")


def cmd_train(a):
    ds = Dataset.load(a.manifest)
    stream = ds.default_stream(a.stream)
    model, _, _ = fit_mkl(ds, a.levels, a.c_reg, stream, not a.no_kernel_norm, a.tol,
                          a.max_outer, a.tol_outer, a.fixed_beta, a.lp_loss)
    save_model(a.out, model)
    levels = ", ".join(f"{v:.4f}" for v in model.beta_by_level())
    print(f"beta by level: [{levels}]; {model.iterations} outer iterations "
          f"({model.meta['stop']})")


def cmd_predict(a):
    model = load_model(a.model)
    manifest = load_manifest(a.manifest)
    stream = a.stream or model.meta.get("stream")
    if stream is None:
        names = manifest.stream_names()
        if len(names) != 1:
            raise ParameterError(f"several streams {names}; pass --stream")
        stream = names[0]
    entries = manifest.split(a.split)
    seqs = load_stream(manifest, stream, entries)
    reps = [aggregate(seqs[e.video_id], int(model.meta["levels"])) for e in entries]
    table = DecisionTable([e.video_id for e in entries],
                          np.array([e.label for e in entries], dtype=np.int64),
                          model.class_ids, predict_reps(model, reps))
    table.write_csv(a.out)
    acc = float(np.mean(table.predicted == table.true_labels)) if entries else 0.0
    print(f"accuracy {acc:.4f} on {len(entries)} {a.split} videos")


def cmd_eval(a):
    ds = Dataset.load(a.manifest)
    stream = ds.default_stream(a.stream)
    settings = [s.strip() for s in a.settings.split(",") if s.strip()]
    bad = sorted(set(settings) - set(SETTINGS))
    if bad:
        raise ParameterError(f"unknown settings {bad}; choose from {list(SETTINGS)}")
    norm = not a.no_kernel_norm
    reports = []
    for s in settings:
        if s == "levelwise":
            reports += [run_levelwise(ds, l, a.c_reg, stream, norm, a.tol)
                        for l in range(1, a.levels + 1)]
        elif s == "mkl":
            reports.append(run_mkl(ds, a.levels, a.c_reg, stream, norm, a.tol, a.max_outer,
                                   a.tol_outer, a.lp_loss))
        else:
            reports.append(run_spectrogram(ds, a.t_target, a.c_reg, stream, norm, a.tol))
    write_reports(a.out, reports)
    if a.decisions_dir:
        for r in reports:
            r.decisions.write_csv(Path(a.decisions_dir) / f"{r.setting}.csv")
    for r in reports:
        print(f"{r.setting:>16}  acc {r.accuracy:.4f}  mean-class {r.mean_class_accuracy:.4f}")


def cmd_fuse(a):
    tables = [DecisionTable.read_csv(p) for p in a.inputs]
    report = late_fusion(tables, a.weights)
    report.decisions.write_csv(a.out)
    if a.report:
        write_reports(a.report, [report])
    print(f"fused accuracy {report.accuracy:.4f}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tpmkl", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synth", help="write a synthetic dataset")
    g.add_argument("--classes", type=int, required=True)
    g.add_argument("--per-class", type=int, required=True)
    g.add_argument("--frames", type=int, required=True)
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--signal-level", type=int, required=True)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--stream", default="appearance")
    g.add_argument("--active-classes", type=_int_list, default=None,
                   help="comma-separated classes that get a distinct pattern")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_synth)

    g = sub.add_parser("aggregate", help="write per-video pyramid files")
    g.add_argument("--manifest", required=True)
    g.add_argument("--stream", required=True)
    g.add_argument("--levels", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_aggregate)

    g = sub.add_parser("kernels", help="write the per-node Gram bank of one split")
    g.add_argument("--manifest", required=True)
    g.add_argument("--stream")
    g.add_argument("--levels", type=int, required=True)
    g.add_argument("--split", choices=("train", "test"), default="train")
    g.add_argument("--no-kernel-norm", action="store_true")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_kernels)

    def solver_args(g):
        g.add_argument("--c-reg", type=float, default=1.0)
        g.add_argument("--tol", type=float, default=1e-6)
        g.add_argument("--max-outer", type=int, default=50)
        g.add_argument("--tol-outer", type=float, default=1e-4)
        g.add_argument("--no-kernel-norm", action="store_true")
        g.add_argument("--lp-loss", choices=LOSSES, default="ovr")

    g = sub.add_parser("train", help="learn kernel weights and SVMs")
    g.add_argument("--manifest", required=True)
    g.add_argument("--stream")
    g.add_argument("--levels", type=int, required=True)
    g.add_argument("--fixed-beta", type=_fixed_level, default=None, metavar="level:L")
    solver_args(g)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_train)

    g = sub.add_parser("predict", help="write per-video decision values")
    g.add_argument("--model", required=True)
    g.add_argument("--manifest", required=True)
    g.add_argument("--stream")
    g.add_argument("--split", choices=("train", "test"), default="test")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_predict)

    g = sub.add_parser("eval", help="run experiment settings and write a JSON report")
    g.add_argument("--manifest", required=True)
    g.add_argument("--stream")
    g.add_argument("--levels", type=int, required=True)
    g.add_argument("--settings", default="levelwise,mkl,spectrogram")
    g.add_argument("--t-target", type=int, default=None)
    g.add_argument("--decisions-dir", default=None)
    solver_args(g)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_eval)

    g = sub.add_parser("fuse", help="late fusion of decision CSVs")
    g.add_argument("--inputs", nargs="+", required=True)
    g.add_argument("--weights", type=float, nargs="+", default=None)
    g.add_argument("--report", default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_fuse)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (TPMKLError, ValueError, OSError) as exc:
        print(f"tpmkl {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
