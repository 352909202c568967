"""Command-line workflow tying the pipeline together.

Stages: gen-lib -> gen-dataset -> synth -> label -> fit-norm -> train ->
predict -> reconstruct / sweep / eval / report.  Every stage writes a
`.manifest.json` sidecar (inputs with hashes, arguments, wall time) so any
artifact can be re-created from seeds alone; the artifacts themselves
contain nothing non-deterministic and are byte-stable across reruns.

Exit codes: 0 success, 2 usage, 3 data/fingerprint error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass

from . import fileio
from .addergen import random_adder_netlist
from .celllib import default_library, library_fingerprint, load_library, save_library
from .errors import (
    CheckpointError,
    ConsistencyError,
    DomainError,
    LibraryError,
    NumericError,
    PipelineError,
    StructuralError,
)
from .gat import ModelConfig, predict as model_predict, train as run_train
from .labeling import FEATURE_DIM, annotate_features, build_labels, fit_normalization
from .netgraph import netlist_to_graph
from .physopt import SynthConfig, aggressive_target, synthesize
from .reconstruct import InferredGraph, reconstruct_metrics, sweep_curve
from .sta import analyze, report_to_text

SAMPLE_SEED_STRIDE = 1_000_000  # sample i of root seed S draws seed S*stride + i


def sample_seed(root_seed: int, index: int) -> int:
    return root_seed * SAMPLE_SEED_STRIDE + index


def mae(pred, gt, ids=None):
    """Mean of |pred - gt| / gt, the design-level accuracy metric."""
    pred = list(pred)
    gt = list(gt)
    if len(pred) != len(gt):
        raise DomainError(f"mae needs equal lengths, got {len(pred)} vs {len(gt)}")
    if not gt:
        raise DomainError("mae needs at least one design")
    total = 0.0
    for i, (p, g) in enumerate(zip(pred, gt)):
        if g == 0:
            name = ids[i] if ids else f"#{i}"
            raise DomainError(f"mae undefined: ground truth is zero for design {name}")
        total += abs(p - g) / g
    return total / len(gt)


@dataclass
class EvalSummary:
    rows: list          # (design_id, pred_delay, gt_delay, pred_area, gt_area)
    delay_mae: float
    area_mae: float
    baseline_delay_mae: float
    baseline_area_mae: float
    mean_inference_s: float = 0.0  # reported in the manifest, not the artifact

    def to_text(self) -> str:
        lines = ["synthcast-eval 1"]
        for row in self.rows:
            d, pd, gd, pa, ga = row
            lines.append(f"design {d} pred_delay={pd!r} gt_delay={gd!r} pred_area={pa!r} gt_area={ga!r}")
        lines.append(f"delay_mae {self.delay_mae!r}")
        lines.append(f"area_mae {self.area_mae!r}")
        lines.append(f"baseline_delay_mae {self.baseline_delay_mae!r}")
        lines.append(f"baseline_area_mae {self.baseline_area_mae!r}")
        return "\n".join(lines) + "\n"


def build_eval_summary(pre_graphs, post_graphs, model, stats, lib) -> EvalSummary:
    rows = []
    pred_d, pred_a, gt_d, gt_a, base_d, base_a = [], [], [], [], [], []
    ids = []
    t0 = time.perf_counter()
    for pre, post in zip(pre_graphs, post_graphs):
        if pre.features is None:
            pre = annotate_features(pre, analyze(pre, lib), lib)
        ig = InferredGraph.from_predictions(pre, model_predict(model, pre, stats))
        m = reconstruct_metrics(ig)
        rp = analyze(pre, lib)
        rq = analyze(post, lib)
        did = pre.meta.get("index", str(len(rows)))
        rows.append((did, m.delay, rq.worst_delay, m.area, rq.total_area))
        ids.append(did)
        pred_d.append(m.delay)
        pred_a.append(m.area)
        gt_d.append(rq.worst_delay)
        gt_a.append(rq.total_area)
        base_d.append(rp.worst_delay)
        base_a.append(rp.total_area)
    elapsed = time.perf_counter() - t0
    return EvalSummary(
        rows=rows,
        delay_mae=mae(pred_d, gt_d, ids),
        area_mae=mae(pred_a, gt_a, ids),
        baseline_delay_mae=mae(base_d, gt_d, ids),
        baseline_area_mae=mae(base_a, gt_a, ids),
        mean_inference_s=elapsed / max(1, len(rows)),
    )


# -- plumbing -------------------------------------------------------------------


def _load_lib(path):
    lib = load_library(path)
    return lib, library_fingerprint(lib)


def _check_lib_fingerprint(graphs, lib_fp: str, where: str):
    for g in graphs:
        fp = g.meta.get("lib_fp")
        if fp and fp != lib_fp[: len(fp)]:
            raise PipelineError(
                f"{where}: graph was built with library {fp}, current library is {lib_fp[:12]}"
            )


def _split_counts(arg, n):
    if arg:
        parts = [int(x) for x in arg.split(",")]
        if len(parts) != 3 or any(p < 0 for p in parts) or sum(parts) > n:
            raise DomainError(f"--split {arg!r} does not fit a dataset of {n} graphs")
        return tuple(parts)
    train = int(n * 0.6)
    val = int(n * 0.2)
    return (train, val, n - train - val)


def _parse_targets(arg):
    try:
        targets = [float(x) for x in arg.split(",") if x]
    except ValueError:
        raise DomainError(f"bad --targets list {arg!r}") from None
    if not targets:
        raise DomainError("--targets must name at least one delay target")
    return sorted(targets)


# -- commands --------------------------------------------------------------------


def cmd_gen_lib(args):
    lib = default_library(args.seed)
    save_library(lib, args.out)
    return {"lib_version": lib.version, "fingerprint": library_fingerprint(lib)}


def cmd_gen_dataset(args):
    lib, lib_fp = _load_lib(args.lib)
    graphs = []
    for i in range(args.count):
        s = sample_seed(args.seed, i)
        g = netlist_to_graph(random_adder_netlist(args.width, s, lib))
        meta = dict(g.meta)
        meta.update(index=str(i), seed=str(s), width=str(args.width),
                    lib_version=lib.version, lib_fp=lib_fp[:12])
        graphs.append(g.with_annotations(meta=meta))
    fileio.save_dataset(graphs, args.out)
    return {"count": args.count, "width": args.width}


def cmd_synth(args):
    lib, lib_fp = _load_lib(args.lib)
    graphs = fileio.load_dataset(args.inp)
    _check_lib_fingerprint(graphs, lib_fp, "synth")
    out = []
    for g in graphs:
        target = aggressive_target(g, lib, args.target_alpha)
        cfg = SynthConfig(target_delay=target, max_fanout=args.max_fanout,
                          max_passes=args.max_passes)
        post = synthesize(g, lib, cfg)
        meta = dict(post.meta)
        meta["alpha"] = repr(args.target_alpha)
        out.append(post.with_annotations(meta=meta))
    fileio.save_dataset(out, args.out)
    met = sum(1 for g in out if g.meta["met"] == "yes")
    return {"count": len(out), "targets_met": met}


def cmd_label(args):
    lib, lib_fp = _load_lib(args.lib)
    pres = fileio.load_dataset(args.pre)
    posts = fileio.load_dataset(args.post)
    if len(pres) != len(posts):
        raise PipelineError(f"pre has {len(pres)} graphs, post has {len(posts)}")
    _check_lib_fingerprint(pres, lib_fp, "label(pre)")
    _check_lib_fingerprint(posts, lib_fp, "label(post)")
    out = []
    for pre, post in zip(pres, posts):
        if pre.meta.get("index") != post.meta.get("index"):
            raise PipelineError(
                f"dataset order mismatch: pre index {pre.meta.get('index')} vs "
                f"post index {post.meta.get('index')}"
            )
        rp = analyze(pre, lib)
        rq = analyze(post, lib)
        ann = annotate_features(pre, rp, lib)
        labels = build_labels(pre, post, rp, rq, lib)
        meta = dict(pre.meta)
        meta.update(role="labeled", post_delay=repr(rq.worst_delay), post_area=repr(rq.total_area))
        out.append(ann.with_annotations(labels=labels, meta=meta))
    fileio.save_dataset(out, args.out)
    return {"count": len(out)}


def cmd_fit_norm(args):
    graphs = fileio.load_dataset(args.inp)
    n_train, _, _ = _split_counts(args.split, len(graphs))
    stats = fit_normalization(graphs[:n_train])
    fileio.save_norm(stats, args.out)
    return {"fit_on": n_train, "fingerprint": stats.fingerprint()[:12]}


def cmd_train(args):
    graphs = fileio.load_dataset(args.data)
    stats = fileio.load_norm(args.norm)
    n_train, n_val, _ = _split_counts(args.split, len(graphs))
    cfg = ModelConfig(
        in_dim=FEATURE_DIM, hidden=args.hidden, layers=args.layers, heads=args.heads,
        dropout_p=args.dropout, lr=args.lr, seed=args.seed,
    )
    history_rows = []

    def log(m):
        history_rows.append({"epoch": m.epoch, "train_loss": m.train_loss, "val_mae": m.val_mae})
        if args.verbose:
            print(f"epoch {m.epoch}: train_loss={m.train_loss:.6f} val_mae={m.val_mae:.6f}")

    model, _ = run_train(
        graphs[:n_train], graphs[n_train : n_train + n_val], cfg, stats,
        epochs=args.epochs, batch_size=args.batch_size, patience=args.patience,
        norm_fingerprint=stats.fingerprint(), log=log,
    )
    fileio.save_checkpoint(model, args.out)
    return {"epochs_run": len(history_rows), "step": model.step, "history": history_rows}


def cmd_predict(args):
    lib, lib_fp = _load_lib(args.lib)
    graphs = fileio.load_dataset(args.inp)
    _check_lib_fingerprint(graphs, lib_fp, "predict")
    stats = fileio.load_norm(args.norm)
    model = fileio.load_checkpoint(args.model)
    out = []
    for g in graphs:
        base = g if g.features is not None else annotate_features(g, analyze(g, lib), lib)
        pred = model_predict(model, base, stats)
        ig = InferredGraph.from_predictions(base, pred)
        meta = dict(g.meta)
        meta["role"] = "inferred"
        out.append(base.with_annotations(labels=ig.predicted, meta=meta))
    fileio.save_dataset(out, args.out)
    return {"count": len(out)}


def cmd_reconstruct(args):
    graphs = fileio.load_dataset(args.inp)
    lines = ["synthcast-metrics 1"]
    for g in graphs:
        if g.labels is None or g.features is None:
            raise PipelineError("reconstruct needs inferred graphs with features and predictions")
        m = reconstruct_metrics(InferredGraph.from_predictions(g, g.labels))
        lines.append(f"design {g.meta.get('index', '?')} delay={m.delay!r} area={m.area!r}")
    text = "\n".join(lines) + "\n"
    with open(args.out, "w") as f:
        f.write(text)
    return {"count": len(graphs)}


def cmd_sweep(args):
    lib, lib_fp = _load_lib(args.lib)
    graphs = fileio.load_dataset(args.inp)
    _check_lib_fingerprint(graphs, lib_fp, "sweep")
    stats = fileio.load_norm(args.norm)
    model = fileio.load_checkpoint(args.model)
    if not (0 <= args.index < len(graphs)):
        raise DomainError(f"--index {args.index} out of range for {len(graphs)} graphs")
    g = graphs[args.index]
    base = g if g.features is not None else annotate_features(g, analyze(g, lib), lib)
    ig = InferredGraph.from_predictions(base, model_predict(model, base, stats))
    curve = sweep_curve(base, ig, _parse_targets(args.targets), k_paths=args.k_paths)
    with open(args.out, "w") as f:
        f.write(fileio.curve_to_text(curve))
    return {"points": len(curve.points)}


def cmd_eval(args):
    lib, lib_fp = _load_lib(args.lib)
    pres = fileio.load_dataset(args.pre)
    posts = fileio.load_dataset(args.post)
    _check_lib_fingerprint(pres, lib_fp, "eval(pre)")
    _check_lib_fingerprint(posts, lib_fp, "eval(post)")
    if len(pres) != len(posts):
        raise PipelineError(f"pre has {len(pres)} graphs, post has {len(posts)}")
    stats = fileio.load_norm(args.norm)
    model = fileio.load_checkpoint(args.model)
    n_train, n_val, n_test = _split_counts(args.split, len(pres))
    lo = n_train + n_val
    hi = lo + n_test
    summary = build_eval_summary(pres[lo:hi], posts[lo:hi], model, stats, lib)
    with open(args.out, "w") as f:
        f.write(summary.to_text())
    return {
        "designs": len(summary.rows),
        "delay_mae": summary.delay_mae,
        "area_mae": summary.area_mae,
        "baseline_delay_mae": summary.baseline_delay_mae,
        "baseline_area_mae": summary.baseline_area_mae,
        "mean_inference_s": summary.mean_inference_s,
    }


def cmd_report(args):
    lib, lib_fp = _load_lib(args.lib)
    graphs = fileio.load_dataset(args.inp)
    if not (0 <= args.index < len(graphs)):
        raise DomainError(f"--index {args.index} out of range for {len(graphs)} graphs")
    g = graphs[args.index]
    text = report_to_text(analyze(g, lib), g)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return {}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="synthcast", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn):
        sp = sub.add_parser(name)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("gen-lib", cmd_gen_lib)
    sp.add_argument("--seed", type=int, default=0, help="root random seed")
    sp.add_argument("--out", required=True, help="output artifact path")

    sp = add("gen-dataset", cmd_gen_dataset)
    sp.add_argument("--width", type=int, default=16, help="adder bit width")
    sp.add_argument("--count", type=int, default=300, help="number of designs")
    sp.add_argument("--seed", type=int, default=0, help="root random seed")
    sp.add_argument("--lib", required=True, help="cell library file")
    sp.add_argument("--out", required=True, help="output artifact path")

    sp = add("synth", cmd_synth)
    sp.add_argument("--target-alpha", type=float, default=0.6, help="delay target as a fraction of the unoptimized worst delay")
    sp.add_argument("--max-fanout", type=int, default=2, help="net fanout above which buffering is considered")
    sp.add_argument("--max-passes", type=int, default=400, help="optimizer pass budget per design")
    sp.add_argument("--lib", required=True, help="cell library file")
    sp.add_argument("--in", dest="inp", required=True, help="input dataset file")
    sp.add_argument("--out", required=True, help="output artifact path")

    sp = add("label", cmd_label)
    sp.add_argument("--pre", required=True, help="pre-synthesis dataset")
    sp.add_argument("--post", required=True, help="post-synthesis dataset")
    sp.add_argument("--lib", required=True, help="cell library file")
    sp.add_argument("--out", required=True, help="output artifact path")

    sp = add("fit-norm", cmd_fit_norm)
    sp.add_argument("--in", dest="inp", required=True, help="input dataset file")
    sp.add_argument("--split", default=None, help="train,val,test counts (default 60/20/20%%)")
    sp.add_argument("--out", required=True, help="output artifact path")

    sp = add("train", cmd_train)
    sp.add_argument("--data", required=True, help="labeled dataset")
    sp.add_argument("--norm", required=True, help="normalization stats file")
    sp.add_argument("--split", default=None, help="train,val,test counts (default 60/20/20%%)")
    sp.add_argument("--seed", type=int, default=0, help="root random seed")
    sp.add_argument("--epochs", type=int, default=100, help="maximum training epochs")
    sp.add_argument("--batch-size", type=int, default=8, help="graphs per training batch")
    sp.add_argument("--patience", type=int, default=10, help="early-stop epochs without validation improvement")
    sp.add_argument("--hidden", type=int, default=64, help="hidden feature width")
    sp.add_argument("--layers", type=int, default=6, help="attention layer count")
    sp.add_argument("--heads", type=int, default=8, help="attention heads per layer")
    sp.add_argument("--dropout", type=float, default=0.1, help="dropout probability")
    sp.add_argument("--lr", type=float, default=0.01, help="initial learning rate")
    sp.add_argument("--verbose", action="store_true", help="print per-epoch metrics")
    sp.add_argument("--out", required=True, help="output artifact path")

    sp = add("predict", cmd_predict)
    sp.add_argument("--model", required=True, help="model checkpoint")
    sp.add_argument("--norm", required=True, help="normalization stats file")
    sp.add_argument("--lib", required=True, help="cell library file")
    sp.add_argument("--in", dest="inp", required=True, help="input dataset file")
    sp.add_argument("--out", required=True, help="output artifact path")

    sp = add("reconstruct", cmd_reconstruct)
    sp.add_argument("--in", dest="inp", required=True, help="input dataset file")
    sp.add_argument("--out", required=True, help="output artifact path")

    sp = add("sweep", cmd_sweep)
    sp.add_argument("--targets", required=True, help="comma-separated delay targets")
    sp.add_argument("--model", required=True, help="model checkpoint")
    sp.add_argument("--norm", required=True, help="normalization stats file")
    sp.add_argument("--lib", required=True, help="cell library file")
    sp.add_argument("--in", dest="inp", required=True, help="input dataset file")
    sp.add_argument("--index", type=int, default=0, help="which design in the dataset file")
    sp.add_argument("--k-paths", type=int, default=256, help="maximum critical paths examined per target")
    sp.add_argument("--out", required=True, help="output artifact path")

    sp = add("eval", cmd_eval)
    sp.add_argument("--pre", required=True, help="pre-synthesis dataset")
    sp.add_argument("--post", required=True, help="post-synthesis dataset")
    sp.add_argument("--model", required=True, help="model checkpoint")
    sp.add_argument("--norm", required=True, help="normalization stats file")
    sp.add_argument("--lib", required=True, help="cell library file")
    sp.add_argument("--split", default=None, help="train,val,test counts (default 60/20/20%%)")
    sp.add_argument("--out", required=True, help="output artifact path")

    sp = add("report", cmd_report)
    sp.add_argument("--lib", required=True, help="cell library file")
    sp.add_argument("--in", dest="inp", required=True, help="input dataset file")
    sp.add_argument("--index", type=int, default=0, help="which design in the dataset file")
    sp.add_argument("--out", default=None, help="write report here instead of stdout")

    return p


_INPUT_ARGS = ("lib", "inp", "pre", "post", "data", "norm", "model")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    t0 = time.perf_counter()
    try:
        extra = args.fn(args)
    except DomainError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4
    except (PipelineError, ConsistencyError, StructuralError, LibraryError, CheckpointError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 3
    wall = time.perf_counter() - t0
    out = getattr(args, "out", None)
    if out:
        arg_dict = {
            k: v for k, v in vars(args).items()
            if k not in ("fn", "command") and v is not None and not callable(v)
        }
        inputs = [getattr(args, a) for a in _INPUT_ARGS if getattr(args, a, None)]
        fileio.write_manifest(out, args.command, arg_dict, inputs, wall, extra=extra)
    return 0


if __name__ == "__main__":
    sys.exit(main())
