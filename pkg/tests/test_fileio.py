import json

import numpy as np
import pytest

from synthcast import fileio
from synthcast.addergen import random_adder_netlist
from synthcast.celllib import load_default_library
from synthcast.errors import CheckpointError, PipelineError, StructuralError
from synthcast.gat import ModelConfig, adam_step, backward, build_batch, forward, init_params, mse_loss
from synthcast.labeling import annotate_features, build_labels, fit_normalization
from synthcast.netgraph import netlist_to_graph
from synthcast.physopt import SynthConfig, aggressive_target, synthesize
from synthcast.sta import analyze

LIB = load_default_library()


def labeled_graph(width=4, seed=0):
    g = netlist_to_graph(random_adder_netlist(width, seed, LIB))
    rp = analyze(g, LIB)
    post = synthesize(g, LIB, SynthConfig(target_delay=aggressive_target(g, LIB)))
    ann = annotate_features(g, rp, LIB)
    labels = build_labels(g, post, rp, analyze(post, LIB), LIB)
    meta = dict(g.meta, index="0", lib_version=LIB.version)
    return ann.with_annotations(labels=labels, meta=meta), post


def graphs_equal(a, b):
    return (
        a.nodes == b.nodes
        and a.nets == b.nets
        and a.cells == b.cells
        and a.fwd == b.fwd
        and a.rev == b.rev
        and a.meta == b.meta
        and (a.features is None) == (b.features is None)
        and (a.features is None or np.array_equal(a.features, b.features))
        and (a.labels is None) == (b.labels is None)
        and (a.labels is None or np.array_equal(a.labels, b.labels))
    )


def test_graph_text_round_trip_bare(tmp_path):
    g = netlist_to_graph(random_adder_netlist(4, 1, LIB))
    back = next(iter(fileio.iter_graph_texts(fileio.graph_to_text(g))))
    g2 = fileio._graph_from_lines(back)
    assert graphs_equal(g, g2)


def test_graph_text_round_trip_annotated(tmp_path):
    g, post = labeled_graph()
    path = tmp_path / "data.ds"
    fileio.save_dataset([g, post], path)
    g2, post2 = fileio.load_dataset(path)
    assert graphs_equal(g, g2)
    assert graphs_equal(post, post2)
    # serialization is stable: writing again is byte-identical
    path2 = tmp_path / "again.ds"
    fileio.save_dataset([g2, post2], path2)
    assert path.read_bytes() == path2.read_bytes()


def test_unknown_graph_schema_rejected():
    g = netlist_to_graph(random_adder_netlist(2, 0, LIB))
    text = fileio.graph_to_text(g).replace("synthcast-graph 1", "synthcast-graph 9")
    with pytest.raises(StructuralError, match="unknown graph schema"):
        list(fileio.iter_graph_texts(text))


def test_corrupt_edge_section_detected():
    g = netlist_to_graph(random_adder_netlist(2, 0, LIB))
    text = fileio.graph_to_text(g)
    first_edge = next(ln for ln in text.splitlines() if ln.startswith("edge"))
    parts = first_edge.split()
    bad = f"edge {parts[2]} {parts[1]} {parts[3]}"  # flip direction
    mangled = text.replace(first_edge, bad, 1)
    with pytest.raises(StructuralError, match="edge section disagrees"):
        fileio._graph_from_lines(next(iter(fileio.iter_graph_texts(mangled))))


def test_unterminated_document_rejected():
    g = netlist_to_graph(random_adder_netlist(2, 0, LIB))
    text = fileio.graph_to_text(g).replace("end-graph\n", "")
    with pytest.raises(StructuralError, match="unterminated"):
        list(fileio.iter_graph_texts(text))


def trained_model():
    g, _ = labeled_graph()
    stats = fit_normalization([g])
    cfg = ModelConfig(in_dim=g.features.shape[1], hidden=8, layers=2, heads=2, seed=4)
    mp = init_params(cfg)
    mp.norm_fingerprint = stats.fingerprint()
    from synthcast.labeling import apply_label_norm

    batch = build_batch([g], stats)
    y = apply_label_norm(g.labels, stats)
    rng = np.random.Generator(np.random.PCG64(1))
    for _ in range(3):
        pred, cache = forward(mp, batch, training=True, rng=rng)
        _, gpred = mse_loss(pred, y)
        adam_step(mp, backward(mp, batch, cache, gpred))
    return mp, stats


def test_checkpoint_round_trip(tmp_path):
    mp, _ = trained_model()
    path = tmp_path / "model.ckpt"
    fileio.save_checkpoint(mp, path)
    back = fileio.load_checkpoint(path)
    assert back.cfg == mp.cfg
    assert back.step == mp.step
    assert back.norm_fingerprint == mp.norm_fingerprint
    for k in mp.params:
        assert np.array_equal(back.params[k], mp.params[k])
    for k in mp.buffers:
        assert np.array_equal(back.buffers[k], mp.buffers[k])
    for k in mp.adam_m:
        assert np.array_equal(back.adam_m[k], mp.adam_m[k])
        assert np.array_equal(back.adam_v[k], mp.adam_v[k])
    # saving the loaded model reproduces the file byte for byte
    path2 = tmp_path / "model2.ckpt"
    fileio.save_checkpoint(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_schema_and_truncation_errors(tmp_path):
    mp, _ = trained_model()
    path = tmp_path / "model.ckpt"
    fileio.save_checkpoint(mp, path)
    raw = path.read_bytes()
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"other-format 3\n" + raw)
    with pytest.raises(CheckpointError, match="schema"):
        fileio.load_checkpoint(bad)
    bad.write_bytes(raw[:-16])
    with pytest.raises(CheckpointError, match="truncated"):
        fileio.load_checkpoint(bad)
    bad.write_bytes(raw + b"\x00" * 8)
    with pytest.raises(CheckpointError, match="trailing"):
        fileio.load_checkpoint(bad)


def test_norm_round_trip_and_fingerprint(tmp_path):
    g, _ = labeled_graph()
    stats = fit_normalization([g])
    path = tmp_path / "norm.txt"
    fileio.save_norm(stats, path)
    back = fileio.load_norm(path)
    assert back.fingerprint() == stats.fingerprint()
    assert np.array_equal(back.f_mean, stats.f_mean)
    assert np.array_equal(back.f_std, stats.f_std)
    assert np.array_equal(back.l_mean, stats.l_mean)
    # tampering with a value trips the embedded fingerprint
    text = path.read_text()
    target = text.splitlines()[3].split()[1]
    path.write_text(text.replace(target, repr(float(target) + 1.0), 1))
    with pytest.raises(PipelineError, match="fingerprint"):
        fileio.load_norm(path)


def test_manifest_contents(tmp_path):
    src = tmp_path / "input.txt"
    src.write_text("hello\n")
    out = tmp_path / "artifact.txt"
    out.write_text("result\n")
    fileio.write_manifest(out, "demo", {"x": 1}, [src], 1.23, extra={"n": 2})
    manifest = json.loads((tmp_path / "artifact.txt.manifest.json").read_text())
    assert manifest["command"] == "demo"
    assert manifest["args"] == {"x": "1"}
    assert manifest["extra"] == {"n": 2}
    assert list(manifest["inputs"]) == [str(src)]
    assert manifest["inputs"][str(src)] == fileio.sha256_file(src)
