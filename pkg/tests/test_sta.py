import numpy as np
import pytest

from synthcast.celllib import CellKind, default_library
from synthcast.errors import DomainError
from synthcast.netgraph import Cell, Net, Netlist, netlist_to_graph
from synthcast.sta import analyze, enumerate_paths, stage_delay, stage_delays

from helpers import brute_force_timing, inv_chain_netlist, random_graph, uniform_library


def test_single_buf_intrinsic_only():
    n = Netlist(
        cells=(Cell("b", CellKind("BUF", "X1")),),
        nets=(Net("i", None, (("b", "A"),)), Net("o", ("b", "Y"), ())),
        primary_inputs=("i",),
        primary_outputs=("o",),
    )
    lib = uniform_library(
        d_intrinsic=1.0, r_drive=0.0, k_slew=0.0, s_intrinsic=0.0, r_slew=0.0,
        wire_cap_per_fanout=0.0, default_output_load=0.0, default_input_slew=0.0,
    )
    rpt = analyze(netlist_to_graph(n), lib)
    assert rpt.worst_delay == 1.0


def test_inv_chain_composes_linearly():
    # input_cap == default_output_load makes every stage see the same load,
    # so the chain delay is exactly k per-arc delays
    k = 7
    lib = uniform_library(d_intrinsic=1.0, r_drive=0.5, k_slew=0.0, input_cap=1.0,
                          wire_cap_per_fanout=0.1, default_output_load=1.0)
    g = netlist_to_graph(inv_chain_netlist(k))
    rpt = analyze(g, lib)
    per_arc = 1.0 + 0.5 * 1.1
    assert rpt.worst_delay == pytest.approx(k * per_arc, rel=1e-12)


def test_analyze_matches_brute_force_enumeration():
    lib = default_library(0)
    rng = np.random.default_rng(42)
    for _ in range(20):
        g = random_graph(rng)
        rpt = analyze(g, lib)
        worst, _ = brute_force_timing(g, lib)
        assert abs(rpt.worst_delay - worst) <= 1e-9


def test_stage_delay_conventions():
    lib = uniform_library(d_intrinsic=1.0, r_drive=0.0, k_slew=0.0)
    # two BUF chains of lengths 2 and 5 merging at an AND2
    cells = [Cell(f"a{i}", CellKind("BUF", "X1")) for i in range(2)]
    cells += [Cell(f"b{i}", CellKind("BUF", "X1")) for i in range(5)]
    cells.append(Cell("m", CellKind("AND2", "X1")))
    nets = [
        Net("s", None, (("a0", "A"), ("b0", "A"))),
        Net("na0", ("a0", "Y"), (("a1", "A"),)),
        Net("na1", ("a1", "Y"), (("m", "A"),)),
    ]
    for i in range(4):
        nets.append(Net(f"nb{i}", (f"b{i}", "Y"), ((f"b{i+1}", "A"),)))
    nets.append(Net("nb4", ("b4", "Y"), (("m", "B"),)))
    nets.append(Net("out", ("m", "Y"), ()))
    n = Netlist(tuple(cells), tuple(nets), ("s",), ("out",))
    g = netlist_to_graph(n)
    rpt = analyze(g, lib)

    m = next(c for c in g.cells if c.cell_id == "m")
    assert rpt.arrival[m.out_pin] == pytest.approx(6.0)
    assert stage_delay(rpt, g, m.out_pin) == pytest.approx(1.0)
    # net edges are zero-delay: every input pin has stage 0
    for c in g.cells:
        for p in c.in_pins:
            assert stage_delay(rpt, g, p) == 0.0
    # primary-input port contributes nothing
    assert stage_delay(rpt, g, g.input_ports()[0]) == 0.0
    # single-input cell's output stage is its arc delay
    a0 = next(c for c in g.cells if c.cell_id == "a0")
    assert stage_delay(rpt, g, a0.out_pin) == pytest.approx(1.0)


def test_stage_delays_telescope_along_worst_path():
    lib = default_library(0)
    rng = np.random.default_rng(9)
    for _ in range(30):
        g = random_graph(rng)
        rpt = analyze(g, lib)
        total = sum(stage_delay(rpt, g, v) for v in rpt.worst_path)
        assert abs(total - rpt.worst_delay) <= 1e-9


def test_enumerate_paths_single_path_graph():
    lib = default_library(0)
    g = netlist_to_graph(inv_chain_netlist(4))
    rpt = analyze(g, lib)
    for k in (1, 2, 10):
        paths = enumerate_paths(g, rpt, k)
        assert len(paths) == 1
        assert paths[0][0] == rpt.worst_path
        assert paths[0][1] == pytest.approx(rpt.worst_delay, abs=1e-12)


def diamond_graph():
    # arms of 3 and 5 unit-delay buffers between one input and one AND2
    cells = [Cell(f"a{i}", CellKind("BUF", "X1")) for i in range(3)]
    cells += [Cell(f"b{i}", CellKind("BUF", "X1")) for i in range(5)]
    cells.append(Cell("m", CellKind("AND2", "X1")))
    nets = [Net("s", None, (("a0", "A"), ("b0", "A")))]
    for i in range(2):
        nets.append(Net(f"na{i}", (f"a{i}", "Y"), ((f"a{i+1}", "A"),)))
    nets.append(Net("na2", ("a2", "Y"), (("m", "A"),)))
    for i in range(4):
        nets.append(Net(f"nb{i}", (f"b{i}", "Y"), ((f"b{i+1}", "A"),)))
    nets.append(Net("nb4", ("b4", "Y"), (("m", "B"),)))
    nets.append(Net("out", ("m", "Y"), ()))
    return netlist_to_graph(Netlist(tuple(cells), tuple(nets), ("s",), ("out",)))


def test_enumerate_paths_diamond_ranks_arms():
    lib = uniform_library(d_intrinsic=1.0, r_drive=0.0, k_slew=0.0)
    g = diamond_graph()
    rpt = analyze(g, lib)
    paths = enumerate_paths(g, rpt, 2)
    assert len(paths) == 2
    assert paths[0][1] == pytest.approx(6.0)  # 5-buffer arm + merge cell
    assert paths[1][1] == pytest.approx(4.0)  # 3-buffer arm + merge cell
    b_pins = {c.out_pin for c in g.cells if c.cell_id.startswith("b")}
    a_pins = {c.out_pin for c in g.cells if c.cell_id.startswith("a")}
    assert b_pins <= set(paths[0][0])
    assert a_pins <= set(paths[1][0])


def test_enumerate_paths_k1_matches_analyze():
    lib = default_library(0)
    rng = np.random.default_rng(17)
    for _ in range(25):
        g = random_graph(rng)
        rpt = analyze(g, lib)
        [(path, delay)] = enumerate_paths(g, rpt, 1)
        assert path == rpt.worst_path
        assert delay == pytest.approx(rpt.worst_delay, abs=1e-9)


def test_enumerate_paths_rejects_bad_k():
    lib = default_library(0)
    g = netlist_to_graph(inv_chain_netlist(2))
    rpt = analyze(g, lib)
    with pytest.raises(DomainError):
        enumerate_paths(g, rpt, 0)


def test_enumerate_paths_covers_brute_force_set():
    lib = default_library(0)
    rng = np.random.default_rng(23)
    for _ in range(10):
        g = random_graph(rng, max_cells=8)
        rpt = analyze(g, lib)
        _, oracle_paths = brute_force_timing(g, lib)
        got = enumerate_paths(g, rpt, len(oracle_paths) + 5)
        assert len(got) == len(oracle_paths)
        assert {p for p, _ in got} == set(oracle_paths)
        delays = [d for _, d in got]
        assert delays == sorted(delays, reverse=True)


def test_upsizing_single_cell_never_hurts_with_local_effects():
    # flat input caps + zero slew coupling make upsizing strictly local
    lib = uniform_library(d_intrinsic=0.2, r_drive=0.8, k_slew=0.0, flat_caps=True)
    rng = np.random.default_rng(31)
    for _ in range(10):
        from helpers import random_netlist

        n = random_netlist(rng)
        base = analyze(netlist_to_graph(n), lib).worst_delay
        for i, c in enumerate(n.cells):
            up = lib.upsized(c.kind)
            if up is None:
                continue
            cells = list(n.cells)
            cells[i] = Cell(c.cell_id, up)
            n2 = Netlist(tuple(cells), n.nets, n.primary_inputs, n.primary_outputs)
            assert analyze(netlist_to_graph(n2), lib).worst_delay <= base + 1e-12


def test_analyze_is_deterministic():
    lib = default_library(0)
    g = random_graph(np.random.default_rng(1))
    r1 = analyze(g, lib)
    r2 = analyze(g, lib)
    assert np.array_equal(r1.arrival, r2.arrival)
    assert np.array_equal(r1.slew, r2.slew)
    assert r1.worst_path == r2.worst_path
    assert r1.worst_delay == r2.worst_delay
    assert r1.load == r2.load


def test_total_area_counts_cells_once():
    lib = uniform_library(area=2.0)
    g = netlist_to_graph(inv_chain_netlist(5))
    rpt = analyze(g, lib)
    assert rpt.total_area == pytest.approx(5 * 2.0)
    assert set(rpt.load) == {c.out_pin for c in g.cells}


def test_stage_delays_array_matches_scalar():
    lib = default_library(0)
    g = random_graph(np.random.default_rng(2))
    rpt = analyze(g, lib)
    arr = stage_delays(rpt, g)
    for v in range(g.num_nodes):
        assert arr[v] == pytest.approx(stage_delay(rpt, g, v), abs=1e-15)
