import numpy as np
import pytest

from synthcast.celllib import (
    DRIVES,
    FUNCTIONS,
    CellKind,
    CellSpec,
    arc_delay,
    arc_slew,
    default_library,
    library_fingerprint,
    library_from_text,
    library_to_text,
    validate_library,
)
from synthcast.errors import DomainError, LibraryError


def spec_with(d=0.0, r=0.0, k=0.0, s=0.0, rs=0.0, cap=1.0, area=1.0):
    return CellSpec(
        kind=CellKind("BUF", "X1"),
        area=area,
        input_cap=cap,
        d_intrinsic=d,
        r_drive=r,
        k_slew=k,
        s_intrinsic=s,
        r_slew=rs,
    )


def test_arc_delay_zero_coefficients():
    sp = spec_with()
    assert arc_delay(sp, 3.0, 7.0) == 0.0


def test_arc_delay_intrinsic_only():
    sp = spec_with(d=1.0, r=2.0, k=0.5)
    assert arc_delay(sp, 0.0, 0.0) == 1.0


def test_arc_delay_linear_form():
    # 1 + 2*3 + 0.5*0.2 = 7.1, checked by hand
    sp = spec_with(d=1.0, r=2.0, k=0.5)
    assert arc_delay(sp, 0.2, 3.0) == pytest.approx(7.1, abs=1e-12)


def test_arc_delay_rejects_negative_inputs():
    sp = spec_with(d=1.0)
    with pytest.raises(DomainError):
        arc_delay(sp, -0.1, 1.0)
    with pytest.raises(DomainError):
        arc_delay(sp, 0.1, -1.0)


def test_arc_slew_examples():
    assert arc_slew(spec_with(), 5.0) == 0.0
    assert arc_slew(spec_with(s=0.1, rs=1.0), 0.0) == pytest.approx(0.1)
    assert arc_slew(spec_with(s=0.1, rs=1.0), 0.4) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(DomainError):
        arc_slew(spec_with(), -1.0)


def test_arc_delay_exactly_linear_in_slew():
    rng = np.random.default_rng(7)
    for _ in range(200):
        sp = spec_with(d=rng.uniform(0, 2), r=rng.uniform(0, 2), k=rng.uniform(0, 1))
        s = float(rng.uniform(0, 5))
        l = float(rng.uniform(0, 5))
        assert abs(arc_delay(sp, s, l) - arc_delay(sp, 0.0, l) - sp.k_slew * s) < 1e-12


def test_default_library_is_seed_reproducible():
    a = default_library(0)
    b = default_library(0)
    assert library_to_text(a) == library_to_text(b)
    assert library_fingerprint(a) == library_fingerprint(b)
    assert library_to_text(default_library(1)) != library_to_text(a)


def test_default_library_covers_all_drives():
    lib = default_library(0)
    for fn in FUNCTIONS:
        for drv in DRIVES:
            assert CellKind(fn, drv) in lib.cells


def test_default_library_upsizing_reduces_delay():
    lib = default_library(0)
    x1 = lib.cells[CellKind("AND2", "X1")]
    x4 = lib.cells[CellKind("AND2", "X4")]
    assert arc_delay(x4, 0.0, 1.0) < arc_delay(x1, 0.0, 1.0)


def test_drive_ordering_holds_at_realistic_loads():
    rng = np.random.default_rng(3)
    for seed in (0, 1, 5):
        lib = default_library(seed)
        for fn in FUNCTIONS:
            for _ in range(20):
                load = lib.default_output_load + float(rng.uniform(0, 10))
                slew = float(rng.uniform(0, 1))
                d = [arc_delay(lib.cells[CellKind(fn, drv)], slew, load) for drv in DRIVES]
                assert d[2] < d[1] < d[0]


def test_library_text_round_trip_is_exact():
    lib = default_library(0)
    text = library_to_text(lib)
    again = library_from_text(text)
    assert library_to_text(again) == text
    assert again.cells == lib.cells
    assert again.version == lib.version


def test_loader_rejects_unknown_schema():
    lib = default_library(0)
    text = library_to_text(lib).replace("synthcast-lib 1", "synthcast-lib 99", 1)
    with pytest.raises(LibraryError):
        library_from_text(text)


def test_validate_rejects_nonpositive_coefficients():
    lib = default_library(0)
    bad = dict(lib.cells)
    k = CellKind("INV", "X1")
    sp = bad[k]
    bad[k] = CellSpec(
        kind=k, area=sp.area, input_cap=sp.input_cap, d_intrinsic=0.0,
        r_drive=sp.r_drive, k_slew=sp.k_slew, s_intrinsic=sp.s_intrinsic, r_slew=sp.r_slew,
    )
    from synthcast.celllib import CellLibrary

    broken = CellLibrary(
        cells=bad,
        wire_cap_per_fanout=lib.wire_cap_per_fanout,
        default_input_slew=lib.default_input_slew,
        default_output_load=lib.default_output_load,
        version="broken",
    )
    with pytest.raises(LibraryError):
        validate_library(broken)


def test_kind_arity_and_unknown_names():
    assert CellKind("INV", "X1").num_inputs == 1
    assert CellKind("BUF", "X2").num_inputs == 1
    assert CellKind("XNOR2", "X4").num_inputs == 2
    with pytest.raises(LibraryError):
        CellKind("AND3", "X1")
    with pytest.raises(LibraryError):
        CellKind("AND2", "X8")
