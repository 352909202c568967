"""Synthetic standard-cell library with a linear timing/area model.

The library is the timing ground truth for everything downstream: STA,
the reference optimizer, feature annotation and labeling all price their
decisions with these coefficients.  Delay is linear in load and input
slew so every expected value in the test suite can be checked by hand.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import DomainError, LibraryError

FUNCTIONS = ("INV", "BUF", "AND2", "OR2", "NAND2", "NOR2", "XOR2", "XNOR2")
DRIVES = ("X1", "X2", "X4")
DRIVE_SCALE = {"X1": 1.0, "X2": 2.0, "X4": 4.0}

# Boolean semantics, used by functional simulation of generated netlists.
FUNCTION_EVAL = {
    "INV": lambda a: 1 - a,
    "BUF": lambda a: a,
    "AND2": lambda a, b: a & b,
    "OR2": lambda a, b: a | b,
    "NAND2": lambda a, b: 1 - (a & b),
    "NOR2": lambda a, b: 1 - (a | b),
    "XOR2": lambda a, b: a ^ b,
    "XNOR2": lambda a, b: 1 - (a ^ b),
}

LIB_SCHEMA = "synthcast-lib"
LIB_SCHEMA_VERSION = 1


@dataclass(frozen=True, order=True)
class CellKind:
    function: str
    drive: str

    def __post_init__(self):
        if self.function not in FUNCTIONS:
            raise LibraryError(f"unknown cell function {self.function!r}")
        if self.drive not in DRIVES:
            raise LibraryError(f"unknown drive strength {self.drive!r}")

    @property
    def num_inputs(self) -> int:
        return 1 if self.function in ("INV", "BUF") else 2

    def __str__(self) -> str:
        return f"{self.function}_{self.drive}"


@dataclass(frozen=True)
class CellSpec:
    """Timing/area coefficients of one (function, drive) cell.

    arc delay  = d_intrinsic + r_drive * load + k_slew * slew_in
    output slew = s_intrinsic + r_slew * load
    """

    kind: CellKind
    area: float
    input_cap: float
    d_intrinsic: float
    r_drive: float
    k_slew: float
    s_intrinsic: float
    r_slew: float


@dataclass(frozen=True)
class CellLibrary:
    cells: dict  # CellKind -> CellSpec
    wire_cap_per_fanout: float
    default_input_slew: float
    default_output_load: float
    version: str = "custom"

    def spec(self, kind: CellKind) -> CellSpec:
        try:
            return self.cells[kind]
        except KeyError:
            raise LibraryError(f"cell {kind} not in library {self.version!r}") from None

    def upsized(self, kind: CellKind) -> CellKind | None:
        """Next drive strength of the same function, or None at the top."""
        i = DRIVES.index(kind.drive)
        if i + 1 >= len(DRIVES):
            return None
        return CellKind(kind.function, DRIVES[i + 1])


def arc_delay(spec: CellSpec, slew_in: float, load: float) -> float:
    """Pin-to-pin delay of one cell arc at the given input slew and output load."""
    if slew_in < 0 or load < 0:
        raise DomainError(f"arc_delay needs slew_in >= 0 and load >= 0, got {slew_in}, {load}")
    return spec.d_intrinsic + spec.r_drive * load + spec.k_slew * slew_in


def arc_slew(spec: CellSpec, load: float) -> float:
    """Output transition time of a cell driving the given load."""
    if load < 0:
        raise DomainError(f"arc_slew needs load >= 0, got {load}")
    return spec.s_intrinsic + spec.r_slew * load


def validate_library(lib: CellLibrary) -> None:
    """Check the structural invariants a usable library must satisfy."""
    for fn in FUNCTIONS:
        for drv in DRIVES:
            if CellKind(fn, drv) not in lib.cells:
                raise LibraryError(f"library {lib.version!r} is missing {fn}_{drv}")
    for kind, spec in lib.cells.items():
        if spec.kind != kind:
            raise LibraryError(f"library entry {kind} holds spec for {spec.kind}")
        for name in ("area", "input_cap", "d_intrinsic", "r_drive", "k_slew", "s_intrinsic", "r_slew"):
            if getattr(spec, name) <= 0:
                raise LibraryError(f"{kind}: coefficient {name} must be strictly positive")
    for g in ("wire_cap_per_fanout", "default_input_slew", "default_output_load"):
        if getattr(lib, g) <= 0:
            raise LibraryError(f"library constant {g} must be strictly positive")
    for fn in FUNCTIONS:
        for lo, hi in zip(DRIVES, DRIVES[1:]):
            a = lib.cells[CellKind(fn, lo)]
            b = lib.cells[CellKind(fn, hi)]
            if not (b.r_drive < a.r_drive and b.area > a.area and b.input_cap >= a.input_cap):
                raise LibraryError(f"{fn}: {hi} must have smaller r_drive, larger area, >= input_cap than {lo}")


# Base-coefficient ranges per function family, X1 drive.  Two-input and
# xor-class gates are slower and heavier, mirroring how real libraries rank.
_FAMILY = {
    "INV": (0.03, 0.06, 0.7, 1.0, 0.65, 0.90, 0.50, 0.80),
    "BUF": (0.04, 0.07, 0.7, 1.0, 0.65, 0.90, 0.55, 0.85),
    "NAND2": (0.05, 0.09, 0.9, 1.2, 0.90, 1.20, 0.80, 1.10),
    "NOR2": (0.05, 0.09, 0.9, 1.2, 0.90, 1.20, 0.80, 1.10),
    "AND2": (0.07, 0.12, 1.0, 1.4, 0.95, 1.30, 1.00, 1.40),
    "OR2": (0.07, 0.12, 1.0, 1.4, 0.95, 1.30, 1.00, 1.40),
    "XOR2": (0.10, 0.16, 1.2, 1.6, 1.00, 1.40, 1.50, 2.00),
    "XNOR2": (0.10, 0.16, 1.2, 1.6, 1.00, 1.40, 1.50, 2.00),
}

_AREA_EXP = 0.8   # area growth per drive doubling step
_CAP_EXP = 0.6    # input-cap growth per drive doubling step


def default_library(seed: int) -> CellLibrary:
    """Seed-reproducible library satisfying all invariants.

    Seed 0 is the canonical shipped library; other seeds give alternative
    but structurally identical libraries for robustness experiments.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    cells = {}
    for fn in FUNCTIONS:
        d_lo, d_hi, r_lo, r_hi, c_lo, c_hi, a_lo, a_hi = _FAMILY[fn]
        d_intrinsic = float(rng.uniform(d_lo, d_hi))
        r1 = float(rng.uniform(r_lo, r_hi))
        cap1 = float(rng.uniform(c_lo, c_hi))
        area1 = float(rng.uniform(a_lo, a_hi))
        k_slew = float(rng.uniform(0.08, 0.20))
        s_intrinsic = float(rng.uniform(0.02, 0.05))
        rs1 = float(rng.uniform(0.35, 0.60))
        for drv in DRIVES:
            s = DRIVE_SCALE[drv]
            cells[CellKind(fn, drv)] = CellSpec(
                kind=CellKind(fn, drv),
                area=area1 * s**_AREA_EXP,
                input_cap=cap1 * s**_CAP_EXP,
                d_intrinsic=d_intrinsic,
                r_drive=r1 / s,
                k_slew=k_slew,
                s_intrinsic=s_intrinsic,
                r_slew=rs1 / s,
            )
    lib = CellLibrary(
        cells=cells,
        wire_cap_per_fanout=float(rng.uniform(0.10, 0.20)),
        default_input_slew=float(rng.uniform(0.04, 0.07)),
        default_output_load=float(rng.uniform(1.2, 1.8)),
        version=f"rand-{seed}-v1",
    )
    validate_library(lib)
    return lib


def library_to_text(lib: CellLibrary) -> str:
    lines = [f"{LIB_SCHEMA} {LIB_SCHEMA_VERSION}", f"version {lib.version}"]
    for g in ("wire_cap_per_fanout", "default_input_slew", "default_output_load"):
        lines.append(f"{g} {getattr(lib, g)!r}")
    for kind in sorted(lib.cells):
        s = lib.cells[kind]
        fields = " ".join(
            f"{name}={getattr(s, name)!r}"
            for name in ("area", "input_cap", "d_intrinsic", "r_drive", "k_slew", "s_intrinsic", "r_slew")
        )
        lines.append(f"cell {kind.function} {kind.drive} {fields}")
    return "\n".join(lines) + "\n"


def library_from_text(text: str) -> CellLibrary:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise LibraryError("empty library file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != LIB_SCHEMA or head[1] != str(LIB_SCHEMA_VERSION):
        raise LibraryError(f"unknown library schema header {lines[0]!r}")
    version = "custom"
    globals_ = {}
    cells = {}
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "version":
            version = parts[1]
        elif parts[0] in ("wire_cap_per_fanout", "default_input_slew", "default_output_load"):
            globals_[parts[0]] = float(parts[1])
        elif parts[0] == "cell":
            kind = CellKind(parts[1], parts[2])
            kv = dict(p.split("=", 1) for p in parts[3:])
            cells[kind] = CellSpec(kind=kind, **{k: float(v) for k, v in kv.items()})
        else:
            raise LibraryError(f"unrecognized library line {ln!r}")
    missing = {"wire_cap_per_fanout", "default_input_slew", "default_output_load"} - set(globals_)
    if missing:
        raise LibraryError(f"library file missing constants {sorted(missing)}")
    lib = CellLibrary(cells=cells, version=version, **globals_)
    validate_library(lib)
    return lib


def save_library(lib: CellLibrary, path) -> None:
    with open(path, "w") as f:
        f.write(library_to_text(lib))


def load_library(path) -> CellLibrary:
    with open(path) as f:
        return library_from_text(f.read())


def load_default_library() -> CellLibrary:
    """The canonical shipped library (generated from seed 0, stored as data)."""
    text = resources.files("synthcast").joinpath("data/default.lib").read_text()
    return library_from_text(text)


def library_fingerprint(lib: CellLibrary) -> str:
    return hashlib.sha256(library_to_text(lib).encode()).hexdigest()
