"""Node feature annotation, delta labeling, and z-score normalization.

Features come from the pre-synthesis timing report plus the cell library.
Labels are per-node deltas between the optimized and the original design:

* delay label of node v = (post arrival at v minus the max post arrival
  over v's predecessors *in the pre graph*) minus v's pre stage delay.
  Measuring the post stage across pre-graph predecessors folds the delay
  of any buffers inserted between v and its original drivers into v's own
  label, so predictions on the pre graph can account for nodes that do
  not exist yet.
* area label of an output pin = area change of its cell plus the area of
  every inserted buffer whose driver chain roots at that pin's net.
  Everything else gets area 0, keeping the area sum exact.

Reconstruction later *adds* labels to features, so both deltas are signed
post-minus-pre quantities.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .celllib import DRIVES, FUNCTIONS, CellLibrary
from .errors import ConsistencyError, DomainError
from .netgraph import ORIGIN_INSERTED, CircuitGraph, map_counterparts
from .sta import TimingReport, stage_delays

FEATURE_NAMES = (
    "direction",
    "stage_delay_pre",
    "slew",
    "input_cap",
    "cell_area",
    "driven_cap",
    "fanout",
) + tuple(f"is_{fn}_{drv}" for fn in FUNCTIONS for drv in DRIVES) + ("is_port",)

FEATURE_DIM = len(FEATURE_NAMES)
STAGE_COL = FEATURE_NAMES.index("stage_delay_pre")
AREA_COL = FEATURE_NAMES.index("cell_area")
_ONEHOT_BASE = 7
LABEL_DIM = 2  # columns: delay delta, area delta


def _onehot_index(node) -> int:
    if node.is_port:
        return FEATURE_DIM - 1
    return _ONEHOT_BASE + FUNCTIONS.index(node.kind.function) * len(DRIVES) + DRIVES.index(node.kind.drive)


def annotate_features(g: CircuitGraph, report: TimingReport, lib: CellLibrary) -> CircuitGraph:
    """Attach the full feature matrix to a graph analyzed by `report`."""
    if len(report.arrival) != g.num_nodes:
        raise ConsistencyError(
            f"report covers {len(report.arrival)} nodes, graph has {g.num_nodes}"
        )
    stages = stage_delays(report, g)
    fanout_of = {net.driver: len(net.sinks) for net in g.nets}
    X = np.zeros((g.num_nodes, FEATURE_DIM))
    for v, node in enumerate(g.nodes):
        X[v, 0] = 1.0 if node.direction == "out" else 0.0
        X[v, 1] = stages[v]
        X[v, 2] = report.slew[v]
        if not node.is_port:
            spec = lib.spec(node.kind)
            if node.direction == "in":
                X[v, 3] = spec.input_cap
            else:
                X[v, 4] = spec.area
                X[v, 5] = report.load[v]
                X[v, 6] = fanout_of[v]
        X[v, _onehot_index(node)] = 1.0
    return g.with_annotations(features=X)


def build_labels(
    pre: CircuitGraph,
    post: CircuitGraph,
    rpt_pre: TimingReport,
    rpt_post: TimingReport,
    lib: CellLibrary,
) -> np.ndarray:
    """Per-pre-node (delay delta, area delta) matrix."""
    map_counterparts(pre, post)  # validates id stability
    arr_pre = rpt_pre.arrival
    arr_post = rpt_post.arrival
    n = pre.num_nodes
    labels = np.zeros((n, LABEL_DIM))
    for v in range(n):
        preds = pre.rev[v]
        if not preds:
            continue
        absorbed = arr_post[v] - max(arr_post[u] for u in preds)
        stage_pre = arr_pre[v] - max(arr_pre[u] for u in preds)
        labels[v, 0] = absorbed - stage_pre

    pre_kind = {c.cell_id: c.kind for c in pre.cells}
    post_cell_by_id = {c.cell_id: c for c in post.cells}
    driver_of = {}
    for net in post.nets:
        for s in net.sinks:
            driver_of[s] = net.driver

    buffer_area_at_root = {}
    for c in post.cells:
        if post.nodes[c.out_pin].origin != ORIGIN_INSERTED:
            continue
        node = driver_of[c.in_pins[0]]
        while post.nodes[node].origin == ORIGIN_INSERTED:
            node = driver_of[post_cell_by_id[post.nodes[node].owner].in_pins[0]]
        if post.nodes[node].is_port:
            raise ConsistencyError(f"inserted cell {c.cell_id} roots at a port, not an output pin")
        buffer_area_at_root[node] = buffer_area_at_root.get(node, 0.0) + lib.spec(c.kind).area

    for c in pre.cells:
        v = c.out_pin
        own_delta = lib.spec(post_cell_by_id[c.cell_id].kind).area - lib.spec(pre_kind[c.cell_id]).area
        labels[v, 1] = own_delta + buffer_area_at_root.get(v, 0.0)
    return labels


@dataclass(frozen=True)
class NormStats:
    """Z-score statistics for features and labels, fit on the training split.

    Constant columns are flagged and kept at std 1 so they normalize to 0.
    """

    f_mean: np.ndarray
    f_std: np.ndarray
    f_const: np.ndarray
    l_mean: np.ndarray
    l_std: np.ndarray
    l_const: np.ndarray

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for a in (self.f_mean, self.f_std, self.f_const.astype(np.float64),
                  self.l_mean, self.l_std, self.l_const.astype(np.float64)):
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return h.hexdigest()


def _fit_columns(M: np.ndarray):
    mean = M.mean(axis=0)
    std = M.std(axis=0)
    const = std < 1e-12
    std = np.where(const, 1.0, std)
    return mean, std, const


def fit_normalization(graphs) -> NormStats:
    """Fit feature and label statistics over a list of labeled graphs."""
    graphs = list(graphs)
    if not graphs:
        raise DomainError("cannot fit normalization on an empty split")
    for g in graphs:
        if g.features is None or g.labels is None:
            raise DomainError("normalization requires annotated, labeled graphs")
    F = np.concatenate([g.features for g in graphs], axis=0)
    L = np.concatenate([g.labels for g in graphs], axis=0)
    f_mean, f_std, f_const = _fit_columns(F)
    l_mean, l_std, l_const = _fit_columns(L)
    return NormStats(f_mean, f_std, f_const, l_mean, l_std, l_const)


def apply_feature_norm(X: np.ndarray, stats: NormStats) -> np.ndarray:
    return (X - stats.f_mean) / stats.f_std


def invert_feature_norm(Xn: np.ndarray, stats: NormStats) -> np.ndarray:
    return Xn * stats.f_std + stats.f_mean


def apply_label_norm(Y: np.ndarray, stats: NormStats) -> np.ndarray:
    return (Y - stats.l_mean) / stats.l_std


def invert_label_norm(Yn: np.ndarray, stats: NormStats) -> np.ndarray:
    return Yn * stats.l_std + stats.l_mean
