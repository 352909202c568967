"""Design-level metrics from per-node predictions, and target sweeping.

Reconstruction replays timing over the pre-synthesis graph with each
node's stage set to (pre stage + predicted delta, clamped at zero) and
sums (cell area + predicted delta) over output pins.  With ground-truth
deltas this reproduces the optimizer's post-synthesis metrics exactly.

Sweeping estimates the delay/area trade-off at targets more relaxed than
the training target: walk the pre graph's paths from most to least
critical, swapping each output node and its input nodes to their
inferred values until the running difference to the target closes.  A
node once swapped stays swapped; final metrics always come from a full
reconstruction over the merged assignment rather than the incremental
bookkeeping, which reconvergent fanout would otherwise skew.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, DomainError
from .labeling import AREA_COL, STAGE_COL
from .netgraph import CircuitGraph, topo_order
from .sta import iter_worst_paths


@dataclass(frozen=True)
class InferredGraph:
    base: CircuitGraph        # pre-synthesis graph with features
    predicted: np.ndarray     # (N, 2): delay delta, area delta (denormalized)

    @classmethod
    def from_predictions(cls, base: CircuitGraph, predicted: np.ndarray) -> "InferredGraph":
        """Wrap raw model output: area deltas off output pins are zeroed."""
        pred = np.array(predicted, dtype=float)
        _check_inputs(base, pred)
        keep = np.zeros(base.num_nodes, dtype=bool)
        for c in base.cells:
            keep[c.out_pin] = True
        pred[~keep, 1] = 0.0
        return cls(base=base, predicted=pred)


def _check_inputs(base: CircuitGraph, predicted) -> None:
    if base.features is None:
        raise ConsistencyError("inferred graph needs a feature-annotated base graph")
    if predicted.shape != (base.num_nodes, 2):
        raise ConsistencyError(
            f"predictions cover {predicted.shape}, graph needs ({base.num_nodes}, 2)"
        )
    if not np.all(np.isfinite(predicted)):
        raise ConsistencyError("predictions contain non-finite entries")


def stage_arrivals(g: CircuitGraph, stages) -> np.ndarray:
    """Max-plus arrival replay: arrival = max predecessor arrival + own stage."""
    arr = np.zeros(g.num_nodes)
    for v in topo_order(g):
        preds = g.rev[v]
        base = max((arr[u] for u in preds), default=0.0)
        arr[v] = base + stages[v]
    return arr


@dataclass(frozen=True)
class Metrics:
    delay: float
    area: float
    arrival: np.ndarray


def reconstruct_metrics(ig: InferredGraph) -> Metrics:
    """Design delay and area implied by the predicted per-node deltas."""
    g = ig.base
    _check_inputs(g, ig.predicted)
    stages = np.maximum(g.features[:, STAGE_COL] + ig.predicted[:, 0], 0.0)
    arr = stage_arrivals(g, stages)
    delay = max(arr[p] for p in g.output_ports())
    area = float(
        sum(g.features[c.out_pin, AREA_COL] + ig.predicted[c.out_pin, 1] for c in g.cells)
    )
    return Metrics(delay=float(delay), area=area, arrival=arr)


@dataclass(frozen=True)
class SweepResult:
    target: float
    delay: float
    area: float
    swapped: frozenset


def sweep(pre: CircuitGraph, ig: InferredGraph, target: float, k_paths: int = 256) -> SweepResult:
    """One pass of the compositional sweep at a single delay target."""
    if target <= 0:
        raise DomainError(f"delay target must be > 0, got {target}")
    if k_paths < 1:
        raise DomainError(f"k_paths must be >= 1, got {k_paths}")
    if pre is not ig.base and pre.num_nodes != ig.base.num_nodes:
        raise ConsistencyError("sweep needs the same graph the predictions were made for")
    g = ig.base
    stages_pre = np.asarray(g.features[:, STAGE_COL], dtype=float)
    arr_pre = stage_arrivals(g, stages_pre)
    stages_inf = np.maximum(stages_pre + ig.predicted[:, 0], 0.0)

    is_output_node = np.zeros(g.num_nodes, dtype=bool)
    for c in g.cells:
        is_output_node[c.out_pin] = True
    for p in g.output_ports():
        is_output_node[p] = True

    # a path's stage sum can differ from the STA worst delay by rounding
    # ulps; the met-target comparison tolerates that, never real slack
    met_tol = 1e-9 * (1.0 + abs(target))

    stages_cur = stages_pre.copy()
    swapped = set()
    taken = 0
    for path, pre_delay in iter_worst_paths(g, stages_pre, arr_pre):
        if taken >= k_paths:
            break
        taken += 1
        if pre_delay - target <= met_tol:
            break  # pre-sorted: every later path already met the target
        # the running difference starts from the path's delay in its
        # *current* partially swapped state, so shared nodes swapped by
        # more critical paths are not double-counted
        diff = float(sum(stages_cur[v] for v in path)) - target
        if diff <= met_tol:
            continue
        for v in path:
            if not is_output_node[v]:
                continue
            for w in (v, *g.rev[v]):
                if w not in swapped:
                    swapped.add(w)
                    diff -= stages_pre[w] - stages_inf[w]
                    stages_cur[w] = stages_inf[w]
            if diff <= 0:
                break

    merged = _merged_metrics(ig, stages_pre, stages_inf, swapped)
    return SweepResult(target=target, delay=merged[0], area=merged[1], swapped=frozenset(swapped))


def _merged_metrics(ig: InferredGraph, stages_pre, stages_inf, swapped):
    g = ig.base
    stages = stages_pre.copy()
    if swapped:
        idx = np.fromiter(swapped, dtype=np.int64)
        stages[idx] = stages_inf[idx]
    arr = stage_arrivals(g, stages)
    delay = float(max(arr[p] for p in g.output_ports()))
    area = 0.0
    for c in g.cells:
        v = c.out_pin
        area += g.features[v, AREA_COL]
        if v in swapped:
            area += ig.predicted[v, 1]
    return delay, float(area)


@dataclass(frozen=True)
class SweepPoint:
    target: float
    delay: float
    area: float
    swapped_node_count: int


@dataclass(frozen=True)
class SweepCurve:
    points: tuple


def sweep_curve(pre: CircuitGraph, ig: InferredGraph, targets, k_paths: int = 256) -> SweepCurve:
    """Independent sweeps at each target (ascending), one curve point each."""
    targets = list(targets)
    if targets != sorted(targets):
        raise DomainError("sweep targets must be sorted ascending")
    points = []
    for t in targets:
        r = sweep(pre, ig, t, k_paths=k_paths)
        points.append(SweepPoint(target=float(t), delay=r.delay, area=r.area,
                                 swapped_node_count=len(r.swapped)))
    return SweepCurve(points=tuple(points))
