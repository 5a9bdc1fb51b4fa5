"""Online read planning: activation sets to extents, plus access collapse.

Each token, the activated neurons that miss the cache are mapped to their
flash positions and grouped into maximal runs (extents). When the device is
IOPS-bound, nearby extents are merged by speculatively reading the gap
between them: one slightly larger command beats two small ones as long as
the gap's transfer time stays below a command's setup share. The break-even
gap falls straight out of the cost model and anchors the dynamic threshold.

A bottleneck detector re-checks the regime every detector_period tokens and
steers the threshold multiplicatively: widen while IOPS-bound, shrink once
bandwidth-bound, always inside [min_threshold, max_threshold]. When the last
check saw a bandwidth-bound device, collapse is disabled entirely and plans
pass through unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flashsim import EMPTY_PLAN, FlashModel, ReadPlan, is_iops_bound
from .placement import Placement


@dataclass(frozen=True)
class CollapseConfig:
    """Dynamic-threshold policy knobs."""

    initial_threshold: int        # starting gap tolerance, neurons
    max_threshold: int            # ceiling for the adaptive threshold
    min_threshold: int = 0        # floor for the adaptive threshold
    adjust_factor: float = 2.0    # multiplicative step per detector verdict
    detector_period: int = 16     # tokens between bottleneck checks

    def __post_init__(self):
        if not 0 <= self.min_threshold <= self.initial_threshold <= self.max_threshold:
            raise ValueError(
                "thresholds must satisfy 0 <= min <= initial <= max, got "
                f"min={self.min_threshold} initial={self.initial_threshold} "
                f"max={self.max_threshold}"
            )
        if self.adjust_factor <= 1.0:
            raise ValueError("adjust_factor must be > 1")
        if self.detector_period < 1:
            raise ValueError("detector_period must be >= 1")


@dataclass(frozen=True)
class PlannerState:
    """Carried between tokens of one replay session."""

    current_threshold: float      # float so multiplicative steps do not quantize
    tokens_since_check: int
    last_bound_state: bool        # True = the last detector verdict was IOPS-bound

    def __post_init__(self):
        if self.current_threshold < 0 or self.tokens_since_check < 0:
            raise ValueError("planner state fields must be non-negative")


def initial_planner_state(config: CollapseConfig) -> PlannerState:
    """Fresh state: collapse active at the configured initial threshold.

    Starting in the IOPS-bound assumption is safe because the default
    threshold is the analytic break-even gap, where merging never costs.
    """
    return PlannerState(
        current_threshold=float(config.initial_threshold),
        tokens_since_check=0,
        last_bound_state=True,
    )


def analytic_threshold(model: FlashModel) -> int:
    """Break-even gap in neurons: merging wins while the gap transfers faster
    than one command's setup share.

    floor((op_latency / queue_depth) * max_bandwidth / bundle_bytes); 0 when
    a single bundle already outweighs the setup share (never merge).
    """
    return int(
        math.floor(
            model.op_latency / model.queue_depth * model.max_bandwidth / model.bundle_bytes
        )
    )


def default_collapse_config(model: FlashModel, detector_period: int = 16) -> CollapseConfig:
    """Config anchored at the analytic break-even threshold."""
    anchor = analytic_threshold(model)
    return CollapseConfig(
        initial_threshold=anchor,
        max_threshold=max(4 * anchor, 1),
        min_threshold=0,
        adjust_factor=2.0,
        detector_period=detector_period,
    )


def build_extents(activated, placement: Placement, cache_view) -> ReadPlan:
    """Extents for the activated neurons not already resident in cache.

    cache_view is a membership predicate over neuron ids. Positions of the
    missing neurons are sorted and split into maximal consecutive runs.
    """
    ids = np.asarray(activated, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= placement.neuron_count):
        raise ValueError(f"neuron id out of range [0, {placement.neuron_count})")
    missing = ids[[not cache_view(int(i)) for i in ids]] if ids.size else ids
    if missing.size == 0:
        return EMPTY_PLAN
    positions = np.sort(placement.inverse[missing])
    breaks = np.flatnonzero(np.diff(positions) > 1) + 1
    starts = positions[np.concatenate(([0], breaks))]
    ends = positions[np.concatenate((breaks - 1, [positions.size - 1]))] + 1
    extents = np.stack([starts, ends - starts], axis=1)
    return ReadPlan(extents=extents, activated_neurons=int(missing.size))


def collapse(plan: ReadPlan, threshold: float) -> ReadPlan:
    """Merge consecutive extents whose gap is at most threshold neurons.

    One left-to-right pass, transitive: a merged extent's end is what the
    next gap is measured against. Demanded-neuron count is unchanged; total
    length grows by exactly the absorbed gaps.
    """
    if plan.io_ops < 2 or threshold < 0:
        return plan
    starts = plan.extents[:, 0]
    ends = starts + plan.extents[:, 1]
    gaps = starts[1:] - ends[:-1]
    keep = gaps > threshold
    if not keep.any():
        merged = np.array([[starts[0], ends[-1] - starts[0]]], dtype=np.int64)
        return ReadPlan(extents=merged, activated_neurons=plan.activated_neurons)
    if keep.all():
        return plan
    first = np.concatenate(([0], np.flatnonzero(keep) + 1))
    last = np.concatenate((np.flatnonzero(keep), [plan.io_ops - 1]))
    merged = np.stack([starts[first], ends[last] - starts[first]], axis=1)
    return ReadPlan(extents=merged, activated_neurons=plan.activated_neurons)


def speculative_ids(original: ReadPlan, collapsed: ReadPlan, placement: Placement) -> np.ndarray:
    """Neuron ids read only because collapse absorbed their positions."""
    if collapsed.total_neurons == original.total_neurons:
        return np.empty(0, dtype=np.int64)

    def covered(plan: ReadPlan) -> np.ndarray:
        return np.concatenate(
            [np.arange(s, s + l) for s, l in plan.extents]
        ) if plan.io_ops else np.empty(0, dtype=np.int64)

    extra_positions = np.setdiff1d(covered(collapsed), covered(original), assume_unique=True)
    return placement.order[extra_positions]


def plan_token(
    activated,
    placement: Placement,
    cache_view,
    state: PlannerState,
    model: FlashModel,
    config: CollapseConfig,
) -> tuple[ReadPlan, PlannerState]:
    """One token's planning step: build extents, run the detector if due,
    then collapse when the device looked IOPS-bound at the last check."""
    plan = build_extents(activated, placement, cache_view)

    threshold = state.current_threshold
    bound = state.last_bound_state
    since = state.tokens_since_check + 1
    if since >= config.detector_period:
        bound = is_iops_bound(plan, model)
        if bound:
            if threshold < config.max_threshold:
                threshold = min(threshold * config.adjust_factor, config.max_threshold)
        else:
            if threshold > config.min_threshold:
                threshold = max(threshold / config.adjust_factor, config.min_threshold)
        since = 0

    out = collapse(plan, threshold) if bound else plan
    return out, PlannerState(
        current_threshold=threshold,
        tokens_since_check=since,
        last_bound_state=bound,
    )
