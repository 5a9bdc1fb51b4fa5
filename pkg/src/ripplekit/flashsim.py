"""Deterministic flash read-cost model and the plan replay that uses it.

Latency charges two serial components: a per-command setup term, overlapped
across the command queue (io_ops * op_latency / queue_depth), and a transfer
term (bytes_read / max_bandwidth). Small scattered reads are dominated by the
setup term (the IOPS-bound regime); large continuous reads approach
max_bandwidth. The knee between the regimes sits near op_latency *
max_bandwidth bytes, where a single command's setup equals its transfer time
and measured bandwidth is half the maximum.

Nothing is actually read: the simulator is a pure cost function over extent
geometry, which is what makes replay deterministic and fast.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import CalibrationError, FileFormatError

KNEE_CONSISTENCY_TOLERANCE = 0.2  # informational knee may deviate 20% from t_op*B_max


@dataclass(frozen=True)
class FlashModel:
    """Hardware parameters of the simulated flash device."""

    op_latency: float                 # seconds of setup per read command
    max_bandwidth: float              # bytes/second sustained transfer ceiling
    bundle_bytes: int                 # bytes occupied by one neuron bundle
    queue_depth: int = 32             # commands the device overlaps
    iops_knee_bytes: float = 0.0      # informational; 0 derives t_op * B_max

    def __post_init__(self):
        if self.op_latency <= 0:
            raise ValueError("op_latency must be positive")
        if self.max_bandwidth <= 0:
            raise ValueError("max_bandwidth must be positive")
        if self.bundle_bytes <= 0:
            raise ValueError("bundle_bytes must be positive")
        if self.queue_depth < 1:
            raise ValueError("queue_depth must be >= 1")
        derived = self.op_latency * self.max_bandwidth
        if self.iops_knee_bytes == 0.0:
            object.__setattr__(self, "iops_knee_bytes", derived)
        elif np.isfinite(derived):
            rel = abs(self.iops_knee_bytes - derived) / derived
            if rel > KNEE_CONSISTENCY_TOLERANCE:
                raise ValueError(
                    f"iops_knee_bytes {self.iops_knee_bytes:.0f} deviates "
                    f"{rel:.0%} from op_latency*max_bandwidth {derived:.0f}"
                )


@dataclass(frozen=True, eq=False)
class ReadPlan:
    """Sorted, non-overlapping extents plus the demanded-neuron count.

    extents is an (M, 2) array of (start_position, length_neurons) rows.
    activated_neurons counts the neurons actually demanded; extents may
    cover more (speculative gap fill), never less.
    """

    extents: np.ndarray
    activated_neurons: int

    def __post_init__(self):
        ext = np.ascontiguousarray(self.extents, dtype=np.int64).reshape(-1, 2)
        if ext.size:
            if ext[:, 0].min() < 0:
                raise ValueError("extent starts must be non-negative")
            if ext[:, 1].min() < 1:
                raise ValueError("extent lengths must be >= 1")
            ends = ext[:, 0] + ext[:, 1]
            if np.any(ext[1:, 0] < ends[:-1]):
                raise ValueError("extents must be sorted and non-overlapping")
        total = int(ext[:, 1].sum()) if ext.size else 0
        if not 0 <= self.activated_neurons <= total:
            raise ValueError("activated_neurons must lie in [0, total extent length]")
        ext.setflags(write=False)
        object.__setattr__(self, "extents", ext)

    @property
    def io_ops(self) -> int:
        return self.extents.shape[0]

    @property
    def total_neurons(self) -> int:
        return int(self.extents[:, 1].sum()) if self.extents.size else 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, ReadPlan):
            return NotImplemented
        return (
            self.activated_neurons == other.activated_neurons
            and np.array_equal(self.extents, other.extents)
        )


EMPTY_PLAN = ReadPlan(extents=np.empty((0, 2), dtype=np.int64), activated_neurons=0)


@dataclass(frozen=True)
class IoReport:
    """Cost of executing one ReadPlan."""

    io_ops: int
    bytes_read: int
    latency: float
    effective_bandwidth: float   # demanded bytes / latency
    raw_bandwidth: float         # all transferred bytes / latency
    mean_extent_len: float       # neurons per command


def simulate(plan: ReadPlan, model: FlashModel) -> IoReport:
    """Cost a read plan: setup overlapped across the queue, plus transfer."""
    ops = plan.io_ops
    if ops == 0:
        return IoReport(0, 0, 0.0, 0.0, 0.0, 0.0)
    total_neurons = plan.total_neurons
    bytes_read = total_neurons * model.bundle_bytes
    latency = ops * model.op_latency / model.queue_depth + bytes_read / model.max_bandwidth
    activated_bytes = plan.activated_neurons * model.bundle_bytes
    return IoReport(
        io_ops=ops,
        bytes_read=bytes_read,
        latency=latency,
        effective_bandwidth=activated_bytes / latency,
        raw_bandwidth=bytes_read / latency,
        mean_extent_len=total_neurons / ops,
    )


def is_iops_bound(plan: ReadPlan, model: FlashModel) -> bool:
    """True when command setup outweighs transfer (strict; the knee is False)."""
    bytes_read = plan.total_neurons * model.bundle_bytes
    return plan.io_ops * model.op_latency / model.queue_depth > bytes_read / model.max_bandwidth


def single_extent_bandwidth(model: FlashModel, length_neurons: int) -> float:
    """Measured bandwidth of one continuous read of the given length."""
    plan = ReadPlan(
        extents=np.array([[0, length_neurons]], dtype=np.int64),
        activated_neurons=length_neurons,
    )
    return simulate(plan, model).raw_bandwidth


@dataclass(frozen=True)
class CalibrationResult:
    """Fit of the two cost-model parameters to a measured bandwidth curve."""

    model: FlashModel
    residual: float          # RMS relative bandwidth error over the points
    bmax_unbounded: bool     # points carried no ceiling information


def calibrate_from_curve(
    points: list[tuple[float, float]],
    queue_depth: int = 32,
    bundle_bytes: int = 4096,
) -> CalibrationResult:
    """Fit op_latency and max_bandwidth to (io_size_bytes, bandwidth) samples.

    The model bandwidth(s) = s / (t_op + s / B_max) linearizes to
    1/bw = t_op * (1/s) + 1/B_max, so an ordinary least-squares line gives
    both parameters. Points entirely inside the linear (IOPS-bound) region
    pin down t_op but carry no ceiling information; that case is reported
    with bmax_unbounded set and an infinite max_bandwidth.
    """
    if len(points) < 2:
        raise CalibrationError("need at least 2 curve points")
    sizes = np.asarray([p[0] for p in points], dtype=float)
    bws = np.asarray([p[1] for p in points], dtype=float)
    if np.any(sizes <= 0) or np.any(bws <= 0):
        raise CalibrationError("sizes and bandwidths must be positive")
    if np.unique(sizes).size != sizes.size:
        raise CalibrationError("curve sizes must be distinct")

    x = 1.0 / sizes
    y = 1.0 / bws
    slope, intercept = np.polyfit(x, y, 1)
    if slope <= 0:
        raise CalibrationError(f"fitted op_latency is non-positive ({slope:.3e})")

    unbounded = intercept <= 1e-9 * float(np.max(y))
    bmax = np.inf if unbounded else 1.0 / intercept
    model = FlashModel(
        op_latency=float(slope),
        max_bandwidth=float(bmax),
        bundle_bytes=bundle_bytes,
        queue_depth=queue_depth,
    )
    predicted = sizes / (model.op_latency + sizes / model.max_bandwidth)
    residual = float(np.sqrt(np.mean(((predicted - bws) / bws) ** 2)))
    return CalibrationResult(model=model, residual=residual, bmax_unbounded=unbounded)


# Named hardware presets. Knee bytes and the bandwidth ceiling anchor the
# model; op_latency is derived so one command's setup equals the knee-size
# transfer. The presets describe single-command benchmark curves, hence
# queue_depth 1; constructing a FlashModel directly defaults to 32.
_UFS40_BMAX = 2.9e9
_UFS40_KNEE = 24576
_UFS_T_OP = _UFS40_KNEE / _UFS40_BMAX

PROFILE_PRESETS: dict[str, FlashModel] = {
    "ufs40": FlashModel(
        op_latency=_UFS_T_OP,
        max_bandwidth=_UFS40_BMAX,
        bundle_bytes=4096,
        queue_depth=1,
    ),
    "ufs31": FlashModel(
        op_latency=_UFS_T_OP,
        max_bandwidth=_UFS40_BMAX / 2,
        bundle_bytes=4096,
        queue_depth=1,
    ),
}

_PROFILE_KEYS = {"name", "op_latency", "max_bandwidth", "queue_depth", "bundle_bytes", "iops_knee_bytes"}


def save_profile(model: FlashModel, path: str | Path, name: str = "custom") -> None:
    """Write a hardware profile as YAML."""
    payload = {
        "name": name,
        "op_latency": float(model.op_latency),
        "max_bandwidth": float(model.max_bandwidth),
        "queue_depth": int(model.queue_depth),
        "bundle_bytes": int(model.bundle_bytes),
        "iops_knee_bytes": float(model.iops_knee_bytes),
    }
    Path(path).write_text(yaml.safe_dump(payload, sort_keys=True), "utf-8")


def load_profile(source: str | Path, bundle_bytes: int | None = None) -> FlashModel:
    """Resolve a profile: a preset name first, else a YAML profile file.

    bundle_bytes overrides the stored value when given (the bundle size is a
    property of the model being served, not of the storage device).
    """
    if isinstance(source, str) and source in PROFILE_PRESETS:
        model = PROFILE_PRESETS[source]
    else:
        path = Path(source)
        if not path.exists():
            raise FileFormatError(
                f"unknown profile {source!r}: not a preset "
                f"({', '.join(sorted(PROFILE_PRESETS))}) and no such file"
            )
        payload = yaml.safe_load(path.read_text("utf-8"))
        if not isinstance(payload, dict):
            raise FileFormatError(f"{path}: profile must be a YAML mapping")
        unknown = set(payload) - _PROFILE_KEYS
        if unknown:
            raise FileFormatError(f"{path}: unknown profile keys {sorted(unknown)}")
        missing = (_PROFILE_KEYS - {"name", "iops_knee_bytes"}) - set(payload)
        if missing:
            raise FileFormatError(f"{path}: missing profile keys {sorted(missing)}")
        try:
            model = FlashModel(
                op_latency=float(payload["op_latency"]),
                max_bandwidth=float(payload["max_bandwidth"]),
                bundle_bytes=int(payload["bundle_bytes"]),
                queue_depth=int(payload["queue_depth"]),
                iops_knee_bytes=float(payload.get("iops_knee_bytes", 0.0)),
            )
        except (ValueError, TypeError) as exc:
            raise FileFormatError(f"{path}: {exc}") from exc
    if bundle_bytes is not None and bundle_bytes != model.bundle_bytes:
        model = FlashModel(
            op_latency=model.op_latency,
            max_bandwidth=model.max_bandwidth,
            bundle_bytes=bundle_bytes,
            queue_depth=model.queue_depth,
        )
    return model
