"""Activation traces: data model, JSONL file format, synthetic generators.

A trace records, per generated token, the set of neuron bundles a model layer
activated. A "neuron" here is always the bound bundle (the row/column group
that activates as one unit across a layer's projection matrices), so ids run
in [0, neuron_count) and bundle_width says how many matrices each bundle
spans (2 or 3 depending on the FFN structure).

Trace file format (UTF-8 JSONL)
===============================

Line 1 is a header object::

    {"layer_id": 0, "neuron_count": 4096, "bundle_width": 2}

Every following line is one token: a JSON array of distinct neuron ids in
strictly ascending order::

    [3, 17, 18, 19, 1044]

Readers reject out-of-range ids, duplicates, and unsorted arrays, naming the
offending line number.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import TraceFormatError

VALID_BUNDLE_WIDTHS = (2, 3)


def _as_token_array(values, neuron_count: int) -> np.ndarray:
    """Normalize one token's activation set to a read-only ascending int32 array.

    Raises ValueError on out-of-range ids, duplicates, or unsorted input.
    """
    arr = np.asarray(values, dtype=np.int32)
    if arr.ndim != 1:
        raise ValueError("token activation set must be one-dimensional")
    if arr.size:
        if arr[0] < 0 or arr[-1] >= neuron_count:
            raise ValueError(
                f"neuron id out of range [0, {neuron_count}): "
                f"min={arr.min()} max={arr.max()}"
            )
        if np.any(np.diff(arr) <= 0):
            raise ValueError("token ids must be strictly ascending (no duplicates)")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LayerTrace:
    """Per-token activation sets for one model layer.

    tokens is an ordered tuple; each entry is a read-only, strictly ascending
    int32 array of activated neuron ids.
    """

    layer_id: int
    neuron_count: int
    bundle_width: int
    tokens: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.layer_id < 0:
            raise ValueError("layer_id must be non-negative")
        if self.neuron_count < 0:
            raise ValueError("neuron_count must be non-negative")
        if self.bundle_width not in VALID_BUNDLE_WIDTHS:
            raise ValueError(f"bundle_width must be one of {VALID_BUNDLE_WIDTHS}")
        normalized = tuple(
            _as_token_array(tok, self.neuron_count) for tok in self.tokens
        )
        object.__setattr__(self, "tokens", normalized)

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LayerTrace):
            return NotImplemented
        return (
            self.layer_id == other.layer_id
            and self.neuron_count == other.neuron_count
            and self.bundle_width == other.bundle_width
            and len(self.tokens) == len(other.tokens)
            and all(np.array_equal(a, b) for a, b in zip(self.tokens, other.tokens))
        )

    def slice(self, start: int, stop: int | None = None) -> "LayerTrace":
        """A new trace holding tokens[start:stop] with identical metadata."""
        return LayerTrace(
            layer_id=self.layer_id,
            neuron_count=self.neuron_count,
            bundle_width=self.bundle_width,
            tokens=self.tokens[start:stop],
        )

    def activation_fraction(self) -> float:
        """Mean fraction of neurons activated per token (0.0 for an empty trace)."""
        if not self.tokens or self.neuron_count == 0:
            return 0.0
        return float(np.mean([t.size for t in self.tokens])) / self.neuron_count


@dataclass(frozen=True)
class SyntheticTraceSpec:
    """Parameters for the clustered synthetic generator.

    Each token activates ~ target_sparsity * neuron_count neurons. With
    probability cluster_fidelity the token draws from one hidden cluster's
    members; otherwise it draws uniformly. noise_fraction of a clustered
    token's budget is drawn uniformly regardless (default 0.0), and budget
    exceeding the cluster size spills to uniform draws as well.
    """

    neuron_count: int
    token_count: int
    target_sparsity: float
    cluster_count: int
    cluster_fidelity: float
    seed: int
    noise_fraction: float = 0.0

    def __post_init__(self):
        if self.neuron_count < 1:
            raise ValueError("neuron_count must be >= 1")
        if self.token_count < 0:
            raise ValueError("token_count must be >= 0")
        if not 0.0 < self.target_sparsity <= 1.0:
            raise ValueError("target_sparsity must be in (0, 1]")
        if self.target_sparsity * self.neuron_count < 1.0:
            raise ValueError("target_sparsity * neuron_count must be >= 1")
        if not 1 <= self.cluster_count <= self.neuron_count:
            raise ValueError("cluster_count must be in [1, neuron_count]")
        if not 0.0 <= self.cluster_fidelity <= 1.0:
            raise ValueError("cluster_fidelity must be in [0, 1]")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ValueError("noise_fraction must be in [0, 1]")


def cluster_partition(spec: SyntheticTraceSpec) -> list[np.ndarray]:
    """The hidden cluster membership the generator uses for this spec.

    Deterministic in spec.seed: a seeded permutation of all ids split into
    cluster_count near-equal groups. Exposed so experiments can measure
    cluster contiguity of a learned placement.
    """
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(spec.neuron_count)
    return [np.sort(part) for part in np.array_split(perm, spec.cluster_count)]


def generate_clustered_trace(
    spec: SyntheticTraceSpec,
    layer_id: int = 0,
    bundle_width: int = 2,
) -> LayerTrace:
    """Generate a sparse trace whose co-activation has hidden block structure.

    Deterministic for a fixed spec (including seed). Per-token activation
    counts are Binomial(neuron_count, target_sparsity), so the mean matches
    the target; empty tokens are legal.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.neuron_count
    # Same leading draw as cluster_partition so the hidden partition matches.
    perm = rng.permutation(n)
    members = [np.sort(part) for part in np.array_split(perm, spec.cluster_count)]

    counts = rng.binomial(n, spec.target_sparsity, size=spec.token_count)
    clustered = rng.random(spec.token_count) < spec.cluster_fidelity
    cluster_pick = rng.integers(0, spec.cluster_count, size=spec.token_count)

    tokens = []
    for t in range(spec.token_count):
        k = int(counts[t])
        if k == 0:
            tokens.append(np.empty(0, dtype=np.int32))
            continue
        if clustered[t]:
            group = members[cluster_pick[t]]
            uniform_budget = int(round(k * spec.noise_fraction))
            take = min(k - uniform_budget, group.size)
            base = rng.choice(group, size=take, replace=False)
            rest = k - take
            if rest:
                mask = np.ones(n, dtype=bool)
                mask[base] = False
                extra = rng.choice(np.flatnonzero(mask), size=rest, replace=False)
                ids = np.concatenate([base, extra])
            else:
                ids = base
        else:
            ids = rng.choice(n, size=k, replace=False)
        tokens.append(np.sort(ids).astype(np.int32))

    return LayerTrace(
        layer_id=layer_id,
        neuron_count=n,
        bundle_width=bundle_width,
        tokens=tuple(tokens),
    )


def trace_digest(trace: LayerTrace) -> str:
    """Stable sha256 over the trace's canonical serialized form.

    Two traces share a digest iff they are equal, letting reports carry a
    compact identity instead of the full token list.
    """
    h = hashlib.sha256()
    h.update(
        f"{trace.layer_id},{trace.neuron_count},{trace.bundle_width}\n".encode()
    )
    for tok in trace.tokens:
        h.update(tok.astype("<i4", copy=False).tobytes())
        h.update(b"\n")
    return h.hexdigest()


def write_trace(trace: LayerTrace, path: str | Path) -> None:
    """Write a trace in the JSONL format documented in the module docstring."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        header = {
            "layer_id": trace.layer_id,
            "neuron_count": trace.neuron_count,
            "bundle_width": trace.bundle_width,
        }
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for tok in trace.tokens:
            fh.write(json.dumps([int(i) for i in tok], separators=(",", ":")) + "\n")


def read_trace(path: str | Path) -> LayerTrace:
    """Read a JSONL trace file, validating format line by line.

    Raises TraceFormatError naming the 1-based line number of any malformed
    line, out-of-range id, duplicate, or unsorted token array.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise TraceFormatError("empty trace file (missing header)", line=1)

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"invalid JSON header: {exc}", line=1) from exc
    if not isinstance(header, dict):
        raise TraceFormatError("header must be a JSON object", line=1)
    expected = {"layer_id", "neuron_count", "bundle_width"}
    if set(header) != expected:
        raise TraceFormatError(
            f"header keys must be exactly {sorted(expected)}, got {sorted(header)}",
            line=1,
        )
    for key in expected:
        if not isinstance(header[key], int) or isinstance(header[key], bool):
            raise TraceFormatError(f"header field {key!r} must be an integer", line=1)

    neuron_count = header["neuron_count"]
    tokens = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if raw.strip() == "":
            raise TraceFormatError("blank line inside trace body", line=lineno)
        try:
            values = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"invalid JSON: {exc}", line=lineno) from exc
        if not isinstance(values, list) or any(
            not isinstance(v, int) or isinstance(v, bool) for v in values
        ):
            raise TraceFormatError(
                "token line must be a JSON array of integers", line=lineno
            )
        try:
            tokens.append(_as_token_array(values, neuron_count))
        except ValueError as exc:
            raise TraceFormatError(str(exc), line=lineno) from exc

    try:
        return LayerTrace(
            layer_id=header["layer_id"],
            neuron_count=neuron_count,
            bundle_width=header["bundle_width"],
            tokens=tuple(tokens),
        )
    except ValueError as exc:
        raise TraceFormatError(str(exc), line=1) from exc
