"""Neuron ordering for flash: greedy path search, exact oracle, evaluators.

The layout problem is a shortest Hamiltonian path on the complete graph whose
edge weights are co-activation distances (1 - pair probability): neurons that
fire together should sit next to each other so one read covers both. Finding
the exact shortest path is NP-hard, so the production path is a greedy
link-merge heuristic; an exhaustive oracle exists for tiny instances to bound
how far the heuristic lands from optimal.

Greedy outline: every neuron starts as a singleton path fragment. Candidate
pairs are visited in ascending distance (ties broken by lexicographic (i, j)),
and a pair is linked when both endpoints still have a free side and they
belong to different fragments (a disjoint-set root check rules out cycles).
After exactly N - 1 links one simple path remains; it is emitted starting
from its lowest-id endpoint.

Pairs that never co-activated all share the maximal distance 1, so instead of
materializing all O(N^2) of them the search defers them to a stitching pass
that visits (i, j) in the same lexicographic order the full queue would have
used. The result is identical to full enumeration, pair for pair.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
import json

import numpy as np

from .errors import FileFormatError, InvalidPairError, SizeLimitError
from .stats import CoActivationStats, prob_pair, single_probabilities

BRUTE_FORCE_MAX_NEURONS = 10


@dataclass(frozen=True, eq=False)
class Placement:
    """A bijection neuron id -> flash position.

    order[p] is the neuron stored at position p; inverse[i] is the position
    of neuron i.
    """

    order: np.ndarray

    def __post_init__(self):
        order = np.ascontiguousarray(self.order, dtype=np.int64)
        if order.ndim != 1:
            raise ValueError("order must be one-dimensional")
        n = order.size
        inverse = np.empty(n, dtype=np.int64)
        seen = np.zeros(n, dtype=bool)
        if n:
            if order.min() < 0 or order.max() >= n:
                raise ValueError("order must be a permutation of [0, N)")
            inverse[order] = np.arange(n)
            seen[order] = True
            if not seen.all():
                raise ValueError("order must be a permutation of [0, N)")
        order.setflags(write=False)
        inverse.setflags(write=False)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "inverse", inverse)

    @property
    def neuron_count(self) -> int:
        return self.order.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Placement):
            return NotImplemented
        return np.array_equal(self.order, other.order)

    def reversed(self) -> "Placement":
        return Placement(self.order[::-1].copy())


@dataclass(frozen=True)
class IoCostEstimate:
    """Expected reads per token for a placement, before and after adjacency.

    expected_ops_individual assumes every activated neuron costs its own
    read; adjacency_gain is the probability mass of placement-adjacent pairs
    (each unordered pair counted twice, matching the ordered-pair
    normalization); their difference is expected_ops_coactivated.
    """

    expected_ops_individual: float
    expected_ops_coactivated: float
    adjacency_gain: float


def identity_placement(neuron_count: int) -> Placement:
    return Placement(np.arange(neuron_count, dtype=np.int64))


def shuffled_placement(neuron_count: int, seed: int) -> Placement:
    """A seeded uniform-random permutation; the structure-order baseline."""
    rng = np.random.default_rng(seed)
    return Placement(rng.permutation(neuron_count).astype(np.int64))


def neuron_distance(stats: CoActivationStats, i: int, j: int) -> float:
    """Distance between two neurons: 1 - co-activation probability.

    In [0, 1]; symmetric. Pairs never observed together sit at exactly 1,
    including the degenerate case of stats with no co-activation at all.
    """
    if i == j:
        raise InvalidPairError(f"distance requires two distinct neurons, got {i} twice")
    if stats.pair_total_ordered == 0:
        if not (0 <= i < stats.neuron_count and 0 <= j < stats.neuron_count):
            raise ValueError(f"neuron id out of range [0, {stats.neuron_count})")
        return 1.0
    return 1.0 - prob_pair(stats, i, j)


def link_distance(
    a: tuple[int, int], b: tuple[int, int], stats: CoActivationStats
) -> float:
    """Distance between two path fragments given as (head, tail) endpoints.

    The minimum over the four head/tail endpoint combinations; singleton
    fragments repeat their only neuron in both slots and the four candidates
    collapse. Fragments must be disjoint.
    """
    if set(a) & set(b):
        raise InvalidPairError(f"fragments share a neuron: {a} vs {b}")
    return min(
        neuron_distance(stats, x, y)
        for x in set(a)
        for y in set(b)
    )


def _walk_path(adjacency: np.ndarray, neighbor_count: np.ndarray) -> np.ndarray:
    """Emit the finished path from its lowest-id endpoint."""
    n = neighbor_count.size
    endpoints = np.flatnonzero(neighbor_count <= 1)
    start = int(endpoints.min())
    order = np.empty(n, dtype=np.int64)
    prev, cur = -1, start
    for pos in range(n):
        order[pos] = cur
        nxt = adjacency[cur, 0] if adjacency[cur, 0] != prev else adjacency[cur, 1]
        prev, cur = cur, int(nxt)
    return order


def greedy_search(stats: CoActivationStats) -> Placement:
    """Greedy link-merge search for a short Hamiltonian path over all neurons.

    Deterministic: distance ties break by lexicographic (i, j), and the
    zero-co-activation tier (distance exactly 1) is stitched in the same
    order full enumeration would visit it.
    """
    n = stats.neuron_count
    if n == 0:
        return Placement(np.empty(0, dtype=np.int64))
    if n == 1:
        return Placement(np.zeros(1, dtype=np.int64))

    neighbor_count = [0] * n
    adjacency = np.full((n, 2), -1, dtype=np.int64)
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    links = 0
    target = n - 1

    if stats.pair_count.size:
        # Ascending distance = descending count; ties by (i, j).
        visit = np.lexsort((stats.pair_j, stats.pair_i, -stats.pair_count))
        pis = stats.pair_i[visit].tolist()
        pjs = stats.pair_j[visit].tolist()
        pcs = stats.pair_count[visit].tolist()
        for i, j, c in zip(pis, pjs, pcs):
            if c == 0:
                break  # zero-count tier is handled by the stitching pass
            if neighbor_count[i] == 2 or neighbor_count[j] == 2:
                continue
            ri, rj = find(i), find(j)
            if ri == rj:
                continue
            adjacency[i, neighbor_count[i]] = j
            adjacency[j, neighbor_count[j]] = i
            neighbor_count[i] += 1
            neighbor_count[j] += 1
            parent[ri] = rj
            links += 1
            if links == target:
                break

    if links < target:
        # Stitch remaining fragments along the distance-1 tier. next_open
        # skips permanently saturated neurons so each row is a forward scan.
        next_open = list(range(1, n + 1))

        def open_from(x: int) -> int:
            path = []
            while x < n and neighbor_count[x] == 2:
                path.append(x)
                x = next_open[x]
            for y in path:
                next_open[y] = x
            return x

        i = 0
        while links < target and i < n:
            if neighbor_count[i] == 2:
                i = open_from(i + 1) if i + 1 < n else n
                continue
            j = open_from(i + 1)
            while neighbor_count[i] < 2 and j < n:
                if find(j) != find(i):
                    adjacency[i, neighbor_count[i]] = j
                    adjacency[j, neighbor_count[j]] = i
                    neighbor_count[i] += 1
                    neighbor_count[j] += 1
                    parent[find(i)] = find(j)
                    links += 1
                    if links == target:
                        break
                j = open_from(j + 1)
            i += 1

    return Placement(_walk_path(adjacency, np.asarray(neighbor_count)))


def brute_force_optimal(stats: CoActivationStats) -> Placement:
    """Exact shortest-path placement by exhaustive permutation search.

    Enforced to tiny instances (N <= 10): the search is factorial. Among
    equal-cost optima the lexicographically smallest order wins, which also
    fixes the direction of the path.
    """
    n = stats.neuron_count
    if n > BRUTE_FORCE_MAX_NEURONS:
        raise SizeLimitError(
            f"exhaustive search limited to N <= {BRUTE_FORCE_MAX_NEURONS}, got {n}"
        )
    if n <= 1:
        return identity_placement(n)

    counts = np.zeros((n, n), dtype=np.int64)
    counts[stats.pair_i, stats.pair_j] = stats.pair_count
    counts[stats.pair_j, stats.pair_i] = stats.pair_count

    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int8)
    # Minimizing summed distance is maximizing summed adjacent pair counts;
    # integer gains make the tie comparison exact.
    gains = counts[perms[:, :-1], perms[:, 1:]].sum(axis=1)
    best = int(np.argmax(gains))  # first maximum = lexicographically smallest
    return Placement(perms[best].astype(np.int64))


def adjacency_count_sum(stats: CoActivationStats, placement: Placement) -> int:
    """Integer sum of pair counts over placement-adjacent pairs.

    The exact-arithmetic core of both the cost and the adjacency gain:
    comparing two placements on this integer is equivalent to comparing
    their path costs, with no floating-point ties.
    """
    if placement.neuron_count != stats.neuron_count:
        raise ValueError(
            f"placement covers {placement.neuron_count} neurons, "
            f"stats cover {stats.neuron_count}"
        )
    order = placement.order
    if order.size < 2 or stats.pair_count.size == 0:
        return 0
    a = np.minimum(order[:-1], order[1:])
    b = np.maximum(order[:-1], order[1:])
    keys = stats.pair_i * stats.neuron_count + stats.pair_j
    want = a * stats.neuron_count + b
    pos = np.searchsorted(keys, want)
    pos = np.clip(pos, 0, keys.size - 1)
    hit = keys[pos] == want
    return int(stats.pair_count[pos[hit]].sum())


def placement_cost(stats: CoActivationStats, placement: Placement) -> float:
    """Summed adjacent-pair distance of a placement (the path length)."""
    n = placement.neuron_count
    if n < 2:
        return 0.0
    total = stats.pair_total_ordered
    if total == 0:
        return float(n - 1)
    return (n - 1) - adjacency_count_sum(stats, placement) / total


def evaluate_expected_ops(stats: CoActivationStats, placement: Placement) -> IoCostEstimate:
    """Expected per-token read counts for a placement.

    The individual estimate sums every single-activation probability (exactly
    1 by normalization); the adjacency gain is the summed probability of
    placement-adjacent pairs under the ordered-pair convention, so each
    unordered adjacent pair contributes twice its stored probability.
    """
    if placement.neuron_count != stats.neuron_count:
        raise ValueError(
            f"placement covers {placement.neuron_count} neurons, "
            f"stats cover {stats.neuron_count}"
        )
    indiv = float(single_probabilities(stats).sum())
    total = stats.pair_total_ordered
    gain = 0.0 if total == 0 else 2.0 * adjacency_count_sum(stats, placement) / total
    return IoCostEstimate(
        expected_ops_individual=indiv,
        expected_ops_coactivated=indiv - gain,
        adjacency_gain=gain,
    )


def count_extents(placement: Placement, activated) -> int:
    """Number of maximal consecutive position runs an activation set occupies."""
    ids = np.asarray(activated, dtype=np.int64)
    if ids.size == 0:
        return 0
    if ids.min() < 0 or ids.max() >= placement.neuron_count:
        raise ValueError(f"neuron id out of range [0, {placement.neuron_count})")
    positions = np.sort(placement.inverse[ids])
    return 1 + int(np.count_nonzero(np.diff(positions) > 1))


def save_placement(placement: Placement, path: str | Path, layer_id: int = 0) -> None:
    """Write a placement as JSON with its layer id and neuron count."""
    payload = {
        "layer_id": layer_id,
        "neuron_count": placement.neuron_count,
        "order": [int(x) for x in placement.order],
    }
    Path(path).write_text(json.dumps(payload, separators=(",", ":")) + "\n", "utf-8")


def load_placement(path: str | Path) -> tuple[Placement, int]:
    """Read a placement JSON file; returns (placement, layer_id)."""
    try:
        payload = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, dict) or set(payload) != {
        "layer_id",
        "neuron_count",
        "order",
    }:
        raise FileFormatError(
            f"{path}: keys must be exactly ['layer_id', 'neuron_count', 'order']"
        )
    order = payload["order"]
    if not isinstance(order, list) or len(order) != payload["neuron_count"]:
        raise FileFormatError(f"{path}: order length must equal neuron_count")
    try:
        placement = Placement(np.asarray(order, dtype=np.int64))
    except (ValueError, TypeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    return placement, payload["layer_id"]
