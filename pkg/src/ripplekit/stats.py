"""Single and pairwise activation frequencies and their derived probabilities.

Counts are exact integers accumulated over a trace; probabilities are derived
lazily so nothing is rounded before it has to be. Pair storage is sparse:
only pairs that ever co-activate appear, since under real sparsity nearly all
of the N^2 pairs never do (their co-activation probability is implicitly 0).

Normalization convention: the pairwise probability divides by the total over
*ordered* pairs (k, l), k != l. Each unordered pair stores one count but
contributes twice to the denominator, so a pair that holds all the mass has
probability 0.5, and the probabilities of all ordered pairs sum to 1. The
constant denominator cancels in every comparison the placement search makes,
so the convention never changes a search result.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import DegenerateStatsError, FileFormatError, InvalidPairError


@dataclass(frozen=True, eq=False)
class CoActivationStats:
    """Exact activation counts for one layer.

    single_freq[i] is the number of tokens activating neuron i. The three
    pair arrays are parallel: pair_count[k] tokens activated both pair_i[k]
    and pair_j[k], with pair_i[k] < pair_j[k], sorted lexicographically, one
    entry per unordered pair.
    """

    neuron_count: int
    token_count: int
    single_freq: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_count: np.ndarray

    def __post_init__(self):
        single = np.ascontiguousarray(self.single_freq, dtype=np.int64)
        pi = np.ascontiguousarray(self.pair_i, dtype=np.int64)
        pj = np.ascontiguousarray(self.pair_j, dtype=np.int64)
        pc = np.ascontiguousarray(self.pair_count, dtype=np.int64)

        n = self.neuron_count
        if n < 0:
            raise ValueError("neuron_count must be non-negative")
        if self.token_count < 0:
            raise ValueError("token_count must be non-negative")
        if single.shape != (n,):
            raise ValueError(f"single_freq must have shape ({n},)")
        if not (pi.shape == pj.shape == pc.shape) or pi.ndim != 1:
            raise ValueError("pair arrays must be parallel one-dimensional arrays")
        if np.any(single < 0) or np.any(single > self.token_count):
            raise ValueError("single_freq entries must lie in [0, token_count]")
        if pi.size:
            if pi.min() < 0 or pj.max() >= n:
                raise ValueError("pair ids out of range")
            if np.any(pi >= pj):
                raise ValueError("pairs must satisfy i < j")
            key = pi * n + pj
            if np.any(np.diff(key) <= 0):
                raise ValueError("pairs must be lexicographically sorted and unique")
            if np.any(pc < 0):
                raise ValueError("pair counts must be non-negative")
            if np.any(pc > np.minimum(single[pi], single[pj])):
                raise ValueError("pair count exceeds a member's single count")

        for name, arr in (
            ("single_freq", single),
            ("pair_i", pi),
            ("pair_j", pj),
            ("pair_count", pc),
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def single_total(self) -> int:
        return int(self.single_freq.sum())

    @property
    def pair_total_ordered(self) -> int:
        """Denominator of the pair probability: counts every ordered pair twice."""
        return 2 * int(self.pair_count.sum())

    def pair_index(self, i: int, j: int) -> int:
        """Index into the pair arrays for unordered pair {i, j}, or -1 if absent."""
        if i == j:
            raise InvalidPairError(f"pair requires two distinct neurons, got {i} twice")
        if not (0 <= i < self.neuron_count and 0 <= j < self.neuron_count):
            raise ValueError(f"neuron id out of range [0, {self.neuron_count})")
        lo, hi = (i, j) if i < j else (j, i)
        key = lo * self.neuron_count + hi
        keys = self.pair_i * self.neuron_count + self.pair_j
        pos = int(np.searchsorted(keys, key))
        if pos < keys.size and keys[pos] == key:
            return pos
        return -1

    def pair_freq(self, i: int, j: int) -> int:
        """Number of tokens activating both i and j (symmetric, 0 if never)."""
        pos = self.pair_index(i, j)
        return int(self.pair_count[pos]) if pos >= 0 else 0


def extract_stats(trace) -> CoActivationStats:
    """Count single and pairwise activations over every token of a trace.

    Pair counting goes through a sparse token-by-neuron incidence product,
    so cost scales with the number of co-activated pairs actually observed.
    """
    n = trace.neuron_count
    tokens = trace.tokens
    if not tokens:
        empty = np.empty(0, dtype=np.int64)
        return CoActivationStats(n, 0, np.zeros(n, dtype=np.int64), empty, empty, empty)

    cols = np.concatenate(tokens) if any(t.size for t in tokens) else np.empty(0, np.int32)
    single = np.bincount(cols, minlength=n).astype(np.int64)

    if cols.size:
        rows = np.repeat(np.arange(len(tokens), dtype=np.int64), [t.size for t in tokens])
        incidence = sparse.csr_matrix(
            (np.ones(cols.size, dtype=np.int32), (rows, cols)),
            shape=(len(tokens), n),
        )
        co = (incidence.T @ incidence).tocoo()
        upper = co.row < co.col
        pi = co.row[upper].astype(np.int64)
        pj = co.col[upper].astype(np.int64)
        pc = co.data[upper].astype(np.int64)
        order = np.lexsort((pj, pi))
        pi, pj, pc = pi[order], pj[order], pc[order]
    else:
        pi = pj = pc = np.empty(0, dtype=np.int64)

    return CoActivationStats(n, len(tokens), single, pi, pj, pc)


def merge_stats(parts: list[CoActivationStats]) -> CoActivationStats:
    """Add partial counts from sharded extraction; exact, order-independent."""
    if not parts:
        raise ValueError("merge_stats requires at least one part")
    n = parts[0].neuron_count
    if any(p.neuron_count != n for p in parts):
        raise ValueError("all parts must cover the same neuron range")

    single = np.sum([p.single_freq for p in parts], axis=0, dtype=np.int64)
    token_count = sum(p.token_count for p in parts)

    keys = np.concatenate([p.pair_i * n + p.pair_j for p in parts])
    counts = np.concatenate([p.pair_count for p in parts])
    if keys.size:
        uniq, inverse = np.unique(keys, return_inverse=True)
        summed = np.bincount(inverse, weights=counts).astype(np.int64)
        pi, pj = uniq // n, uniq % n
    else:
        pi = pj = summed = np.empty(0, dtype=np.int64)
    return CoActivationStats(n, token_count, single, pi, pj, summed)


def prob_single(stats: CoActivationStats, i: int) -> float:
    """Activation probability of neuron i: its count over the total count."""
    if not 0 <= i < stats.neuron_count:
        raise ValueError(f"neuron id out of range [0, {stats.neuron_count})")
    total = stats.single_total
    if total == 0:
        raise DegenerateStatsError("all single frequencies are zero")
    return float(stats.single_freq[i]) / total


def prob_pair(stats: CoActivationStats, i: int, j: int) -> float:
    """Co-activation probability of {i, j} under the ordered-pair normalization.

    Symmetric in i and j. A pair holding all observed co-activation mass
    returns 0.5 because its two ordered forms split the total.
    """
    pos = stats.pair_index(i, j)
    total = stats.pair_total_ordered
    if total == 0:
        raise DegenerateStatsError("no pair has ever co-activated")
    if pos < 0:
        return 0.0
    return float(stats.pair_count[pos]) / total


def single_probabilities(stats: CoActivationStats) -> np.ndarray:
    """Vector of prob_single over all neurons."""
    total = stats.single_total
    if total == 0:
        raise DegenerateStatsError("all single frequencies are zero")
    return stats.single_freq / total


def pair_probabilities(stats: CoActivationStats) -> np.ndarray:
    """Probabilities aligned with the stored pair arrays (ordered-pair normalization).

    Entry k is prob_pair(pair_i[k], pair_j[k]). Each stored entry covers one
    unordered pair, so the entries sum to 0.5 and doubling them recovers the
    ordered-pair total of 1. An all-zero pair table yields zeros rather than
    an error, since there is nothing to normalize.
    """
    total = stats.pair_total_ordered
    if total == 0:
        return np.zeros(stats.pair_count.shape)
    return stats.pair_count / total


def save_stats(stats: CoActivationStats, path: str | Path) -> None:
    """Write stats as JSON: counts plus a lexicographic [i, j, count] pair list."""
    payload = {
        "neuron_count": stats.neuron_count,
        "token_count": stats.token_count,
        "single_freq": [int(c) for c in stats.single_freq],
        "pairs": [
            [int(i), int(j), int(c)]
            for i, j, c in zip(stats.pair_i, stats.pair_j, stats.pair_count)
        ],
    }
    Path(path).write_text(json.dumps(payload, separators=(",", ":")) + "\n", "utf-8")


def load_stats(path: str | Path) -> CoActivationStats:
    """Read a stats JSON file, validating schema and count invariants."""
    try:
        payload = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise FileFormatError(f"{path}: top level must be a JSON object")
    expected = {"neuron_count", "token_count", "single_freq", "pairs"}
    if set(payload) != expected:
        raise FileFormatError(
            f"{path}: keys must be exactly {sorted(expected)}, got {sorted(payload)}"
        )
    pairs = payload["pairs"]
    if not isinstance(pairs, list) or any(
        not (isinstance(t, list) and len(t) == 3) for t in pairs
    ):
        raise FileFormatError(f"{path}: 'pairs' must be a list of [i, j, count] triples")
    arr = np.asarray(pairs, dtype=np.int64).reshape(len(pairs), 3)
    try:
        return CoActivationStats(
            neuron_count=payload["neuron_count"],
            token_count=payload["token_count"],
            single_freq=np.asarray(payload["single_freq"], dtype=np.int64),
            pair_i=arr[:, 0],
            pair_j=arr[:, 1],
            pair_count=arr[:, 2],
        )
    except (ValueError, TypeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
