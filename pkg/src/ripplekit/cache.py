"""DRAM neuron cache: a small/main/ghost FIFO structure with run-aware admission.

Eviction is S3-FIFO shaped. New entries land in a probationary small queue;
entries touched while probationary get promoted to the main queue instead of
dying; the main queue evicts FIFO but grants one reinsertion to entries whose
access bit is set. Identities evicted from the small queue (and identities
rejected at admission) are remembered in a bounded ghost list; a ghost hit at
the next admission is strong evidence of reuse, so it bypasses the admission
coin and inserts straight into main (disable with ghost_promotes=False).

Admission is where run structure enters. Activated neurons arrive as runs of
consecutive flash positions; runs at least segment_min_len long are
"continuous segments", everything shorter is "sporadic". Segments are cheap
to re-read (one large I/O) so they are admitted with a lower probability than
sporadic neurons, whose re-reads cost a whole command each. A segment admits
all-or-none on a single coin but evicts member by member; the resulting
fragmentation is tolerable because access collapse re-merges neighbors.

Randomness discipline, relied on by the reference-model tests: every
admission unit that survives the no-op filters consumes exactly one uniform
draw, and nothing else consumes any. Ghost-bypass promotions, already-resident
filtering, empty units, and oversize skips happen before the coin and consume
zero draws.
"""

from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass

import numpy as np

from .errors import CacheCapacityError
from .placement import Placement

SPORADIC = "sporadic"
SEGMENT = "segment"
SPECULATIVE = "speculative"
_KINDS = (SPORADIC, SEGMENT, SPECULATIVE)


@dataclass(frozen=True)
class CacheConfig:
    capacity_neurons: int
    seed: int = 0
    segment_min_len: int = 4            # runs this long or longer are segments
    admit_prob_sporadic: float = 1.0
    admit_prob_segment: float = 0.25    # segments are cheap to re-read; admit fewer
    admit_prob_speculative: float = 0.0 # collapse gap fill; 0 = never offered
    small_queue_fraction: float = 0.1   # probationary share of capacity
    ghost_size: int | None = None       # identity-only memory; None = capacity
    ghost_promotes: bool = True         # ghost hit bypasses the admission coin

    def __post_init__(self):
        if self.capacity_neurons < 1:
            raise ValueError("capacity_neurons must be >= 1")
        if self.segment_min_len < 1:
            raise ValueError("segment_min_len must be >= 1")
        for name in ("admit_prob_sporadic", "admit_prob_segment", "admit_prob_speculative"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.admit_prob_segment > self.admit_prob_sporadic:
            raise ValueError("admit_prob_segment must not exceed admit_prob_sporadic")
        if not 0.0 < self.small_queue_fraction < 1.0:
            raise ValueError("small_queue_fraction must be in (0, 1)")
        if self.ghost_size is not None and self.ghost_size < 0:
            raise ValueError("ghost_size must be >= 0")

    def admit_prob(self, kind: str) -> float:
        if kind not in _KINDS:
            raise ValueError(f"unknown admission class {kind!r}")
        return getattr(self, f"admit_prob_{kind}")


def classify_runs(
    activated, placement: Placement, segment_min_len: int
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Split an activation set into sporadic neurons and continuous segments.

    Maximal runs of consecutive placement positions are found over the full
    activated set; runs of length >= segment_min_len become segments, shorter
    runs contribute their neurons as sporadic ids. Everything is returned in
    position order, and the two sides together cover every activated neuron
    exactly once.
    """
    ids = np.asarray(activated, dtype=np.int64)
    if ids.size == 0:
        return np.empty(0, dtype=np.int64), []
    if ids.min() < 0 or ids.max() >= placement.neuron_count:
        raise ValueError(f"neuron id out of range [0, {placement.neuron_count})")
    positions = np.sort(placement.inverse[ids])
    breaks = np.flatnonzero(np.diff(positions) > 1) + 1
    sporadic: list[int] = []
    segments: list[np.ndarray] = []
    for run in np.split(positions, breaks):
        run_ids = placement.order[run]
        if run.size >= segment_min_len:
            segments.append(run_ids)
        else:
            sporadic.extend(int(i) for i in run_ids)
    return np.asarray(sporadic, dtype=np.int64), segments


class NeuronCache:
    """Mutable cache state for one replay session. Not thread-safe."""

    def __init__(self, config: CacheConfig):
        self.config = config
        self._rng = np.random.default_rng(config.seed)
        self._small: deque[int] = deque()
        self._main: deque[int] = deque()
        self._where: dict[int, str] = {}     # id -> "small" | "main"
        self._bits: dict[int, bool] = {}
        self._ghost: OrderedDict[int, None] = OrderedDict()
        self._ghost_cap = config.capacity_neurons if config.ghost_size is None else config.ghost_size
        self._small_target = max(1, int(config.small_queue_fraction * config.capacity_neurons))
        self.stats = {
            "hits": 0,
            "misses": 0,
            "admitted_sporadic": 0,
            "admitted_segment": 0,
            "admitted_speculative": 0,
            "rejected_sporadic": 0,
            "rejected_segment": 0,
            "rejected_speculative": 0,
            "ghost_promotions": 0,
            "oversize_skips": 0,
            "evictions_small": 0,
            "evictions_main": 0,
            "promotions": 0,
            "reinsertions": 0,
        }

    @property
    def resident_count(self) -> int:
        return len(self._where)

    def contains(self, neuron_id: int) -> bool:
        """Membership without side effects; the planner's cache view."""
        return neuron_id in self._where

    def lookup_and_touch(self, neuron_id: int) -> bool:
        """Read-path probe: set the access bit on hit, count a miss otherwise."""
        if neuron_id in self._where:
            self._bits[neuron_id] = True
            self.stats["hits"] += 1
            return True
        self.stats["misses"] += 1
        return False

    def _ghost_remember(self, neuron_id: int) -> None:
        if self._ghost_cap == 0:
            return
        self._ghost.pop(neuron_id, None)
        self._ghost[neuron_id] = None
        while len(self._ghost) > self._ghost_cap:
            self._ghost.popitem(last=False)

    def _place(self, neuron_id: int, queue: str) -> None:
        """Insert into a queue; the caller has already made room."""
        (self._small if queue == "small" else self._main).append(neuron_id)
        self._where[neuron_id] = queue
        self._bits[neuron_id] = False
        self._ghost.pop(neuron_id, None)

    def admit(self, unit, kind: str) -> bool:
        """Offer one admission unit (a single neuron or a whole run).

        Returns True when the unit's members became resident via the coin or
        a ghost bypass. Already-resident members are filtered first; a unit
        with nothing left, or larger than total capacity, is a no-op (and
        consumes no randomness). Room is made for the whole unit before any
        member is placed, so an accepted unit is fully resident afterward.
        """
        prob = self.config.admit_prob(kind)
        pending = [int(i) for i in np.atleast_1d(np.asarray(unit, dtype=np.int64))
                   if int(i) not in self._where]
        if not pending:
            return False
        if len(pending) > self.config.capacity_neurons:
            self.stats["oversize_skips"] += 1
            return False

        if self.config.ghost_promotes:
            ghost_hits = [i for i in pending if i in self._ghost]
            if ghost_hits:
                self.evict_to_fit(len(ghost_hits))
                for i in ghost_hits:
                    self._place(i, "main")
                self.stats["ghost_promotions"] += len(ghost_hits)
                pending = [i for i in pending if i not in self._where]
                if not pending:
                    return True

        if self._rng.random() < prob:
            self.evict_to_fit(len(pending))
            for i in pending:
                self._place(i, "small")
            self.stats[f"admitted_{kind}"] += len(pending)
            return True
        for i in pending:
            self._ghost_remember(i)
        self.stats[f"rejected_{kind}"] += len(pending)
        return False

    def evict_to_fit(self, needed: int) -> None:
        """Make room for `needed` more neurons under the capacity bound.

        Small evicts first whenever it holds at least its target share (or
        main is empty); a probationary entry with its bit set is promoted to
        main instead of dying. Main evicts FIFO with one reinsertion chance
        for a set bit. Small evictees are remembered in the ghost list.
        """
        if needed > self.config.capacity_neurons:
            raise CacheCapacityError(
                f"cannot fit {needed} neurons in capacity {self.config.capacity_neurons}"
            )
        while len(self._where) + needed > self.config.capacity_neurons:
            if self._small and (len(self._small) >= self._small_target or not self._main):
                victim = self._small.popleft()
                if self._bits[victim]:
                    self._bits[victim] = False
                    self._main.append(victim)
                    self._where[victim] = "main"
                    self.stats["promotions"] += 1
                else:
                    del self._where[victim]
                    del self._bits[victim]
                    self._ghost_remember(victim)
                    self.stats["evictions_small"] += 1
            else:
                victim = self._main.popleft()
                if self._bits[victim]:
                    self._bits[victim] = False
                    self._main.append(victim)
                    self.stats["reinsertions"] += 1
                else:
                    del self._where[victim]
                    del self._bits[victim]
                    self.stats["evictions_main"] += 1
