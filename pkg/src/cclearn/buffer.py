"""Fixed-capacity, class-balanced replay store.

The buffer keeps an (as close as possible to) equal number of randomly chosen
samples per class under a constant total budget.  When new classes arrive the
per-class quota shrinks: capacity // K per class, with the capacity % K
remainder slots going to the lowest class ids.  Existing slots are
down-sampled uniformly at random; re-selection only ever draws from what is
currently stored (streaming constraint), never from full past data.

A class whose source holds fewer samples than its quota simply stores all of
them, so per-class counts are exactly min(quota, available); they differ by
at most one across classes whenever the sources cover the quotas.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Sample


@dataclass
class MemoryBuffer:
    capacity: int
    rng_seed: int
    slots: dict[int, list[Sample]] = field(default_factory=dict)
    _rng: np.random.Generator = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.capacity < 0:
            raise ValueError("capacity must be >= 0")
        if self._rng is None:
            self._rng = np.random.default_rng(self.rng_seed)

    def __len__(self):
        return sum(len(v) for v in self.slots.values())

    def class_counts(self) -> dict[int, int]:
        return {k: len(v) for k, v in sorted(self.slots.items())}

    def rebalance_after_task(self, finished_task_data: list[Sample]) -> "MemoryBuffer":
        """Admit a finished task's data and re-even the per-class quotas.

        Returns a new buffer; deterministic given rng_seed and call sequence.
        Classes already stored (domain-incremental streams) merge their stored
        samples with the incoming ones before down-sampling to quota.
        """
        new = MemoryBuffer(self.capacity, self.rng_seed, _rng=copy.deepcopy(self._rng))
        incoming: dict[int, list[Sample]] = {}
        for s in finished_task_data:
            incoming.setdefault(s.class_id, []).append(s)

        classes = sorted(set(self.slots) | set(incoming))
        if not classes:
            return new
        quota, remainder = divmod(self.capacity, len(classes))
        for i, k in enumerate(classes):
            q = quota + (1 if i < remainder else 0)
            pool = list(self.slots.get(k, ())) + incoming.get(k, [])
            if q >= len(pool):
                kept = pool
            else:
                idx = new._rng.choice(len(pool), size=q, replace=False)
                kept = [pool[j] for j in sorted(idx)]
            new.slots[k] = kept
        return new

    def union_view(self, current_task_data: list[Sample]) -> list[Sample]:
        """Stored samples (classes ascending) followed by the task data as given."""
        out: list[Sample] = []
        for k in sorted(self.slots):
            out.extend(self.slots[k])
        out.extend(current_task_data)
        return out

    def to_dataset(self, num_classes: int, input_dim: int) -> Dataset:
        """Snapshot buffer contents in the dataset file schema (checkpointing)."""
        return Dataset(
            samples=self.union_view([]), num_classes=num_classes, input_dim=input_dim
        )

    @classmethod
    def from_dataset(cls, ds: Dataset, capacity: int, rng_seed: int) -> "MemoryBuffer":
        """Rebuild a buffer from a snapshot. The RNG restarts from rng_seed."""
        buf = cls(capacity, rng_seed)
        if len(ds.samples) > capacity:
            raise ValueError(
                f"snapshot holds {len(ds.samples)} samples, over capacity {capacity}"
            )
        for s in ds.samples:
            buf.slots.setdefault(s.class_id, []).append(s)
        return buf


def sample_class_batch(pool, class_id, batch_size, seed) -> list[Sample]:
    """Up to batch_size samples of one class, uniform without replacement."""
    members = [s for s in pool if s.class_id == class_id]
    if not members:
        raise ValueError(f"class {class_id} not present in pool")
    n = min(batch_size, len(members))
    idx = np.random.default_rng(seed).choice(len(members), size=n, replace=False)
    return [members[i] for i in idx]
