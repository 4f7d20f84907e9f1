"""Cheap evaluation counters used to audit per-batch computational cost.

Two module-level counters are exposed:

* ``kernel_pairs`` counts distinct kernel-pair evaluations performed by the
  MMD estimators (symmetry exploited, mixture scales NOT multiplied in).
* ``center_distances`` counts Euclidean center-distance evaluations performed
  by the hetero-center triplet loss.

Counters exist for cost auditing and ablation checks only; they are plain
ints behind a tiny class and are not synchronized across threads.
"""


class Counter:
    __slots__ = ("count",)

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)

    def reset(self) -> None:
        self.count = 0


kernel_pairs = Counter()
center_distances = Counter()
