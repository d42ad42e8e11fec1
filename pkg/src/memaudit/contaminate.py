"""Controlled duplication injection with ground-truth labels.

A fraction of test positions is replaced by (optionally augmented) copies
of distinct training images. Positions and sources are prefixes of seeded
permutations, so two runs with the same seed at increasing levels nest:
every pair injected at 15% is also injected at 30%. That keeps level
sweeps comparable and set-level trends clean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .augment import AugmentationSpec, apply_augmentation
from .errors import ValidationError
from .seeds import derive_seed
from .tensorio import ImageSlice, atomic_write_text


@dataclass
class ContaminationPlan:
    level: float
    augmentation: AugmentationSpec
    seed: int
    labels: np.ndarray  # bool per test position, True = injected duplicate
    source_map: dict[int, int] = field(default_factory=dict)  # test pos -> train source

    @property
    def n_injected(self) -> int:
        return int(np.count_nonzero(self.labels))

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "augmentation": self.augmentation.tag,
            "seed": self.seed,
            "n_test": int(self.labels.size),
            "labels": [bool(v) for v in self.labels],
            "replacements": [
                {"test_index": int(t), "train_index": int(s)}
                for t, s in sorted(self.source_map.items())
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ContaminationPlan":
        labels = np.array(doc["labels"], dtype=bool)
        return cls(
            level=float(doc["level"]),
            augmentation=AugmentationSpec.from_tag(doc["augmentation"]),
            seed=int(doc["seed"]),
            labels=labels,
            source_map={
                int(r["test_index"]): int(r["train_index"]) for r in doc["replacements"]
            },
        )


def write_plan(path: str | Path, plan: ContaminationPlan) -> None:
    atomic_write_text(path, json.dumps(plan.to_json(), indent=2) + "\n")


def read_plan(path: str | Path) -> ContaminationPlan:
    return ContaminationPlan.from_json(json.loads(Path(path).read_text()))


def inject_duplicates(
    train_images: Sequence[ImageSlice],
    test_images: Sequence[ImageSlice],
    level: float,
    aug: AugmentationSpec,
    seed: int,
) -> tuple[list[ImageSlice], ContaminationPlan]:
    """Replace round(level * n_test) test images with augmented train copies.

    Replaced positions and train sources are drawn without replacement;
    untouched test images pass through unmodified. Each replacement's
    augmentation randomness is derived from (seed, test position), so it
    does not depend on the level.
    """
    n_test, n_train = len(test_images), len(train_images)
    if not 0.0 < level < 1.0:
        raise ValidationError(f"duplication level must be in (0, 1), got {level}")
    k = round(level * n_test)
    if k == 0:
        raise ValidationError(f"level {level} with {n_test} test samples injects nothing")
    if k > min(n_test, n_train):
        raise ValidationError(
            f"cannot inject {k} duplicates from {n_train} train into {n_test} test samples"
        )
    rng = np.random.default_rng(seed)
    positions = rng.permutation(n_test)[:k]
    sources = rng.permutation(n_train)[:k]
    contaminated = list(test_images)
    labels = np.zeros(n_test, dtype=bool)
    source_map: dict[int, int] = {}
    for pos, src in zip(positions, sources):
        contaminated[pos] = apply_augmentation(
            train_images[src], aug, derive_seed(seed, int(pos))
        )
        labels[pos] = True
        source_map[int(pos)] = int(src)
    return contaminated, ContaminationPlan(
        level=level, augmentation=aug, seed=seed, labels=labels, source_map=source_map
    )
