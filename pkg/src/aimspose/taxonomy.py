"""The AIMS pose hierarchy: 4 coarse poses, 12 fine poses.

Labels are addressed either by identifier or by their index in table order
(coarse 0-3, fine 0-11). Every confusion matrix in the package uses that
order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

COARSE_LABELS = ("Prone", "Supine", "Sitting", "Standing")

FINE_LABELS = (
    "ProneLying",
    "ForearmSupport",
    "ReciprocalCrawling",
    "FourPointKneeling",
    "SupineLying",
    "HandsToKneeFeet",
    "Rolling",
    "SittingWithSupport",
    "SittingWithArmSupport",
    "SittingWithoutSupport",
    "FourPointStanding",
    "Standing",
)

_PARENTS = (
    ("Prone",) * 4 + ("Supine",) * 3 + ("Sitting",) * 3 + ("Standing",) * 2
)

EXPECTED_CHILD_COUNTS = (4, 3, 3, 2)


class UnknownLabelError(DataError):
    def __init__(self, label, kind="fine"):
        super().__init__(f"unknown {kind} label: {label!r}")
        self.label = label


@dataclass(frozen=True)
class Taxonomy:
    coarse_labels: tuple
    fine_labels: tuple
    parent: dict = field(hash=False)

    def __post_init__(self):
        object.__setattr__(self, "coarse_labels", tuple(self.coarse_labels))
        object.__setattr__(self, "fine_labels", tuple(self.fine_labels))
        object.__setattr__(self, "parent", dict(self.parent))
        self.validate()

    def validate(self) -> None:
        """Raise DataError unless this is a well-formed 4/12 hierarchy."""
        if len(self.coarse_labels) != 4:
            raise DataError(f"expected 4 coarse labels, got {len(self.coarse_labels)}")
        if len(self.fine_labels) != 12:
            raise DataError(f"expected 12 fine labels, got {len(self.fine_labels)}")
        for name, labels in (("coarse", self.coarse_labels), ("fine", self.fine_labels)):
            if not all(isinstance(x, str) and x for x in labels):
                raise DataError(f"{name} labels must be non-empty strings")
            if len(set(labels)) != len(labels):
                raise DataError(f"duplicate {name} labels")
        extra = set(self.parent) - set(self.fine_labels)
        if extra:
            raise DataError(f"parent map has unknown fine labels: {sorted(extra)}")
        for fine in self.fine_labels:
            if fine not in self.parent:
                raise DataError(f"fine label {fine!r} has no coarse parent")
            if self.parent[fine] not in self.coarse_labels:
                raise DataError(f"fine label {fine!r} maps to unknown coarse {self.parent[fine]!r}")
        counts = tuple(
            sum(1 for f in self.fine_labels if self.parent[f] == c) for c in self.coarse_labels
        )
        if counts != EXPECTED_CHILD_COUNTS:
            raise DataError(f"child counts {counts} do not match {EXPECTED_CHILD_COUNTS}")

    # -- lookups -----------------------------------------------------------

    @property
    def n_coarse(self) -> int:
        return len(self.coarse_labels)

    @property
    def n_fine(self) -> int:
        return len(self.fine_labels)

    def fine_index(self, fine: str) -> int:
        try:
            return self.fine_labels.index(fine)
        except ValueError:
            raise UnknownLabelError(fine) from None

    def coarse_index(self, coarse: str) -> int:
        try:
            return self.coarse_labels.index(coarse)
        except ValueError:
            raise UnknownLabelError(coarse, kind="coarse") from None

    def coarse_of(self, fine: str) -> str:
        if fine not in self.parent:
            raise UnknownLabelError(fine)
        return self.parent[fine]

    def same_coarse(self, fine_a: str, fine_b: str) -> bool:
        return self.coarse_of(fine_a) == self.coarse_of(fine_b)

    def children(self, coarse: str) -> list:
        self.coarse_index(coarse)
        return [f for f in self.fine_labels if self.parent[f] == coarse]

    @property
    def fine_to_coarse(self) -> np.ndarray:
        """Index map: fine index -> coarse index."""
        return np.array(
            [self.coarse_labels.index(self.parent[f]) for f in self.fine_labels], dtype=np.int64
        )

    def same_coarse_mask(self) -> np.ndarray:
        """12x12 boolean matrix, True where two fine labels share a coarse parent."""
        f2c = self.fine_to_coarse
        return f2c[:, None] == f2c[None, :]

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "coarse": list(self.coarse_labels),
            "fine": list(self.fine_labels),
            "parent": {f: self.parent[f] for f in self.fine_labels},
        }

    @classmethod
    def from_dict(cls, doc) -> "Taxonomy":
        if not isinstance(doc, dict):
            raise DataError("taxonomy document must be a JSON object")
        missing = {"coarse", "fine", "parent"} - set(doc)
        if missing:
            raise DataError(f"taxonomy document missing keys: {sorted(missing)}")
        if not isinstance(doc["parent"], dict):
            raise DataError("taxonomy 'parent' must be an object")
        if not isinstance(doc["coarse"], list) or not isinstance(doc["fine"], list):
            raise DataError("taxonomy 'coarse' and 'fine' must be lists")
        return cls(doc["coarse"], doc["fine"], doc["parent"])

    @classmethod
    def load(cls, path) -> "Taxonomy":
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise DataError(f"taxonomy file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"taxonomy file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


AIMS = Taxonomy(COARSE_LABELS, FINE_LABELS, dict(zip(FINE_LABELS, _PARENTS)))


def default_taxonomy() -> Taxonomy:
    return AIMS
