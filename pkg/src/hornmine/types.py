"""Shared identifier spaces, rules, and mining configuration."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

NodeId = int
PropertyId = int
# Interned triple: (subject node id, property id, object node id).
Triple = tuple[int, int, int]

DIGON_TYPES = (1, 2)
TRIANGLE_TYPES = (3, 4, 5, 6)
ALL_RULE_TYPES = (1, 2, 3, 4, 5, 6)

SCORING_MODES = ("standard", "pca")


def body_size(rtype: int) -> int:
    """Number of body atoms for a rule type (1 for digons, 2 for triangles)."""
    if rtype in DIGON_TYPES:
        return 1
    if rtype in TRIANGLE_TYPES:
        return 2
    raise ValueError(f"unknown rule type: {rtype!r}")


class Interner:
    """Bidirectional label <-> dense integer id mapping.

    Ids are assigned in first-seen order starting at 0 and are never
    reused or remapped.  Node and property labels live in separate
    Interner instances, so equal integer values in the two spaces are
    unrelated.
    """

    __slots__ = ("_ids", "_labels")

    def __init__(self) -> None:
        self._ids: dict[str, int] = {}
        self._labels: list[str] = []

    def intern(self, label: str) -> int:
        """Return the id for ``label``, assigning the next free id if new."""
        if not isinstance(label, str):
            raise TypeError(f"label must be str, got {type(label).__name__}")
        if not label:
            raise ValueError("empty label")
        existing = self._ids.get(label)
        if existing is not None:
            return existing
        new_id = len(self._labels)
        self._ids[label] = new_id
        self._labels.append(label)
        return new_id

    def get(self, label: str) -> int | None:
        """Id for ``label`` if already interned, else None."""
        return self._ids.get(label)

    def resolve(self, ident: int) -> str:
        """Label for an id previously returned by :meth:`intern`."""
        if not 0 <= ident < len(self._labels):
            raise KeyError(f"unknown id: {ident}")
        return self._labels[ident]

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, label: str) -> bool:
        return label in self._ids

    def __iter__(self) -> Iterator[str]:
        return iter(self._labels)

    def labels(self) -> tuple[str, ...]:
        return tuple(self._labels)


@dataclass(frozen=True)
class Vocabulary:
    """The two independent id spaces of a dataset: nodes and properties."""

    nodes: Interner
    properties: Interner

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_properties(self) -> int:
        return len(self.properties)


@dataclass(frozen=True, order=True)
class Rule:
    """A mined closed Horn rule with its exact score components.

    ``head``, ``body1``, ``body2`` are property ids.  ``body2`` is None
    exactly for digon rules (types 1 and 2).  ``confidence`` is always
    the stored integer ratio ``support / body_support``; under PCA
    scoring ``body_support`` holds the PCA denominator.
    """

    rtype: int
    head: PropertyId
    body1: PropertyId
    body2: PropertyId | None
    support: int
    body_support: int

    def __post_init__(self) -> None:
        if self.rtype not in ALL_RULE_TYPES:
            raise ValueError(f"unknown rule type: {self.rtype!r}")
        if (self.body2 is None) != (self.rtype in DIGON_TYPES):
            raise ValueError("body2 must be set for triangle rules only")
        if self.rtype in DIGON_TYPES and self.head == self.body1:
            raise ValueError("digon rule may not have head == body property")
        if self.support < 1:
            raise ValueError("rule support must be at least 1")
        if self.body_support < self.support:
            raise ValueError("body_support must be >= support")

    @property
    def confidence(self) -> float:
        return self.support / self.body_support

    def exact_confidence(self) -> Fraction:
        return Fraction(self.support, self.body_support)

    def key(self) -> tuple[int, int, int, int]:
        """Identity of the rule pattern, ignoring scores."""
        b2 = -1 if self.body2 is None else self.body2
        return (self.rtype, self.head, self.body1, b2)


def exact_threshold(theta: float | int | str | Fraction) -> Fraction:
    """Confidence threshold as an exact rational.

    Floats are read through their shortest decimal repr, so a user
    writing 0.001 gets exactly 1/1000 rather than the nearest binary
    double.  Comparisons against rule confidences are then exact.
    """
    if isinstance(theta, Fraction):
        return theta
    if isinstance(theta, str):
        return Fraction(theta)
    if isinstance(theta, int):
        return Fraction(theta)
    return Fraction(repr(float(theta)))


@dataclass(frozen=True)
class MiningConfig:
    """Knobs shared by the local and endpoint-backed miners.

    theta: minimum confidence, inclusive, in [0, 1].
    top_properties: P, how many most-frequent properties seed rule bodies.
    top_adjacencies: T, how many most-frequent properties are tried as
        the second triangle body atom.
    rule_types: subset of the six body shapes to mine.
    threads: worker threads; results are identical for any value.
    scoring: "standard" (confidence) or "pca" (partial completeness).
    """

    theta: float = 0.001
    top_properties: int = 200
    top_adjacencies: int = 10
    rule_types: tuple[int, ...] = ALL_RULE_TYPES
    threads: int = 1
    scoring: str = "standard"

    def __post_init__(self) -> None:
        if not 0.0 <= float(self.theta) <= 1.0:
            raise ValueError(f"theta must be in [0, 1], got {self.theta!r}")
        if self.top_properties < 1:
            raise ValueError("top_properties must be >= 1")
        if self.top_adjacencies < 1:
            raise ValueError("top_adjacencies must be >= 1")
        types = tuple(sorted(set(self.rule_types)))
        if not types:
            raise ValueError("rule_types must not be empty")
        for t in types:
            if t not in ALL_RULE_TYPES:
                raise ValueError(f"unknown rule type: {t!r}")
        object.__setattr__(self, "rule_types", types)
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.scoring not in SCORING_MODES:
            raise ValueError(f"scoring must be one of {SCORING_MODES}")

    def exact_theta(self) -> Fraction:
        return exact_threshold(self.theta)
