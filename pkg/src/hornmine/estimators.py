"""Estimator-style interface: learn rules with fit, score triples with predict."""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, clone

from .graph import GraphIndex
from .mining import MiningConfig, RuleSet, mine
from .prediction import AGGREGATORS, aggregate, fired_rules, head_index
from .types import ALL_RULE_TYPES, Interner, Rule, Triple, Vocabulary


class LabeledRule(NamedTuple):
    """A mined rule with its property labels resolved."""

    rtype: int
    head: str
    body1: str
    body2: str | None
    confidence: float
    support: int
    body_support: int


def resolve_rule(rule: Rule, properties: Interner) -> LabeledRule:
    return LabeledRule(
        rule.rtype,
        properties.resolve(rule.head),
        properties.resolve(rule.body1),
        None if rule.body2 is None else properties.resolve(rule.body2),
        rule.confidence,
        rule.support,
        rule.body_support,
    )


def check_triples(X) -> list[tuple[str, str, str]]:
    """Validate an array-like of (subject, property, object) label rows.

    Accepts any sequence of length-3 rows of non-empty strings,
    including object-dtype arrays and DataFrame-likes with ``.values``.
    """
    if hasattr(X, "values") and not isinstance(X, (np.ndarray, list, tuple)):
        X = X.values
    if isinstance(X, np.ndarray):
        if X.ndim != 2 or X.shape[1] != 3:
            raise ValueError(f"expected shape (n, 3), got {X.shape}")
        X = X.tolist()
    rows: list[tuple[str, str, str]] = []
    for i, row in enumerate(X):
        row = tuple(row)
        if len(row) != 3:
            raise ValueError(f"row {i}: expected 3 fields, got {len(row)}")
        for field in row:
            if not isinstance(field, str):
                raise TypeError(f"row {i}: labels must be str, got {type(field).__name__}")
            if not field:
                raise ValueError(f"row {i}: empty label")
        rows.append(row)
    if not rows:
        raise ValueError("no triples given")
    return rows


def _intern_all(rows: Sequence[tuple[str, str, str]]) -> tuple[Vocabulary, list[Triple]]:
    vocab = Vocabulary(nodes=Interner(), properties=Interner())
    seen: set[Triple] = set()
    triples: list[Triple] = []
    for s, p, o in rows:
        t = (vocab.nodes.intern(s), vocab.properties.intern(p), vocab.nodes.intern(o))
        if t not in seen:
            seen.add(t)
            triples.append(t)
    return vocab, triples


class HornRuleMiner(BaseEstimator):
    """Mines closed Horn rules from (subject, property, object) triples.

    Parameters mirror :class:`MiningConfig`.  After ``fit``,
    ``ruleset_`` holds the mined rules over ``vocabulary_`` and
    ``rules_`` the same rules with labels resolved, confidence
    descending.
    """

    def __init__(
        self,
        theta: float = 0.001,
        top_properties: int = 200,
        top_adjacencies: int = 10,
        rule_types: tuple[int, ...] = ALL_RULE_TYPES,
        threads: int = 1,
        scoring: str = "standard",
    ):
        self.theta = theta
        self.top_properties = top_properties
        self.top_adjacencies = top_adjacencies
        self.rule_types = rule_types
        self.threads = threads
        self.scoring = scoring

    def _config(self) -> MiningConfig:
        return MiningConfig(
            theta=self.theta,
            top_properties=self.top_properties,
            top_adjacencies=self.top_adjacencies,
            rule_types=tuple(self.rule_types),
            threads=self.threads,
            scoring=self.scoring,
        )

    def fit(self, X, y=None):
        """Mine rules from the triples in ``X``."""
        config = self._config()
        vocab, triples = _intern_all(check_triples(X))
        self.vocabulary_ = vocab
        self.index_ = GraphIndex(triples, vocab.n_nodes, vocab.n_properties)
        self.ruleset_: RuleSet = mine(self.index_, config)
        self.rules_ = [resolve_rule(r, vocab.properties) for r in self.ruleset_.rules]
        self.n_rules_ = len(self.rules_)
        return self

    def to_tsv(self) -> str:
        """Serialized mined rules; see :meth:`RuleSet.to_tsv`."""
        if not hasattr(self, "ruleset_"):
            raise RuntimeError("miner is not fitted")
        return self.ruleset_.to_tsv(self.vocabulary_.properties)


class RuleLinkPredictor(BaseEstimator):
    """Scores candidate triples with rules mined from the evidence.

    ``fit`` mines rules from the evidence triples with a clone of
    ``miner`` (default parameters when None) and keeps the evidence
    indexed; ``predict`` returns one aggregated score per candidate
    row, 0 where no rule fires or a label is unknown.
    """

    def __init__(self, miner: HornRuleMiner | None = None, aggregator: str = "max"):
        self.miner = miner
        self.aggregator = aggregator

    def fit(self, X, y=None):
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"aggregator must be one of {AGGREGATORS}")
        self.miner_ = clone(self.miner) if self.miner is not None else HornRuleMiner()
        self.miner_.fit(X)
        self.vocabulary_ = self.miner_.vocabulary_
        self.index_ = self.miner_.index_
        self.head_index_ = head_index(self.miner_.ruleset_.rules)
        self.n_rules_ = self.miner_.n_rules_
        return self

    def _fired(self, row: tuple[str, str, str]) -> list[Rule]:
        vocab = self.vocabulary_
        s = vocab.nodes.get(row[0])
        p = vocab.properties.get(row[1])
        o = vocab.nodes.get(row[2])
        if s is None or p is None or o is None:
            return []
        return fired_rules(self.index_, self.head_index_.get(p, ()), s, o)

    def predict(self, X) -> np.ndarray:
        """Scores in [0, 1] for each candidate (subject, property, object)."""
        if not hasattr(self, "head_index_"):
            raise RuntimeError("predictor is not fitted")
        rows = check_triples(X)
        scores = [
            aggregate([r.confidence for r in self._fired(row)], self.aggregator)
            for row in rows
        ]
        return np.asarray(scores, dtype=np.float64)

    def explain(self, triple) -> list[LabeledRule]:
        """The rules that fire for one candidate, confidence descending."""
        if not hasattr(self, "head_index_"):
            raise RuntimeError("predictor is not fitted")
        (row,) = check_triples([tuple(triple)])
        return [resolve_rule(r, self.vocabulary_.properties) for r in self._fired(row)]
