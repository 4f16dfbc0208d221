"""Shared test utilities: graph generators and file writers."""
from __future__ import annotations

import os
import random

from hornmine.graph import GraphIndex
from hornmine.ingest import DatasetSplit
from hornmine.types import Interner, Vocabulary


def random_graph(seed, n_nodes=30, n_props=6, n_edges=150):
    """Deduplicated random triple list with a skewed property distribution."""
    rng = random.Random(seed)
    weights = [1.0 / (i + 1) for i in range(n_props)]
    seen = set()
    for _ in range(n_edges):
        t = (
            rng.randrange(n_nodes),
            rng.choices(range(n_props), weights=weights)[0],
            rng.randrange(n_nodes),
        )
        seen.add(t)
    return sorted(seen)


def index_of(triples, n_nodes=None, n_props=None):
    if not triples:
        return GraphIndex([], n_nodes or 0, n_props or 0)
    nn = n_nodes if n_nodes is not None else max(max(s, o) for s, _, o in triples) + 1
    np_ = n_props if n_props is not None else max(p for _, p, _ in triples) + 1
    return GraphIndex(triples, nn, np_)


def label_triples(labelled):
    """Intern labelled triples; returns (vocab, id triples)."""
    vocab = Vocabulary(nodes=Interner(), properties=Interner())
    out = []
    for s, p, o in labelled:
        out.append((vocab.nodes.intern(s), vocab.properties.intern(p), vocab.nodes.intern(o)))
    return vocab, out


def split_of(triples, valid=(), test=(), n_nodes=None, n_props=None):
    """DatasetSplit over id triples with a synthetic dense vocabulary."""
    every = list(triples) + list(valid) + list(test)
    nn = n_nodes if n_nodes is not None else max(max(s, o) for s, _, o in every) + 1
    np_ = n_props if n_props is not None else max(p for _, p, _ in every) + 1
    vocab = Vocabulary(nodes=Interner(), properties=Interner())
    for i in range(nn):
        vocab.nodes.intern(f"n{i}")
    for i in range(np_):
        vocab.properties.intern(f"p{i}")
    return DatasetSplit(vocab=vocab, train=list(triples), valid=list(valid), test=list(test))


def random_split(seed, n_nodes=30, n_props=6, n_edges=220):
    """Random graph partitioned 80/10/10 into train/valid/test."""
    triples = random_graph(seed, n_nodes, n_props, n_edges)
    rng = random.Random(seed + 1)
    rng.shuffle(triples)
    n = len(triples)
    a, b = int(n * 0.8), int(n * 0.9)
    return split_of(triples[:a], triples[a:b], triples[b:], n_nodes, n_props)


def as_labels(triples):
    """Readable string labels for integer id triples."""
    return [(f"n{s}", f"p{p}", f"n{o}") for s, p, o in triples]


def write_tsv(path, labelled):
    with open(path, "w", encoding="utf-8") as fh:
        for s, p, o in labelled:
            fh.write(f"{s}\t{p}\t{o}\n")
    return os.fspath(path)


def rules_as_tuples(ruleset):
    """{(rtype, head, body1, body2): (support, body_support)} view of a RuleSet."""
    return {
        (r.rtype, r.head, r.body1, r.body2): (r.support, r.body_support)
        for r in ruleset.rules
    }
