"""Rule mining: candidate generation, scoring, pruning, serialization.

Six closed rule shapes over a single head atom p(x, y):

  1: p(x,y) <= q(x,y)            2: p(x,y) <= q(y,x)
  3: p(x,y) <= q(x,z) & r(z,y)   4: p(x,y) <= q(x,z) & r(y,z)
  5: p(x,y) <= q(z,x) & r(z,y)   6: p(x,y) <= q(z,x) & r(y,z)

Support counts distinct variable bindings ((x,y) for shapes 1-2,
(x,y,z) for 3-6) where body and head all hold; body support counts
bindings where the body holds.  Confidence is their exact ratio.
All arithmetic is integer-exact, so any two code paths and any thread
count produce identical rules.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .graph import JOIN_SIDES, GraphIndex, pair_key_positions
from .types import (
    DIGON_TYPES,
    Interner,
    MiningConfig,
    Rule,
    exact_threshold,
)

# Above this many two-atom body bindings the miner switches from one
# sparse join per (q, r) to one masked join per eligible head.
FULL_JOIN_CAP = 50_000_000
# Row-chunk budget for the full join, bounds peak memory.
CHUNK_FLOPS = 4_000_000


class AdjacencyCache:
    """Memoized two-atom body-support counts.

    The count for shape s with bodies (q, r) depends only on the
    unordered pair of (property, join side) atoms, so e.g. shape 3 of
    (q, r) and shape 6 of (r, q) share one cache entry.  ``hits`` and
    ``misses`` expose cache effectiveness.
    """

    def __init__(self, counter: Callable[[int, int, int], int]):
        self._counter = counter
        self._store: dict[tuple[tuple[int, str], tuple[int, str]], int] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def canonical_key(q: int, r: int, shape: int) -> tuple[tuple[int, str], tuple[int, str]]:
        side_q, side_r = JOIN_SIDES[shape]
        a, b = (q, side_q), (r, side_r)
        return (a, b) if a <= b else (b, a)

    def get(self, q: int, r: int, shape: int) -> int:
        key = self.canonical_key(q, r, shape)
        with self._lock:
            if key in self._store:
                self.hits += 1
                return self._store[key]
        value = int(self._counter(q, r, shape))
        with self._lock:
            self._store.setdefault(key, value)
            self.misses += 1
        return value


def triangle_body_support(index: GraphIndex, q: int, r: int, shape: int, cache: AdjacencyCache | None = None) -> int:
    """Bindings (x, y, z) of the two-atom body of ``shape``."""
    if cache is not None:
        return cache.get(q, r, shape)
    return index.adjacency_count(q, r, shape)


def _expand_pair_props(index: GraphIndex, pos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate the property lists of the pair-table rows ``pos``.

    Returns (property ids, list length per row).  Rows may repeat.
    """
    starts = index.pair_ptr[pos]
    lens = (index.pair_ptr[pos + 1] - starts).astype(np.int64)
    total = int(lens.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), lens
    offsets = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(lens) - lens, lens)
    return index.pair_props[np.repeat(starts, lens) + offsets], lens


def mine_digons(index: GraphIndex, q: int, rtype: int) -> list[Rule]:
    """All single-body candidates for body property ``q`` with support >= 1.

    rtype 1 matches the head along the body edge, rtype 2 against the
    reversed edge.  The head property must differ from ``q``.
    """
    if rtype not in DIGON_TYPES:
        raise ValueError(f"not a digon rule type: {rtype}")
    subs, objs = index.prop_edges(q)
    if len(subs) == 0:
        return []
    keys = subs * index.n_nodes + objs if rtype == 1 else objs * index.n_nodes + subs
    pos, found = pair_key_positions(index, keys)
    props, _ = _expand_pair_props(index, pos[found])
    counts = np.bincount(props, minlength=index.n_props)
    body_support = int(index.prop_count[q])
    rules = []
    for p in np.flatnonzero(counts):
        if int(p) == q:
            continue
        rules.append(Rule(rtype, int(p), q, None, int(counts[p]), body_support))
    return rules


def _full_join_supports(index: GraphIndex, q: int, r: int, rtype: int, min_support: int) -> list[tuple[int, int]]:
    """Head supports via one sparse join of the whole (q, r) body.

    The join is computed in row chunks sized by multiply-add count so
    intermediate products stay small.
    """
    mq = index.matrix(q, forward=rtype in (3, 4))
    mr = index.matrix(r, forward=rtype in (3, 5))
    row_flops = np.asarray(mq.dot(np.diff(mr.indptr).astype(np.int64)))
    rows = np.flatnonzero(row_flops)
    if len(rows) == 0:
        return []
    support = np.zeros(index.n_props, dtype=np.float64)
    cuts = np.cumsum(row_flops[rows])
    grid = np.arange(CHUNK_FLOPS, int(cuts[-1]) + CHUNK_FLOPS, CHUNK_FLOPS)
    bounds = [0, *np.unique(np.searchsorted(cuts, grid, side="left") + 1)]
    for a, b in zip(bounds, bounds[1:]):
        chunk = rows[a:b]
        if len(chunk) == 0:
            continue
        block = (mq[chunk] @ mr).tocoo()
        keys = chunk[block.row] * index.n_nodes + block.col
        pos, found = pair_key_positions(index, keys)
        if not found.any():
            continue
        props, lens = _expand_pair_props(index, pos[found])
        if len(props) == 0:
            continue
        weights = np.repeat(block.data[found], lens).astype(np.float64)
        support += np.bincount(props, weights=weights, minlength=index.n_props)
    totals = support.astype(np.int64)
    return [(int(p), int(totals[p])) for p in np.flatnonzero(totals >= min_support)]


def _per_head_supports(
    index: GraphIndex,
    q: int,
    r: int,
    rtype: int,
    heads: np.ndarray,
    min_support: int,
    cpq_cache: dict[int, object],
) -> list[tuple[int, int]]:
    """Head supports via sum((A_p^T @ Mq) * Mr^T), one product per head.

    Exact alternative to the full join for huge bodies: only heads that
    could reach the confidence threshold are evaluated.  The left
    factor depends only on (head, q) and is reused across r.
    """
    mq = index.matrix(q, forward=rtype in (3, 4))
    mrt = index.matrix(r, forward=rtype in (4, 6))
    out = []
    for p in heads:
        left = cpq_cache.get(int(p))
        if left is None:
            left = (index.matrix(int(p)).T @ mq).tocsr()
            cpq_cache[int(p)] = left
        supp = int(left.multiply(mrt).sum())
        if supp >= min_support:
            out.append((int(p), supp))
    return out


def mine_triangles(
    index: GraphIndex,
    q: int,
    rtype: int,
    second_bodies: Sequence[int],
    cache: AdjacencyCache | None = None,
    theta: float | Fraction | None = None,
) -> list[Rule]:
    """Two-body candidates with first body ``q`` and support >= 1.

    ``second_bodies`` lists the properties tried as r, in rank order.
    When ``theta`` is given, heads that cannot reach it are skipped;
    the returned rules are exactly those that a full enumeration would
    keep at that threshold.
    """
    if rtype not in JOIN_SIDES:
        raise ValueError(f"not a triangle rule type: {rtype}")
    cache = cache if cache is not None else AdjacencyCache(index.adjacency_count)
    th = exact_threshold(theta) if theta is not None else None
    cpq_cache: dict[int, object] = {}
    rules = []
    for r in second_bodies:
        body_support = cache.get(q, r, rtype)
        if body_support == 0:
            continue
        min_support = 1
        if th is not None and th > 0:
            min_support = max(1, -((-th.numerator * body_support) // th.denominator))
            if min_support > body_support:
                continue
        if min_support > 1 and body_support > FULL_JOIN_CAP:
            # A head edge (x, y) closes at most min(deg_q(x), deg_r(y))
            # bindings, so heads capped below min_support cannot qualify.
            side_q, side_r = JOIN_SIDES[rtype]
            x_deg = index.side_degrees(q, "subj" if side_q == "obj" else "obj")
            y_deg = index.side_degrees(r, "subj" if side_r == "obj" else "obj")
            heads = np.flatnonzero(index.head_caps(x_deg, y_deg) >= min_support)
            if len(heads) == 0:
                continue
            found = _per_head_supports(index, q, r, rtype, heads, min_support, cpq_cache)
        else:
            found = _full_join_supports(index, q, r, rtype, min_support)
        for p, supp in found:
            rules.append(Rule(rtype, p, q, r, supp, body_support))
    return rules


def pca_body_support(index: GraphIndex, rtype: int, head: int, body1: int, body2: int | None = None) -> int:
    """Body bindings whose head-side subject x has any outgoing head edge.

    This is the denominator of the partial-completeness score: bindings
    where nothing at all is known about p at x are not counted against
    the rule.
    """
    has_head = index.side_degrees(head, "subj") > 0
    subs, objs = index.prop_edges(body1)
    if rtype == 1:
        return int(np.count_nonzero(has_head[subs]))
    if rtype == 2:
        return int(np.count_nonzero(has_head[objs]))
    side_q, side_r = JOIN_SIDES[rtype]
    join_nodes, x_nodes = (objs, subs) if side_q == "obj" else (subs, objs)
    weighted = np.bincount(join_nodes, weights=has_head[x_nodes].astype(np.float64), minlength=index.n_nodes)
    return int(np.dot(weighted.astype(np.int64), index.side_degrees(body2, side_r)))


def pca_score(index: GraphIndex, rule: Rule) -> Fraction:
    """Partial-completeness confidence of a mined rule, in [0, 1].

    Never below the standard confidence: the denominator drops body
    bindings whose x has no head edge at all, and every supporting
    binding has one.
    """
    den = pca_body_support(index, rule.rtype, rule.head, rule.body1, rule.body2)
    if den < rule.support:
        # Every support binding contributes to the denominator.
        raise AssertionError("pca denominator below support")
    return Fraction(rule.support, den)


def _pca_rescored(index: GraphIndex, rules: Iterable[Rule]) -> list[Rule]:
    """Same patterns and supports, body_support replaced by the PCA denominator."""
    out = []
    for rule in rules:
        den = pca_body_support(index, rule.rtype, rule.head, rule.body1, rule.body2)
        out.append(Rule(rule.rtype, rule.head, rule.body1, rule.body2, rule.support, den))
    return out


def rule_sort_key(rule: Rule):
    """Canonical order: confidence descending, then rule identity."""
    return (-rule.exact_confidence(), rule.rtype, rule.head, rule.body1,
            -1 if rule.body2 is None else rule.body2)


def prune_and_emit(candidates: Iterable[Rule], theta: float | Fraction) -> list[Rule]:
    """Candidates at or above ``theta``, in canonical order.

    Sorts by exact confidence and cuts at the first rule below the
    threshold; equivalent to filtering, since confidence is the
    leading sort key.
    """
    th = exact_threshold(theta)
    ranked = sorted(candidates, key=rule_sort_key)
    kept = []
    for rule in ranked:
        if rule.exact_confidence() < th:
            break
        kept.append(rule)
    return kept


@dataclass
class RuleSet:
    """Mined rules in canonical order plus the configuration that made them."""

    rules: list[Rule]
    config: MiningConfig | None = None

    def __post_init__(self) -> None:
        keys = {r.key() for r in self.rules}
        if len(keys) != len(self.rules):
            raise ValueError("duplicate rule patterns in rule set")

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def to_tsv(self, properties: Interner) -> str:
        """Serialize one rule per line, labels instead of ids.

        Columns: rtype, head, body1, body2 (``-`` for digons),
        confidence to 10 decimal places, support, body_support.  Lines
        are ordered by confidence descending, then rtype, then labels,
        so equal rule sets serialize to equal bytes regardless of how
        ids were assigned.
        """
        def key(rule: Rule):
            return (
                -rule.exact_confidence(),
                rule.rtype,
                properties.resolve(rule.head),
                properties.resolve(rule.body1),
                "" if rule.body2 is None else properties.resolve(rule.body2),
            )

        lines = []
        for rule in sorted(self.rules, key=key):
            body2 = "-" if rule.body2 is None else properties.resolve(rule.body2)
            lines.append(
                f"{rule.rtype}\t{properties.resolve(rule.head)}\t{properties.resolve(rule.body1)}\t"
                f"{body2}\t{rule.confidence:.10f}\t{rule.support}\t{rule.body_support}"
            )
        return "".join(line + "\n" for line in lines)

    @staticmethod
    def from_tsv(text: str, properties: Interner) -> "RuleSet":
        """Parse :meth:`to_tsv` output, interning labels into ``properties``."""
        rules = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 7:
                raise ValueError(f"rules line {lineno}: expected 7 fields, got {len(fields)}")
            rtype = int(fields[0])
            head = properties.intern(fields[1])
            body1 = properties.intern(fields[2])
            body2 = None if rtype in DIGON_TYPES else properties.intern(fields[3])
            if rtype in DIGON_TYPES and fields[3] != "-":
                raise ValueError(f"rules line {lineno}: digon rule must have '-' second body")
            support = int(fields[5])
            body_support = int(fields[6])
            rule = Rule(rtype, head, body1, body2, support, body_support)
            if f"{rule.confidence:.10f}" != fields[4]:
                raise ValueError(f"rules line {lineno}: confidence does not match support ratio")
            rules.append(rule)
        return RuleSet(sorted(rules, key=rule_sort_key))


def mine(index: GraphIndex, config: MiningConfig | None = None) -> RuleSet:
    """Mine all configured rule types from an indexed graph.

    Rule types are mined independently (in parallel when configured)
    and merged in a fixed order, so output never depends on thread
    count.
    """
    config = config or MiningConfig()
    top_p = index.top_properties(config.top_properties)
    top_t = index.top_properties(config.top_adjacencies)
    cache = AdjacencyCache(index.adjacency_count)
    # Threshold-based candidate skipping is only sound when the pruned
    # score is the one being thresholded.
    prune_theta = config.theta if config.scoring == "standard" else None

    def mine_type(rtype: int) -> list[Rule]:
        kept: list[Rule] = []
        for q in top_p:
            if rtype in DIGON_TYPES:
                candidates = mine_digons(index, q, rtype)
            else:
                candidates = mine_triangles(index, q, rtype, top_t, cache, theta=prune_theta)
            if config.scoring == "pca":
                candidates = _pca_rescored(index, candidates)
            kept.extend(prune_and_emit(candidates, config.theta))
        return kept

    types = list(config.rule_types)
    if config.threads > 1 and len(types) > 1:
        with ThreadPoolExecutor(max_workers=min(config.threads, len(types))) as pool:
            per_type = list(pool.map(mine_type, types))
    else:
        per_type = [mine_type(t) for t in types]
    merged = [rule for chunk in per_type for rule in chunk]
    return RuleSet(sorted(merged, key=rule_sort_key), config)
