"""Link prediction and ranking evaluation with mined rules.

A rule fires for a candidate triple when its body holds in the
evidence graph; it contributes its confidence once, however many join
bindings exist.  Candidate scores aggregate the fired confidences.
Ranking is exhaustive over the entity universe: entities no rule
reaches score 0 and are handled in closed form, so huge corruption
pools cost nothing.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graph import GraphIndex
from .ingest import DatasetSplit
from .mining import RuleSet, rule_sort_key
from .types import Rule, Triple

AGGREGATORS = ("avg", "max", "prod")

HITS_LEVELS = (1, 3, 10)


def aggregate(confidences: Sequence[float], mode: str) -> float:
    """Combine fired-rule confidences into one score; empty input is 0.

    avg: arithmetic mean.  max: largest.  prod: noisy-or,
    1 - prod(1 - c), which never ranks below max.
    """
    if mode not in AGGREGATORS:
        raise ValueError(f"aggregator must be one of {AGGREGATORS}")
    if not confidences:
        return 0.0
    top = max(confidences)
    if mode == "max":
        return top
    # Exactly, mean <= max <= noisy-or; rounding can tip either
    # comparison, so clamp to keep the dominance chain intact.
    if mode == "avg":
        return min(sum(confidences) / len(confidences), top)
    acc = 1.0
    for c in confidences:
        acc *= 1.0 - c
    return max(1.0 - acc, top)


def head_index(rules: Iterable[Rule]) -> dict[int, tuple[Rule, ...]]:
    """Rules grouped by head property, confidence descending."""
    groups: dict[int, list[Rule]] = {}
    for rule in rules:
        groups.setdefault(rule.head, []).append(rule)
    return {h: tuple(sorted(rs, key=rule_sort_key)) for h, rs in groups.items()}


def rule_fires(index: GraphIndex, rule: Rule, s: int, o: int) -> bool:
    """Whether the rule body holds for head binding (x, y) = (s, o)."""
    q, r = rule.body1, rule.body2
    t = rule.rtype
    if t == 1:
        return o in index.objects_of(s, q)
    if t == 2:
        return o in index.subjects_of(s, q)
    if t == 3:
        return not index.objects_of(s, q).isdisjoint(index.subjects_of(o, r))
    if t == 4:
        return not index.objects_of(s, q).isdisjoint(index.objects_of(o, r))
    if t == 5:
        return not index.subjects_of(s, q).isdisjoint(index.subjects_of(o, r))
    return not index.subjects_of(s, q).isdisjoint(index.objects_of(o, r))


def fired_rules(index: GraphIndex, rules: Sequence[Rule], s: int, o: int) -> list[Rule]:
    """The rules among ``rules`` whose body holds for (s, o)."""
    return [rule for rule in rules if rule_fires(index, rule, s, o)]


def fired_confidences(index: GraphIndex, rules: Sequence[Rule], s: int, o: int) -> list[float]:
    """Confidences of fired rules, descending when ``rules`` is ordered so."""
    return [rule.confidence for rule in fired_rules(index, rules, s, o)]


def score_triple(index: GraphIndex, hidx: dict[int, tuple[Rule, ...]], triple: Triple, agg: str = "max") -> float:
    s, p, o = triple
    return aggregate(fired_confidences(index, hidx.get(p, ()), s, o), agg)


def _rule_candidates(index: GraphIndex, rule: Rule, anchor: int, object_side: bool) -> set[int]:
    """Entities the rule body reaches when the other head end is ``anchor``.

    These are exactly the corruptions this rule fires for; everything
    else scores 0 under this rule.
    """
    q, r = rule.body1, rule.body2
    t = rule.rtype
    if object_side:
        if t == 1:
            return set(index.objects_of(anchor, q))
        if t == 2:
            return set(index.subjects_of(anchor, q))
        zs = index.objects_of(anchor, q) if t in (3, 4) else index.subjects_of(anchor, q)
        out: set[int] = set()
        for z in zs:
            out.update(index.objects_of(z, r) if t in (3, 5) else index.subjects_of(z, r))
        return out
    if t == 1:
        return set(index.subjects_of(anchor, q))
    if t == 2:
        return set(index.objects_of(anchor, q))
    zs = index.subjects_of(anchor, r) if t in (3, 5) else index.objects_of(anchor, r)
    out = set()
    for z in zs:
        out.update(index.subjects_of(z, q) if t in (3, 4) else index.objects_of(z, q))
    return out


def _segment_scores(confs: np.ndarray, starts: np.ndarray, mode: str) -> np.ndarray:
    # Same clamps as aggregate(): dominance must survive rounding.
    tops = np.maximum.reduceat(confs, starts)
    if mode == "max":
        return tops
    if mode == "avg":
        sums = np.add.reduceat(confs, starts)
        lens = np.diff(np.append(starts, len(confs)))
        return np.minimum(sums / lens, tops)
    return np.maximum(1.0 - np.multiply.reduceat(1.0 - confs, starts), tops)


def rank_with_ties(correct: float, others: np.ndarray, n_zero: int) -> float:
    """Fractional rank of ``correct`` among others plus ``n_zero`` zeros.

    Rank is 1 + (# strictly greater) + (# equal) / 2; ties share their
    average position rather than being broken by order.
    """
    greater = int((others > correct).sum())
    equal = int((others == correct).sum())
    if correct == 0.0:
        equal += n_zero
    elif correct < 0.0:
        raise ValueError("scores must be non-negative")
    return 1.0 + greater + equal / 2.0


def rank_against_corruptions(
    index: GraphIndex,
    hidx: dict[int, tuple[Rule, ...]],
    triple: Triple,
    n_entities: int,
    object_side: bool,
    agg: str = "max",
    known: np.ndarray | None = None,
) -> float:
    """Rank the true triple against every corruption of one head end.

    ``known`` (sorted entity array) lists replacements that form
    known-true triples; in that filtered protocol they leave the pool.
    When None the protocol is raw and the pool is all other entities.
    All candidates a rule reaches are scored through one vectorized
    path (the true entity included), so equal fired-rule sets give
    bit-identical scores and land in the same tie group.
    """
    s, p, o = triple
    anchor, true_entity = (s, o) if object_side else (o, s)
    ids_parts: list[np.ndarray] = []
    conf_parts: list[np.ndarray] = []
    for rule in hidx.get(p, ()):
        cand = _rule_candidates(index, rule, anchor, object_side)
        if cand:
            arr = np.fromiter(cand, dtype=np.int64, count=len(cand))
            ids_parts.append(arr)
            conf_parts.append(np.full(len(arr), rule.confidence))
    if ids_parts:
        ids = np.concatenate(ids_parts)
        confs = np.concatenate(conf_parts)
        order = np.argsort(ids, kind="stable")
        ids, confs = ids[order], confs[order]
        uniq, starts = np.unique(ids, return_index=True)
        scores = _segment_scores(confs, starts, agg)
    else:
        uniq = np.empty(0, dtype=np.int64)
        scores = np.empty(0, dtype=np.float64)

    at = np.searchsorted(uniq, true_entity)
    if at < len(uniq) and uniq[at] == true_entity:
        correct = float(scores[at])
        keep = np.ones(len(uniq), dtype=bool)
        keep[at] = False
        uniq, scores = uniq[keep], scores[keep]
    else:
        correct = 0.0

    if known is not None:
        n_known_others = len(known) - int(bool(np.isin(true_entity, known)))
        if len(uniq):
            mask = ~np.isin(uniq, known)
            uniq, scores = uniq[mask], scores[mask]
        pool = n_entities - 1 - n_known_others
    else:
        pool = n_entities - 1
    return rank_with_ties(correct, scores, pool - len(uniq))


@dataclass
class EvalResult:
    """Ranking metrics over a test split, both head ends corrupted."""

    mrr: float
    hits: dict[int, float]
    n_test: int
    n_rankings: int
    protocol: str
    agg: str
    ranks: list[tuple[Triple, float, float]] = field(repr=False, default_factory=list)

    def machine_lines(self) -> str:
        lines = [f"mrr={self.mrr:.6f}"]
        for k in sorted(self.hits):
            lines.append(f"hits{k}={self.hits[k]:.3f}")
        lines.append(f"mode={self.protocol}")
        lines.append(f"agg={self.agg}")
        lines.append(f"n_test={self.n_test}")
        lines.append(f"n_rankings={self.n_rankings}")
        return "".join(line + "\n" for line in lines)

    def table(self) -> str:
        head = f"{'metric':<12}{'value':>10}"
        rows = [head, "-" * len(head), f"{'MRR':<12}{self.mrr:>10.4f}"]
        for k in sorted(self.hits):
            rows.append(f"{f'Hits@{k} %':<12}{self.hits[k]:>10.2f}")
        rows.append(f"{'rankings':<12}{self.n_rankings:>10d}")
        rows.append(f"{'protocol':<12}{self.protocol:>10}")
        rows.append(f"{'aggregate':<12}{self.agg:>10}")
        return "\n".join(rows)


def summarize_ranks(ranks: Sequence[float], hits_levels: Sequence[int] = HITS_LEVELS) -> tuple[float, dict[int, float]]:
    """(MRR, Hits@k percentages) of a rank list; MRR averages 1/rank."""
    if not ranks:
        raise ValueError("no ranks to summarize")
    arr = np.asarray(ranks, dtype=np.float64)
    mrr = float(np.mean(1.0 / arr))
    hits = {k: float(np.mean(arr <= k) * 100.0) for k in hits_levels}
    return mrr, hits


def _known_maps(triples: Iterable[Triple]) -> tuple[dict[tuple[int, int], np.ndarray], dict[tuple[int, int], np.ndarray]]:
    by_sp: dict[tuple[int, int], list[int]] = {}
    by_po: dict[tuple[int, int], list[int]] = {}
    for s, p, o in triples:
        by_sp.setdefault((s, p), []).append(o)
        by_po.setdefault((p, o), []).append(s)
    pack = lambda d: {k: np.unique(np.asarray(v, dtype=np.int64)) for k, v in d.items()}
    return pack(by_sp), pack(by_po)


def evaluate(
    split: DatasetSplit,
    ruleset: RuleSet,
    agg: str = "max",
    filtered: bool = True,
    include_valid: bool = True,
    threads: int = 1,
    sample: int | None = None,
) -> EvalResult:
    """Rank every test triple against subject and object corruptions.

    The entity universe is every node of the loaded splits.  Evidence
    is train plus (by default) valid.  ``sample`` keeps every n-th
    test triple, a deterministic thinning for quick runs.  Results are
    independent of ``threads``.
    """
    if agg not in AGGREGATORS:
        raise ValueError(f"aggregator must be one of {AGGREGATORS}")
    if not split.test:
        raise ValueError("dataset has no test split")
    if sample is not None and sample < 1:
        raise ValueError("sample must be >= 1")
    test = split.test if not sample else split.test[::sample]
    index = GraphIndex(split.evidence(include_valid), split.n_nodes, split.n_properties)
    hidx = head_index(ruleset.rules)
    n_entities = split.n_nodes
    known_sp: dict[tuple[int, int], np.ndarray] | None = None
    known_po: dict[tuple[int, int], np.ndarray] | None = None
    if filtered:
        known_sp, known_po = _known_maps(split.all_triples())
    empty = np.empty(0, dtype=np.int64)

    def rank_one(triple: Triple) -> tuple[float, float]:
        s, p, o = triple
        ko = known_sp.get((s, p), empty) if known_sp is not None else None
        ks = known_po.get((p, o), empty) if known_po is not None else None
        obj_rank = rank_against_corruptions(index, hidx, triple, n_entities, True, agg, ko)
        subj_rank = rank_against_corruptions(index, hidx, triple, n_entities, False, agg, ks)
        return subj_rank, obj_rank

    if threads > 1 and len(test) > 1:
        bounds = np.linspace(0, len(test), min(threads, len(test)) + 1).astype(int)
        chunks = [test[a:b] for a, b in zip(bounds, bounds[1:]) if b > a]
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            results = list(pool.map(lambda ch: [rank_one(t) for t in ch], chunks))
        pairs = [pair for chunk in results for pair in chunk]
    else:
        pairs = [rank_one(t) for t in test]

    all_ranks = [r for pair in pairs for r in pair]
    mrr, hits = summarize_ranks(all_ranks)
    detail = [(t, sr, orank) for t, (sr, orank) in zip(test, pairs)]
    return EvalResult(
        mrr=mrr,
        hits=hits,
        n_test=len(test),
        n_rankings=len(all_ranks),
        protocol="filtered" if filtered else "raw",
        agg=agg,
        ranks=detail,
    )
