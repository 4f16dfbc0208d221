"""Scoring, ranking, and evaluation against the enumeration oracle."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bruteforce import (
    aggregate_reference,
    fires_reference,
    rank_reference,
    score_reference,
)
from helpers import index_of, label_triples, random_graph, random_split, split_of

from hornmine.graph import GraphIndex
from hornmine.mining import RuleSet, mine
from hornmine.prediction import (
    AGGREGATORS,
    aggregate,
    evaluate,
    fired_confidences,
    fired_rules,
    head_index,
    rank_against_corruptions,
    rank_with_ties,
    rule_fires,
    score_triple,
    summarize_ranks,
)
from hornmine.types import MiningConfig, Rule

confidence_lists = st.lists(
    st.floats(min_value=0.001, max_value=1.0, allow_nan=False), min_size=1, max_size=20
)


def mined_rules(triples, top=5, theta=0.0):
    index = index_of(triples)
    config = MiningConfig(theta=theta, top_properties=top, top_adjacencies=top)
    return mine(index, config).rules


def as_tuples(rules):
    return [(r.rtype, r.head, r.body1, r.body2, r.support, r.body_support) for r in rules]


class TestAggregate:
    @pytest.mark.parametrize(
        "confs,mode,expected",
        [
            ([0.5, 0.5], "prod", 0.75),
            ([0.5, 0.5], "max", 0.5),
            ([0.5, 0.5], "avg", 0.5),
            ([1.0, 0.3], "prod", 1.0),
            ([1.0, 0.3], "max", 1.0),
            ([0.4], "avg", 0.4),
            ([0.4], "max", 0.4),
            ([0.4], "prod", 0.4),
            ([0.2, 0.8, 0.5], "max", 0.8),
        ],
    )
    def test_hand_values(self, confs, mode, expected):
        assert aggregate(confs, mode) == expected

    @pytest.mark.parametrize("mode", AGGREGATORS)
    def test_empty_scores_zero(self, mode):
        assert aggregate([], mode) == 0.0

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            aggregate([0.5], "median")

    @given(confidence_lists)
    def test_dominance_chain(self, confs):
        assert aggregate(confs, "prod") >= aggregate(confs, "max") >= aggregate(confs, "avg")

    @given(confidence_lists, st.floats(min_value=0.001, max_value=1.0))
    def test_max_and_prod_never_decrease_when_extended(self, confs, extra):
        for mode in ("max", "prod"):
            assert aggregate(confs + [extra], mode) >= aggregate(confs, mode)

    @given(confidence_lists, st.sampled_from(AGGREGATORS))
    def test_matches_reference(self, confs, mode):
        assert aggregate(confs, mode) == aggregate_reference(confs, mode)

    @given(confidence_lists, st.sampled_from(AGGREGATORS))
    def test_range(self, confs, mode):
        assert 0.0 <= aggregate(confs, mode) <= 1.0


class TestRuleFiring:
    def hand_graph(self):
        return label_triples(
            [
                ("a", "q", "b"),
                ("b", "q2", "a"),
                ("a", "s", "z"),
                ("z", "t", "b"),
                ("w", "t", "z"),
                ("z", "s", "w"),
            ]
        )

    def test_each_shape_fires_where_expected(self):
        vocab, triples = self.hand_graph()
        index = index_of(triples)
        node = vocab.nodes.get
        prop = vocab.properties.get
        a, b, w = node("a"), node("b"), node("w")
        q, q2, s, t = prop("q"), prop("q2"), prop("s"), prop("t")
        head = prop("q")

        assert rule_fires(index, Rule(1, q2, q, None, 1, 1), a, b)
        assert not rule_fires(index, Rule(1, q2, q, None, 1, 1), b, a)
        assert rule_fires(index, Rule(2, q, q2, None, 1, 1), a, b)
        # x -s-> z -t-> y
        assert rule_fires(index, Rule(3, head, s, t, 1, 1), a, b)
        # x -s-> z <-t- y
        assert rule_fires(index, Rule(4, head, s, t, 1, 1), a, w)
        # x <-s- z -t-> y
        assert rule_fires(index, Rule(5, head, s, t, 1, 1), w, b)
        # x <-s- z <-t- y
        assert rule_fires(index, Rule(6, head, s, t, 1, 1), w, w)

    def test_matches_reference_on_random_graphs(self):
        for seed in range(3):
            triples = random_graph(seed + 200, n_nodes=12, n_props=4, n_edges=90)
            index = index_of(triples)
            rules = mined_rules(triples, top=4)
            probe_nodes = range(0, 12, 3)
            for rule in rules[:25]:
                pattern = (rule.rtype, rule.head, rule.body1, rule.body2)
                for s in probe_nodes:
                    for o in probe_nodes:
                        assert rule_fires(index, rule, s, o) == fires_reference(
                            triples, pattern, s, o
                        )

    def test_fired_rules_subset_and_order(self):
        triples = random_graph(7, n_nodes=10, n_props=3, n_edges=60)
        index = index_of(triples)
        hidx = head_index(mined_rules(triples, top=3))
        for head, group in hidx.items():
            fired = fired_rules(index, group, 1, 2)
            assert set(fired) <= set(group)
            confs = fired_confidences(index, group, 1, 2)
            assert confs == sorted(confs, reverse=True)


class TestScoreTriple:
    def test_matches_reference_every_aggregator(self):
        for seed in range(3):
            triples = random_graph(seed + 300, n_nodes=12, n_props=4, n_edges=100)
            index = index_of(triples)
            rules = mined_rules(triples, top=4)
            hidx = head_index(rules)
            tuples = as_tuples(rules)
            for s, p, o in triples[::7]:
                for mode in AGGREGATORS:
                    assert score_triple(index, hidx, (s, p, o), mode) == score_reference(
                        triples, tuples, s, p, o, mode
                    )

    def test_unknown_head_scores_zero(self):
        triples = random_graph(1, n_props=3)
        index = index_of(triples)
        assert score_triple(index, {}, (0, 0, 1), "max") == 0.0


class TestRankWithTies:
    def test_hand_case(self):
        others = np.array([0.7, 0.5, 0.2])
        assert rank_with_ties(0.5, others, 10) == 2.5

    def test_strict_winner(self):
        assert rank_with_ties(0.9, np.array([0.5, 0.1]), 4) == 1.0

    def test_zero_scores_join_the_zero_pool(self):
        assert rank_with_ties(0.0, np.array([0.4, 0.0]), 3) == 1.0 + 1 + (1 + 3) / 2

    def test_all_zero_pool_of_wordnet_size(self):
        assert rank_with_ties(0.0, np.empty(0), 40942) == 20472.0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            rank_with_ties(-0.1, np.empty(0), 0)

    @given(
        st.lists(
            st.one_of(st.just(0.0), st.floats(min_value=0.001, max_value=1.0)),
            min_size=1,
            max_size=12,
        ),
        st.integers(0, 11),
    )
    def test_monotone_transform_invariance(self, scores, pick):
        # Cubing is order- and tie-preserving on {0} and [0.001, 1];
        # smaller values would underflow into spurious zero ties.
        at = pick % len(scores)
        others = np.array(scores)
        cubed = others * others * others
        assert rank_with_ties(float(others[at]), others, 0) == rank_with_ties(
            float(cubed[at]), cubed, 0
        )

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), max_size=12), st.integers(0, 30))
    def test_bounds(self, scores, n_zero):
        others = np.array(scores, dtype=np.float64)
        rank = rank_with_ties(0.5, others, n_zero)
        assert 1.0 <= rank <= 1.0 + len(scores) + n_zero


class TestRankAgainstCorruptions:
    def test_no_rules_gives_midpoint_rank(self):
        triples = random_graph(3)
        index = index_of(triples)
        rank = rank_against_corruptions(index, {}, (0, 0, 1), 40943, True, "max")
        assert rank == 20472.0

    def check_seed_against_reference(self, seed, mode, known_set, trim=None):
        split = random_split(seed, n_nodes=14, n_props=4, n_edges=110)
        evidence = split.evidence(True)
        index = GraphIndex(evidence, split.n_nodes, split.n_properties)
        rules = mined_rules(evidence, top=4)
        if trim is not None:
            rules = [r for group in head_index(rules).values() for r in group[:trim]]
        hidx = head_index(rules)
        tuples = as_tuples(rules)
        entities = range(split.n_nodes)
        known = set(split.all_triples()) if known_set else None
        for triple in split.test[:8]:
            s, p, o = triple
            for object_side in (True, False):
                if known is None:
                    known_arr = None
                else:
                    if object_side:
                        hits = [e for e in entities if (s, p, e) in known]
                    else:
                        hits = [e for e in entities if (e, p, o) in known]
                    known_arr = np.array(sorted(hits), dtype=np.int64)
                got = rank_against_corruptions(
                    index, hidx, triple, split.n_nodes, object_side, mode, known_arr
                )
                want = rank_reference(
                    evidence, tuples, triple, entities, object_side, mode, known
                )
                assert got == want, (seed, triple, object_side, mode)

    @pytest.mark.parametrize("seed", range(3))
    def test_max_matches_reference_raw(self, seed):
        self.check_seed_against_reference(seed + 400, "max", known_set=False)

    @pytest.mark.parametrize("seed", range(3))
    def test_max_matches_reference_filtered(self, seed):
        self.check_seed_against_reference(seed + 420, "max", known_set=True)

    @pytest.mark.parametrize("mode", ["avg", "prod"])
    def test_other_aggregators_match_reference_with_few_rules(self, mode):
        # Sums of eight or more floats take a different association
        # order in the vector path, so cap fired rules per head.
        for seed in (440, 441):
            self.check_seed_against_reference(seed, mode, known_set=False, trim=5)

    def test_filtered_never_worse_than_raw(self):
        split = random_split(17, n_nodes=16, n_props=4, n_edges=130)
        evidence = split.evidence(True)
        index = GraphIndex(evidence, split.n_nodes, split.n_properties)
        hidx = head_index(mined_rules(evidence, top=4))
        known = set(split.all_triples())
        for triple in split.test:
            s, p, o = triple
            for object_side in (True, False):
                if object_side:
                    hits = [e for e in range(split.n_nodes) if (s, p, e) in known]
                else:
                    hits = [e for e in range(split.n_nodes) if (e, p, o) in known]
                known_arr = np.array(sorted(hits), dtype=np.int64)
                raw = rank_against_corruptions(index, hidx, triple, split.n_nodes, object_side, "max")
                filtered = rank_against_corruptions(
                    index, hidx, triple, split.n_nodes, object_side, "max", known_arr
                )
                assert filtered <= raw


class TestSummarizeRanks:
    def test_hand_example(self):
        mrr, hits = summarize_ranks([1.0, 2.0, 4.0])
        assert mrr == pytest.approx((1 + 0.5 + 0.25) / 3)
        assert hits[1] == pytest.approx(100 / 3)
        assert hits[3] == pytest.approx(200 / 3)
        assert hits[10] == pytest.approx(100.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            summarize_ranks([])

    @given(st.lists(st.floats(min_value=1.0, max_value=1e6), min_size=1, max_size=40))
    def test_hits_monotone_in_level(self, ranks):
        _, hits = summarize_ranks(ranks, hits_levels=(1, 3, 10, 100))
        assert hits[1] <= hits[3] <= hits[10] <= hits[100]

    @given(st.lists(st.floats(min_value=1.0, max_value=1e6), min_size=1, max_size=40))
    def test_mrr_in_unit_interval(self, ranks):
        mrr, _ = summarize_ranks(ranks)
        assert 0.0 < mrr <= 1.0


class TestEvaluate:
    def ruleset_for(self, split):
        index = GraphIndex(split.evidence(True), split.n_nodes, split.n_properties)
        config = MiningConfig(theta=0.001, top_properties=split.n_properties, top_adjacencies=4)
        return mine(index, config)

    def test_counts_and_labels(self):
        split = random_split(21)
        result = evaluate(split, self.ruleset_for(split), agg="max")
        assert result.n_test == len(split.test)
        assert result.n_rankings == 2 * len(split.test)
        assert result.protocol == "filtered"
        assert result.agg == "max"
        assert len(result.ranks) == result.n_test

    def test_raw_protocol_label(self):
        split = random_split(22)
        result = evaluate(split, self.ruleset_for(split), filtered=False)
        assert result.protocol == "raw"

    def test_sampling_thins_deterministically(self):
        split = random_split(23)
        full = evaluate(split, self.ruleset_for(split))
        thinned = evaluate(split, self.ruleset_for(split), sample=3)
        assert thinned.n_test == len(split.test[::3])
        kept = {t for t, _, _ in thinned.ranks}
        assert kept == set(split.test[::3])
        by_triple = {t: (a, b) for t, a, b in full.ranks}
        assert all(by_triple[t] == (a, b) for t, a, b in thinned.ranks)

    def test_thread_count_never_changes_results(self):
        split = random_split(24, n_nodes=25, n_props=5, n_edges=260)
        ruleset = self.ruleset_for(split)
        base = evaluate(split, ruleset, threads=1)
        for threads in (2, 5, 8):
            again = evaluate(split, ruleset, threads=threads)
            assert again.ranks == base.ranks
            assert again.mrr == base.mrr
            assert again.hits == base.hits

    def test_summary_consistent_with_detail(self):
        split = random_split(25)
        result = evaluate(split, self.ruleset_for(split))
        flat = [r for _, a, b in result.ranks for r in (a, b)]
        mrr, hits = summarize_ranks(flat)
        assert result.mrr == mrr
        assert result.hits == hits

    def test_validation_evidence_toggle(self):
        # The only support for the body lives in valid: with valid
        # evidence the rule fires for the test object, without it the
        # candidate scores zero and sinks into the tie pool.
        train = [(0, 0, 1), (2, 0, 3), (2, 1, 3)]
        valid = [(0, 1, 1)]
        test = [(0, 0, 1)]
        split = split_of(train, valid, test, n_nodes=5, n_props=2)
        rules = RuleSet([Rule(1, 0, 1, None, 1, 2)])
        with_valid = evaluate(split, rules, include_valid=True, filtered=False)
        without = evaluate(split, rules, include_valid=False, filtered=False)
        assert with_valid.mrr > without.mrr

    def test_machine_lines_shape(self):
        split = random_split(26)
        result = evaluate(split, self.ruleset_for(split))
        lines = result.machine_lines().splitlines()
        keys = [line.split("=")[0] for line in lines]
        assert keys == ["mrr", "hits1", "hits3", "hits10", "mode", "agg", "n_test", "n_rankings"]
        assert f"n_rankings={result.n_rankings}" in lines

    def test_bad_inputs_rejected(self):
        split = random_split(27)
        rules = self.ruleset_for(split)
        with pytest.raises(ValueError):
            evaluate(split, rules, agg="median")
        with pytest.raises(ValueError):
            evaluate(split, rules, sample=0)
        empty_test = split_of(split.train, split.valid, [], n_nodes=split.n_nodes, n_props=split.n_properties)
        with pytest.raises(ValueError):
            evaluate(empty_test, rules)
