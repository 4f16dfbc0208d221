"""Mining against a remote SPARQL 1.1 endpoint.

The remote backend never downloads the graph: per-head support counts,
body-support counts, and the property ranking are all computed by the
store through five fixed query templates.  Given the same graph it
yields the same rules as the in-memory miner, and the serialized rule
files are byte-identical.
"""
from __future__ import annotations

import json
import logging
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Callable, Sequence

import requests

from .mining import AdjacencyCache, RuleSet, prune_and_emit, rule_sort_key
from .types import DIGON_TYPES, Interner, MiningConfig, Rule

logger = logging.getLogger(__name__)

RESULTS_JSON = "application/sparql-results+json"
RESULTS_XML = "application/sparql-results+xml"
_XML_NS = "{http://www.w3.org/2005/sparql-results#}"

TRANSIENT_STATUS = (429, 502, 503, 504)

# Patchable for tests; exponential backoff between retries.
_sleep = time.sleep


class BackendError(RuntimeError):
    """The endpoint could not be reached or refused the query."""


class ProtocolError(BackendError):
    """The endpoint answered with something that is not a SPARQL result."""


def _term(iri: str) -> str:
    """Angle-bracketed IRI reference; rejects strings that cannot be one."""
    if not iri or any(ch in iri for ch in "<>\"{}|^`\\ \t\n\r"):
        raise ValueError(f"not embeddable as an IRI: {iri!r}")
    return f"<{iri}>"


def _from_clause(graph: str | None) -> str:
    return f"FROM {_term(graph)} " if graph else ""


_TRIANGLE_BODIES = {
    3: "?x {q} ?z . ?z {r} ?y .",
    4: "?x {q} ?z . ?y {r} ?z .",
    5: "?z {q} ?x . ?z {r} ?y .",
    6: "?z {q} ?x . ?y {r} ?z .",
}


def top_properties_query(limit: int, graph: str | None = None) -> str:
    """Properties by descending edge count; ties broken by IRI order."""
    return (
        f"SELECT ?p (COUNT(*) AS ?c) {_from_clause(graph)}"
        f"WHERE {{ ?s ?p ?o . }} GROUP BY ?p ORDER BY DESC(?c) ?p LIMIT {int(limit)}"
    )


def digon_support_query(q: str, inverse: bool, graph: str | None = None) -> str:
    """Per-head support of the one-atom body, forward or reversed."""
    body = "?y {q} ?x ." if inverse else "?x {q} ?y ."
    return (
        f"SELECT ?p (COUNT(*) AS ?c) {_from_clause(graph)}"
        f"WHERE {{ {body.format(q=_term(q))} ?x ?p ?y . FILTER (?p != {_term(q)}) }} "
        f"GROUP BY ?p ORDER BY ?p"
    )


def triangle_support_query(q: str, r: str, shape: int, graph: str | None = None) -> str:
    """Per-head support of one two-atom body shape."""
    body = _TRIANGLE_BODIES[shape].format(q=_term(q), r=_term(r))
    return (
        f"SELECT ?p (COUNT(*) AS ?c) {_from_clause(graph)}"
        f"WHERE {{ {body} ?x ?p ?y . }} GROUP BY ?p ORDER BY ?p"
    )


def adjacency_count_query(q: str, r: str, shape: int, graph: str | None = None) -> str:
    """Total binding count of one two-atom body shape."""
    body = _TRIANGLE_BODIES[shape].format(q=_term(q), r=_term(r))
    return f"SELECT (COUNT(*) AS ?c) {_from_clause(graph)}WHERE {{ {body} }}"


def ask_query(s: str, p: str, o: str, graph: str | None = None) -> str:
    """Existence check for a fully ground triple."""
    return f"ASK {_from_clause(graph)}{{ {_term(s)} {_term(p)} {_term(o)} . }}"


@dataclass(frozen=True)
class EndpointConfig:
    """Connection settings for a SPARQL endpoint."""

    url: str
    graph: str | None = None
    timeout: float = 30.0
    retries: int = 2
    page_size: int = 10000
    backoff: float = 0.5


def _requests_post(url: str, data: dict, timeout: float) -> tuple[int, str, str]:
    resp = requests.post(
        url,
        data=data,
        timeout=timeout,
        headers={"Accept": f"{RESULTS_JSON}, {RESULTS_XML};q=0.9"},
    )
    return resp.status_code, resp.headers.get("Content-Type", ""), resp.text


class SparqlEndpoint:
    """Form-encoded SPARQL protocol client with retries and paging."""

    def __init__(self, config: EndpointConfig, post: Callable[[str, dict, float], tuple[int, str, str]] | None = None):
        self.config = config
        self._post = post or _requests_post

    # -- transport -----------------------------------------------------

    def execute(self, query: str) -> dict:
        """Run one query, returning the SPARQL-results dict (JSON shape).

        Retries transient transport failures with exponential backoff;
        anything else raises BackendError (unreachable/refused) or
        ProtocolError (unintelligible answer).
        """
        last: Exception | None = None
        for attempt in range(self.config.retries + 1):
            if attempt:
                _sleep(self.config.backoff * 2 ** (attempt - 1))
            try:
                status, ctype, body = self._post(self.config.url, {"query": query}, self.config.timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last = exc
                continue
            if status in TRANSIENT_STATUS:
                last = BackendError(f"endpoint returned {status}")
                continue
            if status != 200:
                raise BackendError(f"endpoint returned {status}: {body[:200]}")
            return self._parse(ctype, body)
        raise BackendError(f"endpoint unreachable after {self.config.retries + 1} attempts: {last}")

    @staticmethod
    def _parse(ctype: str, body: str) -> dict:
        base = ctype.split(";")[0].strip().lower()
        if base in (RESULTS_JSON, "application/json"):
            try:
                return json.loads(body)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"bad JSON results: {exc}") from exc
        if base in (RESULTS_XML, "application/xml", "text/xml"):
            return _parse_xml_results(body)
        raise ProtocolError(f"unexpected content type: {ctype!r}")

    # -- result shapes ---------------------------------------------------

    def select(self, query: str) -> list[dict]:
        data = self.execute(query)
        try:
            return data["results"]["bindings"]
        except (KeyError, TypeError) as exc:
            raise ProtocolError("results missing 'results.bindings'") from exc

    def ask(self, query: str) -> bool:
        data = self.execute(query)
        if "boolean" not in data:
            raise ProtocolError("ASK result missing 'boolean'")
        return bool(data["boolean"])

    def count(self, query: str) -> int:
        rows = self.select(query)
        if not rows:
            return 0
        return _int_binding(rows[0], "c")

    def property_counts(self, query: str) -> list[tuple[str, int]]:
        """(?p IRI, ?c) rows of a self-limiting grouped count query."""
        return [(_iri_binding(row, "p"), _int_binding(row, "c")) for row in self.select(query)]

    def group_counts(self, query: str) -> list[tuple[str, int]]:
        """All (?p IRI, ?c) rows of a grouped count query, paged.

        The query must carry a total order (the support templates order
        by ?p) and no LIMIT of its own; pages are fetched until short.
        """
        out: list[tuple[str, int]] = []
        offset = 0
        size = self.config.page_size
        while True:
            rows = self.select(f"{query} LIMIT {size} OFFSET {offset}")
            for row in rows:
                out.append((_iri_binding(row, "p"), _int_binding(row, "c")))
            if len(rows) < size:
                return out
            offset += size

    def triple_exists(self, s: str, p: str, o: str) -> bool:
        return self.ask(ask_query(s, p, o, self.config.graph))


def _int_binding(row: dict, var: str) -> int:
    try:
        return int(row[var]["value"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"missing or non-integer ?{var} binding") from exc


def _iri_binding(row: dict, var: str) -> str:
    try:
        term = row[var]
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"missing ?{var} binding") from exc
    if term.get("type") != "uri" or not term.get("value"):
        raise ProtocolError(f"?{var} binding is not an IRI: {term!r}")
    return term["value"]


def _parse_xml_results(body: str) -> dict:
    """SPARQL results XML converted to the JSON result shape."""
    try:
        root = ET.fromstring(body)
    except ET.ParseError as exc:
        raise ProtocolError(f"bad XML results: {exc}") from exc
    boolean = root.find(f"{_XML_NS}boolean")
    if boolean is not None:
        return {"boolean": (boolean.text or "").strip().lower() == "true"}
    bindings = []
    for result in root.iter(f"{_XML_NS}result"):
        row = {}
        for b in result.iter(f"{_XML_NS}binding"):
            name = b.get("name")
            for kind in ("uri", "literal", "bnode"):
                term = b.find(f"{_XML_NS}{kind}")
                if term is not None:
                    row[name] = {"type": kind, "value": term.text or ""}
                    break
        bindings.append(row)
    return {"results": {"bindings": bindings}}


def mine_remote(endpoint: SparqlEndpoint, config: MiningConfig | None = None) -> tuple[RuleSet, Interner]:
    """Mine rules from the endpoint's graph; returns rules plus labels.

    Mirrors the in-memory miner: same ranking, same candidate shapes,
    same pruning. Queries run serially; adjacency counts are cached
    under the same canonical key, so shared bodies cost one query.
    """
    config = config or MiningConfig()
    if config.scoring != "standard":
        raise ValueError("endpoint mining supports standard confidence only")
    graph = endpoint.config.graph
    ranked = endpoint.property_counts(
        top_properties_query(max(config.top_properties, config.top_adjacencies), graph)
    )
    properties = Interner()
    counts: dict[int, int] = {}
    for iri, count in ranked:
        counts[properties.intern(iri)] = count
    top_p = [properties.intern(iri) for iri, _ in ranked[: config.top_properties]]
    top_t = [properties.intern(iri) for iri, _ in ranked[: config.top_adjacencies]]

    def remote_adjacency(q: int, r: int, shape: int) -> int:
        return endpoint.count(
            adjacency_count_query(properties.resolve(q), properties.resolve(r), shape, graph)
        )

    cache = AdjacencyCache(remote_adjacency)
    kept: list[Rule] = []
    for rtype in config.rule_types:
        for q in top_p:
            q_iri = properties.resolve(q)
            candidates: list[Rule] = []
            if rtype in DIGON_TYPES:
                rows = endpoint.group_counts(digon_support_query(q_iri, rtype == 2, graph))
                body_support = counts[q]
                for head_iri, support in sorted(rows):
                    head = properties.intern(head_iri)
                    if head == q:
                        continue
                    candidates.append(Rule(rtype, head, q, None, support, body_support))
            else:
                for r in top_t:
                    body_support = cache.get(q, r, rtype)
                    if body_support == 0:
                        continue
                    rows = endpoint.group_counts(
                        triangle_support_query(q_iri, properties.resolve(r), rtype, graph)
                    )
                    for head_iri, support in sorted(rows):
                        candidates.append(
                            Rule(rtype, properties.intern(head_iri), q, r, support, body_support)
                        )
            kept.extend(prune_and_emit(candidates, config.theta))
    return RuleSet(sorted(kept, key=rule_sort_key), config), properties
