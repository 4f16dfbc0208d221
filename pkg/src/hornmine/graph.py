"""In-memory multigraph index over interned triples.

All structures are derived once from the triple list and treated as
immutable afterwards.  Counting helpers are exact integer arithmetic
throughout (int64 vectors), so results never depend on evaluation
order or thread count.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .types import Triple

# z-role of the first and second body property per triangle shape:
# which end of the q-edge and of the r-edge carries the join variable.
JOIN_SIDES: dict[int, tuple[str, str]] = {
    3: ("obj", "subj"),   # q(x,z), r(z,y)
    4: ("obj", "obj"),    # q(x,z), r(y,z)
    5: ("subj", "subj"),  # q(z,x), r(z,y)
    6: ("subj", "obj"),   # q(z,x), r(y,z)
}


class GraphIndex:
    """Deduplicated directed labelled multigraph with counting indexes."""

    def __init__(self, triples: Iterable[Triple], n_nodes: int | None = None, n_props: int | None = None):
        arr = np.asarray(sorted(set(triples)), dtype=np.int64)
        if arr.size == 0:
            arr = arr.reshape(0, 3)
        if arr.size and arr.min() < 0:
            raise ValueError("negative ids in triples")
        s, p, o = arr[:, 0], arr[:, 1], arr[:, 2]
        self.n_nodes = int(n_nodes) if n_nodes is not None else (int(max(s.max(), o.max())) + 1 if len(arr) else 0)
        self.n_props = int(n_props) if n_props is not None else (int(p.max()) + 1 if len(arr) else 0)
        if len(arr):
            if max(s.max(), o.max()) >= self.n_nodes:
                raise ValueError("node id out of range")
            if p.max() >= self.n_props:
                raise ValueError("property id out of range")
        if self.n_nodes and self.n_props and self.n_nodes * self.n_nodes * self.n_props >= 2**62:
            raise ValueError("graph too large for packed integer keys")
        self.n_triples = len(arr)

        # Edge arrays grouped by property: order (p, s, o).
        order = np.lexsort((o, s, p))
        self._s = s[order]
        self._p = p[order]
        self._o = o[order]
        self._prop_ptr = np.searchsorted(self._p, np.arange(self.n_props + 1))

        self.prop_count = np.bincount(self._p, minlength=self.n_props).astype(np.int64)
        # Frequency ranking; ties broken by ascending property id.
        self.prop_rank: tuple[int, ...] = tuple(
            sorted(range(self.n_props), key=lambda q: (-int(self.prop_count[q]), q))
        )

        # Distinct (s, o) pairs with their property lists, as one CSR:
        # pair_keys is sorted, pair_props[pair_ptr[i]:pair_ptr[i+1]] are
        # the ascending property ids holding between that pair.
        keys = self._s * self.n_nodes + self._o
        korder = np.lexsort((self._p, keys))
        ksorted = keys[korder]
        self.pair_props = self._p[korder]
        if len(ksorted):
            boundary = np.empty(len(ksorted), dtype=bool)
            boundary[0] = True
            np.not_equal(ksorted[1:], ksorted[:-1], out=boundary[1:])
            starts = np.flatnonzero(boundary)
            self.pair_keys = ksorted[starts]
            self.pair_ptr = np.append(starts, len(ksorted)).astype(np.int64)
        else:
            self.pair_keys = np.empty(0, dtype=np.int64)
            self.pair_ptr = np.zeros(1, dtype=np.int64)

        self._triple_keys = np.sort((keys * self.n_props + self._p) if self.n_props else keys)

        self._degree_cache: dict[tuple[int, str], np.ndarray] = {}
        self._matrix_cache: dict[tuple[int, bool], sparse.csr_matrix] = {}
        self._out_index: dict[int, dict[int, frozenset[int]]] | None = None
        self._in_index: dict[int, dict[int, frozenset[int]]] | None = None

    # -- basic lookups ------------------------------------------------

    def prop_edges(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        """(subjects, objects) arrays of property ``p``, sorted by (s, o)."""
        lo, hi = self._prop_ptr[p], self._prop_ptr[p + 1]
        return self._s[lo:hi], self._o[lo:hi]

    def triple_exists(self, s: int, p: int, o: int) -> bool:
        key = (s * self.n_nodes + o) * self.n_props + p
        i = np.searchsorted(self._triple_keys, key)
        return bool(i < len(self._triple_keys) and self._triple_keys[i] == key)

    def properties_of_pair(self, s: int, o: int) -> np.ndarray:
        key = s * self.n_nodes + o
        i = np.searchsorted(self.pair_keys, key)
        if i < len(self.pair_keys) and self.pair_keys[i] == key:
            return self.pair_props[self.pair_ptr[i] : self.pair_ptr[i + 1]]
        return np.empty(0, dtype=np.int64)

    def _build_neighbor_index(self, by_subject: bool) -> dict[int, dict[int, frozenset[int]]]:
        index: dict[int, dict[int, list[int]]] = {p: {} for p in range(self.n_props)}
        for p in range(self.n_props):
            subs, objs = self.prop_edges(p)
            keyed = subs if by_subject else objs
            other = objs if by_subject else subs
            bucket = index[p]
            for k, v in zip(keyed.tolist(), other.tolist()):
                bucket.setdefault(k, []).append(v)
        return {p: {k: frozenset(v) for k, v in bucket.items()} for p, bucket in index.items()}

    def objects_of(self, s: int, p: int) -> frozenset[int]:
        """All o with (s, p, o) in the graph; empty for unknown ids."""
        if self._out_index is None:
            self._out_index = self._build_neighbor_index(by_subject=True)
        bucket = self._out_index.get(p)
        return bucket.get(s, frozenset()) if bucket else frozenset()

    def subjects_of(self, o: int, p: int) -> frozenset[int]:
        """All s with (s, p, o) in the graph; empty for unknown ids."""
        if self._in_index is None:
            self._in_index = self._build_neighbor_index(by_subject=False)
        bucket = self._in_index.get(p)
        return bucket.get(o, frozenset()) if bucket else frozenset()

    # -- frequency ranking --------------------------------------------

    def top_properties(self, limit: int) -> list[int]:
        """The ``limit`` most frequent properties, most frequent first."""
        if limit < 0:
            raise ValueError("limit must be >= 0")
        return [p for p in self.prop_rank[:limit] if self.prop_count[p] > 0]

    # -- vector views used by the miner -------------------------------

    def side_degrees(self, p: int, side: str) -> np.ndarray:
        """Per-node edge counts of ``p`` keyed by its subject or object end."""
        cached = self._degree_cache.get((p, side))
        if cached is not None:
            return cached
        subs, objs = self.prop_edges(p)
        nodes = subs if side == "subj" else objs
        deg = np.bincount(nodes, minlength=self.n_nodes).astype(np.int64)
        self._degree_cache[(p, side)] = deg
        return deg

    def matrix(self, p: int, forward: bool = True) -> sparse.csr_matrix:
        """0/1 adjacency of property ``p``; transposed when not forward."""
        cached = self._matrix_cache.get((p, forward))
        if cached is not None:
            return cached
        subs, objs = self.prop_edges(p)
        rows, cols = (subs, objs) if forward else (objs, subs)
        m = sparse.csr_matrix(
            (np.ones(len(rows), dtype=np.int64), (rows, cols)),
            shape=(self.n_nodes, self.n_nodes),
        )
        self._matrix_cache[(p, forward)] = m
        return m

    def adjacency_count(self, q: int, r: int, shape: int) -> int:
        """Number of (x, y, z) bindings of the two-atom body of ``shape``.

        Both atoms are grouped on the shared variable z, so the count is
        the dot product of the two per-node degree vectors.
        """
        side_q, side_r = JOIN_SIDES[shape]
        return int(np.dot(self.side_degrees(q, side_q), self.side_degrees(r, side_r)))

    def head_caps(self, x_deg: np.ndarray, y_deg: np.ndarray) -> np.ndarray:
        """Per-property sums of min(x_deg[s], y_deg[o]) over that property's edges.

        With the body-end degree vectors of a triangle shape this bounds
        every head's support from above: each head edge (x, y) closes at
        most min(deg_q(x), deg_r(y)) bindings.
        """
        vals = np.minimum(x_deg[self._s], y_deg[self._o]).astype(np.float64)
        return np.bincount(self._p, weights=vals, minlength=self.n_props).astype(np.int64)


def pair_key_positions(index: GraphIndex, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Positions of ``keys`` in the pair table; mask of which were found."""
    npairs = len(index.pair_keys)
    if npairs == 0 or len(keys) == 0:
        return np.zeros(len(keys), dtype=np.int64), np.zeros(len(keys), dtype=bool)
    pos = np.searchsorted(index.pair_keys, keys)
    pos = np.minimum(pos, npairs - 1)
    return pos, index.pair_keys[pos] == keys
