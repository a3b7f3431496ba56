"""Exact Hamming-distance retrieval over packed codes by linear scan."""

import numpy as np

from .codec import BinaryCode, CodeSet, n_words
from .errors import ConfigError, DimensionError, DuplicateIdError


def hamming(a, b):
    """Number of differing bits between two codes of equal length."""
    if a.bits != b.bits:
        raise DimensionError(f"code lengths differ: {a.bits} vs {b.bits}")
    return int(np.bitwise_count(np.bitwise_xor(a.words(), b.words())).sum())


class HammingIndex:
    """Immutable arena of uint64 code words plus a parallel id array.

    Rows are stored in ascending id order, so a stable sort on distance
    already yields the ascending-id tie rule.
    """

    def __init__(self, words, ids, bits):
        self._words = words
        self._ids = ids
        self.bits = bits
        self._words.setflags(write=False)
        self._ids.setflags(write=False)

    def __len__(self):
        return self._ids.shape[0]

    @property
    def ids(self):
        return self._ids

    @property
    def stride(self):
        return self._words.shape[1]

    def dump(self):
        """Return ``(CodeSet, ids)`` in stored (ascending id) order."""
        raw = self._words.astype("<u8").view(np.uint8).reshape(len(self), -1)
        return CodeSet(raw[:, :(self.bits + 7) // 8].copy(), self.bits), self._ids.copy()

    def distances(self, q):
        """Hamming distance from ``q`` to every stored code, in stored order."""
        if q.bits != self.bits:
            raise DimensionError(f"query has {q.bits} bits, index has {self.bits}")
        x = np.bitwise_xor(self._words, q.words()[None, :])
        return np.bitwise_count(x).sum(axis=1, dtype=np.int64)

    def distance_matrix(self, queries):
        """``(Q, N)`` distances for a :class:`CodeSet` of queries."""
        if queries.bits != self.bits:
            raise DimensionError(f"queries have {queries.bits} bits, index has {self.bits}")
        qw = queries.words()
        out = np.zeros((len(queries), len(self)), dtype=np.int64)
        for w in range(self.stride):
            out += np.bitwise_count(np.bitwise_xor(qw[:, w:w + 1], self._words[None, :, w]))
        return out

    def query_topk(self, q, k):
        """Ranked ``[(id, distance), ...]`` of the ``k`` nearest codes."""
        if k < 1:
            raise ConfigError(f"k must be >= 1, got {k}")
        d = self.distances(q)
        return self._select(d, k)

    def _select(self, d, k):
        n = d.shape[0]
        if n == 0:
            return []
        if k < n:
            # every row at or below the k-th smallest distance is a candidate,
            # which keeps boundary ties for the id rule
            kth = np.partition(d, k - 1)[k - 1]
            cand = np.flatnonzero(d <= kth)
        else:
            cand = np.arange(n)
        order = cand[np.argsort(d[cand], kind="stable")][:k]
        return [(int(self._ids[i]), int(d[i])) for i in order]

    def rank(self, q, k=None):
        """Ids and distances of the top ``k`` (all if None) as arrays."""
        d = self.distances(q)
        k = len(self) if k is None else min(k, len(self))
        hits = self._select(d, max(k, 1)) if k else []
        ids = np.array([h[0] for h in hits], dtype=np.int64)
        return ids, np.array([h[1] for h in hits], dtype=np.int64)


def build_index(codes, ids):
    """Build an index from a :class:`CodeSet` (or list of codes) and unique ids."""
    if not isinstance(codes, CodeSet):
        codes = list(codes)
        if not codes:
            raise DimensionError("empty code list needs an explicit CodeSet for its length")
        codes = CodeSet.from_codes(codes)
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    if ids.shape[0] != len(codes):
        raise DimensionError(f"{len(codes)} codes but {ids.shape[0]} ids")
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    dup = np.flatnonzero(sorted_ids[1:] == sorted_ids[:-1])
    if dup.size:
        raise DuplicateIdError(sorted_ids[dup[0]])
    words = np.ascontiguousarray(codes.words()[order])
    if words.shape[1] != n_words(codes.bits):
        raise DimensionError("arena stride mismatch")
    return HammingIndex(words, np.ascontiguousarray(sorted_ids), codes.bits)
