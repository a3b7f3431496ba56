"""Retrieval metrics over Hamming rankings: MAP@k, precision@k, nDCG@k.

Relevance is judged from labels.  Single-label: same class id.  Multi-label:
at least one shared label, with the size of the intersection as the graded
relevance used by nDCG.
"""

from dataclasses import dataclass, field
import json

import numpy as np

from .errors import ConfigError, DataError


def average_precision(ranked_relevance, k):
    """AP@k normalised by the number of relevant items inside the top ``k``.

    >>> round(average_precision([1, 0, 1], 3), 6)
    0.833333
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    rel = np.asarray(ranked_relevance, dtype=bool)[:k]
    hits = np.cumsum(rel)
    if not hits.size or hits[-1] == 0:
        return 0.0
    prec = hits / np.arange(1, rel.size + 1)
    return float(prec[rel].sum() / hits[-1])


def precision_at_k(ranked_relevance, k):
    """Relevant count in the top ``k`` over ``k``; missing results count as misses."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    return float(np.count_nonzero(np.asarray(ranked_relevance, dtype=bool)[:k]) / k)


def dcg_at_k(grades, k):
    g = np.asarray(grades, dtype=np.float64)[:k]
    return float(np.sum((2.0 ** g - 1.0) / np.log2(np.arange(2, g.size + 2))))


def ndcg_at_k(ranked_grades, ideal_grades, k):
    """Exponential-gain nDCG; ``ideal_grades`` is every attainable grade.

    >>> round(ndcg_at_k([0, 3], [3, 0], 2), 4)
    0.6309
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    ranked = np.asarray(ranked_grades)
    ideal = np.sort(np.asarray(ideal_grades))[::-1]
    if (ranked.size and ranked.min() < 0) or (ideal.size and ideal.min() < 0):
        raise DataError("relevance grades must be nonnegative")
    idcg = dcg_at_k(ideal, k)
    if idcg == 0:
        return 0.0
    return dcg_at_k(ranked, k) / idcg


class RelevanceJudge:
    """Relevance of database items to a query, from class ids or multi-hot rows."""

    def __init__(self, query_labels, db_labels):
        self.query_labels = np.asarray(query_labels)
        self.db_labels = np.asarray(db_labels)
        if self.query_labels.ndim != self.db_labels.ndim:
            raise DataError("query and database labels use different label modes")
        self.mode = "single_label" if self.db_labels.ndim == 1 else "multi_label"
        if self.mode == "multi_label" and self.query_labels.shape[1] != self.db_labels.shape[1]:
            raise DataError("query and database multi-hot widths differ")

    def grades(self, qi, rows=None):
        """Graded relevance of database ``rows`` (all if None) for query ``qi``."""
        db = self.db_labels if rows is None else self.db_labels[rows]
        q = self.query_labels[qi]
        if self.mode == "single_label":
            return (db == q).astype(np.int64)
        return (db.astype(np.int64) @ q.astype(np.int64)).astype(np.int64)

    def relevant(self, qi, rows=None):
        return self.grades(qi, rows) > 0


@dataclass
class EvalReport:
    map: float
    precision_at: list = field(default_factory=list)
    ndcg_at: list = field(default_factory=list)
    queries: int = 0
    bits: int = 0
    k_eval: int = 0

    def to_json(self):
        doc = {
            "map": self.map,
            "precision_at": [[int(k), float(p)] for k, p in self.precision_at],
            "ndcg_at": [[int(k), float(g)] for k, g in self.ndcg_at],
            "queries": int(self.queries),
            "bits": int(self.bits),
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        return cls(map=doc["map"], precision_at=[tuple(x) for x in doc["precision_at"]],
                   ndcg_at=[tuple(x) for x in doc["ndcg_at"]], queries=doc["queries"],
                   bits=doc["bits"])


def _rows_for(index_ids, db_ids):
    # index stores ids sorted; map ranked ids back to database label rows
    pos = {int(i): n for n, i in enumerate(db_ids)}
    return np.array([pos[int(i)] for i in index_ids], dtype=np.intp)


def rankings(queries, index, k):
    """Top-``k`` ranked ids for every query code."""
    return [index.rank(q, k)[0] for q in queries]


def mean_average_precision(queries, index, judge, k, db_ids=None):
    """Unweighted mean of per-query AP@k.

    ``db_ids`` gives the sample id of each row of ``judge.db_labels``; it
    defaults to the index ids in ascending order.
    """
    if len(queries) == 0:
        raise DataError("empty query set")
    db_ids = index.ids if db_ids is None else db_ids
    aps = []
    for qi, q in enumerate(queries):
        ranked, _ = index.rank(q, k)
        rel = judge.relevant(qi, _rows_for(ranked, db_ids))
        aps.append(average_precision(rel, k))
    return float(np.mean(aps))


def evaluate(queries, index, judge, k, precision_ks=(), ndcg_ks=(), db_ids=None):
    """Full report: MAP@k, precision curve and nDCG at the requested cutoffs."""
    if len(queries) == 0:
        raise DataError("empty query set")
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    db_ids = index.ids if db_ids is None else db_ids
    depth = max([k, *precision_ks, *ndcg_ks])
    aps = []
    prec = {kk: [] for kk in precision_ks}
    ndcg = {kk: [] for kk in ndcg_ks}
    for qi, q in enumerate(queries):
        ranked, _ = index.rank(q, depth)
        grades = judge.grades(qi, _rows_for(ranked, db_ids))
        rel = grades > 0
        aps.append(average_precision(rel, k))
        for kk in precision_ks:
            prec[kk].append(precision_at_k(rel, kk))
        if ndcg_ks:
            ideal = judge.grades(qi)
            for kk in ndcg_ks:
                ndcg[kk].append(ndcg_at_k(grades, ideal, kk))
    return EvalReport(
        map=float(np.mean(aps)),
        precision_at=[(kk, float(np.mean(v))) for kk, v in prec.items()],
        ndcg_at=[(kk, float(np.mean(v))) for kk, v in ndcg.items()],
        queries=len(queries),
        bits=index.bits,
        k_eval=k,
    )


def precision_curve_csv(report):
    lines = ["k,precision"]
    lines += [f"{k},{p!r}" for k, p in report.precision_at]
    return "\n".join(lines) + "\n"
