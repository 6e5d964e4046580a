"""Retrieval-side variables: per-document precision, P@r, AP, NDCG,
retrievability, rank correlation, and BM25 / vector-space term weights.

Logarithms are natural except for the log2 discount in NDCG.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy import stats

from .errors import InputError, SpecificationError

DOC_PRECISION_FORMULA = "ln(qrel + 1) / (rank + 1)"
BM25_FORMULA = "idf = ln((N - df + 0.5)/(df + 0.5)); K = k1*(1 - b + b*doclen/avdoclen); sat = tf/(K + tf)"
VSM_FORMULA = "tfidf = tf*ln(N/df); dtw = tfidf(t,D)/doclen; qtw = tfidf(t,Q)/sum(qtf); coord = |D&Q|/|Q|"


def doc_precision(qrel: int, rank: int) -> float:
    """Per-document precision transform ``ln(qrel + 1) / (rank + 1)``.

    Zero for a non-relevant document, positive otherwise, and decreasing in
    rank.
    """
    if qrel < 0:
        raise ValueError("qrel must be >= 0")
    if rank < 1:
        raise ValueError("rank must be >= 1")
    return math.log(qrel + 1.0) / (rank + 1.0)


@dataclass(frozen=True)
class RankedList:
    """One query's result list; ``qrels[i]`` is the judgment at rank i + 1."""

    query_id: str
    doc_ids: tuple
    qrels: tuple

    def __post_init__(self):
        if len(self.doc_ids) != len(self.qrels):
            raise ValueError("doc_ids and qrels differ in length")
        if any(q < 0 for q in self.qrels):
            raise ValueError("qrels must be >= 0")

    @classmethod
    def from_qrels(cls, qrels, query_id="q", doc_ids=None) -> "RankedList":
        qrels = tuple(int(q) for q in qrels)
        if doc_ids is None:
            doc_ids = tuple(f"d{i + 1}" for i in range(len(qrels)))
        return cls(query_id, tuple(doc_ids), qrels)

    def __len__(self):
        return len(self.qrels)


def precision_at(lst: RankedList, r: int, binarize_at: int = 1) -> float:
    """Relevant documents among the top ``r``, divided by ``r`` even when the
    list is shorter."""
    if r < 1:
        raise ValueError("r must be >= 1")
    return sum(1 for q in lst.qrels[:r] if q >= binarize_at) / r


def average_precision(lst: RankedList, total_relevant: int, binarize_at: int = 1) -> float:
    if total_relevant == 0:
        return 0.0
    hits = 0
    acc = 0.0
    for i, q in enumerate(lst.qrels, start=1):
        if q >= binarize_at:
            hits += 1
            acc += hits / i
    if hits > total_relevant:
        raise ValueError("total_relevant is smaller than the relevant documents retrieved")
    return acc / total_relevant


def _dcg(gains) -> float:
    g = np.asarray(gains, dtype=float)
    if g.size == 0:
        return 0.0
    disc = np.log2(np.arange(2, g.size + 2))
    return float(np.sum((2.0 ** g - 1.0) / disc))


def ndcg(lst: RankedList, cutoff: int) -> float:
    """Exponential-gain NDCG; the ideal ordering uses the list's own qrels."""
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    ideal = _dcg(sorted(lst.qrels, reverse=True)[:cutoff])
    if ideal == 0:
        return 0.0
    return _dcg(lst.qrels[:cutoff]) / ideal


# -- retrievability ---------------------------------------------------------

@dataclass(frozen=True)
class RetrievabilityConfig:
    """Query population with likelihoods, per-query ranks and a utility.

    ``ranks[q]`` maps doc id to rank; documents absent from it were not
    retrieved. ``utility`` is ``"indicator"`` (1 if rank <= cutoff) or
    ``"gravity"`` (rank ** -gamma for rank <= cutoff).
    """

    likelihood: Mapping
    ranks: Mapping
    cutoff: float = math.inf
    utility: str = "indicator"
    gamma: float = 1.0

    def __post_init__(self):
        if self.utility not in ("indicator", "gravity"):
            raise ValueError(f"unknown utility {self.utility!r}")
        if self.cutoff < 1:
            raise ValueError("cutoff must be >= 1")
        total = 0.0
        for q, w in self.likelihood.items():
            if not (w >= 0 and math.isfinite(w)):
                raise ValueError(f"likelihood of query {q!r} must be finite and >= 0")
            total += w
        if not math.isfinite(total):
            raise ValueError("likelihoods must sum to a finite value")

    def f(self, rank) -> float:
        if rank is None or not rank <= self.cutoff:
            return 0.0
        if self.utility == "indicator":
            return 1.0
        return float(rank) ** -self.gamma


def retrievability(doc_id, cfg: RetrievabilityConfig) -> float:
    """``sum_q L(q) f(r(d, q), r*)``; unretrieved documents contribute 0."""
    total = 0.0
    for q in sorted(cfg.likelihood, key=str):
        w = cfg.likelihood[q]
        if w:
            total += w * cfg.f(cfg.ranks.get(q, {}).get(doc_id))
    return total


def retrievability_all(cfg: RetrievabilityConfig, doc_ids: Iterable | None = None) -> dict:
    if doc_ids is None:
        doc_ids = sorted({d for r in cfg.ranks.values() for d in r}, key=str)
    return {d: retrievability(d, cfg) for d in doc_ids}


# -- rank correlation -------------------------------------------------------

def _paired(a, b):
    """Align two rankings given as sequences (best first) or score mappings."""
    def as_map(x):
        if isinstance(x, Mapping):
            return dict(x)
        return {item: pos for pos, item in enumerate(x, start=1)}

    ma, mb = as_map(a), as_map(b)
    if set(ma) != set(mb):
        raise ValueError("rankings cover different item sets")
    if len(ma) < 2:
        raise ValueError("need at least two items")
    items = sorted(ma, key=str)
    return np.array([ma[i] for i in items], float), np.array([mb[i] for i in items], float)


def kendall_tau(a, b) -> float:
    """Kendall tau-b.

    Each argument is either a sequence of items, best first, or a mapping
    item -> rank/score. Both must cover the same items.
    """
    x, y = _paired(a, b)
    return float(stats.kendalltau(x, y, variant="b").statistic)


def spearman_rho(a, b) -> float:
    """Pearson correlation of average ranks."""
    x, y = _paired(a, b)
    return float(stats.spearmanr(x, y).statistic)


# -- term statistics --------------------------------------------------------

@dataclass
class TermStats:
    N: int
    avdoclen: float
    doclen: dict = field(default_factory=dict)
    df: dict = field(default_factory=dict)
    tf: dict = field(default_factory=dict)  # (term, doc) -> count
    qtf: dict = field(default_factory=dict)  # (term, query) -> count

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not self.avdoclen > 0:
            raise ValueError("avdoclen must be > 0")

    def query_terms(self, query) -> dict:
        return {t: c for (t, q), c in sorted(self.qtf.items()) if q == query and c > 0}

    def doc_tf(self, term, doc) -> int:
        return self.tf.get((term, doc), 0)


def _read_text(src) -> tuple[str, str]:
    if isinstance(src, Path) or (isinstance(src, str) and "\n" not in src and Path(src).is_file()):
        p = Path(src)
        try:
            return p.read_text(encoding="utf-8"), str(p)
        except OSError as exc:
            raise InputError(f"cannot read {p}: {exc.strerror}") from exc
    if hasattr(src, "read"):
        return src.read(), getattr(src, "name", "<stream>")
    return str(src), "<text>"


def parse_termstats(src) -> TermStats:
    """Read the line-oriented term-statistics format.

    Directives: ``N <int>``, ``avdoclen <real>``, ``doc <id> <doclen>``,
    ``df <term> <int>``, ``tf <term> <doc> <int>``,
    ``qtf <term> <query> <int>``. Blank lines and ``#`` comments are skipped.
    """
    text, name = _read_text(src)
    header: dict = {}
    doclen, df, tf, qtf = {}, {}, {}, {}
    arity = {"N": 1, "avdoclen": 1, "doc": 2, "df": 2, "tf": 3, "qtf": 3}

    def num(tok, lineno, kind=int):
        try:
            v = kind(tok)
        except ValueError:
            raise InputError(f"bad number {tok!r}", lineno, name) from None
        if kind is float and not math.isfinite(v):
            raise InputError(f"non-finite value {tok!r}", lineno, name)
        return v

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head not in arity:
            raise InputError(f"unknown directive {head!r}", lineno, name)
        if len(rest) != arity[head]:
            raise InputError(f"{head} expects {arity[head]} fields, got {len(rest)}", lineno, name)
        if head == "N":
            header["N"] = num(rest[0], lineno)
        elif head == "avdoclen":
            header["avdoclen"] = num(rest[0], lineno, float)
        elif head == "doc":
            v = num(rest[1], lineno, float)
            if not v > 0:
                raise InputError("doclen must be > 0", lineno, name)
            doclen[rest[0]] = v
        elif head == "df":
            v = num(rest[1], lineno)
            if v < 1:
                raise InputError("df must be >= 1", lineno, name)
            df[rest[0]] = v
        else:
            v = num(rest[2], lineno)
            if v < 0:
                raise InputError(f"{head} must be >= 0", lineno, name)
            (tf if head == "tf" else qtf)[(rest[0], rest[1])] = v
    for key in ("N", "avdoclen"):
        if key not in header:
            raise InputError(f"missing {key} line", None, name)
    if header["N"] < 1 or not header["avdoclen"] > 0:
        raise InputError("N must be >= 1 and avdoclen > 0", None, name)
    for term, v in df.items():
        if v > header["N"]:
            raise InputError(f"df of {term!r} exceeds N", None, name)
    for (term, doc), v in tf.items():
        if doc in doclen and v > doclen[doc]:
            raise InputError(f"tf of {term!r} in {doc!r} exceeds doclen", None, name)
    return TermStats(header["N"], header["avdoclen"], doclen, df, tf, qtf)


@dataclass(frozen=True)
class Bm25Components:
    idf: float
    sat: float
    K: float
    weight: float


def bm25_components(s: TermStats, term, doc, k1: float = 1.2, b: float = 0.75) -> Bm25Components:
    if not k1 > 0:
        raise ValueError("k1 must be > 0")
    if not 0 <= b <= 1:
        raise ValueError("b must lie in [0, 1]")
    n_t = s.df.get(term)
    if n_t is None:
        raise SpecificationError(f"no df for term {term!r}")
    if n_t > s.N:
        raise SpecificationError(f"df of {term!r} ({n_t}) exceeds N ({s.N})")
    if doc not in s.doclen:
        raise SpecificationError(f"no doclen for document {doc!r}")
    idf = math.log((s.N - n_t + 0.5) / (n_t + 0.5))
    K = k1 * (1.0 - b + b * s.doclen[doc] / s.avdoclen)
    tf = s.doc_tf(term, doc)
    sat = tf / (K + tf)
    return Bm25Components(idf, sat, K, idf * sat)


@dataclass(frozen=True)
class VsmTerm:
    term: str
    dtw: float
    qtw: float
    coord: float
    boost: float = 1.0


def vsm_components(s: TermStats, query, doc) -> tuple[list[VsmTerm], float]:
    """Per-term vector-space weights and the summed score."""
    qterms = s.query_terms(query)
    if not qterms:
        raise SpecificationError(f"query {query!r} has no terms")
    if doc not in s.doclen:
        raise SpecificationError(f"no doclen for document {doc!r}")
    len_d = s.doclen[doc]
    len_q = float(sum(qterms.values()))
    shared = sum(1 for t in qterms if s.doc_tf(t, doc) > 0)
    coord = shared / len(qterms)
    out = []
    score = 0.0
    for t, qc in qterms.items():
        if t not in s.df:
            raise SpecificationError(f"no df for term {t!r}")
        idf = math.log(s.N / s.df[t])
        dtw = s.doc_tf(t, doc) * idf / len_d
        qtw = qc * idf / len_q
        out.append(VsmTerm(t, dtw, qtw, coord))
        score += dtw * qtw * coord
    return out, score


# -- per-query evaluation ---------------------------------------------------

def ranked_lists(run, qrels=()) -> list[RankedList]:
    """Build one ranked list per query from run and qrel records.

    Run ranks are authoritative; scores never reorder documents.
    """
    judged = {(q.query_id, q.doc_id): q.qrel for q in qrels}
    by_query = defaultdict(list)
    for r in run:
        by_query[r.query_id].append(r)
    out = []
    for qid in sorted(by_query):
        recs = sorted(by_query[qid], key=lambda r: r.rank)
        out.append(RankedList(qid, tuple(r.doc_id for r in recs),
                              tuple(judged.get((qid, r.doc_id), 0) for r in recs)))
    return out


def total_relevant(qrels, binarize_at: int = 1) -> dict:
    tot = defaultdict(int)
    for q in qrels:
        if q.qrel >= binarize_at:
            tot[q.query_id] += 1
    return dict(tot)


def per_query_metrics(lists, totals: Mapping, r: int = 10, cutoff: int = 10,
                      binarize_at: int = 1) -> list[dict]:
    rows = []
    for lst in lists:
        retrieved = sum(1 for q in lst.qrels if q >= binarize_at)
        total = max(totals.get(lst.query_id, 0), retrieved)
        rows.append({
            "query_id": lst.query_id,
            "ap": average_precision(lst, total, binarize_at),
            f"p@{r}": precision_at(lst, r, binarize_at),
            f"ndcg@{cutoff}": ndcg(lst, cutoff),
        })
    return rows
