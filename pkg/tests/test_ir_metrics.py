import itertools
import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irsem.corpus_io import QrelRecord, RunRecord
from irsem.errors import InputError, SpecificationError
from irsem.ir_metrics import (RankedList, RetrievabilityConfig, TermStats, average_precision,
                              bm25_components, doc_precision, kendall_tau, ndcg,
                              parse_termstats, per_query_metrics, precision_at, ranked_lists,
                              retrievability, retrievability_all, spearman_rho, total_relevant,
                              vsm_components)


def rl(*qrels):
    return RankedList.from_qrels(qrels)


# -- brute-force oracles, written from the textbook definitions -------------

def ap_oracle(qrels, total):
    """Sum over relevant pairs (j <= i) of 1/i, divided by the relevant total."""
    if total == 0:
        return 0.0
    rel = [q >= 1 for q in qrels]
    acc = 0.0
    for i in range(len(qrels)):
        for j in range(i + 1):
            if rel[i] and rel[j]:
                acc += 1.0 / (i + 1)
    return acc / total


def dcg_oracle(qrels, cutoff):
    return sum((2 ** q - 1) / math.log2(i + 2) for i, q in enumerate(qrels[:cutoff]))


@lru_cache(maxsize=None)
def ideal_oracle(multiset, cutoff):
    return max(dcg_oracle(p, cutoff) for p in itertools.permutations(multiset))


def all_lists(max_len=6, grades=(0, 1, 2)):
    for n in range(1, max_len + 1):
        yield from itertools.product(grades, repeat=n)


class TestDocPrecision:
    def test_examples(self):
        assert doc_precision(0, 7) == 0.0
        assert doc_precision(2, 1) == pytest.approx(math.log(3) / 2)
        assert doc_precision(2, 1) == pytest.approx(0.5493, abs=1e-4)
        assert doc_precision(1, 1) > doc_precision(1, 9)

    @given(st.integers(0, 5), st.integers(1, 1000))
    def test_positive_iff_relevant(self, qrel, rank):
        assert (doc_precision(qrel, rank) > 0) == (qrel >= 1)
        if qrel:
            assert doc_precision(qrel, rank + 1) < doc_precision(qrel, rank)

    def test_domain(self):
        with pytest.raises(ValueError):
            doc_precision(-1, 1)
        with pytest.raises(ValueError):
            doc_precision(1, 0)


class TestPrecision:
    def test_examples(self):
        assert precision_at(rl(1, 0, 1), 3) == pytest.approx(2 / 3)
        assert precision_at(rl(1), 5) == pytest.approx(1 / 5)
        assert precision_at(rl(0, 0, 0), 2) == 0.0

    def test_binarization(self):
        assert precision_at(rl(2, 1, 0), 3, binarize_at=2) == pytest.approx(1 / 3)

    def test_relabel_invariance(self):
        a = RankedList("q", ("x", "y", "z"), (2, 0, 1))
        b = RankedList("q", ("p", "q", "r"), (2, 0, 1))
        assert precision_at(a, 2) == precision_at(b, 2)
        assert ndcg(a, 3) == ndcg(b, 3)


class TestAveragePrecision:
    def test_examples(self):
        assert average_precision(rl(1, 0, 1), 2) == pytest.approx((1 + 2 / 3) / 2)
        assert average_precision(rl(1, 1, 0), 2) == 1.0
        assert average_precision(rl(0, 0), 3) == 0.0
        assert average_precision(rl(0, 0), 0) == 0.0

    def test_unretrieved_relevant_lower_ap(self):
        assert average_precision(rl(1, 0, 1), 4) == pytest.approx((1 + 2 / 3) / 4)

    def test_bad_total(self):
        with pytest.raises(ValueError):
            average_precision(rl(1, 1), 1)

    def test_exhaustive_oracle(self):
        for qrels in all_lists():
            rel = sum(q >= 1 for q in qrels)
            for total in {rel, rel + 2}:
                assert average_precision(rl(*qrels), total) == pytest.approx(
                    ap_oracle(qrels, total), abs=1e-12)


class TestNdcg:
    def test_worked_example(self):
        dcg = 3 + 0 + 1 / 2
        idcg = 3 + 1 / math.log2(3)
        assert ndcg(rl(2, 0, 1), 3) == pytest.approx(dcg / idcg, abs=1e-12)
        assert ndcg(rl(2, 0, 1), 3) == pytest.approx(0.9639, abs=1e-4)

    def test_ideal_and_zero(self):
        assert ndcg(rl(3, 2, 2, 0), 4) == pytest.approx(1.0)
        assert ndcg(rl(0, 0, 0), 3) == 0.0

    def test_exhaustive_oracle(self):
        for qrels in all_lists():
            for cutoff in {1, 3, len(qrels)}:
                ideal = ideal_oracle(tuple(sorted(qrels)), cutoff)
                expect = 0.0 if ideal == 0 else dcg_oracle(qrels, cutoff) / ideal
                assert ndcg(rl(*qrels), cutoff) == pytest.approx(expect, abs=1e-12)

    @settings(max_examples=50)
    @given(st.lists(st.integers(0, 4), min_size=1, max_size=15), st.integers(1, 20))
    def test_unit_interval(self, qrels, cutoff):
        assert 0.0 <= ndcg(rl(*qrels), cutoff) <= 1.0 + 1e-12


class TestRetrievability:
    def test_indicator_example(self):
        cfg = RetrievabilityConfig({"q1": 0.5, "q2": 0.5}, {"q1": {"d": 1}, "q2": {"d": 3}},
                                   cutoff=2)
        assert retrievability("d", cfg) == 0.5

    def test_zero_likelihood(self):
        cfg = RetrievabilityConfig({"q1": 0.0, "q2": 0.0}, {"q1": {"d": 1}, "q2": {"d": 1}})
        assert retrievability("d", cfg) == 0.0

    def test_gravity(self):
        cfg = RetrievabilityConfig({"q": 1.0}, {"q": {"d": 4}}, utility="gravity", gamma=1.0)
        assert retrievability("d", cfg) == 0.25

    def test_not_retrieved(self):
        cfg = RetrievabilityConfig({"q": 1.0}, {"q": {"e": 1}})
        assert retrievability("d", cfg) == 0.0
        assert retrievability_all(cfg) == {"e": 1.0}

    def test_linearity(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            nq = int(rng.integers(1, 8))
            docs = [f"d{i}" for i in range(10)]
            lik = {f"q{i}": float(rng.uniform(0, 2)) for i in range(nq)}
            ranks = {q: {d: int(r) for d, r in zip(docs, rng.permutation(10) + 1)
                         if rng.random() < 0.7} for q in lik}
            kind = str(rng.choice(["indicator", "gravity"]))
            cut = float(rng.integers(1, 11))
            c = float(rng.uniform(0.1, 10))
            base = RetrievabilityConfig(lik, ranks, cut, kind, 0.7)
            scaled = RetrievabilityConfig({q: c * w for q, w in lik.items()}, ranks, cut, kind, 0.7)
            for d in docs:
                assert retrievability(d, scaled) == pytest.approx(c * retrievability(d, base),
                                                                  rel=1e-12, abs=1e-15)

    def test_config_checks(self):
        with pytest.raises(ValueError):
            RetrievabilityConfig({"q": -1.0}, {})
        with pytest.raises(ValueError):
            RetrievabilityConfig({"q": 1.0}, {}, cutoff=0)
        with pytest.raises(ValueError):
            RetrievabilityConfig({"q": 1.0}, {}, utility="cubic")


def tau_oracle(x, y):
    n = len(x)
    s = 0
    for i in range(n):
        for j in range(i + 1, n):
            s += np.sign(x[i] - x[j]) * np.sign(y[i] - y[j])
    return s / (n * (n - 1) / 2)


class TestRankCorrelation:
    def test_examples(self):
        assert kendall_tau([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(4 / 6)
        assert kendall_tau("abcde", "abcde") == pytest.approx(1.0)
        assert kendall_tau("abcde", "edcba") == pytest.approx(-1.0)
        assert spearman_rho("abcde", "edcba") == pytest.approx(-1.0)

    def test_disjoint(self):
        with pytest.raises(ValueError):
            kendall_tau(["a", "b"], ["a", "c"])
        with pytest.raises(ValueError):
            spearman_rho(["a", "b"], ["a", "c"])

    @given(st.permutations(range(8)))
    def test_tie_free_oracles(self, perm):
        a = list(range(8))
        ra = np.arange(8)
        rb = np.empty(8)
        rb[list(perm)] = np.arange(8)
        assert kendall_tau(a, list(perm)) == pytest.approx(tau_oracle(ra, rb), abs=1e-12)
        d2 = float(np.sum((ra - rb) ** 2))
        assert spearman_rho(a, list(perm)) == pytest.approx(1 - 6 * d2 / (8 * 63), abs=1e-12)

    def test_mapping_with_ties(self):
        a = {"x": 1, "y": 2, "z": 2, "w": 3}
        b = {"x": 1, "y": 2, "z": 3, "w": 4}
        # tau-b: concordant 5, discordant 0, one tie in a
        assert kendall_tau(a, b) == pytest.approx(5 / math.sqrt(5 * 6))


TERMSTATS = """\
# toy collection
N 10
avdoclen 100
doc d1 100
doc d2 50
df apple 3
df pear 1
df fig 5
tf apple d1 4
tf pear d1 1
tf apple d2 2
qtf apple q1 1
qtf pear q1 1
qtf fig q1 1
qtf kiwi q1 0
"""


class TestTermStats:
    def test_parse(self):
        s = parse_termstats(TERMSTATS)
        assert s.N == 10 and s.avdoclen == 100.0
        assert s.doc_tf("apple", "d1") == 4 and s.doc_tf("fig", "d1") == 0
        assert s.query_terms("q1") == {"apple": 1, "fig": 1, "pear": 1}

    def test_parse_file(self, tmp_path):
        p = tmp_path / "ts.txt"
        p.write_text(TERMSTATS)
        assert parse_termstats(p).df["pear"] == 1

    @pytest.mark.parametrize("bad, fragment", [
        ("bogus 1", "unknown directive"),
        ("df apple", "expects"),
        ("df apple 11", "exceeds N"),
        ("df apple 0", "df must be"),
        ("doc d9 0", "doclen"),
        ("tf apple d2 51", "exceeds doclen"),
        ("tf apple d2 x", "bad number"),
    ])
    def test_errors(self, bad, fragment):
        with pytest.raises(InputError, match=fragment):
            parse_termstats(TERMSTATS + bad + "\n")

    def test_missing_header(self):
        with pytest.raises(InputError, match="missing N"):
            parse_termstats("avdoclen 3\n")


class TestBm25:
    def setup_method(self):
        self.s = parse_termstats(TERMSTATS)

    def test_examples(self):
        s = TermStats(2, 10.0, {"d": 10.0}, {"t": 1}, {("t", "d"): 3})
        c = bm25_components(s, "t", "d")
        assert c.idf == 0.0
        assert c.K == pytest.approx(1.2)  # doclen == avdoclen
        c0 = bm25_components(self.s, "fig", "d1")
        assert c0.sat == 0.0 and c0.weight == 0.0

    def test_hand_value(self):
        c = bm25_components(self.s, "apple", "d2", k1=1.5, b=0.5)
        K = 1.5 * (0.5 + 0.5 * 50 / 100)
        assert c.K == pytest.approx(K)
        assert c.idf == pytest.approx(math.log(7.5 / 3.5))
        assert c.sat == pytest.approx(2 / (K + 2))
        assert c.weight == pytest.approx(c.idf * c.sat)

    def test_monotonicity(self):
        sats = [bm25_components(TermStats(10, 100.0, {"d": 300.0}, {"t": 2}, {("t", "d"): tf}),
                                "t", "d").sat for tf in range(0, 20)]
        assert all(a < b for a, b in zip(sats, sats[1:]))
        idfs = [bm25_components(TermStats(10, 100.0, {"d": 300.0}, {"t": df}, {}), "t", "d").idf
                for df in range(1, 11)]
        assert all(a > b for a, b in zip(idfs, idfs[1:]))

    def test_errors(self):
        bad = TermStats(3, 1.0, {"d": 1.0}, {"t": 4}, {})
        with pytest.raises(SpecificationError):
            bm25_components(bad, "t", "d")
        with pytest.raises(ValueError):
            bm25_components(self.s, "apple", "d1", k1=0)


class TestVsm:
    def test_components(self):
        s = parse_termstats(TERMSTATS)
        terms, score = vsm_components(s, "q1", "d1")
        by = {t.term: t for t in terms}
        assert set(by) == {"apple", "fig", "pear"}
        assert by["apple"].coord == pytest.approx(2 / 3)
        assert all(t.boost == 1 for t in terms)
        assert by["fig"].dtw == 0.0
        assert by["apple"].dtw == pytest.approx(4 * math.log(10 / 3) / 100)
        assert by["pear"].qtw == pytest.approx(math.log(10) / 3)
        assert score == pytest.approx(sum(t.dtw * t.qtw * t.coord for t in terms))

    def test_coord_half(self):
        s = TermStats(5, 1.0, {"d": 4.0}, {"a": 1, "b": 1, "c": 1, "e": 1},
                      {("a", "d"): 1, ("b", "d"): 1},
                      {(t, "q"): 1 for t in "abce"})
        terms, _ = vsm_components(s, "q", "d")
        assert terms[0].coord == 0.5

    def test_empty_query(self):
        with pytest.raises(SpecificationError):
            vsm_components(parse_termstats(TERMSTATS), "q9", "d1")


def test_per_query_from_records():
    run = [RunRecord("1", f"d{i}", i, 10.0 - i, "t") for i in (3, 1, 2)]
    qrels = [QrelRecord("1", "d1", 2), QrelRecord("1", "d3", 1), QrelRecord("1", "d9", 1)]
    lists = ranked_lists(run, qrels)
    assert lists[0].doc_ids == ("d1", "d2", "d3")
    assert lists[0].qrels == (2, 0, 1)
    rows = per_query_metrics(lists, total_relevant(qrels), r=2, cutoff=3)
    assert rows[0]["ap"] == pytest.approx((1 + 2 / 3) / 3)
    assert rows[0]["p@2"] == 0.5
    assert rows[0]["ndcg@3"] == pytest.approx(0.9639, abs=1e-4)
