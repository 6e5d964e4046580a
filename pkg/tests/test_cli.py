import json
import shutil

import numpy as np
import pytest

from conftest import one_factor_data, regression_data
from irsem import corpus_io as cio
from irsem.cli import main

RUN = """\
7 Q0 a 1 3.0 t
7 Q0 b 2 2.0 t
7 Q0 c 3 1.0 t
8 Q0 d 1 5.0 t
8 Q0 e 2 4.0 t
"""
QRELS = "7 0 a 2\n7 0 c 1\n8 0 e 1\n"
SCHEMA = "1 bm25\n2 pagerank\n"
FEATURES = """\
2 qid:7 1:1.5 2:0.1 #docid = a
0 qid:7 1:1.1 2:0.4 #docid = b
1 qid:7 1:0.7 2:0.2 #docid = c
0 qid:8 1:2.0 2:0.3 #docid = d
1 qid:8 1:1.2 2:0.9 #docid = e
"""


def cli(*argv):
    return main([str(a) for a in argv])


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.fixture
def trio(tmp_path):
    return {k: write(tmp_path, f"{k}.txt", v)
            for k, v in (("run", RUN), ("qrels", QRELS), ("schema", SCHEMA), ("features", FEATURES))}


def machine(tmp_path, *argv, expect=0):
    out = tmp_path / "report.json"
    assert cli(*argv, "--format", "machine", "--out", out) == expect
    return json.loads(out.read_text())


def table_file(tmp_path, x, names, name="m.csv"):
    p = tmp_path / name
    cio.write_table(cio.VariableMatrix(tuple(names), np.asarray(x, float), {}), p)
    return p


class TestJoin:
    def test_clean_join(self, trio, tmp_path, capsys):
        out = tmp_path / "joined.csv"
        assert cli("join", "--run", trio["run"], "--qrels", trio["qrels"], "--features",
                   trio["features"], "--schema", trio["schema"], "--table-out", out) == 0
        text = capsys.readouterr().out
        assert "dropped=0" in text
        m = cio.read_table(out)
        assert m.n == 5
        assert {"bm25", "pagerank", "qrel", "docprec", "rank"} <= set(m.names)
        np.testing.assert_allclose(m.column("docprec")[0], np.log(3) / 2)

    def test_missing_document(self, trio, capsys):
        trio["features"].write_text("\n".join(FEATURES.splitlines()[:-1]) + "\n")
        assert cli("join", "--run", trio["run"], "--qrels", trio["qrels"], "--features",
                   trio["features"], "--schema", trio["schema"]) == 0
        assert "dropped=1" in capsys.readouterr().out

    def test_missing_schema(self, trio, tmp_path, capsys):
        missing = tmp_path / "nope" / "schema.txt"
        assert cli("join", "--run", trio["run"], "--features", trio["features"],
                   "--schema", missing) == 2
        assert str(missing) in capsys.readouterr().err

    def test_parse_error_has_location(self, trio, capsys):
        trio["run"].write_text(RUN + "7 Q0 z notarank 1.0 t\n")
        assert cli("join", "--run", trio["run"], "--features", trio["features"],
                   "--schema", trio["schema"]) == 2
        assert "run.txt:6" in capsys.readouterr().err


class TestPrep:
    def _table(self, tmp_path, seed=0):
        rng = np.random.default_rng(seed)
        n = 300
        a = rng.normal(size=n)
        x = np.column_stack([a * 100, a * 100 + rng.normal(size=n) * 0.5, rng.normal(size=n) * 0.01,
                             rng.exponential(size=n), rng.integers(0, 3, n), np.arange(1, n + 1)])
        return table_file(tmp_path, x, ["f1", "f1dup", "small", "skewed", "qrel", "rank"])

    def test_full_pipeline(self, tmp_path):
        src = self._table(tmp_path)
        dst = tmp_path / "prepped.csv"
        doc = machine(tmp_path, "prep", "--table", src, "--table-out", dst, "--log-shift", "skewed")
        res = doc["result"]
        assert res["stages"] == ["collinearity", "outliers", "log_shift", "rescale"]
        # the larger-variance member of the pair survives
        assert res["collinearity"]["ignored"] == ["f1"]
        assert res["rescale"]["final_ratio"] <= 10
        m = cio.read_table(dst)
        assert "f1" not in m.names and "f1dup" in m.names
        v = [m.column(c).var(ddof=1) for c in m.names if c != "rank"]
        assert max(v) / min(v) <= 10
        np.testing.assert_array_equal(m.column("rank"), np.arange(1, 301))
        assert doc["formulas"]["log_shift"]

    def test_threshold_one_keeps_all(self, tmp_path):
        doc = machine(tmp_path, "prep", "--table", self._table(tmp_path),
                      "--collinearity-threshold", "1.0")
        assert doc["result"]["collinearity"]["ignored"] == []

    def test_disabled_stages(self, tmp_path):
        doc = machine(tmp_path, "prep", "--table", self._table(tmp_path), "--no-collinearity",
                      "--no-outliers", "--no-rescale")
        assert doc["result"]["stages"] == []

    def test_constant_column(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        x = np.column_stack([rng.normal(size=50), np.full(50, 3.0)])
        assert cli("prep", "--table", table_file(tmp_path, x, ["f", "flat"])) == 3
        assert "flat" in capsys.readouterr().err

    def test_bad_log_target(self, tmp_path):
        assert cli("prep", "--table", self._table(tmp_path), "--log-shift", "nosuch") == 3


BETA_COV = "n=1000 correlation\nY X1 X2\n1 0.4 0.6\n0.4 1 0.6\n0.6 0.6 1\n"


class TestFit:
    def test_beta_example(self, tmp_path):
        cov = write(tmp_path, "r.cov", BETA_COV)
        model = write(tmp_path, "m.sem", "Y <- X1 + X2\n")
        doc = machine(tmp_path, "fit", "--model", model, "--cov", cov)
        beta = {q["id"]: q["beta"] for q in doc["result"]["parameters"]}
        assert beta["Y~X1"] == pytest.approx(0.0625, abs=1e-9)
        assert beta["Y~X2"] == pytest.approx(0.5625, abs=1e-9)
        assert doc["result"]["indices"]["saturated"] is True
        assert doc["result"]["indices"]["df"] == 0
        assert any("correlation" in w for w in doc["warnings"])
        assert doc["inputs"]["cov"]["name"] == "r.cov"

    def test_text_report(self, tmp_path, capsys):
        cov = write(tmp_path, "r.cov", BETA_COV)
        model = write(tmp_path, "m.sem", "Y <- X1 + X2\n")
        assert cli("fit", "--model", model, "--cov", cov) == 0
        out = capsys.readouterr().out
        assert "saturated" in out and "Y~X2" in out and "RMSEA" in out

    def test_missing_variable(self, tmp_path, capsys):
        cov = write(tmp_path, "r.cov", BETA_COV)
        model = write(tmp_path, "m.sem", "Y <- X1 + X3\n")
        assert cli("fit", "--model", model, "--cov", cov) == 4
        assert "X3" in capsys.readouterr().err

    def test_syntax_error(self, tmp_path):
        cov = write(tmp_path, "r.cov", BETA_COV)
        model = write(tmp_path, "m.sem", "Y <-\n")
        assert cli("fit", "--model", model, "--cov", cov) == 4

    def test_non_convergence_exit(self, tmp_path):
        x = one_factor_data(np.random.default_rng(2), 400, (1, 0.8, 0.6, 0.7))
        t = table_file(tmp_path, x, ["a", "b", "c", "d"])
        model = write(tmp_path, "m.sem", "L -> a + b + c + d\n")
        doc = machine(tmp_path, "fit", "--model", model, "--table", t, "--max-iter", "2", expect=5)
        assert doc["result"]["convergence"]["converged"] is False
        assert doc["result"]["indices"] is None

    def test_matrix_equals_exported_cov(self, tmp_path):
        x, y, names = regression_data(np.random.default_rng(3), 250, 3)
        t = table_file(tmp_path, np.column_stack([x, y]), names + ["Y"])
        cov = tmp_path / "exported.cov"
        assert cli("cov", "export", "--table", t, "--cov-out", cov, "--quiet") == 0
        model = write(tmp_path, "m.sem", "L -> X1 + X2 + X3\nY <- L\n")
        a = machine(tmp_path, "fit", "--model", model, "--table", t)["result"]
        b = machine(tmp_path, "fit", "--model", model, "--cov", cov)["result"]
        for p, q in zip(a["parameters"], b["parameters"]):
            assert p["id"] == q["id"]
            assert p["B"] == pytest.approx(q["B"], abs=1e-9)

    def test_group_by(self, tmp_path, fixtures):
        pipe = fixtures / "pipeline"
        joined = tmp_path / "joined.csv"
        prepped = tmp_path / "prepped.csv"
        assert cli("join", "--run", pipe / "run.txt", "--qrels", pipe / "qrels.txt", "--features",
                   pipe / "features.txt", "--schema", pipe / "schema.txt", "--table-out", joined,
                   "--quiet") == 0
        assert cli("prep", "--table", joined, "--table-out", prepped, "--log-shift",
                   "pagerank,inlink", "--quiet") == 0
        doc = machine(tmp_path, "fit", "--model", pipe / "model.sem", "--table", prepped,
                      "--group-by", "query_id")
        groups = doc["result"]["groups"]
        assert list(groups) == sorted(groups) and len(groups) == 5
        assert doc["result"]["failed_groups"] == []


def _fit_report(tmp_path, model_text, table, name):
    model = write(tmp_path, f"{name}.sem", model_text)
    out = tmp_path / f"{name}.json"
    assert cli("fit", "--model", model, "--table", table, "--format", "machine", "--out", out) == 0
    return out


class TestCompare:
    def _data(self, tmp_path, seed=0):
        rng = np.random.default_rng(seed)
        n = 2000
        x1 = rng.normal(size=n)
        x2 = 0.3 * x1 + rng.normal(size=n)
        m = 0.5 * x1 + rng.normal(size=n)
        y = 0.5 * m + rng.normal(size=n)
        return table_file(tmp_path, np.column_stack([x1, x2, m, y]), ["x1", "x2", "m", "y"],
                          f"d{seed}.csv")

    def test_nested(self, tmp_path):
        t = self._data(tmp_path)
        full = _fit_report(tmp_path, "m <- x1\ny <- m + x2\n", t, "full")
        restr = _fit_report(tmp_path, "m <- x1\ny <- m + 0*x2\n", t, "restr")
        res = machine(tmp_path, "compare", "--full", full, "--restricted", restr)["result"]
        assert res["kind"] == "nested"
        assert res["delta_df"] == 1
        assert res["delta_chisq"] >= 0 and 0 <= res["p"] <= 1

    def test_not_nested(self, tmp_path, capsys):
        t = self._data(tmp_path)
        a = _fit_report(tmp_path, "m <- x1\ny <- m\n", t, "a")
        b = _fit_report(tmp_path, "m <- x1\ny <- x2\n", t, "b")
        assert cli("compare", "--full", a, "--restricted", b) == 0
        out = capsys.readouterr().out
        assert "not nested" in out and "AIC" in out and "BIC" in out

    def test_digest_mismatch(self, tmp_path):
        a = _fit_report(tmp_path, "m <- x1\ny <- m\n", self._data(tmp_path, 0), "a")
        b = _fit_report(tmp_path, "m <- x1\ny <- m\n", self._data(tmp_path, 1), "b")
        assert cli("compare", "--full", a, "--restricted", b) == 4


class TestMetricsAndRetrievability:
    def test_ndcg_table(self, trio, capsys):
        assert cli("metrics", "--run", trio["run"], "--qrels", trio["qrels"], "--cutoff", "3",
                   "--r", "2") == 0
        out = capsys.readouterr().out
        assert "ndcg@3" in out and "p@2" in out
        assert "0.9639" in out

    def test_machine_metrics(self, trio, tmp_path):
        res = machine(tmp_path, "metrics", "--run", trio["run"], "--qrels", trio["qrels"],
                      "--cutoff", "3")["result"]
        q7 = res["per_query"][0]
        assert q7["query_id"] == "7"
        assert q7["ndcg@3"] == pytest.approx(0.9639, abs=1e-4)
        assert len(res["per_document"]) == 5

    def test_retrievability(self, tmp_path):
        run = write(tmp_path, "run.txt", "q1 Q0 d 1 1.0 t\nq2 Q0 x 1 2.0 t\nq2 Q0 y 2 1.5 t\n"
                                         "q2 Q0 d 3 1.0 t\n")
        lik = write(tmp_path, "lik.txt", "q1 0.5\nq2 0.5\n")
        res = machine(tmp_path, "retrievability", "--run", run, "--likelihood", lik,
                      "--cutoff", "2")["result"]
        assert res["retrievability"]["d"] == 0.5


class TestFactorCommands:
    def test_pca_and_efa(self, tmp_path):
        x = one_factor_data(np.random.default_rng(5), 500, (1, 0.9, 0.8, 0.7))
        t = table_file(tmp_path, x, ["a", "b", "c", "d"])
        assert cli("pca", "--table", t, "--components", "2", "--quiet") == 0
        assert cli("efa", "--table", t, "--factors", "1", "--quiet") == 0


class TestConfigAndDeterminism:
    def test_config_file_and_override(self, trio, tmp_path):
        cfg = write(tmp_path, "run.cfg", f"run = {trio['run']}\nqrels = {trio['qrels']}\ncutoff = 2\n")
        doc = machine(tmp_path, "metrics", "--config", cfg)
        assert doc["config"]["cutoff"] == 2
        assert "ndcg@2" in doc["result"]["per_query"][0]
        doc = machine(tmp_path, "metrics", "--config", cfg, "--cutoff", "3")
        assert doc["config"]["cutoff"] == 3

    def test_unknown_config_key(self, trio, tmp_path):
        cfg = write(tmp_path, "bad.cfg", "colour = blue\n")
        assert cli("metrics", "--config", cfg, "--run", trio["run"], "--qrels", trio["qrels"]) == 2

    def test_global_flags_either_side(self, trio, tmp_path):
        out1, out2 = tmp_path / "1.json", tmp_path / "2.json"
        assert cli("--format", "machine", "--out", out1, "metrics", "--run", trio["run"],
                   "--qrels", trio["qrels"]) == 0
        assert cli("metrics", "--run", trio["run"], "--qrels", trio["qrels"], "--format",
                   "machine", "--out", out2) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_byte_identical_and_location_independent(self, trio, tmp_path):
        elsewhere = tmp_path / "copy"
        elsewhere.mkdir()
        for p in trio.values():
            shutil.copy(p, elsewhere / p.name)
        reports = []
        for base in (trio["run"].parent, elsewhere):
            out = tmp_path / f"r{len(reports)}.json"
            assert cli("join", "--run", base / "run.txt", "--qrels", base / "qrels.txt",
                       "--features", base / "features.txt", "--schema", base / "schema.txt",
                       "--format", "machine", "--out", out) == 0
            reports.append(out.read_bytes())
        assert reports[0] == reports[1]
        doc = json.loads(reports[0])
        assert set(doc["inputs"]) == {"run", "qrels", "features", "schema"}
        assert all(len(v["sha256"]) == 64 for v in doc["inputs"].values())

    def test_no_command(self, capsys):
        assert cli() == 2
