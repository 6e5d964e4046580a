"""Readers and writers for runs, qrels, LETOR feature files and covariance files.

Everything here is pure: parsers take an iterable of lines (an open file, a
list, or a whole string) and return immutable records.
"""

from __future__ import annotations

import csv
import io
import math
import re
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError

ID_COLUMNS = ("query_id", "doc_id")


def _lines(src) -> Iterable[str]:
    if isinstance(src, str):
        return src.splitlines()
    return src


def _as_float(token: str, what: str, lineno: int, source=None) -> float:
    try:
        value = float(token)
    except ValueError:
        raise InputError(f"non-numeric {what} {token!r}", line=lineno, source=source) from None
    if not math.isfinite(value):
        raise InputError(f"non-finite {what} {token!r}", line=lineno, source=source)
    return value


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class RunRecord:
    query_id: str
    doc_id: str
    rank: int
    score: float
    run_tag: str


@dataclass(frozen=True)
class QrelRecord:
    query_id: str
    doc_id: str
    qrel: int


@dataclass(frozen=True)
class FeatureRecord:
    query_id: str
    doc_id: str
    label: int
    features: Mapping[str, float]


def parse_run(src, source=None) -> list[RunRecord]:
    """Parse a six-column run file: ``qid Q0 docid rank score tag``."""
    records = []
    seen = set()
    for lineno, line in enumerate(_lines(src), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 6:
            raise InputError(f"expected 6 fields, got {len(parts)}", line=lineno, source=source)
        qid, _, docid, rank_tok, score_tok, tag = parts
        try:
            rank = int(rank_tok)
        except ValueError:
            raise InputError(f"non-numeric rank {rank_tok!r}", line=lineno, source=source) from None
        if rank < 1:
            raise InputError(f"rank must be >= 1, got {rank}", line=lineno, source=source)
        score = _as_float(score_tok, "score", lineno, source)
        key = (tag, qid, rank)
        if key in seen:
            raise InputError(f"duplicate rank {rank} for query {qid} in run {tag}",
                             line=lineno, source=source)
        seen.add(key)
        records.append(RunRecord(qid, docid, rank, score, tag))
    return records


def parse_qrels(src, source=None) -> list[QrelRecord]:
    """Parse ``qid iter docid rel`` lines; the iteration column is ignored."""
    records = []
    seen = set()
    for lineno, line in enumerate(_lines(src), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 4:
            raise InputError(f"expected 4 fields, got {len(parts)}", line=lineno, source=source)
        qid, _, docid, rel_tok = parts
        try:
            rel = int(rel_tok)
        except ValueError:
            raise InputError(f"non-integer relevance {rel_tok!r}", line=lineno, source=source) from None
        if rel < 0:
            raise InputError(f"negative relevance {rel}", line=lineno, source=source)
        if (qid, docid) in seen:
            raise InputError(f"duplicate judgment for ({qid}, {docid})", line=lineno, source=source)
        seen.add((qid, docid))
        records.append(QrelRecord(qid, docid, rel))
    return records


def parse_schema(src, source=None) -> dict[str, str]:
    """Read a two-column ``id name`` feature schema."""
    schema = {}
    for lineno, line in enumerate(_lines(src), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InputError("schema lines must be 'id name'", line=lineno, source=source)
        schema[parts[0]] = parts[1]
    return schema


def parse_features(src, schema: Mapping[str, str] | None = None, comment: str = "#",
                   docid_key: str = "docid", source=None) -> list[FeatureRecord]:
    """Parse LETOR 4.0 style lines ``label qid:Q id:val ... # docid = D``.

    Feature ids are mapped to names through ``schema``; ids missing from the
    schema keep their numeric id as the name.
    """
    schema = {str(k): v for k, v in (schema or {}).items()}
    docid_re = re.compile(re.escape(docid_key) + r"\s*=\s*(\S+)")
    records = []
    names_ref = None
    for lineno, line in enumerate(_lines(src), start=1):
        body, sep, tail = line.partition(comment)
        parts = body.split()
        if not parts:
            continue
        try:
            label = int(float(parts[0]))
        except ValueError:
            raise InputError(f"bad label {parts[0]!r}", line=lineno, source=source) from None
        if len(parts) < 2 or not parts[1].startswith("qid:"):
            raise InputError("missing 'qid:' token", line=lineno, source=source)
        qid = parts[1][4:]
        if not qid:
            raise InputError("empty qid", line=lineno, source=source)
        feats = OrderedDict()
        for tok in parts[2:]:
            fid, colon, val = tok.partition(":")
            if not colon:
                raise InputError(f"bad feature token {tok!r}", line=lineno, source=source)
            feats[schema.get(fid, fid)] = _as_float(val, f"value for feature {fid}", lineno, source)
        m = docid_re.search(tail) if sep else None
        if m is None:
            raise InputError(f"no '{docid_key} = ...' in trailing comment", line=lineno, source=source)
        names = tuple(feats)
        if names_ref is None:
            names_ref = names
        elif set(names) != set(names_ref):
            raise InputError("feature set differs from the first record", line=lineno, source=source)
        records.append(FeatureRecord(qid, m.group(1), label, feats))
    return records


# ---------------------------------------------------------------------------
# tabular forms


@dataclass(frozen=True)
class VariableMatrix:
    """Named numeric columns over ``n`` rows.

    ``labels`` carries optional non-numeric row identifiers (query and
    document ids) that travel with the rows but never enter computations.
    """

    names: tuple
    data: np.ndarray
    labels: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        data = np.array(self.data, dtype=float, copy=True)
        if data.ndim == 1:
            data = data.reshape(-1, 1)
        names = tuple(self.names)
        if data.shape[1] != len(names):
            raise ValueError(f"{len(names)} names for {data.shape[1]} columns")
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")
        if data.shape[0] < 1:
            raise ValueError("a VariableMatrix needs at least one row")
        for key, col in self.labels.items():
            if len(col) != data.shape[0]:
                raise ValueError(f"label column {key!r} has wrong length")
        data.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", {k: tuple(v) for k, v in self.labels.items()})

    @classmethod
    def from_columns(cls, columns: Mapping[str, Sequence[float]], labels=None) -> "VariableMatrix":
        names = tuple(columns)
        data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
        return cls(names, data, labels or {})

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.index(name)]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no variable named {name!r}") from None

    def select(self, names: Sequence[str]) -> "VariableMatrix":
        idx = [self.index(k) for k in names]
        return VariableMatrix(tuple(names), self.data[:, idx], self.labels)

    def drop(self, names: Iterable[str]) -> "VariableMatrix":
        gone = set(names)
        return self.select([k for k in self.names if k not in gone])

    def replace(self, updates: Mapping[str, np.ndarray]) -> "VariableMatrix":
        data = np.array(self.data)
        for k, col in updates.items():
            data[:, self.index(k)] = col
        return VariableMatrix(self.names, data, self.labels)

    def with_column(self, name: str, values) -> "VariableMatrix":
        data = np.column_stack([self.data, np.asarray(values, dtype=float)])
        return VariableMatrix(self.names + (name,), data, self.labels)

    def rows_where(self, mask) -> "VariableMatrix":
        mask = np.asarray(mask, dtype=bool)
        labels = {k: tuple(v for v, keep in zip(col, mask) if keep) for k, col in self.labels.items()}
        return VariableMatrix(self.names, self.data[mask], labels)

    def groups(self, label: str) -> "OrderedDict[str, VariableMatrix]":
        """Split rows by a label column, groups ordered by key ascending."""
        keys = self.labels[label]
        out = OrderedDict()
        for key in sorted(set(keys)):
            out[key] = self.rows_where([k == key for k in keys])
        return out

    def variances(self) -> np.ndarray:
        return self.data.var(axis=0, ddof=1) if self.n > 1 else np.zeros(len(self.names))


@dataclass(frozen=True)
class JoinedRow:
    query_id: str
    doc_id: str
    rank: int | None
    score: float | None
    qrel: int
    features: tuple


@dataclass(frozen=True)
class JoinedTable:
    rows: tuple
    feature_names: tuple

    def to_matrix(self) -> VariableMatrix:
        """Numeric view: rank, score, qrel and every feature, ids as labels."""
        if not self.rows:
            raise InputError("joined table is empty")
        cols = OrderedDict()
        cols["rank"] = [r.rank for r in self.rows]
        cols["score"] = [r.score for r in self.rows]
        cols["qrel"] = [r.qrel for r in self.rows]
        for j, name in enumerate(self.feature_names):
            cols[name] = [r.features[j] for r in self.rows]
        labels = {"query_id": [r.query_id for r in self.rows],
                  "doc_id": [r.doc_id for r in self.rows]}
        return VariableMatrix.from_columns(cols, labels)


@dataclass(frozen=True)
class JoinDiagnostics:
    joined: int
    dropped: int
    unjudged: int

    def summary(self) -> str:
        return f"joined={self.joined} dropped={self.dropped} unjudged_defaulted={self.unjudged}"


def join(run: Sequence[RunRecord], qrels: Sequence[QrelRecord],
         feats: Sequence[FeatureRecord]) -> tuple[JoinedTable, JoinDiagnostics]:
    """Link every run record to its feature record on (query_id, doc_id).

    Unjudged documents take qrel 0. Run records without a feature match are
    dropped and counted.
    """
    rel = {(q.query_id, q.doc_id): q.qrel for q in qrels}
    by_key = {(f.query_id, f.doc_id): f for f in feats}
    names = tuple(feats[0].features) if feats else ()
    rows = []
    dropped = unjudged = 0
    for r in run:
        key = (r.query_id, r.doc_id)
        f = by_key.get(key)
        if f is None:
            dropped += 1
            continue
        if key not in rel:
            unjudged += 1
        rows.append(JoinedRow(r.query_id, r.doc_id, r.rank, r.score, rel.get(key, 0),
                              tuple(f.features[k] for k in names)))
    return JoinedTable(tuple(rows), names), JoinDiagnostics(len(rows), dropped, unjudged)


def aggregate_by_query(table: JoinedTable, effectiveness: Mapping[str, float],
                       name: str = "effectiveness") -> VariableMatrix:
    """Average every feature per query and attach the query's effectiveness."""
    by_query: dict[str, list] = {}
    for row in table.rows:
        by_query.setdefault(row.query_id, []).append(row.features)
    qids = sorted(by_query)
    missing = [q for q in qids if q not in effectiveness]
    if missing:
        raise InputError(f"no effectiveness value for query {missing[0]!r}")
    means = np.array([np.mean(np.array(by_query[q], dtype=float), axis=0) for q in qids])
    means = means.reshape(len(qids), len(table.feature_names))
    eff = np.array([effectiveness[q] for q in qids], dtype=float)
    return VariableMatrix(table.feature_names + (name,), np.column_stack([means, eff]),
                          {"query_id": qids})


def write_table(m: VariableMatrix, dest) -> None:
    """Write comma-separated values with a header row; labels come first."""
    def _emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        label_keys = [k for k in ID_COLUMNS if k in m.labels] + \
            [k for k in m.labels if k not in ID_COLUMNS]
        w.writerow(label_keys + list(m.names))
        for i in range(m.n):
            w.writerow([m.labels[k][i] for k in label_keys] + [repr(float(x)) for x in m.data[i]])

    if hasattr(dest, "write"):
        _emit(dest)
    else:
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            _emit(fh)


def read_table(src, source=None) -> VariableMatrix:
    """Read a CSV written by :func:`write_table` (or any numeric CSV).

    ``query_id``/``doc_id`` columns become labels; any other non-numeric
    cell is an error.
    """
    if isinstance(src, (str, Path)) and not (isinstance(src, str) and "\n" in src):
        source = source or str(src)
        try:
            with open(src, encoding="utf-8", newline="") as fh:
                rows = list(csv.reader(fh))
        except OSError as exc:
            raise InputError(f"cannot read {src}: {exc.strerror}") from None
    else:
        rows = list(csv.reader(io.StringIO(src) if isinstance(src, str) else src))
    rows = [r for r in rows if r]
    if len(rows) < 2:
        raise InputError("table needs a header and at least one row", source=source)
    header = [h.strip() for h in rows[0]]
    label_idx = [j for j, h in enumerate(header) if h in ID_COLUMNS]
    num_idx = [j for j, h in enumerate(header) if h not in ID_COLUMNS]
    data = np.empty((len(rows) - 1, len(num_idx)))
    for i, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise InputError(f"expected {len(header)} cells, got {len(row)}", line=i + 2, source=source)
        for jj, j in enumerate(num_idx):
            data[i, jj] = _as_float(row[j], f"cell in column {header[j]!r}", i + 2, source)
    labels = {header[j]: tuple(r[j] for r in rows[1:]) for j in label_idx}
    return VariableMatrix(tuple(header[j] for j in num_idx), data, labels)


# ---------------------------------------------------------------------------
# covariance input


@dataclass(frozen=True)
class CovInput:
    """Sample covariance (or correlation) matrix over named variables."""

    names: tuple
    cov: np.ndarray
    n: int
    is_correlation: bool = False

    def __post_init__(self):
        cov = np.array(self.cov, dtype=float, copy=True)
        names = tuple(self.names)
        if cov.shape != (len(names), len(names)):
            raise InputError(f"matrix shape {cov.shape} does not match {len(names)} names")
        if self.n < 2:
            raise InputError(f"sample size must be >= 2, got {self.n}")
        if not np.all(np.isfinite(cov)):
            raise InputError("covariance matrix has non-finite entries")
        asym = np.max(np.abs(cov - cov.T)) if cov.size else 0.0
        if asym > 1e-9:
            raise InputError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
        if np.any(np.diag(cov) <= 0):
            bad = names[int(np.argmin(np.diag(cov)))]
            raise InputError(f"non-positive variance for {bad!r}")
        cov = (cov + cov.T) / 2.0
        cov.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "n", int(self.n))

    def sub(self, names: Sequence[str]) -> "CovInput":
        try:
            idx = [self.names.index(k) for k in names]
        except ValueError as exc:
            raise KeyError(str(exc)) from None
        return CovInput(tuple(names), self.cov[np.ix_(idx, idx)], self.n, self.is_correlation)


def covariance(m: VariableMatrix, kind: str = "covariance") -> CovInput:
    """Unbiased sample covariance (divisor n-1) or Pearson correlation."""
    if m.n < 2:
        raise InputError("covariance needs at least 2 rows")
    if kind not in ("covariance", "correlation"):
        raise ValueError(f"unknown kind {kind!r}")
    x = m.data - m.data.mean(axis=0)
    cov = x.T @ x / (m.n - 1)
    if kind == "covariance":
        return CovInput(m.names, cov, m.n, False)
    sd = np.sqrt(np.diag(cov))
    for name, s in zip(m.names, sd):
        if s == 0:
            raise InputError(f"column {name!r} has zero variance; correlation undefined")
    corr = cov / np.outer(sd, sd)
    np.fill_diagonal(corr, 1.0)
    return CovInput(m.names, np.clip(corr, -1.0, 1.0), m.n, True)


def write_cov(c: CovInput, dest) -> None:
    """Write the covariance file layout: ``n=<N> [correlation]``, names, rows."""
    head = f"n={c.n}" + (" correlation" if c.is_correlation else "")
    lines = [head, " ".join(c.names)]
    lines += [" ".join(repr(float(x)) for x in row) for row in c.cov]
    text = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text, encoding="utf-8")


def read_cov(src, source=None) -> CovInput:
    if isinstance(src, Path) or (isinstance(src, str) and "\n" not in src and Path(src).exists()):
        source = source or str(src)
        text = Path(src).read_text(encoding="utf-8")
    elif isinstance(src, str) and "\n" not in src:
        raise InputError(f"cannot read {src}: no such file")
    elif isinstance(src, str):
        text = src
    else:
        text = src.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise InputError("covariance file needs a header and a names line", source=source)
    head = lines[0].split()
    if not head or not head[0].startswith("n="):
        raise InputError("first line must start with 'n=<sample size>'", line=1, source=source)
    try:
        n = int(head[0][2:])
    except ValueError:
        raise InputError(f"bad sample size {head[0]!r}", line=1, source=source) from None
    flags = head[1:]
    if any(f != "correlation" for f in flags):
        raise InputError(f"unknown header flag in {lines[0]!r}", line=1, source=source)
    names = lines[1].split()
    rows = lines[2:]
    if len(rows) != len(names):
        raise InputError(f"{len(names)} names but {len(rows)} matrix rows", source=source)
    mat = np.empty((len(names), len(names)))
    for i, ln in enumerate(rows):
        cells = ln.split()
        if len(cells) != len(names):
            raise InputError(f"row has {len(cells)} cells, expected {len(names)}", line=i + 3, source=source)
        for j, tok in enumerate(cells):
            mat[i, j] = _as_float(tok, "matrix cell", i + 3, source)
    try:
        return CovInput(tuple(names), mat, n, bool(flags))
    except InputError as exc:
        raise InputError(str(exc), source=source) from None
