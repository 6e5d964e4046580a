"""Model specification language.

One statement per line, ``#`` starts a comment::

    Y <- X1 + X2 + X3          # regression, outcome on the left
    A -> X4 + X6               # measurement, latent on the left
    A <-> B                    # free covariance
    L -> 1*X1 + X2             # fixed loading
    var(L) = 1                 # fixed (residual) variance

A name is latent exactly when it appears on the left of ``->``. A chain
such as "qrel causes eliteness which causes log tfsum" is written as a
regression of the latent on the manifest plus a measurement from the
latent::

    eliteness <- qrel
    eliteness -> logtfsum
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InputError, ModelSyntaxError, SpecificationError

_NAME = r"[A-Za-z_][A-Za-z0-9_.]*"
_NAME_RE = re.compile(rf"^{_NAME}$")
_VAR_RE = re.compile(rf"^var\(\s*({_NAME})\s*\)\s*=\s*(\S+)$")
_OP_RE = re.compile(r"(<->|<-|->)")
_BAD_OP_RE = re.compile(r"=~|~~|~|:=|==|<=|=>|=")


@dataclass(frozen=True)
class Term:
    name: str
    value: float | None = None  # None = free

    def __str__(self):
        return self.name if self.value is None else f"{format_value(self.value)}*{self.name}"


@dataclass(frozen=True)
class Regression:
    outcome: str
    predictors: tuple
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Measurement:
    latent: str
    indicators: tuple
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Covariance:
    left: str
    right: str
    value: float | None = None
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class VarianceFix:
    name: str
    value: float
    line: int | None = field(default=None, compare=False)


def format_value(v: float) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


@dataclass(frozen=True, eq=False)
class SemModel:
    regressions: tuple = ()
    measurements: tuple = ()
    covariances: tuple = ()
    variance_fixes: tuple = ()

    # -- structure ---------------------------------------------------------

    @property
    def latents(self) -> tuple:
        out = []
        for m in self.measurements:
            if m.latent not in out:
                out.append(m.latent)
        return tuple(out)

    @property
    def manifests(self) -> tuple:
        """Observed names in order of first appearance."""
        lat = set(self.latents)
        seen = []

        def add(name):
            if name not in lat and name not in seen:
                seen.append(name)

        for r in self.regressions:
            add(r.outcome)
            for t in r.predictors:
                add(t.name)
        for m in self.measurements:
            for t in m.indicators:
                add(t.name)
        for c in self.covariances:
            add(c.left)
            add(c.right)
        for v in self.variance_fixes:
            add(v.name)
        return tuple(seen)

    def edges(self):
        """Directed (source, target, clause) triples of the structural graph."""
        for r in self.regressions:
            for t in r.predictors:
                yield t.name, r.outcome, r
        for m in self.measurements:
            for t in m.indicators:
                yield m.latent, t.name, m

    @property
    def endogenous(self) -> tuple:
        targets = []
        for _, dst, _ in self.edges():
            if dst not in targets:
                targets.append(dst)
        return tuple(targets)

    def fixed_variance(self, name: str) -> float | None:
        for v in self.variance_fixes:
            if v.name == name:
                return v.value
        return None

    # -- equality ------------------------------------------------------------

    def canonical(self):
        regs = tuple(sorted((r.outcome, r.predictors) for r in self.regressions))
        meas = tuple(sorted((m.latent, m.indicators) for m in self.measurements))
        covs = tuple(sorted((c.left, c.right, c.value if c.value is not None else float("nan"))
                            for c in self.covariances))
        covs = tuple((a, b, None if v != v else v) for a, b, v in covs)
        fixes = tuple(sorted((v.name, v.value) for v in self.variance_fixes))
        return regs, meas, covs, fixes

    def __eq__(self, other):
        if not isinstance(other, SemModel):
            return NotImplemented
        return self.canonical() == other.canonical()

    def __hash__(self):
        return hash(self.canonical())


# ---------------------------------------------------------------------------
# parsing


def _parse_terms(rhs: str, lineno: int) -> list[Term]:
    terms = []
    for raw in rhs.split("+"):
        raw = raw.strip()
        if not raw:
            raise ModelSyntaxError("empty term", lineno)
        value = None
        if "*" in raw:
            val_tok, _, name = raw.partition("*")
            name = name.strip()
            try:
                value = float(val_tok.strip())
            except ValueError:
                raise ModelSyntaxError(f"bad fixed value {val_tok.strip()!r}", lineno) from None
        else:
            name = raw
        if not _NAME_RE.match(name):
            raise ModelSyntaxError(f"bad variable name {name!r}", lineno)
        if any(t.name == name for t in terms):
            raise ModelSyntaxError(f"{name!r} appears twice in one statement", lineno)
        terms.append(Term(name, value))
    return terms


def _merge_terms(existing: list[Term], new: list[Term], lhs: str, lineno: int):
    for t in new:
        prev = next((e for e in existing if e.name == t.name), None)
        if prev is None:
            existing.append(t)
        elif prev.value != t.value:
            raise ModelSyntaxError(f"conflicting values for {lhs} / {t.name}", lineno)


def parse_model(text: str, check: bool = True) -> SemModel:
    """Parse model text into a :class:`SemModel`.

    With ``check`` (the default) structural problems that make the model
    meaningless regardless of data (cycles, latents without indicators) are
    raised as :class:`SpecificationError`.
    """
    regs: dict[str, list] = {}
    reg_line: dict[str, int] = {}
    meas: dict[str, list] = {}
    meas_line: dict[str, int] = {}
    covs: dict[frozenset, Covariance] = {}
    fixes: dict[str, VarianceFix] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        vm = _VAR_RE.match(line)
        if vm:
            name, tok = vm.groups()
            try:
                value = float(tok)
            except ValueError:
                raise ModelSyntaxError(f"bad variance value {tok!r}", lineno) from None
            if name in fixes and fixes[name].value != value:
                raise ModelSyntaxError(f"conflicting variance values for {name!r}", lineno)
            fixes.setdefault(name, VarianceFix(name, value, lineno))
            continue
        parts = _OP_RE.split(line)
        if len(parts) == 1:
            bad = _BAD_OP_RE.search(line)
            what = f"unknown operator {bad.group(0)!r}" if bad else "missing operator"
            raise ModelSyntaxError(what, lineno)
        if len(parts) != 3:
            raise ModelSyntaxError("one operator per statement", lineno)
        lhs, op, rhs = (s.strip() for s in parts)
        if not _NAME_RE.match(lhs):
            bad = _BAD_OP_RE.search(lhs)
            raise ModelSyntaxError(f"unknown operator {bad.group(0)!r}" if bad
                                   else f"bad left-hand side {lhs!r}", lineno)
        if not rhs:
            if op == "->":
                raise SpecificationError(f"line {lineno}: latent {lhs!r} has no indicators")
            raise ModelSyntaxError("empty right-hand side", lineno)
        terms = _parse_terms(rhs, lineno)
        if op == "<-":
            _merge_terms(regs.setdefault(lhs, []), terms, lhs, lineno)
            reg_line.setdefault(lhs, lineno)
        elif op == "->":
            _merge_terms(meas.setdefault(lhs, []), terms, lhs, lineno)
            meas_line.setdefault(lhs, lineno)
        else:
            for t in terms:
                if t.name == lhs:
                    raise ModelSyntaxError(f"use var({lhs}) = value for a variance", lineno)
                key = frozenset((lhs, t.name))
                if key in covs and covs[key].value != t.value:
                    raise ModelSyntaxError(f"conflicting values for {lhs} <-> {t.name}", lineno)
                covs.setdefault(key, Covariance(lhs, t.name, t.value, lineno))
    model = SemModel(
        regressions=tuple(Regression(k, tuple(v), reg_line[k]) for k, v in regs.items()),
        measurements=tuple(Measurement(k, tuple(v), meas_line[k]) for k, v in meas.items()),
        covariances=tuple(covs.values()),
        variance_fixes=tuple(fixes.values()),
    )
    if check:
        cyc = find_cycle(model)
        if cyc:
            raise SpecificationError("structural graph has a cycle: " + " -> ".join(cyc),
                                     [_cycle_message(cyc)])
    return model


def find_cycle(m: SemModel) -> list[str] | None:
    """Return one directed cycle as a closed name list, or ``None``."""
    graph: dict[str, list[str]] = {}
    for src, dst, _ in m.edges():
        graph.setdefault(src, []).append(dst)
    state: dict[str, int] = {}
    stack: list[str] = []

    def visit(node):
        state[node] = 1
        stack.append(node)
        for nxt in graph.get(node, []):
            if state.get(nxt) == 1:
                return stack[stack.index(nxt):] + [nxt]
            if nxt not in state:
                found = visit(nxt)
                if found:
                    return found
        stack.pop()
        state[node] = 2
        return None

    for node in list(graph):
        if node not in state:
            found = visit(node)
            if found:
                return found
    return None


def _cycle_message(cyc):
    return "cycle in structural graph: " + " -> ".join(cyc)


def scale_setting(m: SemModel) -> dict[str, tuple]:
    """How each latent gets its scale.

    Returns ``latent -> ("default", indicator)`` when the first indicator's
    loading will be fixed to 1, ``("user", None)`` when a nonzero loading or
    positive variance is fixed by the user, and ``("none", reason)`` when
    user fixes leave the scale undetermined.
    """
    out = {}
    for meas in m.measurements:
        lat = meas.latent
        fixed = [t for t in meas.indicators if t.value is not None]
        var = m.fixed_variance(lat)
        if not fixed and var is None:
            out[lat] = ("default", meas.indicators[0].name)
        elif any(t.value != 0 for t in fixed) or (var is not None and var > 0):
            out[lat] = ("user", None)
        else:
            out[lat] = ("none", "all fixed loadings are zero" if fixed else "variance fixed to a non-positive value")
    return out


def validate(m: SemModel, data_names) -> list[str]:
    """Human-readable problems with ``m`` against the available data columns.

    An empty list means every manifest exists in the data, no latent name
    clashes with a data column, the structural graph is acyclic and every
    latent's scale can be set.
    """
    data_names = set(data_names)
    latents = set(m.latents)
    found: list[tuple] = []  # (line, clause order, message)

    def add(line, msg):
        prefix = f"line {line}: " if line is not None else ""
        found.append((line if line is not None else float("inf"), len(found), prefix + msg))

    clauses = sorted(
        list(m.measurements) + list(m.regressions) + list(m.covariances) + list(m.variance_fixes),
        key=lambda c: c.line if c.line is not None else float("inf"),
    )
    for c in clauses:
        if isinstance(c, Regression):
            names, label = [c.outcome] + [t.name for t in c.predictors], f"regression of {c.outcome}"
        elif isinstance(c, Measurement):
            names, label = [t.name for t in c.indicators], f"measurement of {c.latent}"
            if not c.indicators:
                add(c.line, f"latent {c.latent!r} has no indicators")
            if c.latent in data_names:
                add(c.line, f"latent {c.latent!r} is also a data column")
        elif isinstance(c, Covariance):
            names, label = [c.left, c.right], f"covariance {c.left} <-> {c.right}"
        else:
            names, label = [c.name], f"variance fix of {c.name}"
        for name in names:
            if name not in latents and name not in data_names:
                add(c.line, f"{label}: variable {name!r} not found in data")
    cyc = find_cycle(m)
    if cyc:
        lines = [cl.line for s, d, cl in m.edges()
                 if s in cyc and d in cyc and cl.line is not None]
        add(min(lines) if lines else None, _cycle_message(cyc))
    for lat, (kind, why) in scale_setting(m).items():
        if kind == "none":
            meas = next(x for x in m.measurements if x.latent == lat)
            add(meas.line, f"scale of latent {lat!r} cannot be set: {why}")
    found.sort(key=lambda t: (t[0], t[1]))
    return [msg for _, _, msg in found]


def serialize(m: SemModel) -> str:
    """Canonical text: measurements, regressions, covariances, variance fixes,
    each group sorted by its left-hand name."""
    lines = []
    for meas in sorted(m.measurements, key=lambda x: x.latent):
        lines.append(f"{meas.latent} -> " + " + ".join(str(t) for t in meas.indicators))
    for r in sorted(m.regressions, key=lambda x: x.outcome):
        lines.append(f"{r.outcome} <- " + " + ".join(str(t) for t in r.predictors))
    for c in sorted(m.covariances, key=lambda x: (x.left, x.right)):
        lines.append(f"{c.left} <-> {Term(c.right, c.value)}")
    for v in sorted(m.variance_fixes, key=lambda x: x.name):
        lines.append(f"var({v.name}) = {format_value(v.value)}")
    return "\n".join(lines) + ("\n" if lines else "")


def load_model(path) -> SemModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read model {path}: {exc.strerror}") from None
    return parse_model(text)
