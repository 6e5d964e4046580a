"""Command-line entry point ``irsem``.

Exit statuses: 0 success, 2 input or parse error, 3 preparation failure,
4 specification or validation error, 5 estimation failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import corpus_io as cio
from . import ir_metrics as irm
from . import prep
from . import report as rep
from .errors import (EstimationError, InputError, IrsemError, NotNestedError, PrepError,
                     SpecificationError)
from .model_dsl import load_model, parse_model, serialize
from .sem_engine import (EstimateOptions, FitResult, build_ram, compare_nested, estimate,
                         information_comparison)

log = logging.getLogger("irsem")

EXIT_OK, EXIT_INPUT, EXIT_PREP, EXIT_SPEC, EXIT_ESTIMATION = 0, 2, 3, 4, 5

# options that only affect where or how output is written, never its content
_PRESENTATION = {"out", "format", "quiet", "config", "parallel", "command", "func", "action",
                 "table_out", "cov_out"}
# options naming input files; reported through their digests
_INPUTS = {"run", "qrels", "features", "schema", "table", "cov", "model", "termstats",
           "keep_list", "likelihood", "full", "restricted"}


def _csv_list(text):
    return [t for t in (s.strip() for s in str(text).replace(",", " ").split()) if t]


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _read_config(path) -> dict:
    """``key = value`` lines; ``#`` comments; keys use flag names."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise InputError("expected 'key = value'", lineno, str(path))
        out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def _apply_config(sub: argparse.ArgumentParser, values: dict, source) -> None:
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        act = actions.get(key)
        if act is None or key in ("help", "config"):
            raise InputError(f"unknown config key {key!r}", source=str(source))
        try:
            if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                flag = raw.lower() in ("1", "true", "yes", "on")
                if not flag and raw.lower() not in ("0", "false", "no", "off"):
                    raise ValueError(raw)
                defaults[key] = flag if isinstance(act, argparse._StoreTrueAction) else not flag
            elif act.type is not None:
                defaults[key] = act.type(raw)
            else:
                defaults[key] = raw
        except (ValueError, argparse.ArgumentTypeError):
            raise InputError(f"bad value {raw!r} for config key {key!r}", source=str(source)) from None
        if act.choices is not None and defaults[key] not in act.choices:
            raise InputError(f"config key {key!r} must be one of {sorted(act.choices)}",
                             source=str(source))
    sub.set_defaults(**defaults)


# -- shared plumbing --------------------------------------------------------

def _config_echo(args) -> dict:
    d = {}
    for k, v in sorted(vars(args).items()):
        if k in _PRESENTATION or k in _INPUTS:
            continue
        d[k] = list(v) if isinstance(v, (list, tuple)) else v
    return d


def _digests(args) -> dict:
    out = {}
    for k in sorted(_INPUTS):
        p = getattr(args, k, None)
        if p:
            out[k] = rep.file_digest(p)
    return out


def _require_file(path, what):
    if path is None:
        raise InputError(f"missing --{what}")
    if not Path(path).is_file():
        raise InputError(f"{what} file not found: {path}")
    return path


def _emit(args, doc: dict, text: str) -> None:
    body = rep.to_machine(doc) if args.format == "machine" else text.rstrip("\n") + "\n"
    if args.out:
        Path(args.out).write_text(body, encoding="utf-8")
    else:
        sys.stdout.write(body)


def _load_matrix_or_cov(args):
    """Returns (VariableMatrix or None, CovInput or None)."""
    if bool(args.table) == bool(args.cov):
        raise InputError("give exactly one of --table or --cov")
    if args.table:
        return cio.read_table(_require_file(args.table, "table")), None
    return None, cio.read_cov(Path(_require_file(args.cov, "cov")))


# -- join -------------------------------------------------------------------

def cmd_join(args) -> int:
    run = cio.parse_run(Path(_require_file(args.run, "run")).read_text(encoding="utf-8"),
                        source=args.run)
    qrels = []
    if args.qrels:
        qrels = cio.parse_qrels(Path(_require_file(args.qrels, "qrels")).read_text(encoding="utf-8"),
                                source=args.qrels)
    schema = cio.parse_schema(Path(_require_file(args.schema, "schema")).read_text(encoding="utf-8"),
                              source=args.schema)
    feats = cio.parse_features(Path(_require_file(args.features, "features")).read_text(encoding="utf-8"),
                               schema, docid_key=args.docid_key, source=args.features)
    table, diag = cio.join(run, qrels, feats)
    m = table.to_matrix()
    y = [irm.doc_precision(int(q), int(r)) for q, r in zip(m.column("qrel"), m.column("rank"))]
    m = m.with_column("docprec", y)
    if args.table_out:
        cio.write_table(m, args.table_out)
    result = {"joined": diag.joined, "dropped": diag.dropped, "unjudged_defaulted": diag.unjudged,
              "columns": list(m.names), "rows": m.n}
    doc = rep.envelope("join", _config_echo(args), _digests(args), result,
                       {"docprec": irm.DOC_PRECISION_FORMULA})
    text = "\n".join([diag.summary(), f"columns: {' '.join(m.names)}",
                      f"docprec = {irm.DOC_PRECISION_FORMULA}"])
    _emit(args, doc, text)
    return EXIT_OK


# -- prep -------------------------------------------------------------------

def _moments_dict(m) -> dict:
    out = {}
    for k, mo in prep.moments(m).items():
        out[k] = {"mean": mo.mean, "variance": mo.variance, "skewness": mo.skewness,
                  "kurtosis": mo.kurtosis}
    return out


def cmd_prep(args) -> int:
    m = cio.read_table(_require_file(args.table, "table"))
    passthrough = [c for c in args.passthrough if c in m.names]
    endogenous = [c for c in args.endogenous if c in m.names]
    fixed = set(passthrough) | set(endogenous)
    features = [c for c in m.names if c not in fixed]
    before = _moments_dict(m)
    result: dict = {"stages": []}

    # 1. collinearity
    if args.no_collinearity:
        result["collinearity"] = None
    else:
        keep = prep.read_keep_list(Path(_require_file(args.keep_list, "keep-list")).read_text(
            encoding="utf-8")) if args.keep_list else None
        sub = m.select(features)
        zero = [c for c in features if not sub.column(c).var(ddof=1) > 0]
        live = sub.drop(zero) if zero else sub
        rpt = prep.collinearity(live, args.collinearity_threshold, keep)
        m = m.drop(rpt.ignored)
        features = [c for c in features if c not in rpt.ignored]
        result["collinearity"] = rpt.as_dict()
        result["stages"].append("collinearity")

    # 2. outliers
    if args.no_outliers:
        result["outliers"] = None
    else:
        m, counts = prep.outliers_to_mean(m, args.outlier_z, features)
        result["outliers"] = {"z_threshold": args.outlier_z, "replaced": counts}
        result["stages"].append("outliers")

    # 3. log shift
    targets = features if args.log_shift == ["all"] else list(args.log_shift)
    bad = [t for t in targets if t not in features]
    if bad:
        raise PrepError(f"log-shift targets are not feature columns: {bad}")
    if targets:
        m = prep.log_shift(m, targets)
        result["stages"].append("log_shift")
    result["log_shift"] = {"targets": targets, "formula": prep.LOG_SHIFT_FORMULA}

    # 4. rescale
    if args.no_rescale:
        result["rescale"] = None
    else:
        cols = [c for c in m.names if c not in passthrough]
        m, mult = prep.rescale_variances(m, args.max_ratio, cols)
        var = np.array([m.column(c).var(ddof=1) for c in cols])
        result["rescale"] = {"max_ratio": args.max_ratio, "multipliers": mult,
                             "final_ratio": float(var.max() / var.min())}
        result["stages"].append("rescale")

    result["moments_before"] = before
    result["moments_after"] = _moments_dict(m)
    result["columns"] = list(m.names)
    if args.table_out:
        cio.write_table(m, args.table_out)
    doc = rep.envelope("prep", _config_echo(args), _digests(args), result,
                       {"log_shift": prep.LOG_SHIFT_FORMULA,
                        "outlier": "|x - mean| > z * sd(n-1) -> mean",
                        "rescale": "double min-variance column while max/min variance > max_ratio"})
    lines = [f"stages: {' -> '.join(result['stages']) or 'none'}"]
    if result["collinearity"]:
        c = result["collinearity"]
        lines.append(f"collinearity (|r| >= {c['threshold']}): kept {c['kept']} ignored {c['ignored']}")
    if result["outliers"]:
        hit = ", ".join(f"{k}={v}" for k, v in result["outliers"]["replaced"].items() if v)
        lines.append(f"outliers replaced: {hit or 'none'}")
    lines.append(f"log-shift {prep.LOG_SHIFT_FORMULA} on: {', '.join(targets) or 'none'}")
    if result["rescale"]:
        r = result["rescale"]
        changed = {k: v for k, v in r["multipliers"].items() if v != 1}
        lines.append(f"rescale multipliers: {changed or 'none'}; final variance ratio "
                     f"{r['final_ratio']:.4g} (max {r['max_ratio']})")
    rows = []
    for k in m.names:
        b, a = before.get(k), result["moments_after"][k]
        rows.append((k, b and b["variance"], a["variance"], a["skewness"], a["kurtosis"]))
    lines.append("")
    lines.append(rep.table(("variable", "var before", "var after", "skew", "ex. kurt"), rows))
    _emit(args, doc, "\n".join(lines))
    return EXIT_OK


# -- fit --------------------------------------------------------------------

def _fit_one(model_text: str, names, cov, n, is_corr, opts: dict) -> dict:
    """Fit worker; picklable arguments so it can run in a subprocess."""
    model = parse_model(model_text)
    data = cio.CovInput(tuple(names), np.asarray(cov), n, is_corr)
    ram = build_ram(model, data.names)
    try:
        res = estimate(ram, data, EstimateOptions(**opts))
    except (EstimationError, SpecificationError) as exc:
        return {"error": str(exc), "exit": exc.exit_code}
    return res.as_dict()


def _data_for_model(model, m, c, correlation: bool):
    """Covariance over the model's manifest variables, validated first."""
    names = m.names if m is not None else c.names
    ram = build_ram(model, names)
    if m is not None:
        sub = m.select(ram.manifests)
        for k in ram.manifests:
            if not sub.column(k).var(ddof=1) > 0:
                raise EstimationError(f"variable {k!r} has zero variance in the data")
        return cio.covariance(sub, "correlation" if correlation else "covariance")
    return c.sub(ram.manifests)


def cmd_fit(args) -> int:
    model_path = _require_file(args.model, "model")
    model = load_model(model_path)
    m, c = _load_matrix_or_cov(args)
    opts = EstimateOptions(max_iter=args.max_iter, gtol=args.gtol).as_dict()
    text = serialize(model)
    formulas = {
        "chisq": "(n - 1) * F_ML",
        "F_ML": "ln|Sigma| - ln|S| + tr(S Sigma^-1) - p",
        "rmsea": "sqrt(max(chisq - df, 0) / (df (n - 1)))",
        "se": "sqrt(diag(2/(n-1) * H^-1)), H numerical Hessian of F_ML",
    }
    if args.group_by:
        if m is None:
            raise InputError("--group-by needs --table input")
        if args.group_by not in m.labels:
            raise InputError(f"no label column {args.group_by!r} in table")
        jobs, keys = [], []
        for key, g in m.groups(args.group_by).items():
            data = _data_for_model(model, g, None, args.correlation)
            keys.append(key)
            jobs.append((text, data.names, data.cov, data.n, data.is_correlation, opts))
        if args.parallel and len(jobs) > 1:
            with ProcessPoolExecutor() as pool:
                fits = list(pool.map(_fit_one, *zip(*jobs)))
        else:
            fits = [_fit_one(*j) for j in jobs]
        results = dict(zip(keys, fits))
        result = {"group_by": args.group_by, "groups": {k: results[k] for k in sorted(results)}}
        failed = sorted(k for k, f in results.items() if "error" in f or not f["convergence"]["converged"])
        result["failed_groups"] = failed
        blocks = []
        for k in sorted(results):
            f = results[k]
            if "error" in f:
                blocks.append(f"{args.group_by} = {k}\nerror: {f['error']}")
            else:
                blocks.append(rep.render_fit(f, f"{args.group_by} = {k}"))
        doc = rep.envelope("fit", _config_echo(args), _digests(args), result, formulas)
        _emit(args, doc, "\n\n".join(blocks))
        if failed:
            log.error("estimation failed for %s: %s", args.group_by, ", ".join(failed))
            return EXIT_ESTIMATION
        return EXIT_OK

    data = _data_for_model(model, m, c, args.correlation)
    ram = build_ram(model, data.names)
    res = estimate(ram, data, EstimateOptions(**opts))
    d = res.as_dict()
    doc = rep.envelope("fit", _config_echo(args), _digests(args), d, formulas, res.warnings)
    _emit(args, doc, rep.render_fit(d, f"model {Path(model_path).name}"))
    if not res.converged:
        return EXIT_ESTIMATION
    return EXIT_OK


# -- compare ----------------------------------------------------------------

def _load_fit_report(path):
    try:
        doc = rep.from_machine(Path(_require_file(path, "report")).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise InputError(f"{path}: not a machine-readable report ({exc})") from None
    if doc.get("command") != "fit" or "parameters" not in doc.get("result", {}):
        raise InputError(f"{path}: not a single-model fit report")
    return doc


def _data_digest(doc):
    inputs = doc.get("inputs", {})
    for k in ("table", "cov"):
        if k in inputs:
            return inputs[k]["sha256"]
    return None


def cmd_compare(args) -> int:
    full_doc = _load_fit_report(args.full)
    restr_doc = _load_fit_report(args.restricted)
    if _data_digest(full_doc) != _data_digest(restr_doc):
        raise SpecificationError("the two fit reports were computed on different data (digest mismatch)")
    full = FitResult.from_dict(full_doc["result"])
    restr = FitResult.from_dict(restr_doc["result"])
    try:
        cmp = compare_nested(full, restr)
        result = {"kind": "nested", **cmp.as_dict()}
        text = (f"chi-square difference: {cmp.delta_chisq:.4f}  df: {cmp.delta_df}  "
                f"p: {cmp.p:.4g}")
        warnings = cmp.warnings
    except NotNestedError as exc:
        info = information_comparison(full, restr)
        result = {"kind": "information", "reason": str(exc), **info}
        text = "\n".join([
            f"models are not nested ({exc})",
            rep.table(("criterion", "first", "second"),
                      [("AIC", *info["aic"]), ("BIC", *info["bic"])]),
            f"lower AIC: {'first' if info['preferred_aic'] == 0 else 'second'}; "
            f"lower BIC: {'first' if info['preferred_bic'] == 0 else 'second'}",
        ])
        warnings = ()
    doc = rep.envelope("compare", _config_echo(args), _digests(args), result,
                       {"delta_chisq": "chisq_restricted - chisq_full",
                        "aic": "chisq + 2t", "bic": "chisq + t ln n"}, warnings)
    _emit(args, doc, text)
    return EXIT_OK


# -- metrics / retrievability -----------------------------------------------

def _read_run(path):
    return cio.parse_run(Path(_require_file(path, "run")).read_text(encoding="utf-8"), source=path)


def cmd_metrics(args) -> int:
    run = _read_run(args.run)
    qrels = cio.parse_qrels(Path(_require_file(args.qrels, "qrels")).read_text(encoding="utf-8"),
                            source=args.qrels)
    lists = irm.ranked_lists(run, qrels)
    totals = irm.total_relevant(qrels, args.binarize_at)
    per_query = irm.per_query_metrics(lists, totals, args.r, args.cutoff, args.binarize_at)
    docs = []
    for lst in lists:
        for rank, (d, q) in enumerate(zip(lst.doc_ids, lst.qrels), start=1):
            docs.append({"query_id": lst.query_id, "doc_id": d, "rank": rank, "qrel": q,
                         "docprec": irm.doc_precision(q, rank)})
    result = {"per_query": per_query, "per_document": docs}
    doc = rep.envelope("metrics", _config_echo(args), _digests(args), result,
                       {"docprec": irm.DOC_PRECISION_FORMULA,
                        "ndcg": "sum (2^qrel - 1)/log2(i + 1), normalized by the ideal ordering",
                        "p@r": "relevant in top r / r"})
    keys = [k for k in per_query[0] if k != "query_id"] if per_query else []
    rows = [(r["query_id"], *[r[k] for k in keys]) for r in per_query]
    text = rep.table(("query", *keys), rows)
    _emit(args, doc, text + f"\n\nper-document docprec = {irm.DOC_PRECISION_FORMULA}")
    return EXIT_OK


def _read_likelihood(path) -> dict:
    out = {}
    text = Path(_require_file(path, "likelihood")).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InputError("likelihood lines must be 'query weight'", lineno, path)
        try:
            w = float(parts[1])
        except ValueError:
            raise InputError(f"bad weight {parts[1]!r}", lineno, path) from None
        if not (w >= 0 and math.isfinite(w)):
            raise InputError("weights must be finite and >= 0", lineno, path)
        out[parts[0]] = w
    return out


def cmd_retrievability(args) -> int:
    run = _read_run(args.run)
    ranks: dict = {}
    for r in run:
        ranks.setdefault(r.query_id, {})[r.doc_id] = r.rank
    lik = _read_likelihood(args.likelihood) if args.likelihood else {q: 1.0 for q in ranks}
    cutoff = math.inf if args.cutoff is None else args.cutoff
    cfg = irm.RetrievabilityConfig(lik, ranks, cutoff, args.utility, args.gamma)
    scores = irm.retrievability_all(cfg)
    result = {"retrievability": scores}
    doc = rep.envelope("retrievability", _config_echo(args), _digests(args), result,
                       {"ret": "sum_q L(q) f(r(d,q), r*)",
                        "f": "1 if rank <= r*" if args.utility == "indicator"
                        else f"rank^-{args.gamma} if rank <= r*"})
    _emit(args, doc, rep.table(("document", "ret"), sorted(scores.items())))
    return EXIT_OK


# -- pca / efa / cov --------------------------------------------------------

def _factor_input(args):
    m, c = _load_matrix_or_cov(args)
    if m is not None:
        cols = args.columns or list(m.names)
        c = cio.covariance(m.select(cols), "correlation")
    elif args.columns:
        c = c.sub(args.columns)
    return c


def _render_factors(sol) -> str:
    k = sol.loadings.shape[1]
    hdr = ("variable", *[f"F{j + 1}" for j in range(k)])
    rows = [(name, *row) for name, row in zip(sol.names, sol.table())]
    lines = [rep.table(hdr, rows), ""]
    lines.append(rep.table(("", *hdr[1:]), [("proportion", *sol.proportion),
                                             ("cumulative", *sol.cumulative)]))
    if sol.signs is not None:
        lines += ["", "signs:", rep.table(hdr, [(n, *s) for n, s in zip(sol.names, sol.signs.tolist())])]
    for w in sol.warnings:
        lines.insert(0, f"warning: {w}")
    return "\n".join(lines)


def cmd_pca(args) -> int:
    c = _factor_input(args)
    sol = prep.pca(c, args.components, args.sign_threshold)
    doc = rep.envelope("pca", _config_echo(args), _digests(args), sol.as_dict(),
                       {"loading": "eigenvector * sqrt(eigenvalue) of the correlation matrix"})
    _emit(args, doc, _render_factors(sol))
    return EXIT_OK


def cmd_efa(args) -> int:
    c = _factor_input(args)
    sol = prep.efa(c, args.factors, args.suppress_below)
    doc = rep.envelope("efa", _config_echo(args), _digests(args), sol.as_dict(),
                       {"extraction": "principal axis from squared multiple correlations",
                        "explained": "sum of squared loadings / variable count"}, sol.warnings)
    _emit(args, doc, _render_factors(sol))
    return EXIT_OK


def cmd_cov(args) -> int:
    if args.action == "export":
        m = cio.read_table(_require_file(args.table, "table"))
        cols = args.columns or list(m.names)
        c = cio.covariance(m.select(cols), "correlation" if args.correlation else "covariance")
        if args.cov_out:
            cio.write_cov(c, args.cov_out)
    else:
        c = cio.read_cov(Path(_require_file(args.cov, "cov")))
        if args.columns:
            c = c.sub(args.columns)
    pd = bool(np.all(np.linalg.eigvalsh(c.cov) > 0))
    result = {"names": list(c.names), "n": c.n, "correlation": c.is_correlation,
              "positive_definite": pd, "matrix": c.cov}
    doc = rep.envelope("cov", _config_echo(args), _digests(args), result)
    text = rep.table(("", *c.names), [(k, *row) for k, row in zip(c.names, c.cov.tolist())])
    text += f"\n\nn = {c.n}; {'correlation' if c.is_correlation else 'covariance'}; " \
            f"positive definite: {pd}"
    _emit(args, doc, text)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _global_flags(p, defaults: bool):
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p.add_argument("--out", default=d(None), help="write the report here instead of stdout")
    p.add_argument("--format", choices=("text", "machine"), default=d("text"))
    p.add_argument("--seed", type=int, default=d(0), help="seed for test oracles; recorded only")
    p.add_argument("--quiet", action="store_true", default=d(False))
    p.add_argument("--config", default=d(None), help="'key = value' file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irsem",
        description="Structural equation modeling of IR evaluation data.",
        epilog="exit status: 0 ok, 2 input, 3 prep, 4 specification, 5 estimation")
    _global_flags(parser, True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, False)
    subs = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = subs.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=func)
        return sp

    sp = add("join", cmd_join, "join a run with qrels and LETOR features")
    sp.add_argument("--run")
    sp.add_argument("--qrels")
    sp.add_argument("--features")
    sp.add_argument("--schema")
    sp.add_argument("--docid-key", default="docid")
    sp.add_argument("--table-out", help="joined CSV to write")

    sp = add("prep", cmd_prep, "collinearity, outliers, log-shift, rescale")
    sp.add_argument("--table")
    sp.add_argument("--table-out")
    sp.add_argument("--passthrough", type=_csv_list, default=["rank", "score"],
                    help="columns left untouched by every stage")
    sp.add_argument("--endogenous", type=_csv_list, default=["qrel", "docprec"],
                    help="columns excluded from collinearity, outliers and log-shift")
    sp.add_argument("--collinearity-threshold", type=float, default=0.975)
    sp.add_argument("--keep-list")
    sp.add_argument("--no-collinearity", action="store_true")
    sp.add_argument("--outlier-z", type=float, default=3.0)
    sp.add_argument("--no-outliers", action="store_true")
    sp.add_argument("--log-shift", type=_csv_list, default=[],
                    help="comma-separated targets, or 'all' for every feature column")
    sp.add_argument("--max-ratio", type=float, default=10.0)
    sp.add_argument("--no-rescale", action="store_true")

    sp = add("fit", cmd_fit, "estimate a model by maximum likelihood")
    sp.add_argument("--model")
    sp.add_argument("--table")
    sp.add_argument("--cov")
    sp.add_argument("--correlation", action="store_true",
                    help="fit the correlation rather than the covariance of --table data")
    sp.add_argument("--group-by", help="fit once per value of this label column")
    sp.add_argument("--parallel", action="store_true", help="run per-group fits concurrently")
    sp.add_argument("--max-iter", type=_positive_int, default=500)
    sp.add_argument("--gtol", type=float, default=1e-8)

    sp = add("metrics", cmd_metrics, "per-query AP, P@r, NDCG and per-document docprec")
    sp.add_argument("--run")
    sp.add_argument("--qrels")
    sp.add_argument("--r", type=_positive_int, default=10)
    sp.add_argument("--cutoff", type=_positive_int, default=10)
    sp.add_argument("--binarize-at", type=_positive_int, default=1)

    sp = add("retrievability", cmd_retrievability, "document retrievability over a query set")
    sp.add_argument("--run")
    sp.add_argument("--likelihood", help="'query weight' lines; default weight 1 per run query")
    sp.add_argument("--cutoff", type=_positive_int, default=None)
    sp.add_argument("--utility", choices=("indicator", "gravity"), default="indicator")
    sp.add_argument("--gamma", type=float, default=1.0)

    for name, func in (("pca", cmd_pca), ("efa", cmd_efa)):
        sp = add(name, func, "principal components" if name == "pca" else "principal-axis factors")
        sp.add_argument("--table")
        sp.add_argument("--cov")
        sp.add_argument("--columns", type=_csv_list, default=None)
        if name == "pca":
            sp.add_argument("--components", type=_positive_int, default=2)
            sp.add_argument("--sign-threshold", type=float, default=0.1)
        else:
            sp.add_argument("--factors", type=_positive_int, default=1)
            sp.add_argument("--suppress-below", type=float, default=0.0)

    sp = add("compare", cmd_compare, "chi-square difference or AIC/BIC comparison of two fits")
    sp.add_argument("--full", help="machine fit report of the less constrained model")
    sp.add_argument("--restricted", help="machine fit report of the more constrained model")

    sp = add("cov", cmd_cov, "export a covariance file from a table, or check one")
    sp.add_argument("action", choices=("export", "import"))
    sp.add_argument("--table")
    sp.add_argument("--cov")
    sp.add_argument("--cov-out")
    sp.add_argument("--columns", type=_csv_list, default=None)
    sp.add_argument("--correlation", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        pre, _ = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.ERROR if pre.quiet else logging.WARNING,
                        format="irsem: %(levelname)s: %(message)s", force=True)
    try:
        if pre.config:
            sub = parser._subparsers._group_actions[0].choices[pre.command]
            _apply_config(sub, _read_config(pre.config), pre.config)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        return args.func(args)
    except SpecificationError as exc:
        print(f"irsem: error: {exc}", file=sys.stderr)
        for d in exc.diagnostics or ():
            print(f"  {d}", file=sys.stderr)
        return exc.exit_code
    except IrsemError as exc:
        print(f"irsem: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, UnicodeDecodeError, ValueError, KeyError) as exc:
        print(f"irsem: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
