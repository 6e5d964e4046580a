"""Report rendering: a JSON document for machines and plain-text tables.

Machine reports are serialized with sorted keys and a fixed float repr so
identical inputs give byte-identical output. Non-finite floats become
``null``.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from . import __version__

SCHEMA_VERSION = 1


def file_digest(path) -> dict:
    data = Path(path).read_bytes()
    return {"name": Path(path).name, "sha256": hashlib.sha256(data).hexdigest()}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def envelope(command: str, config: dict, inputs: dict, result, formulas=None,
             warnings=()) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "tool": {"name": "irsem", "version": __version__},
        "command": command,
        "config": config,
        "inputs": inputs,
        "formulas": dict(formulas or {}),
        "result": result,
        "warnings": list(warnings),
    }


def to_machine(doc: dict) -> str:
    return json.dumps(_clean(doc), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def from_machine(text: str) -> dict:
    return json.loads(text)


# -- text rendering ---------------------------------------------------------

def _fmt(v, width=10, prec=4) -> str:
    if v is None:
        return "-".rjust(width)
    if isinstance(v, bool):
        return str(v).rjust(width)
    if isinstance(v, int):
        return str(v).rjust(width)
    if isinstance(v, float):
        if not math.isfinite(v):
            return "-".rjust(width)
        if v != 0 and (abs(v) < 10 ** -prec or abs(v) >= 1e6):
            return f"{v:.{prec}g}".rjust(width)
        return f"{v:.{prec}f}".rjust(width)
    return str(v).rjust(width)


def table(headers, rows, first_width=None) -> str:
    """Right-aligned columns; the first column is left-aligned."""
    cells = [[str(h) for h in headers]] + [
        [str(r[0])] + [_fmt(v).strip() for v in r[1:]] for r in rows
    ]
    widths = [max(len(row[j]) for row in cells) for j in range(len(headers))]
    if first_width:
        widths[0] = max(widths[0], first_width)
    lines = []
    for i, row in enumerate(cells):
        parts = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(parts).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def render_fit(res: dict, title=None) -> str:
    """Text block for one serialized fit result."""
    out = []
    if title:
        out.append(title)
        out.append("=" * len(title))
    for w in res.get("warnings", ()):
        out.append(f"warning: {w}")
    rows = [(q["id"], q["B"], q["beta"], q["se"], q["z"], q["p"]) for q in res["parameters"]]
    out.append(table(("parameter", "B", "beta", "se", "z", "p"), rows))
    if res["r_squared"]:
        out.append("")
        out.append(table(("variable", "R2"), sorted(res["r_squared"].items())))
    out.append("")
    conv = res["convergence"]
    out.append(f"converged: {conv['converged']}  iterations: {conv['iterations']}  "
               f"gradient max-norm: {_fmt(conv['grad_norm']).strip()}")
    ind = res.get("indices")
    if ind is None:
        out.append("fit indices suppressed (no convergence)")
        return "\n".join(out)
    r = ind["rmsea"]
    rows = [
        ("chi-square", ind["chisq"]),
        ("df", ind["df"]),
        ("p (exact fit)", ind["p_exact"]),
        ("RMSEA", r["point"]),
        ("RMSEA 90% CI low", r["lo90"]),
        ("RMSEA 90% CI high", r["hi90"]),
        ("p (RMSEA <= 0.05)", r["p_close"]),
        ("CFI", ind["cfi"]),
        ("TLI", ind["tli"]),
        ("SRMR", ind["srmr"]),
        ("AIC", ind["aic"]),
        ("BIC", ind["bic"]),
        ("baseline chi-square", ind["baseline"]["chisq"]),
        ("baseline df", ind["baseline"]["df"]),
    ]
    out.append(table(("index", "value"), rows))
    if ind["saturated"]:
        out.append("model is saturated (df = 0): exact fit by construction")
    return "\n".join(out)


def render_formulas(formulas: dict) -> str:
    if not formulas:
        return ""
    lines = ["formulas:"]
    lines += [f"  {k}: {v}" for k, v in sorted(formulas.items())]
    return "\n".join(lines)
