"""Result tables: machine-readable CSV frames and aligned text ladders in
the style of stacked regression columns with fixed-effects footers."""

from __future__ import annotations

import numpy as np
import pandas as pd

from .estimator import EstimationResult


def stars(p: float) -> str:
    """Significance stars at the 0.1 / 0.05 / 0.01 thresholds."""
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def coefficient_frame(result: EstimationResult) -> pd.DataFrame:
    """Per-coefficient table: coefficient, se, t, p, stars."""
    return pd.DataFrame({
        "label": result.labels,
        "coef": result.coef,
        "se": result.se,
        "t": result.tstats,
        "p": result.pvalues,
        "stars": [stars(p) for p in result.pvalues],
    })


def diagnostics_frame(result: EstimationResult) -> pd.DataFrame:
    """Key-value diagnostics table for one estimation."""
    rows = [
        ("spec", result.spec_name),
        ("method", result.method),
        ("N", result.nobs),
        ("clusters", result.n_clusters),
        ("cluster_variable", result.cluster_name),
        ("fixed_effects", " / ".join(result.fixed_effects)),
        ("r2_within", result.r2_within),
        ("dof_absorbed", result.dof_absorbed),
        ("dof_absorbed_approximate", int(result.dof_absorbed_approximate)),
    ]
    diag = result.diagnostics
    for key in ("hansen_j", "hansen_j_p", "hansen_j_dof", "anderson_lm",
                "anderson_lm_p", "cragg_donald", "weak_instruments",
                "demean_iterations", "demean_max_residual"):
        if key in diag:
            rows.append((key, diag[key]))
    for label, f in diag.get("first_stage_F", {}).items():
        rows.append((f"first_stage_F:{label}", f))
    for reason, count in result.drop_ledger.items():
        rows.append((f"drop:{reason}", count))
    return pd.DataFrame(rows, columns=["key", "value"])


def _fmt(x, width=12, decimals=4):
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return " " * width
    return f"{x:>{width}.{decimals}f}"


def format_ladder(results: list[EstimationResult], titles=None) -> str:
    """Multi-column text table aligned by coefficient label.

    Coefficient rows carry stars and standard errors in parentheses; footer
    rows report within R2, N, IV diagnostics when present, the fixed-effect
    sets, and the clustering variable.
    """
    if not results:
        raise ValueError("at least one result is required.")
    for r in results:
        if len(set(r.labels)) != len(r.labels):
            dupes = sorted({lb for lb in r.labels if r.labels.count(lb) > 1})
            raise ValueError(f"duplicate coefficient label(s) {dupes} in "
                             f"spec {r.spec_name!r}.")
    titles = titles or [f"({k + 1})" for k in range(len(results))]
    order: list[str] = []
    for r in results:
        for lb in r.labels:
            if lb not in order:
                order.append(lb)

    name_w = max(22, max(len(lb) for lb in order) + 2)
    col_w = 14
    lines = []
    header = " " * name_w + "".join(f"{t:>{col_w}}" for t in titles)
    rule = "-" * len(header)
    lines += [rule, header, rule]
    for lb in order:
        coefs, ses = [], []
        for r in results:
            if lb in r.labels:
                k = r.labels.index(lb)
                coefs.append(f"{r.coef[k]:.4f}{stars(r.pvalues[k])}")
                ses.append(f"({r.se[k]:.4f})")
            else:
                coefs.append("")
                ses.append("")
        lines.append(f"{lb:<{name_w}}" + "".join(f"{c:>{col_w}}" for c in coefs))
        lines.append(" " * name_w + "".join(f"{s:>{col_w}}" for s in ses))
    lines.append(rule)

    def footer(name, values, fmt=str):
        lines.append(f"{name:<{name_w}}" + "".join(f"{fmt(v):>{col_w}}" for v in values))

    footer("r2 (within)", [r.r2_within for r in results], lambda v: f"{v:.4f}")
    footer("N", [r.nobs for r in results], lambda v: f"{v:,}")
    if any("hansen_j" in r.diagnostics for r in results):
        def diag_or_blank(r, key, fmt):
            return fmt(r.diagnostics[key]) if key in r.diagnostics else ""
        footer("idstat (Anderson LM)", results,
               lambda r: diag_or_blank(r, "anderson_lm", lambda v: f"{v:.1f}"))
        footer("idp", results,
               lambda r: diag_or_blank(r, "anderson_lm_p", lambda v: f"{v:.4f}"))
        footer("widstat (Cragg-Donald)", results,
               lambda r: diag_or_blank(r, "cragg_donald", lambda v: f"{v:.1f}"))
        footer("min first-stage F", results,
               lambda r: (f"{min(r.diagnostics['first_stage_F'].values()):.1f}"
                          if "first_stage_F" in r.diagnostics else ""))
        footer("j", results, lambda r: diag_or_blank(r, "hansen_j", lambda v: f"{v:.3f}"))
        footer("jp", results, lambda r: diag_or_blank(r, "hansen_j_p", lambda v: f"{v:.4f}"))
    max_fe = max(len(r.fixed_effects) for r in results)
    for row in range(max_fe):
        name = "fixed effects" if row == 0 else ""
        footer(name, [r.fixed_effects[row] if row < len(r.fixed_effects) else ""
                      for r in results])
    footer("clustering variable", [r.cluster_name for r in results])
    lines.append(rule)
    return "\n".join(lines)
