"""Markdown narrative, plot-ready CSV series and rendered figures from a battery report."""
from __future__ import annotations

import csv
import io
from pathlib import Path

from .stats.battery import BatteryReport, HypothesisResult, fmt_p

SERIES_COLUMNS = ["hypothesis", "factor", "level", "estimate", "ci_low", "ci_high", "p"]

_STATEMENTS = {
    "H1": "hallucination injection changes safety risk",
    "H2": "the hallucination type influences safety risk",
    "H3": "the affected perception domain influences safety risk",
    "H4": "the hallucination configuration influences safety risk",
    "H5": "the hallucination probability influences safety risk",
    "H6": "hallucination persistence influences safety risk",
}


def _verdict(flag: bool | None) -> str:
    return {True: "accepted", False: "rejected", None: "not tested"}[flag]


def _or_rows(res: HypothesisResult) -> list[list]:
    if res.logistic is None:
        return []
    rows = []
    for t in res.logistic.terms[1:]:
        lo, hi = t.ci
        rows.append([f"{res.factor.hid}.1", res.factor.name, t.name, t.odds_ratio, lo, hi, t.p])
    return rows


def _beta_rows(res: HypothesisResult) -> list[list]:
    if res.ols is None:
        return []
    return [[f"{res.factor.hid}.2", res.factor.name, t.name, t.coef, t.ci[0], t.ci[1], t.p]
            for t in res.ols.terms[1:]]


def _series_csv(rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SERIES_COLUMNS)
    for row in rows:
        w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _paragraph(res: HypothesisResult, alpha: float) -> list[str]:
    f = res.factor
    out = [f"## {f.hid}: {_STATEMENTS[f.hid]} ({_verdict(res.accepted)})", ""]
    if res.lr is not None:
        out.append(
            f"- {f.hid}.1 accident likelihood ~ {f.name}: LR chi2({res.lr.df}) = {res.lr.chi2:.2f}, "
            f"p {fmt_p(res.lr.p) if res.lr.p < 0.001 else '= ' + fmt_p(res.lr.p)} "
            f"(Wald chi2 = {res.wald.chi2:.2f}); {_verdict(res.accident_accepted)} at alpha = {alpha}."
        )
        ranked = sorted(res.logistic.terms[1:], key=lambda t: t.odds_ratio, reverse=True)
        bits = [f"{t.name} OR {t.odds_ratio:.2f} [{t.ci[0]:.2f}, {t.ci[1]:.2f}]" for t in ranked[:6]]
        out.append(f"  - Levels by odds ratio vs {f.reference}: " + "; ".join(bits) + ".")
    else:
        out.append(f"- {f.hid}.1 skipped: {res.skip_logistic}.")
    if res.ols is not None:
        a = res.ols.anova
        lo, hi = a.eta_ci()
        out.append(
            f"- {f.hid}.2 minimum distance ~ {f.name}: F({a.df_effect}, {a.df_resid}) = {a.F:.2f}, "
            f"p {fmt_p(a.p) if a.p < 0.001 else '= ' + fmt_p(a.p)}, partial eta^2 = {a.partial_eta_sq:.2f} "
            f"[{lo:.2f}, {hi:.2f}]; {_verdict(res.distance_accepted)}."
        )
        icpt = res.ols.terms[0].coef
        ranked = sorted(res.ols.terms[1:], key=lambda t: t.coef)
        bits = [f"{t.name} {t.coef:+.2f} m" for t in ranked[:6]]
        out.append(f"  - {f.reference} mean {icpt:.2f} m; largest changes: " + ", ".join(bits) + ".")
    else:
        out.append(f"- {f.hid}.2 skipped: {res.skip_ols}.")
    out.append("")
    return out


def narrative(report: BatteryReport) -> str:
    lines = ["# Hallucination injection: hypothesis summary", "",
             f"{report.n_records} valid runs; significance threshold alpha = {report.alpha}.", "",
             "| Hypothesis | Accident (x.1) | Minimum distance (x.2) | Overall |", "|---|---|---|---|"]
    for r in report.results:
        lines.append(f"| {r.factor.hid} {r.factor.name} | {_verdict(r.accident_accepted)} | "
                     f"{_verdict(r.distance_accepted)} | {_verdict(r.accepted)} |")
    lines.append("")
    for r in report.results:
        lines += _paragraph(r, report.alpha)
    if report.notes:
        lines += ["## Notes", ""] + [f"- {n}" for n in report.notes] + [""]
    return "\n".join(lines)


def _plot(rows_or: list[list], rows_beta: list[list], report: BatteryReport, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    results = [r for r in report.results if r.factor.hid != "H1"]
    fig, axes = plt.subplots(2, len(results), figsize=(4 * len(results), 7.5), squeeze=False)
    for j, res in enumerate(results):
        for i, (rows, ref, label) in enumerate(((rows_or, 1.0, "odds ratio"), (rows_beta, 0.0, "beta (m)"))):
            ax = axes[i][j]
            mine = [r for r in rows if r[1] == res.factor.name]
            if not mine:
                ax.set_axis_off()
                continue
            ys = range(len(mine))
            est = [r[3] for r in mine]
            err = [[r[3] - r[4] for r in mine], [r[5] - r[3] for r in mine]]
            ax.errorbar(est, list(ys), xerr=err, fmt="o", ms=3, capsize=2)
            ax.axvline(ref, color="grey", lw=0.8, ls="--")
            ax.set_yticks(list(ys))
            ax.set_yticklabels([r[2] for r in mine], fontsize=7)
            ax.invert_yaxis()
            ax.set_title(f"{res.factor.hid}.{i + 1} {res.factor.name}", fontsize=8)
            ax.set_xlabel(label, fontsize=8)
            if i == 0:
                ax.set_xscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def _plot_activation(report: BatteryReport, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    res = report.result("H1")
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3))
    if res.logistic is not None:
        t = res.logistic.terms[1]
        lo, hi = t.ci
        a1.errorbar([t.odds_ratio], [0], xerr=[[t.odds_ratio - lo], [hi - t.odds_ratio]], fmt="o", capsize=3)
        a1.axvline(1.0, color="grey", ls="--", lw=0.8)
        a1.set_yticks([])
        a1.set_xlabel("odds ratio, HI ON vs OFF")
    if res.ols is not None:
        base = res.ols.terms[0].coef
        on = base + res.ols.terms[1].coef
        a2.bar(["OFF", "ON"], [base, on], color=["tab:blue", "tab:orange"])
        a2.set_ylabel("mean minimum distance (m)")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def write_report(report: BatteryReport, outdir: str | Path, figures: bool = True) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows_or = [row for r in report.results for row in _or_rows(r)]
    rows_beta = [row for r in report.results for row in _beta_rows(r)]
    written = []
    for name, text in (("report.md", narrative(report)),
                       ("series_odds_ratio.csv", _series_csv(rows_or)),
                       ("series_beta.csv", _series_csv(rows_beta))):
        p = outdir / name
        p.write_text(text, encoding="utf-8")
        written.append(p)
    if figures and (rows_or or rows_beta):
        p = outdir / "hypotheses_h2_h6.png"
        _plot(rows_or, rows_beta, report, p)
        written.append(p)
        p = outdir / "hypothesis_h1.png"
        _plot_activation(report, p)
        written.append(p)
    return written


__all__ = ["narrative", "write_report", "SERIES_COLUMNS"]
