"""The twelve one-factor tests (accident and minimum distance for six HI properties)."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..hallucination import CONFIGURATIONS, PROBABILITIES, AffectedDomain, HallucinationType
from .models import (ChiSqTest, Design, LogisticFit, OlsFit, StatsError, fit_logistic, fit_ols,
                     lr_test, wald_test)

ALPHA = 0.05
BASELINE = "Baseline"
TABLE_COLUMNS = ["parameter", "estimate", "se", "ci_low", "ci_high", "stat", "p"]


def _prob_label(p: float) -> str:
    return f"{p * 100:g}%"


def _config_levels() -> list[str]:
    seen: list[str] = []
    for labels in CONFIGURATIONS.values():
        for lab in labels:
            if lab not in seen:
                seen.append(lab)
    return seen


@dataclass(frozen=True)
class Factor:
    hid: str
    name: str
    slug: str
    reference: str
    levels: tuple[str, ...]
    key: Callable


def _level(attr: str):
    def get(rec):
        v = getattr(rec, attr)
        return BASELINE if v is None else v
    return get


FACTORS: tuple[Factor, ...] = (
    Factor("H1", "Module Activation", "module_activation", "OFF", ("OFF", "ON"),
           lambda r: r.module_activation),
    Factor("H2", "Hallucination Type", "hallucination_type", BASELINE,
           (BASELINE,) + tuple(t.value for t in HallucinationType), _level("hallucination_type")),
    Factor("H3", "Affected Domain", "affected_domain", BASELINE,
           (BASELINE,) + tuple(d.value for d in AffectedDomain), _level("affected_domain")),
    Factor("H4", "Hallucination Configuration", "configuration", BASELINE,
           (BASELINE,) + tuple(_config_levels()), _level("configuration")),
    Factor("H5", "Hallucination Probability", "probability", BASELINE,
           (BASELINE,) + tuple(_prob_label(p) for p in PROBABILITIES),
           lambda r: BASELINE if r.probability is None else _prob_label(r.probability)),
    Factor("H6", "Hallucination Persistence", "persistence", BASELINE,
           (BASELINE, "Intermittent", "Permanent"), lambda r: r.persistence),
)


@dataclass
class Table:
    name: str
    title: str
    columns: list[str]
    rows: list[list]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_csv_cell(v) for v in row])
        return buf.getvalue()

    def to_markdown(self) -> str:
        lines = [f"### {self.title}", "", "| " + " | ".join(self.columns) + " |",
                 "|" + "---|" * len(self.columns)]
        for row in self.rows:
            lines.append("| " + " | ".join(_md_cell(c, v) for c, v in zip(self.columns, row)) + " |")
        return "\n".join(lines) + "\n"


def _csv_cell(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "NA"
        return f"{v:.10g}"
    return str(v)


def fmt_p(p: float) -> str:
    if p < 0.001:
        return "< .001"
    return f"{p:.3f}"


def _md_cell(col: str, v) -> str:
    if not isinstance(v, float):
        return str(v)
    if math.isnan(v):
        return "NA"
    if col in ("p", "lr_p", "wald_p"):
        return fmt_p(v)
    if v != 0 and abs(v) < 0.01:
        return f"{v:.2e}"
    if abs(v) >= 1000:
        return f"{v:,.0f}"
    return f"{v:.2f}"


@dataclass
class HypothesisResult:
    factor: Factor
    n: int
    levels: list[str]
    missing_levels: list[str]
    logistic: LogisticFit | None = None
    lr: ChiSqTest | None = None
    wald: ChiSqTest | None = None
    ols: OlsFit | None = None
    skip_logistic: str | None = None
    skip_ols: str | None = None
    dropped_nonfinite: int = 0

    @property
    def accident_accepted(self) -> bool | None:
        return None if self.lr is None else self.lr.p < ALPHA

    @property
    def distance_accepted(self) -> bool | None:
        return None if self.ols is None else self.ols.anova.p < ALPHA

    @property
    def accepted(self) -> bool | None:
        parts = (self.accident_accepted, self.distance_accepted)
        if None in parts:
            return None
        return all(parts)

    def or_table(self) -> Table | None:
        if self.logistic is None:
            return None
        rows = []
        for t in self.logistic.terms:
            lo, hi = t.ci
            rows.append([t.name, t.odds_ratio, t.or_se, lo, hi, t.z, t.p])
        f = self.factor
        return Table(f"{f.hid}.1_odds_ratio_{f.slug}", f"Odds ratio results for predictor {f.name} ({f.hid}.1)",
                     TABLE_COLUMNS, rows)

    def linear_table(self) -> Table | None:
        if self.ols is None:
            return None
        rows = [[t.name, t.coef, t.se, t.ci[0], t.ci[1], t.t, t.p] for t in self.ols.terms]
        f = self.factor
        return Table(f"{f.hid}.2_linear_{f.slug}",
                     f"Linear model results for predictor {f.name} ({f.hid}.2, t({self.ols.df_resid}))",
                     TABLE_COLUMNS, rows)


@dataclass
class BatteryReport:
    results: list[HypothesisResult]
    n_records: int
    alpha: float = ALPHA
    notes: list[str] = field(default_factory=list)

    def result(self, hid: str) -> HypothesisResult:
        for r in self.results:
            if r.factor.hid == hid:
                return r
        raise KeyError(hid)

    def accident_anova(self) -> Table:
        rows = []
        for r in self.results:
            if r.lr is None:
                continue
            rows.append([f"{r.factor.hid}.1: {r.factor.name}", r.lr.chi2, r.lr.df, r.lr.p,
                         r.wald.chi2, r.wald.df, r.wald.p])
        return Table("anova_accident", "ANOVA results for the effects of HI properties on Accident Probability",
                     ["parameter", "lr_chi2", "df", "lr_p", "wald_chi2", "wald_df", "wald_p"], rows)

    def distance_anova(self) -> Table:
        rows = []
        for r in self.results:
            if r.ols is None:
                continue
            a = r.ols.anova
            lo, hi = a.eta_ci()
            rows.append([f"{r.factor.hid}.2: {r.factor.name}", a.ss_effect, a.df_effect, a.ms_effect, a.F,
                         a.p, a.partial_eta_sq, lo, hi, a.df_resid])
        return Table("anova_min_distance", "ANOVA results for the effects of HI properties on Minimum Distance",
                     ["parameter", "ss", "df", "ms", "F", "p", "eta_sq_p", "eta_ci_low", "eta_ci_high", "df_resid"],
                     rows)

    def tables(self) -> list[Table]:
        out = [t for r in self.results for t in (r.or_table(),) if t is not None]
        out += [t for r in self.results for t in (r.linear_table(),) if t is not None]
        summaries = [self.accident_anova(), self.distance_anova()]
        out += [t for t in summaries if t.rows]
        return out

    def skips(self) -> list[tuple[str, str]]:
        out = []
        for r in self.results:
            if r.skip_logistic:
                out.append((f"{r.factor.hid}.1", r.skip_logistic))
            if r.skip_ols:
                out.append((f"{r.factor.hid}.2", r.skip_ols))
        return out

    def write(self, outdir: str | Path) -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = []
        md = [f"# Hypothesis tests (n = {self.n_records}, alpha = {self.alpha})", ""]
        for t in self.tables():
            p = outdir / f"{t.name}.csv"
            p.write_text(t.to_csv(), encoding="utf-8")
            paths.append(p)
            md.append(t.to_markdown())
        if self.skips() or self.notes:
            md.append("### Skipped tests and notes\n")
            md += [f"- {hid}: skipped, {why}" for hid, why in self.skips()]
            md += [f"- {n}" for n in self.notes]
            md.append("")
        p = outdir / "tables.md"
        p.write_text("\n".join(md), encoding="utf-8")
        paths.append(p)
        return paths


def _run_factor(factor: Factor, records: Sequence) -> HypothesisResult:
    labels = [factor.key(r) for r in records]
    present = set(labels)
    levels = [lv for lv in factor.levels if lv in present]
    unknown = present - set(factor.levels)
    missing = [lv for lv in factor.levels if lv not in present]
    res = HypothesisResult(factor, len(records), levels, missing)
    if unknown:
        why = f"unrecognised level(s) {sorted(unknown)}"
        res.skip_logistic = res.skip_ols = why
        return res
    if factor.reference not in present:
        why = f"reference level {factor.reference!r} has no observations"
        res.skip_logistic = res.skip_ols = why
        return res
    if len(levels) < 2:
        why = f"only the reference level {factor.reference!r} is present"
        res.skip_logistic = res.skip_ols = why
        return res

    acc = [1.0 if r.accident else 0.0 for r in records]
    try:
        design = Design.from_labels(acc, labels, factor.reference, levels, factor.name)
        res.logistic = fit_logistic(design)
        res.lr = lr_test(res.logistic)
        res.wald = wald_test(res.logistic)
    except (StatsError, ArithmeticError) as exc:
        res.skip_logistic = str(exc)

    md = np.array([r.min_distance for r in records], float)
    keep = np.isfinite(md)
    res.dropped_nonfinite = int((~keep).sum())
    kept_labels = [lab for lab, k in zip(labels, keep) if k]
    kept_levels = [lv for lv in levels if lv in set(kept_labels)]
    try:
        if factor.reference not in kept_labels or len(kept_levels) < 2:
            raise StatsError("fewer than two levels with a finite minimum distance")
        design = Design.from_labels(md[keep], kept_labels, factor.reference, kept_levels, factor.name)
        res.ols = fit_ols(design)
    except (StatsError, ArithmeticError) as exc:
        res.skip_ols = str(exc)
    return res


def hypothesis_battery(records: Sequence, factors: Sequence[Factor] = FACTORS) -> BatteryReport:
    """Fit logistic and OLS models for each factor against the baseline reference."""
    records = [r for r in records if getattr(r, "valid", True)]
    report = BatteryReport([_run_factor(f, records) for f in factors], len(records))
    for r in report.results:
        if r.dropped_nonfinite:
            report.notes.append(f"{r.factor.hid}.2: {r.dropped_nonfinite} run(s) without a finite minimum distance dropped")
        if r.missing_levels and r.logistic is not None:
            report.notes.append(f"{r.factor.hid}: level(s) absent from the data: {', '.join(r.missing_levels)}")
    return report
