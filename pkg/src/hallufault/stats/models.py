"""One-factor GLM and OLS fits with reference-level coding."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .special import NumericalError, chisq_sf, f_sf, ncf_cdf, normal_sf, t_quantile, t_two_sided

Z95 = 1.96
IRLS_TOL = 1e-10
IRLS_MAX_ITER = 50


class StatsError(ValueError):
    pass


class MissingLevelError(StatsError):
    def __init__(self, level: str, detail: str = "has no observations"):
        super().__init__(f"level {level!r} {detail}")
        self.level = level


class SeparationError(StatsError):
    def __init__(self, level: str, value: int):
        super().__init__(f"perfect separation: every observation at level {level!r} has response {value}")
        self.level = level


class RankError(StatsError):
    def __init__(self, aliased: Sequence[str]):
        super().__init__(f"design matrix is rank deficient; aliased column(s): {', '.join(aliased)}")
        self.aliased = list(aliased)


class ContractError(StatsError):
    pass


@dataclass
class Design:
    response: np.ndarray
    labels: list[str]
    reference: str
    levels: list[str]
    name: str = "factor"

    @classmethod
    def from_labels(
        cls,
        response: Sequence[float],
        labels: Sequence[str],
        reference: str,
        levels: Sequence[str] | None = None,
        name: str = "factor",
    ) -> "Design":
        y = np.asarray(response, dtype=float)
        labels = [str(x) for x in labels]
        if y.ndim != 1 or len(y) != len(labels):
            raise StatsError("response and labels must be 1-d and the same length")
        present = set(labels)
        if reference not in present:
            raise MissingLevelError(reference, "(reference) has no observations")
        if levels is None:
            others = sorted(present - {reference})
        else:
            others = [lv for lv in levels if lv != reference]
            for lv in others:
                if lv not in present:
                    raise MissingLevelError(lv)
            extra = present - set(others) - {reference}
            if extra:
                raise StatsError(f"labels outside the declared levels: {sorted(extra)}")
        return cls(y, labels, reference, [reference] + list(others), name)

    @property
    def term_names(self) -> list[str]:
        return ["(Intercept)"] + self.levels[1:]

    def matrix(self) -> np.ndarray:
        n, k = len(self.labels), len(self.levels)
        X = np.zeros((n, k))
        X[:, 0] = 1.0
        col = {lv: j for j, lv in enumerate(self.levels)}
        for i, lab in enumerate(self.labels):
            j = col[lab]
            if j:
                X[i, j] = 1.0
        return X

    def intercept_only(self) -> "Design":
        return Design(self.response, [self.reference] * len(self.labels), self.reference, [self.reference], self.name)


def _check_rank(X: np.ndarray, names: list[str]) -> None:
    _, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(X.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        raise RankError([names[j] for j in piv[rank:]])


@dataclass
class LogisticTerm:
    name: str
    coef: float
    se: float
    z: float
    p: float

    @property
    def odds_ratio(self) -> float:
        return math.exp(self.coef)

    @property
    def or_se(self) -> float:
        # delta method: SE of the OR itself rather than of log OR
        return self.odds_ratio * self.se

    @property
    def ci(self) -> tuple[float, float]:
        return math.exp(self.coef - Z95 * self.se), math.exp(self.coef + Z95 * self.se)


@dataclass
class LogisticFit:
    design: Design
    terms: list[LogisticTerm]
    cov: np.ndarray
    deviance: float
    null_deviance: float
    iterations: int
    deviance_trace: list[float] = field(default_factory=list)

    @property
    def coef(self) -> np.ndarray:
        return np.array([t.coef for t in self.terms])

    @property
    def n_params(self) -> int:
        return len(self.terms)

    def term(self, name: str) -> LogisticTerm:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)


def _binomial_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(y > 0, y * np.log(y / mu), 0.0)
        b = np.where(y < 1, (1 - y) * np.log((1 - y) / (1 - mu)), 0.0)
    return float(2.0 * np.sum(a + b))


def fit_logistic(design: Design) -> LogisticFit:
    """Binomial GLM with logit link by iteratively reweighted least squares."""
    y = design.response
    if not np.all((y == 0) | (y == 1)):
        raise StatsError("logistic response must be 0/1")
    # separation in a one-factor model means some level is all-0 or all-1
    for lv in design.levels:
        sel = np.fromiter((lab == lv for lab in design.labels), bool, len(design.labels))
        vals = np.unique(y[sel])
        if len(vals) == 1:
            raise SeparationError(lv, int(vals[0]))
    X = design.matrix()
    names = design.term_names
    _check_rank(X, names)

    mu = (y + 0.5) / 2.0
    eta = np.log(mu / (1 - mu))
    beta = np.zeros(X.shape[1])
    trace = []
    it = 0
    for it in range(1, IRLS_MAX_ITER + 1):
        w = mu * (1 - mu)
        z = eta + (y - mu) / w
        sw = np.sqrt(w)
        new_beta, *_ = np.linalg.lstsq(X * sw[:, None], z * sw, rcond=None)
        delta = np.max(np.abs(new_beta - beta))
        beta = new_beta
        eta = X @ beta
        mu = 1.0 / (1.0 + np.exp(-eta))
        trace.append(_binomial_deviance(y, mu))
        if delta < IRLS_TOL:
            break
    if not np.all(np.isfinite(beta)):
        raise NumericalError("IRLS produced non-finite coefficients")

    w = mu * (1 - mu)
    info = X.T @ (X * w[:, None])
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise RankError(names) from exc
    se = np.sqrt(np.diag(cov))
    terms = []
    for name, b, s in zip(names, beta, se):
        zval = b / s
        terms.append(LogisticTerm(name, float(b), float(s), float(zval), 2.0 * normal_sf(abs(zval))))
    ybar = float(np.mean(y))
    null_dev = _binomial_deviance(y, np.full_like(y, ybar))
    return LogisticFit(design, terms, cov, trace[-1], null_dev, it, trace)


@dataclass(frozen=True)
class ChiSqTest:
    chi2: float
    df: int
    p: float
    kind: str


def lr_test(fit: LogisticFit, nested_null: LogisticFit | None = None) -> ChiSqTest:
    """Likelihood-ratio test of ``fit`` against a nested model (intercept-only when omitted)."""
    if nested_null is None:
        dev0, k0 = fit.null_deviance, 1
    else:
        same_data = nested_null.design.response is fit.design.response or np.array_equal(
            nested_null.design.response, fit.design.response)
        names0 = {t.name for t in nested_null.terms}
        if not same_data or not names0 <= {t.name for t in fit.terms}:
            raise ContractError("models are not nested: different data or terms outside the larger model")
        dev0, k0 = nested_null.deviance, nested_null.n_params
    df = fit.n_params - k0
    chi2 = max(0.0, dev0 - fit.deviance)
    p = 1.0 if df == 0 else chisq_sf(chi2, df)
    return ChiSqTest(chi2, df, p, "LR")


def wald_test(fit: LogisticFit) -> ChiSqTest:
    """Joint Wald test that every non-intercept coefficient is zero."""
    b = fit.coef[1:]
    if b.size == 0:
        return ChiSqTest(0.0, 0, 1.0, "Wald")
    V = fit.cov[1:, 1:]
    chi2 = float(b @ np.linalg.solve(V, b))
    return ChiSqTest(chi2, len(b), chisq_sf(chi2, len(b)), "Wald")


@dataclass
class OlsTerm:
    name: str
    coef: float
    se: float
    t: float
    p: float
    ci: tuple[float, float]


@dataclass
class AnovaTable:
    ss_effect: float
    df_effect: int
    ss_resid: float
    df_resid: int

    @property
    def ms_effect(self) -> float:
        return self.ss_effect / self.df_effect

    @property
    def ms_resid(self) -> float:
        return self.ss_resid / self.df_resid

    @property
    def F(self) -> float:
        if self.ms_resid == 0:
            return math.inf if self.ss_effect > 0 else math.nan
        return self.ms_effect / self.ms_resid

    @property
    def p(self) -> float:
        return f_sf(self.F, self.df_effect, self.df_resid) if math.isfinite(self.F) else (0.0 if self.F > 0 else 1.0)

    @property
    def partial_eta_sq(self) -> float:
        tot = self.ss_effect + self.ss_resid
        return self.ss_effect / tot if tot > 0 else 0.0

    def eta_ci(self, level: float = 0.90) -> tuple[float, float]:
        return partial_eta_sq_ci(self.F, self.df_effect, self.df_resid, level)


@dataclass
class OlsFit:
    design: Design
    terms: list[OlsTerm]
    rss: float
    df_resid: int
    anova: AnovaTable

    def term(self, name: str) -> OlsTerm:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)


def _qr_solve(X: np.ndarray, y: np.ndarray, names: list[str]) -> tuple[np.ndarray, np.ndarray, float]:
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(X.shape) * np.finfo(float).eps
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        raise RankError([names[j] for j in piv[rank:]])
    qty = Q.T @ y
    b_piv = scipy.linalg.solve_triangular(R, qty)
    beta = np.empty_like(b_piv)
    beta[piv] = b_piv
    Rinv = scipy.linalg.solve_triangular(R, np.eye(R.shape[0]))
    unscaled_piv = Rinv @ Rinv.T
    unscaled = np.empty_like(unscaled_piv)
    unscaled[np.ix_(piv, piv)] = unscaled_piv
    resid = y - X @ beta
    return beta, unscaled, float(resid @ resid)


def fit_ols(design: Design) -> OlsFit:
    y = design.response
    if not np.all(np.isfinite(y)):
        raise StatsError("OLS response contains non-finite values")
    X = design.matrix()
    n, k = X.shape
    if n <= k:
        raise StatsError(f"need more observations ({n}) than parameters ({k})")
    names = design.term_names
    beta, unscaled, rss = _qr_solve(X, y, names)
    df_resid = n - k
    sigma2 = rss / df_resid
    se = np.sqrt(np.diag(unscaled) * sigma2)
    q = t_quantile(0.975, df_resid)
    terms = []
    for name, b, s in zip(names, beta, se):
        if s > 0:
            tval = b / s
            p = t_two_sided(tval, df_resid)
        else:
            tval = 0.0 if b == 0 else math.copysign(math.inf, b)
            p = 1.0 if b == 0 else 0.0
        terms.append(OlsTerm(name, float(b), float(s), float(tval), float(p), (b - q * s, b + q * s)))
    tss = float(np.sum((y - y.mean()) ** 2))
    ss_effect = max(0.0, tss - rss)
    return OlsFit(design, terms, rss, df_resid, AnovaTable(ss_effect, k - 1, rss, df_resid))


def eta_from_lambda(lam: float, df1: float, df2: float) -> float:
    return lam / (lam + df1 + df2 + 1.0)


def _solve_lambda(F: float, df1: float, df2: float, target: float) -> float:
    """Noncentrality at which the CDF of F equals ``target`` (CDF decreases in lambda)."""
    if ncf_cdf(F, df1, df2, 0.0) <= target:
        return 0.0
    lo, hi = 0.0, max(10.0, 2.0 * F * df1)
    for _ in range(200):
        if ncf_cdf(F, df1, df2, hi) < target:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise NumericalError(f"could not bracket lambda for F={F}, df=({df1}, {df2}), target={target}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ncf_cdf(F, df1, df2, mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-10 * max(1.0, hi):
            return 0.5 * (lo + hi)
    raise NumericalError(
        f"bisection on lambda did not converge: F={F}, df=({df1}, {df2}), bracket=[{lo}, {hi}]"
    )


def partial_eta_sq_ci(F: float, df1: float, df2: float, level: float = 0.90) -> tuple[float, float]:
    """Confidence interval for partial eta squared by inverting the noncentral F."""
    if not (F >= 0) or df1 < 1 or df2 < 1:
        raise StatsError(f"need F >= 0 and df >= 1 (got F={F}, df=({df1}, {df2}))")
    if not 0 < level < 1:
        raise StatsError("level must be in (0, 1)")
    if math.isinf(F):
        return 1.0, 1.0
    alpha = 1.0 - level
    lam_lo = _solve_lambda(F, df1, df2, 1.0 - alpha / 2.0)
    lam_hi = _solve_lambda(F, df1, df2, alpha / 2.0)
    return eta_from_lambda(lam_lo, df1, df2), eta_from_lambda(lam_hi, df1, df2)


def partial_eta_sq_bootstrap(
    response: Sequence[float], labels: Sequence[str], n_boot: int = 2000, level: float = 0.90, seed: int = 0
) -> tuple[float, float]:
    """Stratified percentile bootstrap of partial eta squared.

    Kept as a cross-check for the analytic interval; it is slower and
    varies with ``seed``.
    """
    y = np.asarray(response, float)
    labels = np.asarray(labels)
    groups = [y[labels == lv] for lv in np.unique(labels)]
    rng = np.random.default_rng(seed)
    stats = np.empty(n_boot)
    for i in range(n_boot):
        res = [g[rng.integers(0, len(g), len(g))] for g in groups]
        allv = np.concatenate(res)
        grand = allv.mean()
        ssb = sum(len(g) * (g.mean() - grand) ** 2 for g in res)
        ssw = sum(((g - g.mean()) ** 2).sum() for g in res)
        stats[i] = ssb / (ssb + ssw) if ssb + ssw > 0 else 0.0
    a = (1 - level) / 2
    return float(np.quantile(stats, a)), float(np.quantile(stats, 1 - a))
