from .battery import ALPHA, FACTORS, BatteryReport, HypothesisResult, Table, hypothesis_battery
from .models import (ContractError, Design, LogisticFit, MissingLevelError, OlsFit, RankError,
                     SeparationError, StatsError, fit_logistic, fit_ols, lr_test, partial_eta_sq_bootstrap,
                     partial_eta_sq_ci, wald_test)
from .special import chisq_sf, f_sf, incomplete_beta, ncf_cdf, normal_sf, t_sf

__all__ = [
    "ALPHA", "FACTORS", "BatteryReport", "HypothesisResult", "Table", "hypothesis_battery",
    "ContractError", "Design", "LogisticFit", "MissingLevelError", "OlsFit", "RankError",
    "SeparationError", "StatsError", "fit_logistic", "fit_ols", "lr_test", "partial_eta_sq_bootstrap",
    "partial_eta_sq_ci", "wald_test",
    "chisq_sf", "f_sf", "incomplete_beta", "ncf_cdf", "normal_sf", "t_sf",
]
