"""Sequential posterior-predictive imputation and per-period effects.

For every retained posterior draw, post-intervention counterfactual
outcomes are imputed one period at a time: the lag feeding period T0+1 is
the OBSERVED (standardized) outcome at T0, and every later period chains on
the previously IMPUTED value, never on the observed treated outcome (which
is contaminated by the intervention). Effects are observed minus imputed on
the original outcome scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .mcmc import PosteriorDraws
from .panel import PanelData, StandardizationRecord

__all__ = ["CounterfactualDraws", "EffectEstimate", "impute", "effects"]


@dataclass(frozen=True)
class CounterfactualDraws:
    """Imputed no-intervention outcomes, original scale, (draws, T - T0)."""

    values: np.ndarray
    periods: tuple  # 1-based period indices T0+1..T
    provenance: dict

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(self.periods):
            raise ValidationError("counterfactual matrix must be draws x post-periods")
        if not np.all(np.isfinite(self.values)):
            raise NumericalError("counterfactual draws contain non-finite values")


@dataclass(frozen=True)
class EffectEstimate:
    """Posterior summary of the intervention effect at one period."""

    period: int
    mean: float
    sd: float
    lower: float
    upper: float
    prob_negative: float
    alpha: float


def impute(draws: PosteriorDraws, panel: PanelData, record: StandardizationRecord,
           rng_seed: int) -> CounterfactualDraws:
    """Draw counterfactual outcome paths from the posterior predictive.

    `panel` is on the original outcome scale; internal computation happens
    on the standardized scale defined by `record` and results are mapped
    back. All chains' retained draws are pooled; periods are processed in
    strictly increasing order because of the lag chaining.
    """
    T0, T = panel.intervention_time, panel.n_periods
    n_post = T - T0
    beta = draws.pooled("beta")
    ar = draws.pooled("ar_coef")
    sig = np.sqrt(draws.pooled("sigma2_out"))
    R = beta.shape[0]
    if R == 0:
        raise ValidationError("no retained draws to impute from")
    if beta.shape[1] != panel.n_donors:
        raise ValidationError("draws and panel disagree on the donor count")

    V_std = record.standardize_outcomes(panel.donor_outcomes[T0:T])
    if not np.all(np.isfinite(V_std)):
        raise ValidationError("donor outcomes are missing or non-finite after T0")

    rng = np.random.Generator(np.random.PCG64(rng_seed))
    lag = np.full(R, record.standardize_outcomes(panel.treated_outcomes[T0 - 1]))
    out = np.empty((R, n_post))
    for k in range(n_post):
        mean = beta @ V_std[k] + ar * lag
        y_std = mean + sig * rng.standard_normal(R)
        out[:, k] = record.unstandardize_outcomes(y_std)
        lag = y_std

    return CounterfactualDraws(
        values=out,
        periods=tuple(range(T0 + 1, T + 1)),
        provenance={**draws.provenance, "impute_seed": int(rng_seed)},
    )


def effects(cf: CounterfactualDraws, panel: PanelData, alpha=0.05):
    """Per-period effect summaries: observed minus imputed, original scale.

    Credible intervals are equal-tailed at quantiles (alpha/2, 1 - alpha/2).
    Returns one EffectEstimate per post-intervention period, in period order.
    """
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    T0 = panel.intervention_time
    observed = panel.treated_outcomes[T0:]
    if observed.shape[0] != len(cf.periods):
        raise ValidationError("panel and counterfactual draws disagree on post-periods")
    out = []
    for k, t in enumerate(cf.periods):
        tau = observed[k] - cf.values[:, k]
        lo, hi = np.quantile(tau, [alpha / 2.0, 1.0 - alpha / 2.0])
        out.append(EffectEstimate(
            period=int(t),
            mean=float(tau.mean()),
            sd=float(tau.std(ddof=1)) if tau.size > 1 else 0.0,
            lower=float(lo),
            upper=float(hi),
            prob_negative=float(np.mean(tau < 0.0)),
            alpha=float(alpha),
        ))
    return out
