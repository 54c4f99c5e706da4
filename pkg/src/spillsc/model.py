"""Outcome model density and the two distance-based prior families.

The pre-intervention outcome model is an autoregressive synthetic-control
regression: y_t ~ Normal(V_t' beta + ar_coef * y_{t-1}, sigma2_out) for
t = 2..T0 (the first period is conditioned on, since it has no lag). The
second Normal parameter is a VARIANCE throughout, and the half-Student-t
prior sits on that variance directly.

Priors on the synthetic-control coefficients:

* distance horseshoe (DHS): beta_i ~ N(0, sigma2_out * lambda_i^2 * zeta^2)
  with local scale lambda_i ~ HalfCauchy(d_c[i]) and global scale
  zeta ~ HalfCauchy(1);
* distance spike-and-slab (DS2): beta_i is exactly zero when the donor's
  weighted distance falls at or below the cutoff rho, otherwise
  beta_i ~ N(0, sigma2_out * nu^2) with nu ~ HalfCauchy(1).

Half-Cauchy scales admit the usual inverse-gamma auxiliary representation
(lambda_i^2 | a_i ~ InvGamma(1/2, 1/a_i), a_i ~ InvGamma(1/2, 1/d_i^2)),
which is what makes every shrinkage update in the sampler conjugate; the
auxiliaries live in ModelState.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln

from .distance import SCALE_FLOOR, WeightedDistances, cutoff_from_exclusion_fraction
from .errors import NumericalError, ValidationError
from .panel import PanelData

__all__ = [
    "DHS",
    "DS2",
    "PriorSpec",
    "ModelState",
    "assign_components",
    "log_likelihood",
    "log_prior",
    "log_posterior",
    "half_cauchy_logpdf",
    "half_t_logpdf",
]

DHS = "DHS"
DS2 = "DS2"


@dataclass(frozen=True)
class PriorSpec:
    """Prior family choice plus every hyperparameter.

    For DS2 either `rho` (the cutoff on weighted distance) or
    `exclusion_fraction` (a target share of donors to exclude, converted to
    rho via the empirical quantile of d_c) must be given, not both.
    """

    family: str
    kappa_d: float = 0.0
    rho: float | None = None
    exclusion_fraction: float | None = None
    mu_ar: float = 0.0
    sigma_ar: float = 3.0
    nu_var: float = 4.0
    tau_var: float = 1.0
    # sensitivity switch: place the half-t on the variance itself (default)
    # or on its square root
    variance_prior_on: str = "variance"

    def __post_init__(self):
        if self.family not in (DHS, DS2):
            raise ValidationError(f"family must be '{DHS}' or '{DS2}', got {self.family!r}")
        if not (0.0 <= self.kappa_d <= 1.0):
            raise ValidationError(f"kappa_d must be in [0, 1], got {self.kappa_d}")
        for name in ("sigma_ar", "nu_var", "tau_var"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be strictly positive")
        if self.variance_prior_on not in ("variance", "sd"):
            raise ValidationError("variance_prior_on must be 'variance' or 'sd'")
        if self.family == DS2:
            if (self.rho is None) == (self.exclusion_fraction is None):
                raise ValidationError("DS2 requires exactly one of rho or exclusion_fraction")
            if self.rho is not None and not (0.0 <= self.rho <= 1.0):
                raise ValidationError(f"rho must be in [0, 1], got {self.rho}")
            if self.exclusion_fraction is not None and not (0.0 <= self.exclusion_fraction < 1.0):
                raise ValidationError(f"exclusion_fraction must be in [0, 1), got {self.exclusion_fraction}")
        elif self.rho is not None or self.exclusion_fraction is not None:
            raise ValidationError("rho / exclusion_fraction only apply to the DS2 family")

    def resolve_rho(self, distances: WeightedDistances) -> "PriorSpec":
        """Return a spec with a concrete rho (DS2 only; DHS passes through)."""
        if self.family != DS2 or self.rho is not None:
            return self
        rho = cutoff_from_exclusion_fraction(distances.d_c, self.exclusion_fraction)
        return replace(self, rho=rho, exclusion_fraction=None)


@dataclass
class ModelState:
    """One point in the sampler's state space.

    Family-irrelevant fields are carried at neutral values (e.g. `nu2_slab`
    under DHS) so a single type covers both priors.
    """

    beta: np.ndarray
    ar_coef: float
    sigma2_out: float
    lambda2: np.ndarray
    zeta2: float
    nu2_slab: float
    omega: np.ndarray
    aux_lambda: np.ndarray
    aux_zeta: float
    aux_nu: float

    def validate(self, family):
        J = self.beta.shape[0]
        if self.lambda2.shape != (J,) or self.aux_lambda.shape != (J,) or self.omega.shape != (J,):
            raise ValidationError("state vectors must all have length J")
        for name in ("sigma2_out", "zeta2", "nu2_slab", "aux_zeta", "aux_nu"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be strictly positive")
        if np.any(self.lambda2 <= 0) or np.any(self.aux_lambda <= 0):
            raise ValidationError("lambda2 and aux_lambda must be strictly positive")
        if family == DS2 and np.any((self.omega == 0) & (self.beta != 0.0)):
            raise ValidationError("DS2 state has nonzero beta where omega = 0")


def assign_components(distances: WeightedDistances, rho) -> np.ndarray:
    """Deterministic DS2 component assignment: omega_i = 1(d_c[i] > rho)."""
    if not (0.0 <= rho <= 1.0):
        raise ValidationError(f"rho must be in [0, 1], got {rho}")
    return (distances.d_c > rho).astype(np.int8)


def half_cauchy_logpdf(x, scale):
    """Log density of |Cauchy(0, scale)| at x >= 0."""
    x = np.asarray(x, dtype=float)
    return np.log(2.0 / np.pi) - np.log(scale) - np.log1p((x / scale) ** 2)


def half_t_logpdf(x, nu, tau):
    """Log density of |tau * StudentT(nu)| at x >= 0."""
    x = np.asarray(x, dtype=float)
    norm = (
        np.log(2.0)
        + gammaln((nu + 1.0) / 2.0)
        - gammaln(nu / 2.0)
        - 0.5 * np.log(nu * np.pi)
        - np.log(tau)
    )
    return norm - (nu + 1.0) / 2.0 * np.log1p(x * x / (nu * tau * tau))


def _normal_logpdf(x, mean, var):
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)


def log_likelihood(state: ModelState, panel: PanelData):
    """Pre-period log likelihood, summed over t = 2..T0."""
    T0 = panel.intervention_time
    y = panel.treated_outcomes
    with np.errstate(over="ignore"):  # overflow surfaces as the error below
        mean = panel.donor_outcomes[1:T0] @ state.beta + state.ar_coef * y[: T0 - 1]
        ll = float(np.sum(_normal_logpdf(y[1:T0], mean, state.sigma2_out)))
    if not np.isfinite(ll):
        raise NumericalError("log likelihood is not finite")
    return ll


def log_prior(state: ModelState, spec: PriorSpec, distances: WeightedDistances, scale_floor=SCALE_FLOOR):
    """Joint log prior of the state under the given family.

    DHS includes the local/global half-Cauchy scale densities; DS2's spike
    component contributes zero (the point mass is respected structurally,
    and a nonzero coefficient on a spiked donor is a hard error).
    """
    lp = float(_normal_logpdf(state.ar_coef, spec.mu_ar, spec.sigma_ar**2))
    if spec.variance_prior_on == "variance":
        lp += float(half_t_logpdf(state.sigma2_out, spec.nu_var, spec.tau_var))
    else:
        # half-t on sd, expressed as a density of the variance
        sd = np.sqrt(state.sigma2_out)
        lp += float(half_t_logpdf(sd, spec.nu_var, spec.tau_var)) - np.log(2.0 * sd)
    if spec.family == DHS:
        var = state.sigma2_out * state.lambda2 * state.zeta2
        lp += float(np.sum(_normal_logpdf(state.beta, 0.0, var)))
        lp += float(np.sum(half_cauchy_logpdf(np.sqrt(state.lambda2), distances.floored(scale_floor))))
        lp += float(half_cauchy_logpdf(np.sqrt(state.zeta2), 1.0))
    else:
        active = state.omega.astype(bool)
        if np.any(state.beta[~active] != 0.0):
            raise ValidationError("DS2 state has nonzero beta where omega = 0")
        var = state.sigma2_out * state.nu2_slab
        lp += float(np.sum(_normal_logpdf(state.beta[active], 0.0, var)))
        lp += float(half_cauchy_logpdf(np.sqrt(state.nu2_slab), 1.0))
    if not np.isfinite(lp):
        raise NumericalError("log prior is not finite")
    return lp


def log_posterior(state: ModelState, spec: PriorSpec, panel: PanelData, distances: WeightedDistances):
    """Unnormalized log posterior density."""
    return log_likelihood(state, panel) + log_prior(state, spec, distances)
