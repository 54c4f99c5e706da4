"""Metropolis-within-Gibbs sampler driver and convergence diagnostics.

`fit` targets the posterior of (beta, ar_coef, sigma2_out) plus the
shrinkage hyperparameters under either prior family, delegating the hot
iteration loop to a kernel backend (see `spillsc._kernels`). Chains are
sequential, each with its own generator spawned from the master seed, so
results are reproducible and independent of chain count elsewhere.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .distance import SCALE_FLOOR, WeightedDistances
from .errors import NumericalError, ValidationError
from .model import DHS, DS2, ModelState, PriorSpec, assign_components, log_posterior
from .panel import PanelData

__all__ = ["McmcConfig", "PosteriorDraws", "Diagnostics", "initialize", "fit", "diagnostics",
           "split_rhat", "ess_bulk"]


@dataclass(frozen=True)
class McmcConfig:
    """Sampler run settings.

    `n_burnin=None` defaults to half of `n_iterations`. The retained count
    per chain is M = (n_iterations - n_burnin) / thin, which must divide
    evenly.
    """

    n_chains: int = 1
    n_iterations: int = 4000
    n_burnin: int | None = None
    seed: int = 0
    thin: int = 1
    slice_width: float = 1.0
    max_slice_steps: int = 100

    def __post_init__(self):
        if self.n_burnin is None:
            object.__setattr__(self, "n_burnin", self.n_iterations // 2)
        if self.n_chains < 1:
            raise ValidationError("n_chains must be >= 1")
        if not (0 <= self.n_burnin < self.n_iterations):
            raise ValidationError("need 0 <= n_burnin < n_iterations")
        if self.thin < 1:
            raise ValidationError("thin must be >= 1")
        if (self.n_iterations - self.n_burnin) % self.thin:
            raise ValidationError("(n_iterations - n_burnin) must be divisible by thin")
        if not self.slice_width > 0:
            raise ValidationError("slice_width must be positive")
        if self.max_slice_steps < 1:
            raise ValidationError("max_slice_steps must be >= 1")

    @property
    def n_retained(self):
        return (self.n_iterations - self.n_burnin) // self.thin


@dataclass
class PosteriorDraws:
    """Retained draws, one block of arrays per chain dimension.

    beta is (n_chains, M, J) on the full donor index; under DS2 the columns
    of spiked donors are exact zeros. Family-specific hyperparameter arrays
    are None when they do not apply.
    """

    family: str
    donor_labels: tuple
    beta: np.ndarray
    ar_coef: np.ndarray
    sigma2_out: np.ndarray
    lambda2: np.ndarray | None
    aux_lambda: np.ndarray | None
    zeta2: np.ndarray | None
    aux_zeta: np.ndarray | None
    nu2_slab: np.ndarray | None
    aux_nu: np.ndarray | None
    omega: np.ndarray | None
    provenance: dict = field(default_factory=dict)
    sampler_stats: list = field(default_factory=list)

    @property
    def n_chains(self):
        return self.beta.shape[0]

    @property
    def n_retained(self):
        return self.beta.shape[1]

    @property
    def n_donors(self):
        return self.beta.shape[2]

    def pooled(self, name):
        """Draws of one parameter pooled across chains (rows = draws)."""
        arr = getattr(self, name)
        if arr is None:
            raise ValidationError(f"{name} not tracked for family {self.family}")
        return arr.reshape(-1, *arr.shape[2:])

    def scalar_parameters(self):
        """Named (n_chains, M) arrays for every scalar parameter."""
        out = {f"beta[{lab}]": self.beta[:, :, j] for j, lab in enumerate(self.donor_labels)}
        out["ar_coef"] = self.ar_coef
        out["sigma2_out"] = self.sigma2_out
        if self.family == DHS:
            out["zeta2"] = self.zeta2
        else:
            out["nu2_slab"] = self.nu2_slab
        return out

    def state_at(self, chain, idx) -> ModelState:
        """Reconstruct a full ModelState from one retained draw (for restarts)."""
        J = self.n_donors
        dhs = self.family == DHS
        return ModelState(
            beta=self.beta[chain, idx].copy(),
            ar_coef=float(self.ar_coef[chain, idx]),
            sigma2_out=float(self.sigma2_out[chain, idx]),
            lambda2=self.lambda2[chain, idx].copy() if dhs else np.ones(J),
            zeta2=float(self.zeta2[chain, idx]) if dhs else 1.0,
            nu2_slab=float(self.nu2_slab[chain, idx]) if not dhs else 1.0,
            omega=self.omega.copy() if self.omega is not None else np.ones(J, dtype=np.int8),
            aux_lambda=self.aux_lambda[chain, idx].copy() if dhs else np.full(J, 2.0),
            aux_zeta=float(self.aux_zeta[chain, idx]) if dhs else 2.0,
            aux_nu=float(self.aux_nu[chain, idx]) if not dhs else 2.0,
        )


@dataclass
class Diagnostics:
    """Split R-hat and bulk effective sample size per scalar parameter."""

    split_rhat: dict
    ess_bulk: dict
    sampler_stats: dict
    n_chains: int
    n_retained: int


def initialize(panel: PanelData, spec: PriorSpec, distances: WeightedDistances,
               rng=None, scale_floor=SCALE_FLOOR) -> ModelState:
    """Deterministic starting state.

    beta starts at zero, the lag coefficient at its prior mean, and the
    outcome variance at the residual variance of a lag-only regression on
    the pre-period (floored at 1e-4). Local scales start at the floored
    weighted distances squared; global scales at one. The shape-1
    inverse-gamma conditionals of the auxiliaries have no finite mean, so
    auxiliaries start at the harmonic mean of their conditional (`rng` is
    accepted for interface symmetry and unused).
    """
    spec = spec.resolve_rho(distances)
    J = panel.n_donors
    T0 = panel.intervention_time
    y = panel.treated_outcomes
    y2, ylag = y[1:T0], y[: T0 - 1]
    denom = float(ylag @ ylag)
    phi_hat = float(y2 @ ylag) / denom if denom > 0 else 0.0
    resid = y2 - phi_hat * ylag
    # denominator T0 keeps this below the pre-period variance of y
    sigma2 = max(float(resid @ resid) / T0, 1e-4)

    d = distances.floored(scale_floor)
    omega = assign_components(distances, spec.rho) if spec.family == DS2 else np.ones(J, dtype=np.int8)
    return ModelState(
        beta=np.zeros(J),
        ar_coef=spec.mu_ar,
        sigma2_out=sigma2,
        lambda2=d**2,
        zeta2=1.0,
        nu2_slab=1.0,
        omega=omega,
        aux_lambda=2.0 / d**2,
        aux_zeta=2.0,
        aux_nu=2.0,
    )


def _config_digest(spec: PriorSpec, config: McmcConfig, scale_floor):
    payload = {
        "family": spec.family, "kappa_d": spec.kappa_d, "rho": spec.rho,
        "mu_ar": spec.mu_ar, "sigma_ar": spec.sigma_ar,
        "nu_var": spec.nu_var, "tau_var": spec.tau_var,
        "variance_prior_on": spec.variance_prior_on,
        "n_chains": config.n_chains, "n_iterations": config.n_iterations,
        "n_burnin": config.n_burnin, "seed": config.seed, "thin": config.thin,
        "slice_width": config.slice_width, "max_slice_steps": config.max_slice_steps,
        "scale_floor": scale_floor,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def fit(panel: PanelData, spec: PriorSpec, distances: WeightedDistances, config: McmcConfig,
        freeze_scales=False, init_state: ModelState | None = None,
        scale_floor=SCALE_FLOOR) -> PosteriorDraws:
    """Draw from the posterior of the synthetic-control model.

    `panel` must already be standardized. For DS2 the component assignment
    is computed from the (resolved) cutoff before sampling and never
    changes; spiked donors' coefficients are exact structural zeros.

    `freeze_scales` pins every shrinkage scale and the outcome variance at
    their initial values so the coefficient block can be checked against
    its closed-form Gaussian conditional.
    """
    spec = spec.resolve_rho(distances)
    J = panel.n_donors
    if distances.n_donors != J:
        raise ValidationError("distances and panel disagree on the donor count")
    T0 = panel.intervention_time
    y = panel.treated_outcomes
    M = config.n_retained

    if spec.family == DS2:
        omega = assign_components(distances, spec.rho)
        active = np.flatnonzero(omega)
    else:
        omega = None
        active = np.arange(J)
    K = active.size

    init = init_state if init_state is not None else initialize(panel, spec, distances, scale_floor=scale_floor)
    init.validate(spec.family)
    lp0 = log_posterior(init, spec, panel, distances)
    if not np.isfinite(lp0):
        raise NumericalError("posterior density is not finite at the initial state")

    D = np.column_stack([panel.donor_outcomes[1:T0, active], y[: T0 - 1]])
    y2 = np.ascontiguousarray(y[1:T0])
    D = np.ascontiguousarray(D)
    G = np.ascontiguousarray(D.T @ D)
    Dty = np.ascontiguousarray(D.T @ y2)
    d_scale = np.ascontiguousarray(distances.floored(scale_floor))

    C = config.n_chains
    beta = np.zeros((C, M, J))
    ar = np.empty((C, M))
    sig2 = np.empty((C, M))
    if spec.family == DHS:
        lambda2 = np.empty((C, M, J))
        aux_lambda = np.empty((C, M, J))
        zeta2 = np.empty((C, M))
        aux_zeta = np.empty((C, M))
        nu2 = aux_nu = None
    else:
        lambda2 = aux_lambda = zeta2 = aux_zeta = None
        nu2 = np.empty((C, M))
        aux_nu = np.empty((C, M))

    prior_exp = 2.0 if spec.variance_prior_on == "variance" else 1.0
    stats = []
    children = np.random.SeedSequence(config.seed).spawn(C)
    for c in range(C):
        rng = np.random.Generator(np.random.PCG64(children[c]))
        beta_c = np.zeros((M, K))
        ar_c = np.empty(M)
        sig2_c = np.empty(M)
        if spec.family == DHS:
            lam_c = np.empty((M, J))
            alam_c = np.empty((M, J))
            zeta_c = np.empty(M)
            azeta_c = np.empty(M)
            st = _kernels.run_chain_dhs(
                y2, D, G, Dty, d_scale,
                spec.mu_ar, spec.sigma_ar, spec.nu_var, spec.tau_var, prior_exp,
                config.n_iterations, config.n_burnin, config.thin,
                config.slice_width, config.max_slice_steps, freeze_scales,
                init.beta, init.ar_coef, init.sigma2_out,
                init.lambda2, init.aux_lambda, init.zeta2, init.aux_zeta,
                rng,
                beta_c, ar_c, sig2_c, lam_c, alam_c, zeta_c, azeta_c)
            lambda2[c] = lam_c
            aux_lambda[c] = alam_c
            zeta2[c] = zeta_c
            aux_zeta[c] = azeta_c
        else:
            nu2_c = np.empty(M)
            anu_c = np.empty(M)
            st = _kernels.run_chain_ds2(
                y2, D, G, Dty,
                spec.mu_ar, spec.sigma_ar, spec.nu_var, spec.tau_var, prior_exp,
                config.n_iterations, config.n_burnin, config.thin,
                config.slice_width, config.max_slice_steps, freeze_scales,
                np.ascontiguousarray(init.beta[active]), init.ar_coef, init.sigma2_out,
                init.nu2_slab, init.aux_nu,
                rng,
                beta_c, ar_c, sig2_c, nu2_c, anu_c)
            nu2[c] = nu2_c
            aux_nu[c] = anu_c
        beta[c][:, active] = beta_c
        ar[c] = ar_c
        sig2[c] = sig2_c
        stats.append(st)

    return PosteriorDraws(
        family=spec.family,
        donor_labels=panel.donor_labels,
        beta=beta, ar_coef=ar, sigma2_out=sig2,
        lambda2=lambda2, aux_lambda=aux_lambda, zeta2=zeta2, aux_zeta=aux_zeta,
        nu2_slab=nu2, aux_nu=aux_nu, omega=omega,
        provenance={
            "seed": config.seed,
            "config_hash": _config_digest(spec, config, scale_floor),
            "kernel_backend": _kernels.BACKEND,
        },
        sampler_stats=stats,
    )


def _split_chains(x):
    C, M = x.shape
    half = M // 2
    return np.vstack([x[:, :half], x[:, M - half:]])


def _rank_normalize(x):
    from scipy.special import ndtri
    from scipy.stats import rankdata

    r = rankdata(x, method="average").reshape(x.shape)
    return ndtri((r - 0.375) / (x.size + 0.25))


def split_rhat(chains):
    """Rank-normalized split R-hat on a (n_chains, n_draws) array.

    Values are clamped below at 1.0; identical constant chains give 1.0 and
    chains stuck at distinct constants give +inf.
    """
    x = _split_chains(np.asarray(chains, dtype=float))
    if np.all(x == x.flat[0]):
        return 1.0
    if np.all(x == x[:, :1]):
        # each chain stuck at its own constant: no within-chain variance
        return float("inf")
    z = _rank_normalize(x)
    m, n = z.shape
    W = float(z.var(axis=1, ddof=1).mean())
    B = n * float(z.mean(axis=1).var(ddof=1))
    if W == 0.0:
        return float("inf")
    return max(1.0, float(np.sqrt(((n - 1) / n * W + B / n) / W)))


def _autocov(x):
    n = x.shape[0]
    xc = x - x.mean()
    f = np.fft.rfft(xc, 2 * n)
    return np.fft.irfft(f * np.conj(f))[:n].real / n


def ess_bulk(chains):
    """Rank-normalized bulk effective sample size (Geyer-truncated).

    Returns NaN for constant input; otherwise capped at the total retained
    draw count.
    """
    x = np.asarray(chains, dtype=float)
    total = x.size
    x = _split_chains(x)
    if np.all(x == x.flat[0]):
        return float("nan")
    z = _rank_normalize(x)
    m, n = z.shape
    acov = np.array([_autocov(z[c]) for c in range(m)])
    chain_means = z.mean(axis=1)
    mean_var = float(acov[:, 0].mean()) * n / (n - 1.0)
    var_plus = mean_var * (n - 1.0) / n
    if m > 1:
        var_plus += float(chain_means.var(ddof=1))
    if var_plus == 0.0:
        return float("nan")

    rho = np.zeros(n)
    rho[0] = 1.0
    rho[1] = 1.0 - (mean_var - float(acov[:, 1].mean())) / var_plus
    even, odd = rho[0], rho[1]
    t = 1
    while t < n - 3 and (even + odd) > 0.0:
        even = 1.0 - (mean_var - float(acov[:, t + 1].mean())) / var_plus
        odd = 1.0 - (mean_var - float(acov[:, t + 2].mean())) / var_plus
        if even + odd >= 0.0:
            rho[t + 1] = even
            rho[t + 2] = odd
        t += 2
    max_t = t - 2
    if even > 0.0:
        rho[max_t + 1] = even
    # Geyer initial monotone sequence
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2
    tau = -1.0 + 2.0 * float(np.sum(rho[: max_t + 2]))
    tau = max(tau, 1.0 / np.log10(m * n))
    return float(min(m * n / tau, total))


def diagnostics(draws: PosteriorDraws) -> Diagnostics:
    """Split R-hat and bulk ESS for every scalar parameter.

    Requires at least 4 retained draws; a single chain is split into halves.
    """
    if draws.n_retained < 4:
        raise ValidationError("diagnostics need at least 4 retained draws per chain")
    rhats, esss = {}, {}
    for name, arr in draws.scalar_parameters().items():
        rhats[name] = split_rhat(arr)
        esss[name] = ess_bulk(arr)
    agg = {}
    for st in draws.sampler_stats:
        for k, v in st.items():
            agg[k] = agg.get(k, 0) + int(v)
    return Diagnostics(split_rhat=rhats, ess_bulk=esss, sampler_stats=agg,
                       n_chains=draws.n_chains, n_retained=draws.n_retained)
