"""Pure-NumPy Gibbs kernel: the fallback backend.

One call runs one full chain. The sweep per iteration is

1. joint conjugate Gaussian draw of (beta_active, ar_coef) given the
   shrinkage scales and outcome variance (Cholesky of the (K+1)-dim
   precision);
2. conjugate inverse-gamma updates of the shrinkage scales and their
   inverse-gamma auxiliaries (DHS: lambda_i^2, a_i, zeta^2, a_zeta;
   DS2: nu^2, a_nu);
3. stepping-out + shrinkage slice update of log(sigma2_out), whose half-t
   prior and appearance in the coefficient prior variance defeat conjugacy.

The compiled backend (`_gibbs.pyx`) implements the same sweep and consumes
random variates from the same generator in the same order: per iteration
K+1 standard normals, then the gamma variates of step 2, then one standard
exponential and a data-dependent number of uniforms for the slice update.
Draw-for-draw equality across backends is still not guaranteed (different
linear-algebra code paths round differently, and the slice sampler's
variate count depends on those roundings); each backend is individually
deterministic given the seed.

Inverse-gamma sampling convention: X ~ InvGamma(shape, rate) is drawn as
rate / Gamma(shape, 1).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from ..errors import NumericalError

__all__ = ["run_chain_dhs", "run_chain_ds2"]

_MAX_SHRINK = 1000


def _chol_with_jitter(P, stats):
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        pass
    base = np.trace(P) / P.shape[0]
    for k in range(5):
        stats["jitter_retries"] += 1
        jitter = base * 1e-10 * 10.0**k
        try:
            return np.linalg.cholesky(P + jitter * np.eye(P.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise NumericalError("coefficient-block precision matrix is not positive definite")


def _log1p_exp(x):
    if x > 35.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def _slice_update_log_sigma2(sigma2, rss_plus_sb, n_count, nu_var, tau_var, prior_exp,
                             rng, slice_width, max_slice_steps, iteration, stats):
    """One slice-sampling move on u = log(sigma2).

    `prior_exp` is 2.0 when the half-t prior sits on the variance and 1.0
    when it sits on the sd (the log1p argument and the Jacobian change).
    """
    log_nu_tau2 = math.log(nu_var * tau_var * tau_var)

    def target(u):
        stats["slice_evals"] += 1
        quad = 0.0
        if rss_plus_sb > 0.0:
            if u < -700.0:  # exp(-u) would overflow; the target is -inf there
                return -math.inf
            quad = -0.5 * rss_plus_sb * math.exp(-u)
        return (
            -0.5 * n_count * u
            + quad
            - 0.5 * (nu_var + 1.0) * _log1p_exp(prior_exp * u - log_nu_tau2)
            + 0.5 * prior_exp * u
        )

    u0 = math.log(sigma2)
    f0 = target(u0)
    if not math.isfinite(f0):
        raise NumericalError(f"non-finite variance slice target at iteration {iteration}")
    log_y = f0 - rng.standard_exponential()

    u_l = u0 - slice_width * rng.random()
    u_r = u_l + slice_width
    steps = 0
    while target(u_l) > log_y:
        u_l -= slice_width
        steps += 1
        stats["slice_expansions"] += 1
        if steps > max_slice_steps:
            raise NumericalError(f"slice sampler exceeded max_slice_steps at iteration {iteration}")
    steps = 0
    while target(u_r) > log_y:
        u_r += slice_width
        steps += 1
        stats["slice_expansions"] += 1
        if steps > max_slice_steps:
            raise NumericalError(f"slice sampler exceeded max_slice_steps at iteration {iteration}")

    for _ in range(_MAX_SHRINK):
        u1 = u_l + rng.random() * (u_r - u_l)
        if target(u1) > log_y:
            return math.exp(u1)
        if u1 < u0:
            u_l = u1
        else:
            u_r = u1
    raise NumericalError(f"slice sampler shrank without acceptance at iteration {iteration}")


def _draw_coefficients(G, Dty, sigma2, prior_prec, prior_mean_term, rng, stats):
    """Exact draw from the Gaussian full conditional of (beta_active, ar_coef)."""
    P = G / sigma2 + np.diag(prior_prec)
    rhs = Dty / sigma2 + prior_mean_term
    L = _chol_with_jitter(P, stats)
    mean = cho_solve((L, True), rhs)
    z = rng.standard_normal(P.shape[0])
    return mean + solve_triangular(L, z, lower=True, trans="T")


def _retain_index(it, n_burnin, thin):
    if it <= n_burnin or (it - n_burnin) % thin:
        return -1
    return (it - n_burnin) // thin - 1


def run_chain_dhs(y2, D, G, Dty, d_scale,
                  mu_ar, sigma_ar, nu_var, tau_var, prior_exp,
                  n_iterations, n_burnin, thin, slice_width, max_slice_steps, freeze_scales,
                  beta0, ar0, sigma2_0, lambda2_0, alam0, zeta2_0, azeta0,
                  rng,
                  beta_out, ar_out, sigma2_out, lambda2_out, alam_out, zeta2_out, azeta_out):
    """Run one DHS chain; outputs are written into the *_out arrays.

    `y2` holds the outcomes for t = 2..T0 and `D` the matching design rows
    (donor outcomes plus the lag column last); `G = D'D` and `Dty = D'y2`
    are precomputed by the caller. Returns a dict of sampler statistics.
    """
    N, K1 = D.shape
    K = K1 - 1
    stats = {"slice_evals": 0, "slice_expansions": 0, "jitter_retries": 0}

    beta = np.array(beta0, dtype=float)
    ar = float(ar0)
    sigma2 = float(sigma2_0)
    lambda2 = np.array(lambda2_0, dtype=float)
    alam = np.array(alam0, dtype=float)
    zeta2 = float(zeta2_0)
    azeta = float(azeta0)
    d2 = np.asarray(d_scale, dtype=float) ** 2

    ar_prec = 1.0 / (sigma_ar * sigma_ar)
    prior_mean_term = np.zeros(K1)
    prior_mean_term[K] = mu_ar * ar_prec
    prior_prec = np.empty(K1)
    n_count = N + K

    for it in range(1, n_iterations + 1):
        prior_prec[:K] = 1.0 / (sigma2 * lambda2 * zeta2)
        prior_prec[K] = ar_prec
        b = _draw_coefficients(G, Dty, sigma2, prior_prec, prior_mean_term, rng, stats)
        beta, ar = b[:K], float(b[K])

        if not freeze_scales:
            beta_sq = beta * beta
            rate_l = 1.0 / alam + beta_sq / (2.0 * sigma2 * zeta2)
            lambda2 = rate_l / rng.standard_gamma(1.0, size=K)
            rate_a = 1.0 / d2 + 1.0 / lambda2
            alam = rate_a / rng.standard_gamma(1.0, size=K)
            s_over_lam = float(np.sum(beta_sq / lambda2))
            rate_z = 1.0 / azeta + s_over_lam / (2.0 * sigma2)
            zeta2 = rate_z / rng.standard_gamma((K + 1) / 2.0)
            azeta = (1.0 + 1.0 / zeta2) / rng.standard_gamma(1.0)

            resid = y2 - D @ b
            rss = float(resid @ resid)
            sb = s_over_lam / zeta2
            sigma2 = _slice_update_log_sigma2(
                sigma2, rss + sb, n_count, nu_var, tau_var, prior_exp, rng,
                slice_width, max_slice_steps, it, stats)

        idx = _retain_index(it, n_burnin, thin)
        if idx >= 0:
            beta_out[idx] = beta
            ar_out[idx] = ar
            sigma2_out[idx] = sigma2
            lambda2_out[idx] = lambda2
            alam_out[idx] = alam
            zeta2_out[idx] = zeta2
            azeta_out[idx] = azeta
    return stats


def run_chain_ds2(y2, D, G, Dty,
                  mu_ar, sigma_ar, nu_var, tau_var, prior_exp,
                  n_iterations, n_burnin, thin, slice_width, max_slice_steps, freeze_scales,
                  beta0, ar0, sigma2_0, nu2_0, anu0,
                  rng,
                  beta_out, ar_out, sigma2_out, nu2_out, anu_out):
    """Run one DS2 chain over the ACTIVE donors only.

    `D` contains one column per slab donor plus the lag column; spiked
    donors never enter (their coefficients are structural zeros handled by
    the caller). K = 0 is valid: only the lag coefficient is sampled.
    """
    N, K1 = D.shape
    K = K1 - 1
    stats = {"slice_evals": 0, "slice_expansions": 0, "jitter_retries": 0}

    beta = np.array(beta0, dtype=float)
    ar = float(ar0)
    sigma2 = float(sigma2_0)
    nu2 = float(nu2_0)
    anu = float(anu0)

    ar_prec = 1.0 / (sigma_ar * sigma_ar)
    prior_mean_term = np.zeros(K1)
    prior_mean_term[K] = mu_ar * ar_prec
    prior_prec = np.empty(K1)
    n_count = N + K

    for it in range(1, n_iterations + 1):
        prior_prec[:K] = 1.0 / (sigma2 * nu2)
        prior_prec[K] = ar_prec
        b = _draw_coefficients(G, Dty, sigma2, prior_prec, prior_mean_term, rng, stats)
        beta, ar = b[:K], float(b[K])

        if not freeze_scales:
            sb_raw = float(beta @ beta)
            rate_n = 1.0 / anu + sb_raw / (2.0 * sigma2)
            nu2 = rate_n / rng.standard_gamma((K + 1) / 2.0)
            anu = (1.0 + 1.0 / nu2) / rng.standard_gamma(1.0)

            resid = y2 - D @ b
            rss = float(resid @ resid)
            sigma2 = _slice_update_log_sigma2(
                sigma2, rss + sb_raw / nu2, n_count, nu_var, tau_var, prior_exp, rng,
                slice_width, max_slice_steps, it, stats)

        idx = _retain_index(it, n_burnin, thin)
        if idx >= 0:
            beta_out[idx] = beta
            ar_out[idx] = ar
            sigma2_out[idx] = sigma2
            nu2_out[idx] = nu2
            anu_out[idx] = anu
    return stats
