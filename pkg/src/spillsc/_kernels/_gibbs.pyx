# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Gibbs kernel; mirrors pygibbs.py sweep-for-sweep.

See pygibbs.py for the algorithm and the shared random-variate consumption
order. Random draws come from the same numpy BitGenerator stream via
numpy's C distribution functions, so both backends consume identical
variates; the coefficient block uses LAPACK (dpotrf/dpotrs/dtrtrs) on the
symmetric precision matrix.
"""

import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, isfinite, log, log1p
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_exponential,
    random_standard_gamma,
    random_standard_normal,
    random_standard_uniform,
)
from scipy.linalg.cython_lapack cimport dpotrf, dpotrs, dtrtrs

from ..errors import NumericalError

DEF MAX_SHRINK = 1000
DEF MAX_JITTER = 5


cdef inline double _log1p_exp(double x) noexcept nogil:
    if x > 35.0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef inline double _slice_target(double u, double n_count, double rss_plus_sb,
                                 double nu_var, double log_nu_tau2,
                                 double prior_exp) noexcept nogil:
    # prior_exp: 2.0 for the half-t on the variance, 1.0 for it on the sd
    cdef double quad = 0.0
    if rss_plus_sb > 0.0:  # guard: 0 * inf would be nan when exp(-u) overflows
        quad = -0.5 * rss_plus_sb * exp(-u)
    return (-0.5 * n_count * u
            + quad
            - 0.5 * (nu_var + 1.0) * _log1p_exp(prior_exp * u - log_nu_tau2)
            + 0.5 * prior_exp * u)


cdef bitgen_t *_bitgen(object rng) except NULL:
    return <bitgen_t *> PyCapsule_GetPointer(rng.bit_generator.capsule, "BitGenerator")


cdef int _draw_coefficients(const double[:, ::1] G, const double[::1] Dty, double sigma2,
                            double[::1] prior_prec, double mu_ar_term,
                            double[:, ::1] P, double[::1] b, double[::1] z,
                            bitgen_t *bg, long *jitter_retries) except -1:
    """Sample (beta_active, ar_coef) into b; P and z are scratch buffers."""
    cdef int n = <int> b.shape[0]
    cdef int info = 0, nrhs = 1
    cdef char lo = b'L', tr = b'T', di = b'N'
    cdef Py_ssize_t i, j
    cdef long attempt
    cdef double jitter, base

    base = 0.0
    for i in range(n):
        base += G[i, i] / sigma2 + prior_prec[i]
    base /= n

    jitter = 0.0
    for attempt in range(MAX_JITTER + 1):
        for i in range(n):
            for j in range(n):
                P[i, j] = G[i, j] / sigma2
            P[i, i] += prior_prec[i] + jitter
        dpotrf(&lo, &n, &P[0, 0], &n, &info)
        if info == 0:
            break
        jitter_retries[0] += 1
        jitter = base * 1e-10 * 10.0 ** attempt
    if info != 0:
        raise NumericalError("coefficient-block precision matrix is not positive definite")

    for i in range(n):
        b[i] = Dty[i] / sigma2
    b[n - 1] += mu_ar_term
    dpotrs(&lo, &n, &nrhs, &P[0, 0], &n, &b[0], &n, &info)
    if info != 0:
        raise NumericalError("coefficient-block solve failed")

    for i in range(n):
        z[i] = random_standard_normal(bg)
    dtrtrs(&lo, &tr, &di, &n, &nrhs, &P[0, 0], &n, &z[0], &n, &info)
    if info != 0:
        raise NumericalError("coefficient-block triangular solve failed")
    for i in range(n):
        b[i] += z[i]
    return 0


cdef double _slice_update(double sigma2, double rss_plus_sb, double n_count,
                          double nu_var, double tau_var, double prior_exp, bitgen_t *bg,
                          double slice_width, long max_slice_steps, long iteration,
                          long *slice_evals, long *slice_expansions) except -1.0:
    cdef double log_nu_tau2 = log(nu_var * tau_var * tau_var)
    cdef double u0 = log(sigma2)
    cdef double f0, log_y, u_l, u_r, u1
    cdef long steps, k

    f0 = _slice_target(u0, n_count, rss_plus_sb, nu_var, log_nu_tau2, prior_exp)
    slice_evals[0] += 1
    if not isfinite(f0):
        raise NumericalError(f"non-finite variance slice target at iteration {iteration}")
    log_y = f0 - random_standard_exponential(bg)

    u_l = u0 - slice_width * random_standard_uniform(bg)
    u_r = u_l + slice_width
    steps = 0
    while True:
        slice_evals[0] += 1
        if not _slice_target(u_l, n_count, rss_plus_sb, nu_var, log_nu_tau2, prior_exp) > log_y:
            break
        u_l -= slice_width
        steps += 1
        slice_expansions[0] += 1
        if steps > max_slice_steps:
            raise NumericalError(f"slice sampler exceeded max_slice_steps at iteration {iteration}")
    steps = 0
    while True:
        slice_evals[0] += 1
        if not _slice_target(u_r, n_count, rss_plus_sb, nu_var, log_nu_tau2, prior_exp) > log_y:
            break
        u_r += slice_width
        steps += 1
        slice_expansions[0] += 1
        if steps > max_slice_steps:
            raise NumericalError(f"slice sampler exceeded max_slice_steps at iteration {iteration}")

    for k in range(MAX_SHRINK):
        u1 = u_l + random_standard_uniform(bg) * (u_r - u_l)
        slice_evals[0] += 1
        if _slice_target(u1, n_count, rss_plus_sb, nu_var, log_nu_tau2, prior_exp) > log_y:
            return exp(u1)
        if u1 < u0:
            u_l = u1
        else:
            u_r = u1
    raise NumericalError(f"slice sampler shrank without acceptance at iteration {iteration}")


def run_chain_dhs(const double[::1] y2, const double[:, ::1] D, const double[:, ::1] G, const double[::1] Dty,
                  const double[::1] d_scale,
                  double mu_ar, double sigma_ar, double nu_var, double tau_var,
                  double prior_exp,
                  long n_iterations, long n_burnin, long thin,
                  double slice_width, long max_slice_steps, bint freeze_scales,
                  const double[::1] beta0, double ar0, double sigma2_0,
                  const double[::1] lambda2_0, const double[::1] alam0, double zeta2_0, double azeta0,
                  object rng,
                  double[:, ::1] beta_out, double[::1] ar_out, double[::1] sigma2_out,
                  double[:, ::1] lambda2_out, double[:, ::1] alam_out,
                  double[::1] zeta2_out, double[::1] azeta_out):
    cdef bitgen_t *bg = _bitgen(rng)
    cdef Py_ssize_t N = D.shape[0], K1 = D.shape[1], K = K1 - 1
    cdef Py_ssize_t i, j
    cdef long it, idx
    cdef long slice_evals = 0, slice_expansions = 0, jitter_retries = 0

    cdef double[::1] beta = np.array(beta0, dtype=float)
    cdef double ar = ar0
    cdef double sigma2 = sigma2_0
    cdef double[::1] lambda2 = np.array(lambda2_0, dtype=float)
    cdef double[::1] alam = np.array(alam0, dtype=float)
    cdef double zeta2 = zeta2_0
    cdef double azeta = azeta0

    cdef double[::1] d2 = np.empty(K)
    for i in range(K):
        d2[i] = d_scale[i] * d_scale[i]

    cdef double ar_prec = 1.0 / (sigma_ar * sigma_ar)
    cdef double mu_ar_term = mu_ar * ar_prec
    cdef double n_count = <double> (N + K)

    cdef double[:, ::1] P = np.empty((K1, K1))
    cdef double[::1] b = np.empty(K1)
    cdef double[::1] z = np.empty(K1)
    cdef double[::1] prior_prec = np.empty(K1)

    cdef double bsq, rate, s_over_lam, resid, rss, sb

    for it in range(1, n_iterations + 1):
        for i in range(K):
            prior_prec[i] = 1.0 / (sigma2 * lambda2[i] * zeta2)
        prior_prec[K] = ar_prec
        _draw_coefficients(G, Dty, sigma2, prior_prec, mu_ar_term, P, b, z, bg, &jitter_retries)
        for i in range(K):
            beta[i] = b[i]
        ar = b[K]

        if not freeze_scales:
            for i in range(K):
                bsq = beta[i] * beta[i]
                rate = 1.0 / alam[i] + bsq / (2.0 * sigma2 * zeta2)
                lambda2[i] = rate / random_standard_gamma(bg, 1.0)
            for i in range(K):
                rate = 1.0 / d2[i] + 1.0 / lambda2[i]
                alam[i] = rate / random_standard_gamma(bg, 1.0)
            s_over_lam = 0.0
            for i in range(K):
                s_over_lam += beta[i] * beta[i] / lambda2[i]
            rate = 1.0 / azeta + s_over_lam / (2.0 * sigma2)
            zeta2 = rate / random_standard_gamma(bg, (K + 1) / 2.0)
            azeta = (1.0 + 1.0 / zeta2) / random_standard_gamma(bg, 1.0)

            rss = 0.0
            for i in range(N):
                resid = y2[i]
                for j in range(K1):
                    resid -= D[i, j] * b[j]
                rss += resid * resid
            sb = s_over_lam / zeta2
            sigma2 = _slice_update(sigma2, rss + sb, n_count, nu_var, tau_var, prior_exp, bg,
                                   slice_width, max_slice_steps, it,
                                   &slice_evals, &slice_expansions)

        if it > n_burnin and (it - n_burnin) % thin == 0:
            idx = (it - n_burnin) // thin - 1
            for i in range(K):
                beta_out[idx, i] = beta[i]
                lambda2_out[idx, i] = lambda2[i]
                alam_out[idx, i] = alam[i]
            ar_out[idx] = ar
            sigma2_out[idx] = sigma2
            zeta2_out[idx] = zeta2
            azeta_out[idx] = azeta

    return {"slice_evals": slice_evals, "slice_expansions": slice_expansions,
            "jitter_retries": jitter_retries}


def run_chain_ds2(const double[::1] y2, const double[:, ::1] D, const double[:, ::1] G, const double[::1] Dty,
                  double mu_ar, double sigma_ar, double nu_var, double tau_var,
                  double prior_exp,
                  long n_iterations, long n_burnin, long thin,
                  double slice_width, long max_slice_steps, bint freeze_scales,
                  const double[::1] beta0, double ar0, double sigma2_0,
                  double nu2_0, double anu0,
                  object rng,
                  double[:, ::1] beta_out, double[::1] ar_out, double[::1] sigma2_out,
                  double[::1] nu2_out, double[::1] anu_out):
    cdef bitgen_t *bg = _bitgen(rng)
    cdef Py_ssize_t N = D.shape[0], K1 = D.shape[1], K = K1 - 1
    cdef Py_ssize_t i, j
    cdef long it, idx
    cdef long slice_evals = 0, slice_expansions = 0, jitter_retries = 0

    cdef double[::1] beta = np.array(beta0, dtype=float)
    cdef double ar = ar0
    cdef double sigma2 = sigma2_0
    cdef double nu2 = nu2_0
    cdef double anu = anu0

    cdef double ar_prec = 1.0 / (sigma_ar * sigma_ar)
    cdef double mu_ar_term = mu_ar * ar_prec
    cdef double n_count = <double> (N + K)

    cdef double[:, ::1] P = np.empty((K1, K1))
    cdef double[::1] b = np.empty(K1)
    cdef double[::1] z = np.empty(K1)
    cdef double[::1] prior_prec = np.empty(K1)

    cdef double rate, sb_raw, resid, rss

    for it in range(1, n_iterations + 1):
        for i in range(K):
            prior_prec[i] = 1.0 / (sigma2 * nu2)
        prior_prec[K] = ar_prec
        _draw_coefficients(G, Dty, sigma2, prior_prec, mu_ar_term, P, b, z, bg, &jitter_retries)
        for i in range(K):
            beta[i] = b[i]
        ar = b[K]

        if not freeze_scales:
            sb_raw = 0.0
            for i in range(K):
                sb_raw += beta[i] * beta[i]
            rate = 1.0 / anu + sb_raw / (2.0 * sigma2)
            nu2 = rate / random_standard_gamma(bg, (K + 1) / 2.0)
            anu = (1.0 + 1.0 / nu2) / random_standard_gamma(bg, 1.0)

            rss = 0.0
            for i in range(N):
                resid = y2[i]
                for j in range(K1):
                    resid -= D[i, j] * b[j]
                rss += resid * resid
            sigma2 = _slice_update(sigma2, rss + sb_raw / nu2, n_count, nu_var, tau_var, prior_exp, bg,
                                   slice_width, max_slice_steps, it,
                                   &slice_evals, &slice_expansions)

        if it > n_burnin and (it - n_burnin) % thin == 0:
            idx = (it - n_burnin) // thin - 1
            for i in range(K):
                beta_out[idx, i] = beta[i]
            ar_out[idx] = ar
            sigma2_out[idx] = sigma2
            nu2_out[idx] = nu2
            anu_out[idx] = anu

    return {"slice_evals": slice_evals, "slice_expansions": slice_expansions,
            "jitter_retries": jitter_retries}
