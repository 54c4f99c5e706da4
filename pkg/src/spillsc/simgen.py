"""Synthetic panels from a linear three-factor outcome process with
distance-decaying spillover.

No-intervention outcomes follow
    Y_it(0) = delta_t + theta' X_i + f_t' mu_i + eps_it,
with AR(1) common factors, uniform loadings, and unit-variance shocks.
Observed outcomes add the treatment effect tau for the treated unit after
T0 and a spillover term xi * exp(-d_i) for every donor within the spillover
radius rho_star of the treated unit (d_i is the donor's realized spatial
distance, drawn half-normal). Covariates can receive a distance-dependent
location shift: donors farther from the treated unit are more likely to be
shifted by mu_shift.

Spatial positions are represented by the scalar distances themselves: the
generated panel's coordinate matrix has a single column holding d_i (0 for
the treated unit), which downstream distance computations normalize.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .panel import PanelData

__all__ = ["SimConfig", "SimTruth", "generate", "affected_fraction_to_rho_star"]

_COVARIATE_EFFECTS = np.array([-0.5, 0.5])


@dataclass(frozen=True)
class SimConfig:
    """Data-generating settings; exactly one of rho_star / spill_fraction."""

    T0: int = 30
    n_post: int = 1
    J: int = 50
    tau_true: float = 7.0
    xi_spill: float = -10.0
    rho_star: float | None = None
    spill_fraction: float | None = None
    mu_shift: tuple = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if self.J < 1:
            raise ValidationError("J must be >= 1")
        if self.T0 < 2:
            raise ValidationError("T0 must be >= 2")
        if self.n_post < 1:
            raise ValidationError("n_post must be >= 1")
        if (self.rho_star is None) == (self.spill_fraction is None):
            raise ValidationError("set exactly one of rho_star or spill_fraction")
        if self.rho_star is not None and self.rho_star < 0:
            raise ValidationError("rho_star must be >= 0")
        if self.spill_fraction is not None and not (0.0 <= self.spill_fraction <= 1.0):
            raise ValidationError("spill_fraction must be in [0, 1]")
        if len(self.mu_shift) != 2:
            raise ValidationError("mu_shift must have two components")


@dataclass(frozen=True)
class SimTruth:
    """Everything the replication metrics need that a real panel would hide."""

    potential_outcomes: np.ndarray  # (n, T), no-intervention outcomes
    affected: np.ndarray            # (J,) bool, donors hit by spillover
    distances: np.ndarray           # (J,) realized donor distances
    covariates: np.ndarray          # (n, 2)
    tau_true: float
    xi_spill: float
    rho_star: float
    seed: int


def affected_fraction_to_rho_star(distances, fraction):
    """Radius so that exactly floor(fraction * J) donors fall strictly inside.

    Assumes continuously distributed distances (ties make the exact count
    unattainable).
    """
    if not (0.0 <= fraction <= 1.0):
        raise ValidationError(f"fraction must be in [0, 1], got {fraction}")
    d = np.sort(np.asarray(distances, dtype=float))
    m = int(np.floor(fraction * d.size))
    if m == 0:
        return 0.0
    if m == d.size:
        return float(d[-1]) + 1.0
    return float(0.5 * (d[m - 1] + d[m]))


def _simulate_factors(rng, T):
    """AR(1) common-factor paths started from zero.

    delta_t = 1 + 0.5 delta_{t-1} + shock; the three loading factors follow
    the same recursion with intercepts (0, 1, 0). Shocks are iid standard
    normal, drawn as one (T, 4) block.
    """
    shocks = rng.standard_normal((T, 4))
    delta = np.empty(T)
    f = np.empty((T, 3))
    prev_delta, prev_f = 0.0, np.zeros(3)
    intercepts = np.array([0.0, 1.0, 0.0])
    for t in range(T):
        delta[t] = 1.0 + 0.5 * prev_delta + shocks[t, 0]
        f[t] = intercepts + 0.5 * prev_f + shocks[t, 1:]
        prev_delta, prev_f = delta[t], f[t]
    return delta, f


def generate(config: SimConfig, rng=None):
    """Draw one synthetic panel; returns (PanelData, SimTruth).

    Deterministic given (config, seed). The random draws happen in a fixed
    order (distances, base covariates, shift indicators, factor shocks,
    loadings, outcome shocks) so seeds remain comparable across variants.
    """
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(config.seed))
    J = config.J
    n = J + 1
    T0 = config.T0
    T = T0 + config.n_post

    # Donor distances ~ half-normal (truncated standard normal on [0, inf)).
    d_donor = np.abs(rng.standard_normal(J))
    d_full = np.concatenate(([0.0], d_donor))

    X_base = rng.standard_normal((n, 2))
    p_star = d_full / d_full.max()
    shifted = rng.random(n) < p_star
    X = X_base + np.outer(shifted, np.asarray(config.mu_shift, dtype=float))

    delta, f = _simulate_factors(rng, T)

    loadings = rng.random((n, 3))
    eps = rng.standard_normal((n, T))
    Y0 = delta[None, :] + (X @ _COVARIATE_EFFECTS)[:, None] + loadings @ f.T + eps

    if config.rho_star is not None:
        rho_star = float(config.rho_star)
    else:
        rho_star = affected_fraction_to_rho_star(d_donor, config.spill_fraction)
    affected = d_donor < rho_star

    Y = Y0.copy()
    post = np.arange(T) >= T0
    Y[0, post] += config.tau_true
    spill = config.xi_spill * np.exp(-d_donor) * affected
    Y[1:, :] += np.outer(spill, post)

    panel = PanelData(
        treated_outcomes=Y[0],
        donor_outcomes=Y[1:].T,
        intervention_time=T0,
        covariates=X,
        coordinates=d_full[:, None],
        unit_labels=[str(i) for i in range(1, n + 1)],
    )
    truth = SimTruth(
        potential_outcomes=Y0,
        affected=affected,
        distances=d_donor,
        covariates=X,
        tau_true=float(config.tau_true),
        xi_spill=float(config.xi_spill),
        rho_star=rho_star,
        seed=int(config.seed),
    )
    return panel, truth
