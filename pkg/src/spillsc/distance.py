"""Donor-to-treated dissimilarity measures and the weighted distance.

Every donor gets a covariate dissimilarity d_x = 1 / (1 + ||X_i - X_1||), a
normalized spatial proximity d_p = ||P_i - P_1|| / S, and their convex
combination d_c = kappa_d * d_x + (1 - kappa_d) * d_p. All three live in
[0, 1]; d_c controls how hard each donor's coefficient is shrunk (or whether
it is excluded outright under the spike-and-slab family).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .panel import PanelData

__all__ = [
    "WeightedDistances",
    "covariate_dissimilarity",
    "spatial_proximity",
    "weighted_distance",
    "cutoff_from_exclusion_fraction",
    "panel_distances",
    "SCALE_FLOOR",
]

# Floor applied to d_c before it is used as a half-Cauchy prior scale; a zero
# scale would make the local shrinkage prior degenerate.
SCALE_FLOOR = 1e-6


def _frozen(a):
    out = np.ascontiguousarray(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class WeightedDistances:
    """Per-donor distance components and their convex combination.

    Attributes
    ----------
    d_x, d_p, d_c : (J,) arrays in [0, 1]
    kappa_d : float in [0, 1], weight on the covariate component
    scale_S : float > 0, normalization used for the spatial component
    """

    d_x: np.ndarray
    d_p: np.ndarray
    d_c: np.ndarray
    kappa_d: float
    scale_S: float

    def __post_init__(self):
        object.__setattr__(self, "d_x", _frozen(self.d_x))
        object.__setattr__(self, "d_p", _frozen(self.d_p))
        object.__setattr__(self, "d_c", _frozen(self.d_c))
        if not (self.d_x.shape == self.d_p.shape == self.d_c.shape):
            raise ValidationError("distance components must share one length J")
        if not (0.0 <= self.kappa_d <= 1.0):
            raise ValidationError(f"kappa_d must be in [0, 1], got {self.kappa_d}")
        if not self.scale_S > 0:
            raise ValidationError(f"scale_S must be positive, got {self.scale_S}")
        for name, v in (("d_x", self.d_x), ("d_p", self.d_p), ("d_c", self.d_c)):
            if np.any(v < 0.0) or np.any(v > 1.0):
                raise ValidationError(f"{name} must lie within [0, 1]")

    @property
    def n_donors(self):
        return self.d_c.shape[0]

    def floored(self, floor=SCALE_FLOOR):
        """d_c with the prior-scale floor applied."""
        return np.maximum(self.d_c, floor)


def covariate_dissimilarity(covariates_nonspatial, treated_index=0):
    """1 / (1 + ||X_i - X_1||_2) for each donor against the treated unit.

    `covariates_nonspatial` is the n x (q - k) matrix of standardized
    non-spatial covariates; donors are every row except `treated_index`.
    """
    X = np.asarray(covariates_nonspatial, dtype=float)
    if X.ndim != 2:
        raise ValidationError("covariates must be a 2-D matrix")
    diffs = np.delete(X, treated_index, axis=0) - X[treated_index]
    return 1.0 / (1.0 + np.linalg.norm(diffs, axis=1))


def spatial_proximity(coordinates, treated_index=0, scale_S="auto"):
    """||P_i - P_1||_2 / S for each donor.

    With ``scale_S="auto"`` the normalization S is the maximum pairwise
    Euclidean distance within the dataset, which guarantees outputs in
    [0, 1] and is reproducible from the data alone.

    Raises
    ------
    ValidationError
        If all units are co-located (S = 0) or a given S is non-positive.
    """
    P = np.asarray(coordinates, dtype=float)
    if P.ndim != 2:
        raise ValidationError("coordinates must be a 2-D matrix")
    dist = np.linalg.norm(np.delete(P, treated_index, axis=0) - P[treated_index], axis=1)
    if isinstance(scale_S, str):
        if scale_S != "auto":
            raise ValidationError(f"scale_S must be a positive number or 'auto', got {scale_S!r}")
        pairwise = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
        S = float(pairwise.max())
    else:
        S = float(scale_S)
    if not S > 0:
        raise ValidationError("spatial scale S is zero: all units are co-located")
    return dist / S, S


def weighted_distance(d_x, d_p, kappa_d, scale_S=1.0) -> WeightedDistances:
    """Convex combination d_c = kappa_d * d_x + (1 - kappa_d) * d_p.

    At kappa_d = 1 shrinkage depends only on covariate dissimilarity, at
    kappa_d = 0 only on spatial proximity. `scale_S` is carried through for
    provenance (1.0 when d_p was supplied pre-normalized).
    """
    d_x = np.asarray(d_x, dtype=float)
    d_p = np.asarray(d_p, dtype=float)
    if d_x.shape != d_p.shape:
        raise ValidationError(f"component length mismatch: {d_x.shape} vs {d_p.shape}")
    if not (0.0 <= kappa_d <= 1.0):
        raise ValidationError(f"kappa_d must be in [0, 1], got {kappa_d}")
    d_c = kappa_d * d_x + (1.0 - kappa_d) * d_p
    return WeightedDistances(d_x=d_x, d_p=d_p, d_c=d_c, kappa_d=float(kappa_d), scale_S=float(scale_S))


def cutoff_from_exclusion_fraction(d_c, fraction):
    """Empirical-quantile cutoff rho excluding roughly `fraction` of donors.

    The excluded set is {i : d_c[i] <= rho}. Without ties it has exactly
    ceil(fraction * J) members; ties at the cutoff are all excluded
    (conservative), with a warning when that inflates the count.
    """
    d_c = np.asarray(d_c, dtype=float)
    J = d_c.shape[0]
    if not (0.0 <= fraction < 1.0):
        raise ValidationError(f"exclusion fraction must be in [0, 1), got {fraction}")
    if fraction == 0.0:
        # Any rho strictly below the smallest distance excludes nobody.
        return max(0.0, float(np.nextafter(d_c.min(), -np.inf)))
    m = int(np.ceil(fraction * J))
    rho = float(np.sort(d_c)[m - 1])
    n_excluded = int(np.sum(d_c <= rho))
    if n_excluded > m:
        warnings.warn(
            f"ties at the exclusion cutoff rho={rho:g}: excluding {n_excluded} donors "
            f"instead of {m}",
            stacklevel=2,
        )
    return rho


def panel_distances(panel: PanelData, kappa_d, scale_S="auto") -> WeightedDistances:
    """Assemble WeightedDistances for a standardized panel.

    Covariate dissimilarity is computed from `panel.covariates` (which must
    already be standardized) and spatial proximity from `panel.coordinates`.
    """
    d_x = covariate_dissimilarity(panel.covariates)
    d_p, S = spatial_proximity(panel.coordinates, scale_S=scale_S)
    return weighted_distance(d_x, d_p, kappa_d, scale_S=S)
