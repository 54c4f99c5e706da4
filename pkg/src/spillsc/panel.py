"""Panel ingestion, validation, and pre-period standardization.

The observed data is a balanced panel: one treated unit, J donor units, T
periods with the intervention starting after period T0. Outcomes arrive in a
long-format CSV and unit-level covariates (including spatial coordinates) in
a wide CSV; see `load_panel` for the exact schemas.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError

__all__ = [
    "PanelData",
    "StandardizationRecord",
    "IngestionSettings",
    "load_panel",
    "standardize",
    "trim_donors",
]


def _frozen(a, dtype=float):
    out = np.ascontiguousarray(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PanelData:
    """A validated, immutable panel.

    Unit ordering is fixed: the treated unit comes first, donors follow in
    sorted unit-id order. Outcome arrays use 0-based time indices for
    periods 1..T.

    Attributes
    ----------
    treated_outcomes : (T,) array
    donor_outcomes : (T, J) array, column j is donor j
    intervention_time : int
        T0; periods with index >= T0 (0-based) are post-intervention.
    covariates : (n, q) array of non-spatial covariates
    coordinates : (n, k) array of projected spatial coordinates
    unit_labels : tuple of str, treated first
    """

    treated_outcomes: np.ndarray
    donor_outcomes: np.ndarray
    intervention_time: int
    covariates: np.ndarray
    coordinates: np.ndarray
    unit_labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "treated_outcomes", _frozen(self.treated_outcomes))
        object.__setattr__(self, "donor_outcomes", _frozen(self.donor_outcomes))
        object.__setattr__(self, "covariates", _frozen(self.covariates))
        object.__setattr__(self, "coordinates", _frozen(self.coordinates))
        object.__setattr__(self, "unit_labels", tuple(str(u) for u in self.unit_labels))
        self._validate()

    def _validate(self):
        T = self.treated_outcomes.shape[0]
        if self.donor_outcomes.ndim != 2 or self.donor_outcomes.shape[0] != T:
            raise ValidationError("donor_outcomes must be a T x J matrix aligned with treated_outcomes")
        J = self.donor_outcomes.shape[1]
        if J < 1:
            raise ValidationError("donor pool is empty")
        n = J + 1
        if not (2 <= self.intervention_time < T):
            raise ValidationError(
                f"intervention_time must satisfy 2 <= T0 < T, got T0={self.intervention_time}, T={T}"
            )
        if self.covariates.shape[0] != n:
            raise ValidationError(f"covariates must have {n} rows, got {self.covariates.shape[0]}")
        if self.coordinates.ndim != 2 or self.coordinates.shape[0] != n or self.coordinates.shape[1] < 1:
            raise ValidationError(f"coordinates must be an {n} x k matrix with k >= 1")
        if len(self.unit_labels) != n:
            raise ValidationError(f"expected {n} unit labels, got {len(self.unit_labels)}")
        for name, arr in (("treated_outcomes", self.treated_outcomes), ("donor_outcomes", self.donor_outcomes)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains missing or non-finite values")

    @property
    def n_units(self):
        return self.donor_outcomes.shape[1] + 1

    @property
    def n_donors(self):
        return self.donor_outcomes.shape[1]

    @property
    def n_periods(self):
        return self.treated_outcomes.shape[0]

    @property
    def donor_labels(self):
        return self.unit_labels[1:]


@dataclass(frozen=True)
class StandardizationRecord:
    """Statistics sufficient to invert `standardize` exactly.

    Outcome statistics come from the treated unit's pre-intervention periods
    only; covariate statistics pool all n units. Standard deviations use the
    1/n convention so that a two-point pre-period {a, b} maps to {-1, +1}.
    """

    outcome_mean: float
    outcome_sd: float
    covariate_means: np.ndarray
    covariate_sds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "covariate_means", _frozen(self.covariate_means))
        object.__setattr__(self, "covariate_sds", _frozen(self.covariate_sds))
        if self.outcome_sd <= 0 or np.any(self.covariate_sds <= 0):
            raise ValidationError("standardization sds must be strictly positive")

    def standardize_outcomes(self, values):
        return (np.asarray(values, dtype=float) - self.outcome_mean) / self.outcome_sd

    def unstandardize_outcomes(self, values):
        return np.asarray(values, dtype=float) * self.outcome_sd + self.outcome_mean


@dataclass(frozen=True)
class IngestionSettings:
    """How to read the covariate CSV and where the intervention falls."""

    intervention_time: int
    coordinate_columns: tuple
    covariate_columns: tuple = field(default=())  # empty: infer as all non-coordinate columns


def _sort_key_factory(ids):
    """Numeric sort when every id parses as an integer, else lexicographic."""
    try:
        parsed = {u: int(u) for u in ids}
        return lambda u: parsed[u]
    except ValueError:
        return lambda u: u


def load_panel(outcomes_path, covariates_path, settings: IngestionSettings) -> PanelData:
    """Read and validate the panel from its two CSV files.

    Outcomes CSV: header ``unit_id,time,outcome`` with integer time 1..T and
    one row per (unit, time) cell. Covariates CSV: header
    ``unit_id,treated,<covariates...>,<coordinates...>`` with ``treated`` in
    {0, 1} flagging exactly one unit.

    Raises
    ------
    ValidationError
        On a missing or duplicated (unit, time) cell (named in the message),
        unknown/missing columns, zero donors, or an invalid treated flag.
    """
    with open(covariates_path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise ValidationError(f"{covariates_path}: empty covariates file")
        cov_header = list(reader.fieldnames)
        cov_rows = list(reader)
    for required in ("unit_id", "treated"):
        if required not in cov_header:
            raise ValidationError(f"{covariates_path}: missing required column '{required}'")
    coord_cols = list(settings.coordinate_columns)
    for c in coord_cols:
        if c not in cov_header:
            raise ValidationError(f"{covariates_path}: coordinate column '{c}' not found")
    if settings.covariate_columns:
        cov_cols = list(settings.covariate_columns)
        for c in cov_cols:
            if c not in cov_header:
                raise ValidationError(f"{covariates_path}: covariate column '{c}' not found")
    else:
        cov_cols = [c for c in cov_header if c not in ("unit_id", "treated") and c not in coord_cols]
    if not cov_cols:
        raise ValidationError(f"{covariates_path}: no covariate columns identified")

    units, treated_flags, cov_map, coord_map = [], {}, {}, {}
    for row in cov_rows:
        uid = row["unit_id"].strip()
        if uid in treated_flags:
            raise ValidationError(f"{covariates_path}: duplicate unit_id '{uid}'")
        if row["treated"].strip() not in ("0", "1"):
            raise ValidationError(f"{covariates_path}: unit {uid}: treated must be 0 or 1")
        treated_flags[uid] = row["treated"].strip() == "1"
        try:
            cov_map[uid] = [float(row[c]) for c in cov_cols]
            coord_map[uid] = [float(row[c]) for c in coord_cols]
        except ValueError as exc:
            raise ValidationError(f"{covariates_path}: unit {uid}: non-numeric value ({exc})") from None
        units.append(uid)

    treated_units = [u for u in units if treated_flags[u]]
    if len(treated_units) != 1:
        raise ValidationError(f"{covariates_path}: exactly one unit must be flagged treated, found {len(treated_units)}")
    treated = treated_units[0]
    donors = sorted((u for u in units if u != treated), key=_sort_key_factory(units))
    if not donors:
        raise ValidationError("donor pool is empty: need at least one untreated unit")
    ordered = [treated] + donors

    outcome_cells = {}
    with open(outcomes_path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or set(reader.fieldnames) != {"unit_id", "time", "outcome"}:
            raise ValidationError(f"{outcomes_path}: header must be exactly unit_id,time,outcome")
        for row in reader:
            uid = row["unit_id"].strip()
            if uid not in treated_flags:
                raise ValidationError(f"{outcomes_path}: unit {uid} not present in covariates file")
            try:
                t = int(row["time"])
                val = float(row["outcome"])
            except ValueError:
                raise ValidationError(f"{outcomes_path}: unit {uid}: non-numeric time or outcome") from None
            if (uid, t) in outcome_cells:
                raise ValidationError(f"{outcomes_path}: duplicate cell for unit {uid}, time {t}")
            outcome_cells[(uid, t)] = val
    if not outcome_cells:
        raise ValidationError(f"{outcomes_path}: no outcome rows")

    T = max(t for (_, t) in outcome_cells)
    if min(t for (_, t) in outcome_cells) < 1:
        raise ValidationError(f"{outcomes_path}: time indices must start at 1")
    Y = np.empty((T, len(ordered)))
    for j, uid in enumerate(ordered):
        for t in range(1, T + 1):
            if (uid, t) not in outcome_cells:
                raise ValidationError(f"missing outcome cell: unit {uid}, time {t}")
            Y[t - 1, j] = outcome_cells[(uid, t)]

    return PanelData(
        treated_outcomes=Y[:, 0],
        donor_outcomes=Y[:, 1:],
        intervention_time=settings.intervention_time,
        covariates=np.array([cov_map[u] for u in ordered]),
        coordinates=np.array([coord_map[u] for u in ordered]),
        unit_labels=ordered,
    )


def standardize(panel: PanelData):
    """Standardize outcomes and covariates; return the transformed panel and record.

    All outcome series (treated and donors) are centered and scaled by the
    treated unit's pre-intervention mean and sd, keeping every series on one
    common scale so the synthetic-control combination stays interpretable.
    Covariates are standardized to mean 0 / sd 1 across all n units.

    Raises
    ------
    ValidationError
        If the treated pre-period outcome sd is zero or any covariate column
        is constant; the offending series is named.
    """
    pre = panel.treated_outcomes[: panel.intervention_time]
    mu = float(np.mean(pre))
    sd = float(np.std(pre))
    if sd <= 0.0:
        raise ValidationError("treated pre-period outcomes have zero variance; cannot standardize")
    cov_mu = panel.covariates.mean(axis=0)
    cov_sd = panel.covariates.std(axis=0)
    for j, s in enumerate(cov_sd):
        if s <= 0.0:
            raise ValidationError(f"covariate column {j} is constant; cannot standardize")
    record = StandardizationRecord(outcome_mean=mu, outcome_sd=sd, covariate_means=cov_mu, covariate_sds=cov_sd)
    out = replace(
        panel,
        treated_outcomes=(panel.treated_outcomes - mu) / sd,
        donor_outcomes=(panel.donor_outcomes - mu) / sd,
        covariates=(panel.covariates - cov_mu) / cov_sd,
    )
    return out, record


def trim_donors(panel: PanelData, max_distance: float) -> PanelData:
    """Drop donors whose centroid lies farther than `max_distance` from the treated unit.

    The boundary is inclusive: a donor exactly at `max_distance` is retained.
    Coordinates are assumed projected so that Euclidean distance is in the
    same units as `max_distance`.
    """
    if not max_distance > 0:
        raise ValidationError(f"max_distance must be positive, got {max_distance}")
    dist = np.linalg.norm(panel.coordinates[1:] - panel.coordinates[0], axis=1)
    keep = dist <= max_distance
    if not np.any(keep):
        raise ValidationError(f"trimming at {max_distance} removes every donor")
    if np.all(keep):
        return panel
    keep_rows = np.concatenate(([True], keep))
    return replace(
        panel,
        donor_outcomes=panel.donor_outcomes[:, keep],
        covariates=panel.covariates[keep_rows],
        coordinates=panel.coordinates[keep_rows],
        unit_labels=tuple(np.array(panel.unit_labels)[keep_rows]),
    )
