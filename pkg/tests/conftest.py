import csv

import numpy as np
import pytest

import spillsc as sc


@pytest.fixture
def tiny_panel():
    """1 treated + 2 donors, 4 periods, T0 = 2; hand-picked values."""
    return sc.PanelData(
        treated_outcomes=np.array([1.0, 3.0, 2.5, 4.0]),
        donor_outcomes=np.array([[0.5, 2.0], [1.5, 2.5], [2.0, 3.0], [2.5, 3.5]]),
        intervention_time=2,
        covariates=np.array([[0.0, 1.0], [1.0, 0.0], [-1.0, 2.0]]),
        coordinates=np.array([[0.0, 0.0], [3.0, 4.0], [6.0, 8.0]]),
        unit_labels=["1", "2", "3"],
    )


@pytest.fixture
def sim_setup():
    """Small generated panel ready for fitting: (panel, std_panel, record, distances)."""
    panel, truth = sc.generate(sc.SimConfig(T0=15, n_post=2, J=6, spill_fraction=0.0, seed=31))
    std, record = sc.standardize(panel)
    distances = sc.panel_distances(std, kappa_d=0.5)
    return panel, std, record, distances, truth


def write_panel_csvs(directory, panel, unit_ids=None):
    """Write a PanelData out in the ingestion schema; returns the two paths."""
    labels = list(unit_ids) if unit_ids is not None else list(panel.unit_labels)
    Y = np.column_stack([panel.treated_outcomes, panel.donor_outcomes])
    outcomes = directory / "outcomes.csv"
    with open(outcomes, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["unit_id", "time", "outcome"])
        for j, lab in enumerate(labels):
            for t in range(panel.n_periods):
                w.writerow([lab, t + 1, repr(float(Y[t, j]))])
    covariates = directory / "covariates.csv"
    q = panel.covariates.shape[1]
    k = panel.coordinates.shape[1]
    with open(covariates, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["unit_id", "treated"] + [f"x{i+1}" for i in range(q)] + [f"p{i+1}" for i in range(k)])
        for j, lab in enumerate(labels):
            w.writerow([lab, 1 if j == 0 else 0]
                       + [repr(float(v)) for v in panel.covariates[j]]
                       + [repr(float(v)) for v in panel.coordinates[j]])
    return outcomes, covariates
