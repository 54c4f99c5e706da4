import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import spillsc as sc
from spillsc.errors import ValidationError

unit_floats = st.floats(min_value=0.0, max_value=1.0)
kappas = st.floats(min_value=0.0, max_value=1.0)


def _component_pair(draw_len):
    return arrays(np.float64, draw_len, elements=unit_floats)


# ---------------------------------------------------------------------------
# covariate dissimilarity

def test_covariate_dissimilarity_identities():
    X = np.array([[1.0, 2.0],   # treated
                  [1.0, 2.0],   # identical -> 1.0
                  [1.0, 3.0],   # norm 1 -> 0.5
                  [4.0, 2.0]])  # norm 3 -> 0.25
    np.testing.assert_allclose(sc.covariate_dissimilarity(X), [1.0, 0.5, 0.25])


def test_covariate_dissimilarity_respects_treated_index():
    X = np.array([[1.0, 3.0], [1.0, 2.0], [1.0, 2.0]])
    np.testing.assert_allclose(sc.covariate_dissimilarity(X, treated_index=1), [0.5, 1.0])


# ---------------------------------------------------------------------------
# spatial proximity

def test_spatial_proximity_identities():
    P = np.array([[0.0], [0.0], [2.0]])
    d, S = sc.spatial_proximity(P, scale_S=2.0)
    np.testing.assert_allclose(d, [0.0, 1.0])
    assert S == 2.0


def test_spatial_proximity_auto_scale_collinear():
    P = np.array([[0.0], [1.0], [2.0]])
    d, S = sc.spatial_proximity(P, scale_S="auto")
    assert S == 2.0
    np.testing.assert_allclose(d, [0.5, 1.0])


def test_spatial_proximity_colocated_errors():
    with pytest.raises(ValidationError, match="co-located"):
        sc.spatial_proximity(np.zeros((3, 2)), scale_S="auto")


# ---------------------------------------------------------------------------
# weighted distance

def test_weighted_distance_endpoints_and_arithmetic():
    d_x = np.array([0.4, 0.9])
    d_p = np.array([0.2, 0.1])
    assert np.array_equal(sc.weighted_distance(d_x, d_p, 1.0).d_c, d_x)
    assert np.array_equal(sc.weighted_distance(d_x, d_p, 0.0).d_c, d_p)
    np.testing.assert_allclose(sc.weighted_distance(d_x, d_p, 0.5).d_c[0], 0.3)


def test_weighted_distance_rejects_bad_kappa():
    v = np.array([0.5])
    for bad in (-0.1, 1.5):
        with pytest.raises(ValidationError, match=r"\[0, 1\]"):
            sc.weighted_distance(v, v, bad)


def test_weighted_distances_invariant_combination():
    wd = sc.weighted_distance(np.array([0.2, 0.8]), np.array([0.6, 0.4]), 0.25)
    np.testing.assert_array_equal(wd.d_c, 0.25 * wd.d_x + 0.75 * wd.d_p)


# ---------------------------------------------------------------------------
# exclusion cutoff

def _brute_force_cutoff(d_c, fraction):
    """Smallest candidate cutoff excluding at least ceil(fraction * J) donors."""
    target = int(np.ceil(fraction * len(d_c)))
    for rho in sorted(d_c):
        if np.sum(d_c <= rho) >= target:
            return rho
    raise AssertionError


def test_cutoff_zero_fraction_excludes_nobody():
    d_c = np.array([0.3, 0.5, 0.9])
    rho = sc.cutoff_from_exclusion_fraction(d_c, 0.0)
    assert rho < d_c.min()
    assert not np.any(d_c <= rho)


def test_cutoff_quarter_of_ten():
    d_c = np.arange(1, 11) / 10.0
    rho = sc.cutoff_from_exclusion_fraction(d_c, 0.25)
    assert rho == _brute_force_cutoff(d_c, 0.25)
    excluded = d_c[d_c <= rho]
    np.testing.assert_allclose(excluded, [0.1, 0.2, 0.3])


def test_cutoff_all_ties_excludes_all_with_warning():
    d_c = np.full(8, 0.4)
    with pytest.warns(UserWarning, match="ties"):
        rho = sc.cutoff_from_exclusion_fraction(d_c, 0.25)
    assert np.all(d_c <= rho)


def test_cutoff_rejects_fraction_one():
    with pytest.raises(ValidationError):
        sc.cutoff_from_exclusion_fraction(np.array([0.5]), 1.0)


# ---------------------------------------------------------------------------
# property suite (range, endpoints, monotonicity, permutation equivariance)

@settings(max_examples=250, deadline=None)
@given(st.integers(2, 30), kappas, st.randoms(use_true_random=False))
def test_property_range(J, kappa, rnd):
    d_x = np.array([rnd.random() for _ in range(J)])
    d_p = np.array([rnd.random() for _ in range(J)])
    wd = sc.weighted_distance(d_x, d_p, kappa)
    assert np.all(wd.d_c >= 0.0) and np.all(wd.d_c <= 1.0)


@settings(max_examples=250, deadline=None)
@given(st.integers(2, 30), st.randoms(use_true_random=False))
def test_property_endpoints(J, rnd):
    d_x = np.array([rnd.random() for _ in range(J)])
    d_p = np.array([rnd.random() for _ in range(J)])
    assert np.array_equal(sc.weighted_distance(d_x, d_p, 1.0).d_c, d_x)
    assert np.array_equal(sc.weighted_distance(d_x, d_p, 0.0).d_c, d_p)


@settings(max_examples=250, deadline=None)
@given(st.integers(2, 30), st.floats(0.01, 0.99), st.integers(0, 2**16), st.floats(0.0, 1.0))
def test_property_monotonicity(J, kappa, seed, bump):
    rng = np.random.default_rng(seed)
    d_x = rng.random(J)
    d_p = rng.random(J)
    base = sc.weighted_distance(d_x, d_p, kappa).d_c
    d_p_up = np.minimum(d_p + bump, 1.0)
    up = sc.weighted_distance(d_x, d_p_up, kappa).d_c
    assert np.all(up >= base)  # nondecreasing in d_p for kappa < 1
    d_x_up = np.minimum(d_x + bump, 1.0)
    up_x = sc.weighted_distance(d_x_up, d_p, kappa).d_c
    assert np.all(up_x >= base)  # nondecreasing in d_x for kappa > 0


@settings(max_examples=250, deadline=None)
@given(st.integers(2, 30), kappas, st.integers(0, 2**16))
def test_property_permutation_equivariance(J, kappa, seed):
    rng = np.random.default_rng(seed)
    d_x = rng.random(J)
    d_p = rng.random(J)
    perm = rng.permutation(J)
    direct = sc.weighted_distance(d_x[perm], d_p[perm], kappa).d_c
    permuted = sc.weighted_distance(d_x, d_p, kappa).d_c[perm]
    np.testing.assert_array_equal(direct, permuted)


# ---------------------------------------------------------------------------
# panel assembly helper

def test_panel_distances_pipeline(sim_setup):
    _, std, _, distances, _ = sim_setup
    assert distances.n_donors == std.n_donors
    # simulated coordinates are the scalar distances themselves; auto-S is their max
    raw = std.coordinates[1:, 0]
    np.testing.assert_allclose(distances.d_p, raw / raw.max())
    assert np.all(distances.d_c >= 0.0) and np.all(distances.d_c <= 1.0)


def test_floored_distances():
    wd = sc.weighted_distance(np.array([0.0, 0.5]), np.array([0.0, 0.5]), 0.5)
    floored = wd.floored()
    assert floored[0] == sc.distance.SCALE_FLOOR
    assert floored[1] == 0.5
