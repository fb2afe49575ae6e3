import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from mnls.basis import ManifoldSpec, make_grid, mode_table, zonal_eigenfunction
from mnls.errors import EmptySupportError, SpecMismatchError, ValidationError
from mnls.fields import (
    GridField,
    RandomProfile,
    SpectralField,
    analyze,
    cluster_mask,
    cluster_project,
    dyadic_blocks,
    dyadic_mask,
    dyadic_project,
    hs_norm,
    l2_norm,
    pointwise_cubic,
    random_field,
    synthesize,
)

ZONAL = ManifoldSpec.zonal(32)
PROD = ManifoldSpec.s2xs1(6, 6)

seeds = st.integers(0, 2**63)
specs = st.sampled_from([ZONAL, PROD])


def sobolev(spec, seed, s=0.5):
    return random_field(spec, RandomProfile.sobolev(s, seed=seed))


# --- containers --------------------------------------------------------------

def test_field_is_a_private_readonly_copy():
    c = np.zeros(ZONAL.n_modes, complex)
    u = SpectralField(ZONAL, c)
    c[0] = 5
    assert u.coeffs[0] == 0
    with pytest.raises(ValueError):
        u.coeffs[0] = 1


def test_field_shape_and_finiteness_checked():
    with pytest.raises(SpecMismatchError):
        SpectralField(ZONAL, np.zeros(3))
    c = np.zeros(ZONAL.n_modes, complex)
    c[1] = np.nan
    with pytest.raises(ValidationError):
        SpectralField(ZONAL, c)


def test_field_arithmetic():
    u = SpectralField.mode(ZONAL, (2,), 3.0)
    v = SpectralField.mode(ZONAL, (2,), 1.0)
    assert (u - v).coeffs[2] == 2.0
    assert (2 * u + v).coeffs[2] == 7.0
    with pytest.raises(SpecMismatchError):
        u + SpectralField.zeros(ManifoldSpec.zonal(4))


# --- norms -------------------------------------------------------------------

@pytest.mark.parametrize("s", [-2.0, 0.0, 0.9, 3.5])
def test_hs_norm_of_constant_mode(s):
    assert hs_norm(SpectralField.mode(ZONAL, (0,)), s) == pytest.approx(1.0, rel=1e-15)


def test_hs_norm_zonal_k2():
    assert hs_norm(SpectralField.mode(ZONAL, (2,)), 1.0) == pytest.approx(3.0, rel=1e-15)


def test_hs_norm_range():
    with pytest.raises(ValidationError):
        hs_norm(SpectralField.zeros(ZONAL), 4.5)


def test_sobolev_decay_stable_under_truncation_doubling():
    vals = []
    for K in (64, 128):
        u = random_field(ManifoldSpec.zonal(K), RandomProfile.sobolev(0.9, seed=3))
        vals.append(hs_norm(u, 0.5))
    assert np.isfinite(vals).all()
    assert abs(vals[1] - vals[0]) <= 0.05 * vals[0]


@settings(max_examples=25, deadline=None)
@given(seeds, specs, st.floats(-3, 3), st.floats(0, 1))
def test_hs_norm_monotone_in_s(seed, spec, s, ds):
    u = sobolev(spec, seed)
    assert hs_norm(u, s) <= hs_norm(u, s + ds) * (1 + 1e-14)


@settings(max_examples=20, deadline=None)
@given(seeds, specs)
def test_parseval(seed, spec):
    u = sobolev(spec, seed)
    g = synthesize(u, make_grid(spec))
    quad_val = g.grid.integrate(np.abs(g.values) ** 2)
    assert abs(l2_norm(u) ** 2 - quad_val) <= 1e-10 * quad_val


# --- projectors --------------------------------------------------------------

def test_dyadic_one_keeps_constant():
    one = SpectralField.mode(ZONAL, (0,), math.sqrt(ZONAL.volume))
    p = dyadic_project(one, 1)
    np.testing.assert_array_equal(p.coeffs, one.coeffs)


@settings(max_examples=20, deadline=None)
@given(seeds, specs)
def test_projector_algebra(seed, spec):
    u = sobolev(spec, seed)
    blocks = dyadic_blocks(spec)
    for N in blocks:
        p = dyadic_project(u, N)
        np.testing.assert_array_equal(dyadic_project(p, N).coeffs, p.coeffs)
    assert not np.any(dyadic_project(dyadic_project(u, 4), 2).coeffs)
    total = sum((dyadic_project(u, N) for N in blocks), SpectralField.zeros(spec))
    assert np.linalg.norm(total.coeffs - u.coeffs) == 0.0


def test_dyadic_mask_boundaries_exact():
    # <n> = sqrt(1 + k(k+2)) = k + 1 on the zonal sector, so block N is k+1 in [N, 2N)
    m = dyadic_mask(ZONAL, 4)
    assert np.flatnonzero(m).tolist() == [3, 4, 5, 6]
    with pytest.raises(ValidationError):
        dyadic_mask(ZONAL, 3)


def test_cluster_zonal_membership():
    assert np.flatnonzero(cluster_mask(ZONAL, 2)).tolist() == [2]
    # 8 lies below 9, so the k=3 cluster holds degree 3 (freq^2 15) only
    assert np.flatnonzero(cluster_mask(ZONAL, 3)).tolist() == [3]


def test_cluster_product_membership():
    spec = ManifoldSpec.s2xs1(4, 5)
    t = mode_table(spec)
    keep = cluster_mask(spec, 4)
    assert keep[t.index((3, 0, 2))]
    assert np.all((t.freq2[keep] >= 16) & (t.freq2[keep] <= 25))
    assert np.sum(keep) == np.sum((t.freq2 >= 16) & (t.freq2 <= 25))


def test_constant_mode_in_no_cluster():
    for spec in (ZONAL, PROD):
        for k in range(1, 8):
            assert not cluster_mask(spec, k)[0]
    with pytest.raises(ValidationError):
        cluster_project(SpectralField.zeros(ZONAL), 0)


# --- random data -------------------------------------------------------------

@pytest.mark.parametrize("spec", [ZONAL, PROD])
def test_dyadic_random_field(spec):
    u = random_field(spec, RandomProfile.dyadic(4, seed=7))
    assert u.norm() == pytest.approx(1.0, abs=1e-12)
    again = random_field(spec, RandomProfile.dyadic(4, seed=7))
    np.testing.assert_array_equal(u.coeffs, again.coeffs)
    b = mode_table(spec).bracket[np.flatnonzero(u.coeffs)]
    assert np.all((b >= 4) & (b < 8))


def test_random_field_streams_differ():
    a = random_field(ZONAL, RandomProfile.dyadic(8, seed=7, sample=0))
    b = random_field(ZONAL, RandomProfile.dyadic(8, seed=7, sample=1))
    c = random_field(ZONAL, RandomProfile.dyadic(8, seed=7, stream=1))
    assert not np.allclose(a.coeffs, b.coeffs)
    assert not np.allclose(a.coeffs, c.coeffs)


def test_empty_block():
    with pytest.raises(EmptySupportError):
        random_field(ManifoldSpec.zonal(4), RandomProfile.dyadic(16))


def test_sobolev_profile_normalized_and_decaying():
    u = random_field(ZONAL, RandomProfile.sobolev(0.9, seed=1, norm=2.0))
    assert hs_norm(u, 0.9) == pytest.approx(2.0, rel=1e-13)
    a = np.abs(u.coeffs)
    b = mode_table(ZONAL).bracket
    np.testing.assert_allclose(a * b**2.4, a[0], rtol=1e-12)


def test_profile_validation():
    with pytest.raises(ValidationError):
        RandomProfile("white", N=4)
    with pytest.raises(ValidationError):
        RandomProfile.sobolev(5.0)
    with pytest.raises(ValidationError):
        RandomProfile.dyadic(6)


# --- pointwise cubic ---------------------------------------------------------

def test_pointwise_cubic_constants():
    g = make_grid(ZONAL)
    one = GridField(g, np.ones(g.n_nodes))
    np.testing.assert_array_equal(pointwise_cubic(one).values, 1.0)
    two_i = GridField(g, np.full(g.n_nodes, 2j))
    np.testing.assert_allclose(pointwise_cubic(two_i).values, 8j, rtol=1e-15)


@pytest.mark.parametrize("k", [1, 3, 6])
def test_cubic_coefficients_against_direct_integrals(k):
    # analyze(|e_k|^2 e_k) against adaptive quadrature of e_k^3 e_j over S^3
    spec = ManifoldSpec.zonal(3 * k + 2)
    g = make_grid(spec)
    got = analyze(pointwise_cubic(synthesize(SpectralField.mode(spec, (k,)), g))).coeffs
    for j in range(spec.n_modes):
        ref, _ = quad(
            lambda c: 4 * math.pi * zonal_eigenfunction(k, c) ** 3 * zonal_eigenfunction(j, c) * math.sin(c) ** 2,
            0, math.pi, limit=400, epsabs=1e-14, epsrel=1e-13,
        )
        assert abs(got[j] - ref) <= 1e-10
    # cubic of degree k spans degrees <= 3k
    assert np.all(np.abs(got[3 * k + 1:]) < 1e-12)
