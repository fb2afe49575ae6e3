import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mnls.basis import ManifoldSpec, make_grid, mode_table, synthesize_array
from mnls.dynamics import linear_propagate, trajectory
from mnls.errors import OutsideHypothesisError, ResourceLimitError, SpecMismatchError, UnsupportedManifoldError, ValidationError
from mnls.fields import RandomProfile, SpectralField, hs_norm, random_field
from mnls.imethod import (
    apply_I,
    energy,
    identity_multiplier,
    increment_decomposition,
    kinetic,
    local_window,
    mass,
    modified_energy,
    multiplier,
    rate_card,
    s_min,
    smoothstep,
    symbol,
    symbol_check,
    weight_tensor,
)

ZONAL = ManifoldSpec.zonal(32)


# --- symbol ------------------------------------------------------------------

def test_symbol_examples():
    assert symbol(16.0, 32, 0.9) == 1.0
    assert symbol(32.0, 32, 0.9) == 1.0
    assert symbol(64.0, 32, 0.9) == pytest.approx(2**-0.1, rel=1e-15)
    assert symbol(64.0, 32, 0.9) == pytest.approx(0.93303299153680741, rel=1e-14)
    m48 = symbol(48.0, 32, 0.9)
    assert symbol(64.0, 32, 0.9) < m48 < 1.0


def test_symbol_tail_is_power_law():
    xi = np.array([64.0, 100.0, 1000.0])
    np.testing.assert_allclose(symbol(xi, 32, 0.7), (32 / xi) ** 0.3, rtol=1e-14)


def test_symbol_monotone_and_bounded():
    xi = np.linspace(0, 300, 3001)
    m = symbol(xi, 32, 0.9)
    assert np.all(np.diff(m) <= 0)
    assert np.all((m > 0) & (m <= 1))
    # m(xi) <xi>^(1-s) never exceeds its stated bound
    bound = (2 * math.sqrt(1 + 32**2)) ** 0.1
    assert np.all(m * np.sqrt(1 + xi**2) ** 0.1 <= bound)


def test_smoothstep():
    assert smoothstep(0.0) == 0 and smoothstep(1.0) == 1
    assert smoothstep(0.5) == pytest.approx(0.5)
    r = np.linspace(0.01, 0.99, 99)
    assert np.all(np.diff(smoothstep(r)) >= 0)
    r = np.linspace(0.1, 0.9, 81)
    assert np.all(np.diff(smoothstep(r)) > 0)


def test_multiplier_validation():
    with pytest.raises(ValidationError):
        multiplier(12, 0.9, ZONAL)
    with pytest.raises(ValidationError):
        multiplier(8, 1.0, ZONAL)


# --- apply_I -----------------------------------------------------------------

def test_apply_I_single_mode():
    m = multiplier(4, 0.9, ZONAL)
    u = SpectralField.mode(ZONAL, (20,), 2.0 - 1j)
    Iu = apply_I(u, m)
    assert Iu.coeffs[20] == pytest.approx(m.values[20] * (2.0 - 1j))
    assert np.count_nonzero(Iu.coeffs) == 1


def test_apply_I_identity_below_N():
    m = multiplier(16, 0.9, ZONAL)
    c = np.zeros(ZONAL.n_modes, complex)
    c[:16] = np.arange(1, 17)
    u = SpectralField(ZONAL, c)
    np.testing.assert_array_equal(apply_I(u, m).coeffs, u.coeffs)
    np.testing.assert_array_equal(identity_multiplier(ZONAL).values, 1.0)


def test_apply_I_spec_mismatch():
    with pytest.raises(SpecMismatchError):
        apply_I(SpectralField.zeros(ManifoldSpec.zonal(4)), multiplier(4, 0.9, ZONAL))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**63), st.sampled_from([8, 16, 32]), st.sampled_from([ZONAL, ManifoldSpec.s2xs1(8, 20)]))
def test_symbol_inequalities(seed, N, spec):
    u = random_field(spec, RandomProfile.sobolev(0.9, seed=seed))
    upper, lower = symbol_check(u, multiplier(N, 0.9, spec))
    assert upper and lower
    assert apply_I(u, multiplier(N, 0.9, spec)).norm() <= u.norm() * (1 + 1e-15)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**63), st.floats(-5, 5))
def test_I_commutes_with_linear_flow(seed, t):
    u = random_field(ZONAL, RandomProfile.sobolev(0.5, seed=seed))
    m = multiplier(8, 0.9, ZONAL)
    a = apply_I(linear_propagate(u, t), m)
    b = linear_propagate(apply_I(u, m), t)
    # both operators are diagonal; only the rounding of the two products differs
    assert np.linalg.norm(a.coeffs - b.coeffs) <= 1e-15 * u.norm()


# --- functionals -------------------------------------------------------------

def test_constant_field_functionals():
    one = SpectralField.mode(ZONAL, (0,), math.sqrt(ZONAL.volume))
    assert mass(one) == pytest.approx(2 * math.pi**2, rel=1e-14)
    assert energy(one) == pytest.approx(0.25 * 2 * math.pi**2, rel=1e-13)


def test_mass_of_unit_mode():
    assert mass(SpectralField.mode(ZONAL, (5,))) == 1.0


@pytest.mark.parametrize("k", [1, 4, 9])
def test_single_mode_energy_against_fine_quadrature(k):
    from scipy.integrate import quad
    from mnls.basis import zonal_eigenfunction

    c = 0.7 - 0.2j
    u = SpectralField.mode(ZONAL, (k,), c)
    q4, _ = quad(lambda x: 4 * math.pi * abs(c * zonal_eigenfunction(k, x)) ** 4 * math.sin(x) ** 2,
                 0, math.pi, limit=400, epsabs=1e-15, epsrel=1e-13)
    expect = 0.5 * k * (k + 2) * abs(c) ** 2 + 0.25 * q4
    assert energy(u) == pytest.approx(expect, rel=1e-10)


def test_energy_coupling_zero_is_kinetic():
    u = random_field(ZONAL, RandomProfile.sobolev(0.9, seed=2))
    assert energy(u, coupling=0.0) == kinetic(u.coeffs, ZONAL)


def test_modified_energy_cases():
    u = SpectralField.mode(ZONAL, (3,), 0.5)
    m = multiplier(8, 0.9, ZONAL)
    assert modified_energy(u, m) == energy(u)
    # a mode at freq >= 2N: gradient term scaled by (N/n_k)^(2(1-s))
    k = 20
    v = SpectralField.mode(ZONAL, (k,), 1.0)
    nk = math.sqrt(k * (k + 2))
    ratio = modified_energy(v, m, coupling=0.0) / energy(v, coupling=0.0)
    assert ratio == pytest.approx((8 / nk) ** 0.2, rel=1e-13)


def test_modified_energy_scaling_with_N():
    from mnls.estlab import fit_exponent

    s = 0.9
    spec = ManifoldSpec.zonal(128)
    u = random_field(spec, RandomProfile.sobolev(s, seed=4))
    pts = [(N, modified_energy(u, multiplier(N, s, spec))) for N in (4, 8, 16, 32)]
    assert fit_exponent(pts).slope <= 3 * (1 - s) + 0.3


# --- increment decomposition ---------------------------------------------------

INC = ManifoldSpec.zonal(24)


def _data():
    return random_field(INC, RandomProfile.sobolev(0.9, seed=1))


def test_weight_vanishes_below_N():
    m = multiplier(32, 0.9, ManifoldSpec.zonal(12))
    W = weight_tensor(m, make_grid(m.spec))
    assert np.max(np.abs(W)) == 0.0


def test_weight_tensor_symmetric_in_last_three():
    m = multiplier(2, 0.9, ManifoldSpec.zonal(8))
    W = weight_tensor(m, make_grid(m.spec))
    np.testing.assert_allclose(W, W.transpose(0, 2, 1, 3), atol=1e-15)
    np.testing.assert_allclose(W, W.transpose(0, 3, 2, 1), atol=1e-15)
    assert np.max(np.abs(W)) > 1e-3


def test_linear_flow_has_zero_increment():
    m = multiplier(8, 0.9, INC)
    tr = trajectory(_data(), 1e-2, 20, 2, coupling=0.0)
    reps = increment_decomposition(tr, m, coupling=0.0)
    assert max(abs(r.lhs) for r in reps) <= 1e-10
    assert max(abs(r.residual) for r in reps) <= 1e-10


def test_increment_identity_converges_with_dt():
    # self-convergence oracle: the residual falls by ~4x per halving of dt
    m = multiplier(8, 0.9, INC)
    out = []
    for dt in (1e-3, 5e-4):
        n = int(round(0.05 / dt))
        reps = increment_decomposition(trajectory(_data(), dt, n), m)
        out.append(abs(reps[-1].residual))
        assert abs(reps[-1].lhs) > 20 * out[-1]
    assert out[0] / out[1] >= 3.0


def test_increment_validation():
    m = multiplier(8, 0.9, INC)
    u = _data()
    with pytest.raises(ValidationError):
        increment_decomposition([(0.0, u), (0.1, u), (0.3, u)], m)
    with pytest.raises(ValidationError):
        increment_decomposition([(0.0, u), (0.1, u)], m)
    p = ManifoldSpec.s2xs1(2, 2)
    with pytest.raises(UnsupportedManifoldError):
        increment_decomposition([(0.0, SpectralField.zeros(p))] * 3, multiplier(2, 0.9, p))
    big = ManifoldSpec.zonal(64)
    with pytest.raises(ResourceLimitError):
        increment_decomposition([(0.0, SpectralField.zeros(big))] * 3, multiplier(2, 0.9, big))


# --- rate card -----------------------------------------------------------------

def test_s_min_values():
    assert s_min("zoll") == pytest.approx(0.895644, abs=1e-6)
    assert s_min("s2xs1") == pytest.approx(0.963525, abs=1e-6)
    assert abs(s_min("zonal-s3") - (math.sqrt(21) - 1) / 4) < 1e-15


def test_rate_card_zoll_example():
    card = rate_card("zoll", 0.95)
    assert card.delta_exponent == pytest.approx(-0.2 / 0.9, rel=1e-14)
    assert card.p == pytest.approx(-0.15 / 0.9 + 0.45, rel=1e-14)
    assert card.growth_exponent == pytest.approx(0.15 / (2 * card.p), rel=1e-14)
    assert card.discrepancy is not None and card.p_alt != pytest.approx(card.p)


def test_rate_card_product():
    card = rate_card("s2xs1", 0.98)
    assert card.delta_exponent == pytest.approx(-6 * 0.02 / (4 * 0.98 - 3), rel=1e-14)
    assert card.p == pytest.approx(-5 * 0.02 / (4 * 0.98 - 3) + 0.98 - 0.75, rel=1e-14)
    assert card.discrepancy is None


@pytest.mark.parametrize("kind,s", [("zoll", 0.85), ("zoll", 1.0), ("s2xs1", 0.95)])
def test_rate_card_outside(kind, s):
    with pytest.raises(OutsideHypothesisError) as exc:
        rate_card(kind, s)
    assert exc.value.s_min == s_min(kind)


def test_local_window():
    assert local_window(16, 0.95) == pytest.approx(16 ** (-0.2 / 0.9), rel=1e-14)
