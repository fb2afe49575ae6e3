import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mnls.basis import ManifoldSpec, make_grid
from mnls.dynamics import (
    EvolveConfig,
    evolve,
    linear_propagate,
    nonlinear_phase_step,
    strang_step,
    trajectory,
)
from mnls.errors import NumericalGuardError, SpecMismatchError, ValidationError
from mnls.estlab import fit_exponent
from mnls.fields import GridField, RandomProfile, SpectralField, random_field, synthesize
from mnls.imethod import energy, mass

ZONAL = ManifoldSpec.zonal(32)
PROD = ManifoldSpec.s2xs1(4, 4)


def data(spec=ZONAL, seed=1, s=0.9):
    return random_field(spec, RandomProfile.sobolev(s, seed=seed))


# --- linear flow ---------------------------------------------------------------

def test_linear_identity_at_zero():
    u = data()
    np.testing.assert_array_equal(linear_propagate(u, 0.0).coeffs, u.coeffs)


def test_linear_phase_example():
    u = SpectralField.mode(ZONAL, (1,))
    assert linear_propagate(u, math.pi).coeffs[1] == pytest.approx(-1.0, abs=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**63), st.floats(-100, 100), st.sampled_from([ZONAL, PROD]))
def test_linear_unitary(seed, t, spec):
    u = data(spec, seed)
    assert abs(linear_propagate(u, t).norm() - u.norm()) <= 1e-14 * u.norm()


# --- nonlinear substep -----------------------------------------------------------

def test_phase_step_examples():
    g = make_grid(ZONAL)
    out = nonlinear_phase_step(GridField(g, np.ones(g.n_nodes)), math.pi)
    np.testing.assert_allclose(out.values, -1.0, atol=1e-15)
    v = synthesize(data(), g)
    w = nonlinear_phase_step(v, 0.3)
    np.testing.assert_allclose(np.abs(w.values), np.abs(v.values), rtol=1e-15)
    half = nonlinear_phase_step(nonlinear_phase_step(v, 0.15), 0.15)
    np.testing.assert_allclose(half.values, w.values, rtol=1e-14, atol=1e-15)


# --- Strang step -----------------------------------------------------------------

def test_linear_strang_is_exact_flow():
    u = data()
    a = strang_step(u, 0.01, nonlinear=False)
    b = linear_propagate(u, 0.01)
    np.testing.assert_allclose(a.coeffs, b.coeffs, rtol=0, atol=1e-15)


@pytest.mark.parametrize("spec", [ZONAL, PROD])
@pytest.mark.parametrize("dt", [0.01, 0.5, 2.0])
def test_constant_data_exact(spec, dt):
    c = 0.8 * np.exp(0.3j)
    lab = (0,) if spec.kind == "zonal-s3" else (0, 0, 0)
    u = SpectralField.mode(spec, lab, c * math.sqrt(spec.volume))
    out = strang_step(u, dt)
    expect = c * math.sqrt(spec.volume) * np.exp(-1j * abs(c) ** 2 * dt)
    assert out.coeffs[0] == pytest.approx(expect, abs=1e-13)
    assert np.max(np.abs(out.coeffs[1:])) < 1e-13


@pytest.mark.parametrize("spec", [ZONAL, PROD])
def test_strang_reversible(spec):
    u = data(spec)
    back = strang_step(strang_step(u, 1e-2), -1e-2)
    assert np.linalg.norm(back.coeffs - u.coeffs) <= 1e-10 * u.norm()


def test_strang_mass_preserving_large_amplitude():
    u = 3.0 * data(PROD, 5)
    v = u
    g = make_grid(PROD)
    for _ in range(20):
        v = strang_step(v, 5e-3, g)
    assert abs(mass(v) - mass(u)) <= 1e-12 * mass(u)


def test_strang_spec_mismatch():
    with pytest.raises(SpecMismatchError):
        strang_step(data(), 1e-3, make_grid(ManifoldSpec.zonal(8)))


def test_large_spec_uses_matrix_free_substep():
    spec = ManifoldSpec.s2xs1(6, 8)
    assert spec.n_modes > 400
    u = data(spec, 2)
    v = strang_step(u, 1e-3)
    assert abs(mass(v) - mass(u)) <= 1e-12 * mass(u)
    back = strang_step(v, -1e-3)
    assert np.linalg.norm(back.coeffs - u.coeffs) <= 1e-10 * u.norm()


def _final(u0, dt, t_end=0.25):
    return trajectory(u0, dt, int(round(t_end / dt)), int(round(t_end / dt)))[-1][1]


def test_second_order_convergence():
    u0 = data(ManifoldSpec.zonal(16), 3)
    ref = _final(u0, 1.25e-4)
    pts = [(dt, np.linalg.norm(_final(u0, dt).coeffs - ref.coeffs)) for dt in (2e-3, 1e-3, 5e-4)]
    assert 1.7 <= fit_exponent(pts).slope <= 2.3


# --- evolve ----------------------------------------------------------------------

def test_evolve_t_end_zero():
    u = data()
    res = evolve(EvolveConfig(ZONAL, u, 1e-3, 0.0))
    assert len(res.records) == 1
    r = res.records[0]
    assert r.t == 0.0 and r.mass == pytest.approx(mass(u)) and r.energy == pytest.approx(energy(u))


def test_evolve_linear_energy_constant():
    res = evolve(EvolveConfig(ZONAL, RandomProfile.sobolev(0.9, seed=1), 1e-3, 0.1, 10, nonlinear=False))
    e = np.array([r.energy for r in res.records])
    assert np.max(np.abs(e - e[0])) <= 1e-12 * e[0]


def test_evolve_records_and_determinism():
    cfg = EvolveConfig(ZONAL, RandomProfile.sobolev(0.9, seed=4), 1e-3, 0.05, 10, big_n=8, keep_states=True)
    a, b = evolve(cfg), evolve(cfg)
    assert [r.t for r in a.records] == pytest.approx([0, 0.01, 0.02, 0.03, 0.04, 0.05])
    assert a.records == b.records
    np.testing.assert_array_equal(a.final.coeffs, b.final.coeffs)
    assert len(a.states) == len(a.records)
    assert a.records[0].modified_energy < a.records[0].energy


def test_evolve_validation():
    with pytest.raises(ValidationError):
        EvolveConfig(ZONAL, None, 0.0, 1.0)
    with pytest.raises(ValidationError):
        EvolveConfig(ZONAL, None, 1e-3, 1.0, diag_every=0)
    with pytest.raises(ValidationError):
        EvolveConfig(ZONAL, None, 0.3, 1.0).n_steps()
    with pytest.raises(ValidationError):
        evolve(EvolveConfig(ZONAL, 42, 1e-3, 1e-3))
    with pytest.raises(SpecMismatchError):
        evolve(EvolveConfig(ZONAL, data(PROD), 1e-3, 1e-3))


def test_evolve_guard_trips_on_nonconvergence():
    # a huge step on large data makes the implicit density iteration diverge
    u = 50.0 * data(ManifoldSpec.zonal(8), 1)
    with pytest.raises(NumericalGuardError):
        evolve(EvolveConfig(u.spec, u, 1.0, 1.0))
