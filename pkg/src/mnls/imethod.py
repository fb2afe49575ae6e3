"""The I-operator, conserved and modified functionals, and rate calculators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from .basis import ZONAL_S3, S2XS1, ManifoldSpec, QuadratureGrid, make_grid, mode_table, synthesize_array, analyze_array
from .errors import (
    OutsideHypothesisError,
    ResourceLimitError,
    SpecMismatchError,
    UnsupportedManifoldError,
    ValidationError,
)
from .fields import SpectralField, bracket, hs_norm

# ---------------------------------------------------------------------------
# multiplier


def _psi(x):
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, np.exp(-1.0 / safe), 0.0)


def smoothstep(r):
    """C-infinity step: 0 for r <= 0, 1 for r >= 1, strictly increasing between."""
    r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
    a, b = _psi(r), _psi(1.0 - r)
    return a / (a + b)


def symbol(xi, N: float, s: float) -> np.ndarray:
    """m(xi): 1 below N, (N/xi)^(1-s) above 2N, log-smooth in between."""
    xi = np.asarray(xi, dtype=float)
    r = np.log2(np.maximum(xi, N) / N)
    # in (N, 2N) the log-slope ramps from 0 to -(1-s); beyond 2N it is -(1-s) exactly
    expo = np.where(r >= 1.0, r, smoothstep(r) * r)
    return np.exp(-(1.0 - s) * expo * math.log(2.0))


def _check_Ns(N, s):
    if not (N >= 1) or int(N) != N or (int(N) & (int(N) - 1)):
        raise ValidationError(f"I-cutoff N must be a dyadic integer >= 1, got {N}")
    if not 0.0 < s < 1.0:
        raise ValidationError(f"s must lie in (0, 1), got {s}")


@dataclass(frozen=True, eq=False)
class IMultiplier:
    N: int
    s: float
    spec: ManifoldSpec
    values: np.ndarray = field(repr=False)

    def symbol_bound(self) -> float:
        """2^(1-s) <N>^(1-s): bound on m(n_k) <n_k>^(1-s) over all modes."""
        return (2.0 * math.sqrt(1.0 + self.N**2)) ** (1.0 - self.s)


def multiplier(N: int, s: float, spec: ManifoldSpec) -> IMultiplier:
    _check_Ns(N, s)
    vals = symbol(mode_table(spec).freq, N, s)
    vals.setflags(write=False)
    return IMultiplier(int(N), float(s), spec, vals)


def identity_multiplier(spec: ManifoldSpec, s: float = 0.5) -> IMultiplier:
    """Multiplier with N above the truncation: every value is exactly 1."""
    top = float(mode_table(spec).freq.max())
    N = 1
    while N < top:
        N *= 2
    return multiplier(N, s, spec)


def apply_I(u: SpectralField, mult: IMultiplier) -> SpectralField:
    if u.spec != mult.spec:
        raise SpecMismatchError("field and multiplier were built for different specs")
    return u.with_coeffs(mult.values * u.coeffs)


# ---------------------------------------------------------------------------
# functionals


def mass(u: SpectralField) -> float:
    c = u.coeffs
    return float(np.sum(c.real**2 + c.imag**2))


def _grid_for(spec, grid):
    if grid is None:
        grid = make_grid(spec)
    if grid.spec != spec:
        raise SpecMismatchError("field and grid were built for different specs")
    grid.require(4)
    return grid


def kinetic(coeffs: np.ndarray, spec: ManifoldSpec) -> float:
    """1/2 int |grad u|^2 via the spectral identity."""
    c = np.asarray(coeffs)
    return 0.5 * float(np.sum(mode_table(spec).freq2 * (c.real**2 + c.imag**2)))


def quartic(coeffs: np.ndarray, grid: QuadratureGrid) -> float:
    """1/4 int |u|^4 by quadrature."""
    v = synthesize_array(coeffs, grid)
    a2 = v.real**2 + v.imag**2
    return 0.25 * float(grid.integrate(a2 * a2))


def energy(u: SpectralField, grid: QuadratureGrid | None = None, coupling: float = 1.0) -> float:
    """E(u) = 1/2 sum n_k^2 |c_k|^2 + coupling/4 int |u|^4.

    ``coupling`` is the nonlinear coefficient of the flow being monitored; a
    linear run (coupling 0) conserves the kinetic part alone.
    """
    grid = _grid_for(u.spec, grid)
    e = kinetic(u.coeffs, u.spec)
    if coupling:
        e += coupling * quartic(u.coeffs, grid)
    return e


def modified_energy(u: SpectralField, mult: IMultiplier, grid: QuadratureGrid | None = None, coupling: float = 1.0) -> float:
    return energy(apply_I(u, mult), grid, coupling)


def symbol_check(u: SpectralField, mult: IMultiplier) -> tuple[bool, bool]:
    """Both I-operator norm inequalities for one field.

    Returns ``(upper, lower)`` where upper is
    ``||Iu||_H1 <= 2^(1-s) <N>^(1-s) ||u||_Hs`` and lower is
    ``||u||_Hs <= sup_k <n_k>^s / (m_k <n_k>) * ||Iu||_H1``.
    """
    Iu = apply_I(u, mult)
    h1 = hs_norm(Iu, 1.0)
    hs = hs_norm(u, mult.s)
    br = bracket(u.spec)
    sup = float(np.max(br**mult.s / (mult.values * br)))
    # per-mode inequalities hold exactly; allow rounding in the sums
    tol = 1e-13
    return h1 <= mult.symbol_bound() * hs * (1 + tol), hs <= sup * h1 * (1 + tol)


# ---------------------------------------------------------------------------
# energy increment decomposition

MAX_INCREMENT_K = 48


@dataclass(frozen=True)
class IncrementReport:
    """Energy increment of Iu from 0 to t and its two quadrilinear parts.

    ``i1 = Re(i I1)`` and ``i2 = Re(i I2)``.  Along the flow
    ``i d/dt u + Delta u = |u|^2 u`` the increment equals ``i2 - i1``, and
    ``residual = lhs - (i2 - i1)``.
    """

    t: float
    lhs: float
    i1: float
    i2: float
    residual: float


def weight_tensor(mult: IMultiplier, grid: QuadratureGrid) -> np.ndarray:
    """W[a,b,c,d] = (1 - m_a/(m_b m_c m_d)) int e_a e_b e_c e_d (zonal, real basis)."""
    B = grid._tables["B"]
    Q = np.einsum("aj,bj,cj,dj->abcd", B * grid.weights, B, B, B, optimize=True)
    m = mult.values
    w = 1.0 - m[:, None, None, None] / (m[None, :, None, None] * m[None, None, :, None] * m[None, None, None, :])
    return w * Q


def _quadrilinear(W, a, b):
    """sum W[n1..n4] conj(a_n1) b_n2 conj(b_n3) b_n4, batched over rows."""
    t = np.einsum("abcd,td->tabc", W, b, optimize=True)
    t = np.einsum("tabc,tc->tab", t, b.conj(), optimize=True)
    t = np.einsum("tab,tb->ta", t, b, optimize=True)
    return np.einsum("ta,ta->t", t, a.conj())


def increment_integrands(coeffs: np.ndarray, mult: IMultiplier, grid: QuadratureGrid) -> tuple[np.ndarray, np.ndarray]:
    """Time integrands of I1 and I2 for states ``coeffs`` of shape (n_t, n_modes)."""
    spec = mult.spec
    W = weight_tensor(mult, grid)
    m = mult.values
    n2 = mode_table(spec).freq2
    Iu = coeffs * m
    lap_Iu = -n2 * Iu
    u = synthesize_array(coeffs, grid)
    cubic = analyze_array(_abs2(u) * u, grid)
    I_cubic = cubic * m
    return _quadrilinear(W, lap_Iu, Iu), _quadrilinear(W, I_cubic, Iu)


def _abs2(v):
    return v.real**2 + v.imag**2


def _cumulative(f, ts):
    """Cumulative Simpson integral of a complex series, starting at 0."""
    re = cumulative_simpson(f.real, x=ts, initial=0.0)
    im = cumulative_simpson(f.imag, x=ts, initial=0.0)
    return re + 1j * im


def increment_decomposition(
    trajectory, mult: IMultiplier, grid: QuadratureGrid | None = None, coupling: float = 1.0
) -> list[IncrementReport]:
    """Modified-energy increments along a uniformly sampled trajectory.

    ``trajectory`` is a sequence of ``(t, SpectralField)`` pairs on a uniform
    time grid starting at the reference time.  The time integrals of the
    quadrilinear integrands use cumulative composite Simpson.
    """
    spec = mult.spec
    if spec.kind != ZONAL_S3:
        raise UnsupportedManifoldError("increment decomposition is implemented on zonal-s3 only")
    if spec.k_max > MAX_INCREMENT_K:
        raise ResourceLimitError(f"k_max={spec.k_max} exceeds {MAX_INCREMENT_K} for the quadruple sums")
    grid = _grid_for(spec, grid)
    ts = np.array([float(t) for t, _ in trajectory])
    if len(ts) < 3:
        raise ValidationError("need at least three trajectory samples")
    dts = np.diff(ts)
    if np.any(dts <= 0) or np.ptp(dts) > 1e-9 * max(1.0, abs(ts[-1])):
        raise ValidationError("trajectory must be sampled on a uniform increasing time grid")
    for _, u in trajectory:
        if u.spec != spec:
            raise SpecMismatchError("trajectory field does not match the multiplier spec")
    C = np.stack([u.coeffs for _, u in trajectory])
    j1, j2 = increment_integrands(C, mult, grid)
    # the quadrilinear terms come with the nonlinear coefficient of the flow;
    # I2 carries a second factor from the cubic term inside I(|u|^2 u)
    j1 = coupling * j1
    j2 = coupling * coupling * j2
    I1 = _cumulative(j1, ts)
    I2 = _cumulative(j2, ts)
    E = np.array([kinetic(c * mult.values, spec) + coupling * quartic(c * mult.values, grid) for c in C])
    lhs = E - E[0]
    i1 = np.real(1j * I1)
    i2 = np.real(1j * I2)
    return [
        IncrementReport(float(ts[j] - ts[0]), float(lhs[j]), float(i1[j]), float(i2[j]), float(lhs[j] - (i2[j] - i1[j])))
        for j in range(len(ts))
    ]


# ---------------------------------------------------------------------------
# thresholds and rates

ZOLL = "zoll"
PRODUCT = "s2xs1"

_RATE_KIND = {ZONAL_S3: ZOLL, ZOLL: ZOLL, "zonal-s3": ZOLL, S2XS1: PRODUCT}


def s_min(kind: str) -> float:
    kind = _rate_kind(kind)
    if kind == ZOLL:
        return (math.sqrt(21.0) - 1.0) / 4.0
    return (1.0 + 3.0 * math.sqrt(5.0)) / 8.0


def _rate_kind(kind: str) -> str:
    try:
        return _RATE_KIND[kind.strip().lower()]
    except KeyError:
        raise ValidationError(f"unknown manifold {kind!r} for rate card") from None


@dataclass(frozen=True)
class RateCard:
    """Local-existence window, iteration count and growth exponents.

    ``p`` is the almost-conservation rate used for the growth bound.  For the
    Zoll case the alternative closed form ``p_alt`` derived in the iteration
    argument disagrees with ``p``; ``discrepancy`` records that.
    """

    kind: str
    s: float
    s_min: float
    delta_exponent: float
    iterations_exponent: float
    growth_exponent: float
    p: float
    p_alt: float | None = None
    discrepancy: str | None = None

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def rate_card(kind: str, s: float) -> RateCard:
    """Exponents for s in (s_min, 1).

    Raises :class:`OutsideHypothesisError` (with ``s_min`` attached) below the
    threshold.
    """
    kind = _rate_kind(kind)
    smin = s_min(kind)
    if not (smin < s < 1.0):
        err = OutsideHypothesisError(f"s={s} is outside ({smin:.6f}, 1) for {kind}")
        err.s_min = smin
        raise err
    if kind == ZOLL:
        delta = -4.0 * (1.0 - s) / (2.0 * s - 1.0)
        p = -3.0 * (1.0 - s) / (2.0 * s - 1.0) + s - 0.5
        p_alt = 4.0 * (1.0 - s) / (2.0 * s - 1.0) + 3.0 * s - 1.5
        note = (
            "almost-conservation rate p = -3(1-s)/(2s-1) + s - 1/2 is used; the iteration argument "
            "also states p = 4(1-s)/(2s-1) + 3s - 3/2, which disagrees"
        )
    else:
        delta = -6.0 * (1.0 - s) / (4.0 * s - 3.0)
        p = -5.0 * (1.0 - s) / (4.0 * s - 3.0) + s - 0.75
        p_alt, note = None, None
    return RateCard(kind, float(s), smin, delta, -delta, 3.0 * (1.0 - s) / (2.0 * p), p, p_alt, note)


def b_alpha(alpha: float) -> float:
    """Interpolated bilinear regularity index 5/8 - alpha/4 (Zoll)."""
    return 5.0 / 8.0 - alpha / 4.0


def b_beta(beta: float) -> float:
    """Interpolated bilinear regularity index 3/4 - beta/3 (S^2 x S^1)."""
    return 3.0 / 4.0 - beta / 3.0


def local_window(N: int, s: float, kind: str = ZOLL) -> float:
    """Suggested local-existence time N^delta_exponent."""
    return float(N) ** rate_card(kind, s).delta_exponent
