"""Field containers, Sobolev norms, spectral projectors and random data."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import basis
from .basis import ManifoldSpec, QuadratureGrid, mode_table
from .errors import AliasingRiskError, EmptySupportError, SpecMismatchError, ValidationError
from .rng import seeded_rng


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex coefficients indexed by ``mode_id``."""

    spec: ManifoldSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128)  # private copy
        if c.shape != (self.spec.n_modes,):
            raise SpecMismatchError(f"expected {self.spec.n_modes} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValidationError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, spec: ManifoldSpec) -> "SpectralField":
        return cls(spec, np.zeros(spec.n_modes, complex))

    @classmethod
    def mode(cls, spec: ManifoldSpec, labels, amplitude: complex = 1.0) -> "SpectralField":
        c = np.zeros(spec.n_modes, complex)
        c[mode_table(spec).index(labels)] = amplitude
        return cls(spec, c)

    def with_coeffs(self, coeffs) -> "SpectralField":
        return SpectralField(self.spec, coeffs)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _same(self.spec, other.spec)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _same(self.spec, other.spec)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "SpectralField":
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


@dataclass(frozen=True, eq=False)
class GridField:
    """Complex node values on a quadrature grid (flattened C order)."""

    grid: QuadratureGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.complex128)
        if v.shape != (self.grid.n_nodes,):
            raise SpecMismatchError(f"expected {self.grid.n_nodes} node values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("node values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def integral(self) -> complex:
        return complex(self.grid.integrate(self.values))


def _same(a: ManifoldSpec, b: ManifoldSpec):
    if a != b:
        raise SpecMismatchError(f"spec mismatch: {a.header()} vs {b.header()}")


def synthesize(u: SpectralField, grid: QuadratureGrid) -> GridField:
    """Node values of ``sum_k c_k e_k``."""
    _same(u.spec, grid.spec)
    return GridField(grid, basis.synthesize_array(u.coeffs, grid))


def analyze(g: GridField) -> SpectralField:
    """Quadrature inner products against every basis function.

    Refuses grids that cannot integrate quartic products exactly, since the
    coefficients of a cubic nonlinearity would then alias.
    """
    if not g.grid.dealiased:
        raise AliasingRiskError("grid is below the quartic dealiasing resolution")
    return SpectralField(g.grid.spec, basis.analyze_array(g.values, g.grid))


def pointwise_cubic(g: GridField) -> GridField:
    v = g.values
    return GridField(g.grid, (v.real**2 + v.imag**2) * v)


# ---------------------------------------------------------------------------
# norms and projectors

def bracket(spec: ManifoldSpec) -> np.ndarray:
    """<n_k> = sqrt(1 + n_k^2) per mode."""
    return mode_table(spec).bracket


def hs_norm(u: SpectralField, s: float) -> float:
    if not -4.0 <= s <= 4.0:
        raise ValidationError(f"Sobolev index {s} outside [-4, 4]")
    w = bracket(u.spec) ** (2.0 * s)
    return float(math.sqrt(np.sum(w * (u.coeffs.real**2 + u.coeffs.imag**2))))


def l2_norm(u: SpectralField) -> float:
    return hs_norm(u, 0.0)


def _check_dyadic(N):
    if N < 1 or int(N) != N or (int(N) & (int(N) - 1)):
        raise ValidationError(f"N must be a dyadic integer >= 1, got {N}")
    return int(N)


def dyadic_mask(spec: ManifoldSpec, N: int) -> np.ndarray:
    N = _check_dyadic(N)
    # <n>^2 = 1 + n^2 is an integer, so compare squares exactly
    b2 = 1 + mode_table(spec).freq2
    return (b2 >= N * N) & (b2 < 4 * N * N)


def dyadic_project(u: SpectralField, N: int) -> SpectralField:
    return u.with_coeffs(np.where(dyadic_mask(u.spec, N), u.coeffs, 0.0))


def dyadic_blocks(spec: ManifoldSpec) -> list[int]:
    """All dyadic N whose block meets the truncation."""
    top = int(np.max(1 + mode_table(spec).freq2))
    out, N = [], 1
    while N * N <= top:
        out.append(N)
        N *= 2
    return out


def cluster_mask(spec: ManifoldSpec, k: int) -> np.ndarray:
    if k < 1 or int(k) != k:
        raise ValidationError(f"cluster index must be an integer >= 1, got {k}")
    f2 = mode_table(spec).freq2
    return (f2 >= k * k) & (f2 <= (k + 1) ** 2)


def cluster_project(u: SpectralField, k: int) -> SpectralField:
    return u.with_coeffs(np.where(cluster_mask(u.spec, k), u.coeffs, 0.0))


# ---------------------------------------------------------------------------
# random data

DYADIC = "dyadic"
SOBOLEV = "sobolev"


@dataclass(frozen=True)
class RandomProfile:
    """Recipe for seeded random data.

    ``dyadic``: i.i.d. complex Gaussians on ``N <= <n_k> < 2N``, scaled to
    unit L^2.  ``sobolev``: moduli ``<n_k>^(-s - 3/2)`` with i.i.d. uniform
    phases, scaled so that ``hs_norm(u, s) == norm``.  Draws run over modes in
    ``mode_id`` order, so on the zonal sector the first coefficients do not
    change when the truncation grows.
    """

    kind: str
    N: int | None = None
    s: float | None = None
    seed: int = 0
    norm: float = 1.0
    sample: int = 0
    stream: int = 0

    def __post_init__(self):
        if self.kind == DYADIC:
            _check_dyadic(self.N)
        elif self.kind == SOBOLEV:
            if self.s is None or not (-4.0 <= self.s <= 4.0):
                raise ValidationError("sobolev profile needs s in [-4, 4]")
            if not self.norm > 0:
                raise ValidationError("norm must be positive")
        else:
            raise ValidationError(f"unknown profile kind {self.kind!r}")

    @classmethod
    def dyadic(cls, N: int, seed: int = 0, sample: int = 0, stream: int = 0) -> "RandomProfile":
        return cls(DYADIC, N=N, seed=seed, sample=sample, stream=stream)

    @classmethod
    def sobolev(cls, s: float, seed: int = 0, norm: float = 1.0, sample: int = 0, stream: int = 0) -> "RandomProfile":
        return cls(SOBOLEV, s=s, seed=seed, norm=norm, sample=sample, stream=stream)


def random_field(spec: ManifoldSpec, profile: RandomProfile) -> SpectralField:
    rng = seeded_rng(profile.seed, profile.sample, profile.stream)
    c = np.zeros(spec.n_modes, complex)
    if profile.kind == DYADIC:
        mask = dyadic_mask(spec, profile.N)
        n = int(mask.sum())
        if n == 0:
            raise EmptySupportError(f"dyadic block N={profile.N} is empty for {spec.header()}")
        c[mask] = rng.complex_normal(n)
        c /= np.linalg.norm(c)
        return SpectralField(spec, c)
    br = bracket(spec)
    c = br ** (-profile.s - 1.5) * rng.phases(spec.n_modes)
    u = SpectralField(spec, c)
    return u * (profile.norm / hs_norm(u, profile.s))
