"""Empirical exponents for the linear and bilinear space-time estimates.

Every experiment samples seeded random data, evolves it with the exact
linear flow and integrates a density over ``[0, T] x M``.

Space integrals use the quadrature grids of :mod:`mnls.basis` (exact for the
polynomial densities).  Time integrals default to an exact rule: all
eigenvalues of ``-Delta`` are integers on both manifolds, so
``t -> int_M density(t)`` is a 2 pi-periodic trigonometric polynomial whose
bandwidth is known in advance.  It is sampled at ``L > 2 * bandwidth`` equally
spaced times on [0, 2 pi) (by FFT over the grouped frequencies), converted to
Fourier coefficients, and integrated over [0, T] in closed form.  Composite
Simpson on ``n_t`` points is available as ``rule="simpson"``; it only
resolves the flow when ``n_t`` is large compared with the highest
eigenvalue, so it serves as a cross-check at small truncations.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
from scipy.integrate import simpson
from scipy.stats import linregress

from .basis import (
    ZONAL_S3,
    S2XS1,
    ManifoldSpec,
    QuadratureGrid,
    eval_mode,
    make_grid,
    mode_table,
)
from .errors import EmptySupportError, OutsideHypothesisError, ValidationError
from .fields import RandomProfile, SpectralField, cluster_mask, dyadic_mask, random_field
from .rng import seeded_rng

SPECTRAL = "spectral"
SIMPSON = "simpson"


@dataclass(frozen=True)
class ExperimentGridTime:
    """Time interval [0, T] and quadrature rule.

    For ``simpson`` ``n_t`` is the (odd, >= 33) number of nodes.  For
    ``spectral`` it is a lower bound on the number of periodic samples; the
    rule raises it to the bandwidth of the integrand automatically.
    """

    T: float = 1.0
    n_t: int = 33
    rule: str = SPECTRAL

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValidationError("T must be positive")
        if self.rule not in (SPECTRAL, SIMPSON):
            raise ValidationError(f"unknown time rule {self.rule!r}")
        if self.rule == SIMPSON and (self.n_t < 33 or self.n_t % 2 == 0):
            raise ValidationError("simpson needs an odd n_t >= 33")
        if self.n_t < 1:
            raise ValidationError("n_t must be positive")

    def refined(self) -> "ExperimentGridTime":
        return ExperimentGridTime(self.T, 2 * self.n_t - 1 if self.rule == SIMPSON else 2 * self.n_t, self.rule)


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    stderr: float
    log2x: tuple
    log2y: tuple


def fit_exponent(points) -> FitResult:
    """Least-squares line through ``(log2 x, log2 y)``."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ValidationError("need at least three points")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValidationError("x and y must be positive and finite")
    lx, ly = np.log2(x), np.log2(y)
    if np.ptp(lx) == 0:
        raise ValidationError("x values are degenerate")
    fit = linregress(lx, ly)
    stderr = float(fit.stderr) if len(pts) > 2 else 0.0
    return FitResult(float(fit.slope), float(fit.intercept), stderr, tuple(lx.tolist()), tuple(ly.tolist()))


# ---------------------------------------------------------------------------
# node evaluation of a sparse set of modes


def _support_values(spec: ManifoldSpec, idx: np.ndarray, grid: QuadratureGrid, nodes: slice) -> np.ndarray:
    """Basis values ``e_k(x)`` for modes ``idx`` at a slice of flattened nodes."""
    if spec.kind == ZONAL_S3:
        return grid._tables["B"][idx][:, nodes]
    lab = mode_table(spec).labels[idx]
    nt, nphi, ny = grid.shape
    flat = np.arange(grid.n_nodes)[nodes]
    it, rem = np.divmod(flat, nphi * ny)
    ip, iy = np.divmod(rem, ny)
    # e^{i l phi_p} and e^{i m y_q} are roots of unity on the equispaced axes
    rot_phi = np.exp(2j * math.pi * np.arange(nphi) / nphi)
    rot_y = np.exp(2j * math.pi * np.arange(ny) / ny) / (2.0 * math.pi)
    P = grid._tables["P"][lab[:, 0], np.abs(lab[:, 1])][:, it]
    ph = rot_phi[np.outer(lab[:, 1], ip) % nphi] * rot_y[np.outer(lab[:, 2], iy) % ny]
    return P * ph


class _Flow:
    """Free evolution of one field, grouped by integer eigenvalue."""

    def __init__(self, u: SpectralField, scale: int = 1, freq2=None):
        c = u.coeffs
        idx = np.flatnonzero(c)
        if len(idx) == 0:
            raise EmptySupportError("field has no nonzero coefficients")
        f2 = np.asarray((mode_table(u.spec).freq2 if freq2 is None else freq2)[idx], dtype=np.int64)
        order = np.argsort(f2, kind="stable")
        self.idx = idx[order]
        self.coef = c[self.idx]
        self.omega = f2[order]
        self._starts = np.flatnonzero(np.r_[True, np.diff(self.omega) != 0])
        self.w0 = int(self.omega.min())
        self.width = int(self.omega.max()) - self.w0
        self.spec = u.spec
        self.scale = scale

    def alpha(self, grid, nodes):
        """A[r, x] = sum over modes with omega = w0 + r of c_k e_k(x)."""
        E = _support_values(self.spec, self.idx, grid, nodes)
        A = np.zeros((self.width + 1, E.shape[1]), dtype=complex)
        A[self.omega[self._starts] - self.w0] = np.add.reduceat(self.coef[:, None] * E, self._starts, axis=0)
        return A

    def samples(self, grid, nodes, L):
        """u(t_j, x) up to the unimodular factor exp(-i w0 t_j), t_j = 2 pi j / L."""
        return scipy.fft.fft(self.alpha(grid, nodes), n=L, axis=0)

    def direct(self, grid, nodes, ts):
        E = _support_values(self.spec, self.idx, grid, nodes)
        ph = np.exp(-1j * np.outer(ts, self.omega))
        return (ph * self.coef) @ E


def _fast_odd(n: int) -> int:
    n = max(int(n), 1)
    if n % 2 == 0:
        n += 1
    while True:
        m = n
        for p in (3, 5, 7):
            while m % p == 0:
                m //= p
        if m == 1:
            return n
        n += 2


def _periodic_integral(S: np.ndarray, T: float) -> float:
    """int_0^T of the trigonometric polynomial sampled at S[j] = f(2 pi j / L), L odd."""
    L = len(S)
    F = scipy.fft.rfft(S) / L
    k = np.arange(1, len(F))
    kappa = (np.exp(1j * k * T) - 1.0) / (1j * k)
    return float(T * F[0].real + 2.0 * np.real(np.sum(F[1:] * kappa)))


def _chunks(n_nodes, per_chunk):
    step = max(1, per_chunk)
    for a in range(0, n_nodes, step):
        yield slice(a, min(n_nodes, a + step))


_CHUNK_ELEMS = 1 << 22


def spacetime_integral(flows, grid: QuadratureGrid, density, bandwidth: int, tgrid: ExperimentGridTime) -> float:
    """int_0^T int_M density(u_1, ..., u_n) for freely evolving fields.

    ``density`` must depend on the fields only through quantities invariant
    under a common-per-field unimodular factor (moduli, products with
    conjugates), since the grouped samples drop ``exp(-i w0 t)``.
    ``bandwidth`` bounds the time frequencies of the density when it is a
    trigonometric polynomial (even powers and bilinear products), in which
    case the spectral rule is exact.
    """
    T = tgrid.T / flows[0].scale
    if tgrid.rule == SIMPSON:
        ts = np.linspace(0.0, T, tgrid.n_t)
        S = np.zeros(tgrid.n_t)
        per = max(1, _CHUNK_ELEMS // (tgrid.n_t * len(flows)))
        for nodes in _chunks(grid.n_nodes, per):
            vals = [f.direct(grid, nodes, ts) for f in flows]
            S += density(*vals) @ grid.weights[nodes]
        return float(simpson(S, x=ts)) * flows[0].scale
    # non-polynomial densities (odd p) are smooth enough that sampling at the
    # bandwidth of the next even power is accurate to ~1e-9 relative
    L = _fast_odd(max(tgrid.n_t, 2 * bandwidth + 1))
    S = np.zeros(L)
    per = max(1, _CHUNK_ELEMS // (L * len(flows)))
    for nodes in _chunks(grid.n_nodes, per):
        vals = [f.samples(grid, nodes, L) for f in flows]
        S += density(*vals) @ grid.weights[nodes]
    return _periodic_integral(S, T) * flows[0].scale


def _abs2(v):
    return v.real**2 + v.imag**2


def _power_density(p):
    if p == int(p) and int(p) % 2 == 0:
        h = int(p) // 2
        return lambda u: _abs2(u) ** h
    if p == int(p):
        h = int(p) // 2

        def odd(u):
            a2 = _abs2(u)
            return a2**h * np.sqrt(a2)

        return odd
    return lambda u: _abs2(u) ** (0.5 * p)


def _check_tgrid(tgrid):
    return ExperimentGridTime() if tgrid is None else tgrid


def _run(fn, items, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


# ---------------------------------------------------------------------------
# bilinear


def bilinear_norm(f1: SpectralField, f2: SpectralField, grid: QuadratureGrid | None = None, tgrid=None) -> float:
    """||(e^{it Delta} f1)(e^{it Delta} f2)||_{L^2([0,T] x M)}."""
    tgrid = _check_tgrid(tgrid)
    grid = make_grid(f1.spec) if grid is None else grid
    grid.require(4)
    a, b = _Flow(f1), _Flow(f2)
    val = spacetime_integral([a, b], grid, lambda x, y: _abs2(x) * _abs2(y), a.width + b.width, tgrid)
    return math.sqrt(max(val, 0.0))


def bilinear_ratio(f1, f2, grid=None, tgrid=None) -> float:
    return bilinear_norm(f1, f2, grid, tgrid) / (f1.norm() * f2.norm())


def probe_fields(spec: ManifoldSpec, N: int) -> list[SpectralField]:
    """Deterministic probes in block N: one pure eigenmode and a point-concentrated sum."""
    mask = dyadic_mask(spec, N)
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        raise EmptySupportError(f"dyadic block N={N} is empty")
    single = np.zeros(spec.n_modes, complex)
    single[idx[0]] = 1.0
    lab = mode_table(spec).labels[idx]
    pole = (0.0,) if spec.kind == ZONAL_S3 else (0.0, 0.0, 0.0)
    conc = np.zeros(spec.n_modes, complex)
    conc[idx] = [np.conj(eval_mode(spec, l, *pole)) for l in lab]
    out = [SpectralField(spec, single)]
    if np.linalg.norm(conc) > 0:
        out.append(SpectralField(spec, conc / np.linalg.norm(conc)))
    return out


def bilinear_experiment(
    spec: ManifoldSpec, N1: int, N2: int, n_samples: int = 32, seed: int = 0, tgrid=None, jobs: int = 1, probes: bool = False
) -> float:
    """Max over sample pairs of the bilinear ratio (f1 in block N1, f2 in block N2)."""
    tgrid = _check_tgrid(tgrid)
    if N2 > N1:
        raise ValidationError("need N1 >= N2")
    _check_samples(n_samples)
    grid = make_grid(spec)
    # validates both blocks up front
    for N in (N1, N2):
        if not dyadic_mask(spec, N).any():
            raise EmptySupportError(f"dyadic block N={N} is empty for {spec.header()}")

    def one(i):
        f1 = random_field(spec, RandomProfile.dyadic(N1, seed, sample=i, stream=0))
        f2 = random_field(spec, RandomProfile.dyadic(N2, seed, sample=i, stream=1))
        return bilinear_ratio(f1, f2, grid, tgrid)

    vals = _run(one, range(n_samples), jobs)
    if probes:
        for f1 in probe_fields(spec, N1):
            for f2 in probe_fields(spec, N2):
                vals.append(bilinear_ratio(f1, f2, grid, tgrid))
    return float(max(vals))


def _check_samples(n):
    if int(n) != n or n < 1:
        raise ValidationError("n_samples must be a positive integer")


# ---------------------------------------------------------------------------
# exponential sums


class _ScalarFlow:
    """Trigonometric sum sum_n c_n exp(-i nu_n t) on a single point."""

    def __init__(self, c, nu, scale):
        self.coef = np.asarray(c, complex)
        self.omega = np.asarray(nu, np.int64)
        self.w0 = int(self.omega.min())
        self.width = int(self.omega.max()) - self.w0
        self.scale = scale

    def samples(self, grid, nodes, L):
        A = np.zeros(self.width + 1, complex)
        np.add.at(A, self.omega - self.w0, self.coef)
        return scipy.fft.fft(A, n=L)[:, None]

    def direct(self, grid, nodes, ts):
        return (np.exp(-1j * np.outer(ts, self.omega)) * self.coef).sum(axis=1)[:, None]


class _PointGrid:
    n_nodes = 1
    weights = np.ones(1)


def _expsum_frequencies(N: int, alpha: float):
    """Integer frequencies ``scale * (n + alpha/4)^2`` for n = 0..N and the scale."""
    n = np.arange(N + 1)
    for scale in range(1, 17):
        nu = scale * (n + alpha / 4.0) ** 2
        if np.allclose(nu, np.round(nu), rtol=0, atol=1e-9):
            return np.round(nu).astype(np.int64), scale
    raise ValidationError("alpha must be a multiple of 1/4 so that the phases are commensurate")


def expsum_norm(c, N: int, p: float, alpha: float, tgrid=None) -> float:
    """||sum_{n<=N} c_n exp(-i t (n + alpha/4)^2)||_{L^p([0,T])}."""
    tgrid = _check_tgrid(tgrid)
    nu, scale = _expsum_frequencies(N, alpha)
    f = _ScalarFlow(c, nu, scale)
    band = int(math.ceil(p / 2.0)) * f.width
    val = spacetime_integral([f], _PointGrid, _power_density(p), band, tgrid)
    return max(val, 0.0) ** (1.0 / p)


def expsum_experiment(N: int, p: float, alpha: float, n_samples: int = 32, seed: int = 0, tgrid=None, jobs: int = 1) -> float:
    if not p > 4:
        raise OutsideHypothesisError(f"exponential-sum bound needs p > 4, got {p}")
    if int(N) != N or N < 2:
        raise ValidationError("N must be an integer >= 2")
    _check_samples(n_samples)
    N = int(N)

    def one(i):
        c = seeded_rng(seed, i).complex_normal(N + 1)
        return expsum_norm(c, N, p, alpha, tgrid) / np.linalg.norm(c)

    return float(max(_run(one, range(n_samples), jobs)))


# ---------------------------------------------------------------------------
# spectral clusters


def _grid_order(q: float) -> int:
    """Grid exactness order for |u|^q: exact for even q, q rounded up otherwise."""
    return int(math.ceil(q))


def lq_norm(u: SpectralField, q: float, grid: QuadratureGrid) -> float:
    from .basis import synthesize_array

    v = synthesize_array(u.coeffs, grid)
    return float(grid.integrate(_power_density(q)(v))) ** (1.0 / q)


def cluster_spec(spec: ManifoldSpec, k: int) -> ManifoldSpec:
    """Smallest truncation containing every mode of cluster k that ``spec`` contains."""
    if spec.kind == ZONAL_S3:
        return ManifoldSpec.zonal(min(spec.k_max, k))
    top = (k + 1) ** 2
    n_max = int(math.floor((-1 + math.sqrt(1 + 4 * top)) / 2))
    return ManifoldSpec.s2xs1(min(spec.n_max, n_max), min(spec.m_max, k + 1))


def cluster_lq(spec: ManifoldSpec, k: int, q: float, n_samples: int = 32, seed: int = 0, jobs: int = 1) -> float:
    """||chi_k f||_{L^q} / ||f||_{L^2} datum for cluster k.

    Zonal: the cluster is the single eigenfunction of degree k, whose L^q
    norm is computed exactly.  S^2 x S^1: max over random unit vectors in the
    cluster (a lower bound on the operator norm).
    """
    if not q >= 2:
        raise ValidationError(f"q must be >= 2, got {q}")
    sub = cluster_spec(spec, k)
    mask = cluster_mask(sub, k)
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        raise EmptySupportError(f"cluster k={k} is empty for {spec.header()}")
    grid = make_grid(sub, order=_grid_order(q))
    if q == 2:
        return 1.0
    if sub.kind == ZONAL_S3:
        c = np.zeros(sub.n_modes, complex)
        c[idx] = 1.0
        return lq_norm(SpectralField(sub, c), q, grid)
    _check_samples(n_samples)

    def one(i):
        c = np.zeros(sub.n_modes, complex)
        c[idx] = seeded_rng(seed, i).complex_normal(len(idx))
        c /= np.linalg.norm(c)
        return lq_norm(SpectralField(sub, c), q, grid)

    return float(max(_run(one, range(n_samples), jobs)))


def sogge_exponent(q: float, d: int = 3) -> float:
    """Sharp cluster growth exponent s(q) on a compact d-manifold."""
    qc = 2.0 * (d + 1) / (d - 1)
    if q <= qc:
        return 0.5 * (d - 1) * (0.5 - 1.0 / q)
    return 0.5 * (d - 1) - d / q


# ---------------------------------------------------------------------------
# L^p Strichartz


def lp_norm_spacetime(u: SpectralField, p: float, grid: QuadratureGrid | None = None, tgrid=None) -> float:
    """||e^{it Delta} u||_{L^p([0,T] x M)}."""
    tgrid = _check_tgrid(tgrid)
    grid = make_grid(u.spec, order=_grid_order(p)) if grid is None else grid
    f = _Flow(u)
    band = int(math.ceil(p / 2.0)) * f.width
    val = spacetime_integral([f], grid, _power_density(p), band, tgrid)
    return max(val, 0.0) ** (1.0 / p)


def lp_strichartz_experiment(
    spec: ManifoldSpec, N: int, p: float, n_samples: int = 32, seed: int = 0, tgrid=None, jobs: int = 1
) -> float:
    if not p > 4:
        raise OutsideHypothesisError(f"Strichartz bound needs p > 4, got {p}")
    _check_samples(n_samples)
    if not dyadic_mask(spec, N).any():
        raise EmptySupportError(f"dyadic block N={N} is empty for {spec.header()}")
    grid = make_grid(spec, order=_grid_order(p))

    def one(i):
        u = random_field(spec, RandomProfile.dyadic(N, seed, sample=i))
        return lp_norm_spacetime(u, p, grid, tgrid)

    return float(max(_run(one, range(n_samples), jobs)))


def strichartz_exponent(kind: str, p: float) -> float:
    """Loss exponent of the L^p Strichartz bound (p > 4)."""
    if kind == ZONAL_S3:
        return 1.5 - 5.0 / p
    return 1.5 - 5.0 / p if p >= 6 else 1.25 - 3.5 / p


# ---------------------------------------------------------------------------
# almost orthogonality


MASK_CONJ = "c"
MASK_ID = "i"


def selection_degree(spec: ManifoldSpec, labels) -> int:
    """Degree whose excess forces the quadruple integral to vanish."""
    labels = tuple(int(v) for v in np.atleast_1d(labels))
    if spec.kind == ZONAL_S3:
        return labels[0]
    n, _, m = labels
    return n + abs(m)


def quadruple_integral(spec: ManifoldSpec, modes, mask=("i", "i", "i", "i"), grid: QuadratureGrid | None = None) -> complex:
    """Quadrature value of int_M e_1 e_2 e_3 e_4, conjugating factors marked ``c``."""
    from .basis import mode_values

    modes = [tuple(int(v) for v in np.atleast_1d(m)) for m in modes]
    if len(modes) != 4 or len(mask) != 4:
        raise ValidationError("need four modes and a four-entry mask")
    if any(x not in (MASK_CONJ, MASK_ID) for x in mask):
        raise ValidationError("mask entries must be 'c' or 'i'")
    table = mode_table(spec)
    for m in modes:
        table.index(m)
    grid = make_grid(spec) if grid is None else grid
    grid.require(4)
    prod = np.ones(grid.n_nodes, complex)
    for m, flag in zip(modes, mask):
        v = mode_values(spec, m, grid)
        prod = prod * (np.conj(v) if flag == MASK_CONJ else v)
    return complex(grid.integrate(prod))


# ---------------------------------------------------------------------------
# Bernstein and Weyl checks


def bernstein_ratio(spec: ManifoldSpec, N: int, q: float, n_samples: int = 4, seed: int = 0) -> float:
    """Max over unit-L^2 samples in block N of ||u||_{L^q}."""
    grid = make_grid(spec, order=_grid_order(q))
    vals = [lq_norm(random_field(spec, RandomProfile.dyadic(N, seed, sample=i)), q, grid) for i in range(n_samples)]
    return float(max(vals))


def weyl_counts(spec: ManifoldSpec, lams) -> list[tuple[float, int]]:
    from .basis import counting_function

    return [(float(l), counting_function(spec, l)) for l in lams]
