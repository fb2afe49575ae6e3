"""Laplace-Beltrami eigenbases and exact quadrature transforms.

Two manifolds are supported:

* ``zonal-s3`` -- functions on S^3 depending only on the geodesic colatitude
  chi.  Eigenfunctions are ``e_k = (2 pi^2)^{-1/2} sin((k+1) chi) / sin(chi)``
  with ``-Delta e_k = k(k+2) e_k``.
* ``s2xs1`` -- the product of the unit sphere and the unit circle.  Modes are
  labelled ``(n, l, m)``: spherical-harmonic degree and order on S^2 and the
  Fourier order on S^1, with ``-Delta e = (m^2 + n^2 + n) e``.

Grids are chosen so that products of four truncated basis functions are
integrated exactly, which makes the quartic energy term and the cubic
nonlinearity alias-free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import AliasingRiskError, ResourceLimitError, SpecMismatchError, ValidationError

ZONAL_S3 = "zonal-s3"
S2XS1 = "s2xs1"
KINDS = (ZONAL_S3, S2XS1)

MAX_MODES = 4_000_000

VOLUME = {ZONAL_S3: 2.0 * math.pi**2, S2XS1: 8.0 * math.pi**2}

_KIND_ALIASES = {
    "zonal-s3": ZONAL_S3,
    "zonal_s3": ZONAL_S3,
    "zonals3": ZONAL_S3,
    "zoll": ZONAL_S3,
    "s3": ZONAL_S3,
    "s2xs1": S2XS1,
    "s2s1": S2XS1,
    "product": S2XS1,
}


def canonical_kind(name: str) -> str:
    try:
        return _KIND_ALIASES[name.strip().lower()]
    except KeyError:
        raise ValidationError(f"unknown manifold {name!r}; expected one of {sorted(_KIND_ALIASES)}") from None


@dataclass(frozen=True)
class ManifoldSpec:
    """Manifold kind plus spectral truncation.

    ``k_max`` is used by ``zonal-s3``; ``n_max``/``m_max`` by ``s2xs1``.
    """

    kind: str
    k_max: int = 0
    n_max: int = 0
    m_max: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        for name in ("k_max", "n_max", "m_max"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValidationError(f"{name} must be a non-negative integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.kind == ZONAL_S3 and (self.n_max or self.m_max):
            raise ValidationError("zonal-s3 takes k_max only")
        if self.kind == S2XS1 and self.k_max:
            raise ValidationError("s2xs1 takes n_max and m_max only")

    @classmethod
    def zonal(cls, k_max: int) -> "ManifoldSpec":
        return cls(ZONAL_S3, k_max=k_max)

    @classmethod
    def s2xs1(cls, n_max: int, m_max: int) -> "ManifoldSpec":
        return cls(S2XS1, n_max=n_max, m_max=m_max)

    @property
    def n_modes(self) -> int:
        if self.kind == ZONAL_S3:
            return self.k_max + 1
        return (2 * self.m_max + 1) * (self.n_max + 1) ** 2

    @property
    def volume(self) -> float:
        return VOLUME[self.kind]

    def header(self) -> str:
        """Key=value tokens, as written to checkpoint files."""
        if self.kind == ZONAL_S3:
            return f"kind={self.kind} k_max={self.k_max}"
        return f"kind={self.kind} n_max={self.n_max} m_max={self.m_max}"

    @classmethod
    def from_header(cls, line: str) -> "ManifoldSpec":
        tokens = dict(tok.split("=", 1) for tok in line.split())
        kind = canonical_kind(tokens.pop("kind"))
        return cls(kind, **{k: int(v) for k, v in tokens.items()})


@dataclass(frozen=True)
class EigenMode:
    mode_id: int
    labels: tuple
    freq2: int
    freq: float
    bracket_freq: float


@dataclass(frozen=True, eq=False)
class ModeTable:
    """Vectorised view of the sorted mode list."""

    spec: ManifoldSpec
    labels: np.ndarray  # (n_modes, 1) for zonal, (n_modes, 3) = (n, l, m) otherwise
    freq2: np.ndarray  # integer eigenvalues of -Delta

    @property
    def freq(self) -> np.ndarray:
        return np.sqrt(self.freq2.astype(float))

    @property
    def bracket(self) -> np.ndarray:
        return np.sqrt(1.0 + self.freq2.astype(float))

    def __len__(self):
        return len(self.freq2)

    def index(self, labels) -> int:
        """mode_id of a label tuple."""
        labels = tuple(int(v) for v in np.atleast_1d(labels))
        pos = _label_lookup(self.spec).get(labels)
        if pos is None:
            raise ValidationError(f"mode {labels} is outside the truncation {self.spec.header()}")
        return pos


@lru_cache(maxsize=64)
def mode_table(spec: ManifoldSpec, max_modes: int = MAX_MODES) -> ModeTable:
    if spec.n_modes > max_modes:
        raise ResourceLimitError(f"{spec.n_modes} modes exceeds the cap of {max_modes}")
    if spec.kind == ZONAL_S3:
        k = np.arange(spec.k_max + 1)
        labels = k[:, None]
        freq2 = k * (k + 2)
    else:
        n_all = np.arange(spec.n_max + 1)
        n, l, m = [], [], []
        for nn in n_all:
            ll = np.arange(-nn, nn + 1)
            mm = np.arange(-spec.m_max, spec.m_max + 1)
            L, M = np.meshgrid(ll, mm, indexing="ij")
            n.append(np.full(L.size, nn))
            l.append(L.ravel())
            m.append(M.ravel())
        n, l, m = (np.concatenate(a) for a in (n, l, m))
        freq2 = m * m + n * n + n
        order = np.lexsort((m, l, n, freq2))
        labels = np.stack([n[order], l[order], m[order]], axis=1)
        freq2 = freq2[order]
    labels = labels.astype(np.int64)
    labels.setflags(write=False)
    freq2 = freq2.astype(np.int64)
    freq2.setflags(write=False)
    return ModeTable(spec, labels, freq2)


@lru_cache(maxsize=16)
def _label_lookup(spec: ManifoldSpec) -> dict:
    table = mode_table(spec)
    return {tuple(int(v) for v in row): i for i, row in enumerate(table.labels)}


def enumerate_modes(spec: ManifoldSpec, max_modes: int = MAX_MODES) -> list[EigenMode]:
    """Complete mode list sorted by (eigenvalue, labels); ``mode_id`` is the rank."""
    table = mode_table(spec, max_modes)
    f = table.freq
    b = table.bracket
    return [
        EigenMode(i, tuple(int(v) for v in table.labels[i]), int(table.freq2[i]), float(f[i]), float(b[i]))
        for i in range(len(table))
    ]


def counting_function(spec: ManifoldSpec, lam: float) -> int:
    """Number of modes with frequency at most ``lam``."""
    table = mode_table(spec)
    return int(np.count_nonzero(table.freq2 <= lam * lam + 1e-9))


# ---------------------------------------------------------------------------
# basis function evaluation

def zonal_eigenfunction(k: int, chi) -> np.ndarray:
    chi = np.asarray(chi, dtype=float)
    s = np.sin(chi)
    safe = np.abs(s) > 1e-300
    num = np.sin((k + 1) * chi)
    out = np.where(safe, num / np.where(safe, s, 1.0), 0.0)
    # chi = 0 or pi: U_k(+-1) = (+-1)^k (k+1)
    pole = ~safe
    if np.any(pole):
        out = np.where(pole, np.sign(np.cos(chi)) ** k * (k + 1), out)
    return out / math.sqrt(2.0 * math.pi**2)


def normalized_legendre(n_max: int, x) -> np.ndarray:
    """Normalised associated Legendre functions by three-term recurrence.

    Returns ``P[n, l, j]`` for ``0 <= l <= n <= n_max`` (zero for ``l > n``)
    with ``int_{-1}^{1} P[n, l]^2 dx = 1``.  No Condon-Shortley phase.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    P = np.zeros((n_max + 1, n_max + 1) + x.shape)
    P[0, 0] = math.sqrt(0.5)
    for l in range(1, n_max + 1):
        P[l, l] = math.sqrt((2 * l + 1) / (2 * l)) * s * P[l - 1, l - 1]
    for l in range(0, n_max):
        P[l + 1, l] = math.sqrt(2 * l + 3) * x * P[l, l]
        a_prev = math.sqrt(2 * l + 3)
        for n in range(l + 2, n_max + 1):
            a = math.sqrt((4 * n * n - 1) / (n * n - l * l))
            P[n, l] = a * (x * P[n - 1, l] - P[n - 2, l] / a_prev)
            a_prev = a
    return P


def s2xs1_eigenfunction(n: int, l: int, m: int, theta, phi, y) -> np.ndarray:
    theta, phi, y = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (theta, phi, y)))
    P = normalized_legendre(n, np.cos(theta))[n, abs(l)]
    return P * np.exp(1j * (l * phi + m * y)) / (2.0 * math.pi)


def eval_mode(spec: ManifoldSpec, labels, *coords) -> np.ndarray:
    """Evaluate one basis function at arbitrary coordinates."""
    labels = tuple(int(v) for v in np.atleast_1d(labels))
    if spec.kind == ZONAL_S3:
        return zonal_eigenfunction(labels[0], coords[0])
    return s2xs1_eigenfunction(*labels, *coords)


# ---------------------------------------------------------------------------
# quadrature grids

def min_resolution(spec: ManifoldSpec, order: int = 4) -> dict:
    """Smallest node counts integrating products of ``order`` basis functions exactly."""
    if spec.kind == ZONAL_S3:
        # Gauss-Chebyshev (2nd kind) with n nodes is exact to degree 2n - 1
        return {"n_chi": (order * spec.k_max) // 2 + 1}
    return {
        "n_theta": (order * spec.n_max) // 2 + 1,
        "n_phi": order * spec.n_max + 1,
        "n_y": order * spec.m_max + 1,
    }


def default_resolution(spec: ManifoldSpec, order: int = 4) -> dict:
    res = min_resolution(spec, order)
    if spec.kind == ZONAL_S3:
        res["n_chi"] = max(res["n_chi"], (order * spec.k_max) // 2 + 3)
    else:
        res["n_theta"] = max(res["n_theta"], (order * spec.n_max) // 2 + 2)
    return res


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Tensor quadrature grid with transform tables.

    ``weights`` are per node and sum to the volume of the manifold; node
    values are stored flattened in C order over ``shape``.
    """

    spec: ManifoldSpec
    shape: tuple
    axes: tuple  # 1-D coordinate arrays, one per axis
    weights: np.ndarray
    exact_order: int  # products of this many basis functions integrate exactly
    _tables: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def dealiased(self) -> bool:
        return self.exact_order >= 4

    def coordinates(self) -> tuple:
        """Broadcast node coordinates, each flattened to ``n_nodes``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return tuple(a.ravel() for a in mesh)

    def integrate(self, values) -> complex | float:
        return np.asarray(values) @ self.weights

    def require(self, order: int = 4):
        if self.exact_order < order:
            raise AliasingRiskError(
                f"grid integrates products of {self.exact_order} basis functions exactly; {order} required"
            )


def _exact_order(spec: ManifoldSpec, res: dict) -> int:
    order = 1
    while order < 64 and all(res[k] >= v for k, v in min_resolution(spec, order + 1).items()):
        order += 1
    return order


@lru_cache(maxsize=32)
def _cached_grid(spec: ManifoldSpec, res_items: tuple) -> QuadratureGrid:
    res = dict(res_items)
    order = _exact_order(spec, res)
    if spec.kind == ZONAL_S3:
        n = res["n_chi"]
        j = np.arange(1, n + 1)
        chi = j * math.pi / (n + 1)
        w = 4.0 * math.pi * (math.pi / (n + 1)) * np.sin(chi) ** 2
        k = np.arange(spec.k_max + 1)
        B = np.sin(np.outer(k + 1, chi)) / np.sin(chi) / math.sqrt(2.0 * math.pi**2)
        grid = QuadratureGrid(spec, (n,), (chi,), w, order)
        grid._tables["B"] = B
        return grid
    nt, nphi, ny = res["n_theta"], res["n_phi"], res["n_y"]
    x, wx = np.polynomial.legendre.leggauss(nt)
    x, wx = x[::-1], wx[::-1]  # theta ascending
    theta = np.arccos(x)
    phi = 2.0 * math.pi * np.arange(nphi) / nphi
    y = 2.0 * math.pi * np.arange(ny) / ny
    w = (wx[:, None, None] * (2.0 * math.pi / nphi) * (2.0 * math.pi / ny)) * np.ones((1, nphi, ny))
    grid = QuadratureGrid(spec, (nt, nphi, ny), (theta, phi, y), w.ravel(), order)
    grid._tables["P"] = normalized_legendre(spec.n_max, x)  # (n, |l|, theta)
    return grid


def make_grid(spec: ManifoldSpec, order: int = 4, **resolution) -> QuadratureGrid:
    """Quadrature grid for ``spec``.

    Node counts default to the minimum that integrates products of ``order``
    truncated basis functions exactly; explicit ``n_chi`` or
    ``n_theta``/``n_phi``/``n_y`` override them.
    """
    res = default_resolution(spec, order)
    unknown = set(resolution) - set(res)
    if unknown:
        raise ValidationError(f"unknown resolution keys {sorted(unknown)} for {spec.kind}")
    res.update({k: int(v) for k, v in resolution.items()})
    if any(v < 1 for v in res.values()):
        raise ValidationError("resolution must be positive")
    if spec.kind == S2XS1 and int(np.prod(list(res.values()))) > 64_000_000:
        raise ResourceLimitError("grid exceeds 64M nodes")
    return _cached_grid(spec, tuple(sorted(res.items())))


# ---------------------------------------------------------------------------
# transforms on plain arrays (batch along leading axis)

@lru_cache(maxsize=32)
def _s2xs1_index(spec: ManifoldSpec):
    t = mode_table(spec)
    n, l, m = t.labels.T
    return n, l + spec.n_max, m + spec.m_max


def _check(spec: ManifoldSpec, grid: QuadratureGrid):
    if grid.spec != spec:
        raise SpecMismatchError(f"field spec {spec.header()} does not match grid spec {grid.spec.header()}")


def synthesize_array(coeffs: np.ndarray, grid: QuadratureGrid) -> np.ndarray:
    """Node values ``sum_k c_k e_k(x)`` for coefficient array(s) of shape (..., n_modes)."""
    spec = grid.spec
    coeffs = np.asarray(coeffs)
    lead = coeffs.shape[:-1]
    if coeffs.shape[-1] != spec.n_modes:
        raise SpecMismatchError(f"expected {spec.n_modes} coefficients, got {coeffs.shape[-1]}")
    c = coeffs.reshape(-1, spec.n_modes)
    if spec.kind == ZONAL_S3:
        out = c @ grid._tables["B"]
        return out.reshape(lead + (grid.n_nodes,))
    nt, nphi, ny = grid.shape
    N, M = spec.n_max, spec.m_max
    ni, li, mi = _s2xs1_index(spec)
    dense = np.zeros((c.shape[0], N + 1, 2 * N + 1, 2 * M + 1), dtype=complex)
    dense[:, ni, li, mi] = c
    P = grid._tables["P"]  # (n, |l|, theta)
    ls = np.arange(-N, N + 1)
    Pl = P[:, np.abs(ls), :]  # (n, l, theta)
    F = np.einsum("bnlm,nlt->btlm", dense, Pl, optimize=True)
    G = np.zeros((c.shape[0], nt, nphi, ny), dtype=complex)
    G[:, :, ls % nphi, :] = _spread_y(F, M, ny)
    vals = np.fft.ifft2(G, axes=(2, 3)) * (nphi * ny / (2.0 * math.pi))
    return vals.reshape(lead + (grid.n_nodes,))


def _spread_y(F, M, ny):
    out = np.zeros(F.shape[:3] + (ny,), dtype=complex)
    ms = np.arange(-M, M + 1)
    out[..., ms % ny] = F
    return out


def analyze_array(values: np.ndarray, grid: QuadratureGrid) -> np.ndarray:
    """Quadrature inner products ``c_k = sum_j w_j conj(e_k(x_j)) f(x_j)``."""
    spec = grid.spec
    values = np.asarray(values)
    lead = values.shape[:-1]
    if values.shape[-1] != grid.n_nodes:
        raise SpecMismatchError(f"expected {grid.n_nodes} node values, got {values.shape[-1]}")
    v = values.reshape(-1, grid.n_nodes)
    if spec.kind == ZONAL_S3:
        out = (v * grid.weights) @ grid._tables["B"].T
        return out.reshape(lead + (spec.n_modes,))
    nt, nphi, ny = grid.shape
    N, M = spec.n_max, spec.m_max
    Vh = np.fft.fft2(v.reshape(-1, nt, nphi, ny), axes=(2, 3)) * (2.0 * math.pi / (nphi * ny))
    ls = np.arange(-N, N + 1)
    ms = np.arange(-M, M + 1)
    Vh = Vh[:, :, ls % nphi, :][..., ms % ny]  # (b, theta, l, m)
    wx = grid.weights.reshape(grid.shape)[:, 0, 0] / ((2.0 * math.pi / nphi) * (2.0 * math.pi / ny))
    P = grid._tables["P"][:, np.abs(ls), :] * wx  # (n, l, theta)
    dense = np.einsum("btlm,nlt->bnlm", Vh, P, optimize=True)
    ni, li, mi = _s2xs1_index(spec)
    return dense[:, ni, li, mi].reshape(lead + (spec.n_modes,))


def mode_values(spec: ManifoldSpec, labels, grid: QuadratureGrid) -> np.ndarray:
    """Node values of a single basis function."""
    _check(spec, grid)
    if spec.kind == ZONAL_S3:
        return grid._tables["B"][int(np.atleast_1d(labels)[0])].astype(complex)
    n, l, m = (int(v) for v in labels)
    if not (0 <= n <= spec.n_max and abs(l) <= n and abs(m) <= spec.m_max):
        raise ValidationError(f"mode {(n, l, m)} is outside the truncation")
    theta, phi, y = grid.axes
    P = grid._tables["P"][n, abs(l)]
    vals = P[:, None, None] * np.exp(1j * l * phi)[None, :, None] * np.exp(1j * m * y)[None, None, :]
    return (vals / (2.0 * math.pi)).ravel()


# ---------------------------------------------------------------------------
# finite-difference eigenrelation oracle

_D1 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
_D2 = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560])
_OFFSETS = np.arange(-4, 5)


def _fd(f, x, h, axis_shift):
    """First and second derivatives of ``f`` along one coordinate (8th order)."""
    samples = np.stack([f(axis_shift(x, k * h)) for k in _OFFSETS])
    d1 = np.tensordot(_D1, samples, axes=1) / h
    d2 = np.tensordot(_D2, samples, axes=1) / (h * h)
    return d1, d2


def check_eigenrelation(spec: ManifoldSpec, labels, resolution: int = 400) -> float:
    """Max-norm of ``Delta e + freq^2 e`` on interior points, by finite differences.

    The Laplacian is written in coordinates (``f'' + 2 cot(chi) f'`` on zonal
    S^3, spherical Laplacian plus ``d^2/dy^2`` on S^2 x S^1) and every
    derivative is taken numerically from point evaluations, so the check is
    independent of the closed-form eigenvalue used elsewhere.
    """
    labels = tuple(int(v) for v in np.atleast_1d(labels))
    idx = mode_table(spec).index(labels)
    lam2 = float(mode_table(spec).freq2[idx])
    h = math.pi / resolution
    if spec.kind == ZONAL_S3:
        chi = np.linspace(0.05, math.pi - 0.05, 257)
        f = lambda c: zonal_eigenfunction(labels[0], c)
        d1, d2 = _fd(f, chi, h, lambda c, d: c + d)
        lap = d2 + 2.0 * np.cos(chi) / np.sin(chi) * d1
        return float(np.max(np.abs(lap + lam2 * f(chi))))
    n, l, m = labels
    th, ph, yy = np.meshgrid(
        np.linspace(0.1, math.pi - 0.1, 23), np.linspace(0.0, 2 * math.pi, 13), np.linspace(0.0, 2 * math.pi, 11),
        indexing="ij",
    )
    pts = np.stack([th, ph, yy])
    f = lambda p: s2xs1_eigenfunction(n, l, m, p[0], p[1], p[2])

    def shift(axis):
        def go(p, d):
            q = p.copy()
            q[axis] = q[axis] + d
            return q
        return go

    dth, dth2 = _fd(f, pts, h, shift(0))
    _, dph2 = _fd(f, pts, h, shift(1))
    _, dy2 = _fd(f, pts, h, shift(2))
    lap = dth2 + np.cos(th) / np.sin(th) * dth + dph2 / np.sin(th) ** 2 + dy2
    return float(np.max(np.abs(lap + lam2 * f(pts))))
