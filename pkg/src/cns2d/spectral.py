"""Truncated Fourier representation of mean-zero periodic fields on [0, 2pi)^2.

Convention: ``u(x) = sum_k c_k exp(i k.x)`` with ``c = rfft2(u) / n**2``.
Coefficients are stored in the real-FFT half-spectrum layout: axis 0 runs
over ``k1`` in FFT order, axis 1 over ``k2 = 0 .. n/2``.  The Nyquist index
``n/2`` is read as ``+n/2``.  L2 norms carry the ``(2 pi)^2`` Parseval
factor so that ``h`` is the true L2 norm on the torus.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from fractions import Fraction

import numpy as np
import scipy.fft as sfft

from .kernels import active as _kern

AREA = (2.0 * np.pi) ** 2
HERMITIAN_TOL = 1e-12
# master lattice half-width for resolution-consistent random fields
_fft_workers = 1


def set_fft_workers(workers: int) -> None:
    global _fft_workers
    _fft_workers = max(1, int(workers))


@dataclass(frozen=True)
class GridSpec:
    """Uniform n x n grid on the torus with a dealiasing band."""

    n: int
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 4 or self.n % 2:
            raise ValueError(f"grid size must be an even integer >= 4, got {self.n!r}")
        if not 0.0 < float(self.dealias_fraction) <= 1.0:
            raise ValueError("dealias_fraction must lie in (0, 1]")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "dealias_fraction", float(self.dealias_fraction))

    @property
    def m(self) -> int:
        return self.n // 2 + 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.m)

    @property
    def domain_length(self) -> float:
        return 2.0 * np.pi

    @cached_property
    def k_band(self) -> int:
        """Largest retained |k_i| under the dealiasing rule."""
        frac = Fraction(self.dealias_fraction).limit_denominator(10**6)
        return int(frac * self.n // 2)

    @cached_property
    def _wavenumbers(self):
        n = self.n
        k1 = np.fft.fftfreq(n, 1.0 / n)
        k1[n // 2] = n / 2
        k2 = np.arange(self.m, dtype=np.float64)
        K1, K2 = np.meshgrid(k1, k2, indexing="ij")
        return np.ascontiguousarray(K1), np.ascontiguousarray(K2)

    @property
    def k1(self) -> np.ndarray:
        return self._wavenumbers[0]

    @property
    def k2(self) -> np.ndarray:
        return self._wavenumbers[1]

    @cached_property
    def ksq(self) -> np.ndarray:
        return self.k1**2 + self.k2**2

    @cached_property
    def inv_ksq(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            inv = np.where(self.ksq > 0, 1.0 / self.ksq, 0.0)
        return inv

    @cached_property
    def dk(self) -> tuple[np.ndarray, np.ndarray]:
        """Wavenumbers for odd derivatives: the unmatched Nyquist row/column is zeroed."""
        d1 = self.k1.copy()
        d1[self.n // 2, :] = 0.0
        d2 = self.k2.copy()
        d2[:, self.n // 2] = 0.0
        return d1, d2

    @cached_property
    def mask(self) -> np.ndarray:
        kmax = np.maximum(np.abs(self.k1), np.abs(self.k2))
        return (kmax <= self.dealias_fraction * self.n / 2 + 1e-12).astype(np.float64)

    @cached_property
    def ones(self) -> np.ndarray:
        return np.ones(self.shape)

    @cached_property
    def weight(self) -> np.ndarray:
        """Multiplicity of each half-spectrum entry in the full spectrum."""
        w = np.full(self.shape, 2.0)
        w[:, 0] = 1.0
        w[:, -1] = 1.0
        return w

    @cached_property
    def x(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n) / self.n

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.x, indexing="ij")

    def index_of(self, k1: int, k2: int) -> tuple[int, int, bool]:
        """Half-spectrum index of wavevector k; the flag says whether to conjugate."""
        n = self.n
        lo, hi = -n // 2 + 1, n // 2
        if not (lo <= k1 <= hi and lo <= k2 <= hi):
            raise IndexError(f"wavevector ({k1}, {k2}) outside the lattice")
        if k2 >= 0:
            return k1 % n, k2, False
        return (-k1) % n, -k2, True


@dataclass(frozen=True, eq=False)
class SpectralScalar:
    """Real scalar field held by its half-spectrum Fourier coefficients."""

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != self.grid.shape:
            raise ValueError(f"coefficient shape {self.coeffs.shape} does not match grid {self.grid.shape}")

    def coeff(self, k1: int, k2: int) -> complex:
        i, j, conj = self.grid.index_of(k1, k2)
        c = complex(self.coeffs[i, j])
        return c.conjugate() if conj else c

    def full_coeffs(self) -> np.ndarray:
        """n x n coefficient array in FFT order (both signs of k2)."""
        return _expand(self.coeffs, self.grid.n)

    def __add__(self, other):
        return SpectralScalar(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return SpectralScalar(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, c):
        return SpectralScalar(self.grid, self.coeffs * c)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralScalar(self.grid, -self.coeffs)


@dataclass(frozen=True, eq=False)
class SpectralVector:
    """Real 2-vector field; ``coeffs[j]`` holds component j."""

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (2,) + self.grid.shape:
            raise ValueError(f"coefficient shape {self.coeffs.shape} does not match grid {(2,) + self.grid.shape}")

    @classmethod
    def from_components(cls, a: SpectralScalar, b: SpectralScalar) -> "SpectralVector":
        if a.grid != b.grid:
            raise ValueError("component grids differ")
        return cls(a.grid, np.stack([a.coeffs, b.coeffs]))

    def component(self, j: int) -> SpectralScalar:
        return SpectralScalar(self.grid, self.coeffs[j])

    @property
    def components(self) -> tuple[SpectralScalar, SpectralScalar]:
        return self.component(0), self.component(1)

    def divergence_residual(self) -> float:
        """max |k.u_k| relative to max |k||u_k|."""
        g = self.grid
        div = g.k1 * self.coeffs[0] + g.k2 * self.coeffs[1]
        scale = np.max(np.sqrt(g.ksq) * np.abs(self.coeffs).max(axis=0))
        return float(np.abs(div).max() / scale) if scale > 0 else 0.0

    def is_divergence_free(self, tol: float = 1e-12) -> bool:
        return self.divergence_residual() <= tol

    def __add__(self, other):
        return SpectralVector(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return SpectralVector(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, c):
        return SpectralVector(self.grid, self.coeffs * c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return SpectralVector(self.grid, self.coeffs / c)

    def __neg__(self):
        return SpectralVector(self.grid, -self.coeffs)


@dataclass(frozen=True)
class SobolevNorms:
    """L2 norm h = |u|_H, v = |grad u|_L2, e = |Au|_L2."""

    h: float
    v: float
    e: float


# ---------------------------------------------------------------- transforms


def _hermitize(c: np.ndarray) -> np.ndarray:
    """Make the self-mirrored columns (k2 = 0 and k2 = n/2) exactly Hermitian."""
    n = c.shape[-2]
    mirror = (-np.arange(n)) % n
    for col in (0, c.shape[-1] - 1):
        a = c[..., :, col]
        c[..., :, col] = 0.5 * (a + np.conj(a[..., mirror]))
    return c


def _expand(half: np.ndarray, n: int) -> np.ndarray:
    full = np.empty(half.shape[:-1] + (n,), dtype=np.complex128)
    m = n // 2 + 1
    full[..., :m] = half
    mirror = (-np.arange(n)) % n
    cols = np.arange(m, n)
    full[..., :, cols] = np.conj(half[..., mirror, :][..., :, n - cols])
    return full


def hermitian_residual(c: np.ndarray) -> float:
    """Relative violation of Hermitian symmetry on the self-mirrored columns."""
    n = c.shape[-2]
    mirror = (-np.arange(n)) % n
    scale = np.abs(c).max()
    if scale == 0:
        return 0.0
    worst = 0.0
    for col in (0, c.shape[-1] - 1):
        a = c[..., :, col]
        worst = max(worst, float(np.abs(a - np.conj(a[..., mirror])).max()))
    return worst / scale


def _fwd(values: np.ndarray, n: int) -> np.ndarray:
    return _hermitize(sfft.rfft2(values, workers=_fft_workers) / (n * n))


def _inv(coeffs: np.ndarray, n: int) -> np.ndarray:
    return sfft.irfft2(coeffs * (n * n), s=(n, n), workers=_fft_workers)


def forward_transform(values, grid: GridSpec | None = None) -> SpectralScalar:
    """Fourier coefficients of the trigonometric interpolant of grid samples."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError(f"expected square 2-D samples, got shape {values.shape}")
    if grid is None:
        grid = GridSpec(values.shape[0])
    elif values.shape != (grid.n, grid.n):
        raise ValueError(f"samples of shape {values.shape} do not match grid n={grid.n}")
    return SpectralScalar(grid, _fwd(values, grid.n))


def inverse_transform(s: SpectralScalar, check: bool = True) -> np.ndarray:
    """Point samples of a spectral scalar on the grid."""
    if check:
        r = hermitian_residual(s.coeffs)
        if r > HERMITIAN_TOL:
            raise ValueError(f"coefficients violate Hermitian symmetry (relative residual {r:.3e})")
    return _inv(s.coeffs, s.grid.n)


def vector_from_physical(values, grid: GridSpec) -> SpectralVector:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (2, grid.n, grid.n):
        raise ValueError(f"expected samples of shape {(2, grid.n, grid.n)}, got {values.shape}")
    return SpectralVector(grid, _fwd(values, grid.n))


def vector_to_physical(u: SpectralVector) -> np.ndarray:
    return _inv(u.coeffs, u.grid.n)


def oversampled(coeffs: np.ndarray, n: int, factor: int) -> np.ndarray:
    """Samples of the same trigonometric polynomial on a ``factor * n`` grid."""
    if factor == 1:
        return _inv(coeffs, n)
    big = factor * n
    out = np.zeros(coeffs.shape[:-2] + (big, big // 2 + 1), dtype=np.complex128)
    h = n // 2
    out[..., :h, :h] = coeffs[..., :h, :h]
    out[..., big - h + 1:, :h] = coeffs[..., h + 1:, :h]
    # Nyquist mode of the small grid splits into +-n/2 on the large one
    out[..., h, :h] = 0.5 * coeffs[..., h, :h]
    out[..., big - h, :h] = 0.5 * coeffs[..., h, :h]
    col = coeffs[..., :, h] * 0.5
    out[..., :h, h] = col[..., :h]
    out[..., big - h + 1:, h] = col[..., h + 1:]
    out[..., h, h] = 0.5 * col[..., h]
    out[..., big - h, h] = 0.5 * col[..., h]
    return sfft.irfft2(out * (big * big), s=(big, big), workers=_fft_workers)


# ----------------------------------------------------------- differentiation


def gradient(s: SpectralScalar) -> SpectralVector:
    d1, d2 = s.grid.dk
    return SpectralVector(s.grid, np.stack([1j * d1 * s.coeffs, 1j * d2 * s.coeffs]))


def vector_gradient(u: SpectralVector) -> np.ndarray:
    """Spectral array ``g[i, j] = d_i u_j`` of shape (2, 2, n, m)."""
    d1, d2 = u.grid.dk
    return np.stack([1j * d1 * u.coeffs, 1j * d2 * u.coeffs])


def dealias(s):
    """Zero every coefficient outside the retained band; idempotent."""
    return type(s)(s.grid, s.coeffs * s.grid.mask)


# --------------------------------------------------------------------- norms


def _sums(coeffs: np.ndarray, grid: GridSpec) -> tuple[float, float, float]:
    return _kern.norm_sums(coeffs, grid.ksq, grid.weight)


def sobolev_norms(u) -> SobolevNorms:
    """(|u|_H, ||u||_V, |u|_E) by Parseval; also accepts a SpectralScalar."""
    s0, s1, s2 = _sums(u.coeffs, u.grid)
    return SobolevNorms(np.sqrt(AREA * s0), np.sqrt(AREA * s1), np.sqrt(AREA * s2))


def inner(u, w) -> float:
    """L2 inner product of two fields of the same kind."""
    prod = (u.coeffs * np.conj(w.coeffs)).real * u.grid.weight
    return float(AREA * prod.sum())


def l2_norm(u) -> float:
    return float(np.sqrt(max(inner(u, u), 0.0)))


def quadrature(values: np.ndarray) -> float:
    """Rectangle-rule integral over the torus of grid samples (last two axes)."""
    n = values.shape[-1]
    return float(values.sum() * (2.0 * np.pi / n) ** 2)


# ------------------------------------------------------------ test fields


def taylor_green(grid: GridSpec, normalized: bool = True) -> SpectralVector:
    """The eigenfield (sin x1 cos x2, -cos x1 sin x2) of A with eigenvalue 2."""
    X1, X2 = grid.mesh()
    u = np.stack([np.sin(X1) * np.cos(X2), -np.cos(X1) * np.sin(X2)])
    field = vector_from_physical(u, grid)
    if normalized:
        field = field / (np.pi * np.sqrt(2.0))
    return field


@lru_cache(maxsize=16)
def _shell_order(half_width: int) -> np.ndarray:
    """Flat lattice positions sorted by square shell max(|k1|, |k2|)."""
    k = np.arange(-half_width, half_width + 1)
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    shell = np.maximum(np.abs(K1), np.abs(K2)).ravel()
    return np.argsort(shell, kind="stable")


def _master_lattice(seed: int, half_width: int) -> np.ndarray:
    """Uniform draws in the unit disk, one per lattice point.

    The stream fills the lattice shell by shell, so a smaller window sees
    exactly the leading entries of a larger one.
    """
    rng = np.random.default_rng(seed)
    size = 2 * half_width + 1
    draws = rng.random((size * size, 2))
    vals = np.sqrt(draws[:, 0]) * np.exp(2j * np.pi * draws[:, 1])
    out = np.empty(size * size, dtype=np.complex128)
    out[_shell_order(half_width)] = vals
    return out.reshape(size, size)


def random_smooth_field(seed: int, decay_rate: float, grid: GridSpec,
                        normalize: bool = True, band: int | None = None) -> SpectralVector:
    """Seeded divergence-free field with |u_k| <= |k|^-decay_rate before normalization.

    Coefficients are drawn shell by shell, so the same seed gives the same
    low modes on every grid.  ``band`` overrides the retained
    half-width (defaults to the grid's dealiasing band, Nyquist excluded).
    """
    if decay_rate <= 2:
        raise ValueError("decay_rate must exceed 2")
    K = min(grid.k_band, grid.n // 2 - 1) if band is None else min(band, grid.n // 2 - 1)
    L = K
    a = _master_lattice(seed, L)
    a = 0.5 * (a + np.conj(a[::-1, ::-1]))  # entry (L+k1, L+k2) <-> -k mirrored
    n = grid.n
    psi = np.zeros(grid.shape, dtype=np.complex128)
    k1 = np.arange(-K, K + 1)
    k2 = np.arange(0, K + 1)
    block = a[L + k1][:, L + k2]
    KK1, KK2 = np.meshgrid(k1, k2, indexing="ij")
    ksq = (KK1**2 + KK2**2).astype(np.float64)
    with np.errstate(divide="ignore"):
        env = np.where(ksq > 0, ksq ** (-(decay_rate + 1.0) / 2.0), 0.0)
    psi[np.ix_(k1 % n, k2)] = block * env
    psi = _hermitize(psi)
    u = np.stack([-1j * grid.k2 * psi, 1j * grid.k1 * psi])
    field = SpectralVector(grid, u)
    if normalize:
        field = field / sobolev_norms(field).h
    return field


def project_to_manifold(u: SpectralVector) -> SpectralVector:
    """Leray-project, dealias and rescale to unit L2 norm."""
    from .operators import leray_project

    w = dealias(leray_project(u))
    h = sobolev_norms(w).h
    if h == 0:
        raise ValueError("cannot normalize the zero field")
    return w / h
