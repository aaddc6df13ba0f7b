"""Uniform-grid scalar/vector fields on the periodic torus [0,1)^d.

Fields carry paired physical and spectral (real-FFT) representations.
All differential operators act by spectral multipliers, so they compose
exactly on the trigonometric interpolant of the sampled data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

_WORKERS = -1  # scipy.fft thread pool; -1 = all cores

PHYSICAL = "physical"
SPECTRAL = "spectral"


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic space(-time) grid on [0,1)^d x [0, t_end]."""

    d: int
    n: int
    nt: int = 1
    t_end: float = 0.0

    def __post_init__(self):
        if self.d < 2:
            raise GridError(f"spatial dimension must be >= 2, got {self.d}")
        if self.n < 4 or (self.n & (self.n - 1)) != 0:
            raise GridError(f"points per axis must be a power of two >= 4, got {self.n}")
        if self.nt < 1:
            raise GridError(f"need at least one time slice, got {self.nt}")
        if self.nt > 1 and self.t_end <= 0:
            raise GridError("t_end must be positive when nt > 1")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def spectral_shape(self) -> tuple:
        return (self.n,) * (self.d - 1) + (self.n // 2 + 1,)

    @property
    def npoints(self) -> int:
        return self.n ** self.d

    @property
    def times(self) -> np.ndarray:
        if self.nt == 1:
            return np.array([0.0])
        return np.linspace(0.0, self.t_end, self.nt)

    @property
    def dt(self) -> float:
        if self.nt == 1:
            return 0.0
        return self.t_end / (self.nt - 1)

    def axis_coords(self, axis: int) -> np.ndarray:
        """Coordinate array along one axis, broadcastable to the full grid."""
        x = np.arange(self.n) * self.h
        shape = [1] * self.d
        shape[axis] = self.n
        return x.reshape(shape)

    def coords(self) -> list:
        return [self.axis_coords(a) for a in range(self.d)]


@lru_cache(maxsize=32)
def _wavenumbers(d: int, n: int) -> tuple:
    """Integer wavenumbers per axis for the rfftn layout, broadcastable."""
    ks = []
    for a in range(d):
        if a < d - 1:
            k = np.fft.fftfreq(n, d=1.0 / n)
        else:
            k = np.arange(n // 2 + 1, dtype=float)
        shape = [1] * d
        shape[a] = k.size
        ks.append(k.reshape(shape))
    return tuple(ks)


@lru_cache(maxsize=32)
def _ksq(d: int, n: int) -> np.ndarray:
    ks = _wavenumbers(d, n)
    out = np.zeros((n,) * (d - 1) + (n // 2 + 1,))
    for k in ks:
        out = out + k * k
    return (2.0 * math.pi) ** 2 * out


@lru_cache(maxsize=32)
def _ksq_tilde(d: int, n: int) -> np.ndarray:
    """Laplacian symbol with per-axis Nyquist planes zeroed, so that the
    Laplacian equals div o grad exactly under the odd-derivative convention."""
    nyq = n // 2
    out = np.zeros((n,) * (d - 1) + (n // 2 + 1,))
    for k in _wavenumbers(d, n):
        kk = k.copy()
        kk[np.abs(kk) == nyq] = 0.0
        out = out + kk * kk
    return (2.0 * math.pi) ** 2 * out


@lru_cache(maxsize=32)
def _spectral_weights(d: int, n: int) -> np.ndarray:
    """Multiplicity of each rfftn bin when summing over the full k-lattice."""
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0  # Nyquist column is self-conjugate for even n
    shape = [1] * d
    shape[-1] = w.size
    return w.reshape(shape)


def _fwd(values: np.ndarray) -> np.ndarray:
    return sfft.rfftn(values, norm="forward", workers=_WORKERS)


def _inv(coeffs: np.ndarray, shape: tuple) -> np.ndarray:
    return sfft.irfftn(coeffs, s=shape, norm="forward", workers=_WORKERS)


class ScalarField:
    """A real scalar field on one time slice of a GridSpec.

    Immutable; the twin representation is computed lazily and cached.
    """

    __slots__ = ("grid", "_phys", "_spec")

    def __init__(self, grid: GridSpec, values: np.ndarray, rep: str = PHYSICAL):
        self.grid = grid
        self._phys = None
        self._spec = None
        if rep == PHYSICAL:
            if values.shape != grid.shape:
                raise GridError(f"physical shape {values.shape} != grid {grid.shape}")
            self._phys = np.asarray(values, dtype=np.float64)
        elif rep == SPECTRAL:
            if values.shape != grid.spectral_shape:
                raise GridError(f"spectral shape {values.shape} != {grid.spectral_shape}")
            self._spec = np.asarray(values, dtype=np.complex128)
        else:
            raise GridError(f"unknown representation {rep!r}")

    @property
    def rep(self) -> str:
        return PHYSICAL if self._phys is not None else SPECTRAL

    @property
    def values(self) -> np.ndarray:
        return self._phys if self._phys is not None else self._spec

    def physical(self) -> np.ndarray:
        if self._phys is None:
            self._phys = _inv(self._spec, self.grid.shape)
        return self._phys

    def spectral(self) -> np.ndarray:
        if self._spec is None:
            self._spec = _fwd(self._phys)
        return self._spec

    def mean(self) -> float:
        if self._spec is not None:
            return float(self._spec.flat[0].real)
        return float(self._phys.mean())

    # -- arithmetic (physical-space pointwise) --------------------------------
    def _binary(self, other, op):
        ov = other.physical() if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, op(self.physical(), ov))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return ScalarField(self.grid, other - self.physical())

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.physical())


class VectorField:
    """d scalar components on a shared grid."""

    __slots__ = ("grid", "components")

    def __init__(self, components):
        components = tuple(components)
        grid = components[0].grid
        for c in components:
            if c.grid != grid:
                raise GridError("component grids differ")
        if len(components) != grid.d:
            raise GridError(f"need {grid.d} components, got {len(components)}")
        self.grid = grid
        self.components = components

    @classmethod
    def from_arrays(cls, grid: GridSpec, arrays) -> "VectorField":
        return cls([ScalarField(grid, a) for a in arrays])

    @classmethod
    def zero(cls, grid: GridSpec) -> "VectorField":
        return cls.from_arrays(grid, [np.zeros(grid.shape) for _ in range(grid.d)])

    def __getitem__(self, j: int) -> ScalarField:
        return self.components[j]

    def __add__(self, other):
        return VectorField([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other):
        return VectorField([a - b for a, b in zip(self.components, other.components)])

    def __mul__(self, other):
        return VectorField([c * other for c in self.components])

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField([-c for c in self.components])

    def dot(self, other: "VectorField") -> ScalarField:
        out = self.components[0] * other.components[0]
        for a, b in zip(self.components[1:], other.components[1:]):
            out = out + a * b
        return out

    def magnitude(self) -> ScalarField:
        sq = sum(c.physical() ** 2 for c in self.components)
        return ScalarField(self.grid, np.sqrt(sq))


def constant_field(grid: GridSpec, c: float) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, float(c)))


def transform(field: ScalarField, target: str) -> ScalarField:
    """Return the field carrying the requested representation."""
    if target == SPECTRAL:
        return ScalarField(field.grid, field.spectral().copy(), SPECTRAL)
    if target == PHYSICAL:
        return ScalarField(field.grid, field.physical().copy(), PHYSICAL)
    raise GridError(f"unknown representation {target!r}")


def _axis_multiplier(grid: GridSpec, axis: int, order: int) -> np.ndarray:
    """(2 pi i k)^order along one axis; Nyquist zeroed for odd orders."""
    k = _wavenumbers(grid.d, grid.n)[axis].copy()
    if order % 2 == 1:
        # zeroing the unpaired Nyquist mode keeps odd-order operators
        # real-to-real and exactly skew-adjoint on the grid
        nyq = grid.n // 2
        k[np.abs(k) == nyq] = 0.0
    return (2j * math.pi * k) ** order


def derive(field: ScalarField, alpha) -> ScalarField:
    """Spectral partial derivative with multi-index alpha."""
    if isinstance(alpha, int):
        idx = [0] * field.grid.d
        idx[alpha] = 1
        alpha = idx
    alpha = tuple(alpha)
    if len(alpha) != field.grid.d:
        raise GridError("multi-index length mismatch")
    spec = field.spectral()
    out = spec
    for axis, order in enumerate(alpha):
        if order:
            out = out * _axis_multiplier(field.grid, axis, order)
    return ScalarField(field.grid, out if out is not spec else spec.copy(), SPECTRAL)


def partial(field: ScalarField, axis: int) -> ScalarField:
    return derive(field, axis)


def gradient(field: ScalarField) -> VectorField:
    return VectorField([derive(field, a) for a in range(field.grid.d)])


def divergence(vec: VectorField) -> ScalarField:
    parts = [derive(c, a).spectral() for a, c in enumerate(vec.components)]
    return ScalarField(vec.grid, sum(parts), SPECTRAL)


def laplacian(field: ScalarField) -> ScalarField:
    """Spectral Laplacian, composition-consistent with div o grad."""
    ks = _ksq_tilde(field.grid.d, field.grid.n)
    return ScalarField(field.grid, -ks * field.spectral(), SPECTRAL)


def inv_laplacian(field: ScalarField, mean_tol: float = 1e-10) -> ScalarField:
    """Solve Laplace(u) = f for mean-zero f; zero mode of u is zero."""
    m = field.mean()
    scale = float(np.max(np.abs(field.physical()))) or 1.0
    if abs(m) > mean_tol * scale:
        raise GridError(f"inverse Laplacian needs mean-zero input; measured mean {m:.3e}")
    ks = _ksq(field.grid.d, field.grid.n).copy()
    ks.flat[0] = 1.0
    out = field.spectral() / (-ks)
    out.flat[0] = 0.0
    return ScalarField(field.grid, out, SPECTRAL)


def mean_project(field: ScalarField) -> ScalarField:
    if field.rep == SPECTRAL:
        out = field.spectral().copy()
        out.flat[0] = 0.0
        return ScalarField(field.grid, out, SPECTRAL)
    v = field.physical()
    return ScalarField(field.grid, v - v.mean())


def translate(field: ScalarField, y) -> ScalarField:
    """f composed with tau_y, i.e. x -> f(x - y), by spectral phase factors."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.size != field.grid.d:
        raise GridError("translation vector dimension mismatch")
    ks = _wavenumbers(field.grid.d, field.grid.n)
    out = field.spectral().copy()
    for a in range(field.grid.d):
        if y[a] != 0.0:
            out = out * np.exp(-2j * math.pi * ks[a] * y[a])
    return ScalarField(field.grid, out, SPECTRAL)


def translate_vector(vec: VectorField, y) -> VectorField:
    return VectorField([translate(c, y) for c in vec.components])


def band_limit(field: ScalarField, rel_tol: float = 1e-13) -> int:
    """Largest |k| (per-axis max-norm) carrying relative energy above rel_tol."""
    spec = field.spectral()
    mags = np.abs(spec)
    top = mags.max()
    if top == 0.0:
        return 0
    ks = _wavenumbers(field.grid.d, field.grid.n)
    kmax = np.zeros(spec.shape)
    for k in ks:
        kmax = np.maximum(kmax, np.abs(k))
    active = mags > rel_tol * top
    return int(kmax[active].max()) if active.any() else 0


def dilate(field: ScalarField, lam: int) -> ScalarField:
    """f_lam(x) = f(lam x); exact spectral index remap, refuses to alias."""
    if lam < 1 or int(lam) != lam:
        raise GridError("dilation factor must be a positive integer")
    lam = int(lam)
    if lam == 1:
        return field
    n = field.grid.n
    bl = band_limit(field)
    if bl * lam >= n // 2:
        raise GridError(
            f"dilation by {lam} would alias: band limit {bl} exceeds n/(2*lam) = {n / (2 * lam):g}"
        )
    src = field.spectral().copy()
    # drop round-off junk below the band-limit threshold before remapping
    top = np.abs(src).max()
    if top > 0:
        src[np.abs(src) <= 1e-13 * top] = 0.0
    out = np.zeros_like(src)
    d = field.grid.d
    # map mode k -> lam*k in the rfftn index layout
    idx_src = [np.fft.fftfreq(n, d=1.0 / n).astype(int)] * (d - 1) + [np.arange(n // 2 + 1)]
    for flat in np.argwhere(np.abs(src) > 0):
        k = [idx_src[a][flat[a]] for a in range(d)]
        kk = [lam * ki for ki in k]
        tgt = []
        for a in range(d - 1):
            tgt.append(kk[a] % n)
        tgt.append(kk[-1])
        out[tuple(tgt)] = src[tuple(flat)]
    return ScalarField(field.grid, out, SPECTRAL)


# -- norms ---------------------------------------------------------------------


def lp_norm(field, p: float) -> float:
    """L^p norm via the uniform-grid (periodic trapezoid) quadrature."""
    if p < 1:
        raise GridError(f"p must be >= 1, got {p}")
    if isinstance(field, VectorField):
        vals = field.magnitude().physical()
    else:
        vals = field.physical()
    if math.isinf(p):
        return float(np.max(np.abs(vals)))
    return float(np.mean(np.abs(vals) ** p) ** (1.0 / p))


def l1_norm(field) -> float:
    return lp_norm(field, 1.0)


def w1p_norm(field, p: float) -> float:
    """W^{1,p} = L^p norm of the field plus L^p norm of its gradient."""
    if isinstance(field, VectorField):
        base = lp_norm(field, p)
        gr = 0.0
        sq = None
        for c in field.components:
            g = gradient(c)
            m = sum(gc.physical() ** 2 for gc in g.components)
            sq = m if sq is None else sq + m
        gr_field = ScalarField(field.grid, np.sqrt(sq))
        return base + lp_norm(gr_field, p)
    return lp_norm(field, p) + lp_norm(gradient(field), p)


def ck_norm(field, k: int) -> float:
    """Sum of sup norms of all spatial derivatives of order <= k (grid maxima)."""
    if isinstance(field, VectorField):
        return sum(ck_norm(c, k) for c in field.components)
    total = 0.0
    grid = field.grid
    from itertools import product

    for alpha in product(range(k + 1), repeat=grid.d):
        if sum(alpha) <= k:
            total += lp_norm(derive(field, alpha), math.inf)
    return total


def sobolev_hdot_norm(field: ScalarField, s: float) -> float:
    """Homogeneous Sobolev norm (sum over modes of |2 pi k|^{2s} |f_k|^2)^{1/2}."""
    spec = field.spectral()
    grid = field.grid
    ks = _ksq(grid.d, grid.n).copy()
    ks.flat[0] = 1.0
    w = _spectral_weights(grid.d, grid.n)
    mags = w * np.abs(spec) ** 2 * ks ** s
    mags.flat[0] = 0.0
    return float(np.sqrt(mags.sum()))


def spectral_l2_norm(field: ScalarField) -> float:
    """L^2 norm from spectral coefficients (Parseval)."""
    spec = field.spectral()
    w = _spectral_weights(field.grid.d, field.grid.n)
    return float(np.sqrt((w * np.abs(spec) ** 2).sum()))


def holder_time_seminorm(slices, times, beta: float, space_norm=None) -> float:
    """Discrete Hoelder-in-time seminorm: max pairwise difference quotient.

    slices: list of ScalarField/VectorField; space norm defaults to sup.
    """
    if space_norm is None:
        space_norm = lambda f: lp_norm(f, math.inf)
    best = 0.0
    for i in range(len(slices)):
        for j in range(i + 1, len(slices)):
            dtau = abs(times[j] - times[i])
            if dtau == 0:
                continue
            q = space_norm(slices[j] - slices[i]) / dtau ** beta
            best = max(best, q)
    return best


def norm(field, kind: str, p: float = 2.0, k: int = 0, beta: float = 0.5, times=None):
    """Dispatch for the norm kinds used by the construction."""
    if kind == "Lp":
        return lp_norm(field, p)
    if kind == "W1p":
        return w1p_norm(field, p)
    if kind == "Ck_sup":
        return ck_norm(field, k)
    if kind == "holder_time":
        if times is None:
            raise GridError("holder_time norm needs the slice times")
        return holder_time_seminorm(field, times, beta)
    raise GridError(f"unknown norm kind {kind!r}")


def random_trig_polynomial(grid: GridSpec, band: int, rng, mean_zero: bool = True) -> ScalarField:
    """Random real trig polynomial with per-axis band limit."""
    n, d = grid.n, grid.d
    ks = _wavenumbers(d, n)
    mask = np.ones(grid.spectral_shape, dtype=bool)
    for k in ks:
        mask = mask & (np.abs(k) <= band)
    spec = np.zeros(grid.spectral_shape, dtype=complex)
    m = int(mask.sum())
    spec[mask] = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    if mean_zero:
        spec.flat[0] = 0.0
    # a round trip through physical space enforces conjugate symmetry exactly
    f = ScalarField(grid, _inv(spec, grid.shape))
    return mean_project(f) if mean_zero else f
