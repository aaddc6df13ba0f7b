"""Space-time mollification of the defect, cutoff fields, and the
coefficient fields multiplying the Mikado blocks.

Everything here is evaluator-based in time: the mollified defect, the
cutoffs, and the coefficients can be sampled at arbitrary t, which keeps
temporal derivatives analytic (kernel derivatives plus chain rule) instead
of finite-differenced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fields import GridSpec, GridError, ScalarField, VectorField, _fwd, _inv


# -- smooth ramp -----------------------------------------------------------------


def _sigma(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def _sigma_prime(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos]) / s[pos] ** 2
    return out


def ramp(u):
    """Smooth monotone bridge: 0 on (-inf, 1], 1 on [2, inf)."""
    u = np.asarray(u, dtype=float)
    a = _sigma(u - 1.0)
    b = _sigma(2.0 - u)
    return a / (a + b + (a + b == 0.0))


def ramp_prime(u):
    u = np.asarray(u, dtype=float)
    a = _sigma(u - 1.0)
    b = _sigma(2.0 - u)
    ap = _sigma_prime(u - 1.0)
    bp = -_sigma_prime(2.0 - u)
    den = (a + b) ** 2
    den[den == 0.0] = 1.0
    return (ap * b - a * bp) / den


# -- mollification ----------------------------------------------------------------


def _phi_shape(u):
    """Smooth bump on (0,1), vanishing to all orders at both ends."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = (u > 0.0) & (u < 1.0)
    out[inside] = np.exp(-1.0 / (u[inside] * (1.0 - u[inside])))
    return out


def _phi_shape_prime(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = (u > 0.0) & (u < 1.0)
    ui = u[inside]
    g = ui * (1.0 - ui)
    out[inside] = np.exp(-1.0 / g) * (1.0 - 2.0 * ui) / g ** 2
    return out


@lru_cache(maxsize=16)
def _spatial_multiplier(d: int, n: int, l: float) -> np.ndarray:
    """rfftn multiplier of the sampled unit-mass radial kernel of radius l."""
    grid = GridSpec(d=d, n=n)
    r2 = None
    for axis in range(d):
        x = grid.axis_coords(axis)
        u = (x + 0.5) % 1.0 - 0.5  # centered coordinate
        term = u * u
        r2 = term if r2 is None else r2 + term
    rho = np.sqrt(r2) / l
    vals = np.zeros(grid.shape)
    inside = rho < 1.0
    vals[inside] = np.exp(-1.0 / (1.0 - rho[inside] ** 2))
    total = vals.sum()
    if total <= 0:
        raise GridError(f"mollifier radius l={l} is below the grid resolution h={grid.h}")
    vals /= total * grid.h ** d  # unit mass on the grid
    mult = _fwd(vals) * grid.npoints * grid.h ** d
    # exact unit mass: zero mode of the multiplier is one
    mult /= mult.flat[0].real
    return mult


@dataclass
class MollifierSpec:
    """One-sided space-time mollifier at scale l.

    The temporal kernel is supported in (0, l] (strictly past), sampled on
    the slice grid and renormalized; its time derivative is the sampled
    analytic derivative with the consistent renormalization.  The spatial
    kernel acts as a spectral multiplier.
    """

    l: float

    def __post_init__(self):
        if self.l <= 0:
            raise GridError("mollification scale must be positive")

    def smooth_slice(self, field_arrays, grid: GridSpec):
        """Apply the spatial kernel to each array of one time slice."""
        mult = _spatial_multiplier(grid.d, grid.n, self.l)
        return [_inv(_fwd(a) * mult, grid.shape) for a in field_arrays]

    def windows(self, t: float, times: np.ndarray):
        """Slice indices and (weight, weight-derivative) rows hitting time t.

        Negative-time samples are clamped to slice 0 (past extension).
        """
        dt = times[1] - times[0] if len(times) > 1 else self.l
        if dt > self.l / 4.0 + 1e-12:
            raise GridError(
                f"time grid too coarse for mollification: dt={dt:g} > l/4={self.l / 4:g}"
            )
        i_lo = math.floor((t - self.l) / dt)
        i_hi = math.ceil(t / dt)
        idx, w, dw = [], [], []
        for i in range(i_lo, i_hi + 1):
            s = i * dt
            u = (t - s) / self.l
            wi = float(_phi_shape(u))
            if wi == 0.0:
                continue
            idx.append(min(max(i, 0), len(times) - 1))
            w.append(wi)
            dw.append(float(_phi_shape_prime(u)) / self.l)
        if not idx:
            # t at (or before) the first slice: the past extension is constant
            return [0], np.array([1.0]), np.array([0.0])
        w = np.array(w)
        dw = np.array(dw)
        W = w.sum()
        dW = dw.sum()
        weights = w / W
        dweights = dw / W - w * dW / W ** 2
        return idx, weights, dweights


class MollifiedSeries:
    """Time-smoothed view of a sampled vector-field series.

    Stores the spatially mollified slices; combination weights are computed
    per evaluation so R_l and its time derivative are smooth in t.
    """

    def __init__(self, slices, times, spec: MollifierSpec, grid: GridSpec,
                 spatial: bool = True):
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        self.spec = spec
        self._slices = []
        for arrays in slices:
            if spatial:
                self._slices.append(spec.smooth_slice(arrays, grid))
            else:
                self._slices.append([np.asarray(a) for a in arrays])

    @property
    def ncomp(self) -> int:
        return len(self._slices[0])

    def eval(self, t: float):
        """(R_l components, dt R_l components) at time t."""
        idx, w, dw = self.spec.windows(t, self.times)
        vals = [None] * self.ncomp
        dvals = [None] * self.ncomp
        for i, wi, dwi in zip(idx, w, dw):
            for c in range(self.ncomp):
                s = self._slices[i][c]
                vals[c] = wi * s if vals[c] is None else vals[c] + wi * s
                dvals[c] = dwi * s if dvals[c] is None else dvals[c] + dwi * s
        return vals, dvals


class IdentityMollifier:
    """Pass-through used by the schemes that do not mollify (smooth defects).

    Time derivatives fall back to centered finite differences on the slice
    grid, except that slices are combined so exact zeros stay exact.
    """

    def __init__(self, slices, times, grid: GridSpec):
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        self._slices = [[np.asarray(a) for a in arrays] for arrays in slices]

    @property
    def ncomp(self) -> int:
        return len(self._slices[0])

    def eval(self, t: float):
        times = self.times
        nt = len(times)
        if nt == 1:
            return list(self._slices[0]), [np.zeros_like(a) for a in self._slices[0]]
        dt = times[1] - times[0]
        pos = t / dt
        i = int(round(pos))
        if abs(pos - i) < 1e-9 and 0 <= i < nt:
            vals = list(self._slices[i])
        else:
            i0 = min(max(int(math.floor(pos)), 0), nt - 2)
            frac = (t - times[i0]) / dt
            vals = [
                (1 - frac) * a + frac * b
                for a, b in zip(self._slices[i0], self._slices[i0 + 1])
            ]
            i = i0
        # centered 2nd-order derivative, one-sided at the ends
        j = min(max(i, 1), nt - 2)
        dvals = [
            (b - a) / (2 * dt)
            for a, b in zip(self._slices[j - 1], self._slices[j + 1])
        ]
        return vals, dvals


# -- cutoffs and coefficients --------------------------------------------------------


def m0_weight(L: float):
    """The exponential weight of the additive scheme, as analytic closures."""

    def m0(t):
        return L ** 4 * math.exp(4.0 * L * t)

    def dm0(t):
        return 4.0 * L * m0(t)

    return m0, dm0


def unit_weight():
    return (lambda t: 1.0), (lambda t: 0.0)


@dataclass
class CutoffSpec:
    """Cutoff thresholds: 0 below delta*weight/(4d), 1 above delta*weight/(2d),
    bridged by the smooth ramp; the argument is |R_l^j + Gamma|."""

    delta: float
    gamma: float = 0.0
    weight: object = None
    dweight: object = None

    def __post_init__(self):
        if self.weight is None:
            w, dw = unit_weight()
            object.__setattr__(self, "weight", w)
            object.__setattr__(self, "dweight", dw)


class CoeffFields:
    """Cutoffs chi_j and coefficients a_j, b_j at one time, with analytic
    time derivatives carried along.

    eta enters as an exact homogeneity: a_j = eta * ahat_j and
    b_j = ahat-free / eta, so callers may rescale after assembly.
    """

    def __init__(self, grid: GridSpec, t: float, Rl, dRl, spec: CutoffSpec,
                 p: float, eta: float = 1.0):
        d = grid.d
        self.grid = grid
        self.t = t
        self.p = p
        self.eta = eta
        self.spec = spec
        q = p / (p - 1.0)
        delta, gamma = spec.delta, spec.gamma
        wt = spec.weight(t)
        dwt = spec.dweight(t)
        lower = delta * wt / (4.0 * d)

        self.Rl = [np.asarray(r) for r in Rl]
        self.dRl = [np.asarray(r) for r in dRl]
        self.chi, self.dchi = [], []
        self.a, self.b, self.ab = [], [], []
        self.da, self.db, self.dab = [], [], []
        for j in range(d):
            arg = self.Rl[j] + gamma
            mag = np.abs(arg)
            sgn = np.sign(arg)
            u = mag * (4.0 * d / (delta * wt))
            chi = ramp(u)
            Sp = ramp_prime(u)
            du = (4.0 * d / (delta * wt)) * (sgn * self.dRl[j] - mag * dwt / wt)
            dchi = Sp * du

            active = chi > 0.0
            if active.any():
                low = mag[active].min()
                if low < lower * (1.0 - 1e-9):
                    raise GridError(
                        "cutoff support violation: coefficient argument "
                        f"{low:.3e} below threshold {lower:.3e}"
                    )
            # fractional powers evaluated only on the cutoff support
            mag_safe = np.where(active, mag, 1.0)
            pa = mag_safe ** (1.0 / p)
            pb = mag_safe ** (1.0 / q)
            a = np.where(active, eta * chi * sgn * pa, 0.0)
            b = np.where(active, (1.0 / eta) * chi * pb, 0.0)
            ab = chi * chi * arg
            dab = 2.0 * chi * dchi * arg + chi * chi * self.dRl[j]
            da = np.where(
                active,
                eta * (dchi * sgn * pa + chi * (1.0 / p) * mag_safe ** (1.0 / p - 1.0) * self.dRl[j]),
                0.0,
            )
            db = np.where(
                active,
                (1.0 / eta) * (dchi * pb + chi * (1.0 / q) * mag_safe ** (1.0 / q - 1.0) * sgn * self.dRl[j]),
                0.0,
            )
            self.chi.append(chi)
            self.dchi.append(dchi)
            self.a.append(a)
            self.b.append(b)
            self.ab.append(ab)
            self.da.append(da)
            self.db.append(db)
            self.dab.append(dab)

    def chi_field(self, j: int) -> ScalarField:
        return ScalarField(self.grid, self.chi[j])

    def a_field(self, j: int) -> ScalarField:
        return ScalarField(self.grid, self.a[j])

    def b_field(self, j: int) -> ScalarField:
        return ScalarField(self.grid, self.b[j])


def build_cutoff(grid: GridSpec, t: float, Rl, spec: CutoffSpec):
    """Sampled cutoff fields chi_j(t) alone (no coefficients)."""
    zeros = [np.zeros(grid.shape) for _ in range(grid.d)]
    cf = CoeffFields(grid, t, Rl, zeros, spec, p=2.0)
    return [cf.chi_field(j) for j in range(grid.d)]


def build_coeffs(grid: GridSpec, t: float, Rl, dRl, spec: CutoffSpec, p: float,
                 eta: float = 1.0) -> CoeffFields:
    return CoeffFields(grid, t, Rl, dRl, spec, p, eta)


# -- temporal cutoff ----------------------------------------------------------------


@dataclass(frozen=True)
class TemporalCutoff:
    """Smooth time ramp: 0 for t <= Sigma/2, 1 for t >= Sigma."""

    sigma: float

    def __call__(self, t: float) -> float:
        return float(ramp(np.array(2.0 * t / self.sigma)))

    def derivative(self, t: float) -> float:
        return float(ramp_prime(np.array(2.0 * t / self.sigma))) * 2.0 / self.sigma

    def sq(self, t: float) -> float:
        v = self(t)
        return v * v

    def sq_derivative(self, t: float) -> float:
        return 2.0 * self(t) * self.derivative(t)


def temporal_cutoff(sigma: float, t_grid=None):
    """The ramp and, if a grid is given, its sampled values and derivative."""
    tc = TemporalCutoff(sigma)
    if t_grid is None:
        return tc
    t_grid = np.asarray(t_grid, dtype=float)
    return tc, np.array([tc(t) for t in t_grid]), np.array([tc.derivative(t) for t in t_grid])
