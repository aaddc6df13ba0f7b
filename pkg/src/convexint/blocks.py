"""Mikado building blocks: disjoint lines, concentrated bump profiles,
transverse oscillations, and the translating space-time blocks with their
exact interaction identities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .fields import (
    GridSpec,
    GridError,
    ScalarField,
    VectorField,
    partial as dpartial,
    translate,
)


class ResolutionError(GridError):
    pass


# -- Mikado lines ---------------------------------------------------------------


@dataclass(frozen=True)
class LineLayout:
    """d pairwise-separated lines s -> zeta_j + s e_j on the torus."""

    d: int
    offsets: tuple  # d offset points, each a d-tuple
    r: float        # admissible separation radius (pairwise distance > 2r)
    min_separation: float

    def line_point(self, j: int, s: float) -> np.ndarray:
        p = np.array(self.offsets[j], dtype=float)
        p[j] = (p[j] + s) % 1.0
        return p % 1.0


def _torus_dist(x: np.ndarray, y: np.ndarray) -> float:
    delta = np.abs(x - y) % 1.0
    delta = np.minimum(delta, 1.0 - delta)
    return float(np.sqrt((delta ** 2).sum()))


def place_lines(d: int, n_samples: int = 10000) -> LineLayout:
    """Offsets for d disjoint coordinate-direction lines, with verified radius.

    d = 3 uses the staggered quarter-offset family; higher d staggers each
    line at height j/d on every transverse coordinate.
    """
    if d < 3:
        raise GridError("the line construction requires d >= 3")
    if d == 3:
        offsets = ((0.0, 0.25, 0.25), (0.75, 0.0, 0.75), (0.25, 0.75, 0.0))
    else:
        offs = []
        for j in range(d):
            row = [j / d] * d
            row[j] = 0.0
            offs.append(tuple(row))
        offsets = tuple(offs)
    # brute-force verification over sampled line parameters
    svals = np.linspace(0.0, 1.0, n_samples, endpoint=False)
    min_sep = math.inf
    for i in range(d):
        for j in range(i + 1, d):
            oi = np.array(offsets[i])
            oj = np.array(offsets[j])
            pts_i = np.tile(oi, (n_samples, 1))
            pts_i[:, i] = (oi[i] + svals) % 1.0
            pts_j = np.tile(oj, (n_samples, 1))
            pts_j[:, j] = (oj[j] + svals) % 1.0
            delta = np.abs(pts_i - pts_j) % 1.0
            delta = np.minimum(delta, 1.0 - delta)
            min_sep = min(min_sep, float(np.sqrt((delta ** 2).sum(axis=1)).min()))
    layout = LineLayout(d=d, offsets=offsets, r=min_sep / 2.0, min_separation=min_sep)
    return layout


# -- bump profiles ----------------------------------------------------------------


class BumpProfile:
    """Smooth compactly supported radial bump c*exp(-1/(1-(rho/r0)^2)),
    normalized so the d-dimensional integral of its square is one."""

    def __init__(self, d: int, r0: float):
        self.d = d
        self.r0 = r0
        # unit-sphere surface area
        omega = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
        val, _ = quad(lambda u: math.exp(-2.0 / (1.0 - u * u)) * u ** (d - 1), 0.0, 1.0)
        mass_sq = omega * (r0 ** d) * val
        self.c = 1.0 / math.sqrt(mass_sq)

    def radial(self, rho):
        """Profile value at radius rho (vectorized)."""
        rho = np.asarray(rho, dtype=float)
        out = np.zeros_like(rho)
        inside = rho < self.r0
        u2 = (rho[inside] / self.r0) ** 2
        out[inside] = self.c * np.exp(-1.0 / (1.0 - u2))
        return out

    def sup(self) -> float:
        return self.c * math.exp(-1.0)

    def grad_sup(self) -> float:
        def negabs(u):
            if u <= 0 or u >= 1:
                return 0.0
            g = 1.0 - u * u
            return -abs(self.c * math.exp(-1.0 / g) * (-2.0 * u / self.r0) / (g * g))

        res = minimize_scalar(negabs, bounds=(1e-9, 1 - 1e-9), method="bounded")
        return float(-res.fun)

    def lp_norm(self, p: float) -> float:
        """L^p(R^d) norm of the unscaled profile."""
        if math.isinf(p):
            return self.sup()
        omega = 2.0 * math.pi ** (self.d / 2.0) / math.gamma(self.d / 2.0)
        val, _ = quad(
            lambda u: math.exp(-p / (1.0 - u * u)) * u ** (self.d - 1), 0.0, 1.0
        )
        return (omega * self.r0 ** self.d * val) ** (1.0 / p) * self.c


@dataclass
class BumpPair:
    """Concentrated pair (rho_mu, rho~_mu) sharing one profile and support."""

    layout: LineLayout
    profile: BumpProfile
    mu: float
    p: float
    a: float
    b: float

    def _radius_sq(self, grid: GridSpec, j: int, lam: int = 1, shift: float = 0.0):
        """|mu*y - P|^2 on the grid for y = lam*(x - shift*e_j) - zeta_j."""
        total = None
        zeta = self.layout.offsets[j]
        for axis in range(grid.d):
            x = grid.axis_coords(axis)
            y = lam * (x - (shift if axis == j else 0.0)) - zeta[axis]
            # wrapping y into [0,1) shows the single bump centered at P/mu once
            y = y % 1.0
            u = self.mu * y - 0.5
            term = u * u
            total = term if total is None else total + term
        return total

    def eval_factor(self, grid: GridSpec, j: int, kind: str, lam: int = 1, shift: float = 0.0):
        """Sample one of rho_mu^j, rho~_mu^j, or their product, composed with
        integer dilation by lam and translation by shift along e_j."""
        r2 = self._radius_sq(grid, j, lam, shift)
        rho = np.sqrt(r2)
        base = self.profile.radial(rho)
        if kind == "rho":
            return ScalarField(grid, self.mu ** self.a * base)
        if kind == "rho_tilde":
            return ScalarField(grid, self.mu ** self.b * base)
        if kind == "product":
            return ScalarField(grid, self.mu ** (self.a + self.b) * base * base)
        raise GridError(f"unknown bump factor {kind!r}")

    def pair_integral(self, grid: GridSpec, j: int, s: float = 0.0) -> float:
        """Quadrature of rho_mu^j * rho~_mu^j after translation by s e_j."""
        shift = [0.0] * grid.d
        shift[j] = s
        r2 = None
        zeta = self.layout.offsets[j]
        for axis in range(grid.d):
            x = grid.axis_coords(axis)
            y = (x - shift[axis]) - zeta[axis]
            y = y % 1.0
            u = self.mu * y - 0.5
            term = u * u
            r2 = term if r2 is None else r2 + term
        base = self.profile.radial(np.sqrt(r2))
        vals = self.mu ** (self.a + self.b) * base * base
        return float(vals.mean())


def build_bumps(layout: LineLayout, mu: float, p: float, n: int | None = None) -> BumpPair:
    """Concentration pair with exponents a = d/p, b = d/p'."""
    if mu < 1:
        raise GridError("concentration mu must be >= 1")
    if not (1.0 < p < math.inf):
        raise GridError("p must lie in (1, infinity)")
    if n is not None and n < 8 * mu:
        raise ResolutionError(
            f"grid n={n} cannot resolve bump width 1/mu: need n >= {int(8 * mu)}"
        )
    d = layout.d
    a = d / p
    pprime = p / (p - 1.0)
    b = d / pprime
    profile = BumpProfile(d, 0.9 * layout.r)
    return BumpPair(layout=layout, profile=profile, mu=mu, p=p, a=a, b=b)


# -- transverse oscillation --------------------------------------------------------


@dataclass(frozen=True)
class PsiSpec:
    """Single-mode transverse profile: sqrt(2) cos(2 pi * mode * y_1), which has
    zero mean and unit mean square exactly."""

    d: int
    mode: int = 1

    def transverse_axis(self, j: int) -> int:
        # psi^j omits coordinate j; the profile reads the first remaining one
        return 1 if j == 0 else 0

    def sample(self, grid: GridSpec, j: int, nu: int = 1) -> ScalarField:
        axis = self.transverse_axis(j)
        x = grid.axis_coords(axis)
        vals = math.sqrt(2.0) * np.cos(2.0 * math.pi * self.mode * nu * x)
        return ScalarField(grid, np.broadcast_to(vals, grid.shape).copy())

    def sup(self) -> float:
        return math.sqrt(2.0)

    def grad_sup(self, nu: int = 1) -> float:
        return math.sqrt(2.0) * 2.0 * math.pi * self.mode * nu


def build_psi(d: int, j: int, nu: int, grid: GridSpec, mode: int = 1) -> ScalarField:
    """Sampled psi_nu^j on the grid."""
    return PsiSpec(d, mode).sample(grid, j, nu)


# -- space-time blocks ---------------------------------------------------------------


def block_constant(profile: BumpProfile, psi: PsiSpec) -> float:
    """The uniform constant bounding the block norm table."""
    r_sup = profile.sup()
    dr_sup = profile.grad_sup()
    p_sup = psi.sup()
    dp_sup = math.sqrt(2.0) * 2.0 * math.pi * psi.mode
    cands = [
        r_sup * p_sup,
        r_sup * dp_sup,
        dr_sup * p_sup,
        dr_sup * dp_sup,
        r_sup ** 2 * p_sup ** 2,
    ]
    return 2.0 * profile.d * max(cands)


@dataclass
class MikadoBlock:
    """Closed-form evaluators for one direction's density, field, and
    quadratic corrector."""

    j: int
    lam: int
    mu: float
    omega: float
    nu: int
    bumps: BumpPair
    psi: PsiSpec

    def __post_init__(self):
        if self.nu % self.lam != 0:
            raise GridError(f"nu must be a multiple of lam: nu={self.nu}, lam={self.lam}")

    def check_resolution(self, grid: GridSpec):
        need = 8 * max(self.lam * self.mu, self.nu)
        if grid.n < need:
            raise ResolutionError(
                f"grid n={grid.n} under-resolves the block: need n >= {int(need)}"
            )

    def eval(self, grid: GridSpec, t: float, with_dt: bool = False):
        """Sample (Theta, W, Q) at time t; optionally also d/dt of Theta and Q.

        The temporal behavior is an exact rigid e_j-translation at speed
        omega: the profile factors are sampled pointwise at the nearest
        grid-aligned phase and translated spectrally by the sub-grid
        remainder.  The discrete trajectory therefore has -omega * d/dx_j
        (spectral) as its exact time derivative, which is what eliminates
        temporal discretization error from every block identity; at
        grid-aligned times the sampling is pure pointwise evaluation, so
        supports and cross-products are exact there.
        """
        self.check_resolution(grid)
        j = self.j
        shift = self.omega * t
        snap = round(shift * grid.n) / grid.n
        frac = shift - snap
        psi_field = self.psi.sample(grid, j, self.nu)
        psi_sq = ScalarField(grid, psi_field.physical() ** 2)

        rho = self.bumps.eval_factor(grid, j, "rho", self.lam, snap)
        rho_t = self.bumps.eval_factor(grid, j, "rho_tilde", self.lam, snap)
        prod = self.bumps.eval_factor(grid, j, "product", self.lam, snap)
        if frac != 0.0:
            y = [0.0] * grid.d
            y[j] = frac
            rho = translate(rho, y)
            rho_t = translate(rho_t, y)
            prod = translate(prod, y)

        theta = rho * psi_field
        w_j = rho_t * psi_field
        wcomps = []
        for a in range(grid.d):
            if a == j:
                wcomps.append(w_j)
            else:
                wcomps.append(ScalarField(grid, np.zeros(grid.shape)))
        W = VectorField(wcomps)
        Q = ScalarField(grid, prod.physical() * psi_sq.physical() / self.omega)
        out = {"theta": theta, "W": W, "Q": Q, "rho": rho, "rho_tilde": rho_t, "product": prod,
               "psi": psi_field}
        if with_dt:
            out["dt_theta"] = -self.omega * dpartial(theta, j)
            out["dt_Q"] = -self.omega * dpartial(Q, j)
        return out


def build_blocks(d: int, lam: int, mu: float, omega: float, nu: int, p: float,
                 layout: LineLayout | None = None, psi_mode: int = 1):
    """One MikadoBlock per direction, sharing lines, bumps, and psi."""
    layout = layout or place_lines(d)
    bumps = build_bumps(layout, mu, p)
    psi = PsiSpec(d, psi_mode)
    return [MikadoBlock(j, lam, mu, omega, nu, bumps, psi) for j in range(d)]
