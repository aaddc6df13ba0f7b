"""Assembly of one convex-integration step: perturbations, new fields,
the full defect decomposition per variant, the independent PDE-residual
cross-check, and the pairing functional.

Everything is evaluator-based in time: a step exposes closures
theta1(t), u1(t), R1(t) built from closed-form blocks, analytic cutoff
ramps, and the kernel-differentiated mollified defect, so the residual
checker can finite-difference theta1 in t with a tiny local stencil.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import (
    GridSpec,
    GridError,
    ScalarField,
    VectorField,
    partial as dpartial,
    gradient,
    divergence,
    laplacian,
    lp_norm,
    translate_vector,
)
from .antidiv import apply_Dk, bilinear_antidiv
from .blocks import build_blocks, block_constant
from .coeffs import (
    CutoffSpec,
    CoeffFields,
    MollifierSpec,
    MollifiedSeries,
    TemporalCutoff,
    m0_weight,
    unit_weight,
)
from .noise import NoiseEnv, path_value

VARIANTS = ("additive", "transport", "shifted", "damped", "forced")
MOLLIFIED = {"additive": True, "transport": True, "shifted": True,
             "damped": False, "forced": False}


class AnalyticSeries:
    """Defect series given by closures t -> component arrays (and derivatives)."""

    def __init__(self, fn, dfn):
        self.fn = fn
        self.dfn = dfn

    def eval(self, t: float):
        return self.fn(t), self.dfn(t)


class SampledSeries:
    """Defect series stored on the slice grid; exact at slices, linear
    between them, centered-difference time derivative."""

    def __init__(self, slices, times):
        self._slices = [[np.asarray(a) for a in arrays] for arrays in slices]
        self.times = np.asarray(times, dtype=float)

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
            i = min(max(int(math.floor(pos)), 0), nt - 2)
            frac = (t - times[i]) / dt
            vals = [(1 - frac) * a + frac * b
                    for a, b in zip(self._slices[i], self._slices[i + 1])]
        j = min(max(i, 1), nt - 2)
        dvals = [(b - a) / (2 * dt)
                 for a, b in zip(self._slices[j - 1], self._slices[j + 1])]
        return vals, dvals


@dataclass
class SchemeState:
    """One convex-integration triple with evaluator access."""

    variant: str
    grid: GridSpec
    times: np.ndarray
    theta_fn: object          # t -> ScalarField
    u_fn: object              # t -> VectorField
    R_eval: object            # .eval(t) -> (component arrays, time derivatives)
    step: int = 0
    u_is_zero: bool = False
    metrics: dict = field(default_factory=dict)

    def theta(self, t: float) -> ScalarField:
        return self.theta_fn(t)

    def u(self, t: float) -> VectorField:
        return self.u_fn(t)

    def u_shifted(self, t: float, shift) -> VectorField:
        """u(t, x + shift) by spectral translation."""
        if self.u_is_zero:
            return VectorField.zero(self.grid)
        return translate_vector(self.u(t), -np.asarray(shift, dtype=float))

    def R_slices(self):
        out = []
        for t in self.times:
            vals, _ = self.R_eval.eval(float(t))
            out.append(vals)
        return out

    def R_field(self, t: float) -> VectorField:
        vals, _ = self.R_eval.eval(float(t))
        return VectorField.from_arrays(self.grid, vals)


@dataclass
class StepParams:
    """Per-step parameter bundle."""

    lam: int
    mu: float
    nu: int
    omega: float
    N: int
    l: float
    delta: float
    eta: float = 1.0
    gamma_shift: float = 0.0
    sigma_ramp: float = 0.0   # shifted: temporal cutoff scale
    L: float = 1.0            # additive: M0 weight parameter
    p: float = 2.0


class StepAssembler:
    """Builds one step of the chosen variant on top of a SchemeState.

    The coefficients are assembled with params.eta; `eta_extra` applies an
    exact homogeneous rescaling on top (each perturbation part and defect
    piece has a definite eta-degree), which is how the auto-balanced eta is
    selected without reassembly.
    """

    def __init__(self, variant: str, state: SchemeState, params: StepParams,
                 noise: NoiseEnv | None = None, bpath=None, force_fn=None,
                 cache: int = 8, psi_mode: int = 1):
        if variant not in VARIANTS:
            raise GridError(f"unknown variant {variant!r}")
        self.variant = variant
        self.state = state
        self.grid = state.grid
        self.params = params
        self.noise = noise
        self.bpath = bpath  # (times, B) for transport/shifted
        self.force_fn = force_fn
        self.eta_extra = 1.0
        if variant in ("transport", "shifted") and bpath is None:
            raise GridError(f"variant {variant!r} needs a Brownian path")
        if variant == "additive" and noise is None:
            raise GridError("additive variant needs the simulated heat field")

        p = params.p
        self.blocks = build_blocks(self.grid.d, params.lam, params.mu, params.omega,
                                   params.nu, p, psi_mode=psi_mode)
        self.M = block_constant(self.blocks[0].bumps.profile, self.blocks[0].psi)
        for b in self.blocks:
            b.check_resolution(self.grid)

        if variant == "additive":
            w, dw = m0_weight(params.L)
        else:
            w, dw = unit_weight()
        self.weight, self.dweight = w, dw
        self.cutoff_spec = CutoffSpec(delta=params.delta, gamma=params.gamma_shift,
                                      weight=w, dweight=dw)
        self.tramp = TemporalCutoff(params.sigma_ramp) if variant == "shifted" else None

        if MOLLIFIED[variant]:
            spec = MollifierSpec(params.l)
            self.R_l = MollifiedSeries(state.R_slices(), state.times, spec, self.grid)
        else:
            self.R_l = state.R_eval

        self._cache = {}
        self._cache_order = []
        self._cache_size = cache

    # -- noise lookups -------------------------------------------------------
    def z_at(self, t: float) -> ScalarField:
        env = self.noise
        idx = int(np.argmin(np.abs(env.times - t)))
        if abs(env.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise GridError(f"heat field requested off the sampled slices: t={t}")
        return env.z_slices[idx]

    def B_at(self, t: float):
        times, B = self.bpath
        return path_value(times, B, t)

    # -- per-time assembly (cached) --------------------------------------------
    def _assembly(self, t: float) -> dict:
        key = round(float(t), 15)
        if key in self._cache:
            return self._cache[key]
        out = self._build(t)
        self._cache[key] = out
        self._cache_order.append(key)
        if len(self._cache_order) > self._cache_size:
            old = self._cache_order.pop(0)
            self._cache.pop(old, None)
        return out

    def _build(self, t: float) -> dict:
        grid = self.grid
        d = grid.d
        pars = self.params
        Rl, dRl = self.R_l.eval(t)
        coeffs = CoeffFields(grid, t, Rl, dRl, self.cutoff_spec, pars.p, eta=pars.eta)
        blocks = [b.eval(grid, t, with_dt=True) for b in self.blocks]

        vartheta = np.zeros(grid.shape)
        q = np.zeros(grid.shape)
        wcomps = [np.zeros(grid.shape) for _ in range(d)]
        for j in range(d):
            vartheta += coeffs.a[j] * blocks[j]["theta"].physical()
            q += coeffs.ab[j] * blocks[j]["Q"].physical()
            wcomps[j] += coeffs.b[j] * blocks[j]["W"][j].physical()
        vartheta_c = -float(vartheta.mean())
        q_c = -float(q.mean())

        # divergence-free corrector via the bilinear anti-divergence
        wc = None
        for j in range(d):
            if not np.any(coeffs.b[j]):
                continue
            carrier = ScalarField(grid, coeffs.b[j] * blocks[j]["rho_tilde"].physical())
            Fj = dpartial(carrier, j)
            term = bilinear_antidiv(Fj, blocks[j]["psi"], pars.N)
            wc = term if wc is None else wc + term
        if wc is None:
            wc = VectorField.zero(grid)
        wc = -wc

        return {
            "t": t,
            "coeffs": coeffs,
            "blocks": blocks,
            "vartheta": ScalarField(grid, vartheta),
            "vartheta_c": vartheta_c,
            "q": ScalarField(grid, q),
            "q_c": q_c,
            "w": VectorField.from_arrays(grid, wcomps),
            "w_c": wc,
        }

    # -- public fields -----------------------------------------------------------
    def tilde_factors(self, t: float):
        if self.tramp is None:
            return 1.0, 1.0
        v = self.tramp(t)
        return v, v * v

    def theta1(self, t: float) -> ScalarField:
        a = self._assembly(t)
        c1, c2 = self.tilde_factors(t)
        r = self.eta_extra
        base = self.state.theta(t)
        pert = c1 * r * (a["vartheta"].physical() + a["vartheta_c"]) + c2 * (
            a["q"].physical() + a["q_c"]
        )
        return ScalarField(self.grid, base.physical() + pert)

    def u1(self, t: float) -> VectorField:
        a = self._assembly(t)
        c1, _ = self.tilde_factors(t)
        fac = c1 / self.eta_extra
        pert = a["w"] + a["w_c"]
        if fac != 1.0:
            pert = pert * fac
        if self.variant in ("transport", "shifted"):
            pert = translate_vector(pert, self.B_at(t))  # w(t, x - B(t))
        base = self.state.u(t)
        return base + pert

    def u0_arg(self, t: float) -> VectorField:
        """u0 evaluated at the equation's argument (x + B(t) when shifted)."""
        if self.variant in ("transport", "shifted"):
            return self.state.u_shifted(t, self.B_at(t))
        if self.state.u_is_zero:
            return VectorField.zero(self.grid)
        return self.state.u(t)

    # -- defect decomposition ------------------------------------------------------
    def defect_pieces(self, t: float) -> dict:
        """Named pieces with their eta-homogeneity degree; -R1 = sum of pieces
        after the degree-wise eta rescaling."""
        grid = self.grid
        d = grid.d
        pars = self.params
        a = self._assembly(t)
        coeffs = a["coeffs"]
        blocks = a["blocks"]
        c1, c2 = self.tilde_factors(t)
        damped = self.variant == "damped"
        pieces = {}

        # time1: anti-divergence of the corrector time-derivative fluctuation
        acc = np.zeros(grid.shape)
        for j in range(d):
            acc += coeffs.dab[j] * blocks[j]["Q"].physical()
        fluct = ScalarField(grid, acc - acc.mean())
        pieces["time1"] = (apply_Dk(fluct, -1) * c2, 0)

        # quadr: oscillation and concentration fluctuations of grad(a_j b_j)
        q1 = None
        q2 = None
        for j in range(d):
            dab_j = dpartial(ScalarField(grid, coeffs.ab[j]), j)
            prod = blocks[j]["product"].physical()
            psi2m1 = ScalarField(grid, blocks[j]["psi"].physical() ** 2 - 1.0)
            first = ScalarField(grid, dab_j.physical() * prod)
            t1 = bilinear_antidiv(first, psi2m1, 1)
            q1 = t1 if q1 is None else q1 + t1
            # the concentration factor integrates to one only up to quadrature;
            # the measured mean defect is carried by an exact compensation
            # stream (j-component (mean-1) * ab_j) so the divergence identity
            # stays closed on the grid
            pm = float(prod.mean())
            t2 = bilinear_antidiv(dab_j, ScalarField(grid, prod - pm), 1)
            compc = [ScalarField(grid, (pm - 1.0) * coeffs.ab[i]) if i == j
                     else ScalarField(grid, np.zeros(grid.shape)) for i in range(d)]
            t2 = t2 + VectorField(compc)
            q2 = t2 if q2 is None else q2 + t2
        pieces["quadr1"] = (q1 * c2, 0)
        pieces["quadr2"] = (q2 * c2, 0)

        # chi: the defect mass below the cutoff thresholds
        chicomps = []
        for j in range(d):
            chicomps.append(ScalarField(
                grid, -(1.0 - coeffs.chi[j] ** 2) * (coeffs.Rl[j] + pars.gamma_shift)))
        pieces["chi"] = (VectorField(chicomps) * c2, 0)

        # time2: transported density time-derivative; the spectral d_j of the
        # sampled dilation already carries the lam factor, so the prefactor is
        # just -omega
        t2sum = None
        for j in range(d):
            if not np.any(coeffs.a[j]):
                continue
            dj_rho = dpartial(blocks[j]["rho"], j)
            first = ScalarField(grid, coeffs.a[j] * dj_rho.physical())
            term = bilinear_antidiv(first, blocks[j]["psi"], pars.N)
            t2sum = term if t2sum is None else t2sum + term
        if t2sum is None:
            t2sum = VectorField.zero(grid)
        pieces["time2"] = (t2sum * (-pars.omega * c1), 1)

        # lin pieces
        acc = np.zeros(grid.shape)
        for j in range(d):
            acc += coeffs.da[j] * blocks[j]["theta"].physical()
        fluct = ScalarField(grid, acc - acc.mean())
        lin_a = apply_Dk(fluct, -1)
        theta0 = self.state.theta(t)
        u0arg = self.u0_arg(t)
        vt = a["vartheta"]
        if not self.state.u_is_zero:
            lin_a = lin_a + VectorField([vt * c for c in u0arg.components])
        if not damped:
            lin_a = lin_a - gradient(vt)
            pieces["lin_q"] = (-gradient(a["q"]) * c2, 0)
        pieces["lin_a"] = (lin_a * c1, 1)
        pieces["lin_w"] = (VectorField([theta0 * c for c in a["w"].components]) * c1, -1)
        if damped:
            # est-224-style compensation: (1/2) D^{-1}[pert] - grad[vartheta+q],
            # split by eta-degree
            pieces["diff_a"] = (
                apply_Dk(ScalarField(grid, vt.physical() + a["vartheta_c"]), -1) * 0.5
                - gradient(vt), 1)
            pieces["diff_q"] = (
                apply_Dk(ScalarField(grid, a["q"].physical() + a["q_c"]), -1) * 0.5
                - gradient(a["q"]), 0)

        # q pieces
        qf = a["q"]
        if not self.state.u_is_zero:
            pieces["q_u"] = (VectorField([qf * c for c in u0arg.components]) * c2, 0)
        pieces["q_w"] = (VectorField([qf * c for c in a["w"].components]) * (c2 * c1), -1)

        # corrector pieces
        carrier = ScalarField(grid, theta0.physical() + c2 * qf.physical())
        if self.variant == "additive":
            carrier = carrier + self.z_at(t)
        pieces["corr_main"] = (
            VectorField([carrier * c for c in a["w_c"].components]) * c1, -1)
        pieces["corr_theta"] = (
            VectorField([vt * c for c in a["w_c"].components]) * (c1 * c1), 0)

        if self.variant == "additive":
            z = self.z_at(t)
            pieces["corr2"] = (VectorField([z * c for c in a["w"].components]), -1)

        # mollification discrepancy
        if MOLLIFIED[self.variant]:
            R0vals, _ = self.state.R_eval.eval(t)
            moll = VectorField.from_arrays(
                grid, [coeffs.Rl[j] - np.asarray(R0vals[j]) for j in range(d)])
            pieces["moll"] = (moll, 0)

        if self.variant == "shifted":
            fac = c2 - 1.0
            pieces["chi_tilde"] = (
                VectorField.from_arrays(grid, [fac * coeffs.Rl[j] for j in range(d)]), 0)
            dc1 = self.tramp.derivative(t)
            dc2 = self.tramp.sq_derivative(t)
            if abs(dc1) + abs(dc2) > 0:
                fluct = ScalarField(grid, dc1 * (vt.physical() + a["vartheta_c"])
                                    + dc2 * (qf.physical() + a["q_c"]))
                pieces["cutoff"] = (apply_Dk(fluct, -1), 0)
            else:
                pieces["cutoff"] = (VectorField.zero(grid), 0)
        return pieces

    def R1(self, t: float) -> VectorField:
        pieces = self.defect_pieces(t)
        r = self.eta_extra
        total = None
        for name, (fieldv, deg) in pieces.items():
            scaled = fieldv if (r == 1.0 or deg == 0) else fieldv * r ** deg
            total = scaled if total is None else total + scaled
        return -total

    def piece_l1_table(self, t: float) -> dict:
        """Per-piece L1 norms (at the assembled eta) with degrees."""
        out = {}
        for name, (fieldv, deg) in self.defect_pieces(t).items():
            out[name] = (lp_norm(fieldv, 1), deg)
        return out

    # -- audits ------------------------------------------------------------------
    def cancellation_audit(self, t: float) -> dict:
        """The two exact internal cancellations the decomposition drops."""
        grid = self.grid
        a = self._assembly(t)
        coeffs, blocks = a["coeffs"], a["blocks"]
        acc = np.zeros(grid.shape)
        scale = 0.0
        for j in range(grid.d):
            TW = VectorField([blocks[j]["theta"] * c for c in blocks[j]["W"].components])
            ident = blocks[j]["dt_Q"] + divergence(TW)
            acc += coeffs.ab[j] * ident.physical()
            scale = max(scale, float(np.abs(coeffs.ab[j] * divergence(TW).physical()).max()))
        osc = float(np.mean(np.abs(acc)))
        osc_rel = osc / (scale or 1.0)
        m1 = 0.0
        m2 = 0.0
        dq_c = 0.0
        for j in range(grid.d):
            Q = blocks[j]["Q"].physical()
            m1 += float(np.mean(coeffs.dab[j] * Q))
            gab_j = dpartial(ScalarField(grid, coeffs.ab[j]), j)
            TW_j = blocks[j]["theta"].physical() * blocks[j]["W"][j].physical()
            m2 += float(np.mean(gab_j.physical() * (TW_j - 1.0)))
            dq_c -= float(np.mean(coeffs.dab[j] * Q + coeffs.ab[j] * blocks[j]["dt_Q"].physical()))
        return {"oscillation_l1": osc, "oscillation_rel": osc_rel,
                "corrector": abs(m1 + m2 + dq_c)}

    def mean_and_div_checks(self, t: float) -> dict:
        th = self.theta1(t)
        u = self.u1(t)
        dv = divergence(u)
        uref = max(lp_norm(u, 2), 1e-30)
        return {
            "theta1_mean": abs(th.mean()),
            "div_u1_rel": lp_norm(dv, 2) / uref,
        }


# -- independent residual route -----------------------------------------------------


def fd_time_derivative(fn, t: float, h: float) -> np.ndarray:
    """4th-order centered five-point stencil of a field-valued map."""
    fm2 = fn(t - 2 * h).physical()
    fm1 = fn(t - h).physical()
    fp1 = fn(t + h).physical()
    fp2 = fn(t + 2 * h).physical()
    return (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h)


def fd_step_size(params: StepParams, profile_ratio: float = 6.0) -> float:
    """Near-optimal stencil width balancing truncation against roundoff."""
    rate = 2.0 * math.pi * params.lam * params.omega * max(params.mu, 1.0) * profile_ratio
    return 1.93e-3 / max(rate, 1.0)


def pde_residual_at(assembler: StepAssembler, t: float, h: float | None = None) -> dict:
    """Evaluate the variant's equation on the assembled step at an interior time.

    This is the independent cross-check: the decomposition-built R1 must make
    the full equation residual vanish up to temporal-stencil noise.
    """
    variant = assembler.variant
    grid = assembler.grid
    if h is None:
        h = fd_step_size(assembler.params)
    dtheta = fd_time_derivative(assembler.theta1, t, h)

    th = assembler.theta1(t)
    u1 = assembler.u1(t)
    if variant in ("transport", "shifted"):
        B = assembler.B_at(t)
        u_arg = translate_vector(u1, -np.asarray(B))
    else:
        u_arg = u1
    flux = divergence(VectorField([th * c for c in u_arg.components]))
    res = dtheta + flux.physical() - laplacian(th).physical()
    if variant == "additive":
        z = assembler.z_at(t)
        res = res + divergence(VectorField([z * c for c in u1.components])).physical()
    if variant == "damped":
        res = res + 0.5 * th.physical()
    if variant == "forced" and assembler.force_fn is not None:
        res = res - assembler.force_fn(t).physical()
    R1 = assembler.R1(t)
    divR = divergence(R1)
    res = res + divR.physical()
    res_f = ScalarField(grid, res)
    denom = lp_norm(divR, 1) or 1.0
    return {
        "t": t,
        "residual_l1": lp_norm(res_f, 1),
        "divR1_l1": denom,
        "relative": lp_norm(res_f, 1) / denom,
        "h": h,
    }


def pde_residual_series(variant: str, theta_slices, u_slices, R_slices, times,
                        z_slices=None, bpath=None, force_slices=None) -> list:
    """Residual time-series from sampled slices with 4th-order differencing.

    This is the series form of the checker (spectral space operators,
    five-point temporal stencil on the stored grid); it needs at least five
    slices and a time spacing fine enough for the stencil.
    """
    times = np.asarray(times, dtype=float)
    nt = len(times)
    if nt < 5:
        raise GridError("residual differencing needs at least 5 time slices")
    dt = times[1] - times[0]
    out = []
    for i in range(2, nt - 2):
        th = theta_slices[i]
        grid = th.grid
        dtheta = (-theta_slices[i + 2].physical() + 8 * theta_slices[i + 1].physical()
                  - 8 * theta_slices[i - 1].physical() + theta_slices[i - 2].physical()) / (12 * dt)
        u1 = u_slices[i]
        if variant in ("transport", "shifted"):
            B = path_value(bpath[0], bpath[1], times[i])
            u_arg = translate_vector(u1, -np.asarray(B))
        else:
            u_arg = u1
        res = dtheta + divergence(VectorField([th * c for c in u_arg.components])).physical()
        res = res - laplacian(th).physical()
        if variant == "additive":
            res = res + divergence(VectorField([z_slices[i] * c for c in u1.components])).physical()
        if variant == "damped":
            res = res + 0.5 * th.physical()
        if variant == "forced" and force_slices is not None:
            res = res - force_slices[i].physical()
        divR = divergence(R_slices[i])
        res = res + divR.physical()
        denom = lp_norm(divR, 1) or 1.0
        out.append({"t": float(times[i]), "residual_l1": lp_norm(ScalarField(grid, res), 1),
                    "divR1_l1": denom, "relative": lp_norm(ScalarField(grid, res), 1) / denom})
    return out


def pairing_functional(theta: ScalarField, u: VectorField, shift=None) -> np.ndarray:
    """Componentwise quadrature of the pairing integral at one time."""
    if shift is not None:
        u = translate_vector(u, -np.asarray(shift, dtype=float))
    th = theta.physical()
    return np.array([float(np.mean(th * c.physical())) for c in u.components])


def chi_mass(assembler: StepAssembler, t: float) -> np.ndarray:
    """Per-direction cutoff mass integral, the drift scale of the pairing."""
    a = assembler._assembly(t)
    return np.array([float(np.mean(a["coeffs"].chi[j] ** 2)) for j in range(assembler.grid.d)])
