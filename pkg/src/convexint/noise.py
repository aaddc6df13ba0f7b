"""Simulated noise environments: trace-class Wiener process and heat field,
stopping time, Brownian paths, the exponential and shift transforms, the
gluing construction, and the classical L^p bounds used as oracles.
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
    translate,
    translate_vector,
    sobolev_hdot_norm,
    lp_norm,
    gradient,
    random_trig_polynomial,
    _inv,
)


TWO_PI_SQ = (2.0 * math.pi) ** 2


def _half_space_modes(d: int, kmax: int):
    """Canonical half-lattice enumeration of nonzero integer modes, sorted by
    |k| then lexicographically; each carries a cosine and a sine eigenfunction."""
    modes = []
    rng = range(-kmax, kmax + 1)
    import itertools

    for k in itertools.product(rng, repeat=d):
        if all(v == 0 for v in k):
            continue
        # pick one representative of each +-k pair
        lead = next(v for v in k if v != 0)
        if lead < 0:
            continue
        modes.append(tuple(k))
    modes.sort(key=lambda k: (sum(v * v for v in k), k))
    return modes


@dataclass
class NoiseSpec:
    """Trace-class spectrum over the canonical mode enumeration.

    The default decay eta_j = j^{-(d + 4 + 2 varsigma)} keeps the weighted
    trace finite with margin.
    """

    kind: str = "additive"  # additive | multiplicative | transport
    d: int = 3
    n_modes: int = 20
    varsigma: float = 0.1
    decay: float | None = None
    seed: int = 0
    kmax: int = 4

    def __post_init__(self):
        if self.decay is None:
            self.decay = float(self.d + 4 + 2 * self.varsigma)
        base = _half_space_modes(self.d, self.kmax)
        pairs = []
        for j, k in enumerate(base):
            if 2 * j >= self.n_modes:
                break
            pairs.append((k, "cos"))
            pairs.append((k, "sin"))
        self.modes = pairs[: self.n_modes]
        self.etas = np.array([(j + 1.0) ** (-self.decay) for j in range(len(self.modes))])

    def ksq(self, j: int) -> float:
        k = self.modes[j][0]
        return TWO_PI_SQ * sum(v * v for v in k)

    def trace(self, sobolev_order: float = 0.0) -> float:
        """Partial-sum bound for Tr((-Lap)^s G G*)."""
        tot = 0.0
        for j, eta in enumerate(self.etas):
            tot += eta * self.ksq(j) ** sobolev_order
        return tot

    def trace_condition(self) -> float:
        return self.trace(self.d / 2.0 + 2.0 * self.varsigma)

    def mode_rngs(self):
        return [
            np.random.default_rng(np.random.SeedSequence(entropy=self.seed, spawn_key=(j,)))
            for j in range(len(self.modes))
        ]


def _mode_field_spectral(grid: GridSpec, k, flavor: str) -> np.ndarray:
    """rfftn coefficients of the unit-L2 eigenfunction sqrt(2)cos/sin(2 pi k.x)."""
    spec = np.zeros(grid.spectral_shape, dtype=complex)
    n = grid.n
    kk = list(k)
    # ensure the representative falls in the rfftn half-space (last index >= 0)
    if kk[-1] < 0 or (kk[-1] == 0 and any(v < 0 for v in kk)):
        kk = [-v for v in kk]
        conj = True
    else:
        conj = False
    idx = tuple([v % n for v in kk[:-1]] + [kk[-1]])
    amp = math.sqrt(2.0) / 2.0
    if flavor == "cos":
        spec[idx] = amp
    else:
        spec[idx] = -1j * amp if not conj else 1j * amp
    return spec


@dataclass
class NoiseEnv:
    """One simulated environment: heat-field slices, coefficients, path data."""

    spec: NoiseSpec
    grid: GridSpec
    times: np.ndarray
    z_slices: list            # ScalarField per slice
    coeffs: np.ndarray        # (nt, n_modes) OU coefficients
    T_L: float | None = None
    L: float | None = None
    sobolev_constant: float | None = None
    varpi: float = 0.1
    triggers: dict = field(default_factory=dict)

    def z_at_slice(self, i: int) -> ScalarField:
        return self.z_slices[i]


def simulate_heat_field(spec: NoiseSpec, grid: GridSpec, T: float, nt: int) -> NoiseEnv:
    """Exact per-mode Ornstein-Uhlenbeck sampling of dz = Lap z dt + dB, z(0)=0.

    Each Fourier-mode coefficient follows the stationary-consistent update
    c(t+dt) = e^{-|2 pi k|^2 dt} c(t) + N(0, eta (1 - e^{-2|2 pi k|^2 dt}) / (2|2 pi k|^2)).
    """
    times = np.linspace(0.0, T, nt)
    dt = times[1] - times[0] if nt > 1 else T
    rngs = spec.mode_rngs()
    nmodes = len(spec.modes)
    coeffs = np.zeros((nt, nmodes))
    for j in range(nmodes):
        ks = spec.ksq(j)
        decay = math.exp(-ks * dt)
        var = spec.etas[j] * (1.0 - math.exp(-2.0 * ks * dt)) / (2.0 * ks)
        sd = math.sqrt(var)
        c = 0.0
        for it in range(1, nt):
            c = decay * c + sd * rngs[j].standard_normal()
            coeffs[it, j] = c
    # materialize slices spectrally
    mode_specs = [
        _mode_field_spectral(grid, k, flavor) for (k, flavor) in spec.modes
    ]
    z_slices = []
    for it in range(nt):
        acc = np.zeros(grid.spectral_shape, dtype=complex)
        for j in range(nmodes):
            if coeffs[it, j] != 0.0:
                acc += coeffs[it, j] * mode_specs[j]
        z_slices.append(ScalarField(grid, _inv(acc, grid.shape)))
    return NoiseEnv(spec=spec, grid=grid, times=times, z_slices=z_slices, coeffs=coeffs)


def ou_variance(eta: float, ksq: float, t: float) -> float:
    """Closed-form variance of the heat-mode coefficient at time t."""
    return eta * (1.0 - math.exp(-2.0 * ksq * t)) / (2.0 * ksq)


def estimate_sobolev_constant(grid: GridSpec, s: float, trials: int = 24,
                              band: int | None = None, seed: int = 7,
                              safety: float = 1.2) -> float:
    """Empirical embedding constant, logged not proved.

    Takes the max of |f|_inf / |f|_{H^s} and (|f|_inf + |grad f|_inf) / |f|_{H^{s+1}}
    over random band-limited mean-zero fields, so the stopping-time triggers
    control the sup, Lipschitz, and Hoelder bounds simultaneously.
    """
    rng = np.random.default_rng(seed)
    band = band or max(2, grid.n // 8)
    best = 0.0
    for _ in range(trials):
        f = random_trig_polynomial(grid, band, rng)
        hs = sobolev_hdot_norm(f, s)
        hs1 = sobolev_hdot_norm(f, s + 1.0)
        if hs == 0 or hs1 == 0:
            continue
        sup = lp_norm(f, math.inf)
        w1 = sup + lp_norm(gradient(f), math.inf)
        best = max(best, sup / hs, w1 / hs1)
    return safety * best


def stopping_time(env: NoiseEnv, L: float, varpi: float = 0.1,
                  sobolev_constant: float | None = None) -> float:
    """First time a Sobolev or Hoelder trigger fires, capped at L."""
    spec = env.spec
    grid = env.grid
    s_hi = (grid.d + 2.0 + spec.varsigma) / 2.0
    s_lo = (grid.d + spec.varsigma) / 2.0
    if sobolev_constant is None:
        sobolev_constant = estimate_sobolev_constant(grid, s_lo)
    beta = 0.5 - 2.0 * varpi
    hi_thresh = L ** 0.25
    ho_thresh = L ** 0.5
    hi_norms = [sobolev_hdot_norm(z, s_hi) for z in env.z_slices]
    fired = None
    for i, t in enumerate(env.times):
        if t >= L:
            fired = ("cap", L)
            break
        if sobolev_constant * hi_norms[i] >= hi_thresh:
            fired = ("sobolev", float(t))
            break
        # incremental Hoelder seminorm against all earlier slices
        quot = 0.0
        for jj in range(i):
            dtau = env.times[i] - env.times[jj]
            diff = sobolev_hdot_norm(
                ScalarField(grid, env.z_slices[i].physical() - env.z_slices[jj].physical()),
                s_lo,
            )
            quot = max(quot, diff / dtau ** beta)
        if sobolev_constant * quot >= ho_thresh:
            fired = ("holder", float(t))
            break
    if fired is None:
        # no trigger on the sampled horizon: only the cap remains
        fired = ("cap", L)
    trig = fired
    T_L = min(fired[1], L)
    env.T_L = T_L
    env.L = L
    env.varpi = varpi
    env.sobolev_constant = sobolev_constant
    env.triggers = {"kind": trig[0], "time": trig[1]}
    return T_L


def assert_stopped_bounds(env: NoiseEnv) -> dict:
    """Re-assert the sup/Lipschitz/Hoelder bounds strictly before T_L.

    The discrete trigger slice itself may overshoot (the continuum stopping
    time sits between samples), so it is excluded unless only the cap fired.
    """
    L, varpi = env.L, env.varpi
    beta = 0.5 - 2.0 * varpi
    cutoff = env.T_L + 1e-12 if env.triggers.get("kind") == "cap" else env.T_L - 1e-12
    inside = [i for i, t in enumerate(env.times) if t <= cutoff]
    if not inside:
        inside = [0]
    sup = max(lp_norm(env.z_slices[i], math.inf) for i in inside)
    w1 = max(
        lp_norm(env.z_slices[i], math.inf) + lp_norm(gradient(env.z_slices[i]), math.inf)
        for i in inside
    )
    holder = 0.0
    for ii in range(len(inside)):
        for jj in range(ii):
            i, j = inside[ii], inside[jj]
            dtau = env.times[i] - env.times[j]
            if dtau <= 0:
                continue
            diff = lp_norm(
                ScalarField(env.grid, env.z_slices[i].physical() - env.z_slices[j].physical()),
                math.inf,
            )
            holder = max(holder, diff / dtau ** beta)
    return {
        "sup": sup, "sup_bound": L ** 0.25, "sup_ok": sup <= L ** 0.25,
        "w1inf": w1, "w1_bound": L ** 0.25, "w1_ok": w1 <= L ** 0.25,
        "holder": holder, "holder_bound": L ** 0.5, "holder_ok": holder <= L ** 0.5,
    }


# -- Brownian paths and pathwise transforms ---------------------------------------


def brownian_path(dim: int, dt: float, T: float, seed: int = 0) -> tuple:
    """Standard Brownian path sampled on a uniform grid; returns (times, B)."""
    if dt <= 0:
        raise GridError("dt must be positive")
    nsteps = int(round(T / dt))
    times = np.arange(nsteps + 1) * dt
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(10_001,)))
    inc = rng.standard_normal((nsteps, dim)) * math.sqrt(dt)
    B = np.vstack([np.zeros((1, dim)), np.cumsum(inc, axis=0)])
    if dim == 1:
        return times, B[:, 0]
    return times, B


def path_value(times: np.ndarray, B: np.ndarray, t: float):
    """Linear interpolation of the sampled path."""
    if B.ndim == 1:
        return float(np.interp(t, times, B))
    return np.array([np.interp(t, times, B[:, c]) for c in range(B.shape[1])])


def transport_transform(field, shift, inverse: bool = False):
    """theta(t,x) = rho(t, x + B(t)): spectral translation by -B (or +B back)."""
    y = -np.asarray(shift, dtype=float)
    if inverse:
        y = -y
    if isinstance(field, VectorField):
        return translate_vector(field, y)
    return translate(field, y)


def multiplicative_transform(field, b_val: float, inverse: bool = False):
    """theta = rho e^{-B}: scalar factor per slice."""
    factor = math.exp(b_val if inverse else -b_val)
    return field * factor


# -- gluing -------------------------------------------------------------------------


def glue(rho_slices, times, env: NoiseEnv, T: float, nt_tail: int | None = None):
    """Continue the additive-noise solution past T_L by the exact heat flow
    with the increment noise, with zero vector field.

    Returns (times_out, rho_out_slices, u_is_zero_mask).
    """
    T_L = env.T_L if env.T_L is not None else times[-1]
    if T_L >= T:
        return np.asarray(times), list(rho_slices), [False] * len(rho_slices)
    grid = env.grid
    i_seam = int(np.argmin(np.abs(np.asarray(times) - T_L)))
    seam_time = times[i_seam]
    head_times = list(times[: i_seam + 1])
    head = list(rho_slices[: i_seam + 1])

    nt_tail = nt_tail or max(3, len(times) - i_seam)
    tail_times = np.linspace(seam_time, T, nt_tail)
    dt = tail_times[1] - tail_times[0]

    # spectral initial value and mode bookkeeping
    cur = rho_slices[i_seam].spectral().copy()
    spec = env.spec
    rngs = spec.mode_rngs()
    # advance each mode generator past the increments already consumed
    consumed = len(env.times) - 1
    for r in rngs:
        r.standard_normal(consumed)
    mode_specs = [_mode_field_spectral(grid, k, f) for (k, f) in spec.modes]
    from .fields import _ksq

    ks = _ksq(grid.d, grid.n)
    tail = [ScalarField(grid, _inv(cur.copy(), grid.shape))]
    for _ in range(1, nt_tail):
        cur = cur * np.exp(-ks * dt)
        for j in range(len(spec.modes)):
            kk = spec.ksq(j)
            sd = math.sqrt(ou_variance(spec.etas[j], kk, dt))
            cur += sd * rngs[j].standard_normal() * mode_specs[j]
        tail.append(ScalarField(grid, _inv(cur.copy(), grid.shape)))
    out_times = np.concatenate([head_times, tail_times[1:]])
    out = head + tail[1:]
    zero_mask = [False] * len(head) + [True] * (len(tail) - 1)
    return out_times, out, zero_mask


# -- classical L^p bounds -------------------------------------------------------------


def c_constant(p: float, trace_weighted: float, cs1: float) -> float:
    """The Lp Ito-bound constant (2/p)((p-2)/p)^{(p-2)/2} [p(p-2)/2 * C_S^1 * Tr]^{p/2}."""
    if not p > 2:
        raise GridError("the constant is defined for p > 2")
    return (2.0 / p) * ((p - 2.0) / p) ** ((p - 2.0) / 2.0) * (
        0.5 * p * (p - 2.0) * cs1 * trace_weighted
    ) ** (p / 2.0)


def classical_bound(p: float, *, rho_in_norm: float = 0.0, T: float = 1.0,
                    trace: float | None = None, trace_weighted: float | None = None,
                    cs1: float | None = None, L: float | None = None,
                    int_u_lp: float | None = None, int_f_lp: float | None = None,
                    K: float = 1.0, forced: bool = False) -> float:
    """The applicable classical inequality's right-hand side.

    Branches: p in (1,2) uses the stopped pathwise bound, p = 2 the energy
    identity, p in (2, inf) the Ito Lp bound; the deterministic forced case
    uses the a-priori transport bound.
    """
    if forced:
        if int_f_lp is None:
            raise GridError("forced branch needs the time-integrated force norm")
        return K * (rho_in_norm + int_f_lp)
    if p == 2.0:
        if trace is None:
            raise GridError("p = 2 branch needs Tr(GG*)")
        return K * (rho_in_norm + math.sqrt(T * trace))
    if 1.0 < p < 2.0:
        if L is None or int_u_lp is None:
            raise GridError("p in (1,2) branch needs L and the integrated velocity norm")
        return K * (rho_in_norm + L ** 0.25 * (int_u_lp + 1.0))
    if p > 2.0:
        if trace_weighted is None or cs1 is None:
            raise GridError("p > 2 branch needs the weighted trace and C_S^1")
        return K * math.exp(T / p) * (
            rho_in_norm + c_constant(p, trace_weighted, cs1) ** (1.0 / p)
        )
    raise GridError(f"no classical branch for p = {p}")
