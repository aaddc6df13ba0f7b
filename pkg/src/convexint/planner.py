"""Exponent/constraint system solver.

Emits either rigorous parameter certificates (which honestly report the
implied grid size, usually astronomically beyond any budget) or feasible
toy parameters with grid-resolution requirements, plus the iteration
schedule sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict


class InfeasibleError(ValueError):
    pass


def holder_dual(p: float) -> float:
    if p == 1.0:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def _check(report, name, lhs, rhs, strict=True):
    ok = (lhs < rhs) if strict else (lhs <= rhs)
    report.append({"constraint": name, "lhs": lhs, "rhs": rhs, "pass": bool(ok)})
    return ok


def base_feasibility(d: int, p: float, ptilde: float, report=None):
    """The admissibility condition on (p, p~): 1/p + 1/p~ > 1 + 1/d and p' < d."""
    if report is None:
        report = []
    pp = holder_dual(p)
    ok1 = _check(report, "1 + 1/d < 1/p + 1/ptilde", 1.0 + 1.0 / d, 1.0 / p + 1.0 / ptilde)
    ok2 = _check(report, "p' < d", pp, d)
    return ok1 and ok2, report


def epsilon_window(d: int, p: float, ptilde: float):
    """Admissible open interval for the Sobolev-slack exponent."""
    ok, report = base_feasibility(d, p, ptilde)
    if not ok:
        failing = [r["constraint"] for r in report if not r["pass"]]
        raise InfeasibleError(f"admissibility fails: {', '.join(failing)}")
    pp = holder_dual(p)
    hi = min(d / ptilde - d / pp - 1.0, d / pp - 1.0)
    if hi <= 0:
        raise InfeasibleError(f"empty epsilon window: upper endpoint {hi:g} <= 0")
    return (0.0, hi)


def iota_terms(d: int, p: float, alpha: float, gamma: float, beta: float,
               N: int, eps: float) -> dict:
    """The seven admissibility ceilings for the mollification exponent."""
    pp = holder_dual(p)
    b = d / pp
    return {
        "min(1/p,1/p')/(d+2)": min(1.0 / p, 1.0 / pp) / (d + 2),
        "(beta-alpha*b)/(2d+3)": (beta - alpha * b) / (2 * d + 3),
        "(gamma*N/(N+1)-1-alpha)/(d+2)": (gamma * N / (N + 1) - 1.0 - alpha) / (d + 2),
        "(alpha*(1+eps)-gamma)/(d+2)": (alpha * (1.0 + eps) - gamma) / (d + 2),
        "(gamma-1-alpha)/(3d+5)": (gamma - 1.0 - alpha) / (3 * d + 5),
        "1/(3d+5)": 1.0 / (3 * d + 5),
        "(b*alpha+gamma-(beta+1+alpha))/((d+2)N)": (b * alpha + gamma - (beta + 1.0 + alpha))
        / ((d + 2) * N),
    }


def plan_exponents(d: int, p: float, ptilde: float, eps: float):
    """Pick (alpha, gamma, beta, N, iota_max) in the canonical order.

    alpha is the smallest integer above 2/eps whose gamma-window contains an
    integer; gamma is the integer nearest the window midpoint; beta sits at
    the midpoint of its open interval; N is minimal.
    """
    lo, hi = epsilon_window(d, p, ptilde)
    if not (lo < eps < hi):
        raise InfeasibleError(f"eps={eps:g} outside the window (0, {hi:g})")
    pp = holder_dual(p)
    b = d / pp

    alpha = None
    gamma = None
    for cand in range(int(math.floor(2.0 / eps)) + 1, int(math.floor(2.0 / eps)) + 1000):
        if cand <= 2.0 / eps:
            continue
        g_lo, g_hi = cand + 1.0, cand * (1.0 + eps)
        lo_int = int(math.floor(g_lo)) + 1
        hi_int = int(math.ceil(g_hi)) - 1
        if lo_int <= hi_int:
            alpha = float(cand)
            mid = 0.5 * (g_lo + g_hi)
            gamma = min(range(lo_int, hi_int + 1), key=lambda g: (abs(g - mid), g))
            break
    if alpha is None:
        raise InfeasibleError("no integer oscillation exponent fits the gamma window")

    beta_lo = b * alpha
    beta_hi = b * alpha + gamma - (alpha + 1.0)
    if not beta_lo < beta_hi:
        raise InfeasibleError("empty beta interval: gamma window too tight")
    beta = 0.5 * (beta_lo + beta_hi)

    # smallest N with N/(N-1) < gamma/(1+alpha)
    ratio = gamma / (1.0 + alpha)
    if ratio <= 1.0:
        raise InfeasibleError("gamma/(1+alpha) <= 1, no admissible truncation order")
    N = 2
    while N / (N - 1.0) >= ratio:
        N += 1
        if N > 10 ** 6:
            raise InfeasibleError("no admissible truncation order found")

    terms = iota_terms(d, p, alpha, gamma, beta, N, eps)
    iota_max = min(terms.values())
    if iota_max <= 0:
        bad = min(terms, key=terms.get)
        raise InfeasibleError(f"iota ceiling non-positive; binding term {bad}")
    return alpha, gamma, beta, N, iota_max


@dataclass
class ParamSet:
    """The full exponent hierarchy plus concrete (lambda, mu, nu, omega)."""

    d: int
    p: float
    ptilde: float
    eps: float
    alpha: float
    gamma: float
    beta: float
    N: int
    iota: float
    lam: int
    mu: float
    nu: int
    omega: float
    l: float
    mode: str  # "rigorous" | "toy"
    report: list = field(default_factory=list)

    @property
    def pprime(self) -> float:
        return holder_dual(self.p)

    @property
    def a_exp(self) -> float:
        return self.d / self.p

    @property
    def b_exp(self) -> float:
        return self.d / self.pprime

    @property
    def min_grid(self) -> int:
        need = 8.0 * max(self.lam * self.mu, self.nu)
        return int(2 ** math.ceil(math.log2(max(need, 4))))

    def as_dict(self) -> dict:
        return asdict(self)


def verify_paramset(ps: ParamSet) -> list:
    """Independent re-evaluation of every inequality a parameter set claims."""
    report = []
    base_feasibility(ps.d, ps.p, ps.ptilde, report)
    lo, hi = 0.0, min(ps.d / ps.ptilde - ps.d / ps.pprime - 1.0, ps.d / ps.pprime - 1.0)
    _check(report, "0 < eps", 0.0, ps.eps)
    _check(report, "eps < window", ps.eps, hi)
    _check(report, "alpha > 2/eps", 2.0 / ps.eps, ps.alpha)
    _check(report, "alpha+1 < gamma", ps.alpha + 1.0, ps.gamma)
    _check(report, "gamma < alpha(1+eps)", ps.gamma, ps.alpha * (1.0 + ps.eps))
    b = ps.b_exp
    _check(report, "b*alpha < beta", b * ps.alpha, ps.beta)
    _check(report, "beta < b*alpha+gamma-(alpha+1)", ps.beta,
           b * ps.alpha + ps.gamma - (ps.alpha + 1.0))
    _check(report, "N/(N-1) < gamma/(1+alpha)", ps.N / (ps.N - 1.0),
           ps.gamma / (1.0 + ps.alpha))
    _check(report, "eps+1 < b", ps.eps + 1.0, b)
    _check(report, "gamma < b*alpha", ps.gamma, b * ps.alpha)
    for name, ceil in iota_terms(ps.d, ps.p, ps.alpha, ps.gamma, ps.beta, ps.N, ps.eps).items():
        _check(report, f"iota < {name}", ps.iota, ceil)
    _check(report, "nu in lam*N", ps.nu % ps.lam, 0.5)  # integer multiple
    return report


def rigorous_params(d: int, p: float, ptilde: float, eps: float | None = None,
                    lam: int = 2, grid_budget: int | None = None) -> ParamSet:
    """Certificate-grade parameters; never pretends to be grid-realizable."""
    if eps is None:
        lo, hi = epsilon_window(d, p, ptilde)
        eps = 0.8 * hi
    alpha, gamma, beta, N, iota_max = plan_exponents(d, p, ptilde, eps)
    iota = 0.5 * iota_max
    mu = float(lam) ** alpha
    nu_raw = float(lam) ** gamma
    nu = lam * max(1, round(nu_raw / lam))
    omega = float(lam) ** beta
    l = float(lam) ** (-iota)
    ps = ParamSet(d=d, p=p, ptilde=ptilde, eps=eps, alpha=alpha, gamma=gamma,
                  beta=beta, N=N, iota=iota, lam=lam, mu=mu, nu=int(nu),
                  omega=omega, l=l, mode="rigorous")
    ps.report = verify_paramset(ps)
    if grid_budget is not None and ps.min_grid > grid_budget:
        ps.report.append({
            "constraint": "grid budget", "lhs": ps.min_grid, "rhs": grid_budget,
            "pass": False,
            "note": "rigorous parameters exceed the grid budget; execution infeasible",
        })
    return ps


def toy_params(d: int, p: float, ptilde: float, n: int, lam: int = 2,
               eps: float | None = None) -> ParamSet:
    """Smallest concrete power-of-two block parameters fitting the grid budget.

    Caps: mu in {2 lam, 4 lam} (largest that fits), nu = lam*mu (in lam*N
    automatically), lam*mu <= n/8, nu <= n/8; omega is the power of two
    nearest mu^b.  Rigorous-mode constraints are evaluated and reported
    without blocking.
    """
    if n < 4 or (n & (n - 1)) != 0:
        raise InfeasibleError("grid budget must be a power of two >= 4")
    budget = n // 8
    mu = None
    for cand in (4 * lam, 2 * lam):
        if lam * cand <= budget and lam * cand <= budget:
            mu = cand
            break
    if mu is None:
        raise InfeasibleError(
            f"grid budget n={n} too small: need lam*mu <= n/8 with mu >= 2*lam"
        )
    nu = lam * mu
    if nu > budget:
        raise InfeasibleError(f"grid budget n={n} cannot hold the oscillation nu={nu}")
    pp = holder_dual(p)
    b = d / pp
    omega = 2.0 ** max(1, round(b * math.log2(mu)))
    try:
        lo, hi = epsilon_window(d, p, ptilde)
        eps_val = eps if eps is not None else 0.8 * hi
    except InfeasibleError:
        eps_val = eps if eps is not None else 0.0
    # exponents implied by the concrete toy values (for the report only)
    alpha = math.log2(mu) / math.log2(lam) if lam > 1 else float("nan")
    gamma = math.log2(nu) / math.log2(lam) if lam > 1 else float("nan")
    beta = math.log2(omega) / math.log2(lam) if lam > 1 else float("nan")
    ps = ParamSet(d=d, p=p, ptilde=ptilde, eps=eps_val, alpha=alpha, gamma=gamma,
                  beta=beta, N=3, iota=0.0, lam=lam, mu=float(mu), nu=int(nu),
                  omega=omega, l=0.0, mode="toy")
    ps.report = verify_paramset(ps)
    ps.report.append({"constraint": "n >= 8*max(lam*mu, nu)",
                      "lhs": 8 * max(lam * mu, nu), "rhs": n, "pass": True})
    return ps


def toy_ladder(d: int, p: float, ptilde: float, n: int, steps: int = 3,
               lam0: int = 2) -> list:
    """Per-step parameter sets with doubling oscillation under one grid budget.

    When the concentration floor mu >= 2*lam no longer fits, mu falls back to
    the largest power of two keeping lam*mu within budget (flagged in the
    report) so the ladder can keep doubling.
    """
    budget = n // 8
    out = []
    for k in range(steps):
        lam = lam0 * 2 ** k
        try:
            ps = toy_params(d, p, ptilde, n, lam=lam)
        except InfeasibleError:
            mu = budget // lam
            mu = 2 ** int(math.floor(math.log2(mu))) if mu >= 1 else 0
            if mu < 1:
                raise InfeasibleError(
                    f"ladder rung lam={lam} does not fit grid budget n={n}"
                )
            nu = lam * mu if lam * mu <= budget else lam * (budget // lam)
            pp = holder_dual(p)
            b = d / pp
            omega = 2.0 ** max(1, round(b * math.log2(max(mu, 2))))
            ps = ParamSet(d=d, p=p, ptilde=ptilde, eps=0.0, alpha=float("nan"),
                          gamma=float("nan"), beta=float("nan"), N=3, iota=0.0,
                          lam=lam, mu=float(mu), nu=int(nu), omega=omega, l=0.0,
                          mode="toy")
            ps.report = [{"constraint": "mu >= 2*lam", "lhs": 2 * lam, "rhs": mu,
                          "pass": False,
                          "note": "concentration floor relaxed to fit the budget"}]
        out.append(ps)
    return out


@dataclass
class Schedule:
    """Step sequences for the iteration."""

    delta0: float
    sigma: float
    target: float
    variant: str
    depth: int
    deltas: list = field(default_factory=list)
    etas: list = field(default_factory=list)
    sigmas_t: list = field(default_factory=list)  # shifted: ramp times
    gammas: list = field(default_factory=list)    # shifted: drifts

    def margin(self, p: float, M: float) -> float:
        """target minus the geometric series controlled by sigma."""
        s = sum(math.sqrt(self.delta0) * 2.0 ** (-(n - 1) / 2.0) for n in range(200))
        return self.target - self.sigma * 4.0 * (p + 1.0) ** (1.0 / p) * M * s


def schedule(delta: float, p: float, M: float, target: float = 1.0,
             variant: str = "additive", depth: int = 8, xi: float = 0.5,
             K: float = 4.0) -> Schedule:
    """The halving schedule; shifted variant also emits ramp times and drifts."""
    if delta <= 0:
        raise InfeasibleError("delta must be positive")
    if variant == "shifted":
        sch = Schedule(delta0=delta, sigma=0.0, target=target, variant=variant, depth=depth)
        for nstep in range(depth):
            dn = delta * 2.0 ** (-nstep)
            sch.deltas.append(dn)
            sch.sigmas_t.append((xi / 4.0) * 2.0 ** (-nstep))
            sch.gammas.append(K if nstep == 3 else 2.0 * dn)
            sch.etas.append(1.0)
        return sch
    series = sum(math.sqrt(delta) * 2.0 ** (-(n - 1) / 2.0) for n in range(200))
    sigma = 0.9 * target / (4.0 * (p + 1.0) ** (1.0 / p) * M * series)
    sch = Schedule(delta0=delta, sigma=sigma, target=target, variant=variant, depth=depth)
    for nstep in range(depth):
        dn = delta * 2.0 ** (-(nstep - 1))
        sch.deltas.append(dn)
        sch.etas.append(sigma * dn ** (0.5 - 1.0 / p))
    return sch
