"""Named experiments.

Each experiment turns a validated ``ExperimentConfig`` into an
``ExperimentResult``: a list of asserted bounds (``BoundCheck``) and tidy
tables for plotting. The CLI writes these to disk; the acceptance suite
calls the same functions and inspects the checks directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import bisect

from . import hierarchy as H
from .config import ExperimentConfig
from .config_space import (
    Configuration,
    GridFunctionFamily,
    k_inverse,
    k_transform,
    level_norms_kc,
    lp_integral,
    minlos_identity_residual,
    norm_kc,
    norm_lc,
)
from .glauber_sim import chaos_factorization_gap, estimate_correlations, simulate_ensemble
from .grid import Grid
from .potential import Potential, compute_constants
from .vlasov import (
    DensityField,
    picard_contraction_factor,
    solve_kirkwood_monroe,
    solve_vlasov,
    verify_apriori_bounds,
)


# result containers

_RELATIONS = {
    "le": lambda m, b, tol: m <= b + tol,
    "lt": lambda m, b, tol: m < b,
    "ge": lambda m, b, tol: m >= b - tol,
    "abs": lambda m, b, tol: abs(m - b) <= tol,
}


@dataclass
class BoundCheck:
    """One asserted bound.

    ``relation`` is ``le`` (measured <= bound + tolerance), ``lt`` (strict
    decrease, measured < bound), ``ge`` (measured >= bound - tolerance) or
    ``abs`` (|measured - bound| <= tolerance, used for slopes and ratios).
    ``claim`` states in plain words what is being checked.
    """

    name: str
    claim: str
    measured: float
    bound: float
    tolerance: float = 0.0
    relation: str = "le"
    norm_name: str = ""
    delta: float | None = None
    eps: float | None = None
    t: float | None = None
    passed: bool = field(init=False)

    def __post_init__(self):
        self.measured = float(self.measured)
        self.bound = float(self.bound)
        self.tolerance = float(self.tolerance)
        ok = _RELATIONS[self.relation](self.measured, self.bound, self.tolerance)
        self.passed = bool(ok and math.isfinite(self.measured))

    def summary_entry(self) -> dict:
        return {
            "bound_name": self.name,
            "paper_ref": self.claim,
            "measured": self.measured,
            "bound": self.bound,
            "tolerance": self.tolerance,
            "relation": self.relation,
            "delta": self.delta,
            "eps": self.eps,
            "t": self.t,
            "pass": self.passed,
        }

    def csv_row(self, experiment: str) -> tuple:
        opt = lambda v: "" if v is None else v
        return (experiment, opt(self.delta), opt(self.eps), opt(self.t), self.norm_name or self.name,
                self.measured, self.bound, self.tolerance, self.passed)


BOUND_COLUMNS = ("experiment", "delta", "eps", "t", "norm_name", "measured", "paper_bound", "tolerance", "pass")


@dataclass
class Table:
    columns: tuple
    rows: list = field(default_factory=list)

    def add(self, *row):
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} values, table has {len(self.columns)} columns")
        self.rows.append(tuple(row))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w") as fh:
            fh.write(",".join(self.columns) + "\n")
            for r in self.rows:
                fh.write(",".join(_fmt(v) for v in r) + "\n")
        return path


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass
class ExperimentResult:
    experiment: str
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list:
        return [c for c in self.checks if not c.passed]

    def extend(self, other: "ExperimentResult"):
        self.checks += other.checks
        self.tables.update(other.tables)
        self.info.update(other.info)
        return self


# shared setup

@dataclass(frozen=True)
class Desk:
    """Grid, potential, constants and regime derived once from a config."""

    cfg: ExperimentConfig
    grid: Grid
    p: Potential
    beta: float
    phi_bar: float
    reg: H.ScalingRegime

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "Desk":
        grid = cfg.grid()
        p = cfg.potential_obj()
        consts = compute_constants(p, grid)
        return cls(cfg, grid, p, consts.beta, consts.phi_bar, cfg.regime_obj(grid))

    @property
    def n_max(self) -> int:
        return self.cfg.truncation.n_max

    @property
    def c(self) -> float:
        return self.reg.c

    def rng(self, tag: int) -> np.random.Generator:
        return np.random.default_rng([self.cfg.simulation.seed, tag])

    def profile(self, opts: dict | None = None, grid: Grid | None = None) -> DensityField:
        o = self.cfg.options if opts is None else opts
        grid = grid or self.grid
        L = grid.box_length
        mean, mod, mode = o["rho0_mean"], o["rho0_modulation"], o["rho0_mode"]
        return DensityField.from_function(lambda x: mean * (1 + mod * np.cos(2 * np.pi * mode * x / L)), grid)


def derive_seed(seed: int, tag: int) -> int:
    """Independent integer seed for sub-experiment ``tag``."""
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


def random_observable(rng, grid: Grid, n_max: int, level_norms, c: float) -> GridFunctionFamily:
    """Random smooth G whose level contributions to ||G||_C are ``level_norms``."""
    return GridFunctionFamily.random(rng, grid, n_max, list(level_norms)[: n_max + 1], c=c)


def random_correlation(rng, grid: Grid, n_max: int, scale: float) -> GridFunctionFamily:
    """Random smooth k with sup |k^(n)| = scale^n on every level, so ||k||_{K_scale} = 1."""
    k = GridFunctionFamily.random(rng, grid, n_max)
    return k.map_levels(lambda n, a: a * scale ** n / np.max(np.abs(a)))


def _slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def _parts(cfg: ExperimentConfig, parts):
    chosen = cfg.options.get("parts", []) if parts is None else list(parts)
    return set(chosen)


# lp_calculus_suite

def run_lp_calculus(cfg: ExperimentConfig, parts=None) -> ExperimentResult:
    """Lebesgue-Poisson exponent integrals, K / K^-1 roundtrips and the Minlos identity."""
    o, tol = cfg.options, cfg.tolerances
    res = ExperimentResult("lp_calculus_suite")
    L = cfg.domain.box_length

    grid = cfg.grid(o["lp_grid_points"])
    n_lp = o["lp_n_max"]
    tab = Table(("mass", "lp_integral", "exact", "error", "tail"))
    worst = 0.0
    for mass in o["lp_masses"]:
        f = lambda x, m=mass: m / L * (1 + 0.5 * np.cos(2 * np.pi * x / L))
        exact = math.exp(quad(f, 0.0, L, epsabs=1e-13, epsrel=1e-13, limit=200)[0])
        val = lp_integral(GridFunctionFamily.lp_exponent(f, grid, n_lp))
        err = abs(val - exact)
        tail = mass ** (n_lp + 1) / math.factorial(n_lp + 1) * math.exp(mass)
        tab.add(mass, val, exact, err, tail)
        worst = max(worst, err)
        res.checks.append(BoundCheck(
            "lp_integral", f"LP integral of e_lambda(f) equals exp(int f) at n_max={n_lp}",
            err, tol["lp_integral"], norm_name=f"lp_integral(mass={mass})"))
    res.tables["lp_integral"] = tab
    res.info["lp_worst_error"] = worst

    rng = np.random.default_rng([cfg.simulation.seed, 11])
    rt = 0.0
    for size in range(o["roundtrip_max_points"] + 1):
        gamma = Configuration(np.sort(rng.uniform(0, L, size)), L)
        values = {eta: rng.normal() for eta in gamma.subsets()}
        G = values.__getitem__
        KG = {eta: k_transform(G, eta) for eta in gamma.subsets()}
        back = max((abs(k_inverse(KG.__getitem__, eta) - values[eta]) for eta in gamma.subsets()), default=0.0)
        Kinv = {eta: k_inverse(G, eta) for eta in gamma.subsets()}
        fwd = max((abs(k_transform(Kinv.__getitem__, eta) - values[eta]) for eta in gamma.subsets()), default=0.0)
        rt = max(rt, back, fwd)
    res.checks.append(BoundCheck(
        "k_roundtrip", f"K and K^-1 invert each other on all subsets of |gamma| <= {o['roundtrip_max_points']}",
        rt, tol["roundtrip"], norm_name="k_roundtrip"))

    mgrid = cfg.grid(o["minlos_grid_points"])
    a, b, nm = o["minlos_a"], o["minlos_b"], o["minlos_n_max"]
    Hf = lambda xi, eta, zeta: a ** xi.shape[1] * b ** eta.shape[1] * np.ones(xi.shape[0])
    resid = minlos_identity_residual(Hf, mgrid, nm)
    x = (a + b) * L
    bound = math.exp(x) - sum(x ** n / math.factorial(n) for n in range(nm + 1))
    res.checks.append(BoundCheck(
        "minlos_residual", "Minlos identity residual stays below the exponential truncation tail",
        resid, bound, norm_name="minlos_residual"))
    res.info["minlos"] = {"residual": resid, "tail_bound": bound}
    return res


# operator_bounds

def run_operator_bounds(cfg: ExperimentConfig, parts=None) -> ExperimentResult:
    chosen = _parts(cfg, parts)
    res = ExperimentResult("operator_bounds")
    if "contraction" in chosen:
        res.extend(contraction_checks(cfg))
    if "generator" in chosen:
        res.extend(generator_checks(cfg))
    return res


def contraction_checks(cfg: ExperimentConfig) -> ExperimentResult:
    """||Q_delta G||_C and ||P_{delta,eps} G||_C against ||G||_C plus the omega-truncation tail."""
    d = Desk.from_config(cfg)
    o, tol = cfg.options, cfg.tolerances
    om = cfg.truncation.omega_max
    res = ExperimentResult("operator_bounds")
    tab = Table(("sample", "operator", "delta", "eps", "norm_in", "norm_out", "ratio", "tail"))
    rng = d.rng(21)
    samples = [random_observable(rng, d.grid, d.n_max, o["level_norms"], d.c) for _ in range(o["n_random"])]
    norms = [norm_lc(G, d.c) for G in samples]
    for delta in cfg.sweeps.delta:
        tails = [H.primal_truncation_tail(G, d.reg, om, delta) for G in samples]
        ops = [("Q", None, lambda G: H.apply_q_delta(G, d.reg, d.p, om, delta))]
        ops += [("P", e, lambda G, e=e: H.apply_p_delta_eps(G, d.reg.with_(eps=e), d.p, om, delta))
                for e in cfg.sweeps.eps]
        for label, eps, op in ops:
            excess = -math.inf
            for i, G in enumerate(samples):
                out = norm_lc(op(G), d.c)
                tab.add(i, label, delta, "" if eps is None else eps, norms[i], out, out / norms[i], tails[i])
                excess = max(excess, (out - tails[i]) / norms[i])
            opname = "Q_delta" if label == "Q" else "P_delta_eps"
            res.checks.append(BoundCheck(
                f"contraction_{opname}", f"{opname} is a contraction in L_C up to the omega-truncation tail",
                excess, 1.0, norm_name=f"{opname}: max (||out||_C - tau)/||G||_C", delta=delta, eps=eps))
        rel = max(t / n for t, n in zip(tails, norms))
        res.checks.append(BoundCheck(
            "truncation_tail", f"omega-truncation tail at omega_max={om} is small relative to ||G||_C",
            rel, tol["trunc_rel"], norm_name="tau_trunc/||G||_C", delta=delta))
    res.tables["contraction"] = tab
    return res


def generator_checks(cfg: ExperimentConfig) -> ExperimentResult:
    """(Q_delta - 1)G/delta - L_V G (and the P / L_ren pair) against 3 delta ||G||_{2C}."""
    d = Desk.from_config(cfg)
    o, tol = cfg.options, cfg.tolerances
    om = cfg.truncation.omega_max
    res = ExperimentResult("operator_bounds")
    tab = Table(("sample", "which", "delta", "residual", "bound", "tail"))
    rng = d.rng(22)
    deltas = list(o["generator_delta"])
    lo, hi = tol["ratio_low"], tol["ratio_high"]
    for i in range(o["generator_samples"]):
        G = random_observable(rng, d.grid, d.n_max, o["level_norms"], d.c)
        n2c = norm_lc(G, 2 * d.c)
        for which in ("V", "ren"):
            resid = []
            for delta in deltas:
                reg = d.reg.with_(delta=delta, eps=o["generator_eps"])
                r = H.generator_approximation_residual(G, reg, d.p, which, om)
                tail = H.primal_truncation_tail(G, reg, om, delta) / delta
                bound = 3 * delta * n2c
                tab.add(i, which, delta, r, bound, tail)
                resid.append(r)
                res.checks.append(BoundCheck(
                    f"generator_residual_{which}", "generator residual is at most 3 delta ||G||_{2C}",
                    r, bound, tail, norm_name=f"residual_{which}", delta=delta,
                    eps=o["generator_eps"] if which == "ren" else None))
            for k in range(1, len(deltas)):
                res.checks.append(BoundCheck(
                    f"generator_ratio_{which}", "generator residual decays linearly in delta",
                    resid[k] / resid[k - 1], 0.5 * (lo + hi), 0.5 * (hi - lo), relation="abs",
                    norm_name=f"ratio_{which}", delta=deltas[k]))
    res.tables["generator"] = tab
    return res


# semigroup_convergence

def run_semigroup_convergence(cfg: ExperimentConfig, parts=None) -> ExperimentResult:
    """||T_ren(t)G - T_V(t)G||_C against eps t phibar (1 + beta) ||G||_{2C}."""
    d = Desk.from_config(cfg)
    o, tol = cfg.options, cfg.tolerances
    om, n_steps = cfg.truncation.omega_max, o["n_steps"]
    res = ExperimentResult("semigroup_convergence")
    G = random_observable(d.rng(31), d.grid, d.n_max, o["level_norms"], d.c)
    n2c = norm_lc(G, 2 * d.c)
    tab = Table(("eps", "t", "gap", "bound", "tail"))
    eps_list = list(cfg.sweeps.eps)
    for t in cfg.sweeps.t:
        delta = t / n_steps
        TV = H.semigroup_evolve(G, t, n_steps, "V", d.reg, d.p, om)
        tail = n_steps * H.primal_truncation_tail(G, d.reg, om, delta)
        gaps = []
        for eps in eps_list:
            TR = H.semigroup_evolve(G, t, n_steps, "ren", d.reg.with_(eps=eps), d.p, om)
            gap = norm_lc(TR - TV, d.c)
            bound = eps * t * d.phi_bar * (1 + d.beta) * n2c
            gaps.append(gap)
            tab.add(eps, t, gap, bound, tail)
            res.checks.append(BoundCheck(
                "semigroup_gap", "renormalized and limiting semigroups differ by at most eps t phibar (1+beta) ||G||_{2C}",
                gap, bound, tol["gap_abs"], norm_name="||T_ren G - T_V G||_C", eps=eps, t=t))
        if len(eps_list) > 1:
            res.checks.append(BoundCheck(
                "semigroup_gap_slope", "semigroup gap is linear in eps (log-log slope)",
                _slope(eps_list, gaps), 1.0, tol["slope"], relation="abs", norm_name="slope_eps", t=t))
    res.tables["gap"] = tab
    res.info["norm_G_2C"] = n2c
    return res


# dual_convergence

def run_dual_convergence(cfg: ExperimentConfig, parts=None) -> ExperimentResult:
    chosen = _parts(cfg, parts)
    res = ExperimentResult("dual_convergence")
    if "one_step" in chosen:
        res.extend(dual_one_step_checks(cfg))
    if "evolved" in chosen:
        res.extend(dual_evolved_checks(cfg))
    if "example" in chosen:
        res.extend(scaled_exponent_checks(cfg))
    if "corollary" in chosen:
        res.extend(perturbed_initial_checks(cfg))
    return res


def _dual_samples(d: Desk) -> list:
    o = d.cfg.options
    rng = d.rng(41)
    ac = d.reg.alpha * d.c
    ks = [random_correlation(rng, d.grid, d.n_max, ac) for _ in range(o["n_random"])]
    ks.append(GridFunctionFamily.lp_exponent(d.profile().values, d.grid, d.n_max))
    return ks


def one_step_ratio(k, d: Desk, delta: float, eps: float, xi_max: int) -> float:
    """||P*_{delta,eps}k - Q*_delta k||_{K_C} / (eps delta ||k||_{K_alphaC})."""
    Q = H.apply_q_delta_star(k, d.reg, d.p, xi_max, delta)
    P = H.apply_p_delta_eps_star(k, d.reg.with_(eps=eps), d.p, xi_max, delta)
    return norm_kc(P - Q, d.c) / (eps * delta * norm_kc(k, d.reg.alpha * d.c))


def dual_one_step_checks(cfg: ExperimentConfig) -> ExperimentResult:
    d = Desk.from_config(cfg)
    xi = cfg.truncation.xi_max
    res = ExperimentResult("dual_convergence")
    tab = Table(("sample", "delta", "eps", "gap", "ratio"))
    a_hat = 0.0
    for i, k in enumerate(_dual_samples(d)):
        kn = norm_kc(k, d.reg.alpha * d.c)
        ratios = []
        for delta in cfg.sweeps.delta:
            Q = H.apply_q_delta_star(k, d.reg, d.p, xi, delta)
            for eps in cfg.sweeps.eps:
                P = H.apply_p_delta_eps_star(k, d.reg.with_(eps=eps), d.p, xi, delta)
                gap = norm_kc(P - Q, d.c)
                r = gap / (eps * delta * kn)
                ratios.append(r)
                tab.add(i, delta, eps, gap, r)
        a_hat = max(a_hat, max(ratios))
        res.checks.append(BoundCheck(
            "dual_one_step_spread", "one-step dual gap over eps delta ||k||_{K_alphaC} is bounded by one constant",
            max(ratios) / min(ratios), cfg.tolerances["ratio_spread"], norm_name=f"max/min ratio (sample {i})"))
    res.tables["one_step"] = tab
    res.info["A_hat"] = a_hat
    return res


def dual_evolved_checks(cfg: ExperimentConfig) -> ExperimentResult:
    d = Desk.from_config(cfg)
    o, xi = cfg.options, cfg.truncation.xi_max
    res = ExperimentResult("dual_convergence")
    k = _dual_samples(d)[0]
    tab = Table(("eps", "t", "gap", "gap_over_eps_t"))
    eps_list = list(cfg.sweeps.eps)
    for t in cfg.sweeps.t:
        n = max(1, int(round(t / o["evolve_delta"])))
        TV = H.semigroup_evolve_dual(k, t, n, "V", d.reg, d.p, xi)
        gaps = []
        for eps in eps_list:
            TR = H.semigroup_evolve_dual(k, t, n, "ren", d.reg.with_(eps=eps), d.p, xi)
            gap = norm_kc(TR - TV, d.c)
            gaps.append(gap)
            tab.add(eps, t, gap, gap / (eps * t))
        if len(eps_list) > 1:
            res.checks.append(BoundCheck(
                "dual_evolved_slope", "evolved dual gap scales linearly in eps (log-log slope)",
                _slope(eps_list, gaps), 1.0, cfg.tolerances["slope"], relation="abs",
                norm_name="slope_eps", t=t))
    res.tables["evolved"] = tab
    return res


def _scaled_exponent(d: Desk, rho0: float, eps: float):
    u = np.cos(2 * np.pi * d.grid.x / d.grid.box_length)
    k0 = GridFunctionFamily.lp_exponent(rho0, d.grid, d.n_max)
    k0e = GridFunctionFamily.lp_exponent(rho0 * (1 + eps * u), d.grid, d.n_max)
    return k0, k0e, float(np.max(np.abs(u)))


def scaled_exponent_checks(cfg: ExperimentConfig) -> ExperimentResult:
    """||k0^eps - k0||_{K_C} for k0^eps = e_lambda(rho0 (1 + eps u)), u = cos."""
    d = Desk.from_config(cfg)
    o = cfg.options
    rho0, C, a = o["example_rho0"], d.c, d.reg.alpha
    res = ExperimentResult("dual_convergence")
    tab = Table(("eps", "measured", "bound", "tail"))
    for eps in o["example_eps"]:
        k0, k0e, ubar = _scaled_exponent(d, rho0, eps)
        measured = norm_kc(k0e - k0, C)
        # sup of the levels above n_max that the truncated family does not store
        tail = max((rho0 / C) ** n * ((1 + eps * ubar) ** n - 1) for n in range(d.n_max + 1, 200))
        bound = eps * rho0 / (a * C) * (-1.0 / (math.e * math.log(a)))
        tab.add(eps, measured, bound, tail)
        res.checks.append(BoundCheck(
            "scaled_exponent_gap", "scaled exponent differs from k0 by at most eps rho0/(alpha C) (-1/(e ln alpha))",
            measured, bound, tail, norm_name="||k0^eps - k0||_K_C", eps=eps))
        res.checks.append(BoundCheck(
            "scaled_exponent_admissible", "eps is below (alpha C - rho0)/(rho0 ubar), so k0^eps stays in K_alphaC",
            eps, (a * C - rho0) / (rho0 * ubar), norm_name="eps_admissible", eps=eps, relation="lt"))
    res.tables["example"] = tab
    return res


def perturbed_initial_checks(cfg: ExperimentConfig) -> ExperimentResult:
    """Evolving k0^eps under P* stays within A eps t ||k0|| + ||k0^eps - k0|| of the limit of k0."""
    d = Desk.from_config(cfg)
    o, xi = cfg.options, cfg.truncation.xi_max
    res = ExperimentResult("dual_convergence")
    tab = Table(("eps", "t", "gap", "bound"))
    t = max(cfg.sweeps.t)
    n = max(1, int(round(t / o["evolve_delta"])))
    delta = t / n
    for eps in o["example_eps"]:
        k0, k0e, _ = _scaled_exponent(d, o["example_rho0"], eps)
        a_hat = max(one_step_ratio(k0, d, delta, e, xi) for e in (eps, 2 * eps))
        TR = H.semigroup_evolve_dual(k0e, t, n, "ren", d.reg.with_(eps=eps), d.p, xi)
        TV = H.semigroup_evolve_dual(k0, t, n, "V", d.reg, d.p, xi)
        gap = norm_kc(TR - TV, d.c)
        bound = a_hat * eps * t * norm_kc(k0, d.reg.alpha * d.c) + norm_kc(k0e - k0, d.c)
        tab.add(eps, t, gap, bound)
        res.checks.append(BoundCheck(
            "perturbed_initial_gap", "perturbed initial data adds at most ||k0^eps - k0||_{K_C} to the eps t A gap",
            gap, bound, norm_name="||T_ren k0^eps - T_V k0||_K_C", eps=eps, t=t))
    res.tables["corollary"] = tab
    return res


# chaos_preservation

def run_chaos_preservation(cfg: ExperimentConfig, parts=None) -> ExperimentResult:
    """Dual evolution of e_lambda(rho0) against e_lambda(rho_t) from the kinetic equation."""
    d = Desk.from_config(cfg)
    o, xi = cfg.options, cfg.truncation.xi_max
    t = cfg.sweeps.t[0]
    res = ExperimentResult("chaos_preservation")
    rho0 = d.profile()
    traj = solve_vlasov(rho0, t, cfg.solver_settings(record_dt=None), d.reg, d.p)
    kt = GridFunctionFamily.lp_exponent(traj.final.values, d.grid, d.n_max)
    k0 = GridFunctionFamily.lp_exponent(rho0.values, d.grid, d.n_max)
    steps, epss = list(o["n_steps"]), list(cfg.sweeps.eps)
    runs = [(steps[0], epss[0])] + [(s, epss[0]) for s in steps[1:]] + [(steps[0], e) for e in epss[1:]]
    tab = Table(("delta", "level", "distance", "eps", "n_steps"))
    dist = {}
    for n, eps in runs:
        k = H.semigroup_evolve_dual(k0, t, n, "ren", d.reg.with_(eps=eps), d.p, xi)
        diff = k - kt
        for lev, v in enumerate(level_norms_kc(diff, d.c)):
            tab.add(t / n, lev, v, eps, n)
        dist[(n, eps)] = norm_kc(diff, d.c)
    base = runs[0]
    res.checks.append(BoundCheck(
        "chaos_distance", "dual evolution of a product state stays close to the product of the kinetic solution",
        dist[base], cfg.tolerances["distance"], norm_name="||k_t - e_lambda(rho_t)||_K_C",
        delta=t / base[0], eps=base[1], t=t))
    for n, eps in runs[1:]:
        what = "n_steps refinement" if eps == base[1] else "eps refinement"
        res.checks.append(BoundCheck(
            "chaos_distance_decreases", f"distance decreases under {what}",
            dist[(n, eps)], dist[base], relation="lt", norm_name=f"distance(n={n}, eps={eps})",
            delta=t / n, eps=eps, t=t))
    res.tables["distance"] = tab
    res.info["distances"] = {f"n={n},eps={e}": v for (n, e), v in dist.items()}
    return res


# vlasov_solve

def run_vlasov_solve(cfg: ExperimentConfig, parts=None) -> ExperimentResult:
    d = Desk.from_config(cfg)
    o, tol = cfg.options, cfg.tolerances
    T = cfg.sweeps.t[0]
    res = ExperimentResult("vlasov_solve")
    rho0 = d.profile()
    r0 = rho0.values

    # pure death: exact solution exp(-t) rho0, global rk4 error at most t dt^4 max(rho0)/120
    z0 = d.reg.with_(z=0.0)
    errs = []
    for dt in (o["decay_dt"], 0.5 * o["decay_dt"]):
        tr = solve_vlasov(rho0, T, cfg.solver_settings(dt=dt, record_dt=None), z0, d.p, check_bounds=False)
        errs.append(float(np.max(np.abs(tr.values - np.exp(-tr.times)[:, None] * r0[None, :]))))
        res.checks.append(BoundCheck(
            "decay_exact", "z = 0 gives exp(-t) rho0 up to the rk4 error", errs[-1],
            T * dt ** 4 * np.max(r0) / 120, norm_name="sup |rho_t - exp(-t) rho0|", t=T))
    res.checks.append(BoundCheck(
        "decay_order", "rk4 error is fourth order in dt", math.log2(errs[0] / errs[1]), 4.0, 0.3,
        relation="abs", norm_name="log2 error ratio"))

    # homogeneous data against an adaptive scalar integrator
    r = o["homogeneous_rho0"]
    settings = cfg.solver_settings(record_dt=None)
    tr = solve_vlasov(DensityField.constant(r, d.grid), T, settings, d.reg, d.p)
    z, b = d.reg.z, d.beta
    sol = solve_ivp(lambda _, y: -y + z * np.exp(-b * y), (0, T), [r], method="DOP853",
                    rtol=1e-13, atol=1e-15, dense_output=True)
    ode = sol.sol(tr.times)[0]
    res.checks.append(BoundCheck(
        "homogeneous_ode", "homogeneous solution matches the scalar ODE", float(np.max(np.abs(tr.values - ode[:, None]))),
        tol["ode"], norm_name="sup |rho_t - r_t|", t=T))

    # a priori bounds on the profile and on data close to alpha C
    traj = solve_vlasov(rho0, T, settings, d.reg, d.p, check_bounds=False)
    high = DensityField(np.minimum(0.95 * d.reg.alpha * d.c * (1 + 0.1 * np.cos(2 * np.pi * d.grid.x / d.grid.box_length)),
                                   d.reg.alpha * d.c), d.grid)
    traj_hi = solve_vlasov(high, T, settings, d.reg, d.p, check_bounds=False)
    viol = sum(verify_apriori_bounds(tj, d.reg, tol["bounds"]).violations for tj in (traj, traj_hi))
    res.checks.append(BoundCheck(
        "apriori_bounds", "0 <= rho_t <= min(alpha C, exp(-t) rho0 + z (1 - exp(-t))) at every record",
        viol, 0, norm_name="violations", t=T))

    # picard against rk4
    pic = solve_vlasov(rho0, T, cfg.solver_settings(method="picard", record_dt=None), d.reg, d.p)
    agree = float(np.max(np.abs(pic.values - traj.values)))
    res.checks.append(BoundCheck(
        "picard_rk4", "Picard iteration and rk4 agree", agree, max(tol["agreement"], settings.dt ** 4),
        norm_name="sup |picard - rk4|", t=T))

    # contraction factor of the Picard map on the window [0, t_window]
    n = int(round(cfg.solver.t_window / settings.dt))
    v = traj.values[: n + 1]
    rng = d.rng(71)
    factor = max(picard_contraction_factor(v, v + 0.05 * rng.random(v.shape), r0, d.reg, d.p, d.grid, settings.dt)
                 for _ in range(3))
    res.checks.append(BoundCheck(
        "picard_contraction", "Picard map contracts with factor at most z beta", factor, z * b,
        tol["contraction_slack"], norm_name="contraction factor"))

    stride = max(1, int(round(0.25 / settings.dt)))
    tab = Table(("t", "x", "rho"))
    for i in range(0, len(traj.times), stride):
        for x, val in zip(d.grid.x, traj.values[i]):
            tab.add(traj.times[i], x, val)
    res.tables["trajectory"] = tab
    res.info["picard"] = {k: pic.info[k] for k in ("picard_iterations", "picard_converged")}
    return res


# kirkwood_monroe

def homogeneous_km_root(z: float, beta: float) -> float:
    """Root of r = z exp(-beta r) by bisection on [0, z]."""
    if z == 0:
        return 0.0
    return bisect(lambda r: r - z * math.exp(-beta * r), 0.0, z, xtol=1e-18, rtol=8.9e-16, maxiter=400)


def run_kirkwood_monroe(cfg: ExperimentConfig, parts=None) -> ExperimentResult:
    d = Desk.from_config(cfg)
    o, tol = cfg.options, cfg.tolerances
    res = ExperimentResult("kirkwood_monroe")
    km = solve_kirkwood_monroe(d.reg, d.p, DensityField.constant(0.0, d.grid), tol["residual"], o["max_iter"])
    root = homogeneous_km_root(d.reg.z, d.beta)
    res.checks.append(BoundCheck(
        "km_root", "homogeneous fixed point matches the bisection root",
        float(np.max(np.abs(km.density.values - root))), tol["root"], norm_name="sup |rho - r*|"))
    res.checks.append(BoundCheck(
        "km_residual", "fixed-point residual below tolerance", km.residual, tol["residual"],
        norm_name="sup |rho - z exp(-rho*phi)|"))
    km2 = solve_kirkwood_monroe(d.reg, d.p, d.profile(), tol["residual"], o["max_iter"])
    res.checks.append(BoundCheck(
        "km_profile_start", "iteration from a nonconstant start reaches the same fixed point",
        float(np.max(np.abs(km2.density.values - root))), tol["root"], norm_name="sup |rho - r*|"))

    T = cfg.sweeps.t[0]
    dt = o["stationarity_dt"]
    tr = solve_vlasov(km.density, T, cfg.solver_settings(dt=dt, record_dt=None), d.reg, d.p)
    drift = np.max(np.abs(tr.values - km.density.values[None, :]), axis=1)
    res.checks.append(BoundCheck(
        "km_stationary", "fixed point is stationary under the kinetic equation", float(drift.max()),
        tol["stationarity"], norm_name="sup_t |rho_t - rho*|", t=T))
    tab = Table(("x", "rho"))
    for x, v in zip(d.grid.x, km.density.values):
        tab.add(x, v)
    res.tables["density"] = tab
    dtab = Table(("t", "drift"))
    stride = max(1, int(round(0.5 / dt)))
    for i in range(0, len(tr.times), stride):
        dtab.add(tr.times[i], drift[i])
    res.tables["drift"] = dtab
    res.info["km"] = km.summary() | {"root": root}
    return res


# scaling_limit

def run_scaling_limit(cfg: ExperimentConfig, parts=None) -> ExperimentResult:
    chosen = _parts(cfg, parts)
    res = ExperimentResult("scaling_limit")
    if "baselines" in chosen:
        res.extend(simulator_baselines(cfg))
    if "limit" in chosen:
        res.extend(scaling_limit_checks(cfg))
    return res


def simulator_baselines(cfg: ExperimentConfig) -> ExperimentResult:
    """Closed-form mean population for z = 0 and for phi = 0, plus seed determinism."""
    d = Desk.from_config(cfg)
    o, sim = cfg.options, cfg.simulation
    eps, T = o["baseline_eps"], o["baseline_t_end"]
    res = ExperimentResult("scaling_limit")
    rho0 = d.profile()
    n0 = d.grid.step * float(rho0.values.sum()) / eps
    L = d.grid.box_length
    tab = Table(("case", "t", "mean", "sigma", "expected"))
    cases = [
        ("z0", d.reg.with_(z=0.0), d.p, lambda t: n0 * np.exp(-t)),
        ("free", d.reg, Potential.zero(L),
         lambda t: n0 * np.exp(-t) + d.reg.z / eps * L * (1 - np.exp(-t))),
    ]
    for tag, (case, reg, p, mean_fn) in enumerate(cases):
        ens = simulate_ensemble(sim.n_replicas, T, eps, reg, p, derive_seed(sim.seed, 100 + tag),
                                rho0=rho0, dt_record=sim.dt_record, processes=sim.processes)
        counts = ens.n_points.astype(float)
        mean = counts.mean(axis=0)
        sigma = counts.std(axis=0, ddof=1) / math.sqrt(counts.shape[0])
        expected = mean_fn(ens.times)
        for row in zip(ens.times, mean, sigma, expected):
            tab.add(case, *row)
        z_scores = np.abs(mean - expected) / sigma
        res.checks.append(BoundCheck(
            f"baseline_{case}", "mean population follows the closed form within the stated sigma band",
            float(z_scores.max()), cfg.tolerances["sigma"], norm_name="max |mean - closed form| / sigma",
            eps=eps, t=T))
    res.tables["baselines"] = tab

    n_det = o["determinism_replicas"]
    runs = [simulate_ensemble(n_det, T, eps, d.reg, d.p, sim.seed, rho0=rho0, dt_record=sim.dt_record,
                              processes=procs) for procs in (1, 1, 2)]
    blobs = [_ensemble_bytes(e) for e in runs]
    mismatches = sum(b != blobs[0] for b in blobs[1:])
    res.checks.append(BoundCheck(
        "seed_determinism", "identical seeds give identical trajectories for any worker count",
        mismatches, 0, norm_name="mismatching reruns"))
    return res


def _ensemble_bytes(ens) -> bytes:
    parts = [np.asarray(ens.times).tobytes()]
    for r in ens.replicas:
        parts += [np.asarray(s, dtype=float).tobytes() + b"|" for s in r.snapshots]
        parts.append(f"{r.proposed},{r.accepted},{r.deaths};".encode())
    return b"".join(parts)


def scaling_limit_checks(cfg: ExperimentConfig) -> ExperimentResult:
    """Rescaled empirical density against rho_t, and the pair-correlation factorization gap."""
    d = Desk.from_config(cfg)
    o, sim, tol = cfg.options, cfg.simulation, cfg.tolerances
    t = cfg.sweeps.t[0]
    res = ExperimentResult("scaling_limit")
    rho0 = d.profile()
    traj = solve_vlasov(rho0, t, cfg.solver_settings(record_dt=None), d.reg, d.p)
    rho_t = traj.final.values
    summary = Table(("eps", "sup_distance", "ci_halfwidth", "chaos_gap", "acceptance_rate"))
    dens = Table(("eps", "x", "density", "ci", "rho"))
    pair = Table(("eps", "r", "pair", "ci"))
    dists, gaps = [], []
    eps_list = list(cfg.sweeps.eps)
    for tag, eps in enumerate(eps_list):
        ens = simulate_ensemble(sim.n_replicas, t, eps, d.reg, d.p, derive_seed(sim.seed, 200 + tag),
                                rho0=rho0, dt_record=min(sim.dt_record, t), processes=sim.processes)
        est = estimate_correlations(ens.snapshots_at(t), t, d.grid, eps, o["n_r_bins"])
        dist = float(np.max(np.abs(est.density - rho_t)))
        ci = float(np.max(est.ci_halfwidth))
        gap = chaos_factorization_gap(est)
        dists.append(dist)
        gaps.append(gap)
        summary.add(eps, dist, ci, gap, ens.acceptance_rate)
        for row in zip(est.x, est.density, est.ci_halfwidth, rho_t):
            dens.add(eps, *row)
        for row in zip(est.r, est.pair_correlation, est.pair_ci):
            pair.add(eps, *row)
        if tag == len(eps_list) - 1:
            res.checks.append(BoundCheck(
                "limit_within_ci", "at the smallest eps the density matches rho_t within the CI band",
                dist, tol["ci_factor"] * ci, norm_name="sup |eps k1 - rho_t|", eps=eps, t=t))
    order = np.argsort(eps_list)[::-1]
    for a, b in zip(order[:-1], order[1:]):
        res.checks.append(BoundCheck(
            "limit_monotone", "sup distance to rho_t decreases with eps", dists[b], dists[a], relation="lt",
            norm_name="sup |eps k1 - rho_t|", eps=eps_list[b], t=t))
        res.checks.append(BoundCheck(
            "chaos_gap_monotone", "pair-correlation factorization gap decreases with eps", gaps[b], gaps[a],
            relation="lt", norm_name="chaos_factorization_gap", eps=eps_list[b], t=t))
    res.tables["limit"] = summary
    res.tables["density"] = dens
    res.tables["pair"] = pair
    return res


RUNNERS: dict[str, Callable[..., ExperimentResult]] = {
    "lp_calculus_suite": run_lp_calculus,
    "operator_bounds": run_operator_bounds,
    "semigroup_convergence": run_semigroup_convergence,
    "dual_convergence": run_dual_convergence,
    "chaos_preservation": run_chaos_preservation,
    "vlasov_solve": run_vlasov_solve,
    "kirkwood_monroe": run_kirkwood_monroe,
    "scaling_limit": run_scaling_limit,
}


def run(cfg: ExperimentConfig, parts=None) -> ExperimentResult:
    return RUNNERS[cfg.experiment](cfg, parts)
