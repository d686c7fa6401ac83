"""Experiment configuration: JSON document -> fully defaulted, validated config."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .grid import Grid
from .hierarchy import ScalingRegime, alpha_1
from .potential import Potential, compute_constants
from .vlasov import SolverSettings

EXPERIMENTS = (
    "vlasov_solve",
    "kirkwood_monroe",
    "operator_bounds",
    "semigroup_convergence",
    "dual_convergence",
    "chaos_preservation",
    "scaling_limit",
    "lp_calculus_suite",
)

# Shared initial density profile rho0(x) = mean * (1 + modulation * cos(2 pi mode x / L)).
_PROFILE = {"rho0_mean": 0.2, "rho0_modulation": 0.5, "rho0_mode": 1}

# Per-experiment sweeps, tolerances and options. Every key listed here may be
# overridden in the config document; unknown keys are rejected.
EXPERIMENT_DEFAULTS: dict[str, dict] = {
    "lp_calculus_suite": {
        "sweeps": {"eps": [], "delta": [], "t": []},
        "tolerances": {"lp_integral": 1e-6, "roundtrip": 1e-12},
        "options": {
            "lp_n_max": 6,
            "lp_grid_points": 16,
            "lp_masses": [0.05, 0.1, 0.25, 0.5, 1.0],
            "roundtrip_max_points": 5,
            "minlos_grid_points": 8,
            "minlos_n_max": 3,
            "minlos_a": 0.02,
            "minlos_b": 0.01,
        },
    },
    "operator_bounds": {
        "sweeps": {"eps": [1.0, 0.1], "delta": [0.5, 0.1, 0.01], "t": []},
        "tolerances": {"trunc_rel": 1e-3, "ratio_low": 0.4, "ratio_high": 0.6},
        "options": {
            "parts": ["contraction", "generator"],
            "n_random": 50,
            "level_norms": [8 / 15, 4 / 15, 2 / 15, 1 / 15],
            "generator_delta": [0.1, 0.05, 0.025],
            "generator_eps": 0.1,
            "generator_samples": 3,
        },
    },
    "semigroup_convergence": {
        "sweeps": {"eps": [0.2, 0.1, 0.05], "delta": [], "t": [0.5, 1.0]},
        "tolerances": {"gap_abs": 5e-3, "slope": 0.15},
        "options": {"n_steps": 200, "level_norms": [8 / 15, 4 / 15, 2 / 15, 1 / 15]},
    },
    "dual_convergence": {
        "sweeps": {"eps": [0.2, 0.1, 0.05], "delta": [0.1, 0.05], "t": [0.5, 1.0]},
        "tolerances": {"ratio_spread": 3.0, "slope": 0.15},
        "options": {
            "parts": ["one_step", "evolved", "example", "corollary"],
            "n_random": 3,
            "evolve_delta": 0.05,
            "example_eps": [0.1, 0.01],
            "example_rho0": 0.6,
            **_PROFILE,
        },
    },
    "chaos_preservation": {
        "sweeps": {"eps": [0.05, 0.025], "delta": [], "t": [1.0]},
        "tolerances": {"distance": 1e-2},
        "options": {"n_steps": [400, 800], **_PROFILE},
    },
    "vlasov_solve": {
        "sweeps": {"eps": [], "delta": [], "t": [2.0]},
        "tolerances": {"ode": 1e-8, "bounds": 1e-8, "agreement": 1e-6, "contraction_slack": 1e-3},
        "options": {"homogeneous_rho0": 0.3, "decay_dt": 0.05, **_PROFILE},
    },
    "kirkwood_monroe": {
        "sweeps": {"eps": [], "delta": [], "t": [50.0]},
        "tolerances": {"root": 1e-12, "stationarity": 1e-6, "residual": 1e-13},
        "options": {"stationarity_dt": 0.01, "max_iter": 10_000, **_PROFILE},
    },
    "scaling_limit": {
        "sweeps": {"eps": [1.0, 0.5, 0.2, 0.1], "delta": [], "t": [1.0]},
        "tolerances": {"ci_factor": 2.0, "sigma": 3.0},
        "options": {
            "parts": ["baselines", "limit"],
            "baseline_eps": 1.0,
            "baseline_t_end": 2.0,
            "determinism_replicas": 40,
            "n_r_bins": 16,
            **_PROFILE,
        },
    },
}


class ConfigError(ValueError):
    """The config document is malformed or violates a structural constraint."""


@dataclass(frozen=True)
class DomainSpec:
    dimension: int = 1
    box_length: float = 10.0
    grid_points: int = 64


@dataclass(frozen=True)
class PotentialSpec:
    family: str = "gaussian"
    amplitude: float = 1.0
    width: float = 0.5
    cutoff_radius: float = 4.5
    table: tuple = ()


@dataclass(frozen=True)
class RegimeSpec:
    """``z = None`` means ``z_margin`` times the largest z allowed by the very-small-z condition."""

    z: float | None = None
    z_margin: float = 0.9
    c: float = 1.2
    alpha: float = 0.9
    eps: float = 0.1
    delta: float = 0.1


@dataclass(frozen=True)
class TruncationSpec:
    n_max: int = 3
    omega_max: int = 2
    xi_max: int = 2


@dataclass(frozen=True)
class SolverSpec:
    method: str = "rk4"
    dt: float = 1e-3
    picard_tol: float = 1e-10
    picard_max_iter: int = 200
    t_window: float = 1.0
    record_dt: float | None = None
    bound_tol: float = 1e-8
    use_fft: bool = False


@dataclass(frozen=True)
class SimulationSpec:
    n_replicas: int = 2000
    t_end: float = 1.0
    dt_record: float = 0.5
    seed: int = 20240611
    processes: int = 1


@dataclass(frozen=True)
class SweepSpec:
    eps: tuple = ()
    delta: tuple = ()
    t: tuple = ()


_SECTIONS = {
    "domain": DomainSpec,
    "potential": PotentialSpec,
    "regime": RegimeSpec,
    "truncation": TruncationSpec,
    "solver": SolverSpec,
    "simulation": SimulationSpec,
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    experiment: str
    domain: DomainSpec
    potential: PotentialSpec
    regime: RegimeSpec
    truncation: TruncationSpec
    solver: SolverSpec
    simulation: SimulationSpec
    sweeps: SweepSpec
    tolerances: dict
    options: dict
    z: float = 0.0
    predicates: dict = field(default_factory=dict)
    warnings: tuple = ()

    # derived objects

    def grid(self, points: int | None = None) -> Grid:
        return Grid(self.domain.box_length, points or self.domain.grid_points)

    def potential_obj(self) -> Potential:
        p = self.potential
        return Potential(p.family, p.amplitude, p.width, p.cutoff_radius, self.domain.box_length, tuple(p.table))

    def regime_obj(self, grid: Grid | None = None, **kw) -> ScalingRegime:
        consts = compute_constants(self.potential_obj(), grid or self.grid())
        r = self.regime
        base = ScalingRegime(z=self.z, c=r.c, alpha=r.alpha, eps=r.eps, delta=r.delta, beta=consts.beta)
        return base.with_(**kw) if kw else base

    def solver_settings(self, **kw) -> SolverSettings:
        return SolverSettings(**(asdict(self.solver) | kw))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        sim = SimulationSpec(**(asdict(self.simulation) | {"seed": int(seed)}))
        return _replace(self, simulation=sim)

    def with_processes(self, n: int) -> "ExperimentConfig":
        sim = SimulationSpec(**(asdict(self.simulation) | {"processes": int(n)}))
        return _replace(self, simulation=sim)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["warnings"] = list(self.warnings)
        d["sweeps"] = {k: list(v) for k, v in d["sweeps"].items()}
        d["potential"]["table"] = list(d["potential"]["table"])
        return d


def _replace(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return ExperimentConfig(**({f.name: getattr(cfg, f.name) for f in fields(cfg)} | kw))


def default_config(experiment: str, **overrides) -> ExperimentConfig:
    """Fully defaulted config for ``experiment``; ``overrides`` are top-level document keys."""
    return validate_config({"experiment": experiment, **overrides})


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return validate_config(raw)


def _check_type(where: str, value, default):
    """Coerce ``value`` to the type of ``default`` or raise ConfigError."""
    if default is None or isinstance(default, float):
        if value is None and default is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{where}: must be finite")
        return float(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, (list, tuple)):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        proto = default[0] if default else None
        if proto is None:
            return [_check_type(f"{where}[{i}]", v, 0.0) if not isinstance(v, str) else v
                    for i, v in enumerate(value)]
        return [_check_type(f"{where}[{i}]", v, proto) for i, v in enumerate(value)]
    raise ConfigError(f"{where}: unsupported value {value!r}")


def _section(raw: dict, key: str, cls):
    given = raw.get(key, {})
    if not isinstance(given, dict):
        raise ConfigError(f"{key}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(given) - set(known)
    if unknown:
        raise ConfigError(f"{key}: unknown field(s) {sorted(unknown)}")
    proto = cls()
    vals = {}
    for name in known:
        default = getattr(proto, name)
        if name in given:
            v = given[name]
            if name == "z" or name == "record_dt":
                vals[name] = None if v is None else _check_type(f"{key}.{name}", v, 0.0)
            elif name == "table":
                vals[name] = tuple(_check_type(f"{key}.table", v, [0.0]))
            else:
                vals[name] = _check_type(f"{key}.{name}", v, default)
        else:
            vals[name] = default
    return cls(**vals)


def _dict_section(raw: dict, key: str, defaults: dict) -> dict:
    given = raw.get(key, {})
    if not isinstance(given, dict):
        raise ConfigError(f"{key}: expected an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"{key}: unknown field(s) {sorted(unknown)} (known: {sorted(defaults)})")
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        out[k] = _check_type(f"{key}.{k}", v, defaults[k])
    return out


def validate_config(raw) -> ExperimentConfig:
    """Check a parsed config document and fill every default.

    Structural problems raise ConfigError. Failed smallness predicates only
    produce warnings (the operators stay evaluable); they are echoed in
    ``predicates`` and ``warnings``.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a JSON object")
    allowed = {"name", "experiment", "sweeps", "tolerances", "options", *_SECTIONS}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level field(s) {sorted(unknown)}")
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {list(EXPERIMENTS)}, got {exp!r}")
    name = raw.get("name", exp)
    if not isinstance(name, str) or not name:
        raise ConfigError("name must be a non-empty string")

    sec = {key: _section(raw, key, cls) for key, cls in _SECTIONS.items()}
    defaults = EXPERIMENT_DEFAULTS[exp]
    sweeps_d = _dict_section(raw, "sweeps", defaults["sweeps"])
    tolerances = _dict_section(raw, "tolerances", defaults["tolerances"])
    options = _dict_section(raw, "options", defaults["options"])

    dom = sec["domain"]
    if dom.dimension != 1:
        raise ConfigError("only dimension 1 is supported")
    if dom.box_length <= 0:
        raise ConfigError("domain.box_length must be positive")
    if dom.grid_points < 4:
        raise ConfigError("domain.grid_points must be at least 4")
    pot = sec["potential"]
    try:
        p = Potential(pot.family, pot.amplitude, pot.width, pot.cutoff_radius, dom.box_length, tuple(pot.table))
    except ValueError as exc:
        raise ConfigError(f"potential: {exc}") from exc

    tr = sec["truncation"]
    if tr.n_max < 1:
        raise ConfigError("truncation.n_max must be at least 1")
    if not 1 <= tr.omega_max <= tr.n_max:
        raise ConfigError("truncation.omega_max must lie in [1, n_max]")
    if tr.xi_max < 0:
        raise ConfigError("truncation.xi_max must be non-negative")

    try:
        SolverSettings(**asdict(sec["solver"]))
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from exc

    sim = sec["simulation"]
    if sim.n_replicas < 2 or sim.processes < 1 or sim.t_end <= 0 or sim.dt_record <= 0:
        raise ConfigError("simulation: need n_replicas >= 2, processes >= 1, t_end > 0, dt_record > 0")

    for v in sweeps_d["eps"]:
        if v <= 0:
            raise ConfigError("sweeps.eps values must be positive")
    for v in sweeps_d["delta"]:
        if not 0 < v < 1:
            raise ConfigError("sweeps.delta values must lie in (0, 1)")
    for v in sweeps_d["t"]:
        if v <= 0:
            raise ConfigError("sweeps.t values must be positive")
    sweeps = SweepSpec(*(tuple(sweeps_d[k]) for k in ("eps", "delta", "t")))

    reg = sec["regime"]
    beta = compute_constants(p, Grid(dom.box_length, dom.grid_points)).beta
    try:
        probe = ScalingRegime(z=0.0 if reg.z is None else reg.z, c=reg.c, alpha=reg.alpha,
                              eps=reg.eps, delta=reg.delta, beta=beta)
    except ValueError as exc:
        raise ConfigError(f"regime: {exc}") from exc
    if not 0 < reg.z_margin <= 1:
        raise ConfigError("regime.z_margin must lie in (0, 1]")
    z = reg.z_margin * probe.z_max if reg.z is None else reg.z
    regime = probe.with_(z=z)
    try:
        a1 = alpha_1(z, beta, reg.c)
    except ValueError:
        a1 = None
    if a1 is not None and not a1 < reg.alpha < 1:
        raise ConfigError(f"regime.alpha = {reg.alpha} outside the admissible interval ({a1:.6g}, 1)")
    preds = regime.predicates()
    warns = tuple(f"{k}=false" for k, v in preds.items() if not v)

    return ExperimentConfig(name=name, experiment=exp, sweeps=sweeps, tolerances=tolerances, options=options,
                            z=z, predicates=preds, warnings=warns, **sec)
