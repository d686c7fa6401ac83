"""Kinetic (Vlasov-type) equation for the one-point density.

    d rho / dt = -rho + z exp(-(rho * phi)),

its stationary version rho = z exp(-(rho * phi)) (Kirkwood-Monroe), and the
pointwise a priori bounds every solution obeys:

    0 <= rho_t <= alpha C   and   rho_t <= exp(-t) rho_0 + z (1 - exp(-t)).

Two integrators are provided. Classical RK4 is the production driver; the
Picard iteration of the Duhamel map is kept as an independent validator and
to measure its contraction constant.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .grid import Grid
from .potential import Potential, kernel_matrices


class AprioriBoundViolation(RuntimeError):
    """Raised when a computed trajectory leaves the region the theory allows."""


@dataclass(frozen=True)
class DensityField:
    values: np.ndarray
    grid: Grid
    time: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.points,):
            raise ValueError(f"density has shape {v.shape}, grid has {self.grid.points} points")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.time < 0:
            raise ValueError("time must be non-negative")

    @classmethod
    def constant(cls, r: float, grid: Grid, time: float = 0.0) -> "DensityField":
        return cls(np.full(grid.points, float(r)), grid, time)

    @classmethod
    def from_function(cls, f, grid: Grid, time: float = 0.0) -> "DensityField":
        return cls(np.asarray(f(grid.x), dtype=float) * np.ones(grid.points), grid, time)


@dataclass(frozen=True)
class SolverSettings:
    method: str = "rk4"
    dt: float = 1e-3
    picard_tol: float = 1e-10
    picard_max_iter: int = 200
    t_window: float = 1.0
    record_dt: float | None = None
    bound_tol: float = 1e-8
    use_fft: bool = False

    def __post_init__(self):
        if self.method not in ("rk4", "picard"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.dt <= 0 or self.t_window <= 0:
            raise ValueError("dt and t_window must be positive")
        if self.picard_tol <= 0 or self.picard_max_iter < 1:
            raise ValueError("picard_tol must be positive and picard_max_iter at least 1")
        if self.record_dt is not None and self.record_dt < self.dt:
            raise ValueError("record_dt must be at least dt")


@dataclass
class Trajectory:
    times: np.ndarray
    values: np.ndarray  # (n_records, M)
    grid: Grid
    rho0: np.ndarray
    info: dict = field(default_factory=dict)

    def at(self, t: float) -> DensityField:
        i = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[i], t, abs_tol=1e-9):
            raise KeyError(f"time {t} was not recorded")
        return DensityField(self.values[i], self.grid, float(self.times[i]))

    @property
    def final(self) -> DensityField:
        return DensityField(self.values[-1], self.grid, float(self.times[-1]))

    def write_csv(self, path) -> Path:
        path = Path(path)
        n, M = self.values.shape
        t = np.repeat(self.times, M)
        x = np.tile(self.grid.x, n)
        np.savetxt(path, np.column_stack([t, x, self.values.ravel()]), delimiter=",",
                   header="t,x,rho", comments="", fmt="%.17g")
        return path

    def write_summary(self, path, extra: dict | None = None) -> Path:
        path = Path(path)
        data = {"grid_points": self.grid.points, "box_length": self.grid.box_length,
                "t_end": float(self.times[-1]), "records": int(len(self.times))}
        data.update(_jsonable(self.info))
        data.update(_jsonable(extra or {}))
        path.write_text(json.dumps(data, indent=2))
        return path


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out[k] = _jsonable(v)
        elif isinstance(v, np.ndarray):
            out[k] = v.tolist()
        elif isinstance(v, (np.floating, np.integer, np.bool_)):
            out[k] = v.item()
        else:
            out[k] = v
    return out


# convolution

def convolve(rho, p: Potential, use_fft: bool = False) -> np.ndarray:
    """Circular convolution (rho * phi)(x_i) = h sum_j phi(x_i - x_j) rho(x_j).

    ``rho`` is a DensityField or an array whose last axis is the grid.
    """
    if isinstance(rho, DensityField):
        grid, vals = rho.grid, rho.values
    else:
        raise TypeError("convolve expects a DensityField; use _conv for raw arrays")
    if not math.isclose(grid.box_length, p.box_length):
        raise ValueError("density and potential live on different boxes")
    return _conv(vals, p, grid, use_fft)


def _conv(vals: np.ndarray, p: Potential, grid: Grid, use_fft: bool = False) -> np.ndarray:
    if use_fft:
        kern = np.fft.rfft(p(grid.x))
        return grid.step * np.fft.irfft(np.fft.rfft(vals, axis=-1) * kern, n=grid.points, axis=-1)
    phi = kernel_matrices(p, grid, None)[0]
    return grid.step * (vals @ phi.T)


def vlasov_rhs(vals: np.ndarray, z: float, p: Potential, grid: Grid, use_fft: bool = False) -> np.ndarray:
    return -vals + z * np.exp(-_conv(vals, p, grid, use_fft))


# a priori bounds

def upper_envelope(rho0: np.ndarray, t, z: float, alpha_c: float) -> np.ndarray:
    """min{alpha C, exp(-t) rho_0 + z (1 - exp(-t))} for each t (rows)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
    comp = np.exp(-t) * rho0[None, :] + z * (-np.expm1(-t))
    return np.minimum(comp, alpha_c)


@dataclass
class BoundReport:
    times: np.ndarray
    max_below_zero: np.ndarray
    max_above_envelope: np.ndarray
    tol: float

    @property
    def violations(self) -> int:
        bad = (self.max_below_zero > self.tol) | (self.max_above_envelope > self.tol)
        return int(bad.sum())

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def summary(self) -> dict:
        return {"violations": self.violations,
                "max_below_zero": float(self.max_below_zero.max(initial=0.0)),
                "max_above_envelope": float(self.max_above_envelope.max(initial=0.0)),
                "tol": self.tol}


def verify_apriori_bounds(traj: Trajectory, reg, tol: float = 1e-8) -> BoundReport:
    """Per-record maximal violation of 0 <= rho_t <= envelope."""
    env = upper_envelope(traj.rho0, traj.times, reg.z, reg.alpha * reg.c)
    below = np.maximum(-traj.values, 0.0).max(axis=1)
    above = np.maximum(traj.values - env, 0.0).max(axis=1)
    return BoundReport(np.asarray(traj.times), below, above, tol)


# Picard (Duhamel) map

def duhamel_integral(f: np.ndarray, dt: float) -> np.ndarray:
    """I_i = int_0^{t_i} exp(-(t_i - s)) f(s) ds by the trapezoid rule on t_i = i dt.

    ``f`` has time on axis 0. Uses the exact recursion
    I_i = a I_{i-1} + dt/2 (a f_{i-1} + f_i) with a = exp(-dt).
    """
    a = math.exp(-dt)
    u = np.zeros_like(f)
    u[1:] = 0.5 * dt * (a * f[:-1] + f[1:])
    return lfilter([1.0], [1.0, -a], u, axis=0)


def picard_step(v: np.ndarray, rho0: np.ndarray, reg, p: Potential, grid: Grid, dt: float,
                use_fft: bool = False) -> np.ndarray:
    """(Phi v)_t = exp(-t) rho_0 + z int_0^t exp(-(t-s)) exp(-(v_s * phi)) ds on t = i dt."""
    n = v.shape[0]
    t = dt * np.arange(n)
    f = np.exp(-_conv(v, p, grid, use_fft))
    return np.exp(-t)[:, None] * rho0[None, :] + reg.z * duhamel_integral(f, dt)


def picard_contraction_factor(v: np.ndarray, w: np.ndarray, rho0: np.ndarray, reg, p: Potential,
                              grid: Grid, dt: float) -> float:
    """||Phi v - Phi w||_T / ||v - w||_T with the sup norm over the window."""
    num = np.max(np.abs(picard_step(v, rho0, reg, p, grid, dt) - picard_step(w, rho0, reg, p, grid, dt)))
    den = np.max(np.abs(v - w))
    return float(num / den)


def _picard_window(rho0, n, reg, p, grid, s: SolverSettings):
    v = np.repeat(rho0[None, :], n + 1, axis=0)
    for it in range(1, s.picard_max_iter + 1):
        new = picard_step(v, rho0, reg, p, grid, s.dt, s.use_fft)
        change = float(np.max(np.abs(new - v)))
        v = new
        if change <= s.picard_tol:
            return v, it, change
    return v, s.picard_max_iter, change


# drivers

def _rk4_step(r, dt, z, p, grid, use_fft):
    k1 = vlasov_rhs(r, z, p, grid, use_fft)
    k2 = vlasov_rhs(r + 0.5 * dt * k1, z, p, grid, use_fft)
    k3 = vlasov_rhs(r + 0.5 * dt * k2, z, p, grid, use_fft)
    k4 = vlasov_rhs(r + dt * k3, z, p, grid, use_fft)
    return r + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def solve_vlasov(rho0: DensityField, t_end: float, settings: SolverSettings, reg, p: Potential,
                 check_bounds: bool = True) -> Trajectory:
    """Integrate from rho0 to t_end, recording every ``record_dt`` (default every step).

    Raises AprioriBoundViolation if any record leaves [0, envelope] by more
    than ``settings.bound_tol``.
    """
    grid = rho0.grid
    r0 = np.asarray(rho0.values, dtype=float)
    if np.any(r0 < 0) or np.any(r0 > reg.alpha * reg.c):
        raise ValueError("initial density must satisfy 0 <= rho0 <= alpha C")
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    s = settings
    n_steps = int(round(t_end / s.dt))
    if not math.isclose(n_steps * s.dt, t_end, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError("t_end must be a multiple of dt")
    stride = 1 if s.record_dt is None else int(round(s.record_dt / s.dt))
    if stride < 1 or (s.record_dt is not None and not math.isclose(stride * s.dt, s.record_dt, rel_tol=1e-9)):
        raise ValueError("record_dt must be a multiple of dt")

    info: dict = {"method": s.method, "dt": s.dt}
    if s.method == "rk4":
        states = [r0]
        r = r0
        for _ in range(n_steps):
            r = _rk4_step(r, s.dt, reg.z, p, grid, s.use_fft)
            states.append(r)
        full = np.array(states)
    else:
        if reg.z * reg.beta > math.exp(-1):
            warnings.warn("z*beta exceeds 1/e: Picard contraction is not guaranteed", RuntimeWarning)
        per_window = max(1, int(round(s.t_window / s.dt)))
        chunks = [r0[None, :]]
        start, done = r0, 0
        iters, changes = [], []
        while done < n_steps:
            n = min(per_window, n_steps - done)
            v, it, ch = _picard_window(start, n, reg, p, grid, s)
            chunks.append(v[1:])
            iters.append(it)
            changes.append(ch)
            start, done = v[-1], done + n
        full = np.concatenate(chunks)
        info.update(picard_iterations=iters, picard_final_change=changes,
                    picard_converged=bool(all(c <= s.picard_tol for c in changes)))
    idx = np.arange(0, n_steps + 1, stride)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    traj = Trajectory(idx * s.dt, full[idx], grid, r0, info)
    if check_bounds:
        rep = verify_apriori_bounds(traj, reg, s.bound_tol)
        traj.info["bounds"] = rep.summary()
        if not rep.ok:
            raise AprioriBoundViolation(
                f"{rep.violations} records violate the a priori bounds (max excess "
                f"{rep.max_above_envelope.max():.3e}, max negativity {rep.max_below_zero.max():.3e})")
    return traj


@dataclass
class KirkwoodMonroeResult:
    density: DensityField
    converged: bool
    residual: float
    iterations: int

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("density")
        return d


def km_residual(vals: np.ndarray, z: float, p: Potential, grid: Grid) -> float:
    return float(np.max(np.abs(vals - z * np.exp(-_conv(vals, p, grid)))))


def solve_kirkwood_monroe(reg, p: Potential, init: DensityField, tol: float = 1e-13,
                          max_iter: int = 10_000) -> KirkwoodMonroeResult:
    """Fixed-point iteration rho <- z exp(-(rho * phi)) from ``init``.

    The map is a sup-norm contraction with constant at most z*beta, so the
    residual after an update bounds the distance to the fixed point by a
    factor 1/(1 - z*beta).
    """
    grid = init.grid
    r = np.asarray(init.values, dtype=float)
    best, best_res = r, math.inf
    for it in range(1, max_iter + 1):
        new = reg.z * np.exp(-_conv(r, p, grid))
        res = float(np.max(np.abs(new - r)))
        r = new
        if res < best_res:
            best, best_res = r, res
        if res <= tol:
            return KirkwoodMonroeResult(DensityField(r, grid), True, km_residual(r, reg.z, p, grid), it)
    return KirkwoodMonroeResult(DensityField(best, grid), False, km_residual(best, reg.z, p, grid), max_iter)
