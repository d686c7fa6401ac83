"""Monte Carlo simulation of the rescaled birth-death (Glauber) dynamics.

At scale eps every particle dies at rate 1 and a particle is born at x at
rate z/eps * exp(-eps E(x, gamma)). Births are sampled by thinning: a
proposal at a uniform location is made at the constant rate z L / eps and
accepted with probability exp(-eps E(x, gamma)) <= 1.

Every replica owns an independent generator spawned from one root seed, so
the output does not depend on how replicas are distributed over processes.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config_space import Configuration
from .grid import Grid
from .potential import Potential


class PopulationExplosion(RuntimeError):
    pass


class CellList:
    """Uniform cell list for short-range energy sums on the periodic box.

    Cells are at least ``cutoff`` wide so every partner of a point lies in
    its own cell or one of the two neighbours. With fewer than three cells
    the neighbourhood is the whole box.
    """

    def __init__(self, box_length: float, cutoff: float):
        self.box_length = float(box_length)
        self.n_cells = max(1, int(box_length // cutoff))
        self.width = self.box_length / self.n_cells
        self.cells: list[list[float]] = [[] for _ in range(self.n_cells)]
        self.points: list[float] = []

    def __len__(self):
        return len(self.points)

    def _cell(self, x: float) -> int:
        return min(int(x // self.width), self.n_cells - 1)

    def insert(self, x: float):
        self.points.append(x)
        self.cells[self._cell(x)].append(x)

    def remove_at(self, k: int) -> float:
        """Remove the k-th stored point (swap-with-last) and return it."""
        x = self.points[k]
        last = self.points.pop()
        if k < len(self.points):
            self.points[k] = last
        self.cells[self._cell(x)].remove(x)
        return x

    def neighbours(self, x: float) -> np.ndarray:
        if self.n_cells < 3:
            return np.asarray(self.points)
        c = self._cell(x)
        idx = ((c - 1) % self.n_cells, c, (c + 1) % self.n_cells)
        return np.asarray([y for i in idx for y in self.cells[i]])

    def energy(self, p: Potential, x: float) -> float:
        nb = self.neighbours(x)
        return float(p(x - nb).sum()) if nb.size else 0.0

    def snapshot(self) -> np.ndarray:
        return np.sort(np.asarray(self.points, dtype=float))


def brute_force_energy(p: Potential, x: float, points) -> float:
    pts = np.asarray(points, dtype=float)
    return float(p(x - pts).sum()) if pts.size else 0.0


@dataclass
class SimTrajectory:
    """Snapshots of one replica at the record times."""

    times: np.ndarray
    snapshots: list
    proposed: int = 0
    accepted: int = 0
    deaths: int = 0

    @property
    def n_points(self) -> np.ndarray:
        return np.array([s.size for s in self.snapshots])

    def configurations(self, box_length: float) -> list[Configuration]:
        return [Configuration(s, box_length) for s in self.snapshots]

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 1.0


def record_times(t_end: float, dt_record: float) -> np.ndarray:
    if t_end < 0 or dt_record <= 0:
        raise ValueError("need t_end >= 0 and dt_record > 0")
    n = int(math.floor(t_end / dt_record + 1e-9))
    times = dt_record * np.arange(n + 1)
    if not math.isclose(times[-1], t_end, abs_tol=1e-12):
        times = np.append(times, t_end)
    return times


def _run(init: np.ndarray, t_end: float, dt_record: float, eps: float, z: float, p: Potential,
         rng: np.random.Generator, pop_cap: int) -> SimTrajectory:
    L = p.box_length
    cells = CellList(L, p.cutoff_radius)
    for x in np.asarray(init, dtype=float):
        cells.insert(float(x))
    times = record_times(t_end, dt_record)
    snaps = []
    birth_rate = z * L / eps
    interacting = not p.is_zero
    t, k = 0.0, 0
    proposed = accepted = deaths = 0
    while k < len(times):
        n = len(cells)
        total = n + birth_rate
        t_next = t + rng.exponential(1.0 / total) if total > 0 else math.inf
        while k < len(times) and times[k] < t_next:
            snaps.append(cells.snapshot())
            k += 1
        if k == len(times):
            break
        t = t_next
        if rng.random() * total < n:
            cells.remove_at(int(rng.integers(n)))
            deaths += 1
        else:
            x = rng.uniform(0.0, L)
            proposed += 1
            if not interacting or rng.random() < math.exp(-eps * cells.energy(p, x)):
                cells.insert(x)
                accepted += 1
                if len(cells) > pop_cap:
                    raise PopulationExplosion(
                        f"population {len(cells)} exceeded cap {pop_cap} at t={t:.4g} (eps={eps}, z={z})")
    return SimTrajectory(times, snaps, proposed, accepted, deaths)


def simulate(init: Configuration, t_end: float, eps: float, reg, p: Potential, seed,
             dt_record: float = 0.5, pop_cap: int = 100_000) -> SimTrajectory:
    """One replica of the eps-rescaled dynamics started from ``init``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if reg.z < 0:
        raise ValueError("z must be non-negative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return _run(np.asarray(getattr(init, "points", init)), t_end, dt_record, eps, reg.z, p, rng, pop_cap)


def sample_poisson_initial(rho0, seed, eps: float = 1.0) -> Configuration:
    """Poisson process with intensity rho0/eps.

    The intensity is taken piecewise constant on the grid cells centred at
    the grid points, matching the binning used by the estimators.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pts = _poisson_points(np.asarray(rho0.values, dtype=float), rho0.grid, eps, rng)
    return Configuration(pts, rho0.grid.box_length)


def _poisson_points(vals: np.ndarray, grid: Grid, eps: float, rng) -> np.ndarray:
    if np.any(vals < 0):
        raise ValueError("intensity must be non-negative")
    mass = grid.step * vals.sum() / eps
    n = int(rng.poisson(mass)) if mass > 0 else 0
    if n == 0:
        return np.zeros(0)
    cells = rng.choice(grid.points, size=n, p=vals / vals.sum())
    return grid.wrap(grid.x[cells] + grid.step * (rng.random(n) - 0.5))


@dataclass
class Ensemble:
    times: np.ndarray
    replicas: list
    eps: float
    seed: int
    params: dict = field(default_factory=dict)

    @property
    def n_points(self) -> np.ndarray:
        """(n_replicas, n_times) population counts."""
        return np.array([r.n_points for r in self.replicas])

    def snapshots_at(self, t: float) -> list:
        i = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[i], t, abs_tol=1e-9):
            raise KeyError(f"time {t} was not recorded")
        return [r.snapshots[i] for r in self.replicas]

    @property
    def acceptance_rate(self) -> float:
        prop = sum(r.proposed for r in self.replicas)
        return sum(r.accepted for r in self.replicas) / prop if prop else 1.0

    def write_snapshots_csv(self, path) -> Path:
        path = Path(path)
        rows = [(i, t, n) for i, r in enumerate(self.replicas) for t, n in zip(self.times, r.n_points)]
        with open(path, "w") as fh:
            fh.write("replica,t,n_points\n")
            for i, t, n in rows:
                fh.write(f"{i},{t!r},{n}\n")
        return path

    def provenance(self) -> dict:
        return {"seed": self.seed, "eps": self.eps, "n_replicas": len(self.replicas),
                "times": self.times.tolist(), "acceptance_rate": self.acceptance_rate, **self.params}


def _replica(args):
    child, init, rho0_vals, grid, t_end, dt_record, eps, z, p, pop_cap = args
    rng = np.random.default_rng(child)
    if rho0_vals is not None:
        init = _poisson_points(rho0_vals, grid, eps, rng)
    return _run(init, t_end, dt_record, eps, z, p, rng, pop_cap)


def simulate_ensemble(n_replicas: int, t_end: float, eps: float, reg, p: Potential, seed: int,
                      init: Configuration | None = None, rho0=None, dt_record: float = 0.5,
                      processes: int = 1, pop_cap: int = 100_000) -> Ensemble:
    """Independent replicas, each from ``init`` or from a fresh Poisson(rho0/eps) sample.

    Replica i always uses the i-th stream spawned from ``seed``, so results
    are identical for any number of worker processes.
    """
    if (init is None) == (rho0 is None):
        raise ValueError("give exactly one of init or rho0")
    if eps <= 0:
        raise ValueError("eps must be positive")
    children = np.random.SeedSequence(seed).spawn(n_replicas)
    start = None if init is None else np.asarray(getattr(init, "points", init), dtype=float)
    vals = None if rho0 is None else np.asarray(rho0.values, dtype=float)
    grid = None if rho0 is None else rho0.grid
    jobs = [(c, start, vals, grid, t_end, dt_record, eps, reg.z, p, pop_cap) for c in children]
    if processes > 1:
        with ProcessPoolExecutor(processes) as ex:
            reps = list(ex.map(_replica, jobs, chunksize=max(1, n_replicas // (4 * processes))))
    else:
        reps = [_replica(j) for j in jobs]
    params = {"z": reg.z, "t_end": t_end, "dt_record": dt_record, "potential": repr(p)}
    return Ensemble(record_times(t_end, dt_record), reps, eps, seed, params)


# estimators

@dataclass
class EnsembleEstimate:
    t: float
    x: np.ndarray
    density: np.ndarray
    ci_halfwidth: np.ndarray
    r: np.ndarray
    r_edges: np.ndarray
    pair_correlation: np.ndarray
    pair_ci: np.ndarray
    n_replicas: int
    eps: float

    def write_density_csv(self, path, append: bool = False) -> Path:
        return _write_rows(path, "t,x,density,ci", [(self.t, *row) for row in
                           zip(self.x, self.density, self.ci_halfwidth)], append)

    def write_pair_csv(self, path, append: bool = False) -> Path:
        return _write_rows(path, "t,r,pair,ci", [(self.t, *row) for row in
                           zip(self.r, self.pair_correlation, self.pair_ci)], append)


def _write_rows(path, header, rows, append):
    path = Path(path)
    fresh = not (append and path.exists())
    with open(path, "w" if fresh else "a") as fh:
        if fresh:
            fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path


def _ci(samples: np.ndarray) -> np.ndarray:
    return 1.96 * samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])


def pair_distances(points: np.ndarray, box_length: float) -> np.ndarray:
    """Minimum-image distances of all unordered pairs."""
    pts = np.asarray(points, dtype=float)
    if pts.size < 2:
        return np.zeros(0)
    i, j = np.triu_indices(pts.size, 1)
    d = np.abs(pts[i] - pts[j]) % box_length
    return np.minimum(d, box_length - d)


def estimate_correlations(snapshots, t: float, grid: Grid, eps: float, n_r_bins: int = 16) -> EnsembleEstimate:
    """Rescaled one- and two-point correlation estimates from replica snapshots.

    density(x_i) = eps * (points in the cell centred at x_i) / h, and the pair
    function on distance bins is eps^2 * (ordered pairs) / (2 L dr), the
    radial average of k^(2). Confidence half-widths are 1.96 standard errors
    over replicas.
    """
    snaps = list(snapshots)
    if len(snaps) < 2:
        raise ValueError("need at least two replicas")
    L, M, h = grid.box_length, grid.points, grid.step
    dens = np.array([np.bincount(grid.index_of(s), minlength=M) if s.size else np.zeros(M) for s in snaps],
                    dtype=float) * eps / h
    edges = np.linspace(0.0, 0.5 * L, n_r_bins + 1)
    dr = edges[1] - edges[0]
    pairs = np.array([np.histogram(pair_distances(s, L), bins=edges)[0] for s in snaps], dtype=float)
    pairs *= 2 * eps ** 2 / (2 * L * dr)
    return EnsembleEstimate(t, grid.x.copy(), dens.mean(axis=0), _ci(dens), 0.5 * (edges[1:] + edges[:-1]),
                            edges, pairs.mean(axis=0), _ci(pairs), len(snaps), eps)


def binned_autocorrelation(est: EnsembleEstimate) -> np.ndarray:
    """Radial bin averages of (1/L) int rho(x) rho(x + r) dx from the density estimate."""
    rho = est.density
    M = rho.size
    h = est.x[1] - est.x[0]
    auto = np.array([np.mean(rho * np.roll(rho, -d)) for d in range(M)])
    dist = np.minimum(np.arange(M), M - np.arange(M)) * h
    which = np.clip(np.searchsorted(est.r_edges, dist, side="right") - 1, 0, len(est.r) - 1)
    out = np.full(len(est.r), np.nan)
    for b in range(len(est.r)):
        sel = which == b
        if sel.any():
            out[b] = auto[sel].mean()
    return out


def chaos_factorization_gap(est: EnsembleEstimate) -> float:
    """sup over distance bins of |pair - density (x) density| / mean(density)^2."""
    ref = binned_autocorrelation(est)
    scale = float(est.density.mean()) ** 2
    if scale == 0:
        return 0.0
    ok = ~np.isnan(ref)
    return float(np.max(np.abs(est.pair_correlation[ok] - ref[ok])) / scale)


def write_provenance(path, data: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, default=str))
    return path
