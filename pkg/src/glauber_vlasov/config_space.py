"""Finite configurations, truncated function families and the Lebesgue-Poisson calculus.

A function on finite configurations is stored as a sequence of symmetric
tensors ``levels[n]`` of shape ``(M,) * n`` holding its values on n-point
grid configurations. Integrals against the Lebesgue-Poisson measure use the
rectangle rule with the 1/n! factor applied analytically.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .grid import Grid

MAX_ENUMERATED_POINTS = 25


@dataclass(frozen=True, eq=False)
class Configuration:
    """Finite point set in the periodic box, stored in canonical (sorted) order."""

    points: np.ndarray
    box_length: float = 10.0

    def __post_init__(self):
        pts = np.sort(np.asarray(self.points, dtype=float).ravel())
        if pts.size and (pts[0] < 0 or pts[-1] >= self.box_length):
            raise ValueError("configuration points must lie in [0, L)")
        if pts.size > 1 and np.any(np.diff(pts) == 0):
            raise ValueError("configuration points must be distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.size

    def __iter__(self):
        return iter(self.points.tolist())

    def __eq__(self, other):
        return (
            isinstance(other, Configuration)
            and self.box_length == other.box_length
            and np.array_equal(self.points, other.points)
        )

    def __hash__(self):
        return hash((self.box_length, self.points.tobytes()))

    def __repr__(self):
        return f"Configuration({self.points.tolist()})"

    def union(self, other: "Configuration") -> "Configuration":
        return Configuration(np.concatenate([self.points, other.points]), self.box_length)

    def subsets(self):
        """All 2^|eta| subconfigurations, smallest first."""
        pts = self.points
        for r in range(pts.size + 1):
            for idx in itertools.combinations(range(pts.size), r):
                yield Configuration(pts[list(idx)], self.box_length)

    def without(self, sub: "Configuration") -> "Configuration":
        keep = ~np.isin(self.points, sub.points)
        return Configuration(self.points[keep], self.box_length)


@dataclass(frozen=True)
class NormParams:
    c: float
    alpha: float = 0.9

    def __post_init__(self):
        if self.c <= 1:
            raise ValueError("C must exceed 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


def symmetrize(t: np.ndarray) -> np.ndarray:
    if t.ndim < 2:
        return t
    perms = list(itertools.permutations(range(t.ndim)))
    out = np.zeros_like(t)
    for p in perms:
        out += np.transpose(t, p)
    return out / len(perms)


class GridFunctionFamily:
    """Truncated sequence (G^(0), ..., G^(n_max)) of symmetric grid tensors."""

    def __init__(self, levels: Sequence, grid: Grid, symmetric: bool = False):
        self.grid = grid
        M = grid.points
        out = []
        for n, lev in enumerate(levels):
            a = np.array(lev, dtype=float)
            if a.shape != (M,) * n:
                raise ValueError(f"level {n} has shape {a.shape}, expected {(M,) * n}")
            out.append(a if symmetric else symmetrize(a))
        if not out:
            raise ValueError("need at least level 0")
        self.levels = out

    @property
    def n_max(self) -> int:
        return len(self.levels) - 1

    @property
    def grid_step(self) -> float:
        return self.grid.step

    def __repr__(self):
        return f"GridFunctionFamily(n_max={self.n_max}, M={self.grid.points}, L={self.grid.box_length})"

    # construction helpers

    @classmethod
    def zeros(cls, grid: Grid, n_max: int = 3) -> "GridFunctionFamily":
        return cls([np.zeros((grid.points,) * n) for n in range(n_max + 1)], grid, symmetric=True)

    @classmethod
    def indicator(cls, level: int, grid: Grid, n_max: int = 3) -> "GridFunctionFamily":
        """Constant 1 on the n-point configurations, zero elsewhere."""
        g = cls.zeros(grid, n_max)
        g.levels[level][...] = 1.0
        return g

    @classmethod
    def lp_exponent(cls, f, grid: Grid, n_max: int = 3) -> "GridFunctionFamily":
        """e_lambda(f) restricted to levels <= n_max; f is a grid vector, scalar or callable."""
        vals = _point_values(f, grid)
        levels = [np.array(1.0)]
        for _ in range(n_max):
            levels.append(np.multiply.outer(levels[-1], vals))
        return cls(levels, grid, symmetric=True)

    @classmethod
    def random(cls, rng: np.random.Generator, grid: Grid, n_max: int = 3,
               level_norms: Sequence[float] | None = None, modes: int = 3,
               c: float = 1.0) -> "GridFunctionFamily":
        """Random smooth symmetric family.

        Each level is a symmetrized sum of products of low-order Fourier
        modes, rescaled so that its contribution to ``norm_lc(., c)`` equals
        ``level_norms[n]`` (default 1 for every level).
        """
        level_norms = [1.0] * (n_max + 1) if level_norms is None else list(level_norms)
        x = grid.x * 2 * np.pi / grid.box_length
        levels = [np.array(rng.uniform(-1, 1))]
        for n in range(1, n_max + 1):
            acc = np.zeros((grid.points,) * n)
            for _ in range(3):
                term = np.array(rng.normal())
                for _ in range(n):
                    k = rng.integers(0, modes + 1)
                    u = rng.normal() + np.cos(k * x + rng.uniform(0, 2 * np.pi))
                    term = np.multiply.outer(term, u)
                acc += term
            levels.append(symmetrize(acc))
        fam = cls(levels, grid, symmetric=True)
        for n, target in enumerate(level_norms):
            cur = _level_norm(fam.levels[n], n, grid.step, c)
            fam.levels[n] *= target / cur if cur > 0 else 0.0
        return fam

    # arithmetic

    def _check(self, other):
        if not isinstance(other, GridFunctionFamily):
            return NotImplemented
        if other.grid != self.grid or other.n_max != self.n_max:
            raise ValueError("families live on different grids or truncations")
        return other

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return GridFunctionFamily([a + b for a, b in zip(self.levels, other.levels)], self.grid, True)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return GridFunctionFamily([a - b for a, b in zip(self.levels, other.levels)], self.grid, True)

    def __mul__(self, s: float):
        return GridFunctionFamily([s * a for a in self.levels], self.grid, True)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def copy(self) -> "GridFunctionFamily":
        return GridFunctionFamily([a.copy() for a in self.levels], self.grid, True)

    def map_levels(self, fn: Callable[[int, np.ndarray], np.ndarray]) -> "GridFunctionFamily":
        return GridFunctionFamily([fn(n, a) for n, a in enumerate(self.levels)], self.grid, True)

    def is_symmetric(self, atol: float = 1e-12) -> bool:
        return all(np.allclose(a, symmetrize(a), rtol=0, atol=atol) for a in self.levels)

    def max_abs_diff(self, other: "GridFunctionFamily") -> float:
        self._check(other)
        return max(float(np.max(np.abs(a - b))) if a.size else 0.0
                   for a, b in zip(self.levels, other.levels))

    def evaluate(self, eta) -> float:
        """Value at a configuration whose points sit on grid nodes (0 above n_max)."""
        pts = np.asarray(getattr(eta, "points", eta), dtype=float)
        n = pts.size
        if n > self.n_max:
            return 0.0
        idx = tuple(self.grid.index_of(pts))
        return float(self.levels[n][idx])

    # serialization

    def save(self, directory, stem: str = "family") -> list[Path]:
        """One CSV per level (``n,i1..in,value``) plus a JSON sidecar."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        written = []
        for n, a in enumerate(self.levels):
            path = d / f"{stem}_level{n}.csv"
            idx = np.indices(a.shape).reshape(n, -1).T if n else np.zeros((1, 0), dtype=int)
            rows = np.column_stack([np.full(len(idx), n), idx]).astype(int)
            header = ",".join(["n", *[f"i{j + 1}" for j in range(n)], "value"])
            with open(path, "w") as fh:
                fh.write(header + "\n")
                for r, v in zip(rows, a.ravel()):
                    fh.write(",".join(map(str, r)) + f",{float(v)!r}\n")
            written.append(path)
        meta = {"n_max": self.n_max, "grid_points": self.grid.points, "box_length": self.grid.box_length}
        side = d / f"{stem}.json"
        side.write_text(json.dumps(meta, indent=2))
        written.append(side)
        return written

    @classmethod
    def load(cls, directory, stem: str = "family") -> "GridFunctionFamily":
        d = Path(directory)
        meta = json.loads((d / f"{stem}.json").read_text())
        grid = Grid(meta["box_length"], meta["grid_points"])
        levels = []
        for n in range(meta["n_max"] + 1):
            data = np.loadtxt(d / f"{stem}_level{n}.csv", delimiter=",", skiprows=1, ndmin=2)
            a = np.zeros((grid.points,) * n)
            idx = tuple(data[:, 1:1 + n].astype(int).T)
            a[idx] = data[:, -1] if n else data[0, -1]
            levels.append(a)
        return cls(levels, grid, symmetric=True)


def _point_values(f, grid: Grid) -> np.ndarray:
    if callable(f):
        return np.asarray(f(grid.x), dtype=float) * np.ones(grid.points)
    return np.asarray(f, dtype=float) * np.ones(grid.points)


def _level_norm(a: np.ndarray, n: int, h: float, c: float) -> float:
    return float(c ** n * h ** n / math.factorial(n) * np.abs(a).sum())


# Lebesgue-Poisson calculus

def lp_exponent(f: Callable, eta) -> float:
    """Product of f over the points of eta (1 for the empty configuration)."""
    pts = np.asarray(getattr(eta, "points", eta), dtype=float)
    if pts.size == 0:
        return 1.0
    return float(np.prod(f(pts)))


def lp_integral(F: GridFunctionFamily, weight: float | None = None) -> float:
    """sum_n (1/n!) int F^(n) dx^n, optionally with weight^n per level."""
    h = F.grid_step
    w = 1.0 if weight is None else weight
    return float(sum(w ** n * h ** n / math.factorial(n) * a.sum() for n, a in enumerate(F.levels)))


def norm_lc(G: GridFunctionFamily, params) -> float:
    c = getattr(params, "c", params)
    return float(sum(_level_norm(a, n, G.grid_step, c) for n, a in enumerate(G.levels)))


def level_norms_lc(G: GridFunctionFamily, c: float) -> list[float]:
    return [_level_norm(a, n, G.grid_step, c) for n, a in enumerate(G.levels)]


def norm_kc(k: GridFunctionFamily, params) -> float:
    c = getattr(params, "c", params)
    return max(c ** -n * float(np.max(np.abs(a))) for n, a in enumerate(k.levels))


def level_norms_kc(k: GridFunctionFamily, c: float) -> list[float]:
    return [c ** -n * float(np.max(np.abs(a))) for n, a in enumerate(k.levels)]


def rescale_r_eps(k: GridFunctionFamily, eps: float) -> GridFunctionFamily:
    """(R_eps k)(eta) = eps^|eta| k(eta)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return k.map_levels(lambda n, a: eps ** n * a)


def _as_config(points, box_length):
    return Configuration(points, box_length)


def k_transform(G: Callable[[Configuration], float], gamma: Configuration) -> float:
    """KG(gamma): sum of G over all subconfigurations of a finite gamma."""
    if len(gamma) > MAX_ENUMERATED_POINTS:
        raise OverflowError(f"subset enumeration over {len(gamma)} points is infeasible")
    return float(sum(G(eta) for eta in gamma.subsets()))


def k_inverse(F: Callable[[Configuration], float], eta: Configuration) -> float:
    """Moebius inversion: sum over xi in eta of (-1)^|eta \\ xi| F(xi)."""
    if len(eta) > MAX_ENUMERATED_POINTS:
        raise OverflowError(f"subset enumeration over {len(eta)} points is infeasible")
    n = len(eta)
    return float(sum((-1) ** (n - len(xi)) * F(xi) for xi in eta.subsets()))


def minlos_identity_residual(H, grid: Grid, n_max: int = 3, max_rows: int = 2_000_000) -> float:
    """|LHS - RHS| of the Minlos identity under level truncation.

    ``H(xi, eta, zeta)`` is vectorized: each argument is an array of shape
    ``(rows, size)`` of grid coordinates and the result has shape ``(rows,)``.
    The left side integrates configurations with at most ``n_max`` points;
    the right side integrates each of xi and eta up to ``n_max`` points, so
    the residual is the part of the right side with more than ``n_max``
    points in total.
    """
    if grid.points ** (2 * n_max) > max_rows:
        raise ValueError("grid too fine for exhaustive Minlos quadrature; use fewer points")
    h, x = grid.step, grid.x

    def tuples(n):
        if n == 0:
            return np.zeros((1, 0))
        return x[np.indices((grid.points,) * n).reshape(n, -1).T]

    lhs = 0.0
    for n in range(n_max + 1):
        y = tuples(n)
        acc = 0.0
        for r in range(n + 1):
            for S in itertools.combinations(range(n), r):
                rest = [j for j in range(n) if j not in S]
                acc += np.sum(H(y[:, list(S)], y[:, rest], y))
        lhs += h ** n / math.factorial(n) * acc
    rhs = 0.0
    for a in range(n_max + 1):
        for b in range(n_max + 1):
            y = tuples(a + b)
            val = np.sum(H(y[:, :a], y[:, a:], y))
            rhs += h ** (a + b) / (math.factorial(a) * math.factorial(b)) * val
    return float(abs(lhs - rhs))
