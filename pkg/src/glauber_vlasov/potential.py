"""Pair potentials on the periodic box and the constants the bounds depend on.

All potentials are radial, non-negative and cut off below half the box, so
the periodized kernel phi_L(x) = sum_k phi(x + kL) reduces to phi evaluated
at the minimum-image distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .grid import Grid

FAMILIES = ("gaussian", "top_hat", "exp_decay", "tabulated")


@dataclass(frozen=True)
class Potential:
    """Radial interaction kernel.

    ``width`` is the gaussian standard deviation, the top-hat radius or the
    exponential decay length. ``table`` holds values of a tabulated potential
    on a uniform radial grid spanning [0, cutoff_radius].
    """

    family: str = "gaussian"
    amplitude: float = 1.0
    width: float = 0.5
    cutoff_radius: float = 4.5
    box_length: float = 10.0
    table: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown potential family {self.family!r}")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        if self.width <= 0:
            raise ValueError("width must be positive")
        if not 0 < self.cutoff_radius < 0.5 * self.box_length:
            raise ValueError("cutoff_radius must lie in (0, L/2)")
        if self.family == "top_hat" and self.width > self.cutoff_radius:
            raise ValueError("top_hat width exceeds cutoff_radius")
        if self.family == "tabulated":
            tab = np.asarray(self.table, dtype=float)
            if tab.ndim != 1 or tab.size < 2:
                raise ValueError("tabulated potential needs at least two table values")
            if np.any(tab < 0):
                raise ValueError("tabulated potential must be non-negative")
            object.__setattr__(self, "table", tuple(float(v) for v in tab))

    @classmethod
    def zero(cls, box_length: float = 10.0) -> "Potential":
        return cls("gaussian", 0.0, 0.5, min(4.5, 0.45 * box_length), box_length)

    @property
    def is_zero(self) -> bool:
        if self.family == "tabulated":
            return max(self.table) == 0.0
        return self.amplitude == 0.0

    def radial(self, r) -> np.ndarray:
        """phi as a function of distance r >= 0 (no periodization)."""
        r = np.abs(np.asarray(r, dtype=float))
        a, w = self.amplitude, self.width
        if self.family == "gaussian":
            out = a * np.exp(-0.5 * (r / w) ** 2)
        elif self.family == "exp_decay":
            out = a * np.exp(-r / w)
        elif self.family == "top_hat":
            # half value on the edge so that grid sums integrate exactly
            out = np.where(np.isclose(r, w, rtol=0, atol=1e-12), 0.5 * a, np.where(r < w, a, 0.0))
        else:
            tab = np.asarray(self.table)
            rr = np.linspace(0.0, self.cutoff_radius, tab.size)
            out = np.interp(r, rr, tab)
        return np.where(r < self.cutoff_radius, out, 0.0)

    def __call__(self, x) -> np.ndarray:
        """Periodized kernel phi_L(x)."""
        L = self.box_length
        r = np.mod(np.abs(np.asarray(x, dtype=float)), L)
        return self.radial(np.minimum(r, L - r))

    @property
    def analytic_max(self) -> float:
        if self.family == "tabulated":
            return float(max(self.table))
        return float(self.amplitude)


def eval_potential(p: Potential, x):
    return p(x)


@dataclass(frozen=True)
class PotentialConstants:
    beta: float
    c_phi: float
    phi_bar: float


def compute_constants(p: Potential, grid: Grid | None = None) -> PotentialConstants:
    """Integral, weak integral and sup of the periodized kernel.

    Integrals use the rectangle rule on ``grid`` so that they agree with every
    grid-level operator built from the same kernel.
    """
    grid = grid or Grid(p.box_length)
    _check_grid(p, grid)
    vals = p(grid.x)
    beta = float(grid.step * vals.sum())
    c_phi = float(grid.step * (-np.expm1(-vals)).sum())
    phi_bar = max(float(vals.max()), p.analytic_max) if not p.is_zero else 0.0
    return PotentialConstants(beta, c_phi, phi_bar)


def relative_energy(p: Potential, x: float, gamma) -> float:
    """E(x, gamma) = sum over y in gamma of phi_L(x - y)."""
    pts = np.asarray(getattr(gamma, "points", gamma), dtype=float)
    if pts.size == 0:
        return 0.0
    return float(p(x - pts).sum())


def _check_grid(p: Potential, grid: Grid):
    if not math.isclose(p.box_length, grid.box_length):
        raise ValueError("potential and grid disagree on the box length")


@lru_cache(maxsize=64)
def kernel_matrices(p: Potential, grid: Grid, eps: float | None = None):
    """Grid kernels used by the hierarchy operators.

    Returns ``(phi, F, g)`` with ``phi[i, j] = phi_L(x_i - x_j)``. For
    ``eps=None`` (the limiting kernels) ``F`` is ``None`` and ``g = -phi``;
    otherwise ``F = exp(-eps*phi)`` and ``g = expm1(-eps*phi)/eps``.
    """
    _check_grid(p, grid)
    phi = p(grid.displacement_matrix())
    phi.setflags(write=False)
    if eps is None:
        g = -phi
        g.setflags(write=False)
        return phi, None, g
    F = np.exp(-eps * phi)
    g = np.expm1(-eps * phi) / eps
    F.setflags(write=False)
    g.setflags(write=False)
    return phi, F, g
