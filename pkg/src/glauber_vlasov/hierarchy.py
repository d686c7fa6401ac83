"""Operators on truncated correlation-function hierarchies.

Quasi-observables G (primal side, norm ``||.||_C``) and correlation
functions k (dual side, norm ``||.||_{K_C}``) are ``GridFunctionFamily``
objects. Every operator here has the same shape: a sum over subsets of the
argument configuration, an integral over extra points, and weights built
from the relative energy E(y, w) = sum_{x in w} phi(y - x). The weights
depend on the extra points w only through the multiset w, so each w-integral
is evaluated once per sorted tuple of grid indices (with its multiplicity)
and every term becomes a grid tensor contraction.

Integrals over extra points are truncated: ``omega_max`` bounds the number
of points in the primal omega-integral and ``xi_max`` the number of points
in the dual xi-integral. Output levels above ``n_max`` are dropped.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.optimize import bisect

from .config_space import GridFunctionFamily, norm_lc, symmetrize
from .potential import Potential, kernel_matrices

_OUT = "abcdefgh"
_INT = "pqrstuvw"


def alpha_1(z: float, beta: float, c: float) -> float:
    """Lower end of the admissible alpha interval.

    x1 < 1 is the small root of x*exp(-x) = z*beta, found by bisection.
    """
    zb = z * beta
    if not 0 <= zb < math.exp(-1):
        raise ValueError("alpha_1 needs z*beta < 1/e")
    cb = c * beta
    if cb > 1:
        return max(0.5, 1.0 / cb, 1.0 / c)
    x1 = 0.0 if zb == 0 else bisect(lambda x: x * math.exp(-x) - zb, 0.0, 1.0, xtol=1e-15)
    return max(0.5, x1 / cb if cb > 0 else 0.0, 1.0 / c)


@dataclass(frozen=True)
class ScalingRegime:
    z: float
    c: float = 1.2
    alpha: float = 0.9
    eps: float = 0.1
    delta: float = 0.1
    beta: float = 0.0

    def __post_init__(self):
        if self.z < 0:
            raise ValueError("activity z must be non-negative")
        if self.c <= 1:
            raise ValueError("C must exceed 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")

    def with_(self, **kw) -> "ScalingRegime":
        return replace(self, **kw)

    @property
    def smallz_ok(self) -> bool:
        return self.z * math.exp(self.beta * self.c) <= self.c

    @property
    def z_max(self) -> float:
        c, b = self.c, self.beta
        return min(c * math.exp(-c * b), 2 * c * math.exp(-2 * c * b))

    @property
    def verysmallz_ok(self) -> bool:
        if self.z > self.z_max:
            return False
        if math.isclose(self.c * self.beta, math.log(2)):
            return self.z < self.c / 2
        return True

    @property
    def zbeta_ok(self) -> bool:
        return self.z * self.beta <= math.exp(-1)

    @property
    def alpha1(self) -> float:
        return alpha_1(self.z, self.beta, self.c)

    @property
    def alpha2(self) -> float:
        return max(self.alpha1, self.z / self.c)

    @property
    def alpha_ok(self) -> bool:
        try:
            return self.alpha1 < self.alpha < 1
        except ValueError:
            return False

    def predicates(self) -> dict:
        return {
            "smallz_ok": self.smallz_ok,
            "verysmallz_ok": self.verysmallz_ok,
            "alpha_ok": self.alpha_ok,
            "zbeta_ok": self.zbeta_ok,
        }


# contraction machinery

@lru_cache(maxsize=4096)
def _path(subs: tuple, out: str, dims: tuple):
    """Cheapest pairwise contraction order for letter strings ``subs``.

    Exhaustive search (operand counts are small). The cost of a pair is the
    flop count of the batched matmul that evaluates it plus a weighted count
    of the memory it touches, since outer products are bandwidth bound.
    """
    size = dict(dims)
    best = [math.inf, ()]

    def rec(items, cost, steps):
        if cost >= best[0]:
            return
        if len(items) == 1:
            best[0], best[1] = cost, tuple(steps)
            return
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                rest = [t for k, t in enumerate(items) if k not in (i, j)]
                alive = set(out).union(*rest)
                union = items[i] | items[j]
                res = frozenset(c for c in union if c in alive)
                traffic = sum(math.prod(size[c] for c in t) for t in (items[i], items[j], res))
                step = math.prod(size[c] for c in union) + 8 * traffic
                rec(rest + [res], cost + step, steps + [(i, j)])

    rec([frozenset(s) for s in subs], 0.0, [])
    return best[1]


def _pair(a: np.ndarray, sa: str, b: np.ndarray, sb: str, keep: set):
    """Contract two operands as one batched matrix product.

    Shared letters that must survive become batch axes, the other shared
    letters are summed; every other letter is kept.
    """
    batch = [c for c in sa if c in sb and c in keep]
    con = [c for c in sa if c in sb and c not in keep]
    left = [c for c in sa if c not in sb]
    right = [c for c in sb if c not in sa]
    dim = dict(zip(sa, a.shape)) | dict(zip(sb, b.shape))
    size = lambda cs: math.prod(dim[c] for c in cs)
    A = np.transpose(a, [sa.index(c) for c in batch + left + con]).reshape(size(batch), size(left), size(con))
    B = np.transpose(b, [sb.index(c) for c in batch + con + right]).reshape(size(batch), size(con), size(right))
    out = batch + left + right
    if A.shape[2] == 1:
        res = A * B
    elif A.shape[1] == 1 and B.shape[2] == 1:
        res = np.einsum("bk,bk->b", A[:, 0, :], B[:, :, 0])
    else:
        res = np.matmul(A, B)
    return res.reshape([dim[c] for c in out]), "".join(out)


def _contract(operands, out: str, sizes: dict) -> np.ndarray:
    """Contract ``[(array, letters), ...]`` onto the output letters ``out``.

    Each pair is evaluated with BLAS-backed batched matmul in the order found
    by ``_path``. Output letters carried by no operand are constant
    directions; they are broadcast at the end using ``sizes``.
    """
    present = "".join(ch for ch in out if any(ch in s for _, s in operands))
    ops = [(np.asarray(a), s) for a, s in operands]
    reduced = []
    for i, (a, s) in enumerate(ops):
        others = "".join(t for j, (_, t) in enumerate(ops) if j != i) + present
        lone = [ax for ax, c in enumerate(s) if c not in others]
        if lone:
            a = a.sum(axis=tuple(lone))
            s = "".join(c for c in s if c in others)
        reduced.append((a, s))
    ops = reduced
    if len(ops) > 1:
        dims = {}
        for a, s in ops:
            dims.update(zip(s, a.shape))
        for step in _path(tuple(s for _, s in ops), present, tuple(sorted(dims.items()))):
            picked = [ops[i] for i in step]
            ops = [o for i, o in enumerate(ops) if i not in step]
            rest = set("".join(s for _, s in ops) + present)
            a, s = picked[0]
            for idx in range(1, len(picked)):
                b, sb = picked[idx]
                later = "".join(t for _, t in picked[idx + 1:])
                a, s = _pair(a, s, b, sb, rest | set(later))
            ops.append((a, s))
    a, s = ops[0]
    res = np.einsum(s + "->" + present, a)
    if present == out:
        return res
    shape = [sizes[ch] if ch in present else 1 for ch in out]
    return np.broadcast_to(res.reshape(shape), tuple(sizes[ch] for ch in out))


@lru_cache(maxsize=16)
def _omega_index(M: int, m: int):
    """Sorted m-tuples of grid indices.

    Returns (tuples (T, m), multiplicity (T,), flat ids into the full
    (M,)*m grid, idmap (M,)*m -> tuple id). Everything the operators
    integrate or evaluate depends on omega only through its multiset, so
    one representative per multiset suffices.
    """
    tuples = np.array(list(itertools.combinations_with_replacement(range(M), m)), dtype=np.intp).reshape(-1, m)
    T = tuples.shape[0]
    mult = np.full(T, math.factorial(m), dtype=float)
    for t in range(T):
        for c in set(tuples[t].tolist()):
            mult[t] /= math.factorial(int((tuples[t] == c).sum()))
    flat = np.ravel_multi_index(tuples.T, (M,) * m) if m else np.zeros(1, dtype=np.intp)
    idmap = np.empty((M,) * m, dtype=np.intp)
    for perm in itertools.permutations(range(m)):
        idmap[tuple(tuples[:, perm].T)] = np.arange(T)
    for arr in (tuples, mult, flat, idmap):
        arr.setflags(write=False)
    return tuples, mult, flat, idmap


@lru_cache(maxsize=32)
def _omega_weights(p: Potential, grid, eps: float | None, m: int):
    """Weights against the sorted m-tuples omega, as (M, T) matrices.

    f[x, t] = exp(-eps E(x, omega_t)) and g[x, t] = expm1(-eps E(x, omega_t))/eps
    with E(x, omega) = sum_i phi(x - omega_i); in the limiting case
    (eps None) f = 1, returned as ``None``, and g = -E.
    """
    phi = kernel_matrices(p, grid, None)[0]
    tuples = _omega_index(grid.points, m)[0]
    E = phi[:, tuples].sum(axis=2)
    if eps is None:
        f, g = None, -E
    else:
        f, g = np.exp(-eps * E), np.expm1(-eps * E) / eps
    for arr in (f, g):
        if arr is not None:
            arr.setflags(write=False)
    return f, g


def _primal(G: GridFunctionFamily, kernels, m_range, coeff: Callable, diag: Callable | None):
    """Generic primal operator.

    out_n(y) = diag(n) G_n(y) + sum_{k, m} C(n,k) coeff(k, m) (1/m!)
      int G_{k+m}(y_1..y_k, w) prod_{j<=k} f(y_j; w) prod_{j>k} g(y_j; w) dw

    The m-fold w-integral runs over sorted tuples with multiplicities. For
    fixed (n, m) the k-terms share their trailing g factors, so they are
    accumulated Horner-style and summed over w by a single matrix product.
    """
    grid, N = G.grid, G.n_max
    M, h = grid.points, grid.step
    out = []
    for n in range(N + 1):
        acc = np.zeros((M,) * n)
        if diag is not None:
            acc = acc + diag(n) * G.levels[n]
        for m in m_range:
            if m == 0:
                continue
            _, mult, flat, _ = _omega_index(M, m)
            f, g = _omega_weights(*kernels, m)
            T = mult.size
            terms = {}
            for k in range(n + 1):
                c = coeff(k, m) if k + m <= N else 0
                if c == 0:
                    continue
                scale = math.comb(n, k) * c * h ** m / math.factorial(m)
                B = G.levels[k + m].reshape((M,) * k + (M ** m,))[..., flat] * (mult * scale)
                if f is not None:
                    for i in range(k):
                        B = B * f.reshape((M,) + (1,) * (k - 1 - i) + (T,))
                terms[k] = B
            if not terms:
                continue
            part = terms[n].sum(axis=-1) if n in terms else 0.0
            V = None
            for j in range(n):
                if j in terms:
                    V = terms[j] if V is None else V + terms[j]
                if V is not None and j < n - 1:
                    V = V[..., None, :] * g
            if V is not None:
                part = part + (V.reshape(-1, T) @ g.T).reshape((M,) * n)
            acc = acc + symmetrize(np.asarray(part))
        out.append(acc)
    return GridFunctionFamily(out, grid, symmetric=True)


def _dual(k: GridFunctionFamily, kernels, m_range, coeff: Callable, xi_max: int, diag: Callable | None):
    """Generic dual operator.

    out_n(y) = diag(n) k_n(y) + sum_{m, j} C(n,m) coeff(n, m) (1/j!)
      int prod_{i<=j} g(x_i; y_1..y_m) prod_{l>m} f(y_l; y_1..y_m)
          k_{j+n-m}(x_1..x_j, y_{m+1}..y_n) dx
    where y_1..y_m play the role of omega. Each term is evaluated once per
    sorted omega tuple and gathered back onto the full grid.
    """
    grid, N = k.grid, k.n_max
    M, h = grid.points, grid.step
    out = []
    for n in range(N + 1):
        acc = np.zeros((M,) * n)
        if diag is not None:
            acc = acc + diag(n) * k.levels[n]
        Y = _OUT[:n]
        for m in m_range:
            if m > n:
                continue
            c = coeff(n, m)
            if c == 0:
                continue
            if m == 0:
                acc = acc + c * k.levels[n]
                continue
            tuples, _, _, idmap = _omega_index(M, m)
            f, g = _omega_weights(*kernels, m)
            rest = Y[m:]
            sizes = dict.fromkeys(rest, M) | {"t": tuples.shape[0]}
            fops = [] if f is None else [(f, y + "t") for y in rest]
            comp = None
            for j in range(0, xi_max + 1):
                lev = j + n - m
                if lev > N:
                    continue
                X = _INT[:j]
                ops = [(k.levels[lev], X + rest)] + fops + [(g, x + "t") for x in X]
                part = _contract(ops, "t" + rest, sizes) * (h ** j / math.factorial(j))
                comp = part if comp is None else comp + part
            if comp is None:
                continue
            full = np.asarray(comp)[idmap]
            acc = acc + math.comb(n, m) * c * symmetrize(full)
        out.append(acc)
    return GridFunctionFamily(out, k.grid, symmetric=True)


def _kern(p: Potential, G: GridFunctionFamily, eps: float | None):
    return p, G.grid, eps


# primal generators and contractions

def apply_l_v(G: GridFunctionFamily, reg: ScalingRegime, p: Potential) -> GridFunctionFamily:
    """Limiting generator: -|eta| G + z sum_xi int G(xi+x) e(-phi(x-.), eta\\xi) dx."""
    return _primal(G, _kern(p, G, None), (1,), lambda k, m: reg.z, lambda n: -n)


def apply_l_ren(G: GridFunctionFamily, reg: ScalingRegime, p: Potential) -> GridFunctionFamily:
    """Renormalized generator at scale ``reg.eps``."""
    return _primal(G, _kern(p, G, reg.eps), (1,), lambda k, m: reg.z, lambda n: -n)


def _contraction_coeff(reg: ScalingRegime, delta: float):
    return lambda k, m: (1 - delta) ** k * (reg.z * delta) ** m


def _q0(delta):
    return lambda n: (1 - delta) ** n


def apply_q_delta(G, reg: ScalingRegime, p: Potential, omega_max: int = 2, delta: float | None = None):
    d = reg.delta if delta is None else delta
    return _primal(G, _kern(p, G, None), range(1, omega_max + 1), _contraction_coeff(reg, d), _q0(d))


def apply_p_delta_eps(G, reg: ScalingRegime, p: Potential, omega_max: int = 2, delta: float | None = None):
    d = reg.delta if delta is None else delta
    return _primal(G, _kern(p, G, reg.eps), range(1, omega_max + 1), _contraction_coeff(reg, d), _q0(d))


# dual operators

def _dual_coeff(reg: ScalingRegime, delta: float):
    return lambda n, m: (1 - delta) ** (n - m) * (reg.z * delta) ** m


def apply_q_delta_star(k, reg: ScalingRegime, p: Potential, xi_max: int = 2, delta: float | None = None):
    d = reg.delta if delta is None else delta
    return _dual(k, _kern(p, k, None), range(0, k.n_max + 1), _dual_coeff(reg, d), xi_max, None)


def apply_p_delta_eps_star(k, reg: ScalingRegime, p: Potential, xi_max: int = 2, delta: float | None = None):
    d = reg.delta if delta is None else delta
    return _dual(k, _kern(p, k, reg.eps), range(0, k.n_max + 1), _dual_coeff(reg, d), xi_max, None)


def apply_l_v_star(k, reg: ScalingRegime, p: Potential, xi_max: int = 2):
    return _dual(k, _kern(p, k, None), (1,), lambda n, m: reg.z, xi_max, lambda n: -n)


def apply_l_ren_star(k, reg: ScalingRegime, p: Potential, xi_max: int = 2):
    return _dual(k, _kern(p, k, reg.eps), (1,), lambda n, m: reg.z, xi_max, lambda n: -n)


# truncation tails

def primal_truncation_tail(G: GridFunctionFamily, reg: ScalingRegime, omega_max: int,
                           delta: float | None = None, c: float | None = None) -> float:
    """A priori L_C-norm bound of the omega-terms dropped by ``omega_max``.

    Splitting each dropped term by the level n = |xi| + |omega| of G it
    reads gives sum_n ||G^(n)||_C sum_{m > omega_max} C(n,m) (1-d)^(n-m) q^m
    with q = z d exp(C beta) / C.
    """
    d = reg.delta if delta is None else delta
    c = reg.c if c is None else c
    q = reg.z * d * math.exp(c * reg.beta) / c
    h = G.grid_step
    tail = 0.0
    for n, a in enumerate(G.levels):
        w = sum(math.comb(n, m) * (1 - d) ** (n - m) * q ** m for m in range(omega_max + 1, n + 1))
        if w:
            tail += w * c ** n * h ** n / math.factorial(n) * float(np.abs(a).sum())
    return tail


def dual_truncation_tail(reg: ScalingRegime, xi_max: int, n_max: int, k_norm: float, c_k: float,
                         delta: float | None = None, which: str = "step") -> float:
    """A priori K_C-norm bound of the xi-terms lost to truncation.

    Assumes |k(eta)| <= k_norm * c_k^|eta| on every level, including the
    levels above ``n_max`` that the truncated family does not store. ``which``
    is ``"step"`` for Q*/P* and ``"generator"`` for L_V*/L_ren*.
    """
    d = reg.delta if delta is None else delta
    C, b, z = reg.c, reg.beta, reg.z
    worst = 0.0
    for n in range(n_max + 1):
        if which == "generator":
            ms = [(1, z)] if n >= 1 else []
        else:
            ms = [(m, (1 - d) ** (n - m) * (z * d) ** m) for m in range(1, n + 1)]
        tot = 0.0
        for m, coef in ms:
            J = min(xi_max, n_max - n + m)
            x = m * b * c_k
            tail = math.exp(x) - sum(x ** j / math.factorial(j) for j in range(J + 1))
            tot += math.comb(n, m) * coef * k_norm * c_k ** (n - m) * max(tail, 0.0)
        worst = max(worst, tot / C ** n)
    return worst


# semigroups

def semigroup_evolve(G, t: float, n_steps: int, which: str, reg: ScalingRegime, p: Potential,
                     omega_max: int = 2, callback: Callable | None = None) -> GridFunctionFamily:
    """Q_delta^n G (which="V") or P_{delta,eps}^n G (which="ren"), delta = t/n_steps."""
    if t == 0:
        return G.copy()
    delta = _step(t, n_steps)
    op = {"V": apply_q_delta, "ren": apply_p_delta_eps}[which]
    cur = G
    for i in range(n_steps):
        cur = op(cur, reg, p, omega_max=omega_max, delta=delta)
        if callback is not None:
            callback(i + 1, cur)
    return cur


def semigroup_evolve_dual(k, t: float, n_steps: int, which: str, reg: ScalingRegime, p: Potential,
                          xi_max: int = 2, callback: Callable | None = None) -> GridFunctionFamily:
    """(Q*_delta)^n k or (P*_{delta,eps})^n k with delta = t/n_steps."""
    if t == 0:
        return k.copy()
    delta = _step(t, n_steps)
    op = {"V": apply_q_delta_star, "ren": apply_p_delta_eps_star}[which]
    cur = k
    for i in range(n_steps):
        cur = op(cur, reg, p, xi_max=xi_max, delta=delta)
        if callback is not None:
            callback(i + 1, cur)
    return cur


def _step(t: float, n_steps: int) -> float:
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    delta = t / n_steps
    if not 0 < delta < 1:
        raise ValueError(f"step t/n_steps = {delta} outside (0, 1)")
    return delta


def generator_approximation_residual(G, reg: ScalingRegime, p: Potential, which: str = "V",
                                     omega_max: int = 2) -> float:
    """||(Q_delta - 1)G/delta - L_V G||_C (or the P / L_ren pair)."""
    if which == "V":
        step, gen = apply_q_delta(G, reg, p, omega_max), apply_l_v(G, reg, p)
    else:
        step, gen = apply_p_delta_eps(G, reg, p, omega_max), apply_l_ren(G, reg, p)
    diff = (step - G) * (1.0 / reg.delta) - gen
    return norm_lc(diff, reg.c)


def contraction_power_gap(A_apply: Callable, B_apply: Callable, f, m: int, norm: Callable) -> float:
    """||A^m f - B^m f|| for two operators given as callables."""
    a, b = f, f
    for _ in range(m):
        a, b = A_apply(a), B_apply(b)
    return float(norm(a - b))
