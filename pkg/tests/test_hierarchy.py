import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conftest import default_regime
from glauber_vlasov import GridFunctionFamily, Potential, compute_constants, norm_kc, norm_lc
from glauber_vlasov.hierarchy import (
    ScalingRegime,
    alpha_1,
    apply_l_ren,
    apply_l_ren_star,
    apply_l_v,
    apply_l_v_star,
    apply_p_delta_eps,
    apply_p_delta_eps_star,
    apply_q_delta,
    apply_q_delta_star,
    contraction_power_gap,
    dual_truncation_tail,
    generator_approximation_residual,
    primal_truncation_tail,
    semigroup_evolve,
    semigroup_evolve_dual,
)


def _sample_tuples(rng, M, n, count=6):
    return [tuple(int(v) for v in rng.integers(0, M, size=n)) for _ in range(count)]


def _oracle_phi(pot):
    return oracles.periodic_gaussian(pot.amplitude, pot.width, pot.box_length, pot.cutoff_radius)


# regime predicates

def test_alpha_1_branches():
    # C*beta > 1 branch ignores the root
    assert alpha_1(0.1, 1.25, 1.2) == pytest.approx(max(0.5, 1 / 1.5, 1 / 1.2))
    # C*beta <= 1: x1 solves x exp(-x) = z beta
    # C*beta = 1 and z*beta = 0.6 exp(-0.6), so x1 = 0.6 dominates 1/2 and 1/C
    beta, c = 0.5, 2.0
    z = 0.6 * math.exp(-0.6) / beta
    assert alpha_1(z, beta, c) == pytest.approx(0.6, abs=1e-12)
    assert alpha_1(0.05, beta, c) == 0.5
    with pytest.raises(ValueError):
        alpha_1(1.0, 1.0, 1.2)


def test_default_regime_predicates(medium):
    _, _, consts = medium
    reg = default_regime(consts)
    assert reg.smallz_ok and reg.verysmallz_ok and reg.zbeta_ok and reg.alpha_ok
    assert not reg.with_(z=2 * reg.z_max).verysmallz_ok
    assert not reg.with_(alpha=0.6).alpha_ok


@pytest.mark.parametrize("kw", [dict(c=1.0), dict(alpha=1.0), dict(delta=1.0), dict(eps=0.0), dict(z=-1.0)])
def test_regime_rejects(kw):
    base = dict(z=0.1, c=1.2, alpha=0.9, eps=0.1, delta=0.1, beta=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        ScalingRegime(**base)


# brute-force agreement on a coarse grid

@pytest.mark.parametrize("eps", [None, 0.3])
def test_primal_step_matches_oracle(coarse, rng, eps):
    grid, pot, consts = coarse
    reg = default_regime(consts, delta=0.3, eps=eps or 1.0)
    G = GridFunctionFamily.random(rng, grid, 3)
    out = (apply_q_delta if eps is None else apply_p_delta_eps)(G, reg, pot, omega_max=2)
    phi = _oracle_phi(pot)
    for n in range(4):
        for eta in _sample_tuples(rng, grid.points, n, 4):
            ref = oracles.primal_step(G.levels, grid.x, grid.step, phi, eta, reg.z, reg.delta, eps, 2)
            assert out.levels[n][eta] == pytest.approx(ref, rel=1e-11, abs=1e-13)


@pytest.mark.parametrize("eps", [None, 0.3])
def test_primal_generator_matches_oracle(coarse, rng, eps):
    grid, pot, consts = coarse
    reg = default_regime(consts, eps=eps or 1.0)
    G = GridFunctionFamily.random(rng, grid, 3)
    out = (apply_l_v if eps is None else apply_l_ren)(G, reg, pot)
    phi = _oracle_phi(pot)
    for n in range(4):
        for eta in _sample_tuples(rng, grid.points, n, 4):
            ref = oracles.primal_generator(G.levels, grid.x, grid.step, phi, eta, reg.z, eps)
            assert out.levels[n][eta] == pytest.approx(ref, rel=1e-11, abs=1e-13)


@pytest.mark.parametrize("eps", [None, 0.3])
def test_dual_step_matches_oracle(coarse, rng, eps):
    grid, pot, consts = coarse
    reg = default_regime(consts, delta=0.3, eps=eps or 1.0)
    k = GridFunctionFamily.random(rng, grid, 3)
    out = (apply_q_delta_star if eps is None else apply_p_delta_eps_star)(k, reg, pot, xi_max=2)
    phi = _oracle_phi(pot)
    for n in range(4):
        for eta in _sample_tuples(rng, grid.points, n, 4):
            ref = oracles.dual_step(k.levels, grid.x, grid.step, phi, eta, reg.z, reg.delta, eps, 2)
            assert out.levels[n][eta] == pytest.approx(ref, rel=1e-11, abs=1e-13)


@pytest.mark.parametrize("eps", [None, 0.3])
def test_dual_generator_matches_oracle(coarse, rng, eps):
    grid, pot, consts = coarse
    reg = default_regime(consts, eps=eps or 1.0)
    k = GridFunctionFamily.random(rng, grid, 3)
    out = (apply_l_v_star if eps is None else apply_l_ren_star)(k, reg, pot, xi_max=2)
    phi = _oracle_phi(pot)
    for n in range(4):
        for eta in _sample_tuples(rng, grid.points, n, 4):
            ref = oracles.dual_generator(k.levels, grid.x, grid.step, phi, eta, reg.z, eps, 2)
            assert out.levels[n][eta] == pytest.approx(ref, rel=1e-11, abs=1e-13)


# documented examples

def test_empty_indicator_examples(medium):
    grid, pot, consts = medium
    reg = default_regime(consts)
    e0 = GridFunctionFamily.indicator(0, grid)
    assert norm_lc(apply_l_v(e0, reg, pot), 1.2) == 0
    assert norm_lc(apply_l_ren(e0, reg, pot), 1.2) == 0
    for op in (apply_q_delta, apply_p_delta_eps):
        assert op(e0, reg, pot).max_abs_diff(e0) == 0
    assert generator_approximation_residual(e0, reg, pot) == 0
    out = apply_l_v_star(e0, reg, pot)
    assert out.levels[0] == 0
    assert np.allclose(out.levels[1], reg.z)
    assert out.max_abs_diff(apply_l_ren_star(e0, reg, pot)) < 1e-15


def test_singleton_indicator_examples(medium):
    grid, pot, consts = medium
    reg = default_regime(consts)
    e1 = GridFunctionFamily.indicator(1, grid)
    out = apply_l_v(e1, reg, pot)
    assert float(out.levels[0]) == pytest.approx(reg.z * grid.box_length, rel=1e-14)
    assert np.allclose(out.levels[1], -1 - reg.z * consts.beta, rtol=1e-13)
    q = apply_q_delta(e1, reg, pot)
    assert float(q.levels[0]) == pytest.approx(reg.z * reg.delta * grid.box_length, rel=1e-14)


def test_zero_potential_reductions(medium, rng):
    grid, _, consts = medium
    zero = Potential.zero(grid.box_length)
    reg = default_regime(consts)
    G = GridFunctionFamily.random(rng, grid, 3)
    assert apply_p_delta_eps(G, reg, zero).max_abs_diff(apply_q_delta(G, reg, zero)) < 1e-13
    assert apply_l_ren(G, reg, zero).max_abs_diff(apply_l_v(G, reg, zero)) < 1e-13
    assert apply_p_delta_eps_star(G, reg, zero).max_abs_diff(apply_q_delta_star(G, reg, zero)) < 1e-13
    assert apply_l_ren_star(G, reg, zero).max_abs_diff(apply_l_v_star(G, reg, zero)) < 1e-13
    # hand-reduced L_V for phi = 0: -|eta| G(eta) + z int G(eta + x) dx
    out = apply_l_v(G, reg, zero)
    h = grid.step
    assert np.allclose(out.levels[1], -G.levels[1] + reg.z * h * G.levels[2].sum(axis=1), atol=1e-13)
    assert np.allclose(out.levels[2], -2 * G.levels[2] + reg.z * h * G.levels[3].sum(axis=2), atol=1e-13)


@pytest.mark.parametrize("delta", [0.5, 0.1, 0.01])
def test_product_state_closed_form(medium, delta):
    grid, pot, consts = medium
    reg = default_regime(consts, delta=delta)
    r = 0.3
    k = GridFunctionFamily.lp_exponent(r, grid)
    out = apply_q_delta_star(k, reg, pot)
    for n in range(4):
        ref = oracles.product_state_step(r, n, reg.z, delta, consts.beta, 2, 3)
        assert np.allclose(out.levels[n], ref, rtol=1e-13, atol=0)


def test_product_state_exact_within_tail(medium):
    grid, pot, consts = medium
    reg = default_regime(consts, delta=0.1)
    r = 0.3
    k = GridFunctionFamily.lp_exponent(r, grid)
    out = apply_q_delta_star(k, reg, pot)
    exact = GridFunctionFamily.lp_exponent((1 - reg.delta) * r + reg.z * reg.delta * math.exp(-consts.beta * r), grid)
    tail = dual_truncation_tail(reg, 2, 3, 1.0, r)
    assert norm_kc(out - exact, reg.c) <= tail
    assert tail < 1e-3


def test_dual_evolution_scalar_recursion(medium):
    grid, pot, consts = medium
    reg = default_regime(consts)
    r0 = 0.25
    out = semigroup_evolve_dual(GridFunctionFamily.lp_exponent(r0, grid), 0.5, 5, "V", reg, pot)
    r = r0
    for _ in range(5):
        r = (1 - 0.1) * r + reg.z * 0.1 * math.exp(-consts.beta * r)
    # each step loses at most one a priori tail; the steps do not amplify it
    tail = dual_truncation_tail(reg, 2, 3, 1.0, max(r, r0), delta=0.1)
    gap = norm_kc(out - GridFunctionFamily.lp_exponent(r, grid), reg.c)
    assert gap <= 5 * tail
    assert gap > 0


def test_chaos_identity(medium):
    grid, pot, consts = medium
    reg = default_regime(consts)
    rho = 0.2 * (1 + 0.5 * np.cos(2 * np.pi * grid.x / grid.box_length))
    k = GridFunctionFamily.lp_exponent(rho, grid)
    out = apply_l_v_star(k, reg, pot, xi_max=3)
    phi_mat = pot(grid.displacement_matrix())
    conv = grid.step * phi_mat @ rho
    v = -rho + reg.z * np.exp(-conv)
    # level n keeps xi-orders up to J = min(3, 4 - n); the rest is a series tail
    b, rm = consts.beta * rho.max(), rho.max()

    def tail(n):
        J = min(3, 4 - n)
        return n * reg.z * rm ** (n - 1) * (math.exp(b) - sum(b ** j / math.factorial(j) for j in range(J + 1)))

    assert np.max(np.abs(out.levels[1] - v)) <= tail(1)
    lvl2 = np.multiply.outer(v, rho) + np.multiply.outer(rho, v)
    assert np.max(np.abs(out.levels[2] - lvl2)) <= tail(2)


# structural properties

@settings(max_examples=8, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**31))
def test_linearity(a, b, seed):
    from glauber_vlasov import Grid
    grid = Grid(10.0, 8)
    pot = Potential("gaussian", 1.0, 0.9, 4.5, 10.0)
    reg = default_regime(compute_constants(pot, grid), eps=0.2)
    rng = np.random.default_rng(seed)
    F = GridFunctionFamily.random(rng, grid, 3)
    G = GridFunctionFamily.random(rng, grid, 3)
    for op in (apply_l_v, apply_l_ren, apply_q_delta, apply_p_delta_eps,
               apply_q_delta_star, apply_p_delta_eps_star, apply_l_v_star, apply_l_ren_star):
        lhs = op(F * a + G * b, reg, pot)
        rhs = op(F, reg, pot) * a + op(G, reg, pot) * b
        assert lhs.max_abs_diff(rhs) <= 1e-11 * (1 + abs(a) + abs(b))


def test_outputs_symmetric(coarse, rng):
    grid, pot, consts = coarse
    reg = default_regime(consts)
    G = GridFunctionFamily.random(rng, grid, 3)
    assert apply_p_delta_eps(G, reg, pot).is_symmetric()
    assert apply_p_delta_eps_star(G, reg, pot).is_symmetric()


@pytest.mark.parametrize("delta", [0.5, 0.1])
def test_contraction_small_family(medium, rng, delta):
    grid, pot, consts = medium
    reg = default_regime(consts, delta=delta)
    G = GridFunctionFamily.random(rng, grid, 3, [1, 0.5, 0.25, 0.125], c=reg.c)
    tau = primal_truncation_tail(G, reg, 2)
    for op in (apply_q_delta, apply_p_delta_eps):
        assert norm_lc(op(G, reg, pot), reg.c) <= norm_lc(G, reg.c) + tau


def test_primal_tail_matches_omega_increase(medium, rng):
    grid, pot, consts = medium
    reg = default_regime(consts, delta=0.5)
    G = GridFunctionFamily.random(rng, grid, 3, c=reg.c)
    dropped = norm_lc(apply_q_delta(G, reg, pot, omega_max=3) - apply_q_delta(G, reg, pot, omega_max=2), reg.c)
    assert 0 < dropped <= primal_truncation_tail(G, reg, 2)
    assert primal_truncation_tail(G, reg, 3) == 0


def test_semigroup_death_only(medium, rng):
    grid, pot, consts = medium
    reg = default_regime(consts, z=0.0)
    G = GridFunctionFamily.random(rng, grid, 3)
    out = semigroup_evolve(G, 1.0, 10, "V", reg, pot)
    for n in range(4):
        assert np.allclose(out.levels[n], 0.9 ** (10 * n) * G.levels[n], rtol=1e-13, atol=1e-15)
    assert semigroup_evolve(G, 0.0, 10, "ren", reg, pot).max_abs_diff(G) == 0


def test_semigroup_rejects_bad_step(medium, rng):
    grid, pot, consts = medium
    reg = default_regime(consts)
    G = GridFunctionFamily.zeros(grid)
    with pytest.raises(ValueError):
        semigroup_evolve(G, 2.0, 1, "V", reg, pot)
    with pytest.raises(ValueError):
        semigroup_evolve_dual(G, 1.0, 0, "V", reg, pot)


def test_step_halving_self_consistency(coarse, rng):
    grid, pot, consts = coarse
    reg = default_regime(consts)
    G = GridFunctionFamily.random(rng, grid, 3, [1, 0.5, 0.25, 0.125], c=reg.c)
    runs = {n: semigroup_evolve(G, 1.0, n, "V", reg, pot) for n in (10, 20, 40)}
    d1 = norm_lc(runs[10] - runs[20], reg.c)
    d2 = norm_lc(runs[20] - runs[40], reg.c)
    assert 0.4 < d2 / d1 < 0.6


def test_power_gap_linear_growth(coarse, rng):
    grid, pot, consts = coarse
    reg = default_regime(consts, eps=0.2)
    G = GridFunctionFamily.random(rng, grid, 3, [1, 0.5, 0.25, 0.125], c=reg.c)
    P = lambda f: apply_p_delta_eps(f, reg, pot)
    Q = lambda f: apply_q_delta(f, reg, pot)
    nrm = lambda f: norm_lc(f, reg.c)
    assert contraction_power_gap(Q, Q, G, 5, nrm) == 0
    one = contraction_power_gap(P, Q, G, 1, nrm)
    assert one == pytest.approx(nrm(P(G) - Q(G)))
    for m in (5, 20):
        assert contraction_power_gap(P, Q, G, m, nrm) <= m * one * (1 + 1e-9)


def test_l_ren_tends_to_l_v(coarse, rng):
    grid, pot, consts = coarse
    G = GridFunctionFamily.random(rng, grid, 3, c=1.2)
    gaps = []
    for eps in (1e-2, 1e-3, 1e-4):
        reg = default_regime(consts, eps=eps)
        gaps.append(norm_lc(apply_l_ren(G, reg, pot) - apply_l_v(G, reg, pot), reg.c))
    assert gaps[1] / gaps[0] == pytest.approx(0.1, rel=0.05)
    assert gaps[2] / gaps[1] == pytest.approx(0.1, rel=0.05)


def test_l_ren_star_tends_to_l_v_star(coarse, rng):
    grid, pot, consts = coarse
    k = GridFunctionFamily.random(rng, grid, 3)
    gaps = []
    for eps in (0.2, 0.1, 0.05):
        reg = default_regime(consts, eps=eps)
        gaps.append(norm_kc(apply_l_ren_star(k, reg, pot) - apply_l_v_star(k, reg, pot), reg.c))
    slope = np.polyfit(np.log([0.2, 0.1, 0.05]), np.log(gaps), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.15)


def test_dual_contraction_in_k_alpha_c(medium, rng):
    grid, pot, consts = medium
    reg = default_regime(consts)
    ac = reg.alpha * reg.c
    k = GridFunctionFamily.random(rng, grid, 3)
    k = k * (1.0 / norm_kc(k, ac))
    tail = dual_truncation_tail(reg, 2, 3, 1.0, ac)
    for op in (apply_q_delta_star, apply_p_delta_eps_star):
        assert norm_kc(op(k, reg, pot), ac) <= 1 + tail + 1e-12
