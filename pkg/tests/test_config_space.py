import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from glauber_vlasov import Configuration, Grid, GridFunctionFamily, NormParams, norm_kc, norm_lc
from glauber_vlasov.config_space import (
    k_inverse,
    k_transform,
    level_norms_kc,
    lp_exponent,
    lp_integral,
    minlos_identity_residual,
    rescale_r_eps,
    symmetrize,
)

GRID = Grid(10.0, 16)


def test_configuration_canonical():
    a = Configuration([3.0, 1.0, 2.0])
    assert list(a) == [1.0, 2.0, 3.0] and len(a) == 3
    assert a == Configuration([2.0, 3.0, 1.0])
    assert len(list(a.subsets())) == 8
    assert a.without(Configuration([2.0])) == Configuration([1.0, 3.0])
    with pytest.raises(ValueError):
        Configuration([1.0, 1.0])
    with pytest.raises(ValueError):
        Configuration([10.0])


def test_norm_params():
    with pytest.raises(ValueError):
        NormParams(1.0)
    with pytest.raises(ValueError):
        NormParams(2.0, 1.0)


def test_lp_exponent_examples(rng):
    assert lp_exponent(lambda x: 2 + 0 * x, Configuration([])) == 1
    assert lp_exponent(lambda x: 2 + 0 * x, Configuration([1.0, 2.0, 3.0])) == 8
    x0 = 4.0
    f = lambda x: np.exp(-np.exp(-0.5 * ((x - x0) / 0.5) ** 2))
    eta = Configuration(rng.uniform(0, 10, 4))
    ref = math.exp(sum(-math.exp(-0.5 * ((y - x0) / 0.5) ** 2) for y in eta))
    assert lp_exponent(f, eta) == pytest.approx(ref, rel=1e-14)


def test_lp_integral_examples():
    assert lp_integral(GridFunctionFamily.indicator(0, GRID)) == 1
    assert lp_integral(GridFunctionFamily.indicator(1, GRID)) == pytest.approx(10.0)


def test_lp_integral_of_exponent():
    grid = Grid(10.0, 8)
    f = 0.15 * np.exp(-0.5 * ((grid.x - 5.0) / 0.8) ** 2)
    s = grid.step * f.sum()
    assert s < 1
    F = GridFunctionFamily.lp_exponent(f, grid, n_max=6)
    tail = s ** 7 / math.factorial(7) * math.exp(s)
    assert abs(lp_integral(F) - math.exp(s)) <= tail
    assert tail < 1e-6


def test_norm_examples(rng):
    assert norm_lc(GridFunctionFamily.indicator(0, GRID), 1.5) == 1
    assert norm_lc(GridFunctionFamily.indicator(1, GRID), 1.5) == pytest.approx(15.0)
    assert norm_kc(GridFunctionFamily.lp_exponent(1.5, GRID), 1.5) == pytest.approx(1.0)
    assert norm_kc(GridFunctionFamily.indicator(0, GRID), NormParams(1.5)) == 1
    rho = 1.2 * rng.uniform(0, 1, GRID.points)
    k = GridFunctionFamily.lp_exponent(rho, GRID)
    assert norm_kc(k, 1.5) == pytest.approx(max((rho.max() / 1.5) ** n for n in range(4)))


def test_norms_match_oracle(rng):
    G = GridFunctionFamily.random(rng, GRID, 3)
    assert norm_lc(G, 1.3) == pytest.approx(oracles.lc_norm(G.levels, GRID.step, 1.3), rel=1e-12)
    assert norm_kc(G, 1.3) == pytest.approx(oracles.kc_norm(G.levels, 1.3), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), c=st.floats(1.01, 5))
def test_norm_properties(seed, c):
    G = GridFunctionFamily.random(np.random.default_rng(seed), Grid(10.0, 6), 3)
    assert norm_lc(G, 2 * c) >= norm_lc(G, c)
    # |eta|-weighted norm is dominated by the 2C norm
    h = G.grid_step
    weighted = sum(n * c ** n / math.factorial(n) * h ** n * np.abs(a).sum() for n, a in enumerate(G.levels))
    assert weighted <= norm_lc(G, 2 * c) * (1 + 1e-12)
    kn = norm_kc(G, c)
    for n, a in enumerate(G.levels):
        assert np.all(np.abs(a) <= kn * c ** n * (1 + 1e-12))


def test_random_family_level_norms(rng):
    G = GridFunctionFamily.random(rng, GRID, 3, [1.0, 0.5, 0.25, 0.125], c=1.2)
    h = GRID.step
    for n, want in enumerate([1.0, 0.5, 0.25, 0.125]):
        assert 1.2 ** n * h ** n / math.factorial(n) * np.abs(G.levels[n]).sum() == pytest.approx(want)
    assert G.is_symmetric()


def test_symmetrize(rng):
    a = rng.normal(size=(4, 4, 4))
    s = symmetrize(a)
    for p in itertools.permutations(range(3)):
        assert np.allclose(s, s.transpose(p))
    assert np.allclose(symmetrize(s), s)


def test_rescale(rng):
    k = GridFunctionFamily.random(rng, GRID, 3)
    assert rescale_r_eps(k, 1.0).max_abs_diff(k) == 0
    assert rescale_r_eps(rescale_r_eps(k, 0.25), 4.0).max_abs_diff(k) == 0
    rho = rng.uniform(0, 1, GRID.points)
    e = rescale_r_eps(GridFunctionFamily.lp_exponent(rho, GRID), 0.1)
    assert e.max_abs_diff(GridFunctionFamily.lp_exponent(0.1 * rho, GRID)) < 1e-15
    with pytest.raises(ValueError):
        rescale_r_eps(k, 0.0)


def _random_set_function(rng, pts):
    table = {}
    for r in range(len(pts) + 1):
        for sub in itertools.combinations(sorted(pts), r):
            table[sub] = rng.normal()
    return lambda eta: table[tuple(sorted(eta))]


def test_k_transform_examples(rng):
    gamma = Configuration([0.5, 1.5, 2.5, 7.0])
    assert k_transform(lambda e: float(len(e) == 0), gamma) == 1
    assert k_transform(lambda e: float(len(e) == 1), gamma) == 4
    G = _random_set_function(rng, list(gamma))
    assert k_transform(G, gamma) == pytest.approx(oracles.k_transform_sets(G, tuple(gamma)), rel=1e-14)
    assert k_inverse(lambda e: 1.0, gamma) == 0
    assert k_inverse(lambda e: 1.0, Configuration([])) == 1
    sizes = {n: k_inverse(lambda e: float(len(e)), Configuration(list(gamma)[:n])) for n in range(5)}
    assert sizes == {0: 0, 1: 1, 2: 0, 3: 0, 4: 0}


def test_k_roundtrip_exhaustive(rng):
    base = [0.25, 1.0, 3.5, 6.0, 9.75]
    for n in range(6):
        gamma = Configuration(base[:n])
        G = _random_set_function(rng, base[:n])
        KG = lambda e: k_transform(G, e)
        Kinv = lambda e: k_inverse(G, e)
        for sub in gamma.subsets():
            assert abs(k_inverse(KG, sub) - G(sub)) <= 1e-12
            assert abs(k_transform(Kinv, sub) - G(sub)) <= 1e-12


def test_k_transform_overflow():
    big = Configuration(np.linspace(0, 9.9, 26))
    with pytest.raises(OverflowError):
        k_transform(lambda e: 0.0, big)
    with pytest.raises(OverflowError):
        k_inverse(lambda e: 0.0, big)


def test_grid_family_shape_check():
    with pytest.raises(ValueError):
        GridFunctionFamily([np.array(1.0), np.zeros(3)], GRID)
    a, b = GridFunctionFamily.zeros(GRID), GridFunctionFamily.zeros(Grid(10.0, 8))
    with pytest.raises(ValueError):
        a + b


def test_evaluate(rng):
    G = GridFunctionFamily.random(rng, GRID, 3)
    pts = GRID.x[[3, 7]]
    assert G.evaluate(Configuration(pts)) == G.levels[2][3, 7]
    assert G.evaluate(Configuration(GRID.x[:4])) == 0


def test_save_load_roundtrip(tmp_path, rng):
    G = GridFunctionFamily.random(rng, Grid(10.0, 5), 3)
    files = G.save(tmp_path, "g")
    assert (tmp_path / "g.json").exists() and len(files) == 5
    assert (tmp_path / "g_level2.csv").read_text().splitlines()[0] == "n,i1,i2,value"
    assert GridFunctionFamily.load(tmp_path, "g").max_abs_diff(G) == 0


def _power_H(a, b):
    return lambda xi, eta, zeta: a ** xi.shape[1] * b ** eta.shape[1] * np.ones(len(zeta))


def test_minlos_trivial():
    grid = Grid(10.0, 4)
    assert minlos_identity_residual(lambda xi, eta, z: np.zeros(len(z)), grid, 2) == 0
    one = lambda xi, eta, z: float(xi.shape[1] == 0 and eta.shape[1] == 0) * np.ones(len(z))
    assert minlos_identity_residual(one, grid, 2) == pytest.approx(0, abs=1e-15)


def _minlos_tail(s, n_max):
    return math.exp(s) - sum(s ** j / math.factorial(j) for j in range(n_max + 1))


@pytest.mark.parametrize("n_max", [2, 3])
def test_minlos_below_tail(n_max):
    grid = Grid(10.0, 8)
    a, b = 0.02, 0.03
    res = minlos_identity_residual(_power_H(a, b), grid, n_max)
    assert 0 < res <= _minlos_tail((a + b) * 10.0, n_max)


def test_minlos_rate():
    grid = Grid(10.0, 4)
    a, b = 0.02, 0.03
    res = [minlos_identity_residual(_power_H(a, b), grid, n) for n in (1, 2, 3, 4)]
    assert all(r2 < r1 for r1, r2 in zip(res, res[1:]))
    for n, r in zip((1, 2, 3, 4), res):
        assert r <= _minlos_tail(0.5, n)


def test_minlos_rejects_fine_grid():
    with pytest.raises(ValueError):
        minlos_identity_residual(_power_H(0.1, 0.1), Grid(10.0, 64), 3)


def test_k_norm_sup_levels():
    k = GridFunctionFamily.lp_exponent(0.6, GRID)
    assert level_norms_kc(k, 1.2) == pytest.approx([0.5 ** n for n in range(4)])
