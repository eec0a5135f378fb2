import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from porostdg.analysis import fit_rate, random_nonnegative_poly
from porostdg.errors import InputError
from porostdg.timeslab import (
    TemporalRule, TimeMesh, interpolate_radau, interpolate_radau_plus, sample_nodes,
    weighted_gauss_radau, weighted_norms,
)


def weighted_integral(c, f, dps=30):
    with mpmath.workdps(dps):
        return float(mpmath.quad(lambda s: mpmath.exp(-c * (s + 1)) * f(s), [-1, 1]))


@pytest.mark.parametrize("c", [0.0, 1e-9, 1e-3, 0.7, 3.0])
def test_k0_closed_form(c):
    nodes, weights = weighted_gauss_radau(0, c)
    assert nodes.tolist() == [1.0]
    expected = 2.0 if c == 0 else -np.expm1(-2 * c) / c
    assert weights[0] == pytest.approx(expected, rel=1e-14)


def test_k1_unweighted():
    nodes, weights = weighted_gauss_radau(1, 0.0)
    assert np.allclose(nodes, [-1 / 3, 1.0], atol=1e-15)
    assert np.allclose(weights, [1.5, 0.5], atol=1e-15)


def test_k2_monomials_against_adaptive_quadrature():
    c = 0.7
    nodes, weights = weighted_gauss_radau(2, c)
    for j in range(5):
        exact = weighted_integral(c, lambda s: s ** j)
        assert weights @ nodes ** j == pytest.approx(exact, rel=1e-12, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 4), st.floats(0.0, 5.0), st.integers(0, 2 ** 31))
def test_exactness_on_p2k(k, c, seed):
    poly = random_nonnegative_poly(2 * k, np.random.default_rng(seed))
    nodes, weights = weighted_gauss_radau(k, c)
    mono = [mpmath.mpf(a) for a in poly.coef[::-1]]
    exact = weighted_integral(c, lambda s: mpmath.polyval(mono, s))
    assert abs(weights @ poly(nodes) - exact) <= 1e-12 * abs(exact)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 5), st.floats(0.0, 10.0))
def test_nodes_and_weights_shape(k, c):
    nodes, weights = weighted_gauss_radau(k, c)
    assert len(nodes) == len(weights) == k + 1
    assert nodes[-1] == 1.0
    assert nodes[0] > -1.0
    assert np.all(np.diff(nodes) > 0)
    assert np.all(weights > 0)


def test_not_exact_beyond_2k():
    nodes, weights = weighted_gauss_radau(1, 0.3)
    exact = weighted_integral(0.3, lambda s: s ** 3)
    assert abs(weights @ nodes ** 3 - exact) > 1e-6


@pytest.mark.parametrize("k, c", [(-1, 0.0), (1, -0.5)])
def test_rule_input_errors(k, c):
    with pytest.raises(InputError):
        weighted_gauss_radau(k, c)


def test_time_mesh():
    tm = TimeMesh.uniform(2.0, 4)
    assert tm.N == 4 and tm.T == 2.0 and tm.tau == pytest.approx(0.5)
    assert tm.taus.sum() == pytest.approx(2.0)
    assert tm.slab_of(0.0) == 0 and tm.slab_of(0.5) == 0 and tm.slab_of(0.5000001) == 1
    for bad in ([0.0], [0.0, 0.5, 0.4], [0.1, 1.0]):
        with pytest.raises(InputError):
            TimeMesh(bad)
    with pytest.raises(InputError):
        TimeMesh.uniform(1.0, 0)


def test_rule_physical_nodes_and_weights():
    rule = TemporalRule(TimeMesh([0.0, 0.3, 1.0]), 2, 1.5)
    for n in range(2):
        t = rule.nodes(n)
        assert t[-1] == rule.time_mesh.t[n + 1]
        assert t[0] > rule.time_mesh.t[n]
        # Q_n integrates e^{-2 nu (t - t_n)} p(t) for p in P_4
        t0, tau = rule.time_mesh.t[n], rule.tau(n)
        with mpmath.workdps(30):
            exact = float(mpmath.quad(lambda s: mpmath.exp(-3.0 * (s - t0)) * s ** 4, [t0, t0 + tau]))
        assert rule.quadrature(n, t ** 4) == pytest.approx(exact, rel=1e-12)


def test_interpolant_reproduces_polynomials():
    k = 2
    rule = TemporalRule(TimeMesh.uniform(1.0, 3), k, 0.8)
    f = np.polynomial.Polynomial([0.3, -1.0, 2.0])
    f0, vals = sample_nodes(rule, f)
    it = interpolate_radau(rule, f0, vals)
    ts = np.linspace(0.0, 1.0, 37)
    assert np.abs(it(ts) - f(ts)).max() < 1e-12
    const = interpolate_radau(rule, 2.5, np.full((3, k + 1), 2.5))
    assert np.allclose(const(ts), 2.5)


def test_interpolant_is_left_continuous():
    rule = TemporalRule(TimeMesh.uniform(1.0, 2), 0, 1.0)
    it = interpolate_radau(rule, 0.0, np.array([[1.0], [2.0]]))
    assert it(0.5)[0] == 1.0
    assert it(0.5 + 1e-12)[0] == 2.0
    assert it(0.0)[0] == 0.0


@pytest.mark.parametrize("k", [0, 1, 2])
def test_interpolation_rate(k):
    errs, taus = [], []
    for N in (4, 8, 16, 32):
        rule = TemporalRule(TimeMesh.uniform(1.0, N), k, 1.0)
        it = interpolate_radau(rule, *sample_nodes(rule, np.sin))
        ts = np.linspace(1e-9, 1.0, 2001)
        errs.append(np.abs(it(ts) - np.sin(ts)).max())
        taus.append(1.0 / N)
    assert fit_rate(taus, errs) == pytest.approx(k + 1, abs=0.2)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_plus_interpolation_rates(k):
    errs, derrs, taus = [], [], []
    for N in (4, 8, 16, 32):
        rule = TemporalRule(TimeMesh.uniform(1.0, N), k, 1.0)
        it = interpolate_radau_plus(rule, *sample_nodes(rule, np.exp))
        ts = np.linspace(0.0, 1.0, 2001)
        errs.append(np.abs(it(ts) - np.exp(ts)).max())
        derrs.append(np.abs(it(ts, derivative=True) - np.exp(ts)).max())
        taus.append(1.0 / N)
    assert fit_rate(taus, errs) == pytest.approx(k + 2, abs=0.2)
    assert fit_rate(taus, derrs) == pytest.approx(k + 1, abs=0.2)


def test_plus_interpolant_continuity_and_reproduction():
    k = 1
    rule = TemporalRule(TimeMesh.uniform(1.0, 4), k, 0.5)
    f = np.polynomial.Polynomial([1.0, 0.5, -2.0])  # degree k + 1
    it = interpolate_radau_plus(rule, *sample_nodes(rule, f))
    ts = np.linspace(0.0, 1.0, 41)
    assert np.abs(it(ts) - f(ts)).max() < 1e-12
    for tn in rule.time_mesh.t[1:-1]:
        assert it(tn)[0] == pytest.approx(it(tn + 1e-13)[0], abs=1e-10)
    const = interpolate_radau_plus(rule, 3.0, np.full((4, k + 1), 3.0))
    assert np.abs(const(ts, derivative=True)).max() < 1e-12


def test_interpolant_missing_data():
    rule = TemporalRule(TimeMesh.uniform(1.0, 2), 1, 1.0)
    with pytest.raises(InputError):
        interpolate_radau(rule, None, np.zeros((2, 2)))
    with pytest.raises(InputError):
        interpolate_radau(rule, 0.0, np.array([[0.0, np.nan], [0.0, 0.0]]))
    with pytest.raises(InputError):
        interpolate_radau(rule, 0.0, np.zeros((1, 2)))
    with pytest.raises(InputError):
        interpolate_radau_plus(rule, 0.0, None)


@pytest.mark.parametrize("nu, tau", [(0.5, 0.3), (2.0, 1.0), (1e-3, 0.1)])
def test_norm_of_one(nu, tau):
    rule = TemporalRule(TimeMesh([0.0, tau]), 2, nu)
    got = weighted_norms(rule, np.ones((1, 3)))
    assert got == pytest.approx(-np.expm1(-2 * nu * tau) / (2 * nu), rel=1e-13)
    assert weighted_norms(rule, np.zeros((1, 3))) == 0.0


def test_norm_nu_to_zero_is_l2():
    k = 2
    rule = TemporalRule(TimeMesh.uniform(1.0, 4), k, 0.0)
    coeffs = np.random.default_rng(3).standard_normal((4, k + 1))
    vals = np.array([[np.polynomial.Polynomial(coeffs[n])(t) for t in rule.nodes(n)] for n in range(4)])
    gx, gw = np.polynomial.legendre.leggauss(10)
    ref = 0.0
    for n in range(4):
        t0, t1 = rule.time_mesh.t[n], rule.time_mesh.t[n + 1]
        ts = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * gx
        ref += 0.5 * (t1 - t0) * gw @ np.polynomial.Polynomial(coeffs[n])(ts) ** 2
    assert weighted_norms(rule, vals) == pytest.approx(ref, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5).filter(lambda s: s == 0 or abs(s) > 1e-100), st.integers(0, 2 ** 31))
def test_norm_homogeneity_and_triangle(scale, seed):
    rng = np.random.default_rng(seed)
    rule = TemporalRule(TimeMesh.uniform(1.0, 3), 1, 1.3)
    a, b = rng.standard_normal((2, 3, 2, 4))
    na, nb = np.sqrt(weighted_norms(rule, a)), np.sqrt(weighted_norms(rule, b))
    assert np.sqrt(weighted_norms(rule, scale * a)) == pytest.approx(abs(scale) * na, rel=1e-12, abs=1e-300)
    assert np.sqrt(weighted_norms(rule, a + b)) <= na + nb + 1e-12


def test_value_norm_rejects_negative():
    rule = TemporalRule(TimeMesh.uniform(1.0, 1), 1, 1.0)
    with pytest.raises(InputError):
        weighted_norms(rule, np.array([[1.0, -0.1]]), kind="value")
    assert weighted_norms(rule, np.array([[1.0, 1.0]]), kind="value") == pytest.approx(
        weighted_norms(rule, np.array([[1.0, 1.0]])))
