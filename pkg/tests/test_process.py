import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import linalg

from jklab import process as proc
from jklab.process import (JumpKernelSpec, NumericError, ProcessError, SubordinatorSpec, build_generator,
                           capacity, dirichlet_heat_kernel, energy, exact_heat_kernel,
                           exact_heat_kernel_series, hub_perturbation, kernel_energy, laplace_exponent,
                           mc_exit_time, mc_heat_kernel, mean_exit_time, mean_exit_times,
                           nearest_neighbor_generator, read_hkm1, sample_subordinator_increments,
                           semigroup_apply, simulate_jump_path, simulate_subordinate_path,
                           subordinate_generator, survival_probability, truncate_kernel, write_hkm1)
from jklab.scale import ScaleFunction
from jklab.space import FiniteMetricMeasureSpace, ResourceCapError, build_lattice_torus

from conftest import random_generator


def two_point(j=0.7, mu=(1.0, 2.0)):
    sp = FiniteMetricMeasureSpace(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array(mu))
    return build_generator(sp, np.array([[0.0, j], [j, 0.0]]))


# ---- generator -------------------------------------------------------------------

def test_two_point_kernel_closed_form():
    g = two_point(0.7, (1.0, 1.0))
    for t in (0.0, 0.3, 2.0):
        p = exact_heat_kernel(g, t).density
        assert p[0, 0] == pytest.approx(0.5 * (1 + math.exp(-1.4 * t)), rel=1e-12)
        assert p[0, 1] == pytest.approx(0.5 * (1 - math.exp(-1.4 * t)), rel=1e-12, abs=1e-15)


def test_matches_dense_exponential():
    g = random_generator(12, 1)
    p = exact_heat_kernel(g, 0.8).density
    ref = linalg.expm(0.8 * g.rates) / g.mu[None, :]
    np.testing.assert_allclose(p, ref, rtol=1e-10, atol=1e-14)


def test_generator_rejects_bad_kernels(torus64):
    bad = np.ones((64, 64))
    bad[0, 1] = 2.0
    with pytest.raises(ProcessError, match="symmetric"):
        build_generator(torus64, bad)
    with pytest.raises(ProcessError, match="negative"):
        build_generator(torus64, -np.ones((64, 64)))
    with pytest.raises(ProcessError):
        JumpKernelSpec().density(torus64)


def test_kernel_formula(torus64, phi_j_11):
    jm = JumpKernelSpec(phi_j_11, amplitude=2.0).density(torus64)
    # J(0, 4) = 2 / (V(0, 4) * 4^3) with V = 9
    assert jm[0, 4] == pytest.approx(2.0 / (9 * 64))
    assert np.all(np.diag(jm) == 0)


def test_truncation(torus64, phi_j_11):
    spec = truncate_kernel(JumpKernelSpec(phi_j_11), 5.0)
    jm = spec.density(torus64)
    assert np.all(jm[torus64.dist > 5.0] == 0)
    assert jm[0, 5] > 0
    assert truncate_kernel(spec, 8.0).truncation == 5.0
    with pytest.raises(ProcessError):
        truncate_kernel(spec, 0.0)


def test_energy_conventions(gen64):
    rng = np.random.default_rng(3)
    f = rng.random(64)
    e = energy(gen64, f)
    assert e == pytest.approx(kernel_energy(gen64.jump, gen64.mu, f), rel=1e-12)
    assert energy(gen64, np.ones(64)) == pytest.approx(0.0, abs=1e-10)


def test_nearest_neighbor_generator(torus64):
    g = nearest_neighbor_generator(torus64, 1.0)
    assert g.escape[0] == pytest.approx(2.0)


# ---- semigroup exactness ----------------------------------------------------------

def test_semigroup_properties(gen64):
    ks = exact_heat_kernel_series(gen64, [0.5, 1.0, 1.5])
    for k in ks:
        p = k.density
        assert np.max(np.abs(p - p.T)) <= 1e-12 * p.max()
        assert np.max(np.abs(p @ gen64.mu - 1.0)) <= 1e-10
    # Chapman-Kolmogorov: p_{s+t}(x,y) = sum_z p_s(x,z) p_t(z,y) mu_z
    ck = (ks[0].density * gen64.mu[None, :]) @ ks[1].density
    assert np.max(np.abs(ck - ks[2].density)) <= 1e-10


def test_rows_and_semigroup_apply(gen64):
    full = exact_heat_kernel(gen64, 2.0).density
    part = exact_heat_kernel(gen64, 2.0, rows=[3, 7]).density
    np.testing.assert_allclose(part, full[[3, 7]], rtol=1e-12, atol=1e-16)
    f = np.arange(64.0)
    pf = semigroup_apply(gen64, [2.0], f)[0]
    np.testing.assert_allclose(pf, (full * gen64.mu[None, :]) @ f, rtol=1e-11)


def test_dirichlet_below_full(gen64, torus64):
    dom = torus64.ball(0, 6)
    idx, pd = dirichlet_heat_kernel(gen64, dom, 3.0)
    full = exact_heat_kernel(gen64, 3.0).density[np.ix_(idx, idx)]
    assert np.all(pd <= full + 1e-15)
    assert np.all(pd >= -1e-15)


def test_survival_matches_dirichlet(gen64, torus64):
    dom = torus64.ball(0, 4)
    idx, pd = dirichlet_heat_kernel(gen64, dom, 1.5)
    s = survival_probability(gen64, dom, 0, [1.5])[0]
    pos = int(np.searchsorted(idx, 0))
    assert s == pytest.approx(float(pd[pos] @ gen64.mu[idx]), rel=1e-12)


def test_size_cap(gen64):
    with pytest.raises(ResourceCapError):
        exact_heat_kernel(gen64, 1.0, max_points=10)
    with pytest.raises(ProcessError):
        exact_heat_kernel(gen64, -1.0)


@given(st.integers(4, 9), st.integers(0, 1000), st.floats(0.01, 5.0))
def test_semigroup_property_random(n, seed, t):
    g = random_generator(n, seed)
    p = exact_heat_kernel(g, t).density
    assert np.max(np.abs(p - p.T)) <= 1e-12 * p.max()
    assert np.max(np.abs(p @ g.mu - 1.0)) <= 1e-10
    assert np.all(p >= 0)


# ---- HKM1 ------------------------------------------------------------------------

def test_hkm1_round_trip(tmp_path, gen64):
    p = exact_heat_kernel(gen64, 1.0).density
    path = str(tmp_path / "p.hkm1")
    write_hkm1(path, p)
    raw = open(path, "rb").read()
    assert raw[:4] == b"HKM1" and int.from_bytes(raw[4:8], "little") == 64
    assert len(raw) == 16 + 8 * 64 * 64
    np.testing.assert_array_equal(read_hkm1(path), p)


def test_hkm1_rejects_garbage(tmp_path):
    path = tmp_path / "bad.hkm1"
    path.write_bytes(b"XXXX" + bytes(12))
    with pytest.raises(ValueError, match="HKM1"):
        read_hkm1(str(path))
    with pytest.raises(ValueError):
        write_hkm1(str(tmp_path / "x"), np.zeros((2, 3)))


def test_csv_exports(gen64):
    text = exact_heat_kernel(gen64, 1.0, rows=[0]).to_csv()
    assert text.splitlines()[0] == "t,x,y,p"
    path = simulate_jump_path(gen64, 5.0, seed=1)
    assert path.to_csv().splitlines()[0] == "time,state"


# ---- exit times and capacity --------------------------------------------------------

def test_exit_time_single_point(gen64):
    assert mean_exit_time(gen64, [5], 5) == pytest.approx(1.0 / gen64.escape[5], rel=1e-10)


def test_exit_time_matches_dense_solve(gen64, torus64):
    ball = torus64.ball(0, 5)
    idx, u = mean_exit_times(gen64, ball)
    a = -gen64.rates[np.ix_(idx, idx)]
    np.testing.assert_allclose(u, np.linalg.solve(a, np.ones(len(idx))), rtol=1e-8)
    with pytest.raises(NumericError):
        mean_exit_times(gen64, np.arange(64))
    with pytest.raises(ProcessError):
        mean_exit_time(gen64, ball, 30)


def test_exit_time_monte_carlo(gen64, torus64):
    ball = torus64.ball(0, 4)
    exact = mean_exit_time(gen64, ball, 0)
    mean, se = mc_exit_time(gen64, ball, 0, 4000, seed=11)
    assert abs(mean - exact) <= 4 * se


def test_capacity_two_points():
    g = two_point(0.7, (1.0, 2.0))
    # b is grounded: h = 1_a and the energy counts both ordered pairs
    assert capacity(g, [0], [0]) == pytest.approx(2 * 0.7 * 1.0 * 2.0)
    assert capacity(g, [0], [0, 1]) == 0.0
    with pytest.raises(ProcessError):
        capacity(g, [0, 1], [0, 1])


def test_capacity_monotone_in_outer(gen64, torus64):
    a = torus64.ball(0, 2)
    c1 = capacity(gen64, a, torus64.ball(0, 4))
    c2 = capacity(gen64, a, torus64.ball(0, 8))
    assert c1 >= c2 > 0


# ---- Monte Carlo kernels and paths -------------------------------------------------

def test_mc_heat_kernel(gen64):
    exact = exact_heat_kernel(gen64, 1.0, rows=[0]).density[0]
    mc = mc_heat_kernel(gen64, 0, 1.0, 20000, seed=5)
    z = np.abs(mc.density[0] - exact) / np.maximum(mc.stderr[0], 1e-3)
    assert z.max() < 5
    with pytest.raises(ResourceCapError):
        mc_heat_kernel(gen64, 0, 1.0, 200, seed=5, max_paths=100)


def test_paths_reproducible(gen64):
    a = simulate_jump_path(gen64, 10.0, seed=2, index=4, start=3)
    b = simulate_jump_path(gen64, 10.0, seed=2, index=4, start=3)
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.states, b.states)
    assert a.states[0] == 3 and np.all(np.diff(a.times) > 0)


def test_backends_give_identical_estimates():
    code = ("from jklab.process import *; from jklab.space import *; from jklab.scale import *;"
            "sp=build_lattice_torus(1,32); g=build_generator(sp, JumpKernelSpec(ScaleFunction.power(1.5)));"
            "print(repr(mc_exit_time(g, sp.ball(0,3), 0, 500, seed=3)))")
    out = []
    for flag in ("0", "1"):
        env = dict(os.environ, JKLAB_PURE_PYTHON=flag)
        out.append(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                                  text=True, check=True).stdout)
    assert out[0] == out[1]


# ---- subordinators -------------------------------------------------------------------

def test_subordinator_spec():
    spec = SubordinatorSpec(0.5, 1.5)
    assert spec.mean == pytest.approx(4.0)
    assert spec.dropped_variance <= 1e-6 * (1 + 1e-9)
    with pytest.raises(ProcessError):
        SubordinatorSpec(1.2, 1.5)


def test_laplace_exponent_limits():
    spec = SubordinatorSpec(0.5, 1.5)
    # f(r) ~ mean * r at 0 and Gamma(1 - g1)/g1 * r^g1 at infinity
    assert laplace_exponent(spec, 1e-8) / 1e-8 == pytest.approx(4.0, rel=1e-3)
    big = 1e10
    assert laplace_exponent(spec, big) / big ** 0.5 == pytest.approx(math.gamma(0.5) / 0.5, rel=1e-3)
    assert laplace_exponent(spec, 0.0) == 0.0


def test_laplace_rules_agree():
    spec = SubordinatorSpec(0.3, 1.8)
    for r in np.geomspace(1e-4, 1e4, 9):
        a = proc._laplace_quadpack(spec, r)
        b = proc._laplace_gauss_log(spec, r)
        assert a == pytest.approx(b, rel=1e-8)


@given(st.floats(0.05, 0.95), st.floats(1.05, 3.0), st.floats(-9.0, 9.0))
def test_laplace_rules_agree_property(g1, g2, log_r):
    spec = SubordinatorSpec(g1, g2)
    r = 10.0 ** log_r
    a = proc._laplace_quadpack(spec, r)
    assert a == pytest.approx(proc._laplace_gauss_log(spec, r), rel=1e-8)
    assert a > 0


def test_subordinator_sample_mean():
    spec = SubordinatorSpec(0.5, 1.5)
    x = sample_subordinator_increments(spec, 1.0, 20000, seed=9)
    assert np.all(x >= 0)
    assert abs(x.mean() - spec.mean) <= 6 * x.std() / math.sqrt(len(x))


def test_subordinate_generator_is_markov(gen64):
    sub = subordinate_generator(gen64, SubordinatorSpec(0.5, 1.5))
    assert np.allclose(sub.rates.sum(axis=1), 0.0, atol=1e-10)
    assert np.allclose(sub.jump, sub.jump.T)
    path = simulate_subordinate_path(gen64, SubordinatorSpec(0.5, 1.5), 2.0, 0.25, seed=1)
    assert len(path.times) == 9


# ---- hub perturbation ------------------------------------------------------------------

def test_hub_cuts_window(torus64, phi_j_11):
    jm = JumpKernelSpec(phi_j_11).density(torus64)
    pert = hub_perturbation(torus64, jm, 0, 32, 4)
    window = torus64.ball(32, 4)
    outside = np.setdiff1d(np.arange(64), np.concatenate([window, [0]]))
    assert np.all(pert[np.ix_(outside, window)] == 0)
    assert np.all(pert[0, window] == jm[0, window])
    assert np.allclose(pert, pert.T)
    with pytest.raises(ProcessError):
        hub_perturbation(torus64, jm, 32, 32, 4)
