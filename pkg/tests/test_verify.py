import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jklab.process import JumpKernelSpec, build_generator, hub_perturbation
from jklab.scale import ScaleFunction
from jklab.space import build_lattice_torus
from jklab.verify import (ConditionVerdict, Cylinder, caloric_family, check_capacity, check_cutoff_energy,
                          check_exit_scaling, check_faber_krahn, check_phi_harnack, check_poincare,
                          check_tail_integral, check_ujs, check_volume, dirichlet_bottom_eigenvalue,
                          envelope_shapes, fit_corridor, harnack_ratios, heat_kernel_corridor,
                          poincare_constant, stability_ratio, ujs_triples, verdict_dict)

RECORD_KEYS = {"condition", "constants", "worst_ratio", "domain", "pass", "seed"}


def gauss(t, d):
    return np.exp(-np.asarray(d) ** 2 / t) / np.sqrt(t)


def samples_from(fn, times=(1.0, 4.0, 16.0)):
    d = np.linspace(0.0, 3.0, 12)
    return [(t, d, fn(t, d)) for t in times]


# ---- corridor ------------------------------------------------------------------

def test_corridor_exact_multiple():
    rep = fit_corridor(samples_from(lambda t, d: 3.0 * gauss(t, d)), gauss)
    assert rep.worst_ratio == pytest.approx(1.0, rel=1e-12)
    assert rep.c1 == pytest.approx(3.0) and rep.c3 == pytest.approx(3.0)
    assert rep.passed


def test_corridor_finds_time_dilation():
    rep = fit_corridor(samples_from(lambda t, d: gauss(2.0 * t, d)), gauss)
    assert rep.worst_ratio == pytest.approx(1.0, rel=1e-9)
    assert rep.c2 == pytest.approx(2.0) and rep.c4 == pytest.approx(2.0)


def test_corridor_detects_wrong_shape():
    rep = fit_corridor(samples_from(lambda t, d: (1 + np.asarray(d)) ** -3.0 / np.sqrt(t), (0.25, 4.0, 64.0)),
                       gauss, threshold=10.0)
    assert rep.worst_ratio > 10 and not rep.passed


def test_corridor_two_shapes():
    # a constant factor between the shapes is absorbed by c1
    rep = fit_corridor(samples_from(gauss), gauss, lower_env=lambda t, d: 0.5 * gauss(t, d))
    assert rep.worst_ratio == pytest.approx(1.0, rel=1e-9)
    # a lower shape with a different profile widens the corridor
    rep = fit_corridor(samples_from(gauss), gauss, lower_env=lambda t, d: gauss(t, d) / (1 + np.asarray(d)))
    assert rep.worst_ratio == pytest.approx(4.0, rel=1e-9)


def test_corridor_input_checks():
    with pytest.raises(ValueError, match="three times"):
        fit_corridor(samples_from(gauss, (1.0, 2.0)), gauss)
    with pytest.raises(ValueError, match="ten distances"):
        fit_corridor([(t, np.arange(5.0), gauss(t, np.arange(5.0))) for t in (1, 2, 3)], gauss)
    with pytest.raises(ValueError, match="positive"):
        fit_corridor(samples_from(lambda t, d: 0 * gauss(t, d)), gauss)


@given(st.lists(st.floats(-1.0, 1.0), min_size=36, max_size=36))
def test_corridor_ratio_at_least_one(noise):
    eps = np.reshape(noise, (3, 12))
    samples = [(t, d, p * np.exp(e)) for (t, d, p), e in zip(samples_from(gauss), eps)]
    rep = fit_corridor(samples, gauss)
    assert rep.worst_ratio >= 1.0 - 1e-12
    assert rep.worst_ratio <= math.exp(2.0) + 1e-9  # the undilated pair already achieves this
    assert rep.c2 <= rep.c4


def test_heat_kernel_corridor_guard(gen64, triple_11):
    with pytest.raises(Exception, match="diameter/4"):
        heat_kernel_corridor(gen64, 0, [1, 2, 4], 20.0, envelope_shapes(triple_11))


def test_heat_kernel_corridor_small(gen256, triple_11):
    rep = heat_kernel_corridor(gen256, 0, [2.0, 8.0, 32.0], 32.0, envelope_shapes(triple_11))
    assert rep.passed and rep.worst_ratio < 100
    assert rep.domain["max_distance"] == 32.0


# ---- scalar checks --------------------------------------------------------------

def test_record_shape(gen64, triple_11):
    v = check_faber_krahn(gen64, 0, [2, 4, 8], triple_11.phi)
    assert set(v.record()) == RECORD_KEYS
    assert verdict_dict(v)["condition"] == "FK"
    assert stability_ratio([1.0, 0.0]) == math.inf


def test_faber_krahn_matches_dense_oracle(gen256, torus256):
    for r in (4, 8, 16):
        dom = torus256.ball(0, r)
        lam = dirichlet_bottom_eigenvalue(gen256, dom)
        ref = np.linalg.eigvalsh(-gen256.rates[np.ix_(dom, dom)] * 0.5
                                 - 0.5 * gen256.rates[np.ix_(dom, dom)].T)[0]
        assert lam == pytest.approx(ref, rel=1e-8)


def test_fk_pi_csj_stable(gen256, triple_11):
    phi = triple_11.phi
    assert check_faber_krahn(gen256, 0, [4, 8, 16], phi).passed
    assert check_poincare(gen256, 0, [4, 8, 16], phi).passed
    assert check_cutoff_energy(gen256, 0, [2, 4, 8, 16], phi).passed
    assert check_capacity(gen256, 0, [2, 4, 8, 16], phi).passed


def test_poincare_oracle_two_points():
    from jklab.space import FiniteMetricMeasureSpace
    sp = FiniteMetricMeasureSpace(np.array([[0.0, 1.0], [1.0, 0.0]]), np.ones(2))
    g = build_generator(sp, np.array([[0.0, 0.5], [0.5, 0.0]]))
    # Var(f) = (a-b)^2/2 on two unit masses, energy = 2 * 0.5 * (a-b)^2
    assert poincare_constant(g, [0, 1], [0, 1]) == pytest.approx(0.5)


def test_poincare_negative_control_disconnected(torus256, phi_j_11, triple_11):
    jm = JumpKernelSpec(phi_j_11).density(torus256)
    left, right = np.arange(128), np.arange(128, 256)
    jm[np.ix_(left, right)] = 0.0
    jm[np.ix_(right, left)] = 0.0
    v = check_poincare(build_generator(torus256, jm), 127, [4, 8, 16], triple_11.phi)
    assert not v.passed and math.isinf(v.worst_ratio)
    with pytest.raises(ValueError):
        check_poincare(build_generator(torus256, jm), 0, [4], triple_11.phi, kappa=0.5)


def test_tail_negative_control_inflated(torus256, phi_j_11):
    jm = JumpKernelSpec(phi_j_11).density(torus256)
    good = check_tail_integral(build_generator(torus256, jm), [1, 2, 4, 8, 16, 32], phi_j_11)
    bad = check_tail_integral(build_generator(torus256, jm * np.maximum(torus256.dist, 1.0)),
                              [1, 2, 4, 8, 16, 32], phi_j_11)
    assert good.passed and not bad.passed
    assert bad.worst_ratio > 10


def test_cutoff_negative_control_heavy_tail(torus256, triple_11):
    heavy = ScaleFunction.piecewise_power([1.0], [1.0, 0.5])
    v = check_cutoff_energy(build_generator(torus256, JumpKernelSpec(heavy)), 0, [2, 4, 8, 16], triple_11.phi)
    assert not v.passed and v.worst_ratio > 10


def test_ujs_and_zeroed_neighborhood(gen256, torus256):
    triples = ujs_triples(torus256, [1, 2, 4, 8, 16], [0], [128])
    assert all(r <= torus256.dist[x, y] / 2 for x, y, r in triples)
    assert check_ujs(gen256, triples).passed
    jm = gen256.jump.copy()
    ball = torus256.ball(0, 16)
    near = ball[ball != 0]
    jm[near, 128] = 0.0
    jm[128, near] = 0.0
    v = check_ujs(build_generator(torus256, jm), triples)
    assert not v.passed and v.worst_ratio == pytest.approx(33.0)
    with pytest.raises(ValueError):
        check_ujs(gen256, [(0, 4, 3.0)])


def test_harnack_nominal_and_hub_control(gen256, torus256, triple_11):
    fam = caloric_family(torus256)
    nominal = check_phi_harnack(gen256, 0, [4, 8, 16], triple_11.phi, fam)
    assert nominal.passed
    stable = ScaleFunction.power(0.25)
    base = JumpKernelSpec(stable).density(torus256)
    pert = build_generator(torus256, hub_perturbation(torus256, base, 0, 128, 10))
    ratios = harnack_ratios(pert, 0, [4, 8, 16], stable, fam)
    assert np.all(np.diff(ratios) > 0)
    assert max(ratios) > 3 * min(s["value"] for s in nominal.samples)


def test_caloric_family_deterministic(torus64):
    a = caloric_family(torus64, seed=4)
    b = caloric_family(torus64, seed=4)
    np.testing.assert_array_equal(a, b)
    assert np.all(a >= 0) and a.shape[0] == 64


def test_cylinder_guard(gen64, triple_11):
    with pytest.raises(Exception):
        harnack_ratios(gen64, 0, [8], triple_11.phi, caloric_family(gen64.space), Cylinder(reach=2.0))


def test_exit_scaling(gen256, triple_11):
    v = check_exit_scaling(gen256, 0, [4, 8, 16, 32], triple_11.phi, mc_radii=[4], n_paths=2000, seed=3)
    assert v.passed
    assert 1.5 < v.constants["log_slope"] < 2.3
    assert v.constants["mc_max_z"] < 3
    assert 0 < v.constants["ep_c"] <= 2.0


def test_volume_verdict(torus256):
    v = check_volume(torus256, [2, 4, 8, 16])
    assert v.passed and v.constants["d2"] == pytest.approx(1.0, abs=0.1)
    assert isinstance(v, ConditionVerdict)
