import json
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fermatlab import functionals as fn
from fermatlab import hilbert as hb
from fermatlab import paths as P
from fermatlab import phase as ph
from fermatlab import variation as V
from fermatlab.functionals import FunctionalValue
from fermatlab.systems import oscillator, pendulum, random_hermitian, spin_pair


def linear_functional(weights):
    def f(path):
        c = np.sum(path.nodes * weights, axis=1)
        return FunctionalValue.from_segments(c, np.ones_like(c))

    return f


# ------------------------------------------------------------------ fields


def test_perturbation_keeps_endpoints_and_restores_constraints():
    H = random_hermitian(4, 1)
    q = P.schrodinger_source(hb.random_state(4, np.random.default_rng(1)), H, 1.0)(30)
    f = V.PerturbationField(2, 5)
    out = V.perturb(q, f, 0.05)
    assert np.array_equal(out.states[[0, -1]], q.states[[0, -1]])
    assert np.linalg.norm(out.states, axis=1) == pytest.approx(np.ones(31), abs=1e-15)
    assert V.perturb(q, f, 0.0) is q

    sys = pendulum(2)
    c = P.flow_source([1.0, 0.5, 0.2, -0.3], sys, 2.0)(40)
    out = V.perturb(c, V.PerturbationField(1, 3, system=sys), 0.05)
    assert out.check_shell(sys) < 1e-12

    osc = oscillator(3)
    e = P.config_flow_source([1, 0, 0, 0, 0.6, 0.8], osc, 2.0, equipotential=True)(40)
    out = V.perturb(e, V.PerturbationField(1, 3, "project_to_level", osc), 0.05)
    assert np.max(np.abs(osc.potential(out.positions) - e.equipotential)) < 1e-12


def test_directions_are_free_of_tangent_and_constraint_normal_components():
    sys = oscillator(2, omega=[1.0, 1.4])
    path = P.flow_source([1.0, 0.3, 0.0, 0.5], sys, 2.0)(50)
    d = V.PerturbationField(1, 2, system=sys).directions(path)
    g = sys.gradient(path.points)
    assert np.max(np.abs(np.sum(d * g, axis=1))) < 1e-12

    H = random_hermitian(4, 3)
    q = P.schrodinger_source(hb.random_state(4, np.random.default_rng(3)), H, 1.0)(50)
    dq = V.PerturbationField(1, 2).directions(q)
    assert np.max(np.abs(hb.inner(q.states, dq))) < 1e-12
    t = P.horizontal_tangents(q.states)
    assert np.max(np.abs(np.real(hb.inner(t, dq)))) < 1e-12


def test_one_degree_of_freedom_shell_has_no_admissible_direction():
    sys = pendulum(1)
    path = P.flow_source([1.0, 0.3], sys, 2.0)(50)
    d = V.PerturbationField(1, 2, system=sys).directions(path)
    assert np.max(np.abs(d)) < 1e-12


def test_directions_are_seed_deterministic():
    path = P.ConfigPath(np.linspace([0.0, 0.0, 0.0], [1.0, 1.0, 0.0], 21))
    a = V.PerturbationField(1, 9).directions(path)
    assert np.array_equal(a, V.PerturbationField(1, 9).directions(path))
    assert not np.array_equal(a, V.PerturbationField(1, 10).directions(path))


# ------------------------------------------------------------------ estimators


def test_first_variation_is_exact_for_linear_functional():
    w = np.array([0.3, -1.2])
    path = P.ConfigPath(np.linspace([0.0, 0.0], [1.0, 2.0], 41))
    f = V.PerturbationField(1, 4)
    est = V.first_variation(linear_functional(w), path, f, 1e-2)
    exact = math.fsum(f.shape(path) * (f.directions(path) @ w))
    assert est.d4 == pytest.approx(exact, rel=1e-10)
    assert est.d2 == pytest.approx(exact, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-5, 5), c4=st.floats(-1e4, 1e4), c6=st.floats(-1e6, 1e6))
def test_extrapolation_removes_polynomial_bias(a, c4, c6):
    eps = V.DEFAULT_EPSILONS
    ests = [V.VariationEstimate(e, (0, 0, 0, 0), 0.0, a + c4 * e**4 + c6 * e**6) for e in eps]
    assert V.extrapolate_slope(ests) == pytest.approx(a, abs=1e-9)


def test_fitted_order_recovers_power_law():
    grids = [250, 500, 1000, 2000]
    assert V.fitted_order(grids, [3.0 * n**-2.0 for n in grids]) == pytest.approx(2.0, abs=1e-12)
    assert math.isnan(V.fitted_order(grids, [0.0, 1.0, 1.0, 1.0]))


def _record(slopes, grids=(250, 500, 1000, 2000)):
    recs = [V.GridRecord(n, 1.0, [], s) for n, s in zip(grids, slopes)]
    return V.DirectionRecord(1, 0, recs)


def test_classification_rules():
    th = {"ratio": 1e-3, "order": 2.0, "order_tol": 0.05, "convergence_tol": 0.05, "zero_floor": 1e-11}
    decaying = _record([1.6e-5, 4e-6, 1e-6, 2.5e-7])
    V._classify(decaying, 1.0, th)
    assert decaying.monotone and decaying.order == pytest.approx(2.0) and not decaying.converged
    constant = _record([0.5, 0.5001, 0.5, 0.5])
    V._classify(constant, 1.0, th)
    assert constant.converged and not constant.monotone
    noise = _record([3e-14, -5e-14, 2e-14, 1e-14])
    V._classify(noise, 1.0, th)
    assert noise.round_off and not noise.converged
    first_order = _record([4e-3, 2e-3, 1e-3, 5e-4])
    V._classify(first_order, 1.0, th)
    decaying.baseline_ratio = first_order.baseline_ratio = 1e-6
    assert V._verdict([decaying], th, True) == "stationary"
    assert V._verdict([decaying, first_order], th, True) == "inconclusive"
    assert V._verdict([decaying], th, False) == "inconclusive"
    assert V._verdict([constant], th, True) == "non-stationary"


# ------------------------------------------------------------------ end to end


def test_geodesic_is_stationary_for_fs_length():
    psi_a, psi_b = hb.basis_state(3, 0), hb.random_state(3, np.random.default_rng(8))
    src = P.geodesic_source(psi_a, psi_b)
    dirs = V.seeded_directions(3, [1, 2], 1)
    rep = V.stationarity_test(fn.path_length, src, dirs, grids=(100, 200, 400),
                              baseline_source=P.distorted_quantum_source(src, 0.2, 3))
    assert rep.verdict == "stationary"
    assert rep.baseline.verdict == "non-stationary"


def test_report_is_json_clean_and_executor_independent():
    H = random_hermitian(4, 5)
    psi = hb.random_state(4, np.random.default_rng(5))
    src = P.schrodinger_source(psi, H, 1.0)
    dirs = V.seeded_directions(2, [1, 2], 3)

    def run(ex):
        return V.stationarity_test(lambda p: fn.quantum_time_functional(p, H), src, dirs, grids=(50, 100, 200),
                                   baseline_source=P.geodesic_source(psi, src(1).states[-1]), executor=ex)

    serial = run(None)
    with ThreadPoolExecutor(3) as ex:
        threaded = run(ex)
    a = json.dumps(serial.to_dict(), sort_keys=True, allow_nan=False)
    assert a == json.dumps(threaded.to_dict(), sort_keys=True, allow_nan=False)
    assert len(serial.cells()) == 2 * 3 * len(V.DEFAULT_EPSILONS)


def test_multiplier_trace_consistent_on_flows_and_not_on_gradient_flow():
    sys = pendulum(1)
    for sign in (1, -1):
        assert V.lambda_consistency(ph.hamilton_flow([1.0, 0.3], sys, 2.0, 2000, sign), sys).spread < 1e-10
    assert V.lambda_consistency(ph.gradient_flow([1.0, 0.3], sys, 1.0, 2000), sys).spread > 0.5
    osc = oscillator(2)
    assert V.lambda_consistency(ph.hamilton_flow([1.0, 0.3, 0.0, 0.5], osc, 2.0, 2000), osc).spread < 1e-10


def test_multiplier_trace_handles_vanishing_terms():
    sys = spin_pair(1, field=0.5)
    tr = V.lambda_consistency(ph.hamilton_flow([0.3, 0.7], sys, 2.0, 200), sys)
    assert tr.spread == 0.0
    assert json.dumps(tr.to_dict(), allow_nan=False)


def test_isoperimetric_multiplier_fails_completely_on_oscillator():
    sys = oscillator(1)
    for n in (200, 800):
        tr = V.isoperimetric_time_test(ph.hamilton_flow([1.0, 0.3], sys, 2 * math.pi, n), sys)
        assert tr.spread == 1.0
        assert tr.metadata["B_norm"] == 0.0
