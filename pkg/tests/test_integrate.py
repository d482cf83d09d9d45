import math

import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.linalg import expm

from singhopf import integrate as I
from singhopf.errors import DomainError
from singhopf.models import ModelId, ParameterSet, UnscaledParameterSet, jacobian

Q = ModelId.RESCALED_QUADRATIC
TIGHT = I.IntegratorConfig(rel_tol=1e-10, abs_tol=1e-13, max_step=0.1, t_max=1.0)


def test_exponential_decay_via_linear_slice():
    # with mu = A = B = 0 the Z equation decouples: Z' = -C Z
    p = ParameterSet(0.0, 0.0, 0.0, 1.0)
    tr = I.integrate(Q, [0.0, 0.0, 1.0], p, TIGHT.with_(abs_tol=1e-14))
    assert tr.final_state[2] == pytest.approx(math.exp(-1.0), abs=1e-8)


def test_trajectory_invariants():
    tr = I.integrate(Q, [0.01, 0.0, 0.0], ParameterSet(0.0, -0.05, 0.001, 0.1), TIGHT.with_(t_max=50))
    assert np.all(np.diff(tr.times) > 0)
    assert len(tr.times) == len(tr.states)


def test_converges_to_origin_focus():
    p = ParameterSet(0.0, -0.05, 0.001, 0.1)
    tr = I.integrate(Q, [0.01, 0.0, 0.0], p, I.IntegratorConfig(t_max=5000),
                     [I.ProximityToPoint([0, 0, 0], 1e-6, 10.0)])
    assert tr.termination is I.Termination.CONVERGED
    assert np.linalg.norm(tr.final_state) < 1e-6


def test_escape_box():
    p = ParameterSet(0.0, -0.05, 0.001, 0.1)
    tr = I.integrate(Q, [-2.0, 0.0, 0.0], p, I.IntegratorConfig(t_max=100), [I.DEFAULT_ESCAPE])
    assert tr.termination is I.Termination.ESCAPED
    assert tr.final_state[0] < -10


def test_plane_crossings_on_unstable_manifold():
    from singhopf.manifolds import unstable_plane, default_ring_radius
    from singhopf.equilibria import e_f
    p = ParameterSet(0.0014975, -0.05, 0.001, 0.1)
    e = np.asarray(e_f(p).location)
    plane = unstable_plane(Q, p, e)
    seed = e + default_ring_radius(e) * plane.v1
    ev = I.PlaneCrossing((0, 1, 0), 0.5, 1, 0)
    tr = I.integrate(Q, seed, p, I.IntegratorConfig(t_max=5000, max_step=0.5), [ev, I.DEFAULT_ESCAPE],
                     record=False)
    assert len(tr.crossings(0)) >= 3
    assert np.allclose(tr.crossings(0)[:, 1], 0.5, atol=1e-9)


def test_event_time_independent_of_max_step():
    p = ParameterSet(0.0015, -0.05, 0.001, 0.1)
    ev = I.PlaneCrossing((1, 0, 0), 0.0, -1, 1)
    times = []
    for h in (0.5, 0.05):
        tr = I.integrate(Q, [0.2, 0.0, 0.0], p, I.IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13,
                                                                   max_step=h, t_max=50), [ev])
        times.append(tr.hits[0].t)
    assert abs(times[0] - times[1]) < 1e-8


def test_forward_backward_round_trip():
    p = ParameterSet(0.0015, -0.05, 0.001, 0.1)
    s0 = np.array([0.1, -0.05, 0.2])
    cfg = I.IntegratorConfig(rel_tol=1e-10, abs_tol=1e-13, t_max=10)
    s1 = I.integrate(Q, s0, p, cfg).final_state
    s2 = I.integrate(Q, s1, p, cfg, direction=-1).final_state
    assert np.allclose(s2, s0, atol=1e-6)


def test_tolerance_halving_is_consistent():
    p = ParameterSet(0.0015, -0.05, 0.001, 0.1)
    s0 = [0.1, 0.0, 0.0]
    a = I.integrate(Q, s0, p, I.IntegratorConfig(rel_tol=1e-8, abs_tol=1e-11, t_max=20)).final_state
    b = I.integrate(Q, s0, p, I.IntegratorConfig(rel_tol=5e-9, abs_tol=5e-12, t_max=20)).final_state
    c = I.integrate(Q, s0, p, I.IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14, t_max=20)).final_state
    assert np.linalg.norm(a - b) < 10 * max(np.linalg.norm(a - c), 1e-12)


def test_variational_matches_expm_for_linear_system():
    # the origin is an equilibrium at mu = 0, so the linearization is constant along it
    p = ParameterSet(0.0, -0.05, 0.001, 0.1)
    x, M = I.integrate_variational(Q, [0, 0, 0], p, 2.0, I.IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14))
    assert np.allclose(M, expm(2.0 * jacobian(Q, [0, 0, 0], p)), atol=1e-7)


def test_variational_liouville():
    p = ParameterSet(0.0015, -0.05, 0.001, 0.1)
    cfg = I.IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13, max_step=0.01, t_max=5)
    s0 = [0.1, 0.05, 0.0]
    tr = I.integrate(Q, s0, p, cfg)
    trace = -2 * tr.states[:, 0] - p.c_cap
    integral = trapezoid(trace, tr.times)
    _, M = I.integrate_variational(Q, s0, p, 5.0, cfg)
    assert np.linalg.det(M) == pytest.approx(math.exp(integral), rel=1e-6)


def test_config_validation():
    with pytest.raises(DomainError):
        I.IntegratorConfig(rel_tol=0.1)
    with pytest.raises(DomainError):
        I.IntegratorConfig(t_max=0)


def test_csv_export(tmp_path):
    tr = I.integrate(Q, [0.01, 0, 0], ParameterSet(0.0, -0.05, 0.001, 0.1), I.IntegratorConfig(t_max=1))
    path = tr.to_csv(tmp_path / "t.csv")
    assert path.read_text().splitlines()[0] == "t,X,Y,Z"
    assert (tmp_path / "t.json").exists()


def test_unscaled_model_runs():
    up = UnscaledParameterSet(0.001, -0.5, 0.1, 1.0, 0.1)
    tr = I.integrate(ModelId.UNSCALED_QUADRATIC, [0.01, 0, 0], up, I.IntegratorConfig(t_max=1))
    assert np.all(np.isfinite(tr.states))


def test_map_parallel_keeps_order():
    assert I.map_parallel(lambda v: v * v, list(range(20)), 4) == [v * v for v in range(20)]
