import math

import numpy as np
import pytest

from singhopf.errors import DomainError, ParameterMismatchError
from singhopf.models import (KoperParameters, ModelConfig, ModelId, ParameterSet, SheetStability,
                             UnscaledParameterSet, critical_manifold, eval_field, eval_slow_flow,
                             fold_points, jacobian, reflect_parameters, reflect_state,
                             rescale_to_capital, rescale_to_lower, state_map)
from singhopf import integrate as I

Q = ModelId.RESCALED_QUADRATIC
P = ParameterSet(0.0, -0.05, 0.001, 0.1)


def test_field_at_origin_vanishes():
    assert np.allclose(eval_field(Q, [0, 0, 0], ParameterSet(0.0, 0.3, -0.2, 0.7)), 0)


def test_field_substitution():
    assert np.allclose(eval_field(Q, [1, 1, 1], P), [0, 0, -0.051], atol=1e-15)


def test_koper_field_origin():
    assert np.allclose(eval_field(ModelId.KOPER, [0, 0, 0], KoperParameters(0.1, 1, -10, 0)), 0)


def test_jacobian_at_origin():
    J = jacobian(Q, [0, 0, 0], P)
    assert np.allclose(J, [[0, 1, 0], [-1, 0, 1], [0.05, -0.001, -0.1]])


def test_cubic_jacobian_entry():
    eps = 0.01
    p = ParameterSet(0.0, -0.05, 0.001, 0.1, eps=eps)
    X = 0.7
    J = jacobian(ModelId.RESCALED_CUBIC, [X, 0.2, 0.1], p)
    assert J[0, 0] == pytest.approx(-2 * X - 3 * math.sqrt(eps) * X * X, rel=1e-12)


def test_wrong_parameter_kind_rejected():
    with pytest.raises(ParameterMismatchError):
        eval_field(ModelId.KOPER, [0, 0, 0], P)


def test_rescale_parameters():
    r = rescale_to_capital(UnscaledParameterSet(0, 1, 1, 1, 0.01))
    assert (r.params.a_cap, r.params.b_cap, r.params.c_cap) == pytest.approx((0.1, 0.01, 0.1))
    assert r.time_factor == pytest.approx(10.0)


def test_eps_one_is_identity():
    r = rescale_to_capital(UnscaledParameterSet(0.2, 0.3, 0.4, 0.5, 1.0))
    assert (r.params.mu, r.params.a_cap, r.params.b_cap, r.params.c_cap) == (0.2, 0.3, 0.4, 0.5)
    assert np.array_equal(state_map([1, 2, 3], 1.0), [1, 2, 3])


def test_state_map_round_trip():
    s = np.array([0.3, -0.2, 1.7])
    back = state_map(state_map(s, 0.04), 0.04, "to_unscaled")
    assert np.allclose(back, s, rtol=1e-15, atol=0)
    up = rescale_to_lower(rescale_to_capital(UnscaledParameterSet(0, 1, 2, 3, 0.04)).params, 0.04)
    assert (up.a, up.b, up.c) == pytest.approx((1, 2, 3))


def test_nonpositive_eps_rejected():
    with pytest.raises(DomainError):
        UnscaledParameterSet(0, 1, 1, 1, 0.0)
    with pytest.raises(DomainError):
        state_map([1, 1, 1], -1.0)


def test_critical_manifold_sheets():
    cp = critical_manifold(Q, 2.0)
    assert cp.y == 4.0 and cp.stability is SheetStability.ATTRACTING
    assert critical_manifold(Q, -1.0).stability is SheetStability.REPELLING
    assert critical_manifold(Q, 0.0).stability is SheetStability.FOLD


def test_cubic_critical_manifold():
    eps = 0.01
    p = ParameterSet(0, 0, 0.001, 0.1, eps=eps)
    assert critical_manifold(ModelId.RESCALED_CUBIC, 2.0, p).y == pytest.approx(4 + 0.1 * 8)


def test_koper_folds():
    assert sorted(fold_points(ModelId.KOPER, KoperParameters(0.1, 1, -10, 0))) == pytest.approx([-1, 1])


def test_slow_flow():
    up = UnscaledParameterSet(0, -0.05, 0.001, 0.1, 0.01)
    assert np.allclose(eval_slow_flow([0, 0], up), 0)
    assert np.allclose(eval_slow_flow([1, 1], up), [0, -0.102])
    for x in np.linspace(-2, 2, 9):
        assert eval_slow_flow([x, x], up)[0] == 0


def test_reflection_reverses_time():
    """Backward flow of (mu, A, B, C) maps onto forward flow of the reflected set."""
    p = ParameterSet(0.001, -0.05, 0.001, 0.1)
    s0 = np.array([0.05, 0.02, -0.03])
    cfg = I.IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13, t_max=3.0)
    back = I.integrate(Q, s0, p, cfg, direction=-1).final_state
    fwd = I.integrate(Q, reflect_state(s0), reflect_parameters(p), cfg).final_state
    assert np.allclose(reflect_state(back), fwd, atol=1e-9)


def test_model_config_json_round_trip():
    mc = ModelConfig(Q, ParameterSet(0.001, -0.05, 0.001, 0.1))
    back = ModelConfig.from_json(mc.to_json())
    assert back.params == mc.params
    with pytest.raises(ParameterMismatchError):
        ModelConfig.from_json('{"model": "rescaled_quadratic", "params": {"mu": 0, "A": 0, "B": 0, "C": 0, "D": 1}}')


def test_equilibria_on_critical_manifold():
    from singhopf.equilibria import find_equilibria
    for rep in find_equilibria(ParameterSet(0.0015, -0.05, 0.001, 0.1)):
        x = rep.location.x
        assert rep.location.y == x * x and rep.location.z == x
