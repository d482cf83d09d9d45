import json

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from singhopf import equilibria as EQ
from singhopf import integrate as I
from singhopf import manifolds as M
from singhopf import periodic as PO
from singhopf.errors import PreconditionError
from singhopf.models import ModelId, ParameterSet, eval_field

from conftest import ABC

Q = ModelId.RESCALED_QUADRATIC
Y_HALF = I.PlaneCrossing((0.0, 1.0, 0.0), 0.5, 1, 0)


def _first_crossings(mesh, plane=I.PlaneCrossing((0.0, 1.0, 0.0), 0.5, 0, 0)):
    out = []
    for s, tr in zip(mesh.seeds, mesh.trajectories):
        dur = abs(tr.times[-1] - tr.times[0])
        rr = I.integrate(mesh.model, s, mesh.params, M.MANIFOLD_CFG.with_(t_max=dur), [plane],
                         direction=tr.direction, record=False)
        if rr.hits:
            out.append(rr.hits[0].state[:3])
    return np.array(out)


def test_attracting_sheet_reaches_origin_at_mu_zero():
    mesh = M.slow_manifold(ParameterSet(0.0, *ABC), "attracting", t_max=2000.0)
    ends = np.array([tr.final_state for tr in mesh.trajectories])
    near = np.linalg.norm(ends, axis=1) < 1e-3
    assert 0 < near.sum() < len(ends)
    assert mesh.label is M.MeshLabel.SA


def test_repelling_sheet_is_reverse_time():
    mesh = M.slow_manifold(ParameterSet(0.0014975, *ABC), "repelling")
    assert mesh.label is M.MeshLabel.SR
    assert all(tr.direction == -1 for tr in mesh.trajectories)


def test_repelling_crossings_form_monotone_curve():
    mesh = M.slow_manifold(ParameterSet(0.0014975, *ABC), "repelling",
                           z_values=np.linspace(0.0, 1.0, 9))
    pts = _first_crossings(mesh)
    assert len(pts) == 9
    assert np.all(np.diff(pts[:, 2]) > 0)
    assert np.all(np.diff(pts[:, 0]) < 0)


def test_repelling_sheet_independent_of_seed_distance():
    p = ParameterSet(0.0014975, *ABC)
    a = _first_crossings(M.slow_manifold(p, "repelling", x_seed=2.0,
                                         z_values=np.linspace(0.0, 1.0, 41)))
    b = _first_crossings(M.slow_manifold(p, "repelling", x_seed=3.0,
                                         z_values=np.linspace(-0.25, 0.5, 7)))
    curve = CubicSpline(a[:, 2], a[:, 0])
    inside = (b[:, 2] > a[0, 2]) & (b[:, 2] < a[-1, 2])
    assert inside.sum() >= 3
    assert np.max(np.abs(curve(b[inside, 2]) - b[inside, 0])) < 1e-4


@pytest.mark.parametrize("which,x", [("attracting", 0.5), ("repelling", -0.2)])
def test_seed_near_fold_rejected(which, x):
    with pytest.raises(PreconditionError):
        M.slow_manifold(ParameterSet(0.0, *ABC), which, x_seed=x)


def test_bad_sheet_name():
    with pytest.raises(PreconditionError):
        M.slow_manifold(ParameterSet(0.0, *ABC), "middle")


def test_bit_reversed_order_is_permutation():
    for n in (1, 7, 10, 32):
        order = M.bit_reversed_order(n)
        assert sorted(order) == list(range(n))
    assert M.bit_reversed_order(8)[:2] == [0, 4]


def test_unstable_plane_requires_saddle_focus():
    p = ParameterSet(0.0012, *ABC)
    with pytest.raises(PreconditionError):
        M.unstable_plane(Q, p, EQ.e_f(p).location)


def _fates(mu, t_max, n_rays=10):
    mesh = M.unstable_manifold_mesh(ParameterSet(mu, *ABC), n_rays=n_rays, t_max=t_max,
                                    record=False)
    return [f.value for f in mesh.fates]


@pytest.mark.slow
def test_mesh_fates_before_tangency():
    assert set(_fates(0.0012715, 20000.0)) == {"ConvergedToOrbit"}


def test_mesh_fates_mixed_after_tangency():
    fates = _fates(0.0015709, 5000.0)
    assert "Escaped" in fates and "ConvergedToOrbit" in fates


def test_mesh_fates_mostly_escape_late():
    fates = _fates(0.0017533, 5000.0, n_rays=32)
    assert fates.count("Escaped") >= 0.75 * len(fates)


def test_stable_manifold_branches():
    p = ParameterSet(0.0012715, *ABC)
    e = np.asarray(EQ.e_f(p).location)
    mesh = M.stable_manifold_1d(p, e)
    assert mesh.label is M.MeshLabel.WS and len(mesh.trajectories) == 2
    for s in mesh.seeds:
        d = s - e
        f = eval_field(Q, s, p)
        cos = f @ d / (np.linalg.norm(f) * np.linalg.norm(d))
        assert cos < -1 + 1e-6
    ends = [tr.final_state for tr in mesh.trajectories]
    half = M.stable_manifold_1d(p, e, delta=0.5e-6 * (1 + abs(e[0])))
    for a, b in zip(ends, (tr.final_state for tr in half.trajectories)):
        assert np.linalg.norm(a - b) < 1e-3


def test_stable_manifold_needs_real_stable_direction():
    p = ParameterSet(0.0012, *ABC)
    with pytest.raises(PreconditionError):
        M.stable_manifold_1d(p)


def test_section_portrait(quadratic_branch):
    bp = min(quadratic_branch.points, key=lambda b: abs(b.param - 0.0014975))
    p = ParameterSet(0.0014975, *ABC)
    gamma = PO.find_orbit(p, bp.orbit.anchor, bp.orbit.section)
    out = M.section_portrait(Y_HALF, {"Gamma": gamma})
    assert out["Gamma"].shape == (1, 3)
    assert abs(out["Gamma"][0, 1] - 0.5) < 1e-9
    assert M.section_portrait(Y_HALF, {}) == {}
    with pytest.raises(TypeError):
        M.section_portrait(Y_HALF, {"bad": 3})


def test_mesh_export(tmp_path):
    mesh = M.stable_manifold_1d(ParameterSet(0.0012715, *ABC), t_max=5.0)
    M.ManifoldMesh.export(mesh, tmp_path / "ws", {"run": 1})
    manifest = json.loads((tmp_path / "ws" / "manifest.json").read_text())
    assert manifest["label"] == "WsEf"
    assert len(manifest["trajectories"]) == 2
    first = (tmp_path / "ws" / manifest["trajectories"][0]["file"]).read_text().splitlines()
    assert first[0] == "t,X,Y,Z"


def test_unlifted_seeds_sit_on_critical_manifold():
    mesh = M.slow_manifold(ParameterSet(0.0, *ABC), "repelling", offset_order=0, t_max=1.0)
    for s in mesh.seeds:
        assert s[1] == s[0] ** 2


def test_sheet_offset_orders():
    p = ParameterSet(0.0014975, *ABC)
    assert M.sheet_offset(p, -2.0, 0.3, 0) == 0.0
    assert M.sheet_offset(p, -2.0, 0.3, 1) == pytest.approx((0.3 + 2.0) / -4.0)
    h1, h2 = M.sheet_offset(p, -20.0, 0.3, 1), M.sheet_offset(p, -20.0, 0.3, 2)
    assert abs(h2 - h1) < 1e-2 * abs(h1)
