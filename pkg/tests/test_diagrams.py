import math

import numpy as np
import pytest

from singhopf import diagrams as D
from singhopf import equilibria as EQ
from singhopf.errors import DegenerateB

from conftest import ABC

E = D.EventKind


def _ev(*pairs):
    return [D.BifurcationEvent(E(k), mu) for k, mu in pairs]


@pytest.mark.parametrize("kinds,row", [
    (["H_sup"], 1),
    (["H_sup", "SN"], 2),
    (["LPC", "PD", "H_sub"], 25),
    (["H_sub"], 13),
    (["H_sub", "SN"], 14),
    (["SN", "H_sub", "PD"], 15),
    (["H_sub", "PD"], 18),
    (["H_sup", "T", "NS", "PD"], 7),
    (["SN", "H_sup", "T", "NS", "PD"], 4),
    (["LPC", "NS", "H_sub", "T", "PD"], 24),
    (["PD", "H_sup"], None),
    ([], None),
])
def test_catalog_match_kinds(kinds, row):
    assert D.match_table1(kinds) == row


def test_every_catalog_row_matches_itself():
    for i, text in enumerate(D.TABLE1, start=1):
        kinds = [k.strip("()") for k in text.replace("±", "-").split(" - ")]
        assert D.match_table1(kinds) == i, text


def test_plus_minus_pair_order():
    close = _ev(("H_sup", 0.001), ("NS", 0.0015), ("T", 0.0015 + 5e-6), ("PD", 0.002))
    assert D.match_table1(close) == 7
    far = _ev(("H_sup", 0.001), ("NS", 0.0015), ("T", 0.0016), ("PD", 0.002))
    assert D.match_table1(far) is None
    # the listed order always matches
    assert D.match_table1(_ev(("H_sup", 0.001), ("T", 0.0015), ("NS", 0.0018),
                              ("PD", 0.002))) == 7


def test_event_mu_must_be_finite():
    with pytest.raises(ValueError):
        D.BifurcationEvent(E.PD, math.nan)


def test_sweep_reference_sequence():
    rec = D.sweep_mu(*ABC, (0.0, 0.0025))
    assert rec.kinds == ["H_sup", "T", "NS", "PD"]
    assert rec.table1_match == 7 and rec.unmatched_reason is None
    mus = [e.mu for e in rec.events]
    assert mus == sorted(mus)
    hopf = rec.events[0]
    assert hopf.metadata["l1"] < 0
    assert abs(hopf.mu - EQ.hopf_locus(*ABC).mu_star) < 1e-12
    d = rec.to_dict()
    assert d["table1_match"] == 7 and d["params"] == {"A": -0.05, "B": 0.001, "C": 0.1}


def test_sweep_subcritical_starts_with_h_sub():
    A = -0.095
    assert EQ.hopf_locus(A, 0.001, 0.1).l1 > 0
    rec = D.sweep_mu(A, 0.001, 0.1, (0.0, 0.001))
    assert rec.kinds[0] == "H_sub"
    assert rec.table1_match in range(13, 26)


def test_sweep_empty_range():
    rec = D.sweep_mu(*ABC, (-0.01, -0.005), orbits=False)
    assert rec.events == [] and rec.table1_match is None
    assert rec.unmatched_reason == "no events"


def test_sweep_rejects_infinite_range():
    with pytest.raises(ValueError):
        D.sweep_mu(*ABC, (0.0, math.inf))


@pytest.mark.slow
def test_sweep_grid_always_explained():
    for A in np.linspace(-0.12, 0.02, 12):
        rec = D.sweep_mu(float(A), 0.001, 0.1, (-0.005, 0.005))
        assert rec.table1_match is not None or rec.unmatched_reason, A


def test_sn_curve_is_parabola():
    a = np.linspace(-0.3, 0.1, 41)
    c = D.trace_curve("SN", 0.001, 0.1, a, mu_window=(-1, 1))
    for A, mu in c.points:
        assert mu == pytest.approx((A + 0.1) ** 2 / 0.004, rel=1e-14)
    assert c.annotations[0]["label"] == "ZH"
    with pytest.raises(DegenerateB):
        D.trace_curve("SN", 0.0, 0.1, a)


def test_hopf_curve_near_leading_order():
    B, C = 0.001, 0.1
    a = np.linspace(-0.15, 0.05, 41)
    c = D.trace_curve("Hopf", B, C, a, mu_window=(-1, 1))
    assert len(c.points) >= 35
    for A, mu in c.points:
        lead = -A * A / 2 - A * C / 2
        second = B * C * (A + C) / 2 + A * C * (A + C) ** 2 / 2
        size = abs(A) + abs(C) + math.sqrt(abs(B))
        assert abs(mu - lead - second) <= 3 * size ** 6
    labels = {d["label"] for d in c.annotations}
    assert labels == {"ZH", "GH"}


@pytest.mark.parametrize("B", [0.001, -0.001, 0.01, -0.01])
def test_hopf_meets_saddle_node_at_zero_hopf(B):
    C = 0.1
    a_zh = C * (B - 1)
    a = np.linspace(a_zh - 0.01, a_zh + 0.01, 2001)
    hopf = D.trace_curve("Hopf", B, C, a, mu_window=(-1, 1))
    sn = dict(D.trace_curve("SN", B, C, a, mu_window=(-1, 1)).points)
    gaps = [abs(mu - sn[A]) for A, mu in hopf.points if A in sn]
    A_best = [A for A, mu in hopf.points if A in sn][int(np.argmin(gaps))]
    assert abs(A_best - a_zh) < 1e-3


def test_torus_curve_ends_at_zero_hopf():
    B, C = -0.01, 0.1
    a_zh = C * (B - 1)
    c = D.trace_curve("NS", B, C, [-0.099, -0.098, -0.095], mu_window=(-0.01, 0.01))
    (a1, m1), (a2, m2) = c.points[:2]
    mu_at_zh = m1 + (m2 - m1) / (a2 - a1) * (a_zh - a1)
    mu_zh = (a_zh + C) ** 2 / (4 * B)
    assert abs(mu_at_zh - mu_zh) < 5e-5


def test_unknown_curve_kind():
    with pytest.raises(ValueError):
        D.trace_curve("XYZ", 0.001, 0.1, [0.0])


def test_canard_lines():
    lo, hi = D.canard_lines(0.001, 0.1)
    assert lo == pytest.approx(-0.0887298, abs=1e-6)
    assert hi == pytest.approx(-0.0112702, abs=1e-6)
    for A in (lo, hi):
        assert abs(A * A + A * 0.1 + 0.001) < 1e-15
    assert D.canard_lines(0.0025, 0.1) == [-0.05]
    assert D.canard_lines(0.01, 0.1) == []
    assert D.canard_lines(-0.01, 0.0) == pytest.approx([-0.1, 0.1], abs=1e-16)


@pytest.mark.parametrize("B,C,family,probe", [
    (-0.01, 0.1, "Ia", False),
    (-0.01, -0.1, "Ib", False),
    (0.001, 0.1, "IIa", False),
    (0.02, 0.1, "VIIIa", False),
    (0.0015, 0.1, "III-VIIa", True),
])
def test_region_classify(B, C, family, probe):
    info = D.region_classify(B, C)
    assert info.family == family
    assert info.requires_probe is probe
    assert family in info.candidates or probe


def test_region_indicators():
    info = D.region_classify(0.001, 0.1).to_dict()
    assert info["gh_indicator"] == pytest.approx(0.002)
    assert info["canard_indicator"] == pytest.approx(0.006)
    assert info["gh_sign"] == 1 and info["canard_sign"] == 1
    with pytest.raises(DegenerateB):
        D.region_classify(0.0, 0.1)


def test_orbit_flip_points():
    pts = D.orbit_flip_point(-0.01, -0.1)
    assert len(pts) == 2 and all(p["status"] == "CONJECTURED" for p in pts)
    best = min(pts, key=lambda p: abs(p["A"] - 0.161803))
    assert best["mu"] == pytest.approx(-0.0025)
    assert best["A"] == pytest.approx((0.1 + math.sqrt(0.05)) / 2)
    assert D.orbit_flip_point(0.0025, 0.1) == [{"mu": 0.000625, "A": -0.05, "status": "CONJECTURED"}]
    assert D.orbit_flip_point(0.01, 0.1) == []


def test_loci_invariant_under_reflection():
    # C -> -C together with A -> -A leaves the Hopf and saddle-node loci unchanged
    for A in (-0.05, -0.02, 0.03):
        for B in (0.001, -0.01):
            h1 = EQ.hopf_locus(A, B, 0.1, with_l1=False).mu_star
            h2 = EQ.hopf_locus(-A, B, -0.1, with_l1=False).mu_star
            assert h1 == pytest.approx(h2, abs=1e-14)
            assert EQ.saddle_node_locus(A, B, 0.1)[0] == pytest.approx(
                EQ.saddle_node_locus(-A, B, -0.1)[0], abs=1e-15)
