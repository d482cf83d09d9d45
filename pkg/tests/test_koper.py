import numpy as np
import pytest

from singhopf import diagrams as D
from singhopf import koper as K
from singhopf import tangency as TG
from singhopf.equilibria import Criticality
from singhopf.errors import NotFound, PreconditionError
from singhopf.models import KoperParameters


@pytest.fixture(scope="module")
def scan():
    return K.koper_scan(0.1, 1.0, -10.0, with_tangency=True)


def test_hopf_residual_and_criticality():
    h = K.koper_hopf()
    assert h.residual < 1e-10
    assert h.criticality is Criticality.SUPERCRITICAL
    assert h.omega > 0 and h.period == pytest.approx(2 * np.pi / h.omega)


def test_equilibria_lie_on_diagonal():
    p = KoperParameters(0.1, 1.0, -10.0, -7.5)
    for x in K.koper_equilibrium_x(p):
        assert abs(x ** 3 + 7 * x - 7.5) < 1e-10
    e = K.koper_fold_equilibrium(p)
    assert e[0] == e[1] == e[2]


def test_no_hopf_in_range():
    with pytest.raises(NotFound):
        K.koper_hopf(lambda_range=(-5.0, -4.0))


def test_scan_needs_positive_eps():
    with pytest.raises(PreconditionError):
        K.koper_scan(0.0, 1.0, -10.0)


def test_scan_ordering(scan):
    assert scan.lambda_hopf < scan.lambda_tangency < scan.lambda_pd < scan.lambda_lpc
    assert list(scan.periods) == sorted(scan.periods)
    assert scan.nonlocal_lpc
    assert abs(scan.lambda_tangency + 7.539) < 0.02
    d = scan.to_dict()
    assert d["criticality"] == "Supercritical"


def test_scan_sequence_matches_catalog(scan):
    events = [D.BifurcationEvent(D.EventKind.H_SUP, scan.lambda_hopf),
              D.BifurcationEvent(D.EventKind.T, scan.lambda_tangency),
              D.BifurcationEvent(D.EventKind.PD, scan.lambda_pd)]
    assert D.match_table1(events) in (3, 6)


def test_fates_either_side_of_tangency(scan):
    setup = K.koper_fate_setup()
    below = TG.classify_fate(KoperParameters(0.1, 1.0, -10.0, scan.lambda_tangency - 0.03),
                             t_max=2000.0, setup=setup)
    above = TG.classify_fate(KoperParameters(0.1, 1.0, -10.0, scan.lambda_tangency + 0.03),
                             t_max=2000.0, setup=setup)
    assert below.verdict is TG.Verdict.ALL_BOUNDED
    assert above.verdict.escapes


def test_mmo_pattern_robust_to_threshold():
    base = K.detect_mmo(lam=-7.5)
    assert base.large_count >= 3 and min(base.small_counts) >= 1
    for th in (2.0, 0.5):
        assert K.detect_mmo(lam=-7.5, threshold=th).large_count == base.large_count
    assert base.to_dict()["threshold"] == 1.0


def test_no_mmo_below_hopf():
    sig = K.detect_mmo(lam=-8.5)
    assert sig.quiescent or sig.large_count == 0
