import numpy as np
import pytest

from singhopf import equilibria as EQ
from singhopf import periodic as PO
from singhopf.models import ModelId, ParameterSet

ABC = (-0.05, 0.001, 0.1)

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def record_criterion():
    def record(number: int, ok: bool, detail: str):
        _ACCEPTANCE[number] = (bool(ok), detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def hopf_report():
    return EQ.hopf_locus(*ABC)


@pytest.fixture(scope="session")
def quadratic_branch(hopf_report):
    """Orbit branch of the reference parameter set from just past the Hopf point to 0.0023."""
    p = ParameterSet(0.00126, *ABC)
    orb = PO.orbit_from_hopf(ModelId.RESCALED_QUADRATIC, p, np.asarray(EQ.e_f(p).location))
    return PO.continue_orbit_in_mu(p, orb, (0.00126, 0.0023))
