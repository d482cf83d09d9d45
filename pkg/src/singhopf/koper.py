"""Koper's three-variable chemical oscillator: Hopf, orbit branch, tangency, MMOs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import integrate as I
from . import periodic as PO
from .equilibria import Criticality, first_lyapunov
from .errors import NotFound, PreconditionError
from .models import KoperParameters, ModelId, jacobian

KOPER = ModelId.KOPER
KOPER_CFG = I.IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12, max_step=0.05, t_max=200.0)


def koper_equilibrium_x(p: KoperParameters) -> list[float]:
    """Real roots of x^3 - (3 + k) x + lam = 0 (equilibria have x = y = z)."""
    roots = np.roots([1.0, 0.0, -(3.0 + p.k), p.lam])
    return sorted(float(r.real) for r in roots if abs(r.imag) < 1e-9 * max(1.0, abs(r)))


def koper_fold_equilibrium(p: KoperParameters) -> np.ndarray:
    """The equilibrium closest to a fold x = +-1 of the critical manifold."""
    xs = koper_equilibrium_x(p)
    if not xs:
        raise NotFound("no Koper equilibrium")
    x = min(xs, key=lambda v: abs(abs(v) - 1.0))
    return np.array([x, x, x])


def _char_coeffs(p: KoperParameters, x: float):
    c = np.poly(jacobian(KOPER, [x, x, x], p))
    return c[1], c[2], c[3]


def _hopf_residual(p: KoperParameters, x: float) -> float:
    c2, c1, c0 = _char_coeffs(p, x)
    return c2 * c1 - c0


@dataclass
class KoperHopf:
    lam: float
    x: float
    omega: float
    l1: float
    criticality: Criticality
    residual: float

    @property
    def period(self) -> float:
        return 2 * math.pi / self.omega


def koper_hopf(eps1: float = 0.1, eps2: float = 1.0, k: float = -10.0,
               lambda_range=(-9.0, -5.0)) -> KoperHopf:
    """Hopf point on the equilibrium branch from the Routh-Hurwitz condition."""
    base = KoperParameters(eps1, eps2, k, 0.0)

    def lam_of(x):
        return (3.0 + k) * x - x ** 3

    xs = np.linspace(-3.0, 3.0, 1201)
    found = []
    for a, b in zip(xs, xs[1:]):
        fa, fb = _hopf_residual(base, a), _hopf_residual(base, b)
        if fa * fb < 0:
            x = brentq(lambda v: _hopf_residual(base, v), a, b, xtol=1e-15, rtol=1e-15)
            lam = lam_of(x)
            c2, c1, c0 = _char_coeffs(base, x)
            if c1 > 0 and lambda_range[0] <= lam <= lambda_range[1]:
                found.append((x, lam, c1))
    if not found:
        raise NotFound(f"no Koper Hopf point in lambda range {lambda_range}")
    x, lam, c1 = min(found, key=lambda t: t[1])
    p = base.with_lambda(lam)
    e = np.array([x, x, x])
    l1 = first_lyapunov(p, e, model=KOPER, check=False)
    crit = Criticality.SUPERCRITICAL if l1 < 0 else Criticality.SUBCRITICAL
    return KoperHopf(lam, x, math.sqrt(c1), l1, crit, abs(_hopf_residual(base, x)))


@dataclass
class KoperScanResult:
    lambda_hopf: float
    lambda_pd: float
    lambda_lpc: float
    periods: tuple
    lambda_tangency: float = float("nan")
    criticality: Criticality = Criticality.SUPERCRITICAL
    hopf_period: float = float("nan")
    nonlocal_lpc: bool = False
    events: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"lambda_hopf": self.lambda_hopf, "lambda_pd": self.lambda_pd,
                "lambda_lpc": self.lambda_lpc, "periods": list(self.periods),
                "lambda_tangency": self.lambda_tangency, "criticality": self.criticality.value,
                "hopf_period": self.hopf_period, "nonlocal_lpc": self.nonlocal_lpc,
                "events": [e.to_dict() for e in self.events]}


def koper_branch(eps1=0.1, eps2=1.0, k=-10.0, lambda_range=(-9.0, -5.0), *,
                 offset: float = 1e-4, max_points: int = 3000) -> tuple[KoperHopf, PO.Branch]:
    """Orbit branch continued in lambda from just past the Hopf point."""
    h = koper_hopf(eps1, eps2, k, lambda_range)
    side = 1.0 if h.criticality is Criticality.SUPERCRITICAL else -1.0
    # side of the Hopf point where the small cycle exists
    lam0 = h.lam + offset
    p0 = KoperParameters(eps1, eps2, k, lam0)
    e = koper_fold_equilibrium(p0)
    try:
        orb = PO.orbit_from_hopf(KOPER, p0, e)
    except PreconditionError:
        lam0 = h.lam - offset
        p0 = KoperParameters(eps1, eps2, k, lam0)
        orb = PO.orbit_from_hopf(KOPER, p0, koper_fold_equilibrium(p0))
        side = -side
    direction = 1 if lam0 > h.lam else -1
    br = PO.continue_orbit_ms(p0, orb, "lam",
                              stop=lambda_range[1] if direction > 0 else lambda_range[0],
                              pscale=0.1, ds=0.02, ds_max=0.1, direction=direction,
                              max_points=max_points, cfg=PO.ORBIT_CFG)
    return h, br


def koper_scan(eps1: float = 0.1, eps2: float = 1.0, k: float = -10.0,
               lambda_range=(-9.0, -5.0), *, with_tangency: bool = False) -> KoperScanResult:
    """Hopf, period-doubling and fold of cycles along the Koper orbit branch."""
    if not (eps1 > 0 and eps2 > 0):
        raise PreconditionError("eps1 and eps2 must be positive")
    h, br = koper_branch(eps1, eps2, k, lambda_range)
    pd = next((e for e in br.events if e.tag is PO.OrbitBifurcationTag.PD), None)
    lpc = next((e for e in br.events if e.tag is PO.OrbitBifurcationTag.LPC), None)
    nan = float("nan")
    res = KoperScanResult(
        lambda_hopf=h.lam, lambda_pd=pd.param if pd else nan, lambda_lpc=lpc.param if lpc else nan,
        periods=(h.period, pd.period if pd else nan, lpc.period if lpc else nan),
        criticality=h.criticality, hopf_period=h.period,
        nonlocal_lpc=bool(lpc and lpc.period > 1.5 * h.period), events=list(br.events))
    if with_tangency and pd is not None:
        res.lambda_tangency = koper_tangency(eps1, eps2, k, (h.lam + 0.02, pd.param))
    return res


def koper_fate_setup(t_max: float = 2000.0, escape_radius: float = 1.5):
    """Fate-test ingredients for the Koper field: escape means |x - x_e| > escape_radius."""
    from .tangency import FateSetup

    return FateSetup(model=KOPER, escape_radius=escape_radius, param="lam",
                     cfg=I.IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12, max_step=0.05,
                                            t_max=t_max))


def koper_tangency(eps1: float = 0.1, eps2: float = 1.0, k: float = -10.0,
                   bracket=(-7.65, -7.47), tol: float = 1e-4, *, n_grid: int = 10,
                   t_max: float = 2000.0, escape_radius: float = 1.5) -> float:
    """Onset of escape of W^u(E_f) from a box of half-width ``escape_radius`` in x."""
    from .tangency import find_tangency

    setup = koper_fate_setup(t_max, escape_radius)
    p = KoperParameters(eps1, eps2, k, bracket[0])
    return find_tangency(p, float(bracket[0]), float(bracket[1]), setup=setup, tol=tol,
                         n_grid=n_grid, t_max=t_max).mu


@dataclass
class MmoSignature:
    large_count: int
    small_counts: list
    threshold: float
    quiescent: bool = False
    times: np.ndarray | None = None
    states: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {"large_count": self.large_count, "small_counts": self.small_counts,
                "threshold": self.threshold, "quiescent": self.quiescent}


def detect_mmo(eps1: float = 0.1, eps2: float = 1.0, k: float = -10.0, lam: float = -7.5,
               t_max: float = 2000.0, *, threshold: float = 1.0, start=None,
               small_floor: float = 1e-4, transient: float = 0.2) -> MmoSignature:
    """Count large and small oscillations of x after discarding a transient.

    A local minimum of x counts as a large excursion when it lies more than
    ``threshold`` below the fold equilibrium's x, otherwise as a small
    oscillation if its depth exceeds ``small_floor``. Epochs run between
    consecutive large excursions.
    """
    p = KoperParameters(eps1, eps2, k, lam)
    e = koper_fold_equilibrium(p)
    s0 = e + np.array([0.05, 0.0, 0.0]) if start is None else np.asarray(start, dtype=float)
    tr = I.integrate(KOPER, s0, p, KOPER_CFG.with_(t_max=t_max, max_step=0.01))
    keep = tr.times >= transient * t_max
    t, x = tr.times[keep], tr.states[keep, 0]
    ref = e[0]
    i = np.arange(1, len(x) - 1)
    mins = i[(x[i] < x[i - 1]) & (x[i] <= x[i + 1])]
    maxs = i[(x[i] > x[i - 1]) & (x[i] >= x[i + 1])]
    kinds = []
    for m in mins:
        prev_max = maxs[maxs < m]
        depth = x[prev_max[-1]] - x[m] if len(prev_max) else 0.0
        if x[m] < ref - threshold:
            kinds.append("L")
        elif depth > small_floor:
            kinds.append("s")
    large = kinds.count("L")
    if not kinds:
        return MmoSignature(0, [], threshold, True, t, tr.states[keep])
    small_counts = []
    idx = [j for j, c in enumerate(kinds) if c == "L"]
    for a, b in zip(idx, idx[1:]):
        small_counts.append(kinds[a + 1:b].count("s"))
    return MmoSignature(large, small_counts, threshold, False, t, tr.states[keep])
