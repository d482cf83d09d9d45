"""Tangency of W^u(E_f) with the repelling slow manifold.

Fate classification of a ring of seeds in the unstable eigenplane, bisection
on the onset of escape, predictor-corrector tracing in (mu, A) and a shooting
variant of the boundary-value fold computation.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import integrate as I
from .errors import (BracketError, CurveTerminated, NoEquilibrium, NoHit, PreconditionError,
                     UndecidedError)
from .manifolds import (FOLD_BOX, MANIFOLD_CFG, Fate, UnstablePlane, bit_reversed_order,
                        default_ring_radius, integrate_ray, unstable_plane)
from .models import ModelId, ParameterSet, Parameters, as_model, jacobian

log = logging.getLogger(__name__)


class Verdict(str, enum.Enum):
    ALL_BOUNDED = "AllBounded"
    SOME_ESCAPE = "SomeEscape"
    ALL_ESCAPE = "AllEscape"
    UNDECIDED = "Undecided"

    @property
    def escapes(self) -> bool:
        return self in (Verdict.SOME_ESCAPE, Verdict.ALL_ESCAPE)


@dataclass
class RayResult:
    angle: float
    fate: Fate
    left_fold_box: bool
    t_end: float
    t_max: float

    @property
    def escaped(self) -> bool:
        return self.fate is Fate.ESCAPED

    @property
    def bounded(self) -> bool:
        if self.fate in (Fate.ORBIT, Fate.EQUILIBRIUM):
            return True
        return self.fate is Fate.TIMEOUT and not self.left_fold_box

    @property
    def undecided(self) -> bool:
        return not (self.escaped or self.bounded)


@dataclass
class FateClassification:
    n_grid: int
    n_escaped: int
    n_bounded: int
    n_undecided: int
    verdict: Verdict
    t_max: float
    rays: list = field(default_factory=list)
    n_search: int = 0

    @property
    def escaped_fraction(self) -> float:
        return self.n_escaped / self.n_grid if self.n_grid else 0.0

    def to_dict(self) -> dict:
        return {"n_grid": self.n_grid, "n_escaped": self.n_escaped, "n_bounded": self.n_bounded,
                "n_undecided": self.n_undecided, "verdict": self.verdict.value,
                "t_max": self.t_max, "n_search": self.n_search}


def _verdict(ne: int, nb: int, nu: int) -> Verdict:
    if ne and nb:
        return Verdict.SOME_ESCAPE
    if nu:
        return Verdict.UNDECIDED
    if ne:
        return Verdict.ALL_ESCAPE
    return Verdict.ALL_BOUNDED


@dataclass(frozen=True)
class FateSetup:
    """Model-specific ingredients of the fate test."""

    model: ModelId = ModelId.RESCALED_QUADRATIC
    escape: I.EscapeBox | None = I.DEFAULT_ESCAPE
    fold_box: I.EscapeBox | None = FOLD_BOX
    escape_radius: float | None = None   # box of this half-width in x around E_f
    param: str = "mu"
    cfg: I.IntegratorConfig = MANIFOLD_CFG

    def boxes(self, e: np.ndarray):
        if self.escape_radius is not None:
            r = self.escape_radius
            box = I.EscapeBox((e[0] - r, -math.inf, -math.inf), (e[0] + r, math.inf, math.inf))
            return box, box
        return self.escape, self.fold_box


QUADRATIC = FateSetup()


def fold_equilibrium(model, p: Parameters) -> np.ndarray:
    model = as_model(model)
    if model is ModelId.KOPER:
        from .koper import koper_fold_equilibrium
        return koper_fold_equilibrium(p)
    if model is not ModelId.RESCALED_QUADRATIC:
        raise PreconditionError("fate classification supports the rescaled quadratic and Koper models")
    from .equilibria import e_f
    return np.asarray(e_f(p).location, dtype=float)


class _Ring:
    """Seeds z = r e^{i theta} in normal-form coordinates of the unstable pair.

    Each orbit of the linearized flow crosses this ring exactly once, so the
    ring is a fundamental domain of the linear unstable manifold.
    """

    def __init__(self, model, p, e, radius):
        Jm = jacobian(model, e, p)
        eigs, vecs = np.linalg.eig(Jm)
        i = int(np.argmax(eigs.imag))
        if not (eigs[i].real > 0 and eigs[i].imag > 0 and sum(eigs.real > 0) == 2):
            raise PreconditionError(f"E_f has no 2D unstable focus: {eigs}")
        q = vecs[:, i] / np.linalg.norm(vecs[:, i])
        self.e = e
        self.u1 = q.real / np.linalg.norm(q.real)
        self.u2 = -q.imag / np.linalg.norm(q.real)
        self.radius = radius
        self.alpha, self.omega = float(eigs[i].real), float(eigs[i].imag)
        self.plane = UnstablePlane(e, self.u1, self.u2, self.alpha, self.omega, 0.0, np.zeros(3))

    def seed(self, theta: float) -> np.ndarray:
        return self.e + self.radius * (math.cos(theta) * self.u1 + math.sin(theta) * self.u2)

    def radial(self, theta: float, s: float, r0: float) -> np.ndarray:
        """Point on a fixed ray, ``s`` in [0, 1) spanning one fundamental segment."""
        r = r0 * math.exp(2 * math.pi * self.alpha / self.omega * s)
        return self.e + r * (math.cos(theta) * self.u1 + math.sin(theta) * self.u2)


def _ray(setup: FateSetup, p, ring: _Ring, theta: float, t_max: float) -> RayResult:
    escape, fold = setup.boxes(ring.e)
    out = integrate_ray(setup.model, p, ring.seed(theta), ring.plane, t_max,
                        escape=escape, fold_box=fold, cfg=setup.cfg)
    return RayResult(theta, out.fate, out.left_fold_box, out.t_end, t_max)


def classify_fate(p: Parameters, n_grid: int = 10, t_max: float = 5000.0, *,
                  setup: FateSetup = QUADRATIC, ring_radius: float | None = None,
                  search_bounded: int = 0, workers: int | None = None,
                  stop_on_escape: bool = False) -> FateClassification:
    """Escape/bounded census of W^u(E_f) at fixed parameters.

    ``n_grid`` seeds on a small ring in the unstable eigenplane are run in
    bit-reversed order (far-apart seeds first). A seed is bounded when it
    settles on an orbit or equilibrium, or is still inside the fold box at
    ``t_max``; it is undecided if it left the fold box without escaping.

    When every grid seed escapes and ``search_bounded`` > 0, that many zoom
    levels look for a thin bounded set around the seeds with the longest
    escape times; the extra seeds are included in the counts.
    """
    e = fold_equilibrium(setup.model, p)
    r = default_ring_radius(e) if ring_radius is None else ring_radius
    ring = _Ring(setup.model, p, e, r)
    order = bit_reversed_order(n_grid)
    thetas = [2 * math.pi * k / n_grid for k in order]
    if stop_on_escape:
        rays = []
        for th in thetas:
            rays.append(_ray(setup, p, ring, th, t_max))
            if rays[-1].escaped:
                break
    else:
        rays = I.map_parallel(lambda th: _ray(setup, p, ring, th, t_max), thetas, workers)
    n_base = len(rays)
    if search_bounded > 0 and all(r_.escaped for r_ in rays):
        rays += _search_bounded(setup, p, ring, rays, t_max, search_bounded, workers)
    ne = sum(r_.escaped for r_ in rays)
    nb = sum(r_.bounded for r_ in rays)
    nu = len(rays) - ne - nb
    return FateClassification(len(rays), ne, nb, nu, _verdict(ne, nb, nu), t_max, rays,
                              len(rays) - n_base)


def _search_bounded(setup, p, ring, rays, t_max, levels, workers, n_coarse=64, n_fine=16,
                    top=2) -> list:
    """Subdivide the ring where the escape time jumps between neighbours.

    Away from the bounded set the escape time varies slowly with the seed
    angle; it jumps across a bounded sliver, so the sliver is found by
    repeatedly refining the intervals with the largest jumps.
    """
    run = lambda th: _ray(setup, p, ring, th, t_max)  # noqa: E731
    extra = I.map_parallel(run, [2 * math.pi * k / n_coarse for k in range(n_coarse)], workers)
    for _ in range(levels):
        if any(r_.bounded for r_ in extra):
            break
        pts = sorted(rays + extra, key=lambda r_: r_.angle % (2 * math.pi))
        gaps = []
        for a, b in zip(pts, pts[1:] + pts[:1]):
            lo, hi = a.angle % (2 * math.pi), b.angle % (2 * math.pi)
            if hi <= lo:
                hi += 2 * math.pi
            gaps.append((abs(b.t_end - a.t_end), lo, hi))
        gaps.sort(reverse=True)
        new = []
        for _, lo, hi in gaps[:top]:
            new += [lo + (hi - lo) * j / n_fine for j in range(1, n_fine)]
        extra += I.map_parallel(run, new, workers)
    return extra


# -- bisection on the tangency parameter ---------------------------------------------

@dataclass
class TangencyPoint:
    mu: float
    a_cap: float
    bracket_width: float
    side_low: Verdict
    side_high: Verdict
    n_grid: int = 10
    t_max: float = 5000.0
    param: str = "mu"

    def to_dict(self) -> dict:
        return {"mu": self.mu, "a_cap": self.a_cap, "bracket_width": self.bracket_width,
                "side_low": self.side_low.value, "side_high": self.side_high.value,
                "n_grid": self.n_grid, "t_max": self.t_max, "param": self.param}


def _classify_adaptive(p, n_grid, t_max, setup, doublings=3, **kw) -> FateClassification:
    t = t_max
    for _ in range(doublings + 1):
        fc = classify_fate(p, n_grid, t, setup=setup, **kw)
        if fc.verdict is not Verdict.UNDECIDED:
            return fc
        t *= 2
    raise UndecidedError(f"fate still undecided at t_max={t / 2:g}", data=fc)


def find_tangency(p: Parameters, lo: float, hi: float, *, setup: FateSetup = QUADRATIC,
                  tol: float = 1e-6, n_grid: int = 10, t_max: float = 5000.0,
                  workers: int | None = None) -> TangencyPoint:
    """Bisection on ``setup.param`` between a bounded and an escaping end."""
    name = setup.param

    def verdict(v):
        return _classify_adaptive(replace(p, **{name: v}), n_grid, t_max, setup,
                                  workers=workers).verdict

    v_lo, v_hi = verdict(lo), verdict(hi)
    if v_lo.escapes == v_hi.escapes:
        raise BracketError(f"same fate class at both ends: {v_lo.value}, {v_hi.value}",
                           data=(lo, hi))
    esc_hi = v_hi.escapes
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        v = verdict(mid)
        if v.escapes == esc_hi:
            hi, v_hi = mid, v
        else:
            lo, v_lo = mid, v
    a = float(getattr(p, "a_cap", float("nan")))
    return TangencyPoint(0.5 * (lo + hi), a, hi - lo, v_lo, v_hi, n_grid, t_max, name)


def find_tangency_mu(A: float, B: float, C: float, mu_bracket=(0.0014, 0.0017), tol: float = 1e-6,
                     *, n_grid: int = 10, t_max: float = 5000.0,
                     workers: int | None = None) -> TangencyPoint:
    p = ParameterSet(mu_bracket[0], A, B, C)
    return find_tangency(p, float(mu_bracket[0]), float(mu_bracket[1]), tol=tol, n_grid=n_grid,
                         t_max=t_max, workers=workers)


def _has_unstable_focus(p: ParameterSet) -> bool:
    try:
        e = fold_equilibrium(ModelId.RESCALED_QUADRATIC, p)
        _Ring(ModelId.RESCALED_QUADRATIC, p, e, 1e-3)
        return True
    except (PreconditionError, NoEquilibrium):
        return False


def trace_tangency_curve(B: float, C: float, start: TangencyPoint, a_range, step: float = 0.005,
                         *, tol: float = 1e-6, min_step: float = 1e-4, n_grid: int = 10,
                         t_max: float = 5000.0, window: float | None = None,
                         workers: int | None = None) -> list[TangencyPoint]:
    """Secant predictor in (mu, A), bisection corrector in mu at each new A.

    Tracing stops at the ends of ``a_range`` or when the predicted point has
    lost the 2D unstable focus (Hopf or saddle-node curve reached).
    """
    a_lo, a_hi = sorted(float(v) for v in a_range)
    pts = [start]
    sgn = 1.0 if start.a_cap <= 0.5 * (a_lo + a_hi) else -1.0
    h = step
    w = window or max(20 * tol, 1e-4)
    while True:
        a_prev = pts[-1].a_cap
        a_new = a_prev + sgn * h
        if a_new < a_lo - 1e-12 or a_new > a_hi + 1e-12:
            break
        if len(pts) >= 2:
            slope = (pts[-1].mu - pts[-2].mu) / (pts[-1].a_cap - pts[-2].a_cap)
            mu_pred = pts[-1].mu + slope * (a_new - a_prev)
        else:
            mu_pred = pts[-1].mu
        p = ParameterSet(mu_pred, a_new, B, C)
        if not _has_unstable_focus(p.with_mu(mu_pred - w)):
            if not _has_unstable_focus(p.with_mu(mu_pred)):
                log.info("tangency curve reached the Hopf/SN boundary at A=%g", a_new)
                break
        try:
            lo, hi = mu_pred - w, mu_pred + w
            for _ in range(6):
                try:
                    tp = find_tangency(p, lo, hi, tol=tol, n_grid=n_grid, t_max=t_max,
                                       workers=workers)
                    break
                except BracketError:
                    lo, hi = lo - w, hi + w
                    w *= 2
                    if not _has_unstable_focus(p.with_mu(lo)):
                        lo = _focus_edge(p, lo, hi)
            else:
                raise BracketError("could not bracket the tangency")
            tp.a_cap = a_new
            pts.append(tp)
            h = min(step, 1.5 * h)
            w = max(20 * tol, 1e-4)
        except (BracketError, UndecidedError) as exc:
            h /= 2
            if h < min_step:
                raise CurveTerminated(f"corrector failed at A={a_new:g}: {exc}", data=pts) from None
    return pts


def _focus_edge(p: ParameterSet, lo: float, hi: float) -> float:
    """Smallest mu in [lo, hi] where E_f is still an unstable focus (bisection)."""
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if _has_unstable_focus(p.with_mu(mid)):
            hi = mid
        else:
            lo = mid
    return hi + 1e-9


# -- shooting realization of the fold in the boundary-value formulation ---------------

def _departs(setup: FateSetup, p, seed, e, offset: float, t_max: float) -> bool:
    """Does the trajectory reach Y = X^2 + offset or escape before t_max?"""
    escape, fold = setup.boxes(e)
    ev = I.ParabolaCrossing(offset, 0, 1)
    tr = I.integrate(setup.model, seed, p, setup.cfg.with_(t_max=t_max), [ev, escape],
                     record=False)
    return tr.termination in (I.Termination.EVENT, I.Termination.ESCAPED)


def bvp_fold_refine(p_near: TangencyPoint, ray_fraction: float = 0.5, *, B: float = 0.001,
                    C: float = 0.1, offset: float = 5.0, n_s: int = 32, n_mu: int = 11,
                    tol: float = 1e-8, width: float | None = None, t_max: float = 3000.0,
                    setup: FateSetup = QUADRATIC) -> TangencyPoint:
    """Refine a tangency point by folding the family of departing trajectories.

    Seeds lie on one ray of the unstable eigenplane and cover a single
    fundamental segment. For each seed, the smallest mu at which its
    trajectory departs the fold region (reaching the parabola
    Y = X^2 + offset or escaping) is found by a forward scan over a mu grid
    followed by bisection; departure is not monotone in mu for a fixed seed,
    so plain bisection over the whole window can land on a later onset. The
    tangency is the minimum over seeds, polished by a quadratic fit through
    the three samples around the discrete minimum.
    """
    if as_model(setup.model) is not ModelId.RESCALED_QUADRATIC:
        raise PreconditionError("parabola target is defined for the quadratic normal form")
    w = width or max(20 * p_near.bracket_width, 1e-5)
    mus = np.linspace(p_near.mu - w, p_near.mu + w, n_mu)
    base = ParameterSet(p_near.mu, p_near.a_cap, B, C)
    theta = 2 * math.pi * ray_fraction
    r0 = default_ring_radius(fold_equilibrium(setup.model, base))
    ss = np.linspace(0.0, 1.0, n_s, endpoint=False)

    def departs_at(mu, s):
        p = base.with_mu(mu)
        e = fold_equilibrium(setup.model, p)
        ring = _Ring(setup.model, p, e, r0)
        return _departs(setup, p, ring.radial(theta, s, r0), e, offset, t_max)

    def mu_c(s):
        if departs_at(mus[0], s):
            raise NoHit("seed already departs at the lower end of the window")
        for lo, hi in zip(mus, mus[1:]):
            if departs_at(hi, s):
                break
        else:
            return math.inf
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if departs_at(mid, s):
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    vals = np.array([mu_c(s) for s in ss])
    if not np.any(np.isfinite(vals)):
        raise NoHit("no trajectory on the ray reaches the target surface")
    k = int(np.argmin(vals))
    y0, y1, y2 = vals[(k - 1) % n_s], vals[k], vals[(k + 1) % n_s]
    mu_ref = y1
    if all(np.isfinite([y0, y1, y2])):
        den = y0 - 2 * y1 + y2
        if den > 0:
            d = 0.5 * (y0 - y2) / den
            mu_ref = y1 - 0.25 * (y0 - y2) * d
    return TangencyPoint(float(mu_ref), p_near.a_cap, float(y1 - mu_ref) + tol,
                         Verdict.ALL_BOUNDED, Verdict.SOME_ESCAPE, p_near.n_grid, t_max)
