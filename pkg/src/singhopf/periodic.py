"""Periodic orbits: Poincare-map Newton, Floquet multipliers, branch continuation."""
from __future__ import annotations

import cmath
import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import integrate as I
from .equilibria import first_lyapunov
from .errors import (BranchTerminated, NoReturn, NotConverged, PreconditionError,
                     SingHopfError)
from .models import (ModelId, PARAM_INDEX, Parameters, as_model, eval_field, jacobian,
                     param_vector)

log = logging.getLogger(__name__)

ORBIT_CFG = I.IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13, max_step=0.5, t_max=500.0)


class OrbitBifurcationTag(str, enum.Enum):
    PD = "PD"
    LPC = "LPC"
    NS = "NS"
    NEUTRAL = "Neutral"
    R1 = "R1"
    R2 = "R2"
    R3 = "R3"
    R4 = "R4"
    NONE = "None"


@dataclass(frozen=True)
class PoincareSection:
    normal: tuple
    offset: float
    direction: int = 1

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise PreconditionError("section normal must have unit length")
        if self.direction not in (-1, 1):
            raise PreconditionError("section direction must be +1 or -1")

    @classmethod
    def through(cls, point, normal=(0.0, 1.0, 0.0), direction: int = 1) -> "PoincareSection":
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        return cls(tuple(float(v) for v in n), float(n @ np.asarray(point, dtype=float)[:3]), direction)

    @property
    def n(self) -> np.ndarray:
        return np.asarray(self.normal, dtype=float)

    def basis(self) -> np.ndarray:
        """Orthonormal 3x2 basis of the plane's tangent space (deterministic)."""
        n = self.n
        k = int(np.argmin(np.abs(n)))
        e = np.zeros(3)
        e[k] = 1.0
        b1 = e - (e @ n) * n
        b1 /= np.linalg.norm(b1)
        b2 = np.cross(n, b1)
        return np.column_stack([b1, b2])

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)[:3]
        return x - (self.n @ x - self.offset) * self.n

    def event(self, terminal: int = 1, **kw) -> I.PlaneCrossing:
        return I.PlaneCrossing(self.normal, self.offset, self.direction, terminal, **kw)


@dataclass
class ReturnResult:
    point: np.ndarray      # first return to the section
    time: float
    monodromy: np.ndarray  # d(phi_T)/dx at fixed T
    dpdx: np.ndarray       # derivative of the return map in R^3 (projected)
    dpdp: np.ndarray | None = None


def return_map(model, p: Parameters, x0, section: PoincareSection,
               cfg: I.IntegratorConfig = ORBIT_CFG, param: str | None = None,
               t_ignore: float = 1e-6) -> ReturnResult:
    """First return of ``x0`` (projected onto ``section``) with derivatives."""
    model = as_model(model)
    x0 = section.project(x0)
    y0 = I._variational_start(x0, param)
    raw = I._run(model, y0, p, cfg.t_max, cfg, [section.event(terminal=1)],
                 nvar=2 if param else 1, param=param, t_ignore=t_ignore, record=False)
    if raw.status != 1:
        raise NoReturn(f"no return to the section within t={cfg.t_max}", data=raw.y[:3].copy())
    y = raw.y
    xT = y[:3].copy()
    M = y[3:12].reshape(3, 3).copy()
    f = eval_field(model, xT, p)
    n = section.n
    nf = float(n @ f)
    if abs(nf) < 1e-14:
        raise NoReturn("tangential return to the section")
    proj = np.eye(3) - np.outer(f, n) / nf
    dpdp = proj @ y[12:15] if param else None
    return ReturnResult(xT, float(raw.t), M, proj @ M, dpdp)


@dataclass
class PeriodicOrbit:
    anchor: np.ndarray
    period: float
    multipliers: np.ndarray          # the two nontrivial Floquet multipliers
    trivial_residual: float
    monodromy: np.ndarray
    section: PoincareSection
    params: Parameters
    model: ModelId = ModelId.RESCALED_QUADRATIC
    residual: float = 0.0
    section_jacobian: np.ndarray | None = None   # 2x2 return-map derivative
    ambiguous_trivial: bool = False

    @property
    def stable(self) -> bool:
        return bool(np.all(np.abs(self.multipliers) < 1.0))

    @property
    def complex_multipliers(self) -> bool:
        return bool(abs(self.multipliers[0].imag) > 1e-12 * max(1.0, abs(self.multipliers[0])))

    def sample(self, cfg: I.IntegratorConfig = ORBIT_CFG) -> I.Trajectory:
        """One period of the orbit, starting from the anchor."""
        return I.integrate(self.model, self.anchor, self.params, cfg.with_(t_max=self.period))

    def amplitude(self, component: int = 0) -> float:
        s = self.sample().states[:, component]
        return float(s.max() - s.min())

    def to_dict(self) -> dict:
        return {
            "anchor": self.anchor.tolist(), "period": self.period,
            "multipliers": [[float(m.real), float(m.imag)] for m in self.multipliers],
            "trivial_residual": self.trivial_residual, "residual": self.residual,
        }


def split_multipliers(M: np.ndarray, tol: float = 1e-4):
    """Remove the eigenvalue of ``M`` closest to 1; return (nontrivial, residual, ambiguous)."""
    eig = np.linalg.eigvals(M)
    d = np.abs(eig - 1.0)
    k = int(np.argmin(d))
    rest = np.delete(eig, k)
    ambiguous = bool(np.sum(d < tol) > 1)
    rest = rest[np.lexsort((-rest.imag, -np.abs(rest)))]
    return rest.astype(complex), float(d[k]), ambiguous


def _section_jacobian(section: PoincareSection, rr: ReturnResult) -> np.ndarray:
    E = section.basis()
    return E.T @ rr.dpdx @ E


def _make_orbit(model, p, x, rr: ReturnResult, section, residual) -> PeriodicOrbit:
    mults, triv, amb = split_multipliers(rr.monodromy)
    return PeriodicOrbit(anchor=x, period=rr.time, multipliers=mults, trivial_residual=triv,
                         monodromy=rr.monodromy, section=section, params=p, model=as_model(model),
                         residual=residual, section_jacobian=_section_jacobian(section, rr),
                         ambiguous_trivial=amb)


def find_orbit(p: Parameters, seed, section: PoincareSection | None = None, *,
               model=ModelId.RESCALED_QUADRATIC, cfg: I.IntegratorConfig = ORBIT_CFG,
               tol: float = 1e-10, max_iter: int = 30) -> PeriodicOrbit:
    """Newton iteration on the 2D return map of ``section``.

    The default section is the plane Y = seed_Y crossed upwards.
    """
    model = as_model(model)
    if section is None:
        section = PoincareSection.through(seed)
    E = section.basis()
    origin = section.project(seed)
    xi = np.zeros(2)
    last = None
    for it in range(max_iter):
        x = origin + E @ xi
        rr = return_map(model, p, x, section, cfg)
        G = E.T @ (rr.point - origin) - xi
        DG = E.T @ rr.dpdx @ E - np.eye(2)
        try:
            dxi = -np.linalg.solve(DG, G)
        except np.linalg.LinAlgError:
            raise NotConverged("singular return-map Jacobian", data=x) from None
        # damp wild steps
        nrm = np.linalg.norm(dxi)
        scale = max(1.0, np.linalg.norm(xi), 1e-3)
        if nrm > 0.5 * scale + 0.5:
            dxi *= (0.5 * scale + 0.5) / nrm
        xi = xi + dxi
        last = x
        if np.linalg.norm(dxi) < tol or np.linalg.norm(G) < 0.1 * tol:
            x = origin + E @ xi
            rr = return_map(model, p, x, section, cfg)
            res = float(np.linalg.norm(rr.point - section.project(x)))
            return _make_orbit(model, p, section.project(x), rr, section, res)
    raise NotConverged(f"Newton did not converge in {max_iter} iterations", data=last)


def hopf_orbit_seed(model, p: Parameters, eq, section_normal=(0.0, 1.0, 0.0)):
    """Small-amplitude cycle estimate from the Hopf normal form.

    With the complex pair alpha +- i omega at ``eq`` and first Lyapunov
    coefficient l1, the cycle has normal-form radius sqrt(-alpha / (omega l1)).
    Returns ``(point, section, radius)`` with the point on the plane through
    ``eq`` and crossing it in the positive direction.
    """
    model = as_model(model)
    eq = np.asarray(eq, dtype=float)
    Jm = jacobian(model, eq, p)
    eigs, vecs = np.linalg.eig(Jm)
    idx = int(np.argmax(eigs.imag))
    alpha, omega = float(eigs[idx].real), float(eigs[idx].imag)
    if omega <= 0:
        raise PreconditionError("equilibrium has no complex pair")
    q = vecs[:, idx] / np.linalg.norm(vecs[:, idx])
    l1 = first_lyapunov(p, eq, model=model, check=False)
    r2 = -alpha / (omega * l1)
    if r2 <= 0:
        raise PreconditionError("no small cycle on this side of the Hopf point")
    r = math.sqrt(r2)
    section = PoincareSection.through(eq, section_normal, 1)
    n = section.n
    qn = complex(n @ q)
    # e^{i phi} q.n purely imaginary -> point stays on the plane
    phi0 = math.pi / 2 - cmath.phase(qn)
    best = None
    for phi in (phi0, phi0 + math.pi):
        x = eq + 2.0 * (r * cmath.exp(1j * phi) * q).real
        speed = float(n @ eval_field(model, x, p))
        if best is None or speed > best[1]:
            best = (x, speed)
    return section.project(best[0]), section, r


# -- continuation ---------------------------------------------------------------

@dataclass
class BranchPoint:
    param: float
    orbit: PeriodicOrbit
    xi: np.ndarray
    tangent: np.ndarray


@dataclass
class OrbitEvent:
    tag: OrbitBifurcationTag
    param: float
    period: float
    multipliers: np.ndarray
    argument: float = float("nan")
    resonance: OrbitBifurcationTag = OrbitBifurcationTag.NONE
    index: int = -1
    param_width: float = 0.0

    def to_dict(self) -> dict:
        return {"tag": self.tag.value, "param": self.param, "period": self.period,
                "multipliers": [[float(m.real), float(m.imag)] for m in self.multipliers],
                "argument": self.argument, "resonance": self.resonance.value,
                "param_width": self.param_width}


@dataclass
class Branch:
    param_name: str
    points: list = field(default_factory=list)
    events: list = field(default_factory=list)
    terminated: str = ""
    endpoint_kind: str = ""

    @property
    def params(self) -> np.ndarray:
        return np.array([bp.param for bp in self.points])

    @property
    def orbits(self) -> list:
        return [bp.orbit for bp in self.points]

    def rows(self):
        """Export rows: param, period, Re l1, Im l1, Re l2, Im l2, tag."""
        tags = {}
        for ev in self.events:
            tags.setdefault(ev.index, ev.tag.value)
        for i, bp in enumerate(self.points):
            m = bp.orbit.multipliers
            yield [bp.param, bp.orbit.period, m[0].real, m[0].imag, m[1].real, m[1].imag,
                   tags.get(i, "")]


def test_functions(DG: np.ndarray) -> dict:
    """Smooth test functions of the 2x2 return-map derivative."""
    tr, det = float(np.trace(DG)), float(np.linalg.det(DG))
    return {
        "LPC": det - tr + 1.0,   # (l1 - 1)(l2 - 1)
        "PD": det + tr + 1.0,    # (l1 + 1)(l2 + 1)
        "NS": det - 1.0,         # l1 l2 - 1
        # rounding scale of det; near canards the multipliers span many decades
        "noise": 1e-7 * (abs(DG[0, 0] * DG[1, 1]) + abs(DG[0, 1] * DG[1, 0])),
    }


def _with_param(p: Parameters, name: str, value: float) -> Parameters:
    return replace(p, **{name: float(value)})


class _Corrector:
    """Pseudo-arclength Newton on (section coordinates, scaled parameter)."""

    def __init__(self, model, p0, name, section, origin, pscale, cfg, tol=1e-10, max_iter=8):
        self.model = as_model(model)
        self.p0 = p0
        self.name = name
        self.section = section
        self.E = section.basis()
        self.origin = origin
        self.pscale = pscale
        self.pbase = float(getattr(p0, name))
        self.cfg = cfg
        self.tol = tol
        self.max_iter = max_iter

    def params(self, w):
        return _with_param(self.p0, self.name, self.pbase + self.pscale * w[2])

    def evaluate(self, w):
        p = self.params(w)
        x = self.origin + self.E @ w[:2]
        rr = return_map(self.model, p, x, self.section, self.cfg, param=self.name)
        G = self.E.T @ (rr.point - self.origin) - w[:2]
        DG = self.E.T @ rr.dpdx @ self.E
        Gp = self.E.T @ rr.dpdp * self.pscale
        return p, x, rr, G, DG, Gp

    def solve(self, w_pred, tangent):
        w = w_pred.copy()
        for it in range(self.max_iter):
            p, x, rr, G, DG, Gp = self.evaluate(w)
            Jac = np.zeros((3, 3))
            Jac[:2, :2] = DG - np.eye(2)
            Jac[:2, 2] = Gp
            Jac[2, :] = tangent
            R = np.concatenate([G, [tangent @ (w - w_pred)]])
            dw = -np.linalg.solve(Jac, R)
            w = w + dw
            if np.linalg.norm(dw) < self.tol:
                p, x, rr, G, DG, Gp = self.evaluate(w)
                return w, p, x, rr, DG, Gp, it + 1
        raise NotConverged("corrector failed")

    @staticmethod
    def tangent(DG, Gp, prev=None):
        Jac = np.zeros((2, 3))
        Jac[:, :2] = DG - np.eye(2)
        Jac[:, 2] = Gp
        _, _, vt = np.linalg.svd(Jac)
        t = vt[-1]
        if prev is not None and t @ prev < 0:
            t = -t
        return t / np.linalg.norm(t)


def continue_orbit(p0: Parameters, orbit0: PeriodicOrbit, param: str = "mu", *,
                   stop: float | None = None, model=None, ds: float = 0.02,
                   ds_min: float = 1e-6, ds_max: float = 0.1, pscale: float = 1e-3,
                   direction: int = 1, max_points: int = 2000, max_period: float = 200.0,
                   refine_tol: float = 1e-7, cfg: I.IntegratorConfig = ORBIT_CFG,
                   detect: Sequence[str] = ("PD", "LPC", "NS"), max_period_jump: float = 0.1,
                   reanchor_tol: float = 0.3,
                   callback: Callable | None = None) -> Branch:
    """Pseudo-arclength continuation of a periodic orbit in ``param``.

    The unknowns are the two section coordinates of the orbit anchor and the
    parameter scaled by ``pscale``. Orbit bifurcations are located by sign
    changes of the test functions along the branch and refined by bisection in
    arclength until the parameter bracket is below ``refine_tol``. The branch
    stops at ``stop``, at ``max_period`` or when the step falls below
    ``ds_min`` (reported as an S-proximal endpoint). ``callback`` sees every
    event and branch point; a truthy return value ends the branch.
    """
    model = as_model(model or orbit0.model)
    section = orbit0.section
    origin = orbit0.anchor.copy()
    corr = _Corrector(model, p0, param, section, origin, pscale, cfg)
    branch = Branch(param)

    w = np.zeros(3)
    p, x, rr, G, DG, Gp = corr.evaluate(w)
    t = corr.tangent(DG, Gp)
    if t[2] * direction < 0:
        t = -t
    orbit = _make_orbit(model, p, x, rr, section, float(np.linalg.norm(G)))
    branch.points.append(BranchPoint(float(getattr(p, param)), orbit, w.copy(), t.copy()))
    tf_prev = test_functions(DG)

    h = ds
    while len(branch.points) < max_points:
        if h < ds_min:
            branch.terminated = "step underflow"
            branch.endpoint_kind = "S-proximal"
            break
        w_pred = w + h * t
        try:
            w_new, p_new, x_new, rr_new, DG_new, Gp_new, its = corr.solve(w_pred, t)
        except (NotConverged, NoReturn, np.linalg.LinAlgError, I.StiffnessError):
            h *= 0.5
            continue
        # reject steps that jump too far in state or flip the direction
        t_new = corr.tangent(DG_new, Gp_new, t)
        T_old = branch.points[-1].orbit.period
        min_cos = 0.8 if h > 100 * ds_min else 0.0
        if (t_new @ t < min_cos or np.linalg.norm(w_new - w) > 3 * h
                or abs(rr_new.time - T_old) > max_period_jump * T_old):
            h *= 0.5
            continue
        res = float(np.linalg.norm(corr.E.T @ (rr_new.point - corr.origin) - w_new[:2]))
        orb_new = _make_orbit(model, p_new, x_new, rr_new, section, res)
        bp = BranchPoint(float(getattr(p_new, param)), orb_new, w_new.copy(), t_new.copy())

        halt = False
        tf_new = test_functions(DG_new)
        for name in detect:
            if tf_prev[name] * tf_new[name] < 0:
                if _unresolved(name, tf_prev, tf_new):
                    continue
                ev = _refine_event(corr, name, branch.points[-1], bp, tf_prev[name], refine_tol)
                ev.index = len(branch.points)
                branch.events.append(ev)
                if callback and callback(ev):
                    halt = True
        finished = False
        if stop is not None:
            lo_side = (branch.points[-1].param - stop) * (bp.param - stop) <= 0
            if lo_side:
                finished = True
        branch.points.append(bp)
        w, t, tf_prev = w_new, t_new, tf_new
        f_anchor = eval_field(model, x_new, p_new)
        if abs(section.n @ f_anchor) < reanchor_tol * np.linalg.norm(f_anchor):
            try:
                section, anchor = reanchor(orb_new)
            except NoReturn:
                pass
            else:
                corr = _Corrector(model, p_new, param, section, anchor, pscale, cfg)
                w = np.zeros(3)
                _, _, _, _, DG_r, Gp_r = corr.evaluate(w)
                t_r = corr.tangent(DG_r, Gp_r)
                if t_r[2] * t[2] < 0:
                    t_r = -t_r
                t = t_r
                branch.points[-1].xi = w.copy()
                branch.points[-1].tangent = t.copy()
                log.debug("re-anchored section at %s", anchor)
        if callback and callback(bp):
            halt = True
        if finished:
            branch.terminated = "reached stop"
            break
        if halt:
            branch.terminated = "stopped by callback"
            break
        if orb_new.period > max_period:
            branch.terminated = "period blow-up"
            branch.endpoint_kind = "S-proximal"
            break
        h = min(ds_max, h * (1.3 if its <= 3 else 1.0))
    else:
        branch.terminated = "max points"
    branch.events.sort(key=lambda e: e.index)
    return branch


def continue_orbit_in_mu(p0: Parameters, orbit0: PeriodicOrbit, mu_range, **kw) -> Branch:
    """Continue ``orbit0`` in mu until the branch leaves ``mu_range``.

    The direction is toward whichever end of ``mu_range`` lies farther from
    ``p0.mu`` unless ``direction`` is passed explicitly.
    """
    lo, hi = sorted(float(v) for v in mu_range)
    mu0 = float(p0.mu)
    direction = kw.pop("direction", 1 if hi - mu0 >= mu0 - lo else -1)
    return continue_orbit(p0, orbit0, "mu", stop=hi if direction > 0 else lo,
                          direction=direction, **kw)


def _refine_event(corr: _Corrector, name: str, a: BranchPoint, b: BranchPoint,
                  f_a: float, tol: float) -> OrbitEvent:
    """Bisection in arclength between two branch points on a test function."""
    lo_w, hi_w = a.xi, b.xi
    lo_f = f_a
    lo_p, hi_p = a.param, b.param
    best = None
    t = a.tangent
    for _ in range(60):
        mid_pred = 0.5 * (lo_w + hi_w)
        chord = hi_w - lo_w
        tc = chord / np.linalg.norm(chord) if np.linalg.norm(chord) > 0 else t
        try:
            w, p, x, rr, DG, Gp, _ = corr.solve(mid_pred, tc)
        except (NotConverged, NoReturn, np.linalg.LinAlgError):
            break
        f = test_functions(DG)[name]
        pval = float(getattr(p, corr.name))
        best = (w, p, x, rr, DG, pval)
        if f * lo_f > 0:
            lo_w, lo_f, lo_p = w, f, pval
        else:
            hi_w, hi_p = w, pval
        if abs(hi_p - lo_p) < tol and np.linalg.norm(hi_w - lo_w) < 1e-6:
            break
    if best is None:
        orb = b.orbit
        return _event_from(name, b.param, orb.period, orb.multipliers, abs(b.param - a.param))
    w, p, x, rr, DG, pval = best
    mults = np.linalg.eigvals(DG).astype(complex)
    mults = mults[np.lexsort((-mults.imag, -np.abs(mults)))]
    return _event_from(name, 0.5 * (lo_p + hi_p), rr.time, mults, abs(hi_p - lo_p))


def _event_from(name, param, period, mults, width) -> OrbitEvent:
    tag = OrbitBifurcationTag(name)
    arg = float("nan")
    res = OrbitBifurcationTag.NONE
    if name == "NS":
        if abs(mults[0].imag) > 1e-9:
            arg = abs(cmath.phase(mults[0]))
            res = resonance_tag(arg)
        else:
            tag = OrbitBifurcationTag.NEUTRAL
    return OrbitEvent(tag, float(param), float(period), mults, arg, res, param_width=width)


RESONANCE_ARGS = {OrbitBifurcationTag.R1: 0.0, OrbitBifurcationTag.R2: math.pi,
                  OrbitBifurcationTag.R3: 2 * math.pi / 3, OrbitBifurcationTag.R4: math.pi / 2}


def resonance_tag(argument: float, tol: float = 0.05) -> OrbitBifurcationTag:
    """Strong-resonance tag for a unit-circle pair with argument 2 pi / q."""
    a = abs(argument)
    for tag, target in RESONANCE_ARGS.items():
        if abs(a - target) < tol:
            return tag
    return OrbitBifurcationTag.NONE


def classify_multiplier_event(before: PeriodicOrbit, after: PeriodicOrbit,
                              tol: float = 0.05) -> OrbitBifurcationTag:
    """Tag the multiplier crossing between two consecutive branch orbits."""
    if before is None or after is None:
        raise PreconditionError("need two orbits")
    mb, ma = np.asarray(before.multipliers), np.asarray(after.multipliers)
    if not (np.all(np.isfinite(mb)) and np.all(np.isfinite(ma))):
        raise PreconditionError("invalid multipliers")

    def tf(m):
        prod = (m[0] * m[1]).real
        return {"PD": ((m[0] + 1) * (m[1] + 1)).real,
                "LPC": ((m[0] - 1) * (m[1] - 1)).real,
                "NS": prod - 1.0}

    fb, fa = tf(mb), tf(ma)
    for name in ("PD", "LPC"):
        if fb[name] * fa[name] < 0:
            return OrbitBifurcationTag(name)
    if fb["NS"] * fa["NS"] < 0:
        cb = abs(mb[0].imag) > 1e-12
        ca = abs(ma[0].imag) > 1e-12
        if cb and ca:
            arg = 0.5 * (abs(cmath.phase(mb[0])) + abs(cmath.phase(ma[0])))
            res = resonance_tag(arg, tol)
            return res if res is not OrbitBifurcationTag.NONE else OrbitBifurcationTag.NS
        return OrbitBifurcationTag.NEUTRAL
    return OrbitBifurcationTag.NONE


@dataclass
class ResonanceReport:
    tags: list
    convention: str = "argument 2*pi/q for a 1:q resonance (R2 at pi, R3 at 2pi/3, R4 at pi/2)"


def resonance_scan(points: Sequence[tuple]) -> ResonanceReport:
    """Resonances along a sequence of torus-bifurcation points.

    ``points`` are ``(param, multiplier)`` pairs where ``multiplier`` is one
    member of the unit-circle pair. Reports ``(tag, param)`` wherever the
    argument passes 0, pi/2, 2pi/3 or pi between consecutive points (a pair
    that turns real at +1 or -1 counts as reaching 0 or pi).
    """
    out = []
    args = []
    for prm, m in points:
        m = complex(m)
        args.append((float(prm), abs(cmath.phase(m)), abs(m.imag) < 1e-12))
    for (p0, a0, r0), (p1, a1, r1) in zip(args, args[1:]):
        for tag, target in RESONANCE_ARGS.items():
            if (a0 - target) * (a1 - target) < 0 or (a1 == target and a0 != target):
                frac = (target - a0) / (a1 - a0) if a1 != a0 else 1.0
                out.append((tag, p0 + frac * (p1 - p0)))
    if len(args) == 1:
        prm, a, _ = args[0]
        tag = resonance_tag(a)
        if tag is not OrbitBifurcationTag.NONE:
            out.append((tag, prm))
    return ResonanceReport(out)


def reanchor(orbit: PeriodicOrbit) -> tuple[PoincareSection, np.ndarray]:
    """Section through the mid-level of the orbit along the current normal."""
    n = orbit.section.n
    tr = orbit.sample()
    h = tr.states @ n
    level = 0.5 * (h.min() + h.max())
    sec = PoincareSection(orbit.section.normal, float(level), 1)
    run = I.integrate(orbit.model, orbit.anchor, orbit.params,
                      ORBIT_CFG.with_(t_max=orbit.period * 1.01), [sec.event(terminal=1)],
                      record=False)
    if run.termination is not I.Termination.EVENT:
        raise NoReturn("orbit does not cross its mid-level plane")
    return sec, sec.project(run.final_state)


def orbit_from_hopf(model, p: Parameters, eq, *, cfg: I.IntegratorConfig = ORBIT_CFG,
                    section_normal=(0.0, 1.0, 0.0)) -> PeriodicOrbit:
    """Locate the small cycle near a Hopf equilibrium, seeded by the normal form."""
    seed, section, _ = hopf_orbit_seed(model, p, eq, section_normal)
    return find_orbit(p, seed, section, model=model, cfg=cfg)


# -- multiple shooting ------------------------------------------------------------

class _MultiShoot:
    """Periodic orbit as ``n`` segments of equal duration T/n.

    Unknowns are the segment starts, the period and the scaled parameter.
    A phase condition pins the first start to the hyperplane through the
    previous solution orthogonal to the flow there.
    """

    def __init__(self, model, p0, name, n, pscale, cfg):
        self.model = as_model(model)
        self.p0 = p0
        self.name = name
        self.n = n
        self.pscale = pscale
        self.pbase = float(getattr(p0, name))
        self.cfg = cfg
        self.ref_x = None
        self.ref_f = None

    def params(self, u):
        return _with_param(self.p0, self.name, self.pbase + self.pscale * u[-1])

    def set_phase(self, u):
        x0 = u[:3].copy()
        f = eval_field(self.model, x0, self.params(u))
        self.ref_x, self.ref_f = x0, f / np.linalg.norm(f)

    def evaluate(self, u):
        n = self.n
        p = self.params(u)
        T = u[3 * n]
        dt = T / n
        R = np.zeros(3 * n + 1)
        J = np.zeros((3 * n + 1, 3 * n + 2))
        Ms = []
        for i in range(n):
            xi = u[3 * i:3 * i + 3]
            y, M, S = I.integrate_variational(self.model, xi, p, dt, self.cfg, param=self.name)
            j = (i + 1) % n
            R[3 * i:3 * i + 3] = y - u[3 * j:3 * j + 3]
            J[3 * i:3 * i + 3, 3 * i:3 * i + 3] += M
            J[3 * i:3 * i + 3, 3 * j:3 * j + 3] -= np.eye(3)
            J[3 * i:3 * i + 3, 3 * n] = eval_field(self.model, y, p) / n
            J[3 * i:3 * i + 3, 3 * n + 1] = S * self.pscale
            Ms.append(M)
        R[3 * n] = self.ref_f @ (u[:3] - self.ref_x)
        J[3 * n, :3] = self.ref_f
        mono = np.eye(3)
        for M in Ms:
            mono = M @ mono
        return p, R, J, mono

    def solve(self, u_pred, tangent, tol=1e-9, max_iter=10):
        u = u_pred.copy()
        for it in range(max_iter):
            p, R, J, mono = self.evaluate(u)
            A = np.vstack([J, tangent])
            rhs = np.concatenate([R, [tangent @ (u - u_pred)]])
            du = -np.linalg.solve(A, rhs)
            u = u + du
            if np.linalg.norm(du) < tol * max(1.0, np.linalg.norm(u)):
                p, R, J, mono = self.evaluate(u)
                return u, p, R, J, mono, it + 1
        raise NotConverged("multiple-shooting corrector failed")

    @staticmethod
    def tangent(J, prev=None):
        _, _, vt = np.linalg.svd(J)
        t = vt[-1]
        if prev is not None and t @ prev < 0:
            t = -t
        return t / np.linalg.norm(t)


def _ms_tests(mono: np.ndarray, t: np.ndarray) -> dict:
    sv = np.linalg.svd(mono, compute_uv=False)
    return {"PD": float(np.linalg.det(mono + np.eye(3)) / 2.0),
            "NS": float(np.linalg.det(mono) - 1.0),
            "LPC": float(t[-1]),
            "noise": 1e-7 * float(np.prod(np.maximum(sv, 1.0)))}


_NOISY = ("PD", "NS")


def _unresolved(name: str, f_a: dict, f_b: dict) -> bool:
    """Sign change of a determinant test that rounding alone could produce."""
    return name in _NOISY and min(abs(f_a[name]), abs(f_b[name])) < max(f_a["noise"], f_b["noise"])


def _ms_orbit(ms: _MultiShoot, u, p, mono, R) -> PeriodicOrbit:
    x0 = u[:3].copy()
    mults, triv, amb = split_multipliers(mono)
    f = eval_field(ms.model, x0, p)
    sec = PoincareSection.through(x0, f / np.linalg.norm(f), 1)
    return PeriodicOrbit(anchor=x0, period=float(u[3 * ms.n]), multipliers=mults,
                         trivial_residual=triv, monodromy=mono, section=sec, params=p,
                         model=ms.model, residual=float(np.linalg.norm(R)),
                         ambiguous_trivial=amb)


def continue_orbit_ms(p0: Parameters, orbit0: PeriodicOrbit, param: str = "mu", *,
                      n_seg: int = 40, stop: float | None = None, ds: float = 0.02,
                      ds_min: float = 1e-7, ds_max: float = 0.2, pscale: float = 1e-3,
                      direction: int = 1, max_points: int = 2000, max_period: float = 200.0,
                      refine_tol: float = 1e-7, cfg: I.IntegratorConfig = ORBIT_CFG,
                      detect: Sequence[str] = ("PD", "LPC", "NS"),
                      callback: Callable | None = None) -> Branch:
    """Pseudo-arclength continuation by multiple shooting.

    Better conditioned than single shooting when orbits follow repelling
    slow manifolds (canard segments). Folds in the parameter are reported as
    LPC events; PD and NS use det(M + I) and det(M) - 1 of the monodromy M.
    """
    model = as_model(model_of(orbit0))
    ms = _MultiShoot(model, p0, param, n_seg, pscale, cfg)
    tr = I.integrate(model, orbit0.anchor, p0, cfg.with_(t_max=orbit0.period, max_step=
                     min(cfg.max_step, orbit0.period / (4 * n_seg))))
    starts = [tr.states[np.searchsorted(tr.times, orbit0.period * i / n_seg)] for i in range(n_seg)]
    u = np.concatenate([np.concatenate(starts), [orbit0.period, 0.0]])
    # polish on the exact segment grid before starting
    ms.set_phase(u)
    e_par = np.zeros(3 * n_seg + 2)
    e_par[-1] = 1.0
    u, p, R, J, mono, _ = ms.solve(u, e_par)
    t = ms.tangent(J)
    if t[-1] * direction < 0:
        t = -t
    branch = Branch(param)
    orb = _ms_orbit(ms, u, p, mono, R)
    branch.points.append(BranchPoint(float(getattr(p, param)), orb, u.copy(), t.copy()))
    tf_prev = _ms_tests(mono, t)
    h = ds
    while len(branch.points) < max_points:
        if h < ds_min:
            branch.terminated = "step underflow"
            branch.endpoint_kind = "S-proximal"
            break
        ms.set_phase(u)
        try:
            u_new, p_new, R_new, J_new, mono_new, its = ms.solve(u + h * t, t)
        except (NotConverged, np.linalg.LinAlgError, I.StiffnessError):
            h *= 0.5
            continue
        t_new = ms.tangent(J_new, t)
        if t_new @ t < (0.8 if h > 100 * ds_min else 0.0) or np.linalg.norm(u_new - u) > 3 * h:
            h *= 0.5
            continue
        orb_new = _ms_orbit(ms, u_new, p_new, mono_new, R_new)
        bp = BranchPoint(float(getattr(p_new, param)), orb_new, u_new.copy(), t_new.copy())
        halt = False
        tf_new = _ms_tests(mono_new, t_new)
        for name in detect:
            if tf_prev[name] * tf_new[name] < 0 and not _unresolved(name, tf_prev, tf_new):
                ev = _refine_ms(ms, name, branch.points[-1], bp, tf_prev[name], refine_tol)
                ev.index = len(branch.points)
                branch.events.append(ev)
                if callback and callback(ev):
                    halt = True
        finished = stop is not None and (branch.points[-1].param - stop) * (bp.param - stop) <= 0
        branch.points.append(bp)
        u, t, tf_prev = u_new, t_new, tf_new
        if callback and callback(bp):
            halt = True
        if finished:
            branch.terminated = "reached stop"
            break
        if halt:
            branch.terminated = "stopped by callback"
            break
        if orb_new.period > max_period:
            branch.terminated = "period blow-up"
            branch.endpoint_kind = "S-proximal"
            break
        h = min(ds_max, h * (1.3 if its <= 3 else 1.0))
    else:
        branch.terminated = "max points"
    return branch


def model_of(orbit: PeriodicOrbit) -> ModelId:
    return orbit.model


def _refine_ms(ms: _MultiShoot, name: str, a: BranchPoint, b: BranchPoint, f_a: float,
               tol: float) -> OrbitEvent:
    lo_u, hi_u, lo_f = a.xi, b.xi, f_a
    lo_p, hi_p = a.param, b.param
    best = None
    t_ref = a.tangent
    for _ in range(60):
        chord = hi_u - lo_u
        if np.linalg.norm(chord) == 0:
            break
        tc = chord / np.linalg.norm(chord)
        ms.set_phase(lo_u)
        try:
            u, p, R, J, mono, _ = ms.solve(0.5 * (lo_u + hi_u), tc)
        except (NotConverged, np.linalg.LinAlgError):
            break
        t = ms.tangent(J, t_ref)
        f = _ms_tests(mono, t)[name]
        pv = float(getattr(p, ms.name))
        best = (u, p, mono)
        if f * lo_f > 0:
            lo_u, lo_f, lo_p = u, f, pv
        else:
            hi_u, hi_p = u, pv
        if abs(hi_p - lo_p) < tol and np.linalg.norm(hi_u - lo_u) < 1e-6:
            break
    if best is None:
        return _event_from(name, b.param, b.orbit.period, b.orbit.multipliers,
                           abs(b.param - a.param))
    u, p, mono = best
    mults, _, _ = split_multipliers(mono)
    pv = 0.5 * (lo_p + hi_p)
    return _event_from(name, pv, float(u[3 * ms.n]), mults, abs(hi_p - lo_p))
