"""Event sequences along mu, sequence catalog matching, (mu, A) curves, (B, C) regions."""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import equilibria as EQ
from . import integrate as I
from . import periodic as PO
from . import tangency as TG
from .errors import (BracketError, DegenerateB, NoSaddleNode, NotFound, PreconditionError,
                     SingHopfError)
from .models import ModelId, ParameterSet

log = logging.getLogger(__name__)

RESOLUTION = 1e-5  # mu gap below which two events count as indistinguishable


class EventKind(str, enum.Enum):
    H_SUP = "H_sup"
    H_SUB = "H_sub"
    SN = "SN"
    PD = "PD"
    NS = "NS"
    LPC = "LPC"
    T = "T"
    S_PROXIMAL = "S-proximal"


@dataclass
class BifurcationEvent:
    kind: EventKind
    mu: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValueError("event mu must be finite")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "mu": self.mu, "metadata": self.metadata}


@dataclass
class SequenceRecord:
    params: tuple
    events: list
    table1_match: int | None = None
    unmatched_reason: str | None = None
    failures: list = field(default_factory=list)

    @property
    def kinds(self) -> list[str]:
        return [e.kind.value for e in self.events]

    def to_dict(self) -> dict:
        return {"params": {"A": self.params[0], "B": self.params[1], "C": self.params[2]},
                "events": [e.to_dict() for e in self.events], "kinds": self.kinds,
                "table1_match": self.table1_match, "unmatched_reason": self.unmatched_reason,
                "failures": self.failures}


# -- sequence catalog -------------------------------------------------------------------

TABLE1 = [
    "H_sup",
    "H_sup - (SN)",
    "(SN) - H_sup - T ± PD",
    "(SN) - H_sup - T ± NS - PD",
    "H_sup - LPC",
    "H_sup - T ± PD",
    "H_sup - T ± NS - PD",
    "LPC - H_sup - NS - PD",
    "LPC - H_sup - PD",
    "LPC - H_sup - T ± PD",
    "LPC - NS - H_sup - PD",
    "LPC - PD - H_sup",
    "H_sub",
    "H_sub - (SN)",
    "(SN) - H_sub - PD",
    "(SN) - H_sub - NS - PD",
    "H_sub - LPC",
    "H_sub - PD",
    "H_sub - NS - PD",
    "LPC - H_sub - NS - PD",
    "LPC - H_sub - T ± NS - PD",
    "LPC - H_sub - T ± PD",
    "LPC - H_sub - PD",
    "LPC - NS - H_sub - T ± PD",
    "LPC - PD - H_sub",
]


def _parse_row(row: str):
    """Row -> list of groups; a group is a tuple of kinds joined by '±'."""
    groups, optional = [], []
    for part in row.split(" - "):
        opt = part.startswith("(")
        names = tuple(s.strip(" ()") for s in part.split("±"))
        groups.append(names)
        optional.append(opt)
    return groups, optional


_ROWS = [_parse_row(r) for r in TABLE1]


def _expand(groups, optional, drop_optional):
    """Kind sequences a row admits; swapped ± pairs are flagged with '__swap__'."""
    seqs = [[]]
    for g, opt in zip(groups, optional):
        if opt and drop_optional:
            continue
        nxt = []
        for s in seqs:
            if len(g) == 1:
                nxt.append(s + [g[0]])
            else:
                nxt.append(s + list(g))
                nxt.append(s + list(reversed(g)) + ["__swap__"])
        seqs = nxt
    return seqs


def match_table1(events: Sequence, mus: Sequence[float] | None = None) -> int | None:
    """Index (1-25) of the catalog row matching an ordered event list.

    ``events`` holds kind names or :class:`BifurcationEvent` objects. A pair
    joined by '±' in the catalog also matches in swapped order when the two
    mu values are closer than the resolution threshold. Parenthesised SN
    entries match with or without the SN, but a row that uses every entry is
    preferred. S-proximal markers are ignored.
    """
    kinds, vals = [], []
    for i, e in enumerate(events):
        if isinstance(e, BifurcationEvent):
            k, m = e.kind.value, e.mu
        else:
            k, m = str(getattr(e, "value", e)), (mus[i] if mus is not None else None)
        if k == EventKind.S_PROXIMAL.value:
            continue
        kinds.append(k)
        vals.append(m)
    for drop in (False, True):
        for idx, (groups, optional) in enumerate(_ROWS, start=1):
            if drop and not any(optional):
                continue
            for seq in _expand(groups, optional, drop):
                pat = [s for s in seq if s != "__swap__"]
                if pat != kinds:
                    continue
                if "__swap__" not in seq or _swaps_close(groups, kinds, vals):
                    return idx
    return None


def _swaps_close(groups, kinds, vals) -> bool:
    # locate the swapped pairs in the pattern and check their mu gap
    pairs = [g for g in groups if len(g) == 2]
    for a, b in pairs:
        for i in range(len(kinds) - 1):
            if kinds[i] == b and kinds[i + 1] == a:
                if vals[i] is None or vals[i + 1] is None:
                    return False
                if abs(vals[i] - vals[i + 1]) >= RESOLUTION:
                    return False
    return True


# -- one-parameter sweep -------------------------------------------------------------------

def _orbit_branch(A, B, C, hopf: EQ.HopfReport, mu_range, *, offset=1e-5,
                  max_points=1500, callback=None) -> PO.Branch:
    last_exc = None
    for side in (1, -1):
        p = ParameterSet(hopf.mu_star + side * offset, A, B, C)
        try:
            e = EQ.e_f(p).location
            orb = PO.orbit_from_hopf(ModelId.RESCALED_QUADRATIC, p, np.asarray(e))
        except (PreconditionError, SingHopfError) as exc:
            last_exc = exc
            continue
        return PO.continue_orbit_in_mu(p, orb, mu_range, direction=side, pscale=1e-3,
                                       max_points=max_points, callback=callback)
    raise NotFound(f"no small cycle on either side of the Hopf point: {last_exc}")


def _unstable_focus_side(A, B, C, mu_star, delta) -> int | None:
    for side in (1, -1):
        p = ParameterSet(mu_star + side * delta, A, B, C)
        if TG._has_unstable_focus(p):
            return side
    return None


def sweep_mu(A: float, B: float, C: float, mu_range=(0.0, 0.0025), *, tangency: bool = True,
             orbits: bool = True, tangency_tol: float = 1e-6, n_grid: int = 10,
             t_max: float = 5000.0, workers: int | None = None) -> SequenceRecord:
    """Ordered local bifurcations met as mu increases through ``mu_range``."""
    lo, hi = sorted(float(v) for v in mu_range)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("mu_range must be finite")
    events: list[BifurcationEvent] = []
    failures: list[str] = []

    def inside(m):
        return lo <= m <= hi

    hopf = None
    try:
        hopf = EQ.hopf_locus(A, B, C)
        kind = EventKind.H_SUP if hopf.l1 < 0 else EventKind.H_SUB
        if inside(hopf.mu_star):
            events.append(BifurcationEvent(kind, hopf.mu_star,
                                           {"l1": hopf.l1, "omega": hopf.omega}))
    except SingHopfError as exc:
        failures.append(f"hopf: {exc}")

    try:
        mu_sn, x_sn = EQ.saddle_node_locus(A, B, C)
        if inside(mu_sn):
            events.append(BifurcationEvent(EventKind.SN, mu_sn, {"x": x_sn, "parenthetical": True}))
    except (NoSaddleNode, SingHopfError) as exc:
        failures.append(f"saddle-node: {exc}")

    if hopf is not None and orbits:
        try:
            br = _orbit_branch(A, B, C, hopf, (lo, hi))
            for ev in br.events:
                if inside(ev.param) and ev.tag.value in ("PD", "NS", "LPC"):
                    md = ev.to_dict()
                    md.pop("tag")
                    events.append(BifurcationEvent(EventKind(ev.tag.value), ev.param, md))
            if br.endpoint_kind == "S-proximal" and inside(br.points[-1].param):
                events.append(BifurcationEvent(EventKind.S_PROXIMAL, br.points[-1].param,
                                               {"reason": br.terminated,
                                                "period": br.points[-1].orbit.period}))
        except SingHopfError as exc:
            failures.append(f"orbit branch: {exc}")

    if hopf is not None and tangency:
        try:
            tp = _tangency_in_range(A, B, C, hopf.mu_star, lo, hi, tangency_tol, n_grid, t_max,
                                    workers)
            if tp is not None:
                events.append(BifurcationEvent(EventKind.T, tp.mu, tp.to_dict()))
        except SingHopfError as exc:
            failures.append(f"tangency: {exc}")

    events.sort(key=lambda e: e.mu)
    rec = SequenceRecord((A, B, C), events, failures=failures)
    rec.table1_match = match_table1(events)
    if rec.table1_match is None:
        rec.unmatched_reason = "no events" if not events else "sequence not in catalog"
    return rec


def _focus_limit(A, B, C, inner, outer, iters=50):
    """Point between ``inner`` (unstable focus) and ``outer`` (not) nearest the edge."""
    for _ in range(iters):
        mid = 0.5 * (inner + outer)
        if TG._has_unstable_focus(ParameterSet(mid, A, B, C)):
            inner = mid
        else:
            outer = mid
    return inner


def _tangency_in_range(A, B, C, mu_star, lo, hi, tol, n_grid, t_max, workers):
    delta = 1e-5
    side = _unstable_focus_side(A, B, C, mu_star, delta)
    if side is None:
        return None
    near = mu_star + side * delta
    far = hi if side > 0 else lo
    if (far - near) * side <= 0:
        return None
    if not TG._has_unstable_focus(ParameterSet(far, A, B, C)):
        far = _focus_limit(A, B, C, near, far)
    a, b = sorted((near, far))
    try:
        return TG.find_tangency(ParameterSet(a, A, B, C), a, b, tol=tol, n_grid=n_grid,
                                t_max=t_max, workers=workers)
    except BracketError:
        return None


# -- (mu, A) curves --------------------------------------------------------------------------

@dataclass
class Curve:
    kind: str
    points: list                     # (A, mu) pairs sorted by A
    annotations: list = field(default_factory=list)
    gaps: list = field(default_factory=list)

    def rows(self):
        for a, m in self.points:
            yield [a, m]


def trace_curve(kind: str, B: float, C: float, a_grid, mu_window=(-0.01, 0.01), *,
                workers: int | None = None, **kw) -> Curve:
    """Pointwise (mu, A) curve of one bifurcation kind.

    SN and Hopf are analytic per A; PD, LPC and NS come from the orbit branch
    started at the Hopf point of each A; T uses the tangency bisection per A.
    """
    kind = kind.upper() if kind.upper() in ("SN", "PD", "LPC", "NS", "T") else kind.capitalize()
    a_grid = sorted(float(a) for a in a_grid)
    lo, hi = mu_window
    curve = Curve(kind, [])

    if kind == "SN":
        if B == 0:
            raise DegenerateB("no saddle-node curve when B = 0")
        for A in a_grid:
            mu = (A + C) ** 2 / (4 * B)
            if lo <= mu <= hi:
                curve.points.append((A, mu))
        curve.annotations.append({"label": "ZH", "A": EQ.zero_hopf_A(B, C)})
        return curve

    if kind == "Hopf":
        for A in a_grid:
            try:
                mu = EQ.hopf_locus(A, B, C, with_l1=False).mu_star
                if lo <= mu <= hi:
                    curve.points.append((A, mu))
            except SingHopfError:
                curve.gaps.append(A)
        curve.annotations.append({"label": "ZH", "A": EQ.zero_hopf_A(B, C)})
        for gh in EQ.generalized_hopf_A(B, C):
            curve.annotations.append({"label": "GH", "A": gh.a_cap})
        return curve

    if kind in ("PD", "LPC", "NS"):
        def halt_on_kind(item):
            # each A needs only the first crossing of the traced kind
            return isinstance(item, PO.OrbitEvent) and item.tag.value == kind

        def one(A):
            try:
                hopf = EQ.hopf_locus(A, B, C)
                br = _orbit_branch(A, B, C, hopf, (lo, hi), callback=halt_on_kind)
                return [(ev.param, ev) for ev in br.events if ev.tag.value == kind
                        or (kind == "NS" and ev.tag.value in ("R1", "R2", "R3", "R4"))]
            except SingHopfError as exc:
                log.info("trace_curve %s: A=%g failed: %s", kind, A, exc)
                return None

        results = I.map_parallel(one, a_grid, workers)
        mults = []
        for A, res in zip(a_grid, results):
            if res is None:
                curve.gaps.append(A)
                continue
            for mu, ev in res:
                if lo <= mu <= hi:
                    curve.points.append((A, mu))
                    if kind == "NS":
                        mults.append((A, complex(ev.multipliers[0])))
        if mults:
            rep = PO.resonance_scan(mults)
            for tag, a in rep.tags:
                curve.annotations.append({"label": tag.value, "A": a})
        return curve

    if kind == "T":
        for A in a_grid:
            try:
                hopf = EQ.hopf_locus(A, B, C, with_l1=False)
                tp = _tangency_in_range(A, B, C, hopf.mu_star, lo, hi, kw.get("tol", 1e-6),
                                        kw.get("n_grid", 10), kw.get("t_max", 5000.0), workers)
                if tp is None:
                    curve.gaps.append(A)
                else:
                    curve.points.append((A, tp.mu))
            except SingHopfError:
                curve.gaps.append(A)
        return curve

    raise ValueError(f"unknown curve kind {kind!r}")


# -- analytic lines and regions ---------------------------------------------------------------

def _disc(B, C):
    d = C * C - 4.0 * B
    # rounding noise on C^2 = 4B counts as a double root
    return 0.0 if abs(d) <= 1e-13 * (C * C + 4 * abs(B)) else d


def canard_lines(B: float, C: float) -> list[float]:
    """Real roots of A^2 + A C + B = 0, ascending."""
    disc = _disc(B, C)
    if disc < 0:
        return []
    if disc == 0:
        return [-C / 2.0]
    r = math.sqrt(disc)
    # cancellation-free pair
    q = -0.5 * (C + math.copysign(r, C)) if C != 0 else -0.5 * r
    roots = [q, B / q] if q != 0 else [-r / 2, r / 2]
    return sorted(roots)


@dataclass
class RegionInfo:
    quadrant: str
    gh_indicator: float       # C^2 - 8B, positive when GH points exist
    canard_indicator: float   # C^2 - 4B, positive when canard lines exist
    family: str
    candidates: list
    requires_probe: bool

    def to_dict(self) -> dict:
        return {"quadrant": self.quadrant, "gh_indicator": self.gh_indicator,
                "gh_sign": int(np.sign(self.gh_indicator)),
                "canard_indicator": self.canard_indicator,
                "canard_sign": int(np.sign(self.canard_indicator)),
                "family": self.family, "candidates": self.candidates,
                "requires_probe": self.requires_probe}


def region_classify(B: float, C: float) -> RegionInfo:
    """Coarse (B, C) region from the analytic curves C^2 = 8B and C^2 = 4B.

    The suffix 'a' marks C > 0 and 'b' marks C < 0. Regions III to VII are
    separated by curves that are only known numerically, so points between
    the two parabolas return the whole candidate set.
    """
    if B == 0:
        raise DegenerateB("the normal form is highly degenerate at B = 0")
    suffix = "a" if C >= 0 else "b"
    quadrant = ("B>0" if B > 0 else "B<0") + (",C>0" if C > 0 else ",C<0" if C < 0 else ",C=0")
    gh = C * C - 8 * B
    cl = C * C - 4 * B
    if B < 0:
        return RegionInfo(quadrant, gh, cl, "I" + suffix, ["I" + suffix], False)
    if gh > 0:
        return RegionInfo(quadrant, gh, cl, "II" + suffix, ["II" + suffix], False)
    if cl < 0:
        return RegionInfo(quadrant, gh, cl, "VIII" + suffix, ["VIII" + suffix], False)
    cands = [r + suffix for r in ("III", "IV", "V", "VI", "VII")]
    return RegionInfo(quadrant, gh, cl, "III-VII" + suffix, cands, True)


def orbit_flip_point(B: float, C: float) -> list[dict]:
    """Conjectured homoclinic orbit-flip points (mu, A) = (B/4, (-C +- sqrt(C^2 - 4B))/2)."""
    disc = _disc(B, C)
    if disc < 0:
        return []
    mu = B / 4.0
    if disc == 0:
        return [{"mu": mu, "A": -C / 2.0, "status": "CONJECTURED"}]
    r = math.sqrt(disc)
    return [{"mu": mu, "A": (-C + s * r) / 2.0, "status": "CONJECTURED"} for s in (1, -1)]
