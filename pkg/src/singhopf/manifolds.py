"""Slow manifolds, W^s and W^u of the fold equilibrium, and section portraits."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import integrate as I
from ._io import write_csv, write_json
from .errors import PreconditionError
from .models import (ModelId, Parameters, as_model, critical_manifold, eval_field, jacobian,
                     SheetStability)

INF = float("inf")
FOLD_BOX = I.EscapeBox(lower=(-3.0, -9.0, -3.0), upper=(3.0, 9.0, 3.0))
MANIFOLD_CFG = I.IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12, max_step=0.5, t_max=5000.0)


class MeshLabel(str, enum.Enum):
    SA = "Sa"
    SR = "Sr"
    WU = "WuEf"
    WS = "WsEf"


class Fate(str, enum.Enum):
    ESCAPED = "Escaped"
    ORBIT = "ConvergedToOrbit"
    EQUILIBRIUM = "ConvergedToEquilibrium"
    TIMEOUT = "TimeOut"


@dataclass
class ManifoldMesh:
    label: MeshLabel
    trajectories: list
    seed_description: str
    seeds: list = field(default_factory=list)
    fates: list = field(default_factory=list)
    params: Parameters | None = None
    model: ModelId = ModelId.RESCALED_QUADRATIC

    def export(self, directory, provenance: dict | None = None) -> Path:
        """One CSV per trajectory plus ``manifest.json``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        entries = []
        for i, tr in enumerate(self.trajectories):
            name = f"{self.label.value}_{i:03d}.csv"
            write_csv(d / name, ["t", "X", "Y", "Z"], np.column_stack([tr.times, tr.states]))
            entries.append({"file": name,
                            "seed": np.asarray(self.seeds[i] if self.seeds else tr.states[0]).tolist(),
                            "fate": self.fates[i].value if self.fates else tr.termination.value,
                            "direction": tr.direction})
        manifest = {"label": self.label.value, "seed_description": self.seed_description,
                    "trajectories": entries}
        if provenance:
            manifest["provenance"] = provenance
        return write_json(d / "manifest.json", manifest)


# -- slow manifolds ---------------------------------------------------------------

def sheet_offset(p: Parameters, x: float, z: float, order: int = 2) -> float:
    """Height of the slow manifold above Y = X^2 for the rescaled quadratic form.

    Writing the manifold as Y = X^2 + h(X, Z), invariance requires
    2X h = Z - X - h_X h - h_Z (-mu - A X - B Y - C Z). Each order is one
    fixed-point sweep of this relation starting from h = 0, so the error
    falls like a further power of 1/X.
    """
    if order <= 0:
        return 0.0
    h = (z - x) / (2.0 * x)
    if order == 1:
        return h
    hx, hz = -z / (2.0 * x * x), 1.0 / (2.0 * x)
    g = -p.mu - p.a_cap * x - p.b_cap * (x * x + h) - p.c_cap * z
    return (z - x - hx * h - hz * g) / (2.0 * x)


def slow_manifold(p: Parameters, which: str = "attracting", x_seed: float = 2.0,
                  z_values: Sequence[float] = tuple(np.linspace(-0.5, 1.0, 16)), *,
                  model=ModelId.RESCALED_QUADRATIC, t_max: float = 200.0,
                  box: I.EscapeBox = FOLD_BOX, cfg: I.IntegratorConfig = MANIFOLD_CFG,
                  offset_order: int = 2, workers: int | None = None) -> ManifoldMesh:
    """Trajectories tracing S_a (forward) or S_r (backward in time).

    Seeds sit above the critical manifold at X = +x_seed for the attracting
    sheet and X = -x_seed for the repelling one, one per Z value. For the
    rescaled quadratic form they are lifted by :func:`sheet_offset` of
    ``offset_order`` (0 seeds exactly on Y = X^2); other models use no lift.
    Trajectories stop on leaving ``box`` or after ``t_max``.
    """
    model = as_model(model)
    if which not in ("attracting", "repelling"):
        raise PreconditionError("which must be 'attracting' or 'repelling'")
    if abs(x_seed) < 1.0:
        raise PreconditionError("seed must lie at |X| >= 1, away from the fold")
    x = abs(x_seed) if which == "attracting" else -abs(x_seed)
    want = SheetStability.ATTRACTING if which == "attracting" else SheetStability.REPELLING
    cp = critical_manifold(model, x, p)
    if cp.stability is not want:
        raise PreconditionError(f"X={x} is not on the {which} sheet")
    direction = 1 if which == "attracting" else -1
    lift = offset_order if model is ModelId.RESCALED_QUADRATIC else 0
    seeds = [np.array([x, cp.y + sheet_offset(p, x, float(z), lift), float(z)]) for z in z_values]
    run_cfg = cfg.with_(t_max=t_max)

    def one(s):
        return I.integrate(model, s, p, run_cfg, [box], direction=direction)

    trajs = I.map_parallel(one, seeds, workers)
    label = MeshLabel.SA if which == "attracting" else MeshLabel.SR
    return ManifoldMesh(label, trajs, f"critical manifold at X={x}, Z in [{min(z_values)}, {max(z_values)}]",
                        seeds, [], p, model)


# -- fold equilibrium eigenstructure ------------------------------------------------

@dataclass
class UnstablePlane:
    center: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    alpha: float
    omega: float
    stable_value: float
    stable_vector: np.ndarray


def unstable_plane(model, p: Parameters, e) -> UnstablePlane:
    """Orthonormal basis of the 2D unstable eigenspace of a saddle focus."""
    e = np.asarray(e, dtype=float)[:3]
    eigs, vecs = np.linalg.eig(jacobian(model, e, p))
    unstable = [i for i in range(3) if eigs[i].real > 0]
    if len(unstable) != 2 or abs(eigs[unstable[0]].imag) == 0:
        raise PreconditionError(f"equilibrium is not a saddle focus with 2D unstable manifold: {eigs}")
    i = max(unstable, key=lambda k: eigs[k].imag)
    q = vecs[:, i]
    v1 = q.real / np.linalg.norm(q.real)
    v2 = q.imag - (q.imag @ v1) * v1
    v2 /= np.linalg.norm(v2)
    k = [j for j in range(3) if j not in unstable][0]
    vs = vecs[:, k].real
    return UnstablePlane(e, v1, v2, float(eigs[i].real), float(eigs[i].imag),
                         float(eigs[k].real), vs / np.linalg.norm(vs))


def bit_reversed_order(n: int) -> list[int]:
    """Indices 0..n-1 arranged so that early entries are far apart on the ring."""
    bits = max(1, int(np.ceil(np.log2(max(n, 2)))))
    keyed = sorted(range(1 << bits), key=lambda i: int(format(i, f"0{bits}b")[::-1], 2))
    return [i for i in keyed if i < n]


def ring_seeds(plane: UnstablePlane, radius: float, n: int, interleave: bool = True):
    order = bit_reversed_order(n) if interleave else list(range(n))
    out = []
    for k in order:
        th = 2 * np.pi * k / n
        out.append((k, plane.center + radius * (np.cos(th) * plane.v1 + np.sin(th) * plane.v2)))
    return out


def default_ring_radius(e) -> float:
    return 1e-3 * (1.0 + abs(float(np.asarray(e)[0])))


@dataclass
class RayOutcome:
    fate: Fate
    left_fold_box: bool
    trajectory: I.Trajectory
    t_end: float


def integrate_ray(model, p: Parameters, seed, plane: UnstablePlane, t_max: float, *,
                  escape: I.EscapeBox = I.DEFAULT_ESCAPE, fold_box: I.EscapeBox = FOLD_BOX,
                  conv_tol: float = 1e-6, record: bool = False,
                  cfg: I.IntegratorConfig = MANIFOLD_CFG,
                  stable_points: Sequence = ()) -> RayOutcome:
    """Follow one seed in W^u until it escapes, settles, or runs out of time.

    Settling onto a periodic orbit is detected by two successive upward
    crossings of the plane Y = Y_e closer than ``conv_tol``. Crossings near
    the equilibrium itself (still on the initial spiral) do not count.
    """
    model = as_model(model)
    e = plane.center
    sec = I.PlaneCrossing((0.0, 1.0, 0.0), float(e[1]), 1, 0, converge_tol=conv_tol)
    events = [sec, escape]
    near = 50.0 * np.linalg.norm(np.asarray(seed) - e)
    if stable_points:
        events.append(I.ProximityToPoint(stable_points[0], 1e-6, 10.0))
    state = np.asarray(seed, dtype=float)
    t_used = 0.0
    times, states, left = [], [], False
    nsteps = 0
    while True:
        tr = I.integrate(model, state, p, cfg.with_(t_max=max(t_max - t_used, 1e-9)), events,
                         watch=fold_box, record=record)
        nsteps += tr.nsteps
        left = left or tr.left_watch_box
        if record:
            times.append(tr.times + t_used)
            states.append(tr.states)
        t_used += tr.final_time
        state = tr.final_state
        if (tr.termination is I.Termination.CONVERGED and tr.event_index == 0
                and np.linalg.norm(state - e) < near and t_used < t_max):
            continue
        break
    if tr.termination is I.Termination.ESCAPED:
        fate = Fate.ESCAPED
    elif tr.termination is I.Termination.CONVERGED:
        fate = Fate.ORBIT if tr.event_index == 0 else Fate.EQUILIBRIUM
    else:
        fate = Fate.TIMEOUT
    if record:
        full = I.Trajectory(np.concatenate(times), np.vstack(states), tr.termination,
                            tr.event_index, [], 1, left, nsteps)
    else:
        full = I.Trajectory(np.array([0.0, t_used]), np.vstack([seed, state]), tr.termination,
                            tr.event_index, [], 1, left, nsteps)
    return RayOutcome(fate, left, full, t_used)


def unstable_manifold_mesh(p: Parameters, e=None, ring_radius: float | None = None,
                           n_rays: int = 32, t_max: float = 5000.0, *,
                           model=ModelId.RESCALED_QUADRATIC, record: bool = True,
                           escape: I.EscapeBox = I.DEFAULT_ESCAPE,
                           workers: int | None = None) -> ManifoldMesh:
    """Forward trajectories from a small ring in the unstable eigenplane of ``e``."""
    model = as_model(model)
    if e is None:
        from .equilibria import e_f
        e = e_f(p).location
    e = np.asarray(getattr(e, "location", e), dtype=float)
    plane = unstable_plane(model, p, e)
    r = default_ring_radius(e) if ring_radius is None else ring_radius
    seeds = ring_seeds(plane, r, n_rays, interleave=False)

    def one(item):
        return integrate_ray(model, p, item[1], plane, t_max, escape=escape, record=record)

    outs = I.map_parallel(one, seeds, workers)
    return ManifoldMesh(MeshLabel.WU, [o.trajectory for o in outs],
                        f"ring of radius {r:g} in the unstable eigenplane, {n_rays} rays",
                        [s for _, s in seeds], [o.fate for o in outs], p, model)


def stable_manifold_1d(p: Parameters, e=None, *, model=ModelId.RESCALED_QUADRATIC,
                       delta: float | None = None, t_max: float = 100.0,
                       escape: I.EscapeBox = I.DEFAULT_ESCAPE,
                       cfg: I.IntegratorConfig = MANIFOLD_CFG) -> ManifoldMesh:
    """Both branches of the 1D stable manifold, integrated backwards in time."""
    model = as_model(model)
    if e is None:
        from .equilibria import e_f
        e = e_f(p).location
    e = np.asarray(getattr(e, "location", e), dtype=float)
    eigs, vecs = np.linalg.eig(jacobian(model, e, p))
    neg = [i for i in range(3) if eigs[i].real < 0]
    if len(neg) != 1 or abs(eigs[neg[0]].imag) > 0:
        raise PreconditionError(f"need exactly one real stable eigenvalue: {eigs}")
    vs = vecs[:, neg[0]].real
    vs /= np.linalg.norm(vs)
    d = 1e-6 * (1.0 + abs(e[0])) if delta is None else delta
    seeds = [e + d * vs, e - d * vs]
    trajs = [I.integrate(model, s, p, cfg.with_(t_max=t_max), [escape], direction=-1)
             for s in seeds]
    return ManifoldMesh(MeshLabel.WS, trajs, f"e +/- {d:g} along the stable eigenvector",
                        seeds, [], p, model)


# -- section portraits --------------------------------------------------------------

def section_portrait(plane: I.PlaneCrossing, objects: Mapping[str, object], *,
                     cfg: I.IntegratorConfig = MANIFOLD_CFG) -> dict:
    """Directed crossings of every object's trajectories with ``plane``.

    Objects may be a :class:`ManifoldMesh` or a periodic orbit (anything with
    ``anchor``, ``period``, ``params`` and ``model``). Crossings are located
    by re-running each trajectory with the plane as a non-terminal event.
    """
    ev = I.PlaneCrossing(plane.normal, plane.offset, plane.direction, 0)
    out: dict = {}
    for name, obj in objects.items():
        pts = []
        if isinstance(obj, ManifoldMesh):
            for tr in obj.trajectories:
                dur = float(tr.times[-1] - tr.times[0])
                if dur <= 0:
                    continue
                rr = I.integrate(obj.model, tr.states[0], obj.params, cfg.with_(t_max=dur),
                                 [ev], direction=tr.direction, record=False)
                pts.extend(h.state[:3] for h in rr.hits)
        elif hasattr(obj, "anchor") and hasattr(obj, "period"):
            rr = I.integrate(obj.model, obj.anchor, obj.params, cfg.with_(t_max=obj.period),
                             [ev], record=False, t_ignore=1e-9)
            pts.extend(h.state[:3] for h in rr.hits)
        else:
            raise TypeError(f"unsupported object for {name!r}")
        out[name] = np.array(pts).reshape(-1, 3)
    return out
