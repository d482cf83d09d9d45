"""Adaptive Dormand-Prince integration with events and first variations."""
from __future__ import annotations

import enum
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from . import _kernels as K
from .errors import DomainError, StiffnessError
from .models import PARAM_INDEX, Parameters, as_model, param_vector


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = 1.0
    t_max: float = 100.0
    method: str = "dopri54"
    max_steps: int = 50_000_000

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            v = getattr(self, name)
            if not 0 < v <= 1e-2:
                raise DomainError(f"{name} must lie in (0, 1e-2], got {v}")
        if not self.t_max > 0:
            raise DomainError("t_max must be positive")
        if not self.max_step > 0:
            raise DomainError("max_step must be positive")
        if self.method != "dopri54":
            raise DomainError(f"unsupported method {self.method!r}")

    def with_(self, **kw) -> "IntegratorConfig":
        d = {**self.__dict__, **kw}
        return IntegratorConfig(**d)


class Termination(str, enum.Enum):
    TIMEOUT = "TimeOut"
    EVENT = "Event"
    ESCAPED = "Escaped"
    CONVERGED = "Converged"


_STATUS = {
    K.ST_TIMEOUT: Termination.TIMEOUT,
    K.ST_EVENT: Termination.EVENT,
    K.ST_ESCAPED: Termination.ESCAPED,
    K.ST_CONVERGED: Termination.CONVERGED,
}


@dataclass(frozen=True)
class PlaneCrossing:
    """Crossing of ``normal . s = offset``.

    ``direction`` is +1, -1 or 0 (both). ``terminal`` is the number of
    crossings after which integration stops (0 = never). Successive crossings
    closer than ``converge_tol`` terminate with ``Converged``, as does a
    crossing within ``anchor_radius`` of ``anchor``.
    """

    normal: Sequence[float]
    offset: float
    direction: int = 0
    terminal: int = 0
    converge_tol: float = 0.0
    anchor: Sequence[float] | None = None
    anchor_radius: float = 0.0

    def __post_init__(self):
        if self.direction not in (-1, 0, 1):
            raise DomainError("direction must be -1, 0 or +1")

    def _row(self):
        n = np.asarray(self.normal, dtype=float)
        return [n[0], n[1], n[2], self.offset, 0.0, self.direction, self.terminal,
                self.converge_tol]


@dataclass(frozen=True)
class ParabolaCrossing:
    """Crossing of the parabolic cylinder ``Y = X^2 + offset``."""

    offset: float
    direction: int = 0
    terminal: int = 0

    def _row(self):
        return [0.0, 1.0, 0.0, self.offset, -1.0, self.direction, self.terminal, 0.0]


@dataclass(frozen=True)
class EscapeBox:
    lower: Sequence[float]
    upper: Sequence[float]


@dataclass(frozen=True)
class ProximityToPoint:
    center: Sequence[float]
    radius: float
    dwell_time: float = 10.0

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("radius must be positive")


EventSpec = Union[PlaneCrossing, ParabolaCrossing, EscapeBox, ProximityToPoint]

INF = float("inf")
# escape to X = -infinity for the quadratic normal form
DEFAULT_ESCAPE = EscapeBox(lower=(-10.0, -100.0, -INF), upper=(INF, 100.0, INF))


@dataclass(frozen=True)
class EventHit:
    index: int
    t: float
    state: np.ndarray


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    termination: Termination
    event_index: int = -1
    hits: list = field(default_factory=list)
    direction: int = 1
    left_watch_box: bool = False
    nsteps: int = 0

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    def crossings(self, index: int = 0) -> np.ndarray:
        pts = [h.state[:3] for h in self.hits if h.index == index]
        return np.array(pts).reshape(-1, 3)

    def to_csv(self, path, provenance: dict | None = None) -> Path:
        from ._io import write_csv, write_json

        path = Path(path)
        rows = np.column_stack([self.times, self.states])
        write_csv(path, ["t", "X", "Y", "Z"], rows)
        side = {"termination": self.termination.value, "event_index": self.event_index,
                "direction": self.direction, "n_points": int(len(self.times))}
        if provenance:
            side["provenance"] = provenance
        write_json(path.with_suffix(".json"), side)
        return path


@dataclass
class _RawRun:
    status: int
    event_id: int
    t: float
    y: np.ndarray
    nsteps: int
    left_watch: bool
    rec_t: np.ndarray
    rec_y: np.ndarray
    hit_id: np.ndarray
    hit_t: np.ndarray
    hit_y: np.ndarray


def _compile_events(events: Iterable[EventSpec]):
    rows, anchors = [], []
    lo = np.full(3, -INF)
    hi = np.full(3, INF)
    prox_c, prox_r, prox_d = np.zeros(3), 0.0, 0.0
    for ev in events:
        if isinstance(ev, (PlaneCrossing, ParabolaCrossing)):
            rows.append(ev._row())
            if isinstance(ev, PlaneCrossing) and ev.anchor is not None and ev.anchor_radius > 0:
                anchors.append([*np.asarray(ev.anchor, dtype=float), ev.anchor_radius])
            else:
                anchors.append([0.0, 0.0, 0.0, 0.0])
        elif isinstance(ev, EscapeBox):
            lo = np.maximum(lo, np.asarray(ev.lower, dtype=float))
            hi = np.minimum(hi, np.asarray(ev.upper, dtype=float))
        elif isinstance(ev, ProximityToPoint):
            prox_c = np.asarray(ev.center, dtype=float)
            prox_r, prox_d = float(ev.radius), float(ev.dwell_time)
        else:
            raise TypeError(f"unknown event spec {ev!r}")
    ev_arr = np.array(rows, dtype=float).reshape(-1, K.EV_COLS)
    an_arr = np.array(anchors, dtype=float).reshape(-1, 4)
    return ev_arr, an_arr, lo, hi, prox_c, prox_r, prox_d


def _run(model, y0, p: Parameters, duration: float, cfg: IntegratorConfig,
         events: Iterable[EventSpec] = (), *, direction: int = 1, nvar: int = 0,
         param: str | None = None, t0: float = 0.0, t_ignore: float = 0.0,
         record: bool = True, watch: EscapeBox | None = None) -> _RawRun:
    model = as_model(model)
    pv = param_vector(model, p)
    ev_arr, an_arr, lo, hi, pc, pr, pd = _compile_events(events)
    w_lo = np.full(3, -INF) if watch is None else np.asarray(watch.lower, dtype=float)
    w_hi = np.full(3, INF) if watch is None else np.asarray(watch.upper, dtype=float)
    ip = PARAM_INDEX[param] if param is not None else 0
    out = K.run(model.tag, pv, np.ascontiguousarray(y0, dtype=float), float(t0), float(duration),
                int(direction), int(nvar), int(ip),
                cfg.rel_tol, cfg.abs_tol, cfg.max_step, int(cfg.max_steps),
                ev_arr, an_arr, float(t_ignore), lo, hi, w_lo, w_hi, pc, pr, pd, bool(record))
    raw = _RawRun(*out)
    if raw.status == K.ST_STEP_UNDERFLOW:
        raise StiffnessError(f"step size underflow at t={raw.t:.6g}", data=raw.y.copy())
    if raw.status == K.ST_MAX_STEPS:
        raise StiffnessError(f"step budget exhausted at t={raw.t:.6g}", data=raw.y.copy())
    return raw


def integrate(model, s0, p: Parameters, cfg: IntegratorConfig = IntegratorConfig(),
              events: Sequence[EventSpec] = (), *, direction: int = 1,
              t_ignore: float = 0.0, watch: EscapeBox | None = None,
              record: bool = True) -> Trajectory:
    """Integrate ``model`` from ``s0`` for ``cfg.t_max`` time units.

    ``direction=-1`` runs the flow backwards; times are then reported as the
    elapsed reverse time so they still increase. Crossings earlier than
    ``t_ignore`` are not reported.
    """
    raw = _run(model, np.asarray(s0, dtype=float)[:3], p, cfg.t_max, cfg, events,
               direction=direction, t_ignore=t_ignore, record=record, watch=watch)
    hits = [EventHit(int(i), float(t), y.copy()) for i, t, y in zip(raw.hit_id, raw.hit_t, raw.hit_y)]
    if record:
        times, states = raw.rec_t, raw.rec_y
    else:
        times, states = np.array([0.0, raw.t]), np.vstack([np.asarray(s0, dtype=float)[:3], raw.y[:3]])
    return Trajectory(times=times, states=states, termination=_STATUS[raw.status],
                      event_index=int(raw.event_id), hits=hits, direction=direction,
                      left_watch_box=bool(raw.left_watch), nsteps=int(raw.nsteps))


def integrate_variational(model, s0, p: Parameters, t_span: float,
                          cfg: IntegratorConfig = IntegratorConfig(), *,
                          param: str | None = None, direction: int = 1):
    """Integrate the state together with its fundamental matrix.

    Returns ``(state, M)``, or ``(state, M, dstate_dparam)`` when ``param``
    names a parameter (e.g. ``"mu"`` or ``"lam"``).
    """
    y0 = _variational_start(s0, param)
    raw = _run(model, y0, p, t_span, cfg, direction=direction,
               nvar=2 if param else 1, param=param, record=False)
    y = raw.y
    M = y[3:12].reshape(3, 3).copy()
    if param:
        return y[:3].copy(), M, y[12:15].copy()
    return y[:3].copy(), M


def _variational_start(s0, param):
    n = 15 if param else 12
    y0 = np.zeros(n)
    y0[:3] = np.asarray(s0, dtype=float)[:3]
    y0[3:12] = np.eye(3).ravel()
    return y0


def default_workers() -> int:
    env = os.environ.get("SINGHOPF_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def map_parallel(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    """Map ``fn`` over ``items`` keeping input order.

    The compiled integrator releases the GIL, so a thread pool gives real
    parallelism without pickling model state.
    """
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
