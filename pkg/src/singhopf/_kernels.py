"""Compiled vector fields and the Dormand-Prince 5(4) driver.

Everything in here runs under numba in nopython mode. Models are selected by
an integer tag and a flat float64 parameter vector; the public wrappers in
:mod:`singhopf.models` and :mod:`singhopf.integrate` translate from the typed
parameter objects.

State layout for variational runs: ``y[0:3]`` is the phase point,
``y[3:12]`` the fundamental matrix (row major) and, when a parameter
sensitivity is requested, ``y[12:15]`` holds d(state)/d(parameter).
"""
import math

import numpy as np
from numba import njit

TAG_RESCALED_QUADRATIC = 0
TAG_UNSCALED_QUADRATIC = 1
TAG_RESCALED_CUBIC = 2
TAG_UNSCALED_CUBIC = 3
TAG_KOPER = 4

# termination codes
ST_TIMEOUT = 0
ST_EVENT = 1
ST_ESCAPED = 2
ST_CONVERGED = 3
ST_STEP_UNDERFLOW = 4
ST_MAX_STEPS = 5

# event table columns
EV_NX, EV_NY, EV_NZ, EV_OFFSET, EV_QX, EV_DIR, EV_TERMINAL, EV_CONV = range(8)
EV_COLS = 8


@njit(cache=True, nogil=True)
def field(tag, s, p, out):
    x = s[0]
    y = s[1]
    z = s[2]
    if tag == TAG_RESCALED_QUADRATIC:
        out[0] = y - x * x
        out[1] = z - x
        out[2] = -p[0] - p[1] * x - p[2] * y - p[3] * z
    elif tag == TAG_UNSCALED_QUADRATIC:
        out[0] = (y - x * x) / p[4]
        out[1] = z - x
        out[2] = -p[0] - p[1] * x - p[2] * y - p[3] * z
    elif tag == TAG_RESCALED_CUBIC:
        out[0] = y - x * x - math.sqrt(p[4]) * x * x * x
        out[1] = z - x
        out[2] = -p[0] - p[1] * x - p[2] * y - p[3] * z
    elif tag == TAG_UNSCALED_CUBIC:
        out[0] = (y - x * x - x * x * x) / p[4]
        out[1] = z - x
        out[2] = -p[0] - p[1] * x - p[2] * y - p[3] * z
    else:
        eps1, eps2, k, lam = p[0], p[1], p[2], p[3]
        out[0] = (k * y - x * x * x + 3.0 * x - lam) / eps1
        out[1] = x - 2.0 * y + z
        out[2] = eps2 * (y - z)


@njit(cache=True, nogil=True)
def jacobian(tag, s, p, J):
    x = s[0]
    for i in range(3):
        for j in range(3):
            J[i, j] = 0.0
    if tag == TAG_KOPER:
        eps1, eps2, k = p[0], p[1], p[2]
        J[0, 0] = (3.0 - 3.0 * x * x) / eps1
        J[0, 1] = k / eps1
        J[1, 0] = 1.0
        J[1, 1] = -2.0
        J[1, 2] = 1.0
        J[2, 1] = eps2
        J[2, 2] = -eps2
        return
    if tag == TAG_RESCALED_QUADRATIC:
        J[0, 0] = -2.0 * x
        J[0, 1] = 1.0
    elif tag == TAG_UNSCALED_QUADRATIC:
        J[0, 0] = -2.0 * x / p[4]
        J[0, 1] = 1.0 / p[4]
    elif tag == TAG_RESCALED_CUBIC:
        J[0, 0] = -2.0 * x - 3.0 * math.sqrt(p[4]) * x * x
        J[0, 1] = 1.0
    else:
        J[0, 0] = (-2.0 * x - 3.0 * x * x) / p[4]
        J[0, 1] = 1.0 / p[4]
    J[1, 0] = -1.0
    J[1, 2] = 1.0
    J[2, 0] = -p[1]
    J[2, 1] = -p[2]
    J[2, 2] = -p[3]


@njit(cache=True, nogil=True)
def param_derivative(tag, s, p, ip, out):
    """d(field)/d(p[ip]) at ``s``."""
    x = s[0]
    y = s[1]
    z = s[2]
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    if tag == TAG_KOPER:
        eps1 = p[0]
        if ip == 0:
            out[0] = -(p[2] * y - x * x * x + 3.0 * x - p[3]) / (eps1 * eps1)
        elif ip == 1:
            out[2] = y - z
        elif ip == 2:
            out[0] = y / eps1
        else:
            out[0] = -1.0 / eps1
        return
    if ip == 0:
        out[2] = -1.0
    elif ip == 1:
        out[2] = -x
    elif ip == 2:
        out[2] = -y
    elif ip == 3:
        out[2] = -z
    else:
        eps = p[4]
        if tag == TAG_UNSCALED_QUADRATIC:
            out[0] = -(y - x * x) / (eps * eps)
        elif tag == TAG_RESCALED_CUBIC:
            out[0] = -0.5 * x * x * x / math.sqrt(eps)
        elif tag == TAG_UNSCALED_CUBIC:
            out[0] = -(y - x * x - x * x * x) / (eps * eps)


@njit(cache=True, nogil=True)
def _rhs(tag, p, nvar, ip, tdir, y, out, J, tmp):
    field(tag, y, p, out)
    if nvar > 0:
        jacobian(tag, y, p, J)
        for i in range(3):
            for j in range(3):
                acc = 0.0
                for k in range(3):
                    acc += J[i, k] * y[3 + 3 * k + j]
                out[3 + 3 * i + j] = acc
        if nvar > 1:
            param_derivative(tag, y, p, ip, tmp)
            for i in range(3):
                acc = tmp[i]
                for k in range(3):
                    acc += J[i, k] * y[12 + k]
                out[12 + i] = acc
    if tdir < 0:
        for i in range(out.shape[0]):
            out[i] = -out[i]


# Dormand-Prince 5(4) tableau
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                           49.0 / 176.0, -5103.0 / 18656.0)
B1, B3, B4, B5, B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                          -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)


@njit(cache=True, nogil=True)
def _dp_step(tag, p, nvar, ip, tdir, y, k1, h, ynew, knew, err, K, ytmp, J, tmp):
    """One DP5(4) step of size ``h``; ``knew`` receives f(ynew) (FSAL)."""
    n = y.shape[0]
    for i in range(n):
        ytmp[i] = y[i] + h * A21 * k1[i]
    _rhs(tag, p, nvar, ip, tdir, ytmp, K[0], J, tmp)
    for i in range(n):
        ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * K[0, i])
    _rhs(tag, p, nvar, ip, tdir, ytmp, K[1], J, tmp)
    for i in range(n):
        ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * K[0, i] + A43 * K[1, i])
    _rhs(tag, p, nvar, ip, tdir, ytmp, K[2], J, tmp)
    for i in range(n):
        ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * K[0, i] + A53 * K[1, i] + A54 * K[2, i])
    _rhs(tag, p, nvar, ip, tdir, ytmp, K[3], J, tmp)
    for i in range(n):
        ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * K[0, i] + A63 * K[1, i]
                              + A64 * K[2, i] + A65 * K[3, i])
    _rhs(tag, p, nvar, ip, tdir, ytmp, K[4], J, tmp)
    for i in range(n):
        ynew[i] = y[i] + h * (B1 * k1[i] + B3 * K[1, i] + B4 * K[2, i]
                              + B5 * K[3, i] + B6 * K[4, i])
    _rhs(tag, p, nvar, ip, tdir, ynew, knew, J, tmp)
    for i in range(n):
        err[i] = h * (E1 * k1[i] + E3 * K[1, i] + E4 * K[2, i] + E5 * K[3, i]
                      + E6 * K[4, i] + E7 * knew[i])


@njit(cache=True, nogil=True)
def _hermite(y0, f0, y1, f1, h, theta, out):
    t2 = theta * theta
    t3 = t2 * theta
    h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    h10 = t3 - 2.0 * t2 + theta
    h01 = -2.0 * t3 + 3.0 * t2
    h11 = t3 - t2
    for i in range(3):
        out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i]


@njit(cache=True, nogil=True)
def _event_value(ev, e, y):
    return (ev[e, EV_NX] * y[0] + ev[e, EV_NY] * y[1] + ev[e, EV_NZ] * y[2]
            + ev[e, EV_QX] * y[0] * y[0] - ev[e, EV_OFFSET])


@njit(cache=True, nogil=True)
def _event_slope(ev, e, y, f):
    return ((ev[e, EV_NX] + 2.0 * ev[e, EV_QX] * y[0]) * f[0]
            + ev[e, EV_NY] * f[1] + ev[e, EV_NZ] * f[2])


@njit(cache=True, nogil=True)
def _triggered(direction, g0, g1):
    if direction > 0:
        return g0 < 0.0 and g1 >= 0.0
    if direction < 0:
        return g0 > 0.0 and g1 <= 0.0
    return (g0 < 0.0 and g1 >= 0.0) or (g0 > 0.0 and g1 <= 0.0)


@njit(cache=True, nogil=True)
def _grow(a, n):
    shape = (2 * a.shape[0] + 16,) + a.shape[1:]
    b = np.empty(shape, dtype=a.dtype)
    b[:n] = a[:n]
    return b


@njit(cache=True, nogil=True)
def run(tag, p, y0, t0, duration, tdir, nvar, ip,
        rtol, atol, h_max, max_steps,
        ev, anchors, t_ignore,
        box_lo, box_hi, watch_lo, watch_hi,
        prox_center, prox_radius, prox_dwell,
        record):
    """Integrate from ``y0`` for ``duration`` time units.

    Returns ``(status, event_id, t, y, nsteps, left_watch, rec_t, rec_y,
    hit_id, hit_t, hit_y)``. Recorded times are ``t0 + tau`` with ``tau``
    the elapsed integration time, regardless of ``tdir``.
    """
    n = y0.shape[0]
    nev = ev.shape[0]
    y = y0.copy()
    ynew = np.empty(n)
    k1 = np.empty(n)
    knew = np.empty(n)
    err = np.empty(n)
    K = np.empty((5, n))
    ytmp = np.empty(n)
    J = np.empty((3, 3))
    tmp = np.empty(3)
    yev = np.empty(n)
    kev = np.empty(n)
    herm = np.empty(3)
    ths = np.empty(max(nev, 1))

    cap = 1024 if record else 1
    rec_t = np.empty(cap)
    rec_y = np.empty((cap, 3))
    nrec = 0
    hcap = 16
    hit_id = np.empty(hcap, dtype=np.int64)
    hit_t = np.empty(hcap)
    hit_y = np.empty((hcap, n))
    nhit = 0
    ev_count = np.zeros(max(nev, 1), dtype=np.int64)
    last_hit = np.full((max(nev, 1), 3), np.nan)

    status = ST_TIMEOUT
    event_id = -1
    left_watch = False
    tau = 0.0
    prox_since = -1.0

    if record:
        rec_t[0] = t0
        for i in range(3):
            rec_y[0, i] = y[i]
        nrec = 1

    _rhs(tag, p, nvar, ip, tdir, y, k1, J, tmp)

    # Hairer's starting step heuristic
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y[i])
        d0 += (y[i] / sc) ** 2
        d1 += (k1[i] / sc) ** 2
    d0 = math.sqrt(d0 / n)
    d1 = math.sqrt(d1 / n)
    h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h = min(h, h_max, duration)

    nsteps = 0
    while tau < duration:
        if nsteps >= max_steps:
            status = ST_MAX_STEPS
            break
        if tau + h > duration:
            h = duration - tau
        _dp_step(tag, p, nvar, ip, tdir, y, k1, h, ynew, knew, err, K, ytmp, J, tmp)
        enorm = 0.0
        finite = True
        for i in range(n):
            if not math.isfinite(ynew[i]):
                finite = False
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            enorm += (err[i] / sc) ** 2
        enorm = math.sqrt(enorm / n)
        if not finite or not math.isfinite(enorm):
            enorm = 1e10
        if enorm > 1.0:
            h *= max(0.2, 0.9 * enorm ** -0.2)
            if h < 1e-14 * max(1.0, abs(tau)):
                status = ST_STEP_UNDERFLOW
                break
            continue
        nsteps += 1

        # events inside (tau, tau + h], handled in time order
        stop = False
        for e in range(nev):
            ths[e] = 2.0
            g0 = _event_value(ev, e, y)
            g1 = _event_value(ev, e, ynew)
            if not _triggered(ev[e, EV_DIR], g0, g1):
                continue
            lo = 0.0
            hi = 1.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                _hermite(y, k1, ynew, knew, h, mid, herm)
                gm = _event_value(ev, e, herm)
                if _triggered(ev[e, EV_DIR], g0, gm) or gm == 0.0:
                    hi = mid
                else:
                    lo = mid
            if tau + hi * h > t_ignore:
                ths[e] = hi
        while not stop:
            e = -1
            best = 2.0
            for j in range(nev):
                if ths[j] < best:
                    best = ths[j]
                    e = j
            if e < 0:
                break
            ths[e] = 2.0
            s_ev = best * h
            for _ in range(8):
                _dp_step(tag, p, nvar, ip, tdir, y, k1, s_ev, yev, kev, err, K, ytmp, J, tmp)
                g = _event_value(ev, e, yev)
                dg = _event_slope(ev, e, yev, kev)
                if dg == 0.0:
                    break
                s_new = min(max(s_ev - g / dg, 0.0), h)
                done = abs(s_new - s_ev) < 1e-10 * abs(tau + s_ev) + 1e-13
                s_ev = s_new
                if done:
                    break
            _dp_step(tag, p, nvar, ip, tdir, y, k1, s_ev, yev, kev, err, K, ytmp, J, tmp)
            if nhit >= hit_t.shape[0]:
                hit_id = _grow(hit_id, nhit)
                hit_t = _grow(hit_t, nhit)
                hit_y = _grow(hit_y, nhit)
            hit_id[nhit] = e
            hit_t[nhit] = t0 + tau + s_ev
            for i in range(n):
                hit_y[nhit, i] = yev[i]
            nhit += 1
            ev_count[e] += 1
            conv = ev[e, EV_CONV]
            if conv > 0.0 and ev_count[e] > 1:
                dist = 0.0
                for i in range(3):
                    dist += (yev[i] - last_hit[e, i]) ** 2
                if math.sqrt(dist) < conv:
                    stop = True
                    status = ST_CONVERGED
                    event_id = e
            if anchors[e, 3] > 0.0:
                dist = 0.0
                for i in range(3):
                    dist += (yev[i] - anchors[e, i]) ** 2
                if math.sqrt(dist) < anchors[e, 3]:
                    stop = True
                    status = ST_CONVERGED
                    event_id = e
            for i in range(3):
                last_hit[e, i] = yev[i]
            term = ev[e, EV_TERMINAL]
            if not stop and term > 0 and ev_count[e] >= term:
                stop = True
                status = ST_EVENT
                event_id = e
            if stop:
                for i in range(n):
                    y[i] = yev[i]
                tau = tau + s_ev
        if stop:
            if record:
                if nrec >= rec_t.shape[0]:
                    rec_t = _grow(rec_t, nrec)
                    rec_y = _grow(rec_y, nrec)
                rec_t[nrec] = t0 + tau
                for i in range(3):
                    rec_y[nrec, i] = y[i]
                nrec += 1
            break

        tau += h
        for i in range(n):
            y[i] = ynew[i]
            k1[i] = knew[i]
        if record:
            if nrec >= rec_t.shape[0]:
                rec_t = _grow(rec_t, nrec)
                rec_y = _grow(rec_y, nrec)
            rec_t[nrec] = t0 + tau
            for i in range(3):
                rec_y[nrec, i] = y[i]
            nrec += 1

        outside = False
        for i in range(3):
            if y[i] < box_lo[i] or y[i] > box_hi[i]:
                outside = True
            if y[i] < watch_lo[i] or y[i] > watch_hi[i]:
                left_watch = True
        if outside:
            status = ST_ESCAPED
            break
        if prox_radius > 0.0:
            dist = 0.0
            for i in range(3):
                dist += (y[i] - prox_center[i]) ** 2
            if math.sqrt(dist) < prox_radius:
                if prox_since < 0.0:
                    prox_since = tau
                if tau - prox_since >= prox_dwell:
                    status = ST_CONVERGED
                    break
            else:
                prox_since = -1.0

        fac = 5.0 if enorm == 0.0 else min(5.0, max(0.2, 0.9 * enorm ** -0.2))
        h = min(h * fac, h_max)

    return (status, event_id, t0 + tau, y, nsteps, left_watch,
            rec_t[:nrec].copy(), rec_y[:nrec].copy(),
            hit_id[:nhit].copy(), hit_t[:nhit].copy(), hit_y[:nhit].copy())
