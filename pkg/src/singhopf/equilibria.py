"""Equilibria, their spectra and the analytic local bifurcation loci."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import (DegenerateContinuum, NoEquilibrium, NoSaddleNode, NotFound,
                     PreconditionError)
from .models import ModelId, ParameterSet, State, eval_field, field_derivatives, jacobian


class EquilibriumClass(str, enum.Enum):
    STABLE_NODE = "StableNode"
    STABLE_FOCUS = "StableFocus"
    SADDLE_FOCUS_1U = "SaddleFocus1U"
    SADDLE_FOCUS_2U = "SaddleFocus2U"
    SADDLE = "Saddle"
    UNSTABLE_NODE = "UnstableNode"
    UNSTABLE_FOCUS = "UnstableFocus"
    DEGENERATE = "Degenerate"


class Criticality(str, enum.Enum):
    SUPERCRITICAL = "Supercritical"
    SUBCRITICAL = "Subcritical"
    DEGENERATE = "Degenerate"


@dataclass
class EquilibriumReport:
    location: State
    eigenvalues: np.ndarray
    cls: EquilibriumClass
    is_E_f: bool = False

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.location)

    def to_dict(self) -> dict:
        return {
            "location": [self.location.x, self.location.y, self.location.z],
            "eigenvalues": [[float(l.real), float(l.imag)] for l in self.eigenvalues],
            "class": self.cls.value,
            "is_E_f": self.is_E_f,
        }


@dataclass
class HopfReport:
    mu_star: float
    location: State
    omega: float
    l1: float
    criticality: Criticality
    seed: float = float("nan")

    def to_dict(self) -> dict:
        return {"mu": self.mu_star, "location": [self.location.x, self.location.y, self.location.z],
                "omega": self.omega, "l1": self.l1, "criticality": self.criticality.value}


# -- spectra -------------------------------------------------------------------

def char_poly(J: np.ndarray) -> tuple[float, float, float]:
    """Coefficients (c2, c1, c0) of det(lambda I - J) = l^3 + c2 l^2 + c1 l + c0."""
    c2 = -np.trace(J)
    c1 = (J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
          + J[0, 0] * J[2, 2] - J[0, 2] * J[2, 0]
          + J[1, 1] * J[2, 2] - J[1, 2] * J[2, 1])
    c0 = -np.linalg.det(J)
    return float(c2), float(c1), float(c0)


def cubic_roots(c2: float, c1: float, c0: float) -> np.ndarray:
    """Roots of l^3 + c2 l^2 + c1 l + c0 via the companion matrix.

    Each root gets Newton polishing on the polynomial; results are sorted by
    real part, largest first.
    """
    comp = np.array([[-c2, -c1, -c0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    roots = np.linalg.eigvals(comp).astype(complex)
    out = []
    poly = lambda r: ((r + c2) * r + c1) * r + c0  # noqa: E731
    for r in roots:
        for _ in range(3):
            f = poly(r)
            df = (3 * r + 2 * c2) * r + c1
            if df == 0:
                break
            with np.errstate(over="ignore", invalid="ignore"):
                step = f / df
            cand = r - step
            # near multiple roots df is tiny and the step can run away or hop roots
            if (not np.isfinite(cand) or abs(step) > 1e-6 * (1.0 + abs(r))
                    or abs(poly(cand)) >= abs(f)):
                break
            r = cand
            if abs(step) <= 1e-16 * max(1.0, abs(r)):
                break
        out.append(r)
    out = np.array(out)
    # tidy conjugate pairs so they are exact conjugates
    if np.any(np.abs(out.imag) > 0):
        re_idx = int(np.argmin(np.abs(out.imag)))
        pair = [i for i in range(3) if i != re_idx]
        if abs(out[pair[0]].imag) > 1e-14 * max(1.0, abs(out[pair[0]])):
            m = 0.5 * (out[pair[0]] + np.conj(out[pair[1]]))
            out[pair[0]], out[pair[1]] = m, np.conj(m)
            out[re_idx] = complex(out[re_idx].real, 0.0)
    order = np.lexsort((-out.imag, -out.real))
    return out[order]


def eigenvalues_at(p, e, model=ModelId.RESCALED_QUADRATIC, residual_tol: float = 1e-8) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    res = np.linalg.norm(eval_field(model, e, p))
    if res > residual_tol:
        raise PreconditionError(f"not an equilibrium: field residual {res:.3g}")
    return cubic_roots(*char_poly(jacobian(model, e, p)))


def classify(eigs: np.ndarray, tol: float = 1e-12) -> EquilibriumClass:
    re = eigs.real
    scale = max(1.0, float(np.max(np.abs(eigs))))
    if np.any(np.abs(re) <= tol * scale):
        return EquilibriumClass.DEGENERATE
    complex_mask = np.abs(eigs.imag) > tol * scale
    n_unst = int(np.sum(re > 0))
    if n_unst == 0:
        return EquilibriumClass.STABLE_FOCUS if complex_mask.any() else EquilibriumClass.STABLE_NODE
    if n_unst == 3:
        return EquilibriumClass.UNSTABLE_FOCUS if complex_mask.any() else EquilibriumClass.UNSTABLE_NODE
    if not complex_mask.any():
        return EquilibriumClass.SADDLE
    pair_unstable = bool(np.all(re[complex_mask] > 0))
    if n_unst == 2 and pair_unstable:
        return EquilibriumClass.SADDLE_FOCUS_2U
    if n_unst == 1 and not pair_unstable:
        return EquilibriumClass.SADDLE_FOCUS_1U
    return EquilibriumClass.SADDLE


# -- equilibria of the rescaled quadratic form ---------------------------------

def equilibrium_xs(mu: float, A: float, B: float, C: float) -> list[float]:
    """Roots of B X^2 + (A + C) X + mu = 0, ascending."""
    s = A + C
    if B == 0.0:
        if s == 0.0:
            if mu == 0.0:
                raise DegenerateContinuum("B = A + C = mu = 0: every point of Y=X^2, Z=X is fixed")
            raise NoEquilibrium("B = A + C = 0 with mu != 0")
        return [-mu / s]
    disc = s * s - 4.0 * B * mu
    if disc < 0:
        return []
    sq = math.sqrt(disc)
    # cancellation-free quadratic formula
    q = -0.5 * (s + math.copysign(sq, s)) if s != 0 else -0.5 * sq
    if q == 0.0:
        return [0.0, 0.0]
    roots = sorted([q / B, mu / q])
    return roots


def ef_x(mu: float, A: float, B: float, C: float) -> float | None:
    """X coordinate of E_f (the root of smaller magnitude), or None."""
    try:
        xs = equilibrium_xs(mu, A, B, C)
    except (NoEquilibrium, DegenerateContinuum):
        return None
    if not xs:
        return None
    return min(xs, key=abs)


def find_equilibria(p: ParameterSet) -> list[EquilibriumReport]:
    xs = equilibrium_xs(p.mu, p.a_cap, p.b_cap, p.c_cap)
    if not xs:
        return []
    ef = min(range(len(xs)), key=lambda i: abs(xs[i]))
    out = []
    for i, x in enumerate(xs):
        loc = State(x, x * x, x)
        eigs = cubic_roots(*char_poly(jacobian(ModelId.RESCALED_QUADRATIC, loc, p)))
        out.append(EquilibriumReport(loc, eigs, classify(eigs), is_E_f=(i == ef)))
    return out


def e_f(p: ParameterSet) -> EquilibriumReport:
    for rep in find_equilibria(p):
        if rep.is_E_f:
            return rep
    raise NoEquilibrium(f"no equilibrium at {p}")


# -- analytic loci -------------------------------------------------------------

def saddle_node_locus(A: float, B: float, C: float) -> tuple[float, float]:
    """(mu_SN, X_SN) where the equilibrium quadratic has a double root.

    The double root is X = -(A + C) / (2B); the sign differs from a formula
    sometimes quoted without the minus sign.
    """
    if B == 0.0:
        raise NoSaddleNode("B = 0: the equilibrium equation is linear")
    mu = (A + C) ** 2 / (4.0 * B)
    return mu, -(A + C) / (2.0 * B)


def hopf_condition(mu: float, A: float, B: float, C: float) -> float | None:
    """Routh-Hurwitz function c2 c1 - c0 at E_f; zero at Hopf points."""
    x = ef_x(mu, A, B, C)
    if x is None:
        return None
    c2 = 2.0 * x + C
    c1 = 1.0 + 2.0 * x * C + B
    c0 = 2.0 * x * B + A + C
    return c2 * c1 - c0


def hopf_seed(A: float, C: float) -> float:
    return -A * A / 2.0 - A * C / 2.0


def hopf_locus(A: float, B: float, C: float, *, with_l1: bool = True) -> HopfReport:
    """Singular Hopf point on the E_f branch for fixed (A, B, C)."""
    seed = hopf_seed(A, C)
    width = 10.0 * abs(seed) + 1e-3
    for attempt in range(4):
        lo, hi = seed - width, seed + width
        grid = np.linspace(lo, hi, 401)
        vals = [hopf_condition(m, A, B, C) for m in grid]
        candidates = []
        for i in range(len(grid) - 1):
            v0, v1 = vals[i], vals[i + 1]
            if v0 is None or v1 is None:
                continue
            if v0 == 0.0:
                candidates.append((grid[i], grid[i]))
            elif v0 * v1 < 0:
                candidates.append((grid[i], grid[i + 1]))
        roots = []
        for a, b in candidates:
            mu = a if a == b else brentq(lambda m: hopf_condition(m, A, B, C), a, b,
                                         xtol=1e-16, rtol=1e-15, maxiter=200)
            x = ef_x(mu, A, B, C)
            c1 = 1.0 + 2.0 * x * C + B
            if c1 > 0:
                roots.append(mu)
        if roots:
            mu = min(roots, key=lambda m: abs(m - seed))
            return _hopf_report(mu, A, B, C, seed, with_l1)
        # at a zero-Hopf point the Hopf root sits on the end of the E_f branch
        if B != 0.0:
            mu_sn = (A + C) ** 2 / (4.0 * B)
            v = hopf_condition(mu_sn, A, B, C)
            x_sn = -(A + C) / (2.0 * B)
            if (lo <= mu_sn <= hi and v is not None and abs(v) < 1e-12
                    and 1.0 + 2.0 * x_sn * C + B > 0):
                return _hopf_report(mu_sn, A, B, C, seed, with_l1)
        width *= 4.0
    raise NotFound(f"no Hopf point on the E_f branch near mu={seed:.6g} for A={A}, B={B}, C={C}")


def _hopf_report(mu, A, B, C, seed, with_l1) -> HopfReport:
    x = ef_x(mu, A, B, C)
    loc = State(x, x * x, x)
    omega = math.sqrt(1.0 + 2.0 * x * C + B)
    p = ParameterSet(mu, A, B, C)
    if with_l1:
        l1 = first_lyapunov(p, loc, check=False)
        crit = (Criticality.SUPERCRITICAL if l1 < 0 else
                Criticality.SUBCRITICAL if l1 > 0 else Criticality.DEGENERATE)
    else:
        l1, crit = float("nan"), Criticality.DEGENERATE
    return HopfReport(mu, loc, omega, l1, crit, seed)


def hopf_mu_closed_form(A: float, B: float, C: float) -> list[float]:
    """Hopf parameters from the quadratic 4C X^2 + 2(1 + C^2) X + CB - A = 0.

    Eliminating mu from the equilibrium and Routh-Hurwitz equations; used as
    an independent check of :func:`hopf_locus`.
    """
    a2, a1, a0 = 4.0 * C, 2.0 * (1.0 + C * C), C * B - A
    xs = [-a0 / a1] if a2 == 0 else [r.real for r in np.roots([a2, a1, a0]) if abs(r.imag) < 1e-14]
    return [-B * x * x - (A + C) * x for x in xs if 1.0 + 2.0 * x * C + B > 0]


def zero_hopf_A(B: float, C: float) -> float:
    return C * (B - 1.0)


def zero_hopf_check(B: float, C: float) -> np.ndarray:
    """Spectrum at the saddle-node point for A = C(B - 1): {0, +-i omega}."""
    A = zero_hopf_A(B, C)
    mu, x = saddle_node_locus(A, B, C)
    p = ParameterSet(mu, A, B, C)
    return cubic_roots(*char_poly(jacobian(ModelId.RESCALED_QUADRATIC, State(x, x * x, x), p)))


@dataclass
class GeneralizedHopf:
    approx_a: float
    a_cap: float
    mu: float
    polished: bool


def gh_approx_roots(B: float, C: float) -> list[float]:
    """Real roots of A^2 + A C + 2B = 0 (none when C^2 < 8B)."""
    disc = C * C - 8.0 * B
    if disc < 0:
        return []
    if disc == 0:
        return [-C / 2.0]
    sq = math.sqrt(disc)
    return sorted([(-C - sq) / 2.0, (-C + sq) / 2.0])


def hopf_l1(A: float, B: float, C: float) -> float:
    return hopf_locus(A, B, C).l1


def generalized_hopf_A(B: float, C: float, polish: bool = True) -> list[GeneralizedHopf]:
    """Generalized Hopf points on the Hopf curve of the (mu, A) slice."""
    out = []
    approx = gh_approx_roots(B, C)
    for a0 in approx:
        rec = GeneralizedHopf(a0, a0, float("nan"), False)
        if polish and len(approx) == 2:
            half = 0.5 * abs(approx[1] - approx[0])
            width = min(0.25 * half + 1e-4, 0.02)
            try:
                lo, hi = a0 - width, a0 + width
                f_lo, f_hi = hopf_l1(lo, B, C), hopf_l1(hi, B, C)
                k = 0
                while f_lo * f_hi > 0 and k < 4:
                    width *= 1.5
                    lo, hi = a0 - min(width, half * 0.95), a0 + width
                    f_lo, f_hi = hopf_l1(lo, B, C), hopf_l1(hi, B, C)
                    k += 1
                if f_lo * f_hi <= 0:
                    a = brentq(lambda a: hopf_l1(a, B, C), lo, hi, xtol=1e-14, rtol=1e-14)
                    rec = GeneralizedHopf(a0, a, hopf_locus(a, B, C, with_l1=False).mu_star, True)
            except NotFound:
                pass
        if not rec.polished:
            try:
                rec.mu = hopf_locus(rec.a_cap, B, C, with_l1=False).mu_star
            except NotFound:
                pass
        out.append(rec)
    return out


# -- first Lyapunov coefficient -------------------------------------------------

def first_lyapunov(p, e, model=ModelId.RESCALED_QUADRATIC, check: bool = True,
                   imag_tol: float = 1e-8) -> float:
    """First Lyapunov coefficient at a Hopf equilibrium.

    Center-manifold projection with complex eigenvectors A q = i w q,
    A^T p = -i w p normalized by <p, q> = 1 and |q| = 1. Negative values mean
    a supercritical bifurcation.
    """
    e = np.asarray(e, dtype=float)
    Jm = jacobian(model, e, p)
    eigs, vecs = np.linalg.eig(Jm)
    idx = int(np.argmax(eigs.imag))
    lam = eigs[idx]
    if lam.imag <= 0 or (check and abs(lam.real) > imag_tol):
        raise PreconditionError(f"no purely imaginary pair: {eigs}")
    omega = float(lam.imag)
    q = vecs[:, idx]
    q = q / np.linalg.norm(q)
    eigs_t, vecs_t = np.linalg.eig(Jm.T)
    jdx = int(np.argmin(np.abs(eigs_t - np.conj(lam))))
    pv = vecs_t[:, jdx]
    pv = pv / np.conj(np.vdot(pv, q))
    H, T = field_derivatives(model, e, p)

    def Bf(u, v):
        return np.einsum("ijk,j,k->i", H, u, v)

    def Cf(u, v, w):
        return np.einsum("ijkl,j,k,l->i", T, u, v, w)

    qc = np.conj(q)
    a = Cf(q, q, qc)
    b = Bf(q, np.linalg.solve(Jm, Bf(q, qc)))
    c = Bf(qc, np.linalg.solve(2j * omega * np.eye(3) - Jm, Bf(q, q)))
    val = np.vdot(pv, a) - 2.0 * np.vdot(pv, b) + np.vdot(pv, c)
    return float(val.real / (2.0 * omega))


def hopf_curve(B: float, C: float, a_grid) -> list[tuple[float, float]]:
    """(A, mu*) samples of the Hopf curve; A values without a Hopf point are skipped."""
    out = []
    for A in a_grid:
        try:
            out.append((float(A), hopf_locus(float(A), B, C, with_l1=False).mu_star))
        except NotFound:
            continue
    return out
