"""Vector fields of the singular Hopf normal forms and the Koper model.

Five three-dimensional models are supported:

* ``rescaled_quadratic``  X' = Y - X^2,  Y' = Z - X,  Z' = -mu - A X - B Y - C Z
* ``unscaled_quadratic``  same with eps x' = y - x^2 and lower-case parameters
* ``rescaled_cubic``      X' = Y - X^2 - sqrt(eps) X^3
* ``unscaled_cubic``      eps x' = y - x^2 - x^3
* ``koper``               eps1 x' = k y - x^3 + 3x - lambda,
                          y' = x - 2y + z,  z' = eps2 (y - z)

plus the two-dimensional desingularized slow flow of the quadratic form.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Union

import numpy as np

from . import _kernels as K
from .errors import DomainError, ParameterMismatchError


class ModelId(str, enum.Enum):
    RESCALED_QUADRATIC = "rescaled_quadratic"
    UNSCALED_QUADRATIC = "unscaled_quadratic"
    RESCALED_CUBIC = "rescaled_cubic"
    UNSCALED_CUBIC = "unscaled_cubic"
    KOPER = "koper"

    @property
    def tag(self) -> int:
        return _TAGS[self]

    @property
    def dim(self) -> int:
        return 3


_TAGS = {
    ModelId.RESCALED_QUADRATIC: K.TAG_RESCALED_QUADRATIC,
    ModelId.UNSCALED_QUADRATIC: K.TAG_UNSCALED_QUADRATIC,
    ModelId.RESCALED_CUBIC: K.TAG_RESCALED_CUBIC,
    ModelId.UNSCALED_CUBIC: K.TAG_UNSCALED_CUBIC,
    ModelId.KOPER: K.TAG_KOPER,
}

DEFAULT_CUBIC_EPS = 0.01


@dataclass(frozen=True)
class ParameterSet:
    """Parameters (mu, A, B, C) of the rescaled normal form.

    ``eps`` is only read by the rescaled cubic model, where it multiplies the
    X^3 term through sqrt(eps).
    """

    mu: float
    a_cap: float
    b_cap: float
    c_cap: float
    eps: float = DEFAULT_CUBIC_EPS

    def __post_init__(self):
        vals = (self.mu, self.a_cap, self.b_cap, self.c_cap, self.eps)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"non-finite parameter in {self}")

    def with_mu(self, mu: float) -> "ParameterSet":
        return replace(self, mu=float(mu))

    def with_a(self, a_cap: float) -> "ParameterSet":
        return replace(self, a_cap=float(a_cap))


@dataclass(frozen=True)
class UnscaledParameterSet:
    """Parameters (mu, a, b, c, eps) of the original slow-fast normal form."""

    mu: float
    a: float
    b: float
    c: float
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError(f"eps must be positive, got {self.eps}")


@dataclass(frozen=True)
class KoperParameters:
    eps1: float = 0.1
    eps2: float = 1.0
    k: float = -10.0
    lam: float = 0.0

    def __post_init__(self):
        if not (self.eps1 > 0 and self.eps2 > 0):
            raise DomainError("Koper eps1 and eps2 must be positive")

    def with_lambda(self, lam: float) -> "KoperParameters":
        return replace(self, lam=float(lam))


Parameters = Union[ParameterSet, UnscaledParameterSet, KoperParameters]


@dataclass(frozen=True)
class State:
    x: float
    y: float
    z: float

    def __array__(self, dtype=None, copy=None):
        return np.array([self.x, self.y, self.z], dtype=dtype or float)

    @classmethod
    def from_array(cls, v) -> "State":
        return cls(float(v[0]), float(v[1]), float(v[2]))


@dataclass(frozen=True)
class SlowState:
    x: float
    z: float


# index of the continuation parameter inside the flat kernel vector
PARAM_INDEX = {
    "mu": 0, "a_cap": 1, "b_cap": 2, "c_cap": 3, "eps": 4,
    "a": 1, "b": 2, "c": 3,
    "eps1": 0, "eps2": 1, "k": 2, "lam": 3,
}


def as_model(model) -> ModelId:
    if isinstance(model, ModelId):
        return model
    try:
        return ModelId(str(model).lower())
    except ValueError:
        raise ParameterMismatchError(f"unknown model {model!r}") from None


def param_vector(model, p: Parameters) -> np.ndarray:
    """Flatten ``p`` into the kernel parameter vector for ``model``.

    Raises :class:`ParameterMismatchError` when the parameter kind does not
    belong to the model.
    """
    model = as_model(model)
    if model in (ModelId.RESCALED_QUADRATIC, ModelId.RESCALED_CUBIC):
        if not isinstance(p, ParameterSet):
            raise ParameterMismatchError(f"{model.value} needs a ParameterSet, got {type(p).__name__}")
        return np.array([p.mu, p.a_cap, p.b_cap, p.c_cap, p.eps], dtype=float)
    if model in (ModelId.UNSCALED_QUADRATIC, ModelId.UNSCALED_CUBIC):
        if not isinstance(p, UnscaledParameterSet):
            raise ParameterMismatchError(
                f"{model.value} needs an UnscaledParameterSet, got {type(p).__name__}")
        return np.array([p.mu, p.a, p.b, p.c, p.eps], dtype=float)
    if not isinstance(p, KoperParameters):
        raise ParameterMismatchError(f"koper needs KoperParameters, got {type(p).__name__}")
    return np.array([p.eps1, p.eps2, p.k, p.lam], dtype=float)


def eval_field(model, s, p: Parameters) -> np.ndarray:
    """Right-hand side of ``model`` at state ``s``."""
    model = as_model(model)
    out = np.empty(3)
    K.field(model.tag, np.asarray(s, dtype=float), param_vector(model, p), out)
    return out


def jacobian(model, s, p: Parameters) -> np.ndarray:
    model = as_model(model)
    J = np.empty((3, 3))
    K.jacobian(model.tag, np.asarray(s, dtype=float), param_vector(model, p), J)
    return J


def field_derivatives(model, s, p: Parameters):
    """Second and third derivative tensors of the field at ``s``.

    Returns ``(H, T)`` with ``H[i, j, k] = d2 f_i / dx_j dx_k`` and
    ``T[i, j, k, l]`` the third derivatives. Only the first (fast) component
    is nonlinear in every model, and only through X.
    """
    model = as_model(model)
    pv = param_vector(model, p)
    x = float(np.asarray(s, dtype=float)[0])
    H = np.zeros((3, 3, 3))
    T = np.zeros((3, 3, 3, 3))
    if model is ModelId.RESCALED_QUADRATIC:
        H[0, 0, 0] = -2.0
    elif model is ModelId.UNSCALED_QUADRATIC:
        H[0, 0, 0] = -2.0 / pv[4]
    elif model is ModelId.RESCALED_CUBIC:
        r = math.sqrt(pv[4])
        H[0, 0, 0] = -2.0 - 6.0 * r * x
        T[0, 0, 0, 0] = -6.0 * r
    elif model is ModelId.UNSCALED_CUBIC:
        H[0, 0, 0] = (-2.0 - 6.0 * x) / pv[4]
        T[0, 0, 0, 0] = -6.0 / pv[4]
    else:
        H[0, 0, 0] = -6.0 * x / pv[0]
        T[0, 0, 0, 0] = -6.0 / pv[0]
    return H, T


def param_derivative(model, s, p: Parameters, name: str) -> np.ndarray:
    model = as_model(model)
    out = np.empty(3)
    K.param_derivative(model.tag, np.asarray(s, dtype=float), param_vector(model, p),
                       PARAM_INDEX[name], out)
    return out


# -- scaling between the unscaled and rescaled forms -------------------------

@dataclass(frozen=True)
class Rescaling:
    params: ParameterSet
    time_factor: float  # T = time_factor * t


def rescale_to_capital(p: UnscaledParameterSet) -> Rescaling:
    """(A, B, C) = (sqrt(eps) a, eps b, sqrt(eps) c); time dilates by eps^-1/2."""
    if not p.eps > 0:
        raise DomainError("eps must be positive")
    r = math.sqrt(p.eps)
    return Rescaling(ParameterSet(p.mu, r * p.a, p.eps * p.b, r * p.c, eps=p.eps), 1.0 / r)


def rescale_to_lower(p: ParameterSet, eps: float) -> UnscaledParameterSet:
    if not eps > 0:
        raise DomainError("eps must be positive")
    r = math.sqrt(eps)
    return UnscaledParameterSet(p.mu, p.a_cap / r, p.b_cap / eps, p.c_cap / r, eps)


def state_map(s, eps: float, direction: str = "to_rescaled") -> np.ndarray:
    """Map (x, y, z) <-> (X, Y, Z) = (eps^-1/2 x, eps^-1 y, eps^-1/2 z)."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    v = np.asarray(s, dtype=float)
    r = math.sqrt(eps)
    if direction == "to_rescaled":
        scale = np.array([1.0 / r, 1.0 / eps, 1.0 / r])
    elif direction == "to_unscaled":
        scale = np.array([r, eps, r])
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return v * scale


def reflect_parameters(p: ParameterSet) -> ParameterSet:
    """Partner parameters under the time-reversing reflection.

    The flow of (mu, A, B, C) run backwards equals, after the state map
    :func:`reflect_state`, the forward flow of (mu, -A, B, -C).
    """
    return replace(p, a_cap=-p.a_cap, c_cap=-p.c_cap)


def reflect_state(s) -> np.ndarray:
    v = np.asarray(s, dtype=float)
    return np.array([-v[0], v[1], -v[2]])


# -- critical manifolds -----------------------------------------------------

class SheetStability(str, enum.Enum):
    ATTRACTING = "attracting"
    REPELLING = "repelling"
    FOLD = "fold"


@dataclass(frozen=True)
class CriticalPoint:
    y: float
    stability: SheetStability
    dfdx: float


def critical_manifold(model, x: float, p: Parameters | None = None,
                      fold_tol: float = 1e-12) -> CriticalPoint:
    """Slow-variable value on the critical manifold above fast coordinate ``x``.

    For the Koper model ``y`` solves k y = x^3 - 3x + lambda. Sheet stability
    is the sign of the derivative of the fast equation in x.
    """
    model = as_model(model)
    x = float(x)
    if model in (ModelId.RESCALED_QUADRATIC, ModelId.UNSCALED_QUADRATIC):
        y, dfdx = x * x, -2.0 * x
    elif model is ModelId.RESCALED_CUBIC:
        eps = p.eps if p is not None else DEFAULT_CUBIC_EPS
        r = math.sqrt(eps)
        y, dfdx = x * x + r * x ** 3, -2.0 * x - 3.0 * r * x * x
    elif model is ModelId.UNSCALED_CUBIC:
        y, dfdx = x * x + x ** 3, -2.0 * x - 3.0 * x * x
    else:
        kp = p if p is not None else KoperParameters()
        y = (x ** 3 - 3.0 * x + kp.lam) / kp.k
        dfdx = 3.0 - 3.0 * x * x
    if abs(dfdx) <= fold_tol:
        stab = SheetStability.FOLD
    else:
        stab = SheetStability.ATTRACTING if dfdx < 0 else SheetStability.REPELLING
    return CriticalPoint(y, stab, dfdx)


def fold_points(model, p: Parameters | None = None) -> list[float]:
    """Fast-coordinate values of the folds of the critical manifold."""
    model = as_model(model)
    if model in (ModelId.RESCALED_QUADRATIC, ModelId.UNSCALED_QUADRATIC):
        return [0.0]
    if model is ModelId.RESCALED_CUBIC:
        eps = p.eps if p is not None else DEFAULT_CUBIC_EPS
        return sorted([0.0, -2.0 / (3.0 * math.sqrt(eps))])
    if model is ModelId.UNSCALED_CUBIC:
        return [-2.0 / 3.0, 0.0]
    return [-1.0, 1.0]


# -- desingularized slow flow ----------------------------------------------

def eval_slow_flow(s, p: UnscaledParameterSet, desingularized: bool = True) -> np.ndarray:
    """Slow flow of the quadratic normal form on the critical manifold.

    The desingularized form is x' = z - x, z' = -2x (mu + a x + b x^2 + c z).
    With ``desingularized=False`` the field is divided by -2x, recovering the
    reduced flow in its original time (undefined on the fold x = 0).
    """
    if isinstance(s, SlowState):
        x, z = s.x, s.z
    else:
        x, z = float(s[0]), float(s[1])
    dx = z - x
    dz = -2.0 * x * (p.mu + p.a * x + p.b * x * x + p.c * z)
    if desingularized:
        return np.array([dx, dz])
    if x == 0.0:
        raise DomainError("reduced flow is singular on the fold x = 0")
    return np.array([dx, dz]) / (-2.0 * x)


# -- JSON run configuration ----------------------------------------------------

_PARAM_KEYS = {
    ModelId.RESCALED_QUADRATIC: ("mu", "A", "B", "C"),
    ModelId.RESCALED_CUBIC: ("mu", "A", "B", "C", "eps"),
    ModelId.UNSCALED_QUADRATIC: ("mu", "a", "b", "c", "eps"),
    ModelId.UNSCALED_CUBIC: ("mu", "a", "b", "c", "eps"),
    ModelId.KOPER: ("eps1", "eps2", "k", "lambda"),
}


def params_to_dict(model, p: Parameters) -> dict:
    model = as_model(model)
    vec = param_vector(model, p)
    keys = _PARAM_KEYS[model]
    if model is ModelId.RESCALED_QUADRATIC:
        vec = vec[:4]
    return {k: float(v) for k, v in zip(keys, vec)}


def params_from_dict(model, d: dict) -> Parameters:
    model = as_model(model)
    keys = _PARAM_KEYS[model]
    unknown = set(d) - set(keys)
    if unknown:
        raise ParameterMismatchError(f"unknown parameter key(s) for {model.value}: {sorted(unknown)}")
    required = set(keys) - ({"eps"} if model is ModelId.RESCALED_CUBIC else set())
    missing = required - set(d)
    if missing:
        raise ParameterMismatchError(f"missing parameter key(s) for {model.value}: {sorted(missing)}")
    v = {k: float(d[k]) for k in d}
    if model is ModelId.RESCALED_QUADRATIC:
        return ParameterSet(v["mu"], v["A"], v["B"], v["C"])
    if model is ModelId.RESCALED_CUBIC:
        return ParameterSet(v["mu"], v["A"], v["B"], v["C"], eps=v.get("eps", DEFAULT_CUBIC_EPS))
    if model is ModelId.KOPER:
        return KoperParameters(v["eps1"], v["eps2"], v["k"], v["lambda"])
    return UnscaledParameterSet(v["mu"], v["a"], v["b"], v["c"], v["eps"])


@dataclass
class ModelConfig:
    model: ModelId
    params: Parameters
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"model": self.model.value,
                           "params": params_to_dict(self.model, self.params)}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        d = json.loads(text)
        unknown = set(d) - {"model", "params"}
        if unknown:
            raise ParameterMismatchError(f"unknown key(s): {sorted(unknown)}")
        model = as_model(d["model"])
        return cls(model, params_from_dict(model, d["params"]))


def to_dict(obj) -> dict:
    return asdict(obj)
