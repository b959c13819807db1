"""Coefficient contract for interacting particle models and the built-in catalog.

Evaluator convention
--------------------
Every coefficient function has the signature ``f(theta_part, x, cloud)``:

* ``cloud`` holds the particle positions defining the empirical measure,
  shape ``(N,)`` for one time or ``(N, m)`` for ``m`` times (one measure per
  column);
* ``x`` holds the points where the coefficient is evaluated, shape ``(K,)`` or
  ``(K, m)`` with the same column layout as ``cloud``;
* the result has ``x.shape``. Gradients prepend the parameter axis.

Coefficients only see the cloud, so they depend on the particles through the
empirical measure alone.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .errors import AssumptionViolation, ModelEvaluationError
from .measure import ParticleState

Evaluator = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

CLOSED_FORM_KINDS = ("none", "linear_model", "multiplicative_theta2")


@dataclass(frozen=True)
class ThetaVector:
    theta1: np.ndarray
    theta2: np.ndarray

    def __post_init__(self):
        t1 = np.atleast_1d(np.asarray(self.theta1, dtype=float))
        t2 = np.atleast_1d(np.asarray(self.theta2, dtype=float))
        if t1.ndim != 1 or t2.ndim != 1 or t1.size < 1 or t2.size < 1:
            raise ValueError("theta1 and theta2 must be non-empty vectors")
        object.__setattr__(self, "theta1", t1)
        object.__setattr__(self, "theta2", t2)

    @classmethod
    def from_flat(cls, values, p1: int) -> "ThetaVector":
        v = np.asarray(values, dtype=float).ravel()
        return cls(v[:p1], v[p1:])

    @property
    def p1(self) -> int:
        return self.theta1.size

    @property
    def p2(self) -> int:
        return self.theta2.size

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.theta1, self.theta2])

    def tolist(self) -> list:
        return self.flat.tolist()


@dataclass(frozen=True)
class ParamBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise ValueError("box bounds differ in length")
        if not np.all(lo < hi):
            bad = np.flatnonzero(~(lo < hi)).tolist()
            raise ValueError(f"box needs lower < upper; violated at components {bad}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, theta) -> bool:
        v = theta.flat if isinstance(theta, ThetaVector) else np.asarray(theta, dtype=float)
        return bool(np.all(v >= self.lower) and np.all(v <= self.upper))

    def clip(self, values) -> np.ndarray:
        return np.clip(np.asarray(values, dtype=float), self.lower, self.upper)

    def sub(self, start: int, stop: int) -> "ParamBox":
        return ParamBox(self.lower[start:stop], self.upper[start:stop])


@dataclass(frozen=True)
class KernelDiffusionSpec:
    """Diffusion written as ``a_tilde(x, mean_j K(x, X_j))``."""

    a_tilde: Callable[[np.ndarray, np.ndarray], np.ndarray]
    kernel_K: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def evaluate(self, x, particles) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        cloud = np.asarray(particles, dtype=float)
        conv = np.array([np.mean(self.kernel_K(xi, cloud)) for xi in np.atleast_1d(x)])
        return np.asarray(self.a_tilde(np.atleast_1d(x), conv), dtype=float).reshape(x.shape)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    p1: int
    p2: int
    drift: Evaluator
    diffusion: Evaluator
    grad_drift_theta1: Optional[Evaluator] = None
    grad_diffusion_theta2: Optional[Evaluator] = None
    closed_form: str = "none"
    # c0(x, cloud) with c = theta2 * c0, for multiplicative_theta2 models
    base_variance: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    kernel_diffusion: Optional[Callable[[np.ndarray], KernelDiffusionSpec]] = None
    default_box: Optional[ParamBox] = None
    # flat indices that must stay strictly positive (diffusion scale parameters)
    positive: tuple = ()
    param_names: tuple = ()
    differentiable: bool = True
    options: dict = field(default_factory=dict)
    # optional compiled Euler loop: (theta, x0, z (steps, N), h) -> states (steps, N)
    euler_stepper: Optional[Callable] = None

    def __post_init__(self):
        if self.p1 < 1 or self.p2 < 1:
            raise ValueError("p1 and p2 must be at least 1")
        if self.closed_form not in CLOSED_FORM_KINDS:
            raise ValueError(f"unknown closed_form kind {self.closed_form!r}")
        if self.closed_form == "multiplicative_theta2" and (self.p2 != 1 or self.base_variance is None):
            raise ValueError("multiplicative_theta2 needs p2 == 1 and a base_variance")
        if self.default_box is not None and self.default_box.dim != self.p:
            raise ValueError("default_box has the wrong dimension")

    @property
    def p(self) -> int:
        return self.p1 + self.p2

    @property
    def has_analytic_grads(self) -> bool:
        return self.grad_drift_theta1 is not None and self.grad_diffusion_theta2 is not None

    def theta(self, values) -> ThetaVector:
        """Coerce a flat sequence or ThetaVector to this model's layout."""
        if isinstance(values, ThetaVector):
            theta = values
        else:
            v = np.asarray(values, dtype=float).ravel()
            if v.size != self.p:
                raise ValueError(f"{self.name} expects {self.p} parameters, got {v.size}")
            theta = ThetaVector.from_flat(v, self.p1)
        if theta.p1 != self.p1 or theta.p2 != self.p2:
            raise ValueError(
                f"{self.name} expects (p1, p2) = ({self.p1}, {self.p2}), "
                f"got ({theta.p1}, {theta.p2})"
            )
        return theta


def _cloud(particles) -> np.ndarray:
    if isinstance(particles, ParticleState):
        return particles.positions
    return ParticleState(particles).positions


def eval_drift(model: ModelSpec, theta1, i: int, particles) -> float:
    """Drift of particle ``i`` under the empirical measure of ``particles``."""
    cloud = _cloud(particles)
    theta1 = np.atleast_1d(np.asarray(theta1, dtype=float))
    if theta1.size != model.p1:
        raise ModelEvaluationError(
            f"{model.name}: theta1 has length {theta1.size}, expected {model.p1}", theta1, i
        )
    if not 0 <= i < cloud.size:
        raise IndexError(f"particle index {i} outside 0..{cloud.size - 1}")
    val = float(np.asarray(model.drift(theta1, cloud[i : i + 1], cloud)).ravel()[0])
    if not np.isfinite(val):
        raise ModelEvaluationError(f"{model.name}: non-finite drift", theta1, i)
    return val


def eval_diffusion(model: ModelSpec, theta2, i: int, particles) -> float:
    """Diffusion coefficient a (not c = a^2) of particle ``i``; must be > 0."""
    cloud = _cloud(particles)
    theta2 = np.atleast_1d(np.asarray(theta2, dtype=float))
    if theta2.size != model.p2:
        raise ModelEvaluationError(
            f"{model.name}: theta2 has length {theta2.size}, expected {model.p2}", theta2, i
        )
    if not 0 <= i < cloud.size:
        raise IndexError(f"particle index {i} outside 0..{cloud.size - 1}")
    val = float(np.asarray(model.diffusion(theta2, cloud[i : i + 1], cloud)).ravel()[0])
    if not np.isfinite(val) or val <= 0.0:
        raise AssumptionViolation(
            f"{model.name}: diffusion coefficient {val!r} at particle {i} is not strictly positive"
        )
    return val


# ---------------------------------------------------------------------------
# catalog


def _mean(cloud):
    return np.mean(cloud, axis=0)


def _time_major(x, cloud):
    # (K,) / (K, m) targets -> contiguous (m, K); same for the cloud
    x = np.asarray(x, dtype=float)
    cloud = np.asarray(cloud, dtype=float)
    same = x is cloud or (x.shape == cloud.shape and np.shares_memory(x, cloud) and np.array_equal(x, cloud))
    if x.ndim == 1:
        xt, ct = x[None, :], cloud[None, :]
    else:
        xt, ct = x.T, cloud.T
    return np.ascontiguousarray(xt), np.ascontiguousarray(ct), same


def _pairwise(kernel, kernel_self, x, cloud, *params, grad=False):
    xt, ct, same = _time_major(x, cloud)
    out = kernel_self(xt, *params) if same and kernel_self is not None else kernel(xt, ct, *params)
    shape = np.shape(x)
    if grad:
        return np.swapaxes(out, 1, 2).reshape((out.shape[0],) + shape)
    return out.T.reshape(shape)


def _const_kernel_spec(value):
    return KernelDiffusionSpec(
        a_tilde=lambda x, y: np.full(np.shape(x), value, dtype=float),
        kernel_K=lambda x, y: np.zeros(np.shape(y)),
    )


def linear_model() -> ModelSpec:
    """dX = -(t11 X + t12 (X - mean)) dt + sqrt(t2) dW."""

    def drift(t1, x, cloud):
        return -(t1[0] * x + t1[1] * (x - _mean(cloud)))

    def grad_drift(t1, x, cloud):
        return np.stack([-x, -(x - _mean(cloud))])

    def diffusion(t2, x, cloud):
        return np.full(np.shape(x), np.sqrt(t2[0]))

    def grad_diffusion(t2, x, cloud):
        return np.full((1,) + np.shape(x), 0.5 / np.sqrt(t2[0]))

    return ModelSpec(
        name="linear",
        p1=2,
        p2=1,
        drift=drift,
        diffusion=diffusion,
        grad_drift_theta1=grad_drift,
        grad_diffusion_theta2=grad_diffusion,
        closed_form="linear_model",
        base_variance=lambda x, cloud: np.ones(np.shape(x)),
        kernel_diffusion=lambda t2: _const_kernel_spec(np.sqrt(t2[0])),
        default_box=ParamBox([-10.0, -10.0, 1e-6], [10.0, 10.0, 100.0]),
        positive=(2,),
        param_names=("theta11", "theta12", "theta2"),
        euler_stepper=lambda th, x, z, h: _kernels.linear_euler(
            x, z, h, float(th.theta1[0]), float(th.theta1[1]), float(th.theta2[0])
        ),
    )


def opinion_smooth_model() -> ModelSpec:
    """Opinion dynamics with the mollified window kernel, diffusion sqrt(t2).

    phi(r) = t12 * exp(-0.01 / (1 - (r - t11)^2)) on [t11 - 1, t11 + 1].
    """

    def drift(t1, x, cloud):
        return _pairwise(
            _kernels.smooth_opinion_drift, _kernels.smooth_opinion_drift_self, x, cloud, float(t1[0]), float(t1[1])
        )

    def grad_drift(t1, x, cloud):
        return _pairwise(
            _kernels.smooth_opinion_grad, _kernels.smooth_opinion_grad_self, x, cloud,
            float(t1[0]), float(t1[1]), grad=True,
        )

    def diffusion(t2, x, cloud):
        return np.full(np.shape(x), np.sqrt(t2[0]))

    def grad_diffusion(t2, x, cloud):
        return np.full((1,) + np.shape(x), 0.5 / np.sqrt(t2[0]))

    return ModelSpec(
        name="opinion_smooth",
        p1=2,
        p2=1,
        drift=drift,
        diffusion=diffusion,
        grad_drift_theta1=grad_drift,
        grad_diffusion_theta2=grad_diffusion,
        closed_form="multiplicative_theta2",
        base_variance=lambda x, cloud: np.ones(np.shape(x)),
        kernel_diffusion=lambda t2: _const_kernel_spec(np.sqrt(t2[0])),
        default_box=ParamBox([-0.99, 1e-3, 1e-6], [1.0, 10.0, 10.0]),
        positive=(1, 2),
        param_names=("theta11", "theta12", "theta2"),
        euler_stepper=lambda th, x, z, h: _kernels.smooth_opinion_euler(
            x, z, h, float(th.theta1[0]), float(th.theta1[1]), float(th.theta2[0])
        ),
    )


def opinion_indicator_model(width: float = 0.0) -> ModelSpec:
    """Opinion dynamics with phi(r) = t11 * 1[0, t12](r), diffusion t2.

    ``width > 0`` replaces the indicator by a logistic step of that width,
    which makes the drift smooth in t12. With the exact indicator only
    contrast values are available.
    """
    width = float(width)
    if width < 0:
        raise ValueError("mollification width must be non-negative")

    def drift(t1, x, cloud):
        return _pairwise(
            _kernels.indicator_opinion_drift, None, x, cloud, float(t1[0]), float(t1[1]), width
        )

    def grad_drift(t1, x, cloud):
        return _pairwise(
            _kernels.indicator_opinion_grad, None, x, cloud, float(t1[0]), float(t1[1]), width, grad=True
        )

    def diffusion(t2, x, cloud):
        return np.full(np.shape(x), float(t2[0]))

    def grad_diffusion(t2, x, cloud):
        return np.ones((1,) + np.shape(x))

    smooth = width > 0
    return ModelSpec(
        name="opinion_indicator",
        p1=2,
        p2=1,
        drift=drift,
        diffusion=diffusion,
        grad_drift_theta1=grad_drift if smooth else None,
        grad_diffusion_theta2=grad_diffusion if smooth else None,
        kernel_diffusion=lambda t2: _const_kernel_spec(float(t2[0])),
        default_box=ParamBox([-10.0, 1e-3, 1e-3], [10.0, 10.0, 10.0]),
        positive=(1, 2),
        param_names=("theta11", "theta12", "theta2"),
        differentiable=smooth,
        options={"width": width},
    )


def kuramoto_model() -> ModelSpec:
    """dX = -(t1/N) sum_j sin(X - X_j) dt + t2 dW."""

    def _coupling(x, cloud):
        # mean_j sin(x - X_j) = sin x * mean cos X_j - cos x * mean sin X_j
        return np.sin(x) * np.mean(np.cos(cloud), axis=0) - np.cos(x) * np.mean(np.sin(cloud), axis=0)

    def drift(t1, x, cloud):
        return -t1[0] * _coupling(x, cloud)

    def grad_drift(t1, x, cloud):
        return -_coupling(x, cloud)[None]

    def diffusion(t2, x, cloud):
        return np.full(np.shape(x), float(t2[0]))

    def grad_diffusion(t2, x, cloud):
        return np.ones((1,) + np.shape(x))

    return ModelSpec(
        name="kuramoto",
        p1=1,
        p2=1,
        drift=drift,
        diffusion=diffusion,
        grad_drift_theta1=grad_drift,
        grad_diffusion_theta2=grad_diffusion,
        kernel_diffusion=lambda t2: _const_kernel_spec(float(t2[0])),
        default_box=ParamBox([-10.0, 1e-3], [10.0, 10.0]),
        positive=(1,),
        param_names=("theta1", "theta2"),
    )


def _affine_meanfield_drift(t1, x, cloud):
    return t1[0] + t1[1] * _mean(cloud) - t1[2] * x


def _affine_meanfield_grad(t1, x, cloud):
    x = np.asarray(x, dtype=float)
    return np.stack([np.ones_like(x), np.broadcast_to(_mean(cloud), x.shape), -x])


def pearson_meanfield_model() -> ModelSpec:
    """dX = (t11 + t12 mean - t13 X) dt + t2 sqrt(1 + X^2) dW."""

    def diffusion(t2, x, cloud):
        return t2[0] * np.sqrt(1.0 + np.asarray(x) ** 2)

    def grad_diffusion(t2, x, cloud):
        return np.sqrt(1.0 + np.asarray(x) ** 2)[None]

    def kernel_spec(t2):
        return KernelDiffusionSpec(
            a_tilde=lambda x, y: t2[0] * np.sqrt(1.0 + np.asarray(x) ** 2),
            kernel_K=lambda x, y: np.zeros(np.shape(y)),
        )

    return ModelSpec(
        name="pearson_meanfield",
        p1=3,
        p2=1,
        drift=_affine_meanfield_drift,
        diffusion=diffusion,
        grad_drift_theta1=_affine_meanfield_grad,
        grad_diffusion_theta2=grad_diffusion,
        kernel_diffusion=kernel_spec,
        default_box=ParamBox([-10.0, -10.0, -10.0, 1e-3], [10.0, 10.0, 10.0, 10.0]),
        positive=(3,),
        param_names=("theta11", "theta12", "theta13", "theta2"),
    )


def meanfield_ou_model() -> ModelSpec:
    """dX = (t11 + t12 mean - t13 X) dt + (t21 + t22 sqrt(mean X^2)) dW."""

    def diffusion(t2, x, cloud):
        rms = np.sqrt(np.mean(np.asarray(cloud) ** 2, axis=0))
        return np.broadcast_to(t2[0] + t2[1] * rms, np.shape(x)).astype(float)

    def grad_diffusion(t2, x, cloud):
        shape = np.shape(x)
        rms = np.sqrt(np.mean(np.asarray(cloud) ** 2, axis=0))
        return np.stack([np.ones(shape), np.broadcast_to(rms, shape)])

    def kernel_spec(t2):
        return KernelDiffusionSpec(
            a_tilde=lambda x, y: t2[0] + t2[1] * np.sqrt(y),
            kernel_K=lambda x, y: np.asarray(y) ** 2,
        )

    return ModelSpec(
        name="meanfield_ou",
        p1=3,
        p2=2,
        drift=_affine_meanfield_drift,
        diffusion=diffusion,
        grad_drift_theta1=_affine_meanfield_grad,
        grad_diffusion_theta2=grad_diffusion,
        kernel_diffusion=kernel_spec,
        default_box=ParamBox([-10.0, -10.0, -10.0, 1e-3, 0.0], [10.0, 10.0, 10.0, 10.0, 10.0]),
        positive=(3,),
        param_names=("theta11", "theta12", "theta13", "theta21", "theta22"),
    )


_CATALOG = {
    "linear": linear_model,
    "opinion_smooth": opinion_smooth_model,
    "opinion_indicator": opinion_indicator_model,
    "kuramoto": kuramoto_model,
    "pearson_meanfield": pearson_meanfield_model,
    "meanfield_ou": meanfield_ou_model,
}

_REGISTRY: dict = {}


def register_model(name: str, factory: Callable[..., ModelSpec]) -> None:
    """Make a custom model available to ``builtin_model`` and the CLI."""
    if name in _CATALOG:
        raise ValueError(f"{name!r} is a built-in model")
    _REGISTRY[name] = factory


def available_models() -> list:
    return sorted(_CATALOG) + sorted(_REGISTRY)


def builtin_model(name: str, **options) -> ModelSpec:
    factory = _CATALOG.get(name) or _REGISTRY.get(name)
    if factory is None:
        raise KeyError(f"unknown model {name!r}; available: {', '.join(available_models())}")
    return factory(**options)
