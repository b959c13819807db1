"""Gaussian quasi-likelihood contrast, its gradient and minimizers.

For a panel X (N particles, n increments of length dt) the contrast is

    S(theta) = sum_i sum_j (dX_ij - dt b_ij)^2 / (dt c_ij) + log c_ij

with b, c = a^2 evaluated at the left end point of each increment and at the
empirical measure of the particle column at that time.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionViolation, DegeneratePanel, GradientUnavailable, NonConvergence
from .models import ModelSpec, ParamBox, ThetaVector
from .optimize import multistart, start_points
from .simulate import TrajectoryPanel

log = logging.getLogger(__name__)

# cap on N * columns held in memory at once
_CHUNK_ELEMS = 1 << 20
FD_REL_STEP = 1e-6
DEGENERACY_TOL = 1e-12


def _chunks(panel: TrajectoryPanel):
    step = max(1, _CHUNK_ELEMS // max(panel.N, 1))
    for j0 in range(0, panel.n, step):
        j1 = min(j0 + step, panel.n)
        x = panel.data[:, j0:j1]
        yield x, panel.data[:, j0 + 1 : j1 + 1] - x


def _variance(model, theta2, x, name):
    a = np.asarray(model.diffusion(theta2, x, x), dtype=float)
    c = a * a
    if not np.all(np.isfinite(c)) or np.any(c <= 0.0):
        raise AssumptionViolation(f"{model.name}: squared diffusion is not strictly positive ({name})")
    return a, c


def _drift(model, theta1, x):
    b = np.asarray(model.drift(theta1, x, x), dtype=float)
    if not np.all(np.isfinite(b)):
        raise AssumptionViolation(f"{model.name}: non-finite drift at theta1={theta1.tolist()}")
    return b


def contrast_value(model: ModelSpec, theta, panel: TrajectoryPanel) -> float:
    theta = model.theta(theta)
    dt = panel.delta_n
    total = 0.0
    for x, dx in _chunks(panel):
        b = _drift(model, theta.theta1, x)
        _, c = _variance(model, theta.theta2, x, "contrast")
        r = dx - dt * b
        total += float(np.sum(r * r / (dt * c)) + np.sum(np.log(c)))
    return total


def contrast_gradient(model: ModelSpec, theta, panel: TrajectoryPanel, fd_fallback: bool = True) -> np.ndarray:
    """Gradient of the contrast in the flat (theta1, theta2) layout."""
    theta = model.theta(theta)
    if not model.differentiable:
        raise GradientUnavailable(f"{model.name} is not differentiable in theta with these options")
    if not model.has_analytic_grads:
        if not fd_fallback:
            raise GradientUnavailable(f"{model.name} has no analytic gradients")
        return fd_gradient(lambda v: contrast_value(model, v, panel), theta.flat)

    dt = panel.delta_n
    g1 = np.zeros(model.p1)
    g2 = np.zeros(model.p2)
    for x, dx in _chunks(panel):
        b = _drift(model, theta.theta1, x)
        a, c = _variance(model, theta.theta2, x, "gradient")
        db = np.asarray(model.grad_drift_theta1(theta.theta1, x, x), dtype=float)
        dc = 2.0 * a * np.asarray(model.grad_diffusion_theta2(theta.theta2, x, x), dtype=float)
        r = dx - dt * b
        # d/dtheta1: -2 r db / c ; d/dtheta2: (1/c - r^2 / (dt c^2)) dc
        g1 += np.sum(-2.0 * r * db / c, axis=(1, 2))
        g2 += np.sum((1.0 / c - r * r / (dt * c * c)) * dc, axis=(1, 2))
    return np.concatenate([g1, g2])


def fd_gradient(f, x, rel_step=FD_REL_STEP) -> np.ndarray:
    """Central differences with step ``rel_step * (1 + |x_k|)``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        h = rel_step * (1.0 + abs(x[k]))
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (f(xp) - f(xm)) / (2.0 * h)
    return g


# ---------------------------------------------------------------------------
# closed forms


@dataclass
class EstimateResult:
    theta_hat: ThetaVector
    contrast_at_opt: float
    method: str
    iterations: int = 0
    converged: bool = True
    starts_used: int = 0
    on_boundary: bool = False
    se: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "theta_hat": self.theta_hat.tolist(),
            "contrast": self.contrast_at_opt,
            "method": self.method,
            "converged": self.converged,
            "iterations": self.iterations,
            "starts_used": self.starts_used,
            "on_boundary": self.on_boundary,
        }
        if self.se is not None:
            out["se"] = np.asarray(self.se).tolist()
        return out


@dataclass(frozen=True)
class LinearStats:
    A: float
    B: float
    C: float
    D: float


def linear_statistics(panel: TrajectoryPanel) -> LinearStats:
    x = panel.data[:, :-1]
    dx = np.diff(panel.data, axis=1)
    centered = x - x.mean(axis=0)
    N, dt = panel.N, panel.delta_n
    return LinearStats(
        A=float(np.sum(centered * dx) / N),
        B=float(np.sum(x * dx) / N),
        C=float(dt * np.sum(centered**2) / N),
        D=float(dt * np.sum(x**2) / N),
    )


def _check_linear(stats: LinearStats):
    tol = DEGENERACY_TOL * (1.0 + abs(stats.D))
    if abs(stats.C) < tol:
        raise DegeneratePanel("degenerate panel: C vanishes (particles coincide at every time)", "C")
    if abs(stats.D - stats.C) < tol:
        raise DegeneratePanel("degenerate panel: D - C vanishes (cross-particle mean is zero)", "D-C")


def closed_form_linear(panel: TrajectoryPanel) -> EstimateResult:
    """Explicit contrast minimizer for the linear interaction model."""
    s = linear_statistics(panel)
    _check_linear(s)
    t11 = (s.A - s.B) / (s.D - s.C)
    t12 = (s.A * s.D - s.B * s.C) / (s.C**2 - s.C * s.D)
    x = panel.data[:, :-1]
    dx = np.diff(panel.data, axis=1)
    dt = panel.delta_n
    resid = dx + dt * (t11 * x + t12 * (x - x.mean(axis=0)))
    t2 = float(np.sum(resid**2) / (panel.N * panel.T))
    theta = ThetaVector([t11, t12], [t2])
    value = np.nan
    if t2 > 0:
        value = float(np.sum(resid**2) / (dt * t2) + resid.size * np.log(t2))
    return EstimateResult(theta, value, "closed_form", extra={"stats": s})


def profile_theta2(model: ModelSpec, panel: TrajectoryPanel, theta1) -> np.ndarray:
    """Optimal theta2 for fixed theta1 when c = theta2 * c0."""
    return np.array([_profile(model, panel, np.atleast_1d(np.asarray(theta1, dtype=float)))[0]])


def _profile(model, panel, theta1):
    # returns (theta2, sum r^2 / c0, sum log c0)
    if model.base_variance is None or model.p2 != 1:
        raise ValueError(f"{model.name} does not have a multiplicative theta2")
    dt = panel.delta_n
    q = 0.0
    logc0 = 0.0
    for x, dx in _chunks(panel):
        b = _drift(model, theta1, x)
        c0 = np.asarray(model.base_variance(x, x), dtype=float)
        if not np.all(np.isfinite(c0)) or np.any(c0 <= 0):
            raise AssumptionViolation(f"{model.name}: base variance c0 is not strictly positive")
        r = dx - dt * b
        q += float(np.sum(r * r / c0))
        logc0 += float(np.sum(np.log(c0)))
    return q / (panel.N * panel.T), q, logc0


# ---------------------------------------------------------------------------


@dataclass
class MinimizeOptions:
    method: str = "auto"  # auto | closed_form | profiled | nelder_mead
    starts: int = 8
    xtol: float = 1e-8
    max_iter: int | None = None


def _on_boundary(values, box: ParamBox) -> bool:
    tol = 1e-10 * (1.0 + np.abs(values))
    return bool(np.any(values - box.lower <= tol) or np.any(box.upper - values <= tol))


def minimize_contrast(model: ModelSpec, panel: TrajectoryPanel, box: ParamBox | None = None, opts=None) -> EstimateResult:
    opts = opts or MinimizeOptions()
    box = box or model.default_box
    if box is None:
        raise ValueError(f"{model.name} has no default box; pass one")
    if box.dim != model.p:
        raise ValueError(f"box has {box.dim} components, model {model.name} has {model.p}")

    method = opts.method
    if method == "auto":
        method = {
            "linear_model": "closed_form",
            "multiplicative_theta2": "profiled",
        }.get(model.closed_form, "nelder_mead")

    if method == "closed_form":
        if model.closed_form != "linear_model":
            raise ValueError(f"{model.name} has no closed-form estimator")
        res = closed_form_linear(panel)
        if box.contains(res.theta_hat) and not _on_boundary(res.theta_hat.flat, box):
            res.contrast_at_opt = contrast_value(model, res.theta_hat, panel)
            return res
        log.info("closed form %s outside box; falling back to numeric search", res.theta_hat.tolist())
        method = "profiled"

    if method == "profiled":
        return _minimize_profiled(model, panel, box, opts)
    if method == "nelder_mead":
        return _minimize_full(model, panel, box, opts)
    raise ValueError(f"unknown method {opts.method!r}")


def _finish(model, box, best, runs, method, value, x_full):
    if not any(r.converged for r in runs) and not best.converged:
        raise NonConvergence(f"{model.name}: no start converged", best=best)
    theta = model.theta(box.clip(x_full))
    return EstimateResult(
        theta,
        value,
        method,
        iterations=int(sum(r.nit for r in runs)),
        converged=True,
        starts_used=len(runs),
        on_boundary=_on_boundary(theta.flat, box),
        extra={"start_values": [r.f_start for r in runs]},
    )


def _minimize_full(model, panel, box, opts):
    def f(v):
        try:
            return contrast_value(model, v, panel)
        except AssumptionViolation:
            return np.inf

    best, runs = multistart(f, box, opts.starts, opts.xtol, opts.max_iter)
    return _finish(model, box, best, runs, "nelder_mead", best.fun, best.x)


def _minimize_profiled(model, panel, box, opts):
    if model.p2 != 1 or model.base_variance is None:
        raise ValueError(f"{model.name} does not support theta2 profiling")
    box1 = box.sub(0, model.p1)
    lo2, hi2 = box.lower[model.p1], box.upper[model.p1]
    nobs = panel.N * panel.n
    dt = panel.delta_n

    def profiled(t1):
        try:
            t2, q, logc0 = _profile(model, panel, t1)
        except AssumptionViolation:
            return np.inf, np.nan
        # S is unimodal in theta2, so clipping gives the constrained optimum
        t2 = min(max(t2, lo2), hi2)
        return q / (dt * t2) + nobs * np.log(t2) + logc0, t2

    best, runs = multistart(lambda t1: profiled(t1)[0], box1, opts.starts, opts.xtol, opts.max_iter)
    value, t2 = profiled(best.x)
    return _finish(model, box, best, runs, "profiled", value, np.concatenate([best.x, [t2]]))


__all__ = [
    "EstimateResult",
    "LinearStats",
    "MinimizeOptions",
    "closed_form_linear",
    "contrast_gradient",
    "contrast_value",
    "fd_gradient",
    "linear_statistics",
    "minimize_contrast",
    "profile_theta2",
    "start_points",
]
