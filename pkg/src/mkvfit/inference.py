"""Asymptotic covariance plug-in, standard errors and the non-interaction test.

Drift parameters converge at rate sqrt(N) and diffusion parameters at rate
sqrt(N / dt); the limiting covariance of the rescaled error is
2 * diag(Sigma1, Sigma2)^{-1}.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .contrast import _chunks, _variance, closed_form_linear, linear_statistics
from .errors import AssumptionViolation, DegeneratePanel, GradientUnavailable, SingularSigma
from .models import ModelSpec
from .simulate import ObservationGrid, SimConfig, TrajectoryPanel, simulate_panel

PSD_TOL = 1e-10
COND_MAX = 1e12


@dataclass(frozen=True)
class SigmaEstimate:
    sigma1: np.ndarray
    sigma2: np.ndarray
    theta: np.ndarray | None = None


@dataclass(frozen=True)
class TestReport:
    z: float
    v: float
    p_value: float
    reject_at: dict
    theta12: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "z": self.z,
            "v": self.v,
            "p_value": self.p_value,
            "theta12": self.theta12,
            "reject_at": {f"{k:g}": bool(v) for k, v in self.reject_at.items()},
        }


def _symmetrize(m: np.ndarray, name: str) -> np.ndarray:
    m = 0.5 * (m + m.T)
    lam = np.linalg.eigvalsh(m)
    if lam.size and lam.min() < -PSD_TOL * max(1.0, abs(lam).max()):
        raise AssumptionViolation(f"{name} is not positive semidefinite (min eigenvalue {lam.min():.3g})")
    return m


def estimate_sigma(model: ModelSpec, theta, panel: TrajectoryPanel) -> SigmaEstimate:
    """Riemann / empirical-measure plug-in for both covariance blocks."""
    theta = model.theta(theta)
    if not model.has_analytic_grads:
        raise GradientUnavailable(f"{model.name} has no analytic theta-gradients")
    dt, N = panel.delta_n, panel.N
    s1 = np.zeros((model.p1, model.p1))
    s2 = np.zeros((model.p2, model.p2))
    for x, _ in _chunks(panel):
        a, c = _variance(model, theta.theta2, x, "sigma")
        db = np.asarray(model.grad_drift_theta1(theta.theta1, x, x), dtype=float).reshape(model.p1, -1)
        da = np.asarray(model.grad_diffusion_theta2(theta.theta2, x, x), dtype=float).reshape(model.p2, -1)
        c = c.ravel()
        dc = 2.0 * a.ravel() * da
        s1 += (db / c) @ db.T
        s2 += (dc / c**2) @ dc.T
    return SigmaEstimate(
        _symmetrize(2.0 * dt / N * s1, "Sigma1"),
        _symmetrize(dt / N * s2, "Sigma2"),
        theta.flat,
    )


def _inverse_diag(m: np.ndarray, name: str) -> np.ndarray:
    lam, vec = np.linalg.eigh(m)
    if lam.min() <= 0 or lam.max() / lam.min() > COND_MAX:
        raise SingularSigma(f"{name} is singular or ill-conditioned (eigenvalues {lam.tolist()})")
    return np.einsum("ij,j,ij->i", vec, 1.0 / lam, vec)


def standard_errors(sig: SigmaEstimate, N: int, delta_n: float) -> np.ndarray:
    # factored as sqrt(.)/sqrt(N) so that N -> 4N halves the errors bit for bit
    root_n = np.sqrt(float(N))
    se1 = np.sqrt(2.0 * _inverse_diag(sig.sigma1, "Sigma1")) / root_n
    se2 = np.sqrt(2.0 * _inverse_diag(sig.sigma2, "Sigma2")) * np.sqrt(delta_n) / root_n
    return np.concatenate([se1, se2])


def normal_cdf(z):
    return ndtr(z)


def normal_quantile(p):
    return ndtri(p)


def noninteraction_test(panel: TrajectoryPanel, alpha: float = 0.05, levels=(0.01, 0.05, 0.10)) -> TestReport:
    """Z-test of zero interaction strength in the linear model."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    est = closed_form_linear(panel)
    s = est.extra["stats"]
    t12 = float(est.theta_hat.theta1[1])
    t2 = float(est.theta_hat.theta2[0])
    v = t2 * s.D / ((s.D - s.C) * s.C)
    if not np.isfinite(v) or v <= 0:
        raise DegeneratePanel(f"non-positive variance estimate V={v!r}", "V")
    z = t12 * np.sqrt(panel.N / v)
    p = float(2.0 * ndtr(-abs(z)))
    reject = {float(lv): bool(abs(z) > ndtri(1.0 - lv / 2.0)) for lv in sorted(set(levels) | {alpha})}
    return TestReport(float(z), float(v), p, reject, t12)


def identifiability_from_panel(model: ModelSpec, theta, theta0, panel: TrajectoryPanel) -> tuple:
    """Riemann-sum estimates of I(theta) and J(theta2) from a panel simulated at theta0."""
    theta = model.theta(theta)
    theta0 = model.theta(theta0)
    dt, N = panel.delta_n, panel.N
    I = 0.0
    J = 0.0
    for x, _ in _chunks(panel):
        b = np.asarray(model.drift(theta.theta1, x, x), dtype=float)
        b0 = np.asarray(model.drift(theta0.theta1, x, x), dtype=float)
        _, c = _variance(model, theta.theta2, x, "I/J")
        _, c0 = _variance(model, theta0.theta2, x, "I/J")
        I += float(np.sum((b - b0) ** 2 / c))
        J += float(np.sum(c0 / c + np.log(c)))
    return dt / N * I, dt / N * J


def identifiability_functionals(
    model: ModelSpec, theta, theta0, cfg: SimConfig, grid: ObservationGrid
) -> tuple:
    panel = simulate_panel(model, theta0, cfg, grid)
    return identifiability_from_panel(model, theta, theta0, panel)
