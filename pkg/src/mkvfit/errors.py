"""Exception hierarchy.

Everything raised deliberately by the package derives from ``MKVError`` so the
CLI can map numerical failures to a single exit code.
"""


class MKVError(Exception):
    """Base class for numerical, modelling and configuration failures."""


class ModelEvaluationError(MKVError):
    """A coefficient evaluator returned a non-finite value or had the wrong shape."""

    def __init__(self, message, theta=None, index=None):
        super().__init__(message)
        self.theta = theta
        self.index = index


class AssumptionViolation(MKVError):
    """A modelling assumption failed at runtime (e.g. non-positive diffusion)."""


class SimulationDiverged(MKVError):
    """The Euler scheme produced a state beyond the blow-up threshold."""

    def __init__(self, message, particle=None, time=None):
        super().__init__(message)
        self.particle = particle
        self.time = time


class DegeneratePanel(MKVError):
    """A closed-form estimator hit a vanishing denominator."""

    def __init__(self, message, quantity=None):
        super().__init__(message)
        self.quantity = quantity


class NonConvergence(MKVError):
    """No optimizer start satisfied the convergence criterion."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class GradientUnavailable(MKVError):
    """The model does not provide the derivatives an operation needs."""


class SingularSigma(MKVError):
    """A covariance block is (numerically) singular."""


class ConfigError(MKVError):
    """Invalid configuration; ``violations`` lists every problem found."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
