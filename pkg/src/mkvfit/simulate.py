"""Euler-Maruyama simulation of the N-particle system.

Noise layout
------------
Every particle owns an independent PCG64 stream seeded by
``SeedSequence(seed, spawn_key=(i,))``; its initial value comes from a
separate stream ``(i, 0)``. Gaussian increments are numpy's
``Generator.standard_normal`` (ziggurat). Because particle ``i`` never reads
another particle's stream, growing N leaves the noise of the first particles
untouched, which is what the propagation-of-chaos coupling relies on.
The auxiliary mean-field pool uses keys ``(k, 1)`` (noise) and ``(k, 2)``
(initial values).
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import AssumptionViolation, ModelEvaluationError, SimulationDiverged
from .measure import ParticleState
from .models import ModelSpec, ThetaVector

log = logging.getLogger(__name__)

BLOWUP = 1e12
_NOISE_CHUNK = 1024


@dataclass(frozen=True)
class Mu0:
    kind: str
    params: tuple

    def __post_init__(self):
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        expected = {"dirac": 1, "gaussian": 2, "uniform": 2}
        if self.kind not in expected:
            raise ValueError(f"unknown initial law {self.kind!r}")
        if len(params) != expected[self.kind]:
            raise ValueError(f"{self.kind} takes {expected[self.kind]} parameter(s), got {len(params)}")
        if not all(math.isfinite(p) for p in params):
            raise ValueError("initial-law parameters must be finite")
        if self.kind == "gaussian" and params[1] <= 0:
            raise ValueError("gaussian sd must be positive")
        if self.kind == "uniform" and params[0] >= params[1]:
            raise ValueError("uniform needs lo < hi")

    @classmethod
    def parse(cls, text: str) -> "Mu0":
        """Parse ``dirac:c``, ``gaussian:mean,sd`` or ``uniform:lo,hi``."""
        kind, _, rest = text.partition(":")
        if not rest:
            raise ValueError(f"bad initial law {text!r}; expected e.g. dirac:1 or gaussian:0,1")
        return cls(kind.strip(), tuple(float(v) for v in rest.split(",")))

    def draw(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "dirac":
            return np.full(size, self.params[0])
        if self.kind == "gaussian":
            return rng.normal(self.params[0], self.params[1], size)
        return rng.uniform(self.params[0], self.params[1], size)

    def __str__(self):
        return f"{self.kind}:" + ",".join(repr(p) for p in self.params)


@dataclass(frozen=True)
class SimConfig:
    N: int
    T: float
    euler_step: float = 0.01
    seed: int = 0
    mu0: Mu0 = Mu0("dirac", (1.0,))

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if not (0 < self.euler_step <= self.T):
            raise ValueError("need 0 < euler_step <= T")
        if isinstance(self.mu0, str):
            object.__setattr__(self, "mu0", Mu0.parse(self.mu0))

    @property
    def n_steps(self) -> int:
        return _exact_ratio(self.T, self.euler_step, "T", "euler_step")


@dataclass(frozen=True)
class ObservationGrid:
    n: int
    T: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("grid needs at least one interval")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @classmethod
    def from_step(cls, T: float, delta_n: float) -> "ObservationGrid":
        return cls(_exact_ratio(T, delta_n, "T", "delta_n"), float(T))

    @property
    def delta_n(self) -> float:
        return self.T / self.n

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.T / self.n

    def stride(self, euler_step: float) -> int:
        return _exact_ratio(self.delta_n, euler_step, "delta_n", "euler_step")


def _exact_ratio(a: float, b: float, name_a: str, name_b: str) -> int:
    r = a / b
    k = round(r)
    if k < 1 or abs(r - k) > 1e-9 * max(1.0, r):
        raise ValueError(f"{name_a}={a!r} is not an integer multiple of {name_b}={b!r}")
    return int(k)


@dataclass
class TrajectoryPanel:
    data: np.ndarray
    grid: ObservationGrid
    model_name: str = ""
    seed: int | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[1] != self.grid.n + 1:
            raise ValueError(
                f"panel shape {self.data.shape} does not match a grid with {self.grid.n} intervals"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("panel contains non-finite entries")

    @property
    def N(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def T(self) -> float:
        return self.grid.T

    @property
    def delta_n(self) -> float:
        return self.grid.delta_n

    def state(self, j: int) -> ParticleState:
        return ParticleState(self.data[:, j], float(self.grid.times[j]))

    def subsample(self, stride: int) -> "TrajectoryPanel":
        """Keep every ``stride``-th observation (coarser grid, same horizon)."""
        if stride < 1 or self.n % stride:
            raise ValueError(f"stride {stride} does not divide n={self.n}")
        return TrajectoryPanel(
            self.data[:, ::stride].copy(), ObservationGrid(self.n // stride, self.T), self.model_name, self.seed
        )


# ---------------------------------------------------------------------------


def sample_mu0(spec, N: int, rng: np.random.Generator) -> ParticleState:
    if isinstance(spec, str):
        spec = Mu0.parse(spec)
    return ParticleState(spec.draw(N, rng))


def _particle_rngs(seed: int, N: int, tag: int | None = None) -> list:
    keys = [(i,) if tag is None else (i, tag) for i in range(N)]
    return [np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=k))) for k in keys]


def _initial_values(mu0: Mu0, seed: int, N: int, tag: int) -> np.ndarray:
    if mu0.kind == "dirac":
        return np.full(N, mu0.params[0])
    return np.array([mu0.draw(1, g)[0] for g in _particle_rngs(seed, N, tag)])


def _noise_chunks(rngs, n_steps):
    """Yield (L, N) blocks of standard normals; column i comes from stream i."""
    done = 0
    while done < n_steps:
        L = min(_NOISE_CHUNK, n_steps - done)
        yield np.ascontiguousarray(np.stack([g.standard_normal(L) for g in rngs], axis=1))
        done += L


def _coefficients(model, theta, x, cloud, t):
    b = np.asarray(model.drift(theta.theta1, x, cloud), dtype=float)
    a = np.asarray(model.diffusion(theta.theta2, x, cloud), dtype=float)
    if b.shape != x.shape or a.shape != x.shape:
        raise ModelEvaluationError(f"{model.name}: coefficient shape mismatch", theta.flat)
    if not np.all(np.isfinite(b)):
        i = int(np.flatnonzero(~np.isfinite(b))[0])
        raise ModelEvaluationError(f"{model.name}: non-finite drift at particle {i}, t={t}", theta.flat, i)
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        i = int(np.flatnonzero(~(np.isfinite(a) & (a >= 0)))[0])
        raise AssumptionViolation(f"{model.name}: invalid diffusion {a[i]!r} at particle {i}, t={t}")
    return b, a


def _check_blowup(x, t, label="particle"):
    bad = ~(np.abs(x) <= BLOWUP)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise SimulationDiverged(f"simulation diverged: {label} {i} reached {x[i]!r} at t={t}", i, t)


def simulate_panel(
    model: ModelSpec, theta, cfg: SimConfig, grid: ObservationGrid, compiled: bool = True
) -> TrajectoryPanel:
    """Simulate on the fine Euler grid and record the observation grid.

    All particles are updated synchronously from the previous full state.
    Models that ship a compiled stepper use it unless ``compiled=False``;
    both paths consume the same noise.
    """
    theta = model.theta(theta)
    if abs(grid.T - cfg.T) > 1e-12 * max(1.0, cfg.T):
        raise ValueError(f"grid horizon {grid.T} differs from config horizon {cfg.T}")
    stride = grid.stride(cfg.euler_step)
    n_steps = stride * grid.n
    h = grid.delta_n / stride
    sqrt_h = math.sqrt(h)
    stepper = model.euler_stepper if compiled else None

    x = _initial_values(cfg.mu0, cfg.seed, cfg.N, 0)
    out = np.empty((cfg.N, grid.n + 1))
    out[:, 0] = x
    k = 0
    for z in _noise_chunks(_particle_rngs(cfg.seed, cfg.N), n_steps):
        if stepper is not None:
            _coefficients(model, theta, x, x, k * h)
            states = stepper(theta, x, z, h)
            _check_path(states, k, h)
        else:
            states = np.empty_like(z)
            for s, zs in enumerate(z):
                b, a = _coefficients(model, theta, x, x, (k + s) * h)
                x = x + b * h + a * sqrt_h * zs
                _check_blowup(x, (k + s + 1) * h)
                states[s] = x
        steps = np.arange(k + 1, k + len(z) + 1)
        keep = steps % stride == 0
        out[:, steps[keep] // stride] = states[keep].T
        x = states[-1].copy()
        k += len(z)
    return TrajectoryPanel(out, grid, model.name, cfg.seed)


def _check_path(states, k0, h):
    bad = ~(np.abs(states) <= BLOWUP)
    if np.any(bad):
        s, i = np.argwhere(bad)[0]
        t = (k0 + s + 1) * h
        raise SimulationDiverged(f"simulation diverged: particle {i} reached {states[s, i]!r} at t={t}", int(i), t)


def simulate_coupled_independent(
    model: ModelSpec, theta, cfg: SimConfig, grid: ObservationGrid, mean_field_pool: int
) -> tuple:
    """Interacting system and approximate McKean copies on shared noise.

    The returned McKean panel holds particles that start where the interacting
    particles start and see the same Brownian increments, but whose
    coefficients use the empirical law of an independent pool of
    ``mean_field_pool`` particles as a proxy for the mean-field law.
    """
    if mean_field_pool < cfg.N:
        raise ValueError("mean_field_pool must be at least N")
    theta = model.theta(theta)
    stride = grid.stride(cfg.euler_step)
    n_steps = stride * grid.n
    h = grid.delta_n / stride
    sqrt_h = math.sqrt(h)

    x = _initial_values(cfg.mu0, cfg.seed, cfg.N, 0)
    xbar = x.copy()
    pool = _initial_values(cfg.mu0, cfg.seed, mean_field_pool, 2)
    noise = _noise_chunks(_particle_rngs(cfg.seed, cfg.N), n_steps)
    pool_noise = _noise_chunks(_particle_rngs(cfg.seed, mean_field_pool, 1), n_steps)
    z_block = zp_block = None

    out = np.empty((cfg.N, grid.n + 1))
    out_bar = np.empty((cfg.N, grid.n + 1))
    out[:, 0] = x
    out_bar[:, 0] = xbar
    for k in range(n_steps):
        t = k * h
        if z_block is None or k % _NOISE_CHUNK == 0:
            z_block, zp_block = next(noise), next(pool_noise)
        z = z_block[k % _NOISE_CHUNK]
        b, a = _coefficients(model, theta, x, x, t)
        bb, ab = _coefficients(model, theta, xbar, pool, t)
        bp, ap = _coefficients(model, theta, pool, pool, t)
        x = x + b * h + a * sqrt_h * z
        xbar = xbar + bb * h + ab * sqrt_h * z
        pool = pool + bp * h + ap * sqrt_h * zp_block[k % _NOISE_CHUNK]
        t1 = (k + 1) * h
        _check_blowup(x, t1)
        _check_blowup(xbar, t1)
        _check_blowup(pool, t1, "pool particle")
        if (k + 1) % stride == 0:
            out[:, (k + 1) // stride] = x
            out_bar[:, (k + 1) // stride] = xbar
    return (
        TrajectoryPanel(out, grid, model.name, cfg.seed),
        TrajectoryPanel(out_bar, grid, model.name + ":mckean", cfg.seed),
    )
