"""Replication harness for RMSE/bias tables, rejection rates and CLT checks.

Seeding: replication ``r`` of simulation group ``g`` uses seed
``base_seed + g * SEED_STRIDE + r``. By default every cell is its own group,
so cells are statistically independent. With ``share_paths=True`` a group is
one (theta, N, T) combination and its delta_n cells are subsamples of the
same simulated paths.
"""

import csv
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .contrast import MinimizeOptions, minimize_contrast
from .errors import MKVError
from .inference import SigmaEstimate, estimate_sigma, noninteraction_test, standard_errors
from .models import ParamBox, builtin_model
from .simulate import Mu0, ObservationGrid, SimConfig, simulate_panel

log = logging.getLogger(__name__)

SEED_STRIDE = 1_000_000


@dataclass(frozen=True)
class Cell:
    N: int
    T: float
    delta_n: float
    theta: tuple | None = None  # overrides MCConfig.theta_true (table2 preset)


@dataclass
class MCConfig:
    model: str
    theta_true: tuple
    cells: list
    replications: int = 100
    base_seed: int = 0
    euler_step: float = 0.01
    mu0: Mu0 = Mu0("dirac", (1.0,))
    workers: int = 1
    box: ParamBox | None = None
    starts: int = 8
    method: str = "auto"
    with_se: bool = False
    test_alpha: float | None = None
    share_paths: bool = False

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not self.cells:
            raise ValueError("cell list is empty")
        if isinstance(self.mu0, str):
            self.mu0 = Mu0.parse(self.mu0)
        self.theta_true = tuple(float(v) for v in self.theta_true)

    def theta_for(self, cell: Cell) -> tuple:
        return tuple(cell.theta) if cell.theta is not None else self.theta_true


@dataclass
class ReplicationResult:
    cell: Cell
    theta_true: tuple
    estimates: np.ndarray  # (R, p); NaN rows mark failures
    seeds: np.ndarray
    se: np.ndarray | None = None
    z: np.ndarray | None = None
    failures: list = field(default_factory=list)  # (replication, message)

    @property
    def ok(self) -> np.ndarray:
        return np.all(np.isfinite(self.estimates), axis=1)


@dataclass
class MCReport:
    cell: Cell | None
    rmse: np.ndarray | None = None
    bias: np.ndarray | None = None
    rejection_rate: float | None = None
    rejection_se: float | None = None
    replications_used: int = 0
    failures: int = 0


# ---------------------------------------------------------------------------


def _group_key(cfg: MCConfig, cell: Cell) -> tuple:
    key = (cfg.theta_for(cell), cell.N, float(cell.T))
    return key if cfg.share_paths else key + (float(cell.delta_n),)


def _groups(cfg: MCConfig) -> list:
    keys = []
    for cell in cfg.cells:
        key = _group_key(cfg, cell)
        if key not in keys:
            keys.append(key)
    return keys


def _replicate(job):
    cfg, gidx, key, cells, r = job
    theta, N, T = key[:3]
    seed = cfg.base_seed + gidx * SEED_STRIDE + r
    model = builtin_model(cfg.model)
    # simulate once on the finest requested grid, then subsample
    finest = min(c.delta_n for c in cells)
    sim = SimConfig(N, T, cfg.euler_step, seed, cfg.mu0)
    records = []
    try:
        fine = simulate_panel(model, theta, sim, ObservationGrid.from_step(T, finest))
    except MKVError as exc:
        return seed, [{"error": f"simulation: {exc}"} for _ in cells]
    opts = MinimizeOptions(method=cfg.method, starts=cfg.starts)
    for cell in cells:
        rec = {}
        try:
            stride = round(cell.delta_n / finest)
            panel = fine.subsample(stride) if stride > 1 else fine
            res = minimize_contrast(model, panel, cfg.box, opts)
            rec["theta_hat"] = res.theta_hat.flat
            if cfg.with_se:
                sig = estimate_sigma(model, res.theta_hat, panel)
                rec["se"] = standard_errors(sig, panel.N, panel.delta_n)
            if cfg.test_alpha is not None:
                rec["z"] = noninteraction_test(panel, cfg.test_alpha).z
        except MKVError as exc:
            rec = {"error": f"{type(exc).__name__}: {exc}"}
        records.append(rec)
    return seed, records


def _default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def run_replications(cfg: MCConfig) -> dict:
    """Simulate and estimate every cell; returns ``{cell: ReplicationResult}``.

    Output does not depend on ``cfg.workers``: jobs are keyed by
    (group, replication) and reassembled in that order.
    """
    model = builtin_model(cfg.model)
    groups = _groups(cfg)
    jobs = []
    for gidx, key in enumerate(groups):
        cells = [c for c in cfg.cells if _group_key(cfg, c) == key]
        for r in range(cfg.replications):
            jobs.append((cfg, gidx, key, cells, r))

    workers = cfg.workers if cfg.workers and cfg.workers > 0 else _default_workers()
    if workers == 1:
        outputs = [_replicate(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_replicate, jobs, chunksize=max(1, len(jobs) // (4 * workers))))

    results = {}
    for cell in cfg.cells:
        R = cfg.replications
        results[cell] = ReplicationResult(
            cell,
            cfg.theta_for(cell),
            np.full((R, model.p), np.nan),
            np.zeros(R, dtype=np.int64),
            np.full((R, model.p), np.nan) if cfg.with_se else None,
            np.full(R, np.nan) if cfg.test_alpha is not None else None,
        )
    for (cfg_, gidx, key, cells, r), (seed, records) in zip(jobs, outputs):
        for cell, rec in zip(cells, records):
            res = results[cell]
            res.seeds[r] = seed
            if "error" in rec:
                res.failures.append((r, rec["error"]))
                continue
            res.estimates[r] = rec["theta_hat"]
            if res.se is not None:
                res.se[r] = rec["se"]
            if res.z is not None:
                res.z[r] = rec["z"]

    for cell, res in results.items():
        if res.failures:
            log.warning("cell %s: %d of %d replications failed", cell, len(res.failures), cfg.replications)
        if len(res.failures) == cfg.replications:
            raise MKVError(f"every replication failed in cell {cell}: {res.failures[0][1]}")
    return results


def rmse_bias_table(estimates, theta_true, cell: Cell | None = None) -> MCReport:
    est = np.asarray(estimates, dtype=float)
    if est.ndim != 2 or est.shape[0] == 0:
        raise ValueError("need a non-empty (replications x p) estimate matrix")
    ok = np.all(np.isfinite(est), axis=1)
    if not ok.any():
        raise ValueError("no successful replications")
    err = est[ok] - np.asarray(theta_true, dtype=float)
    return MCReport(
        cell,
        rmse=np.sqrt(np.mean(err**2, axis=0)),
        bias=np.mean(err, axis=0),
        replications_used=int(ok.sum()),
        failures=int((~ok).sum()),
    )


def rejection_rate(z, alpha: float) -> tuple:
    """Fraction of |z| beyond the two-sided critical value, with its binomial se."""
    z = np.asarray(z, dtype=float)
    z = z[np.isfinite(z)]
    if z.size == 0:
        raise ValueError("no test statistics")
    crit = stats.norm.ppf(1.0 - alpha / 2.0)
    rate = float(np.mean(np.abs(z) > crit))
    return rate, float(np.sqrt(rate * (1.0 - rate) / z.size))


def rejection_rate_table(cfg: MCConfig, alpha: float = 0.05) -> list:
    cfg = replace(cfg, test_alpha=alpha)
    out = []
    for cell, res in run_replications(cfg).items():
        rate, se = rejection_rate(res.z, alpha)
        out.append(
            MCReport(
                cell,
                rejection_rate=rate,
                rejection_se=se,
                replications_used=int(np.isfinite(res.z).sum()),
                failures=len(res.failures),
            )
        )
    return out


def normality_check(estimates, theta_true, sigma_estimates, N: int, delta_n: float) -> list:
    """KS test of the standardized estimation errors against N(0, 1).

    ``sigma_estimates`` is either a (R, p) array of standard errors, a list of
    per-replication ``SigmaEstimate`` or a single ``SigmaEstimate``.
    Returns one ``(ks_statistic, p_value)`` per component.
    """
    est = np.asarray(estimates, dtype=float)
    if est.ndim == 1:
        est = est[:, None]
    if est.shape[0] < 50:
        raise ValueError("normality check needs at least 50 replications")
    if isinstance(sigma_estimates, SigmaEstimate):
        se = np.broadcast_to(standard_errors(sigma_estimates, N, delta_n), est.shape)
    elif len(sigma_estimates) and isinstance(sigma_estimates[0], SigmaEstimate):
        se = np.array([standard_errors(s, N, delta_n) for s in sigma_estimates])
    else:
        se = np.broadcast_to(np.asarray(sigma_estimates, dtype=float), est.shape)
    if np.any(se <= 0):
        raise ValueError("standard errors must be positive")
    ok = np.all(np.isfinite(est), axis=1) & np.all(np.isfinite(se), axis=1)
    z = (est[ok] - np.asarray(theta_true, dtype=float)) / se[ok]
    out = []
    for k in range(z.shape[1]):
        res = stats.kstest(z[:, k], "norm", method="asymp")
        out.append((float(res.statistic), float(res.pvalue)))
    return out


# ---------------------------------------------------------------------------
# presets reproducing the published tables


def table1_config(replications=1000, seed=0, workers=1, cells=None) -> MCConfig:
    cells = cells or [
        Cell(N, T, dt) for dt in (0.1, 0.05, 0.01) for T in (50.0, 100.0) for N in (50, 100)
    ]
    return MCConfig("linear", (0.5, 1.0, 1.0), cells, replications, seed, mu0=Mu0("dirac", (1.0,)), workers=workers)


TABLE2_THETA12 = (0.0, 0.1, 0.25, 0.5, 1.0)


def table2_config(replications=1000, seed=0, workers=1, cells=None) -> MCConfig:
    cells = cells or [
        Cell(N, T, 0.1, (0.5, t12, 1.0)) for t12 in TABLE2_THETA12 for T in (50.0, 100.0) for N in (50, 100)
    ]
    return MCConfig("linear", (0.5, 0.0, 1.0), cells, replications, seed, mu0=Mu0("dirac", (1.0,)), workers=workers)


def table3_config(replications=1000, seed=0, workers=1, cells=None) -> MCConfig:
    cells = cells or [Cell(N, T, 0.1) for T in (50.0, 100.0) for N in (50, 100)]
    return MCConfig(
        "opinion_smooth", (-0.5, 2.0, 0.04), cells, replications, seed, mu0=Mu0("gaussian", (0.0, 1.0)), workers=workers
    )


def estimation_table(cfg: MCConfig) -> list:
    return [rmse_bias_table(res.estimates, res.theta_true, cell) for cell, res in run_replications(cfg).items()]


def estimation_csv(reports: list, names) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "T", "delta_n", "component", "rmse", "bias", "failures"])
    for rep in reports:
        for k, name in enumerate(names):
            w.writerow([rep.cell.N, f"{rep.cell.T:g}", f"{rep.cell.delta_n:g}", name,
                        f"{rep.rmse[k]:.6f}", f"{rep.bias[k]:.6f}", rep.failures])
    return buf.getvalue()


def rejection_csv(reports: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta12", "N", "T", "reject_rate_pct", "se_pct"])
    for rep in reports:
        w.writerow([f"{rep.cell.theta[1]:g}", rep.cell.N, f"{rep.cell.T:g}",
                    f"{100 * rep.rejection_rate:.2f}", f"{100 * rep.rejection_se:.2f}"])
    return buf.getvalue()
