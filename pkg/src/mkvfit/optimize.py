"""Box-projected Nelder-Mead with deterministic multi-start."""

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .models import ParamBox


@dataclass
class NMResult:
    x: np.ndarray
    fun: float
    nit: int
    nfev: int
    converged: bool
    f_start: float


def nelder_mead(f, x0, box: ParamBox, xtol=1e-8, max_iter=None, init_scale=0.1) -> NMResult:
    """Minimize ``f`` over ``box``; trial points are clipped onto the box.

    Stops when the simplex diameter drops below ``xtol * (1 + |best|)`` or
    after ``max_iter`` (default 500 * dim) iterations.
    """
    x0 = box.clip(x0)
    d = x0.size
    max_iter = 500 * d if max_iter is None else max_iter
    nfev = 0

    def fx(x):
        nonlocal nfev
        nfev += 1
        v = float(f(x))
        return v if np.isfinite(v) else np.inf

    sim = [x0]
    for k in range(d):
        step = init_scale * box.width[k]
        y = x0.copy()
        y[k] = x0[k] + step if x0[k] + step <= box.upper[k] else x0[k] - step
        sim.append(box.clip(y))
    sim = np.array(sim)
    fs = np.array([fx(s) for s in sim])
    f_start = fs[0]

    converged = False
    nit = 0
    while nit < max_iter:
        order = np.lexsort((np.arange(d + 1), fs))
        sim, fs = sim[order], fs[order]
        diam = np.max(np.linalg.norm(sim[1:] - sim[0], axis=1))
        if diam <= xtol * (1.0 + np.linalg.norm(sim[0])):
            converged = True
            break
        nit += 1
        centroid = sim[:-1].mean(axis=0)
        xr = box.clip(centroid + (centroid - sim[-1]))
        fr = fx(xr)
        if fr < fs[0]:
            xe = box.clip(centroid + 2.0 * (centroid - sim[-1]))
            fe = fx(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = box.clip(centroid + 0.5 * (xr - centroid))
        else:
            xc = box.clip(centroid + 0.5 * (sim[-1] - centroid))
        fc = fx(xc)
        if fc < min(fr, fs[-1]):
            sim[-1], fs[-1] = xc, fc
            continue
        sim[1:] = sim[0] + 0.5 * (sim[1:] - sim[0])
        fs[1:] = [fx(s) for s in sim[1:]]

    best = int(np.argmin(fs))
    return NMResult(sim[best].copy(), float(fs[best]), nit, nfev, converged, float(f_start))


def start_points(box: ParamBox, starts: int) -> np.ndarray:
    """Box center followed by ``starts - 1`` Halton points mapped into the box."""
    pts = [box.center]
    if starts > 1:
        # drop the Halton origin, which would land on the lower corner
        h = qmc.Halton(d=box.dim, scramble=False).random(starts)[1:]
        pts.extend(box.lower + h * box.width)
    return np.array(pts[:starts])


def multistart(f, box: ParamBox, starts=8, xtol=1e-8, max_iter=None, polish=True):
    """Run Nelder-Mead from every start point; return (best, all runs).

    Ties on the objective break lexicographically on x. ``polish`` restarts
    the winning run once from its own optimum with a fresh, small simplex.
    """
    runs = [nelder_mead(f, x0, box, xtol=xtol, max_iter=max_iter) for x0 in start_points(box, starts)]
    best = min(runs, key=lambda r: (r.fun, tuple(r.x)))
    if polish:
        again = nelder_mead(f, best.x, box, xtol=xtol, max_iter=max_iter, init_scale=1e-3)
        if again.fun <= best.fun:
            again.nit += best.nit
            again.nfev += best.nfev
            again.f_start = best.f_start
            best = again
    return best, runs
