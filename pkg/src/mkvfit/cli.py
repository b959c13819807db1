"""Command-line interface: simulate, estimate, test, mc and diagnose.

Exit codes: 0 success, 1 usage error (bad arguments, files, configs),
2 numerical or modelling failure. Results go to stdout or ``--out``; logs go
to stderr. Values that start with ``-`` must be attached with ``=``, e.g.
``--theta=-0.5,2,0.04`` or ``--box=-5..5``.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import parse_config
from .contrast import MinimizeOptions, minimize_contrast
from .errors import ConfigError, MKVError
from .inference import estimate_sigma, identifiability_functionals, noninteraction_test, standard_errors
from .models import ParamBox, available_models, builtin_model
from .montecarlo import (
    Cell,
    MCConfig,
    estimation_csv,
    estimation_table,
    rejection_csv,
    rejection_rate_table,
    table1_config,
    table2_config,
    table3_config,
)
from .panel_io import load_panel, panel_to_bytes, panel_to_csv
from .simulate import Mu0, ObservationGrid, SimConfig, simulate_panel

log = logging.getLogger("mkvfit")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-joined reals, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty value list")
    return vals


def _interval(text: str) -> tuple:
    lo, sep, hi = text.partition("..")
    try:
        if not sep:
            raise ValueError
        return float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo..hi, got {text!r}") from None


def _intervals(text: str) -> list:
    return [_interval(part) for part in text.split(",") if part.strip()]


def _mu0(text: str) -> Mu0:
    try:
        return Mu0.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _default_seed() -> int:
    env = os.environ.get("MKV_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"MKV_SEED must be an integer, got {env!r}") from None


def _emit(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    path = Path(out)
    if isinstance(text, bytes):
        path.write_bytes(text)
    else:
        path.write_text(text)
    log.info("wrote %s", path)


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _model(name: str):
    if name not in available_models():
        raise UsageError(f"unknown model {name!r}; available: {', '.join(available_models())}")
    return builtin_model(name)


def _box(model, intervals):
    if not intervals:
        return None
    flat = [iv for group in intervals for iv in group]
    if len(flat) != model.p:
        raise UsageError(f"--box needs {model.p} intervals for {model.name}, got {len(flat)}")
    try:
        return ParamBox([lo for lo, _ in flat], [hi for _, hi in flat])
    except ValueError as exc:
        raise UsageError(f"--box: {exc}") from None


def _theta(model, values, flag="--theta"):
    if len(values) != model.p:
        raise UsageError(f"{flag} needs {model.p} values for {model.name} ({model.p1} drift then {model.p2} diffusion)")
    return model.theta(values)


def _load(path):
    try:
        return load_panel(path)
    except FileNotFoundError:
        raise UsageError(f"panel file not found: {path}") from None
    except ValueError as exc:
        raise UsageError(f"cannot read panel {path}: {exc}") from None


def _sim_config(args) -> tuple:
    try:
        cfg = SimConfig(args.N, args.T, args.dt_euler, args.seed, args.mu0)
        grid = ObservationGrid.from_step(args.T, args.dt_obs)
        grid.stride(args.dt_euler)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg, grid


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args):
    model = _model(args.model)
    theta = _theta(model, args.theta)
    cfg, grid = _sim_config(args)
    panel = simulate_panel(model, theta, cfg, grid)
    fmt = args.format or ("mkvp" if args.out and Path(args.out).suffix in (".mkvp", ".bin") else "csv")
    if fmt == "mkvp" and args.out in (None, "-"):
        sys.stdout.buffer.write(panel_to_bytes(panel))
        return
    _emit(panel_to_bytes(panel) if fmt == "mkvp" else panel_to_csv(panel), args.out)


def cmd_estimate(args):
    model = _model(args.model)
    panel = _load(args.panel)
    box = _box(model, args.box)
    res = minimize_contrast(model, panel, box, MinimizeOptions(method=args.method, starts=args.starts))
    if args.se:
        sig = estimate_sigma(model, res.theta_hat, panel)
        res.se = standard_errors(sig, panel.N, panel.delta_n)
    out = res.to_dict()
    out["param_names"] = list(model.param_names)
    _emit(_json(out), args.out)


def cmd_test(args):
    if not 0 < args.alpha < 1:
        raise UsageError("--alpha must lie in (0, 1)")
    panel = _load(args.panel)
    _emit(_json(noninteraction_test(panel, args.alpha).to_dict()), args.out)


def cmd_diagnose_ij(args):
    model = _model(args.model)
    theta = _theta(model, args.theta)
    theta0 = _theta(model, args.theta0, "--theta0")
    cfg, grid = _sim_config(args)
    I, J = identifiability_functionals(model, theta, theta0, cfg, grid)
    _emit(_json({"theta": theta.tolist(), "theta0": theta0.tolist(), "I": I, "J": J}), args.out)


_PRESETS = {"table1": table1_config, "table2": table2_config, "table3": table3_config}


def _filter_cells(cfg: MCConfig, args) -> MCConfig:
    cells = [
        c
        for c in cfg.cells
        if (not args.N or c.N in args.N)
        and (not args.T or c.T in args.T)
        and (not args.delta_n or any(abs(c.delta_n - d) < 1e-12 for d in args.delta_n))
    ]
    if not cells:
        raise UsageError("the --N/--T/--delta-n filters leave no cells")
    cfg.cells = cells
    return cfg


def cmd_mc(args):
    if args.replications < 1:
        raise UsageError("--replications must be at least 1")
    if args.table == "run":
        if not args.config:
            raise UsageError("mc run needs --config")
        exp = parse_config(args.config)
        cells = [Cell(g.N, g.T, g.delta_n) for g in exp.grids] if exp.grids else [Cell(exp.N, exp.T, exp.delta_n)]
        cfg = MCConfig(
            exp.model, tuple(exp.theta), cells, exp.replications, exp.seed, exp.euler_step,
            Mu0.parse(exp.mu0), exp.workers, exp.param_box(), exp.starts,
        )
        if args.seed_given:
            cfg.base_seed = args.seed
        if args.replications_given:
            cfg.replications = args.replications
        table = "estimation"
    else:
        cfg = _PRESETS[args.table](replications=args.replications, seed=args.seed)
        table = "rejection" if args.table == "table2" else "estimation"
    cfg.workers = args.workers
    cfg = _filter_cells(cfg, args)
    log.info("running %d cells x %d replications (seed %d)", len(cfg.cells), cfg.replications, cfg.base_seed)
    if table == "rejection":
        _emit(rejection_csv(rejection_rate_table(cfg, args.alpha)), args.out)
    else:
        names = builtin_model(cfg.model).param_names
        _emit(estimation_csv(estimation_table(cfg), names), args.out)


# ---------------------------------------------------------------------------


def build_parser(default_seed: int = 0) -> argparse.ArgumentParser:
    p = _Parser(prog="mkvfit", description="Simulate and fit McKean-Vlasov interacting particle systems.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    theta_help = "comma-joined reals, drift parameters first, then diffusion (use --theta=-1,... for a leading minus)"
    seed_help = f"random seed (default {default_seed}; MKV_SEED overrides the default)"

    def sim_args(sp):
        sp.add_argument("--N", type=int, required=True, help="number of particles")
        sp.add_argument("--T", type=float, required=True, help="time horizon")
        sp.add_argument("--dt-obs", type=float, required=True, help="observation step")
        sp.add_argument("--dt-euler", type=float, default=0.01, help="Euler step (default 0.01)")
        sp.add_argument("--mu0", type=_mu0, default=Mu0("dirac", (1.0,)),
                        help="initial law: dirac:X, gaussian:MEAN,SD or uniform:LO,HI (default dirac:1)")
        sp.add_argument("--seed", type=int, default=default_seed, help=seed_help)

    sp = sub.add_parser("simulate", help="simulate a particle panel")
    sp.add_argument("--model", required=True, help=f"one of {', '.join(available_models())}")
    sp.add_argument("--theta", type=_floats, required=True, help=theta_help)
    sim_args(sp)
    sp.add_argument("--format", choices=("csv", "mkvp"), help="output format (default from --out suffix, else csv)")
    sp.add_argument("--out", help="output file (default stdout)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="minimum-contrast estimate from a panel file")
    sp.add_argument("--model", required=True)
    sp.add_argument("--panel", required=True, help="CSV or MKVP panel")
    sp.add_argument("--box", type=_intervals, action="append",
                    help="lo..hi per component, comma-joined or repeated (use --box=-5..5 for negatives)")
    sp.add_argument("--starts", type=int, default=8)
    sp.add_argument("--method", choices=("auto", "closed_form", "profiled", "nelder_mead"), default="auto")
    sp.add_argument("--se", action="store_true", help="add plug-in standard errors")
    sp.add_argument("--out", help="output JSON file (default stdout)")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("test", help="test for zero interaction in the linear model")
    sp.add_argument("--panel", required=True)
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_test)

    sp = sub.add_parser("diagnose", help="identifiability diagnostics")
    dsub = sp.add_subparsers(dest="diagnostic", metavar="DIAGNOSTIC", parser_class=_Parser)
    dsub.required = True
    dp = dsub.add_parser("ij", help="I(theta) and J(theta2) on a panel simulated at theta0")
    dp.add_argument("--model", required=True)
    dp.add_argument("--theta", type=_floats, required=True, help=theta_help)
    dp.add_argument("--theta0", type=_floats, required=True, help="true parameter, same layout as --theta")
    sim_args(dp)
    dp.add_argument("--out")
    dp.set_defaults(func=cmd_diagnose_ij)

    sp = sub.add_parser("mc", help="Monte Carlo tables")
    sp.add_argument("table", choices=("table1", "table2", "table3", "run"),
                    help="preset table, or 'run' for an experiment config")
    sp.add_argument("--replications", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=default_seed, help=seed_help)
    sp.add_argument("--workers", type=int, default=0, help="worker processes (default: available CPUs)")
    sp.add_argument("--alpha", type=float, default=0.05, help="test level for table2")
    sp.add_argument("--N", type=int, action="append", help="keep only these N (repeatable)")
    sp.add_argument("--T", type=float, action="append", help="keep only these T (repeatable)")
    sp.add_argument("--delta-n", type=float, action="append", help="keep only these observation steps")
    sp.add_argument("--config", help="experiment JSON for 'mc run'")
    sp.add_argument("--out", help="output CSV file (default stdout)")
    sp.set_defaults(func=cmd_mc)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser(_default_seed())
    except UsageError as exc:
        print(f"mkvfit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.seed_given = any(a == "--seed" or a.startswith("--seed=") for a in argv)
    args.replications_given = any(a.startswith("--replications") for a in argv)

    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"mkvfit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MKVError as exc:
        print(f"mkvfit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"mkvfit: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
