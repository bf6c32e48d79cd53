"""Command-line front end.

Every failure prints one line to stderr::

    refab-error exit=<code> kind=<ExceptionName> message=<text>

with exit code 1 for configuration problems, 2 for solver/model errors and
3 for file I/O.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, load_config
from .control import CostWeights, solve_riccati_steady
from .errors import ParseError, RefabError
from .experiments import SweepRow, run_scenario, sweep, sweep_csv
from .linear import linearize
from .regulator import build_staged_controller
from .storage import KernelCache, KernelFileError, format_bundle, save_kernel
from .transport import DensityField, simulate_nonlinear, steady_density_for_flux

MINIFAB_COLUMNS = ("t", "u", "y", "d_r", "e")


class UsageError(RefabError):
    exit_code = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _config(args) -> ScenarioConfig:
    return load_config(args.config) if args.config else ScenarioConfig()


def _target(cfg: ScenarioConfig, override, default_name: str) -> Path:
    if override:
        return Path(override)
    return Path(cfg.output.dir) / default_name


def _ensure_parent(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _kernel_source(args, weights, n_cells):
    if getattr(args, "kernel_cache", None):
        return KernelCache(args.kernel_cache).source(weights, n_cells)
    return None


def cmd_simulate(args) -> int:
    cfg = _config(args)
    params = cfg.velocity_params()
    influx = args.influx if args.influx is not None else cfg.demand.initial
    n = cfg.grid.N
    rho0 = DensityField.constant(steady_density_for_flux(params, cfg.demand.initial), n)
    dt = cfg.grid.dt if cfg.grid.dt is not None else 1.0 / (n * params.top_speed)
    series, _ = simulate_nonlinear(params, rho0, float(influx), cfg.grid.T, dt)
    # open-loop runs have no demand; e compares the outflux with the applied influx
    series.e = series.y - series.u
    series.to_csv(_ensure_parent(_target(cfg, args.out, cfg.output.series)))
    return 0


def cmd_riccati(args) -> int:
    cfg = _config(args)
    params = cfg.velocity_params()
    weights = cfg.cost_weights()
    rho_bar = args.rho_bar
    if rho_bar is None:
        rho_bar = cfg.ladder.rho_start
    if rho_bar is None:
        rho_bar = steady_density_for_flux(params, cfg.demand.initial)
    model = linearize(params, rho_bar)
    source = _kernel_source(args, weights, cfg.grid.N)
    kernel = source(model) if source else solve_riccati_steady(model, weights, cfg.grid.N)
    save_kernel(kernel, _ensure_parent(_target(cfg, args.out, cfg.output.kernel)))
    return 0


def _controller(args, cfg, scenario):
    source = _kernel_source(args, scenario.weights, scenario.n_cells)
    return build_staged_controller(
        scenario.params, scenario.ladder(), scenario.weights, scenario.n_cells,
        amplitude=scenario.amplitude, omega=scenario.omega, kernel_source=source,
    )


def cmd_regulator(args) -> int:
    cfg = _config(args)
    scenario = cfg.scenario()
    controller = _controller(args, cfg, scenario)
    paths = None
    if cfg.output.emit_kernel and scenario.weights.q0 > 0:
        stem = Path(cfg.output.kernel)
        paths = []
        for k, stage in enumerate(controller.stages):
            path = _ensure_parent(Path(cfg.output.dir) / f"{stem.stem}-stage{k + 1}{stem.suffix}")
            save_kernel(stage.kernel, path)
            paths.append(path.name)
    if cfg.output.emit_bundle:
        target = _ensure_parent(_target(cfg, args.out, cfg.output.bundle))
        target.write_text(format_bundle(controller, paths))
    return 0


def cmd_track(args) -> int:
    cfg = _config(args)
    scenario = cfg.scenario()
    source = _kernel_source(args, scenario.weights, scenario.n_cells)
    series, metrics = run_scenario(scenario, source)
    series.to_csv(_ensure_parent(_target(cfg, args.out, cfg.output.series)))
    if args.metrics:
        row = SweepRow(scenario.d, scenario.n_cells, scenario.weights.q0, scenario.weights.R, metrics)
        sweep_csv([row], _ensure_parent(Path(args.metrics)))
    return 0


def cmd_minifab(args) -> int:
    cfg = _config(args)
    scenario = cfg.scenario(d=args.d, preset_weights=True)
    source = _kernel_source(args, scenario.weights, scenario.n_cells)
    series, metrics = run_scenario(scenario, source)
    out = args.out or Path(cfg.output.dir) / f"minifab_d{args.d}.csv"
    series.to_csv(_ensure_parent(Path(out)), columns=MINIFAB_COLUMNS)
    print(
        f"d={args.d} terminal_error={metrics.terminal_error!r} "
        f"dip={metrics.dip_magnitude!r} clamp_fraction={metrics.clamp_fraction!r}"
    )
    return 0


def _list(text, convert):
    try:
        return [convert(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad comma-separated list: {text!r}") from None


def _floats(text):
    return _list(text, float)


def _ints(text):
    return _list(text, int)


def cmd_sweep(args) -> int:
    cfg = _config(args)
    base = cfg.scenario(preset_weights=True)
    q0s = _floats(args.q0) if args.q0 else [base.weights.q0]
    rs = _floats(args.R) if args.R else [base.weights.R]
    grid = [CostWeights(q0=q, R=r, q1_kind=base.weights.q1_kind, sigma=base.weights.sigma,
                        pf_kind=base.weights.pf_kind, p0=base.weights.p0)
            for q in q0s for r in rs]
    rows = sweep(_ints(args.d), _ints(args.N) if args.N else [base.n_cells], grid, base=base)
    out = _target(cfg, args.out, cfg.output.metrics)
    sweep_csv(rows, _ensure_parent(out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="refab", description="Re-entrant line transport model and optimal boundary control.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text, out_help="output file (default from config)"):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="scenario file with 'section.key = value' lines")
        p.add_argument("--out", help=out_help)
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "open-loop nonlinear plant run")
    p.add_argument("--influx", type=float, help="constant influx (default: demand.initial)")

    p = add("riccati", cmd_riccati, "solve and export a steady feedback kernel")
    p.add_argument("--rho-bar", type=float, help="set point (default: ladder start)")
    p.add_argument("--kernel-cache", help="directory for cached kernels")

    p = add("regulator", cmd_regulator, "solve per-stage kernels and feedforward, write the bundle")
    p.add_argument("--kernel-cache", help="directory for cached kernels")

    p = add("track", cmd_track, "closed loop of the staged tracking law")
    p.add_argument("--kernel-cache", help="directory for cached kernels")
    p.add_argument("--metrics", help="also write a one-row metrics CSV here")

    p = add("minifab", cmd_minifab, "mini-fab step demand 4 -> 60/11 at t = 1")
    p.add_argument("--d", type=int, choices=(2, 3), default=3)
    p.add_argument("--kernel-cache", help="directory for cached kernels")

    p = add("sweep", cmd_sweep, "metrics over d x N x (q0, R)")
    p.add_argument("--d", default="2,3", help="comma-separated stage counts")
    p.add_argument("--N", help="comma-separated grid sizes")
    p.add_argument("--q0", help="comma-separated q0 values")
    p.add_argument("--R", help="comma-separated R values")
    return parser


def _report(exc: BaseException, code: int) -> int:
    message = " ".join(str(exc).split())
    print(f"refab-error exit={code} kind={type(exc).__name__} message={message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ParseError, UsageError) as exc:
        return _report(exc, 1)
    except KernelFileError as exc:
        return _report(exc, 3)
    except RefabError as exc:
        return _report(exc, exc.exit_code)
    except OSError as exc:
        return _report(exc, 3)
    except ValueError as exc:
        return _report(exc, 2)
    except np.linalg.LinAlgError as exc:
        return _report(exc, 2)


if __name__ == "__main__":
    sys.exit(main())
