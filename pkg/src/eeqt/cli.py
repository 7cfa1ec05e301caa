"""Command-line entry point.

Exit codes: 0 success, 1 validation or parse error, 2 numerical failure,
3 verification or comparison failure.  Errors are reported as a single JSON
line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass

import numpy as np

from . import files
from .ensemble import EnsembleEstimate, run_ensemble
from .errors import InputError, InvalidState, NumericalError
from .model import ExactPropagator, HybridPureState, embed_pure_state, validate
from .numerics import ToleranceConfig
from .pdp import SimulationConfig, uniform_grid
from .unravel import DiffusionConfig
from .verify import compare_ensemble_to_oracle, qsd_bias_constant, run_checks

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_CHECK = 0, 1, 2, 3
COMMANDS = ("validate", "exact", "simulate", "verify", "compare")

log = logging.getLogger("eeqt")


@dataclass
class RunManifest:
    command: str
    model_path: str | None = None
    state_path: str | None = None
    method: str | None = None
    horizon: float | None = None
    grid: str = "9"
    dt: float | None = None
    n_trajectories: int = 1000
    seed: int = 0
    workers: int = 1
    out: str | None = None
    events: str | None = None
    ensemble_path: str | None = None

    def check(self):
        if self.command not in COMMANDS:
            raise InputError(f"unknown command {self.command!r}")
        if self.command == "simulate" and self.method is None:
            raise InputError("simulate needs --method")
        if self.command == "compare" and self.method is None:
            raise InputError("compare needs --method")
        if self.method == "qsd" and self.dt is None:
            raise InputError("the qsd method needs --dt")
        if self.method not in (None, "pdp", "qsd", "mcwf"):
            raise InputError(f"unknown method {self.method!r}")
        if self.command in ("simulate", "compare") and self.n_trajectories < 2:
            raise InputError("--n must be at least 2")
        if self.workers < 1:
            raise InputError("--workers must be at least 1")
        if self.seed < 0:
            raise InputError("--seed must be non-negative")
        return self

    def grid_times(self) -> tuple:
        if self.horizon is None:
            raise InputError(f"{self.command} needs --horizon")
        spec = str(self.grid).strip()
        if "," in spec:
            return tuple(float(t) for t in spec.split(",") if t.strip())
        try:
            return uniform_grid(self.horizon, int(spec))
        except ValueError:
            return (float(spec),)


def _emit(text: str, path: str | None):
    if path:
        files.atomic_write(path, text)
    else:
        sys.stdout.write(text)


def _model(manifest):
    if not manifest.model_path:
        raise InputError(f"{manifest.command} needs --model")
    return validate(files.load_model(manifest.model_path), ToleranceConfig.from_env())


def _pure_state(manifest, model):
    if not manifest.state_path:
        raise InputError(f"{manifest.command} needs --state")
    state = files.load_state(manifest.state_path)
    if not isinstance(state, HybridPureState):
        raise InvalidState("simulation needs a pure_state file")
    return state.check(model, ToleranceConfig.from_env())


def _config(manifest, n=None):
    grid = manifest.grid_times()
    n = manifest.n_trajectories if n is None else n
    if manifest.method == "qsd":
        return DiffusionConfig(dt=manifest.dt, horizon=manifest.horizon, grid=grid,
                               seed=manifest.seed, n_trajectories=n)
    return SimulationConfig(horizon=manifest.horizon, grid=grid, seed=manifest.seed, n_trajectories=n)


def cmd_validate(manifest):
    model = _model(manifest)
    report = {"valid": True, "kind": model.kind, "dims": list(model.dims)}
    if manifest.state_path:
        files.load_state(manifest.state_path).check(model, ToleranceConfig.from_env())
    _emit(json.dumps(report) + "\n", manifest.out)
    return EXIT_OK


def cmd_exact(manifest):
    model = _model(manifest)
    if not manifest.state_path:
        raise InputError("exact needs --state")
    state = files.load_state(manifest.state_path)
    tol = ToleranceConfig.from_env()
    if isinstance(state, HybridPureState):
        rho0 = embed_pure_state(state.check(model, tol), model.dims)
    else:
        rho0 = state.check(model, tol)
    grid = manifest.grid_times()
    prop = ExactPropagator(model)
    densities = [prop(rho0, t) for t in grid]
    for d in densities:
        if not np.all(np.isfinite(d.vec())):
            raise NumericalError("exact propagation produced non-finite entries")
    _emit(files.ensemble_to_csv(EnsembleEstimate.exact(grid, densities)), manifest.out)
    return EXIT_OK


def cmd_simulate(manifest):
    model = _model(manifest)
    x0 = _pure_state(manifest, model)
    config = _config(manifest)
    estimate, records = run_ensemble(manifest.method, model, x0, config, workers=manifest.workers,
                                     keep_records=bool(manifest.events))
    if manifest.events:
        files.atomic_write(manifest.events, files.trajectories_to_jsonl(records, manifest.method))
    _emit(files.ensemble_to_csv(estimate), manifest.out)
    return EXIT_OK


def cmd_verify(manifest):
    model = _model(manifest) if manifest.model_path else None
    results = run_checks(seed=manifest.seed, model=model)
    passed = all(r["pass"] for r in results)
    _emit(json.dumps({"checks": results, "pass": passed}, indent=2) + "\n", manifest.out)
    return EXIT_OK if passed else EXIT_CHECK


def cmd_compare(manifest):
    model = _model(manifest)
    x0 = _pure_state(manifest, model)
    if manifest.ensemble_path:
        estimate = files.load_ensemble_csv(manifest.ensemble_path)
    else:
        estimate = run_ensemble(manifest.method, model, x0, _config(manifest), workers=manifest.workers)[0]
    if tuple(d for d in estimate.mean_blocks[0].dims) != model.dims:
        raise InputError("ensemble table does not match the model dimensions")
    bias = 0.0
    if manifest.method == "qsd":
        cfg = _config(manifest)
        bias = qsd_bias_constant(model, x0.psi, cfg) * manifest.dt
    report = compare_ensemble_to_oracle(model, x0, estimate, bias_allowance=bias)
    body = {"method": manifest.method, "bias_allowance": bias, **report.as_dict()}
    _emit(json.dumps(body, indent=2) + "\n", manifest.out)
    return EXIT_OK if report.passed else EXIT_CHECK


HANDLERS = {
    "validate": cmd_validate,
    "exact": cmd_exact,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "compare": cmd_compare,
}


def run(manifest: RunManifest) -> int:
    try:
        manifest.check()
        return HANDLERS[manifest.command](manifest)
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        # LinAlgError subclasses ValueError, so this clause must come first
        _error(exc)
        return EXIT_NUMERIC
    except (InputError, OSError, ValueError, KeyError, TypeError) as exc:
        _error(exc)
        return EXIT_INPUT


def _error(exc):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", dest="model_path", metavar="PATH")
    common.add_argument("--state", dest="state_path", metavar="PATH")
    common.add_argument("--method", choices=("pdp", "qsd", "mcwf"))
    common.add_argument("--horizon", type=float, metavar="T")
    common.add_argument("--grid", default="9", metavar="N|t1,t2,...")
    common.add_argument("--dt", type=float, metavar="X")
    common.add_argument("--n", dest="n_trajectories", type=int, default=1000, metavar="N")
    common.add_argument("--seed", type=int, default=0, metavar="S")
    common.add_argument("--workers", type=int, default=1, metavar="W")
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--events", metavar="PATH")

    parser = argparse.ArgumentParser(prog="eeqt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("validate", parents=[common], help="check a model (and optional state) file")
    p.add_argument("path", nargs="?", help="model file (alternative to --model)")
    sub.add_parser("exact", parents=[common], help="propagate a state with the exact superoperator")
    sub.add_parser("simulate", parents=[common], help="run a Monte Carlo ensemble")
    sub.add_parser("verify", parents=[common], help="randomized generator identity checks")
    p = sub.add_parser("compare", parents=[common], help="ensemble estimate against the exact oracle")
    p.add_argument("ensemble", nargs="?", help="ensemble CSV to compare instead of simulating")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    fields = {k: v for k, v in vars(args).items() if k in RunManifest.__dataclass_fields__}
    if args.command == "validate" and args.path and not args.model_path:
        fields["model_path"] = args.path
    if args.command == "compare":
        fields["ensemble_path"] = args.ensemble
    return run(RunManifest(**fields))


if __name__ == "__main__":
    sys.exit(main())
