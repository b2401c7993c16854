"""Command-line interface.

Exit codes: 0 success, 1 missing input file, 2 invalid input, 3 solver or
optimizer failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .dataio import DataFormatError, dataset_to_csv, games_to_json, read_dataset
from .estimate import DatasetError, FitError, bootstrap_se, fit, SearchConfig
from .games import (
    EXPERIMENT_GAME_PARAMS,
    Family,
    GameSpec,
    GameValidationError,
    Rescale,
    make_game,
    experiment_game_specs,
)
from .predict import FAMILY_RANGES, c_grid, cdf_table_csv, design_scan, parse_pair, terminal_distribution
from .simulate import SimConfig, simulate
from .solvers import ConvergenceError, ModelSpec, SolverConfig
from .stats import TESTS, results_json, run_tests

log = logging.getLogger("centipede")

EXIT_OK, EXIT_NOT_FOUND, EXIT_INVALID, EXIT_FAILED = 0, 1, 2, 3


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps({"level": record.levelname.lower(), "msg": record.getMessage()})


def _setup_logging(args) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter() if args.json_logs else logging.Formatter("%(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.WARNING if args.quiet else logging.INFO)
    log.propagate = False


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# argument helpers


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    p.add_argument("--quiet", action="store_true", help="only warnings and errors on stderr")
    p.add_argument("--json-logs", action="store_true", help="log to stderr as JSON lines")


def _add_model(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--model", choices=["dch", "qdch", "aqre"], required=required)
    p.add_argument("--tau", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--kmax", type=int, default=50)


def _add_solver(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tie-rule", choices=["pass", "uniform", "take"], default="pass")
    p.add_argument("--max-steps", type=int, default=SolverConfig.max_steps,
                   help="homotopy step budget for AQRE")
    p.add_argument("--max-iterations", type=int, default=SolverConfig.max_iterations,
                   help="corrector iterations per homotopy step")


def _add_game(p: argparse.ArgumentParser, with_c: bool = True) -> None:
    if with_c:
        p.add_argument("--game", choices=sorted(EXPERIMENT_GAME_PARAMS),
                       help="one of the built-in experimental games (rescaled)")
        p.add_argument("--c", type=float)
        p.add_argument("--family", choices=[f.value for f in Family if f is not Family.CUSTOM])
    else:
        p.add_argument("--family", choices=[f.value for f in Family if f is not Family.CUSTOM],
                       required=True)
    p.add_argument("--pi", type=float, default=2.0)
    p.add_argument("--stages", type=int, default=6)
    p.add_argument("--rescale-a", type=float, default=1.0)
    p.add_argument("--rescale-b", type=float, default=0.0)


def _model(args) -> ModelSpec:
    try:
        return ModelSpec(args.model, args.tau, args.lam, args.kmax)
    except ValueError as exc:
        raise GameValidationError(str(exc)) from None


def _solver_cfg(args) -> SolverConfig:
    return SolverConfig(tie_rule=args.tie_rule, max_steps=args.max_steps,
                        max_iterations=args.max_iterations)


def _game_spec(args) -> tuple[str, GameSpec]:
    if getattr(args, "game", None):
        return args.game, experiment_game_specs()[args.game]
    if args.family is None or args.c is None:
        raise GameValidationError("give --game, or --family together with --c")
    spec = GameSpec(args.family, c=args.c, stages=args.stages, pi=args.pi,
                    rescale=Rescale(args.rescale_a, args.rescale_b))
    return f"{args.family}-{args.c:g}", spec


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args) -> int:
    gid, spec = _game_spec(args)
    model = _model(args)
    sol = model.solve(make_game(spec, gid), args.form, _solver_cfg(args))
    out = {"game": {"id": gid, **spec.to_dict()}, "solution": sol.to_dict()}
    out["terminal_distribution"] = terminal_distribution(sol).tolist()
    _emit(_dump(out), args.out)
    return EXIT_OK


def cmd_scan(args) -> int:
    family = Family(args.family)
    lo, hi = FAMILY_RANGES[family]
    c_min = lo if args.c_min is None else args.c_min
    c_max = hi if args.c_max is None else args.c_max
    try:
        grid = c_grid(c_min, c_max, args.step)
    except ValueError as exc:
        raise GameValidationError(str(exc)) from None
    model = _model(args)
    scan = design_scan(family, model, args.pair, grid, D=args.stages // 2, pi=args.pi,
                       rescale=Rescale(args.rescale_a, args.rescale_b), cfg=_solver_cfg(args),
                       threads=args.threads)
    bad = sum(s != "ok" for s in scan.status)
    if bad:
        log.warning("%d of %d grid points failed", bad, len(grid))
    _emit(scan.to_csv(), args.out)
    return EXIT_OK


def cmd_cdf(args) -> int:
    gid, spec = _game_spec(args)
    model = _model(args)
    a, b = parse_pair(args.pair)
    game = make_game(spec, gid)
    cfg = _solver_cfg(args)
    da = terminal_distribution(model.solve(game, a, cfg))
    db = terminal_distribution(model.solve(game, b, cfg))
    _emit(cdf_table_csv(da, db), args.out)
    return EXIT_OK


def cmd_fit(args) -> int:
    ds = read_dataset(args.data)
    if args.forms:
        ds = ds.subset(forms=args.forms.split(","))
    log.info("fitting %s to %d observations", args.model, ds.n_obs)
    cfg = _solver_cfg(args)
    res = fit(args.model, ds, SearchConfig(), args.kmax, cfg)
    if args.bootstrap:
        res = bootstrap_se(args.model, ds, res, B=args.bootstrap, seed=args.seed,
                           k_max=args.kmax, cfg=cfg, threads=args.threads)
        if res.bootstrap_failures:
            log.warning("%d bootstrap replicates failed", res.bootstrap_failures)
    _emit(res.to_json(), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    path = Path(args.config)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise DataFormatError(f"{path}: expected a JSON object")
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        cfg = SimConfig.from_dict(raw)
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    ds = simulate(cfg, _solver_cfg(args), threads=args.threads)
    text = dataset_to_csv(ds)
    if args.out:
        Path(args.out).write_text(text)
        Path(f"{args.out}.games.json").write_text(games_to_json(cfg.games))
        log.info("wrote %d rows to %s", ds.n_obs, args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_test(args) -> int:
    ds = read_dataset(args.data)
    tests = [t.strip() for t in args.tests.split(",") if t.strip()]
    unknown = set(tests) - set(TESTS)
    if unknown:
        raise GameValidationError(f"unknown tests {sorted(unknown)}; choose from {','.join(TESTS)}")
    _emit(results_json(run_tests(ds, tests)), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="centipede", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one game and write the solution as JSON")
    _add_game(s)
    s.add_argument("--form", choices=["dr", "rs", "fs"], required=True)
    _add_model(s)
    _add_solver(s)
    s.add_argument("--out")
    _add_common(s)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("scan", help="sup-norm between two forms over a grid of c")
    _add_game(s, with_c=False)
    s.add_argument("--c-min", type=float)
    s.add_argument("--c-max", type=float)
    s.add_argument("--step", type=float, default=0.01)
    s.add_argument("--pair", default="rs-dr", choices=["rs-dr", "rs-fs", "fs-dr"])
    _add_model(s)
    _add_solver(s)
    s.add_argument("--out")
    _add_common(s)
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("cdf", help="terminal-node CDFs of two forms in one game")
    _add_game(s)
    s.add_argument("--pair", default="rs-dr", choices=["rs-dr", "rs-fs", "fs-dr"])
    _add_model(s)
    _add_solver(s)
    s.add_argument("--out")
    _add_common(s)
    s.set_defaults(func=cmd_cdf)

    s = sub.add_parser("fit", help="maximum-likelihood fit with optional bootstrap")
    s.add_argument("--data", required=True)
    s.add_argument("--model", choices=["dch", "qdch", "aqre"], required=True)
    s.add_argument("--kmax", type=int, default=50)
    s.add_argument("--forms", help="comma-separated subset of dr,rs,fs")
    s.add_argument("--bootstrap", type=int, default=0, metavar="B")
    s.add_argument("--seed", type=int, default=0)
    _add_solver(s)
    s.add_argument("--out")
    _add_common(s)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="simulate a dataset from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    _add_solver(s)
    s.add_argument("--out")
    _add_common(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("test", help="nonparametric tests across forms")
    s.add_argument("--data", required=True)
    s.add_argument("--tests", default=",".join(TESTS))
    s.add_argument("--out")
    _add_common(s)
    s.set_defaults(func=cmd_test)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args)
    if args.threads < 1:
        log.error("--threads must be >= 1")
        return EXIT_INVALID
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except FileNotFoundError as exc:
        log.error("file not found: %s", exc.filename or exc)
        return EXIT_NOT_FOUND
    except (ConvergenceError, FitError) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_FAILED
    except (GameValidationError, DataFormatError, DatasetError, ValueError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID
    log.info("done in %.2fs", time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
