"""Command-line entry point: solve, simulate, oracle, verify."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__, oracle, verify
from .leader import RestrictionError
from .model import ConfigError, GameSpec, check_aligned, load_spec, validate_spec
from .numerics import IntegrationBlowup
from .pipeline import DEFAULT_GRID, solve_equilibrium
from .simulate import estimate_objectives, objectives_csv, paths_csv, simulate_paths
from .stage1 import COMPENSATED, PINNED

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3
HEADER = f"# mfstackelberg {__version__}\n"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfstackelberg", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("solve", "simulate", "oracle", "verify"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--out", type=Path, default=Path("."))
        s.add_argument("--grid", type=int, default=DEFAULT_GRID)
        s.add_argument("--paths", type=int, default=100_000)
        s.add_argument("--steps", type=int, default=None, help="simulation steps (default 256) or tree steps")
        s.add_argument("--seed", type=int, default=verify.Budget.seed)
        s.add_argument("--stage1-mode", choices=(COMPENSATED, PINNED), default=COMPENSATED)
        s.add_argument("--dump-paths", type=int, default=0, metavar="K")
        s.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    return p


def _write(out: Path, name: str, body: str) -> None:
    (out / name).write_text(HEADER + body)


def _load(path: Path) -> GameSpec:
    spec = load_spec(path.read_text())
    report = validate_spec(spec)
    if not report.ok:
        raise ConfigError(f"invalid spec: {report}")
    return spec


def cmd_solve(spec: GameSpec, args) -> int:
    eq = solve_equilibrium(spec, args.grid, args.stage1_mode)
    _write(args.out, "stage2.csv", eq.stage2.to_csv())
    _write(args.out, "kappa.csv", eq.kappa.to_csv())
    _write(args.out, "stage1.csv", eq.stage1.to_csv())
    if eq.leader is not None:
        _write(args.out, "leader.csv", eq.leader.to_csv())
    else:
        print("pinned stage-1 mode is diagnostic only; leader.csv not written", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(spec: GameSpec, args) -> int:
    n_steps = args.steps or 256
    check_aligned(spec, n_steps)
    eq = solve_equilibrium(spec, args.grid)
    bundle = simulate_paths(eq, args.paths, n_steps, args.seed, n_record=args.dump_paths, workers=args.workers)
    _write(args.out, "objectives.csv", objectives_csv(estimate_objectives(bundle), n_steps, args.seed))
    if args.dump_paths:
        _write(args.out, "paths.csv", paths_csv(bundle))
    return EXIT_OK


def cmd_oracle(spec: GameSpec, args) -> int:
    eq = solve_equilibrium(spec, args.grid)
    v = eq.values()
    steps = (args.steps,) if args.steps else (2, 4, 8)
    rows = oracle.compare(eq.leader.root_controls(), (v.J0, v.J1, v.J2), spec, steps)
    _write(args.out, "oracle_report.csv", oracle.report_csv(rows))
    return EXIT_OK


def cmd_verify(spec: GameSpec, args) -> int:
    budget = verify.Budget(grid_n=args.grid, paths=args.paths, seed=args.seed,
                           sim_steps=args.steps or verify.Budget.sim_steps)
    outcomes = verify.run_suite(spec, budget)
    _write(args.out, "verify_report.csv", verify.report_csv(outcomes))
    print(verify.summary(outcomes))
    if not outcomes[0].passed:
        return EXIT_INVALID
    return EXIT_OK if verify.suite_passed(outcomes) else EXIT_VERIFY


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "oracle": cmd_oracle, "verify": cmd_verify}


def main(argv: list[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        # argparse uses status 2, which is reserved for numerical failures here
        return EXIT_INVALID if e.code else EXIT_OK
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "verify":
            # the suite reports validation failures itself
            spec = load_spec(args.config.read_text())
        else:
            spec = _load(args.config)
        return COMMANDS[args.command](spec, args)
    except (ConfigError, RestrictionError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except IntegrationBlowup as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
