"""Command-line entry point: ``run``, ``stationary``, ``sweep`` and ``check``."""
from __future__ import annotations

import argparse
import itertools
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import diagnostics, dynamics, io
from .dynamics import FROM_SNAPSHOT, STATIONARY, ERROR, STEP_LIMIT

log = logging.getLogger("polyblend")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_SELFTEST = 3


class RuntimeFailure(RuntimeError):
    pass


def _parse_assignments(items, flag) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise io.ConfigError(f"{flag} expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _initial(cfg: io.RunConfig) -> dynamics.State:
    ini = cfg.init
    try:
        return dynamics.initial_state(cfg.grid, ini.kind, ini.u_mean, ini.v_mean, ini.amplitude, ini.seed,
                                      cfg.model.potential.delta,
                                      ini.snapshot if ini.kind == FROM_SNAPSHOT else None)
    except (ValueError, OSError) as exc:
        raise io.ConfigError(f"init: {exc}") from None


def simulate(cfg: io.RunConfig, until_stationary: bool = False) -> dynamics.RunResult:
    """Run one configuration, writing every requested output into ``cfg.output.directory``."""
    out = io.ensure_dir(cfg.output.directory)
    formats = set(cfg.output.formats)
    s0 = _initial(cfg)
    sched = cfg.schedule
    t_end = math.inf if until_stationary else sched.t_end
    if t_end < s0.t:
        raise io.ConfigError(f"schedule.t_end: {t_end} is before the initial time {s0.t}")
    counter = itertools.count(1)

    def snapshot(s):
        tag = f"snap_{next(counter) * sched.snapshot_every:09d}"
        if "fld" in formats:
            io.write_snapshot(s, out / f"{tag}.fld")
        if "pgm" in formats:
            io.write_pgm(s.u, out / f"{tag}_u.pgm")
            io.write_pgm(s.v, out / f"{tag}_v.pgm")

    writer = io.DiagnosticsWriter(out / "diagnostics.csv") if "csv" in formats else None
    try:
        res = dynamics.run(s0, cfg.model, cfg.stepper, t_end,
                           on_record=writer, on_snapshot=snapshot,
                           diag_every=sched.diag_every, snapshot_every=sched.snapshot_every,
                           stationarity_tol=sched.stationarity_tol if until_stationary else None,
                           max_steps=sched.max_steps, raise_errors=False)
    finally:
        if writer is not None:
            writer.close()
    if "fld" in formats:
        io.write_snapshot(res.state, out / "final.fld")
    if "pgm" in formats:
        io.write_pgm(res.state.u, out / "final_u.pgm")
        io.write_pgm(res.state.v, out / "final_v.pgm")
    log.info("%s: %d steps, %d guard retries, t=%.6g, reason=%s",
             out, res.steps, res.retries, res.state.t, res.reason)
    return res


def _check_result(res: dynamics.RunResult, until_stationary: bool) -> None:
    if res.reason == ERROR:
        raise RuntimeFailure(f"step failed at t={res.state.t:.6g}: {res.error}")
    if until_stationary and res.reason != STATIONARY:
        raise RuntimeFailure(f"no stationary state within {res.steps} steps")
    if not until_stationary and res.reason == STEP_LIMIT:
        raise RuntimeFailure(f"schedule.max_steps reached at t={res.state.t:.6g}")


def cmd_run(args) -> int:
    cfg = io.load_config(args.config, _parse_assignments(args.set, "--set"))
    res = simulate(cfg)
    _check_result(res, False)
    print(f"t={res.state.t:.17g} steps={res.steps} retries={res.retries} reason={res.reason}")
    return EXIT_OK


def cmd_stationary(args) -> int:
    cfg = io.load_config(args.config, _parse_assignments(args.set, "--set"))
    if cfg.model.mode != dynamics.CONSERVED:
        raise io.ConfigError("model.mode: stationary requires conserved mode")
    res = simulate(cfg, until_stationary=True)
    _check_result(res, True)
    rep = diagnostics.stationarity(res.state, cfg.model, cfg.schedule.stationarity_tol)
    print(f"t={res.state.t:.17g} steps={res.steps} retries={res.retries}")
    for name in ("is_stationary", "mu_infty", "phi_infty", "residual_mu", "residual_phi", "grad_sum"):
        val = getattr(rep, name)
        print(f"{name} = {val if isinstance(val, bool) else format(val, '.17g')}")
    return EXIT_OK


def _parse_vary(items) -> list[tuple[str, list[str]]]:
    out = []
    for key, values in _parse_assignments(items, "--vary").items():
        vals = [x.strip() for x in values.split(",") if x.strip()]
        if not vals:
            raise io.ConfigError(f"--vary {key}: no values given")
        out.append((key, vals))
    return out


def sweep_cells(text: str, vary, base_overrides: dict, directory: str) -> list[dict]:
    """Validated override sets, one per point of the Cartesian product of ``vary``."""
    keys = [k for k, _ in vary]
    cells = []
    for i, combo in enumerate(itertools.product(*(v for _, v in vary))):
        ov = dict(base_overrides)
        ov.update(zip(keys, combo))
        ov["output.directory"] = str(Path(directory) / f"cell_{i:03d}")
        io.parse_config(text, ov)
        cells.append(ov)
    return cells


def _run_cell(text: str, overrides: dict) -> tuple[str, str]:
    cfg = io.parse_config(text, overrides)
    res = simulate(cfg)
    if res.reason in (ERROR, STEP_LIMIT):
        return overrides["output.directory"], f"failed: {res.error or res.reason}"
    return overrides["output.directory"], "ok"


def cmd_sweep(args) -> int:
    text = Path(args.config).read_text(encoding="utf-8")
    base = _parse_assignments(args.set, "--set")
    vary = _parse_vary(args.vary)
    directory = args.out or io.parse_config(text, base).output.directory
    cells = sweep_cells(text, vary, base, directory)
    io.ensure_dir(directory)
    keys = [k for k, _ in vary]
    with open(Path(directory) / "sweep.csv", "w", encoding="utf-8") as fh:
        fh.write(",".join(["cell", *keys]) + "\n")
        for ov in cells:
            fh.write(",".join([Path(ov["output.directory"]).name, *(ov[k] for k in keys)]) + "\n")
    if args.jobs == 1:
        results = [_run_cell(text, ov) for ov in cells]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_cell, itertools.repeat(text), cells))
    failed = 0
    for cell, status in results:
        print(f"{cell}: {status}")
        failed += status != "ok"
    if failed:
        raise RuntimeFailure(f"{failed} of {len(cells)} cells failed")
    return EXIT_OK


def cmd_check(args) -> int:
    from .selftest import run_checks

    results = run_checks(trials=args.trials)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    n_bad = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - n_bad}/{len(results)} checks passed")
    return EXIT_OK if n_bad == 0 else EXIT_SELFTEST


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyblend", description="Coupled Cahn-Hilliard / Oono blend simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to a key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        return p

    with_config("run", "integrate to schedule.t_end").set_defaults(func=cmd_run)
    with_config("stationary", "integrate until the chemical potentials are constant").set_defaults(
        func=cmd_stationary)
    p = with_config("sweep", "run the Cartesian product of parameter variations")
    p.add_argument("--vary", action="append", required=True, metavar="KEY=A,B,C",
                   help="values for one key (repeatable)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--out", help="parent directory for cell_XXX outputs (default output.directory)")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("check", help="operator-identity and potential-certificate self-test")
    p.add_argument("--trials", type=int, default=100, help="random fields per operator identity")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except io.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, io.SnapshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeFailure, dynamics.StepError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
