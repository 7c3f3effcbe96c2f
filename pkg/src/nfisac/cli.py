"""Batch front-end: dataset generation, solving, evaluation, sweeps.

Determinism contract: every random quantity is pinned to named streams,
so reruns and worker counts never change any output byte.

  * positions of record i        -> rng stream (seed, i)
  * CSI error draw of record i   -> rng stream (seed, i, 1)
  * solver init for record i     -> rng stream (seed, i, 2), i = file position

Exit codes: 0 on success (including runs where some scenarios come back
infeasible; those are flagged, not fatal), 1 on schema or I/O errors,
2 on usage errors.
"""

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from functools import partial

import numpy as np

from .bcd import BcdConfig, run_bcd
from .errors import ConfigurationError, SchemaError
from .geometry import SystemConfig
from .metrics import evaluate
from .records import (
    CsiRecord,
    EvalRow,
    SolutionRecord,
    export_eval_csv,
    read_dataset,
    read_solutions,
    write_dataset,
    write_solutions,
)
from .scenarios import ScenarioConfig, perturb_csi, sample_scenario, scenario_rng


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--M", type=int, default=9, help="BS antennas")
    p.add_argument("--K", type=int, default=4, help="communication users")
    p.add_argument("--L", type=int, default=2, help="sensing targets")
    p.add_argument("--Nx", type=int, default=21, help="RIS columns")
    p.add_argument("--Nz", type=int, default=21, help="RIS rows")
    p.add_argument("--P0", type=float, default=1.0, help="transmit power budget (W)")
    p.add_argument("--rho-th", type=float, default=1.0e4, dest="rho_th",
                   help="beampattern gain floor per target")
    p.add_argument("--sigma2", type=float, default=1.0e-9,
                   help="CU receiver noise power (W)")
    p.add_argument("--sigma-e", type=float, default=0.0, dest="sigma_e",
                   help="CSI error power sigma_e^2 (relative); 0 skips the noisy copy")


def _add_solver_flags(p: argparse.ArgumentParser):
    p.add_argument("--method", choices=["bcd"], default="bcd")
    p.add_argument("--max-iters", type=int, default=30, dest="max_iters")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--c1", type=float, default=50.0)
    p.add_argument("--c2", type=float, default=50.0)
    p.add_argument("--penalty", type=float, default=30.0)
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")


def _scenario_from_flags(args, seed: int) -> ScenarioConfig:
    system = SystemConfig(M=args.M, Nx=args.Nx, Nz=args.Nz)
    return ScenarioConfig(
        system=system,
        K=args.K,
        L=args.L,
        P0=args.P0,
        rho_th=args.rho_th,
        noise_var=args.sigma2,
        seed=seed,
    )


def _bcd_config_from_flags(args) -> BcdConfig:
    return BcdConfig(
        max_iters=args.max_iters,
        tol=args.tol,
        c1=args.c1,
        c2=args.c2,
        penalty=args.penalty,
    )


def _check_output_path(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise ConfigurationError(f"output directory does not exist: {parent}")


def generate_records(cfg: ScenarioConfig, count: int, sigma_e2: float, prefix: str = "s"):
    """Yield ``count`` CsiRecords, optionally with a noisy CSI copy."""
    for i in range(count):
        _, ch = sample_scenario(cfg, i)
        sid = f"{prefix}{i:06d}"
        if sigma_e2 > 0:
            pert = perturb_csi(ch, sigma_e2, scenario_rng(cfg, i, stream=1))
            yield CsiRecord(sid, cfg, ch, pert, sigma_e2)
        else:
            yield CsiRecord(sid, cfg, ch)


def _solve_one(item, bcd_cfg: BcdConfig):
    """Worker body: (file position, CsiRecord) -> (SolutionRecord, report line)."""
    index, rec = item
    cfg = rec.config
    ch = rec.solver_channels()
    rng = scenario_rng(cfg, index, stream=2)
    t0 = time.perf_counter()
    report = run_bcd(ch, cfg.P0, cfg.rho_th, cfg.tau_vector(), config=bcd_cfg, rng=rng)
    runtime_ms = (time.perf_counter() - t0) * 1e3
    sol = SolutionRecord(
        scenario_id=rec.scenario_id,
        W=report.solution.W,
        R0=report.solution.R0,
        theta=report.solution.theta,
        method="bcd",
        runtime_ms=runtime_ms,
        iterations=report.iterations,
    )
    line = {
        "scenario_id": rec.scenario_id,
        "method": "bcd",
        "iterations": report.iterations,
        "termination": report.termination,
        "feasible": report.evaluation.feasible,
        "wsr": report.evaluation.wsr,
        "runtime_ms": runtime_ms,
        "wsr_trace": report.wsr_trace,
    }
    return sol, line


def _solve_records(records, bcd_cfg: BcdConfig, jobs: int):
    items = list(enumerate(records))
    work = partial(_solve_one, bcd_cfg=bcd_cfg)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, items, chunksize=1))
    else:
        results = [work(item) for item in items]
    solutions = [sol for sol, _ in results]
    lines = [line for _, line in results]
    return solutions, lines


def _print_solve_summary(lines):
    n = len(lines)
    flagged = sum(1 for l in lines if not l["feasible"])
    if n:
        mean_wsr = float(np.mean([l["wsr"] for l in lines]))
        mean_ms = float(np.mean([l["runtime_ms"] for l in lines]))
    else:
        mean_wsr = mean_ms = float("nan")
    print(
        f"solved {n} scenarios: {n - flagged} feasible, {flagged} flagged; "
        f"mean wsr {mean_wsr:.6g} bit/s/Hz, mean runtime {mean_ms:.1f} ms"
    )


def _eval_row(rec: CsiRecord, sol: SolutionRecord, perfect_csi: bool) -> EvalRow:
    cfg = rec.config
    ch = rec.channels if perfect_csi else rec.solver_channels()
    report = evaluate(ch, sol.as_solution(), cfg.P0, cfg.rho_th, cfg.tau_vector())
    return EvalRow(
        scenario_id=rec.scenario_id,
        method=sol.method,
        K=cfg.K,
        L=cfg.L,
        N=cfg.system.n_elements,
        P0=cfg.P0,
        sigma_e2=rec.sigma_e2 if rec.sigma_e2 is not None else 0.0,
        wsr=report.wsr,
        min_rho=float(np.min(report.rho)) if report.rho.size else float("nan"),
        power_used=report.power_used,
        feasible=report.feasible,
        runtime_ms=sol.runtime_ms,
    )


def _print_eval_summary(rows):
    n = len(rows)
    if not n:
        print("scored 0 rows")
        return
    sat = sum(1 for r in rows if r.feasible) / n
    med = float(np.median([r.wsr for r in rows]))
    print(f"scored {n} rows: satisfaction {sat:.1%}, median wsr {med:.6g} bit/s/Hz")


def cmd_gen_dataset(args) -> int:
    if args.count < 0:
        raise ConfigurationError(f"--count must be nonnegative, got {args.count}")
    if args.sigma_e < 0:
        raise ConfigurationError(f"--sigma-e must be nonnegative, got {args.sigma_e}")
    _check_output_path(args.out)
    cfg = _scenario_from_flags(args, args.seed)
    n = write_dataset(args.out, generate_records(cfg, args.count, args.sigma_e))
    print(f"wrote {n} records to {args.out}")
    return 0


def cmd_solve(args) -> int:
    _check_output_path(args.out)
    if args.report:
        _check_output_path(args.report)
    records = list(read_dataset(args.infile))
    solutions, lines = _solve_records(records, _bcd_config_from_flags(args), args.jobs)
    write_solutions(args.out, solutions)
    if args.report:
        with open(args.report, "w", encoding="utf-8", newline="\n") as fh:
            for line in lines:
                fh.write(json.dumps(line, separators=(",", ":")) + "\n")
    _print_solve_summary(lines)
    return 0


def cmd_eval(args) -> int:
    _check_output_path(args.out)
    dataset = {rec.scenario_id: rec for rec in read_dataset(args.data)}
    rows = []
    missing = []
    for sol in read_solutions(args.solutions):
        rec = dataset.get(sol.scenario_id)
        if rec is None:
            missing.append(sol.scenario_id)
            continue
        rows.append(_eval_row(rec, sol, args.perfect_csi))
    if missing:
        raise SchemaError(
            "solutions reference scenario_ids missing from the dataset: "
            + ", ".join(missing)
        )
    export_eval_csv(rows, args.out)
    _print_eval_summary(rows)
    return 0


def _sweep_config(args, value: float) -> ScenarioConfig:
    cfg = _scenario_from_flags(args, args.seed)
    if args.param == "P0":
        return replace(cfg, P0=float(value))
    if args.param == "K":
        return replace(cfg, K=int(value))
    if args.param == "L":
        return replace(cfg, L=int(value))
    # N: the RIS stays square, so N must be the square of an odd integer
    n = math.isqrt(int(value))
    if n * n != value or n % 2 == 0:
        raise ConfigurationError(
            f"N values must be squares of odd integers (441, 625, ...), got {value:g}"
        )
    return replace(cfg, system=replace(cfg.system, Nx=n, Nz=n))


def cmd_sweep(args) -> int:
    _check_output_path(args.out)
    if args.count < 0:
        raise ConfigurationError(f"--count must be nonnegative, got {args.count}")
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"--values must be comma-separated numbers, got {args.values!r}")
    if not values:
        raise ConfigurationError("--values is empty")
    bcd_cfg = _bcd_config_from_flags(args)
    rows = []
    for value in values:
        cfg = _sweep_config(args, value)
        prefix = f"{args.param}={value:g}-s"
        records = list(generate_records(cfg, args.count, args.sigma_e, prefix=prefix))
        solutions, lines = _solve_records(records, bcd_cfg, args.jobs)
        batch = [
            _eval_row(rec, sol, perfect_csi=True)
            for rec, sol in zip(records, solutions)
        ]
        rows.extend(batch)
        med = float(np.median([r.wsr for r in batch])) if batch else float("nan")
        flagged = sum(1 for r in batch if not r.feasible)
        print(f"{args.param}={value:g}: median wsr {med:.6g} bit/s/Hz, {flagged} flagged")
    export_eval_csv(rows, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nfisac",
        description="Near-field RIS beamforming: datasets, solver runs, scoring.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="sample scenarios and write a JSONL dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("solve", help="run the solver over a dataset")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None, help="optional per-scenario JSONL report")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="score solutions against their dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--solutions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--perfect-csi", action="store_true", dest="perfect_csi",
                   help="score on the exact channels even if the solver saw noisy ones")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="gen+solve+eval across one swept parameter")
    p.add_argument("--param", choices=["N", "P0", "K", "L"], required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, SchemaError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
