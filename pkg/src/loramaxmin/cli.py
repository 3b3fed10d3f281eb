"""``lora-maxmin`` command-line entry point.

CSV goes to ``--out`` (or stdout); human-readable summaries go to stderr.
Exit codes: 0 success, 1 usage or parse error, 2 non-convergence,
3 precondition violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .analytic import evaluate_partition, spatial_throughput_analytic, zone_scenario
from .config import ConfigError, Scenario, format_plan, load_plan, load_scenario
from .model import (
    SPREADING_FACTORS,
    DutyPlan,
    OutOfZoneError,
    Partition,
    UnreachableSFError,
    bit_rate,
    equal_area_partition,
    linear_to_db,
    max_range,
    max_range_partition,
)
from .optimize import (
    BenchmarkSpec,
    DutyMode,
    evaluate_benchmark,
    iterative_balancing,
    validate_solution,
    zone_optimal_throughput,
)
from .simulate import estimate_success_prob

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED, EXIT_PRECONDITION = 0, 1, 2, 3

REPORT_COLUMNS = (
    "experiment", "sf", "boundary_m", "area_m2", "duty", "active",
    "p_suc_analytic", "p_suc_mc", "p_suc_mc_stderr", "throughput_bps",
    "spatial_throughput_bps_km2",
)
RANGE_COLUMNS = ("sf", "bit_rate_bps", "snr_threshold_db", "max_range_m", "equal_area_range_m")
PROFILE_COLUMNS = (
    "experiment", "sf", "bin_inner_m", "bin_outer_m", "p_suc_mc", "p_suc_mc_stderr",
    "throughput_bps", "throughput_stderr_bps", "spatial_throughput_bps_km2",
)

log = logging.getLogger("loramaxmin")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(columns: Sequence[str], rows: Iterable[dict], out: str | None) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    if out is None or out == "-":
        sys.stdout.write(buf.getvalue())
    else:
        with open(out, "w", newline="") as fh:
            fh.write(buf.getvalue())


def _scenario(args) -> Scenario:
    scenario = load_scenario(args.config) if args.config else Scenario()
    net = scenario.network
    if args.cell_radius is not None:
        net = net.with_radius(args.cell_radius)
    return replace(scenario, network=net)


def _run_value(args, scenario: Scenario, name: str):
    value = getattr(args, name, None)
    return getattr(scenario.run, name) if value is None else value


def _resolve_partition(text: str, scenario: Scenario) -> tuple[Partition, DutyPlan | None]:
    net = scenario.network
    if text == "equal-area":
        return equal_area_partition(net.cell_radius_m), None
    if text == "max-range":
        return max_range_partition(net, scenario.sf_table), None
    if text.startswith("file:"):
        partition, duties = load_plan(text[5:])
        if abs(partition.cell_radius_m - net.cell_radius_m) > 1e-9 * net.cell_radius_m:
            raise UsageError(
                f"plan cell radius {partition.cell_radius_m} m differs from config {net.cell_radius_m} m"
            )
        return partition, duties
    raise UsageError(f"--partition must be equal-area, max-range or file:<path>, got {text!r}")


def _duty_plan(mode: DutyMode, partition: Partition, scenario: Scenario) -> DutyPlan:
    return DutyPlan({
        s: zone_optimal_throughput(s, partition, scenario.network, scenario.sf_table, mode).duty
        for s in SPREADING_FACTORS
    })


def _sweep(text: str) -> list[float]:
    try:
        start, stop, count = text.split(":")
        return [float(x) for x in np.linspace(float(start), float(stop), int(count))]
    except ValueError:
        raise UsageError(f"--sweep must be START:STOP:COUNT, got {text!r}") from None


def _plans(args, scenario: Scenario) -> list[tuple[str, Partition, DutyPlan]]:
    partition, file_duties = _resolve_partition(_run_value(args, scenario, "partition"), scenario)
    if getattr(args, "sweep", None):
        return [
            (f"duty={d!r}", partition, _duty_plan(DutyMode(d), partition, scenario))
            for d in _sweep(args.sweep)
        ]
    duty_text = args.duty
    if duty_text is None and file_duties is not None:
        return [("plan", partition, file_duties)]
    mode = DutyMode.parse(duty_text or scenario.run.duty)
    return [(str(mode), partition, _duty_plan(mode, partition, scenario))]


def _zone_rows(experiment, partition, plan, scenario, mc=None) -> list[dict]:
    net, table = scenario.network, scenario.sf_table
    zones = evaluate_partition(partition, plan, net, table)
    theta = spatial_throughput_analytic(partition, plan, None, net, table)
    rows = []
    for s in SPREADING_FACTORS:
        z = zones[s]
        row = {
            "experiment": experiment, "sf": s, "boundary_m": partition.outer(s),
            "area_m2": partition.area(s), "duty": plan[s], "active": z.active,
            "p_suc_analytic": z.success_prob, "throughput_bps": z.throughput_bps,
            "spatial_throughput_bps_km2": theta * 1e6,
        }
        if mc is not None and mc.get(s) is not None:
            row["p_suc_mc"] = mc[s].estimate
            row["p_suc_mc_stderr"] = mc[s].stderr
        rows.append(row)
    return rows


def cmd_ranges(args) -> int:
    scenario = _scenario(args)
    net, table = scenario.network, scenario.sf_table
    equal = equal_area_partition(net.cell_radius_m)
    rows = [
        {
            "sf": p.sf, "bit_rate_bps": bit_rate(p),
            "snr_threshold_db": linear_to_db(p.snr_threshold),
            "max_range_m": max_range(p.sf, net, table),
            "equal_area_range_m": equal.outer(p.sf),
        }
        for p in table
    ]
    write_csv(RANGE_COLUMNS, rows, args.out)
    return EXIT_OK


def cmd_analyze(args) -> int:
    scenario = _scenario(args)
    rows = []
    for name, partition, plan in _plans(args, scenario):
        rows += _zone_rows(name, partition, plan, scenario)
    write_csv(REPORT_COLUMNS, rows, _run_value(args, scenario, "out"))
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = _scenario(args)
    net, table = scenario.network, scenario.sf_table
    trials = _run_value(args, scenario, "trials")
    seed = _run_value(args, scenario, "seed")
    workers = _run_value(args, scenario, "workers")
    rows = []
    for name, partition, plan in _plans(args, scenario):
        mc = {}
        for s in SPREADING_FACTORS:
            if partition.is_empty(s):
                mc[s] = None
                continue
            scn = zone_scenario(s, partition, net, table, plan[s])
            zone_seed = int(np.random.SeedSequence([seed, s]).generate_state(1)[0])
            mc[s] = estimate_success_prob(scn, n_trials=trials, seed=zone_seed, workers=workers)
        zone_rows = _zone_rows(name, partition, plan, scenario, mc)
        total = 0.0
        for row in zone_rows:
            est = mc[row["sf"]]
            mc_throughput = 0.0 if est is None else bit_rate(table[row["sf"]]) * row["duty"] * est.estimate
            row["throughput_bps"] = mc_throughput
            total += net.active_density_per_m2 * row["area_m2"] * mc_throughput
        for row in zone_rows:
            row["spatial_throughput_bps_km2"] = total / net.cell_area_m2 * 1e6
        rows += zone_rows
    write_csv(REPORT_COLUMNS, rows, _run_value(args, scenario, "out"))
    return EXIT_OK


def cmd_optimize(args) -> int:
    scenario = _scenario(args)
    net, table = scenario.network, scenario.sf_table
    partition, _ = _resolve_partition(_run_value(args, scenario, "partition"), scenario)
    mode = DutyMode.parse(args.duty or scenario.run.duty)
    solution = iterative_balancing(net, table, partition, mode, max_iterations=args.max_iterations)
    theta = spatial_throughput_analytic(solution.partition, solution.duty_plan, None, net, table)
    mc = None
    theta_mc = None
    if args.validate:
        population = validate_solution(
            solution, net, table,
            n_trials=_run_value(args, scenario, "trials"),
            seed=_run_value(args, scenario, "seed"),
            bin_width_m=_run_value(args, scenario, "bin_width_m"),
            workers=_run_value(args, scenario, "workers"),
        )
        mc = {s: population.zone_success(s) for s in SPREADING_FACTORS}
        theta_mc = population.spatial_throughput
    rows = _zone_rows(f"optimize:{mode}", solution.partition, solution.duty_plan, scenario, mc)
    write_csv(REPORT_COLUMNS, rows, _run_value(args, scenario, "out"))
    if args.plan_out:
        with open(args.plan_out, "w") as fh:
            fh.write(format_plan(solution.partition, solution.duty_plan))

    print(f"cell radius        {net.cell_radius_m:.1f} m", file=sys.stderr)
    print(f"boundary moves     {solution.iterations}", file=sys.stderr)
    print(f"converged          {solution.converged}", file=sys.stderr)
    if solution.unreducible:
        print(f"unreducible gaps   {solution.unreducible}", file=sys.stderr)
    print(f"max-min throughput {solution.min_throughput_bps:.6g} bps", file=sys.stderr)
    print(f"throughput spread  {solution.spread_bps:.6g} bps", file=sys.stderr)
    print(f"spatial throughput {theta * 1e6:.6g} bps/km^2 (analytic)", file=sys.stderr)
    if theta_mc is not None:
        print(
            f"spatial throughput {theta_mc.estimate * 1e6:.6g} +/- {theta_mc.stderr * 1e6:.2g} bps/km^2 (MC)",
            file=sys.stderr,
        )
    return EXIT_OK if solution.converged else EXIT_NOT_CONVERGED


def cmd_benchmark(args) -> int:
    scenario = _scenario(args)
    spec = BenchmarkSpec(_run_value(args, scenario, "scheme"), duty=scenario.network.max_duty)
    report = evaluate_benchmark(
        spec, scenario.network, scenario.sf_table,
        n_trials=_run_value(args, scenario, "trials"),
        seed=_run_value(args, scenario, "seed"),
        bin_width_m=_run_value(args, scenario, "bin_width_m"),
        workers=_run_value(args, scenario, "workers"),
    )
    theta = report.population.spatial_throughput
    rows = [
        {
            "experiment": f"benchmark{spec.scheme}", "sf": b.sf, "bin_inner_m": b.inner_m,
            "bin_outer_m": b.outer_m, "p_suc_mc": b.success.estimate, "p_suc_mc_stderr": b.success.stderr,
            "throughput_bps": b.throughput_bps, "throughput_stderr_bps": b.throughput_stderr_bps,
            "spatial_throughput_bps_km2": theta.estimate * 1e6,
        }
        for b in report.population.bins
    ]
    write_csv(PROFILE_COLUMNS, rows, _run_value(args, scenario, "out"))
    print(
        f"benchmark {spec.scheme}: spatial throughput {theta.estimate * 1e6:.6g} "
        f"+/- {theta.stderr * 1e6:.2g} bps/km^2",
        file=sys.stderr,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lora-maxmin", description="Max-min throughput planning for LoRa cells.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--config", help="scenario file (defaults apply when omitted)")
    common.add_argument("--cell-radius", type=float, help="override cell_radius_m")
    common.add_argument("--out", help="CSV output path (stdout by default)")
    common.add_argument("-v", "--verbose", action="store_true")

    plan = _Parser(add_help=False)
    plan.add_argument("--partition", help="equal-area | max-range | file:<path>")
    plan.add_argument("--duty", help="optimal | fixed:<duty>")

    mc = _Parser(add_help=False)
    mc.add_argument("--trials", type=int)
    mc.add_argument("--seed", type=int)
    mc.add_argument("--workers", type=int, help="worker processes for Monte-Carlo trials")

    p = sub.add_parser("ranges", parents=[common], help="per-SF rate and range table")
    p.set_defaults(func=cmd_ranges)

    p = sub.add_parser("analyze", parents=[common, plan], help="closed-form per-zone report")
    p.add_argument("--sweep", help="duty sweep START:STOP:COUNT (overrides --duty)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", parents=[common, plan, mc], help="Monte-Carlo per-zone report")
    p.add_argument("--sweep", help="duty sweep START:STOP:COUNT (overrides --duty)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", parents=[common, plan, mc], help="iterative balancing for max-min throughput")
    p.add_argument("--validate", action="store_true", help="check the operating point by simulation")
    p.add_argument("--bin-width", dest="bin_width_m", type=float)
    p.add_argument("--max-iterations", type=int, default=10_000)
    p.add_argument("--plan-out", help="write the optimized partition and duties here")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("benchmark", parents=[common, mc], help="fixed-power benchmark profile")
    p.add_argument("--scheme", type=int, choices=(1, 2))
    p.add_argument("--bin-width", dest="bin_width_m", type=float)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UnreachableSFError, OutOfZoneError) as exc:
        print(f"lora-maxmin: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ConfigError, UsageError, ValueError) as exc:
        print(f"lora-maxmin: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
