"""Max-min throughput via per-zone duty optimization and iterative boundary balancing."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from scipy.optimize import bisect

from .analytic import (
    ZoneResult,
    evaluate_zone,
    optimal_duty_cycle,
    zone_scenario,
)
from .model import (
    BOUNDARY_SFS,
    SPREADING_FACTORS,
    DutyPlan,
    NetworkConfig,
    Partition,
    SfTable,
    equal_area_partition,
    max_range_partition,
)
from .simulate import FullScenario, PopulationResult, simulate_finite_population

log = logging.getLogger(__name__)

BOUNDARY_TOL_M = 1e-3


@dataclass(frozen=True)
class DutyMode:
    """``fixed=None`` selects the throughput-optimal duty per zone."""

    fixed: float | None = None

    @classmethod
    def parse(cls, text: str) -> "DutyMode":
        text = text.strip().lower()
        if text == "optimal":
            return cls()
        if text.startswith("fixed:"):
            return cls(float(text.split(":", 1)[1]))
        raise ValueError(f"duty mode must be 'optimal' or 'fixed:<duty>', got {text!r}")

    def __str__(self) -> str:
        return "optimal" if self.fixed is None else f"fixed:{self.fixed!r}"


OPTIMAL = DutyMode()


def zone_optimal_throughput(
    sf: int,
    partition: Partition,
    cfg: NetworkConfig,
    sf_table: SfTable,
    duty_mode: DutyMode = OPTIMAL,
) -> ZoneResult:
    """Zone throughput at full edge power under the given duty mode.

    Empty zones come back with ``active=False``; their throughput is the
    zero-area limit and must not enter min computations.
    """
    scn = zone_scenario(sf, partition, cfg, sf_table, 0.0)
    if duty_mode.fixed is None:
        duty = optimal_duty_cycle(scn, cfg.max_duty)
    else:
        if not 0.0 <= duty_mode.fixed <= cfg.max_duty:
            raise ValueError(f"fixed duty {duty_mode.fixed} outside [0, max_duty={cfg.max_duty}]")
        duty = duty_mode.fixed
    return evaluate_zone(scn.with_duty(duty), active=not partition.is_empty(sf))


def _gap_at(sf, radius, partition, cfg, sf_table, duty_mode) -> float:
    trial = partition.with_boundary(sf, radius)
    return (
        zone_optimal_throughput(sf, trial, cfg, sf_table, duty_mode).throughput_bps
        - zone_optimal_throughput(sf + 1, trial, cfg, sf_table, duty_mode).throughput_bps
    )


def balance_boundary(
    sf: int,
    partition: Partition,
    cfg: NetworkConfig,
    sf_table: SfTable,
    duty_mode: DutyMode = OPTIMAL,
    xtol: float = BOUNDARY_TOL_M,
) -> float:
    """Move ``r_sf`` between its neighbours so zones ``sf`` and ``sf+1`` have equal throughput.

    The gap ``theta_sf - theta_{sf+1}`` is nonincreasing in ``r_sf``, so the root
    is found by bisection. When the gap keeps one sign on the whole interval the
    endpoint with the smaller gap is returned.
    """
    if sf not in BOUNDARY_SFS:
        raise ValueError(f"boundary SF must be in 7..11, got {sf}")
    lo, hi = partition.inner(sf), partition.outer(sf + 1)

    def g(r: float) -> float:
        return _gap_at(sf, r, partition, cfg, sf_table, duty_mode)

    g_lo, g_hi = g(lo), g(hi)
    if g_lo <= 0.0:
        return lo if g_lo == 0.0 or abs(g_lo) <= abs(g_hi) else hi
    if g_hi >= 0.0:
        return hi
    a, b = lo, hi
    root = bisect(g, a, b, xtol=xtol)
    # bisect returns the bracket midpoint; report whichever nearby point balances better.
    candidates = [root, max(lo, root - xtol), min(hi, root + xtol)]
    return min(candidates, key=lambda r: abs(g(r)))


@dataclass
class MaxMinSolution:
    partition: Partition
    duty_plan: DutyPlan
    zones: dict[int, ZoneResult]
    min_throughput_bps: float
    iterations: int
    converged: bool
    unreducible: list[int] = field(default_factory=list)
    max_gap_history: list[float] = field(default_factory=list)

    @property
    def spread_bps(self) -> float:
        active = [z.throughput_bps for z in self.zones.values() if z.active]
        return max(active) - min(active) if active else 0.0


def _evaluate_all(partition, cfg, sf_table, duty_mode) -> dict[int, ZoneResult]:
    return {s: zone_optimal_throughput(s, partition, cfg, sf_table, duty_mode) for s in SPREADING_FACTORS}


def _min_active(zones: dict[int, ZoneResult]) -> float:
    active = [z.throughput_bps for z in zones.values() if z.active]
    return min(active) if active else 0.0


def _spread(zones: dict[int, ZoneResult]) -> float:
    active = [z.throughput_bps for z in zones.values() if z.active]
    return max(active) - min(active) if active else 0.0


def _neighbour_gaps(zones: dict[int, ZoneResult]) -> list[tuple[float, int]]:
    """Gaps between neighbouring zones, largest first, lowest SF on ties.

    A pair of two empty zones has nothing to balance and is left out. A pair
    with one empty zone stays in: if the neighbour falls below the empty
    zone's zero-area throughput the empty zone can be reopened.
    """
    gaps = [
        (abs(zones[s].throughput_bps - zones[s + 1].throughput_bps), s)
        for s in BOUNDARY_SFS
        if zones[s].active or zones[s + 1].active
    ]
    return sorted(gaps, key=lambda gs: (-gs[0], gs[1]))


def _side_gaps_ok(sf, radius, partition, cap, zones, cfg, sf_table, duty_mode) -> bool:
    """Whether moving ``r_sf`` to ``radius`` keeps the two outer neighbour gaps within ``cap``."""
    trial = partition.with_boundary(sf, radius)
    ok = True
    if sf > 7 and (zones[sf - 1].active or not trial.is_empty(sf)):
        theta = zone_optimal_throughput(sf, trial, cfg, sf_table, duty_mode).throughput_bps
        ok = abs(zones[sf - 1].throughput_bps - theta) <= cap
    if ok and sf + 2 <= 12 and (zones[sf + 2].active or not trial.is_empty(sf + 1)):
        theta = zone_optimal_throughput(sf + 1, trial, cfg, sf_table, duty_mode).throughput_bps
        ok = abs(zones[sf + 2].throughput_bps - theta) <= cap
    return ok


def _limit_move(sf, partition, target, cap, zones, cfg, sf_table, duty_mode) -> float:
    """Stop the move of ``r_sf`` towards ``target`` where an adjacent gap would exceed ``cap``.

    Each side-gap constraint holds on an interval of ``r_sf`` that contains the
    current boundary, so the feasible part of the path is found by bisection.
    """
    start = partition.boundaries_m[sf - 7]
    if target == start or _side_gaps_ok(sf, target, partition, cap, zones, cfg, sf_table, duty_mode):
        return target
    good, bad = start, target
    while abs(bad - good) > BOUNDARY_TOL_M:
        mid = 0.5 * (good + bad)
        if _side_gaps_ok(sf, mid, partition, cap, zones, cfg, sf_table, duty_mode):
            good = mid
        else:
            bad = mid
    return good


def iterative_balancing(
    cfg: NetworkConfig,
    sf_table: SfTable,
    initial_partition: Partition | None = None,
    duty_mode: DutyMode = OPTIMAL,
    max_iterations: int = 10_000,
    tolerance_bps: float | None = None,
) -> MaxMinSolution:
    """Equalize zone throughputs by repeatedly balancing the neighbour pair with the largest gap.

    A move is cut short where it would push an adjacent gap above the current
    largest gap, so the largest gap never grows. Stops once all non-empty zones are within ``tolerance_bps`` of each other, or
    when no remaining gap (tried in descending order) can be reduced.
    """
    eps = cfg.ib_tolerance_bps if tolerance_bps is None else tolerance_bps
    partition = initial_partition or equal_area_partition(cfg.cell_radius_m)
    if abs(partition.cell_radius_m - cfg.cell_radius_m) > 1e-9 * cfg.cell_radius_m:
        raise ValueError("initial partition and config disagree on the cell radius")
    zones = _evaluate_all(partition, cfg, sf_table, duty_mode)
    history: list[float] = []
    moves = 0
    converged = False
    unreducible: list[int] = []

    for _ in range(max_iterations):
        gaps = _neighbour_gaps(zones)
        history.append(gaps[0][0] if gaps else 0.0)
        if _spread(zones) <= eps:
            converged = True
            unreducible = []
            break
        unreducible = []
        moved = False
        for gap, s in gaps:
            if gap <= 0.0:
                break
            r_new = balance_boundary(s, partition, cfg, sf_table, duty_mode)
            r_new = _limit_move(s, partition, r_new, gaps[0][0], zones, cfg, sf_table, duty_mode)
            if r_new == partition.boundaries_m[s - 7]:
                unreducible.append(s)
                continue
            candidate = partition.with_boundary(s, r_new)
            new_zones = _evaluate_all(candidate, cfg, sf_table, duty_mode)
            new_gap = abs(new_zones[s].throughput_bps - new_zones[s + 1].throughput_bps)
            if new_gap >= gap:
                unreducible.append(s)
                continue
            partition, zones = candidate, new_zones
            moves += 1
            moved = True
            log.debug("balanced r%d -> %.3f m, gap %.4g -> %.4g bps", s, r_new, gap, new_gap)
            break
        if not moved:
            converged = True
            break
    else:
        log.warning("iterative balancing hit the %d-iteration cap", max_iterations)

    return MaxMinSolution(
        partition=partition,
        duty_plan=DutyPlan({s: z.duty for s, z in zones.items()}),
        zones=zones,
        min_throughput_bps=_min_active(zones),
        iterations=moves,
        converged=converged,
        unreducible=sorted(unreducible),
        max_gap_history=history,
    )


@dataclass(frozen=True)
class BenchmarkSpec:
    """Fixed-power, fixed-duty reference schemes.

    Scheme 1 uses the equal-area partition, scheme 2 the max-range partition.
    """

    scheme: int
    duty: float = 0.01

    def __post_init__(self) -> None:
        if self.scheme not in (1, 2):
            raise ValueError(f"benchmark scheme must be 1 or 2, got {self.scheme!r}")

    def partition(self, cfg: NetworkConfig, sf_table: SfTable) -> Partition:
        if self.scheme == 1:
            return equal_area_partition(cfg.cell_radius_m)
        return max_range_partition(cfg, sf_table)


@dataclass
class ThroughputReport:
    """Simulated profile of a benchmark scheme; there is no closed form without power control."""

    spec: BenchmarkSpec
    partition: Partition
    duty_plan: DutyPlan
    population: PopulationResult

    @property
    def spatial_throughput(self) -> float:
        return self.population.spatial_throughput.estimate


def evaluate_benchmark(
    spec: BenchmarkSpec,
    cfg: NetworkConfig,
    sf_table: SfTable,
    n_trials: int = 100_000,
    seed: int = 0,
    bin_width_m: float = 25.0,
    workers: int = 1,
) -> ThroughputReport:
    """Simulate a benchmark scheme where every UE sends at ``P_max`` with a fixed duty cycle."""
    partition = spec.partition(cfg, sf_table)
    plan = DutyPlan.uniform(spec.duty)
    full = FullScenario(cfg, sf_table, partition, plan, power_control=False)
    population = simulate_finite_population(full, n_trials, seed, bin_width_m, workers)
    return ThroughputReport(spec, partition, plan, population)


def validate_solution(
    solution: MaxMinSolution,
    cfg: NetworkConfig,
    sf_table: SfTable,
    n_trials: int = 100_000,
    seed: int = 0,
    bin_width_m: float = 25.0,
    workers: int = 1,
) -> PopulationResult:
    """Monte-Carlo check of an optimized operating point under channel inversion."""
    full = FullScenario(cfg, sf_table, solution.partition, solution.duty_plan, power_control=True)
    return simulate_finite_population(full, n_trials, seed, bin_width_m, workers)
