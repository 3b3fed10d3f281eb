"""Closed-form success probability and throughput under channel-inversion power control."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .model import (
    SPREADING_FACTORS,
    DutyPlan,
    NetworkConfig,
    Partition,
    PowerPolicy,
    SfTable,
    bit_rate,
    edge_received_power,
    packet_duration,
    power_policy,
)


@dataclass(frozen=True)
class ZoneScenario:
    """Everything needed to evaluate one SF zone.

    The ring is described by its radii so the same object can drive the
    Monte-Carlo sampler; ``area`` is derived.
    """

    sf: int
    inner_radius_m: float
    outer_radius_m: float
    received_power_w: float
    duty: float
    density_per_m2: float
    noise_w: float
    fading_rate: float
    snr_threshold: float
    sir_threshold: float
    bit_rate_bps: float
    packet_duration_s: float

    def __post_init__(self) -> None:
        if not 0 <= self.inner_radius_m <= self.outer_radius_m:
            raise ValueError("need 0 <= inner_radius_m <= outer_radius_m")
        if not self.received_power_w > 0:
            raise ValueError("received_power_w must be positive")
        if not 0.0 <= self.duty < 1.0:
            raise ValueError(f"duty must be in [0, 1), got {self.duty!r}")

    @property
    def area(self) -> float:
        return math.pi * (self.outer_radius_m**2 - self.inner_radius_m**2)

    @property
    def mean_users(self) -> float:
        return self.density_per_m2 * self.area

    @property
    def access_rate(self) -> float:
        return self.duty / ((1.0 - self.duty) * self.packet_duration_s)

    def with_duty(self, duty: float) -> "ZoneScenario":
        return replace(self, duty=duty)


@dataclass(frozen=True)
class ZoneResult:
    sf: int
    success_prob: float
    throughput_bps: float
    duty: float
    sir_constant: float
    active: bool = True


def zone_scenario(
    sf: int,
    partition: Partition,
    cfg: NetworkConfig,
    sf_table: SfTable,
    duty: float,
    edge_power_w: float | None = None,
) -> ZoneScenario:
    params = sf_table[sf]
    return ZoneScenario(
        sf=sf,
        inner_radius_m=partition.inner(sf),
        outer_radius_m=partition.outer(sf),
        received_power_w=edge_received_power(sf, partition, cfg, edge_power_w),
        duty=duty,
        density_per_m2=cfg.active_density_per_m2,
        noise_w=cfg.noise_w,
        fading_rate=cfg.fading_rate,
        snr_threshold=params.snr_threshold,
        sir_threshold=params.sir_threshold,
        bit_rate_bps=bit_rate(params),
        packet_duration_s=packet_duration(params),
    )


def _one_minus_log1p_ratio(u: float) -> float:
    """``1 - ln(1+u)/u``, continuous at ``u = 0``."""
    if u < 1e-6:
        return u / 2.0 - u * u / 3.0
    return 1.0 - math.log1p(u) / u


def sir_constant(sir_threshold: float) -> float:
    """``1 + ln(1/(1+g))/g``; lies in (0, 1) and grows with the SIR threshold."""
    if not sir_threshold > 0:
        raise ValueError("sir_threshold must be positive")
    return _one_minus_log1p_ratio(sir_threshold)


def _load(scn: ZoneScenario) -> float:
    """``2 lambda A_s Delta_s / (1 - Delta_s)``: mean number of overlapping packets."""
    return 2.0 * scn.density_per_m2 * scn.area * scn.duty / (1.0 - scn.duty)


def interference_laplace(z: float, scn: ZoneScenario) -> float:
    """Laplace transform ``E[exp(-z I)]`` of the packet-averaged co-SF interference."""
    if z < 0:
        raise ValueError("z must be >= 0")
    u = scn.received_power_w * z / scn.fading_rate
    return math.exp(-_load(scn) * _one_minus_log1p_ratio(u))


def noise_factor(scn: ZoneScenario) -> float:
    return math.exp(-scn.noise_w * scn.fading_rate * scn.snr_threshold / scn.received_power_w)


def packet_success_prob(scn: ZoneScenario) -> float:
    """Product-form lower bound on P{SNR >= eta and SIR >= gamma}."""
    c = sir_constant(scn.sir_threshold)
    return math.exp(
        -scn.noise_w * scn.fading_rate * scn.snr_threshold / scn.received_power_w
        - _load(scn) * c
    )


def zone_throughput(scn: ZoneScenario) -> float:
    return scn.bit_rate_bps * scn.duty * packet_success_prob(scn)


def optimal_duty_cycle(scn: ZoneScenario, duty_cap: float) -> float:
    """Throughput-maximizing duty cycle of a zone, capped at ``duty_cap``.

    The stationary point of ``D exp(-2x D / (1 - D))`` with ``x = lambda A C``.
    """
    x = scn.density_per_m2 * scn.area * sir_constant(scn.sir_threshold)
    return min(duty_cap, 1.0 / (1.0 + x + math.sqrt(x * (2.0 + x))))


def evaluate_zone(scn: ZoneScenario, active: bool = True) -> ZoneResult:
    return ZoneResult(
        sf=scn.sf,
        success_prob=packet_success_prob(scn),
        throughput_bps=zone_throughput(scn),
        duty=scn.duty,
        sir_constant=sir_constant(scn.sir_threshold),
        active=active,
    )


def evaluate_partition(
    partition: Partition,
    duty_plan: DutyPlan,
    cfg: NetworkConfig,
    sf_table: SfTable,
    policy: PowerPolicy | None = None,
) -> dict[int, ZoneResult]:
    policy = policy or power_policy(partition, cfg)
    out = {}
    for s in SPREADING_FACTORS:
        scn = zone_scenario(s, partition, cfg, sf_table, duty_plan[s], policy.edge_power_w[s])
        out[s] = evaluate_zone(scn, active=not partition.is_empty(s))
    return out


def spatial_throughput_analytic(
    partition: Partition,
    duty_plan: DutyPlan,
    policy: PowerPolicy | None,
    cfg: NetworkConfig,
    sf_table: SfTable,
) -> float:
    """Expected total throughput per unit cell area, in bps/m^2."""
    zones = evaluate_partition(partition, duty_plan, cfg, sf_table, policy)
    total = sum(
        cfg.active_density_per_m2 * partition.area(s) * zones[s].throughput_bps
        for s in SPREADING_FACTORS
    )
    return total / cfg.cell_area_m2
