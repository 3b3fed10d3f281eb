"""Radio and geometry primitives for a single-gateway LoRa cell.

Everything here works in SI linear units (W, Hz, m, s). Decibel values are
converted at the edges (config loading and reporting) with :func:`db_to_linear`
and :func:`dbm_to_watt`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping

SPREADING_FACTORS: tuple[int, ...] = (7, 8, 9, 10, 11, 12)
BOUNDARY_SFS: tuple[int, ...] = (7, 8, 9, 10, 11)


class UnreachableSFError(ValueError):
    """The gateway cannot be reached with the given SF even at zero distance."""


class OutOfZoneError(ValueError):
    """A distance lies outside the ring assigned to the requested SF."""


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)


def dbm_to_watt(value_dbm: float) -> float:
    return 10.0 ** (value_dbm / 10.0) / 1e3


def watt_to_dbm(value_w: float) -> float:
    return 10.0 * math.log10(value_w * 1e3)


@dataclass(frozen=True)
class NetworkConfig:
    gateway_height_m: float = 25.0
    cell_radius_m: float = 1000.0
    active_density_per_m2: float = 700e-6
    all_density_per_m2: float = 1400e-6
    pathloss_exponent: float = 3.5
    carrier_hz: float = 868e6
    lightspeed_m_s: float = 3e8
    noise_w: float = field(default_factory=lambda: dbm_to_watt(-117.0))
    fading_rate: float = 1.0
    max_power_w: float = field(default_factory=lambda: dbm_to_watt(14.0))
    max_duty: float = 0.01
    ib_tolerance_bps: float = 0.02

    def __post_init__(self) -> None:
        for name in (
            "gateway_height_m", "cell_radius_m", "active_density_per_m2",
            "all_density_per_m2", "carrier_hz", "lightspeed_m_s", "noise_w",
            "fading_rate", "max_power_w", "max_duty", "ib_tolerance_bps",
        ):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if self.max_duty >= 1.0:
            raise ValueError(f"max_duty must be < 1, got {self.max_duty!r}")
        if self.all_density_per_m2 < self.active_density_per_m2:
            raise ValueError("all_density_per_m2 must be >= active_density_per_m2")
        if self.pathloss_exponent < 2.0:
            raise ValueError(f"pathloss_exponent must be >= 2, got {self.pathloss_exponent!r}")

    @property
    def reference_gain(self) -> float:
        """Free-space gain at 1 m, ``(4 pi f_c / c)^-2``."""
        return (4.0 * math.pi * self.carrier_hz / self.lightspeed_m_s) ** -2

    @property
    def cell_area_m2(self) -> float:
        return math.pi * self.cell_radius_m**2

    def with_radius(self, cell_radius_m: float) -> "NetworkConfig":
        return replace(self, cell_radius_m=cell_radius_m)


@dataclass(frozen=True)
class SfParams:
    sf: int
    bandwidth_hz: float = 125e3
    code_rate: float = 0.8
    payload_bits: float = 200.0
    snr_threshold: float = 1.0
    sir_threshold: float = field(default_factory=lambda: db_to_linear(6.0))

    def __post_init__(self) -> None:
        if self.sf not in SPREADING_FACTORS:
            raise ValueError(f"sf must be in 7..12, got {self.sf!r}")
        for name in ("bandwidth_hz", "code_rate", "payload_bits", "snr_threshold", "sir_threshold"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"SF{self.sf}: {name} must be positive and finite, got {value!r}")


# SNR thresholds in dB for SF7..SF12 at 125 kHz.
DEFAULT_SNR_THRESHOLDS_DB: dict[int, float] = {7: -6.0, 8: -9.0, 9: -12.0, 10: -15.0, 11: -17.5, 12: -20.0}


@dataclass(frozen=True)
class SfTable:
    """Per-SF radio parameters, one entry for each SF 7..12."""

    entries: tuple[SfParams, ...]

    def __post_init__(self) -> None:
        if tuple(p.sf for p in self.entries) != SPREADING_FACTORS:
            raise ValueError("SfTable needs exactly one entry per SF 7..12, in order")

    @classmethod
    def default(cls, payload_bytes: float = 25, sir_threshold_db: float = 6.0) -> "SfTable":
        return cls(tuple(
            SfParams(
                sf=s,
                payload_bits=8.0 * payload_bytes,
                snr_threshold=db_to_linear(DEFAULT_SNR_THRESHOLDS_DB[s]),
                sir_threshold=db_to_linear(sir_threshold_db),
            )
            for s in SPREADING_FACTORS
        ))

    def __getitem__(self, sf: int) -> SfParams:
        return self.entries[sf - SPREADING_FACTORS[0]]

    def __iter__(self) -> Iterator[SfParams]:
        return iter(self.entries)

    def replace(self, sf: int, **changes) -> "SfTable":
        return SfTable(tuple(replace(p, **changes) if p.sf == sf else p for p in self.entries))


@dataclass(frozen=True)
class Partition:
    """SF zone boundaries ``r_7..r_11``; ``r_6 = 0`` and ``r_12 = cell_radius_m`` implicitly."""

    boundaries_m: tuple[float, ...]
    cell_radius_m: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "boundaries_m", tuple(float(r) for r in self.boundaries_m))
        if len(self.boundaries_m) != len(BOUNDARY_SFS):
            raise ValueError(f"expected {len(BOUNDARY_SFS)} boundaries, got {len(self.boundaries_m)}")
        if not self.cell_radius_m > 0:
            raise ValueError("cell_radius_m must be positive")
        edges = self.edges
        if any(b < a for a, b in zip(edges, edges[1:])):
            raise ValueError(f"boundaries must satisfy 0 <= r7 <= ... <= r11 <= r_c, got {edges}")

    @property
    def edges(self) -> tuple[float, ...]:
        """``(r_6, r_7, ..., r_12)``."""
        return (0.0, *self.boundaries_m, float(self.cell_radius_m))

    def inner(self, sf: int) -> float:
        return self.edges[sf - 7]

    def outer(self, sf: int) -> float:
        return self.edges[sf - 6]

    def area(self, sf: int) -> float:
        return math.pi * (self.outer(sf) ** 2 - self.inner(sf) ** 2)

    def is_empty(self, sf: int) -> bool:
        return self.outer(sf) <= self.inner(sf)

    def sf_at(self, distance_m: float) -> int:
        for s in SPREADING_FACTORS:
            if distance_m <= self.outer(s) and not self.is_empty(s):
                return s
        raise OutOfZoneError(f"distance {distance_m} m is outside the cell")

    def with_boundary(self, sf: int, radius_m: float) -> "Partition":
        b = list(self.boundaries_m)
        b[sf - 7] = radius_m
        return Partition(tuple(b), self.cell_radius_m)


@dataclass(frozen=True)
class PowerPolicy:
    edge_power_w: Mapping[int, float]
    received_power_w: Mapping[int, float]


@dataclass(frozen=True)
class DutyPlan:
    duties: Mapping[int, float]

    def __post_init__(self) -> None:
        for s, d in self.duties.items():
            if not 0.0 <= d < 1.0:
                raise ValueError(f"duty for SF{s} must be in [0, 1), got {d!r}")

    def __getitem__(self, sf: int) -> float:
        return self.duties[sf]

    @classmethod
    def uniform(cls, duty: float) -> "DutyPlan":
        return cls({s: duty for s in SPREADING_FACTORS})

    def access_rates(self, sf_table: SfTable) -> dict[int, float]:
        return {s: channel_access_rate(d, sf_table[s]) for s, d in self.duties.items()}


def bit_rate(params: SfParams) -> float:
    """Raw LoRa bit rate ``s / 2^s * B * C`` in bps."""
    return params.sf / 2**params.sf * params.bandwidth_hz * params.code_rate


def packet_duration(params: SfParams) -> float:
    return params.payload_bits / bit_rate(params)


def mean_path_gain(distance_m, cfg: NetworkConfig):
    """Average channel power gain to the gateway; accepts scalars or numpy arrays."""
    return cfg.reference_gain * (cfg.gateway_height_m**2 + distance_m**2) ** (-cfg.pathloss_exponent / 2)


def max_range(sf: int, cfg: NetworkConfig, sf_table: SfTable) -> float:
    """Horizontal distance where the mean SNR at full power equals the SF's SNR threshold."""
    eta = sf_table[sf].snr_threshold
    ratio = cfg.max_power_w * cfg.reference_gain / (eta * cfg.noise_w)
    squared = ratio ** (2.0 / cfg.pathloss_exponent) - cfg.gateway_height_m**2
    if squared < 0:
        raise UnreachableSFError(f"SF{sf} cannot reach the gateway even directly below it")
    return math.sqrt(squared)


def equal_area_partition(cell_radius_m: float) -> Partition:
    if not cell_radius_m > 0:
        raise ValueError("cell_radius_m must be positive")
    n = len(SPREADING_FACTORS)
    return Partition(
        tuple(cell_radius_m * math.sqrt((s - 6) / n) for s in BOUNDARY_SFS),
        cell_radius_m,
    )


def max_range_partition(cfg: NetworkConfig, sf_table: SfTable) -> Partition:
    """Boundaries at each SF's path-loss-only range, clipped to the cell radius."""
    rc = cfg.cell_radius_m
    bounds = [min(max_range(s, cfg, sf_table), rc) for s in BOUNDARY_SFS]
    for i in range(1, len(bounds)):
        bounds[i] = max(bounds[i], bounds[i - 1])
    return Partition(tuple(bounds), rc)


def zone_areas(partition: Partition) -> dict[int, float]:
    return {s: partition.area(s) for s in SPREADING_FACTORS}


def channel_access_rate(duty: float, params: SfParams) -> float:
    """Packet initiations per UE per second for duty cycle ``duty``."""
    if not 0.0 <= duty < 1.0:
        raise ValueError(f"duty must be in [0, 1), got {duty!r}")
    return duty / ((1.0 - duty) * packet_duration(params))


def edge_received_power(sf: int, partition: Partition, cfg: NetworkConfig, edge_power_w: float | None = None) -> float:
    """Equalized mean received power of zone ``sf`` when its edge UE sends ``edge_power_w``."""
    p_edge = cfg.max_power_w if edge_power_w is None else edge_power_w
    return p_edge * mean_path_gain(partition.outer(sf), cfg)


def power_policy(partition: Partition, cfg: NetworkConfig, edge_powers: Mapping[int, float] | None = None) -> PowerPolicy:
    edge = {s: cfg.max_power_w for s in SPREADING_FACTORS}
    if edge_powers:
        edge.update(edge_powers)
    for s, p in edge.items():
        if not 0 < p <= cfg.max_power_w:
            raise ValueError(f"edge power of SF{s} must be in (0, P_max], got {p!r}")
    return PowerPolicy(edge, {s: edge_received_power(s, partition, cfg, edge[s]) for s in SPREADING_FACTORS})


def transmit_power(sf: int, distance_m: float, partition: Partition, policy: PowerPolicy, cfg: NetworkConfig) -> float:
    """Slow channel-inversion power for a UE of zone ``sf`` at ``distance_m``."""
    lo, hi = partition.inner(sf), partition.outer(sf)
    if not lo <= distance_m <= hi:
        raise OutOfZoneError(f"distance {distance_m} m is outside SF{sf} zone [{lo}, {hi}]")
    h2 = cfg.gateway_height_m**2
    return policy.edge_power_w[sf] * ((h2 + distance_m**2) / (h2 + hi**2)) ** (cfg.pathloss_exponent / 2)

