"""Monte-Carlo ground truth for the co-SF collision model.

Trials are grouped into fixed-size blocks. Block ``b`` of an estimator draws
from its own Philox stream keyed by ``(seed, stream, b)``, so estimates do not
depend on how many worker processes evaluate the blocks. Per-block partial
results are combined in block order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, Iterator, NamedTuple

import numpy as np

from .analytic import ZoneScenario, zone_scenario
from .model import (
    SPREADING_FACTORS,
    DutyPlan,
    NetworkConfig,
    OutOfZoneError,
    Partition,
    SfTable,
    bit_rate,
    mean_path_gain,
)

BLOCK_TRIALS = 4096

# Stream tags keep estimators that share a seed statistically independent.
_STREAM_RAIN = 0
_STREAM_SUCCESS = 1
_STREAM_LAPLACE = 2
_STREAM_POPULATION = 3


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    stderr: float
    trials: int
    seed: int

    @classmethod
    def bernoulli(cls, successes: int, trials: int, seed: int) -> "McEstimate":
        p = successes / trials
        return cls(p, math.sqrt(p * (1.0 - p) / trials), trials, seed)

    def interval(self, k: float = 3.0) -> tuple[float, float]:
        return self.estimate - k * self.stderr, self.estimate + k * self.stderr


class PacketEvent(NamedTuple):
    start_s: float
    distance_m: float
    fading: float
    tx_power_w: float | None
    rx_power_w: float


@dataclass
class PacketEvents:
    """One realization of interfering packets, stored column-wise."""

    start_s: np.ndarray
    distance_m: np.ndarray
    fading: np.ndarray
    rx_power_w: np.ndarray
    packet_duration_s: float
    tx_power_w: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.start_s)

    def __iter__(self) -> Iterator[PacketEvent]:
        for i in range(len(self)):
            tx = None if self.tx_power_w is None else float(self.tx_power_w[i])
            yield PacketEvent(
                float(self.start_s[i]), float(self.distance_m[i]), float(self.fading[i]),
                tx, float(self.rx_power_w[i]),
            )


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream, block))))


def _blocks(n_trials: int) -> list[tuple[int, int]]:
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    n_blocks = -(-n_trials // BLOCK_TRIALS)
    return [(b, min(BLOCK_TRIALS, n_trials - b * BLOCK_TRIALS)) for b in range(n_blocks)]


def _map_blocks(func: Callable, n_trials: int, workers: int) -> list:
    blocks = _blocks(n_trials)
    if workers <= 1 or len(blocks) == 1:
        return [func(b, size) for b, size in blocks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, *zip(*blocks)))


def overlap_fraction(start_s, packet_duration_s: float):
    """Fraction of the reference packet ``[0, T)`` covered by a packet starting at ``start_s``."""
    return np.maximum(packet_duration_s - np.abs(start_s), 0.0) / packet_duration_s


def _ring_radii(rng: np.random.Generator, size, inner: float, outer: float) -> np.ndarray:
    u = rng.random(size)
    return np.sqrt(inner**2 + u * (outer**2 - inner**2))


def fixed_power_rx(cfg: NetworkConfig) -> Callable[[np.ndarray], np.ndarray]:
    """Mean received power when every UE transmits at ``P_max``."""
    return partial(_fixed_rx, cfg)


def _fixed_rx(cfg: NetworkConfig, distance_m):
    return cfg.max_power_w * mean_path_gain(distance_m, cfg)


def _rain_batch(rng: np.random.Generator, n: int, scn: ZoneScenario, rx_fn=None):
    """Poisson-rain interferers for ``n`` independent reference packets.

    Returns the owning trial index of each event and its columns.
    """
    T = scn.packet_duration_s
    mean = scn.mean_users * scn.access_rate * 2.0 * T
    counts = rng.poisson(mean, size=n)
    total = int(counts.sum())
    start = rng.uniform(-T, T, total)
    dist = _ring_radii(rng, total, scn.inner_radius_m, scn.outer_radius_m)
    fading = rng.exponential(1.0 / scn.fading_rate, total)
    rx = np.full(total, scn.received_power_w) if rx_fn is None else rx_fn(dist)
    owner = np.repeat(np.arange(n), counts)
    return owner, start, dist, fading, rx


def _population_batch(rng: np.random.Generator, n: int, scn: ZoneScenario, rx_fn=None):
    """Interferers from a finite UE population with per-UE Poisson packet initiations.

    Every UE starts packets at rate ``rho_s``; only UEs with at least one start in
    ``(-T, T)`` can overlap the reference packet. Thinning a density-``lambda_all``
    deployment to the active set and then to UEs with a start in the window
    composes into one independent thinning, so those UEs are drawn directly.
    """
    T = scn.packet_duration_s
    m = scn.access_rate * 2.0 * T
    p_any = -math.expm1(-m)
    ue_counts = rng.poisson(scn.mean_users * p_any, size=n)
    n_ue = int(ue_counts.sum())
    dist_ue = _ring_radii(rng, n_ue, scn.inner_radius_m, scn.outer_radius_m)
    # Zero-truncated Poisson(m) via the first arrival: tau has the truncated
    # exponential law on [0, 1), the rest is Poisson(m (1 - tau)) on (tau, 1).
    tau = -np.log1p(-rng.random(n_ue) * p_any) / m if n_ue else np.empty(0)
    extra = rng.poisson(m * (1.0 - tau)) if n_ue else np.empty(0, dtype=np.int64)
    per_ue = 1 + extra
    first = -T + 2.0 * T * tau
    total = int(per_ue.sum())
    ue_index = np.repeat(np.arange(n_ue), per_ue)
    is_first = np.ones(total, dtype=bool)
    if total:
        is_first[1:] = ue_index[1:] != ue_index[:-1]
    lo = first[ue_index]
    start = np.where(is_first, lo, lo + rng.random(total) * (T - lo))
    fading = rng.exponential(1.0 / scn.fading_rate, total)
    rx_ue = np.full(n_ue, scn.received_power_w) if rx_fn is None else rx_fn(dist_ue)
    owner = np.repeat(np.repeat(np.arange(n), ue_counts), per_ue)
    return owner, start, dist_ue[ue_index], fading, rx_ue[ue_index]


def _batch_interference(batch, n: int, T: float) -> np.ndarray:
    owner, start, _dist, fading, rx = batch
    return np.bincount(owner, weights=rx * fading * overlap_fraction(start, T), minlength=n)


def sample_poisson_rain(
    scn: ZoneScenario,
    rng_seed: int,
    cfg: NetworkConfig | None = None,
    fixed_power: bool = False,
) -> PacketEvents:
    """One realization of co-SF packets that can overlap a reference packet on ``[0, T)``.

    With ``fixed_power`` every interferer transmits at ``cfg.max_power_w``;
    otherwise the zone's channel-inversion policy applies. Transmit powers are
    reported only when ``cfg`` is given.
    """
    if fixed_power and cfg is None:
        raise ValueError("fixed_power needs a NetworkConfig")
    rng = block_rng(rng_seed, _STREAM_RAIN, 0)
    rx_fn = fixed_power_rx(cfg) if fixed_power else None
    _, start, dist, fading, rx = _rain_batch(rng, 1, scn, rx_fn)
    tx = None
    if cfg is not None:
        tx = np.full(len(start), cfg.max_power_w) if fixed_power else scn.received_power_w / mean_path_gain(dist, cfg)
    return PacketEvents(start, dist, fading, rx, scn.packet_duration_s, tx)


def average_interference(events: PacketEvents) -> float:
    """Interference power averaged over the reference packet duration."""
    if len(events) == 0:
        return 0.0
    h = overlap_fraction(events.start_s, events.packet_duration_s)
    return float(np.sum(events.rx_power_w * events.fading * h))


def _success_block(scn, ref_rx, rx_fn, seed, block, size):
    rng = block_rng(seed, _STREAM_SUCCESS, block)
    interference = _batch_interference(_rain_batch(rng, size, scn, rx_fn), size, scn.packet_duration_s)
    signal = ref_rx * rng.exponential(1.0 / scn.fading_rate, size)
    ok = (signal >= scn.snr_threshold * scn.noise_w) & (signal >= scn.sir_threshold * interference)
    return int(ok.sum())


def estimate_success_prob(
    scn: ZoneScenario,
    ref_distance_m: float | None = None,
    n_trials: int = 100_000,
    seed: int = 0,
    fixed_power_cfg: NetworkConfig | None = None,
    workers: int = 1,
) -> McEstimate:
    """Estimate P{SNR >= eta and SIR >= gamma} for a reference packet, jointly.

    Under channel inversion the reference distance does not matter. With
    ``fixed_power_cfg`` all UEs send at full power and the reference UE sits
    at ``ref_distance_m`` (the zone edge by default).
    """
    ref = scn.outer_radius_m if ref_distance_m is None else ref_distance_m
    if not scn.inner_radius_m <= ref <= scn.outer_radius_m:
        raise OutOfZoneError(f"reference distance {ref} m is outside the zone")
    if fixed_power_cfg is None:
        ref_rx, rx_fn = scn.received_power_w, None
    else:
        rx_fn = fixed_power_rx(fixed_power_cfg)
        ref_rx = float(rx_fn(ref))
    counts = _map_blocks(partial(_success_block, scn, ref_rx, rx_fn, seed), n_trials, workers)
    return McEstimate.bernoulli(sum(counts), n_trials, seed)


def _laplace_block(scn, z, seed, block, size):
    rng = block_rng(seed, _STREAM_LAPLACE, block)
    values = np.exp(-z * _batch_interference(_rain_batch(rng, size, scn), size, scn.packet_duration_s))
    return math.fsum(values), math.fsum(values * values)


def estimate_laplace(z: float, scn: ZoneScenario, n_trials: int = 100_000, seed: int = 0, workers: int = 1) -> McEstimate:
    """Sample mean of ``exp(-z I)`` over Poisson-rain realizations."""
    if z < 0:
        raise ValueError("z must be >= 0")
    parts = _map_blocks(partial(_laplace_block, scn, z, seed), n_trials, workers)
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    mean = s1 / n_trials
    var = max(s2 / n_trials - mean * mean, 0.0)
    return McEstimate(mean, math.sqrt(var / n_trials), n_trials, seed)


@dataclass(frozen=True)
class FullScenario:
    cfg: NetworkConfig
    sf_table: SfTable
    partition: Partition
    duty_plan: DutyPlan
    power_control: bool = True

    def zone(self, sf: int) -> ZoneScenario:
        return zone_scenario(sf, self.partition, self.cfg, self.sf_table, self.duty_plan[sf])


@dataclass(frozen=True)
class ProfileBin:
    sf: int
    inner_m: float
    outer_m: float
    successes: int
    trials: int
    bit_rate_bps: float
    duty: float

    @property
    def success(self) -> McEstimate:
        return McEstimate.bernoulli(self.successes, self.trials, 0)

    @property
    def area_m2(self) -> float:
        return math.pi * (self.outer_m**2 - self.inner_m**2)

    @property
    def throughput_bps(self) -> float:
        return self.bit_rate_bps * self.duty * self.success.estimate

    @property
    def throughput_stderr_bps(self) -> float:
        return self.bit_rate_bps * self.duty * self.success.stderr


@dataclass
class PopulationResult:
    bins: list[ProfileBin]
    spatial_throughput: McEstimate
    cell_radius_m: float
    seed: int

    def zone_bins(self, sf: int) -> list[ProfileBin]:
        return [b for b in self.bins if b.sf == sf]

    def zone_success(self, sf: int) -> McEstimate | None:
        """Area-weighted success probability of a zone, or ``None`` for empty zones."""
        bins = self.zone_bins(sf)
        if not bins:
            return None
        total = sum(b.area_m2 for b in bins)
        est = sum(b.area_m2 * b.success.estimate for b in bins) / total
        # Bins share an interference draw per trial; this assumes independence.
        se = math.sqrt(sum((b.area_m2 * b.success.stderr) ** 2 for b in bins)) / total
        return McEstimate(est, se, bins[0].trials, self.seed)

    def zone_throughput(self, sf: int) -> float:
        bins = self.zone_bins(sf)
        if not bins:
            return 0.0
        return sum(b.area_m2 * b.throughput_bps for b in bins) / sum(b.area_m2 for b in bins)


def profile_bins(partition: Partition, bin_width_m: float) -> list[tuple[int, float, float]]:
    """Radial bins of at most ``bin_width_m`` that never straddle a zone boundary."""
    if not bin_width_m > 0:
        raise ValueError("bin_width_m must be positive")
    out = []
    for s in SPREADING_FACTORS:
        lo, hi = partition.inner(s), partition.outer(s)
        if hi <= lo:
            continue
        k = max(1, math.ceil((hi - lo) / bin_width_m - 1e-9))
        edges = np.linspace(lo, hi, k + 1)
        out.extend((s, float(a), float(b)) for a, b in zip(edges[:-1], edges[1:]))
    return out


def _population_block(full: FullScenario, bins, seed, block, size):
    rng = block_rng(seed, _STREAM_POPULATION, block)
    cfg = full.cfg
    rx_fn = None if full.power_control else fixed_power_rx(cfg)
    successes = np.zeros(len(bins), dtype=np.int64)
    per_trial = np.zeros(size)
    for s in SPREADING_FACTORS:
        idx = [i for i, b in enumerate(bins) if b[0] == s]
        if not idx:
            continue
        scn = full.zone(s)
        interference = _batch_interference(_population_batch(rng, size, scn, rx_fn), size, scn.packet_duration_s)
        inner = np.array([bins[i][1] for i in idx])
        outer = np.array([bins[i][2] for i in idx])
        u = rng.random((size, len(idx)))
        dist = np.sqrt(inner**2 + u * (outer**2 - inner**2))
        ref_rx = scn.received_power_w if rx_fn is None else rx_fn(dist)
        signal = ref_rx * rng.exponential(1.0 / scn.fading_rate, (size, len(idx)))
        ok = (signal >= scn.snr_threshold * scn.noise_w) & (signal >= scn.sir_threshold * interference[:, None])
        successes[idx] = ok.sum(axis=0)
        weight = (
            cfg.active_density_per_m2 * math.pi * (outer**2 - inner**2)
            * scn.bit_rate_bps * scn.duty / cfg.cell_area_m2
        )
        per_trial += ok @ weight
    return successes, math.fsum(per_trial), math.fsum(per_trial * per_trial)


def simulate_finite_population(
    full: FullScenario,
    n_trials: int = 100_000,
    seed: int = 0,
    bin_width_m: float = 25.0,
    workers: int = 1,
) -> PopulationResult:
    """Per-radial-bin success and throughput over a finite random UE population.

    Each trial draws a fresh deployment and packet schedule per zone and
    places one reference UE uniformly in area inside every bin.
    """
    bins = profile_bins(full.partition, bin_width_m)
    parts = _map_blocks(partial(_population_block, full, bins, seed), n_trials, workers)
    successes = np.sum([p[0] for p in parts], axis=0) if bins else np.zeros(0, dtype=np.int64)
    s1 = math.fsum(p[1] for p in parts)
    s2 = math.fsum(p[2] for p in parts)
    mean = s1 / n_trials
    var = max(s2 / n_trials - mean * mean, 0.0)
    rates = {p.sf: p for p in full.sf_table}
    profile = [
        ProfileBin(s, lo, hi, int(successes[i]), n_trials, bit_rate(rates[s]), full.duty_plan[s])
        for i, (s, lo, hi) in enumerate(bins)
    ]
    return PopulationResult(
        bins=profile,
        spatial_throughput=McEstimate(mean, math.sqrt(var / n_trials), n_trials, seed),
        cell_radius_m=full.cfg.cell_radius_m,
        seed=seed,
    )


def spatial_throughput_mc(full: FullScenario, n_trials: int = 100_000, seed: int = 0, workers: int = 1) -> McEstimate:
    """Total UE throughput per unit cell area (bps/m^2), estimated by simulation."""
    return simulate_finite_population(full, n_trials, seed, workers=workers).spatial_throughput
