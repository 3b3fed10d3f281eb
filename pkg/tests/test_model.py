import math

import pytest
from hypothesis import given, strategies as st

from loramaxmin.model import (
    SPREADING_FACTORS,
    DutyPlan,
    NetworkConfig,
    OutOfZoneError,
    Partition,
    SfParams,
    SfTable,
    UnreachableSFError,
    bit_rate,
    channel_access_rate,
    db_to_linear,
    dbm_to_watt,
    equal_area_partition,
    max_range,
    max_range_partition,
    mean_path_gain,
    packet_duration,
    power_policy,
    transmit_power,
    zone_areas,
)

CFG = NetworkConfig()
TABLE = SfTable.default()


@pytest.mark.parametrize("sf, expected", [(7, 5469), (9, 1758), (12, 293)])
def test_bit_rate_matches_lora_table(sf, expected):
    assert round(bit_rate(TABLE[sf])) == expected


def test_bit_rate_exact_sf7():
    assert bit_rate(TABLE[7]) == pytest.approx(5468.75, abs=1e-12)


@pytest.mark.parametrize("sf, expected", [(7, 200 / 5468.75), (12, 200 / 292.96875)])
def test_packet_duration(sf, expected):
    assert packet_duration(TABLE[sf]) == pytest.approx(expected, rel=1e-12)
    assert packet_duration(TABLE[sf]) == pytest.approx({7: 0.03657, 12: 0.6827}[sf], rel=1e-3)


def test_zero_payload_rejected():
    with pytest.raises(ValueError):
        SfParams(sf=7, payload_bits=0)


def test_rate_and_duration_monotone_in_sf():
    rates = [bit_rate(TABLE[s]) for s in SPREADING_FACTORS]
    durations = [packet_duration(TABLE[s]) for s in SPREADING_FACTORS]
    assert all(a > b for a, b in zip(rates, rates[1:]))
    assert all(a < b for a, b in zip(durations, durations[1:]))


def test_reference_gain_hand_value():
    # 4 pi 868e6 / 3e8 = 36.3587...
    alpha0 = 1.0 / (4 * math.pi * 868e6 / 3e8) ** 2
    assert CFG.reference_gain == pytest.approx(alpha0, rel=1e-12)
    assert CFG.reference_gain == pytest.approx(7.566e-4, rel=2e-4)
    assert 10 * math.log10(CFG.reference_gain) == pytest.approx(-31.2, abs=0.05)


def test_mean_path_gain_at_origin():
    assert mean_path_gain(0.0, CFG) == pytest.approx(CFG.reference_gain * 625.0**-1.75, rel=1e-12)


def test_mean_path_gain_decreasing():
    gains = [mean_path_gain(d, CFG) for d in range(0, 3000, 50)]
    assert all(a > b for a, b in zip(gains, gains[1:]))


def test_sf7_range_edge_snr_equals_threshold():
    snr = CFG.max_power_w * mean_path_gain(1053.0, CFG) / dbm_to_watt(-117)
    assert snr == pytest.approx(db_to_linear(-6), rel=1e-3)


@pytest.mark.parametrize("sf, expected", [(7, 1053), (8, 1283), (9, 1563), (10, 1904), (11, 2244), (12, 2645)])
def test_max_range_table(sf, expected):
    assert abs(max_range(sf, CFG, TABLE) - expected) <= 1.0


def test_max_range_grows_as_threshold_drops():
    ranges = [max_range(s, CFG, TABLE) for s in SPREADING_FACTORS]
    assert all(a < b for a, b in zip(ranges, ranges[1:]))


def test_unreachable_sf():
    table = TABLE.replace(7, snr_threshold=db_to_linear(60))
    with pytest.raises(UnreachableSFError):
        max_range(7, CFG, table)


def test_equal_area_partition_values():
    p = equal_area_partition(1000)
    assert round(p.outer(7)) == 408
    assert round(p.outer(9)) == 707
    assert p.outer(12) == 1000
    for a in zone_areas(p).values():
        assert a == pytest.approx(math.pi * 1e6 / 6, rel=1e-12)


def test_degenerate_ring_has_zero_area():
    p = Partition((300, 300, 500, 600, 700), 1000)
    assert p.area(8) == 0
    assert p.is_empty(8)


def test_max_range_partition_area_sf8():
    p = max_range_partition(CFG.with_radius(2645), TABLE)
    assert p.area(8) == pytest.approx(math.pi * (1283**2 - 1053**2), rel=2e-3)


def test_max_range_partition_clips_to_cell():
    assert max_range_partition(CFG, TABLE).boundaries_m == (1000,) * 5
    cfg = CFG.with_radius(2000)
    expected = [max_range(s, cfg, TABLE) for s in (7, 8, 9, 10)] + [2000]
    assert max_range_partition(cfg, TABLE).boundaries_m == pytest.approx(expected, rel=1e-12)


def test_partition_ordering_enforced():
    with pytest.raises(ValueError):
        Partition((500, 400, 600, 700, 800), 1000)
    with pytest.raises(ValueError):
        Partition((100, 200, 300, 400, 1200), 1000)


@st.composite
def partitions(draw):
    rc = draw(st.floats(1.0, 1e4))
    cuts = sorted(draw(st.lists(st.floats(0.0, 1.0), min_size=5, max_size=5)))
    return Partition(tuple(rc * c for c in cuts), rc)


@given(partitions())
def test_zone_areas_sum_to_cell(p):
    total = sum(zone_areas(p).values())
    assert total == pytest.approx(math.pi * p.cell_radius_m**2, rel=1e-9)
    assert all(a >= 0 for a in zone_areas(p).values())


def test_channel_access_rate_examples():
    params = TABLE[7]
    T = packet_duration(params)
    assert channel_access_rate(0.0, params) == 0.0
    assert channel_access_rate(0.5, params) == pytest.approx(1.0 / T, rel=1e-12)
    assert channel_access_rate(0.01, params) == pytest.approx(0.01 / (0.99 * T), rel=1e-12)
    assert channel_access_rate(0.01, params) == pytest.approx(0.2763, rel=1e-3)


def test_channel_access_rate_rejects_full_duty():
    with pytest.raises(ValueError):
        channel_access_rate(1.0, TABLE[7])


@given(st.floats(0.0, 0.999), st.sampled_from(SPREADING_FACTORS))
def test_access_rate_round_trip(duty, sf):
    T = packet_duration(TABLE[sf])
    rho = channel_access_rate(duty, TABLE[sf])
    assert rho * T / (1 + rho * T) == pytest.approx(duty, rel=1e-12, abs=1e-15)


def test_transmit_power_examples():
    p = equal_area_partition(1000)
    policy = power_policy(p, CFG)
    r7 = p.outer(7)
    assert transmit_power(7, r7, p, policy, CFG) == pytest.approx(CFG.max_power_w, rel=1e-14)
    at_origin = transmit_power(7, 0.0, p, policy, CFG)
    assert at_origin == pytest.approx(CFG.max_power_w * (625 / (625 + r7**2)) ** 1.75, rel=1e-12)
    assert at_origin * mean_path_gain(0.0, CFG) == pytest.approx(policy.received_power_w[7], rel=1e-12)


def test_transmit_power_out_of_zone():
    p = equal_area_partition(1000)
    policy = power_policy(p, CFG)
    with pytest.raises(OutOfZoneError):
        transmit_power(8, 100.0, p, policy, CFG)


@given(partitions(), st.sampled_from(SPREADING_FACTORS), st.floats(0.0, 1.0))
def test_channel_inversion_is_exact(p, sf, frac):
    cfg = CFG.with_radius(p.cell_radius_m)
    policy = power_policy(p, cfg)
    d = p.inner(sf) + frac * (p.outer(sf) - p.inner(sf))
    d = min(max(d, p.inner(sf)), p.outer(sf))
    rx = transmit_power(sf, d, p, policy, cfg) * mean_path_gain(d, cfg)
    assert rx == pytest.approx(policy.received_power_w[sf], rel=1e-12)
    assert transmit_power(sf, d, p, policy, cfg) <= policy.edge_power_w[sf] * (1 + 1e-12)


def test_transmit_power_nondecreasing_in_distance():
    p = equal_area_partition(1000)
    policy = power_policy(p, CFG)
    ds = [p.inner(9) + i * (p.outer(9) - p.inner(9)) / 50 for i in range(51)]
    powers = [transmit_power(9, d, p, policy, CFG) for d in ds]
    assert all(a <= b for a, b in zip(powers, powers[1:]))


def test_network_config_invariants():
    with pytest.raises(ValueError):
        NetworkConfig(max_duty=1.0)
    with pytest.raises(ValueError):
        NetworkConfig(pathloss_exponent=1.5)
    with pytest.raises(ValueError):
        NetworkConfig(all_density_per_m2=1e-4)


def test_duty_plan_bounds():
    with pytest.raises(ValueError):
        DutyPlan.uniform(1.0)
    assert DutyPlan.uniform(0.01).access_rates(TABLE)[7] == pytest.approx(0.2762, rel=1e-3)
