import csv
import io
import subprocess
import sys

import pytest

from loramaxmin.cli import PROFILE_COLUMNS, RANGE_COLUMNS, REPORT_COLUMNS, main
from loramaxmin.config import ConfigError, format_plan, parse_plan, parse_scenario
from loramaxmin.model import NetworkConfig, Partition, SfTable, db_to_linear, dbm_to_watt, equal_area_partition
from loramaxmin.optimize import iterative_balancing


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, list(csv.DictReader(io.StringIO(out))) if out else [], out, err


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


DB_CONFIG = """\
[network]
cell_radius_m = 1200
active_density_per_km2 = 500
max_power_dbm = 12
noise_dbm = -115

[sf]
payload_bytes = 20
snr_threshold_db_sf9 = -12
sir_threshold_db = 5
"""


def linear_config():
    return f"""\
[network]
cell_radius_m = 1200
active_density_per_m2 = {500e-6!r}
all_density_per_m2 = {1000e-6!r}
max_power_w = {dbm_to_watt(12)!r}
noise_w = {dbm_to_watt(-115)!r}

[sf]
payload_bits = 160
snr_threshold_sf9 = {db_to_linear(-12)!r}
sir_threshold = {db_to_linear(5)!r}
"""


def test_defaults_when_empty():
    scenario = parse_scenario("")
    assert scenario.network == NetworkConfig()
    assert scenario.sf_table == SfTable.default()


def test_db_and_linear_parse_to_same_config():
    a, b = parse_scenario(DB_CONFIG), parse_scenario(linear_config())
    assert a.network.max_power_w == pytest.approx(b.network.max_power_w, rel=1e-15)
    assert a.network.all_density_per_m2 == pytest.approx(1000e-6, rel=1e-15)
    assert a.sf_table[9].snr_threshold == pytest.approx(b.sf_table[9].snr_threshold, rel=1e-15)
    assert a.sf_table[9].snr_threshold != a.sf_table[8].snr_threshold


@pytest.mark.parametrize("command", ["ranges", "analyze", "optimize"])
def test_db_and_linear_outputs_agree_to_6_sig_figs(tmp_path, capsys, command):
    _, rows_db, _, _ = run(capsys, command, "--config", write(tmp_path, "db.ini", DB_CONFIG))
    _, rows_lin, _, _ = run(capsys, command, "--config", write(tmp_path, "lin.ini", linear_config()))
    assert len(rows_db) == len(rows_lin) == 6
    for x, y in zip(rows_db, rows_lin):
        for key, value in x.items():
            try:
                u, v = float(value), float(y[key])
            except ValueError:
                assert value == y[key]
                continue
            assert f"{u:.6g}" == f"{v:.6g}", key


@pytest.mark.parametrize(
    "text, line",
    [
        ("[network]\ncell_radius_m = 1000\npathloss_exponent = abc\n", 3),
        ("[network]\n\nbogus_key = 1\n", 3),
        ("[sf]\nsnr_threshold_db_sf13 = -6\n", 2),
        ("[run]\ntrials = many\n", 2),
        ("[network]\nthis line is broken\n", 2),
    ],
)
def test_line_anchored_errors(text, line):
    with pytest.raises(ConfigError) as info:
        parse_scenario(text, "cfg.ini")
    assert info.value.line == line
    assert str(info.value).startswith(f"cfg.ini:{line}:")


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        parse_scenario("[network]\nmax_duty = 1.5\n")
    with pytest.raises(ConfigError):
        parse_scenario("[extra]\nx = 1\n")


def test_plan_round_trip():
    sol = iterative_balancing(NetworkConfig(), SfTable.default())
    partition, duties = parse_plan(format_plan(sol.partition, sol.duty_plan))
    assert partition == sol.partition
    assert duties == sol.duty_plan
    partition, duties = parse_plan(format_plan(equal_area_partition(1000)))
    assert duties is None


def test_plan_order_violation():
    text = format_plan(Partition((100, 200, 300, 400, 500), 1000)).replace("r9 = 300.0", "r9 = 50.0")
    with pytest.raises(ConfigError):
        parse_plan(text)


def test_ranges_table(capsys):
    code, rows, out, _ = run(capsys, "ranges")
    assert code == 0
    assert out.splitlines()[0] == ",".join(RANGE_COLUMNS)
    assert [round(float(r["bit_rate_bps"])) for r in rows] == [5469, 3125, 1758, 977, 537, 293]
    for r, want in zip(rows, [1053, 1283, 1563, 1904, 2244, 2645]):
        assert abs(float(r["max_range_m"]) - want) <= 1
    for r, want in zip(rows, [408, 577, 707, 816, 913, 1000]):
        assert abs(float(r["equal_area_range_m"]) - want) <= 1


def test_ranges_scaling(tmp_path, capsys):
    _, base, _, _ = run(capsys, "ranges")
    _, half, _, _ = run(capsys, "ranges", "--cell-radius", "500")
    for a, b in zip(base, half):
        assert float(b["equal_area_range_m"]) == pytest.approx(0.5 * float(a["equal_area_range_m"]), rel=1e-12)
    strong = write(tmp_path, "p.ini", f"[network]\nmax_power_w = {2 * dbm_to_watt(14)!r}\n")
    _, boosted, _, _ = run(capsys, "ranges", "--config", strong)
    assert all(float(b["max_range_m"]) > float(a["max_range_m"]) for a, b in zip(base, boosted))


def test_analyze_zero_duty(capsys):
    code, rows, out, _ = run(capsys, "analyze", "--duty", "fixed:0")
    assert code == 0
    assert out.splitlines()[0] == ",".join(REPORT_COLUMNS)
    assert all(float(r["throughput_bps"]) == 0.0 for r in rows)


def test_analyze_sweep(capsys):
    _, rows, _, _ = run(capsys, "analyze", "--sweep", "0.001:0.01:4")
    assert len(rows) == 24
    assert len({r["experiment"] for r in rows}) == 4


def test_analyze_empty_zone_flagged(tmp_path, capsys):
    plan = write(tmp_path, "plan.ini", format_plan(Partition((400, 600, 750, 900, 1000), 1000)))
    _, rows, _, _ = run(capsys, "analyze", "--partition", f"file:{plan}")
    assert rows[-1]["sf"] == "12"
    assert rows[-1]["active"] == "0"
    assert all(r["active"] == "1" for r in rows[:-1])


def test_simulate_deterministic(capsys):
    args = ("simulate", "--duty", "fixed:0.005", "--trials", "3000", "--seed", "4")
    code, rows, first, _ = run(capsys, *args)
    _, _, second, _ = run(capsys, *args, "--workers", "2")
    assert code == 0
    assert first == second
    assert all(r["p_suc_mc"] != "" for r in rows)


def test_simulate_single_trial(capsys):
    code, rows, _, _ = run(capsys, "simulate", "--trials", "1", "--seed", "0")
    assert code == 0
    for r in rows:
        assert float(r["p_suc_mc"]) in (0.0, 1.0)
        assert float(r["p_suc_mc_stderr"]) == 0.0


def test_optimize_rerun_is_idempotent(tmp_path, capsys):
    plan = tmp_path / "opt.ini"
    code, rows, _, err = run(capsys, "optimize", "--plan-out", str(plan))
    assert code == 0
    assert "boundary moves" in err
    code, rerun, _, err = run(capsys, "optimize", "--partition", f"file:{plan}")
    assert code == 0
    assert "boundary moves     0" in err
    assert [r["boundary_m"] for r in rerun] == [r["boundary_m"] for r in rows]


def test_optimize_not_converged_exit_code(capsys):
    code, rows, _, _ = run(capsys, "optimize", "--max-iterations", "1")
    assert code == 2
    assert len(rows) == 6


def test_benchmark_profile_schema(capsys):
    code, rows, out, err = run(capsys, "benchmark", "--scheme", "1", "--trials", "500", "--bin-width", "100")
    assert code == 0
    assert out.splitlines()[0] == ",".join(PROFILE_COLUMNS)
    assert {r["sf"] for r in rows} == {str(s) for s in range(7, 13)}
    assert "spatial throughput" in err


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main(["ranges", "--config", str(tmp_path / "missing.ini")]) == 1
    assert main(["analyze", "--duty", "sometimes"]) == 1
    assert main(["analyze", "--partition", "spiral"]) == 1
    with pytest.raises(SystemExit) as info:
        main(["nonsense"])
    assert info.value.code == 1


def test_unreachable_sf_exit_3(tmp_path, capsys):
    cfg = write(tmp_path, "deaf.ini", "[sf]\nsnr_threshold_db_sf12 = 80\n")
    assert main(["ranges", "--config", cfg]) == 3


def test_console_script_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "loramaxmin.cli", "ranges"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith(",".join(RANGE_COLUMNS))
