"""Scenario and plan files.

A scenario file is INI-style with up to three sections::

    [network]
    cell_radius_m = 1000
    active_density_per_km2 = 700
    max_power_dbm = 14

    [sf]
    payload_bytes = 25
    snr_threshold_db_sf7 = -6

    [run]
    trials = 100000
    seed = 1

Every key is optional; missing values take the defaults of
:class:`~loramaxmin.model.NetworkConfig` and :meth:`SfTable.default`.
Power-like quantities may be given either in dBm/dB or linear units.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .model import (
    BOUNDARY_SFS,
    SPREADING_FACTORS,
    DutyPlan,
    NetworkConfig,
    Partition,
    SfTable,
    db_to_linear,
    dbm_to_watt,
)


class ConfigError(ValueError):
    """Invalid scenario or plan file; ``line`` points at the offending entry when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass
class RunParams:
    trials: int = 100_000
    seed: int = 0
    duty: str = "optimal"
    scheme: int = 1
    partition: str = "equal-area"
    bin_width_m: float = 25.0
    workers: int = 1
    out: str | None = None


@dataclass
class Scenario:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    sf_table: SfTable = field(default_factory=SfTable.default)
    run: RunParams = field(default_factory=RunParams)


_NETWORK_PLAIN = {
    "gateway_height_m", "cell_radius_m", "pathloss_exponent", "carrier_hz",
    "lightspeed_m_s", "fading_rate", "max_duty", "ib_tolerance_bps",
    "active_density_per_m2", "all_density_per_m2", "noise_w", "max_power_w",
}
# key -> (target field, converter)
_NETWORK_CONVERTED = {
    "active_density_per_km2": ("active_density_per_m2", lambda v: v * 1e-6),
    "all_density_per_km2": ("all_density_per_m2", lambda v: v * 1e-6),
    "noise_dbm": ("noise_w", dbm_to_watt),
    "max_power_dbm": ("max_power_w", dbm_to_watt),
}
_SF_KEY = re.compile(r"^(?P<name>[a-z_]+?)(?:_sf(?P<sf>\d+))?$")
_SF_FIELDS = {
    "bandwidth_hz": ("bandwidth_hz", float),
    "code_rate": ("code_rate", float),
    "payload_bits": ("payload_bits", float),
    "payload_bytes": ("payload_bits", lambda v: 8.0 * v),
    "snr_threshold": ("snr_threshold", float),
    "snr_threshold_db": ("snr_threshold", db_to_linear),
    "sir_threshold": ("sir_threshold", float),
    "sir_threshold_db": ("sir_threshold", db_to_linear),
}


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip().lower()
        elif current == section and re.match(rf"^{re.escape(key)}\s*[=:]", stripped, re.IGNORECASE):
            return lineno
    return None


def _number(value: str, where) -> float:
    try:
        x = float(value)
    except ValueError:
        raise where(f"not a number: {value!r}") from None
    if not math.isfinite(x):
        raise where(f"not finite: {value!r}")
    return x


def _parser(text: str, path: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=path)
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", path, line) from None
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], path, getattr(exc, "lineno", None)) from None
    return parser


def parse_scenario(text: str, path: str = "<string>") -> Scenario:
    parser = _parser(text, path)
    unknown = set(parser.sections()) - {"network", "sf", "run"}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}", path)

    def err(section: str, key: str):
        return lambda msg: ConfigError(f"[{section}] {key}: {msg}", path, _line_of(text, section, key))

    net: dict[str, float] = {}
    if parser.has_section("network"):
        for key, value in parser.items("network"):
            where = err("network", key)
            if key in _NETWORK_PLAIN:
                target, x = key, _number(value, where)
            elif key in _NETWORK_CONVERTED:
                target, conv = _NETWORK_CONVERTED[key]
                x = conv(_number(value, where))
            else:
                raise where("unknown key")
            if target in net:
                raise where(f"{target} given twice")
            net[target] = x
    if "active_density_per_m2" in net and "all_density_per_m2" not in net:
        net["all_density_per_m2"] = 2.0 * net["active_density_per_m2"]
    try:
        network = NetworkConfig(**net)
    except ValueError as exc:
        raise ConfigError(f"[network] {exc}", path) from None

    sf_table = SfTable.default()
    if parser.has_section("sf"):
        shared: dict[str, float] = {}
        per_sf: dict[int, dict[str, float]] = {}
        for key, value in parser.items("sf"):
            where = err("sf", key)
            m = _SF_KEY.match(key)
            if not m or m.group("name") not in _SF_FIELDS:
                raise where("unknown key")
            target, conv = _SF_FIELDS[m.group("name")]
            x = conv(_number(value, where))
            if m.group("sf") is None:
                shared[target] = x
            else:
                s = int(m.group("sf"))
                if s not in SPREADING_FACTORS:
                    raise where(f"SF must be 7..12, got {s}")
                per_sf.setdefault(s, {})[target] = x
        try:
            sf_table = SfTable(tuple(
                replace(p, **{**shared, **per_sf.get(p.sf, {})}) for p in sf_table
            ))
        except ValueError as exc:
            raise ConfigError(f"[sf] {exc}", path) from None

    run = RunParams()
    if parser.has_section("run"):
        kinds = {f.name: f.type for f in fields(RunParams)}
        for key, value in parser.items("run"):
            where = err("run", key)
            if key not in kinds:
                raise where("unknown key")
            if key in ("trials", "seed", "scheme", "workers"):
                try:
                    setattr(run, key, int(value))
                except ValueError:
                    raise where(f"not an integer: {value!r}") from None
            elif key == "bin_width_m":
                run.bin_width_m = _number(value, where)
            else:
                setattr(run, key, value.strip())
    return Scenario(network, sf_table, run)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read: {exc.strerror}", str(path)) from None
    return parse_scenario(text, str(path))


def format_plan(partition: Partition, duty_plan: DutyPlan | None = None) -> str:
    """Serialize a partition (and optionally duties) with round-trip exact floats."""
    lines = ["[partition]", f"cell_radius_m = {partition.cell_radius_m!r}"]
    lines += [f"r{s} = {r!r}" for s, r in zip(BOUNDARY_SFS, partition.boundaries_m)]
    if duty_plan is not None:
        lines += ["", "[duty]"]
        lines += [f"sf{s} = {duty_plan[s]!r}" for s in SPREADING_FACTORS]
    return "\n".join(lines) + "\n"


def parse_plan(text: str, path: str = "<string>") -> tuple[Partition, DutyPlan | None]:
    parser = _parser(text, path)
    if not parser.has_section("partition"):
        raise ConfigError("missing [partition] section", path)

    def get(section: str, key: str) -> float:
        if not parser.has_option(section, key):
            raise ConfigError(f"[{section}] missing {key}", path)
        where = lambda msg: ConfigError(f"[{section}] {key}: {msg}", path, _line_of(text, section, key))  # noqa: E731
        return _number(parser.get(section, key), where)

    rc = get("partition", "cell_radius_m")
    bounds = tuple(get("partition", f"r{s}") for s in BOUNDARY_SFS)
    try:
        partition = Partition(bounds, rc)
    except ValueError as exc:
        raise ConfigError(f"[partition] {exc}", path) from None
    duties = None
    if parser.has_section("duty"):
        try:
            duties = DutyPlan({s: get("duty", f"sf{s}") for s in SPREADING_FACTORS})
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"[duty] {exc}", path) from None
    return partition, duties


def load_plan(path: str | Path) -> tuple[Partition, DutyPlan | None]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read: {exc.strerror}", str(path)) from None
    return parse_plan(text, str(path))
