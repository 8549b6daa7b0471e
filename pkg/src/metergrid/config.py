"""Configuration files: tariff schedules, server settings, fleets, faults.

Tariff and server settings are TOML; fleet definitions and fault
scripts are JSON (the CLI rewrites fleet files when provisioning).
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .fleet import FaultEvent, FleetEntry
from .money import Money
from .simulator import (
    DeviceIdentity,
    Fault,
    LoadProfile,
    LoadSegment,
    SimulatedDevice,
)
from .tariff import TariffSchedule, TariffTier


class ConfigError(Exception):
    pass


def _data_path(name: str) -> Path:
    return Path(__file__).parent / "data" / name


def demo_schedule_path() -> Path:
    return _data_path("demo_flat_schedule.toml")


def demo_fleet_path() -> Path:
    return _data_path("demo_fleet.json")


def demo_server_path() -> Path:
    return _data_path("demo_server.toml")


def load_schedule(path) -> TariffSchedule:
    try:
        doc = tomllib.loads(Path(path).read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read schedule {path}: {exc}") from exc
    if "tariff" not in doc:
        raise ConfigError(f"{path} has no [tariff] section")
    return _schedule_from_doc(doc, path)


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    device_port: int = 7070
    http_port: int = 7080
    ledger_path: str = "metergrid-ledger.log"
    snapshot_path: str = "metergrid-snapshot.json"
    snapshot_every_s: int = 30
    alert_threshold: Fraction = Fraction(4, 5)
    token_ttl_s: float = 3600.0
    schedule: TariffSchedule = None  # type: ignore[assignment]


def load_server_config(path) -> ServerConfig:
    try:
        doc = tomllib.loads(Path(path).read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    srv = doc.get("server", {})
    if "tariff" not in doc:
        raise ConfigError(f"{path} has no [tariff] section")
    schedule = _schedule_from_doc(doc, path)
    try:
        return ServerConfig(
            host=srv.get("host", "127.0.0.1"),
            device_port=int(srv.get("device_port", 7070)),
            http_port=int(srv.get("http_port", 7080)),
            ledger_path=srv.get("ledger_path", "metergrid-ledger.log"),
            snapshot_path=srv.get("snapshot_path", "metergrid-snapshot.json"),
            snapshot_every_s=int(srv.get("snapshot_every_s", 30)),
            alert_threshold=Fraction(str(srv.get("alert_threshold", "0.80"))),
            token_ttl_s=float(srv.get("token_ttl_s", 3600)),
            schedule=schedule,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc


def _schedule_from_doc(doc: dict, path) -> TariffSchedule:
    t = doc["tariff"]
    try:
        tiers = tuple(
            TariffTier(
                price_per_unit=Money.from_bdt(raw["price_per_unit"]),
                units=(
                    None
                    if raw.get("units") in (None, "unbounded")
                    else Decimal(str(raw["units"]))
                ),
            )
            for raw in t["tiers"]
        )
        return TariffSchedule(
            tiers=tiers,
            demand_charge_prepaid=Money.from_bdt(t.get("demand_charge_prepaid", "150.00")),
            demand_charge_postpaid=Money.from_bdt(t.get("demand_charge_postpaid", "50.00")),
            vat_rate=Decimal(str(t.get("vat_rate", "0.05"))),
            meter_rent=Money.from_bdt(t.get("meter_rent", "40.00")),
            rebate_rate=Decimal(str(t.get("rebate_rate", "0.01"))),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad tariff in {path}: {exc}") from exc


def load_fleet(path) -> list[FleetEntry]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read fleet {path}: {exc}") from exc
    entries = []
    try:
        for raw in doc["devices"]:
            identity = DeviceIdentity(
                chip_id=raw["chip_id"],
                hostname=raw.get("hostname", raw["chip_id"]),
                mac=raw["mac"],
                ip=raw.get("ip", "0.0.0.0"),
            )
            profile = LoadProfile(
                tuple(
                    LoadSegment(int(seg["duration_s"]), Fraction(str(seg["power_w"])))
                    for seg in raw["profile"]
                )
            )
            device = SimulatedDevice(
                identity,
                profile,
                batch_size=int(raw.get("batch_size", 10)),
                flush_after_s=int(raw.get("flush_after_s", 120)),
                buffer_cap=raw.get("buffer_cap"),
            )
            network = raw.get("network")
            if network:
                device.provision(network["ssid"], network["credential"])
            entries.append(
                FleetEntry(device=device, meter_mode=raw.get("meter_mode", "prepaid"))
            )
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad fleet {path}: {exc}") from exc
    return entries


def load_faults(path) -> list[FaultEvent]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read faults {path}: {exc}") from exc
    try:
        return [
            FaultEvent(
                at_s=int(raw["at_s"]),
                chip_id=raw["chip_id"],
                fault=Fault(raw["fault"]),
            )
            for raw in doc
        ]
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad fault script {path}: {exc}") from exc


def save_fleet_network(path, chip_id: str, ssid: str, credential: str) -> None:
    """Provisioning: persist a device's wireless network into the fleet file."""
    p = Path(path)
    doc = json.loads(p.read_text())
    for raw in doc.get("devices", []):
        if raw["chip_id"] == chip_id:
            raw["network"] = {"ssid": ssid, "credential": credential}
            p.write_text(json.dumps(doc, indent=2) + "\n")
            return
    raise ConfigError(f"no device {chip_id} in fleet {path}")
