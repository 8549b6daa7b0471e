"""Service core: device registry, user accounts, prepaid alerting.

Every state change is a ledger record first; the in-memory state is
whatever applying the ledger from genesis produces, so a restart (or a
crash plus replay) reconstructs it exactly.  Session tokens are the one
deliberate exception: they are volatile.
"""

from __future__ import annotations

import enum
import hashlib
import secrets
import threading
import time
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from decimal import Decimal
from fractions import Fraction
from typing import Callable, Optional

from .analytics import DailyConsumption, daily_rows
from .ledger import Ledger, read_entries
from .money import Money
from .protocol import PulseReport
from .simulator import DeviceIdentity
from .tariff import TariffSchedule, prepaid_total_cost
from .units import EnergyKwh, pulses_to_kwh, round_kwh_billing
from .usage import prepaid_alert_due

PBKDF2_ITERATIONS = 50_000


class StoreError(Exception):
    pass


class DuplicateChipId(StoreError):
    pass


class UnknownDevice(StoreError):
    pass


class SequenceGap(StoreError):
    def __init__(self, chip_id: str, expected: int, got: int):
        super().__init__(f"{chip_id}: expected seq {expected}, got {got}")
        self.expected = expected
        self.got = got


class DuplicateUser(StoreError):
    pass


class UnknownUser(StoreError):
    pass


class NonPositiveAmount(StoreError):
    pass


class BadCredentials(StoreError):
    pass


class Unauthorized(StoreError):
    pass


class IngestStatus(enum.Enum):
    ACCEPT = "accept"
    DUPLICATE = "duplicate"


@dataclass
class DeviceRecord:
    identity: DeviceIdentity
    meter_mode: str  # prepaid | postpaid
    cumulative_pulses: int = 0
    last_seq: int = -1
    owner_user: Optional[str] = None
    last_report_at: Optional[datetime] = None
    day_pulses: dict[date, int] = field(default_factory=dict)

    @property
    def total_power_kwh(self) -> EnergyKwh:
        return pulses_to_kwh(self.cumulative_pulses)


@dataclass
class UserAccount:
    user_id: str
    salt: bytes
    digest: bytes
    chip_ids: list[str] = field(default_factory=list)
    prepaid_balance: Money = Money(0)
    alert_state: str = "armed"  # armed | fired
    recharge_cycle: int = 0
    baseline_pulses: dict[str, int] = field(default_factory=dict)
    notifications: list[dict] = field(default_factory=list)


def _hash_password(password: str, salt: bytes) -> bytes:
    return hashlib.pbkdf2_hmac("sha256", password.encode(), salt, PBKDF2_ITERATIONS)


class MeterStore:
    """Single-process service state behind one serialized commit point."""

    def __init__(
        self,
        ledger: Ledger,
        schedule: TariffSchedule,
        alert_threshold: Fraction = Fraction(4, 5),
        token_ttl_s: float = 3600.0,
        now_fn: Callable[[], datetime] = lambda: datetime.now(timezone.utc),
        snapshot: Optional[dict] = None,
    ):
        self.ledger = ledger
        self.schedule = schedule
        self.alert_threshold = alert_threshold
        self.token_ttl_s = token_ttl_s
        self.now_fn = now_fn
        self.devices: dict[str, DeviceRecord] = {}
        self.users: dict[str, UserAccount] = {}
        self._tokens: dict[str, tuple[str, float]] = {}
        self._lock = threading.RLock()
        replay_from = 0
        if snapshot is not None:
            replay_from = self._load_snapshot(snapshot)
        for entry in read_entries(ledger.path):
            if entry.offset >= replay_from:
                self._apply(entry.record)

    # -- commit machinery ----------------------------------------------------

    def _commit(self, record: dict) -> None:
        self.ledger.append(record)
        self._apply(record)

    def _apply(self, record: dict) -> None:
        kind = record["kind"]
        if kind == "device":
            identity = DeviceIdentity(
                chip_id=record["chip_id"],
                hostname=record["hostname"],
                mac=record["mac"],
                ip=record["ip"],
            )
            self.devices[identity.chip_id] = DeviceRecord(
                identity=identity, meter_mode=record["meter_mode"]
            )
        elif kind == "pulse":
            dev = self.devices[record["chip_id"]]
            at = datetime.fromisoformat(record["reported_at"])
            dev.cumulative_pulses += record["pulse_delta"]
            dev.last_seq = record["seq"]
            dev.last_report_at = at
            day = at.date()
            dev.day_pulses[day] = dev.day_pulses.get(day, 0) + record["pulse_delta"]
            dev.identity = DeviceIdentity(
                chip_id=dev.identity.chip_id,
                hostname=record["hostname"],
                mac=record["mac"],
                ip=record["ip"],
            )
        elif kind == "user":
            user = UserAccount(
                user_id=record["user_id"],
                salt=bytes.fromhex(record["salt"]),
                digest=bytes.fromhex(record["digest"]),
                chip_ids=list(record["chip_ids"]),
            )
            self.users[user.user_id] = user
            for chip in user.chip_ids:
                self.devices[chip].owner_user = user.user_id
        elif kind == "recharge":
            user = self.users[record["user_id"]]
            user.prepaid_balance += Money(record["amount_paisa"])
            user.alert_state = "armed"
            user.recharge_cycle += 1
            user.baseline_pulses = dict(record["baseline"])
        elif kind == "alert":
            user = self.users[record["user_id"]]
            user.alert_state = "fired"
            user.notifications.append(
                {
                    "user_id": record["user_id"],
                    "cycle": record["cycle"],
                    "at": record["at"],
                    "message": record["message"],
                    "balance": str(Money(record["balance_paisa"])),
                    "consumed_cost": str(Money(record["consumed_paisa"])),
                    "acknowledged": False,
                }
            )
        elif kind == "alert_ack":
            user = self.users[record["user_id"]]
            user.notifications[record["index"]]["acknowledged"] = True
        else:
            raise ValueError(f"unknown ledger record kind {kind!r}")

    # -- snapshots -------------------------------------------------------------

    def to_snapshot(self) -> dict:
        """State as of the current ledger length; replay resumes after it."""
        with self._lock:
            return {
                "offset": len(self.ledger),
                "devices": [
                    {
                        "chip_id": d.identity.chip_id,
                        "hostname": d.identity.hostname,
                        "mac": d.identity.mac,
                        "ip": d.identity.ip,
                        "meter_mode": d.meter_mode,
                        "cumulative_pulses": d.cumulative_pulses,
                        "last_seq": d.last_seq,
                        "owner_user": d.owner_user,
                        "last_report_at": (
                            d.last_report_at.isoformat() if d.last_report_at else None
                        ),
                        "day_pulses": {
                            day.isoformat(): n for day, n in d.day_pulses.items()
                        },
                    }
                    for d in self.devices.values()
                ],
                "users": [
                    {
                        "user_id": u.user_id,
                        "salt": u.salt.hex(),
                        "digest": u.digest.hex(),
                        "chip_ids": u.chip_ids,
                        "prepaid_balance_paisa": u.prepaid_balance.paisa,
                        "alert_state": u.alert_state,
                        "recharge_cycle": u.recharge_cycle,
                        "baseline_pulses": u.baseline_pulses,
                        "notifications": u.notifications,
                    }
                    for u in self.users.values()
                ],
            }

    def _load_snapshot(self, snap: dict) -> int:
        for d in snap["devices"]:
            identity = DeviceIdentity(
                chip_id=d["chip_id"], hostname=d["hostname"], mac=d["mac"], ip=d["ip"]
            )
            self.devices[d["chip_id"]] = DeviceRecord(
                identity=identity,
                meter_mode=d["meter_mode"],
                cumulative_pulses=d["cumulative_pulses"],
                last_seq=d["last_seq"],
                owner_user=d["owner_user"],
                last_report_at=(
                    datetime.fromisoformat(d["last_report_at"])
                    if d["last_report_at"]
                    else None
                ),
                day_pulses={
                    date.fromisoformat(k): v for k, v in d["day_pulses"].items()
                },
            )
        for u in snap["users"]:
            self.users[u["user_id"]] = UserAccount(
                user_id=u["user_id"],
                salt=bytes.fromhex(u["salt"]),
                digest=bytes.fromhex(u["digest"]),
                chip_ids=list(u["chip_ids"]),
                prepaid_balance=Money(u["prepaid_balance_paisa"]),
                alert_state=u["alert_state"],
                recharge_cycle=u["recharge_cycle"],
                baseline_pulses=dict(u["baseline_pulses"]),
                notifications=list(u["notifications"]),
            )
        return snap["offset"]

    # -- device registry -----------------------------------------------------

    def register_device(self, identity: DeviceIdentity, meter_mode: str) -> DeviceRecord:
        if meter_mode not in ("prepaid", "postpaid"):
            raise ValueError(f"bad meter mode {meter_mode!r}")
        with self._lock:
            if identity.chip_id in self.devices:
                raise DuplicateChipId(identity.chip_id)
            self._commit(
                {
                    "kind": "device",
                    "chip_id": identity.chip_id,
                    "hostname": identity.hostname,
                    "mac": identity.mac,
                    "ip": identity.ip,
                    "meter_mode": meter_mode,
                }
            )
            return self.devices[identity.chip_id]

    def last_count(self, chip_id: str) -> int:
        with self._lock:
            dev = self.devices.get(chip_id)
            if dev is None:
                raise UnknownDevice(chip_id)
            return dev.cumulative_pulses

    def resume(self, chip_id: str) -> Optional[tuple[int, int]]:
        """Device resume query: (count, last_seq), or None if unknown."""
        with self._lock:
            dev = self.devices.get(chip_id)
            if dev is None:
                return None
            return dev.cumulative_pulses, dev.last_seq

    # -- ingest ---------------------------------------------------------------

    def ingest(self, report: PulseReport) -> IngestStatus:
        with self._lock:
            dev = self.devices.get(report.chip_id)
            if dev is None:
                raise UnknownDevice(report.chip_id)
            if report.seq <= dev.last_seq:
                return IngestStatus.DUPLICATE
            if report.seq > dev.last_seq + 1:
                raise SequenceGap(report.chip_id, dev.last_seq + 1, report.seq)
            self._commit(
                {
                    "kind": "pulse",
                    "chip_id": report.chip_id,
                    "seq": report.seq,
                    "pulse_delta": report.pulse_delta,
                    "reported_at": report.reported_at.isoformat(),
                    "hostname": report.hostname,
                    "mac": report.mac,
                    "ip": report.ip,
                    "accepted_at": self.now_fn().isoformat(),
                }
            )
            self.evaluate_alerts()
            return IngestStatus.ACCEPT

    # -- users / auth ----------------------------------------------------------

    def register_user(self, user_id: str, password: str, chip_id: str) -> UserAccount:
        with self._lock:
            if user_id in self.users:
                raise DuplicateUser(user_id)
            dev = self.devices.get(chip_id)
            if dev is None:
                raise UnknownDevice(chip_id)
            salt = secrets.token_bytes(16)
            digest = _hash_password(password, salt)
            self._commit(
                {
                    "kind": "user",
                    "user_id": user_id,
                    "salt": salt.hex(),
                    "digest": digest.hex(),
                    "chip_ids": [chip_id],
                }
            )
            return self.users[user_id]

    def authenticate(self, user_id: str, password: str) -> str:
        with self._lock:
            user = self.users.get(user_id)
            if user is None or not secrets.compare_digest(
                _hash_password(password, user.salt), user.digest
            ):
                raise BadCredentials("invalid user id or password")
            token = secrets.token_hex(16)
            self._tokens[token] = (user_id, time.monotonic() + self.token_ttl_s)
            return token

    def verify_token(self, token: str) -> str:
        with self._lock:
            entry = self._tokens.get(token)
            if entry is None:
                raise Unauthorized("unknown token")
            user_id, expires = entry
            if time.monotonic() >= expires:
                del self._tokens[token]
                raise Unauthorized("token expired")
            return user_id

    def logout(self, token: str) -> None:
        with self._lock:
            self._tokens.pop(token, None)

    def _owned_device(self, user_id: str, chip_id: str) -> DeviceRecord:
        dev = self.devices.get(chip_id)
        if dev is None:
            raise UnknownDevice(chip_id)
        if dev.owner_user != user_id:
            raise Unauthorized(f"{user_id} does not own {chip_id}")
        return dev

    # -- prepaid balance / alerts ----------------------------------------------

    def recharge(self, user_id: str, amount: Money) -> UserAccount:
        with self._lock:
            user = self.users.get(user_id)
            if user is None:
                raise UnknownUser(user_id)
            if amount.paisa <= 0:
                raise NonPositiveAmount(str(amount))
            baseline = {
                chip: self.devices[chip].cumulative_pulses for chip in user.chip_ids
            }
            self._commit(
                {
                    "kind": "recharge",
                    "user_id": user_id,
                    "amount_paisa": amount.paisa,
                    "at": self.now_fn().isoformat(),
                    "baseline": baseline,
                }
            )
            return user

    def consumed_since_recharge(self, user_id: str) -> tuple[Decimal, Money]:
        """(billed units, prepaid cost) accrued in the current cycle."""
        user = self.users[user_id]
        pulses = sum(
            self.devices[chip].cumulative_pulses - user.baseline_pulses.get(chip, 0)
            for chip in user.chip_ids
            if self.devices[chip].meter_mode == "prepaid"
        )
        units = round_kwh_billing(pulses_to_kwh(pulses))
        return units, prepaid_total_cost(units, self.schedule).total

    def evaluate_alerts(self) -> list[dict]:
        """Fire at most one threshold notification per recharge cycle."""
        with self._lock:
            fired = []
            for user in self.users.values():
                if user.alert_state != "armed" or user.prepaid_balance.paisa <= 0:
                    continue
                if not any(
                    self.devices[c].meter_mode == "prepaid" for c in user.chip_ids
                ):
                    continue
                units, cost = self.consumed_since_recharge(user.user_id)
                if prepaid_alert_due(user.prepaid_balance, cost, self.alert_threshold):
                    pct = self.alert_threshold.numerator * 100 // self.alert_threshold.denominator
                    self._commit(
                        {
                            "kind": "alert",
                            "user_id": user.user_id,
                            "cycle": user.recharge_cycle,
                            "at": self.now_fn().isoformat(),
                            "message": (
                                f"Consumption cost {cost} has reached {pct}% of "
                                f"your recharged balance {user.prepaid_balance}"
                            ),
                            "balance_paisa": user.prepaid_balance.paisa,
                            "consumed_paisa": cost.paisa,
                        }
                    )
                    fired.append(user.notifications[-1])
            return fired

    def acknowledge_notification(self, user_id: str, index: int) -> None:
        with self._lock:
            user = self.users.get(user_id)
            if user is None:
                raise UnknownUser(user_id)
            if not 0 <= index < len(user.notifications):
                raise StoreError(f"no notification {index}")
            if not user.notifications[index]["acknowledged"]:
                self._commit({"kind": "alert_ack", "user_id": user_id, "index": index})

    # -- queries -----------------------------------------------------------------

    def query_consumption(
        self,
        user_id: str,
        chip_id: str,
        start: Optional[date] = None,
        end: Optional[date] = None,
    ) -> list[DailyConsumption]:
        with self._lock:
            dev = self._owned_device(user_id, chip_id)
            if not dev.day_pulses and start is None:
                return []
            return daily_rows(dev.day_pulses, self.schedule, start, end)
