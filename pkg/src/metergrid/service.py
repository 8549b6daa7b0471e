"""Network front ends for the meter store.

Two listeners share one MeterStore:
  * a stream-socket device protocol (register / resume / pulse reports,
    each report answered by an accept/duplicate/reject ack), and
  * an HTTP JSON API for the CLI and dashboard.
"""

from __future__ import annotations

import json
import re
import socketserver
import threading
from datetime import date
from decimal import InvalidOperation
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

from .analytics import weekly_report
from .ledger import Ledger
from .money import Money
from .protocol import MessageReader, ProtocolError, PulseReport, encode_message
from .simulator import DeviceIdentity
from .store import (
    BadCredentials,
    DuplicateChipId,
    DuplicateUser,
    MeterStore,
    NonPositiveAmount,
    SequenceGap,
    StoreError,
    Unauthorized,
    UnknownDevice,
    UnknownUser,
)
from .tariff import InsufficientPayment, postpaid_purchasable
from .usage import EmptySeries

DEFAULT_DEVICE_PORT = 7070
DEFAULT_HTTP_PORT = 7080


# -- device protocol ----------------------------------------------------------


class _DeviceHandler(socketserver.BaseRequestHandler):
    def handle(self):
        store: MeterStore = self.server.store  # type: ignore[attr-defined]
        reader = MessageReader()
        while True:
            try:
                data = self.request.recv(4096)
            except ConnectionError:
                return
            if not data:
                return
            try:
                reader.feed(data)
            except ProtocolError as exc:
                self._send({"type": "error", "reason": str(exc)})
                return
            while True:
                msg = reader.pop()
                if msg is None:
                    break
                self._send(self._dispatch(store, msg))

    def _send(self, msg: dict) -> None:
        self.request.sendall(encode_message(msg))

    def _dispatch(self, store: MeterStore, msg: dict) -> dict:
        kind = msg.get("type")
        if kind == "report":
            return self._handle_report(store, msg)
        if kind == "resume":
            found = store.resume(str(msg.get("chip_id", "")))
            if found is None:
                return {"type": "resume_ack", "found": False, "count": 0, "last_seq": -1}
            count, last_seq = found
            return {
                "type": "resume_ack",
                "found": True,
                "count": count,
                "last_seq": last_seq,
            }
        if kind == "register":
            identity = DeviceIdentity(
                chip_id=str(msg["chip_id"]),
                hostname=str(msg.get("hostname", "")),
                mac=str(msg.get("mac", "")),
                ip=str(msg.get("ip", "")),
            )
            try:
                store.register_device(identity, msg.get("meter_mode", "prepaid"))
                return {"type": "register_ack", "status": "ok"}
            except DuplicateChipId:
                return {"type": "register_ack", "status": "duplicate"}
        return {"type": "error", "reason": f"unknown message type {kind!r}"}

    def _handle_report(self, store: MeterStore, msg: dict) -> dict:
        try:
            report = PulseReport.from_message(msg)
        except ProtocolError as exc:
            return {"type": "ack", "status": "reject", "reason": str(exc)}
        base = {"type": "ack", "chip_id": report.chip_id, "seq": report.seq}
        try:
            status = store.ingest(report)
        except UnknownDevice:
            return {**base, "status": "reject", "reason": "unknown device",
                    "last_seq": -1}
        except SequenceGap as exc:
            return {
                **base,
                "status": "reject",
                "reason": f"sequence gap: expected {exc.expected}",
                "last_seq": exc.expected - 1,
            }
        return {
            **base,
            "status": status.value,
            "last_seq": store.devices[report.chip_id].last_seq,
        }


class DeviceProtocolServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, store: MeterStore, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _DeviceHandler)
        self.store = store


# -- HTTP API -------------------------------------------------------------------


def _money_str(m: Money) -> str:
    return str(m)


def _rows_json(rows) -> list[dict]:
    return [
        {
            "day": r.day.isoformat(),
            "pulse_count": r.pulse_count,
            "kwh": str(r.kwh),
            "vat": str(r.vat),
            "total": str(r.total),
        }
        for r in rows
    ]


class ApiError(Exception):
    def __init__(self, code: int, reason: str):
        super().__init__(reason)
        self.code = code
        self.reason = reason


class _ApiHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def store(self) -> MeterStore:
        return self.server.store  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):
        pass

    # -- plumbing ---------------------------------------------------------

    def _reply(self, code: int, body: dict) -> None:
        data = json.dumps(body).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self._cors()
        self.end_headers()
        self.wfile.write(data)

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Authorization, Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        try:
            return json.loads(self.rfile.read(length))
        except json.JSONDecodeError:
            raise ApiError(400, "request body is not valid JSON")

    def _auth_user(self) -> str:
        header = self.headers.get("Authorization", "")
        if not header.startswith("Bearer "):
            raise ApiError(401, "missing bearer token")
        return self.store.verify_token(header[len("Bearer "):].strip())

    def _query(self) -> dict[str, str]:
        if "?" not in self.path:
            return {}
        out = {}
        for pair in self.path.split("?", 1)[1].split("&"):
            if "=" in pair:
                k, v = pair.split("=", 1)
                out[k] = v
        return out

    def _route(self, method: str) -> None:
        path = self.path.split("?", 1)[0]
        try:
            handler = self._match(method, path)
            if handler is None:
                raise ApiError(404, f"no route {method} {path}")
            handler()
        except ApiError as exc:
            self._reply(exc.code, {"error": exc.reason})
        except (BadCredentials, Unauthorized) as exc:
            self._reply(401, {"error": str(exc)})
        except (UnknownDevice, UnknownUser) as exc:
            self._reply(404, {"error": str(exc)})
        except (DuplicateUser, DuplicateChipId) as exc:
            self._reply(409, {"error": str(exc)})
        except (NonPositiveAmount, InsufficientPayment, EmptySeries, ValueError) as exc:
            self._reply(400, {"error": str(exc)})
        except StoreError as exc:
            self._reply(400, {"error": str(exc)})

    def _match(self, method: str, path: str):
        routes = [
            ("POST", r"^/register$", self._post_register),
            ("POST", r"^/login$", self._post_login),
            ("POST", r"^/logout$", self._post_logout),
            ("POST", r"^/devices$", self._post_device),
            ("GET", r"^/devices/(?P<chip>[^/]+)/consumption$", self._get_consumption),
            ("GET", r"^/devices/(?P<chip>[^/]+)/network$", self._get_network),
            ("GET", r"^/devices/(?P<chip>[^/]+)/billing$", self._get_billing),
            ("GET", r"^/devices/(?P<chip>[^/]+)/weekly$", self._get_weekly),
            ("POST", r"^/users/(?P<user>[^/]+)/recharge$", self._post_recharge),
            ("GET", r"^/users/(?P<user>[^/]+)/notifications$", self._get_notifications),
            (
                "POST",
                r"^/users/(?P<user>[^/]+)/notifications/(?P<idx>\d+)/ack$",
                self._post_notification_ack,
            ),
        ]
        for verb, pattern, fn in routes:
            if verb != method:
                continue
            m = re.match(pattern, path)
            if m:
                self._params = m.groupdict()
                return fn
        return None

    def do_GET(self):
        self._route("GET")

    def do_POST(self):
        self._route("POST")

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    # -- helpers ------------------------------------------------------------

    def _device_summary(self, chip_id: str) -> dict:
        dev = self.store.devices[chip_id]
        return {
            "chip_id": dev.identity.chip_id,
            "hostname": dev.identity.hostname,
            "mac": dev.identity.mac,
            "ip": dev.identity.ip,
            "meter_mode": dev.meter_mode,
            "cumulative_pulses": dev.cumulative_pulses,
            "total_power_kwh": str(dev.total_power_kwh.kwh),
            "last_seq": dev.last_seq,
            "last_report_at": (
                dev.last_report_at.isoformat() if dev.last_report_at else None
            ),
        }

    def _date_range(self) -> tuple[Optional[date], Optional[date]]:
        q = self._query()
        try:
            start = date.fromisoformat(q["from"]) if "from" in q else None
            end = date.fromisoformat(q["to"]) if "to" in q else None
        except ValueError:
            raise ApiError(400, "from/to must be YYYY-MM-DD")
        if start and end and start > end:
            raise ApiError(400, "from is after to")
        return start, end

    # -- endpoints -----------------------------------------------------------

    def _post_register(self):
        body = self._body()
        for key in ("user_id", "password", "chip_id"):
            if not body.get(key):
                raise ApiError(400, f"missing field {key}")
        user = self.store.register_user(
            body["user_id"], body["password"], body["chip_id"]
        )
        self._reply(201, {"user_id": user.user_id, "devices": user.chip_ids})

    def _post_login(self):
        body = self._body()
        token = self.store.authenticate(
            body.get("user_id", ""), body.get("password", "")
        )
        user = self.store.users[body["user_id"]]
        self._reply(
            200,
            {
                "token": token,
                "user_id": user.user_id,
                "devices": [self._device_summary(c) for c in user.chip_ids],
            },
        )

    def _post_logout(self):
        header = self.headers.get("Authorization", "")
        if header.startswith("Bearer "):
            self.store.logout(header[len("Bearer "):].strip())
        self._reply(200, {"ok": True})

    def _post_device(self):
        body = self._body()
        if not body.get("chip_id"):
            raise ApiError(400, "missing field chip_id")
        identity = DeviceIdentity(
            chip_id=body["chip_id"],
            hostname=body.get("hostname", ""),
            mac=body.get("mac", ""),
            ip=body.get("ip", ""),
        )
        dev = self.store.register_device(identity, body.get("meter_mode", "prepaid"))
        self._reply(201, self._device_summary(dev.identity.chip_id))

    def _get_consumption(self):
        user_id = self._auth_user()
        chip = self._params["chip"]
        start, end = self._date_range()
        rows = self.store.query_consumption(user_id, chip, start, end)
        self._reply(
            200, {"device": self._device_summary(chip), "rows": _rows_json(rows)}
        )

    def _get_network(self):
        user_id = self._auth_user()
        chip = self._params["chip"]
        self.store._owned_device(user_id, chip)
        self._reply(200, self._device_summary(chip))

    def _get_billing(self):
        user_id = self._auth_user()
        chip = self._params["chip"]
        dev = self.store._owned_device(user_id, chip)
        q = self._query()
        mode = q.get("mode", dev.meter_mode)
        if mode == "prepaid":
            self._reply(200, self._prepaid_billing(user_id, dev))
        elif mode == "postpaid":
            self._reply(200, self._postpaid_billing(dev, q))
        else:
            raise ApiError(400, f"mode must be prepaid or postpaid, not {mode!r}")

    def _prepaid_billing(self, user_id: str, dev) -> dict:
        from .tariff import prepaid_total_cost

        user = self.store.users[user_id]
        units, _ = self.store.consumed_since_recharge(user_id)
        bill = prepaid_total_cost(units, self.store.schedule)
        baseline = user.baseline_pulses.get(dev.identity.chip_id, 0)
        return {
            "mode": "prepaid",
            "consumed_units": str(bill.billed_units),
            "consumed_pulses": dev.cumulative_pulses - baseline,
            "tier_charges": [str(c) for c in bill.tier_charges],
            "energy_charge": str(bill.energy_charge),
            "demand_charge": str(bill.demand_charge),
            "vat": str(bill.vat),
            "total": str(bill.total),
            "balance": str(user.prepaid_balance),
            "alert_state": user.alert_state,
        }

    def _postpaid_billing(self, dev, q: dict) -> dict:
        if "paid" not in q:
            raise ApiError(400, "postpaid billing requires ?paid=<amount>")
        try:
            paid = Money.from_bdt(q["paid"])
        except (ValueError, InvalidOperation):
            raise ApiError(400, f"bad paid amount {q['paid']!r}")
        b = postpaid_purchasable(paid, self.store.schedule)
        return {
            "mode": "postpaid",
            "consumed_units": str(dev.total_power_kwh.kwh),
            "consumed_pulses": dev.cumulative_pulses,
            "paid_amount": str(b.paid_amount),
            "vat": str(b.vat),
            "meter_rent": str(b.meter_rent),
            "demand_charge": str(b.demand_charge),
            "purchasable": str(b.purchasable),
            "rebate": str(b.rebate),
            "purchasable_units": str(b.purchasable_units),
        }

    def _get_weekly(self):
        user_id = self._auth_user()
        chip = self._params["chip"]
        start, end = self._date_range()
        rows = self.store.query_consumption(user_id, chip, start, end)
        classification, series = weekly_report(rows)
        self._reply(
            200,
            {
                "base_kwh": str(classification.base_kwh),
                "max_kwh": str(classification.max_kwh),
                "average_kwh": str(classification.average_kwh),
                "series": [{"day": d.isoformat(), "kwh": str(k)} for d, k in series],
            },
        )

    def _post_recharge(self):
        user_id = self._auth_user()
        target = self._params["user"]
        if user_id != target:
            raise Unauthorized(f"token does not belong to {target}")
        body = self._body()
        try:
            amount = Money.from_bdt(body.get("amount", "0"))
        except (ValueError, InvalidOperation):
            raise ApiError(400, f"bad amount {body.get('amount')!r}")
        user = self.store.recharge(user_id, amount)
        self._reply(
            200,
            {
                "user_id": user.user_id,
                "balance": str(user.prepaid_balance),
                "alert_state": user.alert_state,
            },
        )

    def _get_notifications(self):
        user_id = self._auth_user()
        target = self._params["user"]
        if user_id != target:
            raise Unauthorized(f"token does not belong to {target}")
        user = self.store.users[user_id]
        self._reply(
            200,
            {
                "notifications": [
                    {**n, "index": i} for i, n in enumerate(user.notifications)
                ]
            },
        )

    def _post_notification_ack(self):
        user_id = self._auth_user()
        target = self._params["user"]
        if user_id != target:
            raise Unauthorized(f"token does not belong to {target}")
        self.store.acknowledge_notification(user_id, int(self._params["idx"]))
        self._reply(200, {"ok": True})


class ApiServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, store: MeterStore, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _ApiHandler)
        self.store = store


# -- composed service --------------------------------------------------------------


class MeterService:
    """Store plus both listeners, each on its own thread."""

    def __init__(
        self,
        store: MeterStore,
        host: str = "127.0.0.1",
        device_port: int = 0,
        http_port: int = 0,
        snapshot_path: Optional[Path] = None,
        snapshot_every: int = 0,
    ):
        self.store = store
        self.device_server = DeviceProtocolServer(store, host, device_port)
        self.api_server = ApiServer(store, host, http_port)
        self.snapshot_path = Path(snapshot_path) if snapshot_path else None
        self.snapshot_every = snapshot_every
        self._threads: list[threading.Thread] = []
        self._snapshot_stop = threading.Event()

    @property
    def device_address(self) -> tuple[str, int]:
        return self.device_server.server_address  # type: ignore[return-value]

    @property
    def http_address(self) -> tuple[str, int]:
        return self.api_server.server_address  # type: ignore[return-value]

    def start(self) -> None:
        for srv in (self.device_server, self.api_server):
            t = threading.Thread(target=srv.serve_forever, daemon=True)
            t.start()
            self._threads.append(t)
        if self.snapshot_path and self.snapshot_every > 0:
            t = threading.Thread(target=self._snapshot_loop, daemon=True)
            t.start()
            self._threads.append(t)

    def _snapshot_loop(self) -> None:
        while not self._snapshot_stop.wait(self.snapshot_every):
            self.save_snapshot()

    def save_snapshot(self) -> None:
        if not self.snapshot_path:
            return
        tmp = self.snapshot_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.store.to_snapshot()))
        tmp.replace(self.snapshot_path)

    def stop(self) -> None:
        self._snapshot_stop.set()
        self.device_server.shutdown()
        self.api_server.shutdown()
        self.device_server.server_close()
        self.api_server.server_close()
        if self.snapshot_path:
            self.save_snapshot()
        self.store.ledger.close()


def open_store(
    ledger_path,
    schedule,
    snapshot_path=None,
    **kwargs,
) -> MeterStore:
    """Build a store from a ledger file, seeding from a snapshot if present."""
    snapshot = None
    if snapshot_path and Path(snapshot_path).exists():
        snapshot = json.loads(Path(snapshot_path).read_text())
    return MeterStore(Ledger(ledger_path), schedule, snapshot=snapshot, **kwargs)
