import json
import socket
from datetime import datetime, timedelta, timezone

import pytest
import requests

from metergrid.ledger import Ledger
from metergrid.protocol import MessageReader, encode_message, recv_message
from metergrid.service import MeterService
from metergrid.store import MeterStore
from metergrid.tariff import flat_demo_schedule

T0 = datetime(2019, 1, 1, tzinfo=timezone.utc)


@pytest.fixture
def service(tmp_path):
    store = MeterStore(Ledger(tmp_path / "ledger.log"), flat_demo_schedule())
    svc = MeterService(store, snapshot_path=tmp_path / "snap.json")
    svc.start()
    yield svc
    svc.stop()


class DeviceConn:
    def __init__(self, svc):
        self.sock = socket.create_connection(svc.device_address, timeout=5)
        self.reader = MessageReader()

    def ask(self, msg):
        self.sock.sendall(encode_message(msg))
        return recv_message(self.sock, self.reader)

    def register(self, chip_id="ESP-001", mode="prepaid"):
        return self.ask(
            {
                "type": "register",
                "chip_id": chip_id,
                "hostname": "meter-1",
                "mac": "5C:CF:7F:00:00:01",
                "ip": "192.168.0.101",
                "meter_mode": mode,
            }
        )

    def report(self, seq, delta=10, chip_id="ESP-001", at=None):
        return self.ask(
            {
                "type": "report",
                "chip_id": chip_id,
                "seq": seq,
                "pulse_delta": delta,
                "reported_at": (at or (T0 + timedelta(seconds=60 * seq))).isoformat(),
                "hostname": "meter-1",
                "mac": "5C:CF:7F:00:00:01",
                "ip": "192.168.0.101",
            }
        )

    def close(self):
        self.sock.close()


def api(svc, path):
    host, port = svc.http_address
    return f"http://{host}:{port}{path}"


def seed_user(svc, conn, balance=None):
    conn.register()
    requests.post(
        api(svc, "/register"),
        json={"user_id": "alice", "password": "pw", "chip_id": "ESP-001"},
        timeout=5,
    ).raise_for_status()
    r = requests.post(
        api(svc, "/login"), json={"user_id": "alice", "password": "pw"}, timeout=5
    )
    r.raise_for_status()
    token = r.json()["token"]
    headers = {"Authorization": f"Bearer {token}"}
    if balance:
        requests.post(
            api(svc, "/users/alice/recharge"),
            json={"amount": balance},
            headers=headers,
            timeout=5,
        ).raise_for_status()
    return headers


def test_device_register_and_resume(service):
    conn = DeviceConn(service)
    assert conn.register()["status"] == "ok"
    assert conn.register()["status"] == "duplicate"
    resume = conn.ask({"type": "resume", "chip_id": "ESP-001"})
    assert resume == {"type": "resume_ack", "found": True, "count": 0, "last_seq": -1}
    missing = conn.ask({"type": "resume", "chip_id": "ESP-404"})
    assert missing["found"] is False
    conn.close()


def test_device_report_ack_cycle(service):
    conn = DeviceConn(service)
    conn.register()
    ack = conn.report(0)
    assert ack["status"] == "accept"
    assert ack["last_seq"] == 0
    assert conn.report(0)["status"] == "duplicate"
    gap = conn.report(5)
    assert gap["status"] == "reject"
    assert "gap" in gap["reason"]
    assert conn.report(1)["status"] == "accept"
    resume = conn.ask({"type": "resume", "chip_id": "ESP-001"})
    assert resume["count"] == 20
    conn.close()


def test_device_report_unknown_chip(service):
    conn = DeviceConn(service)
    ack = conn.report(0, chip_id="ESP-404")
    assert ack["status"] == "reject"
    conn.close()


def test_http_register_validates(service):
    r = requests.post(api(service, "/register"), json={"user_id": "a"}, timeout=5)
    assert r.status_code == 400
    r = requests.post(
        api(service, "/register"),
        json={"user_id": "a", "password": "pw", "chip_id": "ESP-404"},
        timeout=5,
    )
    assert r.status_code == 404


def test_http_login_and_device_list(service):
    conn = DeviceConn(service)
    seed_user(service, conn)
    r = requests.post(
        api(service, "/login"), json={"user_id": "alice", "password": "pw"}, timeout=5
    )
    body = r.json()
    assert body["user_id"] == "alice"
    assert body["devices"][0]["chip_id"] == "ESP-001"
    bad = requests.post(
        api(service, "/login"), json={"user_id": "alice", "password": "nope"}, timeout=5
    )
    assert bad.status_code == 401
    conn.close()


def test_consumption_rows_and_auth(service):
    conn = DeviceConn(service)
    headers = seed_user(service, conn)
    for seq in range(3):
        conn.report(seq)
    r = requests.get(
        api(service, "/devices/ESP-001/consumption"), headers=headers, timeout=5
    )
    rows = r.json()["rows"]
    assert len(rows) == 1
    assert rows[0]["pulse_count"] == 30
    assert rows[0]["kwh"] == "0.0"
    assert rows[0]["total"] == "157.50"
    # no token
    assert (
        requests.get(api(service, "/devices/ESP-001/consumption"), timeout=5).status_code
        == 401
    )
    conn.close()


def test_foreign_device_unauthorized(service):
    conn = DeviceConn(service)
    headers = seed_user(service, conn)
    conn.register(chip_id="ESP-002")
    r = requests.get(
        api(service, "/devices/ESP-002/network"), headers=headers, timeout=5
    )
    assert r.status_code == 401
    conn.close()


def test_network_details(service):
    conn = DeviceConn(service)
    headers = seed_user(service, conn)
    conn.report(0)
    r = requests.get(api(service, "/devices/ESP-001/network"), headers=headers, timeout=5)
    body = r.json()
    assert body["mac"] == "5C:CF:7F:00:00:01"
    assert body["ip"] == "192.168.0.101"
    assert body["hostname"] == "meter-1"
    assert body["cumulative_pulses"] == 10
    assert body["last_report_at"] is not None
    conn.close()


def test_prepaid_billing_view(service):
    conn = DeviceConn(service)
    headers = seed_user(service, conn, balance="250.00")
    for seq in range(1420):  # 14.2 kWh
        conn.report(seq, at=T0 + timedelta(seconds=6 * seq))
    r = requests.get(
        api(service, "/devices/ESP-001/billing?mode=prepaid"), headers=headers, timeout=5
    )
    body = r.json()
    assert body["consumed_units"] == "14.2"
    assert body["consumed_pulses"] == 14200
    assert body["energy_charge"] == "56.80"
    assert body["vat"] == "10.34"
    assert body["total"] == "217.14"
    assert body["balance"] == "250.00"
    assert body["alert_state"] == "fired"
    conn.close()


def test_postpaid_billing_what_if(service):
    conn = DeviceConn(service)
    headers = seed_user(service, conn)
    r = requests.get(
        api(service, "/devices/ESP-001/billing?mode=postpaid&paid=1000.00"),
        headers=headers,
        timeout=5,
    )
    body = r.json()
    assert body["vat"] == "48.00"
    assert body["meter_rent"] == "40.00"
    assert body["demand_charge"] == "50.00"
    assert body["purchasable"] == "862.00"
    assert body["rebate"] == "10.02"
    assert body["purchasable_units"] == "215.500"
    missing = requests.get(
        api(service, "/devices/ESP-001/billing?mode=postpaid"), headers=headers, timeout=5
    )
    assert missing.status_code == 400
    low = requests.get(
        api(service, "/devices/ESP-001/billing?mode=postpaid&paid=90.00"),
        headers=headers,
        timeout=5,
    )
    assert low.status_code == 400
    conn.close()


def test_recharge_and_notifications_flow(service):
    conn = DeviceConn(service)
    headers = seed_user(service, conn, balance="250.00")
    # push consumption past 80% of 250
    for seq in range(1020):
        conn.report(seq, at=T0 + timedelta(seconds=6 * seq))
    r = requests.get(api(service, "/users/alice/notifications"), headers=headers, timeout=5)
    notes = r.json()["notifications"]
    assert len(notes) == 1
    assert notes[0]["acknowledged"] is False
    requests.post(
        api(service, "/users/alice/notifications/0/ack"), headers=headers, timeout=5
    ).raise_for_status()
    r = requests.get(api(service, "/users/alice/notifications"), headers=headers, timeout=5)
    assert r.json()["notifications"][0]["acknowledged"] is True
    # recharge validation
    bad = requests.post(
        api(service, "/users/alice/recharge"),
        json={"amount": "-1.00"},
        headers=headers,
        timeout=5,
    )
    assert bad.status_code == 400
    conn.close()


def test_weekly_endpoint(service):
    conn = DeviceConn(service)
    headers = seed_user(service, conn)
    seq = 0
    for day, pulses in enumerate([14200, 15600, 15340, 16440, 13940, 14660, 16200]):
        at = T0 + timedelta(days=day)
        for i in range(pulses // 10):
            conn.report(seq, at=at + timedelta(seconds=6 * i))
            seq += 1
    r = requests.get(api(service, "/devices/ESP-001/weekly"), headers=headers, timeout=5)
    body = r.json()
    assert body["base_kwh"] == "13.9"
    assert body["max_kwh"] == "16.4"
    assert len(body["series"]) == 7
    conn.close()


def test_snapshot_written_on_stop(tmp_path):
    store = MeterStore(Ledger(tmp_path / "ledger.log"), flat_demo_schedule())
    svc = MeterService(store, snapshot_path=tmp_path / "snap.json")
    svc.start()
    conn = DeviceConn(svc)
    conn.register()
    conn.report(0)
    conn.close()
    svc.stop()
    snap = json.loads((tmp_path / "snap.json").read_text())
    assert snap["devices"][0]["cumulative_pulses"] == 10
    assert snap["offset"] == 2
