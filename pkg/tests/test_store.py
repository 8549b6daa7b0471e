import random
from datetime import datetime, timedelta, timezone
from decimal import Decimal

import pytest

from metergrid.ledger import Ledger
from metergrid.money import Money
from metergrid.protocol import PulseReport
from metergrid.simulator import DeviceIdentity
from metergrid.store import (
    BadCredentials,
    DuplicateChipId,
    DuplicateUser,
    IngestStatus,
    MeterStore,
    NonPositiveAmount,
    SequenceGap,
    Unauthorized,
    UnknownDevice,
    UnknownUser,
)
from metergrid.tariff import flat_demo_schedule

T0 = datetime(2019, 1, 1, tzinfo=timezone.utc)

IDENTITY = DeviceIdentity("ESP-001", "meter-1", "5C:CF:7F:00:00:01", "192.168.0.101")


@pytest.fixture
def store(tmp_path):
    s = MeterStore(Ledger(tmp_path / "ledger.log"), flat_demo_schedule())
    yield s
    s.ledger.close()


def report(seq, delta=10, at=None, chip="ESP-001"):
    return PulseReport(
        chip_id=chip,
        seq=seq,
        pulse_delta=delta,
        reported_at=at or (T0 + timedelta(seconds=60 * (seq + 1))),
        hostname="meter-1",
        mac="5C:CF:7F:00:00:01",
        ip="192.168.0.101",
    )


def test_register_device_fresh(store):
    rec = store.register_device(IDENTITY, "prepaid")
    assert rec.cumulative_pulses == 0
    assert rec.last_seq == -1
    assert rec.meter_mode == "prepaid"


def test_register_device_duplicate(store):
    store.register_device(IDENTITY, "prepaid")
    with pytest.raises(DuplicateChipId):
        store.register_device(IDENTITY, "postpaid")


def test_ingest_first_batch(store):
    store.register_device(IDENTITY, "prepaid")
    assert store.ingest(report(0)) == IngestStatus.ACCEPT
    assert store.last_count("ESP-001") == 10


def test_ingest_redelivery_is_idempotent(store):
    store.register_device(IDENTITY, "prepaid")
    store.ingest(report(0))
    assert store.ingest(report(0)) == IngestStatus.DUPLICATE
    assert store.last_count("ESP-001") == 10


def test_ingest_gap_rejected(store):
    store.register_device(IDENTITY, "prepaid")
    store.ingest(report(0))
    with pytest.raises(SequenceGap):
        store.ingest(report(2))
    assert store.last_count("ESP-001") == 10


def test_ingest_unknown_device(store):
    with pytest.raises(UnknownDevice):
        store.ingest(report(0, chip="ESP-999"))


def test_full_day_of_batches(store):
    store.register_device(IDENTITY, "prepaid")
    for seq in range(1440):
        store.ingest(report(seq))
    assert store.last_count("ESP-001") == 14400
    assert store.devices["ESP-001"].total_power_kwh.kwh == Decimal("14.4")


def test_last_count_contract(store):
    with pytest.raises(UnknownDevice):
        store.last_count("ESP-001")
    store.register_device(IDENTITY, "prepaid")
    assert store.last_count("ESP-001") == 0
    assert store.resume("ESP-001") == (0, -1)
    assert store.resume("ESP-404") is None


def test_user_registration_requires_device(store):
    with pytest.raises(UnknownDevice):
        store.register_user("alice", "s3cret", "ESP-001")
    store.register_device(IDENTITY, "prepaid")
    user = store.register_user("alice", "s3cret", "ESP-001")
    assert user.chip_ids == ["ESP-001"]
    assert store.devices["ESP-001"].owner_user == "alice"
    with pytest.raises(DuplicateUser):
        store.register_user("alice", "other", "ESP-001")


def test_authentication(store):
    store.register_device(IDENTITY, "prepaid")
    store.register_user("alice", "s3cret", "ESP-001")
    token = store.authenticate("alice", "s3cret")
    assert store.verify_token(token) == "alice"
    with pytest.raises(BadCredentials):
        store.authenticate("alice", "wrong")
    with pytest.raises(BadCredentials):
        store.authenticate("nobody", "s3cret")
    with pytest.raises(Unauthorized):
        store.verify_token("bogus")


def test_token_expiry(tmp_path):
    s = MeterStore(
        Ledger(tmp_path / "l.log"), flat_demo_schedule(), token_ttl_s=-1.0
    )
    s.register_device(IDENTITY, "prepaid")
    s.register_user("alice", "pw", "ESP-001")
    token = s.authenticate("alice", "pw")
    with pytest.raises(Unauthorized):
        s.verify_token(token)
    s.ledger.close()


def test_recharge_validation(store):
    store.register_device(IDENTITY, "prepaid")
    store.register_user("alice", "pw", "ESP-001")
    with pytest.raises(UnknownUser):
        store.recharge("bob", Money.from_bdt("10.00"))
    with pytest.raises(NonPositiveAmount):
        store.recharge("alice", Money.from_bdt("-5.00"))
    store.recharge("alice", Money.from_bdt("500.00"))
    store.recharge("alice", Money.from_bdt("100.00"))
    assert store.users["alice"].prepaid_balance == Money.from_bdt("600.00")


def alert_fixture(store, balance="250.00"):
    store.register_device(IDENTITY, "prepaid")
    store.register_user("alice", "pw", "ESP-001")
    store.recharge("alice", Money.from_bdt(balance))


def test_alert_fires_once_per_cycle(store):
    alert_fixture(store)
    # cost crosses 0.8*250=200 between 10.1 and 10.2 kWh consumed
    for seq in range(1020):  # 10200 pulses = 10.2 kWh
        store.ingest(report(seq))
    user = store.users["alice"]
    assert user.alert_state == "fired"
    assert len(user.notifications) == 1
    assert store.evaluate_alerts() == []
    assert len(user.notifications) == 1


def test_alert_rearms_after_recharge(store):
    alert_fixture(store)
    for seq in range(1020):
        store.ingest(report(seq))
    assert len(store.users["alice"].notifications) == 1
    store.recharge("alice", Money.from_bdt("250.00"))
    assert store.users["alice"].alert_state == "armed"
    # balance is now 500, threshold 400: needs ~57.8 kWh past the new baseline
    for seq in range(1020, 6850):
        store.ingest(report(seq))
    user = store.users["alice"]
    assert user.alert_state == "fired"
    assert len(user.notifications) == 2


def test_notification_acknowledge(store):
    alert_fixture(store)
    for seq in range(1020):
        store.ingest(report(seq))
    store.acknowledge_notification("alice", 0)
    assert store.users["alice"].notifications[0]["acknowledged"] is True


def test_query_consumption_requires_ownership(store):
    store.register_device(IDENTITY, "prepaid")
    other = DeviceIdentity("ESP-002", "meter-2", "5C:CF:7F:00:00:02", "192.168.0.102")
    store.register_device(other, "prepaid")
    store.register_user("alice", "pw", "ESP-001")
    store.register_user("bob", "pw", "ESP-002")
    store.ingest(report(0))
    rows = store.query_consumption("alice", "ESP-001")
    assert len(rows) == 1
    assert rows[0].pulse_count == 10
    with pytest.raises(Unauthorized):
        store.query_consumption("bob", "ESP-001")
    with pytest.raises(UnknownDevice):
        store.query_consumption("alice", "ESP-404")


def test_replay_reconstructs_state(tmp_path):
    path = tmp_path / "ledger.log"
    store = MeterStore(Ledger(path), flat_demo_schedule())
    store.register_device(IDENTITY, "prepaid")
    store.register_user("alice", "pw", "ESP-001")
    store.recharge("alice", Money.from_bdt("250.00"))
    for seq in range(1020):
        store.ingest(report(seq))
    store.ledger.close()

    replayed = MeterStore(Ledger(path), flat_demo_schedule())
    dev, dev2 = store.devices["ESP-001"], replayed.devices["ESP-001"]
    assert dev2.cumulative_pulses == dev.cumulative_pulses
    assert dev2.last_seq == dev.last_seq
    assert dev2.day_pulses == dev.day_pulses
    u, u2 = store.users["alice"], replayed.users["alice"]
    assert u2.prepaid_balance == u.prepaid_balance
    assert u2.alert_state == u.alert_state == "fired"
    assert u2.notifications == u.notifications
    replayed.ledger.close()


def test_snapshot_roundtrip(tmp_path):
    path = tmp_path / "ledger.log"
    store = MeterStore(Ledger(path), flat_demo_schedule())
    store.register_device(IDENTITY, "prepaid")
    store.register_user("alice", "pw", "ESP-001")
    store.recharge("alice", Money.from_bdt("250.00"))
    for seq in range(500):
        store.ingest(report(seq))
    snap = store.to_snapshot()
    for seq in range(500, 600):
        store.ingest(report(seq))
    store.ledger.close()

    resumed = MeterStore(Ledger(path), flat_demo_schedule(), snapshot=snap)
    assert resumed.devices["ESP-001"].cumulative_pulses == 6000
    assert resumed.devices["ESP-001"].last_seq == 599
    assert resumed.users["alice"].prepaid_balance == Money.from_bdt("250.00")
    resumed.ledger.close()


def test_idempotence_over_shuffled_redelivery(store):
    store.register_device(IDENTITY, "prepaid")
    reports = [report(seq) for seq in range(100)]
    for r in reports:
        store.ingest(r)
    redeliver = random.Random(7).sample(reports, 30)
    for r in redeliver:
        assert store.ingest(r) == IngestStatus.DUPLICATE
    assert store.last_count("ESP-001") == 1000
    assert store.devices["ESP-001"].last_seq == 99
