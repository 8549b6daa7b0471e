"""Fleet driver: advances simulated devices and delivers their reports.

The driver talks to the server through a small client interface so
tests can plug the store in directly while the CLI uses the real TCP
protocol.
"""

from __future__ import annotations

import socket
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Protocol

from .clock import SimClock
from .protocol import MessageReader, PulseReport, encode_message, recv_message
from .simulator import DeviceState, Fault, LinkDown, SimulatedDevice
from .store import IngestStatus, MeterStore, SequenceGap, UnknownDevice

SYNC_BACKOFF_MAX_S = 60


class CloudClient(Protocol):
    def register(self, device: SimulatedDevice, meter_mode: str) -> str: ...
    def resume(self, chip_id: str) -> Optional[tuple[int, int]]: ...
    def send_report(self, report: PulseReport) -> dict: ...
    def close(self) -> None: ...


class LocalCloud:
    """In-process client: drives a MeterStore with no sockets."""

    def __init__(self, store: MeterStore):
        self.store = store

    def register(self, device: SimulatedDevice, meter_mode: str) -> str:
        from .store import DuplicateChipId

        try:
            self.store.register_device(device.identity, meter_mode)
            return "ok"
        except DuplicateChipId:
            return "duplicate"

    def resume(self, chip_id: str):
        return self.store.resume(chip_id)

    def send_report(self, report: PulseReport) -> dict:
        try:
            status = self.store.ingest(report)
        except UnknownDevice:
            return {"status": "reject", "reason": "unknown device", "last_seq": -1}
        except SequenceGap as exc:
            return {
                "status": "reject",
                "reason": f"sequence gap: expected {exc.expected}",
                "last_seq": exc.expected - 1,
            }
        return {
            "status": status.value,
            "last_seq": self.store.devices[report.chip_id].last_seq,
        }

    def close(self) -> None:
        pass


class TcpCloud:
    """Device-protocol client over the persistent stream connection."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.reader = MessageReader()

    def _roundtrip(self, msg: dict) -> dict:
        self.sock.sendall(encode_message(msg))
        reply = recv_message(self.sock, self.reader)
        if reply is None:
            raise ConnectionError("server closed connection")
        return reply

    def register(self, device: SimulatedDevice, meter_mode: str) -> str:
        ident = device.identity
        reply = self._roundtrip(
            {
                "type": "register",
                "chip_id": ident.chip_id,
                "hostname": ident.hostname,
                "mac": ident.mac,
                "ip": ident.ip,
                "meter_mode": meter_mode,
            }
        )
        return reply.get("status", "error")

    def resume(self, chip_id: str):
        reply = self._roundtrip({"type": "resume", "chip_id": chip_id})
        if not reply.get("found"):
            return None
        return reply["count"], reply["last_seq"]

    def send_report(self, report: PulseReport) -> dict:
        return self._roundtrip(report.to_message())

    def close(self) -> None:
        self.sock.close()


@dataclass
class FaultEvent:
    at_s: int
    chip_id: str
    fault: Fault


@dataclass
class DeviceSummary:
    chip_id: str
    pulses_generated: int = 0
    pulses_acked: int = 0
    reports_sent: int = 0
    duplicates: int = 0
    rejects: int = 0
    buffered: int = 0
    discarded: int = 0

    @property
    def conserved(self) -> bool:
        return (
            self.pulses_generated
            == self.pulses_acked + self.buffered + self.discarded
        )


@dataclass
class FleetEntry:
    device: SimulatedDevice
    meter_mode: str = "prepaid"
    _backoff_s: int = field(default=1, init=False)
    _retry_at: Fraction = field(default=Fraction(0), init=False)


class FleetRunner:
    def __init__(
        self,
        entries: list[FleetEntry],
        cloud: CloudClient,
        clock: Optional[SimClock] = None,
        dt_s: int = 1,
    ):
        self.entries = entries
        self.cloud = cloud
        self.clock = clock or SimClock()
        self.dt_s = dt_s
        self.faults: list[FaultEvent] = []
        self.summaries = {
            e.device.identity.chip_id: DeviceSummary(e.device.identity.chip_id)
            for e in entries
        }

    def schedule_faults(self, faults: list[FaultEvent]) -> None:
        self.faults.extend(faults)
        self.faults.sort(key=lambda f: f.at_s)

    def start(self) -> None:
        """Register, boot and sync every device."""
        for entry in self.entries:
            dev = entry.device
            if dev.saved_network is None:
                dev.provision("metergrid-sim", "simulated")
            self.cloud.register(dev, entry.meter_mode)
            dev.boot()
            self._try_sync(entry)

    def _try_sync(self, entry: FleetEntry) -> None:
        dev = entry.device
        if self.clock.elapsed_s < entry._retry_at:
            return
        try:
            dev.sync_with_cloud(self.cloud)
            entry._backoff_s = 1
        except LinkDown:
            entry._retry_at = self.clock.elapsed_s + entry._backoff_s
            entry._backoff_s = min(entry._backoff_s * 2, SYNC_BACKOFF_MAX_S)

    def run_for(self, duration_s: int) -> dict[str, DeviceSummary]:
        end = self.clock.elapsed_s + duration_s
        fault_idx = 0
        t0 = self.clock.elapsed_s
        while self.clock.elapsed_s < end:
            self.clock.advance(min(self.dt_s, end - self.clock.elapsed_s))
            rel = self.clock.elapsed_s - t0
            while fault_idx < len(self.faults) and self.faults[fault_idx].at_s <= rel:
                ev = self.faults[fault_idx]
                fault_idx += 1
                self._apply_fault(ev)
            for entry in self.entries:
                self._advance(entry)
            self.clock.pace()
        return self.finish()

    def _apply_fault(self, ev: FaultEvent) -> None:
        for entry in self.entries:
            if entry.device.identity.chip_id == ev.chip_id:
                entry.device.inject_fault(ev.fault)

    def _advance(self, entry: FleetEntry) -> None:
        dev = entry.device
        if dev.state == DeviceState.CONNECTING:
            self._try_sync(entry)
        for report in dev.step(self.clock, self.dt_s):
            self._deliver(entry, report)

    def _deliver(self, entry: FleetEntry, report: PulseReport) -> None:
        dev = entry.device
        summary = self.summaries[dev.identity.chip_id]
        try:
            ack = self.cloud.send_report(report)
        except (ConnectionError, OSError):
            dev.send_failed(report)
            return
        summary.reports_sent += 1
        status = ack.get("status")
        if status == IngestStatus.ACCEPT.value:
            dev.confirm(report.seq)
            summary.pulses_acked += report.pulse_delta
        elif status == IngestStatus.DUPLICATE.value:
            dev.confirm(report.seq)
            summary.duplicates += 1
        else:
            summary.rejects += 1
            dev.send_failed(report)
            # server told us where it is; reconnect path will re-sync
            dev.inject_fault(Fault.LINK_UP)

    def finish(self) -> dict[str, DeviceSummary]:
        """Flush partial batches (graceful shutdown) and close out summaries."""
        for entry in self.entries:
            dev = entry.device
            for report in dev.flush_final(self.clock):
                self._deliver(entry, report)
            summary = self.summaries[dev.identity.chip_id]
            summary.pulses_generated = dev.pulses_generated
            summary.buffered = len(dev.unsent) + dev.in_flight_pulses
            summary.discarded = dev.pulses_discarded + dev.pulses_dropped
        return self.summaries
