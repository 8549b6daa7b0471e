"""Simulated meter-mounted devices.

Each device integrates its load profile as an exact watt-second count,
emits one pulse per whole watt-hour crossed, and ships pulses to the
cloud in sequence-numbered batches of 10.  Link loss buffers pulses;
a power cycle discards volatile state and resumes from the cloud's
last persisted count.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Protocol

from .clock import SimClock
from .protocol import PulseReport

WS_PER_PULSE = 3600  # 1 Wh


class DeviceState(enum.Enum):
    UNPROVISIONED = "unprovisioned"
    PROVISIONED = "provisioned"
    CONNECTING = "connecting"
    SYNCING = "syncing"
    COUNTING = "counting"
    OFFLINE = "offline"


class Fault(enum.Enum):
    LINK_DOWN = "link_down"
    LINK_UP = "link_up"
    POWER_CYCLE = "power_cycle"


class LinkDown(Exception):
    pass


@dataclass(frozen=True)
class DeviceIdentity:
    chip_id: str
    hostname: str
    mac: str
    ip: str


@dataclass(frozen=True)
class LoadSegment:
    duration_s: int
    power_w: Fraction

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("segment duration must be positive")
        if self.power_w < 0:
            raise ValueError("power cannot be negative")


@dataclass(frozen=True)
class LoadProfile:
    """Piecewise-constant power over time; 0 W after the last segment."""

    segments: tuple[LoadSegment, ...]

    @classmethod
    def constant(cls, power_w, duration_s: int) -> "LoadProfile":
        return cls((LoadSegment(duration_s, Fraction(power_w)),))

    def energy_ws(self, t0: Fraction, t1: Fraction) -> Fraction:
        """Exact watt-seconds consumed over [t0, t1)."""
        total = Fraction(0)
        start = Fraction(0)
        for seg in self.segments:
            end = start + seg.duration_s
            lo, hi = max(t0, start), min(t1, end)
            if hi > lo:
                total += seg.power_w * (hi - lo)
            start = end
        return total


class CloudLink(Protocol):
    """What a device needs from the server side."""

    def resume(self, chip_id: str) -> Optional[tuple[int, int]]:
        """(cumulative_count, last_seq) if the device is known, else None."""
        ...


@dataclass
class _Pulse:
    at: Fraction  # sim seconds


class SimulatedDevice:
    def __init__(
        self,
        identity: DeviceIdentity,
        profile: LoadProfile,
        batch_size: int = 10,
        flush_after_s: int = 120,
        buffer_cap: Optional[int] = None,
    ):
        self.identity = identity
        self.profile = profile
        self.batch_size = batch_size
        self.flush_after_s = flush_after_s
        self.buffer_cap = buffer_cap

        self.state = DeviceState.UNPROVISIONED
        self.saved_network: Optional[tuple[str, str]] = None
        self.link_up = True
        self.local_count = 0
        self.next_seq = 0
        self.unsent: list[_Pulse] = []
        self._in_flight: dict[int, list[_Pulse]] = {}
        self._elapsed = Fraction(0)  # profile position, survives reboots
        self._ws_accum = Fraction(0)  # volatile progress toward next pulse

        # simulator-side accounting, not firmware state
        self.pulses_generated = 0
        self.pulses_dropped = 0  # buffer_cap evictions
        self.pulses_discarded = 0  # lost to power cycles

    # -- provisioning / boot ------------------------------------------------

    def provision(self, ssid: str, credential: str) -> None:
        if self.state not in (DeviceState.UNPROVISIONED, DeviceState.PROVISIONED):
            raise RuntimeError(f"cannot provision while {self.state.value}")
        self.saved_network = (ssid, credential)
        self.state = DeviceState.PROVISIONED

    def boot(self) -> None:
        """Power-on: with a saved network the device connects by itself."""
        if self.saved_network is not None:
            self.state = DeviceState.CONNECTING
        elif self.state != DeviceState.UNPROVISIONED:
            self.state = DeviceState.PROVISIONED

    def sync_with_cloud(self, cloud: CloudLink) -> None:
        """Resume the counter from the cloud's last record, or from zero."""
        if self.state != DeviceState.CONNECTING:
            raise RuntimeError(f"sync requires connecting state, not {self.state.value}")
        if not self.link_up:
            self.state = DeviceState.OFFLINE
            raise LinkDown(self.identity.chip_id)
        self.state = DeviceState.SYNCING
        previous = cloud.resume(self.identity.chip_id)
        if previous is None:
            self.local_count = 0
            self.next_seq = 0
        else:
            self.local_count, last_seq = previous
            self.next_seq = last_seq + 1
        self.state = DeviceState.COUNTING

    # -- metering -----------------------------------------------------------

    def step(self, clock: SimClock, dt_s) -> list[PulseReport]:
        """Advance dt simulated seconds; returns reports ready to send."""
        dt = Fraction(dt_s)
        if dt <= 0:
            raise ValueError("dt must be positive")
        t0, t1 = self._elapsed, self._elapsed + dt
        self._ws_accum += self.profile.energy_ws(t0, t1)
        self._elapsed = t1
        while self._ws_accum >= WS_PER_PULSE:
            self._ws_accum -= WS_PER_PULSE
            self.pulses_generated += 1
            self.local_count += 1
            self.unsent.append(_Pulse(at=clock.elapsed_s))
            if self.buffer_cap is not None and len(self.unsent) > self.buffer_cap:
                self.unsent.pop(0)
                self.pulses_dropped += 1
        return self._flush(clock)

    def _flush(self, clock: SimClock) -> list[PulseReport]:
        if self.state != DeviceState.COUNTING or not self.link_up:
            return []
        reports = []
        while len(self.unsent) >= self.batch_size:
            reports.append(self._emit(clock, self.batch_size))
        if self.unsent and clock.elapsed_s - self.unsent[0].at >= self.flush_after_s:
            reports.append(self._emit(clock, len(self.unsent)))
        return reports

    def flush_final(self, clock: SimClock) -> list[PulseReport]:
        """Graceful shutdown: ship whatever partial batch remains."""
        reports = self._flush(clock)
        if self.unsent and self.state == DeviceState.COUNTING and self.link_up:
            reports.append(self._emit(clock, len(self.unsent)))
        return reports

    def _emit(self, clock: SimClock, n: int) -> PulseReport:
        batch, self.unsent = self.unsent[:n], self.unsent[n:]
        seq = self.next_seq
        self.next_seq += 1
        self._in_flight[seq] = batch
        return PulseReport(
            chip_id=self.identity.chip_id,
            seq=seq,
            pulse_delta=len(batch),
            reported_at=clock.now(),
            hostname=self.identity.hostname,
            mac=self.identity.mac,
            ip=self.identity.ip,
        )

    def confirm(self, seq: int) -> None:
        """Server acked (accept or duplicate): the batch is durable."""
        self._in_flight.pop(seq, None)

    def send_failed(self, report: PulseReport) -> None:
        """Delivery failed: requeue the batch and drop to offline."""
        batch = self._in_flight.pop(report.seq, [])
        self.unsent[:0] = batch
        self.next_seq = report.seq
        self.link_up = False
        self.state = DeviceState.OFFLINE

    @property
    def in_flight_pulses(self) -> int:
        return sum(len(b) for b in self._in_flight.values())

    # -- faults -------------------------------------------------------------

    def inject_fault(self, fault: Fault) -> None:
        if fault is Fault.LINK_DOWN:
            self.link_up = False
            if self.state in (DeviceState.COUNTING, DeviceState.SYNCING,
                              DeviceState.CONNECTING):
                self.state = DeviceState.OFFLINE
        elif fault is Fault.LINK_UP:
            self.link_up = True
            if self.state == DeviceState.OFFLINE:
                self.state = DeviceState.CONNECTING
        elif fault is Fault.POWER_CYCLE:
            # volatile state is lost; saved network and profile position are not
            self.pulses_discarded += len(self.unsent) + self.in_flight_pulses
            self.unsent.clear()
            self._in_flight.clear()
            self._ws_accum = Fraction(0)
            self.local_count = 0
            self.next_seq = 0
            self.state = DeviceState.UNPROVISIONED
            self.boot()
