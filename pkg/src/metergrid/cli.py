"""Operator command line.

Exit codes: 0 success, 1 validation error, 2 runtime/connection error.
Machine-readable output goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import urllib.error
import urllib.request
from datetime import date
from decimal import Decimal, InvalidOperation
from pathlib import Path

from . import config
from .analytics import aggregate_daily, write_report_csv
from .clock import SimClock
from .fleet import FleetRunner, LocalCloud, TcpCloud
from .ledger import Ledger, read_entries
from .money import Money
from .service import MeterService, open_store
from .store import MeterStore
from .tariff import (
    InsufficientPayment,
    UnitsExceedSchedule,
    postpaid_purchasable,
    prepaid_total_cost,
)
from .units import pulses_to_kwh, round_kwh_billing

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="metergrid")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("serve", help="run the ingest service")
    p.add_argument("--config", required=True, help="server TOML config")

    p = sub.add_parser("simulate", help="drive a simulated fleet against a server")
    p.add_argument("--fleet", required=True)
    p.add_argument("--days", type=float, default=1.0)
    p.add_argument("--accel", type=float, default=1000.0)
    p.add_argument("--faults")
    p.add_argument("--server", default="127.0.0.1:7070", help="host:port")
    p.add_argument("--offline", action="store_true",
                   help="dry-run against an in-process store")
    p.add_argument("--dt", type=int, default=1, help="simulation step seconds")

    p = sub.add_parser("bill", help="print an itemized bill")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--units")
    group.add_argument("--pulses", type=int)
    p.add_argument("--mode", choices=["prepaid", "postpaid"], default="prepaid")
    p.add_argument("--paid", help="paid amount (postpaid mode)")
    p.add_argument("--schedule", default=str(config.demo_schedule_path()))

    p = sub.add_parser("report", help="daily consumption table from a ledger file")
    p.add_argument("--ledger", required=True)
    p.add_argument("--device", help="restrict to one chip id")
    p.add_argument("--schedule", default=str(config.demo_schedule_path()))
    p.add_argument("--out", help="write CSV here instead of stdout")

    p = sub.add_parser("chart", help="fetch a (day,kwh) chart series from the service")
    p.add_argument("--device", required=True)
    p.add_argument("--from", dest="date_from")
    p.add_argument("--to", dest="date_to")
    p.add_argument("--out", required=True)
    p.add_argument("--api", default="127.0.0.1:7080", help="host:port of the HTTP API")
    p.add_argument("--token", help="session token (or METERGRID_TOKEN env var)")

    p = sub.add_parser("provision", help="save a device's wireless network")
    p.add_argument("--fleet", required=True)
    p.add_argument("--device", required=True)
    p.add_argument("--ssid", required=True)
    p.add_argument("--credential", required=True)

    return parser


# -- subcommands ----------------------------------------------------------------


def cmd_serve(args) -> int:
    cfg = config.load_server_config(args.config)
    store = open_store(
        cfg.ledger_path,
        cfg.schedule,
        snapshot_path=cfg.snapshot_path,
        alert_threshold=cfg.alert_threshold,
        token_ttl_s=cfg.token_ttl_s,
    )
    svc = MeterService(
        store,
        host=cfg.host,
        device_port=cfg.device_port,
        http_port=cfg.http_port,
        snapshot_path=cfg.snapshot_path,
        snapshot_every=cfg.snapshot_every_s,
    )
    svc.start()
    print(
        f"listening: device protocol {svc.device_address[0]}:{svc.device_address[1]}, "
        f"http {svc.http_address[0]}:{svc.http_address[1]}",
        file=sys.stderr,
    )
    stop = []
    signal.signal(signal.SIGINT, lambda *a: stop.append(1))
    signal.signal(signal.SIGTERM, lambda *a: stop.append(1))
    try:
        while not stop:
            signal.pause()
    finally:
        svc.stop()
    return EXIT_OK


def cmd_simulate(args) -> int:
    entries = config.load_fleet(args.fleet)
    faults = config.load_faults(args.faults) if args.faults else []
    clock = SimClock(accel=args.accel)
    if args.offline:
        from .tariff import flat_demo_schedule

        ledger = Ledger(os.devnull)
        cloud = LocalCloud(MeterStore(ledger, flat_demo_schedule()))
    else:
        host, _, port = args.server.partition(":")
        try:
            cloud = TcpCloud(host, int(port or 7070))
        except (OSError, ValueError) as exc:
            print(f"cannot reach server {args.server}: {exc}", file=sys.stderr)
            return EXIT_RUNTIME

    runner = FleetRunner(entries, cloud, clock, dt_s=args.dt)
    runner.schedule_faults(faults)
    try:
        runner.start()
        duration = int(args.days * 86400)
        summaries = (
            runner.run_for(duration) if duration > 0 else runner.finish()
        )
    except (ConnectionError, OSError) as exc:
        print(f"connection lost: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        cloud.close()

    conserved = True
    for chip, s in sorted(summaries.items()):
        print(
            f"{chip} generated={s.pulses_generated} acked={s.pulses_acked} "
            f"buffered={s.buffered} discarded={s.discarded} "
            f"reports={s.reports_sent} duplicates={s.duplicates} rejects={s.rejects}"
        )
        conserved = conserved and s.conserved
    return EXIT_OK if conserved else EXIT_RUNTIME


def _parse_units(args) -> Decimal:
    if args.units is not None:
        try:
            units = Decimal(args.units)
        except InvalidOperation:
            raise UsageError(f"bad --units value {args.units!r}")
        if units < 0:
            raise UsageError("--units must be non-negative")
        return units
    if args.pulses < 0:
        raise UsageError("--pulses must be non-negative")
    return round_kwh_billing(pulses_to_kwh(args.pulses))


def cmd_bill(args) -> int:
    try:
        schedule = config.load_schedule(args.schedule)
    except config.ConfigError as exc:
        raise UsageError(str(exc))
    if args.mode == "postpaid":
        if args.paid is None:
            raise UsageError("postpaid billing requires --paid")
        try:
            paid = Money.from_bdt(args.paid)
        except (ValueError, InvalidOperation):
            raise UsageError(f"bad --paid value {args.paid!r}")
        try:
            b = postpaid_purchasable(paid, schedule)
        except InsufficientPayment as exc:
            print(f"insufficient payment: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"paid_amount: {b.paid_amount}")
        print(f"vat: {b.vat}")
        print(f"meter_rent: {b.meter_rent}")
        print(f"demand_charge: {b.demand_charge}")
        print(f"purchasable: {b.purchasable}")
        print(f"rebate: {b.rebate}")
        print(f"purchasable_units: {b.purchasable_units}")
        return EXIT_OK

    units = _parse_units(args)
    try:
        bill = prepaid_total_cost(units, schedule)
    except UnitsExceedSchedule as exc:
        print(f"units exceed schedule: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"billed_units: {bill.billed_units}")
    for i, charge in enumerate(bill.tier_charges, start=1):
        print(f"tier_{i}: {charge}")
    print(f"energy_charge: {bill.energy_charge}")
    print(f"demand_charge: {bill.demand_charge}")
    print(f"vat: {bill.vat}")
    print(f"total: {bill.total}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        schedule = config.load_schedule(args.schedule)
    except config.ConfigError as exc:
        raise UsageError(str(exc))
    if not Path(args.ledger).exists():
        raise UsageError(f"no ledger file {args.ledger}")
    from datetime import datetime

    events = []
    for entry in read_entries(args.ledger):
        rec = entry.record
        if rec.get("kind") != "pulse":
            continue
        if args.device and rec["chip_id"] != args.device:
            continue
        events.append(
            (datetime.fromisoformat(rec["reported_at"]), rec["pulse_delta"])
        )
    rows = aggregate_daily(events, schedule)
    if args.out:
        write_report_csv(rows, args.out)
        print(f"wrote {len(rows)} rows to {args.out}", file=sys.stderr)
    else:
        print("day,pulses,kwh,vat,total")
        for r in rows:
            print(f"{r.day.isoformat()},{r.pulse_count},{r.kwh},{r.vat},{r.total}")
    return EXIT_OK


def cmd_chart(args) -> int:
    token = args.token or os.environ.get("METERGRID_TOKEN")
    if not token:
        raise UsageError("no session token: pass --token or set METERGRID_TOKEN")
    query = []
    for flag, value in (("from", args.date_from), ("to", args.date_to)):
        if value:
            try:
                date.fromisoformat(value)
            except ValueError:
                raise UsageError(f"bad --{flag} date {value!r}")
            query.append(f"{flag}={value}")
    if args.date_from and args.date_to and args.date_from > args.date_to:
        raise UsageError("--from is after --to")
    url = f"http://{args.api}/devices/{args.device}/consumption"
    if query:
        url += "?" + "&".join(query)
    req = urllib.request.Request(url, headers={"Authorization": f"Bearer {token}"})
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            body = json.load(resp)
    except urllib.error.HTTPError as exc:
        if exc.code in (401, 404):
            print(f"service refused request: {exc}", file=sys.stderr)
            return EXIT_USAGE
        print(f"service error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (urllib.error.URLError, OSError) as exc:
        print(f"cannot reach service: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("day,kwh\n")
        for row in body["rows"]:
            fh.write(f"{row['day']},{row['kwh']}\n")
    print(f"wrote {len(body['rows'])} points to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_provision(args) -> int:
    try:
        config.save_fleet_network(args.fleet, args.device, args.ssid, args.credential)
    except (config.ConfigError, OSError, json.JSONDecodeError) as exc:
        raise UsageError(str(exc))
    print(f"saved network for {args.device}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "serve": cmd_serve,
    "simulate": cmd_simulate,
    "bill": cmd_bill,
    "report": cmd_report,
    "chart": cmd_chart,
    "provision": cmd_provision,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.subcommand](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
