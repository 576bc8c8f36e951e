"""Snort header-line parsing and floating/fixed IP to user resolution.

Two header shapes are accepted, both starting with ``MM/DD-HH:MM:SS.ffffff``:

    11/19-13:43:43.222391 11.1.0.5:51215 -> 74.125.130.106:80
    11/19-13:43:43.222391  [**] [1:1:0] msg [**] [Priority: 0] {TCP} 11.1.0.5:51215 -> 74.125.130.106:80

Continuation lines (``TCP TTL:64 ...``, flag lines, ``=+=+`` separators) do
not start with a timestamp and are classified as such, not parsed.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from ipaddress import IPv4Address
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Tuple

from .model import UNKNOWN_USER, LogEntry, as_utc

MAPPING_COLUMNS = ("floating_ip", "fixed_ip", "instance_id", "user_id", "valid_from", "valid_to")

_TIMESTAMP = re.compile(r"(\d{2})/(\d{2})-(\d{2}):(\d{2}):(\d{2})\.(\d{1,6})")
_IPV4 = r"\d{1,3}(?:\.\d{1,3}){3}"
_ENDPOINTS = re.compile(
    rf"(?<![\d.])({_IPV4})(?::(\d{{1,5}}))?\s+->\s+({_IPV4})(?::(\d{{1,5}}))?(?![\d.:])"
)
_ARROW = re.compile(r"->")


class ParseError(ValueError):
    def __init__(self, message: str, line: str, column: int):
        super().__init__(f"{message} at column {column}: {line!r}")
        self.line = line
        self.column = column


class MappingError(ValueError):
    pass


class UnresolvedUser(LookupError):
    pass


@dataclass(frozen=True)
class SnortEvent:
    """Parsed header fields. ``user_id`` is attached later by resolution."""

    timestamp: datetime
    from_ip: IPv4Address
    from_port: Optional[int]
    to_ip: IPv4Address
    to_port: Optional[int]

    @property
    def port(self) -> int:
        # portless (ICMP) events carry port 0
        return self.to_port if self.to_port is not None else 0

    def to_entry(self, user_id: str, from_ip: Optional[IPv4Address] = None) -> LogEntry:
        return LogEntry(from_ip or self.from_ip, self.to_ip, self.timestamp, self.port, user_id)


def _parse_ip(text: str, line: str, column: int) -> IPv4Address:
    try:
        return IPv4Address(text)
    except ValueError:
        raise ParseError(f"invalid IPv4 address {text!r}", line, column) from None


def _parse_port(text: Optional[str], line: str, column: int) -> Optional[int]:
    if text is None:
        return None
    port = int(text)
    if port > 0xFFFF or (len(text) > 1 and text[0] == "0"):
        raise ParseError(f"invalid port {text!r}", line, column)
    return port


def is_header(line: str) -> bool:
    return _TIMESTAMP.match(line) is not None


def parse_snort_line(line: str, year: int) -> SnortEvent:
    """Parse one header line. Raises ParseError with the failing column."""
    if isinstance(line, (bytes, bytearray)):
        line = bytes(line).decode("utf-8", errors="replace")
    line = line.rstrip("\r\n")
    ts = _TIMESTAMP.match(line)
    if ts is None:
        raise ParseError("expected MM/DD-HH:MM:SS.ffffff timestamp", line, 0)
    month, day, hour, minute, second, frac = ts.groups()
    try:
        when = datetime(year, int(month), int(day), int(hour), int(minute), int(second),
                        int(frac.ljust(6, "0")), tzinfo=timezone.utc)
    except ValueError as exc:
        raise ParseError(f"invalid date/time ({exc})", line, 0) from None
    rest_at = ts.end()
    if rest_at < len(line) and not line[rest_at].isspace():
        raise ParseError("expected whitespace after timestamp", line, rest_at)
    arrow = _ARROW.search(line, rest_at)
    if arrow is None:
        raise ParseError("missing '->' between endpoints", line, rest_at)
    ends = _ENDPOINTS.search(line, rest_at)
    if ends is None or not ends.start() <= arrow.start() < ends.end():
        raise ParseError("malformed endpoint pair around '->'", line, arrow.start())
    src, sport, dst, dport = ends.groups()
    return SnortEvent(
        timestamp=when,
        from_ip=_parse_ip(src, line, ends.start(1)),
        from_port=_parse_port(sport, line, ends.start(2) if sport else ends.start(1)),
        to_ip=_parse_ip(dst, line, ends.start(3)),
        to_port=_parse_port(dport, line, ends.start(4) if dport else ends.start(3)),
    )


def format_snort_line(event: SnortEvent) -> str:
    def endpoint(ip, port):
        return f"{ip}" if port is None else f"{ip}:{port}"

    ts = event.timestamp
    return (f"{ts:%m/%d-%H:%M:%S}.{ts.microsecond:06d} "
            f"{endpoint(event.from_ip, event.from_port)} -> {endpoint(event.to_ip, event.to_port)}")


def classify_line(line: str) -> str:
    """One of 'header', 'continuation', 'blank'. Headers may still fail to parse."""
    if not line.strip():
        return "blank"
    return "header" if is_header(line) else "continuation"


def iter_events(lines: Iterable[str], year: int) -> Iterator[Tuple[int, str, object]]:
    """Yield (line_no, kind, event-or-ParseError) for header lines only."""
    for no, line in enumerate(lines, 1):
        if classify_line(line) != "header":
            continue
        try:
            yield no, "event", parse_snort_line(line, year)
        except ParseError as exc:
            yield no, "error", exc


# -- IP/user mapping ------------------------------------------------------------

def _parse_instant(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return as_utc(datetime.fromisoformat(text))


@dataclass(frozen=True)
class IpUserMapping:
    floating_ip: IPv4Address
    fixed_ip: IPv4Address
    instance_id: str
    user_id: str
    valid_from: datetime
    valid_to: datetime

    def __post_init__(self):
        if not self.valid_from < self.valid_to:
            raise MappingError(f"empty lease window for {self.floating_ip}: {self.valid_from} >= {self.valid_to}")

    def covers(self, at: datetime) -> bool:
        return self.valid_from <= at < self.valid_to


def _overlaps(a: IpUserMapping, b: IpUserMapping) -> bool:
    return a.valid_from < b.valid_to and b.valid_from < a.valid_to


class MappingStore:
    """Read-only lease table standing in for the cloud controller's IP tables."""

    def __init__(self, mappings: Iterable[IpUserMapping] = ()):
        self.mappings: List[IpUserMapping] = list(mappings)
        self._validate()

    def _validate(self):
        ms = self.mappings
        for i, a in enumerate(ms):
            for b in ms[i + 1:]:
                if not _overlaps(a, b):
                    continue
                if a.floating_ip == b.floating_ip:
                    raise MappingError(f"floating ip {a.floating_ip} has overlapping leases")
                if a.fixed_ip == b.fixed_ip and a.user_id != b.user_id:
                    raise MappingError(f"fixed ip {a.fixed_ip} leased to two users at once")

    @classmethod
    def load(cls, path) -> "MappingStore":
        with open(path, newline="", encoding="utf-8") as fh:
            return cls.from_lines(fh)

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "MappingStore":
        rows = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
        reader = csv.DictReader(rows, delimiter="\t")
        if reader.fieldnames is None or tuple(reader.fieldnames) != MAPPING_COLUMNS:
            raise MappingError(f"mapping header must be: {' '.join(MAPPING_COLUMNS)}")
        out = []
        for row in reader:
            try:
                out.append(IpUserMapping(
                    IPv4Address(row["floating_ip"]), IPv4Address(row["fixed_ip"]),
                    row["instance_id"], row["user_id"],
                    _parse_instant(row["valid_from"]), _parse_instant(row["valid_to"]),
                ))
            except (TypeError, ValueError) as exc:
                if isinstance(exc, MappingError):
                    raise
                raise MappingError(f"bad mapping row {row}: {exc}") from exc
        return cls(out)

    def dump(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("\t".join(MAPPING_COLUMNS) + "\n")
            for m in self.mappings:
                fh.write("\t".join([str(m.floating_ip), str(m.fixed_ip), m.instance_id, m.user_id,
                                    m.valid_from.isoformat(), m.valid_to.isoformat()]) + "\n")

    def resolve(self, ip, at: datetime) -> IpUserMapping:
        ip = IPv4Address(str(ip))
        at = as_utc(at)
        for m in self.mappings:
            if (m.floating_ip == ip or m.fixed_ip == ip) and m.covers(at):
                return m
        raise UnresolvedUser(f"no lease for {ip} at {at.isoformat()}")


def resolve_user(ip, at: datetime, mappings: MappingStore) -> str:
    return mappings.resolve(ip, at).user_id


def to_log_entry(event: SnortEvent, mappings: MappingStore) -> Tuple[LogEntry, bool]:
    """Attach user and fixed IP. Returns (entry, resolved)."""
    try:
        m = mappings.resolve(event.from_ip, event.timestamp)
    except UnresolvedUser:
        return event.to_entry(UNKNOWN_USER), False
    return event.to_entry(m.user_id, from_ip=m.fixed_ip), True


def read_lines(path) -> List[str]:
    return Path(path).read_text(encoding="utf-8", errors="replace").splitlines()
