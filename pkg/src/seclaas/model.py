"""Domain types, canonical byte encoding and the SHA-256 primitive.

Every value that is hashed, signed or persisted goes through ``encode``.
The layout is fixed-order binary: a one-byte type tag, fixed-width
integers in big-endian order, and a u32 length prefix on every
variable-length field. IPv4 addresses are 4 raw bytes, instants are
signed 64-bit microseconds since the Unix epoch (UTC), days are the
proleptic Gregorian ordinal as u32.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from ipaddress import IPv4Address
from typing import Optional, Union

DIGEST_SIZE = 32
UNKNOWN_USER = "unknown"

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

TAG_LOG_ENTRY = 0x01
TAG_ENCRYPTED_ENTRY = 0x02
TAG_RECORD = 0x03
TAG_ACCUMULATOR = 0x04
TAG_PPL = 0x05
TAG_WITNESS = 0x06


class EncodingError(ValueError):
    pass


class Backend(str, enum.Enum):
    BLOOM = "bloom"
    RSA = "rsa"


def hash_bytes(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def to_hex(digest: bytes) -> str:
    return digest.hex()


# -- value normalisation -----------------------------------------------------

def as_ip(value: Union[str, IPv4Address]) -> IPv4Address:
    return value if isinstance(value, IPv4Address) else IPv4Address(value)


def as_utc(ts: datetime) -> datetime:
    """Normalise to an aware UTC datetime. Naive values are taken as UTC."""
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def to_micros(ts: datetime) -> int:
    delta = as_utc(ts) - _EPOCH
    return (delta.days * 86400 + delta.seconds) * 1_000_000 + delta.microseconds


def from_micros(us: int) -> datetime:
    return _EPOCH + timedelta(microseconds=us)


def day_of(ts: datetime) -> date:
    return as_utc(ts).date()


# -- domain types ------------------------------------------------------------

@dataclass(frozen=True)
class LogEntry:
    from_ip: IPv4Address
    to_ip: IPv4Address
    timestamp: datetime
    port: int
    user_id: str

    def __post_init__(self):
        object.__setattr__(self, "from_ip", as_ip(self.from_ip))
        object.__setattr__(self, "to_ip", as_ip(self.to_ip))
        object.__setattr__(self, "timestamp", as_utc(self.timestamp))
        if not 0 <= self.port <= 0xFFFF:
            raise ValueError(f"port out of range: {self.port}")
        if not self.user_id:
            raise ValueError("user_id must be non-empty")

    @property
    def day(self) -> date:
        return self.timestamp.date()


@dataclass(frozen=True)
class EncryptedLogEntry:
    ciphertext: bytes
    from_ip: IPv4Address
    timestamp: datetime

    def __post_init__(self):
        object.__setattr__(self, "from_ip", as_ip(self.from_ip))
        object.__setattr__(self, "timestamp", as_utc(self.timestamp))
        if not self.ciphertext:
            raise ValueError("ciphertext must be non-empty")


@dataclass(frozen=True)
class ChainedRecord:
    """One persisted log record: the encrypted entry plus its chain link."""

    ele: EncryptedLogEntry
    chain: bytes

    def __post_init__(self):
        if len(self.chain) != DIGEST_SIZE:
            raise ValueError(f"chain digest must be {DIGEST_SIZE} bytes")


@dataclass(frozen=True)
class BloomParams:
    n: int
    p: float
    m: int
    k: int

    def __post_init__(self):
        if self.m < 1 or not 1 <= self.k <= 64:
            raise ValueError(f"invalid bloom geometry m={self.m} k={self.k}")


@dataclass(frozen=True)
class RsaParams:
    modulus: int
    seed: int
    bit_size: int

    def __post_init__(self):
        if not 1 < self.seed < self.modulus:
            raise ValueError("seed must satisfy 1 < X < N")

    @property
    def value_size(self) -> int:
        return (self.modulus.bit_length() + 7) // 8


@dataclass(frozen=True)
class BloomPayload:
    params: BloomParams
    bits: bytes

    def __post_init__(self):
        if len(self.bits) != (self.params.m + 7) // 8:
            raise ValueError("bit array length does not match m")


@dataclass(frozen=True)
class RsaPayload:
    params: RsaParams
    value: int

    def __post_init__(self):
        if not 1 <= self.value < self.params.modulus:
            raise ValueError("accumulator value out of range")


@dataclass(frozen=True)
class AccumulatorState:
    """Running membership digest for one (ip, day).

    ``count`` and ``head`` track the number of folded records and the chain
    digest of the latest one, so a sealed state also pins the chain length.
    """

    backend: Backend
    ip: IPv4Address
    day: date
    count: int
    head: bytes
    payload: Union[BloomPayload, RsaPayload]

    def __post_init__(self):
        object.__setattr__(self, "ip", as_ip(self.ip))
        object.__setattr__(self, "backend", Backend(self.backend))
        expected = BloomPayload if self.backend is Backend.BLOOM else RsaPayload
        if not isinstance(self.payload, expected):
            raise ValueError(f"{self.backend.value} state needs {expected.__name__}")
        if len(self.head) != DIGEST_SIZE:
            raise ValueError("head must be a 32-byte digest")


@dataclass(frozen=True)
class ProofOfPastLog:
    ip: IPv4Address
    day: date
    ae_digest: bytes
    signature: bytes
    published_at: datetime

    def __post_init__(self):
        object.__setattr__(self, "ip", as_ip(self.ip))
        object.__setattr__(self, "published_at", as_utc(self.published_at))


@dataclass(frozen=True)
class MembershipWitness:
    record_index: int
    value: int


# -- encoding ----------------------------------------------------------------

def _lp(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


def _int_bytes(value: int, size: Optional[int] = None) -> bytes:
    if size is None:
        size = max(1, (value.bit_length() + 7) // 8)
    return value.to_bytes(size, "big")


def encode_ip(ip) -> bytes:
    return as_ip(ip).packed


def encode_day(day: date) -> bytes:
    return struct.pack(">I", day.toordinal())


def encode_instant(ts: datetime) -> bytes:
    return struct.pack(">q", to_micros(ts))


def _encode_payload(payload) -> bytes:
    if isinstance(payload, BloomPayload):
        bp = payload.params
        return struct.pack(">QdQB", bp.n, bp.p, bp.m, bp.k) + _lp(payload.bits)
    rp = payload.params
    width = rp.value_size
    return (
        struct.pack(">H", rp.bit_size)
        + _lp(_int_bytes(rp.modulus))
        + _lp(_int_bytes(rp.seed, width))
        + _lp(_int_bytes(payload.value, width))
    )


def encode(value) -> bytes:
    """Canonical, injective byte encoding of any domain value."""
    if isinstance(value, LogEntry):
        return (
            bytes([TAG_LOG_ENTRY])
            + encode_ip(value.from_ip)
            + encode_ip(value.to_ip)
            + encode_instant(value.timestamp)
            + struct.pack(">H", value.port)
            + _lp(value.user_id.encode("utf-8"))
        )
    if isinstance(value, EncryptedLogEntry):
        return (
            bytes([TAG_ENCRYPTED_ENTRY])
            + _lp(value.ciphertext)
            + encode_ip(value.from_ip)
            + encode_instant(value.timestamp)
        )
    if isinstance(value, ChainedRecord):
        return bytes([TAG_RECORD]) + _lp(encode(value.ele)) + value.chain
    if isinstance(value, AccumulatorState):
        backend = 0 if value.backend is Backend.BLOOM else 1
        return (
            bytes([TAG_ACCUMULATOR, backend])
            + encode_ip(value.ip)
            + encode_day(value.day)
            + struct.pack(">Q", value.count)
            + value.head
            + _encode_payload(value.payload)
        )
    if isinstance(value, ProofOfPastLog):
        return (
            bytes([TAG_PPL])
            + encode_ip(value.ip)
            + encode_day(value.day)
            + _lp(value.ae_digest)
            + _lp(value.signature)
            + encode_instant(value.published_at)
        )
    if isinstance(value, MembershipWitness):
        return bytes([TAG_WITNESS]) + struct.pack(">Q", value.record_index) + _lp(_int_bytes(value.value))
    raise TypeError(f"no canonical encoding for {type(value).__name__}")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise EncodingError(f"truncated input at offset {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def lp(self) -> bytes:
        (n,) = self.unpack(">I")
        return self.take(n)

    def ip(self) -> IPv4Address:
        return IPv4Address(self.take(4))

    def instant(self) -> datetime:
        return from_micros(self.unpack(">q")[0])

    def day(self) -> date:
        return date.fromordinal(self.unpack(">I")[0])

    def done(self):
        if self.pos != len(self.data):
            raise EncodingError(f"{len(self.data) - self.pos} trailing bytes")


def _decode_from(r: _Reader):
    tag = r.take(1)[0]
    if tag == TAG_LOG_ENTRY:
        from_ip, to_ip, ts = r.ip(), r.ip(), r.instant()
        (port,) = r.unpack(">H")
        return LogEntry(from_ip, to_ip, ts, port, r.lp().decode("utf-8"))
    if tag == TAG_ENCRYPTED_ENTRY:
        ct = r.lp()
        return EncryptedLogEntry(ct, r.ip(), r.instant())
    if tag == TAG_RECORD:
        ele = decode(r.lp())
        if not isinstance(ele, EncryptedLogEntry):
            raise EncodingError("record does not wrap an encrypted entry")
        return ChainedRecord(ele, r.take(DIGEST_SIZE))
    if tag == TAG_ACCUMULATOR:
        backend = Backend.BLOOM if r.take(1)[0] == 0 else Backend.RSA
        ip, day = r.ip(), r.day()
        (count,) = r.unpack(">Q")
        head = r.take(DIGEST_SIZE)
        if backend is Backend.BLOOM:
            n, p, m, k = r.unpack(">QdQB")
            payload = BloomPayload(BloomParams(n, p, m, k), r.lp())
        else:
            (bit_size,) = r.unpack(">H")
            modulus = int.from_bytes(r.lp(), "big")
            seed = int.from_bytes(r.lp(), "big")
            value = int.from_bytes(r.lp(), "big")
            payload = RsaPayload(RsaParams(modulus, seed, bit_size), value)
        return AccumulatorState(backend, ip, day, count, head, payload)
    if tag == TAG_PPL:
        ip, day = r.ip(), r.day()
        return ProofOfPastLog(ip, day, r.lp(), r.lp(), r.instant())
    if tag == TAG_WITNESS:
        (idx,) = r.unpack(">Q")
        return MembershipWitness(idx, int.from_bytes(r.lp(), "big"))
    raise EncodingError(f"unknown type tag {tag:#x}")


def decode(data: bytes):
    """Inverse of ``encode``. Raises EncodingError on malformed input."""
    r = _Reader(bytes(data))
    try:
        value = _decode_from(r)
    except (ValueError, struct.error) as exc:
        if isinstance(exc, EncodingError):
            raise
        raise EncodingError(str(exc)) from exc
    r.done()
    return value


# -- hash chain ----------------------------------------------------------------

def genesis(ip, day: date) -> bytes:
    """Chain value preceding the first record of an (ip, day) chain."""
    return hash_bytes(encode_ip(ip) + encode_day(day))


def chain_link(ele: EncryptedLogEntry, prev_chain: bytes) -> bytes:
    return hash_bytes(encode(ele) + prev_chain)
