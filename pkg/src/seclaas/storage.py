"""File-backed log store, proof store and published feed.

Layout under a data root::

    config.json                          backend + accumulator parameters
    logs/<ip>/<YYYY-MM-DD>.seg           framed binary records
    proofs/<ip>/<YYYY-MM-DD>.json        accumulator state, witnesses, seal
    feed/ppl.jsonl                       published proofs, one per line
    feed/provider_pub.key                provider verifying key

Segment frame (all big-endian)::

    u32 body_length | u32 crc32(body) | body = u64 record_index || encode(record)

JSON documents are written with sorted keys and no whitespace. Digests are
lowercase hex, other binary fields are standard base64, big integers are
base64 of their big-endian bytes.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import struct
import zlib
from dataclasses import dataclass, field
from datetime import date, datetime
from ipaddress import IPv4Address
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Tuple

from .model import (
    AccumulatorState,
    Backend,
    BloomParams,
    BloomPayload,
    ChainedRecord,
    EncodingError,
    MembershipWitness,
    ProofOfPastLog,
    RsaParams,
    RsaPayload,
    as_ip,
    as_utc,
    decode,
    encode,
    hash_bytes,
)

log = logging.getLogger(__name__)

_FRAME = struct.Struct(">II")
_INDEX = struct.Struct(">Q")

FaultHook = Callable[[str], None]


class StorageError(Exception):
    pass


class DuplicatePublication(StorageError):
    pass


def _no_fault(label: str) -> None:
    return None


# -- JSON helpers ------------------------------------------------------------

def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"), validate=True)


def int_b64(value: int, size: Optional[int] = None) -> str:
    size = size or max(1, (value.bit_length() + 7) // 8)
    return b64(value.to_bytes(size, "big"))


def b64_int(text: str) -> int:
    return int.from_bytes(unb64(text), "big")


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def format_instant(ts: datetime) -> str:
    return as_utc(ts).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def parse_instant(text: str) -> datetime:
    return as_utc(datetime.fromisoformat(text.replace("Z", "+00:00")))


def bloom_params_json(p: BloomParams) -> dict:
    return {"n": p.n, "p": p.p, "m": p.m, "k": p.k}


def bloom_params_from(doc: dict) -> BloomParams:
    return BloomParams(n=int(doc["n"]), p=float(doc["p"]), m=int(doc["m"]), k=int(doc["k"]))


def rsa_params_json(p: RsaParams) -> dict:
    return {"bit_size": p.bit_size, "modulus": int_b64(p.modulus), "seed": int_b64(p.seed, p.value_size)}


def rsa_params_from(doc: dict) -> RsaParams:
    return RsaParams(modulus=b64_int(doc["modulus"]), seed=b64_int(doc["seed"]), bit_size=int(doc["bit_size"]))


def state_to_json(state: AccumulatorState) -> dict:
    if state.backend is Backend.BLOOM:
        payload = {"params": bloom_params_json(state.payload.params), "bits": b64(state.payload.bits)}
    else:
        params = state.payload.params
        payload = {"params": rsa_params_json(params), "value": int_b64(state.payload.value, params.value_size)}
    return {
        "backend": state.backend.value,
        "ip": str(state.ip),
        "day": state.day.isoformat(),
        "count": state.count,
        "head": state.head.hex(),
        "payload": payload,
    }


def state_from_json(doc: dict) -> AccumulatorState:
    backend = Backend(doc["backend"])
    p = doc["payload"]
    if backend is Backend.BLOOM:
        payload = BloomPayload(bloom_params_from(p["params"]), unb64(p["bits"]))
    else:
        payload = RsaPayload(rsa_params_from(p["params"]), b64_int(p["value"]))
    return AccumulatorState(backend, IPv4Address(doc["ip"]), date.fromisoformat(doc["day"]),
                            int(doc["count"]), bytes.fromhex(doc["head"]), payload)


def ppl_to_json(ppl: ProofOfPastLog) -> dict:
    return {
        "ip": str(ppl.ip),
        "day": ppl.day.isoformat(),
        "ae_digest": ppl.ae_digest.hex(),
        "signature": b64(ppl.signature),
        "published_at": format_instant(ppl.published_at),
    }


def ppl_from_json(doc: dict) -> ProofOfPastLog:
    return ProofOfPastLog(
        ip=IPv4Address(doc["ip"]),
        day=date.fromisoformat(doc["day"]),
        ae_digest=bytes.fromhex(doc["ae_digest"]),
        signature=unb64(doc["signature"]),
        published_at=parse_instant(doc["published_at"]),
    )


def witness_to_json(w: MembershipWitness, size: int) -> dict:
    return {"record_index": w.record_index, "value": int_b64(w.value, size)}


def witness_from_json(doc: dict) -> MembershipWitness:
    return MembershipWitness(int(doc["record_index"]), b64_int(doc["value"]))


def _atomic_write(path: Path, data: bytes, fault: FaultHook, label: str, fsync: bool) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        if fsync:
            os.fsync(fh.fileno())
    fault(f"{label}.tmp")
    os.replace(tmp, path)
    fault(f"{label}.committed")


# -- log store -----------------------------------------------------------------

@dataclass
class SegmentScan:
    records: List[ChainedRecord]
    valid_bytes: int
    total_bytes: int
    error: Optional[str] = None

    @property
    def damaged(self) -> bool:
        return self.valid_bytes != self.total_bytes


def frame(index: int, record: ChainedRecord) -> bytes:
    body = _INDEX.pack(index) + encode(record)
    return _FRAME.pack(len(body), zlib.crc32(body)) + body


def scan_frames(data: bytes) -> SegmentScan:
    """Read frames until the first bad one; everything after it is suspect."""
    records: List[ChainedRecord] = []
    pos = 0
    error = None
    while pos < len(data):
        if pos + _FRAME.size > len(data):
            error = f"truncated frame header at byte {pos}"
            break
        length, crc = _FRAME.unpack_from(data, pos)
        body = data[pos + _FRAME.size:pos + _FRAME.size + length]
        if len(body) != length:
            error = f"truncated frame body at byte {pos}"
            break
        if length < _INDEX.size:
            error = f"frame at byte {pos} is shorter than its index"
            break
        if zlib.crc32(body) != crc:
            error = f"checksum mismatch in frame at byte {pos}"
            break
        (index,) = _INDEX.unpack_from(body)
        if index != len(records):
            error = f"frame at byte {pos} carries index {index}, expected {len(records)}"
            break
        try:
            rec = decode(body[_INDEX.size:])
        except EncodingError as exc:
            error = f"undecodable record at byte {pos}: {exc}"
            break
        if not isinstance(rec, ChainedRecord):
            error = f"frame at byte {pos} does not hold a record"
            break
        records.append(rec)
        pos += _FRAME.size + length
    return SegmentScan(records, pos, len(data), error)


class LogStore:
    def __init__(self, root, fault: FaultHook = _no_fault, fsync: bool = False):
        self.root = Path(root) / "logs"
        self.fault = fault
        self.fsync = fsync

    def path(self, ip, day: date) -> Path:
        return self.root / str(as_ip(ip)) / f"{day.isoformat()}.seg"

    def size(self, ip, day: date) -> int:
        p = self.path(ip, day)
        return p.stat().st_size if p.exists() else 0

    def put_record(self, ip, day: date, index: int, record: ChainedRecord) -> int:
        """Append one frame; returns the segment size before the write."""
        p = self.path(ip, day)
        p.parent.mkdir(parents=True, exist_ok=True)
        data = frame(index, record)
        half = len(data) // 2
        try:
            with open(p, "ab") as fh:
                before = fh.tell()
                fh.write(data[:half])
                fh.flush()
                self.fault("log.partial")
                fh.write(data[half:])
                fh.flush()
                if self.fsync:
                    os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageError(f"log write failed for {p}: {exc}") from exc
        self.fault("log.written")
        return before

    def truncate(self, ip, day: date, size: int) -> None:
        p = self.path(ip, day)
        if p.exists():
            with open(p, "r+b") as fh:
                fh.truncate(size)

    def scan(self, ip, day: date) -> SegmentScan:
        p = self.path(ip, day)
        if not p.exists():
            return SegmentScan([], 0, 0)
        try:
            data = p.read_bytes()
        except OSError as exc:
            raise StorageError(f"cannot read {p}: {exc}") from exc
        return scan_frames(data)

    def get_records(self, ip, day: date) -> List[ChainedRecord]:
        scan = self.scan(ip, day)
        if scan.damaged:
            log.warning("segment %s damaged (%s); returning %d intact records",
                        self.path(ip, day), scan.error, len(scan.records))
        return scan.records

    def recover(self, ip, day: date) -> SegmentScan:
        """Truncate a damaged tail back to the last intact frame."""
        scan = self.scan(ip, day)
        if scan.damaged:
            log.warning("truncating %s from %d to %d bytes: %s",
                        self.path(ip, day), scan.total_bytes, scan.valid_bytes, scan.error)
            self.truncate(ip, day, scan.valid_bytes)
        return scan

    def segments(self) -> Iterator[Tuple[IPv4Address, date]]:
        if not self.root.exists():
            return
        for ip_dir in sorted(self.root.iterdir()):
            for seg in sorted(ip_dir.glob("*.seg")):
                yield IPv4Address(ip_dir.name), date.fromisoformat(seg.stem)


# -- proof store -----------------------------------------------------------------

@dataclass
class ProofEntry:
    state: AccumulatorState
    sealed: bool = False
    witnesses: Optional[List[MembershipWitness]] = None
    ppl: Optional[ProofOfPastLog] = None

    def to_json(self) -> dict:
        doc = {"version": 1, "state": state_to_json(self.state), "sealed": self.sealed,
               "witnesses": None, "ppl": None}
        if self.witnesses is not None:
            size = self.state.payload.params.value_size
            doc["witnesses"] = [witness_to_json(w, size) for w in self.witnesses]
        if self.ppl is not None:
            doc["ppl"] = ppl_to_json(self.ppl)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ProofEntry":
        ws = doc.get("witnesses")
        ppl = doc.get("ppl")
        return cls(
            state=state_from_json(doc["state"]),
            sealed=bool(doc["sealed"]),
            witnesses=None if ws is None else [witness_from_json(w) for w in ws],
            ppl=None if ppl is None else ppl_from_json(ppl),
        )


class ProofStore:
    def __init__(self, root, fault: FaultHook = _no_fault, fsync: bool = False):
        self.root = Path(root) / "proofs"
        self.fault = fault
        self.fsync = fsync

    def path(self, ip, day: date) -> Path:
        return self.root / str(as_ip(ip)) / f"{day.isoformat()}.json"

    def load(self, ip, day: date) -> Optional[ProofEntry]:
        p = self.path(ip, day)
        if not p.exists():
            return None
        try:
            return ProofEntry.from_json(json.loads(p.read_text()))
        except (OSError, ValueError, KeyError) as exc:
            raise StorageError(f"corrupt proof entry {p}: {exc}") from exc

    def store(self, entry: ProofEntry) -> None:
        p = self.path(entry.state.ip, entry.state.day)
        p.parent.mkdir(parents=True, exist_ok=True)
        try:
            _atomic_write(p, canonical_json(entry.to_json()).encode(), self.fault, "proof", self.fsync)
        except OSError as exc:
            raise StorageError(f"proof write failed for {p}: {exc}") from exc

    def load_accumulator(self, ip, day: date, empty: Callable[[], AccumulatorState]) -> AccumulatorState:
        entry = self.load(ip, day)
        return empty() if entry is None else entry.state

    def store_accumulator(self, state: AccumulatorState) -> None:
        entry = self.load(state.ip, state.day)
        if entry is not None and entry.sealed:
            raise StorageError(f"proof for {state.ip} {state.day} is sealed")
        self.store(ProofEntry(state))

    def clear_stale(self) -> None:
        if self.root.exists():
            for tmp in self.root.glob("*/*.tmp"):
                tmp.unlink()


# -- published feed ----------------------------------------------------------------

class Feed:
    FILE = "ppl.jsonl"
    KEY = "provider_pub.key"

    def __init__(self, root, fault: FaultHook = _no_fault, fsync: bool = False):
        self.root = Path(root) / "feed"
        self.fault = fault
        self.fsync = fsync

    @property
    def path(self) -> Path:
        return self.root / self.FILE

    @property
    def key_path(self) -> Path:
        return self.root / self.KEY

    def publish_key(self, pem: bytes) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        if self.key_path.exists():
            if self.key_path.read_bytes() != pem:
                raise StorageError("feed already carries a different provider key")
            return
        self.key_path.write_bytes(pem)

    def provider_key(self) -> Optional[bytes]:
        return self.key_path.read_bytes() if self.key_path.exists() else None

    def _lines(self) -> Tuple[List[ProofOfPastLog], int]:
        if not self.path.exists():
            return [], 0
        data = self.path.read_bytes()
        out, good = [], 0
        for raw in data.splitlines(keepends=True):
            if not raw.endswith(b"\n"):
                break
            try:
                out.append(ppl_from_json(json.loads(raw)))
            except (ValueError, KeyError):
                break
            good += len(raw)
        if good != len(data):
            log.warning("feed %s has %d unreadable trailing bytes", self.path, len(data) - good)
        return out, good

    def read_feed(self) -> List[ProofOfPastLog]:
        return self._lines()[0]

    def find(self, ip, day: date) -> Optional[ProofOfPastLog]:
        ip = as_ip(ip)
        for ppl in self.read_feed():
            if ppl.ip == ip and ppl.day == day:
                return ppl
        return None

    def publish_ppl(self, ppl: ProofOfPastLog) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        existing, good = self._lines()
        if any(p.ip == ppl.ip and p.day == ppl.day for p in existing):
            raise DuplicatePublication(f"proof for {ppl.ip} {ppl.day} already published")
        line = (canonical_json(ppl_to_json(ppl)) + "\n").encode()
        with open(self.path, "ab") as fh:
            if fh.tell() != good:
                fh.truncate(good)
            fh.write(line)
            fh.flush()
            if self.fsync:
                os.fsync(fh.fileno())
        self.fault("feed.published")


# -- data root ------------------------------------------------------------------------

@dataclass
class RootConfig:
    backend: Backend
    bloom: Optional[BloomParams] = None
    rsa: Optional[RsaParams] = None

    def to_json(self) -> dict:
        return {
            "backend": self.backend.value,
            "bloom": bloom_params_json(self.bloom) if self.bloom else None,
            "rsa": rsa_params_json(self.rsa) if self.rsa else None,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RootConfig":
        return cls(
            backend=Backend(doc["backend"]),
            bloom=bloom_params_from(doc["bloom"]) if doc.get("bloom") else None,
            rsa=rsa_params_from(doc["rsa"]) if doc.get("rsa") else None,
        )


@dataclass
class DataRoot:
    root: Path
    fault: FaultHook = _no_fault
    fsync: bool = False
    logs: LogStore = field(init=False)
    proofs: ProofStore = field(init=False)
    feed: Feed = field(init=False)

    def __post_init__(self):
        self.root = Path(self.root)
        self.logs = LogStore(self.root, self._hook, self.fsync)
        self.proofs = ProofStore(self.root, self._hook, self.fsync)
        self.feed = Feed(self.root, self._hook, self.fsync)

    def _hook(self, label: str) -> None:
        self.fault(label)

    @property
    def config_path(self) -> Path:
        return self.root / "config.json"

    def read_config(self) -> Optional[RootConfig]:
        if not self.config_path.exists():
            return None
        return RootConfig.from_json(json.loads(self.config_path.read_text()))

    def write_config(self, cfg: RootConfig) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.config_path.write_text(canonical_json(cfg.to_json()) + "\n")


def feed_digest(feed: Feed) -> str:
    return hash_bytes(feed.path.read_bytes() if feed.path.exists() else b"").hex()
