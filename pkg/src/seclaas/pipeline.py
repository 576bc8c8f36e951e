"""Logger: LE -> ELE -> chain link -> stored record -> accumulator fold, then daily seal.

One writer per (ip, day) chain. A record is written to its log segment
before the accumulator state that folds it, so after a crash the segment is
never behind the proof store; ``recover`` replays whatever the proof store
missed.
"""

from __future__ import annotations

import logging
import threading
from datetime import date, datetime, timezone
from ipaddress import IPv4Address
from typing import Callable, Dict, Iterable, List, Optional, Tuple

from . import accumulator as acc
from .crypto import KeyMaterial, encrypt_fields, public_pem, sign
from .model import (
    AccumulatorState,
    Backend,
    BloomParams,
    ChainedRecord,
    LogEntry,
    ProofOfPastLog,
    RsaParams,
    as_ip,
    chain_link,
    encode,
    genesis,
    hash_bytes,
)
from .storage import DataRoot, ProofEntry, RootConfig, StorageError
from .verifier import EvidenceBundle

log = logging.getLogger(__name__)


class SealedDayError(Exception):
    """Append or mutation attempted on a sealed (ip, day) chain."""


class AlreadySealed(Exception):
    def __init__(self, ppl: ProofOfPastLog):
        super().__init__(f"{ppl.ip} {ppl.day} already sealed")
        self.ppl = ppl


class ConfigMismatch(ValueError):
    pass


class NotSealedError(Exception):
    pass


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


class LogPipeline:
    def __init__(self, data: DataRoot, keys: KeyMaterial, config: RootConfig,
                 clock: Callable[[], datetime] = utc_now):
        self.data = data
        self.keys = keys
        self.config = config
        self.clock = clock
        self._leases: Dict[Tuple[IPv4Address, date], threading.Lock] = {}
        self._leases_guard = threading.Lock()

    @classmethod
    def open(cls, root, keys: KeyMaterial, backend=None, bloom: Optional[BloomParams] = None,
             rsa: Optional[RsaParams] = None, recover: bool = True, **kw) -> "LogPipeline":
        """Open (or initialise) a data root. Parameters are fixed at first use."""
        clock = kw.pop("clock", utc_now)
        data = DataRoot(root, **kw)
        cfg = data.read_config()
        if cfg is None:
            if backend is None:
                raise ConfigMismatch(f"{data.root} is not initialised and no backend was given")
            backend = Backend(backend)
            if backend is Backend.BLOOM and bloom is None:
                bloom = acc.derive_bloom_params(5000, 0.01)
            if backend is Backend.RSA and rsa is None:
                rsa = acc.generate_rsa_params(64)
            cfg = RootConfig(backend, bloom if backend is Backend.BLOOM else None,
                             rsa if backend is Backend.RSA else None)
            data.write_config(cfg)
        elif backend is not None and Backend(backend) is not cfg.backend:
            raise ConfigMismatch(f"{data.root} uses the {cfg.backend.value} backend, not {Backend(backend).value}")
        data.feed.publish_key(public_pem(keys.provider_verifying_key))
        pipe = cls(data, keys, cfg, clock)
        if recover:
            pipe.recover()
        return pipe

    # -- helpers ----------------------------------------------------------------

    def lease(self, ip, day: date) -> threading.Lock:
        key = (as_ip(ip), day)
        with self._leases_guard:
            return self._leases.setdefault(key, threading.Lock())

    def empty_state(self, ip, day: date) -> AccumulatorState:
        return acc.empty_state(self.config.backend, ip, day, bloom=self.config.bloom, rsa=self.config.rsa)

    def is_sealed(self, ip, day: date) -> bool:
        entry = self.data.proofs.load(ip, day)
        return entry is not None and entry.sealed

    def records(self, ip, day: date) -> List[ChainedRecord]:
        return self.data.logs.get_records(ip, day)

    # -- insertion ----------------------------------------------------------------

    def append(self, entry: LogEntry) -> ChainedRecord:
        ip, day = entry.from_ip, entry.day
        with self.lease(ip, day):
            current = self.data.proofs.load(ip, day)
            if current is not None and current.sealed:
                log.warning("rejected append to sealed chain %s %s", ip, day)
                raise SealedDayError(f"{ip} {day} is sealed")
            state = current.state if current is not None else self.empty_state(ip, day)
            ele = encrypt_fields(entry, self.keys.agency_public_key)
            record = ChainedRecord(ele, chain_link(ele, state.head))
            before = self.data.logs.size(ip, day)
            try:
                self.data.logs.put_record(ip, day, state.count, record)
                self.data.proofs.store(ProofEntry(acc.fold(state, record)))
            except StorageError:
                self.data.logs.truncate(ip, day, before)
                raise
            return record

    def append_many(self, entries: Iterable[LogEntry]) -> int:
        n = 0
        for entry in entries:
            self.append(entry)
            n += 1
        return n

    # -- sealing ------------------------------------------------------------------

    def seal_day(self, ip, day: date) -> ProofOfPastLog:
        ip = as_ip(ip)
        with self.lease(ip, day):
            entry = self.data.proofs.load(ip, day)
            if entry is not None and entry.sealed:
                if self.data.feed.find(ip, day) is None:
                    self.data.feed.publish_ppl(entry.ppl)
                raise AlreadySealed(entry.ppl)
            state = entry.state if entry is not None else self.empty_state(ip, day)
            witnesses = None
            if state.backend is Backend.RSA:
                records = self.data.logs.get_records(ip, day)
                if len(records) != state.count:
                    raise StorageError(f"{ip} {day}: {len(records)} records but accumulator folded {state.count}")
                witnesses = acc.rsa_witnesses(records, state.payload.params)
            payload = encode(state)
            signature = sign(payload, self.keys.provider_signing_key)
            ppl = ProofOfPastLog(ip, day, hash_bytes(payload), signature, self.clock())
            self.data.proofs.store(ProofEntry(state, True, witnesses, ppl))
            self.data.feed.publish_ppl(ppl)
            return ppl

    def seal_all(self, day: date) -> List[ProofOfPastLog]:
        """Seal every chain with records on ``day`` that is not sealed yet."""
        out = []
        for ip, d in self.data.logs.segments():
            if d == day and not self.is_sealed(ip, d):
                out.append(self.seal_day(ip, d))
        return out

    def export(self, ip, day: date) -> EvidenceBundle:
        """Records, witnesses, sealed state and proof for one sealed day."""
        entry = self.data.proofs.load(ip, day)
        if entry is None or not entry.sealed:
            raise NotSealedError(f"{as_ip(ip)} {day} has not been sealed")
        return EvidenceBundle(ip, day, entry.state, self.records(ip, day), entry.witnesses, entry.ppl)

    # -- recovery -------------------------------------------------------------------

    def recover(self) -> List[str]:
        """Bring log and proof stores back into agreement after a crash."""
        notes = []
        self.data.proofs.clear_stale()
        for ip, day in self.data.logs.segments():
            with self.lease(ip, day):
                scan = self.data.logs.recover(ip, day)
                if scan.damaged:
                    notes.append(f"{ip} {day}: truncated torn tail ({scan.error})")
                records = scan.records
                entry = self.data.proofs.load(ip, day)
                if entry is not None and entry.sealed:
                    if entry.state.count != len(records):
                        raise StorageError(f"sealed chain {ip} {day} lost records on disk")
                    if self.data.feed.find(ip, day) is None:
                        self.data.feed.publish_ppl(entry.ppl)
                        notes.append(f"{ip} {day}: republished sealed proof")
                    continue
                state = entry.state if entry is not None else self.empty_state(ip, day)
                if state.count == len(records) and state.head == _head(records, ip, day):
                    continue
                if state.count < len(records) and state.head == _head(records[:state.count], ip, day):
                    todo = records[state.count:]
                else:
                    state, todo = self.empty_state(ip, day), records
                for rec in todo:
                    state = acc.fold(state, rec)
                self.data.proofs.store(ProofEntry(state))
                notes.append(f"{ip} {day}: folded {len(todo)} record(s) into accumulator")
        for note in notes:
            log.info("recovery: %s", note)
        return notes


def _head(records: List[ChainedRecord], ip, day: date) -> bytes:
    return records[-1].chain if records else genesis(ip, day)
