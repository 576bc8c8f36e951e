"""Auditor side: proof validity, per-record membership and chain order.

The audit never decrypts anything; it works on ciphertext records, the
sealed accumulator state the provider hands over, and the proof taken from
the public feed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import date
from ipaddress import IPv4Address
from typing import Iterable, List, Optional, Sequence, Union

from . import accumulator as acc
from .crypto import verify_signature
from .model import (
    AccumulatorState,
    Backend,
    ChainedRecord,
    MembershipWitness,
    ProofOfPastLog,
    as_ip,
    chain_link,
    decode,
    encode,
    genesis,
    hash_bytes,
)
from .storage import (
    b64,
    canonical_json,
    ppl_from_json,
    ppl_to_json,
    state_from_json,
    state_to_json,
    unb64,
    witness_from_json,
    witness_to_json,
)


class Reason(str, enum.Enum):
    OK = "ok"
    BAD_SIGNATURE = "bad-signature"
    DIGEST_MISMATCH = "digest-mismatch"
    UNPUBLISHED_DAY = "unpublished-day"
    NOT_A_MEMBER = "not-a-member"
    WITNESS_ABSENT = "witness-absent"
    SEQUENCE_BREAK = "sequence-break"
    INCOMPLETE = "incomplete"
    WRONG_SCOPE = "wrong-scope"


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: Reason = Reason.OK
    index: Optional[int] = None

    def __bool__(self):
        return self.ok


ACCEPT = Verdict(True)


def verify_ppl(ppl: ProofOfPastLog, claimed: AccumulatorState, provider_key) -> Verdict:
    """Digest first, then signature, so a doctored payload reads as digest-mismatch."""
    payload = encode(claimed)
    if hash_bytes(payload) != ppl.ae_digest:
        return Verdict(False, Reason.DIGEST_MISMATCH)
    if not verify_signature(payload, ppl.signature, provider_key):
        return Verdict(False, Reason.BAD_SIGNATURE)
    return ACCEPT


def verify_membership(record: ChainedRecord, state: AccumulatorState,
                      witness: Optional[MembershipWitness] = None) -> Verdict:
    if state.backend is Backend.BLOOM:
        ok = acc.bloom_contains(state, record)
    else:
        if witness is None:
            return Verdict(False, Reason.WITNESS_ABSENT)
        ok = acc.rsa_verify_membership(record, witness, state.payload.value, state.payload.params)
    return ACCEPT if ok else Verdict(False, Reason.NOT_A_MEMBER)


def verify_sequence(records: Sequence[ChainedRecord], ip, day: date,
                    sealed: Optional[AccumulatorState] = None) -> Verdict:
    """Replay the chain from the genesis of (ip, day).

    With a sealed state, the presented chain must also end exactly at the
    sealed head after ``sealed.count`` records.
    """
    prev = genesis(ip, day)
    for i, rec in enumerate(records):
        if chain_link(rec.ele, prev) != rec.chain:
            return Verdict(False, Reason.SEQUENCE_BREAK, i)
        prev = rec.chain
    if sealed is not None:
        if len(records) < sealed.count:
            return Verdict(False, Reason.INCOMPLETE, len(records))
        if len(records) > sealed.count:
            return Verdict(False, Reason.SEQUENCE_BREAK, sealed.count)
        if prev != sealed.head:
            return Verdict(False, Reason.SEQUENCE_BREAK, max(len(records) - 1, 0))
    return ACCEPT


# -- evidence bundle ---------------------------------------------------------------

@dataclass
class EvidenceBundle:
    """What an investigator receives for one (ip, day) and hands to the court."""

    ip: IPv4Address
    day: date
    state: AccumulatorState
    records: List[ChainedRecord]
    witnesses: Optional[List[Optional[MembershipWitness]]] = None
    ppl: Optional[ProofOfPastLog] = None

    def __post_init__(self):
        self.ip = as_ip(self.ip)

    def witness_for(self, position: int) -> Optional[MembershipWitness]:
        if self.witnesses is None or position >= len(self.witnesses):
            return None
        return self.witnesses[position]

    def to_json(self) -> dict:
        size = self.state.payload.params.value_size if self.state.backend is Backend.RSA else 0
        return {
            "version": 1,
            "ip": str(self.ip),
            "day": self.day.isoformat(),
            "state": state_to_json(self.state),
            "records": [b64(encode(r)) for r in self.records],
            "witnesses": None if self.witnesses is None else [
                None if w is None else witness_to_json(w, size) for w in self.witnesses
            ],
            "ppl": None if self.ppl is None else ppl_to_json(self.ppl),
        }

    def dumps(self) -> str:
        return canonical_json(self.to_json())

    @classmethod
    def from_json(cls, doc: dict) -> "EvidenceBundle":
        records = [decode(unb64(r)) for r in doc["records"]]
        if not all(isinstance(r, ChainedRecord) for r in records):
            raise ValueError("bundle holds a non-record entry")
        ws = doc.get("witnesses")
        return cls(
            ip=IPv4Address(doc["ip"]),
            day=date.fromisoformat(doc["day"]),
            state=state_from_json(doc["state"]),
            records=records,
            witnesses=None if ws is None else [None if w is None else witness_from_json(w) for w in ws],
            ppl=None if doc.get("ppl") is None else ppl_from_json(doc["ppl"]),
        )


# -- full audit -------------------------------------------------------------------------

@dataclass
class AuditReport:
    ip: IPv4Address
    day: date
    accepted: bool
    reason: Reason
    ppl: Verdict
    membership: List[Verdict] = field(default_factory=list)
    sequence: Verdict = ACCEPT
    record_count: int = 0

    @property
    def failed_records(self) -> List[int]:
        return [i for i, v in enumerate(self.membership) if not v.ok]

    def to_json(self) -> dict:
        return {
            "ip": str(self.ip),
            "day": self.day.isoformat(),
            "accepted": self.accepted,
            "reason": self.reason.value,
            "ppl": self.ppl.reason.value,
            "record_count": self.record_count,
            "membership_failures": [
                {"index": i, "reason": self.membership[i].reason.value} for i in self.failed_records
            ],
            "sequence": {"reason": self.sequence.reason.value, "index": self.sequence.index},
        }

    def dumps(self) -> str:
        return canonical_json(self.to_json())

    def render(self) -> str:
        lines = [
            f"audit {self.ip} {self.day}: {'ACCEPT' if self.accepted else 'REJECT'} ({self.reason.value})",
            f"  proof of past log : {self.ppl.reason.value}",
            f"  records presented : {self.record_count}",
            f"  membership        : {self.record_count - len(self.failed_records)}/{self.record_count} verified",
        ]
        for i in self.failed_records[:10]:
            lines.append(f"    record {i}: {self.membership[i].reason.value}")
        seq = self.sequence
        lines.append(f"  sequence          : {seq.reason.value}" + (f" at index {seq.index}" if seq.index is not None else ""))
        return "\n".join(lines)


def _find_ppl(feed: Union[Iterable[ProofOfPastLog], object], ip, day) -> Optional[ProofOfPastLog]:
    if hasattr(feed, "find"):
        return feed.find(ip, day)
    for ppl in feed:
        if ppl.ip == ip and ppl.day == day:
            return ppl
    return None


def audit_day(ip, day: date, bundle: EvidenceBundle, feed, provider_key) -> AuditReport:
    """PPL check, then membership of every record, then chain order."""
    ip = as_ip(ip)
    n = len(bundle.records)
    ppl = _find_ppl(feed, ip, day)
    if ppl is None:
        v = Verdict(False, Reason.UNPUBLISHED_DAY)
        return AuditReport(ip, day, False, v.reason, v, record_count=n)
    state = bundle.state
    if state.ip != ip or state.day != day:
        v = Verdict(False, Reason.WRONG_SCOPE)
        return AuditReport(ip, day, False, v.reason, v, record_count=n)
    ppl_v = verify_ppl(ppl, state, provider_key)
    if not ppl_v:
        return AuditReport(ip, day, False, ppl_v.reason, ppl_v, record_count=n)
    membership = [verify_membership(r, state, bundle.witness_for(i)) for i, r in enumerate(bundle.records)]
    seq = verify_sequence(bundle.records, ip, day, sealed=state)
    bad = next((v for v in membership if not v.ok), None)
    if bad is not None:
        reason = bad.reason
    elif not seq.ok:
        reason = seq.reason
    else:
        reason = Reason.OK
    return AuditReport(ip, day, reason is Reason.OK, reason, ppl_v, membership, seq, n)
