"""Tamper-evident storage and auditing of network logs.

Records are partially encrypted for investigating agencies, hash-chained per
(source IP, day), folded into a per-day accumulator (Bloom filter or RSA
one-way accumulator) and sealed by a signed daily proof of past log.
"""

from .model import (
    AccumulatorState,
    Backend,
    ChainedRecord,
    EncryptedLogEntry,
    LogEntry,
    MembershipWitness,
    ProofOfPastLog,
    encode,
    decode,
    hash_bytes,
)
from .pipeline import LogPipeline
from .verifier import AuditReport, EvidenceBundle, Reason, audit_day

__version__ = "0.1.0"
