"""Executable threat model: collusion attacks against sealed honest days.

Each scenario turns an honest (bundle, feed) pair into what a dishonest
provider or investigator would present, and states which integrity or
confidentiality properties it exercises and which audit reasons count as a
correct diagnosis.
"""

from __future__ import annotations

import enum
import random
import tempfile
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta, timezone
from ipaddress import IPv4Address
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from . import accumulator as acc
from .crypto import KeyMaterial, encrypt_fields, generate_keypair, sign
from .model import (
    AccumulatorState,
    Backend,
    BloomParams,
    ChainedRecord,
    LogEntry,
    MembershipWitness,
    ProofOfPastLog,
    RsaParams,
    RsaPayload,
    BloomPayload,
    chain_link,
    genesis,
    encode,
    hash_bytes,
)
from .pipeline import LogPipeline
from .storage import canonical_json
from .verifier import EvidenceBundle, Reason, audit_day, verify_membership


class Scenario(str, enum.Enum):
    HONEST = "Honest"
    REMOVE_ENTRY = "RemoveEntry"
    REORDER_ENTRIES = "ReorderEntries"
    REWRITE_CHAIN_AFTER_REORDER = "RewriteChainAfterReorder"
    PLANT_FAKE_ENTRY = "PlantFakeEntry"
    SUBSTITUTE_FAKE_PPL = "SubstituteFakePPL"
    WRONG_KEY_PPL = "WrongKeyPPL"
    ALTER_SEALED_PAYLOAD = "AlterSealedPayload"
    CIPHERTEXT_INSPECTION = "CiphertextInspection"


# Property codes. I1/I2/I3: once a day is sealed the provider cannot drop,
# reorder or inject records. I4/I5/I6: the same three guarantees hold against
# an investigator presenting evidence. I7: a published proof cannot be
# disowned. C1: proofs leak no log content. C2: stored records are opaque
# to anyone without the agency key.
PROPERTIES: Dict[Scenario, Tuple[str, ...]] = {
    Scenario.HONEST: (),
    Scenario.REMOVE_ENTRY: ("I1", "I4"),
    Scenario.REORDER_ENTRIES: ("I2", "I5"),
    Scenario.REWRITE_CHAIN_AFTER_REORDER: ("I2", "I5"),
    Scenario.PLANT_FAKE_ENTRY: ("I3", "I6"),
    Scenario.SUBSTITUTE_FAKE_PPL: ("I7",),
    Scenario.WRONG_KEY_PPL: ("I7",),
    Scenario.ALTER_SEALED_PAYLOAD: ("I7",),
    Scenario.CIPHERTEXT_INSPECTION: ("C1", "C2"),
}

ATTACKS = tuple(s for s in Scenario if s not in (Scenario.HONEST, Scenario.CIPHERTEXT_INSPECTION))


class ScenarioSkipped(Exception):
    pass


# -- fixtures ---------------------------------------------------------------------

@dataclass
class DayFixture:
    """A sealed honest day plus the plaintexts that went into it."""

    name: str
    backend: Backend
    bundle: EvidenceBundle
    ppl: ProofOfPastLog
    keys: KeyMaterial
    entries: List[LogEntry]

    @property
    def feed(self) -> List[ProofOfPastLog]:
        return [self.ppl]


def synthetic_entries(ip, day: date, n: int, rng: random.Random) -> List[LogEntry]:
    """n outbound events from ``ip`` spread over ``day`` in time order."""
    start = datetime(day.year, day.month, day.day, tzinfo=timezone.utc)
    offsets = sorted(rng.randrange(0, 86_400_000_000) for _ in range(n))
    out = []
    for us in offsets:
        dst = IPv4Address(rng.randrange(0x01000000, 0xDF000000))
        out.append(LogEntry(ip, dst, start + timedelta(microseconds=us),
                            rng.choice((22, 53, 80, 443, 8080, rng.randrange(1024, 65536))),
                            f"user-{rng.getrandbits(48):012x}"))
    return out


def build_day(root, keys: KeyMaterial, backend: Backend, n: int, seed: int,
              bloom: Optional[BloomParams] = None, rsa: Optional[RsaParams] = None,
              ip: str = "11.1.0.5", day: date = date(2012, 11, 19), name: Optional[str] = None) -> DayFixture:
    rng = random.Random(seed)
    backend = Backend(backend)
    if backend is Backend.BLOOM and bloom is None:
        bloom = acc.derive_bloom_params(5000, 0.01)
    if backend is Backend.RSA and rsa is None:
        rsa = acc.generate_rsa_params(32, random.Random(seed))
    pipe = LogPipeline.open(root, keys, backend=backend, bloom=bloom, rsa=rsa,
                            clock=lambda: datetime(day.year, day.month, day.day, 23, 59, 59, tzinfo=timezone.utc)
                            + timedelta(seconds=1))
    entries = synthetic_entries(ip, day, n, rng)
    pipe.append_many(entries)
    ppl = pipe.seal_day(ip, day)
    return DayFixture(name or f"{backend.value}-n{n}-s{seed}", backend, pipe.export(ip, day), ppl, keys, entries)


def standard_fixtures(keys: KeyMaterial, backend: Backend, sizes: Sequence[int] = (3, 5, 8, 13, 21),
                      seed: int = 7, **params) -> List[DayFixture]:
    out = []
    for i, n in enumerate(sizes):
        with tempfile.TemporaryDirectory() as tmp:
            out.append(build_day(tmp, keys, backend, n, seed + i, day=date(2012, 11, 19) + timedelta(days=i),
                                 **params))
    return out


# -- mutations ----------------------------------------------------------------------

@dataclass
class Presentation:
    scenario: Scenario
    bundle: EvidenceBundle
    feed: List[ProofOfPastLog]
    expected: FrozenSet[Reason]
    note: str = ""


def _pairs(bundle: EvidenceBundle) -> List[Tuple[ChainedRecord, Optional[MembershipWitness]]]:
    return [(r, bundle.witness_for(i)) for i, r in enumerate(bundle.records)]


def _with_pairs(bundle: EvidenceBundle, pairs, state: Optional[AccumulatorState] = None) -> EvidenceBundle:
    witnesses = None if bundle.witnesses is None else [w for _, w in pairs]
    return replace(bundle, records=[r for r, _ in pairs], witnesses=witnesses, state=state or bundle.state)


def _rechain(records: List[ChainedRecord], start: int, prev: bytes) -> List[ChainedRecord]:
    out = list(records[:start])
    for rec in records[start:]:
        rec = ChainedRecord(rec.ele, chain_link(rec.ele, prev))
        out.append(rec)
        prev = rec.chain
    return out


def fake_record(fixture: DayFixture, prev_chain: bytes, rng: random.Random) -> ChainedRecord:
    """A well-formed record that was never sealed, chained after ``prev_chain``."""
    b = fixture.bundle
    start = datetime(b.day.year, b.day.month, b.day.day, tzinfo=timezone.utc)
    forged = LogEntry(b.ip, IPv4Address(rng.randrange(0x01000000, 0xDF000000)),
                      start + timedelta(microseconds=rng.randrange(86_400_000_000)),
                      rng.randrange(1, 65536), f"framed-{rng.getrandbits(32):08x}")
    ele = encrypt_fields(forged, fixture.keys.agency_public_key)
    return ChainedRecord(ele, chain_link(ele, prev_chain))


def _forged_witness(state: AccumulatorState, rng: random.Random) -> Optional[MembershipWitness]:
    if state.backend is not Backend.RSA:
        return None
    return MembershipWitness(state.count, rng.randrange(1, state.payload.params.modulus))


def _attacker_key():
    return generate_keypair()


def mutate(scenario: Scenario, fixture: DayFixture, seed: int = 0, attacker_key=None) -> Presentation:
    rng = random.Random(f"{scenario.value}:{fixture.name}:{seed}")
    b = fixture.bundle
    n = len(b.records)
    pairs = _pairs(b)
    feed = list(fixture.feed)
    s = Scenario(scenario)

    if s in (Scenario.HONEST, Scenario.CIPHERTEXT_INSPECTION):
        return Presentation(s, b, feed, frozenset({Reason.OK}))

    if s is Scenario.REMOVE_ENTRY:
        if n == 0:
            raise ScenarioSkipped("nothing to remove from an empty day")
        i = 1 if n == 3 else rng.randrange(n)
        del pairs[i]
        expected = Reason.INCOMPLETE if i == n - 1 else Reason.SEQUENCE_BREAK
        return Presentation(s, _with_pairs(b, pairs), feed, frozenset({expected}), f"removed record {i}")

    if s in (Scenario.REORDER_ENTRIES, Scenario.REWRITE_CHAIN_AFTER_REORDER):
        if n < 2:
            raise ScenarioSkipped("reordering needs at least two records")
        i = rng.randrange(n - 1)
        pairs[i], pairs[i + 1] = pairs[i + 1], pairs[i]
        if s is Scenario.REORDER_ENTRIES:
            return Presentation(s, _with_pairs(b, pairs), feed, frozenset({Reason.SEQUENCE_BREAK}),
                                f"swapped records {i} and {i + 1}")
        prev = pairs[i - 1][0].chain if i else genesis(b.ip, b.day)
        rechained = _rechain([r for r, _ in pairs], i, prev)
        pairs = [(r, w) for r, (_, w) in zip(rechained, pairs)]
        # Bloom may pass a rewritten record by false positive; the sealed head still breaks.
        expected = {Reason.NOT_A_MEMBER}
        if b.state.backend is Backend.BLOOM:
            expected.add(Reason.SEQUENCE_BREAK)
        return Presentation(s, _with_pairs(b, pairs), feed, frozenset(expected),
                            f"swapped {i} and {i + 1}, rewrote chain from {i}")

    if s is Scenario.PLANT_FAKE_ENTRY:
        prev = b.records[-1].chain if n else genesis(b.ip, b.day)
        fake = fake_record(fixture, prev, rng)
        pairs.append((fake, _forged_witness(b.state, rng)))
        expected = {Reason.NOT_A_MEMBER}
        if b.state.backend is Backend.BLOOM:
            expected.add(Reason.SEQUENCE_BREAK)
        return Presentation(s, _with_pairs(b, pairs), feed, frozenset(expected), "appended forged record")

    if s is Scenario.SUBSTITUTE_FAKE_PPL:
        # The provider publishes a proof over a day that includes a planted record.
        key = attacker_key or _attacker_key()
        prev = b.records[-1].chain if n else genesis(b.ip, b.day)
        fake = fake_record(fixture, prev, rng)
        records = list(b.records) + [fake]
        fake_state = acc.fold(b.state, fake)
        witnesses = None
        if fake_state.backend is Backend.RSA:
            witnesses = acc.rsa_witnesses(records, fake_state.payload.params)
        payload = encode(fake_state)
        fake_ppl = ProofOfPastLog(b.ip, b.day, hash_bytes(payload), sign(payload, key), fixture.ppl.published_at)
        forged = replace(b, state=fake_state, records=records, witnesses=witnesses, ppl=fake_ppl)
        return Presentation(s, forged, [fake_ppl], frozenset({Reason.BAD_SIGNATURE}), "feed entry re-signed")

    if s is Scenario.WRONG_KEY_PPL:
        key = attacker_key or _attacker_key()
        payload = encode(b.state)
        wrong = replace(fixture.ppl, signature=sign(payload, key))
        return Presentation(s, replace(b, ppl=wrong), [wrong], frozenset({Reason.BAD_SIGNATURE}),
                            "genuine payload signed with a foreign key")

    if s is Scenario.ALTER_SEALED_PAYLOAD:
        st = b.state
        if st.backend is Backend.BLOOM:
            bits = bytearray(st.payload.bits)
            pos = rng.randrange(st.payload.params.m)
            bits[pos >> 3] ^= 1 << (pos & 7)
            altered = replace(st, payload=BloomPayload(st.payload.params, bytes(bits)))
        else:
            params = st.payload.params
            value = st.payload.value
            new = value
            while new == value:
                new = rng.randrange(1, params.modulus)
            altered = replace(st, payload=RsaPayload(params, new))
        return Presentation(s, replace(b, state=altered), feed, frozenset({Reason.DIGEST_MISMATCH}),
                            "sealed accumulator altered after publication")

    raise ValueError(f"unknown scenario {scenario}")


# -- confidentiality surrogate ------------------------------------------------------------

def plaintext_needles(entries: Iterable[LogEntry]) -> List[bytes]:
    needles = []
    for e in entries:
        needles += [e.user_id.encode(), str(e.to_ip).encode(), e.to_ip.packed]
    return needles


def leaks(fixture: DayFixture) -> List[str]:
    """Plaintext fragments of encrypted fields found in stored ciphertext or proofs."""
    needles = plaintext_needles(fixture.entries)
    haystacks = {"proof": encode(fixture.bundle.state)}
    if fixture.bundle.witnesses:
        haystacks["witnesses"] = b"".join(w.value.to_bytes(64, "big") for w in fixture.bundle.witnesses)
    for i, r in enumerate(fixture.bundle.records):
        haystacks[f"record[{i}].ciphertext"] = r.ele.ciphertext
    found = []
    for where, hay in haystacks.items():
        for needle in needles:
            if needle in hay:
                found.append(f"{needle!r} in {where}")
    return found


# -- matrix -------------------------------------------------------------------------

@dataclass
class MatrixRow:
    fixture: str
    backend: str
    scenario: str
    properties: Tuple[str, ...]
    accepted: bool
    reason: str
    expected: Tuple[str, ...]
    passed: bool
    note: str = ""

    def to_json(self) -> dict:
        return {
            "fixture": self.fixture, "backend": self.backend, "scenario": self.scenario,
            "properties": list(self.properties), "accepted": self.accepted, "reason": self.reason,
            "expected": list(self.expected), "passed": self.passed, "note": self.note,
        }


@dataclass
class MatrixReport:
    rows: List[MatrixRow] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(r.passed for r in self.rows)

    def to_json(self) -> dict:
        return {"passed": self.passed, "rows": [r.to_json() for r in self.rows], "skipped": self.skipped}

    def dumps(self) -> str:
        return canonical_json(self.to_json())

    def summary(self) -> str:
        total = len(self.rows)
        ok = sum(r.passed for r in self.rows)
        lines = [f"{ok}/{total} expected verdicts ({'PASS' if self.passed else 'FAIL'})"]
        for r in self.rows:
            if not r.passed:
                lines.append(f"  {r.fixture} {r.scenario}: got {r.reason}, expected {'/'.join(r.expected)}")
        return "\n".join(lines)


def run_scenario(fixture: DayFixture, scenario: Scenario, seed: int = 0, attacker_key=None) -> MatrixRow:
    props = PROPERTIES[scenario]
    if scenario is Scenario.CIPHERTEXT_INSPECTION:
        found = leaks(fixture)
        return MatrixRow(fixture.name, fixture.backend.value, scenario.value, props, not found,
                         "no-leak" if not found else "leak", ("no-leak",), not found, "; ".join(found[:3]))
    pres = mutate(scenario, fixture, seed, attacker_key)
    b = pres.bundle
    report = audit_day(b.ip, b.day, b, pres.feed, fixture.keys.provider_verifying_key)
    expected = tuple(sorted(r.value for r in pres.expected))
    return MatrixRow(fixture.name, fixture.backend.value, scenario.value, props, report.accepted,
                     report.reason.value, expected, report.reason in pres.expected, pres.note)


def run_matrix(fixtures: Iterable[DayFixture], scenarios: Iterable[Scenario] = tuple(Scenario),
               seed: int = 0) -> MatrixReport:
    report = MatrixReport()
    attacker = _attacker_key()
    scenarios = list(scenarios)
    for fx in fixtures:
        for sc in scenarios:
            try:
                report.rows.append(run_scenario(fx, Scenario(sc), seed, attacker))
            except ScenarioSkipped as exc:
                report.skipped.append(f"{fx.name} {Scenario(sc).value}: {exc}")
    return report


def plant_acceptance(fixture: DayFixture, trials: int, seed: int = 0) -> Tuple[float, float]:
    """Rates at which planted records pass membership alone, and the full audit."""
    rng = random.Random(seed)
    b = fixture.bundle
    prev = b.records[-1].chain if b.records else genesis(b.ip, b.day)
    member_hits = audit_hits = 0
    for _ in range(trials):
        fake = fake_record(fixture, prev, rng)
        if verify_membership(fake, b.state, _forged_witness(b.state, rng)).ok:
            member_hits += 1
            planted = replace(b, records=list(b.records) + [fake],
                              witnesses=None if b.witnesses is None else list(b.witnesses) + [None])
            if audit_day(b.ip, b.day, planted, fixture.feed, fixture.keys.provider_verifying_key).accepted:
                audit_hits += 1
    return member_hits / trials, audit_hits / trials


def default_matrix(keys: Optional[KeyMaterial] = None, sizes=(3, 5, 8, 13, 21), seed: int = 7,
                   rsa_bits: int = 64) -> MatrixReport:
    from .crypto import generate_keys

    keys = keys or generate_keys()
    fixtures = standard_fixtures(keys, Backend.BLOOM, sizes, seed)
    fixtures += standard_fixtures(keys, Backend.RSA, sizes, seed,
                                  rsa=acc.generate_rsa_params(rsa_bits, random.Random(seed)))
    return run_matrix(fixtures, tuple(Scenario), seed)
