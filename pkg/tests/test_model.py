import hashlib
import json
import struct
from datetime import date, datetime, timedelta, timezone
from ipaddress import IPv4Address

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seclaas.model import (
    DIGEST_SIZE,
    AccumulatorState,
    Backend,
    BloomParams,
    BloomPayload,
    ChainedRecord,
    EncodingError,
    EncryptedLogEntry,
    LogEntry,
    MembershipWitness,
    ProofOfPastLog,
    RsaParams,
    RsaPayload,
    chain_link,
    decode,
    encode,
    genesis,
    hash_bytes,
    to_hex,
)

from conftest import FIXTURES

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
T0 = datetime(2012, 11, 19, 13, 43, 43, 222391, tzinfo=timezone.utc)

ips = st.integers(0, 2**32 - 1).map(IPv4Address)
instants = st.integers(0, 4_000_000_000_000_000).map(lambda us: EPOCH + timedelta(microseconds=us))
users = st.text(min_size=1, max_size=20)
log_entries = st.builds(LogEntry, ips, ips, instants, st.integers(0, 65535), users)
eles = st.builds(EncryptedLogEntry, st.binary(min_size=1, max_size=64), ips, instants)
records = st.builds(ChainedRecord, eles, st.binary(min_size=32, max_size=32))


def fixed_record():
    ele = EncryptedLogEntry(bytes(range(1, 41)), "11.1.0.5", T0)
    return ChainedRecord(ele, chain_link(ele, genesis("11.1.0.5", date(2012, 11, 19))))


# -- hashing --------------------------------------------------------------------

def test_hash_vectors():
    assert to_hex(hash_bytes(b"")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    assert to_hex(hash_bytes(b"abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


@given(st.binary(max_size=256))
def test_digest_length_fixed(data):
    assert len(hash_bytes(data)) == DIGEST_SIZE


def test_golden_record_digest():
    golden = json.loads((FIXTURES / "golden.json").read_text())
    assert hash_bytes(encode(fixed_record())).hex() == golden["record_digest"]
    assert genesis("11.1.0.5", date(2012, 11, 19)).hex() == golden["genesis_11.1.0.5_2012-11-19"]


# -- byte layout, checked against a hand-built oracle ----------------------------------

def _us(ts):
    return (ts - EPOCH) // timedelta(microseconds=1)


def test_log_entry_layout():
    e = LogEntry("11.1.0.5", "74.125.130.106", T0, 80, "bob")
    expect = (b"\x01" + IPv4Address("11.1.0.5").packed + IPv4Address("74.125.130.106").packed
              + struct.pack(">q", _us(T0)) + struct.pack(">H", 80) + struct.pack(">I", 3) + b"bob")
    assert encode(e) == expect


def test_record_and_chain_layout():
    rec = fixed_record()
    ele_bytes = (b"\x02" + struct.pack(">I", 40) + bytes(range(1, 41))
                 + IPv4Address("11.1.0.5").packed + struct.pack(">q", _us(T0)))
    gen = hashlib.sha256(IPv4Address("11.1.0.5").packed
                         + struct.pack(">I", date(2012, 11, 19).toordinal())).digest()
    assert genesis("11.1.0.5", date(2012, 11, 19)) == gen
    assert rec.chain == hashlib.sha256(ele_bytes + gen).digest()
    assert encode(rec) == b"\x03" + struct.pack(">I", len(ele_bytes)) + ele_bytes + rec.chain


def test_genesis_separates_chains():
    d = date(2012, 11, 19)
    assert genesis("11.1.0.5", d) != genesis("11.1.0.3", d)
    assert genesis("11.1.0.5", d) != genesis("11.1.0.5", d + timedelta(days=1))


# -- encode / decode ----------------------------------------------------------------

def test_encode_deterministic_and_port_sensitive():
    a = LogEntry("11.1.0.5", "74.125.130.106", T0, 80, "u")
    assert encode(a) == encode(LogEntry("11.1.0.5", "74.125.130.106", T0, 80, "u"))
    assert encode(a) != encode(LogEntry("11.1.0.5", "74.125.130.106", T0, 81, "u"))


@given(st.one_of(log_entries, eles, records))
def test_round_trip(value):
    assert decode(encode(value)) == value


def test_round_trip_states_and_proofs():
    bp = BloomParams(10, 0.1, 48, 3)
    rp = RsaParams(253, 2, 4)
    head = bytes(32)
    values = [
        AccumulatorState(Backend.BLOOM, "11.1.0.5", date(2012, 11, 19), 0, head, BloomPayload(bp, bytes(6))),
        AccumulatorState(Backend.RSA, "11.1.0.5", date(2012, 11, 19), 2, head, RsaPayload(rp, 131)),
        ProofOfPastLog("11.1.0.5", date(2012, 11, 19), bytes(32), b"sig", T0),
        MembershipWitness(3, 32),
    ]
    for v in values:
        assert decode(encode(v)) == v


@settings(max_examples=10_000)
@given(log_entries, log_entries)
def test_encoding_injective(a, b):
    if a != b:
        assert encode(a) != encode(b)


@settings(max_examples=2_000)
@given(st.one_of(log_entries, eles, records), st.one_of(log_entries, eles, records))
def test_encoding_injective_across_types(a, b):
    if a != b:
        assert encode(a) != encode(b)


@given(st.binary(max_size=200))
def test_decode_rejects_garbage_cleanly(data):
    try:
        decode(data)
    except EncodingError:
        pass


def test_decode_rejects_trailing_bytes():
    with pytest.raises(EncodingError):
        decode(encode(fixed_record()) + b"\x00")


@given(st.lists(eles, max_size=8), ips)
def test_chain_linkage(ele_list, ip):
    d = date(2012, 11, 19)
    prev = genesis(ip, d)
    for ele in ele_list:
        link = chain_link(ele, prev)
        assert link == hashlib.sha256(encode(ele) + prev).digest()
        assert len(link) == DIGEST_SIZE
        prev = link


def test_domain_invariants():
    with pytest.raises(ValueError):
        LogEntry("11.1.0.5", "1.1.1.1", T0, 80, "")
    with pytest.raises(ValueError):
        LogEntry("11.1.0.5", "1.1.1.1", T0, 70000, "u")
    with pytest.raises(ValueError):
        LogEntry("11.1.0.999", "1.1.1.1", T0, 80, "u")
    with pytest.raises(ValueError):
        EncryptedLogEntry(b"", "11.1.0.5", T0)
    with pytest.raises(ValueError):
        ChainedRecord(EncryptedLogEntry(b"x", "11.1.0.5", T0), b"short")


def test_offset_timestamps_normalised_to_utc():
    local = datetime(2012, 11, 19, 14, 43, 43, tzinfo=timezone(timedelta(hours=1)))
    e = LogEntry("11.1.0.5", "1.1.1.1", local, 80, "u")
    assert e.timestamp == datetime(2012, 11, 19, 13, 43, 43, tzinfo=timezone.utc)
