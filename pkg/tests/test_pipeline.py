import random
import threading
from datetime import date, datetime, timedelta, timezone

import pytest

from seclaas import accumulator as acc
from seclaas.attacks import synthetic_entries
from seclaas.crypto import decrypt_fields, verify_signature
from seclaas.model import Backend, chain_link, encode, genesis, hash_bytes
from seclaas.pipeline import AlreadySealed, ConfigMismatch, LogPipeline, NotSealedError, SealedDayError
from seclaas.storage import StorageError
from seclaas.verifier import audit_day, verify_membership, verify_sequence

from helpers import DAY, IP

CLOCK = lambda: datetime(2012, 11, 20, tzinfo=timezone.utc)


def entries(n, seed=0, ip=IP, day=DAY):
    return synthetic_entries(ip, day, n, random.Random(seed))


@pytest.fixture(params=list(Backend), ids=lambda b: b.value)
def pipe(request, tmp_path, keys, bloom_params, rsa32):
    return LogPipeline.open(tmp_path, keys, backend=request.param, bloom=bloom_params, rsa=rsa32, clock=CLOCK)


def test_first_append_uses_genesis(pipe):
    rec = pipe.append(entries(1)[0])
    assert rec.chain == hash_bytes(encode(rec.ele) + genesis(IP, DAY))


def test_three_appends_replay_by_hand(pipe, keys):
    src = entries(3, seed=1)
    pipe.append_many(src)
    stored = pipe.records(IP, DAY)
    prev = genesis(IP, DAY)
    for rec, e in zip(stored, src):
        assert rec.chain == hash_bytes(encode(rec.ele) + prev)
        assert decrypt_fields(rec.ele, keys.agency_private_key) == (e.to_ip, e.port, e.user_id)
        prev = rec.chain
    state = pipe.data.proofs.load(IP, DAY).state
    assert state.count == 3 and state.head == prev


def test_append_after_seal_rejected(pipe):
    pipe.append_many(entries(2))
    pipe.seal_day(IP, DAY)
    before = pipe.data.logs.path(IP, DAY).read_bytes()
    with pytest.raises(SealedDayError):
        pipe.append(entries(1, seed=9)[0])
    assert pipe.data.logs.path(IP, DAY).read_bytes() == before


def test_double_seal_returns_existing(pipe):
    pipe.append_many(entries(2))
    first = pipe.seal_day(IP, DAY)
    with pytest.raises(AlreadySealed) as info:
        pipe.seal_day(IP, DAY)
    assert info.value.ppl == first
    assert pipe.data.feed.read_feed() == [first]


def test_empty_day_seal_verifies(pipe, keys):
    ppl = pipe.seal_day("11.1.0.9", DAY)
    bundle = pipe.export("11.1.0.9", DAY)
    assert bundle.records == [] and bundle.state.count == 0
    if bundle.state.backend is Backend.BLOOM:
        assert not any(bundle.state.payload.bits)
    else:
        assert bundle.state.payload.value == bundle.state.payload.params.seed
    assert verify_signature(encode(bundle.state), ppl.signature, keys.provider_verifying_key)
    assert audit_day("11.1.0.9", DAY, bundle, pipe.data.feed, keys.provider_verifying_key).accepted


def test_hundred_record_day(pipe, keys):
    pipe.append_many(entries(100, seed=2))
    ppl = pipe.seal_day(IP, DAY)
    bundle = pipe.export(IP, DAY)
    assert ppl.ae_digest == hash_bytes(encode(bundle.state))
    assert all(verify_membership(r, bundle.state, bundle.witness_for(i)) for i, r in enumerate(bundle.records))
    assert verify_sequence(bundle.records, IP, DAY, sealed=bundle.state)
    assert audit_day(IP, DAY, bundle, pipe.data.feed, keys.provider_verifying_key).accepted
    if bundle.state.backend is Backend.RSA:
        assert len(bundle.witnesses) == 100


def test_chains_partition_by_ip_and_day(pipe):
    other_day = DAY + timedelta(days=1)
    pipe.append_many(entries(3, 3) + entries(2, 4, ip="11.1.0.3") + entries(4, 5, day=other_day))
    assert len(pipe.records(IP, DAY)) == 3
    assert len(pipe.records("11.1.0.3", DAY)) == 2
    assert len(pipe.records(IP, other_day)) == 4
    assert pipe.records(IP, other_day)[0].chain == chain_link(pipe.records(IP, other_day)[0].ele,
                                                              genesis(IP, other_day))
    sealed = pipe.seal_all(DAY)
    assert {str(p.ip) for p in sealed} == {IP, "11.1.0.3"}
    assert not pipe.is_sealed(IP, other_day)


def test_export_needs_seal(pipe):
    pipe.append_many(entries(1))
    with pytest.raises(NotSealedError):
        pipe.export(IP, DAY)


def test_state_survives_restart(tmp_path, keys, bloom_params):
    pipe = LogPipeline.open(tmp_path, keys, backend="bloom", bloom=bloom_params)
    pipe.append_many(entries(5, 6))
    again = LogPipeline.open(tmp_path, keys)
    assert again.config.backend is Backend.BLOOM
    assert again.data.proofs.load(IP, DAY).state == pipe.data.proofs.load(IP, DAY).state
    again.append_many(entries(1, 7))
    assert verify_sequence(again.records(IP, DAY), IP, DAY)


def test_config_fixed_at_first_use(tmp_path, keys, rsa32):
    with pytest.raises(ConfigMismatch):
        LogPipeline.open(tmp_path, keys)
    LogPipeline.open(tmp_path, keys, backend="rsa", rsa=rsa32)
    with pytest.raises(ConfigMismatch):
        LogPipeline.open(tmp_path, keys, backend="bloom")


def test_storage_failure_leaves_no_partial_state(tmp_path, keys, bloom_params):
    fail = {"on": None}

    def fault(label):
        if label == fail["on"]:
            raise StorageError(f"injected at {label}")

    pipe = LogPipeline.open(tmp_path, keys, backend="bloom", bloom=bloom_params, fault=fault)
    pipe.append_many(entries(2, 8))
    good_log = pipe.data.logs.path(IP, DAY).read_bytes()
    good_state = pipe.data.proofs.load(IP, DAY).state
    for label in ("log.partial", "log.written", "proof.tmp"):
        fail["on"] = label
        with pytest.raises(StorageError):
            pipe.append(entries(1, 9)[0])
        assert pipe.data.logs.path(IP, DAY).read_bytes() == good_log
        assert pipe.data.proofs.load(IP, DAY).state == good_state


def test_concurrent_chains(tmp_path, keys, bloom_params):
    pipe = LogPipeline.open(tmp_path, keys, backend="bloom", bloom=bloom_params)
    ips = [f"11.1.0.{i}" for i in range(10, 14)]
    work = {ip: entries(15, i, ip=ip) for i, ip in enumerate(ips)}
    threads = [threading.Thread(target=pipe.append_many, args=(work[ip],)) for ip in ips]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for ip in ips:
        recs = pipe.records(ip, DAY)
        assert len(recs) == 15 and verify_sequence(recs, ip, DAY)
        assert pipe.data.proofs.load(ip, DAY).state.count == 15


def test_same_chain_concurrent_writers_serialised(tmp_path, keys, bloom_params):
    pipe = LogPipeline.open(tmp_path, keys, backend="bloom", bloom=bloom_params)
    batches = [entries(10, s) for s in range(4)]
    threads = [threading.Thread(target=pipe.append_many, args=(b,)) for b in batches]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    recs = pipe.records(IP, DAY)
    state = pipe.data.proofs.load(IP, DAY).state
    assert len(recs) == 40 == state.count and state.head == recs[-1].chain
    assert verify_sequence(recs, IP, DAY, sealed=state)
