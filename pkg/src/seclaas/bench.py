"""Timing of insertion, sealing and per-record verification against day size,
plus the storage footprint of sealed proofs."""

from __future__ import annotations

import csv
import io
import random
import tempfile
import time
from statistics import median
from dataclasses import asdict, dataclass, replace
from datetime import date
from typing import List, Optional, Sequence

from . import accumulator as acc
from .attacks import synthetic_entries
from .crypto import KeyMaterial, generate_keys
from .model import Backend, BloomParams, RsaParams
from .pipeline import LogPipeline
from .verifier import verify_membership

BENCH_IP = "11.1.0.5"
BENCH_DAY = date(2012, 11, 19)


@dataclass
class BenchRow:
    backend: str
    size: int
    insert_s: float
    seal_s: float
    verify_per_record_s: float
    proof_bytes: int
    witness_bytes: int


def bench_one(keys: KeyMaterial, backend: Backend, size: int, bloom: Optional[BloomParams] = None,
              rsa: Optional[RsaParams] = None, seed: int = 0, verify_sample: int = 500) -> BenchRow:
    rng = random.Random(seed)
    entries = synthetic_entries(BENCH_IP, BENCH_DAY, size, rng)
    with tempfile.TemporaryDirectory() as tmp:
        pipe = LogPipeline.open(tmp, keys, backend=backend, bloom=bloom, rsa=rsa)
        t0 = time.perf_counter()
        pipe.append_many(entries)
        t1 = time.perf_counter()
        pipe.seal_day(BENCH_IP, BENCH_DAY)
        t2 = time.perf_counter()
        bundle = pipe.export(BENCH_IP, BENCH_DAY)
    picks = [rng.randrange(size) for _ in range(min(verify_sample, size))] if size else []
    t3 = time.perf_counter()
    for i in picks:
        verify_membership(bundle.records[i], bundle.state, bundle.witness_for(i))
    t4 = time.perf_counter()
    state = bundle.state
    if state.backend is Backend.BLOOM:
        proof_bytes, witness_bytes = len(state.payload.bits), 0
    else:
        proof_bytes = state.payload.params.value_size
        witness_bytes = proof_bytes * len(bundle.witnesses or ())
    return BenchRow(Backend(backend).value, size, t1 - t0, t2 - t1,
                    (t4 - t3) / len(picks) if picks else 0.0, proof_bytes, witness_bytes)


def run_bench(backend, sizes: Sequence[int], keys: Optional[KeyMaterial] = None,
              bloom: Optional[BloomParams] = None, rsa: Optional[RsaParams] = None, seed: int = 0,
              repeats: int = 1) -> List[BenchRow]:
    """One row per size; with ``repeats`` > 1 each timing column is the median of the runs."""
    backend = Backend(backend)
    keys = keys or generate_keys()
    if backend is Backend.BLOOM:
        bloom = bloom or acc.derive_bloom_params(5000, 0.01)
    else:
        rsa = rsa or acc.generate_rsa_params(64, random.Random(seed))
    rows = []
    for n in sizes:
        runs = [bench_one(keys, backend, n, bloom, rsa, seed + r) for r in range(max(1, repeats))]
        rows.append(replace(runs[0], insert_s=median(r.insert_s for r in runs),
                            seal_s=median(r.seal_s for r in runs),
                            verify_per_record_s=median(r.verify_per_record_s for r in runs)))
    return rows


def to_csv(rows: Sequence[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(BenchRow.__dataclass_fields__), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(asdict(r))
    return buf.getvalue()


# -- storage footprint ------------------------------------------------------------------

@dataclass
class StorageRow:
    profile: str
    records: int
    bloom_bits: int
    sealed_bytes: int          # raw accumulator payload (bit array or big-endian value)
    sealed_digits: int         # decimal width of the modulus, 0 for Bloom
    witness_bytes: int         # raw, all witnesses of the day
    proof_file_bytes: int      # the JSON proof entry on disk

    @property
    def per_record_witness(self) -> float:
        return self.witness_bytes / self.records if self.records else 0.0


def storage_row(keys: KeyMaterial, profile: str, records: int, bloom: Optional[BloomParams] = None,
                rsa: Optional[RsaParams] = None, seed: int = 0) -> StorageRow:
    backend = Backend.BLOOM if bloom is not None else Backend.RSA
    entries = synthetic_entries(BENCH_IP, BENCH_DAY, records, random.Random(seed))
    with tempfile.TemporaryDirectory() as tmp:
        pipe = LogPipeline.open(tmp, keys, backend=backend, bloom=bloom, rsa=rsa)
        pipe.append_many(entries)
        pipe.seal_day(BENCH_IP, BENCH_DAY)
        bundle = pipe.export(BENCH_IP, BENCH_DAY)
        file_bytes = pipe.data.proofs.path(BENCH_IP, BENCH_DAY).stat().st_size
    payload = bundle.state.payload
    if backend is Backend.BLOOM:
        return StorageRow(profile, records, payload.params.m, len(payload.bits), 0, 0, file_bytes)
    size = payload.params.value_size
    return StorageRow(profile, records, 0, size, len(str(payload.params.modulus)),
                      size * len(bundle.witnesses or ()), file_bytes)


def storage_report(keys: Optional[KeyMaterial] = None, records: Sequence[int] = (250, 1000),
                   seed: int = 0) -> List[StorageRow]:
    """Bloom at 1% and 0.1% for 10k items, RSA with 32- and 64-bit primes."""
    keys = keys or generate_keys()
    rng = random.Random(seed)
    profiles = [
        ("bloom-1%-10k", {"bloom": acc.derive_bloom_params(10_000, 0.01)}),
        ("bloom-0.1%-10k", {"bloom": acc.derive_bloom_params(10_000, 0.001)}),
        ("rsa-32", {"rsa": acc.generate_rsa_params(32, rng)}),
        ("rsa-64", {"rsa": acc.generate_rsa_params(64, rng)}),
    ]
    return [storage_row(keys, name, n, seed=seed, **kw) for name, kw in profiles for n in records]
