"""Per-(ip, day) membership accumulators: Bloom filter and RSA one-way.

Bloom probes use double hashing over SHA-256(encode(record)): the first and
second 8-byte slices give h1, h2 and probe i sets bit (h1 + i*h2) mod m.
Bit j lives in byte j // 8 at mask 1 << (j % 8).

The RSA accumulator raises the running value to ``exponent_of(record)``,
the record digest read as a big-endian integer, forced odd and at least 3.
"""

from __future__ import annotations

import math
import random
import secrets
from datetime import date
from math import gcd
from typing import Iterable, List, Optional, Sequence

from sympy import isprime

from .model import (
    AccumulatorState,
    Backend,
    BloomParams,
    BloomPayload,
    ChainedRecord,
    MembershipWitness,
    RsaParams,
    RsaPayload,
    encode,
    genesis,
    hash_bytes,
)


class ParameterError(ValueError):
    pass


# -- Bloom ---------------------------------------------------------------------

def derive_bloom_params(n: int, p: float) -> BloomParams:
    if n < 1:
        raise ParameterError(f"capacity must be >= 1, got {n}")
    if not 0 < p < 1:
        raise ParameterError(f"false-positive target must be in (0, 1), got {p}")
    m = max(1, math.ceil(-n * math.log(p) / math.log(2) ** 2))
    k = max(1, round(m / n * math.log(2)))
    return BloomParams(n=n, p=p, m=m, k=min(k, 64))


def bloom_positions(record: ChainedRecord, params: BloomParams) -> List[int]:
    digest = hash_bytes(encode(record))
    h1 = int.from_bytes(digest[:8], "big")
    h2 = int.from_bytes(digest[8:16], "big")
    return [(h1 + i * h2) % params.m for i in range(params.k)]


def empty_bloom(params: BloomParams) -> BloomPayload:
    return BloomPayload(params, bytes((params.m + 7) // 8))


def popcount(bits: bytes) -> int:
    return int.from_bytes(bits, "big").bit_count()


def _bloom_set(payload: BloomPayload, record: ChainedRecord) -> BloomPayload:
    bits = bytearray(payload.bits)
    for pos in bloom_positions(record, payload.params):
        bits[pos >> 3] |= 1 << (pos & 7)
    return BloomPayload(payload.params, bytes(bits))


def _bloom_test(payload: BloomPayload, record: ChainedRecord) -> bool:
    bits = payload.bits
    return all(bits[pos >> 3] & (1 << (pos & 7)) for pos in bloom_positions(record, payload.params))


def bloom_insert(state: AccumulatorState, record: ChainedRecord) -> AccumulatorState:
    if state.backend is not Backend.BLOOM:
        raise TypeError("bloom_insert needs a Bloom accumulator state")
    return AccumulatorState(
        state.backend, state.ip, state.day, state.count + 1, record.chain, _bloom_set(state.payload, record)
    )


def bloom_contains(state: AccumulatorState, record: ChainedRecord) -> bool:
    if state.backend is not Backend.BLOOM:
        raise TypeError("bloom_contains needs a Bloom accumulator state")
    return _bloom_test(state.payload, record)


# -- RSA one-way accumulator -----------------------------------------------------

def exponent_of(record: ChainedRecord) -> int:
    e = int.from_bytes(hash_bytes(encode(record)), "big") | 1
    return max(e, 3)


def _random_prime(bits: int, rng) -> int:
    while True:
        candidate = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if isprime(candidate):
            return candidate


def generate_rsa_params(bit_size: int, rng: Optional[random.Random] = None) -> RsaParams:
    """Fresh modulus N = P*Q with ``bit_size``-bit primes and a seed X coprime to N.

    P and Q are dropped on return; nothing downstream needs the trapdoor.
    """
    if bit_size < 4:
        raise ParameterError("prime size must be at least 4 bits")
    rng = rng or secrets.SystemRandom()
    p = _random_prime(bit_size, rng)
    q = _random_prime(bit_size, rng)
    while q == p:
        q = _random_prime(bit_size, rng)
    n = p * q
    while True:
        x = rng.randrange(2, n - 1)
        if gcd(x, n) == 1:
            return RsaParams(modulus=n, seed=x, bit_size=bit_size)


def empty_rsa(params: RsaParams) -> RsaPayload:
    return RsaPayload(params, params.seed)


def accumulate(seed: int, exponents: Iterable[int], modulus: int) -> int:
    value = seed
    for e in exponents:
        value = pow(value, e, modulus)
    return value


def witness_values(seed: int, exponents: Sequence[int], modulus: int) -> List[int]:
    """X raised to every exponent but the i-th, for each i.

    Divide and conquer: each half inherits the base already raised to the
    other half's exponents, so the whole batch costs O(n log n) modexps.
    """
    out = [0] * len(exponents)
    stack = [(seed, 0, len(exponents))]
    while stack:
        base, lo, hi = stack.pop()
        if hi - lo <= 0:
            continue
        if hi - lo == 1:
            out[lo] = base
            continue
        mid = (lo + hi) // 2
        stack.append((accumulate(base, exponents[mid:hi], modulus), lo, mid))
        stack.append((accumulate(base, exponents[lo:mid], modulus), mid, hi))
    return out


def rsa_fold(state: AccumulatorState, record: ChainedRecord) -> AccumulatorState:
    if state.backend is not Backend.RSA:
        raise TypeError("rsa_fold needs an RSA accumulator state")
    payload = state.payload
    value = pow(payload.value, exponent_of(record), payload.params.modulus)
    return AccumulatorState(
        state.backend, state.ip, state.day, state.count + 1, record.chain, RsaPayload(payload.params, value)
    )


def rsa_witnesses(records: Sequence[ChainedRecord], params: RsaParams) -> List[MembershipWitness]:
    exps = [exponent_of(r) for r in records]
    return [MembershipWitness(i, v) for i, v in enumerate(witness_values(params.seed, exps, params.modulus))]


def rsa_verify_membership(record: ChainedRecord, witness: MembershipWitness, final_value: int,
                          params: RsaParams) -> bool:
    if not 1 <= witness.value < params.modulus:
        return False
    return pow(witness.value, exponent_of(record), params.modulus) == final_value


# -- backend-neutral helpers -------------------------------------------------------

def empty_state(backend: Backend, ip, day: date, bloom: Optional[BloomParams] = None,
                rsa: Optional[RsaParams] = None) -> AccumulatorState:
    backend = Backend(backend)
    if backend is Backend.BLOOM:
        if bloom is None:
            raise ParameterError("Bloom backend needs BloomParams")
        payload = empty_bloom(bloom)
    else:
        if rsa is None:
            raise ParameterError("RSA backend needs RsaParams")
        payload = empty_rsa(rsa)
    return AccumulatorState(backend, ip, day, 0, genesis(ip, day), payload)


def fold(state: AccumulatorState, record: ChainedRecord) -> AccumulatorState:
    if state.backend is Backend.BLOOM:
        return bloom_insert(state, record)
    return rsa_fold(state, record)
