"""Cheap record factories for accumulator-level tests (no encryption needed)."""

import random
from datetime import date, datetime, timedelta, timezone

from seclaas.model import ChainedRecord, EncryptedLogEntry, chain_link, genesis

DAY = date(2012, 11, 19)
IP = "11.1.0.5"


def random_record(rng: random.Random, ip=IP, day=DAY) -> ChainedRecord:
    ts = datetime(day.year, day.month, day.day, tzinfo=timezone.utc) + timedelta(
        microseconds=rng.randrange(86_400_000_000))
    ele = EncryptedLogEntry(rng.randbytes(48), ip, ts)
    return ChainedRecord(ele, rng.randbytes(32))


def random_chain(n: int, rng: random.Random, ip=IP, day=DAY):
    prev = genesis(ip, day)
    out = []
    for _ in range(n):
        ts = datetime(day.year, day.month, day.day, tzinfo=timezone.utc) + timedelta(
            microseconds=rng.randrange(86_400_000_000))
        ele = EncryptedLogEntry(rng.randbytes(48), ip, ts)
        rec = ChainedRecord(ele, chain_link(ele, prev))
        out.append(rec)
        prev = rec.chain
    return out
