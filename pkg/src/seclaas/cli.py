"""Command line front end.

Exit codes: 0 success/accept, 1 verification rejected, 2 usage or I/O error.
Settings resolve as flag > environment (SECLAAS_DATA_ROOT, SECLAAS_BACKEND,
SECLAAS_KEYS) > ``--config`` JSON file > built-in default.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import date
from pathlib import Path

from . import accumulator as acc
from .attacks import default_matrix
from .bench import run_bench, to_csv
from .crypto import (
    AGENCY_PRIVATE,
    CryptoError,
    decrypt_fields,
    generate_keys,
    load_private_key,
    load_public_key,
    read_keys,
    self_test,
    write_keys,
)
from .ingest import MappingError, MappingStore, classify_line, parse_snort_line, ParseError, read_lines, to_log_entry
from .model import Backend, EncodingError
from .pipeline import AlreadySealed, ConfigMismatch, LogPipeline, NotSealedError, SealedDayError
from .storage import DataRoot, StorageError, canonical_json, format_instant, ppl_to_json
from .verifier import EvidenceBundle, audit_day

EXIT_OK, EXIT_REJECT, EXIT_ERROR = 0, 1, 2

ENV = {"data_root": "SECLAAS_DATA_ROOT", "backend": "SECLAAS_BACKEND", "keys": "SECLAAS_KEYS"}
DEFAULTS = {"data_root": "seclaas-data", "backend": "bloom", "keys": "keys"}


class UsageError(Exception):
    pass


def _setting(args, name: str):
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in ENV and os.environ.get(ENV[name]):
        return os.environ[ENV[name]]
    if name in args.config_values:
        return args.config_values[name]
    return DEFAULTS.get(name)


def _emit(args, doc, text: str) -> None:
    print(canonical_json(doc) if args.json else text)


def _parse_day(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {text!r}") from None


# -- verbs ----------------------------------------------------------------------------

def cmd_keygen(args) -> int:
    keys = generate_keys(args.bits)
    paths = write_keys(keys, args.out_dir, force=args.force)
    ok = self_test(keys)
    _emit(args, {"files": [str(p) for p in paths], "self_test": ok},
          "\n".join(f"wrote {p}" for p in paths) + f"\nself-test: {'ok' if ok else 'FAILED'}")
    return EXIT_OK if ok else EXIT_ERROR


def _open_pipeline(args, need_signing=False, **params) -> LogPipeline:
    keys = read_keys(_setting(args, "keys"), need_signing=need_signing)
    return LogPipeline.open(_setting(args, "data_root"), keys, fsync=True, **params)


def cmd_ingest(args) -> int:
    backend = Backend(_setting(args, "backend"))
    params = {"backend": backend}
    if backend is Backend.BLOOM:
        params["bloom"] = acc.derive_bloom_params(args.bloom_capacity, args.bloom_fp)
    else:
        params["rsa"] = acc.generate_rsa_params(args.rsa_bits)
    mappings = MappingStore.load(args.mappings) if args.mappings else MappingStore()
    lines = read_lines(args.input)
    pipe = _open_pipeline(args, **params)
    counts = {"appended": 0, "skipped": 0, "unresolved_user": 0, "rejected_sealed": 0, "continuation": 0}
    errors = []
    for no, line in enumerate(lines, 1):
        kind = classify_line(line)
        if kind == "continuation":
            counts["continuation"] += 1
        if kind != "header":
            continue
        try:
            event = parse_snort_line(line, args.year)
        except ParseError as exc:
            counts["skipped"] += 1
            errors.append(f"line {no}: {exc}")
            continue
        entry, resolved = to_log_entry(event, mappings)
        counts["unresolved_user"] += not resolved
        try:
            pipe.append(entry)
        except SealedDayError:
            counts["rejected_sealed"] += 1
            continue
        counts["appended"] += 1
    for e in errors[:20]:
        print(e, file=sys.stderr)
    _emit(args, counts, " ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def _ppl_text(ppl) -> str:
    return (f"ppl {ppl.ip} {ppl.day}\n  ae_digest    {ppl.ae_digest.hex()}\n"
            f"  published_at {format_instant(ppl.published_at)}\n  signature    {ppl.signature.hex()[:64]}...")


def cmd_seal(args) -> int:
    pipe = _open_pipeline(args, need_signing=True)
    targets = [args.ip] if args.ip else sorted({str(ip) for ip, d in pipe.data.logs.segments() if d == args.day})
    out = []
    for ip in targets:
        try:
            ppl = pipe.seal_day(ip, args.day)
            status = "sealed"
        except AlreadySealed as exc:
            ppl, status = exc.ppl, "already-sealed"
            print(f"notice: {ip} {args.day} was already sealed; existing proof returned", file=sys.stderr)
        out.append((status, ppl))
    _emit(args, [{"status": s, "ppl": ppl_to_json(p)} for s, p in out],
          "\n".join(f"[{s}] " + _ppl_text(p) for s, p in out) or f"no chains recorded on {args.day}")
    return EXIT_OK


def cmd_export(args) -> int:
    pipe = _open_pipeline(args)
    bundle = pipe.export(args.ip, args.day)
    text = bundle.dumps() + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {len(bundle.records)} record(s) to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _load_bundle(path) -> EvidenceBundle:
    try:
        return EvidenceBundle.from_json(json.loads(Path(path).read_text()))
    except (KeyError, ValueError, EncodingError) as exc:
        raise UsageError(f"unreadable bundle {path}: {exc}") from exc


def cmd_verify(args) -> int:
    bundle = _load_bundle(args.records)
    data = DataRoot(_setting(args, "data_root"))
    key_bytes = Path(args.provider_key).read_bytes() if args.provider_key else data.feed.provider_key()
    if key_bytes is None:
        raise UsageError(f"no provider key published under {data.feed.root}")
    report = audit_day(args.ip, args.day, bundle, data.feed, load_public_key(key_bytes))
    _emit(args, report.to_json(), report.render())
    return EXIT_OK if report.accepted else EXIT_REJECT


def cmd_decrypt(args) -> int:
    bundle = _load_bundle(args.bundle)
    key = load_private_key(Path(args.agency_key).read_bytes())
    rows = []
    for i, rec in enumerate(bundle.records):
        to_ip, port, user = decrypt_fields(rec.ele, key)
        rows.append({"index": i, "timestamp": format_instant(rec.ele.timestamp), "from_ip": str(rec.ele.from_ip),
                     "to_ip": str(to_ip), "port": port, "user_id": user})
    _emit(args, rows, "\n".join(
        f"{r['index']:>5} {r['timestamp']} {r['from_ip']} -> {r['to_ip']}:{r['port']} user={r['user_id']}"
        for r in rows))
    return EXIT_OK


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    backend = Backend(_setting(args, "backend"))
    kw = {}
    if backend is Backend.BLOOM:
        kw["bloom"] = acc.derive_bloom_params(args.bloom_capacity, args.bloom_fp)
    rows = run_bench(backend, sizes, repeats=args.repeats, **kw)
    sys.stdout.write(to_csv(rows))
    return EXIT_OK


def cmd_attack_sim(args) -> int:
    if not args.matrix:
        raise UsageError("attack-sim currently supports only --matrix")
    report = default_matrix(seed=args.seed)
    if args.out:
        Path(args.out).write_text(report.dumps() + "\n")
    _emit(args, report.to_json(), report.summary())
    return EXIT_OK if report.passed else EXIT_REJECT


def cmd_recover(args) -> int:
    pipe = LogPipeline.open(_setting(args, "data_root"), read_keys(_setting(args, "keys")), recover=False)
    notes = pipe.recover()
    _emit(args, notes, "\n".join(notes) or "stores consistent")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with data_root / backend / keys")
    common.add_argument("--data-root", dest="data_root", help="store root [env SECLAAS_DATA_ROOT]")
    common.add_argument("--keys", help="key directory from keygen [env SECLAAS_KEYS]")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="seclaas", description="Tamper-evident network log store and auditor.")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("keygen", parents=[common], help="create agency and provider key pairs")
    k.add_argument("--out-dir", required=True)
    k.add_argument("--force", action="store_true")
    k.add_argument("--bits", type=int, default=2048)
    k.set_defaults(func=cmd_keygen)

    i = sub.add_parser("ingest", parents=[common], help="append Snort header lines to the store")
    i.add_argument("--input", required=True)
    i.add_argument("--mappings", help="tab-separated IP lease table")
    i.add_argument("--backend", choices=[b.value for b in Backend])
    i.add_argument("--year", type=int, required=True, help="year for the year-less Snort timestamps")
    i.add_argument("--bloom-capacity", type=int, default=5000)
    i.add_argument("--bloom-fp", type=float, default=0.01)
    i.add_argument("--rsa-bits", type=int, default=64, help="size of each RSA accumulator prime")
    i.set_defaults(func=cmd_ingest)

    s = sub.add_parser("seal", parents=[common], help="seal a day and publish its proof")
    s.add_argument("--ip", help="chain to seal; all chains of the day when omitted")
    s.add_argument("--day", type=_parse_day, required=True)
    s.set_defaults(func=cmd_seal)

    e = sub.add_parser("export", parents=[common], help="write an investigator bundle")
    e.add_argument("--ip", required=True)
    e.add_argument("--day", type=_parse_day, required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_export)

    v = sub.add_parser("verify", parents=[common], help="audit a bundle against the published feed")
    v.add_argument("--ip", required=True)
    v.add_argument("--day", type=_parse_day, required=True)
    v.add_argument("--records", required=True, help="bundle file from export")
    v.add_argument("--provider-key", help="override the key published in the feed")
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("decrypt", parents=[common], help="decrypt a bundle with the agency key")
    d.add_argument("--bundle", required=True)
    d.add_argument("--agency-key", required=True, help=f"path to {AGENCY_PRIVATE}")
    d.set_defaults(func=cmd_decrypt)

    b = sub.add_parser("bench", parents=[common], help="time insert/seal/verify per day size (CSV)")
    b.add_argument("--backend", choices=[x.value for x in Backend])
    b.add_argument("--sizes", default="1000,2000,5000,10000")
    b.add_argument("--bloom-capacity", type=int, default=5000)
    b.add_argument("--bloom-fp", type=float, default=0.01)
    b.add_argument("--repeats", type=int, default=1, help="median over this many runs per size")
    b.set_defaults(func=cmd_bench)

    a = sub.add_parser("attack-sim", parents=[common], help="run the collusion attack matrix")
    a.add_argument("--matrix", action="store_true")
    a.add_argument("--seed", type=int, default=7)
    a.add_argument("--out", help="write the JSON matrix report here")
    a.set_defaults(func=cmd_attack_sim)

    r = sub.add_parser("recover", parents=[common], help="repair stores after a crash")
    r.set_defaults(func=cmd_recover)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.config_values = {}
    try:
        if args.config:
            args.config_values = json.loads(Path(args.config).read_text())
        return args.func(args)
    except (UsageError, OSError, StorageError, CryptoError, MappingError, ConfigMismatch, NotSealedError,
            ValueError) as exc:
        print(f"seclaas {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
