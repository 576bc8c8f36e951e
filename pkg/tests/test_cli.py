import json
import random
import re
from datetime import datetime, timedelta, timezone

import pytest

from seclaas.cli import main
from seclaas.crypto import KEY_FILES

from conftest import FIXTURES

DAY = "2012-11-19"


def run(capsys, *argv):
    try:
        code = main([str(a) for a in argv])
    except SystemExit as exc:       # argparse usage errors
        code = exc.code
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def keydir(tmp_path_factory):
    d = tmp_path_factory.mktemp("keys")
    assert main(["keygen", "--out-dir", str(d), "--json"]) == 0
    return d


@pytest.fixture
def env(tmp_path, keydir, monkeypatch):
    monkeypatch.setenv("SECLAAS_KEYS", str(keydir))
    monkeypatch.setenv("SECLAAS_DATA_ROOT", str(tmp_path / "data"))
    monkeypatch.delenv("SECLAAS_BACKEND", raising=False)
    return tmp_path


def test_keygen(tmp_path, capsys):
    code, out, _ = run(capsys, "keygen", "--out-dir", tmp_path, "--json")
    assert code == 0 and json.loads(out)["self_test"] is True
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted(KEY_FILES)
    code, _, err = run(capsys, "keygen", "--out-dir", tmp_path)
    assert code == 2 and "--force" in err
    assert run(capsys, "keygen", "--out-dir", tmp_path, "--force")[0] == 0


def test_ingest_single_alert(env, capsys):
    code, out, _ = run(capsys, "ingest", "--input", FIXTURES / "single_alert.log", "--year", 2012,
                       "--mappings", FIXTURES / "mappings.tsv", "--json")
    counts = json.loads(out)
    assert code == 0 and counts["appended"] == 1 and counts["unresolved_user"] == 0
    assert counts["continuation"] == 2


def test_ingest_empty_file(env, capsys):
    (env / "empty.log").write_text("")
    code, out, _ = run(capsys, "ingest", "--input", env / "empty.log", "--year", 2012, "--json")
    assert code == 0 and json.loads(out)["appended"] == 0


def test_ingest_unreadable_input(env, capsys):
    code, _, err = run(capsys, "ingest", "--input", env / "missing.log", "--year", 2012)
    assert code == 2 and "error" in err


def _big_log(path, n, rng):
    start = datetime(2012, 11, 19, tzinfo=timezone.utc)
    lines = []
    for i in range(n):
        kind = rng.random()
        ts = start + timedelta(microseconds=rng.randrange(86_400_000_000))
        stamp = f"{ts:%m/%d-%H:%M:%S}.{ts.microsecond:06d}"
        if kind < 0.6:
            lines.append(f"{stamp} 11.1.0.{rng.randrange(2, 6)}:{rng.randrange(1024, 65536)} -> "
                         f"{rng.randrange(1, 224)}.{rng.randrange(256)}.{rng.randrange(256)}.{rng.randrange(256)}:80")
        elif kind < 0.65:
            lines.append(f"{stamp} 11.1.0.3:1 74.1.1.1:80")          # malformed header
        elif kind < 0.9:
            lines.append("TCP TTL:64 TOS:0x0 ID:1 IpLen:20 DgmLen:40")
        else:
            lines.append("")
    path.write_text("\n".join(lines) + "\n")
    return lines


def test_ingest_large_file_matches_line_classes(env, capsys):
    lines = _big_log(env / "big.log", 10_000, random.Random(3))
    header = re.compile(r"^\d\d/\d\d-\d\d:\d\d:\d\d\.\d+ ")
    good = re.compile(r"^\S+ \S+:\d+ -> \S+:\d+$")
    expect_ok = sum(1 for ln in lines if header.match(ln) and good.match(ln))
    expect_bad = sum(1 for ln in lines if header.match(ln) and not good.match(ln))
    code, out, _ = run(capsys, "ingest", "--input", env / "big.log", "--year", 2012, "--json")
    counts = json.loads(out)
    assert code == 0
    assert counts["appended"] == expect_ok and counts["skipped"] == expect_bad


@pytest.mark.parametrize("backend", ["bloom", "rsa"])
def test_full_flow(env, keydir, capsys, backend):
    data = env / "data"
    assert run(capsys, "ingest", "--input", FIXTURES / "sample_snort.log", "--year", 2012,
               "--mappings", FIXTURES / "mappings.tsv", "--backend", backend, "--rsa-bits", 32)[0] == 0
    code, out, _ = run(capsys, "seal", "--day", DAY, "--json")
    sealed = json.loads(out)
    assert code == 0 and {s["ppl"]["ip"] for s in sealed} == {"11.1.0.3", "11.1.0.5", "10.9.9.9"}
    code, _, err = run(capsys, "seal", "--day", DAY, "--ip", "11.1.0.5")
    assert code == 0 and "already sealed" in err
    bundle = env / "b.json"
    assert run(capsys, "export", "--ip", "11.1.0.5", "--day", DAY, "--out", bundle)[0] == 0
    code, out, _ = run(capsys, "verify", "--ip", "11.1.0.5", "--day", DAY, "--records", bundle, "--json")
    assert code == 0 and json.loads(out)["accepted"] is True
    code, out, _ = run(capsys, "decrypt", "--bundle", bundle, "--agency-key", keydir / "agency_priv.pem", "--json")
    rows = json.loads(out)
    assert code == 0
    assert [(r["to_ip"], r["port"], r["user_id"]) for r in rows] == [
        ("74.125.130.106", 80, "bob-41d2e8b0"), ("74.125.130.106", 443, "bob-41d2e8b0")]


def test_verify_rejects_tampered_and_unpublished(env, capsys):
    run(capsys, "ingest", "--input", FIXTURES / "sample_snort.log", "--year", 2012,
        "--mappings", FIXTURES / "mappings.tsv")
    run(capsys, "seal", "--day", DAY, "--ip", "11.1.0.5")
    bundle = env / "b.json"
    run(capsys, "export", "--ip", "11.1.0.5", "--day", DAY, "--out", bundle)
    doc = json.loads(bundle.read_text())
    doc["records"] = doc["records"][::-1]
    bad = env / "bad.json"
    bad.write_text(json.dumps(doc))
    code, out, _ = run(capsys, "verify", "--ip", "11.1.0.5", "--day", DAY, "--records", bad)
    assert code == 1 and "REJECT" in out and "sequence-break" in out
    code, out, _ = run(capsys, "verify", "--ip", "11.1.0.5", "--day", "2012-11-20", "--records", bundle, "--json")
    assert code == 1 and json.loads(out)["reason"] == "unpublished-day"


def test_seal_unknown_chain_gives_empty_ppl(env, capsys):
    run(capsys, "ingest", "--input", FIXTURES / "single_alert.log", "--year", 2012)
    code, out, _ = run(capsys, "seal", "--ip", "10.1.2.3", "--day", "2013-01-01", "--json")
    assert code == 0 and json.loads(out)[0]["status"] == "sealed"
    bundle = env / "e.json"
    assert run(capsys, "export", "--ip", "10.1.2.3", "--day", "2013-01-01", "--out", bundle)[0] == 0
    assert run(capsys, "verify", "--ip", "10.1.2.3", "--day", "2013-01-01", "--records", bundle)[0] == 0


def test_decrypt_without_usable_key(env, keydir, capsys):
    run(capsys, "ingest", "--input", FIXTURES / "single_alert.log", "--year", 2012)
    run(capsys, "seal", "--ip", "11.1.0.5", "--day", DAY)
    bundle = env / "b.json"
    run(capsys, "export", "--ip", "11.1.0.5", "--day", DAY, "--out", bundle)
    assert run(capsys, "decrypt", "--bundle", bundle)[0] == 2
    assert run(capsys, "decrypt", "--bundle", bundle, "--agency-key", keydir / "agency_pub.pem")[0] == 2
    other = env / "otherkeys"
    main(["keygen", "--out-dir", str(other)])
    code, _, err = run(capsys, "decrypt", "--bundle", bundle, "--agency-key", other / "agency_priv.pem")
    assert code == 2 and "decryption" in err


def test_settings_precedence(env, tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"backend": "rsa", "data_root": str(tmp_path / "from-config")}))
    run(capsys, "ingest", "--config", cfg, "--input", FIXTURES / "single_alert.log", "--year", 2012, "--rsa-bits", 16)
    # env data root beats the config file; config backend applies
    doc = json.loads((tmp_path / "data" / "config.json").read_text())
    assert doc["backend"] == "rsa" and not (tmp_path / "from-config").exists()
    monkeypatch.setenv("SECLAAS_BACKEND", "bloom")
    code, _, err = run(capsys, "ingest", "--config", cfg, "--input", FIXTURES / "single_alert.log", "--year", 2012)
    assert code == 2 and "rsa backend" in err
    code, _, _ = run(capsys, "ingest", "--backend", "rsa", "--input", FIXTURES / "single_alert.log", "--year", 2012)
    assert code == 0


def test_recover_and_usage_errors(env, capsys):
    run(capsys, "ingest", "--input", FIXTURES / "single_alert.log", "--year", 2012)
    code, out, _ = run(capsys, "recover", "--json")
    assert code == 0 and json.loads(out) == []
    assert run(capsys, "seal", "--day", "19/11/2012")[0] == 2
    assert run(capsys, "attack-sim")[0] == 2
    assert run(capsys)[0] == 2


def test_attack_sim_matrix(env, capsys):
    out_file = env / "matrix.json"
    code, out, _ = run(capsys, "attack-sim", "--matrix", "--out", out_file)
    assert code == 0 and "PASS" in out
    assert json.loads(out_file.read_text())["passed"] is True


def test_bench_csv(env, capsys):
    code, out, _ = run(capsys, "bench", "--backend", "bloom", "--sizes", "20,40")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0].startswith("backend,size,insert_s")
    assert [ln.split(",")[1] for ln in lines[1:]] == ["20", "40"]
