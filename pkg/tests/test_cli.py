import hashlib
import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from klab.cli import main
from klab.config import Config, load_config, parse_config_text
from klab.lab import Lab
from klab.machine import PLAIN, PREFIX, describe, reference_machine
from klab.reports import CSV_COLUMNS, REPORT_SCHEMA, merge_reports

SMALL = ["--scale-L", "1", "--prog-bits", "16", "--budget", "256"]


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def cache(tmp_path):
    return str(tmp_path / "cache")


def test_describe(capsys):
    code, out, _ = run_cli(capsys, "machine", "describe", "--mode", "prefix")
    assert code == 0
    d = reference_machine(PREFIX)
    assert out == describe(d)
    body, fp_line = out.rstrip("\n").rsplit("\n", 1)
    assert fp_line == "fingerprint " + hashlib.sha256((body + "\n").encode()).hexdigest()
    code, out, _ = run_cli(capsys, "machine", "describe")
    assert out.count("fingerprint ") == 2


def test_verify_json_validates(capsys, cache):
    code, out, _ = run_cli(capsys, "verify", "all", *SMALL, "--cache-dir", cache)
    docs = json.loads(out)
    ids = {d["identity_id"] for d in docs}
    assert len(ids) == 18
    for d in docs:
        jsonschema.validate(d, REPORT_SCHEMA)
        assert d["scale"]["P"] == 16 and d["scale"]["T"] == 256
    assert code in (0, 1)


def test_verify_single_csv(capsys, cache, tmp_path):
    out_path = tmp_path / "thm1.csv"
    code, out, _ = run_cli(capsys, "verify", "THM1", *SMALL, "--cache-dir", cache,
                           "--format", "csv", "--out", str(out_path))
    assert out == ""
    lines = out_path.read_text().splitlines()
    assert tuple(lines[0].split(",")) == CSV_COLUMNS
    assert len(lines) == 1 + 5  # pairs with |a| + |b| <= 1
    assert all(line.startswith("THM1,") for line in lines[1:])


def test_build_is_idempotent(capsys, cache):
    code, _, err = run_cli(capsys, "tables", "build", *SMALL, "--cache-dir", cache)
    assert code == 0
    assert "cache files written" in err
    first = Lab(16, 256, cache_dir=cache)
    assert first.tables
    code, _, err = run_cli(capsys, "tables", "build", *SMALL, "--cache-dir", cache)
    assert code == 0
    assert "0 rows built, 0 cache files written" in err


def test_unknown_identity_is_usage_error(capsys):
    code, _, err = run_cli(capsys, "verify", "NOPE", *SMALL)
    assert code == 64
    with pytest.raises(SystemExit) as e:
        main(["verify"])
    assert e.value.code == 64
    with pytest.raises(SystemExit) as e:
        main(["verify", "THM1", "--scale-L", "x"])
    assert e.value.code == 64
    code, _, _ = run_cli(capsys, "verify", "THM1", "--prog-bits", "40")
    assert code == 64


def test_offline_missing_rows(capsys, cache):
    code, out, err = run_cli(capsys, "verify", "THM1", *SMALL, "--cache-dir", cache, "--offline")
    assert code == 4
    assert "MissingCondition" in err
    assert out == ""


def test_lock_held(capsys, cache):
    holder = Lab(16, 256, cache_dir=cache)
    with holder.lock():
        code, _, err = run_cli(capsys, "verify", "THM1", *SMALL, "--cache-dir", cache)
    assert code == 6 and "LockHeld" in err


def _build(capsys, cache):
    assert run_cli(capsys, "tables", "build", *SMALL, "--cache-dir", cache)[0] == 0
    return sorted(Path(cache).glob("*.klab"))


def test_corrupt_cache_is_io_error(capsys, cache):
    path = _build(capsys, cache)[0]
    data = bytearray(path.read_bytes())
    data[70] ^= 0xFF
    path.write_bytes(bytes(data))
    code, _, err = run_cli(capsys, "verify", "THM1", *SMALL, "--cache-dir", cache)
    assert code == 3 and "CorruptCache" in err


def test_foreign_cache_is_fingerprint_error(capsys, cache):
    path = _build(capsys, cache)[0]
    body = bytearray(path.read_bytes()[:-32])
    body[7:39] = bytes(32)
    path.write_bytes(bytes(body) + hashlib.sha256(bytes(body)).digest())
    code, _, err = run_cli(capsys, "verify", "THM1", *SMALL, "--cache-dir", cache)
    assert code == 5 and "FingerprintMismatch" in err


def test_unwritable_cache_dir(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, _ = run_cli(capsys, "tables", "build", *SMALL, "--cache-dir", str(blocker / "sub"))
    assert code == 3


def _verify_to(capsys, cache, path, *extra):
    run_cli(capsys, "verify", "COUNTEREX", *SMALL, "--cache-dir", cache, "--out", str(path), *extra)
    return path


def test_merge(capsys, cache, tmp_path):
    a = _verify_to(capsys, cache, tmp_path / "a.json")
    b = _verify_to(capsys, cache, tmp_path / "b.json", "--scale-L", "2")
    out = tmp_path / "merged.json"
    code, _, _ = run_cli(capsys, "report", "merge", str(a), str(b), "--out", str(out))
    assert code == 0
    merged = json.loads(out.read_text())
    assert set(merged["reports"]["COUNTEREX"]) == {"L=1,P=16,T=256", "L=2,P=16,T=256"}
    trend = merged["trends"]["COUNTEREX"]
    assert [row["n"] for row in trend] == [2, 4, 8]
    assert all(row["reference"] is not None for row in trend)
    # merging a file with itself changes nothing
    code, _, _ = run_cli(capsys, "report", "merge", str(a), str(a), "--out", str(out))
    again = json.loads(out.read_text())
    assert again == merge_reports([json.loads(a.read_text())])


def test_merge_rejects_mixed_machines(capsys, cache, tmp_path):
    a = _verify_to(capsys, cache, tmp_path / "a.json")
    docs = json.loads(a.read_text())
    for d in docs:
        d["machine_fingerprint"] = "f" * 64
    b = tmp_path / "b.json"
    b.write_text(json.dumps(docs))
    code, _, err = run_cli(capsys, "report", "merge", str(a), str(b))
    assert code == 5
    code, _, _ = run_cli(capsys, "report", "merge", str(tmp_path / "missing.json"))
    assert code == 64


def test_config_precedence(tmp_path, monkeypatch):
    cfg_file = tmp_path / "klab.conf"
    cfg_file.write_text("# scale\nscale-L = 3\nprog_bits = 20\nbudget=512\nformat = csv\n")
    cfg = load_config(cfg_file, L=2)
    assert (cfg.L, cfg.P, cfg.T, cfg.output_format) == (2, 20, 512, "csv")
    monkeypatch.setenv("KLAB_CACHE_DIR", str(tmp_path / "c"))
    assert Config().cache_dir == tmp_path / "c"
    assert parse_config_text("on_demand = no") == {"on_demand": False}
    for bad in ("L", "colour = red", "P = many", "on_demand = maybe"):
        with pytest.raises(ValueError):
            parse_config_text(bad)
    with pytest.raises(ValueError):
        load_config(None, L=11)


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "klab", "machine", "describe", "--mode", "plain"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout == describe(reference_machine(PLAIN))
    r = subprocess.run([sys.executable, "-m", "klab", "bogus"], capture_output=True, text=True)
    assert r.returncode == 64


def test_budget_check(capsys, cache):
    code, out, _ = run_cli(capsys, "verify", "THM1", *SMALL, "--cache-dir", cache, "--budget-check")
    docs = json.loads(out)
    assert docs[0]["summary"]["budget_changed_entries"] == 0


def test_budget_changes_at_tiny_budget():
    lab = Lab(12, 6)
    lab.C("0000")
    lab.K("", "1")
    changed = lab.budget_changes()
    assert changed
    for mode, c, x, v, v2 in changed:
        assert v2 < v
