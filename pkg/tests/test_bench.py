import csv
import io
import json
import subprocess
import sys
from dataclasses import asdict
from pathlib import Path

import pytest

from hefl.bench import AblationSpec, ablate, emit_report, read_report, render, run_config
from hefl.bench.cli import build_parser, config_from_args, main
from hefl.bench.runner import apply_calibration, cached_calibration
from hefl.distance import plan_unfold
from hefl.errors import ParameterError, ValidationError
from hefl.fl import ExperimentConfig

GOLDEN = Path(__file__).parent / "golden" / "selftest.csv"


def leaf_diff(a: dict, b: dict, prefix="") -> list[str]:
    out = []
    for key in a:
        if isinstance(a[key], dict):
            out += leaf_diff(a[key], b[key], f"{prefix}{key}.")
        elif a[key] != b[key]:
            out.append(prefix + key)
    return out


# -- report writer ------------------------------------------------------------------------------


def test_empty_report_creates_no_file(tmp_path):
    target = tmp_path / "r.csv"
    with pytest.raises(ValidationError):
        emit_report([], target)
    assert not target.exists()


def test_report_is_byte_stable(tmp_path):
    rows = [{"label": "a", "time": {"total": 0.1 + 0.2}, "n": 3, "ok": True, "x": None},
            {"label": "b", "time": {"total": 1.5}, "extra": [1, 2]}]
    for fmt in ("csv", "jsonl"):
        a, b = emit_report(rows, tmp_path / f"a.{fmt}", fmt), emit_report(rows, tmp_path / f"b.{fmt}", fmt)
        assert a.read_bytes() == b.read_bytes()
    text = (tmp_path / "a.csv").read_bytes().decode()
    assert text.splitlines()[0] == "label,time.total,n,ok,x,extra"
    assert text.endswith("\r\n")
    assert read_report(tmp_path / "a.csv")[0]["time.total"] == repr(0.1 + 0.2)
    assert read_report(tmp_path / "a.jsonl")[1] == {"label": "b", "time.total": 1.5, "extra": [1, 2]}


def test_csv_quoting_roundtrips():
    tricky = 'he said "hi", then\nleft'
    parsed = list(csv.reader(io.StringIO(render([{"note": tricky}]), newline="")))
    assert parsed == [["note"], [tricky]]


def test_unknown_format():
    with pytest.raises(ValidationError):
        render([{"a": 1}], "xml")


# -- selftest -----------------------------------------------------------------------------------


def test_selftest_matches_golden(tmp_path, capsys):
    out = tmp_path / "self.csv"
    assert main(["selftest", "--report", str(out), "--golden", str(GOLDEN)]) == 0
    assert out.read_bytes() == GOLDEN.read_bytes()
    assert capsys.readouterr().out.count("PASS") == 8


def test_selftest_golden_mismatch_fails(tmp_path):
    bad = tmp_path / "g.csv"
    bad.write_bytes(GOLDEN.read_bytes().replace(b"1000", b"999"))
    assert main(["selftest", "--check", "unfold-planner", "--golden", str(bad)]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hefl", "selftest", "--check", "packing-structure"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "PASS packing-structure" in proc.stdout


# -- argument handling ----------------------------------------------------------------------------


def parse(*argv):
    return config_from_args(build_parser().parse_args(["experiment", *argv]))


def test_flags_map_onto_config():
    cfg = parse("--rule", "multi-krum", "--clients", "10", "--byzantine", "1", "--l", "5",
                "--attack", "untargeted", "--lazy-relin", "off", "--hoisting", "full", "--sumdis-score",
                "--redact-kgc", "--ring-degree", "16384", "--rounds", "7", "--seed", "3")
    assert (cfg.rule.rule, cfg.rule.c, cfg.rule.l, cfg.rule.score_mode) == ("multi-krum", 1, 5, "sumdis")
    assert (cfg.attack.kind, cfg.attack.byzantine) == ("untargeted", 1)
    assert cfg.crypto.lazy_relin is False and cfg.crypto.hoisting == "full" and cfg.crypto.ring_degree == 16384
    assert cfg.output.redact_kgc and cfg.training.max_rounds == 7 and cfg.seed == 3
    assert parse("--byzantine", "1").attack.byzantine == 0  # assumed, but no attack requested


def test_flags_override_yaml(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("clients: 12\nrule: {rule: median, c: 2}\ncrypto: {hoisting: off}\n")
    cfg = parse("--config", str(path), "--hoisting", "full")
    assert cfg.clients == 12 and cfg.rule.rule == "median" and cfg.crypto.hoisting == "full"


@pytest.mark.parametrize("argv", [
    ["experiment", "--rule", "bogus"],
    ["experiment", "--ring-degree", "4096"],
    ["experiment", "--ring-degree", "262144"],
    ["experiment", "--lazy-relin", "maybe"],
    ["experiment", "--rule", "krum", "--clients", "4", "--byzantine", "1"],
    ["experiment", "--rule", "multi-krum", "--clients", "10", "--byzantine", "1", "--l", "6"],
    ["ablate", "--toggle", "hoisting", "--slot-sum-at-kgc"],
    ["ablate", "--toggle", "speed"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 2


def test_multi_krum_constraint_accepted_at_boundary():
    cfg = parse("--rule", "multi-krum", "--clients", "10", "--byzantine", "1", "--l", "5")
    assert cfg.clients - cfg.rule.l > 2 * cfg.rule.c + 2


def test_failed_run_exits_1(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    path.write_text(f"data: {{kind: idx, images: {tmp_path}/none.gz, labels: {tmp_path}/none2.gz}}\n")
    assert main(["experiment", "--config", str(path)]) == 1
    assert "failed" in capsys.readouterr().err


# -- experiment rows and ablations ------------------------------------------------------------------


def test_experiment_report_and_reproducibility(tmp_path):
    out = tmp_path / "exp.jsonl"
    argv = ["experiment", "--clients", "5", "--rule", "krum", "--byzantine", "1", "--rounds", "2",
            "--mode", "plaintext", "--report", str(out), "--format", "jsonl"]
    assert main(argv) == 0
    first = read_report(out)[0]
    assert main(argv) == 0
    second = read_report(out)[0]
    for row in (first, second):
        for key in [k for k in row if k.startswith("time.")]:
            row.pop(key)
    assert first == second and first["rounds"] == 2


BASE = {"seed": 1, "clients": 10, "data": {"samples": 400, "dim": 2100}, "training": {"max_rounds": 1}}


@pytest.mark.slow
def test_lazy_relin_ablation_counters(tmp_path):
    out = tmp_path / "ablate.csv"
    argv = ["ablate", "--toggle", "lazy-relin", "--clients", "10", "--rule", "krum", "--byzantine", "1",
            "--dim", "2100", "--samples", "400", "--rounds", "1", "--slot-sum-at-kgc", "--report", str(out)]
    assert main(argv) == 0
    eager, lazy = read_report(out)
    chunks = int(eager["chunks"])
    assert chunks == 2  # 2100 * 2 + 2 weights over 4096 slots
    assert int(eager["distance.relinearizations"]) == chunks * 45
    assert int(lazy["distance.relinearizations"]) == 45
    assert eager["fingerprint"] != lazy["fingerprint"]
    ratio = float(eager["time.total"]) / float(lazy["time.total"])
    assert float(lazy["speedup"]) == pytest.approx(ratio, rel=1e-12)
    assert float(eager["speedup"]) == 1.0


def test_ablation_pairs_differ_in_one_field():
    base = ExperimentConfig.from_dict(BASE)
    for toggle in ("lazy-relin", "hoisting", "ring-degree"):
        cfgs = AblationSpec.default(toggle).configs(base)
        dicts = [asdict(c) for c in cfgs]
        for other in dicts[1:]:
            diff = leaf_diff(dicts[0], other)
            assert len(diff) == 1 and diff[0].startswith("crypto.")
        assert len({c.fingerprint() for c in cfgs}) == len(cfgs)


def test_ablation_spec_validation():
    with pytest.raises(ParameterError):
        AblationSpec("ring-degree", (8192, 4096))
    with pytest.raises(ParameterError):
        AblationSpec("ring-degree", (8192, 1 << 18))
    with pytest.raises(ParameterError):
        AblationSpec("lazy-relin", (True,))
    assert AblationSpec.default("ring-degree", ring_degrees=[1 << 16, 1 << 17]).values == (65536, 131072)


@pytest.mark.slow
def test_hoisting_ablation_dynamic_row_follows_planner():
    base = ExperimentConfig.from_dict({"seed": 2, "clients": 5, "data": {"samples": 300, "dim": 20},
                                       "training": {"max_rounds": 1}})
    rows = ablate(base, AblationSpec.default("hoisting"))
    assert [r["hoisting"] for r in rows] == ["off", "full", "dynamic"]
    off, full, dyn = rows
    assert off["plan_k"] == 1 and full["plan_k"] == 7  # width 64: log 64 + 1
    expected = plan_unfold(dyn["t_hoist"], dyn["t_decompose"], dyn["m_cipher"], dyn["m_budget"], dyn["plan_width"])
    assert dyn["plan_k"] == expected.k
    pairs = 10
    assert off["distance"]["modups"] == pairs * (1 + 6)  # relinearization + one per tree level
    # every row selects the same client and reaches the same accuracy
    assert len({r["accuracy"] for r in rows}) == 1


def test_calibration_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("HEFL_CACHE_DIR", str(tmp_path))
    cfg = ExperimentConfig.from_dict({"crypto": {"hoisting": "dynamic"}})
    assert apply_calibration(cfg) == cfg
    assert main(["calibrate", "--runs", "3"]) == 0
    entry = json.loads((tmp_path / "calibration.json").read_text())["N8192-d3-s40-q46-p51-a1"]
    assert entry["t_hoist"] > 0 and entry["t_decompose"] > 0 and entry["m_cipher"] > 0
    filled = apply_calibration(cfg)
    assert (filled.crypto.t_hoist, filled.crypto.t_decompose) == (entry["t_hoist"], entry["t_decompose"])
    assert cached_calibration(cfg.crypto.params()) == entry


def test_run_config_counters_reproducible():
    cfg = ExperimentConfig.from_dict({"seed": 3, "clients": 5, "data": {"samples": 200, "dim": 10},
                                      "crypto": {"slot_sum_at_kgc": True}, "training": {"max_rounds": 1}})
    a, b = run_config(cfg), run_config(cfg)
    assert a["counter"] == b["counter"] and a["distance"] == b["distance"] and a["accuracy"] == b["accuracy"]
