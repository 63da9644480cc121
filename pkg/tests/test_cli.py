"""Command-line interface: reports, transforms, exit codes, determinism."""

import json
import subprocess
import sys

import numpy as np
import pytest

from ffp8 import cli, search
from ffp8.bundle import (
    DTYPE_FFP8,
    DTYPE_FP32,
    Layer,
    ModelBundle,
    Tensor,
    read_bundle,
    write_bundle,
)
from ffp8.errors import SchemaViolation
from ffp8.formats import decode_array, make_format


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """One trained bundle plus a searched assignment, shared by the tests."""
    root = tmp_path_factory.mktemp("cli")
    model = root / "m.ffpb"
    assign = root / "a.json"
    assert cli.main(["train", "--seed", "0", "--out", str(model)]) == 0
    assert cli.main(["search", "--bundle", str(model), "--out", str(assign)]) == 0
    return root, model, assign


# --- canonical JSON and report envelope --------------------------------------

def test_canonical_json_formatting():
    doc = {"b": 1 / 3, "a": [1.0, float("inf"), float("nan")],
           "z": np.float64(480.0), "n": np.int32(-3), "s": "x"}
    assert cli.canonical_json(doc) == (
        '{"a":[1,null,null],"b":0.333333333,"n":-3,"s":"x","z":480}\n')


def test_canonical_json_is_byte_stable():
    doc = {"k": [0.1, 2.5e-20, 1e30], "m": {"y": 2, "x": 1}}
    assert cli.canonical_json(doc) == cli.canonical_json(dict(reversed(doc.items())))


def test_emit_report_validates_schema():
    with pytest.raises(SchemaViolation):
        cli.emit_report("no_such_kind", {})
    with pytest.raises(SchemaViolation):
        cli.emit_report("eval", {"mode": "fp32", "accuracy": 1.0})  # missing key
    with pytest.raises(SchemaViolation):
        cli.emit_report("eval", {"mode": "fp32", "accuracy": 1.0,
                                 "dataset": {}, "extra": 1})


def test_report_envelope_fields():
    report = cli.emit_report("assignment", {"records": []}, {"bundle": "ab"})
    doc = json.loads(report)
    assert doc["kind"] == "assignment"
    assert doc["tool_version"]
    assert doc["inputs"] == {"bundle": "ab"}


# --- inspect ------------------------------------------------------------------

def test_inspect_frozen_output(capsys):
    assert cli.main(["inspect", "--fmt", "1,4,3,7"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["body"]["window"] == {
        "min_subnormal": 2.0 ** -9, "min_normal": 2.0 ** -6, "max": 480.0}
    assert doc["body"]["distinct_values"] == 255
    assert doc["body"]["default_bias"] == 7


def test_inspect_unsigned_has_256_values(capsys):
    assert cli.main(["inspect", "--fmt", "0,4,4,7"]) == 0
    assert json.loads(capsys.readouterr().out)["body"]["distinct_values"] == 256


def test_inspect_rejects_star_bias(capsys):
    assert cli.main(["inspect", "--fmt", "1,4,3,*"]) == 1
    assert "--fmt" in capsys.readouterr().err


# --- usage and data errors ----------------------------------------------------

@pytest.mark.parametrize("argv", [
    ["inspect", "--fmt", "2,4,3,7"],
    ["inspect", "--fmt", "1,4,3"],
    ["inspect", "--fmt", "1,4,3,seven"],
    ["search", "--bundle", "x.ffpb", "--y-range", "6..1"],
    ["search", "--bundle", "x.ffpb", "--bias-sweep", "-1"],
    ["train", "--seed", "0"],
    ["bogus"],
])
def test_usage_errors_exit_1(argv):
    with pytest.raises(SystemExit) as exc:
        cli.build_parser().parse_args(argv)
    assert exc.value.code == 1


def test_missing_file_is_a_data_error(capsys):
    assert cli.main(["eval", "--bundle", "/nonexistent/m.ffpb"]) == 2
    assert "error:" in capsys.readouterr().err


def test_quantize_needs_exactly_one_source(work, capsys):
    _, model, assign = work
    assert cli.main(["quantize", "--bundle", str(model), "--out", "/tmp/x.ffpb"]) == 1
    assert cli.main(["quantize", "--bundle", str(model), "--assignment", str(assign),
                     "--fmt", "1,4,3,7", "--out", "/tmp/x.ffpb"]) == 1


def test_bundle_without_layers_is_a_data_error(tmp_path, capsys):
    b = ModelBundle()
    v = np.ones(4, dtype=np.float32)
    b.add_tensor(Tensor("w", "weight", v.shape, DTYPE_FP32, v))
    path = tmp_path / "flat.ffpb"
    write_bundle(b, path)
    assert cli.main(["quantize", "--bundle", str(path), "--fmt", "1,4,3,7",
                     "--out", str(tmp_path / "q.ffpb")]) == 2
    assert cli.main(["eval", "--bundle", str(path)]) == 2
    err = capsys.readouterr().err
    assert "dense" in err and "metadata" in err


# --- pipeline transforms -------------------------------------------------------

def test_train_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.ffpb", tmp_path / "b.ffpb"
    assert cli.main(["train", "--seed", "3", "--out", str(a)]) == 0
    out1 = capsys.readouterr().out
    assert cli.main(["train", "--seed", "3", "--out", str(b)]) == 0
    out2 = capsys.readouterr().out
    assert a.read_bytes() == b.read_bytes()
    assert out1 == out2
    assert json.loads(out1)["body"]["accuracy"] >= 0.95


def test_quantize_writes_codes_and_is_repeatable(work, tmp_path):
    _, model, assign = work
    q1, q2 = tmp_path / "q1.ffpb", tmp_path / "q2.ffpb"
    assert cli.main(["quantize", "--bundle", str(model), "--assignment", str(assign),
                     "--out", str(q1)]) == 0
    assert cli.main(["quantize", "--bundle", str(model), "--assignment", str(assign),
                     "--out", str(q2)]) == 0
    assert q1.read_bytes() == q2.read_bytes()
    quantized = read_bundle(q1)
    for name, t in quantized.tensors.items():
        expected = DTYPE_FFP8 if name.endswith(".weight") else DTYPE_FP32
        assert t.dtype == expected, name


def test_quantize_skips_already_quantized(work, tmp_path):
    _, model, assign = work
    q1, q2 = tmp_path / "q1.ffpb", tmp_path / "q2.ffpb"
    cli.main(["quantize", "--bundle", str(model), "--assignment", str(assign), "--out", str(q1)])
    cli.main(["quantize", "--bundle", str(q1), "--assignment", str(assign), "--out", str(q2)])
    assert q1.read_bytes() == q2.read_bytes()


def test_quantize_star_bias_anchors_per_tensor(work, tmp_path):
    _, model, _ = work
    q = tmp_path / "q.ffpb"
    assert cli.main(["quantize", "--bundle", str(model), "--fmt", "1,4,3,*",
                     "--out", str(q)]) == 0
    src = read_bundle(model)
    for name, t in read_bundle(q).tensors.items():
        if t.dtype != DTYPE_FFP8:
            continue
        wmax = float(np.abs(src.tensors[name].payload).max())
        assert t.fmt.b == search.bias_star(4, 3, wmax)


def test_dequantize_round_trip_matches_decoded_codes(work, tmp_path):
    _, model, assign = work
    q, d = tmp_path / "q.ffpb", tmp_path / "d.ffpb"
    cli.main(["quantize", "--bundle", str(model), "--assignment", str(assign), "--out", str(q)])
    assert cli.main(["dequantize", "--bundle", str(q), "--out", str(d)]) == 0
    qb, db = read_bundle(q), read_bundle(d)
    for name, t in qb.tensors.items():
        if t.dtype == DTYPE_FFP8:
            back = db.tensors[name]
            assert back.dtype == DTYPE_FP32
            assert np.array_equal(back.payload,
                                  decode_array(t.fmt, t.payload).astype(np.float32))


# --- reports over the pipeline --------------------------------------------------

def test_search_report_and_file_agree(work, capsys, tmp_path):
    _, model, _ = work
    out = tmp_path / "a.json"
    assert cli.main(["search", "--bundle", str(model), "--out", str(out)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["kind"] == "search_result"
    records = doc["body"]["records"]
    assert records == search.load_assignment(out).to_records()
    assert {"layer": "*", "role": "weight"}.items() <= records[1].items()


def test_search_respects_flags(work, capsys):
    _, model, _ = work
    assert cli.main(["search", "--bundle", str(model), "--y-range", "2..3",
                     "--bias-sweep", "2", "--objective", "accuracy"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["body"]["config"]["y_range"] == [2, 3]
    assert doc["body"]["objective"] == "accuracy"
    assert all(2 <= r["y"] <= 3 for r in doc["body"]["records"])


def test_eval_fp32_vs_quantized(work, capsys, tmp_path):
    _, model, assign = work
    q = tmp_path / "q.ffpb"
    cli.main(["quantize", "--bundle", str(model), "--assignment", str(assign), "--out", str(q)])
    assert cli.main(["eval", "--bundle", str(model)]) == 0
    fp32 = json.loads(capsys.readouterr().out)["body"]
    assert cli.main(["eval", "--bundle", str(q), "--assignment", str(assign)]) == 0
    quant = json.loads(capsys.readouterr().out)["body"]
    assert fp32["mode"] == "fp32" and quant["mode"] == "quantized"
    assert fp32["accuracy"] >= 0.95
    assert quant["accuracy"] >= fp32["accuracy"] - 0.01


def test_eval_reports_are_byte_stable(work, capsys):
    _, model, _ = work
    assert cli.main(["eval", "--bundle", str(model)]) == 0
    one = capsys.readouterr().out
    assert cli.main(["eval", "--bundle", str(model)]) == 0
    assert capsys.readouterr().out == one


def test_analyze_coverage_fractions(work, capsys):
    _, model, _ = work
    assert cli.main(["analyze", "--bundle", str(model), "--fmt", "1,4,3,*"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["kind"] == "coverage"
    for row in doc["body"]["tensors"]:
        cov = row["coverage"]
        assert cov["above_window_frac"] == 0  # anchored bias covers the max
        total = sum(cov.values())
        assert row["stats"]["zero_count"] > 0 or total == pytest.approx(1.0, abs=1e-12)


def test_analyze_without_format_gives_stats_only(work, capsys):
    _, model, _ = work
    assert cli.main(["analyze", "--bundle", str(model)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["body"]["format"] is None
    assert all(r["coverage"] is None and r["error"] is None
               for r in doc["body"]["tensors"])
    assert all(r["stats"]["total_count"] > 0 for r in doc["body"]["tensors"])


def test_convert_emits_known_bit_pattern(tmp_path, capsys):
    fmt = make_format(1, 4, 3, 7)
    codes = np.array([0b00111000, 0], dtype=np.uint8)  # 1.0 and +0
    b = ModelBundle()
    b.add_tensor(Tensor("t", "weight", (2,), DTYPE_FFP8, codes, fmt=fmt))
    path = tmp_path / "one.ffpb"
    write_bundle(b, path)
    assert cli.main(["convert", "--bundle", str(path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["tensors"]["t"]["fp32_hex"] == ["0x3F800000", "0x00000000"]


def test_reports_can_target_a_file(work, tmp_path):
    _, model, _ = work
    out = tmp_path / "report.json"
    assert cli.main(["eval", "--bundle", str(model), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["kind"] == "eval"


# --- console entry point --------------------------------------------------------

def test_module_invocation_smoke():
    proc = subprocess.run([sys.executable, "-m", "ffp8", "inspect", "--fmt", "1,2,5,3"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    doc = json.loads(proc.stdout)
    assert doc["body"]["window"]["max"] == 1.96875


def test_module_invocation_usage_error():
    proc = subprocess.run([sys.executable, "-m", "ffp8", "inspect"],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert "--fmt" in proc.stderr
