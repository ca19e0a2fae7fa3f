import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fidsta.errors import ParseCode, ParseError
from fidsta.estimator import MeasurementRecord, RankSelection, estimate
from fidsta.io import (
    Dataset,
    FileFormat,
    canonical_json,
    convert_sycamore,
    dataset_from_dict,
    ingest,
    load_dataset,
    load_inputs,
    parse_lines,
    persist_result,
    read_records,
    render,
    to_record,
    write_raw,
)
from fidsta.orderstat import Dims
from fidsta.simulator import ScalingRow, stream

HEADER = "# n_qubits=4 circuit=c1"


def _write(tmp_path, name, lines):
    p = tmp_path / name
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return p


def test_bitstring_counts_roundtrip(tmp_path):
    p = _write(tmp_path, "a.csv", [HEADER, "# comment", "0110,4821", "1111,3", ""])
    raw = ingest(p)
    assert raw.format is FileFormat.BITSTRING_COUNTS
    assert raw.entries == (("0110", 4821), ("1111", 3))
    assert raw.circuit_id == "c1" and raw.n_qubits == 4 and raw.shots == 4824


def test_comment_before_header(tmp_path):
    p = _write(tmp_path, "a.csv", ["# exported by a lab tool", HEADER, "0110,2"])
    assert ingest(p).circuit_id == "c1"


def test_shot_list_large(tmp_path):
    rng = np.random.default_rng(0)
    outcomes = rng.integers(0, 4096, 500_000)
    lines = ["# n_qubits=12 circuit=big"] + [format(int(o), "012b") for o in outcomes]
    p = _write(tmp_path, "shots.txt", lines)
    rec = to_record(ingest(p, "shots"), 20)
    assert rec.shots == 500_000 and rec.n_ranks == 20


@pytest.mark.parametrize("lines,code,line", [
    ([], ParseCode.EMPTY_FILE, None),
    (["", "  "], ParseCode.EMPTY_FILE, None),
    ([HEADER], ParseCode.EMPTY_FILE, None),
    (["0110,3"], ParseCode.MISSING_HEADER, 1),
    (["# n_qubits=x circuit=c"], ParseCode.BAD_HEADER, 1),
    (["# n_qubits=4"], ParseCode.BAD_HEADER, 1),
    ([HEADER, "01a0,3"], ParseCode.BAD_ALPHABET, 2),
    ([HEADER, "011,3"], ParseCode.BAD_WIDTH, 2),
    ([HEADER, "0110,-3"], ParseCode.NEGATIVE_COUNT, 2),
    ([HEADER, "0110,0"], ParseCode.ZERO_COUNT, 2),
    ([HEADER, "0110,2", "0001,1", "0110,4"], ParseCode.DUPLICATE_KEY, 4),
    ([HEADER, "0110,2,3"], ParseCode.MALFORMED_LINE, 2),
    ([HEADER, "0110,two"], ParseCode.MALFORMED_LINE, 2),
])
def test_parse_errors(lines, code, line):
    with pytest.raises(ParseError) as info:
        parse_lines(lines)
    assert info.value.code is code
    assert info.value.line == line
    assert info.value.exit_code == 2


def test_shot_list_bad_line():
    with pytest.raises(ParseError) as info:
        parse_lines([HEADER, "0110", "0112"], "shots")
    assert info.value.code is ParseCode.BAD_ALPHABET and info.value.line == 3


def test_to_record_stable_ties():
    raw = parse_lines([HEADER, "0000,5", "0001,9", "0010,5"])
    rec = to_record(raw, 2)
    assert rec.counts == (9, 5) and not rec.truncated
    assert rec.probs().tolist() == [9 / 19, 5 / 19]


def test_to_record_truncation_flag(caplog):
    raw = parse_lines([HEADER, "0000,5", "0001,9"])
    rec = to_record(raw, 5)
    assert rec.truncated and rec.counts == (9, 5)
    assert "fewer than top_k" in caplog.text


def test_counts_and_shots_give_same_record():
    counts = {"0000": 3, "1010": 7, "0110": 3, "1111": 1}
    raw_c = parse_lines([HEADER] + [f"{b},{c}" for b, c in counts.items()])
    shots = [b for b, c in counts.items() for _ in range(c)]
    np.random.default_rng(1).shuffle(shots)
    raw_s = parse_lines([HEADER] + shots)
    for k in (1, 2, 4, 6):
        assert to_record(raw_c, k) == to_record(raw_s, k)


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.text("01", min_size=5, max_size=5), st.integers(1, 50), min_size=1, max_size=20),
       st.integers(1, 25))
def test_roundtrip_ingest_serialize(counts, k):
    raw = parse_lines(["# n_qubits=5 circuit=x"] + [f"{b},{c}" for b, c in counts.items()])
    rec = to_record(raw, k)
    doc = json.loads(canonical_json(Dataset((rec,), Dims(5))))
    assert dataset_from_dict(doc).records[0] == rec


def test_write_raw_roundtrip(tmp_path):
    raw = parse_lines([HEADER, "0110,2", "0001,5"])
    p = tmp_path / "w.csv"
    with open(p, "w") as fh:
        write_raw(raw, fh)
    assert ingest(p).entries == raw.entries


def test_load_dataset_parallel(tmp_path):
    paths = []
    for i in range(6):
        paths.append(_write(tmp_path, f"c{i}.csv", [f"# n_qubits=4 circuit=c{i}", f"0000,{10 + i}", "0001,2"]))
    a = load_dataset(paths, 2, threads=1)
    b = load_dataset(paths, 2, threads=4)
    assert a.records == b.records and a.provenance == b.provenance
    assert [r.circuit_id for r in a.records] == [f"c{i}" for i in range(6)]
    assert all(len(h) == 64 for _, h in a.provenance)


def test_dataset_checks(tmp_path):
    p1 = _write(tmp_path, "a.csv", ["# n_qubits=4 circuit=same", "0000,1"])
    p2 = _write(tmp_path, "b.csv", ["# n_qubits=4 circuit=same", "0000,1"])
    p3 = _write(tmp_path, "c.csv", ["# n_qubits=5 circuit=other", "00000,1"])
    with pytest.raises(ParseError, match="duplicate"):
        load_dataset([p1, p2], 1)
    with pytest.raises(ParseError, match="n_qubits"):
        load_dataset([p1, p3], 1)


def test_records_document_roundtrip(tmp_path):
    ds = Dataset((MeasurementRecord("a", 100, (50, 20)), MeasurementRecord("b", 90, (40, 30), True)), Dims(4))
    p = tmp_path / "r.json"
    persist_result(ds, p)
    back = read_records(p)
    assert back.records == ds.records and back.dims == ds.dims
    assert load_inputs([p], 20).records == ds.records
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "other"}')
    with pytest.raises(ParseError):
        read_records(bad)
    bad.write_text('{"format": ')
    with pytest.raises(ParseError):
        read_records(bad)


def test_canonical_json():
    text = canonical_json({"b": 0.1 + 0.2, "a": [1, 2.5, float("nan")], "c": {"z": None, "y": True}})
    assert text == ('{\n  "a": [1, 2.5, null],\n  "b": 0.3,\n  "c": {\n    "y": true,\n'
                    '    "z": null\n  }\n}\n')
    assert canonical_json(1 / 3) == "0.333333333333\n"


def test_persist_is_byte_stable(tmp_path):
    d = Dims(8)
    recs = [MeasurementRecord(f"c{i}", 10**5, (2000 + i, 1500, 1300)) for i in range(3)]
    res = estimate(recs, RankSelection.contiguous(1, 3), d)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    persist_result(res, a)
    persist_result(res, b)
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "curve.csv"
    persist_result(res.curve, c)
    lines = c.read_text().splitlines()
    assert lines[0] == "f,loglik" and len(lines) == 201
    assert b"\r" not in c.read_bytes()


def test_scaling_csv_header():
    row = ScalingRow(12, RankSelection.parse("1,2"), 0.01, 0.02, 0.006, 0.001, (0.47, 0.49))
    text = render([row], ".csv")
    assert text.splitlines()[0].startswith("n_qubits,mean_error,std_error")
    assert text.splitlines()[1].startswith("12,0.01,0.02,")


def test_io_failures_surface(tmp_path):
    with pytest.raises(FileNotFoundError):
        ingest(tmp_path / "missing.csv")
    with pytest.raises(OSError):
        persist_result({"a": 1}, tmp_path / "no" / "such" / "dir.json")


def test_convert_samples():
    raw = convert_sycamore(["5", "000101", "63", "# note", "", "5"], 6, "circ")
    assert dict(raw.entries) == {"000101": 3, "111111": 1}
    with pytest.raises(ParseError):
        convert_sycamore(["64"], 6, "c")
    with pytest.raises(ParseError):
        convert_sycamore([], 6, "c")
