"""Ingestion of bitstring-count files, top-K records and result persistence.

Native file grammar (UTF-8)::

    # n_qubits=12 circuit=c07
    # any further comment line
    011010001101,4821          <- BitstringCounts: ``<bitstring>,<count>``
    011010001101               <- ShotList: one measured bitstring per line

The header line is required before the first data line. Blank lines are
ignored. Counts are the source of truth; probabilities are always derived.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from io import StringIO
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ParseCode, ParseError
from .estimator import EstimationResult, LikelihoodCurve, MeasurementRecord
from .orderstat import Dims

log = logging.getLogger(__name__)

RECORDS_FORMAT = "fidsta-records"
RECORDS_VERSION = 1

_HEADER_RE = re.compile(r"^#\s*n_qubits\s*=\s*(\S+)\s+circuit\s*=\s*(\S+)\s*$")


class FileFormat(str, Enum):
    BITSTRING_COUNTS = "counts"
    SHOT_LIST = "shots"


@dataclass(frozen=True, eq=False)
class RawShotFile:
    """A parsed input file. ``entries`` holds ``(bitstring, count)`` pairs or bare bitstrings."""

    format: FileFormat
    circuit_id: str
    n_qubits: int
    entries: tuple
    path: str | None = None

    @property
    def shots(self) -> int:
        if self.format is FileFormat.SHOT_LIST:
            return len(self.entries)
        return sum(c for _, c in self.entries)

    def counts(self) -> dict[str, int]:
        """Aggregated counts keyed by bitstring, in first-seen order."""
        if self.format is FileFormat.BITSTRING_COUNTS:
            return dict(self.entries)
        out: dict[str, int] = {}
        for b in self.entries:
            out[b] = out.get(b, 0) + 1
        return out


@dataclass(frozen=True, eq=False)
class Dataset:
    records: tuple[MeasurementRecord, ...]
    dims: Dims
    provenance: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        ids = [r.circuit_id for r in self.records]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ParseError(ParseCode.BAD_RECORDS, f"duplicate circuit ids: {', '.join(dup)}")

    def to_dict(self) -> dict:
        return {
            "format": RECORDS_FORMAT,
            "version": RECORDS_VERSION,
            "n_qubits": self.dims.n_qubits,
            "records": [r.to_dict() for r in self.records],
            "provenance": [{"path": p, "sha256": h} for p, h in self.provenance],
        }


# ---------------------------------------------------------------------------
# parsing


def _parse_header(line: str, path, lineno: int) -> tuple[int, str]:
    m = _HEADER_RE.match(line)
    if not m:
        raise ParseError(ParseCode.BAD_HEADER, f"expected '# n_qubits=<N> circuit=<id>', got {line!r}",
                         path=path, line=lineno)
    try:
        n = int(m.group(1))
        Dims(n)
    except (ValueError, ArithmeticError):
        raise ParseError(ParseCode.BAD_HEADER, f"invalid n_qubits {m.group(1)!r}", path=path, line=lineno) from None
    return n, m.group(2)


def _check_bits(bits: str, n: int, path, lineno: int):
    if len(bits) != n:
        if bits.strip("01"):
            raise ParseError(ParseCode.BAD_ALPHABET, f"{bits!r} is not a 0/1 string", path=path, line=lineno)
        raise ParseError(ParseCode.BAD_WIDTH, f"{bits!r} has {len(bits)} characters, expected {n}",
                         path=path, line=lineno)
    if bits.strip("01"):
        raise ParseError(ParseCode.BAD_ALPHABET, f"{bits!r} is not a 0/1 string", path=path, line=lineno)


def parse_lines(lines: Iterable[str], fmt=None, path=None) -> RawShotFile:
    """Parse an iterable of text lines; ``fmt=None`` detects the format from the first data line."""
    fmt = FileFormat(fmt) if fmt is not None else None
    header = None
    saw_content = False
    counts: dict[str, int] = {}
    shots: list[str] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        saw_content = True
        if line.startswith("#"):
            if header is None and "n_qubits" in line:
                header = _parse_header(line, path, lineno)
            continue
        if header is None:
            raise ParseError(ParseCode.MISSING_HEADER, "data before the '# n_qubits=<N> circuit=<id>' header",
                             path=path, line=lineno)
        if fmt is None:
            fmt = FileFormat.BITSTRING_COUNTS if "," in line else FileFormat.SHOT_LIST
        n = header[0]
        if fmt is FileFormat.SHOT_LIST:
            _check_bits(line, n, path, lineno)
            shots.append(line)
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(ParseCode.MALFORMED_LINE, f"expected '<bitstring>,<count>', got {line!r}",
                             path=path, line=lineno)
        bits, cnt = parts[0].strip(), parts[1].strip()
        _check_bits(bits, n, path, lineno)
        try:
            c = int(cnt)
        except ValueError:
            raise ParseError(ParseCode.MALFORMED_LINE, f"count {cnt!r} is not an integer",
                             path=path, line=lineno) from None
        if c < 0:
            raise ParseError(ParseCode.NEGATIVE_COUNT, f"negative count {c}", path=path, line=lineno)
        if c == 0:
            raise ParseError(ParseCode.ZERO_COUNT, "counts must be positive", path=path, line=lineno)
        if bits in counts:
            raise ParseError(ParseCode.DUPLICATE_KEY, f"bitstring {bits} listed twice", path=path, line=lineno)
        counts[bits] = c
    if not saw_content:
        raise ParseError(ParseCode.EMPTY_FILE, "file is empty", path=path)
    if header is None:
        raise ParseError(ParseCode.MISSING_HEADER, "no '# n_qubits=<N> circuit=<id>' header", path=path)
    if not counts and not shots:
        raise ParseError(ParseCode.EMPTY_FILE, "file has a header but no data lines", path=path)
    entries = tuple(shots) if fmt is FileFormat.SHOT_LIST else tuple(counts.items())
    return RawShotFile(fmt, header[1], header[0], entries, None if path is None else str(path))


def ingest(path, fmt=None) -> RawShotFile:
    """Read and validate one count or shot file."""
    with open(path, encoding="utf-8") as fh:
        return parse_lines(fh, fmt, path)


def to_record(raw: RawShotFile, top_k: int) -> MeasurementRecord:
    """Top-K ranked counts; equal counts keep first-seen order."""
    top_k = int(top_k)
    if top_k < 1:
        raise ConfigError("top_k must be >= 1")
    counts = raw.counts()
    ranked = sorted(counts.items(), key=lambda kv: -kv[1])  # sorted() is stable
    if len(ranked) < top_k:
        log.warning("%s: only %d distinct bitstrings observed, fewer than top_k=%d",
                    raw.circuit_id, len(ranked), top_k)
    kept = ranked[:top_k]
    return MeasurementRecord(raw.circuit_id, raw.shots, tuple(c for _, c in kept), truncated=len(kept) < top_k)


def top_bitstrings(raw: RawShotFile, top_k: int) -> list[tuple[str, int]]:
    return sorted(raw.counts().items(), key=lambda kv: -kv[1])[:top_k]


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def load_dataset(paths: Sequence, top_k: int, fmt=None, threads: int = 1) -> Dataset:
    """Ingest several files (in parallel) into one dataset, in the given order."""
    paths = [Path(p) for p in paths]
    if not paths:
        raise ParseError(ParseCode.BAD_RECORDS, "no input files")

    def one(p):
        raw = ingest(p, fmt)
        return to_record(raw, top_k), raw.n_qubits, _sha256(p)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            loaded = list(pool.map(one, paths))
    else:
        loaded = [one(p) for p in paths]
    ns = {n for _, n, _ in loaded}
    if len(ns) != 1:
        raise ParseError(ParseCode.BAD_RECORDS, f"files disagree on n_qubits: {sorted(ns)}")
    return Dataset(tuple(r for r, _, _ in loaded), Dims(ns.pop()),
                   tuple((str(p), h) for p, (_, _, h) in zip(paths, loaded)))


def dataset_from_dict(d: dict, path=None) -> Dataset:
    try:
        if d.get("format") != RECORDS_FORMAT:
            raise KeyError("format")
        dims = Dims(int(d["n_qubits"]))
        records = tuple(MeasurementRecord.from_dict(r) for r in d["records"])
        prov = tuple((p["path"], p["sha256"]) for p in d.get("provenance", []))
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(ParseCode.BAD_RECORDS, f"not a {RECORDS_FORMAT} document ({exc})", path=path) from None
    return Dataset(records, dims, prov)


def read_records(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(ParseCode.BAD_RECORDS, f"invalid JSON: {exc.msg}", path=path, line=exc.lineno) from None
    return dataset_from_dict(doc, path)


def load_inputs(paths: Sequence, top_k: int, fmt=None, threads: int = 1) -> Dataset:
    """Records documents (``.json``) and raw files may not be mixed; pick by suffix."""
    paths = [Path(p) for p in paths]
    if paths and all(p.suffix == ".json" for p in paths):
        sets = [read_records(p) for p in paths]
        dims = {s.dims for s in sets}
        if len(dims) != 1:
            raise ParseError(ParseCode.BAD_RECORDS, "records documents disagree on n_qubits")
        return Dataset(tuple(r for s in sets for r in s.records), sets[0].dims,
                       tuple(p for s in sets for p in s.provenance))
    if any(p.suffix == ".json" for p in paths):
        raise ParseError(ParseCode.BAD_RECORDS, "cannot mix records documents and raw count files")
    return load_dataset(paths, top_k, fmt, threads)


def convert_sycamore(lines: Iterable[str], n_qubits: int, circuit_id: str) -> RawShotFile:
    """Best-effort converter for public random-circuit sample dumps.

    Accepts one sample per line, either as an N-character bitstring or as a
    non-negative integer outcome index (written big-endian, most significant
    qubit first). Returns a BitstringCounts file.
    """
    Dims(n_qubits)
    counts: dict[str, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        if len(s) == n_qubits and not s.strip("01"):
            bits = s
        elif s.isdigit() and int(s) < 2**n_qubits:
            bits = format(int(s), f"0{n_qubits}b")
        else:
            raise ParseError(ParseCode.MALFORMED_LINE, f"neither a {n_qubits}-bit string nor an outcome index: {s!r}",
                             line=lineno)
        counts[bits] = counts.get(bits, 0) + 1
    if not counts:
        raise ParseError(ParseCode.EMPTY_FILE, "no samples")
    return RawShotFile(FileFormat.BITSTRING_COUNTS, circuit_id, n_qubits, tuple(counts.items()))


def write_raw(raw: RawShotFile, out) -> None:
    out.write(f"# n_qubits={raw.n_qubits} circuit={raw.circuit_id}\n")
    if raw.format is FileFormat.SHOT_LIST:
        for b in raw.entries:
            out.write(b + "\n")
    else:
        for b, c in raw.entries:
            out.write(f"{b},{c}\n")


# ---------------------------------------------------------------------------
# canonical output


def fmt_float(x: float) -> str:
    return format(float(x), ".12g")


def _plain(obj):
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    return obj


def _encode(obj, indent: int, level: int) -> str:
    obj = _plain(obj)
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if obj is None or obj is True or obj is False or isinstance(obj, (str, int)) and not isinstance(obj, float):
        return json.dumps(obj)
    if isinstance(obj, float):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in sorted(obj.items())]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(_plain(v), (int, float)) and not isinstance(_plain(v), bool) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[" + pad + ("," + pad).join(_encode(v, indent, level + 1) for v in obj) + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj) -> str:
    """Sorted keys, 12 significant digits, non-finite floats as null, trailing newline."""
    return _encode(obj, 2, 0) + "\n"


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def curve_csv(curve: LikelihoodCurve) -> str:
    return _csv_text(("f", "loglik"), zip(curve.f.tolist(), curve.loglik.tolist()))


def scaling_csv(rows) -> str:
    header = ("n_qubits", "mean_error", "std_error", "ranks", "sem", "bias", "trials")
    return _csv_text(header, ((r.n_qubits, r.mean_error, r.std_error, r.ranks.description, r.sem, r.bias,
                               len(r.estimates)) for r in rows))


def trials_csv(estimates, truth: float) -> str:
    rows = []
    for i, f in enumerate(np.asarray(estimates, dtype=np.float64).tolist()):
        err = abs(f - truth)
        rows.append((i, f, err, err / truth if truth > 0 else float("nan")))
    return _csv_text(("trial", "f_hat", "abs_error", "rel_error"), rows)


def render(obj, suffix: str = ".json") -> str:
    """Text form of a result object; CSV for curves, scaling tables and trial arrays."""
    csv_wanted = suffix.lower() == ".csv"
    if isinstance(obj, LikelihoodCurve):
        return curve_csv(obj) if csv_wanted else canonical_json(
            {"f_hat": obj.f_hat, "width": obj.width, "at_boundary": obj.at_boundary,
             "f": obj.f, "loglik": obj.loglik})
    if isinstance(obj, EstimationResult) and csv_wanted:
        if obj.curve is None:
            raise ValueError("estimation result carries no curve to write as CSV")
        return curve_csv(obj.curve)
    if isinstance(obj, (list, tuple)) and obj and all(hasattr(r, "mean_error") for r in obj):
        return scaling_csv(obj) if csv_wanted else canonical_json([_scaling_dict(r) for r in obj])
    return canonical_json(obj)


def _scaling_dict(r) -> dict:
    return {"n_qubits": r.n_qubits, "ranks": list(r.ranks.ranks), "mean_error": r.mean_error,
            "std_error": r.std_error, "sem": r.sem, "bias": r.bias, "estimates": list(r.estimates)}


def write_text(text: str, path) -> None:
    """Write to ``path`` (``-`` or None means stdout) with LF line endings."""
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def persist_result(obj, path) -> None:
    write_text(render(obj, Path(str(path)).suffix if path not in (None, "-") else ".json"), path)
