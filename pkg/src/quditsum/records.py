"""CSV and JSON emission with a shared 12-significant-digit float format."""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Iterable, Sequence

from .adder import RunRecord

SIG_DIGITS = 12
RUN_CSV_HEADER = ("run_id", "checkpoint", "fidelity", "c_l1", "c_l1_norm")


def fmt(x) -> str:
    """Text form used in CSV cells."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        if not math.isfinite(x):
            return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
        return f"{x:.{SIG_DIGITS}g}"
    return str(x)


def rounded(x):
    """JSON value carrying exactly the digits :func:`fmt` prints."""
    if isinstance(x, float) and math.isfinite(x):
        return float(f"{x:.{SIG_DIGITS}g}")
    if isinstance(x, dict):
        return {k: rounded(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [rounded(v) for v in x]
    return x


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(rounded(obj), indent=2) + "\n"


def run_to_dict(rec: RunRecord, run_id: str = "run-0", with_distribution: bool = False) -> dict:
    out = {
        "run_id": run_id,
        "config": rec.config.as_dict(),
        "decoded": rec.decoded,
        "success_prob": rec.success_prob,
        "gate_count": rec.gate_count,
        "depth": rec.depth,
        "samples": [s.as_dict() for s in rec.samples],
    }
    if rec.b_register is not None:
        out["b_register"] = [{"digits": list(k), "prob": v} for k, v in sorted(rec.b_register.items())]
    if with_distribution and rec.distribution is not None:
        out["distribution"] = [float(v) for v in rec.distribution]
    meta = {k: v for k, v in rec.metadata.items() if v is not None}
    if meta:
        out["metadata"] = meta
    return out


def run_csv_rows(rec: RunRecord, run_id: str = "run-0") -> list[tuple]:
    return [(run_id, s.label, s.fidelity, s.c_l1, s.c_l1_norm) for s in rec.samples]


def write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
