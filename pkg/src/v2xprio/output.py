"""Byte-stable writers for records, summaries, CDFs, sweeps and MAC traces.

Number formatting is fixed so that identical runs give identical files:
times and latencies use three decimals, CDF values six, and JSON is
written with sorted keys and summary floats pre-rounded to six decimals.
Missing values are empty CSV fields or JSON ``null``.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Sequence

from .simcore import CdfBin, OUTCOMES, RecordTable, SWEEP_COLUMNS

RECORD_HEADER = ("msg_id", "tx_id", "rx_id", "gen_time_ms", "rx_time_ms", "latency_ms", "priority", "outcome")
CDF_HEADER = ("bin_left_ms", "bin_right_ms", "count", "cdf")
TRACE_HEADER = ("slot", "vehicle", "action", "resource", "cause")


def _fmt(x: float | None, decimals: int = 3) -> str:
    return "" if x is None else f"{x:.{decimals}f}"


def records_csv(table: RecordTable) -> str:
    buf = io.StringIO()
    buf.write(",".join(RECORD_HEADER) + "\n")
    names = [o.value for o in OUTCOMES]
    gen = table.gen_slot * table.slot_ms
    rx = table.rx_slot * table.slot_ms
    for i in range(len(table)):
        ok = table.outcome[i] == 0
        buf.write("%d,%d,%d,%s,%s,%s,%s,%s\n" % (
            table.msg_id[i], table.tx_id[i], table.rx_id[i], _fmt(gen[i]),
            _fmt(rx[i]) if ok else "", _fmt(rx[i] - gen[i]) if ok else "",
            "High" if table.high[i] else "Normal", names[table.outcome[i]],
        ))
    return buf.getvalue()


def write_records_csv(path: Path, table: RecordTable) -> None:
    Path(path).write_text(records_csv(table))


def read_records_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summary_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


def write_summary_json(path: Path, summary: dict) -> None:
    Path(path).write_text(summary_json(summary))


def cdf_csv(bins: Sequence[CdfBin]) -> str:
    lines = [",".join(CDF_HEADER)]
    lines += [f"{_fmt(b.bin_left_ms)},{_fmt(b.bin_right_ms)},{b.count},{b.cdf:.6f}" for b in bins]
    return "\n".join(lines) + "\n"


def write_cdf_csv(path: Path, bins: Sequence[CdfBin]) -> None:
    Path(path).write_text(cdf_csv(bins))


def write_sweep_csv(path: Path, rows: Iterable[dict]) -> None:
    lines = [",".join(SWEEP_COLUMNS)]
    for r in rows:
        cells = []
        for col in SWEEP_COLUMNS:
            v = r[col]
            if col == "seed":
                cells.append(str(v))
            elif col == "theta":
                cells.append(_fmt(v))
            else:
                cells.append(_fmt(v, 6))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def write_trace_csv(path: Path, trace: Iterable[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        w.writerows(trace)

