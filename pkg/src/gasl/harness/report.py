"""Result tables: CSV, aligned text grid with best-cell marks, and average model ranks."""

from __future__ import annotations

import csv
import io
import json
import logging
from collections import defaultdict
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from gasl.datamodel import ResultRecord, atomic_write_text
from gasl.errors import EmptyReport, IngestError

log = logging.getLogger(__name__)

CSV_COLUMNS = ("dataset", "model", "task", "shots", "provenance_x", "provenance_a", "Z", "ZT", "U", "S", "H", "HT", "seed")
H_TOLERANCE = 0.05


def load_records(directory) -> list[ResultRecord]:
    records = []
    for f in sorted(Path(directory).glob("*.json")):
        try:
            records.append(ResultRecord.from_dict(json.loads(f.read_text())))
        except (json.JSONDecodeError, TypeError, KeyError) as exc:
            raise IngestError(f"cannot read result record {f}: {exc}") from exc
    return records


def _fmt(v, digits=1):
    if v is None:
        return "--"
    return f"{v:.{digits}f}"


def consistency_warnings(records) -> list[str]:
    out = []
    for r in records:
        gap = r.h_mismatch()
        if gap > H_TOLERANCE:
            out.append(f"{r.dataset}/{r.model}/{r.task}: stored H={r.H} differs from 2US/(U+S) by {gap:.3f}")
    return out


def _score(r: ResultRecord):
    return r.H if r.H is not None else r.Z


def _cell_key(r: ResultRecord):
    return (r.dataset, r.task, r.shots, r.provenance_x, r.provenance_a)


def rank_table(records) -> dict[tuple, dict[str, float]]:
    """Per (task, shots): each model's rank within every (dataset, provenance) cell, averaged over cells."""
    cells = defaultdict(dict)
    for r in records:
        s = _score(r)
        if s is not None:
            cells[_cell_key(r)][r.model] = s
    ranks = defaultdict(lambda: defaultdict(list))
    for key, scores in cells.items():
        models = sorted(scores)
        # Rank 1 = best; ties share the average rank.
        rk = rankdata([-scores[m] for m in models], method="average")
        for m, v in zip(models, rk):
            ranks[(key[1], key[2])][m].append(float(v))
    return {group: {m: float(np.mean(v)) for m, v in sorted(per.items())} for group, per in sorted(ranks.items(), key=str)}


def render_text(records) -> str:
    best = defaultdict(lambda: {"Z": -1.0, "H": -1.0})
    for r in records:
        b = best[_cell_key(r)]
        if r.Z is not None:
            b["Z"] = max(b["Z"], r.Z)
        if r.H is not None:
            b["H"] = max(b["H"], r.H)
    header = ["dataset", "model", "task", "N", "vis", "sem", "Z", "U", "S", "H"]
    rows = []
    for r in sorted(records, key=lambda r: (r.dataset, r.task, r.shots or 0, r.model)):
        b = best[_cell_key(r)]
        z = _fmt(r.Z) + ("*" if r.Z is not None and r.Z == b["Z"] else "")
        h = _fmt(r.H) + ("*" if r.H is not None and r.H == b["H"] else "")
        rows.append([r.dataset, r.model, r.task, "" if r.shots is None else str(r.shots), r.provenance_x,
                     r.provenance_a, z, _fmt(r.U), _fmt(r.S), h])
    widths = [max(len(x) for x in col) for col in zip(header, *rows)]
    lines = ["  ".join(x.ljust(w) for x, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(x.ljust(w) for x, w in zip(row, widths)) for row in rows]
    return "\n".join(lines) + "\n"


def render_ranks(ranks) -> str:
    lines = []
    for (task, shots), per in ranks.items():
        label = task if shots is None else f"{task} N={shots}"
        lines.append(f"[{label}]")
        for m, v in sorted(per.items(), key=lambda kv: (kv[1], kv[0])):
            lines.append(f"  {m:<12s} {v:.2f}")
    return "\n".join(lines) + "\n"


def render_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(CSV_COLUMNS)
    for r in records:
        d = r.to_dict()
        w.writerow(["" if d[c] is None else d[c] for c in CSV_COLUMNS])
    return buf.getvalue()


def emit_report(records, out_dir) -> dict:
    """Write results.csv, results.txt and ranks.txt; returns paths and warnings."""
    records = list(records)
    if not records:
        raise EmptyReport("no result records to report")
    warnings = consistency_warnings(records)
    for w in warnings:
        log.warning(w)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ranks = rank_table(records)
    text = render_text(records)
    if warnings:
        text += "\nwarnings:\n" + "\n".join(f"  {w}" for w in warnings) + "\n"
    atomic_write_text(out_dir / "results.csv", render_csv(records))
    atomic_write_text(out_dir / "results.txt", text)
    atomic_write_text(out_dir / "ranks.txt", render_ranks(ranks))
    return {
        "csv": out_dir / "results.csv",
        "text": out_dir / "results.txt",
        "ranks": out_dir / "ranks.txt",
        "warnings": warnings,
        "rank_table": ranks,
    }
