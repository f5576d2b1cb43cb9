"""Estimate reports: rows of checks with pass/fail/not_applicable/observed status."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .comparison import BoundCheck

STATUSES = ("pass", "fail", "not_applicable", "observed")
CSV_COLUMNS = ("context", "status", "sense", "measured", "bound", "margin", "tol_analytic", "tol_mesh",
               "tol_sampling", "samples", "note")


def _clean(x):
    """JSON-safe value: non-finite floats become strings, numpy scalars become Python ones."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "tolist"):
        return _clean(x.tolist())
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class EstimateReport:
    """Ordered check rows plus free-form tables and metadata."""

    rows: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add_check(self, check: BoundCheck, note=""):
        row = {k: v for k, v in check.as_row().items()}
        row["note"] = note
        self.rows.append(row)
        return check

    def add_field(self, fld, note=""):
        """Add the worst entry of a :class:`~qiharmonic.harness.CheckField`, noting the violation count."""
        extra = f"{fld.violations} of {fld.n} violate"
        return self.add_check(fld.worst(), f"{extra}; {note}" if note else extra)

    def add_not_applicable(self, context, reason):
        self.rows.append({"context": context, "status": "not_applicable", "note": reason})

    def add_observed(self, context, value, note=""):
        self.rows.append({"context": context, "status": "observed", "measured": float(value), "note": note})

    def add_table(self, name, rows):
        self.tables[name] = rows

    def extend(self, other: "EstimateReport", prefix=""):
        for r in other.rows:
            r = dict(r)
            r["context"] = prefix + r["context"]
            self.rows.append(r)
        for k, v in other.tables.items():
            self.tables[prefix + k] = v

    def count(self, status):
        return sum(1 for r in self.rows if r["status"] == status)

    @property
    def failed(self):
        return self.count("fail") > 0

    @property
    def exit_code(self):
        return 2 if self.failed else 0

    def summary(self):
        return {s: self.count(s) for s in STATUSES}

    def to_json(self):
        doc = {"meta": self.meta, "summary": self.summary(), "checks": self.rows, "tables": self.tables}
        return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (repr(r[k]) if isinstance(r.get(k), float) else r.get(k, "")) for k in CSV_COLUMNS})
        return buf.getvalue()

    def write(self, out_dir, stem="report"):
        out = Path(out_dir)
        atomic_write_text(out / f"{stem}.json", self.to_json())
        atomic_write_text(out / f"{stem}.csv", self.to_csv())
        return out / f"{stem}.json", out / f"{stem}.csv"
