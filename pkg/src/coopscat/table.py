"""Result tables (CSV with a commented metadata header) and flat config files."""

import csv
import hashlib
import io
import json
import math

from . import __version__
from .core import UNITS_STATEMENT
from .errors import ContractViolation


class ResultTable:
    """Column-labelled table plus metadata.

    Failed points are kept as rows whose ``status`` column carries the error
    name and whose numeric cells are empty, so no NaN ever reaches the file.
    """

    def __init__(self, columns, units=None, meta=None):
        self.columns = list(columns)
        if "status" not in self.columns:
            self.columns.append("status")
        self.units = dict(units or {})
        self.meta = dict(meta or {})
        self.rows = []

    def add(self, status="ok", **values):
        row = {c: values.get(c) for c in self.columns}
        row["status"] = status
        self.rows.append(row)

    @property
    def n_failed(self):
        return sum(1 for r in self.rows if r["status"] != "ok")

    def column(self, name):
        return [r[name] for r in self.rows]

    def ok_rows(self):
        return [r for r in self.rows if r["status"] == "ok"]

    @staticmethod
    def _fmt(v):
        if v is None:
            return ""
        if hasattr(v, "item") and not isinstance(v, (str, bytes)):
            v = v.item()
        if isinstance(v, bool):
            return "1" if v else "0"
        if isinstance(v, float):
            if not math.isfinite(v):
                return ""
            return repr(v)
        return str(v)

    def header_lines(self):
        lines = ["artifact: coopscat %s" % __version__, "units: %s" % UNITS_STATEMENT]
        for key in sorted(self.meta):
            val = self.meta[key]
            if not isinstance(val, str):
                val = json.dumps(val, sort_keys=True, default=_json_default)
            lines.append("%s: %s" % (key, val))
        lines.append("failed_rows: %d" % self.n_failed)
        for c in self.columns:
            if c in self.units:
                lines.append("column %s: %s" % (c, self.units[c]))
        return ["# " + ln for ln in lines]

    def to_csv(self):
        buf = io.StringIO()
        for ln in self.header_lines():
            buf.write(ln + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([self._fmt(r[c]) for c in self.columns])
        return buf.getvalue()

    def write(self, path, sidecar=False):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())
        if sidecar:
            info = {"artifact": "coopscat %s" % __version__, "units": UNITS_STATEMENT,
                    "columns": self.columns, "column_units": self.units,
                    "failed_rows": self.n_failed, **self.meta}
            with open(str(path) + ".json", "w") as fh:
                json.dump(info, fh, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    try:
        import numpy as np

        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
    except ImportError:  # pragma: no cover
        pass
    return str(o)


def read_csv(path):
    """Read a table written by ``ResultTable``: returns (meta lines dict, rows)."""
    meta = {}
    body = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("# "):
                key, _, val = line[2:].rstrip("\n").partition(": ")
                meta[key] = val
            else:
                body.append(line)
    rows = list(csv.DictReader(body))
    return meta, rows


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, default=_json_default).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def read_config_file(path):
    """Parse a flat ``key = value`` (or ``key: value``) file; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, val = line.split("=", 1)
            elif ":" in line:
                key, val = line.split(":", 1)
            else:
                raise ContractViolation("%s:%d: expected key = value" % (path, lineno))
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def write_config_file(path, config):
    with open(path, "w") as fh:
        for key in sorted(config):
            val = config[key]
            if val is None:
                continue
            if isinstance(val, (list, tuple)):
                val = ",".join(str(v) for v in val)
            fh.write("%s = %s\n" % (key.replace("_", "-"), val))
