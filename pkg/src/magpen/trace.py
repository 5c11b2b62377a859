"""Per-tick session records and their on-disk forms (CSV / JSON-lines).

Float formatting uses repr (shortest round-trip), so identical runs serialize
byte-identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

COLUMNS = ("t", "pen_x", "pen_y", "est_x", "est_y", "mag_x", "mag_y",
           "alpha", "theta", "s_x", "s_y", "fa_x", "fa_y", "fth_x", "fth_y",
           "cost", "solve_ms")


@dataclass
class SessionTrace:
    rows: list = field(default_factory=list)   # list of 17-tuples, COLUMNS order
    meta: dict = field(default_factory=dict)

    def append(self, **kw):
        if len(self.rows) and kw["t"] <= self.rows[-1][0]:
            raise ValueError("trace timestamps must be strictly increasing")
        self.rows.append(tuple(float(kw[c]) for c in COLUMNS))

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        i = COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    def points(self, prefix):
        return np.column_stack([self.column(prefix + "_x"), self.column(prefix + "_y")])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(",".join(COLUMNS) + "\n")
            for row in self.rows:
                fh.write(",".join(repr(v) for v in row) + "\n")

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            for row in self.rows:
                fh.write(json.dumps(dict(zip(COLUMNS, row))) + "\n")

    @classmethod
    def from_csv(cls, path):
        trace = cls()
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != COLUMNS:
                raise ValueError(f"{path}: unexpected trace header {header}")
            for line in fh:
                vals = [float(v) for v in line.strip().split(",")]
                trace.rows.append(tuple(vals))
        return trace

    def validate(self):
        """Check the structural trace invariants; raises on violation."""
        t = self.column("t")
        if len(t) > 1 and not np.all(np.diff(t) > 0.0):
            raise ValueError("t not strictly increasing")
        for name in COLUMNS:
            col = self.column(name)
            if len(col) and not np.all(np.isfinite(col)):
                raise ValueError(f"non-finite values in column {name}")
        alpha = self.column("alpha")
        if len(alpha) and (alpha.min() < -1e-12 or alpha.max() > 1.0 + 1e-12):
            raise ValueError("alpha outside [0, 1]")
        return True
