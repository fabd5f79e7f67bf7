"""Per-iteration metrics shared by the trainer and the baselines."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

CSV_HEADER = ("iteration", "l2_error", "r_estimate", "wall_ms")


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


@dataclass
class Trace:
    """Rows of ``(iteration, l2_error, r_estimate, wall_ms)``; missing values are ``None``."""

    iteration: list = field(default_factory=list)
    l2_error: list = field(default_factory=list)
    r_estimate: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)

    def append(self, iteration, l2_error=None, r_estimate=None, wall_ms=None):
        self.iteration.append(int(iteration))
        self.l2_error.append(l2_error)
        self.r_estimate.append(r_estimate)
        self.wall_ms.append(wall_ms)

    def __len__(self):
        return len(self.iteration)

    def write_csv(self, path, wall_clock: bool = False) -> None:
        """Write the trace; ``wall_ms`` is left blank unless ``wall_clock`` so files are reproducible."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for i in range(len(self)):
                w.writerow([
                    self.iteration[i],
                    _fmt(self.l2_error[i]),
                    _fmt(self.r_estimate[i]),
                    _fmt(self.wall_ms[i]) if wall_clock else "",
                ])

    @classmethod
    def read_csv(cls, path) -> "Trace":
        out = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                out.append(
                    int(row["iteration"]),
                    *(float(row[k]) if row[k] else None for k in CSV_HEADER[1:]),
                )
        return out

    def first_below(self, threshold: float):
        """Index of the first row whose error is ``<= threshold``, or ``None``."""
        for i, e in enumerate(self.l2_error):
            if e is not None and e <= threshold:
                return i
        return None
