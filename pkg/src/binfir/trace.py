"""Run traces and their CSV form.

CSV schema (long format, one value per row)::

    t,j,estimate_kind,index,value

``t`` is the protocol slot, ``j`` the iteration count completed by then and
``index`` is 1-based within each estimate kind.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .exceptions import OutputError
from .plant import ChannelLog

CSV_COLUMNS = ("t", "j", "estimate_kind", "index", "value")


@dataclass(eq=False)
class RunTrace:
    algorithm: str
    t: np.ndarray
    j: np.ndarray
    estimates: dict[str, np.ndarray]
    truncations: int = 0
    channel_log: ChannelLog | None = None
    horizon: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return int(self.t.size)

    def final(self, kind: str) -> np.ndarray:
        return self.estimates[kind][-1]

    def rows(self):
        for r in range(self.t.size):
            t, j = int(self.t[r]), int(self.j[r])
            for kind, values in self.estimates.items():
                for k, v in enumerate(values[r], start=1):
                    if values.dtype.kind in "iu":
                        yield t, j, kind, k, int(v)
                    else:
                        yield t, j, kind, k, repr(float(v))

    def to_csv(self, path=None) -> str | None:
        """Write to ``path``; return the text when no path is given."""
        if path is None:
            buf = io.StringIO()
            self._write(buf)
            return buf.getvalue()
        try:
            with open(path, "w", newline="") as fh:
                self._write(fh)
        except OSError as exc:
            raise OutputError(f"cannot write trace to {path}: {exc}") from exc
        return None

    def _write(self, fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(self.rows())


def log_grid(horizon: int, per_decade: int = 10, start: int = 10) -> np.ndarray:
    """Integer checkpoints spaced evenly in log10 from ``start`` to ``horizon``,
    always including every power of ten in range and ``horizon`` itself."""
    if horizon < 1:
        return np.zeros(0, dtype=np.int64)
    if horizon < start:
        return np.array([horizon], dtype=np.int64)
    e0 = int(np.floor(np.log10(start) * per_decade + 1e-9))
    e1 = int(np.ceil(np.log10(horizon) * per_decade + 1e-9))
    pts = np.rint(10.0 ** (np.arange(e0, e1 + 1) / per_decade)).astype(np.int64)
    pts = pts[(pts >= start) & (pts <= horizon)]
    return np.unique(np.concatenate([pts, [horizon]]))


def validate_checkpoints(checkpoints, horizon: int) -> np.ndarray:
    if checkpoints is None:
        return log_grid(horizon)
    cp = np.unique(np.asarray(checkpoints, dtype=np.int64))
    if cp.size and (cp[0] < 0 or cp[-1] > horizon):
        raise ValueError(f"checkpoints must lie in [0, {horizon}]")
    return cp
