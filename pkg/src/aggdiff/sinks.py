"""Output sinks: CSV series streaming and per-record snapshot files."""

from __future__ import annotations

import csv
import os
from typing import Iterable

from .diagnostics import DiagnosticsRow
from .ensemble import EnsembleStats, MassCurveComparison
from .grid import Field
from .snapshots import write_pgm, write_snapshot


class CsvSeriesSink:
    """Streams diagnostics rows to a CSV file; one writer per output file."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(DiagnosticsRow.COLUMNS)

    def on_record(self, t: float, field: Field, row: DiagnosticsRow) -> None:
        self._writer.writerow([repr(v) if isinstance(v, float) else v
                               for v in row.astuple()])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SnapshotDirSink:
    """Writes one binary snapshot (and optionally a PGM heatmap) per record."""

    def __init__(self, out_dir, ubar: float, prefix: str = "state", pgm: bool = True):
        self.out_dir = out_dir
        self.ubar = ubar
        self.prefix = prefix
        self.pgm = pgm
        os.makedirs(out_dir, exist_ok=True)

    def _base(self, t: float) -> str:
        return os.path.join(self.out_dir, f"{self.prefix}_t{t:g}")

    def on_record(self, t: float, field: Field, row: DiagnosticsRow) -> None:
        write_snapshot(field, t, self._base(t) + ".snap")
        if self.pgm:
            write_pgm(field, self.ubar, self._base(t) + ".pgm")


def write_series_csv(path, rows: Iterable[DiagnosticsRow]) -> None:
    with CsvSeriesSink(path) as sink:
        for row in rows:
            sink.on_record(row.t, None, row)


def write_ensemble_csv(path, stats: EnsembleStats) -> None:
    """Per-record-time ensemble statistics table."""
    header = ["t"]
    for q in EnsembleStats.QUANTITIES:
        header += [f"mean_{q}", f"var_{q}", f"min_{q}", f"max_{q}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, t in enumerate(stats.record_times):
            row = [repr(float(t))]
            for q in EnsembleStats.QUANTITIES:
                row += [repr(float(stats.mean[q][k])), repr(float(stats.variance[q][k])),
                        repr(float(stats.min[q][k])), repr(float(stats.max[q][k]))]
            w.writerow(row)


def write_comparison_csv(path, comp: MassCurveComparison) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MassCurveComparison.COLUMNS)
        for row in comp.rows():
            w.writerow([repr(float(v)) for v in row])


def write_mass_csv(path, labelled_curves) -> None:
    """Aligned per-step mass curves: ``labelled_curves`` is [(label, times, mass)]."""
    labels = [c[0] for c in labelled_curves]
    times = labelled_curves[0][1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"mass_{lab}" for lab in labels])
        for k in range(len(times)):
            w.writerow([repr(float(times[k]))] +
                       [repr(float(c[2][k])) for c in labelled_curves])
