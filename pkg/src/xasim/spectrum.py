"""Spectrum containers and the CSV / JSON artifacts shared by every estimator."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from xasim.errors import ValidationError

CSV_COLUMNS = ("omega", "im_g", "c_eta", "sigma", "stderr", "n_samples")


@dataclass(frozen=True, eq=False)
class SpectrumEstimate:
    """Estimated spectral quantity on a grid.

    ``quantity`` is one of ``c_eta`` (grid in rescaled units x), ``im_g`` or
    ``sigma`` (grid in energy units). ``meta`` carries run diagnostics.
    """

    grid: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    n_samples: int
    seed: int | None = None
    quantity: str = "c_eta"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        value = np.asarray(self.value, dtype=float)
        stderr = np.broadcast_to(np.asarray(self.stderr, dtype=float), value.shape).copy()
        if grid.shape != value.shape:
            raise ValidationError("grid and value lengths differ")
        if np.any(stderr < 0):
            raise ValidationError("negative standard error")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "stderr", stderr)


@dataclass(eq=False)
class SpectrumTable:
    """Row-aligned columns of the spectrum CSV.

    ``stderr`` is the standard error of the ``sigma`` column.
    """

    omega: np.ndarray
    im_g: np.ndarray
    c_eta: np.ndarray
    sigma: np.ndarray
    stderr: np.ndarray
    n_samples: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.omega).size
        for name in CSV_COLUMNS:
            col = np.asarray(getattr(self, name))
            col = np.broadcast_to(col, (n,)).copy()
            setattr(self, name, col.astype(int) if name == "n_samples" else col.astype(float))

    def column(self, name: str) -> np.ndarray:
        if name not in CSV_COLUMNS:
            raise ValidationError(f"unknown column {name!r}")
        return getattr(self, name)


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def spectrum_csv_text(table: SpectrumTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for i in range(table.omega.size):
        writer.writerow(
            [_fmt(table.omega[i]), _fmt(table.im_g[i]), _fmt(table.c_eta[i]),
             _fmt(table.sigma[i]), _fmt(table.stderr[i]), str(int(table.n_samples[i]))]
        )
    return buf.getvalue()


def atomic_write_text(path, text: str) -> None:
    """Write to a temporary sibling file and rename it into place."""
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


def write_spectrum_csv(path, table: SpectrumTable) -> None:
    atomic_write_text(path, spectrum_csv_text(table))


def read_spectrum_csv(path) -> SpectrumTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise ValidationError(f"{path}: expected header {','.join(CSV_COLUMNS)}")
        rows = [r for r in reader if r]
    cols = list(zip(*rows)) if rows else [()] * len(CSV_COLUMNS)
    data = {name: np.array([float(v) for v in col]) for name, col in zip(CSV_COLUMNS, cols)}
    return SpectrumTable(**data)


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_json(path, obj) -> None:
    atomic_write_text(path, json_text(obj))
