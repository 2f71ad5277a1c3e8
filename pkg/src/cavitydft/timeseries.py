"""Uniformly sampled observable records and their tab-separated text format.

Files carry '#'-prefixed ``key = value`` metadata lines, then a header row
naming every column, then the samples.  All values are atomic units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError

_AXES = ("x", "y", "z")


@dataclass
class TimeSeries:
    """Column-oriented record of observables along a propagation.

    ``columns`` maps column name to a 1D float array; every column has the
    same length and ``t`` is always present.  ``meta`` carries the run
    parameters needed by post-processing (time step, kick strength, cavity
    frequency, ...).
    """

    columns: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if "t" not in self.columns:
            raise UsageError("a time series needs a 't' column")
        n = len(self.columns["t"])
        for name, col in self.columns.items():
            col = np.asarray(col, dtype=float)
            if col.shape != (n,):
                raise UsageError(f"column {name!r} has shape {col.shape}, expected ({n},)")
            if not np.all(np.isfinite(col)):
                raise UsageError(f"column {name!r} contains non-finite samples")
            self.columns[name] = col

    @property
    def t(self) -> np.ndarray:
        return self.columns["t"]

    @property
    def n_samples(self) -> int:
        return len(self.t)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def dipole(self, axis: int = 0) -> np.ndarray:
        return self.columns[f"D{_AXES[axis]}"]

    def sector_dipole(self, sector: int, axis: int = 0) -> np.ndarray:
        name = f"D{_AXES[axis]}_s{sector}"
        if name not in self.columns:
            raise UsageError(f"series has no sector-resolved dipole column {name!r}")
        return self.columns[name]

    @property
    def n_sector_columns(self) -> int:
        return sum(1 for name in self.columns if name.startswith("Dx_s"))

    def write(self, path, extra_meta: dict | None = None) -> None:
        meta = dict(self.meta)
        if extra_meta:
            meta.update(extra_meta)
        names = list(self.columns)
        data = np.column_stack([self.columns[n] for n in names])
        with open(path, "w") as fh:
            for key in sorted(meta):
                fh.write(f"# {key} = {meta[key]}\n")
            fh.write("\t".join(names) + "\n")
            for row in data:
                fh.write("\t".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def read(cls, path) -> "TimeSeries":
        meta = {}
        names = None
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                if line.startswith("#"):
                    body = line[1:].strip()
                    if "=" in body:
                        key, _, value = body.partition("=")
                        meta[key.strip()] = _parse_meta_value(value.strip())
                    continue
                if names is None:
                    names = line.split("\t")
                    continue
                rows.append([float(tok) for tok in line.split("\t")])
        if names is None or not rows:
            raise UsageError(f"no tabular data found in {path}")
        data = np.asarray(rows, dtype=float)
        if data.shape[1] != len(names):
            raise UsageError(f"column count mismatch in {path}")
        columns = {name: data[:, i].copy() for i, name in enumerate(names)}
        return cls(columns=columns, meta=meta)


def _parse_meta_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def axis_name(axis: int) -> str:
    return _AXES[axis]
