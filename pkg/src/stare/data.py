"""Dataset container and its CSV serialization.

The on-disk format is a plain comma-separated file with a header row.
Observation columns are named ``x0 .. x{D-1}``; an optional trailing
integer ``label`` column carries ground-truth component labels, where the
reserved value -1 marks rows whose truth is unknown.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass
class Dataset:
    """N observations in R^D, optionally with ground-truth labels.

    ``observations`` is always a float matrix of shape (N, D); univariate and
    count data use D = 1.  ``labels`` is either None or an int vector of
    length N with values >= -1.
    """

    observations: np.ndarray
    labels: np.ndarray | None = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.observations, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1:
            raise DataError(f"observations must be a non-empty (N, D) matrix, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("observations contain non-finite values")
        self.observations = x
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (x.shape[0],):
                raise DataError(f"labels must have shape ({x.shape[0]},), got {lab.shape}")
            if not np.all(lab == np.floor(lab)):
                raise DataError("labels must be integers")
            lab = lab.astype(int)
            if lab.min(initial=0) < -1:
                raise DataError("labels must be >= -1 (-1 is the reserved 'unknown' value)")
            self.labels = lab

    @property
    def n(self) -> int:
        return self.observations.shape[0]

    @property
    def dim(self) -> int:
        return self.observations.shape[1]


def write_csv(dataset: Dataset, path: str) -> None:
    """Write a dataset as CSV: header, '.' decimals, one row per observation."""
    x = dataset.observations
    cols = [f"x{d}" for d in range(dataset.dim)]
    if dataset.labels is not None:
        cols.append("label")
    lines = [",".join(cols)]
    for i in range(dataset.n):
        row = [format(v, ".17g") for v in x[i]]
        if dataset.labels is not None:
            row.append(str(int(dataset.labels[i])))
        lines.append(",".join(row))
    from .util import atomic_write_text

    atomic_write_text(path, "\n".join(lines) + "\n")


def read_csv(path: str, name: str | None = None) -> Dataset:
    """Read a dataset written by :func:`write_csv` (or any matching CSV)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header:
            raise DataError(f"{path}: empty file")
        cols = [c.strip() for c in header.split(",")]
        expected = [f"x{d}" for d in range(len(cols))]
        has_label = cols and cols[-1] == "label"
        data_cols = cols[:-1] if has_label else cols
        if data_cols != expected[: len(data_cols)] or not data_cols:
            raise DataError(
                f"{path}: header must be x0,...,x{{D-1}}[,label], got {header!r}"
            )
        try:
            body = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise DataError(f"{path}: could not parse numeric rows ({exc})") from exc
    if body.size == 0:
        raise DataError(f"{path}: no data rows")
    if body.shape[1] != len(cols):
        raise DataError(f"{path}: rows have {body.shape[1]} fields, header has {len(cols)}")
    labels = None
    if has_label:
        labels = body[:, -1]
        if not np.all(labels == np.floor(labels)):
            raise DataError(f"{path}: label column must contain integers")
        body = body[:, :-1]
    if name is None:
        import os

        name = os.path.splitext(os.path.basename(path))[0]
    return Dataset(observations=body, labels=labels, name=name)
