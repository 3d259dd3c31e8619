"""Labelled learner data and its CSV format (``y,m,x1..xk`` or ``r,m,x1..xk``)."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class LabeledSample:
    x: np.ndarray
    y: float
    m: float


@dataclass(frozen=True)
class LearnerDataset:
    """Features ``x`` (N, k), labels ``y`` and market estimates ``m``.

    ``r`` holds the hidden true values when the data are synthetic; it is used
    for audit metrics only, never for training.
    """

    x: np.ndarray
    y: np.ndarray
    m: np.ndarray
    mode: str = "betting"
    r: np.ndarray | None = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        object.__setattr__(self, "m", np.asarray(self.m, dtype=float))
        if not (x.shape[0] == self.y.shape[0] == self.m.shape[0]):
            raise DomainError("x, y and m must have the same number of rows")
        if self.mode == "betting" and np.any((self.m <= 0.0) | (self.m >= 1.0)):
            raise DomainError("betting-mode market probabilities must lie in (0,1)")

    def __len__(self):
        return self.y.shape[0]

    def __iter__(self) -> Iterator[LabeledSample]:
        for i in range(len(self)):
            yield LabeledSample(self.x[i], float(self.y[i]), float(self.m[i]))

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def slice(self, start: int, stop: int | None = None) -> "LearnerDataset":
        s = slice(start, stop)
        return LearnerDataset(
            self.x[s], self.y[s], self.m[s], self.mode, None if self.r is None else self.r[s]
        )

    def split(self, train: float | int) -> tuple["LearnerDataset", "LearnerDataset"]:
        """Chronological split: a float is the training share, an int the training row count."""
        cut = train if isinstance(train, (int, np.integer)) else int(round(train * len(self)))
        if not (0 < cut < len(self)):
            raise DomainError("split leaves an empty train or test part")
        return self.slice(0, cut), self.slice(cut)

    def to_csv(self) -> str:
        buf = io.StringIO()
        label = "y" if self.mode == "betting" else "r"
        cols = [label, "m"] + [f"x{j + 1}" for j in range(self.dim)]
        buf.write(",".join(cols) + "\n")
        for i in range(len(self)):
            vals = [self.y[i], self.m[i], *self.x[i]]
            buf.write(",".join(f"{v:.12g}" for v in vals) + "\n")
        return buf.getvalue()


def read_dataset_csv(text: str) -> LearnerDataset:
    """Parse dataset CSV text; errors carry the 1-based line number."""
    lines = [ln for ln in text.splitlines()]
    reader = csv.reader(lines)
    header = None
    rows = []
    for lineno, row in enumerate(reader, start=1):
        if not row or row[0].lstrip().startswith("#"):
            continue
        if header is None:
            header = [c.strip() for c in row]
            k = len(header) - 2
            expect_tail = [f"x{j + 1}" for j in range(k)]
            if k < 1 or header[0] not in ("y", "r") or header[1] != "m" or header[2:] != expect_tail:
                raise ConfigError(
                    f"dataset header must be 'y,m,x1,...,xk' or 'r,m,x1,...,xk', got {','.join(header)}",
                    lineno,
                )
            continue
        if len(row) != len(header):
            raise ConfigError(f"expected {len(header)} fields, found {len(row)}", lineno)
        try:
            vals = [float(v) for v in row]
        except ValueError as exc:
            raise ConfigError(f"non-numeric field ({exc})", lineno) from None
        if not np.all(np.isfinite(vals)):
            raise ConfigError("non-finite value", lineno)
        mode = "betting" if header[0] == "y" else "stock"
        if mode == "betting" and (vals[0] not in (0.0, 1.0) or not (0.0 < vals[1] < 1.0)):
            raise ConfigError("betting rows need y in {0,1} and m in (0,1)", lineno)
        rows.append(vals)
    if header is None or not rows:
        raise ConfigError("dataset is empty")
    arr = np.array(rows)
    return LearnerDataset(arr[:, 2:], arr[:, 0], arr[:, 1], "betting" if header[0] == "y" else "stock")
