"""Tabular data container and CSV I/O."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    covariates: tuple[str, ...]
    treatment: str
    outcome: str | None
    X: np.ndarray  # (n, len(covariates) + 1), treatment last
    y: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.covariates) + 1:
            raise SchemaError(f"feature matrix must have {len(self.covariates) + 1} columns, got shape {X.shape}")
        t = X[:, -1]
        if not np.all((t == 0) | (t == 1)):
            bad = t[(t != 0) & (t != 1)][0]
            raise SchemaError(f"treatment column {self.treatment!r} must be 0/1, found {bad!r}")
        object.__setattr__(self, "X", X)
        if self.y is not None:
            object.__setattr__(self, "y", np.asarray(self.y, dtype=float).reshape(-1))

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.covariates + (self.treatment,)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def t(self) -> np.ndarray:
        return self.X[:, -1]

    @property
    def C(self) -> np.ndarray:
        return self.X[:, :-1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.covariates, self.treatment, self.outcome, self.X[rows],
                       None if self.y is None else self.y[rows])

    def to_csv(self, path) -> None:
        header = list(self.feature_names) + ([self.outcome] if self.outcome and self.y is not None else [])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(self.n):
                row = [repr(float(v)) for v in self.X[i]]
                if len(header) > self.X.shape[1]:
                    row.append(repr(float(self.y[i])))
                w.writerow(row)


def read_csv(path, covariates, treatment: str, outcome: str | None) -> Dataset:
    """Load the columns named by a DAG; extra CSV columns are ignored."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise SchemaError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    needed = list(covariates) + [treatment] + ([outcome] if outcome else [])
    for name in needed:
        if name not in header:
            raise SchemaError(f"column {name!r} named in the DAG is missing from {path.name} (header: {header})")
    idx = [header.index(n) for n in needed]
    try:
        body = np.array([[float(r[i]) for i in idx] for r in rows[1:] if r], dtype=float)
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"non-numeric or short row in {path.name}: {exc}") from exc
    if body.size == 0:
        raise SchemaError(f"{path.name} has no data rows")
    k = len(covariates) + 1
    return Dataset(tuple(covariates), treatment, outcome, body[:, :k], body[:, k] if outcome else None)
