"""Dataset container, CSV ingestion, and the synthetic benchmark generator.

The CSV contract: UTF-8, comma separated, one header row containing a
``y`` column (continuous outcome), a ``t`` column (literal 0/1 treatment
indicator) and at least one numeric covariate column.  Covariate order is
preserved.  No missing values.

Generated data carries covariate roles in the column-name prefix:
``c*`` confounders, ``i*`` instruments, ``g*`` prognostic, ``z*`` noise,
so propensity model specifications can select covariates by role.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ._rng import DOMAIN_DATA, stream
from .errors import DataError


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class DesignFrame:
    """Outcome-free view of a dataset.

    The design stage of the pipeline only ever receives this view, so the
    outcome cannot leak into propensity estimation or implementation by
    construction.
    """

    x: np.ndarray
    t: np.ndarray
    columns: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.t.shape[0]


@dataclass(frozen=True)
class Dataset:
    """Observed data: outcome ``y``, treatment ``t``, covariate matrix ``x``.

    Immutable after construction; safe to share across threads/processes.
    """

    y: np.ndarray
    t: np.ndarray
    x: np.ndarray
    columns: tuple[str, ...]

    def __post_init__(self):
        y = _frozen(np.asarray(self.y, dtype=np.float64))
        t = _frozen(np.asarray(self.t, dtype=np.int64))
        x = _frozen(np.asarray(self.x, dtype=np.float64))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "columns", tuple(self.columns))
        if x.ndim != 2:
            raise DataError("covariate matrix must be two-dimensional")
        n = y.shape[0]
        if n < 2:
            raise DataError(f"need at least 2 units, got {n}")
        if t.shape[0] != n or x.shape[0] != n:
            raise DataError(
                f"length mismatch: y has {n} rows, t has {t.shape[0]}, x has {x.shape[0]}"
            )
        if len(self.columns) != x.shape[1]:
            raise DataError(
                f"{len(self.columns)} column names for {x.shape[1]} covariates"
            )
        if not np.isin(t, (0, 1)).all():
            bad = int(np.flatnonzero(~np.isin(t, (0, 1)))[0])
            raise DataError(f"treatment must be 0/1, found {t[bad]}", row=bad)
        if t.min() == t.max():
            raise DataError("treatment arm is empty: t must contain both 0 and 1")
        if not np.isfinite(y).all():
            raise DataError("non-finite outcome value", row=int(np.flatnonzero(~np.isfinite(y))[0]))
        if not np.isfinite(x).all():
            r, c = np.argwhere(~np.isfinite(x))[0]
            raise DataError("non-finite covariate value", row=int(r), column=self.columns[c])

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def n_treated(self) -> int:
        return int(self.t.sum())

    def design_view(self) -> DesignFrame:
        """The (x, t) view handed to the design stage. Never includes y."""
        return DesignFrame(x=self.x, t=self.t, columns=self.columns)

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise DataError(f"unknown covariate {name!r}") from None


@dataclass(frozen=True)
class DGPConfig:
    """Parameters of the synthetic benchmark generator.

    Covariates are iid standard normal. Treatment follows a logistic model
    with intercept 0 and slope ``treatment_coef`` on confounders and
    instruments. The outcome is linear: intercept 1, effect ``delta_true``,
    confounder slopes 0.1, 0.2, ..., prognostic slopes 0.5, unit-variance
    normal noise.
    """

    n: int
    delta_true: float = 1.5
    seed: int = 0
    confounders: int = 5
    instruments: int = 5
    prognostic: int = 5
    noise: int = 5
    treatment_coef: float = 0.75

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        for name in ("confounders", "instruments", "prognostic", "noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} count must be >= 0")

    @property
    def columns(self) -> tuple[str, ...]:
        names = []
        for prefix, count in (
            ("c", self.confounders),
            ("i", self.instruments),
            ("g", self.prognostic),
            ("z", self.noise),
        ):
            names.extend(f"{prefix}{j + 1}" for j in range(count))
        return tuple(names)


def generate(config: DGPConfig) -> Dataset:
    """Draw one dataset from the benchmark generating process.

    Pure function of the config (including its seed); the stream is split
    off the data domain so it never overlaps inference streams.  Draw
    order is fixed: covariates, then treatment uniforms, then noise.
    """
    rng = stream(config.seed, DOMAIN_DATA)
    cols = config.columns
    p = len(cols)
    x = rng.standard_normal((config.n, p))

    alpha = np.zeros(p)
    beta = np.zeros(p)
    for j, name in enumerate(cols):
        if name.startswith("c"):
            alpha[j] = config.treatment_coef
            beta[j] = 0.1 * int(name[1:])
        elif name.startswith("i"):
            alpha[j] = config.treatment_coef
        elif name.startswith("g"):
            beta[j] = 0.5

    lp = x @ alpha
    prob = 1.0 / (1.0 + np.exp(-lp))
    t = (rng.random(config.n) < prob).astype(np.int64)
    y = 1.0 + config.delta_true * t + x @ beta + rng.standard_normal(config.n)
    return Dataset(y=y, t=t, x=x, columns=cols)


def load_csv(path) -> Dataset:
    """Read a dataset from ``path``, validating the CSV contract.

    Every violation is reported with its row (1-based, header excluded)
    and column.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty file: {path}") from None
        header = [h.strip() for h in header]
        for required in ("y", "t"):
            if required not in header:
                raise DataError(f"missing required column {required!r}", column=required)
        if len(set(header)) != len(header):
            dup = sorted({h for h in header if header.count(h) > 1})[0]
            raise DataError("duplicate column name", column=dup)
        y_pos = header.index("y")
        t_pos = header.index("t")
        cov_pos = [j for j in range(len(header)) if j not in (y_pos, t_pos)]
        if not cov_pos:
            raise DataError("need at least one covariate column besides y and t")

        ys, ts, rows = [], [], []
        for i, record in enumerate(reader, start=1):
            if len(record) != len(header):
                raise DataError(
                    f"expected {len(header)} fields, got {len(record)}", row=i
                )
            cell = record[t_pos].strip()
            if cell not in ("0", "1"):
                raise DataError(
                    f"treatment must be the literal 0 or 1, got {cell!r}",
                    row=i,
                    column="t",
                )
            ts.append(int(cell))
            for j, pos in enumerate((y_pos, *cov_pos)):
                raw = record[pos].strip()
                if raw == "":
                    raise DataError("missing value", row=i, column=header[pos])
                try:
                    value = float(raw)
                except ValueError:
                    raise DataError(
                        f"non-numeric value {raw!r}", row=i, column=header[pos]
                    ) from None
                if j == 0:
                    ys.append(value)
                else:
                    rows.append(value)

    if not ys:
        raise DataError(f"no data rows in {path}")
    x = np.array(rows, dtype=np.float64).reshape(len(ys), len(cov_pos))
    return Dataset(
        y=np.array(ys),
        t=np.array(ts),
        x=x,
        columns=tuple(header[j] for j in cov_pos),
    )


def write_csv(data: Dataset, path) -> None:
    """Write a dataset in the same layout ``load_csv`` reads.

    Floats are written with shortest round-trip precision, so
    ``load_csv(write_csv(d))`` reproduces ``d`` exactly.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "t", *data.columns])
        for i in range(data.n):
            writer.writerow(
                [repr(float(data.y[i])), int(data.t[i])]
                + [repr(float(v)) for v in data.x[i]]
            )
