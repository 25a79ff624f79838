"""Link-delay series: CSV ingestion, seeded synthesis and covariance estimation."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ColumnMismatch, InvalidInput, MissingValue, ParseError, RangeOutOfBounds
from .spectral import CovarianceModel
from .topology import RoutingMatrix, Topology, path_values

log = logging.getLogger(__name__)

EPOCH_SECONDS = 600
EPOCHS_PER_DAY = 144
VARIANCE_FLOOR = 1e-6  # ms^2
MIN_DELAY = 0.01  # ms

LINK_SERIES = "link-series"
PATH_SERIES = "path-series"


@dataclass(frozen=True)
class MeasurementSeries:
    """Per-epoch values (ms), one column per link or per path."""

    values: np.ndarray
    kind: str = LINK_SERIES
    column_ids: tuple[int, ...] = ()
    epoch_duration: int = EPOCH_SECONDS

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise InvalidInput(f"series values must be 2-D, got shape {v.shape}")
        if np.isnan(v).any():
            raise MissingValue("series contains missing values")
        if self.kind not in (LINK_SERIES, PATH_SERIES):
            raise InvalidInput(f"unknown series kind {self.kind!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        ids = tuple(self.column_ids) or tuple(range(v.shape[1]))
        if len(ids) != v.shape[1]:
            raise ColumnMismatch(f"{len(ids)} column ids for {v.shape[1]} columns")
        object.__setattr__(self, "column_ids", ids)

    @property
    def epochs(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def to_paths(self, G: RoutingMatrix) -> MeasurementSeries:
        if self.kind != LINK_SERIES:
            raise InvalidInput("only link series can be routed onto paths")
        return MeasurementSeries(path_values(G, self.values), PATH_SERIES,
                                 tuple(range(G.n_paths)), self.epoch_duration)


def parse_series(text: str, kind: str = LINK_SERIES, expected_ids=None) -> MeasurementSeries:
    """Parse ``epoch,<id_0>,...`` CSV text.  Columns are reordered by id."""
    reader = csv.reader(io.StringIO(text))
    rows = [(n, row) for n, row in enumerate(reader, start=1) if any(c.strip() for c in row)]
    if not rows:
        raise ParseError("empty series file", line=1)
    header_line, header = rows[0]
    if not header or header[0].strip() != "epoch":
        raise ParseError("first header column must be 'epoch'", line=header_line)
    try:
        ids = [int(h) for h in header[1:]]
    except ValueError:
        raise ParseError("column headers must be integer ids", line=header_line) from None
    if not ids:
        raise ParseError("no value columns", line=header_line)
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate column ids", line=header_line)
    if expected_ids is not None and sorted(ids) != sorted(expected_ids):
        raise ColumnMismatch(
            f"series has {len(ids)} columns {sorted(ids)[:5]}..., expected ids {sorted(expected_ids)[:5]}... "
            f"({len(expected_ids)} columns)"
        )
    if len(rows) == 1:
        raise ParseError("series has no data rows", line=header_line + 1)

    values = np.empty((len(rows) - 1, len(ids)))
    for r, (lineno, row) in enumerate(rows[1:]):
        if len(row) != len(ids) + 1:
            raise ParseError(f"expected {len(ids) + 1} fields, got {len(row)}", line=lineno)
        for c, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell == "" or cell.lower() in ("nan", "na"):
                raise MissingValue(f"line {lineno}: missing value in column {ids[c]}")
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise ParseError(f"bad value {cell!r}", line=lineno) from None
        if not np.all(np.isfinite(values[r])):
            raise ParseError("non-finite value", line=lineno)
    order = np.argsort(ids, kind="stable")
    return MeasurementSeries(values[:, order], kind, tuple(sorted(ids)))


def load_link_series(path, topology: Topology | None = None) -> MeasurementSeries:
    """Read a link-series CSV, checking its columns against ``topology`` if given."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read series file {path}: {exc}") from None
    expected = [link.id for link in topology.links] if topology is not None else None
    return parse_series(text, LINK_SERIES, expected)


def write_series(series: MeasurementSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch"] + [str(i) for i in series.column_ids])
        for t, row in enumerate(series.values):
            writer.writerow([t] + [repr(float(v)) for v in row])


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters for synthetic link delays.

    Defaults mirror the reported Abilene statistics: link means evenly spread
    over 2-36 ms and standard deviations between 0.16 and 0.94 ms.  The
    diurnal amplitude and the share of links carrying it are modelling
    choices, not measured values.
    """

    seed: int = 0
    epochs: int = 432
    mean_range: tuple[float, float] = (2.0, 36.0)
    std_range: tuple[float, float] = (0.16, 0.94)
    diurnal_amplitude_fraction: float = 0.1
    diurnal_links_fraction: float = 0.3
    diurnal_period: int = EPOCHS_PER_DAY

    def __post_init__(self):
        lo, hi = self.mean_range
        slo, shi = self.std_range
        if not (0 < lo <= hi and 0 < slo <= shi):
            raise InvalidInput("mean and std ranges must be positive and ordered")
        if self.epochs < 8:
            raise InvalidInput("need at least 8 epochs")
        if self.diurnal_amplitude_fraction < 0:
            raise InvalidInput("diurnal amplitude must be non-negative")
        if not 0 <= self.diurnal_links_fraction <= 1:
            raise InvalidInput("diurnal_links_fraction must lie in [0, 1]")


class SyntheticTruth(NamedTuple):
    """Per-link parameters behind a synthetic series."""

    means: np.ndarray
    stds: np.ndarray
    diurnal_links: tuple[int, ...]


def _draw_parameters(rng, config: SyntheticConfig, n_links: int) -> SyntheticTruth:
    means = np.linspace(*config.mean_range, n_links)
    stds = rng.uniform(*config.std_range, size=n_links)
    n_diurnal = int(round(config.diurnal_links_fraction * n_links))
    diurnal = np.sort(rng.choice(n_links, size=n_diurnal, replace=False))
    return SyntheticTruth(means, stds, tuple(int(i) for i in diurnal))


def synthetic_parameters(config: SyntheticConfig, n_links: int) -> SyntheticTruth:
    return _draw_parameters(np.random.default_rng(config.seed), config, n_links)


def generate_synthetic(config: SyntheticConfig, topology: Topology) -> MeasurementSeries:
    """Independent Gaussian link delays with an optional daily sinusoid.

    Draw order for a given seed: standard deviations, diurnal link subset,
    then the epochs x links noise matrix.  Negative draws are clamped to
    0.01 ms.
    """
    n = topology.n_links
    rng = np.random.default_rng(config.seed)
    truth = _draw_parameters(rng, config, n)
    noise = rng.standard_normal((config.epochs, n))

    values = truth.means + noise * truth.stds
    if truth.diurnal_links and config.diurnal_amplitude_fraction > 0:
        t = np.arange(config.epochs)
        wave = np.sin(2 * math.pi * t / config.diurnal_period)
        idx = list(truth.diurnal_links)
        values[:, idx] += np.outer(wave, config.diurnal_amplitude_fraction * truth.means[idx])
    np.maximum(values, MIN_DELAY, out=values)
    return MeasurementSeries(values, LINK_SERIES, tuple(link.id for link in topology.links))


def estimate_diag_covariance(series: MeasurementSeries, epoch_range=None) -> CovarianceModel:
    """Per-link sample variance (n-1 denominator) over ``epoch_range``.

    ``epoch_range`` is a ``(start, stop)`` pair of epoch indices; the default
    is the first simulated day.  Zero variances are raised to 1e-6 ms^2.
    """
    if epoch_range is None:
        epoch_range = (0, min(EPOCHS_PER_DAY, series.epochs))
    start, stop = epoch_range
    if not (0 <= start < stop <= series.epochs):
        raise RangeOutOfBounds(f"epoch range {epoch_range} outside 0..{series.epochs}")
    if stop - start < 2:
        raise RangeOutOfBounds("need at least two epochs to estimate a variance")
    var = np.var(series.values[start:stop], axis=0, ddof=1)
    low = var < VARIANCE_FLOOR
    if low.any():
        log.warning("%d link variance(s) below %.0e ms^2 raised to the floor", int(low.sum()), VARIANCE_FLOOR)
        var = np.where(low, VARIANCE_FLOOR, var)
    return CovarianceModel(var)


def load_covariance(path, topology: Topology | None = None) -> CovarianceModel:
    """Read a ``link_id,variance_ms2`` CSV."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read covariance file {path}: {exc}") from None
    rows = [(n, r) for n, r in enumerate(csv.reader(io.StringIO(text)), start=1) if any(c.strip() for c in r)]
    if not rows or [c.strip() for c in rows[0][1]] != ["link_id", "variance_ms2"]:
        raise ParseError("expected header link_id,variance_ms2", line=1)
    entries = {}
    for lineno, row in rows[1:]:
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", line=lineno)
        try:
            link_id, var = int(row[0]), float(row[1])
        except ValueError:
            raise ParseError("bad link id or variance", line=lineno) from None
        if link_id in entries:
            raise ParseError(f"duplicate link id {link_id}", line=lineno)
        if not var > 0:
            raise ParseError(f"variance must be positive, got {var}", line=lineno)
        entries[link_id] = var
    if not entries:
        raise ParseError("covariance file has no rows", line=2)
    expected = list(range(topology.n_links)) if topology is not None else list(range(len(entries)))
    if sorted(entries) != expected:
        raise ColumnMismatch(f"covariance covers link ids {sorted(entries)}, expected 0..{len(expected) - 1}")
    return CovarianceModel(np.array([entries[i] for i in expected]))


def write_covariance(cov: CovarianceModel, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["link_id", "variance_ms2"])
        for i, v in enumerate(cov.variances):
            writer.writerow([i, repr(float(v))])
