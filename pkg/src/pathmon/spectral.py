"""Eigenstructure of the variance-weighted routing matrix ``G C``."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateSpectrum, DimensionMismatch, InvalidInput, NumericalFailure
from .topology import RoutingMatrix

# eigenvalues at or below max * RANK_RTOL are numerically zero
RANK_RTOL = 1e-10
DEFAULT_ENERGY_FRACTION = 0.95


@dataclass(frozen=True)
class CovarianceModel:
    """Diagonal link covariance ``Sigma = C C^T`` with ``C = diag(factor)``.

    Variances are in ms^2, the factor (per-link standard deviation) in ms.
    """

    variances: np.ndarray

    def __post_init__(self):
        v = np.array(self.variances, dtype=float).ravel()
        if v.size == 0:
            raise InvalidInput("covariance model needs at least one link")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise InvalidInput("link variances must be finite and strictly positive")
        v.setflags(write=False)
        object.__setattr__(self, "variances", v)

    @classmethod
    def identity(cls, n_links: int) -> CovarianceModel:
        return cls(np.ones(n_links))

    @classmethod
    def from_std(cls, std) -> CovarianceModel:
        return cls(np.square(np.asarray(std, dtype=float)))

    @property
    def factor(self) -> np.ndarray:
        return np.sqrt(self.variances)

    @property
    def n_links(self) -> int:
        return self.variances.size

    @property
    def sigma(self) -> np.ndarray:
        return np.diag(self.variances)

    def restrict(self, link_ids) -> CovarianceModel:
        return CovarianceModel(self.variances[list(link_ids)])


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of ``M^T M`` in non-increasing order."""

    eigenvalues: np.ndarray
    source_label: str = ""

    def __post_init__(self):
        ev = np.array(self.eigenvalues, dtype=float).ravel()
        if ev.size == 0:
            raise InvalidInput("empty spectrum")
        if np.any(np.diff(ev) > 1e-12 * max(abs(ev[0]), 1.0)):
            raise InvalidInput("spectrum must be sorted non-increasing")
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)

    def __len__(self):
        return self.eigenvalues.size

    @property
    def rank(self) -> int:
        top = self.eigenvalues[0]
        if top <= 0:
            return 0
        return int(np.sum(self.eigenvalues > top * RANK_RTOL))


def weighted_matrix(G: RoutingMatrix, cov: CovarianceModel) -> np.ndarray:
    """``G C``: each column of G scaled by that link's standard deviation."""
    if cov.n_links != G.n_links:
        raise DimensionMismatch(f"covariance has {cov.n_links} links, routing matrix {G.n_links}")
    return G.entries * cov.factor[np.newaxis, :]


def _as_matrix(M) -> np.ndarray:
    if isinstance(M, RoutingMatrix):
        M = M.entries
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.size == 0:
        raise InvalidInput(f"expected a nonempty 2-D matrix, got shape {M.shape}")
    return M


def eigenspectrum(M, label: str = "") -> Spectrum:
    """Eigenvalues of ``M^T M``, computed as squared singular values of ``M``.

    The result always has ``M.shape[1]`` entries; directions beyond the row
    count are padded with zeros.
    """
    M = _as_matrix(M)
    try:
        s = np.linalg.svd(M, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from None
    ev = np.zeros(M.shape[1])
    ev[: s.size] = np.square(s)
    return Spectrum(ev, source_label=label)


def scale_to_unit_max(spec: Spectrum) -> Spectrum:
    top = spec.eigenvalues[0]
    if not top > np.finfo(float).tiny:
        raise DegenerateSpectrum("largest eigenvalue is numerically zero")
    return Spectrum(spec.eigenvalues / top, source_label=spec.source_label)


def effective_rank(spec: Spectrum, energy_fraction: float = DEFAULT_ENERGY_FRACTION) -> int:
    """Smallest k whose leading eigenvalues hold ``energy_fraction`` of the total.

    This cumulative-energy rule is a working definition; other effective-rank
    notions (entropy-based, knee detection) give different numbers.
    """
    if not 0 < energy_fraction <= 1:
        raise InvalidInput(f"energy_fraction must lie in (0, 1], got {energy_fraction}")
    ev = np.clip(spec.eigenvalues, 0.0, None)
    total = ev.sum()
    if total <= 0:
        raise DegenerateSpectrum("spectrum has no energy")
    cumulative = np.cumsum(ev)
    # guard against the final cumulative sum falling a rounding error short
    target = energy_fraction * total * (1 - 1e-12)
    return int(np.searchsorted(cumulative, target, side="left") + 1)


class EigenvectorEnergy(NamedTuple):
    energy: np.ndarray
    eigenvalue: float
    # True when a neighbouring eigenvalue is too close for the eigenvector to be unique
    ambiguous: bool


def eigenvector_energy(M, which: int = 0, rtol: float = 1e-8) -> EigenvectorEnergy:
    """Squared components of the ``which``-th (0-based) eigenvector of ``M^T M``."""
    M = _as_matrix(M)
    n = M.shape[1]
    if not 0 <= which < n:
        raise InvalidInput(f"eigenvector index {which} out of range for {n} columns")
    try:
        w, vecs = np.linalg.eigh(M.T @ M)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition did not converge: {exc}") from None
    order = np.argsort(w)[::-1]
    w, vecs = w[order], vecs[:, order]
    v = vecs[:, which]
    energy = np.square(v) / np.dot(v, v)
    scale = max(abs(w[0]), np.finfo(float).tiny)
    gaps = [abs(w[which] - w[j]) for j in (which - 1, which + 1) if 0 <= j < n]
    ambiguous = any(g <= rtol * scale for g in gaps)
    return EigenvectorEnergy(energy, float(w[which]), ambiguous)


def write_spectrum_csv(spec: Spectrum, path) -> None:
    scaled = scale_to_unit_max(spec).eigenvalues
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "eigenvalue", "scaled_eigenvalue"])
        for i, (ev, sc) in enumerate(zip(spec.eigenvalues, scaled), start=1):
            writer.writerow([i, repr(float(ev)), repr(float(sc))])
