"""Choosing which k paths to measure.

The leading k left singular vectors of ``G C`` span the directions that
matter most; a column-pivoted QR of ``U_k^T`` then picks k rows of ``G C``
that approximately span the same subspace.  Exact subset selection is
NP-complete, so this greedy pivoting is a heuristic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, KTooLarge, NumericalFailure, RankDeficientSample
from .spectral import (
    DEFAULT_ENERGY_FRACTION,
    RANK_RTOL,
    CovarianceModel,
    Spectrum,
    effective_rank,
    eigenspectrum,
    weighted_matrix,
)
from .topology import RoutingMatrix

# columns whose squared residual norm is within this relative margin of the
# largest count as tied; the lowest index wins
PIVOT_TIE_RTOL = 1e-10


@dataclass(frozen=True)
class PathSelection:
    k: int
    selected: tuple[int, ...]
    permutation: tuple[int, ...] = ()
    source_spectrum: Spectrum | None = None

    def __post_init__(self):
        if len(set(self.selected)) != len(self.selected) or len(self.selected) != self.k:
            raise InvalidInput("selection must hold k distinct path ids")
        object.__setattr__(self, "selected", tuple(int(i) for i in self.selected))
        if not self.permutation:
            object.__setattr__(self, "permutation", self.selected)

    @classmethod
    def of(cls, path_ids) -> PathSelection:
        """A hand-picked selection, in the given order."""
        ids = tuple(int(i) for i in path_ids)
        return cls(len(ids), ids)

    def remainder(self, n_paths: int) -> tuple[int, ...]:
        chosen = set(self.selected)
        return tuple(i for i in range(n_paths) if i not in chosen)


def pivoted_qr_order(A: np.ndarray, steps: int | None = None) -> np.ndarray:
    """Column order chosen by Householder QR with column pivoting.

    At each step the column with the largest residual norm (after removing
    the components along previously chosen columns) is moved to the front.
    Near-ties go to the lower column index.  Columns not reached within
    ``steps`` keep their relative order at the end.
    """
    R = np.array(A, dtype=float, copy=True)
    m, n = R.shape
    steps = min(m, n) if steps is None else min(steps, m, n)
    perm = np.arange(n)
    for j in range(steps):
        norms = np.einsum("ij,ij->j", R[j:, j:], R[j:, j:])
        best = norms.max()
        candidates = np.flatnonzero(norms >= best * (1 - PIVOT_TIE_RTOL))
        # among ties, the smallest original index
        p = j + candidates[np.argmin(perm[j + candidates])]
        if p != j:
            R[:, [j, p]] = R[:, [p, j]]
            perm[[j, p]] = perm[[p, j]]
        x = R[j:, j]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            break
        v = x.copy()
        v[0] += np.copysign(alpha, x[0]) if x[0] != 0 else alpha
        v /= np.linalg.norm(v)
        R[j:, j:] -= 2.0 * np.outer(v, v @ R[j:, j:])
    # untouched tail in ascending path order
    tail = np.sort(perm[steps:])
    return np.concatenate([perm[:steps], tail])


def select_paths(G: RoutingMatrix, cov: CovarianceModel, k: int) -> PathSelection:
    """Pick k paths from ``G`` using SVD of ``G C`` and pivoted QR on ``U_k^T``."""
    H = weighted_matrix(G, cov)
    try:
        U, s, _ = np.linalg.svd(H, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD of GC did not converge: {exc}") from None
    ev = np.zeros(H.shape[1])
    ev[: s.size] = np.square(s)
    spectrum = Spectrum(ev, source_label="GC")
    rank = spectrum.rank
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise InvalidInput(f"k must be a positive integer, got {k!r}")
    if k > rank:
        raise KTooLarge(f"k={k} exceeds the numerical rank {rank} of GC")

    perm = pivoted_qr_order(U[:, :k].T, steps=k)
    selected = tuple(int(i) for i in perm[:k])

    sv = np.linalg.svd(H[list(selected)], compute_uv=False)
    if sv[-1] <= sv[0] * np.sqrt(RANK_RTOL):
        raise RankDeficientSample(f"selected rows of GC are rank deficient (k={k})")
    return PathSelection(k, selected, tuple(int(i) for i in perm), spectrum)


def auto_k(G: RoutingMatrix, cov: CovarianceModel, energy_fraction: float = DEFAULT_ENERGY_FRACTION) -> int:
    """Default sample size: the effective rank of ``G C``."""
    return effective_rank(eigenspectrum(weighted_matrix(G, cov)), energy_fraction)


def selection_overlap(a: PathSelection, b: PathSelection) -> float:
    """Shared fraction of selected paths, relative to the smaller selection."""
    denom = min(a.k, b.k)
    if denom == 0:
        return 0.0
    return len(set(a.selected) & set(b.selected)) / denom


def write_selection_csv(selections, G: RoutingMatrix, path) -> None:
    """Write selections for one or more k in long format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "rank_position", "path_id", "source", "destination"])
        for sel in selections:
            for pos, pid in enumerate(sel.selected, start=1):
                src, dst = G.paths[pid]
                writer.writerow([sel.k, pos, pid, src, dst])
