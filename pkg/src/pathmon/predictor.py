"""Best linear prediction of linear path summaries from k measured paths.

With link means ``mu`` and diagonal covariance ``Sigma``, path values have
mean ``G mu`` and covariance ``V = G Sigma G^T``.  Splitting paths into the
sampled set ``s`` and the remainder ``r`` gives the blocks ``Vss``, ``Vsr``,
``Vrs``, ``Vrr``.  For a functional ``l`` the estimated best linear
predictor is::

    l_s . y_s + l_r . (Vrs Vss^-1 y_s)

which equals the plug-in form ``l_s . y_s + l_r . Gr mu_hat`` with
``mu_hat`` the generalized least squares estimate of the link means.

The conditional expectation ``E[l.y | y_s]`` would be the optimal predictor
but needs the full joint distribution; only first and second moments are
used here.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, InvalidInput, SingularVss
from .selection import PathSelection
from .spectral import CovarianceModel
from .topology import RoutingMatrix

MAX_VSS_CONDITION = 1e12
PINV_RTOL = 1e-10


def generalized_inverse(M: np.ndarray, rtol: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose inverse via SVD, dropping singular values below ``rtol * max``."""
    M = np.asarray(M, dtype=float)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros(M.T.shape)
    keep = s > s[0] * rtol
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


@dataclass(frozen=True)
class MomentPartition:
    """Covariance blocks for a sampled/remaining split of the paths (ms^2)."""

    selected: tuple[int, ...]
    remainder: tuple[int, ...]
    Gs: np.ndarray
    Gr: np.ndarray
    factor: np.ndarray
    Vss: np.ndarray
    Vsr: np.ndarray
    Vrs: np.ndarray
    Vrr: np.ndarray
    # solution c of c Vss = Vrs, i.e. Vrs Vss^-1
    prediction_operator: np.ndarray

    @property
    def k(self) -> int:
        return len(self.selected)

    @property
    def n_paths(self) -> int:
        return len(self.selected) + len(self.remainder)

    @property
    def n_links(self) -> int:
        return self.Gs.shape[1]


def partition_moments(G: RoutingMatrix, cov: CovarianceModel, sel: PathSelection) -> MomentPartition:
    if cov.n_links != G.n_links:
        raise DimensionMismatch(f"covariance has {cov.n_links} links, routing matrix {G.n_links}")
    if any(not 0 <= i < G.n_paths for i in sel.selected):
        raise InvalidInput("selection refers to paths outside the routing matrix")
    s = list(sel.selected)
    r = list(sel.remainder(G.n_paths))
    Gs, Gr = G.entries[s], G.entries[r]
    var = cov.variances
    Vss = (Gs * var) @ Gs.T
    Vsr = (Gs * var) @ Gr.T
    Vrs = Vsr.T.copy()
    Vrr = (Gr * var) @ Gr.T

    cond = np.linalg.cond(Vss)
    if not np.isfinite(cond) or cond > MAX_VSS_CONDITION:
        raise SingularVss(f"Vss is ill-conditioned (condition number {cond:.3g})")
    if Gr.shape[0]:
        op = scipy.linalg.solve(Vss, Vsr, assume_a="pos").T
    else:
        op = np.zeros((0, len(s)))
    return MomentPartition(
        tuple(s), tuple(r), Gs, Gr, cov.factor.copy(), Vss, Vsr, Vrs, Vrr, op
    )


@dataclass(frozen=True)
class LinearFunctional:
    """Path weights ``l`` defining the monitored summary ``l . y``."""

    weights: np.ndarray
    label: str = ""

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def network_average(cls, n_paths: int) -> LinearFunctional:
        return cls(np.full(n_paths, 1.0 / n_paths), label="mean")

    @classmethod
    def group_difference(cls, n_paths: int, group1, group2, label: str = "diff") -> LinearFunctional:
        """Mean of ``group1`` minus mean of ``group2``; the groups must be disjoint."""
        g1, g2 = set(group1), set(group2)
        if not g1 or not g2:
            raise InvalidInput("both path groups must be nonempty")
        if g1 & g2:
            raise InvalidInput("path groups overlap")
        w = np.zeros(n_paths)
        w[sorted(g1)] = 1.0 / len(g1)
        w[sorted(g2)] = -1.0 / len(g2)
        return cls(w, label=label)

    @classmethod
    def indicator(cls, n_paths: int, path_id: int) -> LinearFunctional:
        w = np.zeros(n_paths)
        w[path_id] = 1.0
        return cls(w, label=f"path{path_id}")

    def split(self, part: MomentPartition) -> tuple[np.ndarray, np.ndarray]:
        if self.weights.size != part.n_paths:
            raise DimensionMismatch(f"functional has {self.weights.size} weights, expected {part.n_paths}")
        return self.weights[list(part.selected)], self.weights[list(part.remainder)]

    def evaluate(self, y) -> np.ndarray:
        return np.asarray(y, dtype=float) @ self.weights


def _check_sample(y_s, k: int) -> np.ndarray:
    y_s = np.asarray(y_s, dtype=float)
    if y_s.shape[-1] != k:
        raise DimensionMismatch(f"expected {k} sampled path values, got {y_s.shape[-1]}")
    return y_s


def estimate_mu(y_s, part: MomentPartition) -> np.ndarray:
    """Generalized least squares estimate of the link means from sampled paths.

    ``mu_hat = M^- Gs^T Vss^-1 y_s`` with ``M = Gs^T Vss^-1 Gs``.  The
    generalized inverse is the Moore-Penrose inverse taken in whitened link
    coordinates, ``M^- = C (C M C)^+ C``; for ``Sigma = I`` this is the plain
    Moore-Penrose inverse.  Links that no sampled path traverses get exactly
    zero.  Accepts a single sample (k,) or a batch (epochs, k).
    """
    y_s = _check_sample(y_s, part.k)
    C = part.factor
    Gs = part.Gs
    W = scipy.linalg.solve(part.Vss, Gs, assume_a="pos")  # Vss^-1 Gs
    # uncovered links form a zero block of M, which the inverse maps to zero;
    # working on the covered block keeps those estimates exactly 0
    covered = np.flatnonzero(np.any(Gs != 0, axis=0))
    Cc, Wc = C[covered], W[:, covered]
    M = Gs[:, covered].T @ Wc
    M_ginv = Cc[:, None] * generalized_inverse(Cc[:, None] * M * Cc[None, :]) * Cc[None, :]
    op = np.zeros((part.n_links, part.k))
    op[covered] = M_ginv @ Wc.T
    return y_s @ op.T


@dataclass(frozen=True)
class PredictorModel:
    selection: PathSelection
    partition: MomentPartition
    functional: LinearFunctional
    bias_offset: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.bias_offset):
            raise InvalidInput("bias offset must be finite")

    @property
    def coefficients(self) -> np.ndarray:
        """Weights ``a_hat`` on the sampled values: ``l_s + c^T l_r``."""
        l_s, l_r = self.functional.split(self.partition)
        return l_s + self.partition.prediction_operator.T @ l_r


def build_predictor(G: RoutingMatrix, cov: CovarianceModel, sel: PathSelection,
                    functional: LinearFunctional) -> PredictorModel:
    part = partition_moments(G, cov, sel)
    functional.split(part)
    return PredictorModel(sel, part, functional)


def predict(model: PredictorModel, y_s) -> np.ndarray | float:
    """E-BLP of ``l . y`` from sampled values ordered as ``model.selection.selected``."""
    y_s = _check_sample(y_s, model.partition.k)
    out = y_s @ model.coefficients + model.bias_offset
    return float(out) if np.ndim(out) == 0 else out


def predict_via_mu(part: MomentPartition, functional: LinearFunctional, y_s) -> np.ndarray | float:
    """Same prediction through the plug-in route ``l_s . y_s + l_r . Gr mu_hat``."""
    l_s, l_r = functional.split(part)
    y_s = _check_sample(y_s, part.k)
    mu_hat = estimate_mu(y_s, part)
    out = y_s @ l_s + (mu_hat @ part.Gr.T) @ l_r
    return float(out) if np.ndim(out) == 0 else out


def sample(y, sel: PathSelection) -> np.ndarray:
    """Pick the measured entries (last axis) of full path values."""
    return np.asarray(y, dtype=float)[..., list(sel.selected)]


def mspe_blp(part: MomentPartition, functional: LinearFunctional) -> float:
    """MSPE of the ideal BLP: ``l_r^T (Vrr - Vrs Vss^-1 Vsr) l_r``."""
    _, l_r = functional.split(part)
    if l_r.size == 0:
        return 0.0
    resid = part.Vrr - part.prediction_operator @ part.Vsr
    return float(l_r @ resid @ l_r)


def projection_onto_sample(part: MomentPartition) -> np.ndarray:
    """``Bs``: orthogonal projection onto the row space of ``Gs C``."""
    Hs = part.Gs * part.factor
    return Hs.T @ scipy.linalg.solve(Hs @ Hs.T, Hs, assume_a="pos")


def mspe_projection(part: MomentPartition, functional: LinearFunctional) -> float:
    """The BLP MSPE via ``|(I - Bs)(Gr C)^T l_r|^2``."""
    _, l_r = functional.split(part)
    if l_r.size == 0:
        return 0.0
    w = (part.Gr * part.factor).T @ l_r
    resid = w - projection_onto_sample(part) @ w
    return float(w @ resid)


def bias_of_eblp(part: MomentPartition, functional: LinearFunctional, mu) -> float:
    """Mean prediction error ``l_r^T (Vrs Vss^-1 Gs - Gr) mu`` of the E-BLP (ms)."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (part.n_links,):
        raise DimensionMismatch(f"expected {part.n_links} link means, got shape {mu.shape}")
    _, l_r = functional.split(part)
    if l_r.size == 0:
        return 0.0
    return float(l_r @ (part.prediction_operator @ (part.Gs @ mu) - part.Gr @ mu))


def mspe_eblp(part: MomentPartition, functional: LinearFunctional, mu) -> float:
    """Total E-BLP error: BLP MSPE plus squared bias."""
    return mspe_blp(part, functional) + bias_of_eblp(part, functional, mu) ** 2


def calibrate_bias(model: PredictorModel, x_full) -> PredictorModel:
    """Fix ``bias_offset`` so the prediction is exact at one fully measured epoch.

    The offset is recomputed from scratch, so calibrating again on the same
    epoch returns an identical model.
    """
    x_full = np.asarray(x_full, dtype=float)
    part = model.partition
    if x_full.shape != (part.n_links,):
        raise DimensionMismatch(f"expected {part.n_links} link values, got shape {x_full.shape}")
    l_s, l_r = model.functional.split(part)
    y_s = part.Gs @ x_full
    actual = float(y_s @ l_s + (part.Gr @ x_full) @ l_r)
    uncorrected = float(y_s @ model.coefficients)
    return replace(model, bias_offset=actual - uncorrected)
