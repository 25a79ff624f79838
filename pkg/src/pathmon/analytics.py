"""Applications built on the predictor.

* error curves of a network-wide average against the number of measured paths
* spike detection on a delay series and ROC sweeps of predicted spikes
* comparison of two ingress points (groups of paths sharing a source)
* stability of the spectrum of ``G C`` under link deletions
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data_io import LINK_SERIES, MeasurementSeries
from .errors import DimensionMismatch, EmptyTruth, InvalidInput, NotStronglyConnected, WindowTooLarge
from .predictor import (
    LinearFunctional,
    build_predictor,
    calibrate_bias,
    predict,
    sample,
)
from .selection import PathSelection, select_paths
from .spectral import (
    CovarianceModel,
    Spectrum,
    eigenspectrum,
    eigenvector_energy,
    scale_to_unit_max,
    weighted_matrix,
)
from .topology import RoutingMatrix, Topology, build_routing_matrix, delete_links, path_values

SPIKE_WINDOW = 6
STD_FLOOR = 1e-9  # ms
DEFAULT_SWEEP = tuple(np.round(np.arange(1.0, 5.0 + 1e-9, 0.25), 2))


def _link_values(link_series) -> np.ndarray:
    if isinstance(link_series, MeasurementSeries):
        if link_series.kind != LINK_SERIES:
            raise InvalidInput("expected a link series")
        return link_series.values
    return np.asarray(link_series, dtype=float)


# -- network-wide average ---------------------------------------------------


class ErrorCurve(NamedTuple):
    ks: np.ndarray
    mean_relative_error: np.ndarray


def relative_error(predicted, actual) -> np.ndarray:
    actual = np.asarray(actual, dtype=float)
    return np.abs(np.asarray(predicted) - actual) / np.abs(actual)


def prediction_series(G: RoutingMatrix, cov: CovarianceModel, link_series, functional: LinearFunctional,
                      k: int, calibrate: bool = False, calibration_epoch: int = 0):
    """Per-epoch E-BLP predictions and true values of ``functional``.

    Returns ``(predicted, actual, model)``.  With ``calibrate`` the bias
    offset is fitted on ``calibration_epoch`` from its full link values.
    """
    x = _link_values(link_series)
    y = path_values(G, x)
    sel = select_paths(G, cov, k)
    model = build_predictor(G, cov, sel, functional)
    if calibrate:
        model = calibrate_bias(model, x[calibration_epoch])
    return predict(model, sample(y, sel)), functional.evaluate(y), model


def error_curve(link_series, G: RoutingMatrix, cov: CovarianceModel, functional: LinearFunctional,
                k_range) -> ErrorCurve:
    """Mean (over epochs) relative error of the uncalibrated predictor for each k."""
    ks = np.array(list(k_range), dtype=int)
    errors = np.empty(ks.size)
    for i, k in enumerate(ks):
        pred, actual, _ = prediction_series(G, cov, link_series, functional, int(k))
        errors[i] = relative_error(pred, actual).mean()
    return ErrorCurve(ks, errors)


# -- spikes and ROC -----------------------------------------------------------


@dataclass(frozen=True)
class AnomalyEvent:
    epoch: int
    value: float
    baseline_mean: float
    baseline_std: float
    excess_sigmas: float


@dataclass(frozen=True)
class RocPoint:
    threshold_sigmas: float
    true_positive_rate: float
    false_positive_rate: float


def _baseline(series: np.ndarray, window: int):
    if window < 2:
        raise InvalidInput("window must be at least 2")
    if series.ndim != 1:
        raise DimensionMismatch("spike detection needs a one-dimensional series")
    if series.size <= window:
        raise WindowTooLarge(f"series of length {series.size} is too short for window {window}")
    past = sliding_window_view(series[:-1], window)
    mean = past.mean(axis=1)
    std = np.maximum(past.std(axis=1, ddof=1), STD_FLOOR)
    return mean, std


def spike_scores(series, window: int = SPIKE_WINDOW) -> np.ndarray:
    """Excess over the trailing-window mean, in trailing-window standard deviations.

    Entry ``i`` belongs to epoch ``window + i``.
    """
    series = np.asarray(series, dtype=float)
    mean, std = _baseline(series, window)
    return (series[window:] - mean) / std


def detect_spikes(series, window: int = SPIKE_WINDOW, threshold_sigmas: float = 3.0) -> list[AnomalyEvent]:
    """Epochs whose value exceeds the mean of the previous ``window`` values by
    more than ``threshold_sigmas`` of their sample standard deviation.

    Only upward deviations count.  The standard deviation is floored at 1e-9 ms
    so a jump after a constant stretch is still flagged.
    """
    series = np.asarray(series, dtype=float)
    mean, std = _baseline(series, window)
    excess = series[window:] - mean
    flagged = np.flatnonzero(excess > threshold_sigmas * std)
    return [
        AnomalyEvent(int(i + window), float(series[i + window]), float(mean[i]), float(std[i]),
                     float(excess[i] / std[i]))
        for i in flagged
    ]


def roc_sweep(actual, predicted, window: int = SPIKE_WINDOW, actual_sigmas: float = 3.0,
              sweep=DEFAULT_SWEEP) -> list[RocPoint]:
    """True/false positive rates of spikes in ``predicted`` against spikes in ``actual``.

    Ground truth is fixed at ``actual_sigmas`` while the predicted threshold
    runs over ``sweep``.
    """
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.shape != predicted.shape:
        raise DimensionMismatch(f"series lengths differ: {actual.shape} vs {predicted.shape}")
    truth = spike_scores(actual, window) > actual_sigmas
    n_true = int(truth.sum())
    if n_true == 0:
        raise EmptyTruth(f"no {actual_sigmas} sigma spikes in the actual series")
    n_neg = truth.size - n_true
    scores = spike_scores(predicted, window)
    points = []
    for thr in sweep:
        flagged = scores > thr
        tpr = float(np.sum(flagged & truth)) / n_true
        fpr = float(np.sum(flagged & ~truth)) / n_neg if n_neg else 0.0
        points.append(RocPoint(float(thr), tpr, fpr))
    return points


# -- subnetwork comparison ------------------------------------------------------


def exp_smooth(series, alpha: float = 0.1) -> np.ndarray:
    if not 0 < alpha <= 1:
        raise InvalidInput(f"alpha must lie in (0, 1], got {alpha}")
    series = np.asarray(series, dtype=float)
    out = np.empty_like(series)
    if series.size == 0:
        return out
    out[0] = series[0]
    for t in range(1, series.size):
        out[t] = alpha * series[t] + (1 - alpha) * out[t - 1]
    return out


def sign_agreement(predicted, actual) -> float:
    """Share of epochs where the signs match, ignoring epochs with zero actual value."""
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    valid = actual != 0
    if not valid.any():
        return float("nan")
    return float(np.mean(np.sign(predicted[valid]) == np.sign(actual[valid])))


def correlation(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.std() == 0 or b.std() == 0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


@dataclass(frozen=True)
class SubnetComparison:
    node1: str
    node2: str
    k: int
    routing: RoutingMatrix  # rows restricted to paths leaving node1 or node2
    spectrum: Spectrum
    selection: PathSelection
    bias_offset: float
    predicted: np.ndarray
    actual: np.ndarray
    alpha: float

    @property
    def smoothed_predicted(self) -> np.ndarray:
        return exp_smooth(self.predicted, self.alpha)

    @property
    def smoothed_actual(self) -> np.ndarray:
        return exp_smooth(self.actual, self.alpha)

    @property
    def sign_agreement(self) -> float:
        return sign_agreement(self.predicted, self.actual)

    @property
    def smoothed_sign_agreement(self) -> float:
        return sign_agreement(self.smoothed_predicted, self.smoothed_actual)

    @property
    def correlation(self) -> float:
        return correlation(self.predicted, self.actual)


def subnet_routing(G: RoutingMatrix, node1: str, node2: str) -> tuple[RoutingMatrix, LinearFunctional]:
    """Routing matrix of the paths leaving either node, with the mean-difference functional."""
    if node1 == node2:
        raise InvalidInput("the two ingress nodes must differ")
    p1, p2 = G.paths_from(node1), G.paths_from(node2)
    if not p1 or not p2:
        missing = node1 if not p1 else node2
        raise InvalidInput(f"no paths originate at {missing!r}")
    Gt = G.restrict(p1 + p2)
    g1 = [i for i, (s, _) in enumerate(Gt.paths) if s == node1]
    g2 = [i for i, (s, _) in enumerate(Gt.paths) if s == node2]
    return Gt, LinearFunctional.group_difference(Gt.n_paths, g1, g2, label=f"diff:{node1},{node2}")


def compare_subnets(G: RoutingMatrix, cov: CovarianceModel, link_series, node1: str, node2: str, k: int,
                    calibrate: bool = True, calibration_epoch: int = 0, alpha: float = 0.1) -> SubnetComparison:
    """Predict ``mean delay from node1 - mean delay from node2`` per epoch.

    Only paths leaving one of the two nodes are candidates for measurement.
    """
    Gt, functional = subnet_routing(G, node1, node2)
    pred, actual, model = prediction_series(Gt, cov, link_series, functional, k,
                                            calibrate=calibrate, calibration_epoch=calibration_epoch)
    return SubnetComparison(
        node1, node2, k, Gt, eigenspectrum(weighted_matrix(Gt, cov), label=f"{node1}-{node2}"),
        model.selection, model.bias_offset, np.asarray(pred), np.asarray(actual), alpha,
    )


# -- robustness to link failures ------------------------------------------------


@dataclass(frozen=True)
class DeletionVariant:
    deleted: tuple[int, ...]
    strongly_connected: bool
    scaled_spectrum: Spectrum | None = None
    # first-eigenvector energy indexed by intact link id; NaN for deleted links
    energy: np.ndarray | None = None
    ambiguous: bool = False


def analyse_variant(topology: Topology, cov: CovarianceModel, deleted=()) -> DeletionVariant:
    """Scaled spectrum and first-eigenvector energy of ``G C`` after deleting links.

    The covariance of the intact network is reused for the surviving links.
    """
    deleted = tuple(sorted(deleted))
    variant = delete_links(topology, deleted)
    if not variant.strongly_connected:
        return DeletionVariant(deleted, False)
    try:
        G = build_routing_matrix(variant)
    except NotStronglyConnected:
        return DeletionVariant(deleted, False)
    origins = [link.original_id for link in variant.links]
    H = weighted_matrix(G, cov.restrict(origins))
    spectrum = scale_to_unit_max(eigenspectrum(H, label="+".join(map(str, deleted)) or "intact"))
    ev = eigenvector_energy(H, 0)
    energy = np.full(topology.n_links, np.nan)
    energy[origins] = ev.energy
    return DeletionVariant(deleted, True, spectrum, energy, ev.ambiguous)


def robustness_sweep(topology: Topology, cov: CovarianceModel, depth: int = 1) -> list[DeletionVariant]:
    """Analyse every set of ``depth`` deleted links, in lexicographic order.

    Variants that are no longer strongly connected are kept in the output
    with ``strongly_connected=False`` so they can be counted.
    """
    if depth not in (1, 2):
        raise InvalidInput(f"depth must be 1 or 2, got {depth}")
    if cov.n_links != topology.n_links:
        raise DimensionMismatch(f"covariance has {cov.n_links} links, topology {topology.n_links}")
    return [analyse_variant(topology, cov, combo)
            for combo in itertools.combinations(range(topology.n_links), depth)]


def max_spectral_gap(reference: Spectrum, variants) -> float:
    """Largest pointwise gap between scaled variant spectra and a scaled reference.

    Spectra are compared over their common leading entries.
    """
    ref = scale_to_unit_max(reference).eigenvalues
    gap = 0.0
    for v in variants:
        if v.scaled_spectrum is None:
            continue
        ev = v.scaled_spectrum.eigenvalues
        n = min(ev.size, ref.size)
        gap = max(gap, float(np.max(np.abs(ev[:n] - ref[:n]))))
    return gap
