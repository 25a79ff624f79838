"""Efficient monitoring of additive end-to-end path metrics.

Measure a few well-chosen paths, then predict network-wide linear summaries
(averages, group differences) of all path values with a best linear
predictor built from the routing matrix and per-link variances.
"""

__version__ = "0.1.0"

from .analytics import (
    AnomalyEvent,
    RocPoint,
    compare_subnets,
    detect_spikes,
    error_curve,
    exp_smooth,
    robustness_sweep,
    roc_sweep,
)
from .data_io import (
    MeasurementSeries,
    SyntheticConfig,
    estimate_diag_covariance,
    generate_synthetic,
    load_link_series,
)
from .predictor import (
    LinearFunctional,
    MomentPartition,
    PredictorModel,
    bias_of_eblp,
    build_predictor,
    calibrate_bias,
    estimate_mu,
    mspe_blp,
    partition_moments,
    predict,
)
from .selection import PathSelection, select_paths, selection_overlap
from .spectral import (
    CovarianceModel,
    Spectrum,
    effective_rank,
    eigenspectrum,
    eigenvector_energy,
    scale_to_unit_max,
    weighted_matrix,
)
from .topology import (
    RoutingMatrix,
    Topology,
    abilene,
    build_routing_matrix,
    delete_links,
    load_topology,
    path_values,
    shortest_paths,
)
