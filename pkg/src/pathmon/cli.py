"""Command-line front end.

Every command writes CSV files plus a ``run_manifest.json`` into ``--out``.
Exit codes: 0 success, 1 numerical/internal failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (
    DEFAULT_SWEEP,
    compare_subnets,
    correlation,
    detect_spikes,
    error_curve,
    max_spectral_gap,
    prediction_series,
    relative_error,
    robustness_sweep,
    roc_sweep,
)
from .data_io import (
    SyntheticConfig,
    estimate_diag_covariance,
    generate_synthetic,
    load_covariance,
    load_link_series,
    parse_series,
    write_covariance,
    write_series,
    PATH_SERIES,
)
from .errors import InvalidInput, ParseError, PathmonError
from .predictor import LinearFunctional, build_predictor, calibrate_bias, predict
from .selection import auto_k, select_paths, write_selection_csv
from .spectral import (
    CovarianceModel,
    effective_rank,
    eigenspectrum,
    eigenvector_energy,
    weighted_matrix,
    write_spectrum_csv,
)
from .topology import abilene, build_routing_matrix, load_topology

log = logging.getLogger("pathmon")

BUNDLED = "abilene"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Run:
    """Output directory plus the manifest describing how it was produced."""

    def __init__(self, args, command: str):
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.params = {k: v for k, v in sorted(vars(args).items())
                       if k not in ("func", "out") and v is not None}
        self.inputs = {}
        self.seed = getattr(args, "seed", None)

    def input(self, path):
        self.inputs[str(path)] = _sha256(path)
        return path

    def path(self, name: str) -> Path:
        return self.out / name

    def finish(self):
        manifest = {
            "command": self.command,
            "parameters": {k: _jsonable(v) for k, v in self.params.items()},
            "input_hashes": dict(sorted(self.inputs.items())),
            "seed": self.seed,
            "tool_version": __version__,
        }
        self.path("run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _jsonable(v):
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return str(v)


# -- argument helpers -------------------------------------------------------


def _topology(run: Run, spec: str):
    if spec == BUNDLED:
        return abilene()
    return load_topology(run.input(spec))


def _covariance(run: Run, spec: str, topology, window=None) -> CovarianceModel:
    if spec == "identity":
        return CovarianceModel.identity(topology.n_links)
    kind, _, arg = spec.partition(":")
    if kind == "estimate" and arg:
        series = load_link_series(run.input(arg), topology)
        return estimate_diag_covariance(series, window)
    if kind == "file" and arg:
        return load_covariance(run.input(arg), topology)
    raise InvalidInput(f"--cov must be identity, estimate:<series> or file:<csv>, got {spec!r}")


def _epoch_window(text):
    if text is None:
        return None
    try:
        start, stop = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:STOP, got {text!r}") from None
    return (start, stop)


def _k_spec(text: str):
    """``auto``, a positive integer, a comma list, or an inclusive range ``a-b``."""
    if text == "auto":
        return "auto"
    try:
        if "-" in text:
            lo, hi = (int(x) for x in text.split("-"))
            ks = list(range(lo, hi + 1))
        else:
            ks = [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid k {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("k must be a positive integer")
    return ks


def _resolve_k(kspec, G, cov):
    return [auto_k(G, cov)] if kspec == "auto" else kspec


def _functional(text: str):
    if text == "mean":
        return ("mean",)
    kind, _, arg = text.partition(":")
    nodes = [n.strip() for n in arg.split(",")]
    if kind == "diff" and len(nodes) == 2 and all(nodes):
        return ("diff", nodes[0], nodes[1])
    raise argparse.ArgumentTypeError(f"--functional must be mean or diff:<node1>,<node2>, got {text!r}")


def _check_node(topology, node):
    topology.node_index(node)


# -- commands ---------------------------------------------------------------


def _spectrum_outputs(run: Run, G, cov, label: str):
    spec_i = eigenspectrum(G.entries, label="G")
    spec_c = eigenspectrum(weighted_matrix(G, cov), label="GC")
    write_spectrum_csv(spec_i, run.path("spectrum_identity.csv"))
    write_spectrum_csv(spec_c, run.path(f"spectrum_{label}.csv"))
    rows = []
    for model, M in (("identity", G.entries), (label, weighted_matrix(G, cov))):
        for which in range(min(2, G.n_links)):
            ev = eigenvector_energy(M, which)
            for j, e in enumerate(ev.energy):
                rows.append((model, which + 1, j, e, int(ev.ambiguous)))
    _write_csv(run.path("eigvec_energy.csv"), ["model", "eigenvector", "link_id", "energy", "ambiguous"], rows)
    return spec_i, spec_c


def cmd_spectrum(args) -> int:
    run = Run(args, "spectrum")
    topology = _topology(run, args.topology)
    cov = _covariance(run, args.cov, topology, args.cov_window)
    G = build_routing_matrix(topology)
    spec_i, spec_c = _spectrum_outputs(run, G, cov, "cov")
    print(f"paths={G.n_paths} links={G.n_links} rank={spec_i.rank} rank_GC={spec_c.rank} "
          f"effective_rank_0.95={effective_rank(spec_i)} effective_rank_GC_0.95={effective_rank(spec_c)}")
    run.finish()
    return 0


def cmd_select(args) -> int:
    run = Run(args, "select")
    topology = _topology(run, args.topology)
    cov = _covariance(run, args.cov, topology, args.cov_window)
    G = build_routing_matrix(topology)
    selections = [select_paths(G, cov, k) for k in _resolve_k(args.k, G, cov)]
    write_selection_csv(selections, G, run.path("selection.csv"))
    for sel in selections:
        print(f"k={sel.k}: " + ", ".join(f"{G.paths[i][0]}->{G.paths[i][1]}" for i in sel.selected))
    run.finish()
    return 0


def _prediction_rows(pred, actual):
    if actual is None:
        return [(t, p, None, None) for t, p in enumerate(pred)]
    rel = relative_error(pred, actual)
    return [(t, p, a, r) for t, (p, a, r) in enumerate(zip(pred, actual, rel))]


def _write_subnet(path, comparison):
    rows = zip(range(len(comparison.predicted)), comparison.predicted, comparison.actual,
               comparison.smoothed_predicted, comparison.smoothed_actual)
    _write_csv(path, ["epoch", "predicted_diff", "actual_diff", "smoothed_predicted_diff", "smoothed_actual_diff"], rows)


def cmd_predict(args) -> int:
    run = Run(args, "predict")
    topology = _topology(run, args.topology)
    cov = _covariance(run, args.cov, topology, args.cov_window)
    G = build_routing_matrix(topology)
    functional = args.functional
    if functional[0] == "diff":
        for node in functional[1:]:
            _check_node(topology, node)
    ks = _resolve_k(args.k, G, cov)

    if args.paths is not None:
        # deployment mode: only sampled path values are available
        if functional[0] != "mean":
            raise InvalidInput("--paths supports only the mean functional")
        if args.calibrate:
            raise InvalidInput("calibration needs full link values; use --series")
        measured = parse_series(Path(run.input(args.paths)).read_text(), PATH_SERIES)
        for k in ks:
            sel = select_paths(G, cov, k)
            missing = sorted(set(sel.selected) - set(measured.column_ids))
            if missing:
                raise InvalidInput(f"path series lacks selected path ids {missing}")
            cols = [measured.column_ids.index(i) for i in sel.selected]
            model = build_predictor(G, cov, sel, LinearFunctional.network_average(G.n_paths))
            pred = np.atleast_1d(predict(model, measured.values[:, cols]))
            _write_csv(run.path(f"predictions_k{k}.csv"), ["epoch", "predicted", "actual", "relative_error"],
                       _prediction_rows(pred, None))
        run.finish()
        return 0

    if args.series is None:
        raise InvalidInput("predict needs --series (link values) or --paths (sampled path values)")
    series = load_link_series(run.input(args.series), topology)
    for k in ks:
        if functional[0] == "mean":
            pred, actual, model = prediction_series(
                G, cov, series, LinearFunctional.network_average(G.n_paths), k,
                calibrate=args.calibrate, calibration_epoch=args.calibration_epoch)
            print(f"k={k} mean_relative_error={relative_error(pred, actual).mean():.6g} "
                  f"correlation={correlation(pred, actual):.4f} bias_offset={model.bias_offset:.6g}")
        else:
            comparison = compare_subnets(G, cov, series, functional[1], functional[2], k,
                                         calibrate=args.calibrate, calibration_epoch=args.calibration_epoch,
                                         alpha=args.alpha)
            pred, actual = comparison.predicted, comparison.actual
            _write_subnet(run.path(f"subnet_k{k}.csv"), comparison)
            print(f"k={k} sign_agreement={comparison.sign_agreement:.4f} "
                  f"smoothed_sign_agreement={comparison.smoothed_sign_agreement:.4f} "
                  f"correlation={comparison.correlation:.4f}")
        _write_csv(run.path(f"predictions_k{k}.csv"), ["epoch", "predicted", "actual", "relative_error"],
                   _prediction_rows(pred, actual))
    run.finish()
    return 0


def _read_columns(path) -> dict[str, np.ndarray]:
    text = Path(path).read_text()
    rows = list(csv.reader(text.splitlines()))
    if len(rows) < 2:
        raise ParseError(f"{path}: no data rows", line=len(rows) + 1)
    header = rows[0]
    columns = {}
    for c, name in enumerate(header):
        values = []
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != len(header):
                raise ParseError(f"{path}: expected {len(header)} fields", line=lineno)
            try:
                values.append(float(row[c]) if row[c] != "" else np.nan)
            except ValueError:
                raise ParseError(f"{path}: bad value {row[c]!r}", line=lineno) from None
        columns[name] = np.array(values)
    return columns


def _spike_rows(events):
    return [(e.epoch, e.value, e.baseline_mean, e.baseline_std, e.excess_sigmas) for e in events]


SPIKE_HEADER = ["epoch", "value", "baseline_mean", "baseline_std", "excess_sigmas"]
ROC_HEADER = ["threshold_sigmas", "true_positive_rate", "false_positive_rate"]


def cmd_detect(args) -> int:
    run = Run(args, "detect")
    columns = _read_columns(run.input(args.input))
    if args.column not in columns:
        raise InvalidInput(f"column {args.column!r} not in {sorted(columns)}")
    series = columns[args.column]
    if np.isnan(series).any():
        raise InvalidInput(f"column {args.column!r} has missing values")
    events = detect_spikes(series, args.window, args.sigmas)
    _write_csv(run.path("spikes.csv"), SPIKE_HEADER, _spike_rows(events))
    print(f"{len(events)} spike(s) above {args.sigmas} sigma in {args.column!r}")
    if args.roc:
        if "actual" not in columns or np.isnan(columns["actual"]).any():
            raise InvalidInput("ROC needs a complete 'actual' column")
        points = roc_sweep(columns["actual"], series, args.window, args.actual_sigmas)
        _write_csv(run.path("roc.csv"), ROC_HEADER,
                   [(p.threshold_sigmas, p.true_positive_rate, p.false_positive_rate) for p in points])
    run.finish()
    return 0


def _robustness_outputs(run: Run, topology, cov, depth: int, suffix: str = ""):
    variants = robustness_sweep(topology, cov, depth)
    G = build_routing_matrix(topology)
    intact = eigenspectrum(weighted_matrix(G, cov))
    spectra, energy = [], []
    for v in variants:
        name = "+".join(str(i) for i in v.deleted)
        if not v.strongly_connected:
            spectra.append((name, "not_strongly_connected", None, None))
            continue
        for i, ev in enumerate(v.scaled_spectrum.eigenvalues, start=1):
            spectra.append((name, "ok", i, ev))
        for j, e in enumerate(v.energy):
            if not np.isnan(e):
                energy.append((name, j, e))
    _write_csv(run.path(f"robustness_spectra{suffix}.csv"), ["deleted", "status", "index", "scaled_eigenvalue"], spectra)
    _write_csv(run.path(f"robustness_eigvec_energy{suffix}.csv"), ["deleted", "link_id", "energy"], energy)
    n_bad = sum(not v.strongly_connected for v in variants)
    gap = max_spectral_gap(intact, variants)
    print(f"depth={depth}: {len(variants)} variants, {n_bad} not strongly connected, max scaled-spectrum gap {gap:.4f}")
    return variants


def cmd_robustness(args) -> int:
    run = Run(args, "robustness")
    topology = _topology(run, args.topology)
    cov = _covariance(run, args.cov, topology, args.cov_window)
    _robustness_outputs(run, topology, cov, args.depth)
    run.finish()
    return 0


def cmd_synth(args) -> int:
    run = Run(args, "synth")
    topology = _topology(run, args.topology)
    config = SyntheticConfig(seed=args.seed, epochs=args.epochs,
                             diurnal_amplitude_fraction=args.diurnal_amplitude,
                             diurnal_links_fraction=args.diurnal_links)
    series = generate_synthetic(config, topology)
    write_series(series, run.path("link_series.csv"))
    write_covariance(estimate_diag_covariance(series), run.path("covariance.csv"))
    run.finish()
    return 0


REPRODUCE_PREDICT_KS = (3, 5, 7, 9)
REPRODUCE_ROC_KS = (3, 6, 9)


def cmd_reproduce(args) -> int:
    """Full synthetic pipeline on the bundled Abilene topology."""
    run = Run(args, "reproduce")
    topology = abilene()
    series = generate_synthetic(SyntheticConfig(seed=args.seed), topology)
    write_series(series, run.path("link_series.csv"))
    cov = estimate_diag_covariance(series)
    write_covariance(cov, run.path("covariance.csv"))
    identity = CovarianceModel.identity(topology.n_links)
    G = build_routing_matrix(topology)
    mean = LinearFunctional.network_average(G.n_paths)

    _spectrum_outputs(run, G, cov, "diagonal")
    ks = range(1, G.rank() + 1)
    for label, c in (("identity", identity), ("diagonal", cov)):
        write_selection_csv([select_paths(G, c, k) for k in ks], G, run.path(f"selection_{label}.csv"))

    curves = {label: error_curve(series, G, c, mean, ks).mean_relative_error
              for label, c in (("identity", identity), ("diagonal", cov))}
    _write_csv(run.path("error_curve.csv"), ["k", "mean_rel_error_identity", "mean_rel_error_diagonal"],
               zip(ks, curves["identity"], curves["diagonal"]))

    predictions = {}
    for k in sorted(set(REPRODUCE_PREDICT_KS) | set(REPRODUCE_ROC_KS)):
        pred, actual, _ = prediction_series(G, cov, series, mean, k, calibrate=True)
        predictions[k] = (pred, actual)
        if k in REPRODUCE_PREDICT_KS:
            _write_csv(run.path(f"predictions_k{k}.csv"), ["epoch", "predicted", "actual", "relative_error"],
                       _prediction_rows(pred, actual))

    actual = predictions[9][1]
    spikes = [("actual", 3.0, e) for e in detect_spikes(actual, 6, 3.0)]
    spikes += [("predicted_k9", 2.0, e) for e in detect_spikes(predictions[9][0], 6, 2.0)]
    _write_csv(run.path("spikes.csv"), ["series", "threshold_sigmas"] + SPIKE_HEADER,
               [(name, thr) + row for name, thr, e in spikes for row in _spike_rows([e])])
    roc_rows = []
    for k in REPRODUCE_ROC_KS:
        for p in roc_sweep(predictions[k][1], predictions[k][0], 6, 3.0, DEFAULT_SWEEP):
            roc_rows.append((k, p.threshold_sigmas, p.true_positive_rate, p.false_positive_rate))
    _write_csv(run.path("roc.csv"), ["k"] + ROC_HEADER, roc_rows)

    comparison = compare_subnets(G, cov, series, "Chicago", "Atlanta", 5)
    _write_subnet(run.path("subnet.csv"), comparison)
    write_spectrum_csv(comparison.spectrum, run.path("subnet_spectrum.csv"))

    _robustness_outputs(run, topology, cov, 1)
    _robustness_outputs(run, topology, cov, 2, suffix="_depth2")
    run.finish()
    return 0


# -- entry point ------------------------------------------------------------


def _add_common(p, cov=True):
    p.add_argument("--topology", default=BUNDLED, help="edge-list CSV, or 'abilene' for the bundled asset")
    if cov:
        p.add_argument("--cov", default="identity", help="identity | estimate:<series.csv> | file:<cov.csv>")
        p.add_argument("--cov-window", type=_epoch_window, default=None,
                       help="START:STOP epochs for --cov estimate (default: first 144)")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pathmon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="eigenspectra of G and GC, first two eigenvector energies")
    _add_common(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("select", help="choose k paths to measure")
    _add_common(p)
    p.add_argument("--k", type=_k_spec, default="auto", help="n, a-b, n1,n2,... or auto")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("predict", help="predict a path summary per epoch")
    _add_common(p)
    p.add_argument("--series", help="link-series CSV (ground truth available)")
    p.add_argument("--paths", help="path-series CSV holding the measured paths only")
    p.add_argument("--k", type=_k_spec, default="auto")
    p.add_argument("--functional", type=_functional, default=("mean",), help="mean | diff:<node1>,<node2>")
    p.add_argument("--calibrate", action=argparse.BooleanOptionalAction, default=False,
                   help="fit a bias offset on one fully measured epoch")
    p.add_argument("--calibration-epoch", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.1, help="smoothing factor for difference series")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("detect", help="spikes in a prediction CSV, optionally with an ROC sweep")
    p.add_argument("--input", required=True)
    p.add_argument("--column", default="predicted")
    p.add_argument("--window", type=int, default=6)
    p.add_argument("--sigmas", type=float, default=3.0)
    p.add_argument("--actual-sigmas", type=float, default=3.0)
    p.add_argument("--roc", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("robustness", help="spectra after deleting one or two links")
    _add_common(p)
    p.add_argument("--depth", type=int, choices=(1, 2), default=1)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("synth", help="write a seeded synthetic link series")
    _add_common(p, cov=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=432)
    p.add_argument("--diurnal-amplitude", type=float, default=0.1)
    p.add_argument("--diurnal-links", type=float, default=0.3)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("reproduce", help="run the whole seeded synthetic pipeline")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvalidInput as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except PathmonError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: NumericalFailure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
