"""Command-line front end: estimate, inject-outliers, simulate, experiment.

Every command is deterministic given its inputs and declared seeds.  All
file writes go through a write-temp-then-rename so partial output never
lands under the target name.  Exit codes: 0 success, 2 validation or
usage error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from .acf import classical_acf, robust_acf
from .errors import NumericError, ParseError, RangeError, ToolkitError, ValidationError
from .experiments import config_to_dict, load_config, run_experiment
from .processes import OutlierSpec, ProcessSpec, contaminate, generate, rng_stream
from .scale import GAUSSIAN_CONSISTENCY, qn_scale, sample_std
from .series import TimeSeries, as_series

__all__ = [
    "EstimateReport",
    "ingest_series",
    "cmd_estimate",
    "cmd_inject_outliers",
    "cmd_simulate",
    "cmd_experiment",
    "main",
]

# series round-trip uses 17 significant digits (exact for binary doubles);
# human-facing tables use 6
_SERIES_FMT = "%.17g"
_TABLE_DIGITS = 6


def _atomic_write(path, text: str):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_float(token: str, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"line {lineno}: cannot parse {token!r} as a number",
                         line=lineno)
    if not np.isfinite(value):
        raise ParseError(f"line {lineno}: non-finite value {token!r}",
                         line=lineno)
    return value


def ingest_series(path, csv_column=None) -> TimeSeries:
    """Read a series from a single-column file or a CSV column.

    Blank lines (and '#' comment lines in single-column mode) are skipped;
    any non-numeric or non-finite token fails with its line number, no
    imputation.  ``csv_column`` may be a 0-based index or a header name.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}")
    values = []
    if csv_column is None:
        for lineno, raw in enumerate(text.splitlines(), start=1):
            token = raw.strip()
            if not token or token.startswith("#"):
                continue
            values.append(_parse_float(token, lineno))
    else:
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ParseError("empty CSV file")
        col, start = _resolve_column(rows, csv_column)
        for lineno, row in enumerate(rows[start:], start=start + 1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if col >= len(row):
                raise ParseError(f"line {lineno}: missing column {csv_column!r}",
                                 line=lineno)
            values.append(_parse_float(row[col].strip(), lineno))
    if not values:
        raise ParseError("no data values found")
    return TimeSeries(np.array(values), {"source": str(path)})


def _resolve_column(rows, csv_column):
    header = rows[0]
    if isinstance(csv_column, str):
        try:
            return [c.strip() for c in header].index(csv_column), 1
        except ValueError:
            try:
                idx = int(csv_column)
            except ValueError:
                raise ParseError(f"column {csv_column!r} not found in header "
                                 f"{[c.strip() for c in header]}")
            csv_column = idx
    idx = int(csv_column)
    if idx < 0:
        raise ValidationError("column index must be nonnegative")
    # a non-numeric first cell in the chosen column marks a header row
    try:
        float(header[idx])
        return idx, 0
    except (ValueError, IndexError):
        return idx, 1


@dataclass(frozen=True)
class EstimateReport:
    """Series summary plus the full ACF table and optional injection manifest."""

    n: int
    mean: float
    sd: float
    qn: float
    constant: float
    lags: np.ndarray
    acf_classical: np.ndarray
    acf_robust: np.ndarray
    acv_classical: np.ndarray
    acv_robust: np.ndarray
    wn_band: float
    manifest: list | None = None

    def header_dict(self) -> dict:
        return {"n": self.n, "mean": self.mean, "sd": self.sd, "qn": self.qn,
                "consistency_constant": self.constant,
                "white_noise_band": self.wn_band,
                "acf_normalization": "robust: bounded ratio; "
                                     "classical: sample correlation"}

    def to_json_dict(self) -> dict:
        doc = {"header": self.header_dict(),
               "table": [
                   {"lag": int(h),
                    "acf_classical": float(self.acf_classical[i]),
                    "acf_robust": float(self.acf_robust[i]),
                    "acv_classical": float(self.acv_classical[i]),
                    "acv_robust": float(self.acv_robust[i]),
                    "in_wn_band_classical": bool(
                        h > 0 and abs(self.acf_classical[i]) <= self.wn_band),
                    "in_wn_band_robust": bool(
                        h > 0 and abs(self.acf_robust[i]) <= self.wn_band)}
                   for i, h in enumerate(self.lags)]}
        if self.manifest is not None:
            doc["injected_outliers"] = self.manifest
        return doc


def cmd_estimate(series, max_lag: int, output=None,
                 fmt: str = "csv") -> EstimateReport:
    """Scale and ACF report for one series; optionally written to a file."""
    s = as_series(series)
    if not 0 <= max_lag <= s.n - 3:
        raise RangeError(f"max_lag={max_lag} outside 0..{s.n - 3} for n={s.n}")
    rob_rho = robust_acf(s, max_lag)
    rob_gam = robust_acf(s, max_lag, normalization="covariance")
    cls_rho = classical_acf(s, max_lag)
    cls_gam = classical_acf(s, max_lag, normalization="covariance")
    report = EstimateReport(
        n=s.n,
        mean=float(s.values.mean()),
        sd=sample_std(s).value if s.n >= 2 else 0.0,
        qn=qn_scale(s).value,
        constant=GAUSSIAN_CONSISTENCY,
        lags=rob_rho.lags,
        acf_classical=cls_rho.values,
        acf_robust=rob_rho.values,
        acv_classical=cls_gam.values,
        acv_robust=rob_gam.values,
        wn_band=2.0 / np.sqrt(s.n),
        manifest=s.meta.get("injected_outliers"),
    )
    if output is not None:
        if fmt == "csv":
            _atomic_write(output, _report_csv(report))
        elif fmt == "json":
            _atomic_write(output, json.dumps(report.to_json_dict(), indent=2)
                          + "\n")
        else:
            raise ValidationError(f"unknown format {fmt!r}")
    return report


def _report_csv(report: EstimateReport) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(report.header_dict()) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["lag", "acf_classical", "acf_robust", "acv_classical",
                     "acv_robust", "in_wn_band_classical", "in_wn_band_robust"])
    g = f"%.{_TABLE_DIGITS}g"
    for i, h in enumerate(report.lags):
        writer.writerow([
            int(h),
            g % report.acf_classical[i], g % report.acf_robust[i],
            g % report.acv_classical[i], g % report.acv_robust[i],
            int(h > 0 and abs(report.acf_classical[i]) <= report.wn_band),
            int(h > 0 and abs(report.acf_robust[i]) <= report.wn_band),
        ])
    return buf.getvalue()


def cmd_inject_outliers(series, indices, magnitude_in_sds: float):
    """Replace values at the given indices by mean + k * sd of the original.

    Moments come from the original series; the manifest of (index, original,
    injected) lands in the returned series' metadata.
    """
    s = as_series(series)
    idx = [int(i) for i in indices]
    for i in idx:
        if not 0 <= i < s.n:
            raise RangeError(f"index {i} outside 0..{s.n - 1}")
    mean = float(s.values.mean())
    sd = sample_std(s).value if s.n >= 2 else 0.0
    injected_value = mean + magnitude_in_sds * sd
    values = s.values.copy()
    manifest = []
    for i in idx:
        manifest.append({"index": i, "original": float(values[i]),
                         "injected": injected_value})
        values[i] = injected_value
    meta = dict(s.meta)
    meta["injected_outliers"] = manifest
    return TimeSeries(values, meta), manifest


def _series_text(values: np.ndarray) -> str:
    return "\n".join(_SERIES_FMT % v for v in values) + "\n"


def cmd_simulate(spec: ProcessSpec, n: int, seed: int, output,
                 outlier_spec: OutlierSpec | None = None,
                 arfima_method: str = "auto") -> TimeSeries:
    """Generate (and optionally contaminate) a path; write it plus a JSON sidecar.

    The series file round-trips bit-exactly through ``ingest_series``.
    """
    series = generate(spec, n, _seed_stream(seed, "process"),
                      arfima_method=arfima_method)
    if outlier_spec is not None and not outlier_spec.is_null:
        series = contaminate(series, outlier_spec, _seed_stream(seed, "outliers"))
    _atomic_write(output, _series_text(series.values))
    sidecar = {
        "process": {"kind": spec.kind, "phi": spec.phi, "d": spec.d,
                    "innovation_sd": spec.innovation_sd},
        "n": n,
        "seed": seed,
        "outliers": None if outlier_spec is None else
            {"probability": outlier_spec.probability,
             "magnitude": outlier_spec.magnitude},
        "contamination_manifest": series.meta.get("contamination"),
        "generator_meta": {k: v for k, v in series.meta.items()
                           if k != "contamination"},
    }
    _atomic_write(str(output) + ".json", json.dumps(sidecar, indent=2) + "\n")
    return series


def _seed_stream(seed: int, tag: str):
    from .processes import rng_stream
    return rng_stream(seed, tag)


def cmd_experiment(config_path, output_dir, full_scale: bool = False,
                   workers: int = 1, out=sys.stdout):
    """Run a configured experiment; write summary CSV/JSON and histograms.

    Prints one PASS/FAIL line per configured target that carries a
    tolerance.  Returns the summary.
    """
    config = load_config(config_path)
    if full_scale:
        config = config.scaled(5)
    summary = run_experiment(config, workers=workers)
    os.makedirs(output_dir, exist_ok=True)
    _atomic_write(os.path.join(output_dir, "summary.csv"), _summary_csv(summary))
    _atomic_write(os.path.join(output_dir, "summary.json"),
                  json.dumps(_summary_json(summary), indent=2) + "\n")
    for name, est in summary.estimators.items():
        if est.histogram_edges is None:
            continue
        _atomic_write(os.path.join(output_dir, f"hist_{name}.csv"),
                      _hist_csv(est))
    all_ok = True
    for name, stat, observed, target, tol, passed in summary.check_targets():
        if passed is None:
            continue
        all_ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {summary.config.name or 'experiment'} "
              f"{name}.{stat} = {observed:.6g} vs {target:.6g} +- {tol:.6g}",
              file=out)
    return summary, all_ok


def _summary_csv(summary) -> str:
    buf = io.StringIO()
    meta = {"name": summary.config.name, "n": summary.config.n,
            "replications": summary.config.replications,
            "master_seed": summary.config.master_seed,
            "consistency_constant": GAUSSIAN_CONSISTENCY,
            "normalization": summary.config.normalization.kind,
            "wall_time_s": round(summary.wall_time, 3)}
    buf.write("# " + json.dumps(meta) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["estimator", "mean", "sd", "target", "bias", "rmse",
                     "mse", "normalized_mean", "normalized_sd"])
    fmt = lambda v: "" if v is None else (f"%.{_TABLE_DIGITS}g" % v)
    for name, est in summary.estimators.items():
        writer.writerow([name, fmt(est.mean), fmt(est.sd), fmt(est.target),
                         fmt(est.bias), fmt(est.rmse), fmt(est.mse),
                         fmt(est.normalized_mean), fmt(est.normalized_sd)])
    return buf.getvalue()


def _summary_json(summary) -> dict:
    ests = {}
    for name, est in summary.estimators.items():
        doc = {"mean": est.mean, "sd": est.sd, "target": est.target,
               "bias": est.bias, "rmse": est.rmse, "mse": est.mse,
               "normalized_mean": est.normalized_mean,
               "normalized_sd": est.normalized_sd}
        if est.normalized_errors is not None:
            doc["normalized_errors"] = est.normalized_errors.tolist()
            doc["histogram"] = {"edges": est.histogram_edges.tolist(),
                                "counts": est.histogram_counts.tolist()}
        ests[name] = doc
    return {"config": config_to_dict(summary.config),
            "wall_time_s": summary.wall_time,
            "estimators": ests}


def _hist_csv(est) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bin_left", "bin_right", "count"])
    for i, count in enumerate(est.histogram_counts):
        writer.writerow([est.histogram_edges[i], est.histogram_edges[i + 1],
                         int(count)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustacv",
        description="Robust scale and autocovariance toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="scale/ACF report for a series file")
    est.add_argument("--input", required=True)
    est.add_argument("--csv-column", default=None,
                     help="CSV column name or 0-based index; omit for a "
                          "single-column file")
    est.add_argument("--max-lag", type=int, required=True)
    est.add_argument("--output", required=True)
    est.add_argument("--format", choices=("csv", "json"), default="csv")

    inj = sub.add_parser("inject-outliers",
                         help="replace chosen values by mean + k sd")
    inj.add_argument("--input", required=True)
    inj.add_argument("--csv-column", default=None)
    inj.add_argument("--indices", required=True,
                     help="comma-separated 0-based indices, e.g. 24,187,256")
    inj.add_argument("--magnitude", type=float, required=True,
                     help="offset in original-sample standard deviations")
    inj.add_argument("--output", required=True)

    sim = sub.add_parser("simulate", help="generate a seeded sample path")
    sim.add_argument("--process", choices=("ar1", "arfima", "white-noise"),
                     required=True)
    sim.add_argument("--phi", type=float, default=None)
    sim.add_argument("--d", type=float, default=None)
    sim.add_argument("--innovation-sd", type=float, default=1.0)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--outlier-probability", type=float, default=0.0)
    sim.add_argument("--outlier-magnitude", type=float, default=0.0)
    sim.add_argument("--arfima-method", choices=("auto", "ma", "exact"),
                     default="auto")
    sim.add_argument("--output", required=True)

    exp = sub.add_parser("experiment", help="run a configured experiment")
    exp.add_argument("--config", required=True)
    exp.add_argument("--output-dir", required=True)
    exp.add_argument("--full-scale", action="store_true",
                     help="multiply the replication count by 5")
    exp.add_argument("--workers", type=int, default=1)
    return parser


def _dispatch(args) -> int:
    if args.command == "estimate":
        series = ingest_series(args.input, args.csv_column)
        cmd_estimate(series, args.max_lag, args.output, args.format)
        return 0
    if args.command == "inject-outliers":
        series = ingest_series(args.input, args.csv_column)
        try:
            indices = [int(tok) for tok in args.indices.split(",") if tok.strip()]
        except ValueError:
            raise ValidationError(f"cannot parse indices {args.indices!r}")
        injected, manifest = cmd_inject_outliers(series, indices, args.magnitude)
        _atomic_write(args.output, _series_text(injected.values))
        _atomic_write(args.output + ".json",
                      json.dumps({"injected_outliers": manifest}, indent=2) + "\n")
        return 0
    if args.command == "simulate":
        kind = {"ar1": "ar1", "arfima": "arfima0d0",
                "white-noise": "white_noise"}[args.process]
        spec = ProcessSpec(kind, phi=args.phi, d=args.d,
                           innovation_sd=args.innovation_sd)
        outliers = OutlierSpec(args.outlier_probability, args.outlier_magnitude)
        cmd_simulate(spec, args.n, args.seed, args.output, outliers,
                     args.arfima_method)
        return 0
    if args.command == "experiment":
        _, all_ok = cmd_experiment(args.config, args.output_dir,
                                   args.full_scale, args.workers)
        return 0 if all_ok else 1
    raise ValidationError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
