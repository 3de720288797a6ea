"""Seeded Monte-Carlo experiments over the scale and autocovariance estimators.

Each replication r draws its clean path from the stream
(master_seed, r, "process") and its contamination from
(master_seed, r, "outliers"), so replications are independent work units
whose results do not depend on scheduling.  Aggregation always runs in
replication order with compensated summation.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .acf import AcfSequence, classical_acf, classical_autocov, robust_acf, robust_autocov
from .errors import ValidationError
from .processes import (OutlierSpec, ProcessSpec, contaminate, gen_ar1_skewed,
                        generate, rng_stream, theoretical_acv)
from .scale import qn_scale, sample_std
from .series import TimeSeries

__all__ = [
    "Normalization",
    "Target",
    "ExperimentConfig",
    "ReplicationRecord",
    "EstimatorSummary",
    "ExperimentSummary",
    "yule_walker_ar1",
    "run_replication",
    "run_experiment",
    "empirical_are",
    "config_from_dict",
    "config_to_dict",
    "load_config",
    "presets",
]

_BASE_ESTIMATORS = ("qn", "std", "robust_acv", "classical_acv",
                    "phi_robust", "phi_classical")


def yule_walker_ar1(acf: AcfSequence) -> float:
    """Order-1 Yule-Walker estimate: phi_hat = rho_hat(1)."""
    if acf.normalization != "correlation":
        raise ValidationError("Yule-Walker needs a correlation-normalized ACF")
    return acf.value_at(1)


@dataclass(frozen=True)
class Normalization:
    """Error normalization n^e applied as factor(n) * (estimate - target)."""

    kind: str = "sqrt_n"
    exponent: float | None = None

    def __post_init__(self):
        if self.kind == "sqrt_n":
            if self.exponent is not None:
                raise ValidationError("sqrt_n takes no exponent")
        elif self.kind == "n_pow":
            if self.exponent is None:
                raise ValidationError("n_pow requires an exponent")
        else:
            raise ValidationError(f"unknown normalization kind {self.kind!r}")

    def factor(self, n: int) -> float:
        return math.sqrt(n) if self.kind == "sqrt_n" else float(n) ** self.exponent


@dataclass(frozen=True)
class Target:
    """Reference constant for one estimator, with optional pass/fail tolerance."""

    value: float
    tolerance: float | None = None
    statistic: str = "mean"  # "mean", "mean_normalized" or "sd_normalized"
    note: str = ""

    def __post_init__(self):
        if self.statistic not in ("mean", "mean_normalized", "sd_normalized"):
            raise ValidationError(f"unknown target statistic {self.statistic!r}")
        if self.tolerance is not None and self.tolerance <= 0:
            raise ValidationError("tolerance must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full protocol of one Monte-Carlo experiment.

    ``innovations="skewed_squared"`` swaps the Gaussian innovations of an
    ar1 process for W + 0.4 Y^2 draws (a deliberately skewed, non-centred
    preset); everything else about the protocol is unchanged.
    """

    process: ProcessSpec
    n: int
    replications: int
    master_seed: int
    outliers: OutlierSpec = OutlierSpec()
    estimators: tuple = ("qn", "std")
    lags: tuple = (1,)
    normalization: Normalization = Normalization()
    targets: dict = field(default_factory=dict)
    arfima_method: str = "auto"
    innovations: str = "gaussian"
    name: str = ""

    def __post_init__(self):
        if self.replications < 1:
            raise ValidationError("replications must be >= 1")
        if self.n < 10:
            raise ValidationError("n must be >= 10")
        for est in self.estimators:
            if est not in _BASE_ESTIMATORS:
                raise ValidationError(
                    f"unknown estimator {est!r}; choose from {_BASE_ESTIMATORS}")
        if any(h < 1 for h in self.lags):
            raise ValidationError("lags must be >= 1")
        if self.innovations not in ("gaussian", "skewed_squared"):
            raise ValidationError(f"unknown innovations {self.innovations!r}")
        if self.innovations == "skewed_squared" and self.process.kind != "ar1":
            raise ValidationError("skewed innovations apply to ar1 only")
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "lags", tuple(self.lags))
        for key, tgt in self.targets.items():
            if not isinstance(tgt, Target):
                raise ValidationError(f"target {key!r} must be a Target")

    def estimator_names(self) -> list:
        names = []
        for est in self.estimators:
            if est in ("robust_acv", "classical_acv"):
                names.extend(f"{est}_h{h}" for h in self.lags)
            else:
                names.append(est)
        return names

    def scaled(self, factor: int) -> "ExperimentConfig":
        """Same protocol with the replication count multiplied."""
        return ExperimentConfig(
            self.process, self.n, self.replications * factor, self.master_seed,
            self.outliers, self.estimators, self.lags, self.normalization,
            self.targets, self.arfima_method, self.innovations, self.name)


@dataclass(frozen=True)
class ReplicationRecord:
    """Estimator values from a single replication."""

    index: int
    values: dict
    seed_path: tuple

    def __post_init__(self):
        for key, v in self.values.items():
            if not math.isfinite(v):
                raise ValidationError(
                    f"replication {self.index}: estimator {key} is non-finite")


def make_series(config: ExperimentConfig, r: int) -> TimeSeries:
    """Clean-then-contaminated series for replication r of a config."""
    rng = rng_stream(config.master_seed, r, "process")
    if config.innovations == "skewed_squared":
        series = gen_ar1_skewed(config.n, rng, phi=config.process.phi)
    else:
        series = generate(config.process, config.n, rng,
                          arfima_method=config.arfima_method)
    if not config.outliers.is_null:
        series = contaminate(series, config.outliers,
                             rng_stream(config.master_seed, r, "outliers"))
    return series


def _compute_estimators(config: ExperimentConfig, series: TimeSeries) -> dict:
    values = {}
    for est in config.estimators:
        if est == "qn":
            values["qn"] = qn_scale(series).value
        elif est == "std":
            values["std"] = sample_std(series).value
        elif est == "robust_acv":
            for h in config.lags:
                values[f"robust_acv_h{h}"] = robust_autocov(series, h).value
        elif est == "classical_acv":
            for h in config.lags:
                values[f"classical_acv_h{h}"] = classical_autocov(series, h).value
        elif est == "phi_robust":
            # covariance-ratio normalization: rho = gamma_Q(1) / gamma_Q(0)
            acf = robust_acf(series, 1, correlation_method="covariance_ratio")
            values["phi_robust"] = yule_walker_ar1(acf)
        elif est == "phi_classical":
            values["phi_classical"] = yule_walker_ar1(classical_acf(series, 1))
    return values


def run_replication(config: ExperimentConfig, r: int) -> ReplicationRecord:
    """Execute replication r: generate, contaminate, estimate."""
    if not 0 <= r < config.replications:
        raise ValidationError(f"replication index {r} outside 0..{config.replications - 1}")
    series = make_series(config, r)
    try:
        values = _compute_estimators(config, series)
    except Exception as exc:
        raise type(exc)(f"replication {r}: {exc}") from exc
    return ReplicationRecord(r, values, (config.master_seed, r))


def _freedman_diaconis(errors: np.ndarray):
    n = errors.size
    if n < 2 or np.ptp(errors) == 0.0:
        lo = float(errors.min()) - 0.5
        hi = float(errors.max()) + 0.5
        edges = np.array([lo, hi])
    else:
        q75, q25 = np.percentile(errors, [75, 25])
        width = 2.0 * (q75 - q25) / n ** (1.0 / 3.0)
        if width <= 0:
            width = np.ptp(errors) / max(1, int(np.sqrt(n)))
        nbins = max(1, int(np.ceil(np.ptp(errors) / width)))
        edges = np.linspace(errors.min(), errors.max(), nbins + 1)
    counts, edges = np.histogram(errors, bins=edges)
    return edges, counts


@dataclass(frozen=True)
class EstimatorSummary:
    """Aggregates for one estimator over all replications."""

    name: str
    mean: float
    sd: float | None
    target: float | None
    bias: float | None
    rmse: float | None
    mse: float | None
    normalized_mean: float | None
    normalized_sd: float | None
    normalized_errors: np.ndarray | None
    histogram_edges: np.ndarray | None
    histogram_counts: np.ndarray | None


@dataclass(frozen=True)
class ExperimentSummary:
    """Per-estimator aggregates plus protocol metadata."""

    config: ExperimentConfig
    estimators: dict
    wall_time: float

    def check_targets(self) -> list:
        """One (name, statistic, observed, target, tolerance, passed) per target."""
        out = []
        for name, tgt in self.config.targets.items():
            if name not in self.estimators:
                raise ValidationError(f"target {name!r} has no matching estimator")
            s = self.estimators[name]
            observed = {"mean": s.mean,
                        "mean_normalized": s.normalized_mean,
                        "sd_normalized": s.normalized_sd}[tgt.statistic]
            passed = None
            if tgt.tolerance is not None and observed is not None:
                passed = abs(observed - tgt.value) <= tgt.tolerance
            out.append((name, tgt.statistic, observed, tgt.value,
                        tgt.tolerance, passed))
        return out


def _summarize(config: ExperimentConfig, records: list) -> dict:
    factor = config.normalization.factor(config.n)
    summaries = {}
    for name in config.estimator_names():
        vals = np.array([rec.values[name] for rec in records])
        r = vals.size
        mean = math.fsum(vals) / r
        sd = None
        if r >= 2:
            sd = math.sqrt(math.fsum((vals - mean) ** 2) / (r - 1))
        tgt = config.targets.get(name)
        bias = rmse = mse = None
        norm_mean = norm_sd = None
        errors = edges = counts = None
        if tgt is not None:
            bias = mean - tgt.value
            mse = math.fsum((vals - tgt.value) ** 2) / r
            rmse = math.sqrt(mse)
            errors = factor * (vals - tgt.value)
            norm_mean = math.fsum(errors) / r
            if r >= 2:
                norm_sd = math.sqrt(math.fsum((errors - norm_mean) ** 2) / (r - 1))
            edges, counts = _freedman_diaconis(errors)
        summaries[name] = EstimatorSummary(
            name, mean, sd, None if tgt is None else tgt.value, bias, rmse,
            mse, norm_mean, norm_sd, errors, edges, counts)
    return summaries


def _worker(args) -> ReplicationRecord:
    config, r = args
    return run_replication(config, r)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentSummary:
    """Run all replications and aggregate.

    ``workers > 1`` distributes replications over a process pool; per-
    replication streams and ordered aggregation make the summary identical
    for any worker count.
    """
    t0 = time.perf_counter()
    indices = range(config.replications)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_worker, ((config, r) for r in indices),
                                    chunksize=max(1, config.replications // (4 * workers))))
    else:
        records = [run_replication(config, r) for r in indices]
    records.sort(key=lambda rec: rec.index)
    summaries = _summarize(config, records)
    return ExperimentSummary(config, summaries, time.perf_counter() - t0)


def empirical_are(config_num: ExperimentConfig, config_den: ExperimentConfig,
                  max_lag: int, estimator_num: str = "classical_acv",
                  estimator_den: str = "robust_acv") -> np.ndarray:
    """Per-lag ratio of empirical variances of the normalized lag-h errors.

    Both configs must describe the same clean process and sample size; the
    numerator (default: classical autocovariance) and denominator (default:
    robust) are evaluated on each config's own replication streams, so two
    identical configs with identical estimators give exactly 1.
    """
    if config_num.process != config_den.process or config_num.n != config_den.n:
        raise ValidationError("both configs must share process and n")
    if not (config_num.outliers.is_null and config_den.outliers.is_null):
        raise ValidationError("efficiency comparison requires clean data")
    if config_num.replications != config_den.replications:
        raise ValidationError("both configs must share the replication count")
    if config_num.replications < 2:
        raise ValidationError("variance ratios require at least 2 replications")
    if (config_num, estimator_num) == (config_den, estimator_den):
        return np.ones(max_lag)
    acv = theoretical_acv(config_num.process, max_lag)
    gammas = acv.gamma

    def variances(config: ExperimentConfig, estimator: str) -> np.ndarray:
        fn = classical_autocov if estimator == "classical_acv" else robust_autocov
        errs = np.empty((config.replications, max_lag))
        for r in range(config.replications):
            series = make_series(config, r)
            for h in range(1, max_lag + 1):
                errs[r, h - 1] = math.sqrt(config.n) * (fn(series, h).value
                                                        - gammas[h])
        return errs.var(axis=0, ddof=1)

    return variances(config_num, estimator_num) / variances(config_den, estimator_den)


# ---------------------------------------------------------------------------
# config (de)serialization: a declarative JSON schema with named fields
# ---------------------------------------------------------------------------

_MISSING = object()


def _expect(mapping: dict, key: str, types, where: str, default=_MISSING):
    if key not in mapping:
        if default is _MISSING:
            raise ValidationError(f"config field {where}.{key} is missing")
        return default
    val = mapping[key]
    if not isinstance(val, types):
        raise ValidationError(
            f"config field {where}.{key} has type {type(val).__name__}, "
            f"expected {types}")
    return val


def config_from_dict(doc: dict, name: str = "") -> ExperimentConfig:
    """Build a validated ExperimentConfig from a plain JSON-style mapping."""
    if not isinstance(doc, dict):
        raise ValidationError("config document must be a JSON object")
    pdoc = _expect(doc, "process", dict, "config")
    kind = _expect(pdoc, "kind", str, "process")
    process = ProcessSpec(
        kind,
        phi=_expect(pdoc, "phi", (int, float), "process", None),
        d=_expect(pdoc, "d", (int, float), "process", None),
        innovation_sd=_expect(pdoc, "innovation_sd", (int, float), "process", 1.0),
    )
    odoc = _expect(doc, "outliers", dict, "config", {})
    outliers = OutlierSpec(
        probability=_expect(odoc, "probability", (int, float), "outliers", 0.0),
        magnitude=_expect(odoc, "magnitude", (int, float), "outliers", 0.0),
    )
    ndoc = _expect(doc, "normalization", dict, "config", {"kind": "sqrt_n"})
    normalization = Normalization(
        kind=_expect(ndoc, "kind", str, "normalization", "sqrt_n"),
        exponent=_expect(ndoc, "exponent", (int, float), "normalization", None),
    )
    targets = {}
    for key, tdoc in _expect(doc, "targets", dict, "config", {}).items():
        if not isinstance(tdoc, dict):
            raise ValidationError(f"config field targets.{key} must be an object")
        targets[key] = Target(
            value=_expect(tdoc, "value", (int, float), f"targets.{key}"),
            tolerance=_expect(tdoc, "tolerance", (int, float), f"targets.{key}", None),
            statistic=_expect(tdoc, "statistic", str, f"targets.{key}", "mean"),
            note=_expect(tdoc, "note", str, f"targets.{key}", ""),
        )
    return ExperimentConfig(
        process=process,
        n=_expect(doc, "n", int, "config"),
        replications=_expect(doc, "replications", int, "config"),
        master_seed=_expect(doc, "master_seed", int, "config"),
        outliers=outliers,
        estimators=tuple(_expect(doc, "estimators", list, "config", ["qn", "std"])),
        lags=tuple(_expect(doc, "lags", list, "config", [1])),
        normalization=normalization,
        targets=targets,
        arfima_method=_expect(doc, "arfima_method", str, "config", "auto"),
        innovations=_expect(doc, "innovations", str, "config", "gaussian"),
        name=_expect(doc, "name", str, "config", name),
    )


def config_to_dict(config: ExperimentConfig) -> dict:
    doc = {
        "name": config.name,
        "process": {"kind": config.process.kind},
        "n": config.n,
        "replications": config.replications,
        "master_seed": config.master_seed,
        "outliers": {"probability": config.outliers.probability,
                     "magnitude": config.outliers.magnitude},
        "estimators": list(config.estimators),
        "lags": list(config.lags),
        "normalization": {"kind": config.normalization.kind},
        "arfima_method": config.arfima_method,
        "innovations": config.innovations,
        "targets": {},
    }
    if config.process.phi is not None:
        doc["process"]["phi"] = config.process.phi
    if config.process.d is not None:
        doc["process"]["d"] = config.process.d
    if config.process.innovation_sd != 1.0:
        doc["process"]["innovation_sd"] = config.process.innovation_sd
    if config.normalization.exponent is not None:
        doc["normalization"]["exponent"] = config.normalization.exponent
    for key, tgt in config.targets.items():
        tdoc = {"value": tgt.value, "statistic": tgt.statistic}
        if tgt.tolerance is not None:
            tdoc["tolerance"] = tgt.tolerance
        if tgt.note:
            tdoc["note"] = tgt.note
        doc["targets"][key] = tdoc
    return doc


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path}: invalid JSON ({exc})")
    return config_from_dict(doc)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

class presets:
    """Ready-made experiment protocols at desk scale (R defaults to 1000)."""

    @staticmethod
    def scale_clt(phi: float = 0.2, n: int = 500, replications: int = 1000,
                  master_seed: int = 20260810) -> ExperimentConfig:
        """Normality check of both scale estimators on a clean AR(1) path."""
        process = ProcessSpec("ar1", phi=phi)
        sigma = process.sigma
        return ExperimentConfig(
            process, n, replications, master_seed,
            estimators=("qn", "std"),
            targets={
                "qn": Target(sigma, statistic="mean",
                             note="theoretical process sd"),
                "std": Target(sigma, statistic="mean",
                              note="theoretical process sd"),
            },
            name=f"scale_clt_ar1_{phi}",
        )

    @staticmethod
    def yule_walker_contamination(phi: float = 0.2, n: int = 500,
                                  probability: float = 0.10,
                                  magnitude: float = 10.0,
                                  replications: int = 1000,
                                  master_seed: int = 20260811) -> ExperimentConfig:
        """AR(1) coefficient recovery from both ACFs under additive outliers."""
        return ExperimentConfig(
            ProcessSpec("ar1", phi=phi), n, replications, master_seed,
            outliers=OutlierSpec(probability, magnitude),
            estimators=("phi_robust", "phi_classical"),
            targets={
                "phi_robust": Target(phi, statistic="mean",
                                     note="true AR coefficient"),
                "phi_classical": Target(phi, statistic="mean",
                                        note="true AR coefficient"),
            },
            name=f"yule_walker_ar1_{phi}_p{probability}",
        )

    @staticmethod
    def long_memory_scale(d: float = 0.45, n: int = 500,
                          replications: int = 1000,
                          master_seed: int = 20260812) -> ExperimentConfig:
        """Slow-regime limit check for the fractionally integrated process."""
        process = ProcessSpec("arfima0d0", d=d)
        return ExperimentConfig(
            process, n, replications, master_seed,
            estimators=("qn", "std"),
            normalization=Normalization("n_pow", exponent=1.0 - 2.0 * d),
            targets={
                "qn": Target(process.sigma, statistic="mean",
                             note="theoretical process sd"),
                "std": Target(process.sigma, statistic="mean",
                              note="theoretical process sd"),
            },
            name=f"long_memory_scale_d{d}",
        )

    @staticmethod
    def are_curve(phi: float = 0.5, n: int = 500, replications: int = 2000,
                  master_seed: int = 20260813) -> ExperimentConfig:
        """Replication base for the empirical efficiency curve."""
        return ExperimentConfig(
            ProcessSpec("ar1", phi=phi), n, replications, master_seed,
            estimators=("robust_acv", "classical_acv"), lags=(1,),
            name=f"are_curve_ar1_{phi}",
        )

    @staticmethod
    def skewed_innovations(n: int = 500, replications: int = 1000,
                           master_seed: int = 20260814) -> ExperimentConfig:
        """Autocovariance behaviour under skewed, non-Gaussian innovations.

        AR(1) with phi = 0.9 driven by W + 0.4 Y^2 innovations; note the
        innovation mean is 0.4, not 0, kept deliberately.
        """
        return ExperimentConfig(
            ProcessSpec("ar1", phi=0.9), n, replications, master_seed,
            estimators=("robust_acv", "classical_acv"),
            lags=tuple(range(1, 11)),
            innovations="skewed_squared",
            name="skewed_innovations",
        )
