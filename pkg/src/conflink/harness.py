"""Replicated end-to-end experiments.

A replication draws a graph and a sampling matrix, runs conformal link
prediction on the observation, and compares the BH rejections and the uniform
bound curve with the hidden truth. Replication ``r`` uses only the streams
derived from ``(root_seed, r)`` so records reproduce in isolation and the
aggregate does not depend on execution order.
"""

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from . import bounds, conformal, graph, scoring
from .errors import ConflinkError, ExperimentError, InsufficientDataError, ParameterError
from .io import header_lines
from .rng import replication_streams

REPLICATION_COLUMNS = ["rep", "m", "m0", "ell", "fdp_bh", "tdp_bh", "rejections",
                       "bound_violated", "skipped", "reason", "runtime_ms"]


@dataclass(frozen=True)
class GraphConfig:
    n: int = 100
    block_count: int = 2
    within_prob: float = 0.5
    between_prob: float = 0.05
    covariate_dim: int = 2
    signal: float = 2.0


@dataclass(frozen=True)
class SamplingConfig:
    w0: float = 0.8
    w1: float = 0.8


@dataclass(frozen=True)
class ExperimentConfig:
    graph: GraphConfig = field(default_factory=GraphConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    scorer: scoring.ScorerSpec = field(default_factory=scoring.ScorerSpec)
    calibration: conformal.CalibrationRule = field(default_factory=conformal.CalibrationRule)
    alpha: float = 0.1
    delta: float = 0.1
    bound_form: str = "paper"
    lambda_method: str = "closed_form"
    mc_samples: int = bounds.DEFAULT_MC_SAMPLES
    replications: int = 100
    root_seed: int = 0

    def __post_init__(self):
        if not (0 < self.alpha < 1):
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (0 < self.delta < 1):
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if self.bound_form not in bounds.BOUND_FORMS:
            raise ParameterError(f"bound_form must be one of {bounds.BOUND_FORMS}")
        if self.lambda_method not in bounds.LAMBDA_METHODS:
            raise ParameterError(f"lambda_method must be one of {bounds.LAMBDA_METHODS}")
        if self.lambda_method == "polya_mc" and self.mc_samples < bounds.MIN_MC_SAMPLES:
            raise ParameterError(f"mc_samples must be at least {bounds.MIN_MC_SAMPLES}")
        if self.replications < 1:
            raise ParameterError("replications must be at least 1")
        if self.root_seed < 0:
            raise ParameterError("root_seed must be non-negative")
        g = self.graph
        if g.n < 2 or not (1 <= g.block_count <= g.n) or g.covariate_dim < 0:
            raise ParameterError("graph: need n >= 2, 1 <= block_count <= n, covariate_dim >= 0")
        for name in ("within_prob", "between_prob"):
            if not (0 <= getattr(g, name) <= 1):
                raise ParameterError(f"graph.{name} must lie in [0, 1]")
        for name in ("w0", "w1"):
            if not (0 <= getattr(self.sampling, name) <= 1):
                raise ParameterError(f"sampling.{name} must lie in [0, 1]")
        self.scorer.check_graph(g.n)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        """Build from nested dicts; unknown keys raise :class:`ParameterError`."""
        nested = {"graph": GraphConfig, "sampling": SamplingConfig,
                  "scorer": scoring.ScorerSpec, "calibration": conformal.CalibrationRule}
        kwargs = _pick(cls, data, "")
        for key, sub in nested.items():
            if key in kwargs:
                if not isinstance(kwargs[key], dict):
                    raise ParameterError(f"{key}: expected an object")
                kwargs[key] = sub(**_pick(sub, kwargs[key], key + "."))
        return cls(**kwargs)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def _pick(cls, data, prefix):
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ParameterError(f"unknown config field '{prefix}{unknown[0]}'")
    return dict(data)


# ------------------------------------------------------------------ pipeline

@dataclass(frozen=True, eq=False)
class PipelineResult:
    partition: graph.EdgePartition
    d_cal: np.ndarray
    scores: scoring.ScoreTable
    pvalues: conformal.PValueFamily
    bh: conformal.RejectionSet
    lam: bounds.LambdaEstimate
    curve: bounds.BoundCurve


class SkippedReplication(InsufficientDataError):
    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


@lru_cache(maxsize=256)
def _cached_lambda(m, ell, delta, method, samples, seed):
    return bounds.estimate_lambda(m, ell, delta, method=method, samples=samples, seed=seed)


def run_pipeline(obs, scorer, calibration, alpha, delta, streams, *, ground_truth=None,
                 bound_form="paper", lambda_method="closed_form",
                 mc_samples=bounds.DEFAULT_MC_SAMPLES, mc_seed=0) -> PipelineResult:
    """Calibrate, train on the masked observation, score, compute p-values, apply BH."""
    part = graph.partition_edges(obs, ground_truth)
    if part.m == 0:
        raise SkippedReplication("empty test set")
    if part.k0 < 2:
        raise SkippedReplication("fewer than 2 observed false edges")
    ell = conformal.calibration_size(part.k0, calibration)
    d_cal = conformal.sample_calibration(part.d0, ell, streams["calibration"])
    mask = scoring.build_train_mask(obs.omega, d_cal, directed=obs.directed)
    z_train = scoring.apply_train_mask(obs, mask)
    scores = scoring.compute_scores(z_train, scorer, streams["tiebreak"])
    p = conformal.conformal_pvalues(scores, d_cal, part.d_test)
    bh = conformal.bh_procedure(p, alpha)
    lam = _cached_lambda(part.m, ell, delta, lambda_method, mc_samples, mc_seed)
    curve = bounds.bound_curve(p, lam, bound_form)
    return PipelineResult(partition=part, d_cal=d_cal, scores=scores, pvalues=p, bh=bh,
                          lam=lam, curve=curve)


# ------------------------------------------------------------------ replications

@dataclass(frozen=True)
class ReplicationRecord:
    rep: int
    m: Optional[int] = None
    m0: Optional[int] = None
    ell: Optional[int] = None
    fdp_bh: Optional[float] = None
    tdp_bh: Optional[float] = None
    rejections: Optional[int] = None
    bound_violated: Optional[bool] = None
    skipped: bool = False
    reason: str = ""
    runtime_ms: float = 0.0

    def key(self):
        """Everything except the wall-clock runtime."""
        d = asdict(self)
        d.pop("runtime_ms")
        return d


@dataclass(frozen=True, eq=False)
class ReplicationOutcome:
    record: ReplicationRecord
    truth: Optional[graph.CompleteGraphData] = None
    observation: Optional[graph.Observation] = None
    result: Optional[PipelineResult] = None
    null_mask: Optional[np.ndarray] = None


def simulate_graph(config: ExperimentConfig, streams):
    gc = config.graph
    g = graph.generate_sbm(gc.n, gc.block_count, gc.within_prob, gc.between_prob,
                           gc.covariate_dim, streams["graph"], signal=gc.signal)
    omega = graph.sample_omega(g, config.sampling.w0, config.sampling.w1, streams["omega"])
    return g, graph.observe(g, omega)


def null_fdp_path(numerators, null_mask, ell) -> np.ndarray:
    """``FDP(R(k / (ell + 1)))`` for ``k = 1..ell+1``."""
    total = bounds.path_counts(numerators, ell)
    false = bounds.path_counts(np.asarray(numerators)[null_mask], ell)
    return false / np.maximum(total, 1)


def simulate_replication(config: ExperimentConfig, rep_index: int) -> ReplicationOutcome:
    start = time.perf_counter()
    streams = replication_streams(config.root_seed, rep_index)
    g, obs = simulate_graph(config, streams)
    try:
        res = run_pipeline(obs, config.scorer, config.calibration, config.alpha, config.delta,
                           streams, ground_truth=g, bound_form=config.bound_form,
                           lambda_method=config.lambda_method,
                           mc_samples=config.mc_samples, mc_seed=config.root_seed)
    except SkippedReplication as exc:
        rec = ReplicationRecord(rep=rep_index, skipped=True, reason=exc.reason,
                                runtime_ms=(time.perf_counter() - start) * 1e3)
        return ReplicationOutcome(record=rec, truth=g, observation=obs)
    except ConflinkError as exc:
        raise type(exc)(f"replication {rep_index}: {exc}") from exc

    p = res.pvalues
    null_mask = g.a_star[p.pairs[:, 0], p.pairs[:, 1]] == 0
    fdp, tdp = conformal.fdp_tdp(res.bh, res.partition)
    fdp_path = null_fdp_path(p.numerators, null_mask, p.ell)
    rec = ReplicationRecord(
        rep=rep_index, m=p.m, m0=res.partition.m0, ell=p.ell, fdp_bh=fdp, tdp_bh=tdp,
        rejections=len(res.bh), bound_violated=bool((fdp_path > res.curve.raw).any()),
        runtime_ms=(time.perf_counter() - start) * 1e3)
    return ReplicationOutcome(record=rec, truth=g, observation=obs, result=res,
                              null_mask=null_mask)


def run_replication(config: ExperimentConfig, rep_index: int) -> ReplicationRecord:
    return simulate_replication(config, rep_index).record


# ------------------------------------------------------------------ aggregation

@dataclass(frozen=True, eq=False)
class AggregateReport:
    fdr_hat: float
    fdr_se: Optional[float]
    tdr_hat: float
    tdr_se: Optional[float]
    coverage_hat: float
    coverage_se: Optional[float]
    replications: int
    used: int
    skipped: int
    config: dict
    records: list
    run_dir: Optional[Path] = None

    def summary(self) -> dict:
        return {
            "fdr_hat": self.fdr_hat, "fdr_se": self.fdr_se,
            "tdr_hat": self.tdr_hat, "tdr_se": self.tdr_se,
            "coverage_hat": self.coverage_hat, "coverage_se": self.coverage_se,
            "replications": self.replications, "used": self.used, "skipped": self.skipped,
        }

    def same_results(self, other) -> bool:
        return (self.summary() == other.summary() and self.config == other.config
                and [r.key() for r in self.records] == [r.key() for r in other.records])


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    if len(values) < 2:
        return mean, None
    return mean, float(values.std(ddof=1) / math.sqrt(len(values)))


def aggregate(config: ExperimentConfig, records) -> AggregateReport:
    used = [r for r in records if not r.skipped]
    if not used:
        reasons = sorted({r.reason for r in records})
        raise ExperimentError(f"all {len(records)} replications were skipped ({', '.join(reasons)})")
    fdr, fdr_se = _mean_se([r.fdp_bh for r in used])
    tdr, tdr_se = _mean_se([r.tdp_bh for r in used])
    cov, cov_se = _mean_se([0.0 if r.bound_violated else 1.0 for r in used])
    return AggregateReport(fdr_hat=fdr, fdr_se=fdr_se, tdr_hat=tdr, tdr_se=tdr_se,
                           coverage_hat=cov, coverage_se=cov_se,
                           replications=len(records), used=len(used),
                           skipped=len(records) - len(used), config=config.to_dict(),
                           records=list(records))


def run_experiment(config: ExperimentConfig, output_dir=None, workers=1) -> AggregateReport:
    reps = range(config.replications)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_replication, [config] * len(reps), reps))
    else:
        records = [run_replication(config, r) for r in reps]
    records.sort(key=lambda r: r.rep)
    report = aggregate(config, records)
    if output_dir is not None:
        run_dir = write_report(report, config, output_dir)
        report = AggregateReport(**{**report.__dict__, "run_dir": run_dir})
    return report


def _fmt(value):
    if value is None:
        return "NA"
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report(report: AggregateReport, config: ExperimentConfig, output_dir) -> Path:
    stamp = datetime.now().strftime("%Y%m%dT%H%M%S%f")
    run_dir = Path(output_dir) / f"{config.digest()}_{stamp}"
    run_dir.mkdir(parents=True, exist_ok=False)
    header = header_lines("replications", config.to_dict(), config.root_seed)
    with open(run_dir / "replications.csv", "w", newline="") as fh:
        for line in header:
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(REPLICATION_COLUMNS)
        for r in report.records:
            writer.writerow([_fmt(getattr(r, c)) for c in REPLICATION_COLUMNS])
    lines = header_lines("summary", config.to_dict(), config.root_seed)
    lines += [f"{k} = {_fmt(v)}" for k, v in report.summary().items()]
    lines += [f"alpha = {config.alpha!r}", f"delta = {config.delta!r}",
              f"bound_form = {config.bound_form}", f"lambda_method = {config.lambda_method}"]
    (run_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    return run_dir
