"""Command-line entry point.

Exit codes: 0 success, 1 runtime or statistical failure, 2 usage or parse
failure.
"""

import argparse
import json
import sys
from pathlib import Path

from . import bounds, conformal, harness, io
from .errors import ConflinkError, FormatError, InsufficientDataError, ParameterError
from .rng import replication_streams

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def load_config(path, overrides=(), seed=None) -> harness.ExperimentConfig:
    """Read a JSON config, apply ``key=value`` overrides, validate."""
    data = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise UsageError(f"{path}: top level must be an object")
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise UsageError(f"override {item!r} is not of the form key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        *parents, leaf = key.split(".")
        target = data
        for part in parents:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise UsageError(f"override {key!r}: {part!r} is not an object")
        target[leaf] = value
    if seed is not None:
        data["root_seed"] = seed
    try:
        return harness.ExperimentConfig.from_dict(data)
    except (ParameterError, TypeError) as exc:
        where = f"{path}: " if path is not None else ""
        raise UsageError(f"{where}invalid config: {exc}") from None


def _header(kind, config):
    return io.header_lines(kind, config.to_dict(), config.root_seed)


def cmd_simulate(args) -> int:
    config = load_config(args.config, args.override, args.seed)
    report = harness.run_experiment(config, output_dir=args.output_dir, workers=args.workers)
    if args.dump_graph:
        outcome = harness.simulate_replication(config, 0)
        g, obs = outcome.truth, outcome.observation
        header = _header("graph (replication 0)", config)
        io.write_graph(report.run_dir / "graph.txt", g.a_star, obs.omega, g.x, g.directed, header)
        if outcome.result is not None:
            io.write_rejections(report.run_dir / "rejections_rep0.txt", outcome.result.bh,
                                _header("BH rejections (replication 0)", config))
    s = report.summary()
    se = "NA" if s["fdr_se"] is None else f"{s['fdr_se']:.4f}"
    print(f"fdr_hat={s['fdr_hat']:.4f} (se {se}) tdr_hat={s['tdr_hat']:.4f} "
          f"coverage_hat={s['coverage_hat']:.4f} used={s['used']} skipped={s['skipped']} "
          f"alpha={config.alpha} run_dir={report.run_dir}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    config = load_config(args.config, args.override, args.seed)
    obs, truth = io.read_graph(args.input, covariates=args.covariates)
    streams = replication_streams(config.root_seed, args.rep)
    result = harness.run_pipeline(
        obs, config.scorer, config.calibration, config.alpha, config.delta, streams,
        ground_truth=truth, bound_form=config.bound_form, lambda_method=config.lambda_method,
        mc_samples=config.mc_samples, mc_seed=config.root_seed)
    out = Path(args.output_dir)
    header = _header("pipeline", config) + [f"# input: {args.input}", f"# rep: {args.rep}"]
    io.write_pvalues(out / "pvalues.txt", result.pvalues, header)
    io.write_scores(out / "scores.txt", result.scores, header)
    io.write_rejections(out / "rejections.txt", result.bh, header)
    io.write_bound_curve(out / "bound.csv", result.curve, header)
    if truth is not None:
        fdp, tdp = conformal.fdp_tdp(result.bh, result.partition)
        quality = {"fdp": repr(fdp), "tdp": repr(tdp)}
    else:
        quality = {"fdp": "unavailable", "tdp": "unavailable"}
    summary = {"m": result.pvalues.m, "ell": result.pvalues.ell, "rejections": len(result.bh),
               "threshold": result.bh.threshold, "lambda": repr(result.lam.value), **quality}
    (out / "summary.txt").write_text(
        "\n".join(header + [f"{k} = {v}" for k, v in summary.items()]) + "\n")
    quality = " ".join(f"{k}={v}" for k, v in quality.items())
    print(f"m={result.pvalues.m} ell={result.pvalues.ell} rejections={len(result.bh)} "
          f"threshold={float(result.bh.threshold)!r} {quality} output_dir={out}")
    return EXIT_OK


def cmd_bound(args) -> int:
    p = io.read_pvalues(args.pvalues)
    lam = bounds.estimate_lambda(p.m, p.ell, args.delta, method=args.method,
                                 samples=args.samples, seed=args.seed)
    curve = bounds.bound_curve(p, lam, args.form)
    header = io.header_lines("bound", {"pvalues": str(args.pvalues), "delta": args.delta,
                                       "form": args.form, "method": args.method,
                                       "samples": args.samples}, args.seed)
    if args.output:
        io.write_bound_curve(args.output, curve, header)
        print(f"lambda={lam.value!r} rows={len(curve.raw)} output={args.output}")
    else:
        io.dump_bound_curve(sys.stdout, curve, header)
    return EXIT_OK


def cmd_urn_quantile(args) -> int:
    mc = bounds.lambda_polya_mc(args.m, args.ell, args.delta, samples=args.samples,
                                seed=args.seed)
    cf = bounds.lambda_closed_form(args.m, args.ell, args.delta)
    print(f"m={args.m} ell={args.ell} delta={args.delta} samples={args.samples} "
          f"seed={args.seed}")
    print(f"lambda_mc={mc.value!r} mc_se={mc.mc_standard_error!r} "
          f"lambda_closed_form={cf.value!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conflink", description="Conformal link prediction with FDR control and FDP bounds")
    sub = parser.add_subparsers(dest="command", required=True)

    def config_args(p, required):
        p.add_argument("--config", required=required, help="JSON experiment config")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field, dotted for nested keys (repeatable)")
        p.add_argument("--seed", type=int, help="override root_seed")

    p = sub.add_parser("simulate", help="replicated simulation experiment")
    config_args(p, required=True)
    p.add_argument("--output-dir", default="runs")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dump-graph", action="store_true",
                   help="also write replication 0's graph and BH rejections")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pipeline", help="run the procedure on a graph file")
    config_args(p, required=False)
    p.add_argument("--input", required=True, help="edge-list graph file")
    p.add_argument("--covariates", help="covariate matrix (default: INPUT.cov)")
    p.add_argument("--rep", type=int, default=0, help="replication index for stream derivation")
    p.add_argument("--output-dir", default="pipeline_out")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("bound", help="uniform FDP bound curve from a p-value file")
    p.add_argument("--pvalues", required=True)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--form", choices=bounds.BOUND_FORMS, default="paper")
    p.add_argument("--method", choices=bounds.LAMBDA_METHODS, default="closed_form")
    p.add_argument("--samples", type=int, default=bounds.DEFAULT_MC_SAMPLES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("urn-quantile", help="Monte-Carlo lambda against the closed form")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--ell", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--samples", type=int, default=bounds.DEFAULT_MC_SAMPLES)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_urn_quantile)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FormatError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InsufficientDataError, ConflinkError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
