"""Command-line interface: fit, summarize, simulate, diagnose.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import conditional, diagnostics, marginal, summaries
from .data import CountDataset
from .errors import DataFormatError, NumericError
from .io import (
    RunConfig,
    config_sha256,
    dataset_sha256,
    default_out_dir,
    load_dataset,
    read_trace,
    save_dataset,
    write_trace,
)
from .synthetic import generate, standard_scenarios

_CONFIG_FLAGS = ("algorithm", "iters", "burnin", "thin", "seed",
                 "m_nb_mode", "m_nb_samples", "fixed_outer", "chains")
_HYPER_FLAGS = ("alpha", "beta", "zeta", "eta", "lam", "gamma_m", "gamma_s",
                "lambda_m", "lambda_s")


@click.group()
def cli():
    """Bayesian nested clustering of zero-inflated count processes."""


def _build_config(config_path, overrides) -> RunConfig:
    config = RunConfig.from_json(config_path) if config_path else RunConfig()
    for name in _CONFIG_FLAGS:
        value = overrides.get(name)
        if value is not None:
            setattr(config, name, value)
    hyper = config.hyperparams.to_dict()
    for name in _HYPER_FLAGS:
        value = overrides.get(name)
        if value is not None:
            hyper[name] = value
    config.hyperparams = type(config.hyperparams).from_dict(hyper)
    problems = config.validate()
    if problems:
        raise click.UsageError("; ".join(problems))
    return config


def _load_fixed_outer(path) -> np.ndarray:
    with open(path) as fh:
        raw = json.load(fh)
    labels = raw["outer"] if isinstance(raw, dict) else raw
    arr = np.asarray(labels, dtype=np.int64)
    if arr.ndim != 1 or arr.size == 0:
        raise DataFormatError(f"{path}: expected a flat list of outer labels")
    return arr - arr.min()  # accept 0- or 1-based labels


def _run_one_chain(args):
    config_dict, counts, seed, out_dir, extra = args
    config = RunConfig.from_dict(config_dict)
    dataset = CountDataset(np.asarray(counts, dtype=np.int64))
    fixed = extra.pop("_fixed_outer", None)
    start = time.perf_counter()
    if config.algorithm == "conditional":
        trace = conditional.run_chain(
            dataset, config.hyperparams, iters=config.iters,
            burnin=config.burnin, thin=config.thin, seed=seed,
            fixed_outer=np.asarray(fixed) if fixed is not None else None,
            m_nb_mode=config.m_nb_mode, m_nb_samples=config.m_nb_samples,
        )
    else:
        trace = marginal.run_chain(
            dataset, config.hyperparams, iters=config.iters,
            burnin=config.burnin, thin=config.thin, seed=seed,
            m_nb_mode=config.m_nb_mode, m_nb_samples=config.m_nb_samples,
        )
    extra = dict(extra)
    extra["wall_time_s"] = time.perf_counter() - start
    extra["seed"] = seed
    write_trace(trace, out_dir, manifest_extra=extra)
    return str(out_dir)


@cli.command()
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Dataset CSV file.")
@click.option("--data-format", default="long",
              type=click.Choice(["long", "wide"]))
@click.option("--config", "config_path",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON run configuration; flags override its fields.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Trace output directory (default: $HURDLENEST_OUT/trace).")
@click.option("--algorithm", type=click.Choice(["conditional", "marginal"]),
              default=None)
@click.option("--iters", type=int, default=None)
@click.option("--burnin", type=int, default=None)
@click.option("--thin", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--m-nb-mode", "m_nb_mode",
              type=click.Choice(["truncated", "monte_carlo"]), default=None)
@click.option("--m-nb-samples", "m_nb_samples", type=int, default=None)
@click.option("--fixed-outer", "fixed_outer",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON partition pinning the outer allocation "
                   "(conditional algorithm only).")
@click.option("--chains", type=int, default=None,
              help="Number of independent chains (seeds seed, seed+1, ...).")
@click.option("--alpha", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--zeta", type=float, default=None)
@click.option("--eta", type=float, default=None)
@click.option("--lam", type=float, default=None)
@click.option("--gamma-m", "gamma_m", type=float, default=None)
@click.option("--gamma-s", "gamma_s", type=float, default=None)
@click.option("--lambda-m", "lambda_m", type=float, default=None)
@click.option("--lambda-s", "lambda_s", type=float, default=None)
def fit(data_path, data_format, config_path, out, **overrides):
    """Run an MCMC chain on a dataset and write a trace directory."""
    config = _build_config(config_path, overrides)
    if config.fixed_outer and config.algorithm != "conditional":
        raise click.UsageError("--fixed-outer requires the conditional "
                               "algorithm")
    dataset = load_dataset(data_path, format=data_format)
    fixed = _load_fixed_outer(config.fixed_outer) if config.fixed_outer else None
    if fixed is not None and fixed.shape[0] != dataset.n:
        raise DataFormatError(
            f"fixed outer partition has {fixed.shape[0]} entries for "
            f"{dataset.n} subjects")
    out_dir = Path(out) if out else default_out_dir() / "trace"
    extra = {
        "dataset_sha256": dataset_sha256(dataset),
        "config_sha256": config_sha256(config),
        "data_path": str(data_path),
        "config": config.to_dict(),
        "_fixed_outer": fixed.tolist() if fixed is not None else None,
    }
    counts = dataset.counts.astype(np.int64).tolist()
    jobs = [
        (config.to_dict(), counts, config.seed + idx,
         out_dir if config.chains == 1 else out_dir / f"chain_{idx:02d}",
         dict(extra))
        for idx in range(config.chains)
    ]
    if config.chains == 1:
        done = [_run_one_chain(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=min(config.chains, 8)) as pool:
            done = list(pool.map(_run_one_chain, jobs))
        top = {k: v for k, v in extra.items() if not k.startswith("_")}
        top["chains"] = config.chains
        top["chain_dirs"] = [str(Path(p).name) for p in done]
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "manifest.json", "w") as fh:
            json.dump(top, fh, indent=2, sort_keys=True)
            fh.write("\n")
    for path in done:
        click.echo(f"trace written to {path}")


@cli.command()
@click.option("--trace", "trace_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.option("--y-max", "y_max", type=int, default=30,
              help="Largest count in the pmf curve grid.")
def summarize(trace_dir, out, y_max):
    """Write posterior summaries of a trace directory (pure function of the
    trace: psm.csv, partition.json, k_posterior.csv, pmf_curves.csv)."""
    trace = read_trace(trace_dir)
    out_dir = Path(out) if out else default_out_dir() / "summary"
    out_dir.mkdir(parents=True, exist_ok=True)

    psm = summaries.coclustering(trace, "outer").psm
    _write_psm(out_dir / "psm.csv", psm)

    partition, outer_loss, inner_loss = summaries.binder_nested(trace)
    order = summaries.heatmap_order(psm)
    with open(out_dir / "partition.json", "w") as fh:
        json.dump({
            "n": trace.n,
            "outer": partition.outer.tolist(),
            "inner": partition.inner.tolist(),
            "outer_binder_loss": outer_loss,
            "inner_binder_loss": inner_loss,
            "heatmap_order": order.tolist(),
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")

    pmfs = summaries.cluster_count_posterior(trace)
    with open(out_dir / "k_posterior.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["statistic", "value", "probability"])
        for stat, pmf in sorted(pmfs.items()):
            for value in sorted(pmf):
                writer.writerow([stat, value, pmf[value]])

    if trace.algorithm == "conditional":
        _write_pmf_curves(out_dir / "pmf_curves.csv", trace, y_max)
    click.echo(f"summaries written to {out_dir}")


def _write_psm(path, psm):
    n = psm.shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject"] + [str(l + 1) for l in range(n)])
        for i in range(n):
            writer.writerow([str(i + 1)] + [f"{v:.6f}" for v in psm[i]])


def _write_pmf_curves(path, trace, y_max):
    y_grid = np.arange(1, y_max + 1)
    k_mode = int(max(summaries.cluster_count_posterior(trace)["K"].items(),
                     key=lambda kv: kv[1])[0])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["outer_cluster", "process", "y", "mean",
                         "lo2p5", "hi97p5"])
        for m in range(k_mode):
            for j in range(trace.d):
                mean, lo, hi = summaries.cluster_pmf_estimate(
                    trace, m, j, y_grid)
                for idx, y in enumerate(y_grid):
                    writer.writerow([m + 1, j + 1, int(y),
                                     f"{mean[idx]:.8g}", f"{lo[idx]:.8g}",
                                     f"{hi[idx]:.8g}"])


@cli.command()
@click.option("--preset", required=True,
              type=click.Choice(sorted(standard_scenarios())))
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.option("--data-format", default="long",
              type=click.Choice(["long", "wide"]))
def simulate(preset, seed, out, data_format):
    """Generate a synthetic dataset with known nested ground truth."""
    truth = standard_scenarios()[preset]
    rng = np.random.default_rng(seed)
    dataset, outer, inner = generate(truth, rng)
    out_dir = Path(out) if out else default_out_dir() / "simulated"
    out_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, out_dir / "dataset.csv", format=data_format)
    with open(out_dir / "truth.json", "w") as fh:
        json.dump({
            "preset": preset,
            "seed": seed,
            "n": truth.n, "d": truth.d, "T": truth.T,
            "outer_weights": truth.outer_weights.tolist(),
            "p_star": truth.p_star.tolist(),
            "inner_weights": [w.tolist() for w in truth.inner_weights],
            "r_star": [r.tolist() for r in truth.r_star],
            "theta_star": [t.tolist() for t in truth.theta_star],
            "outer": (outer + 1).tolist(),
            "inner": (inner + 1).tolist(),
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"dataset written to {out_dir}")


@cli.command()
@click.argument("trace_dirs", nargs=-1, required=True,
                type=click.Path(exists=True, file_okay=False))
def diagnose(trace_dirs):
    """Compute ESS and IAT for the scalar series of each trace; writes
    ess_iat.json into every trace directory."""
    for trace_dir in trace_dirs:
        trace = read_trace(trace_dir)
        report = {"iterations": len(trace), "series": {}}
        series = {
            "K": trace.k_series().astype(np.float64),
            "total_inner": trace.total_inner_series().astype(np.float64),
        }
        for key in ("log_marglik", "loglik"):
            if trace.records and key in trace.records[0]:
                series[key] = trace.series(key)
        for name, values in series.items():
            ess = diagnostics.ess(values)
            iat = diagnostics.iat(values)
            report["series"][name] = {
                "ess": ess,
                "iat": iat,
                "ess_per_iter": None if ess is None else ess / len(trace),
            }
        with open(Path(trace_dir) / "ess_iat.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        click.echo(f"{trace_dir}:")
        for name, row in report["series"].items():
            ess = "undefined" if row["ess"] is None else f"{row['ess']:.1f}"
            iat = "undefined" if row["iat"] is None else f"{row['iat']:.2f}"
            click.echo(f"  {name}: ESS={ess} IAT={iat}")


def main(argv=None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except DataFormatError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except NumericError as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
