"""Command-line front end and experiment orchestration.

Subcommands ``price-nmc``, ``price-lsmc``, ``price-oracle`` and ``smile``
run one pricer; ``bench`` sweeps budgets and compares against the oracle.
Each run writes ``smile.csv``, ``ht_scatter.csv`` and ``metrics.csv`` to
the output directory; see the README for the column layout.
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, parse_config
from .errors import ConfigError, RoughVixError
from .model import simulate_outer
from .pricing import (
    MetricsReport,
    compute_metrics,
    oracle_log_h,
    price_lsmc,
    price_nmc,
    price_oracle,
    simulation_count,
)

SMILE_COLUMNS = ("method", "moneyness", "strike", "price", "price_se", "ivol", "ivol_se",
                 "forward", "forward_se")
SCATTER_COLUMNS = ("method", "path", "gamma_T", "hT", "hT_inner", "hT_oracle")
METRICS_COLUMNS = ("method", "K", "N", "M", "sim_count", "rmse_hT", "rmse_ivol",
                   "wall_time", "time_ratio")


def fmt(x) -> str:
    """Floats with 17 significant digits; NaN and None as empty fields."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return ""
    return f"{x:.17g}"


def u_ref_index(n: int, u_ref: int = 0) -> int:
    """1-based grid index of the scatter diagnostic; two thirds of the grid by default."""
    return u_ref if u_ref else (2 * n) // 3 + 1


class CsvWriter:
    """CSV with a provenance comment line and a fixed header."""

    def __init__(self, path: Path, columns, provenance: str):
        self._fh = open(path, "w", newline="")
        self._fh.write(f"# {provenance}\n")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(columns)

    def row(self, values):
        self._w.writerow([fmt(v) for v in values])

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _method_kind(method: str) -> str:
    return method.split(":", 1)[1] if ":" in method else method


def _run_one(cfg: ExperimentConfig, method: str, outer, K=None, N=None, M=None):
    K = K or cfg.K
    N = N or cfg.N
    M = M or cfg.M
    common = dict(moneyness=cfg.moneyness, threads=cfg.threads, outer=outer)
    t0 = time.perf_counter()
    fit = None
    if method == "oracle":
        sample, report = price_oracle(cfg.model, cfg.seed, K, **common)
    elif method == "nmc":
        sample, report = price_nmc(cfg.model, cfg.seed, K, M, h0=cfg.h0, **common)
    else:
        sample, report, fit = price_lsmc(
            cfg.model, cfg.seed, K, N, M, _method_kind(method), degree=cfg.degree,
            n_trees=cfg.n_trees, max_depth=cfg.max_depth, split_rank=cfg.split_rank, n_bins=cfg.n_bins,
            per_bin_goal=cfg.per_bin_goal, target=cfg.target, h0=cfg.h0,
            return_fit=True, **common,
        )
    wall = time.perf_counter() - t0
    return sample, report, fit, wall


def _smile_rows(report):
    for i in range(report.moneyness.size):
        yield (report.method, report.moneyness[i], report.strikes[i], report.prices[i],
               report.price_se[i], report.ivols[i], report.ivol_se[i],
               report.forward, report.forward_se)


def provenance(cfg: ExperimentConfig, command: str) -> str:
    return (f"roughvix {__version__} command={command} seed={cfg.seed} "
            f"mode={cfg.mode} config_sha256={cfg.digest()}")


def run_experiment(cfg: ExperimentConfig, command: str = "smile", method=None) -> dict:
    """Run one pricer and write the three CSV files; returns their paths."""
    method = method or cfg.method
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prov = provenance(cfg, command)
    t0 = time.perf_counter()
    outer = simulate_outer(cfg.model, cfg.seed, cfg.K, threads=cfg.threads)
    t_outer = time.perf_counter() - t0
    sample, report, fit, wall = _run_one(cfg, method, outer)
    wall += t_outer
    oracle_h = None
    if cfg.model.independent:
        oracle_h = np.exp(oracle_log_h(cfg.model, outer.gamma_T))
    ref_iv = None
    if cfg.model.independent and method != "oracle":
        ref_iv = price_oracle(cfg.model, cfg.seed, cfg.K, moneyness=cfg.moneyness,
                              outer=outer)[1].ivols
    elif method == "oracle":
        ref_iv = report.ivols
    metrics = compute_metrics(report.method, report.budget, sample.hT, oracle_h,
                              report.ivols, ref_iv, wall)
    paths = {k: out / f"{k}.csv" for k in ("smile", "ht_scatter", "metrics")}
    with CsvWriter(paths["smile"], SMILE_COLUMNS, prov) as w:
        for r in _smile_rows(report):
            w.row(r)
    j = u_ref_index(cfg.model.grid.n, cfg.u_ref) - 1
    inner = np.full(len(outer), np.nan)
    if fit is not None and fit.sample_index.size:
        inner[fit.sample_index] = fit.h_train[:, j]
    with CsvWriter(paths["ht_scatter"], SCATTER_COLUMNS, prov) as w:
        for i in range(len(outer)):
            w.row((report.method, int(outer.index[i]), outer.gamma_T[i], sample.hT[i, j],
                   inner[i], None if oracle_h is None else oracle_h[i, j]))
    _write_metrics(paths["metrics"], [metrics], prov)
    return {"files": paths, "report": report, "metrics": metrics}


def _write_metrics(path, rows, prov):
    with CsvWriter(path, METRICS_COLUMNS, prov) as w:
        for m in rows:
            b = m.budget
            w.row((m.method, b.get("K"), b.get("N"), b.get("M"),
                   simulation_count(m.method, b), m.rmse_hT, m.rmse_ivol,
                   m.wall_time, m.time_ratio))


def run_bench(cfg: ExperimentConfig) -> dict:
    """Budget sweep: NMC over ``nmc_M`` and LSMC over ``lsmc_NM`` on shared outer paths.

    With an oracle available, RMSEs are measured against it and each LSMC
    row gets ``time_ratio`` = wall time of the cheapest NMC run reaching the
    same implied-vol RMSE, divided by the LSMC wall time.
    """
    if cfg.mode == "rough" and set(cfg.lsmc_methods) - {"rf"}:
        raise ConfigError("rough mode needs the random forest", field="bench.lsmc_methods")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prov = provenance(cfg, "bench")
    t0 = time.perf_counter()
    outer = simulate_outer(cfg.model, cfg.seed, cfg.K, threads=cfg.threads)
    t_outer = time.perf_counter() - t0
    oracle_h = ref_iv = None
    reports, metrics = [], []
    if cfg.model.independent:
        _, ref, _, wall = _run_one(cfg, "oracle", outer)
        oracle_h = np.exp(oracle_log_h(cfg.model, outer.gamma_T))
        ref_iv = ref.ivols
        reports.append(ref)
        metrics.append(compute_metrics("oracle", ref.budget, wall_time=wall + t_outer))
    runs = [("nmc", None, M) for M in cfg.nmc_M]
    runs += [(f"lsmc:{k}", N, M) for k in cfg.lsmc_methods for N, M in cfg.lsmc_NM if N <= cfg.K]
    for method, N, M in runs:
        sample, report, _, wall = _run_one(cfg, method, outer, N=N, M=M)
        reports.append(report)
        metrics.append(compute_metrics(report.method, report.budget, sample.hT, oracle_h,
                                       report.ivols, ref_iv, wall + t_outer))
    nmc = [m for m in metrics if m.method == "nmc"]
    for m in metrics:
        if m.method.startswith("lsmc") and not math.isnan(m.rmse_ivol):
            times = [x.wall_time for x in nmc if x.rmse_ivol <= m.rmse_ivol]
            if times:
                m.time_ratio = min(times) / m.wall_time
    paths = {"smile": out / "smile.csv", "metrics": out / "metrics.csv"}
    with CsvWriter(paths["smile"], SMILE_COLUMNS, prov) as w:
        for report in reports:
            for r in _smile_rows(report):
                w.row(r)
    _write_metrics(paths["metrics"], metrics, prov)
    return {"files": paths, "metrics": metrics}


COMMANDS = {
    "price-nmc": "nmc",
    "price-lsmc": None,
    "price-oracle": "oracle",
    "smile": None,
    "bench": None,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roughvix", description="VIX option pricing under rough volatility")
    p.add_argument("--version", action="version", version=f"roughvix {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path)
        s.add_argument("--seed", type=int)
        s.add_argument("--threads", type=int)
        s.add_argument("--out-dir", type=Path)
        s.add_argument("--method", help="nmc | lsmc:linear | lsmc:hermite | lsmc:rf | oracle "
                                        "(for price-lsmc: linear | hermite | rf)")
        s.add_argument("--K", type=int)
        s.add_argument("--N", type=int)
        s.add_argument("--M", type=int)
        s.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override any configuration entry")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    method = args.method
    if args.command == "price-lsmc":
        method = method or "hermite"
        if not method.startswith("lsmc:"):
            method = f"lsmc:{method}"
    elif COMMANDS[args.command] is not None:
        if method is not None and method != COMMANDS[args.command]:
            print(f"ConfigError: --method conflicts with {args.command}", file=sys.stderr)
            return 2
        method = COMMANDS[args.command]
    threads = args.threads
    if threads is None and os.environ.get("VVIX_THREADS"):
        threads = int(os.environ["VVIX_THREADS"])
    try:
        cfg = parse_config(
            args.config, overrides=args.set, seed=args.seed, K=args.K, N=args.N, M=args.M,
            method=method, out_dir=args.out_dir, threads=threads,
        )
        if args.command == "bench":
            result = run_bench(cfg)
        else:
            result = run_experiment(cfg, args.command)
    except RoughVixError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for path in result["files"].values():
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
