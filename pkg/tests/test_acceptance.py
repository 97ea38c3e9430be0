"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the summary lines.
"""
import math
import time

import numpy as np
import pytest

from roughvix.cli import METRICS_COLUMNS, main
from roughvix.model import (
    GridSpec,
    ModelConfig,
    assemble_forward_curve,
    simulate_h0,
    simulate_inner,
    simulate_outer,
)
from roughvix.paths import CorrelationSpec
from roughvix.pricing import (
    oracle_h0,
    oracle_log_h,
    price_lsmc,
    price_nmc,
    price_oracle,
    rmse,
    simulation_count,
    vix_from_curve,
)
from roughvix.riccati import oracle_hT, solve_riccati

pytestmark = pytest.mark.slow

SEED = 2024
K_SHARED = 10_000
# LSMC (N, M) candidates; the sweep reaches below the cheapest NMC budget K (1 + 10)
LSMC_BUDGETS = ((500, 10), (1000, 20), (1000, 100), (2000, 100), (2000, 1000))


def verdict(n, ok, detail):
    print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {n}: {detail}"


@pytest.fixture(scope="session")
def study():
    """Independent CIR configuration, shared outer paths, oracle and NMC runs."""
    c = ModelConfig()
    outer = simulate_outer(c, SEED, K_SHARED)
    t0 = time.perf_counter()
    oracle = price_oracle(c, SEED, K_SHARED, outer=outer)
    oracle_wall = time.perf_counter() - t0
    nmc = {}
    for M in (10, 100, 1000):
        t0 = time.perf_counter()
        sample, rep = price_nmc(c, SEED, K_SHARED, M, outer=outer)
        nmc[M] = (sample, rep, time.perf_counter() - t0)
    return {"config": c, "outer": outer, "oracle": oracle, "oracle_wall": oracle_wall, "nmc": nmc}


def _combined(a, b):
    return math.hypot(a, b)


# ------------------------------------------------------------------------ 1


def test_criterion_1_rbergomi_degeneracy():
    t0 = time.perf_counter()
    H, eta, Delta = 0.1, 1.9, 30 / 365
    sol = solve_riccati(H, 0.0, 0.0, 0.0, Delta)
    tau = np.geomspace(1e-4, Delta, 200)
    psi, _ = sol.at(tau)
    err_psi = np.max(np.abs(psi * H / tau ** (2 * H) - 1))
    h = oracle_hT(eta**2 * H / 2, tau, sol)
    err_h = np.max(np.abs(h / np.exp(eta**2 * tau ** (2 * H) / 2) - 1))
    elapsed = time.perf_counter() - t0
    ok = err_psi < 1e-6 and err_h < 1e-6 and elapsed < 1.0
    verdict(1, ok, f"max psi error {err_psi:.2e}, max h error {err_h:.2e}, {elapsed:.3f}s")


# ------------------------------------------------------------------------ 2


def test_criterion_2_inner_estimates_match_oracle():
    c = ModelConfig()
    K, M = 200, 10_000
    outer = simulate_outer(c, SEED + 2, K)
    h, se = simulate_inner(c, outer, SEED + 2, M, return_se=True)
    ref = np.exp(oracle_log_h(c, outer.gamma_T))
    frac = float(np.mean(np.abs(h - ref) < 3 * se))
    verdict(2, frac >= 0.99, f"{frac:.4f} of {h.size} (path, u_j) pairs within 3 SE")


# ------------------------------------------------------------------------ 3


def _martingale_nmc(c, seed, K, M):
    outer = simulate_outer(c, seed, K)
    hT = simulate_inner(c, outer, seed, M)
    h0, h0_se = simulate_h0(c, seed, K)
    xi = assemble_forward_curve(c.xi0_curve(), h0, outer.E0T, hT)
    mean = xi.mean(axis=0)
    rel = np.hypot(xi.std(axis=0, ddof=1) / math.sqrt(K) / mean, h0_se / h0)
    return mean, mean * rel


def test_criterion_3_martingale_in_every_mode():
    K = 10_000
    v0 = 0.013
    details, ok = [], True
    # independent: exact conditional and initial factors from the Riccati solution
    c = ModelConfig()
    outer = simulate_outer(c, SEED + 3, K)
    xi = assemble_forward_curve(c.xi0_curve(), oracle_h0(c), outer.E0T,
                                np.exp(oracle_log_h(c, outer.gamma_T)))
    z = np.abs(xi.mean(axis=0) - v0) / (xi.std(axis=0, ddof=1) / math.sqrt(K))
    ok &= bool(np.all(z < 3))
    details.append(f"independent max|z|={z.max():.2f}")
    for name, c in (
        ("dependent", ModelConfig(corr=CorrelationSpec(-0.95, -0.9, 0.9))),
        ("rough", ModelConfig(vov="rough")),
    ):
        mean, se = _martingale_nmc(c, SEED + 3, K, 100)
        z = np.abs(mean - v0) / se
        ok &= bool(np.all(z < 3))
        details.append(f"{name} max|z|={z.max():.2f}")
    verdict(3, ok, ", ".join(details) + f" over {GridSpec().n} grid points each")


# ------------------------------------------------------------------------ 4


def test_criterion_4_flat_curve_vix():
    v = float(vix_from_curve(np.full(GridSpec().n, 0.013)))
    verdict(4, abs(v - 0.114018) <= 1e-6 and abs(v - math.sqrt(0.013)) <= 1e-12,
            f"VIX = {v:.12f}")


# ------------------------------------------------------------------------ 5


def test_criterion_5_lsmc_matches_oracle():
    c = ModelConfig()
    K, N, M = 50_000, 2000, 100
    outer = simulate_outer(c, SEED + 5, K)
    _, ref = price_oracle(c, SEED + 5, K, outer=outer)
    ok, details = True, []
    for kind in ("hermite", "linear"):
        _, rep = price_lsmc(c, SEED + 5, K, N, M, kind, outer=outer)
        for m in (0.8, 1.0, 1.2):
            d = abs(rep.ivol_at(m) - ref.ivol_at(m))
            tol = max(3 * _combined(rep.ivol_se_at(m), ref.ivol_se_at(m)), 0.01)
            ok &= d <= tol
            details.append(f"{kind}@{m}: |d|={d:.4f} tol={tol:.4f}")
    verdict(5, ok, "; ".join(details))


# ------------------------------------------------------------------------ 6


def test_criterion_6_nmc_positive_bias(study):
    ref = study["oracle"][1]
    gaps, ses = [], []
    for M in (10, 100, 1000):
        rep = study["nmc"][M][1]
        gaps.append(rep.ivol_at(1.0) - ref.ivol_at(1.0))
        ses.append(_combined(rep.ivol_se_at(1.0), ref.ivol_se_at(1.0)))
    positive = gaps[0] > 0
    monotone = all(gaps[i + 1] <= gaps[i] + 3 * _combined(ses[i], ses[i + 1]) for i in range(2))
    detail = ", ".join(f"M={M}: gap {g:+.4f} (se {s:.4f})" for M, g, s in zip((10, 100, 1000), gaps, ses))
    verdict(6, positive and monotone, detail)


# ------------------------------------------------------------------------ 7


def test_criterion_7_upward_smile():
    c = ModelConfig()
    _, rep = price_oracle(c, SEED + 7, 50_000)
    lo, hi = rep.ivol_at(0.9), rep.ivol_at(1.1)
    verdict(7, hi > lo, f"iVol(0.9F)={lo:.4f}, iVol(1.1F)={hi:.4f}")


# ------------------------------------------------------------------------ 8


def test_criterion_8_cubed_log_target(study):
    c, outer = study["config"], study["outer"]
    ref = study["nmc"][1000][1]
    N, M = 1000, 1000
    ok, details = True, []
    for kind in ("hermite", "rf", "linear"):
        _, rep = price_lsmc(c, SEED, K_SHARED, N, M, kind, target="log3", outer=outer)
        d = abs(rep.ivol_at(1.0) - ref.ivol_at(1.0))
        tol = 3 * _combined(rep.ivol_se_at(1.0), ref.ivol_se_at(1.0))
        if kind != "linear":
            ok &= d <= tol
            details.append(f"{kind}: |d|={d:.4f} tol={tol:.4f}")
        else:
            details.append(f"linear (not bounded): |d|={d:.4f}")
    verdict(8, ok, "; ".join(details))


# ------------------------------------------------------------------------ 9


def test_criterion_9_lsmc_efficiency(study):
    c, outer = study["config"], study["outer"]
    ref_iv = study["oracle"][1].ivols
    nmc = []
    for M, (_, rep, wall) in study["nmc"].items():
        nmc.append((rmse(rep.ivols, ref_iv), simulation_count("nmc", rep.budget), wall, M))
    lsmc = []
    for N, M in LSMC_BUDGETS:
        t0 = time.perf_counter()
        _, rep = price_lsmc(c, SEED, K_SHARED, N, M, "hermite", outer=outer)
        wall = time.perf_counter() - t0
        lsmc.append((rmse(rep.ivols, ref_iv), simulation_count("lsmc", rep.budget), wall, (N, M)))
    ok, details, matched = True, [], 0
    for target, *_ in nmc:
        a = [x for x in nmc if x[0] <= target]
        b = [x for x in lsmc if x[0] <= target]
        if not b:
            details.append(f"target {target:.4f}: no LSMC run reaches it")
            continue
        matched += 1
        best_a, best_b = min(a, key=lambda x: x[1]), min(b, key=lambda x: x[1])
        ratio = min(x[2] for x in a) / min(x[2] for x in b)
        ok &= best_b[1] < best_a[1] and ratio > 1
        details.append(f"target {target:.4f}: sims NMC {best_a[1]} vs LSMC {best_b[1]}, "
                       f"wall ratio {ratio:.1f}")
    verdict(9, ok and matched > 0, "; ".join(details))


# ----------------------------------------------------------------------- 10


def _masked(path):
    lines = path.read_text().splitlines()
    if path.name != "metrics.csv":
        return lines
    header = lines[1].split(",")
    drop = {header.index("wall_time"), header.index("time_ratio")}
    out = lines[:2]
    for line in lines[2:]:
        out.append(",".join(v for i, v in enumerate(line.split(",")) if i not in drop))
    return out


def test_criterion_10_cli_determinism(tmp_path):
    commands = [
        ["price-oracle", "--K", "2000"],
        ["price-nmc", "--K", "300", "--M", "20"],
        ["price-lsmc", "--method", "hermite", "--K", "2000", "--N", "200", "--M", "20"],
        ["price-lsmc", "--method", "rf", "--K", "500", "--N", "100", "--M", "10",
         "--set", "method.n_trees=10"],
        ["smile", "--K", "300", "--M", "20", "--set", "model.mode='dependent'"],
        ["bench", "--K", "500", "--set", "bench.nmc_M=[5, 20]",
         "--set", "bench.lsmc_NM=[[100, 20]]"],
    ]
    ok, details = True, []
    for i, cmd in enumerate(commands):
        runs = []
        for rep in ("a", "b"):
            out = tmp_path / f"{i}{rep}"
            assert main(cmd + ["--seed", "11", "--out-dir", str(out)]) == 0
            runs.append(out)
        files = sorted(p.name for p in runs[0].glob("*.csv"))
        for name in files:
            a, b = runs[0] / name, runs[1] / name
            same = (a.read_bytes() == b.read_bytes()) if name != "metrics.csv" \
                else _masked(a) == _masked(b)
            ok &= same
        details.append(f"{cmd[0]}: {len(files)} files {'identical' if ok else 'DIFFER'}")
    assert "wall_time" in METRICS_COLUMNS
    verdict(10, ok, "; ".join(details) + " (metrics.csv compared without wall_time/time_ratio)")
