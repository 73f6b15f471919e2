"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Every criterion runs at its stated tolerance.  Each test also stores a byte
artifact of what it computed; the determinism criterion recomputes all of
them with eight worker threads and compares bytes.

Run alone with ``pytest tests/test_acceptance.py -v -s`` or
``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from oracles import normal_equations
from regsynth.design import build_design
from regsynth.fieldsim import GammaParams, VariogramSpec, simulate_field
from regsynth.grid import ImageGrid
from regsynth.kernels import SHAPES, cosine_kernel, make_kernel
from regsynth.local import local_scope, scaled_design, solve_local, weight_matrix
from regsynth.metrics import ScenarioConfig, summaries_to_csv, summaries_to_json, benchmark_table
from regsynth.oversample import NoiseModel, noise_vector
from regsynth.rng import FIELD, NOISE, RngSpec
from regsynth.synthesis import (
    Reconstructor,
    correlation_matrix,
    cross_covariance,
    gamma_vector,
    reconstruct,
    reconstructor_for,
)

RESULTS: dict[int, tuple[bool, str]] = {}
ARTIFACTS: dict[int, bytes] = {}

TABLES = {
    1: [[0.0267, 0.1489, 0.0267],
        [0.1489, 0.2976, 0.1489],
        [0.0267, 0.1489, 0.0267]],
    2: [[0.0069, 0.0302, 0.0388, 0.0302, 0.0069],
        [0.0302, 0.0573, 0.0672, 0.0573, 0.0302],
        [0.0388, 0.0672, 0.0776, 0.0672, 0.0388],
        [0.0302, 0.0573, 0.0672, 0.0573, 0.0302],
        [0.0069, 0.0302, 0.0388, 0.0302, 0.0069]],
    3: [[0.0032, 0.0111, 0.0163, 0.0181, 0.0163, 0.0111, 0.0032],
        [0.0111, 0.0199, 0.0257, 0.0277, 0.0257, 0.0199, 0.0111],
        [0.0163, 0.0257, 0.0318, 0.0340, 0.0318, 0.0257, 0.0163],
        [0.0181, 0.0277, 0.0340, 0.0364, 0.0340, 0.0277, 0.0181],
        [0.0163, 0.0257, 0.0318, 0.0340, 0.0318, 0.0257, 0.0163],
        [0.0111, 0.0199, 0.0257, 0.0277, 0.0257, 0.0199, 0.0111],
        [0.0032, 0.0111, 0.0163, 0.0181, 0.0163, 0.0111, 0.0032]],
}

MC_SEED = 2024
MC_REPLICATES = 20_000
TREND_SEED = 0
REFERENCE = dict(R=6.0, alpha=16 / 9, lam=0.75, h=2, snr=2.0)


def report(n: int, passed: bool, detail: str) -> None:
    RESULTS[n] = (passed, detail)
    print(f"\nACCEPTANCE criterion {n}: {'PASS' if passed else 'FAIL'} - {detail}", flush=True)


def _dumps(obj) -> bytes:
    return json.dumps(obj, sort_keys=True).encode("utf-8")


def _pmap(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _chunks(total, size=500):
    return [range(s, min(s + size, total)) for s in range(0, total, size)]


# 1. kernel fixtures

def run_kernels(threads=1):
    def one(h):
        w = cosine_kernel(h).weights
        err = np.abs(w - np.array(TABLES[h]))
        tight = err.copy()
        if h == 3:
            tight[3, 3] = 0.0
        return dict(h=h, max_err=float(err.max()), max_err_tight=float(tight.max()), sum_err=abs(float(w.sum()) - 1))

    rows = _pmap(one, [1, 2, 3], threads)
    ok = all(r["max_err"] <= 2e-4 and r["max_err_tight"] <= 5e-5 and r["sum_err"] <= 1e-12 for r in rows)
    detail = "; ".join(f"h={r['h']} max|err|={r['max_err']:.2e} sum-1={r['sum_err']:.1e}" for r in rows)
    return ok, detail, _dumps(rows)


# 2. constant scenes

def run_constant(threads=1):
    cases = [(h, s) for h in (1, 2, 3) for s in SHAPES]

    def one(case):
        h, shape = case
        k = make_kernel(h, shape)
        d = build_design(20, 20, k)
        obs = ImageGrid((d.matvec(np.full(400, 3.7))).reshape(d.obs_shape), "observations", h)
        rec = reconstruct(obs, k)
        return dict(h=h, shape=shape, max_err=float(np.abs(rec.values - 3.7).max()))

    rows = _pmap(one, cases, threads)
    worst = max(r["max_err"] for r in rows)
    return worst <= 1e-8, f"worst |recon - 3.7| = {worst:.2e} over 6 kernels (tol 1e-8)", _dumps(rows)


# 3. WLS oracle

def _wls_system(k):
    rng = np.random.default_rng([31, k])
    h = int(rng.integers(1, 4))
    shape = SHAPES[int(rng.integers(0, 2))]
    # from 4h + 1 pixels on, every scope has at least as many rows as unknowns
    size = int(rng.integers(4 * h + 1, 4 * h + 10))
    d = build_design(size, size, make_kernel(h, shape))
    i = int(rng.integers(0, d.n))
    s = local_scope(d, i)
    y = rng.gamma(16 / 9, 0.75, size=len(s.r)) + rng.normal(0, 0.7, size=len(s.r))
    return dict(case=k, h=h, shape=shape, size=size, i=i), s, scaled_design(d, s), weight_matrix(d, s), y


def _wls_solve(k):
    meta, s, x, w, y = _wls_system(k)
    est = solve_local(y, x, w, scope=s)
    return meta, est.beta_hat, est.regularized


def run_wls(threads=1):
    solved = _pmap(_wls_solve, range(100), threads)
    rows = []
    # the extended-precision oracle mutates global mpmath state, so it runs serially
    for k, (meta, beta, reg) in enumerate(solved):
        _, _, x, w, y = _wls_system(k)
        ref = normal_equations(x, w, y)
        rows.append(dict(meta, rows=len(y), regularized=reg, beta=beta.tolist(),
                         rel=float(np.abs(beta - ref).max() / np.abs(ref).max())))
    worst = max(r["rel"] for r in rows)
    n_reg = sum(r["regularized"] for r in rows)
    ok = worst <= 1e-8 and n_reg == 0
    detail = f"100 local systems, worst relative error {worst:.2e} (tol 1e-8), {n_reg} regularized"
    return ok, detail, _dumps(rows)


# shared Monte Carlo scene for criteria 4 and 5

def _mc_scene():
    kernel = cosine_kernel(1)
    truth = simulate_field(12, 12, VariogramSpec(6.0), GammaParams(16 / 9, 0.75), RngSpec(MC_SEED, FIELD, 0))
    rec = reconstructor_for(12, 12, kernel)
    return kernel, truth, rec


# observation index is orow * 10 + ocol; pixels are (row, col) in the field
COV_TUPLES = [
    (44, 44, (5, 5), (5, 5)),
    (44, 44, (4, 4), (4, 4)),
    (0, 0, (1, 1), (1, 1)),
    (99, 99, (10, 10), (10, 10)),
    (44, 44, (4, 4), (6, 6)),
    (44, 45, (5, 5), (5, 5)),
    (44, 54, (5, 5), (5, 5)),
    (44, 55, (5, 6), (5, 6)),
    (44, 46, (5, 6), (5, 6)),
    (44, 66, (6, 6), (6, 6)),
    (44, 47, (5, 5), (6, 8)),
    (11, 12, (2, 2), (2, 3)),
]


def _local_betas_chunk(args):
    rec, y0, ks = args
    out = []
    for k in ks:
        y = y0 + noise_vector(rec.design, NoiseModel(1.0), RngSpec(MC_SEED, NOISE, k))
        out.append(rec.local_betas(y))
    return np.stack(out)


def run_covariance(threads=1):
    kernel, truth, rec = _mc_scene()
    d = rec.design
    y0 = d.matvec(truth.flat())
    est = rec.estimates(y0)
    cols = d.field_shape[1]
    picks = []
    for i1, i2, p1, p2 in COV_TUPLES:
        k1 = int(np.searchsorted(est[i1].scope.c, p1[0] * cols + p1[1]))
        k2 = int(np.searchsorted(est[i2].scope.c, p2[0] * cols + p2[1]))
        picks.append((i1, i2, k1, k2))
    betas = np.concatenate(_pmap(_local_betas_chunk, [(rec, y0, ks) for ks in _chunks(MC_REPLICATES)], threads))
    rows = []
    for (i1, i2, k1, k2), (_, _, p1, p2) in zip(picks, COV_TUPLES):
        a, b = betas[:, i1, k1], betas[:, i2, k2]
        prod = (a - a.mean()) * (b - b.mean())
        emp = float(prod.mean())
        se = float(prod.std(ddof=1) / math.sqrt(len(prod)))
        pred = cross_covariance(est[i1], est[i2], k1, k2, d)
        rows.append(dict(obs=[i1, i2], pixels=[list(p1), list(p2)], empirical=emp, se=se, predicted=pred,
                         z=(emp - pred) / se, ok=bool(abs(emp - pred) <= 4 * se)))
    ok = all(r["ok"] for r in rows)
    n_ok = sum(r["ok"] for r in rows)
    worst = max(rows, key=lambda r: abs(r["z"]))
    detail = (f"{n_ok}/{len(rows)} tuples within 4 SE over {MC_REPLICATES} realizations; worst obs={worst['obs']} "
              f"pixels={worst['pixels']}: empirical {worst['empirical']:.4g} vs predicted {worst['predicted']:.4g} "
              f"({worst['z']:.1f} SE)")
    return ok, detail, _dumps(rows)


def _recon_chunk(args):
    rec, y0, ks = args
    return np.stack([rec.apply(y0 + noise_vector(rec.design, NoiseModel(1.0), RngSpec(MC_SEED, NOISE, k)))
                     for k in ks])


def run_unbiased(threads=1):
    kernel, truth, rec = _mc_scene()
    y0 = rec.design.matvec(truth.flat())
    clean = rec.apply(y0)
    recs = np.concatenate(_pmap(_recon_chunk, [(rec, y0, ks) for ks in _chunks(MC_REPLICATES)], threads))
    mean = recs.mean(axis=0)
    se = recs.std(axis=0, ddof=1) / math.sqrt(len(recs))
    within = np.abs(mean - clean) <= 4 * se
    frac = float(within.mean())
    detail = f"{within.sum()}/{within.size} pixels ({frac:.2%}) within 4 SE of the noise-free reconstruction (need 99%)"
    return frac >= 0.99, detail, _dumps(dict(mean=mean.tolist(), se=se.tolist(), clean=clean.tolist()))


# 6. sigma invariance

def run_sigma(threads=1):
    kernel = cosine_kernel(1)
    d = build_design(12, 12, kernel)
    y = d.matvec(simulate_field(12, 12, VariogramSpec(6.0), GammaParams(16 / 9, 0.75), RngSpec(MC_SEED)).flat())
    est = Reconstructor(d).estimates(y)

    def corr_diff(j):
        g = gamma_vector(j, est, d)
        return float(np.abs(correlation_matrix(g, est, d, 1.0) - correlation_matrix(g, est, d, 10.0)).max())

    corr = _pmap(corr_diff, range(d.m), threads)
    w1 = Reconstructor(d, sigma=1.0).plan.weights
    w10 = Reconstructor(d, sigma=10.0).plan.weights
    wdiff = max(float(np.abs(a - b).max()) for a, b in zip(w1, w10))
    ok = max(corr) <= 1e-12 and wdiff <= 1e-10
    detail = f"max correlation change {max(corr):.1e} (tol 1e-12), max weight change {wdiff:.1e} (tol 1e-10)"
    return ok, detail, _dumps(dict(corr=corr, wdiff=wdiff))


# 7. trend reproduction

def trend_configs():
    cells = {}
    for alpha in (16 / 9, 4 / 9):
        for radius in (3.0, 6.0):
            for h in (1, 2):
                for snr in (2.0, 8.0):
                    cells[(alpha, radius, h, snr)] = ScenarioConfig.from_dict(dict(
                        rows=24, cols=24, R=radius, alpha=alpha, kernel_half_width=h, kernel_shape="cosine",
                        snr=snr, replicates=20, base_seed=TREND_SEED, **{"lambda": REFERENCE["lam"]},
                    ))
    return cells


def run_trend(threads=1):
    cells = trend_configs()
    keys = list(cells)
    summaries = benchmark_table([cells[k] for k in keys], threads=threads)
    by = dict(zip(keys, summaries))
    base = (REFERENCE["alpha"], REFERENCE["R"], REFERENCE["h"], REFERENCE["snr"])

    def cell(**change):
        alpha, radius, h, snr = base
        return by[(change.get("alpha", alpha), change.get("R", radius), change.get("h", h), change.get("snr", snr))]

    b = cell()
    checks = [
        ("skewness falls as 2/sqrt(alpha) rises (alpha 16/9 -> 4/9)", cell(alpha=4 / 9).avg_skewness, "<", b.avg_skewness),
        ("skewness falls as R falls (6 -> 3)", cell(R=3.0).avg_skewness, "<", b.avg_skewness),
        ("skewness falls as h falls (2 -> 1)", cell(h=1).avg_skewness, "<", b.avg_skewness),
        ("sd rises as SNR falls (8 -> 2)", b.avg_sd, ">", cell(snr=8.0).avg_sd),
        ("sd rises as h rises (1 -> 2)", b.avg_sd, ">", cell(h=1).avg_sd),
    ]
    results = []
    for name, lhs, op, rhs in checks:
        ok = lhs < rhs if op == "<" else lhs > rhs
        results.append((name, lhs, op, rhs, ok))
        print(f"    {'ok  ' if ok else 'FAIL'} {name}: {lhs:.4f} {op} {rhs:.4f}")
    n_ok = sum(r[-1] for r in results)
    failed = [r[0] for r in results if not r[-1]]
    detail = f"{n_ok}/5 trend comparisons hold" + (f"; failing: {'; '.join(failed)}" if failed else "")
    artifact = summaries_to_csv(summaries).encode() + summaries_to_json(summaries).encode()
    return n_ok == 5, detail, artifact


# 8. reference scenario pipeline

def reference_config():
    return ScenarioConfig(40, 40, 6.0, 16 / 9, 0.75, 2, "cosine", math.sqrt(0.5), replicates=100, base_seed=TREND_SEED)


def run_reference(threads=1):
    t0 = time.perf_counter()
    (s,) = benchmark_table([reference_config()], threads=threads)
    elapsed = time.perf_counter() - t0
    ok = abs(s.avg_mean) <= 0.05 and abs(s.avg_skewness) <= 0.5 and elapsed < 600
    detail = (f"avg_mean {s.avg_mean:.4f} (|.|<=0.05), avg_sd {s.avg_sd:.3f}, avg_skewness {s.avg_skewness:.4f} "
              f"(|.|<=0.5), {elapsed:.0f}s (<600s)")
    return ok, detail, summaries_to_csv([s]).encode() + summaries_to_json([s]).encode()


RUNNERS = {1: run_kernels, 2: run_constant, 3: run_wls, 4: run_covariance, 5: run_unbiased,
           6: run_sigma, 7: run_trend, 8: run_reference}


def _criterion(n):
    ok, detail, artifact = RUNNERS[n]()
    ARTIFACTS[n] = artifact
    report(n, ok, detail)
    assert ok, detail


def test_criterion_1_kernel_fixtures():
    _criterion(1)


def test_criterion_2_constant_scene_exactness():
    _criterion(2)


def test_criterion_3_wls_oracle_equivalence():
    _criterion(3)


def test_criterion_4_covariance_validation():
    _criterion(4)


def test_criterion_5_unbiasedness():
    _criterion(5)


def test_criterion_6_sigma_invariance():
    _criterion(6)


def test_criterion_7_trend_reproduction():
    _criterion(7)


def test_criterion_8_reference_pipeline():
    _criterion(8)


def test_criterion_9_determinism_across_threads():
    mismatched = []
    for n, runner in RUNNERS.items():
        if n not in ARTIFACTS:
            ARTIFACTS[n] = runner(threads=1)[2]
        if runner(threads=8)[2] != ARTIFACTS[n]:
            mismatched.append(n)
    ok = not mismatched
    detail = ("artifacts of criteria 1-8 byte-identical with 1 and 8 worker threads" if ok
              else f"artifacts differ for criteria {mismatched}")
    report(9, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
