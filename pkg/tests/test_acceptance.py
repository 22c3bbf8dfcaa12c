"""Acceptance suite: the eleven numbered criteria at their stated tolerances.

Each check returns ``(passed, detail)``; the pytest wrapper prints one
``PASS`` / ``FAIL`` line per criterion (also when run as a script with
``python tests/test_acceptance.py``). Runtime budgets are part of each
verdict.
"""
from __future__ import annotations

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from rwre21.bpire import (empirical_pmf, extract_U, invariant_check, offspring_mean,
                          simulate_Z, tn_identity, tv_distance, u_z_distribution_check)
from rwre21.cli import main as cli_main
from rwre21.env import FamilySpec, SiteLaw
from rwre21.estimate import consistency_experiment
from rwre21.likelihood import kernel_check, loglik, loglik_via_Z
from rwre21.spectral import lyapunov, site_matrices, speed, zn_pmf
from rwre21.streams import substream
from rwre21.walk import count_identity_check, run_steps, simulate_to

POINT = FamilySpec.point()
DIRICHLET = FamilySpec.dirichlet()
MIXTURE = FamilySpec.mixture(((0.05, 0.15, 0.8), (0.2, 0.2, 0.6)))
THETA_POINT = (0.2, 0.1)
THETA_DIRICHLET = (1.0, 1.0, 6.0)
THETA_MIXTURE = (0.5,)
OMEGA = SiteLaw(0.1, 0.2, 0.7)
SEED = 20261018


def _timed(fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    return ok, detail, time.perf_counter() - t0


def check_1():
    bad = 0
    for i in range(100):
        rec = simulate_to(POINT, THETA_POINT, 50, rng=substream(SEED, 1, i))
        bad += not (count_identity_check(rec) and tn_identity(rec))
    return bad == 0, f"{100 - bad}/100 paths satisfy both identities"


def check_2():
    worst = 0.0
    for ptype in (1, 2, 3):
        mean, se = offspring_mean(OMEGA, ptype, 10**5, substream(SEED, 2, ptype))
        row = site_matrices(OMEGA).a3[ptype - 1]
        for k in range(3):
            z = 0.0 if se[k] == 0 and mean[k] == row[k] else abs(mean[k] - row[k]) / se[k]
            worst = max(worst, z)
    return worst <= 4.0, f"max |mean - A row| = {worst:.2f} stderr"


def check_3():
    sites = [OMEGA] * 3
    emp = empirical_pmf(simulate_Z(sites, substream(SEED, 3, i))[-1] for i in range(10**5))
    tv, _ = tv_distance(emp, {v: zn_pmf(sites, v) for v in emp})
    return tv <= 0.02, f"TV = {tv:.4f}"


def check_4():
    rep = u_z_distribution_check(POINT, THETA_POINT, 6, 10**5, seed=SEED)
    return rep.max_tv <= 0.03, "TV per k = " + ", ".join(f"{t:.4f}" for t in rep.tv)


def check_5():
    a, b = OMEGA.a, OMEGA.b
    oracle = math.log(((a + b) + math.sqrt((a + b) ** 2 + 4 * b)) / 2)
    gA, sA = lyapunov(POINT, THETA_POINT, 10**6, "A", substream(SEED, 5, 0))
    gB, sB = lyapunov(POINT, THETA_POINT, 10**6, "B", substream(SEED, 5, 1))
    ok = abs(gA - oracle) <= 5e-3 and abs(gA - gB) <= 3 * math.hypot(sA, sB)
    return ok, (f"gamma_A = {gA:.6f}, gamma_B = {gB:.6f}, oracle {oracle:.6f}, "
                f"|A-B| = {abs(gA - gB):.2e} vs {3 * math.hypot(sA, sB):.2e}")


def check_6():
    v, _ = speed(POINT, THETA_POINT, 1, rng=substream(SEED, 6, 0))
    t = 10**6
    x = run_steps(POINT, THETA_POINT, t, rng=substream(SEED, 6, 1))
    rel = abs(x / t - v) / v
    n = 10**4
    ratios = np.array([simulate_to(POINT, THETA_POINT, n, rng=substream(SEED, 6, 2, i),
                                   keep_path=False).t_n / n for i in range(20)])
    se = ratios.std(ddof=1) / math.sqrt(len(ratios))
    z = abs(ratios.mean() - 1 / v) / se
    ok = rel <= 0.01 and z <= 2.0
    return ok, (f"speed {v:.6f}, X_t/t = {x / t:.5f} (rel {rel:.4f}), "
                f"mean t_n/n = {ratios.mean():.4f} vs 1/speed {1 / v:.4f} ({z:.2f} stderr)")


def check_7():
    rows, tvs = [], []
    for j, x in enumerate([(0, 0, 0), (1, 1, 0), (2, 0, 3)]):
        row_sum, tv = kernel_check(DIRICHLET, THETA_DIRICHLET, x, 10**5,
                                   substream(SEED, 7, j), max_total=300)
        rows.append(row_sum)
        tvs.append(tv)
    ok = min(rows) >= 1 - 1e-6 and max(tvs) <= 0.02
    return ok, f"min row sum {min(rows):.9f}, max TV {max(tvs):.4f}"


def check_8():
    tv, mass = invariant_check(DIRICHLET, THETA_DIRICHLET, 30, 10**4, seed=SEED)
    return tv <= 0.03, f"TV = {tv:.4f} (table mass {mass:.6f})"


def check_9():
    worst = 0.0
    for fam, theta, evals in [
            (POINT, THETA_POINT, [(0.2, 0.1), (0.1, 0.3)]),
            (DIRICHLET, THETA_DIRICHLET, [(1, 1, 6), (3, 0.5, 2)]),
            (MIXTURE, THETA_MIXTURE, [(0.5,), (0.2,)])]:
        for i in range(30):
            rec = simulate_to(fam, theta, 200, rng=substream(SEED, 9, i))
            z = extract_U(rec)[:rec.target + 1]
            for th in evals:
                a = loglik(rec.counts_view(), fam, th)
                b = loglik_via_Z(z, fam, th)
                worst = max(worst, abs(a - b) / max(1.0, abs(a)))
    return worst <= 1e-10, f"max relative gap {worst:.2e} over 90 paths"


def check_10():
    parts, ok = [], True
    for fam, theta in [(POINT, THETA_POINT), (MIXTURE, THETA_MIXTURE),
                       (DIRICHLET, THETA_DIRICHLET)]:
        table = consistency_experiment(fam, theta, (10**3, 10**4), 20, SEED, threads="auto")
        med = [s["median"] for s in table.summary()]
        ok &= table.medians_decrease(strict=True)
        parts.append(f"{fam.kind} {med[0]:.4f} -> {med[1]:.4f}")
        if fam.kind == "point":
            step = max((hi - lo) / 20 for lo, hi in fam.box)
            far = [r for r in table.rows if r["n"] == 10**4
                   and max(abs(h - t) for h, t in zip(r["theta_hat"], theta)) > 2 * step]
            ok &= not far
            parts.append(f"point replicates beyond 2 grid steps: {len(far)}")
    return ok, "; ".join(parts)


def _pipeline(root: Path, threads) -> dict[str, bytes]:
    cfg = root / f"cfg_{threads}"
    cfg.write_text("family.kind = point\nfamily.theta = 0.2, 0.1\n"
                   f"run.seed = {SEED}\nrun.threads = {threads}\n"
                   "simulate.n = 50\nestimate.grid = 11\nconsistency.grid = 11\n")
    out = root / f"out_{threads}_{len(list(root.iterdir()))}"
    steps = [["simulate"], ["estimate", "--counts", str(out / "simulate" / "walk.tsv")],
             ["consistency", "--n", "50,200", "--reps", "4"],
             ["bpire-check", "--n", "4", "--reps", "200"]]
    for args in steps:
        code = cli_main([args[0], "--config", str(cfg), "--out", str(out / args[0])] + args[1:])
        if code != 0:
            raise RuntimeError(f"{args[0]} exited with {code}")
    return {str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*.tsv"))}


def check_11(root: Path):
    runs = [_pipeline(root, t) for t in (1, 1, 2, "auto")]
    same = all(r == runs[0] for r in runs[1:])
    return same, f"{len(runs[0])} data files identical across 4 runs (threads 1, 1, 2, auto)"


CRITERIA = {
    1: ("exact path identities", check_1, 5),
    2: ("offspring law", check_2, 5),
    3: ("p.g.f. correctness", check_3, 30),
    4: ("walk/BPIRE equivalence", check_4, 120),
    5: ("Lyapunov oracle", check_5, 30),
    6: ("speed oracle", check_6, 60),
    7: ("annealed kernel", check_7, 60),
    8: ("invariant law", check_8, 180),
    9: ("likelihood identity", check_9, 10),
    10: ("consistency", check_10, 900),
    11: ("determinism", None, 5),
}


def _line(num, ok, detail, elapsed, budget):
    within = budget is None or elapsed <= budget
    verdict = "PASS" if ok and within else "FAIL"
    limit = f" (budget {budget} s)" if budget else ""
    return verdict == "PASS", f"[{verdict}] criterion {num:>2} {CRITERIA[num][0]}: " \
                              f"{detail}; {elapsed:.1f} s{limit}"


@pytest.fixture
def report(capsys):
    def emit(text):
        with capsys.disabled():
            print("\n" + text, flush=True)
    return emit


@pytest.mark.slow
@pytest.mark.parametrize("num", list(range(1, 11)))
def test_criterion(num, report):
    _, fn, budget = CRITERIA[num]
    ok, detail, elapsed = _timed(fn)
    passed, text = _line(num, ok, detail, elapsed, budget)
    report(text)
    assert passed, text


def _check_11_line(root: Path):
    # the budget applies per repeat of the pipeline (criterion 1 scale)
    ok, detail, elapsed = _timed(lambda: check_11(root))
    return _line(11, ok, detail + " (time per repeat)", elapsed / 4, CRITERIA[11][2])


@pytest.mark.slow
def test_criterion_11(tmp_path, report):
    passed, text = _check_11_line(tmp_path)
    report(text)
    assert passed, text


if __name__ == "__main__":
    import tempfile

    failures = 0
    for num in range(1, 11):
        _, fn, budget = CRITERIA[num]
        ok, detail, elapsed = _timed(fn)
        passed, text = _line(num, ok, detail, elapsed, budget)
        failures += not passed
        print(text, flush=True)
    with tempfile.TemporaryDirectory() as tmp:
        passed, text = _check_11_line(Path(tmp))
        failures += not passed
        print(text, flush=True)
    sys.exit(1 if failures else 0)
