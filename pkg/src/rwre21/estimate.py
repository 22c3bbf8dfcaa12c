"""Maximum-criterion estimation of theta from one walk.

The estimator is a grid search over the parameter box followed by an
optional Nelder-Mead polish from the best grid point. Ties on the grid are
broken by taking the lexicographically smallest point, and all of them are
reported.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .env import FamilySpec
from .errors import ConfigError, DegenerateDataError
from .likelihood import CountsView, Criterion
from .spectral import classify, lyapunov
from .streams import parallel_map, substream
from .walk import simulate_to

GRID_POINTS = 21
TIE_TOL = 1e-9
REFINE_MAXITER = 200
REFINE_XATOL = 1e-5


@dataclass
class EstimateResult:
    theta_hat: tuple[float, ...]
    loglik_at_hat: float
    grid_resolution: tuple[float, ...]
    refine_iterations: int
    ties: list[tuple[float, ...]]
    grid_best: tuple[float, ...] = ()
    grid_best_value: float = -math.inf

    def to_tsv(self) -> str:
        d = len(self.theta_hat)
        head = [f"theta{i + 1}" for i in range(d)] + ["loglik", "refine_iterations", "ties"]
        row = [f"{v:.12g}" for v in self.theta_hat]
        row += [f"{self.loglik_at_hat:.12g}", str(self.refine_iterations), str(len(self.ties))]
        return "\t".join(head) + "\n" + "\t".join(row) + "\n"


def _family_on(family: FamilySpec, box) -> FamilySpec:
    if box is None:
        return family
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    for (lo, hi), (flo, fhi) in zip(box, family.box):
        if lo < flo or hi > fhi:
            raise ConfigError(f"search box {box} leaves the family box {family.box}")
    return FamilySpec(family.kind, box, family.atoms)


def grid_points(box, points_per_dim: int) -> tuple[np.ndarray, tuple[float, ...]]:
    """Full tensor grid over ``box`` in lexicographic order, and its steps."""
    if points_per_dim < 2:
        raise ValueError("need at least 2 grid points per dimension")
    axes = [np.linspace(lo, hi, points_per_dim) for lo, hi in box]
    pts = np.array(list(itertools.product(*axes)), dtype=float)
    steps = tuple((hi - lo) / (points_per_dim - 1) for lo, hi in box)
    return pts, steps


def _evaluate_grid(crit: Criterion, family: FamilySpec, points_per_dim: int):
    pts, steps = grid_points(family.box, points_per_dim)
    return pts, crit.many(family, pts), steps


def mle(counts: CountsView, family: FamilySpec, box=None,
        grid_points_per_dim: int = GRID_POINTS, refine: bool = True,
        tie_tol: float = TIE_TOL, maxiter: int = REFINE_MAXITER,
        xatol: float = REFINE_XATOL) -> EstimateResult:
    """Maximise the criterion of ``counts`` over ``box``.

    Parameters
    ----------
    counts : CountsView
        Left-jump counts of one walk.
    family : FamilySpec
        Environment family; ``box`` defaults to the family box and must lie
        inside it.
    grid_points_per_dim : int
        At least 5.
    refine : bool
        Run a bounded Nelder-Mead search from the best grid point. Its
        result replaces the grid point only if it is at least as good.

    Raises
    ------
    DegenerateDataError
        When the criterion is ``-inf`` at every grid point.
    """
    if grid_points_per_dim < 5:
        raise ValueError("grid_points_per_dim must be >= 5")
    fam = _family_on(family, box)
    crit = Criterion.from_counts(counts)
    pts, vals, steps = _evaluate_grid(crit, fam, grid_points_per_dim)
    best = float(np.max(vals))
    if best == -math.inf:
        raise DegenerateDataError("criterion is -inf on the whole grid")
    tie_idx = np.flatnonzero(vals >= best - tie_tol)
    ties = [tuple(float(v) for v in pts[i]) for i in tie_idx]
    # itertools.product order is lexicographic, so the first tie is the smallest
    theta0 = np.array(ties[0])
    value0 = float(vals[tie_idx[0]])
    theta_hat, value, iters = tuple(theta0.tolist()), value0, 0
    if refine:
        lo = np.array([b[0] for b in fam.box])
        hi = np.array([b[1] for b in fam.box])

        def objective(x):
            v = crit.many(fam, np.clip(x, lo, hi))[0]
            return -v if math.isfinite(v) else math.inf

        simplex = [theta0]
        for i, h in enumerate(steps):
            vertex = theta0.copy()
            vertex[i] += 0.5 * h if theta0[i] + 0.5 * h <= hi[i] else -0.5 * h
            simplex.append(vertex)
        res = minimize(objective, theta0, method="Nelder-Mead",
                       bounds=list(zip(lo, hi)),
                       options={"maxiter": maxiter, "xatol": xatol, "fatol": 1e-10,
                                "initial_simplex": np.array(simplex)})
        iters = int(res.nit)
        x = np.clip(res.x, lo, hi)
        v = float(crit.many(fam, x)[0])
        if v >= value0:
            theta_hat, value = tuple(float(t) for t in x), v
    return EstimateResult(theta_hat, value, steps, iters, ties,
                          tuple(theta0.tolist()), value0)


@dataclass
class ProfileTable:
    """Normalised criterion ``l_n(theta) / n`` over a grid."""

    points: np.ndarray
    values: np.ndarray
    n: int

    @property
    def argmax(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self.points[int(np.argmax(self.values))])

    def to_tsv(self) -> str:
        d = self.points.shape[1]
        lines = ["\t".join([f"theta{i + 1}" for i in range(d)] + ["criterion_per_site"])]
        for p, v in zip(self.points.tolist(), self.values.tolist()):
            lines.append("\t".join([f"{x:.12g}" for x in p] + [f"{v:.12g}"]))
        return "\n".join(lines) + "\n"


def profile(counts: CountsView, family: FamilySpec, box=None,
            grid_points_per_dim: int = GRID_POINTS) -> ProfileTable:
    """``l_n(theta) / n`` on the estimation grid."""
    if grid_points_per_dim < 5:
        raise ValueError("grid_points_per_dim must be >= 5")
    fam = _family_on(family, box)
    crit = Criterion.from_counts(counts)
    pts, vals, _ = _evaluate_grid(crit, fam, grid_points_per_dim)
    if not np.isfinite(vals).any():
        raise DegenerateDataError("criterion is -inf on the whole grid")
    return ProfileTable(pts, vals / counts.n, counts.n)


# -- consistency experiments ----------------------------------------------

@dataclass
class ErrorTable:
    family: FamilySpec
    theta_star: tuple[float, ...]
    gamma_hat: float
    rows: list[dict] = field(default_factory=list)

    def errors(self, n: int) -> np.ndarray:
        return np.array([r["error"] for r in self.rows if r["n"] == n])

    @property
    def n_list(self) -> list[int]:
        return sorted({r["n"] for r in self.rows})

    def summary(self) -> list[dict]:
        out = []
        for n in self.n_list:
            e = self.errors(n)
            q1, med, q3 = np.quantile(e, [0.25, 0.5, 0.75])
            out.append({"n": n, "median": float(med), "q1": float(q1), "q3": float(q3)})
        return out

    def medians_decrease(self, strict: bool = True) -> bool:
        med = [s["median"] for s in self.summary()]
        if strict:
            return all(b < a for a, b in zip(med, med[1:]))
        return all(b <= a for a, b in zip(med, med[1:]))

    def to_tsv(self) -> str:
        d = len(self.theta_star)
        head = ["n", "replicate", "t_n"] + [f"theta{i + 1}_hat" for i in range(d)] + ["error"]
        lines = ["\t".join(head)]
        for r in self.rows:
            vals = [str(r["n"]), str(r["replicate"]), str(r["t_n"])]
            vals += [f"{v:.12g}" for v in r["theta_hat"]] + [f"{r['error']:.12g}"]
            lines.append("\t".join(vals))
        return "\n".join(lines) + "\n"

    def summary_tsv(self) -> str:
        lines = ["n\tmedian\tq1\tq3"]
        lines += [f"{s['n']}\t{s['median']:.12g}\t{s['q1']:.12g}\t{s['q3']:.12g}"
                  for s in self.summary()]
        return "\n".join(lines) + "\n"


def _replicate(args):
    family, theta_star, n, seed, key, grid, refine, step_cap = args
    rec = simulate_to(family, theta_star, n, step_cap, substream(seed, *key), keep_path=False)
    res = mle(rec.counts_view(), family, grid_points_per_dim=grid, refine=refine)
    err = float(np.linalg.norm(np.subtract(res.theta_hat, theta_star)))
    return {"n": n, "replicate": key[-1], "t_n": rec.t_n,
            "theta_hat": res.theta_hat, "error": err}


def ballistic_precheck(family: FamilySpec, theta, seed: int, steps: int = 10**5) -> float:
    """Estimate gamma_A at ``theta`` and refuse anything not transient to the right."""
    gamma, se = lyapunov(family, theta, steps, "A", substream(seed, 0))
    if classify(gamma, se) != "transient-right":
        raise ConfigError(
            f"theta={tuple(theta)} is not transient to the right: gamma_A_hat={gamma:.6g} "
            f"(stderr {se:.2g})")
    return gamma


def consistency_experiment(family: FamilySpec, theta_star, n_list: Sequence[int],
                           replicates: int, seed: int, grid_points_per_dim: int = GRID_POINTS,
                           refine: bool = True, threads=1, step_cap: int | None = None,
                           precheck_steps: int = 10**5) -> ErrorTable:
    """Estimation error over independent walks for each ``n`` in ``n_list``.

    Replicate ``j`` at the ``i``-th ``n`` uses ``substream(seed, 1, i, j)``.
    """
    theta_star = family.check(theta_star)
    gamma = ballistic_precheck(family, theta_star, seed, precheck_steps)
    tasks = [(family, theta_star, int(n), seed, (1, i, j), grid_points_per_dim, refine, step_cap)
             for i, n in enumerate(n_list) for j in range(replicates)]
    rows = parallel_map(_replicate, tasks, threads)
    return ErrorTable(family, theta_star, gamma, rows)
