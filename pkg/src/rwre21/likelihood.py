"""The criterion function ``l_n(theta)`` and the annealed kernel of Z.

Per site ``x`` the criterion adds

    log E_theta[ w(-1)**L_{x,1} * w(-2)**L_{x,2} * w(+1)**R_x ]

with ``R_x = L_{x+1,1} + L_{x+1,2} + L_{x+2,2} + 1``; only sites ``0..n-1``
enter (negative sites are dropped). Because many sites share the same
exponent triple, evaluation is done once per distinct triple.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .env import FamilySpec, log_moment


@dataclass
class CountsView:
    """Left-jump counts ``L_x = (l1[x], l2[x])`` for ``x = 0 .. n + 1``."""

    n: int
    l1: np.ndarray
    l2: np.ndarray

    def __post_init__(self):
        self.l1 = _pad(np.asarray(self.l1, dtype=np.int64), self.n + 2)
        self.l2 = _pad(np.asarray(self.l2, dtype=np.int64), self.n + 2)
        if (self.l1 < 0).any() or (self.l2 < 0).any():
            raise ValueError("counts must be nonnegative")

    def exponent_triples(self) -> np.ndarray:
        """``(n, 3)`` array of ``(L_{x,1}, L_{x,2}, R_x)`` for ``x < n``."""
        n = self.n
        l1, l2 = self.l1, self.l2
        r = l1[1:n + 1] + l2[1:n + 1] + l2[2:n + 2] + 1
        return np.column_stack([l1[:n], l2[:n], r])

    def swapped(self) -> "CountsView":
        """Counts with the ``-1`` and ``-2`` columns exchanged."""
        return CountsView(self.n, self.l2.copy(), self.l1.copy())


def _pad(a: np.ndarray, size: int) -> np.ndarray:
    if len(a) >= size:
        return a[:size].copy()
    return np.concatenate([a, np.zeros(size - len(a), dtype=a.dtype)])


class Criterion:
    """``theta -> l_n(theta)`` for one fixed set of counts.

    Distinct exponent triples and their multiplicities are computed once,
    so each evaluation costs one vectorised moment call.
    """

    def __init__(self, triples: np.ndarray):
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        self.n = len(triples)
        self.triples, self.mult = np.unique(triples, axis=0, return_counts=True)

    @classmethod
    def from_counts(cls, counts: CountsView) -> "Criterion":
        return cls(counts.exponent_triples())

    def __call__(self, family: FamilySpec, theta) -> float:
        if self.n == 0:
            return 0.0
        y = self.triples
        vals = family.log_moments(theta, y[:, 0], y[:, 1], y[:, 2])
        if np.isneginf(vals).any():
            return -math.inf
        return math.fsum((vals * self.mult).tolist())

    def many(self, family: FamilySpec, thetas) -> np.ndarray:
        """Criterion at each row of ``thetas``."""
        thetas = np.asarray(thetas, dtype=float).reshape(-1, family.dim)
        if self.n == 0:
            return np.zeros(len(thetas))
        y = self.triples
        out = np.empty(len(thetas))
        step = max(1, 2_000_000 // len(y))
        for i in range(0, len(thetas), step):
            vals = family.log_moments_many(thetas[i:i + step], y[:, 0], y[:, 1], y[:, 2])
            with np.errstate(invalid="ignore"):
                block = vals @ self.mult.astype(float)
            block[np.isneginf(vals).any(axis=1)] = -np.inf
            out[i:i + step] = block
        return out


def phi(family: FamilySpec, theta, y1: Sequence[int], y2: Sequence[int],
        y3: Sequence[int]) -> float:
    """Per-site term from the left-jump pairs at ``x``, ``x+1`` and ``x+2``."""
    r = y2[0] + y2[1] + y3[1] + 1
    return log_moment(family, theta, y1[0], y1[1], r)


def phi_z(family: FamilySpec, theta, z_prev: Sequence[int], z_next: Sequence[int]) -> float:
    """Per-generation term of the criterion written on the Z-process."""
    return log_moment(family, theta, z_next[0], z_next[1], sum(z_prev) + 1)


def loglik(counts: CountsView, family: FamilySpec, theta) -> float:
    """The criterion ``l_n(theta)``; ``-inf`` if any site term vanishes."""
    return Criterion.from_counts(counts)(family, theta)


def loglik_via_Z(z_traj: Sequence[Sequence[int]], family: FamilySpec, theta) -> float:
    """``sum_k phi_z(Z_k, Z_{k+1})`` over a trajectory ``Z_0 .. Z_n``."""
    z = np.asarray(z_traj, dtype=np.int64).reshape(-1, 3)
    if len(z) < 2:
        return 0.0
    triples = np.column_stack([z[1:, 0], z[1:, 1], z[:-1].sum(axis=1) + 1])
    return Criterion(triples)(family, theta)


def kernel_Q(family: FamilySpec, theta, x: Sequence[int], y: Sequence[int]) -> float:
    """Annealed one-generation transition probability ``Q_theta(x, y)``.

    Supported on ``y[2] == x[1]``: every type-2 parent leaves exactly one
    type-3 child and nobody else does.
    """
    x1, x2, x3 = (int(v) for v in x)
    y1, y2, y3 = (int(v) for v in y)
    if y3 != x2 or min(x1, x2, x3, y1, y2, y3) < 0:
        return 0.0
    m = x1 + x2 + x3
    lm = log_moment(family, theta, y1, y2, m + 1)
    if lm == -math.inf:
        return 0.0
    lc = gammaln(m + y1 + y2 + 1) - gammaln(y1 + 1) - gammaln(y2 + 1) - gammaln(m + 1)
    return math.exp(lc + lm)


def kernel_row(family: FamilySpec, theta, x: Sequence[int], max_total: int) -> dict:
    """``{y: Q(x, y)}`` over ``y1 + y2 <= max_total`` on the support."""
    m = int(sum(x))
    y1, y2 = np.meshgrid(np.arange(max_total + 1), np.arange(max_total + 1), indexing="ij")
    keep = (y1 + y2) <= max_total
    y1, y2 = y1[keep], y2[keep]
    lm = family.log_moments(theta, y1, y2, np.full(y1.shape, m + 1))
    lc = gammaln(m + y1 + y2 + 1) - gammaln(y1 + 1) - gammaln(y2 + 1) - gammaln(m + 1)
    p = np.exp(lc + lm)
    z3 = int(x[1])
    return {(a, b, z3): q for a, b, q in zip(y1.tolist(), y2.tolist(), p.tolist())}


def kernel_check(family: FamilySpec, theta, x: Sequence[int], samples: int, rng,
                 max_total: int = 500) -> tuple[float, float]:
    """Truncated row sum of ``Q(x, .)`` and the TV distance between that row
    and ``samples`` simulated annealed generations started from ``x``."""
    from .bpire import empirical_pmf, next_generation, tv_distance
    from .streams import UniformBuffer, as_generator

    rng = as_generator(rng)
    row = kernel_row(family, theta, x, max_total)
    row_sum = math.fsum(row.values())
    env_rng, step_rng = rng.spawn(2)
    laws = family.sample_laws(theta, samples, env_rng)
    u = UniformBuffer(step_rng)
    sims = [next_generation(x, site, u) for site in laws]
    tv, _ = tv_distance(empirical_pmf(sims), row)
    return row_sum, tv
