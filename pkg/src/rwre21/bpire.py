"""The 3-type branching process with immigration hidden in the walk.

Types count excursions below a site: type 1 is a jump ``i -> i-1``, type 2
a jump ``i -> i-2`` and type 3 a jump ``i+1 -> i-1`` seen from site ``i``.
Every individual at site ``i`` has, independently, ``a`` type-1 and ``b``
type-2 children with probability

    (a+b)! / (a! b!) * w_i(-1)**a * w_i(-2)**b * w_i(+1),

and a type-2 parent also leaves exactly one type-3 child. One type-1
immigrant arrives per generation.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .env import FamilySpec, SiteLaw
from .spectral import TAIL_TOL, V_MAX, invariant_dist
from .streams import UniformBuffer, as_generator, substream
from .walk import WalkRecord, simulate_to

STEP_WEIGHTS = (2, 1, 2)


class GenVector(NamedTuple):
    z1: int
    z2: int
    z3: int

    @property
    def size(self) -> int:
        return self.z1 + self.z2 + self.z3


ZERO = GenVector(0, 0, 0)


def _children(m: int, site: SiteLaw, u) -> tuple[int, int]:
    """Type-1 and type-2 children of ``m`` parents at ``site``.

    Each parent draws ``-1`` / ``-2`` / ``+1`` outcomes until its first
    ``+1``; the ``-1`` and ``-2`` outcomes are its children.
    """
    c1 = site.w_m1
    c2 = site.w_m1 + site.w_m2
    a = b = 0
    while m:
        v = u()
        if v < c1:
            a += 1
        elif v < c2:
            b += 1
        else:
            m -= 1
    return a, b


def offspring_sample(site: SiteLaw, parent_type: int, rng) -> GenVector:
    """Children of one individual of ``parent_type`` at ``site``."""
    if parent_type not in (1, 2, 3):
        raise ValueError("parent_type must be 1, 2 or 3")
    rng = as_generator(rng)
    a, b = _children(1, site, rng.random)
    return GenVector(a, b, 1 if parent_type == 2 else 0)


def offspring_pmf(site: SiteLaw, parent_type: int, v: Sequence[int]) -> float:
    """Probability that one ``parent_type`` individual has children ``v``."""
    a, b, c = (int(x) for x in v)
    if min(a, b, c) < 0 or c != (1 if parent_type == 2 else 0):
        return 0.0
    log_p = (math.lgamma(a + b + 1) - math.lgamma(a + 1) - math.lgamma(b + 1)
             + math.log(site.w_p1))
    for k, w in ((a, site.w_m1), (b, site.w_m2)):
        if k:
            if w == 0:
                return 0.0
            log_p += k * math.log(w)
    return math.exp(log_p)


def next_generation(z: Sequence[int], site: SiteLaw, u) -> GenVector:
    """One step of the Z recursion: ``1 + z1`` type-1, ``z2`` type-2 and
    ``z3`` type-3 parents reproduce at ``site``. ``u`` is a uniform source."""
    z1, z2, z3 = z
    a, b = _children(1 + z1 + z2 + z3, site, u)
    return GenVector(a, b, z2)


def simulate_Z(sites: Sequence[SiteLaw], rng) -> list[GenVector]:
    """Trajectory ``Z_0 = 0, Z_1, .., Z_n`` in the environment ``sites``
    (``sites[k-1]`` is the law used for generation ``k``)."""
    u = UniformBuffer(as_generator(rng), 1024)
    traj = [ZERO]
    for site in sites:
        traj.append(next_generation(traj[-1], site, u))
    return traj


def extract_U(rec: WalkRecord) -> list[GenVector]:
    """Generation vectors read off a walk record.

    Element ``j`` is ``U_{n-j}`` (so the list starts with ``U_n = 0``) and
    the list runs down to the lowest visited site; the first ``n + 1``
    entries correspond to ``Z_0 .. Z_n``.
    """
    if not rec.complete:
        raise ValueError("record is incomplete")
    out = []
    for i in range(rec.target, rec.site_lo - 1, -1):
        l1, l2, _ = rec.counts_at(i)
        out.append(GenVector(l1, l2, rec.counts_at(i + 1)[1]))
    return out


def tn_identity(rec: WalkRecord) -> bool:
    """Check ``T_n = n + sum_k U_k . (2, 1, 2)`` over all sites ``k``."""
    total = sum(u.z1 * 2 + u.z2 * 1 + u.z3 * 2 for u in extract_U(rec))
    return rec.t_n == rec.target + total


def write_generations(traj: Sequence[Sequence[int]]) -> str:
    """Columnar text ``generation z1 z2 z3``."""
    lines = ["generation\tz1\tz2\tz3"]
    lines += [f"{k}\t{v[0]}\t{v[1]}\t{v[2]}" for k, v in enumerate(traj)]
    return "\n".join(lines) + "\n"


def tv_distance(p: dict, q: dict, threshold: float = 0.0) -> tuple[float, float]:
    """Total variation between two pmfs given as dicts.

    Cells where both masses are at most ``threshold`` are left out; their
    combined mass (the larger of the two sides) is returned second.
    """
    keys = set(p) | set(q)
    tv = 0.0
    dropped_p = dropped_q = 0.0
    for k in keys:
        a = p.get(k, 0.0)
        b = q.get(k, 0.0)
        if a <= threshold and b <= threshold:
            dropped_p += a
            dropped_q += b
            continue
        tv += abs(a - b)
    return 0.5 * tv, max(dropped_p, dropped_q)


def empirical_pmf(samples) -> dict:
    c = Counter(tuple(s) for s in samples)
    total = sum(c.values())
    return {k: v / total for k, v in c.items()}


@dataclass
class DivergenceReport:
    """Per-generation TV distance between the laws of ``U_{n-k}`` and ``Z_k``."""

    n: int
    replicates: int
    tv: list[float]
    truncated_mass: list[float]

    @property
    def max_tv(self) -> float:
        return max(self.tv)

    def to_tsv(self) -> str:
        lines = ["k\ttv\ttruncated_mass"]
        lines += [f"{k}\t{t:.12g}\t{m:.12g}"
                  for k, (t, m) in enumerate(zip(self.tv, self.truncated_mass))]
        return "\n".join(lines) + "\n"


def u_z_distribution_check(family: FamilySpec, theta, n: int, replicates: int, seed: int,
                           threshold: float = 1e-4, step_cap: int | None = None
                           ) -> DivergenceReport:
    """Compare the annealed laws of the walk's U-process and of Z.

    Walk replicate ``i`` uses ``substream(seed, 0, i)`` and Z replicate
    ``i`` uses ``substream(seed, 1, i)``.
    """
    theta = family.check(theta)
    u_samples: list[list[GenVector]] = [[] for _ in range(n + 1)]
    z_samples: list[list[GenVector]] = [[] for _ in range(n + 1)]
    for i in range(replicates):
        rec = simulate_to(family, theta, n, step_cap, substream(seed, 0, i), keep_path=False)
        for k, u in enumerate(extract_U(rec)[:n + 1]):
            u_samples[k].append(u)
    for i in range(replicates):
        rng = substream(seed, 1, i)
        sites = family.sample_laws(theta, n, rng)
        for k, z in enumerate(simulate_Z(sites, rng)):
            z_samples[k].append(z)
    tv, dropped = [], []
    for k in range(n + 1):
        d, m = tv_distance(empirical_pmf(u_samples[k]), empirical_pmf(z_samples[k]), threshold)
        tv.append(d)
        dropped.append(m)
    return DivergenceReport(n, replicates, tv, dropped)


def annealed_zn_sample(family: FamilySpec, theta, n: int, env_samples: int,
                       runs_per_env: int, seed: int) -> list[GenVector]:
    """Draws of ``Z_n`` under the annealed law.

    Environment ``i`` is drawn from ``substream(seed, 0, i)`` and the same
    stream then drives ``runs_per_env`` independent trajectories in it.
    """
    theta = family.check(theta)
    out = []
    for i in range(env_samples):
        rng = substream(seed, 0, i)
        sites = family.sample_laws(theta, n, rng)
        out.extend(simulate_Z(sites, rng)[-1] for _ in range(runs_per_env))
    return out


def invariant_check(family: FamilySpec, theta, n: int, env_samples: int, seed: int,
                    runs_per_env: int = 20, table_samples: int | None = None,
                    v_max: int = V_MAX, tail_tol: float = TAIL_TOL) -> tuple[float, float]:
    """TV distance between the empirical annealed law of ``Z_n`` and the
    invariant table, plus the table mass inside ``|v| <= v_max``.

    The table uses ``substream(seed, 1)`` and ``table_samples``
    environments (default ``env_samples``).
    """
    draws = annealed_zn_sample(family, theta, n, env_samples, runs_per_env, seed)
    table = invariant_dist(family, theta, table_samples or env_samples, tail_tol, v_max,
                           substream(seed, 1))
    tv, _ = tv_distance(empirical_pmf(draws), table.as_dict())
    return tv, table.mass


def offspring_mean(site: SiteLaw, parent_type: int, draws: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Empirical mean and standard error of ``draws`` offspring vectors."""
    rng = as_generator(rng)
    u = UniformBuffer(rng)
    out = np.empty((draws, 3))
    extra = 1 if parent_type == 2 else 0
    for j in range(draws):
        a, b = _children(1, site, u)
        out[j] = (a, b, extra)
    return out.mean(axis=0), out.std(axis=0, ddof=1) / math.sqrt(draws)
