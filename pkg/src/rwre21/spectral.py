"""Random-matrix quantities of the walk and of its branching process.

With ``a = w(-1)/w(+1)`` and ``b = w(-2)/w(+1)`` each site carries

    A = [[a, b, 0],        B = [[a + b, b],
         [a, b, 1],             [1,     0]]
         [a, b, 0]]

``A`` is the offspring-mean matrix of the branching process and both
sequences share the same top Lyapunov exponent, whose sign decides
transience. All products are accumulated as row (or column) vectors, never
as full matrix products.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .env import FamilySpec, SiteLaw
from .errors import LyapunovOverflowError, NonBallisticError
from .streams import as_generator

STEP_WEIGHTS = (2.0, 1.0, 2.0)
TAIL_TOL = 1e-12
K_CAP = 10**5
V_MAX = 80

REGIMES = ("transient-right", "recurrent-band", "transient-left")


@dataclass(frozen=True)
class MatView:
    a3: np.ndarray
    b2: np.ndarray


def site_matrices(site: SiteLaw) -> MatView:
    a, b = site.a, site.b
    a3 = np.array([[a, b, 0.0], [a, b, 1.0], [a, b, 0.0]])
    b2 = np.array([[a + b, b], [1.0, 0.0]])
    return MatView(a3, b2)


def _ab(sites: Sequence[SiteLaw]) -> tuple[list[float], list[float]]:
    return [s.a for s in sites], [s.b for s in sites]


def _ab_from_array(arr: np.ndarray) -> tuple[list[float], list[float]]:
    with np.errstate(over="ignore"):
        a = arr[:, 1] / arr[:, 2]
        b = arr[:, 0] / arr[:, 2]
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise LyapunovOverflowError(
            "site ratio overflowed; restrict the family box away from w(+1) = 0")
    return a.tolist(), b.tolist()


# -- Lyapunov exponents ---------------------------------------------------

def lyapunov(family: FamilySpec, theta, steps: int, which: str = "A", rng=None,
             batches: int = 100, chunk: int = 1 << 16) -> tuple[float, float]:
    """Top Lyapunov exponent of the ``A`` (or ``B``) products.

    A unit row vector is pushed through ``steps`` i.i.d. matrices and
    renormalised every step; the estimate is the mean log growth and the
    standard error comes from ``batches`` batch means. A product that
    collapses to zero returns ``(-inf, 0.0)``.
    """
    if which not in ("A", "B"):
        raise ValueError("which must be 'A' or 'B'")
    if steps < batches:
        raise ValueError("steps must be at least the number of batches")
    rng = as_generator(rng)
    theta = family.check(theta)
    inc = np.empty(steps)
    if which == "A":
        v1 = v2 = v3 = 1.0 / 3.0
    else:
        v1 = v2 = 0.5
    log = math.log
    isfinite = math.isfinite
    done = 0
    while done < steps:
        m = min(chunk, steps - done)
        a_list, b_list = _ab_from_array(family.sample_array(theta, m, rng))
        buf = [0.0] * m
        if which == "A":
            for j in range(m):
                a = a_list[j]
                b = b_list[j]
                s = v1 + v2 + v3
                n1 = a * s
                n2 = b * s
                n3 = v2
                norm = n1 + n2 + n3
                if norm == 0.0:
                    return -math.inf, 0.0
                if not isfinite(norm):
                    raise LyapunovOverflowError("product overflowed; restrict the family box")
                buf[j] = log(norm)
                v1 = n1 / norm
                v2 = n2 / norm
                v3 = n3 / norm
        else:
            for j in range(m):
                a = a_list[j]
                b = b_list[j]
                n1 = (a + b) * v1 + v2
                n2 = b * v1
                norm = n1 + n2
                if norm == 0.0:
                    return -math.inf, 0.0
                if not isfinite(norm):
                    raise LyapunovOverflowError("product overflowed; restrict the family box")
                buf[j] = log(norm)
                v1 = n1 / norm
                v2 = n2 / norm
        inc[done:done + m] = buf
        done += m
    gamma = math.fsum(inc.tolist()) / steps
    means = np.array([blk.mean() for blk in np.array_split(inc, batches)])
    stderr = float(means.std(ddof=1) / math.sqrt(batches))
    return gamma, stderr


def classify(gamma_hat: float, stderr: float) -> str:
    """Regime from a Lyapunov estimate at three standard errors."""
    if gamma_hat + 3 * stderr < 0:
        return "transient-right"
    if gamma_hat - 3 * stderr > 0:
        return "transient-left"
    return "recurrent-band"


def ab_bridge_check(sites: Sequence[SiteLaw], rtol: float = 1e-10) -> bool:
    """Check ``e1 A_0..A_{k-1} e2' == e1 B_0..B_{k-1} e2'``."""
    if len(sites) < 1:
        raise ValueError("need at least one site")
    v1, v2, v3 = 1.0, 0.0, 0.0
    w1, w2 = 1.0, 0.0
    for s in sites:
        a, b = s.a, s.b
        t = v1 + v2 + v3
        v1, v2, v3 = a * t, b * t, v2
        w1, w2 = (a + b) * w1 + w2, b * w1
    return abs(v2 - w2) <= rtol * max(abs(v2), abs(w2)) or v2 == w2


# -- S-sums and the law of Z_n --------------------------------------------

@dataclass(frozen=True)
class SSums:
    """``s_i = e1 (sum of products) e_i'`` for the three types."""

    s1: float
    s2: float
    s3: float

    @property
    def total(self) -> float:
        return 1.0 + self.s1 + self.s2 + self.s3

    @property
    def probs(self) -> tuple[float, float, float, float]:
        """``(s1, s2, s3, 1) / total``: the parameters of the geometric law."""
        t = self.total
        return self.s1 / t, self.s2 / t, self.s3 / t, 1.0 / t


def s_sums(sites: Sequence[SiteLaw], orientation: str = "reversed") -> SSums:
    """S-sums over ``sites = (w_1 .. w_n)``.

    ``reversed`` sums the products ``A_j A_{j+1} .. A_n`` over ``j``;
    ``forward`` sums ``A_1 .. A_j``. Both are O(n) row-vector passes.
    """
    if len(sites) < 1:
        raise ValueError("need at least one site")
    if orientation == "reversed":
        # y <- (y + e1) A_j accumulates sum_j e1 A_j .. A_n
        y1 = y2 = y3 = 0.0
        for s in sites:
            t = y1 + 1.0 + y2 + y3
            y1, y2, y3 = s.a * t, s.b * t, y2
        out = (y1, y2, y3)
    elif orientation == "forward":
        p1, p2, p3 = 1.0, 0.0, 0.0
        y1 = y2 = y3 = 0.0
        for s in sites:
            t = p1 + p2 + p3
            p1, p2, p3 = s.a * t, s.b * t, p2
            y1 += p1
            y2 += p2
            y3 += p3
        out = (y1, y2, y3)
    else:
        raise ValueError("orientation must be 'forward' or 'reversed'")
    if not all(math.isfinite(v) for v in out):
        raise LyapunovOverflowError("S-sum overflowed (gamma_A >= 0 environment?)")
    return SSums(*out)


def _safe_log(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), -1e300)


def geometric_pmf(probs: tuple[float, float, float, float], v: Sequence[int]) -> float:
    """Multivariate geometric pmf with success probability ``probs[3]``."""
    a, b, c = (int(x) for x in v)
    if min(a, b, c) < 0:
        return 0.0
    lp = _safe_log(probs)
    val = (gammaln(a + b + c + 1) - gammaln(a + 1) - gammaln(b + 1) - gammaln(c + 1)
           + a * lp[0] + b * lp[1] + c * lp[2] + lp[3])
    return float(np.exp(val))


def zn_pmf(sites: Sequence[SiteLaw], v: Sequence[int]) -> float:
    """Quenched ``P(Z_n = v)`` for the environment ``(w_1 .. w_n)``."""
    return geometric_pmf(s_sums(sites, "reversed").probs, v)


# -- invariant law --------------------------------------------------------

def s_hat(family: FamilySpec, theta, rng, tail_tol: float = TAIL_TOL,
          k_cap: int = K_CAP, chunk: int = 64,
          orientation: str = "reversed") -> tuple[SSums, bool]:
    """Infinite S-sum for one freshly drawn environment.

    ``reversed`` is the almost-sure limit of ``sum_k e1 B_k .. B_1`` (each
    new matrix enters on the left). Relabelling i.i.d. sites turns the
    finite sum behind ``Z_n`` into exactly this form, so it carries the
    limit law of ``Z_n``. ``forward`` sums ``e1 B_1 .. B_k`` instead; for
    non-commuting matrices the two differ in law but share their mean.

    Stops once the running product has l1 norm below ``tail_tol``; the
    flag is True when ``k_cap`` terms were used instead.
    """
    if orientation not in ("reversed", "forward"):
        raise ValueError("orientation must be 'forward' or 'reversed'")
    # rows of the running product; forward only needs the first one
    r1 = [1.0, 0.0, 0.0]
    r2 = [0.0, 1.0, 0.0]
    r3 = [0.0, 0.0, 1.0]
    y1 = y2 = y3 = 0.0
    k = 0
    while k < k_cap:
        a_list, b_list = _ab_from_array(family.sample_array(theta, chunk, rng))
        for a, b in zip(a_list, b_list):
            if orientation == "forward":
                t = r1[0] + r1[1] + r1[2]
                r1 = [a * t, b * t, r1[1]]
                norm = r1[0] + r1[1] + r1[2]
            else:
                u = [a * r1[i] + b * r2[i] for i in range(3)]
                r2 = [u[i] + r3[i] for i in range(3)]
                r1 = r3 = u
                norm = 2.0 * (u[0] + u[1] + u[2]) + r2[0] + r2[1] + r2[2]
            y1 += r1[0]
            y2 += r1[1]
            y3 += r1[2]
            k += 1
            if norm < tail_tol:
                return SSums(y1, y2, y3), False
            if k >= k_cap:
                break
    if not math.isfinite(y1 + y2 + y3):
        raise LyapunovOverflowError("S-sum overflowed (gamma_A >= 0 environment?)")
    return SSums(y1, y2, y3), True


def cells_up_to(v_max: int) -> np.ndarray:
    """All ``(a, b, c)`` with ``a + b + c <= v_max`` in lexicographic order."""
    r = np.arange(v_max + 1)
    a, b, c = np.meshgrid(r, r, r, indexing="ij")
    keep = (a + b + c) <= v_max
    return np.column_stack([a[keep], b[keep], c[keep]])


@dataclass
class InvariantTable:
    cells: np.ndarray
    prob: np.ndarray
    stderr: np.ndarray
    env_samples: int
    cap_hits: int

    @property
    def cap_warning(self) -> bool:
        """True when more than 1% of environments hit the truncation cap."""
        return self.cap_hits > 0.01 * self.env_samples

    @property
    def mass(self) -> float:
        return float(self.prob.sum())

    def as_dict(self) -> dict:
        return {tuple(c): p for c, p in zip(self.cells.tolist(), self.prob.tolist())}

    def to_tsv(self) -> str:
        lines = ["z1\tz2\tz3\tprob\tstderr"]
        for (a, b, c), p, s in zip(self.cells.tolist(), self.prob.tolist(), self.stderr.tolist()):
            lines.append(f"{a}\t{b}\t{c}\t{p:.12g}\t{s:.12g}")
        return "\n".join(lines) + "\n"


def mixed_geometric_table(probs: np.ndarray, cells: np.ndarray,
                          budget: int = 4_000_000) -> tuple[np.ndarray, np.ndarray]:
    """Average of geometric pmfs over rows of ``probs``, on ``cells``.

    Returns the mean and its Monte Carlo standard error per cell.
    """
    probs = np.asarray(probs, dtype=float).reshape(-1, 4)
    cells = np.asarray(cells)
    m = len(probs)
    lp = _safe_log(probs)
    lcoef = (gammaln(cells.sum(axis=1) + 1) - gammaln(cells + 1).sum(axis=1))
    cf = cells.astype(float)
    acc = np.zeros(len(cells))
    acc2 = np.zeros(len(cells))
    step = max(1, budget // max(len(cells), 1))
    for i in range(0, m, step):
        block = lp[i:i + step]
        logp = cf @ block[:, :3].T + lcoef[:, None] + block[:, 3][None, :]
        val = np.exp(logp)
        acc += val.sum(axis=1)
        acc2 += (val * val).sum(axis=1)
    mean = acc / m
    if m > 1:
        var = np.maximum(acc2 / m - mean * mean, 0.0) * m / (m - 1)
        se = np.sqrt(var / m)
    else:
        se = np.zeros_like(mean)
    return mean, se


def invariant_dist(family: FamilySpec, theta, env_samples: int, tail_tol: float = TAIL_TOL,
                   v_max: int = V_MAX, rng=None, k_cap: int = K_CAP,
                   orientation: str = "reversed") -> InvariantTable:
    """Limit law of ``Z_n`` as a table over ``|v| <= v_max``.

    Each sampled environment contributes the geometric law with parameters
    from its infinite S-sum (see :func:`s_hat` for ``orientation``); the
    table is their average. The point family has a single environment, so
    one sample is used.
    """
    rng = as_generator(rng)
    theta = family.check(theta)
    m = 1 if family.kind == "point" else int(env_samples)
    probs = np.empty((m, 4))
    hits = 0
    for i in range(m):
        s, hit = s_hat(family, theta, rng, tail_tol, k_cap, orientation=orientation)
        hits += hit
        probs[i] = s.probs
    cells = cells_up_to(v_max)
    mean, se = mixed_geometric_table(probs, cells)
    return InvariantTable(cells, mean, se, m, hits)


# -- speed and hitting times ----------------------------------------------

def pi_samples(family: FamilySpec, theta, env_samples: int, tail_tol: float = TAIL_TOL,
               rng=None, k_cap: int = K_CAP, chunk: int = 64) -> np.ndarray:
    """Quenched expected time to reach 1, one value per sampled environment.

    Each value is ``1 + sum_k e1 A_1 .. A_k (2,1,2)'`` for sites drawn
    afresh, truncated once the running product is below ``tail_tol``.
    """
    rng = as_generator(rng)
    theta = family.check(theta)
    m = 1 if family.kind == "point" else int(env_samples)
    out = np.empty(m)
    for i in range(m):
        p1, p2, p3 = 1.0, 0.0, 0.0
        total = 1.0
        k = 0
        converged = False
        while k < k_cap and not converged:
            a_list, b_list = _ab_from_array(family.sample_array(theta, chunk, rng))
            for a, b in zip(a_list, b_list):
                t = p1 + p2 + p3
                p1, p2, p3 = a * t, b * t, p2
                total += 2.0 * p1 + p2 + 2.0 * p3
                k += 1
                if p1 + p2 + p3 < tail_tol:
                    converged = True
                    break
                if k >= k_cap:
                    break
        if not converged:
            raise NonBallisticError(
                f"partial sums did not settle within {k_cap} terms; "
                "expected hitting time looks infinite at this theta")
        out[i] = total
    return out


def speed(family: FamilySpec, theta, env_samples: int, tail_tol: float = TAIL_TOL,
          rng=None, k_cap: int = K_CAP) -> tuple[float, float]:
    """Speed ``1 / E[pi]`` and its delta-method standard error."""
    pis = pi_samples(family, theta, env_samples, tail_tol, rng, k_cap)
    mean = float(pis.mean())
    se = float(pis.std(ddof=1) / math.sqrt(len(pis))) if len(pis) > 1 else 0.0
    return 1.0 / mean, se / mean**2


def expected_hitting(env: Mapping[int, SiteLaw], n: int, depth: int = 1000) -> float:
    """Quenched ``E T_n`` in the environment ``env``.

    Uses the column recursion ``c_i = A_i (g + c_{i-1})``, ``g = (2,1,2)'``,
    started at site ``-depth`` with ``c = 0`` (sites further left ignored).
    """
    c1 = c2 = c3 = 0.0
    total = float(n)
    for i in range(-depth, n):
        s = env[i]
        a, b = s.a, s.b
        x1, x2, x3 = 2.0 + c1, 1.0 + c2, 2.0 + c3
        base = a * x1 + b * x2
        c1, c2, c3 = base, base + x3, base
        if i >= 0:
            total += c1
    if not math.isfinite(total):
        raise LyapunovOverflowError("hitting-time sum overflowed")
    return total
