"""Quenched simulation of the (2,1) walk and its jump counts.

The environment is drawn lazily: a site law is sampled the first time the
walk stands on a site and memoised afterwards, so a finite run only ever
materialises the visited range.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .env import FamilySpec, SiteLaw
from .errors import BudgetExceededError
from .streams import UniformBuffer, as_generator

JUMPS = (-2, -1, 1)
PATH_CAP = 10**7
ENV_BLOCK = 256


class Environment:
    """Lazily sampled i.i.d. environment ``site -> SiteLaw``.

    With ``family=None`` the environment is fixed: only the laws passed in
    ``laws`` exist, other sites get ``default`` or raise ``KeyError``.
    """

    def __init__(self, family: FamilySpec | None = None, theta=None, rng=None,
                 laws: Mapping[int, SiteLaw] | None = None, default: SiteLaw | None = None):
        self.family = family
        self.theta = family.check(theta) if family is not None else None
        self._rng = as_generator(rng) if family is not None else None
        self.laws: dict[int, SiteLaw] = dict(laws or {})
        self.default = default
        if family is not None and family.kind == "point":
            self.default = family.point_law(self.theta)
        self._pending: list[SiteLaw] = []

    @classmethod
    def fixed(cls, laws: Mapping[int, SiteLaw]) -> "Environment":
        return cls(laws=laws)

    @classmethod
    def constant(cls, law: SiteLaw) -> "Environment":
        return cls(default=law)

    def __getitem__(self, x: int) -> SiteLaw:
        law = self.laws.get(x)
        if law is None:
            if self.default is not None:
                law = self.default
            elif self.family is None:
                raise KeyError(x)
            else:
                # laws are drawn in blocks and assigned in order of first visit
                if not self._pending:
                    self._pending = self.family.sample_laws(self.theta, ENV_BLOCK, self._rng)
                    self._pending.reverse()
                law = self._pending.pop()
            self.laws[x] = law
        return law


@dataclass
class WalkRecord:
    """A walk run up to the first hit of ``target``.

    ``l1``, ``l2`` and ``r`` hold the per-site counts of jumps to ``x-1``,
    ``x-2`` and ``x+1`` for sites ``site_lo .. target + 2`` (index
    ``x - site_lo``); entries at and above ``target`` are zero.
    """

    target: int
    t_n: int | None
    site_lo: int
    l1: np.ndarray
    l2: np.ndarray
    r: np.ndarray
    path: np.ndarray | None = None
    env_used: dict[int, SiteLaw] = field(default_factory=dict)
    seed: int | None = None

    @property
    def complete(self) -> bool:
        return self.t_n is not None

    @property
    def visited(self) -> list[int]:
        if self.path is not None:
            return sorted(set(self.path.tolist()))
        tot = self.l1 + self.l2 + self.r
        sites = [self.site_lo + i for i in np.flatnonzero(tot).tolist()]
        if self.complete:
            sites.append(self.target)
        return sites

    def counts_at(self, x: int) -> tuple[int, int, int]:
        i = x - self.site_lo
        if 0 <= i < len(self.l1):
            return int(self.l1[i]), int(self.l2[i]), int(self.r[i])
        return 0, 0, 0

    def counts_view(self):
        """Left-jump counts ``L_x`` for ``x = 0 .. target + 1``."""
        from .likelihood import CountsView

        i0 = -self.site_lo
        n = self.target
        return CountsView(n, self.l1[i0:i0 + n + 2].copy(), self.l2[i0:i0 + n + 2].copy())

    def recount(self) -> dict[int, tuple[int, int, int]]:
        """Counts rebuilt from the stored path."""
        if self.path is None:
            raise ValueError("path was not stored")
        out: dict[int, list[int]] = {}
        p = self.path
        for x, d in zip(p[:-1].tolist(), np.diff(p).tolist()):
            c = out.setdefault(x, [0, 0, 0])
            c[{-1: 0, -2: 1, 1: 2}[d]] += 1
        return {x: tuple(c) for x, c in out.items()}

    # -- columnar text export ---------------------------------------------
    def to_tsv(self) -> str:
        buf = io.StringIO()
        seed = "NA" if self.seed is None else str(self.seed)
        t_n = "NA" if self.t_n is None else str(self.t_n)
        buf.write(f"# n={self.target}\tt_n={t_n}\tseed={seed}\n")
        buf.write("site\tl1\tl2\tr\n")
        for x in self.visited:
            l1, l2, r = self.counts_at(x)
            buf.write(f"{x}\t{l1}\t{l2}\t{r}\n")
        return buf.getvalue()

    def write_tsv(self, path) -> None:
        Path(path).write_text(self.to_tsv())

    def path_tsv(self) -> str:
        if self.path is None:
            raise ValueError("path was not stored")
        lines = ["t\tx"] + [f"{t}\t{x}" for t, x in enumerate(self.path.tolist())]
        return "\n".join(lines) + "\n"


def read_counts(path) -> WalkRecord:
    """Read a counts file written by :meth:`WalkRecord.write_tsv`."""
    text = Path(path).read_text().splitlines()
    meta = {}
    rows = []
    for line in text:
        if not line.strip():
            continue
        if line.startswith("#"):
            for part in line[1:].split():
                k, _, v = part.partition("=")
                meta[k] = v
            continue
        if line.startswith("site"):
            continue
        rows.append([int(v) for v in line.split("\t")])
    if "n" not in meta:
        raise ValueError(f"{path}: missing '# n=...' header")
    n = int(meta["n"])
    t_n = None if meta.get("t_n", "NA") == "NA" else int(meta["t_n"])
    seed = None if meta.get("seed", "NA") == "NA" else int(meta["seed"])
    arr = np.array(rows, dtype=np.int64).reshape(-1, 4)
    lo = min(int(arr[:, 0].min()) if len(arr) else 0, 0)
    size = n + 3 - lo
    l1, l2, r = (np.zeros(size, dtype=np.int64) for _ in range(3))
    for x, a, b, c in arr.tolist():
        if x - lo >= size:
            raise ValueError(f"{path}: site {x} beyond target {n}")
        l1[x - lo], l2[x - lo], r[x - lo] = a, b, c
    return WalkRecord(n, t_n, lo, l1, l2, r, seed=seed)


def read_path(path, target: int | None = None, seed: int | None = None) -> WalkRecord:
    """Rebuild a record from a ``t<TAB>x`` path file.

    The target defaults to the last position; the path is cut at its first
    hit of the target.
    """
    xs = []
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.startswith(("t", "#")):
            continue
        xs.append(int(line.split("\t")[-1]))
    return record_from_path(xs, target, seed=seed)


def record_from_path(xs, target: int | None = None, seed: int | None = None) -> WalkRecord:
    """Build a complete :class:`WalkRecord` from an explicit path."""
    xs = [int(v) for v in xs]
    if not xs or xs[0] != 0:
        raise ValueError("path must start at 0")
    if target is None:
        target = xs[-1]
    if target < 1:
        raise ValueError("target must be >= 1")
    try:
        t_n = xs.index(target)
    except ValueError:
        raise ValueError(f"path never reaches {target}") from None
    xs = xs[:t_n + 1]
    diffs = np.diff(xs)
    if not np.isin(diffs, JUMPS).all():
        raise ValueError("path has a jump outside {-2, -1, +1}")
    lo = min(min(xs), 0)
    size = target + 3 - lo
    c = np.zeros((3, size), dtype=np.int64)
    col = {-1: 0, -2: 1, 1: 2}
    for x, d in zip(xs[:-1], diffs.tolist()):
        c[col[d], x - lo] += 1
    return WalkRecord(target, t_n, lo, c[0], c[1], c[2],
                      path=np.asarray(xs, dtype=np.int64), seed=seed)


def step(site: SiteLaw, rng) -> int:
    """One quenched jump from a site with law ``site``."""
    u = as_generator(rng).random()
    if u < site.w_m2:
        return -2
    if u < site.w_m2 + site.w_m1:
        return -1
    return 1


def _run(env: Environment, u: UniformBuffer, target, max_steps: int, keep_path: bool):
    """Core loop. Stops on the first hit of ``target`` (if not None) or
    after ``max_steps`` steps. Returns (position, steps, counts, path)."""
    thr: dict[int, tuple[float, float]] = {}
    counts: dict[int, list[int]] = {}
    path = [0] if keep_path else None
    x = 0
    t = 0
    stop = target if target is not None else None
    while t < max_steps:
        if x == stop:
            break
        th = thr.get(x)
        if th is None:
            law = env[x]
            th = (law.w_m2, law.w_m2 + law.w_m1)
            thr[x] = th
            counts[x] = [0, 0, 0]
        v = u()
        c = counts[x]
        if v < th[0]:
            c[1] += 1
            x -= 2
        elif v < th[1]:
            c[0] += 1
            x -= 1
        else:
            c[2] += 1
            x += 1
        t += 1
        if path is not None:
            path.append(x)
            if len(path) > PATH_CAP:
                path = None
    return x, t, counts, path


def _make_record(target, t_n, counts, path, env, seed) -> WalkRecord:
    lo = min(min(counts, default=0), 0)
    size = target + 3 - lo
    arr = np.zeros((3, size), dtype=np.int64)
    for x, (a, b, c) in counts.items():
        if x - lo < size:
            arr[:, x - lo] = (a, b, c)
    return WalkRecord(target, t_n, lo, arr[0], arr[1], arr[2],
                      path=None if path is None else np.asarray(path, dtype=np.int64),
                      env_used=dict(env.laws), seed=seed)


def simulate_to(family: FamilySpec | None, theta, target: int, step_cap: int | None = None,
                rng=None, *, env: Environment | None = None, keep_path: bool = True,
                seed: int | None = None) -> WalkRecord:
    """Run the walk from 0 until it first hits ``target``.

    Parameters
    ----------
    family, theta
        Environment law. Ignored when ``env`` is given.
    target : int
        Site ``n >= 1`` to reach.
    step_cap : int, optional
        Step budget, default ``1000 * target``.
    rng : numpy Generator or seed
        Split into an environment stream and a step stream, so the
        environment does not depend on how the walk moves through it.
    env : Environment, optional
        Use (and extend) this environment instead of a fresh one.

    Raises
    ------
    BudgetExceededError
        If the budget runs out first; the partial record is attached.
    """
    if target < 1:
        raise ValueError("target must be >= 1")
    if step_cap is None:
        step_cap = 1000 * target
    if step_cap < target:
        raise ValueError("step_cap must be >= target")
    rng = as_generator(rng)
    env_rng, step_rng = rng.spawn(2)
    if env is None:
        env = Environment(family, theta, env_rng)
    x, t, counts, path = _run(env, UniformBuffer(step_rng), target, step_cap, keep_path)
    if x != target:
        partial = _make_record(target, None, counts, path, env, seed)
        raise BudgetExceededError(
            f"walk did not reach {target} within {step_cap} steps (at {x})", partial)
    return _make_record(target, t, counts, path, env, seed)


def run_steps(family: FamilySpec | None, theta, steps: int, rng=None, *,
              env: Environment | None = None) -> int:
    """Position ``X_t`` after exactly ``steps`` steps (no path kept)."""
    rng = as_generator(rng)
    env_rng, step_rng = rng.spawn(2)
    if env is None:
        env = Environment(family, theta, env_rng)
    x, _, _, _ = _run(env, UniformBuffer(step_rng), None, steps, False)
    return x


def count_identity_check(rec: WalkRecord) -> bool:
    """Check ``R_x = L_{x+1,1} + L_{x+1,2} + L_{x+2,2} + 1`` for ``0 <= x < n``."""
    if not rec.complete:
        raise ValueError("record is incomplete")
    for x in range(rec.target):
        r = rec.counts_at(x)[2]
        a1, a2, _ = rec.counts_at(x + 1)
        b2 = rec.counts_at(x + 2)[1]
        if r != a1 + a2 + b2 + 1:
            return False
    return True
