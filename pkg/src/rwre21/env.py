"""Parametric environment families and their moment integrals.

A site law is the jump distribution ``(w(-2), w(-1), w(+1))`` of one site.
Each family maps a parameter point ``theta`` in a compact box to a law on
site laws, and everything the likelihood needs reduces to

    log E_theta[ w(-1)**y1 * w(-2)**y2 * w(+1)**r ].

Three families are shipped:

``dirichlet``
    ``(w(-1), w(-2), w(+1)) ~ Dirichlet(theta_1, theta_2, theta_3)``;
    moments in closed form through log-gamma.
``point``
    a single deterministic site law with ``theta = (w(-1), w(-2))``.
``finite-mixture``
    two fixed atoms, the first one drawn with probability ``theta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, xlogy

from .errors import ParameterDomainError

KINDS = ("dirichlet", "point", "finite-mixture")
MIXTURE_EPS = 0.01
DIRICHLET_MIN = 0.1

DEFAULT_ATOMS = ((0.05, 0.15, 0.8), (0.2, 0.2, 0.6))

DEFAULT_BOXES = {
    "dirichlet": ((0.1, 20.0),) * 3,
    "point": ((0.0, 0.45), (0.0, 0.45)),
    "finite-mixture": ((MIXTURE_EPS, 1.0 - MIXTURE_EPS),),
}


@dataclass(frozen=True, slots=True)
class SiteLaw:
    """Jump probabilities of one site: to ``x-2``, ``x-1`` and ``x+1``."""

    w_m2: float
    w_m1: float
    w_p1: float

    def __post_init__(self):
        if min(self.w_m2, self.w_m1, self.w_p1) < 0:
            raise ParameterDomainError(f"negative jump probability in {self}")
        if abs(self.w_m2 + self.w_m1 + self.w_p1 - 1.0) > 1e-12:
            raise ParameterDomainError(f"site law {self} does not sum to 1")
        if self.w_p1 <= 0:
            raise ParameterDomainError("w_p1 must be positive")

    @property
    def a(self) -> float:
        """Ratio ``w(-1) / w(+1)``."""
        return self.w_m1 / self.w_p1

    @property
    def b(self) -> float:
        """Ratio ``w(-2) / w(+1)``."""
        return self.w_m2 / self.w_p1

    @classmethod
    def from_probs(cls, w_m2: float, w_m1: float, w_p1: float) -> "SiteLaw":
        """Build a site law, renormalising away floating-point drift."""
        s = w_m2 + w_m1 + w_p1
        return cls(w_m2 / s, w_m1 / s, w_p1 / s)


def _parse_box(box, dim: int) -> tuple[tuple[float, float], ...]:
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    if len(box) != dim:
        raise ParameterDomainError(f"box must have {dim} coordinates, got {len(box)}")
    for lo, hi in box:
        if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
            raise ParameterDomainError(f"invalid box interval [{lo}, {hi}]")
    return box


@dataclass(frozen=True)
class FamilySpec:
    """A parametric family ``nu_theta`` together with its parameter box."""

    kind: str
    box: tuple[tuple[float, float], ...]
    atoms: tuple[SiteLaw, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterDomainError(f"unknown family kind {self.kind!r}")
        dim = {"dirichlet": 3, "point": 2, "finite-mixture": 1}[self.kind]
        object.__setattr__(self, "box", _parse_box(self.box, dim))
        if self.kind == "dirichlet":
            if self.atoms:
                raise ParameterDomainError("dirichlet family takes no atoms")
            if min(lo for lo, _ in self.box) < DIRICHLET_MIN:
                raise ParameterDomainError(
                    f"dirichlet box must stay above {DIRICHLET_MIN} in every coordinate")
        elif self.kind == "point":
            if self.atoms:
                raise ParameterDomainError("point family takes no atoms")
            (lo1, hi1), (lo2, hi2) = self.box
            if lo1 < 0 or lo2 < 0:
                raise ParameterDomainError("point box must be nonnegative")
            if hi1 + hi2 >= 1:
                raise ParameterDomainError("point box must keep w(-1) + w(-2) < 1")
        else:
            if len(self.atoms) != 2:
                raise ParameterDomainError("finite-mixture needs exactly two atoms")
            atoms = tuple(a if isinstance(a, SiteLaw) else SiteLaw(*a) for a in self.atoms)
            if atoms[0] == atoms[1]:
                raise ParameterDomainError("mixture atoms must differ")
            object.__setattr__(self, "atoms", atoms)
            (lo, hi), = self.box
            if lo < MIXTURE_EPS or hi > 1 - MIXTURE_EPS:
                raise ParameterDomainError(
                    f"mixture box must lie in [{MIXTURE_EPS}, {1 - MIXTURE_EPS}]")

    # -- constructors -----------------------------------------------------
    @classmethod
    def dirichlet(cls, box=None) -> "FamilySpec":
        return cls("dirichlet", box or DEFAULT_BOXES["dirichlet"])

    @classmethod
    def point(cls, box=None) -> "FamilySpec":
        return cls("point", box or DEFAULT_BOXES["point"])

    @classmethod
    def mixture(cls, atoms: Sequence, box=None) -> "FamilySpec":
        return cls("finite-mixture", box or DEFAULT_BOXES["finite-mixture"], tuple(atoms))

    @property
    def dim(self) -> int:
        return len(self.box)

    def check(self, theta) -> tuple[float, ...]:
        """Return ``theta`` as a tuple of floats, or raise if outside the box."""
        t = tuple(float(v) for v in np.atleast_1d(np.asarray(theta, dtype=float)))
        if len(t) != self.dim:
            raise ParameterDomainError(f"{self.kind} expects {self.dim} coordinates, got {len(t)}")
        for v, (lo, hi) in zip(t, self.box):
            if not lo <= v <= hi:
                raise ParameterDomainError(f"theta={t} outside box {self.box}")
        return t

    def point_law(self, theta) -> SiteLaw:
        """The site law of the point family at ``theta``."""
        w_m1, w_m2 = self.check(theta)
        return SiteLaw(w_m2, w_m1, 1.0 - w_m1 - w_m2)

    # -- sampling ---------------------------------------------------------
    def sample(self, theta, rng: np.random.Generator) -> SiteLaw:
        """One i.i.d. draw from ``nu_theta``."""
        return sample_site(self, theta, rng)

    def sample_array(self, theta, size: int, rng: np.random.Generator) -> np.ndarray:
        """``size`` draws as an array with columns ``(w_m2, w_m1, w_p1)``."""
        t = self.check(theta)
        if self.kind == "point":
            law = self.point_law(t)
            return np.tile([law.w_m2, law.w_m1, law.w_p1], (size, 1))
        if self.kind == "finite-mixture":
            pick = rng.random(size) < t[0]
            a1, a2 = (np.array([s.w_m2, s.w_m1, s.w_p1]) for s in self.atoms)
            return np.where(pick[:, None], a1, a2)
        x = rng.dirichlet(t, size=size)
        bad = x[:, 2] <= 0
        while bad.any():
            x[bad] = rng.dirichlet(t, size=int(bad.sum()))
            bad = x[:, 2] <= 0
        return x[:, [1, 0, 2]]

    def sample_laws(self, theta, size: int, rng: np.random.Generator) -> list[SiteLaw]:
        return [SiteLaw.from_probs(*row) for row in self.sample_array(theta, size, rng).tolist()]

    # -- moments ----------------------------------------------------------
    def log_moments(self, theta, y1, y2, r) -> np.ndarray:
        """Vectorised :func:`log_moment` over arrays of exponents."""
        t = np.array(self.check(theta))
        return self._log_moments(t[None, :], *_exponents(y1, y2, r))[0]

    def log_moments_many(self, thetas, y1, y2, r) -> np.ndarray:
        """Moments for many parameter points at once: shape ``(G, K)``."""
        t = np.asarray(thetas, dtype=float).reshape(-1, self.dim)
        lo = np.array([b[0] for b in self.box])
        hi = np.array([b[1] for b in self.box])
        if ((t < lo) | (t > hi)).any():
            raise ParameterDomainError(f"parameter points outside box {self.box}")
        return self._log_moments(t, *_exponents(y1, y2, r))

    def _log_moments(self, t: np.ndarray, y1, y2, r) -> np.ndarray:
        y1, y2, r = y1[None, :], y2[None, :], r[None, :]
        if self.kind == "dirichlet":
            t1, t2, t3 = (t[:, i:i + 1] for i in range(3))
            tot = t1 + t2 + t3
            return (gammaln(t1 + y1) + gammaln(t2 + y2) + gammaln(t3 + r)
                    - gammaln(tot + y1 + y2 + r)
                    - (gammaln(t1) + gammaln(t2) + gammaln(t3) - gammaln(tot)))
        if self.kind == "point":
            w_m1, w_m2 = t[:, 0:1], t[:, 1:2]
            return xlogy(y1, w_m1) + xlogy(y2, w_m2) + xlogy(r, 1.0 - w_m1 - w_m2)
        w = t[:, 0:1]
        m1 = _atom_log_moment(self.atoms[0], y1, y2, r)
        m2 = _atom_log_moment(self.atoms[1], y1, y2, r)
        return np.logaddexp(np.log(w) + m1, np.log1p(-w) + m2)

    # -- key/value serialisation -----------------------------------------
    def to_items(self) -> dict[str, str]:
        items = {
            "kind": self.kind,
            "box": ", ".join(f"{lo!r}:{hi!r}" for lo, hi in self.box),
        }
        if self.atoms:
            items["atoms"] = "; ".join(
                f"{s.w_m2!r},{s.w_m1!r},{s.w_p1!r}" for s in self.atoms)
        return items

    @classmethod
    def from_items(cls, items: dict[str, str]) -> "FamilySpec":
        """Inverse of :meth:`to_items`; ``box`` and ``atoms`` are optional."""
        try:
            kind = items["kind"].strip()
        except KeyError:
            raise ParameterDomainError("family.kind is required") from None
        box = None
        if "box" in items:
            box = []
            for part in items["box"].split(","):
                lo, hi = part.split(":")
                box.append((float(lo), float(hi)))
        atoms: tuple = ()
        if "atoms" in items:
            atoms = tuple(SiteLaw(*(float(v) for v in part.split(",")))
                          for part in items["atoms"].split(";"))
        if kind not in DEFAULT_BOXES:
            raise ParameterDomainError(f"unknown family kind {kind!r}")
        return cls(kind, box or DEFAULT_BOXES[kind], atoms)


def _exponents(y1, y2, r):
    return tuple(np.atleast_1d(np.asarray(v, dtype=float)) for v in (y1, y2, r))


def _atom_log_moment(law: SiteLaw, y1, y2, r):
    return xlogy(y1, law.w_m1) + xlogy(y2, law.w_m2) + xlogy(r, law.w_p1)


def sample_site(family: FamilySpec, theta, rng: np.random.Generator) -> SiteLaw:
    """Draw one site law from ``nu_theta``.

    The point family ignores ``rng`` and always returns the same law.
    """
    t = family.check(theta)
    if family.kind == "point":
        return family.point_law(t)
    if family.kind == "finite-mixture":
        return family.atoms[0] if rng.random() < t[0] else family.atoms[1]
    while True:
        x1, x2, x3 = rng.dirichlet(t)
        if x3 > 0:
            return SiteLaw.from_probs(x2, x1, x3)


def log_moment(family: FamilySpec, theta, y1: int, y2: int, r: int) -> float:
    """``log E[w(-1)**y1 * w(-2)**y2 * w(+1)**r]`` under ``nu_theta``.

    Returns ``-inf`` when the integrand vanishes identically (a point law
    with a zero coordinate raised to a positive power).
    """
    if min(y1, y2, r) < 0:
        raise ValueError("exponents must be nonnegative")
    return float(family.log_moments(theta, y1, y2, r)[0])
