"""Plain-text run configuration.

Grammar: one ``section.key = value`` per line, ``#`` starts a comment.
Every key must be known; ``run.seed`` is mandatory.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .env import FamilySpec
from .errors import ConfigError, ParameterDomainError

KNOWN_KEYS = {
    "family": {"kind", "box", "atoms", "theta"},
    "run": {"seed", "threads"},
    "simulate": {"n", "step_cap"},
    "loglik": {"theta"},
    "estimate": {"grid", "refine", "box"},
    "lyapunov": {"steps", "which"},
    "speed": {"env_samples", "tail_tol", "k_cap"},
    "bpire": {"n", "replicates", "threshold"},
    "invariant": {"env_samples", "tail_tol", "v_max", "k_cap"},
    "kernel": {"x", "samples", "max_total"},
    "consistency": {"n_list", "replicates", "grid", "refine"},
}


def parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(float(v)) for v in text.split(",") if v.strip())


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    family: FamilySpec
    seed: int
    threads: int | str = 1
    theta: tuple[float, ...] | None = None
    sections: dict[str, dict[str, str]] = field(default_factory=dict)
    text: str = ""

    def get(self, section: str, key: str, default=None, cast=str):
        raw = self.sections.get(section, {}).get(key)
        if raw is None:
            return default
        try:
            return cast(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from exc

    def require_theta(self, section: str | None = None) -> tuple[float, ...]:
        theta = self.get(section, "theta", None, parse_floats) if section else None
        theta = theta or self.theta
        if theta is None:
            raise ConfigError("family.theta is required for this command")
        try:
            return self.family.check(theta)
        except ParameterDomainError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def sha256(self) -> str:
        canon = "\n".join(f"{s}.{k} = {v}" for s in sorted(self.sections)
                          for k, v in sorted(self.sections[s].items()))
        return hashlib.sha256(canon.encode()).hexdigest()


def parse_config(text: str) -> RunConfig:
    sections: dict[str, dict[str, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        lhs, value = (p.strip() for p in line.split("=", 1))
        if "." not in lhs:
            raise ConfigError(f"line {lineno}: key {lhs!r} has no section")
        section, key = lhs.split(".", 1)
        if section not in KNOWN_KEYS or key not in KNOWN_KEYS[section]:
            raise ConfigError(f"line {lineno}: unknown key {lhs!r}")
        if key in sections.get(section, {}):
            raise ConfigError(f"line {lineno}: duplicate key {lhs!r}")
        sections.setdefault(section, {})[key] = value
    run = sections.get("run", {})
    if "seed" not in run:
        raise ConfigError("run.seed is required")
    try:
        seed = int(run["seed"])
    except ValueError:
        raise ConfigError(f"run.seed must be an integer, got {run['seed']!r}") from None
    if not 0 <= seed < 2**64:
        raise ConfigError("run.seed must be a 64-bit unsigned integer")
    threads: int | str = run.get("threads", "1").strip()
    if threads != "auto":
        try:
            threads = int(threads)
        except ValueError:
            raise ConfigError("run.threads must be a count or 'auto'") from None
        if threads < 1:
            raise ConfigError("run.threads must be >= 1")
    fam_items = {k: v for k, v in sections.get("family", {}).items() if k != "theta"}
    try:
        family = FamilySpec.from_items(fam_items)
    except (ParameterDomainError, ValueError) as exc:
        raise ConfigError(f"family: {exc}") from exc
    theta = None
    if "theta" in sections.get("family", {}):
        theta = parse_floats(sections["family"]["theta"])
        try:
            theta = family.check(theta)
        except ParameterDomainError as exc:
            raise ConfigError(str(exc)) from exc
    return RunConfig(family, seed, threads, theta, sections, text)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
