"""Command-line entry point.

Every subcommand reads a ``section.key = value`` config, writes its tables
(tab-separated, with a header row) into ``--out`` and records a
``manifest.json`` with the config hash, seed and library versions.

Exit codes: 0 success, 1 validation error, 2 numeric or budget error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bpire import extract_U, tn_identity, u_z_distribution_check
from .config import RunConfig, load_config, parse_bool, parse_floats, parse_ints
from .errors import NUMERIC_ERRORS, RwreError
from .estimate import ballistic_precheck, consistency_experiment, mle, profile
from .likelihood import kernel_check, loglik
from .spectral import (K_CAP, TAIL_TOL, V_MAX, classify, invariant_dist, lyapunov,
                       speed)
from .streams import substream
from .walk import count_identity_check, read_counts, read_path, simulate_to

COMMANDS = ("simulate", "counts", "loglik", "estimate", "lyapunov", "speed",
            "bpire-check", "invariant", "kernel-check", "consistency")


class _Run:
    def __init__(self, cfg: RunConfig, out: Path, command: str):
        self.cfg = cfg
        self.out = out
        self.command = command
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> None:
        (self.out / name).write_text(text)
        self.files.append(name)

    def manifest(self, extra: dict | None = None) -> None:
        files = {name: hashlib.sha256((self.out / name).read_bytes()).hexdigest()
                 for name in self.files}
        doc = {
            "command": self.command,
            "config_sha256": self.cfg.sha256,
            "seed": self.cfg.seed,
            "threads": self.cfg.threads,
            "versions": {
                "rwre21": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "files": files,
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        if extra:
            doc.update(extra)
        (self.out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _row(*vals) -> str:
    return "\t".join(v if isinstance(v, str) else _fmt(v) if isinstance(v, float) else str(v)
                     for v in vals) + "\n"


def _precheck(cfg: RunConfig, theta) -> float:
    return ballistic_precheck(cfg.family, theta, cfg.seed)


def cmd_simulate(run: _Run, args) -> None:
    cfg = run.cfg
    theta = cfg.require_theta()
    n = args.n or cfg.get("simulate", "n", None, int)
    if not n:
        raise RwreError("simulate needs simulate.n or --n")
    _precheck(cfg, theta)
    step_cap = cfg.get("simulate", "step_cap", None, int)
    rec = simulate_to(cfg.family, theta, n, step_cap, substream(cfg.seed, 1), seed=cfg.seed)
    run.write("walk.tsv", rec.to_tsv())
    if rec.path is not None:
        run.write("path.tsv", rec.path_tsv())
    run.write("simulate.tsv", _row("n", "t_n", "count_identity", "tn_identity")
              + _row(n, rec.t_n, count_identity_check(rec), tn_identity(rec)))


def cmd_counts(run: _Run, args) -> None:
    if not args.path:
        raise RwreError("counts needs --path")
    rec = read_path(args.path, args.n, seed=run.cfg.seed)
    run.write("walk.tsv", rec.to_tsv())


def _counts(args):
    if not args.counts:
        raise RwreError("this command needs --counts")
    return read_counts(args.counts).counts_view()


def cmd_loglik(run: _Run, args) -> None:
    cfg = run.cfg
    counts = _counts(args)
    theta = cfg.family.check(parse_floats(args.theta)) if args.theta else cfg.require_theta("loglik")
    val = loglik(counts, cfg.family, theta)
    d = len(theta)
    run.write("loglik.tsv", _row(*[f"theta{i + 1}" for i in range(d)], "loglik", "per_site")
              + _row(*theta, val, val / counts.n))


def cmd_estimate(run: _Run, args) -> None:
    cfg = run.cfg
    counts = _counts(args)
    grid = args.grid or cfg.get("estimate", "grid", 21, int)
    refine = cfg.get("estimate", "refine", True, parse_bool)
    box = cfg.get("estimate", "box", None, _parse_box)
    res = mle(counts, cfg.family, box, grid, refine)
    prof = profile(counts, cfg.family, box, grid)
    run.write("estimate.tsv", res.to_tsv())
    run.write("profile.tsv", prof.to_tsv())


def _parse_box(text: str):
    return [tuple(float(v) for v in part.split(":")) for part in text.split(",")]


def cmd_lyapunov(run: _Run, args) -> None:
    cfg = run.cfg
    theta = cfg.require_theta()
    steps = args.steps or cfg.get("lyapunov", "steps", 10**6, int)
    which = args.which or cfg.get("lyapunov", "which", "A")
    if steps < 10**4:
        raise RwreError("lyapunov needs at least 10^4 steps")
    gamma, se = lyapunov(cfg.family, theta, steps, which, substream(cfg.seed, 1))
    regime = classify(gamma, se)
    line = _row(gamma, se, regime)
    run.write("lyapunov.tsv", _row("gamma", "stderr", "regime") + line)
    sys.stdout.write(line)


def cmd_speed(run: _Run, args) -> None:
    cfg = run.cfg
    theta = cfg.require_theta()
    _precheck(cfg, theta)
    m = args.env_samples or cfg.get("speed", "env_samples", 10**4, int)
    tol = cfg.get("speed", "tail_tol", TAIL_TOL, float)
    cap = cfg.get("speed", "k_cap", K_CAP, int)
    v, se = speed(cfg.family, theta, m, tol, substream(cfg.seed, 1), cap)
    run.write("speed.tsv", _row("speed", "stderr") + _row(v, se))


def cmd_bpire_check(run: _Run, args) -> None:
    cfg = run.cfg
    theta = cfg.require_theta()
    _precheck(cfg, theta)
    n = args.n or cfg.get("bpire", "n", 6, int)
    reps = args.reps or cfg.get("bpire", "replicates", 10**4, int)
    thr = cfg.get("bpire", "threshold", 1e-4, float)
    rep = u_z_distribution_check(cfg.family, theta, n, reps, cfg.seed, thr)
    run.write("uz.tsv", rep.to_tsv())
    # exact path identities on a separate batch of walks
    lines = _row("replicate", "t_n", "count_identity", "tn_identity", "u_size")
    for i in range(min(reps, 100)):
        rec = simulate_to(cfg.family, theta, n, None, substream(cfg.seed, 2, i))
        lines += _row(i, rec.t_n, count_identity_check(rec), tn_identity(rec),
                      sum(u.size for u in extract_U(rec)))
    run.write("identities.tsv", lines)


def cmd_invariant(run: _Run, args) -> None:
    cfg = run.cfg
    theta = cfg.require_theta()
    _precheck(cfg, theta)
    m = args.env_samples or cfg.get("invariant", "env_samples", 10**4, int)
    tol = cfg.get("invariant", "tail_tol", TAIL_TOL, float)
    v_max = cfg.get("invariant", "v_max", V_MAX, int)
    cap = cfg.get("invariant", "k_cap", K_CAP, int)
    table = invariant_dist(cfg.family, theta, m, tol, v_max, substream(cfg.seed, 1), cap)
    run.write("invariant.tsv", table.to_tsv())
    if table.cap_warning:
        sys.stderr.write(f"warning: truncation cap hit in {table.cap_hits} of "
                         f"{table.env_samples} environments (gamma_A close to 0?)\n")


def cmd_kernel_check(run: _Run, args) -> None:
    cfg = run.cfg
    theta = cfg.require_theta()
    x = cfg.get("kernel", "x", (0, 0, 0), parse_ints)
    if len(x) != 3:
        raise RwreError("kernel.x needs three counts")
    samples = args.reps or cfg.get("kernel", "samples", 10**5, int)
    max_total = cfg.get("kernel", "max_total", 500, int)
    row_sum, tv = kernel_check(cfg.family, theta, x, samples, substream(cfg.seed, 1), max_total)
    run.write("kernel.tsv", _row("x1", "x2", "x3", "row_sum", "tv", "samples")
              + _row(*x, row_sum, tv, samples))


def cmd_consistency(run: _Run, args) -> None:
    cfg = run.cfg
    theta = cfg.require_theta()
    n_list = parse_ints(args.n) if isinstance(args.n, str) else None
    n_list = n_list or cfg.get("consistency", "n_list", (1000, 10000), parse_ints)
    reps = args.reps or cfg.get("consistency", "replicates", 20, int)
    grid = args.grid or cfg.get("consistency", "grid", 21, int)
    refine = cfg.get("consistency", "refine", True, parse_bool)
    table = consistency_experiment(cfg.family, theta, n_list, reps, cfg.seed, grid, refine,
                                   cfg.threads)
    run.write("errors.tsv", table.to_tsv())
    run.write("errors_summary.tsv", table.summary_tsv())
    verdict = "decreasing" if table.medians_decrease() else "NOT decreasing"
    sys.stdout.write(f"median errors {verdict}: "
                     + ", ".join(f"n={s['n']}: {s['median']:.4g}" for s in table.summary())
                     + "\n")


HANDLERS = {
    "simulate": cmd_simulate,
    "counts": cmd_counts,
    "loglik": cmd_loglik,
    "estimate": cmd_estimate,
    "lyapunov": cmd_lyapunov,
    "speed": cmd_speed,
    "bpire-check": cmd_bpire_check,
    "invariant": cmd_invariant,
    "kernel-check": cmd_kernel_check,
    "consistency": cmd_consistency,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rwre21", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="config file (section.key = value)")
        sp.add_argument("--out", required=True, help="output directory")
        if name == "consistency":
            sp.add_argument("--n", help="comma-separated list of targets")
        elif name in ("simulate", "bpire-check", "counts"):
            sp.add_argument("--n", type=int)
        if name in ("bpire-check", "consistency", "kernel-check"):
            sp.add_argument("--reps", type=int)
        if name in ("loglik", "estimate"):
            sp.add_argument("--counts", help="counts file written by 'simulate' or 'counts'")
        if name == "loglik":
            sp.add_argument("--theta", help="comma-separated parameter point")
        if name in ("estimate", "consistency"):
            sp.add_argument("--grid", type=int, help="grid points per dimension")
        if name == "lyapunov":
            sp.add_argument("--steps", type=int)
            sp.add_argument("--which", choices=("A", "B"))
        if name in ("speed", "invariant"):
            sp.add_argument("--env-samples", type=int)
        if name == "counts":
            sp.add_argument("--path", help="path file with columns t, x")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        run = _Run(cfg, Path(args.out), args.command)
        HANDLERS[args.command](run, args)
        run.manifest()
    except NUMERIC_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (RwreError, ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
