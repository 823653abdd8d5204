"""``oodbounds`` command line: ``sweep``, ``bound`` and ``verify`` subcommands."""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .bounds import (
    ALL_NAMES,
    BoundError,
    BoundReport,
    interpolated_bound,
    pe_bound_chi2,
    pe_bound_fdiv_bounded,
    pe_bound_kl_subgamma,
    pe_bound_tv,
    pe_bound_wasserstein,
    pp_bound,
)
from .dist import DistributionError, FiniteDist, FiniteJoint, conditional, marginal
from .divergence import f_divergence, mutual_information
from .examples import (
    BernoulliExperiment,
    GaussianExperiment,
    SweepOptions,
    parse_n_range,
    squared_loss_table,
    sweep,
)
from .fgen import GeneratorError, registry_get
from .verify import run_suite

EXPERIMENT_KEYS = ("example", "p", "p_test", "m", "sigma2", "m_test", "sigma2_test", "d", "n", "n_min", "n_max",
                   "bounds", "seed", "theta", "alpha", "out", "format", "jobs")


class ConfigError(ValueError):
    """Invalid configuration; reported with exit status 2."""


def fmt(value: float | None) -> str:
    """12 significant digits; ``na`` for inapplicable bounds."""
    if value is None:
        return "na"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(float(value), ".12g")


# --------------------------------------------------------------------------
# configuration


def read_config(path: str | Path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; list values may be bracketed."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line and ":" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        sep = "=" if "=" in line else ":"
        key, value = (s.strip() for s in line.split(sep, 1))
        key = key.replace("-", "_")
        if key not in EXPERIMENT_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value.strip("[]").strip()
    return out


@dataclass
class RunConfig:
    example: str
    ns: list[int]
    bounds: tuple[str, ...]
    experiment: object
    options: SweepOptions
    seed: int = 0
    out: str | None = None
    fmt: str = "csv"
    jobs: int = 1


def _float(settings: dict, key: str, default: float) -> float:
    raw = settings.get(key)
    if raw is None:
        return default
    try:
        return float(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: not a number: {raw!r}") from exc


def _bounds(raw) -> tuple[str, ...]:
    if raw is None:
        return ()
    names = tuple(b.strip().strip("'\"") for b in str(raw).split(",") if b.strip())
    unknown = [b for b in names if b not in ALL_NAMES]
    if unknown:
        raise ConfigError(f"unknown bound identifiers: {', '.join(unknown)}")
    return names


def resolve_sweep(args: argparse.Namespace) -> RunConfig:
    """Merge config-file values with explicit flags (flags win)."""
    settings: dict = read_config(args.config) if args.config else {}
    for key in EXPERIMENT_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    example = settings.get("example")
    if example not in ("gaussian", "bernoulli"):
        raise ConfigError("example must be 'gaussian' or 'bernoulli'")
    try:
        if "n" in settings:
            ns = parse_n_range(settings["n"])
        else:
            lo = int(settings.get("n_min", 2 if example == "gaussian" else 1))
            hi = int(settings.get("n_max", 100))
            if lo > hi:
                raise ConfigError("n_min must not exceed n_max")
            ns = list(range(lo, hi + 1))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if example == "gaussian" and 1 in ns and not args.include_n1:
        raise ConfigError("gaussian n=1 is degenerate (W = Z_1); pass --include-n1 to keep it")
    bounds = _bounds(settings["bounds"]) if "bounds" in settings else ALL_NAMES
    theta, alpha = _float(settings, "theta", 0.5), _float(settings, "alpha", 1.5)
    try:
        if example == "bernoulli":
            exp = BernoulliExperiment(_float(settings, "p", 0.3), _float(settings, "p_test", 0.1))
        else:
            exp = GaussianExperiment(
                m=_float(settings, "m", 1.0),
                sigma2=_float(settings, "sigma2", 1.0),
                m_test=_float(settings, "m_test", _float(settings, "m", 1.0)),
                sigma2_test=_float(settings, "sigma2_test", _float(settings, "sigma2", 1.0)),
                d=int(settings.get("d", 1)),
            )
        opts = SweepOptions(bounds=bounds, alpha=alpha, theta=theta)
        registry_get("js", theta=theta)
        registry_get("alpha", a=alpha)
    except (ValueError, GeneratorError) as exc:
        raise ConfigError(str(exc)) from exc
    fmt_ = settings.get("format", "csv")
    if fmt_ not in ("csv", "jsonl"):
        raise ConfigError("format must be csv or jsonl")
    try:
        seed, jobs = int(settings.get("seed", 0)), max(1, int(settings.get("jobs", 1)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(example, ns, bounds, exp, opts, seed=seed, out=settings.get("out"), fmt=fmt_, jobs=jobs)


# --------------------------------------------------------------------------
# writers


def write_csv(reports: Sequence[BoundReport], bounds: Sequence[str], stream: TextIO) -> None:
    stream.write(",".join(("n", "true_gap") + tuple(bounds)) + "\n")
    for r in reports:
        stream.write(",".join([str(r.n), fmt(r.true_gap)] + [fmt(r.values.get(b)) for b in bounds]) + "\n")


def write_jsonl(reports: Sequence[BoundReport], bounds: Sequence[str], stream: TextIO) -> None:
    for r in reports:
        row = {"n": r.n, "true_gap": fmt(r.true_gap), "pp_gap": fmt(r.pp_gap)}
        row.update({b: fmt(r.values.get(b)) for b in bounds})
        stream.write(json.dumps(row) + "\n")


def _open_out(path: str | None):
    return open(path, "w", newline="") if path else _NoClose(sys.stdout)


class _NoClose:
    def __init__(self, stream):
        self.stream = stream

    def __enter__(self):
        return self.stream

    def __exit__(self, *exc):
        self.stream.flush()


# --------------------------------------------------------------------------
# subcommands


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = resolve_sweep(args)
    reports = sweep(cfg.experiment, ns=cfg.ns, options=cfg.options, jobs=cfg.jobs)
    with _open_out(cfg.out) as stream:
        (write_csv if cfg.fmt == "csv" else write_jsonl)(reports, cfg.bounds, stream)
    return 0


def load_dist(text: str) -> FiniteDist:
    """``bern:P``, inline JSON ``{"support": ..., "probs": ...}``, or a JSON file path."""
    text = text.strip()
    try:
        if text.startswith("bern:"):
            return FiniteDist.bernoulli(float(text[5:]))
        if text.startswith("{"):
            return FiniteDist.from_json(text)
        return FiniteDist.from_json(Path(text).read_text())
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot parse distribution {text!r}: {exc}") from exc


def load_joint(text: str) -> FiniteJoint:
    text = text.strip()
    try:
        return FiniteJoint.from_json(text if text.startswith("{") else Path(text).read_text())
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot parse joint {text!r}: {exc}") from exc


# divergence of (nu, mu) consumed by each PP row
PP_DIVERGENCE = {"sg": "kl", "sgam": "kl", "chi2": "chi2", "kl": "kl", "h2": "h2", "rkl": "rkl",
                 "js": "js", "lecam": "lecam", "alpha": "alpha"}


def _gen(key: str, theta: float, alpha: float):
    if key == "js":
        return registry_get("js", theta=theta)
    if key == "alpha":
        return registry_get("alpha", a=alpha)
    return registry_get(key)


def compute_bound_report(args: argparse.Namespace) -> BoundReport:
    """Bounds for explicit ``(P_i, Q)`` joints or explicit ``(nu, mu)`` marginals."""
    B = args.B
    if args.p_joint and args.q_joint:
        pj, qj = load_joint(args.p_joint), load_joint(args.q_joint)
        if not pj.same_supports(qj):
            raise ConfigError("joints must share supports")
        nu, mu = marginal(pj, "Z"), marginal(qj, "Z")
    elif args.nu and args.mu:
        pj = qj = None
        nu, mu = load_dist(args.nu), load_dist(args.mu)
    else:
        raise ConfigError("give --p-joint/--q-joint or --nu/--mu")
    names = _bounds(args.bounds) if args.bounds else (
        tuple(n for n in ALL_NAMES if n.startswith("pp_")) if pj is None else ALL_NAMES
    )
    rep = BoundReport(0, math.nan, math.nan, B=B)
    for name in names:
        try:
            rep.values[name] = _one_bound(name, pj, qj, nu, mu, args)
        except BoundError:
            rep.values[name] = None
    return rep


def _one_bound(name, pj, qj, nu, mu, args):
    B, theta, alpha = args.B, args.theta, args.alpha
    sigma = args.sigma if args.sigma is not None else (B / 2.0 if math.isfinite(B) else None)
    if name.startswith("pp_"):
        kind = name[3:]
        g = _gen(PP_DIVERGENCE[kind], theta, alpha)
        d = f_divergence(g, nu, mu).value
        if kind == "sgam":
            if sigma is None:
                return None
            return pp_bound(kind, d, sigma=sigma, c=args.c)
        if kind in ("sg", "chi2"):
            if kind == "chi2" and args.sigma_var is not None:
                return pp_bound(kind, d, sigma=args.sigma_var)
            return None if sigma is None else pp_bound(kind, d, sigma=sigma)
        return pp_bound(kind, d, B=B, theta=theta, alpha=alpha)
    if pj is None:
        return None
    if name == "tv":
        return pe_bound_tv([pj], qj, B)
    if name == "wass":
        return pe_bound_wasserstein(conditional(pj), nu, mu, B, B, "hamming") if math.isfinite(B) else None
    if name in ("kl_sg", "kl_sgam"):
        if sigma is None:
            return None
        kl_m = f_divergence(registry_get("kl"), nu, mu).value
        c = args.c if name == "kl_sgam" else 0.0
        # the bound charges I(W;Z) + KL(nu||mu), i.e. KL(P||P_W x mu)
        return pe_bound_kl_subgamma([mutual_information(pj)], kl_m, sigma, c)
    if name == "chi2":
        sv = args.sigma_var if args.sigma_var is not None else sigma
        return None if sv is None else pe_bound_chi2([f_divergence(registry_get("chi2"), pj, qj).value], sv)
    if name.startswith("f_"):
        g = _gen(name[2:], theta, alpha)
        return pe_bound_fdiv_bounded(g, [f_divergence(g, pj, qj).value], B)
    if name == "interp":
        if not math.isfinite(B):
            return None
        try:
            table = squared_loss_table(pj)
        except (TypeError, ValueError):
            table = None
        if table is not None and np.ptp(table) > B:
            # the squared loss leaves [0, B] on these supports; fall back to the range-only psi
            table = None
        return interpolated_bound(pj, qj, registry_get("kl"), B=B, loss_table=table).value
    return None


def cmd_bound(args: argparse.Namespace) -> int:
    rep = compute_bound_report(args)
    with _open_out(args.out) as stream:
        if args.format == "jsonl":
            stream.write(json.dumps({k: fmt(v) for k, v in rep.values.items()}) + "\n")
        else:
            stream.write("bound,value\n")
            for k, v in rep.values.items():
                stream.write(f"{k},{fmt(v)}\n")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    reports = run_suite(seed=args.seed or 0, quick=args.quick)
    with _open_out(args.out) as stream:
        for r in reports:
            stream.write(json.dumps(r.to_json(), default=str) + "\n")
    return 0 if all(r.passed for r in reports) else 1


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oodbounds", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="bound values over a range of sample sizes (CSV)")
    sw.add_argument("--config", help="key = value file; explicit flags override it")
    sw.add_argument("--example", choices=("gaussian", "bernoulli"))
    sw.add_argument("--p", type=float)
    sw.add_argument("--p-test", dest="p_test", type=float)
    sw.add_argument("--m", type=float)
    sw.add_argument("--sigma2", type=float)
    sw.add_argument("--m-test", dest="m_test", type=float)
    sw.add_argument("--sigma2-test", dest="sigma2_test", type=float)
    sw.add_argument("--d", type=int)
    sw.add_argument("--n", help="sample sizes, e.g. 1..100 or 2,5,10")
    sw.add_argument("--bounds", help="comma-separated bound identifiers: " + ",".join(ALL_NAMES))
    sw.add_argument("--theta", type=float)
    sw.add_argument("--alpha", type=float)
    sw.add_argument("--seed", type=int)
    sw.add_argument("--out")
    sw.add_argument("--format", choices=("csv", "jsonl"))
    sw.add_argument("--jobs", type=int)
    sw.add_argument("--include-n1", dest="include_n1", action="store_true",
                    help="allow the degenerate n=1 point of the gaussian example")
    sw.set_defaults(func=cmd_sweep)

    bd = sub.add_parser("bound", help="bounds for explicit distributions")
    bd.add_argument("--p-joint", dest="p_joint", help="training joint P_i (JSON text or file)")
    bd.add_argument("--q-joint", dest="q_joint", help="reference joint Q (JSON text or file)")
    bd.add_argument("--nu", help="training marginal: bern:P, JSON text or file")
    bd.add_argument("--mu", help="test marginal: bern:P, JSON text or file")
    bd.add_argument("--bounds")
    bd.add_argument("--B", type=float, default=1.0, help="loss range (default 1)")
    bd.add_argument("--sigma", type=float, help="sub-Gaussian parameter (default B/2)")
    bd.add_argument("--c", type=float, default=0.0, help="sub-gamma scale")
    bd.add_argument("--sigma-var", dest="sigma_var", type=float, help="loss standard-deviation cap")
    bd.add_argument("--theta", type=float, default=0.5)
    bd.add_argument("--alpha", type=float, default=1.5)
    bd.add_argument("--out")
    bd.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    bd.set_defaults(func=cmd_bound)

    vf = sub.add_parser("verify", help="run the oracle suite (JSON lines); exit 1 on any failure")
    vf.add_argument("--seed", type=int, default=0)
    vf.add_argument("--quick", action="store_true", help="fewer random instances")
    vf.add_argument("--out")
    vf.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DistributionError, GeneratorError) as exc:
        print(f"oodbounds: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
