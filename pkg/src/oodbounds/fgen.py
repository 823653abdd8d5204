"""Convex generators ``f`` of f-divergences and their Legendre-Fenchel conjugates.

Every generator is in standard form (``f(1) = f'(1) = 0``) and is evaluated on
``x >= 0`` with ``f(0)`` meaning the right limit ``f(0+)``.  Conjugates are
suprema over ``x >= 0``, so they carry explicit effective domains: ``f*`` is
finite for ``y < conj_sup`` (and at ``conj_sup`` itself when
``conj_sup_closed``), ``+inf`` beyond.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import xlog1py, xlogy

from ._optim import golden_min

log = logging.getLogger(__name__)

ArrayFn = Callable[[np.ndarray], np.ndarray]


class GeneratorError(ValueError):
    """Unknown, mis-parameterized, or invalid generator."""


@dataclass(frozen=True, eq=False)
class FGenerator:
    name: str
    f: ArrayFn
    f_at_zero: float
    f_prime_at_inf: float
    conj_sup: float
    conj_sup_closed: bool = False
    conjugate: ArrayFn | None = None
    conj_derivative: ArrayFn | None = None
    fprime: ArrayFn | None = None
    fpp: ArrayFn | None = None
    fpp1: float | None = None
    fppp1: float | None = None
    params: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        if not self.params:
            return self.name
        return self.name + ":" + ",".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))

    def __call__(self, x) -> np.ndarray:
        return self.f(np.asarray(x, dtype=float))

    def in_conj_domain(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return (y <= self.conj_sup) if self.conj_sup_closed else (y < self.conj_sup)

    def sigma_f(self, B: float = 1.0) -> float:
        """Bounded-loss coefficient ``B / (2 sqrt(f''(1)))``."""
        if self.fpp1 is None:
            raise GeneratorError(f"{self.name}: f''(1) unavailable")
        return B / (2.0 * math.sqrt(self.fpp1))


def _errstate(fn: ArrayFn) -> ArrayFn:
    @functools.wraps(fn)
    def wrapped(x):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return fn(np.asarray(x, dtype=float))

    return wrapped


@_errstate
def _kl_f(x):
    # near x = 1, x log(1 + u) - u with u = x - 1 keeps relative accuracy
    near = xlog1py(x, x - 1.0) - (x - 1.0)
    return np.where(x < 0.5, xlogy(x, x) - x + 1.0, near)


def _kl() -> FGenerator:
    return FGenerator(
        name="kl",
        f=_kl_f,
        f_at_zero=1.0,
        f_prime_at_inf=math.inf,
        conj_sup=math.inf,
        conjugate=_errstate(np.expm1),
        conj_derivative=_errstate(np.exp),
        fprime=_errstate(np.log),
        fpp=_errstate(lambda x: 1.0 / x),
        fpp1=1.0,
        fppp1=-1.0,
    )


def _chi2() -> FGenerator:
    return FGenerator(
        name="chi2",
        f=lambda x: (x - 1.0) ** 2,
        f_at_zero=1.0,
        f_prime_at_inf=math.inf,
        conj_sup=math.inf,
        # x >= 0 clips the quadratic conjugate below y = -2
        conjugate=lambda y: np.where(y >= -2.0, 0.25 * y * y + y, -1.0),
        conj_derivative=lambda y: np.where(y >= -2.0, 0.5 * y + 1.0, 0.0),
        fprime=lambda x: 2.0 * (x - 1.0),
        fpp=lambda x: np.full_like(x, 2.0),
        fpp1=2.0,
        fppp1=0.0,
    )


def _alpha(a: float) -> FGenerator:
    if not -5.0 < a < 5.0 or a in (0.0, 1.0):
        raise GeneratorError(f"alpha must lie in (-5, 5) minus {{0, 1}}, got {a}")
    denom = a * (a - 1.0)

    @_errstate
    def f(x):
        return (np.power(x, a) - a * x + a - 1.0) / denom

    @_errstate
    def conj(y):
        base = 1.0 + (a - 1.0) * y
        if a > 1.0:
            return np.where(base > 0, (np.power(np.maximum(base, 0), a / (a - 1.0)) - 1.0) / a, -1.0 / a)
        ok = (base >= 0) if a < 0 else (base > 0)
        return np.where(ok, (np.power(np.maximum(base, 0), a / (a - 1.0)) - 1.0) / a, np.inf)

    @_errstate
    def dconj(y):
        base = 1.0 + (a - 1.0) * y
        if a > 1.0:
            return np.where(base > 0, np.power(np.maximum(base, 0), 1.0 / (a - 1.0)), 0.0)
        return np.where(base > 0, np.power(np.maximum(base, 1e-300), 1.0 / (a - 1.0)), np.inf)

    return FGenerator(
        name="alpha",
        f=f,
        f_at_zero=1.0 / a if a > 0 else math.inf,
        f_prime_at_inf=math.inf if a > 1 else 1.0 / (1.0 - a),
        conj_sup=math.inf if a > 1 else 1.0 / (1.0 - a),
        conj_sup_closed=a < 0,
        conjugate=conj,
        conj_derivative=dconj,
        fprime=_errstate(lambda x: (np.power(x, a - 1.0) - 1.0) / (a - 1.0)),
        fpp=_errstate(lambda x: np.power(x, a - 2.0)),
        fpp1=1.0,
        fppp1=a - 2.0,
        params={"a": a},
    )


def _hellinger() -> FGenerator:
    return FGenerator(
        name="h2",
        f=lambda x: (np.sqrt(x) - 1.0) ** 2,
        f_at_zero=1.0,
        f_prime_at_inf=1.0,
        conj_sup=1.0,
        conjugate=_errstate(lambda y: np.where(y < 1.0, y / (1.0 - y), np.inf)),
        conj_derivative=_errstate(lambda y: np.where(y < 1.0, 1.0 / (1.0 - y) ** 2, np.inf)),
        fprime=_errstate(lambda x: 1.0 - 1.0 / np.sqrt(x)),
        fpp=_errstate(lambda x: 0.5 * x**-1.5),
        fpp1=0.5,
        fppp1=-0.75,
    )


def _reversed_kl() -> FGenerator:
    return FGenerator(
        name="rkl",
        f=_errstate(lambda x: x - 1.0 - np.log(x)),
        f_at_zero=math.inf,
        f_prime_at_inf=1.0,
        conj_sup=1.0,
        conjugate=_errstate(lambda y: np.where(y < 1.0, -np.log1p(-np.minimum(y, 1.0)), np.inf)),
        conj_derivative=_errstate(lambda y: np.where(y < 1.0, 1.0 / (1.0 - y), np.inf)),
        fprime=_errstate(lambda x: 1.0 - 1.0 / x),
        fpp=_errstate(lambda x: 1.0 / x**2),
        fpp1=1.0,
        fppp1=-2.0,
    )


def _jensen_shannon(theta: float) -> FGenerator:
    if not 0.0 < theta < 1.0:
        raise GeneratorError(f"theta must lie in (0, 1), got {theta}")
    th = theta
    ysup = -th * math.log(th)

    @_errstate
    def f(x):
        m = th * x + 1.0 - th
        return th * xlogy(x, x) - m * np.log(m)

    @_errstate
    def conj(y):
        u = np.exp(np.minimum(y, ysup) / th)
        return np.where(y < ysup, -(1.0 - th) * np.log((1.0 - th * u) / (1.0 - th)), np.inf)

    @_errstate
    def dconj(y):
        u = np.exp(np.minimum(y, ysup) / th)
        return np.where(y < ysup, (1.0 - th) * u / (1.0 - th * u), np.inf)

    return FGenerator(
        name="js",
        f=f,
        f_at_zero=-(1.0 - th) * math.log(1.0 - th),
        f_prime_at_inf=ysup,
        conj_sup=ysup,
        conjugate=conj,
        conj_derivative=dconj,
        fprime=_errstate(lambda x: th * np.log(x / (th * x + 1.0 - th))),
        fpp=_errstate(lambda x: th * (1.0 - th) / (x * (th * x + 1.0 - th))),
        fpp1=th * (1.0 - th),
        fppp1=-th * (1.0 - th) * (1.0 + th),
        params={"theta": theta},
    )


def _le_cam() -> FGenerator:
    @_errstate
    def conj(y):
        inner = np.sqrt(np.maximum(0.25 - y, 0.0))
        mid = 1.0 - y - 2.0 * inner
        return np.where(y <= -0.75, -0.25, np.where(y <= 0.25, mid, np.inf))

    @_errstate
    def dconj(y):
        return np.where(y <= -0.75, 0.0, np.where(y < 0.25, 1.0 / np.sqrt(0.25 - np.minimum(y, 0.25)) - 1.0, np.inf))

    return FGenerator(
        name="lecam",
        f=lambda x: (1.0 - x) / (2.0 * (1.0 + x)) + 0.25 * (x - 1.0),
        f_at_zero=0.25,
        f_prime_at_inf=0.25,
        conj_sup=0.25,
        conj_sup_closed=True,
        conjugate=conj,
        conj_derivative=dconj,
        fprime=lambda x: 0.25 - 1.0 / (1.0 + x) ** 2,
        fpp=lambda x: 2.0 / (1.0 + x) ** 3,
        fpp1=0.25,
        fppp1=-0.375,
    )


def _total_variation() -> FGenerator:
    return FGenerator(
        name="tv",
        f=lambda x: 0.5 * np.abs(x - 1.0),
        f_at_zero=0.5,
        f_prime_at_inf=0.5,
        conj_sup=0.5,
        conj_sup_closed=True,
        conjugate=lambda y: np.where(y <= 0.5, np.maximum(y, -0.5), np.inf),
        fprime=lambda x: 0.5 * np.sign(x - 1.0),
    )


_BUILDERS: dict[str, Callable[..., FGenerator]] = {
    "kl": _kl,
    "chi2": _chi2,
    "alpha": _alpha,
    "h2": _hellinger,
    "rkl": _reversed_kl,
    "js": _jensen_shannon,
    "lecam": _le_cam,
    "tv": _total_variation,
}
_ALIASES = {"hellinger": "h2", "reversed_kl": "rkl", "jensen_shannon": "js", "le_cam": "lecam", "chi_square": "chi2"}
_PARAM_NAMES = {"alpha": ("a", "alpha"), "js": ("theta",)}
_DEFAULTS = {"alpha": {"a": 1.5}, "js": {"theta": 0.5}}

#: generators of the bounded-loss table (alpha restricted to [-1, 2])
STANDARD_GENERATORS = ("alpha", "kl", "chi2", "h2", "rkl", "js", "lecam")


def parse_generator_spec(spec: str) -> tuple[str, dict[str, float]]:
    """``"js:theta=0.3"`` -> ``("js", {"theta": 0.3})``."""
    name, _, rest = spec.strip().partition(":")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise GeneratorError(f"malformed parameter {item!r} in {spec!r}")
        params[key.strip()] = float(value)
    return name.strip().lower(), params


@functools.lru_cache(maxsize=None)
def _cached(name: str, frozen_params: tuple) -> FGenerator:
    params = dict(frozen_params)
    g = _BUILDERS[name](**params)
    validate_generator(g)
    return g


def registry_get(name: str, **params: float) -> FGenerator:
    """Validated generator by name; ``name`` may embed parameters (``"alpha:a=2"``)."""
    base, embedded = parse_generator_spec(name)
    base = _ALIASES.get(base, base)
    if base not in _BUILDERS:
        raise GeneratorError(f"unknown generator {name!r}; known: {sorted(_BUILDERS)}")
    merged = dict(_DEFAULTS.get(base, {}))
    merged.update(embedded)
    merged.update(params)
    allowed = _PARAM_NAMES.get(base, ())
    unknown = set(merged) - set(allowed)
    if unknown:
        raise GeneratorError(f"{base} takes no parameter(s) {sorted(unknown)}")
    if base == "alpha" and "alpha" in merged:
        merged["a"] = merged.pop("alpha")
    return _cached(base, tuple(sorted((k, float(v)) for k, v in merged.items())))


def registered_names() -> list[str]:
    return sorted(_BUILDERS)


# --------------------------------------------------------------------------
# conjugates


def numeric_conjugate(f: ArrayFn, y: float, tol: float = 1e-12, limit: float = 1e12) -> float:
    """``sup_{x >= 0} x*y - f(x)`` for convex ``f``; ``+inf`` if the sup diverges."""

    def neg(x: float) -> float:
        v = float(f(np.array(x)))
        return math.inf if math.isnan(v) else v - x * y

    hi = 1.0
    while neg(hi) < neg(0.5 * hi):
        hi *= 2.0
        if hi > limit:
            return math.inf
    x, val = golden_min(neg, 0.0, hi, tol=tol, max_iter=2000)
    return -val


def numeric_biconjugate(g: FGenerator, x: float, tol: float = 1e-12) -> float:
    """``sup_y x*y - f*(y)`` using the generator's conjugate; used as an oracle."""

    def neg(y: float) -> float:
        return float(conjugate_eval(g, y)) - x * y

    hi = g.conj_sup if math.isfinite(g.conj_sup) else 1.0
    if not math.isfinite(g.conj_sup):
        while neg(hi) < neg(hi - 1.0) and hi < 1e6:
            hi *= 2.0
    lo = min(-1.0, hi - 1.0)
    while neg(lo) < neg(lo + 1.0) and lo > -1e6:
        lo *= 2.0
    _, val = golden_min(neg, lo, hi, tol=tol, max_iter=2000)
    return -val


def conjugate_eval(g: FGenerator, y):
    """``f*(y)``: the analytic conjugate when registered, numeric otherwise."""
    if g.conjugate is not None:
        out = g.conjugate(np.asarray(y, dtype=float))
        return float(out) if np.ndim(out) == 0 else out
    if np.ndim(y) == 0:
        return numeric_conjugate(g.f, float(y))
    return np.array([numeric_conjugate(g.f, float(v)) for v in np.ravel(y)]).reshape(np.shape(y))


# --------------------------------------------------------------------------
# validation


def validate_generator(g: FGenerator) -> None:
    """Raise :class:`GeneratorError` unless ``g`` is standard, convex and Fenchel-consistent."""
    f1 = float(g(1.0))
    h = 1e-5
    d1 = float((g(1.0 + h) - g(1.0 - h)) / (2 * h))
    if abs(f1) > 1e-6 or abs(d1) > 1e-6:
        raise GeneratorError(f"{g.label}: not standard (f(1)={f1:.3g}, f'(1)~{d1:.3g})")
    xs = np.geomspace(1e-3, 1e3, 41)
    a, b = np.meshgrid(xs, xs)
    fa, fb, fm = g(a), g(b), g(0.5 * (a + b))
    slack = 0.5 * (fa + fb) - fm
    if np.any(slack < -1e-9 * (1.0 + np.abs(fm))):
        raise GeneratorError(f"{g.label}: midpoint convexity fails")
    if abs(float(conjugate_eval(g, 0.0))) > 1e-12:
        raise GeneratorError(f"{g.label}: f*(0) != 0")
    top = min(g.conj_sup, 10.0)
    ys = np.linspace(-10.0, top, 41)
    ys = ys[g.in_conj_domain(ys)]
    fx = g(xs)[:, None]
    fy = np.asarray(conjugate_eval(g, ys))[None, :]
    gap = fx + fy - xs[:, None] * ys[None, :]
    if np.any(gap < -1e-9 * (1.0 + np.abs(fx) + np.abs(fy))):
        raise GeneratorError(f"{g.label}: Fenchel-Young inequality violated")


# --------------------------------------------------------------------------
# quadratic-psi admissibility


@dataclass(frozen=True)
class CurvatureCondition:
    holds: bool
    worst_margin: float
    worst_x: float
    skipped: int


def default_curvature_grid() -> np.ndarray:
    return np.unique(np.concatenate([np.linspace(-1.0 + 1e-9, 10.0, 4001), np.geomspace(10.0, 1e8, 400)]))


def check_lemma3_condition(g: FGenerator, grid=None) -> CurvatureCondition:
    """Check ``27 f''(1) / (3 - x f'''(1)/f''(1))^3 <= f''(1+x)`` on ``grid``.

    The margin reported is ``f''(1+x) - lhs``; the condition holds when every
    margin is at least ``-1e-9`` relative to ``max(1, f''(1+x))`` (near
    ``x = -1`` both sides of the equality cases blow up).  Grid points where either side is undefined
    are skipped and counted.
    """
    if g.fpp is None or g.fpp1 is None or g.fppp1 is None:
        raise GeneratorError(f"{g.label}: curvature data unavailable")
    xs = default_curvature_grid() if grid is None else np.asarray(grid, dtype=float)
    if np.any(xs < -1.0 + 1e-9 - 1e-15):
        raise ValueError("grid points must be >= -1 + 1e-9")
    r = g.fppp1 / g.fpp1
    u = 1.0 + xs
    # written in u = 1 + x so both sides see the same rounded point
    denom = (3.0 + r) - u * r
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = 27.0 * g.fpp1 / denom**3
        rhs = g.fpp(u)
    ok = np.isfinite(lhs) & np.isfinite(rhs)
    skipped = int((~ok).sum())
    if skipped:
        log.warning("%s: skipped %d grid points with undefined curvature", g.label, skipped)
    margin = rhs[ok] - lhs[ok]
    rel = margin / np.maximum(1.0, np.abs(rhs[ok]))
    i = int(np.argmin(rel))
    return CurvatureCondition(bool(rel[i] >= -1e-9), float(margin[i]), float(xs[ok][i]), skipped)
