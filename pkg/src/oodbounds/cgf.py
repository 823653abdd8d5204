"""Generalized cumulant generating functions, CGF upper bounds, and their inverse conjugates."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from ._optim import expand_lower, expand_upper, golden_min, golden_min_batch
from .dist import FiniteDist
from .fgen import FGenerator, conjugate_eval

log = logging.getLogger(__name__)

T_MIN = 1e-12


class InfeasibleError(ValueError):
    """The requested convex program has no finite value."""


def _support_values(q: FiniteDist, g) -> tuple[np.ndarray, np.ndarray]:
    gv = np.asarray(g, dtype=float)
    if gv.shape != q.probs.shape:
        raise ValueError(f"g has shape {gv.shape}, reference has {q.probs.shape}")
    if not np.all(np.isfinite(gv)):
        raise ValueError("g must be finite on the support")
    keep = q.probs > 0
    return gv[keep], q.probs[keep]


def feasible_lambda_floor(gen: FGenerator, g: np.ndarray) -> tuple[float, bool]:
    """Smallest admissible lambda and whether it is itself admissible.

    ``lambda + E f*(g - lambda)`` is finite iff ``g - lambda`` stays inside the
    conjugate domain at every charged atom, i.e. ``lambda >= max g - sup dom f*``.
    """
    if math.isinf(gen.conj_sup):
        return -math.inf, False
    return float(np.max(g)) - gen.conj_sup, gen.conj_sup_closed


def _objective(gen: FGenerator, g: np.ndarray, w: np.ndarray) -> Callable[[float], float]:
    def phi(lam: float) -> float:
        vals = conjugate_eval(gen, g - lam)
        if not np.all(np.isfinite(vals)):
            return math.inf
        return lam + float(np.dot(w, vals))

    return phi


def log_mgf(q: FiniteDist, g) -> float:
    """``log E_Q exp(g)``, the KL-generator closed form of the generalized CGF."""
    gv, w = _support_values(q, g)
    return float(logsumexp(gv, b=w))


def _cgf_by_root(gen: FGenerator, gv: np.ndarray, w: np.ndarray) -> float | None:
    """Solve the first-order condition ``E_Q (f*)'(g - lambda) = 1``; ``None`` if that fails."""
    if gen.conj_derivative is None:
        return None

    def excess(lam: float) -> float:
        d = gen.conj_derivative(gv - lam)
        m = float(np.dot(w, np.where(np.isnan(d), np.inf, d)))
        return min(m - 1.0, 1e300)

    a, b = float(gv.min()), float(gv.max())
    floor, _ = feasible_lambda_floor(gen, gv)
    a = max(a, floor)
    try:
        if excess(b) >= 0.0:
            lam = b
        elif excess(a) <= 0.0:
            # (f*)' stays below 1 up to the domain edge: the objective increases from there
            lam = a
        else:
            lam = brentq(excess, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    except (ValueError, RuntimeError):
        return None
    vals = conjugate_eval(gen, gv - lam)
    if not np.all(np.isfinite(vals)):
        return None
    return lam + float(np.dot(w, vals))


def generalized_cgf(gen: FGenerator, q: FiniteDist, g, tol: float = 1e-10) -> float:
    """``inf_lambda lambda + E_Q f*(g - lambda)``.

    With ``(f*)'`` available the optimal lambda is the root of the first-order
    condition; otherwise (and as a fallback) golden-section search in lambda.
    """
    gv, w = _support_values(q, g)
    val = _cgf_by_root(gen, gv, w)
    if val is not None:
        return val
    return _cgf_by_search(gen, gv, w, tol)


def _cgf_by_search(gen: FGenerator, gv: np.ndarray, w: np.ndarray, tol: float) -> float:
    lo, hi = float(gv.min()) - 1.0, float(gv.max()) + 1.0
    floor, closed = feasible_lambda_floor(gen, gv)
    if math.isfinite(floor):
        edge = floor if closed else floor + 1e-12 * (1.0 + abs(floor))
        lo = max(lo, edge)
        hi = max(hi, lo + 1.0)
    phi = _objective(gen, gv, w)
    log.debug("%s: feasible lambda interval [%g, inf), bracket [%g, %g]", gen.label, floor, lo, hi)
    hi = expand_upper(phi, lo, hi)
    lo = expand_lower(phi, lo, hi, floor=floor if math.isfinite(floor) else -math.inf)
    if math.isfinite(floor) and not closed:
        lo = max(lo, floor + 1e-12 * (1.0 + abs(floor)))
    _, val = golden_min(phi, lo, hi, tol=tol)
    if not math.isfinite(val):
        raise InfeasibleError(f"{gen.label}: objective infinite on the whole bracket")
    return val


def generalized_cgf_batch(gen: FGenerator, q: FiniteDist, G, n_iter: int = 160) -> np.ndarray:
    """Row-wise :func:`generalized_cgf` for a matrix of per-atom values.

    Every row's optimal lambda lies in ``[min g, max g]`` because ``(f*)'``
    crosses 1 at the origin, so no bracket expansion is needed here.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    keep = q.probs > 0
    Gk, w = G[:, keep], q.probs[keep]
    lo, hi = Gk.min(axis=1) - 1e-9, Gk.max(axis=1) + 1e-9
    if math.isfinite(gen.conj_sup):
        floor = Gk.max(axis=1) - gen.conj_sup
        if not gen.conj_sup_closed:
            floor = floor + 1e-12 * (1.0 + np.abs(floor))
        lo = np.maximum(lo, floor)

    def phi(lam: np.ndarray) -> np.ndarray:
        vals = conjugate_eval(gen, Gk - lam[:, None])
        out = lam + np.where(np.isfinite(vals), vals, 0.0) @ w
        return np.where(np.all(np.isfinite(vals), axis=1), out, np.inf)

    _, val = golden_min_batch(phi, lo, hi, n_iter=n_iter)
    return val


@dataclass(frozen=True)
class CGFQuery:
    """A generator, a finite reference measure and per-atom function values."""

    generator: FGenerator
    reference: FiniteDist
    g: np.ndarray

    def __post_init__(self):
        _support_values(self.reference, self.g)

    def value(self) -> float:
        return generalized_cgf(self.generator, self.reference, self.g)


# --------------------------------------------------------------------------
# CGF upper bounds psi and (psi*)^{-1}


@dataclass(frozen=True, eq=False)
class PsiBound:
    """Convex ``psi`` on ``(0, b)`` with ``psi(0) = psi'(0) = 0``."""

    kind: str
    b: float = math.inf
    sigma: float | None = None
    c: float | None = None
    B: float | None = None
    fpp1: float | None = None
    fn: Callable[[float], float] | None = field(default=None, repr=False)

    @classmethod
    def quadratic(cls, sigma: float) -> "PsiBound":
        """``sigma^2 t^2 / 2`` (sub-Gaussian with parameter ``sigma``)."""
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        return cls("quadratic", sigma=float(sigma))

    @classmethod
    def subgamma(cls, sigma: float, c: float) -> "PsiBound":
        """``sigma^2 t^2 / (2 (1 - c t))`` on ``(0, 1/c)``."""
        if sigma < 0 or c < 0:
            raise ValueError("sigma and c must be nonnegative")
        return cls("subgamma", b=math.inf if c == 0 else 1.0 / c, sigma=float(sigma), c=float(c))

    @classmethod
    def bounded_quadratic(cls, B: float, fpp1: float) -> "PsiBound":
        """``B^2 t^2 / (8 f''(1))``: the quadratic CGF bound for losses with range ``B``."""
        if B < 0 or fpp1 <= 0:
            raise ValueError("need B >= 0 and f''(1) > 0")
        return cls("bounded_quadratic", B=float(B), fpp1=float(fpp1))

    @classmethod
    def custom(cls, fn: Callable[[float], float], b: float = math.inf) -> "PsiBound":
        return cls("custom", b=float(b), fn=fn)

    def __call__(self, t: float) -> float:
        t = float(t)
        if t < 0 or t >= self.b:
            return math.inf
        if self.kind == "quadratic":
            return 0.5 * self.sigma**2 * t * t
        if self.kind == "subgamma":
            return self.sigma**2 * t * t / (2.0 * (1.0 - self.c * t))
        if self.kind == "bounded_quadratic":
            return self.B**2 * t * t / (8.0 * self.fpp1)
        return float(self.fn(t))

    def check(self, tol: float = 1e-8, n_grid: int = 64) -> None:
        """Raise ``ValueError`` unless ``psi(0)=0``, ``psi'(0)=0`` and ``psi`` is convex on a grid."""
        if abs(self(0.0)) > tol:
            raise ValueError(f"psi(0) = {self(0.0)}")
        h = 1e-5 if math.isinf(self.b) else min(1e-5, self.b / 4)
        # one-sided Richardson extrapolation: error O(h^2)
        slope = 2.0 * self(h) / h - self(2 * h) / (2 * h)
        if abs(slope) > tol:
            raise ValueError(f"psi'(0) ~ {slope}")
        top = min(self.b * (1 - 1e-6), 10.0)
        ts = np.linspace(0.0, top, n_grid)
        vals = np.array([self(t) for t in ts])
        mid = np.array([self(0.5 * (a + b)) for a, b in zip(ts[:-1], ts[1:])])
        if np.any(mid > 0.5 * (vals[:-1] + vals[1:]) + 1e-9 * (1 + np.abs(vals[1:]))):
            raise ValueError("psi is not convex on the test grid")


def psi_star_inverse(psi: PsiBound, y: float, method: str = "auto", tol: float = 1e-10) -> float:
    """``(psi*)^{-1}(y) = inf_{0 < lambda < b} (y + psi(lambda)) / lambda``.

    ``method="numeric"`` forces the 1-D minimization even where a closed form
    exists, which is how the closed forms are cross-checked.
    """
    y = float(y)
    if y < 0 or math.isnan(y):
        raise ValueError("(psi*)^{-1} is defined for y >= 0 only")
    if y == 0.0:
        return 0.0
    if math.isinf(y):
        return math.inf
    if method == "auto" and psi.kind != "custom":
        if psi.kind == "quadratic":
            return math.sqrt(2.0 * psi.sigma**2 * y)
        if psi.kind == "subgamma":
            return math.sqrt(2.0 * psi.sigma**2 * y) + psi.c * y
        return math.sqrt(y * psi.B**2 / (2.0 * psi.fpp1))

    def obj(u: float) -> float:
        lam = math.exp(u)
        # psi >= 0; rounding noise below zero would blow up as lambda -> 0
        return (y + max(psi(lam), 0.0)) / lam

    lo = math.log(1e-8)
    hi = math.log(min(psi.b - 1e-8, 1e6)) if math.isfinite(psi.b) else math.log(1e6)
    if math.isfinite(psi.b):
        # keep the bracket strictly inside (0, b)
        hi = min(hi, math.log(psi.b) - 1e-12)
    else:
        hi = expand_upper(obj, lo, hi, limit=math.log(1e300))
    lo = expand_lower(obj, lo, hi, floor=math.log(1e-300))
    _, val = golden_min(obj, lo, hi, tol=tol)
    return val


def _expm1_minus_x(x: np.ndarray) -> np.ndarray:
    """``e^x - 1 - x`` without cancellation near zero."""
    small = np.abs(x) < 1e-2
    xs = np.where(small, x, 0.0)
    series = 0.5 * xs * xs * (1.0 + xs / 3.0 * (1.0 + xs / 4.0 * (1.0 + xs / 5.0 * (1.0 + xs / 6.0))))
    return np.where(small, series, np.expm1(x) - x)


def cgf_psi(gen: FGenerator, q: FiniteDist, lbar) -> PsiBound:
    """The exact CGF ``t -> Lambda_{f,Q}(t * lbar)`` packaged as a custom ``psi``.

    ``lbar`` must be centered under ``Q``; then ``psi(0) = psi'(0) = 0`` and
    the bound ``Lambda <= psi`` holds with equality.
    """
    gv = np.asarray(lbar, dtype=float)
    if abs(q.expect(gv)) > 1e-9 * (1.0 + float(np.max(np.abs(gv)))):
        raise ValueError("lbar must have zero mean under the reference")
    if gen.name == "kl":
        keep = q.probs > 0
        w, gk = q.probs[keep], gv[keep]
        top = gk.max()
        shifted = gk - top
        span = float(np.max(np.abs(gk)))

        def log_mgf_t(t: float) -> float:
            # hot path of the interpolated search, so no scipy calls
            if t <= 0:
                return 0.0
            if t * span <= 1.0:
                # centered: log(1 + E[e^x - 1 - x]) avoids cancelling against t * E g = 0
                return math.log1p(float(np.dot(w, _expm1_minus_x(t * gk))))
            return t * top + math.log(float(np.dot(w, np.exp(t * shifted))))

        return PsiBound.custom(log_mgf_t)
    return PsiBound.custom(lambda t: generalized_cgf(gen, q, t * gv) if t > 0 else 0.0)


def gibbs_tilt(
    gen: FGenerator, q: FiniteDist, g, t: float, max_expand: int = 200
) -> tuple[FiniteDist, float]:
    """Density ``(f*)'(t g - lambda)`` w.r.t. ``Q``, normalized by bisection in ``lambda``.

    Returns the tilted distribution and the normalizing ``lambda``.
    """
    if gen.conj_derivative is None:
        raise InfeasibleError(f"{gen.label}: conjugate derivative unavailable")
    if not t > 0:
        raise ValueError("t must be positive")
    gv = np.asarray(g, dtype=float)
    if gv.shape != q.probs.shape:
        raise ValueError("g does not match the reference support")
    keep = q.probs > 0
    tg, w = t * gv[keep], q.probs[keep]

    def mass(lam: float) -> float:
        d = gen.conj_derivative(tg - lam)
        d = np.where(np.isnan(d), np.inf, d)
        return float(np.dot(w, d))

    # (f*)'(0) = 1 and monotone, so [min tg, max tg] brackets the root;
    # the expansion only guards against rounding at degenerate inputs
    lo, hi = float(tg.min()), float(tg.max())
    width = max(hi - lo, 1.0)
    for _ in range(max_expand):
        if mass(lo) >= 1.0:
            break
        lo -= width
        width *= 2.0
    else:
        raise InfeasibleError(f"{gen.label}: (f*)' cannot reach total mass 1")
    width = max(hi - lo, 1.0)
    for _ in range(max_expand):
        if mass(hi) <= 1.0:
            break
        hi += width
        width *= 2.0
    else:
        raise InfeasibleError(f"{gen.label}: (f*)' cannot fall to total mass 1")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if mass(mid) >= 1.0:
            lo = mid
        else:
            hi = mid
    lam = lo if abs(mass(lo) - 1.0) <= abs(mass(hi) - 1.0) else hi
    dens = np.zeros_like(q.probs)
    dens[keep] = gen.conj_derivative(tg - lam)
    eta = q.probs * dens
    total = eta.sum()
    if not np.isfinite(total) or total <= 0:
        raise InfeasibleError(f"{gen.label}: tilt has no finite normalization")
    return FiniteDist(q.support, eta / total), lam
