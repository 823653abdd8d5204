"""Generalization-gap bound calculators and the interpolated IPM / f-divergence search."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._optim import golden_min
from .cgf import PsiBound, cgf_psi, gibbs_tilt, psi_star_inverse
from .dist import FiniteDist, FiniteJoint, FiniteKernel, compose, conditional, marginal
from .divergence import f_divergence_vectors, total_variation, wasserstein1
from .fgen import FGenerator, GeneratorError, check_lemma3_condition

PE_NAMES = ("tv", "wass", "kl_sg", "kl_sgam", "chi2")
FDIV_NAMES = ("f_kl", "f_chi2", "f_h2", "f_rkl", "f_js", "f_lecam", "f_alpha")
PP_KINDS = ("sg", "sgam", "chi2", "kl", "h2", "rkl", "js", "lecam", "alpha")
PP_NAMES = tuple("pp_" + k for k in PP_KINDS)
ALL_NAMES = PE_NAMES + FDIV_NAMES + PP_NAMES + ("interp",)


class BoundError(ValueError):
    """A bound's hypotheses are not met by the supplied inputs."""


def _nonneg(name: str, value) -> None:
    if value is not None and np.any(np.asarray(value, dtype=float) < 0):
        raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class LossModel:
    """Regularity facts about a loss: range ``[0, B]`` and optional tail/Lipschitz constants."""

    kind: str = "squared_error"
    B: float = math.inf
    subgaussian: float | None = None
    subgamma: tuple[float, float] | None = None
    lipschitz: tuple[float, float] | None = None
    variance_cap: float | None = None
    table: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("squared_error", "table"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "table" and self.table is None:
            raise ValueError("table loss needs a table")
        for name in ("B", "subgaussian", "subgamma", "lipschitz", "variance_cap"):
            _nonneg(name, getattr(self, name))

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.B)


@dataclass
class BoundReport:
    """Bound values at one sample size; ``None`` marks a bound whose hypotheses fail."""

    n: int
    true_gap: float
    pp_gap: float
    values: dict[str, float | None] = field(default_factory=dict)
    B: float = math.inf

    @property
    def vacuous(self) -> dict[str, bool]:
        return {k: v is not None and v > self.B for k, v in self.values.items()}

    def target(self, name: str) -> float:
        """The gap a bound is meant to dominate: PP bounds target the PP gap."""
        return self.pp_gap if name.startswith("pp_") else self.true_gap


# --------------------------------------------------------------------------
# PE bounds


def pe_bound_tv(joints: Sequence[FiniteJoint], q: FiniteJoint, B: float) -> float:
    """``(B/n) sum_i TV(P_i, Q)``."""
    if not math.isfinite(B):
        raise BoundError("total-variation bound needs a bounded loss")
    return B * float(np.mean([total_variation(p, q) for p in joints]))


def pe_bound_tv_decomposed(joints: Sequence[FiniteJoint], mu: FiniteDist, B: float) -> float:
    """``B TV(nu, mu) + (B/n) sum_i E_nu TV(P_{W|Z_i}, P_W)``."""
    if not math.isfinite(B):
        raise BoundError("total-variation bound needs a bounded loss")
    terms = []
    nu = marginal(joints[0], "Z")
    for p in joints:
        pw, kernel = marginal(p, "W"), conditional(p)
        terms.append(kernel_expected_distance(kernel, marginal(p, "Z"), pw, "hamming"))
    return B * total_variation(nu, mu) + B * float(np.mean(terms))


def kernel_expected_distance(kernel: FiniteKernel, source: FiniteDist, target: FiniteDist, metric: str) -> float:
    """``E_{z ~ source} W_1(kernel(.|z), target)``."""
    return sum(
        float(pz) * wasserstein1(kernel.row(z), target, metric)
        for z, pz in zip(source.support, source.probs)
        if pz > 0
    )


def pe_bound_kl_subgaussian(mi_terms: Sequence[float], kl_marginal: float, sigma: float) -> float:
    """``(1/n) sum_i sqrt(2 sigma^2 (I(W;Z_i) + KL(nu||mu)))``."""
    return pe_bound_kl_subgamma(mi_terms, kl_marginal, sigma, 0.0)


def pe_bound_kl_subgamma(mi_terms: Sequence[float], kl_marginal: float, sigma: float, c: float) -> float:
    """``(1/n) sum_i [sqrt(2 sigma^2 T_i) + c T_i]`` with ``T_i = I(W;Z_i) + KL(nu||mu)``."""
    _nonneg("mutual information", mi_terms)
    _nonneg("KL", kl_marginal)
    _nonneg("sigma", sigma)
    _nonneg("c", c)
    t = np.asarray(mi_terms, dtype=float) + kl_marginal
    with np.errstate(invalid="ignore"):
        vals = np.sqrt(2.0 * sigma**2 * t) + (c * t if c else 0.0)
    return float(np.mean(vals))


def pe_bound_chi2(chi2_terms: Sequence[float], sigma_var: float) -> float:
    """``(1/n) sum_i sqrt(sigma_var^2 chi^2(P_i||Q))`` for ``Var_mu loss(w, Z) <= sigma_var^2``."""
    _nonneg("chi-square", chi2_terms)
    _nonneg("sigma_var", sigma_var)
    return float(np.mean(np.sqrt(sigma_var**2 * np.asarray(chi2_terms, dtype=float))))


def pe_bound_fdiv_bounded(g: FGenerator, fdiv_terms: Sequence[float], B: float) -> float:
    """``(1/n) sum_i sqrt(2 sigma_f^2 D_f(P_i||Q))`` with ``sigma_f = B / (2 sqrt(f''(1)))``."""
    if not math.isfinite(B):
        raise BoundError("bounded-loss bound needs finite B")
    if g.fpp is None or not check_lemma3_condition(g).holds:
        raise BoundError(f"{g.label}: no quadratic psi available")
    _nonneg("f-divergence", fdiv_terms)
    sf = g.sigma_f(B)
    return float(np.mean(np.sqrt(2.0 * sf * sf * np.asarray(fdiv_terms, dtype=float))))


def pe_bound_wasserstein(
    kernel: FiniteKernel | Sequence[FiniteKernel],
    nu: FiniteDist,
    mu: FiniteDist,
    L_W: float,
    L_Z: float,
    metric: str = "real",
) -> float:
    """``L_Z W_1(nu, mu) + (L_W/n) sum_i E_nu W_1(P_{W|Z_i}, P_W)``."""
    if metric not in ("real", "hamming"):
        raise ValueError(f"unsupported metric {metric!r}")
    _nonneg("Lipschitz constants", (L_W, L_Z))
    kernels = [kernel] if isinstance(kernel, FiniteKernel) else list(kernel)
    terms = []
    for k in kernels:
        pw = marginal(compose(k, nu), "W")
        terms.append(kernel_expected_distance(k, nu, pw, metric))
    return L_Z * wasserstein1(nu, mu, metric) + L_W * float(np.mean(terms))


# --------------------------------------------------------------------------
# PP bounds


def pp_bound(
    kind: str,
    divergence_value: float,
    *,
    B: float = 1.0,
    sigma: float | None = None,
    c: float = 0.0,
    theta: float = 0.5,
    alpha: float = 1.5,
) -> float:
    """``(psi*)^{-1}`` of a marginal divergence, one row per assumption/divergence pair.

    ``divergence_value`` is ``D(nu||mu)`` for the named divergence; for
    ``"rkl"`` that is ``KL(mu||nu)``.
    """
    d = float(divergence_value)
    if d < 0:
        raise ValueError("divergence must be nonnegative")
    if kind in ("sg", "sgam", "chi2"):
        if sigma is None:
            raise BoundError(f"pp {kind} bound needs sigma")
        if kind == "sg":
            return math.sqrt(2.0 * sigma**2 * d)
        if kind == "sgam":
            return math.sqrt(2.0 * sigma**2 * d) + c * d
        return math.sqrt(sigma**2 * d)
    if not math.isfinite(B):
        raise BoundError(f"pp {kind} bound needs a bounded loss")
    if kind == "kl" or kind == "rkl":
        return B * math.sqrt(d / 2.0)
    if kind == "h2":
        return B * math.sqrt(d)
    if kind == "js":
        if not 0 < theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        return B * math.sqrt(d / (2.0 * theta * (1.0 - theta)))
    if kind == "lecam":
        return B * math.sqrt(2.0 * d)
    if kind == "alpha":
        if not -1.0 <= alpha <= 2.0:
            raise BoundError("bounded alpha-divergence bound needs alpha in [-1, 2]")
        return B * math.sqrt(d / 2.0)
    raise ValueError(f"unknown pp bound kind {kind!r}")


# --------------------------------------------------------------------------
# interpolated bound


def recentered_loss(loss_table, mu: FiniteDist) -> np.ndarray:
    """``E_mu loss(w, Z) - loss(w, z)`` as a ``(|W|, |Z|)`` table."""
    tab = np.asarray(loss_table, dtype=float)
    return (tab @ mu.probs)[:, None] - tab


@dataclass(frozen=True)
class InterpolatedResult:
    value: float
    family: str
    parameter: float
    tv_endpoint: float
    f_endpoint: float
    eta: np.ndarray = field(repr=False)


def interpolated_bound(
    p: FiniteJoint,
    q: FiniteJoint,
    g: FGenerator,
    psi: PsiBound | None = None,
    B: float = 1.0,
    eta_family: str = "mixture",
    grid_size: int = 21,
    loss_table=None,
) -> InterpolatedResult:
    """Minimize ``IPM(P, eta) + (psi*)^{-1}(D_f(eta||Q))`` over a one-parameter family of ``eta``.

    The IPM is over functions with range ``B``.  ``psi`` defaults to the exact
    CGF of the recentered loss (needs ``loss_table``), or to
    ``B^2 t^2 / (8 f''(1))`` when no table is given.

    ``"mixture"`` searches ``(1-s) Q + s P``; these keep ``Q``'s W-marginal, so
    the IPM is ``B TV``.  ``"gibbs"`` searches the tilts of ``Q`` by the
    recentered loss, whose W-marginal moves, so it pays ``2 B TV``.  Both
    families always include the two endpoints ``s = 0`` and ``s = 1``.
    """
    if not p.same_supports(q):
        raise ValueError("P and Q must share supports")
    if not math.isfinite(B):
        raise BoundError("interpolated bound needs a bounded loss")
    pv, qv = p.matrix.ravel(), q.matrix.ravel()
    lbar = None
    if loss_table is not None:
        lbar = recentered_loss(loss_table, marginal(q, "Z")).ravel()
    q_flat = FiniteDist(range(qv.size), qv)
    if psi is None:
        if lbar is not None:
            psi = cgf_psi(g, q_flat, lbar)
        else:
            if not check_lemma3_condition(g).holds:
                raise BoundError(f"{g.label}: no quadratic psi available")
            psi = PsiBound.bounded_quadratic(B, g.fpp1)

    tv_pq = B * 0.5 * float(np.abs(pv - qv).sum())

    def transport(eta: np.ndarray) -> float:
        return psi_star_inverse(psi, f_divergence_vectors(g, eta, qv).value)

    def mixture(s: float) -> float:
        eta = (1.0 - s) * qv + s * pv
        return (1.0 - s) * tv_pq + transport(eta)

    f_end = transport(pv)
    best = (tv_pq, 0.0, qv)
    if f_end < best[0]:
        best = (f_end, 1.0, pv)

    def improves(val: float) -> bool:
        # interior points beat an endpoint only by more than summation roundoff
        return val < best[0] - 8.0 * np.finfo(float).eps * max(1.0, abs(best[0]))

    if eta_family in ("mixture", "both"):
        grid = np.linspace(0.0, 1.0, max(grid_size, 2))
        vals = np.array([mixture(s) for s in grid])
        k = int(np.argmin(vals))
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
        s_ref, v_ref = golden_min(mixture, lo, hi, tol=1e-8)
        if improves(float(vals[k])):
            best = (float(vals[k]), float(grid[k]), (1 - grid[k]) * qv + grid[k] * pv)
        if improves(v_ref):
            best = (v_ref, s_ref, (1 - s_ref) * qv + s_ref * pv)
        if eta_family == "mixture":
            return InterpolatedResult(best[0], "mixture", best[1], tv_pq, f_end, best[2])
    if eta_family not in ("gibbs", "both"):
        raise ValueError(f"unknown eta family {eta_family!r}")
    if lbar is None:
        raise ValueError("the gibbs family needs loss_table")
    family = "mixture" if best[1] not in (0.0, 1.0) else "endpoint"
    for t in np.geomspace(1e-3, 1e3, max(grid_size, 2)):
        try:
            eta, _ = gibbs_tilt(g, q_flat, lbar, float(t))
        except ValueError:
            continue
        val = B * float(np.abs(pv - eta.probs).sum()) + transport(eta.probs)
        if improves(val):
            best, family = (val, float(t), eta.probs), "gibbs"
    return InterpolatedResult(best[0], family, best[1], tv_pq, f_end, best[2])
