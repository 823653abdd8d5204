"""f-divergences, total variation, chain rules, W1, and Gaussian closed forms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dist import DistributionError, FiniteDist, FiniteJoint, GaussianSpec, align
from .fgen import FGenerator, registry_get


@dataclass(frozen=True)
class DivergenceResult:
    value: float
    continuous_part: float
    singular_part: float

    def __float__(self) -> float:
        return self.value


def _as_vectors(p, q) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(p, FiniteJoint) and isinstance(q, FiniteJoint):
        if p.same_supports(q):
            return p.matrix.ravel(), q.matrix.ravel()
        p, q = p.flat(), q.flat()
    if isinstance(p, FiniteDist) and isinstance(q, FiniteDist):
        pv, qv, _ = align(p, q)
        return pv, qv
    raise TypeError("expected two FiniteDist or two FiniteJoint")


def f_divergence_vectors(g: FGenerator, pv: np.ndarray, qv: np.ndarray) -> DivergenceResult:
    """``sum_{q>0} q f(p/q) + f'(inf) * P(q = 0)`` on aligned probability vectors."""
    charged = qv > 0
    pc, qc = pv[charged], qv[charged]
    live = pc > 0
    cont = float(np.dot(qc[live], g(pc[live] / qc[live])))
    cont += g.f_at_zero * float(qc[~live].sum()) if np.any(~live) else 0.0
    mass = float(pv[~charged].sum())
    sing = g.f_prime_at_inf * mass if mass > 0 else 0.0
    # roundoff can push an exact zero slightly negative
    cont = max(cont, 0.0) if cont > -1e-14 else cont
    return DivergenceResult(cont + sing, cont, sing)


def f_divergence(g: FGenerator, p, q) -> DivergenceResult:
    """``D_f(p || q)`` for finite distributions or joints on a common universe."""
    pv, qv = _as_vectors(p, q)
    return f_divergence_vectors(g, pv, qv)


def total_variation(p, q) -> float:
    pv, qv = _as_vectors(p, q)
    return min(1.0, 0.5 * float(np.abs(pv - qv).sum()))


def kl_finite(p, q) -> float:
    """KL divergence in nats, ``+inf`` if ``p`` is not absolutely continuous w.r.t. ``q``."""
    return f_divergence(registry_get("kl"), p, q).value


def mutual_information(joint: FiniteJoint) -> float:
    """``I(W; Z)`` of a finite joint, in nats."""
    m = joint.matrix
    outer = np.outer(m.sum(axis=1), m.sum(axis=0))
    nz = m > 0
    return max(0.0, float(np.sum(m[nz] * np.log(m[nz] / outer[nz]))))


# --------------------------------------------------------------------------
# Gaussian closed forms


def kl_gaussian(p: GaussianSpec, q: GaussianSpec) -> float:
    """KL divergence between multivariate normals; ``+inf`` if either is degenerate."""
    if p.dim != q.dim:
        raise DistributionError("dimension mismatch")
    if p.singular or q.singular:
        # a degenerate normal is singular w.r.t. every nondegenerate one;
        # two degenerate ones are left unsupported
        if q.singular:
            raise DistributionError("reference covariance must be positive definite")
        return math.inf
    sp, sq = p.cov, q.cov
    _, ld_p = np.linalg.slogdet(sp)
    _, ld_q = np.linalg.slogdet(sq)
    diff = p.mean - q.mean
    tr = float(np.trace(np.linalg.solve(sq, sp)))
    quad = float(diff @ np.linalg.solve(sq, diff))
    return max(0.0, 0.5 * (ld_q - ld_p - p.dim + tr + quad))


def chi2_gaussian(p: GaussianSpec, q: GaussianSpec) -> float:
    """``chi^2(p || q)``; finite iff ``2 Sigma_q - Sigma_p`` is positive definite."""
    if p.dim != q.dim:
        raise DistributionError("dimension mismatch")
    if q.singular:
        raise DistributionError("reference covariance must be positive definite")
    if p.singular:
        return math.inf
    sp, sq = p.cov, q.cov
    m = 2.0 * sq - sp
    eig = np.linalg.eigvalsh(m)
    if eig.min() <= 1e-12 * max(1.0, float(np.abs(eig).max())):
        return math.inf
    _, ld_p = np.linalg.slogdet(sp)
    _, ld_q = np.linalg.slogdet(sq)
    _, ld_m = np.linalg.slogdet(m)
    diff = p.mean - q.mean
    quad = float(diff @ np.linalg.solve(m, diff))
    log_ratio = ld_q - 0.5 * ld_p - 0.5 * ld_m + quad
    return max(0.0, math.expm1(log_ratio))


def gaussian_mutual_information(rho2: float, d: int = 1) -> float:
    """``I(W; Z)`` for jointly normal coordinates with squared correlation ``rho2``."""
    if rho2 >= 1.0:
        return math.inf
    return -0.5 * d * math.log1p(-rho2)


# --------------------------------------------------------------------------
# chain rules and W1


def chain_rule_chi2(kernel_sup_term: float, marginal_term: float) -> float:
    """``(1 + sup_z chi^2(P_{W|z} || Q_W)) (1 + chi^2(nu || mu)) - 1``."""
    if kernel_sup_term < 0 or marginal_term < 0:
        raise ValueError("chi-square terms must be nonnegative")
    return kernel_sup_term + marginal_term + kernel_sup_term * marginal_term


def chain_rule_tv(per_step_terms: Sequence[float]) -> float:
    terms = [float(t) for t in per_step_terms]
    if any(t < 0 or t > 1 for t in terms):
        raise ValueError("total-variation terms lie in [0, 1]")
    return min(1.0, sum(terms))


def wasserstein1(p: FiniteDist, q: FiniteDist, metric: str = "real") -> float:
    """``W_1`` under ``|x - y|`` on the line (``"real"``) or the 0-1 metric (``"hamming"``)."""
    if metric == "hamming":
        return total_variation(p, q)
    if metric != "real":
        raise ValueError(f"unsupported metric {metric!r}")
    pv, qv, support = align(p, q)
    try:
        xs = np.array([float(a) for a in support])
    except (TypeError, ValueError) as exc:
        raise DistributionError("real-line metric needs real-valued atoms") from exc
    order = np.argsort(xs, kind="stable")
    xs, pv, qv = xs[order], pv[order], qv[order]
    gap = np.cumsum(pv - qv)[:-1]
    return float(np.sum(np.abs(gap) * np.diff(xs)))
