"""The Gaussian- and Bernoulli-mean experiments: exact joints, true gaps, and n-sweeps."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .bounds import (
    ALL_NAMES,
    BoundError,
    BoundReport,
    interpolated_bound,
    pe_bound_chi2,
    pe_bound_fdiv_bounded,
    pe_bound_kl_subgamma,
    pe_bound_kl_subgaussian,
    pe_bound_tv,
    pe_bound_wasserstein,
    pp_bound,
)
from .dist import FiniteDist, FiniteJoint, GaussianSpec, conditional
from .divergence import (
    chi2_gaussian,
    f_divergence,
    gaussian_mutual_information,
    kl_gaussian,
    mutual_information,
)
from .fgen import parse_generator_spec, registry_get


@dataclass(frozen=True)
class GaussianExperiment:
    """Train on N(m, sigma2 I_d), test on N(m_test, sigma2_test I_d), estimate by the sample mean."""

    m: float | tuple = 1.0
    sigma2: float = 1.0
    m_test: float | tuple = 1.0
    sigma2_test: float = 1.0
    d: int = 1

    def __post_init__(self):
        if self.sigma2 <= 0 or self.sigma2_test <= 0:
            raise ValueError("variances must be positive")
        if self.d < 1:
            raise ValueError("d must be at least 1")
        for v in (self.m, self.m_test):
            if np.ndim(v) and np.size(v) != self.d:
                raise ValueError("mean vector length must equal d")

    @property
    def mean(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.m, dtype=float), (self.d,)).copy()

    @property
    def mean_test(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.m_test, dtype=float), (self.d,)).copy()

    @property
    def shift2(self) -> float:
        return float(np.sum((self.mean - self.mean_test) ** 2))


@dataclass(frozen=True)
class BernoulliExperiment:
    """Train on Bern(p)^n, test on Bern(p_test), estimate by the sample mean."""

    p: float = 0.3
    p_test: float = 0.1

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.p_test <= 1.0):
            raise ValueError("p and p_test must lie in [0, 1]")


# --------------------------------------------------------------------------
# Gaussian


def gaussian_joints(exp: GaussianExperiment, n: int) -> tuple[GaussianSpec, GaussianSpec]:
    """Joint laws of ``(Z_i, W)`` under training (``P_i``) and the product reference (``Q``).

    Coordinates are ordered ``[Z, W]``; each block is ``d x d``.  For ``n = 1``
    the estimator equals the sample, so ``P_1`` is degenerate.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    d, s2 = exp.d, exp.sigma2
    eye = np.eye(d)
    cov_p = np.block([[s2 * eye, s2 / n * eye], [s2 / n * eye, s2 / n * eye]])
    p = GaussianSpec(np.concatenate([exp.mean, exp.mean]), full_cov=cov_p, allow_singular=True)
    cov_q = np.block([[exp.sigma2_test * eye, 0 * eye], [0 * eye, s2 / n * eye]])
    q = GaussianSpec(np.concatenate([exp.mean_test, exp.mean]), full_cov=cov_q)
    return p, q


def gaussian_true_gap(exp: GaussianExperiment, n: int) -> float:
    """Expected test loss minus expected training loss of the sample mean."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return (exp.sigma2_test - exp.sigma2) * exp.d + 2.0 * exp.sigma2 * exp.d / n + exp.shift2


def gaussian_pp_gap(exp: GaussianExperiment) -> float:
    """Test minus training population loss with ``W`` drawn independently of the sample."""
    return (exp.sigma2_test - exp.sigma2) * exp.d + exp.shift2


def gaussian_loss_scales(exp: GaussianExperiment, n: int) -> tuple[float, float, float]:
    """``(sigma, sigma_gamma, c)`` for the squared loss under ``Q = P_W x mu``.

    Under ``Q``, ``W - Z ~ N(m - m', s^2 I)`` with ``s^2 = sigma'^2 + sigma^2/n``.
    The centered squared norm is sub-gamma with variance factor
    ``2 d s^4 + 4 s^2 |m - m'|^2`` and scale ``2 s^2``; ``sigma`` is the larger of
    the stated sub-Gaussian parameter ``2 s^2`` and the standard deviation of
    the loss, so it also serves as a variance cap.
    """
    s2 = exp.sigma2_test + exp.sigma2 / n
    var = 2.0 * exp.d * s2 * s2 + 4.0 * s2 * exp.shift2
    return max(2.0 * s2, math.sqrt(var)), math.sqrt(var), 2.0 * s2


def _gaussian_marginals(exp: GaussianExperiment) -> tuple[GaussianSpec, GaussianSpec]:
    return GaussianSpec(exp.mean, exp.sigma2), GaussianSpec(exp.mean_test, exp.sigma2_test)


# --------------------------------------------------------------------------
# Bernoulli


def bernoulli_joint(exp: BernoulliExperiment, n: int, i: int = 1) -> FiniteJoint:
    """``P_i`` on ``W in {0, 1/n, ..., 1}`` x ``Z_i in {0, 1}``.

    ``P(Z_i = 1, W = k/n) = p * Bin(k-1; n-1, p)`` and
    ``P(Z_i = 0, W = k/n) = (1-p) * Bin(k; n-1, p)``; every ``i`` gives the
    same joint by exchangeability.
    """
    if not 1 <= i <= n:
        raise ValueError("need 1 <= i <= n")
    k = np.arange(n + 1)
    m = np.empty((n + 1, 2))
    m[:, 0] = (1.0 - exp.p) * _binom_pmf(k, n - 1, exp.p)
    m[:, 1] = exp.p * _binom_pmf(k - 1, n - 1, exp.p)
    return FiniteJoint(_w_atoms(n), (0, 1), m)


def bernoulli_reference(exp: BernoulliExperiment, n: int) -> FiniteJoint:
    """``Q = Binomial(n, p)/n x Bern(p_test)``."""
    pw = FiniteDist(_w_atoms(n), _binom_pmf(np.arange(n + 1), n, exp.p))
    return FiniteJoint.product(pw, FiniteDist.bernoulli(exp.p_test))


def _binom_pmf(k, m: int, p: float) -> np.ndarray:
    # log space; scipy.stats.binom raises on subnormal p
    k = np.asarray(k, dtype=float)
    inside = (k >= 0) & (k <= m)
    kk = np.where(inside, k, 0.0)
    log_c = gammaln(m + 1.0) - gammaln(kk + 1.0) - gammaln(m - kk + 1.0)
    out = np.exp(log_c + xlogy(kk, p) + xlog1py(m - kk, -p))
    return np.where(inside, out, 0.0)


def _w_atoms(n: int) -> tuple[float, ...]:
    return tuple(k / n for k in range(n + 1))


def squared_loss_table(joint: FiniteJoint) -> np.ndarray:
    w = np.array(joint.support_w, dtype=float)[:, None]
    z = np.array(joint.support_z, dtype=float)[None, :]
    return (w - z) ** 2


def bernoulli_true_gap(exp: BernoulliExperiment, n: int) -> float:
    """``2 sum_k C(n-1,k-1) p^k (1-p)^(n-k) k/n + (1 - 2p) p' - p``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    k = np.arange(1, n + 1)
    ez_w = float(np.sum(exp.p * _binom_pmf(k - 1, n - 1, exp.p) * k / n))
    return 2.0 * ez_w + (1.0 - 2.0 * exp.p) * exp.p_test - exp.p


def bernoulli_true_gap_moments(exp: BernoulliExperiment, n: int) -> float:
    """The same gap through ``E[W Z_i] = p/n + (n-1) p^2 / n``."""
    p, q = exp.p, exp.p_test
    return 2.0 * (p / n + (n - 1) * p * p / n) + (1.0 - 2.0 * p) * q - p


def bernoulli_pp_gap(exp: BernoulliExperiment) -> float:
    return (exp.p_test - exp.p) * (1.0 - 2.0 * exp.p)


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepOptions:
    bounds: tuple[str, ...] = ALL_NAMES
    alpha: float = 1.5
    theta: float = 0.5
    B: float = 1.0
    interp_generator: str = "kl"
    interp_grid: int = 21
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        unknown = [b for b in self.bounds if b not in ALL_NAMES]
        if unknown:
            raise ValueError(f"unknown bound identifiers: {', '.join(unknown)}")


def parse_n_range(spec: str) -> list[int]:
    """``"1..100"``, ``"5"`` or ``"1,2,10"`` to a list of sample sizes."""
    out: list[int] = []
    for part in str(spec).split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..", 1)
            lo, hi = int(a), int(b)
            if lo > hi:
                raise ValueError(f"empty range {part!r}")
            out.extend(range(lo, hi + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 1:
        raise ValueError("sample sizes must be positive")
    return out


def _gaussian_report(exp: GaussianExperiment, n: int, opts: SweepOptions) -> BoundReport:
    rep = BoundReport(n, gaussian_true_gap(exp, n), gaussian_pp_gap(exp))
    p_joint, q_joint = gaussian_joints(exp, n)
    nu, mu = _gaussian_marginals(exp)
    sigma, sigma_gam, c = gaussian_loss_scales(exp, n)
    mi = gaussian_mutual_information(1.0 / n, exp.d)
    kl_m = kl_gaussian(nu, mu)
    for name in opts.bounds:
        if name == "kl_sg":
            v = pe_bound_kl_subgaussian([mi], kl_m, sigma)
        elif name == "kl_sgam":
            v = pe_bound_kl_subgamma([mi], kl_m, sigma_gam, c)
        elif name == "chi2":
            v = pe_bound_chi2([chi2_gaussian(p_joint, q_joint)], sigma)
        elif name == "pp_sg":
            v = pp_bound("sg", kl_m, sigma=sigma)
        elif name == "pp_sgam":
            v = pp_bound("sgam", kl_m, sigma=sigma_gam, c=c)
        elif name == "pp_chi2":
            v = pp_bound("chi2", chi2_gaussian(nu, mu), sigma=sigma)
        else:
            # squared loss on the real line is neither bounded nor Lipschitz
            v = None
        rep.values[name] = v
    return rep


_FDIV = {
    "f_kl": ("kl", {}),
    "f_chi2": ("chi2", {}),
    "f_h2": ("h2", {}),
    "f_rkl": ("rkl", {}),
    "f_js": ("js", None),
    "f_lecam": ("lecam", {}),
    "f_alpha": ("alpha", None),
}


def _generator_for(key: str, opts: SweepOptions):
    if key == "js":
        return registry_get("js", theta=opts.theta)
    if key == "alpha":
        return registry_get("alpha", a=opts.alpha)
    return registry_get(key)


def _bernoulli_report(exp: BernoulliExperiment, n: int, opts: SweepOptions) -> BoundReport:
    B = opts.B
    rep = BoundReport(n, bernoulli_true_gap(exp, n), bernoulli_pp_gap(exp), B=B)
    p_joint = bernoulli_joint(exp, n)
    q_joint = bernoulli_reference(exp, n)
    nu, mu = FiniteDist.bernoulli(exp.p), FiniteDist.bernoulli(exp.p_test)
    kl = registry_get("kl")
    cache: dict = {}

    def div(key: str, a, b) -> float:
        if (key, id(a)) not in cache:
            cache[(key, id(a))] = f_divergence(_generator_for(key, opts), a, b).value
        return cache[(key, id(a))]

    for name in opts.bounds:
        try:
            if name == "tv":
                v = pe_bound_tv([p_joint], q_joint, B)
            elif name == "wass":
                # a [0, B] loss is B-Lipschitz for the 0-1 metric in each argument
                v = pe_bound_wasserstein(conditional(p_joint), nu, mu, B, B, "hamming")
            elif name in ("kl_sg", "kl_sgam"):
                # Hoeffding: a [0, B] loss is B/2-sub-Gaussian, hence (B/2, 0)-sub-gamma
                mi, kl_m = mutual_information(p_joint), div("kl", nu, mu)
                v = pe_bound_kl_subgamma([mi], kl_m, B / 2.0, 0.0)
            elif name == "chi2":
                v = pe_bound_chi2([div("chi2", p_joint, q_joint)], B / 2.0)
            elif name in _FDIV:
                key = _FDIV[name][0]
                v = pe_bound_fdiv_bounded(_generator_for(key, opts), [div(key, p_joint, q_joint)], B)
            elif name in ("pp_sg", "pp_sgam"):
                v = pp_bound("sg", div("kl", nu, mu), sigma=B / 2.0)
            elif name == "pp_chi2":
                v = pp_bound("chi2", div("chi2", nu, mu), sigma=B / 2.0)
            elif name.startswith("pp_"):
                kind = name[3:]
                v = pp_bound(kind, div(kind, nu, mu), B=B, theta=opts.theta, alpha=opts.alpha)
            elif name == "interp":
                name_, params = parse_generator_spec(opts.interp_generator)
                g = registry_get(name_, **params)
                v = interpolated_bound(
                    p_joint, q_joint, g, B=B, grid_size=opts.interp_grid,
                    loss_table=squared_loss_table(p_joint),
                ).value
            else:
                v = None
        except BoundError:
            v = None
        rep.values[name] = v
    return rep


def report_for(experiment, n: int, opts: SweepOptions) -> BoundReport:
    if isinstance(experiment, GaussianExperiment):
        return _gaussian_report(experiment, n, opts)
    if isinstance(experiment, BernoulliExperiment):
        return _bernoulli_report(experiment, n, opts)
    raise TypeError(f"unknown experiment {type(experiment).__name__}")


def sweep(
    experiment,
    bounds: Sequence[str] | None = None,
    ns: Iterable[int] = range(1, 101),
    *,
    options: SweepOptions | None = None,
    jobs: int = 1,
) -> list[BoundReport]:
    """One :class:`BoundReport` per sample size, in the order of ``ns``."""
    if options is None:
        options = SweepOptions() if bounds is None else SweepOptions(bounds=tuple(bounds))
    elif bounds is not None:
        raise ValueError("pass bounds either directly or through options")
    ns = list(ns)
    if jobs <= 1 or len(ns) < 2:
        return [report_for(experiment, n, options) for n in ns]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(report_for, [experiment] * len(ns), ns, [options] * len(ns)))
