"""Brute-force and Monte Carlo oracles for the duality machinery and the experiments."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .bounds import interpolated_bound, recentered_loss
from .cgf import generalized_cgf, generalized_cgf_batch, gibbs_tilt, log_mgf
from .dist import FiniteDist, FiniteJoint
from .divergence import f_divergence, f_divergence_vectors, total_variation
from .examples import (
    BernoulliExperiment,
    GaussianExperiment,
    bernoulli_joint,
    bernoulli_reference,
    bernoulli_true_gap,
    gaussian_true_gap,
    squared_loss_table,
)
from .fgen import (
    STANDARD_GENERATORS,
    FGenerator,
    GeneratorError,
    check_lemma3_condition,
    registry_get,
    validate_generator,
)

MAX_DENSE_ATOMS = 12
MC_CHUNK = 10_000


@dataclass
class OracleReport:
    """Outcome of one oracle; ``max_violation`` is the worst signed slack (negative = violated)."""

    check: str
    instances: int
    max_violation: float
    worst: str
    passed: bool
    tolerance: float
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = asdict(self)
        for k in ("max_violation",):
            if not math.isfinite(out[k]):
                out[k] = repr(out[k])
        return out


def _merge(check: str, reports: Sequence[OracleReport], tolerance: float) -> OracleReport:
    """Max-violation reduction; independent of report order."""
    worst = min(reports, key=lambda r: (r.max_violation, r.worst))
    details = {"failed_instances": sum(not r.passed for r in reports)}
    gaps = [r.details["grid_gap"] for r in reports if "grid_gap" in r.details]
    if gaps:
        details["max_grid_gap"] = max(gaps)
    return OracleReport(
        check,
        sum(r.instances for r in reports),
        worst.max_violation,
        worst.worst,
        all(r.passed for r in reports),
        tolerance,
        details,
    )


def random_pair(rng: np.random.Generator, k: int, zeros: bool = False) -> tuple[FiniteDist, FiniteDist]:
    """Two Dirichlet draws on ``k`` shared atoms; ``zeros`` blanks one atom of ``p``."""
    p = rng.dirichlet(np.ones(k))
    q = rng.dirichlet(np.ones(k))
    if zeros and k > 1:
        p[rng.integers(k)] = 0.0
        p /= p.sum()
    return FiniteDist(range(k), p), FiniteDist(range(k), q)


# --------------------------------------------------------------------------
# variational representation


def _analytic_witness(g: FGenerator, p: FiniteDist, q: FiniteDist) -> np.ndarray | None:
    """``f'(dp/dq)`` per atom, the maximizer of the variational objective."""
    if g.fprime is None or np.any(q.probs <= 0) or np.any(p.probs <= 0):
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        w = g.fprime(p.probs / q.probs)
    return w if np.all(np.isfinite(w)) else None


def _numeric_witness(g: FGenerator, p: FiniteDist, q: FiniteDist) -> np.ndarray | None:
    """Central-difference ``f'(dp/dq)``, used to size the grid when ``f'`` is not registered."""
    if np.any(q.probs <= 0) or np.any(p.probs <= 0):
        return None
    x = p.probs / q.probs
    h = 1e-6 * np.minimum(1.0, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = (g(x + h) - g(x - h)) / (2 * h)
    return w if np.all(np.isfinite(w)) else None


def variational_fdiv_check(
    g: FGenerator,
    p: FiniteDist,
    q: FiniteDist,
    grid_points: int = 17,
    G: float | None = None,
    upper_tol: float = 1e-8,
) -> OracleReport:
    """Search ``sup_h E_p h - Lambda_{f,q}(h)`` and compare it with ``D_f(p||q)``.

    The sup never exceeds the divergence (asserted at ``upper_tol``); how far
    below it the search stays is reported as ``grid_gap``.  Per-atom values
    come from a ``grid_points`` grid on ``[-G, G]`` with the first atom pinned
    at 0 (the objective is translation invariant), plus ``f'(dp/dq)``.
    """
    if p.support != q.support:
        raise ValueError("p and q must share a support")
    k = len(q)
    if k > MAX_DENSE_ATOMS:
        raise ValueError(f"support too large for the dense search ({k} > {MAX_DENSE_ATOMS})")
    d = f_divergence(g, p, q).value
    witness = _analytic_witness(g, p, q)
    guess = witness if witness is not None else _numeric_witness(g, p, q)
    if G is None:
        G = 1.0 if guess is None else max(1.0, 1.5 * float(np.max(np.abs(guess - guess[0]))))
        G = min(G, 30.0)
    axis = np.linspace(-G, G, grid_points)
    if k <= 4:
        rest = np.array(list(itertools.product(axis, repeat=k - 1))).reshape(-1, k - 1)
        H = np.hstack([np.zeros((rest.shape[0], 1)), rest])
    else:
        H = _coordinate_ascent(g, p, q, axis)
    vals = H @ p.probs - generalized_cgf_batch(g, q, H)
    best = float(vals.max())
    if guess is not None:
        best = max(best, float(p.expect(guess) - generalized_cgf(g, q, guess)))
    upper_slack = d + upper_tol - best
    gap = d - best
    return OracleReport(
        f"variational:{g.label}",
        1,
        float(upper_slack) if math.isfinite(d) else math.inf,
        f"p={np.round(p.probs, 6).tolist()} q={np.round(q.probs, 6).tolist()}",
        bool(upper_slack >= 0),
        upper_tol,
        {"divergence": d, "sup": best, "grid_gap": gap, "G": G, "analytic": witness is not None},
    )


def _coordinate_ascent(g, p, q, axis, sweeps: int = 6) -> np.ndarray:
    k = len(q)
    h = np.zeros(k)
    rows = [h.copy()]
    for _ in range(sweeps):
        for j in range(1, k):
            cand = np.repeat(h[None, :], axis.size, axis=0)
            cand[:, j] = axis
            vals = cand @ p.probs - generalized_cgf_batch(g, q, cand)
            h = cand[int(np.argmax(vals))]
            rows.append(h.copy())
    return np.array(rows)


# --------------------------------------------------------------------------
# Fenchel-Young, fundamental inequality, tightness


def tightness_check(g: FGenerator, q: FiniteDist, values, t: float, tol: float = 1e-8) -> OracleReport:
    """At the tilt ``eta``: ``E_eta h = (D_f(eta||q) + Lambda(t h)) / t``."""
    h = np.asarray(values, dtype=float)
    eta, lam = gibbs_tilt(g, q, h, t)
    lhs = eta.expect(h)
    rhs = (f_divergence(g, eta, q).value + generalized_cgf(g, q, t * h)) / t
    slack = rhs - lhs
    return OracleReport(
        f"tightness:{g.label}",
        1,
        -abs(slack),
        f"q={np.round(q.probs, 6).tolist()} h={np.round(h, 6).tolist()} t={t:.6g}",
        bool(abs(slack) <= tol),
        tol,
        {"lambda": lam, "slack": slack},
    )


def fenchel_young_slack(g: FGenerator, eta: FiniteDist, q: FiniteDist, h, t: float) -> float:
    """``(D_f(eta||q) + Lambda(t h)) / t - E_eta h``; never negative."""
    h = np.asarray(h, dtype=float)
    return (f_divergence(g, eta, q).value + generalized_cgf(g, q, t * h)) / t - eta.expect(h)


def proposition1_check(
    p_joint: FiniteJoint,
    q_joint: FiniteJoint,
    g: FGenerator,
    loss_table,
    eta_samples: int | Sequence[np.ndarray] = 20,
    t_samples: Sequence[float] = (0.25, 1.0, 4.0),
    seed: int = 0,
    tol: float = 1e-9,
) -> OracleReport:
    """For each sampled ``(eta, t)``: gap <= E_P lbar - E_eta lbar + (D_f(eta||Q) + Lambda(t lbar)) / t.

    The Gibbs tilt at each ``t`` joins the sample; its slack is reported as
    ``tilt_slack`` and is predicted to vanish.
    """
    if not p_joint.same_supports(q_joint):
        raise ValueError("P and Q must share supports")
    pv, qv = p_joint.matrix.ravel(), q_joint.matrix.ravel()
    lbar = recentered_loss(loss_table, _z_marginal(q_joint)).ravel()
    qd = FiniteDist(range(qv.size), qv)
    gap = float(pv @ lbar)
    if isinstance(eta_samples, int):
        rng = np.random.default_rng(seed)
        etas = [rng.dirichlet(np.ones(qv.size)) for _ in range(eta_samples)]
    else:
        etas = [np.asarray(e, dtype=float) for e in eta_samples]
    etas = [pv, qv] + etas
    worst, where, count = math.inf, "", 0
    tilt_slack = math.inf
    for t in t_samples:
        lam_val = generalized_cgf(g, qd, t * lbar)
        tilt, _ = gibbs_tilt(g, qd, lbar, t)
        for j, eta in enumerate(etas + [tilt.probs]):
            rhs = gap - float(eta @ lbar) + (f_divergence_vectors(g, eta, qv).value + lam_val) / t
            s = rhs - gap
            count += 1
            if s < worst:
                worst, where = s, f"t={t:g} eta#{j}"
            if j == len(etas):
                tilt_slack = min(tilt_slack, abs(s))
    return OracleReport(
        f"per_sample_identity:{g.label}", count, worst, where, bool(worst >= -tol), tol, {"tilt_slack": tilt_slack}
    )


def _z_marginal(joint: FiniteJoint) -> FiniteDist:
    return FiniteDist(joint.support_z, joint.matrix.sum(axis=0))


def pinsker_check(
    generators: Iterable[FGenerator] | None = None,
    trials: int = 10_000,
    seed: int = 0,
    stress: bool = True,
    tol: float = 1e-10,
) -> OracleReport:
    """``TV(p, q) <= sqrt(2 sigma_f^2 D_f(p||q))`` with ``B = 1`` on random and near-singular pairs."""
    gens = list(generators) if generators is not None else standard_generators()
    rng = np.random.default_rng(seed)
    worst, where = math.inf, ""
    count = 0
    for i in range(trials):
        k = int(rng.integers(2, 7))
        p, q = random_pair(rng, k, zeros=bool(i % 5 == 0))
        if stress and i % 3 == 0:
            # mass ratios up to 1e6
            q = FiniteDist(range(k), _skew(rng, k))
        tv = total_variation(p, q)
        for g in gens:
            d = f_divergence(g, p, q).value
            s = math.sqrt(2.0 * g.sigma_f(1.0) ** 2 * d) - tv
            count += 1
            if s < worst:
                worst, where = s, f"{g.label} p={np.round(p.probs, 8).tolist()} q={np.round(q.probs, 8).tolist()}"
    return OracleReport("pinsker", count, worst, where, bool(worst >= -tol), tol)


def _skew(rng: np.random.Generator, k: int) -> np.ndarray:
    w = np.exp(rng.uniform(-np.log(1e6), 0.0, size=k))
    return w / w.sum()


def standard_generators(alpha: Sequence[float] = (-1.0, -0.5, 0.5, 1.5, 2.0), theta=(0.2, 0.5)) -> list[FGenerator]:
    out = [registry_get(n) for n in STANDARD_GENERATORS if n not in ("alpha", "js")]
    out += [registry_get("alpha", a=a) for a in alpha]
    out += [registry_get("js", theta=t) for t in theta]
    return out


# --------------------------------------------------------------------------
# Monte Carlo and exact enumeration of the experiments


def mc_gap_estimate(experiment, n: int, replications: int = 100_000, seed: int = 0) -> tuple[float, float]:
    """Mean and standard error of ``E_mu loss(W, Z') - (1/n) sum_i loss(W, Z_i)`` over simulated samples.

    Replications are drawn in fixed chunks of ``MC_CHUNK``, each from its own
    spawned stream, so the result does not depend on how chunks are scheduled.
    """
    if replications < 1:
        raise ValueError("need at least one replication")
    streams = np.random.SeedSequence(seed).spawn(-(-replications // MC_CHUNK))
    sums = np.zeros(2)
    for j, ss in enumerate(streams):
        size = min(MC_CHUNK, replications - j * MC_CHUNK)
        g = _simulate(experiment, n, size, np.random.default_rng(ss))
        sums += (g.sum(), (g * g).sum())
    mean = sums[0] / replications
    var = max(sums[1] / replications - mean * mean, 0.0) * replications / max(replications - 1, 1)
    return float(mean), float(math.sqrt(var / replications))


def _simulate(experiment, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(experiment, BernoulliExperiment):
        z = (rng.random((size, n)) < experiment.p).astype(float)
        w = z.mean(axis=1)
        train = ((w[:, None] - z) ** 2).mean(axis=1)
        q = experiment.p_test
        test = w * w - 2.0 * w * q + q
        return test - train
    if isinstance(experiment, GaussianExperiment):
        d = experiment.d
        z = experiment.mean + math.sqrt(experiment.sigma2) * rng.standard_normal((size, n, d))
        w = z.mean(axis=1)
        train = ((w[:, None, :] - z) ** 2).sum(axis=2).mean(axis=1)
        test = ((w - experiment.mean_test) ** 2).sum(axis=1) + d * experiment.sigma2_test
        return test - train
    raise TypeError(f"unknown experiment {type(experiment).__name__}")


def bernoulli_gap_enumerated(p, p_test, n: int) -> Fraction:
    """Exact PE gap by summing over all ``2^n`` training samples in rational arithmetic."""
    if n > 20:
        raise ValueError("enumeration limited to n <= 20")
    p, q = Fraction(str(p)), Fraction(str(p_test))
    total = Fraction(0)
    for path in itertools.product((0, 1), repeat=n):
        k = sum(path)
        prob = p**k * (1 - p) ** (n - k)
        w = Fraction(k, n)
        train = sum((w - z) ** 2 for z in path) / n
        test = w * w - 2 * w * q + q
        total += prob * (test - train)
    return total


# --------------------------------------------------------------------------
# suite


def _validation_report(g: FGenerator) -> OracleReport:
    try:
        validate_generator(g)
    except GeneratorError as exc:
        return OracleReport(f"generator:{g.label}", 1, -math.inf, str(exc), False, 1e-6)
    return OracleReport(f"generator:{g.label}", 1, 0.0, "", True, 1e-6)


def _cgf_closed_form(trials: int, seed: int) -> OracleReport:
    rng = np.random.default_rng(seed)
    kl = registry_get("kl")
    worst, where = math.inf, ""
    for _ in range(trials):
        k = int(rng.integers(2, 8))
        q = FiniteDist(range(k), rng.dirichlet(np.ones(k)))
        h = rng.uniform(-3, 3, size=k)
        s = 1e-9 - abs(generalized_cgf(kl, q, h) - log_mgf(q, h))
        if s < worst:
            worst, where = s, f"q={np.round(q.probs, 6).tolist()}"
    return OracleReport("cgf_kl_closed_form", trials, worst, where, worst >= 0, 1e-9)


def _table_reports() -> list[OracleReport]:
    expected_sigma = {
        "kl": 0.5, "chi2": 1 / (2 * math.sqrt(2)), "h2": 1 / math.sqrt(2), "rkl": 0.5,
        "js": 1 / (2 * math.sqrt(0.25)), "lecam": 1.0, "alpha": 0.5,
    }
    worst, where = math.inf, ""
    for name, want in expected_sigma.items():
        s = -abs(registry_get(name).sigma_f(1.0) - want)
        if s < worst:
            worst, where = s, name
    sig = OracleReport("table_sigma_f", len(expected_sigma), worst, where, worst >= -1e-15, 1e-15)
    expected_bounded = {("kl",): True, ("chi2",): True, ("h2",): True, ("rkl",): True, ("js",): True, ("lecam",): True}
    rows = {k: check_lemma3_condition(registry_get(*k)).holds for k in expected_bounded}
    alpha_ok = all(
        check_lemma3_condition(registry_get("alpha", a=a)).holds == (-1.0 <= a <= 2.0)
        for a in (-3.0, -1.5, -1.0, -0.5, 0.5, 1.5, 2.0, 2.5, 3.0)
    )
    good = alpha_ok and all(rows[k] == v for k, v in expected_bounded.items())
    return [sig, OracleReport("table_bounded_condition", len(rows) + 9, 0.0 if good else -1.0, "", good, 0.0)]


def run_suite(seed: int = 0, quick: bool = False, generators: Sequence[FGenerator] | None = None) -> list[OracleReport]:
    """Every oracle at default tolerances; ``quick`` shrinks instance counts."""
    gens = list(generators) if generators is not None else standard_generators(alpha=(1.5,), theta=(0.5,))
    per_gen = 10 if quick else 100
    rng = np.random.default_rng(seed)
    reports = [_validation_report(g) for g in gens]
    usable = [g for g, r in zip(gens, reports) if r.passed]
    reports += _table_reports()
    reports.append(_cgf_closed_form(per_gen, seed))

    for g in usable:
        var, tight = [], []
        for _ in range(per_gen):
            k = int(rng.integers(2, 5))
            p, q = random_pair(rng, k)
            var.append(variational_fdiv_check(g, p, q))
            if g.conj_derivative is not None:
                qd = FiniteDist(range(k), rng.dirichlet(np.ones(k)))
                tight.append(tightness_check(g, qd, rng.uniform(-1, 1, k), float(rng.uniform(0.1, 3.0))))
        reports.append(_merge(f"variational:{g.label}", var, 1e-8))
        if tight:
            reports.append(_merge(f"tightness:{g.label}", tight, 1e-8))

    exp = BernoulliExperiment(0.3, 0.1)
    for n in (2, 5):
        pj, qj = bernoulli_joint(exp, n), bernoulli_reference(exp, n)
        for g in usable[:3]:
            rep = proposition1_check(pj, qj, g, squared_loss_table(pj), 10 if quick else 30, seed=seed)
            rep.check += f":bernoulli n={n}"
            reports.append(rep)

    reports.append(pinsker_check(usable, trials=500 if quick else 5_000, seed=seed))

    worst, where = math.inf, ""
    n_max = 8 if quick else 12
    for n in range(1, n_max + 1):
        s = 1e-12 - abs(float(bernoulli_gap_enumerated(0.3, 0.1, n)) - bernoulli_true_gap(exp, n))
        if s < worst:
            worst, where = s, f"n={n}"
    reports.append(OracleReport("bernoulli_gap_enumeration", n_max, worst, where, worst >= 0, 1e-12))

    reps = 20_000 if quick else 200_000
    mc = []
    for label, e, n, formula in (
        ("bernoulli n=1", exp, 1, bernoulli_true_gap(exp, 1)),
        ("gaussian in-dist n=10", GaussianExperiment(), 10, gaussian_true_gap(GaussianExperiment(), 10)),
        ("gaussian ood n=2", GaussianExperiment(sigma2_test=2.0), 2, gaussian_true_gap(GaussianExperiment(sigma2_test=2.0), 2)),
    ):
        mean, se = mc_gap_estimate(e, n, reps, seed)
        mc.append(OracleReport(f"mc_gap:{label}", reps, 3 * se - abs(mean - formula), label, abs(mean - formula) <= 3 * se, 3 * se))
    reports.append(_merge("mc_gap", mc, 0.0))

    kl = registry_get("kl")
    interp = []
    for e in (BernoulliExperiment(0.3, 0.1), BernoulliExperiment(0.6, 0.01)):
        for n in (2, 10):
            pj, qj = bernoulli_joint(e, n), bernoulli_reference(e, n)
            res = interpolated_bound(pj, qj, kl, loss_table=squared_loss_table(pj))
            mean, se = mc_gap_estimate(e, n, reps // 4, seed)
            s = res.value - (mean - 3 * se)
            interp.append(OracleReport("interp_mc", 1, s, f"p={e.p} p'={e.p_test} n={n}", s >= 0, 0.0))
    reports.append(_merge("interp_vs_mc", interp, 0.0))
    return reports
