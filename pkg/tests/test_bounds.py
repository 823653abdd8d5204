import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oodbounds.bounds import (
    ALL_NAMES,
    BoundError,
    BoundReport,
    LossModel,
    interpolated_bound,
    pe_bound_chi2,
    pe_bound_fdiv_bounded,
    pe_bound_kl_subgamma,
    pe_bound_kl_subgaussian,
    pe_bound_tv,
    pe_bound_tv_decomposed,
    pe_bound_wasserstein,
    pp_bound,
    recentered_loss,
)
from oodbounds.dist import FiniteDist, FiniteJoint, FiniteKernel, conditional, marginal
from oodbounds.divergence import f_divergence, total_variation
from oodbounds.examples import (
    BernoulliExperiment,
    bernoulli_joint,
    bernoulli_reference,
    bernoulli_true_gap,
    squared_loss_table,
)
from oodbounds.fgen import registry_get
from oodbounds.verify import standard_generators

from .conftest import dist_pairs

BERN = BernoulliExperiment(0.3, 0.1)


def bern_pair(n, exp=BERN):
    return bernoulli_joint(exp, n), bernoulli_reference(exp, n)


class TestModels:
    def test_names_are_stable(self):
        assert ALL_NAMES[:5] == ("tv", "wass", "kl_sg", "kl_sgam", "chi2")
        assert ALL_NAMES[-1] == "interp"
        assert "pp_js" in ALL_NAMES and "f_lecam" in ALL_NAMES

    def test_loss_model_validation(self):
        assert LossModel(B=1.0).bounded
        assert not LossModel().bounded
        with pytest.raises(ValueError):
            LossModel(B=-1.0)
        with pytest.raises(ValueError):
            LossModel(kind="table")
        with pytest.raises(ValueError):
            LossModel(kind="hinge")

    def test_report_vacuity_and_targets(self):
        rep = BoundReport(3, 0.1, 0.05, {"tv": 0.5, "f_kl": 1.2, "pp_kl": None}, B=1.0)
        assert rep.vacuous == {"tv": False, "f_kl": True, "pp_kl": False}
        assert rep.target("pp_kl") == 0.05
        assert rep.target("tv") == 0.1


class TestPEBounds:
    def test_tv_zero_when_equal(self):
        q = bern_pair(3)[1]
        assert pe_bound_tv([q, q], q, 1.0) == 0.0

    def test_tv_bernoulli_n1(self):
        p, q = bern_pair(1)
        # P_1 = diag(0.7, 0.3); Q = Bern(0.3)_W x Bern(0.1)_Z
        want = 0.5 * (abs(0.7 - 0.63) + 0.07 + 0.27 + abs(0.3 - 0.03))
        assert pe_bound_tv([p], q, 1.0) == pytest.approx(want, abs=1e-15)
        assert want == pytest.approx(0.34)

    def test_tv_needs_bounded_loss(self):
        p, q = bern_pair(2)
        with pytest.raises(BoundError):
            pe_bound_tv([p], q, math.inf)

    @pytest.mark.parametrize("n", [1, 2, 5, 20])
    def test_decomposed_tv_dominates_tv(self, n):
        p, q = bern_pair(n)
        assert pe_bound_tv_decomposed([p], FiniteDist.bernoulli(0.1), 1.0) >= pe_bound_tv([p], q, 1.0) - 1e-12

    def test_kl_subgaussian_examples(self):
        assert pe_bound_kl_subgaussian([0.0], 0.0, 1.0) == 0.0
        assert pe_bound_kl_subgaussian([1.5], 0.5, 1.0) == pytest.approx(2.0)
        mi = 0.5 * math.log(2)
        assert pe_bound_kl_subgaussian([mi], 0.0, 3.0) == pytest.approx(math.sqrt(2 * 9 * mi))

    def test_kl_subgamma_examples(self):
        assert pe_bound_kl_subgamma([1.0], 0.0, 1.0, 1.0) == pytest.approx(math.sqrt(2) + 1)
        assert pe_bound_kl_subgamma([0.0, 0.0], 0.0, 1.0, 1.0) == 0.0
        with pytest.raises(ValueError):
            pe_bound_kl_subgamma([-0.1], 0.0, 1.0, 1.0)

    def test_chi2(self):
        assert pe_bound_chi2([0.0], 2.0) == 0.0
        assert pe_bound_chi2([0.25, 1.0], 2.0) == pytest.approx(1.5)

    def test_fdiv_bounded_examples(self):
        assert pe_bound_fdiv_bounded(registry_get("kl"), [0.5], 1.0) == pytest.approx(0.5)
        assert pe_bound_fdiv_bounded(registry_get("lecam"), [0.125], 1.0) == pytest.approx(0.5)
        assert pe_bound_fdiv_bounded(registry_get("h2"), [0.0], 1.0) == 0.0

    def test_fdiv_bounded_rejects_generators_failing_curvature_condition(self):
        with pytest.raises(BoundError, match="no quadratic psi"):
            pe_bound_fdiv_bounded(registry_get("alpha", a=3.0), [0.1], 1.0)
        with pytest.raises(BoundError):
            pe_bound_fdiv_bounded(registry_get("kl"), [0.1], math.inf)

    def test_wasserstein_zero(self):
        nu = FiniteDist.bernoulli(0.4)
        k = FiniteKernel.constant([0, 1], FiniteDist([0, 1], [0.5, 0.5]))
        assert pe_bound_wasserstein(k, nu, nu, 1.0, 1.0) == 0.0

    def test_wasserstein_point_shift(self):
        k = FiniteKernel.constant([0, 1], FiniteDist.point(0))
        assert pe_bound_wasserstein(k, FiniteDist.point(0).extend([1]), FiniteDist.point(1).extend([0]), 1.0, 2.0) == pytest.approx(2.0)

    @pytest.mark.parametrize("n", [1, 2, 3, 10, 40])
    def test_hamming_wasserstein_coincides_with_tv(self, n):
        p, q = bern_pair(n)
        nu, mu = FiniteDist.bernoulli(0.3), FiniteDist.bernoulli(0.1)
        w = pe_bound_wasserstein(conditional(p), nu, mu, 1.0, 1.0, "hamming")
        assert w == pytest.approx(pe_bound_tv_decomposed([p], mu, 1.0), abs=1e-12)
        assert w >= bernoulli_true_gap(BERN, n) - 1e-9

    @pytest.mark.parametrize("n", [1, 2, 5, 10, 30])
    def test_tv_below_every_bounded_fdiv_bound(self, n):
        p, q = bern_pair(n)
        tv = pe_bound_tv([p], q, 1.0)
        for g in standard_generators():
            assert tv <= pe_bound_fdiv_bounded(g, [f_divergence(g, p, q).value], 1.0) + 1e-10, g.label

    @settings(max_examples=50, deadline=None)
    @given(dist_pairs(4, 4), st.floats(0.1, 10.0))
    def test_homogeneity_in_B(self, pq, k):
        p, q = pq
        pj = FiniteJoint([0, 1], [0, 1], p.probs.reshape(2, 2))
        qj = FiniteJoint([0, 1], [0, 1], q.probs.reshape(2, 2))
        assert pe_bound_tv([pj], qj, k) == pytest.approx(k * pe_bound_tv([pj], qj, 1.0), rel=1e-12)
        for g in (registry_get("kl"), registry_get("h2"), registry_get("lecam")):
            d = [f_divergence(g, pj, qj).value]
            assert pe_bound_fdiv_bounded(g, d, k) == pytest.approx(k * pe_bound_fdiv_bounded(g, d, 1.0), rel=1e-12)
        for kind in ("kl", "h2", "rkl", "js", "lecam", "alpha"):
            assert pp_bound(kind, 0.3, B=k) == pytest.approx(k * pp_bound(kind, 0.3, B=1.0), rel=1e-12)


class TestPPBounds:
    @pytest.mark.parametrize("kind", ["sg", "sgam", "chi2", "kl", "rkl", "h2", "js", "lecam", "alpha"])
    def test_zero_divergence(self, kind):
        assert pp_bound(kind, 0.0, sigma=1.0, c=0.5) == 0.0

    def test_table_rows(self):
        assert pp_bound("sg", 0.5, sigma=1.0) == pytest.approx(1.0)
        assert pp_bound("sgam", 1.0, sigma=1.0, c=1.0) == pytest.approx(math.sqrt(2) + 1)
        assert pp_bound("chi2", 0.25, sigma=2.0) == pytest.approx(1.0)
        assert pp_bound("kl", 0.5) == pytest.approx(0.5)
        assert pp_bound("h2", 0.25) == pytest.approx(0.5)
        assert pp_bound("lecam", 0.125) == pytest.approx(0.5)
        assert pp_bound("alpha", 0.5, alpha=-1.0) == pytest.approx(0.5)

    def test_js_half(self):
        # B sqrt(D / (2 theta (1 - theta))) at theta = 1/2
        assert pp_bound("js", 0.1, theta=0.5) == pytest.approx(math.sqrt(0.2))

    def test_errors(self):
        with pytest.raises(BoundError):
            pp_bound("sg", 0.1)
        with pytest.raises(BoundError):
            pp_bound("alpha", 0.1, alpha=3.0)
        with pytest.raises(BoundError):
            pp_bound("kl", 0.1, B=math.inf)
        with pytest.raises(ValueError):
            pp_bound("kl", -0.1)
        with pytest.raises(ValueError):
            pp_bound("nope", 0.1)
        with pytest.raises(ValueError):
            pp_bound("js", 0.1, theta=1.0)

    def test_independent_of_kernel(self):
        nu, mu = FiniteDist.bernoulli(0.3), FiniteDist.bernoulli(0.1)
        kl = registry_get("kl")
        values = []
        for rows in (
            [FiniteDist.point(0), FiniteDist.point(1)],
            [FiniteDist([0, 1], [0.2, 0.8]), FiniteDist([0, 1], [0.9, 0.1])],
        ):
            joint = FiniteJoint(
                [0, 1], [0, 1], np.column_stack([r.extend([0, 1]).probs for r in rows]) * nu.probs[None, :]
            )
            values.append(pp_bound("sg", f_divergence(kl, marginal(joint, "Z"), mu).value, sigma=0.5))
        assert values[0] == pytest.approx(values[1], rel=1e-14)

    @pytest.mark.parametrize("p, q", [(0.3, 0.1), (0.6, 0.01), (0.5, 0.9), (0.2, 0.2)])
    def test_pp_bounds_cover_pp_gap(self, p, q):
        nu, mu = FiniteDist.bernoulli(p), FiniteDist.bernoulli(q)
        gap = abs((q - p) * (1 - 2 * p))
        for kind, gen in (("kl", "kl"), ("h2", "h2"), ("js", "js"), ("lecam", "lecam"), ("rkl", "rkl"), ("alpha", "alpha")):
            d = f_divergence(registry_get(gen), nu, mu).value
            assert pp_bound(kind, d) >= gap - 1e-12


class TestInterpolated:
    def test_recentered_loss_is_centered(self):
        p, q = bern_pair(4)
        lbar = recentered_loss(squared_loss_table(p), FiniteDist.bernoulli(0.1))
        assert float(np.sum(q.matrix * lbar)) == pytest.approx(0.0, abs=1e-15)

    def test_equal_inputs(self):
        q = bern_pair(3)[1]
        res = interpolated_bound(q, q, registry_get("kl"), loss_table=squared_loss_table(q))
        assert res.value == 0.0

    @pytest.mark.parametrize("exp", [BERN, BernoulliExperiment(0.6, 0.01), BernoulliExperiment(0.5, 0.5)])
    @pytest.mark.parametrize("n", [1, 2, 10])
    @pytest.mark.parametrize("name", ["kl", "h2", "chi2"])
    def test_below_both_endpoints_and_sound(self, exp, n, name):
        p, q = bern_pair(n, exp)
        g = registry_get(name)
        res = interpolated_bound(p, q, g, loss_table=squared_loss_table(p))
        assert res.tv_endpoint == pytest.approx(pe_bound_tv([p], q, 1.0))
        assert res.value <= min(res.tv_endpoint, res.f_endpoint)
        assert res.value >= bernoulli_true_gap(exp, n) - 1e-9

    def test_strict_improvement_on_bernoulli(self):
        p, q = bern_pair(2)
        g = registry_get("kl")
        res = interpolated_bound(p, q, g, loss_table=squared_loss_table(p))
        fdiv = pe_bound_fdiv_bounded(g, [f_divergence(g, p, q).value], 1.0)
        assert res.value == pytest.approx(0.212024, abs=1e-6)
        assert res.tv_endpoint == pytest.approx(0.2982, abs=5e-4)
        assert res.value < min(res.tv_endpoint, fdiv) - 0.08
        assert res.value < res.f_endpoint - 1e-4
        assert 0.0 < res.parameter < 1.0

    @pytest.mark.parametrize("exp", [BernoulliExperiment(0.2, 0.8), BernoulliExperiment(0.9, 0.2)])
    def test_tight_tv_endpoint_is_not_undercut(self, exp):
        # at n = 1 the tv bound equals the gap; the search probes eta = Q + tiny (P - Q)
        p, q = bern_pair(1, exp)
        res = interpolated_bound(p, q, registry_get("kl"), loss_table=squared_loss_table(p))
        assert res.value >= bernoulli_true_gap(exp, 1) - 1e-12
        assert res.value <= res.tv_endpoint

    def test_near_singular_marginal_stays_finite(self):
        exp = BernoulliExperiment(0.6, 0.01)
        p, q = bern_pair(10, exp)
        res = interpolated_bound(p, q, registry_get("kl"), loss_table=squared_loss_table(p))
        assert math.isfinite(res.value) and res.value < 1.0

    def test_bounded_quadratic_default_never_beats_tv_on_mixtures(self):
        p, q = bern_pair(5)
        res = interpolated_bound(p, q, registry_get("kl"))
        assert res.value == pytest.approx(min(res.tv_endpoint, res.f_endpoint), rel=1e-9)

    def test_gibbs_family(self):
        p, q = bern_pair(4)
        table = squared_loss_table(p)
        g = registry_get("kl")
        both = interpolated_bound(p, q, g, eta_family="both", loss_table=table)
        mix = interpolated_bound(p, q, g, eta_family="mixture", loss_table=table)
        gibbs = interpolated_bound(p, q, g, eta_family="gibbs", loss_table=table)
        assert both.value <= min(mix.value, gibbs.value) + 1e-12
        assert gibbs.value <= min(gibbs.tv_endpoint, gibbs.f_endpoint)

    def test_errors(self):
        p, q = bern_pair(3)
        g = registry_get("kl")
        with pytest.raises(ValueError):
            interpolated_bound(p, bern_pair(4)[1], g)
        with pytest.raises(BoundError):
            interpolated_bound(p, q, g, B=math.inf)
        with pytest.raises(ValueError):
            interpolated_bound(p, q, g, eta_family="gibbs")
        with pytest.raises(ValueError):
            interpolated_bound(p, q, g, eta_family="other", loss_table=squared_loss_table(p))
        with pytest.raises(BoundError):
            interpolated_bound(p, q, registry_get("alpha", a=3.0))
