import math

import numpy as np
import pytest

from oodbounds.fgen import (
    FGenerator,
    GeneratorError,
    check_lemma3_condition,
    conjugate_eval,
    numeric_biconjugate,
    numeric_conjugate,
    parse_generator_spec,
    registered_names,
    registry_get,
    validate_generator,
)

ALL = [registry_get(n) for n in registered_names()] + [
    registry_get("alpha", a=a) for a in (-1.0, -0.5, 0.5, 2.0, 3.0)
] + [registry_get("js", theta=0.2)]


def ids(gens):
    return [g.label for g in gens]


class TestRegistry:
    def test_kl_value(self):
        assert float(registry_get("kl")(2.0)) == pytest.approx(2 * math.log(2) - 1, abs=1e-15)

    def test_standard_form(self):
        for g in ALL:
            assert float(g(1.0)) == pytest.approx(0.0, abs=1e-15), g.label

    @pytest.mark.parametrize("u", [1e-12, -1e-9, 3e-6, -2e-4])
    def test_kl_relative_accuracy_near_one(self, u):
        series = u * u / 2 - u**3 / 6 + u**4 / 12
        assert float(registry_get("kl")(1.0 + u)) == pytest.approx(series, rel=1e-6)

    def test_kl_tiny_argument(self):
        assert float(registry_get("kl")(1e-300)) == pytest.approx(1.0)

    def test_lecam_curvature(self):
        g = registry_get("lecam")
        assert g.fpp1 == 0.25
        h = 1e-4
        fd = float((g(1 + h) - 2 * g(1.0) + g(1 - h)) / h**2)
        assert fd == pytest.approx(0.25, rel=1e-6)

    @pytest.mark.parametrize("g", ALL, ids=ids(ALL))
    def test_declared_curvature_matches_finite_differences(self, g):
        if g.fpp1 is None:
            pytest.skip("no curvature for a nonsmooth generator")
        h = 1e-4
        fd = float((g(1 + h) - 2 * g(1.0) + g(1 - h)) / h**2)
        assert fd == pytest.approx(g.fpp1, rel=1e-5)
        fd3 = float((g(1 + 2 * h) - 2 * g(1 + h) + 2 * g(1 - h) - g(1 - 2 * h)) / (2 * h**3))
        assert fd3 == pytest.approx(g.fppp1, rel=1e-3, abs=1e-3)

    @pytest.mark.parametrize("g", ALL, ids=ids(ALL))
    def test_declared_f_at_zero_is_the_right_limit(self, g):
        v = float(g(1e-12))
        if math.isinf(g.f_at_zero):
            assert v > 20
        else:
            assert v == pytest.approx(g.f_at_zero, abs=1e-5)

    def test_aliases_and_embedded_params(self):
        assert registry_get("hellinger") is registry_get("h2")
        assert registry_get("alpha:a=2").params == {"a": 2.0}
        assert registry_get("alpha", alpha=0.5).params == {"a": 0.5}
        assert registry_get("js").params == {"theta": 0.5}

    def test_parse_spec(self):
        assert parse_generator_spec("JS:theta=0.3") == ("js", {"theta": 0.3})
        with pytest.raises(GeneratorError):
            parse_generator_spec("js:theta")

    @pytest.mark.parametrize(
        "name, params", [("nope", {}), ("alpha", {"a": 1.0}), ("alpha", {"a": 6.0}), ("js", {"theta": 1.0}), ("kl", {"a": 2.0})]
    )
    def test_bad_requests(self, name, params):
        with pytest.raises(GeneratorError):
            registry_get(name, **params)


class TestConjugate:
    def test_kl(self):
        assert conjugate_eval(registry_get("kl"), 1.0) == pytest.approx(math.e - 1, abs=1e-15)

    def test_chi2(self):
        assert conjugate_eval(registry_get("chi2"), 2.0) == pytest.approx(3.0, abs=1e-15)

    @pytest.mark.parametrize("g", ALL, ids=ids(ALL))
    def test_zero_at_zero(self, g):
        assert conjugate_eval(g, 0.0) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("g", ALL, ids=ids(ALL))
    def test_numeric_matches_analytic(self, g):
        top = min(g.conj_sup - 1e-3, 3.0)
        for y in np.linspace(-5.0, top, 25):
            a = float(conjugate_eval(g, y))
            n = numeric_conjugate(g.f, float(y))
            assert n == pytest.approx(a, abs=1e-9, rel=1e-9), (g.label, y)

    @pytest.mark.parametrize("g", ALL, ids=ids(ALL))
    def test_outside_domain_is_infinite(self, g):
        if math.isinf(g.conj_sup):
            pytest.skip("conjugate finite everywhere")
        assert math.isinf(float(conjugate_eval(g, g.conj_sup + 0.1)))
        assert math.isinf(numeric_conjugate(g.f, g.conj_sup + 0.1))

    @pytest.mark.parametrize("g", ALL, ids=ids(ALL))
    def test_biconjugation(self, g):
        for x in np.linspace(0.1, 10.0, 12):
            assert numeric_biconjugate(g, float(x)) == pytest.approx(float(g(x)), abs=1e-8), (g.label, x)

    @pytest.mark.parametrize("g", [g for g in ALL if g.conj_derivative is not None], ids=ids([g for g in ALL if g.conj_derivative is not None]))
    def test_conjugate_derivative_monotone_and_consistent(self, g):
        top = min(g.conj_sup - 1e-3, 4.0)
        ys = np.linspace(-6.0, top, 400)
        d = g.conj_derivative(ys)
        assert np.all(np.diff(d) >= -1e-12)
        assert float(g.conj_derivative(np.array(0.0))) == pytest.approx(1.0, abs=1e-12)
        h = 1e-6
        inner = ys[5:-5:20]
        fd = (conjugate_eval(g, inner + h) - conjugate_eval(g, inner - h)) / (2 * h)
        np.testing.assert_allclose(fd, g.conj_derivative(inner), rtol=1e-5, atol=1e-6)


class TestValidation:
    def test_all_registered_pass(self):
        for g in ALL:
            validate_generator(g)

    def test_broken_standard_form(self):
        bad = FGenerator("shifted", f=lambda x: (x - 1.0) ** 2 + 0.1, f_at_zero=1.1, f_prime_at_inf=math.inf, conj_sup=math.inf)
        with pytest.raises(GeneratorError, match="not standard"):
            validate_generator(bad)

    def test_nonconvex(self):
        bad = FGenerator("wavy", f=lambda x: np.sin(x - 1.0) - (x - 1.0), f_at_zero=0.0, f_prime_at_inf=0.0, conj_sup=math.inf)
        with pytest.raises(GeneratorError):
            validate_generator(bad)

    def test_wrong_conjugate(self):
        kl = registry_get("kl")
        bad = FGenerator("kl-bad", f=kl.f, f_at_zero=1.0, f_prime_at_inf=math.inf, conj_sup=math.inf, conjugate=lambda y: 0.5 * np.expm1(y))
        with pytest.raises(GeneratorError, match="Fenchel-Young"):
            validate_generator(bad)


class TestTables:
    @pytest.mark.parametrize(
        "name, params, want",
        [
            ("kl", {}, 0.5),
            ("chi2", {}, 1 / (2 * math.sqrt(2))),
            ("h2", {}, 1 / math.sqrt(2)),
            ("rkl", {}, 0.5),
            ("js", {"theta": 0.5}, 1.0),
            ("js", {"theta": 0.2}, 1 / (2 * math.sqrt(0.2 * 0.8))),
            ("lecam", {}, 1.0),
            ("alpha", {"a": -1.0}, 0.5),
            ("alpha", {"a": 1.5}, 0.5),
            ("alpha", {"a": 2.0}, 0.5),
        ],
    )
    def test_sigma_f(self, name, params, want):
        assert registry_get(name, **params).sigma_f(1.0) == pytest.approx(want, rel=1e-15)

    def test_sigma_f_scales_with_B(self):
        assert registry_get("kl").sigma_f(3.0) == pytest.approx(1.5)

    @pytest.mark.parametrize("name", ["kl", "chi2", "h2", "rkl", "js", "lecam"])
    def test_lemma3_holds(self, name):
        assert check_lemma3_condition(registry_get(name)).holds

    @pytest.mark.parametrize("a, holds", [(-1.5, False), (-1.0, True), (-0.5, True), (0.5, True), (1.5, True), (2.0, True), (2.01, False), (3.0, False), (4.9, False), (-4.9, False)])
    def test_lemma3_alpha_window(self, a, holds):
        assert check_lemma3_condition(registry_get("alpha", a=a)).holds is holds

    def test_chi2_lemma3_is_an_equality(self):
        res = check_lemma3_condition(registry_get("chi2"))
        assert res.worst_margin == pytest.approx(0.0, abs=1e-12)

    def test_lemma3_rejects_out_of_range_grid(self):
        with pytest.raises(ValueError):
            check_lemma3_condition(registry_get("kl"), grid=[-2.0, 0.0])

    def test_lemma3_needs_curvature(self):
        with pytest.raises(GeneratorError):
            check_lemma3_condition(registry_get("tv"))
