import math

import numpy as np
import pytest

from moment_ident import noise

ALL_SPECS = {
    "exponential": noise.exponential(1.0),
    "exponential_heavy": noise.exponential(0.5),
    "gamma": noise.gamma(2.0, 1.3),
    "gumbel": noise.gumbel(0.8),
    "logistic": noise.logistic(1.1),
    "uniform": noise.uniform(1.5),
    "gaussian": noise.gaussian(1.2),
}

# derangement numbers give the central moments of Exp(1)
EXP1_CENTRAL = {2: 1.0, 3: 2.0, 4: 9.0, 5: 44.0, 6: 265.0}


class TestRawMoment:
    @pytest.mark.parametrize("spec", list(ALL_SPECS.values()), ids=list(ALL_SPECS))
    def test_centered(self, spec):
        assert noise.raw_moment(spec, 1) == 0.0
        assert noise.raw_moment(spec, 0) == 1.0
        assert noise.raw_moment(spec, 2) > 0.0

    @pytest.mark.parametrize("order,expected", sorted(EXP1_CENTRAL.items()))
    def test_exponential_closed_form(self, order, expected):
        assert noise.raw_moment(noise.exponential(1.0), order) == pytest.approx(
            expected, rel=1e-12
        )

    def test_exponential_rate_scaling(self):
        lam = 0.5
        for order, d in EXP1_CENTRAL.items():
            assert noise.raw_moment(noise.exponential(lam), order) == pytest.approx(
                d / lam**order, rel=1e-12
            )

    def test_logistic_odd_moments_vanish(self):
        spec = noise.logistic(0.7)
        for order in (1, 3, 5, 7):
            assert noise.raw_moment(spec, order) == 0.0

    def test_logistic_known_values(self):
        s = 1.1
        spec = noise.logistic(s)
        assert noise.raw_moment(spec, 2) == pytest.approx(math.pi**2 * s**2 / 3, rel=1e-12)
        assert noise.raw_moment(spec, 4) == pytest.approx(
            7 * math.pi**4 * s**4 / 15, rel=1e-12
        )

    def test_uniform_values(self):
        h = 1.5
        spec = noise.uniform(h)
        assert noise.raw_moment(spec, 2) == pytest.approx(h**2 / 3, rel=1e-14)
        assert noise.raw_moment(spec, 4) == pytest.approx(h**4 / 5, rel=1e-14)
        assert noise.raw_moment(spec, 3) == 0.0

    def test_gaussian_moments(self):
        sigma = 1.2
        spec = noise.gaussian(sigma)
        assert noise.raw_moment(spec, 4) == pytest.approx(3 * sigma**4, rel=1e-12)
        assert noise.raw_moment(spec, 6) == pytest.approx(15 * sigma**6, rel=1e-12)

    def test_point_mass(self):
        spec = noise.point_mass()
        for order in range(1, 13):
            assert noise.raw_moment(spec, order) == 0.0

    def test_scale_multiplier(self):
        spec = noise.gamma(2.0, 1.3)
        scaled = spec.scaled(-0.5)
        for order in range(1, 9):
            assert noise.raw_moment(scaled, order) == pytest.approx(
                (-0.5) ** order * noise.raw_moment(spec, order), rel=1e-12, abs=1e-300
            )

    @pytest.mark.parametrize(
        "spec",
        [ALL_SPECS[k] for k in ("exponential", "gamma", "gumbel", "logistic", "uniform")],
        ids=["exponential", "gamma", "gumbel", "logistic", "uniform"],
    )
    @pytest.mark.parametrize("order", [2, 3, 4, 5, 6, 8])
    def test_quadrature_cross_check(self, spec, order):
        closed = noise.raw_moment(spec, order)
        quad = noise.raw_moment(spec, order, quadrature=True)
        assert quad == pytest.approx(closed, rel=1e-9, abs=1e-9)

    def test_order_overflow(self):
        with pytest.raises(noise.MomentOrderError):
            noise.raw_moment(noise.exponential(1.0), 13)
        with pytest.raises(ValueError):
            noise.raw_moment(noise.exponential(1.0), -1)

    def test_bad_specs(self):
        with pytest.raises(ValueError):
            noise.NoiseSpec("cauchy", (1.0,))
        with pytest.raises(ValueError):
            noise.NoiseSpec("exponential", ())
        with pytest.raises(ValueError):
            noise.NoiseSpec("exponential", (-1.0,))


class TestSample:
    def test_point_mass_zeros(self):
        assert np.array_equal(noise.sample(noise.point_mass(), 5, 1), np.zeros(5))

    def test_deterministic(self):
        spec = noise.gumbel(0.8)
        a = noise.sample(spec, 1000, 42)
        b = noise.sample(spec, 1000, 42)
        assert np.array_equal(a, b)
        c = noise.sample(spec, 1000, 43)
        assert not np.array_equal(a, c)

    def test_structured_seed_streams(self):
        spec = noise.exponential(1.0)
        a = noise.sample(spec, 100, (7, 1, 0))
        b = noise.sample(spec, 100, (7, 2, 0))
        assert not np.array_equal(a, b)

    def test_exponential_mean_bound(self):
        x = noise.sample(noise.exponential(1.0), 10**6, 2024)
        assert abs(x.mean()) < 0.005  # 3 sigma / sqrt(n) = 0.003

    @pytest.mark.parametrize("name,spec", list(ALL_SPECS.items()), ids=list(ALL_SPECS))
    def test_empirical_moments_match(self, name, spec):
        # spec invariant: 1e6 draws match raw_moment within 5 se for orders <= 6
        x = noise.sample(spec, 10**6, hash(name) % 2**32)
        for order in range(1, 7):
            g = x**order
            se = g.std(ddof=1) / math.sqrt(x.size)
            assert abs(g.mean() - noise.raw_moment(spec, order)) < 5 * se + 1e-12

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            noise.sample(noise.exponential(1.0), 0, 1)


class TestNongaussianOrder:
    @pytest.mark.parametrize(
        "spec,expected",
        [
            (noise.exponential(1.0), 3),
            (noise.gamma(2.0, 1.3), 3),
            (noise.gumbel(0.8), 3),
            (noise.logistic(1.1), 4),
            (noise.uniform(1.5), 4),
            (noise.gaussian(1.2), None),
            (noise.point_mass(), None),
        ],
        ids=["exponential", "gamma", "gumbel", "logistic", "uniform", "gaussian", "point_mass"],
    )
    def test_family_orders(self, spec, expected):
        assert noise.nongaussian_order(spec, 8) == expected

    def test_scale_invariant(self):
        assert noise.nongaussian_order(noise.logistic(1.1).scaled(-2.5), 8) == 4

    def test_max_order_validation(self):
        with pytest.raises(ValueError):
            noise.nongaussian_order(noise.exponential(1.0), 2)
