import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mkvfit.measure import ParticleState, kernel_mean, moment, w2_empirical, w2_to_dirac0

# values on a 1e-3 grid: differences never underflow when squared
finite = st.integers(-10**6, 10**6).map(lambda k: k / 1000.0)


def clouds(n):
    return arrays(np.float64, n, elements=finite)


class TestParticleState:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            ParticleState(np.array([0.0, np.nan]))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            ParticleState(np.array([]))


class TestMoment:
    def test_mean(self):
        assert moment(ParticleState(np.array([1.0, 3.0])), 1) == 2.0

    def test_second_moment(self):
        assert moment(ParticleState(np.array([1.0, 3.0])), 2) == 5.0

    @pytest.mark.parametrize("p", [1, 2, 3, 5])
    def test_degenerate_cloud(self, p):
        assert moment(ParticleState(np.full(7, 1.5)), p) == pytest.approx(1.5**p, rel=1e-15)

    def test_rejects_bad_order(self):
        with pytest.raises(ValueError):
            moment(ParticleState(np.array([1.0])), 0)

    def test_long_accumulation(self):
        # 1e6 copies of 0.1: naive running sums drift, pairwise summation does not
        x = np.full(10**6, 0.1)
        assert moment(ParticleState(x), 1) == pytest.approx(0.1, rel=1e-14)


class TestKernelMean:
    def test_reduces_to_mean(self):
        s = ParticleState(np.array([1.0, 3.0]))
        assert kernel_mean(s, lambda x, y: y, 17.0) == 2.0

    def test_reduces_to_second_moment(self):
        s = ParticleState(np.array([1.0, 3.0]))
        assert kernel_mean(s, lambda x, y: (x - y) ** 2, 0.0) == 5.0

    def test_sine_kernel(self):
        s = ParticleState(np.array([0.0, math.pi]))
        assert abs(kernel_mean(s, lambda x, y: np.sin(x - y), 0.0)) < 1e-15

    def test_non_finite_kernel(self):
        with pytest.raises(ValueError):
            kernel_mean(ParticleState(np.array([0.0, 1.0])), lambda x, y: 1.0 / y, 0.0)


class TestW2:
    def test_identical(self):
        a = ParticleState(np.array([0.3, -1.0, 2.0]))
        assert w2_empirical(a, a) == 0.0

    def test_two_point(self):
        assert w2_empirical(np.array([0.0, 1.0]), np.array([0.0, 3.0])) == pytest.approx(math.sqrt(2))

    def test_shift(self, rng):
        a = rng.normal(size=20)
        assert w2_empirical(a, a + 0.75) == pytest.approx(0.75, rel=1e-12)

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            w2_empirical(np.zeros(2), np.zeros(3))

    def test_brute_force_oracle(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 7))
            a, b = rng.normal(size=n), rng.normal(size=n)
            brute = min(np.sqrt(np.mean((np.sort(a) - b[list(p)]) ** 2)) for p in itertools.permutations(range(n)))
            assert w2_empirical(a, b) == brute

    def test_dirac0(self):
        assert w2_to_dirac0(ParticleState(np.zeros(4))) == 0.0
        assert w2_to_dirac0(ParticleState(np.array([1.0, 3.0]))) == pytest.approx(math.sqrt(5))
        assert w2_to_dirac0(ParticleState(np.array([-2.0, 2.0]))) == 2.0


@pytest.mark.invariant
class TestW2Metric:
    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 12).flatmap(lambda n: st.tuples(clouds(n), clouds(n))))
    def test_symmetry(self, ab):
        a, b = ab
        assert w2_empirical(a, b) == w2_empirical(b, a)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 12).flatmap(lambda n: st.tuples(clouds(n), clouds(n))))
    def test_identity_of_indiscernibles(self, ab):
        a, b = ab
        d = w2_empirical(a, b)
        assert d >= 0
        assert (d == 0) == np.array_equal(np.sort(a), np.sort(b))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 12).flatmap(lambda n: st.tuples(clouds(n), clouds(n), clouds(n))))
    def test_triangle(self, abc):
        a, b, c = abc
        lhs = w2_empirical(a, c)
        assert lhs <= w2_empirical(a, b) + w2_empirical(b, c) + 1e-9 * (1 + lhs)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 12).flatmap(lambda n: st.tuples(clouds(n), clouds(n), st.randoms())))
    def test_permutation_invariance(self, abr):
        a, b, r = abr
        pa, pb = list(a), list(b)
        r.shuffle(pa)
        r.shuffle(pb)
        assert w2_empirical(np.array(pa), np.array(pb)) == w2_empirical(a, b)

    def test_exhaustive_oracle(self, rng):
        for _ in range(300):
            n = int(rng.integers(1, 7))
            a, b = rng.normal(size=n), rng.uniform(-3, 3, size=n)
            brute = min(np.sqrt(np.mean((np.sort(a) - b[list(p)]) ** 2)) for p in itertools.permutations(range(n)))
            assert w2_empirical(a, b) == brute
