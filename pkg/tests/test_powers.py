import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fplap import powers
from fplap.errors import DomainError, NonpositiveExponentError, OutOfRangeError
from fplap.powers import (
    Inequality,
    Provenance,
    certify_constant,
    check_diff_upper,
    check_holder_diff,
    check_increment_bounded,
    check_increment_geq1,
    check_sum_power,
    closed_form_constant,
    signed_power,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)
exponents = st.floats(min_value=0.05, max_value=5.0)


class TestSignedPower:
    def test_values(self):
        assert signed_power(2.0, 3.0) == 8.0
        assert signed_power(-2.0, 2.0) == -4.0
        assert signed_power(0.0, 0.5) == 0.0

    def test_nonpositive_exponent(self):
        with pytest.raises(NonpositiveExponentError):
            signed_power(1.0, 0.0)
        with pytest.raises(NonpositiveExponentError):
            signed_power(1.0, -0.3)

    @given(finite, exponents)
    def test_odd(self, a, q):
        assert signed_power(-a, q) == -signed_power(a, q)

    @given(
        st.lists(
            st.floats(min_value=-1e6, max_value=1e6).filter(
                lambda x: x == 0.0 or abs(x) > 1e-6
            ),
            min_size=2,
            max_size=30,
            unique=True,
        ),
        exponents,
    )
    @settings(max_examples=50)
    def test_strictly_increasing(self, xs, q):
        # magnitudes bounded away from the subnormal range, where powers
        # underflow and strictness is lost to rounding
        v = signed_power(np.sort(np.asarray(xs)), q)
        assert np.all(np.diff(v) > 0)


class TestSumPower:
    def test_equality_case(self):
        lhs, rhs, holds = check_sum_power(1.0, 1.0, 2.0)
        assert lhs == 4.0 and rhs == 4.0 and holds

    def test_sqrt_case(self):
        lhs, rhs, holds = check_sum_power(0.0, 5.0, 0.5)
        assert lhs == pytest.approx(np.sqrt(5)) and rhs == pytest.approx(np.sqrt(5))
        assert holds

    def test_generic(self):
        _, _, holds = check_sum_power(3.0, 7.0, 1.7)
        assert holds

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            check_sum_power(-1.0, 1.0, 2.0)

    @pytest.mark.parametrize("q", [1.0, 1.5, 2.0, 3.0])
    def test_equality_diagnostic_at_a_eq_b(self, q):
        a = np.linspace(0.1, 10.0, 50)
        lhs, rhs, _ = check_sum_power(a, a, q)
        assert np.max(np.abs(lhs - rhs) / (1.0 + rhs)) < 1e-12


class TestIncrementGeq1:
    def test_simple(self):
        gap, holds = check_increment_geq1(0.0, 1.0, 2.0)
        assert gap == pytest.approx(0.5) and holds

    def test_equality(self):
        # (0.5)^2 - (-(0.5)^2) = 0.5 meets the bound 2^{-1} exactly
        gap, holds = check_increment_geq1(-0.5, 1.0, 2.0)
        assert gap == pytest.approx(0.0, abs=1e-15) and holds

    def test_zero_b(self):
        gap, holds = check_increment_geq1(3.7, 0.0, 2.5)
        assert gap == 0.0 and holds

    def test_q_below_one_rejected(self):
        with pytest.raises(DomainError):
            check_increment_geq1(0.0, 1.0, 0.5)


class TestDiffUpper:
    def test_certified_holds(self):
        C = certify_constant(Inequality.DIFF_UPPER, 2.0, 1.0)
        _, _, holds = check_diff_upper(1.0, 1.0, 2.0, 2.0, C)
        assert holds

    def test_zero_case(self):
        C = certify_constant(Inequality.DIFF_UPPER, 1.3, 1.0)
        lhs, bound, holds = check_diff_upper(1.0, 0.0, 0.0, 1.3, C)
        assert lhs == 0.0 and bound == 0.0 and holds

    def test_m2(self):
        C = certify_constant(Inequality.DIFF_UPPER, 3.0, 2.0)
        _, _, holds = check_diff_upper(2.0, 1.5, 0.5, 3.0, C)
        assert holds

    def test_out_of_range(self):
        C = certify_constant(Inequality.DIFF_UPPER, 2.0, 1.0)
        with pytest.raises(OutOfRangeError):
            check_diff_upper(1.0, 1.5, 1.0, 2.0, C)


class TestIncrementBounded:
    def test_closed_form_q_half(self):
        C = certify_constant(Inequality.INCREMENT_BOUNDED, 0.5, 1.0)
        lhs, bound, holds = check_increment_bounded(1.0, 0.0, 1.0, 0.5, C)
        assert lhs == pytest.approx(1.0)
        assert bound == pytest.approx(0.5 * 2**-0.5)
        assert holds

    def test_zero_b(self):
        C = certify_constant(Inequality.INCREMENT_BOUNDED, 0.7, 2.0)
        lhs, bound, holds = check_increment_bounded(2.0, 0.3, 0.0, 0.7, C)
        assert lhs == 0.0 and bound == 0.0 and holds

    def test_crossing_sign(self):
        C = certify_constant(Inequality.INCREMENT_BOUNDED, 0.5, 1.0)
        lhs, bound, holds = check_increment_bounded(1.0, -1.0, 2.0, 0.5, C)
        assert lhs == pytest.approx(2.0)
        assert bound == pytest.approx(0.5 * 2**-0.5 * np.sqrt(2.0))
        assert holds


class TestHolderDiff:
    def test_at_zero(self):
        C = certify_constant(Inequality.HOLDER_DIFF, 0.5)
        b = np.linspace(-3, 3, 41)
        lhs, bound, holds = check_holder_diff(np.zeros_like(b), b, 0.5, C)
        assert np.all(holds)

    def test_generic(self):
        C = certify_constant(Inequality.HOLDER_DIFF, 0.5)
        _, _, holds = check_holder_diff(5.0, -10.0, 0.5, C)
        assert holds

    def test_zero_b(self):
        C = certify_constant(Inequality.HOLDER_DIFF, 0.8)
        lhs, bound, holds = check_holder_diff(2.0, 0.0, 0.8, C)
        assert lhs == 0.0 and bound == 0.0 and holds

    def test_q_above_one_rejected(self):
        C = certify_constant(Inequality.HOLDER_DIFF, 1.0)
        with pytest.raises(DomainError):
            check_holder_diff(1.0, 1.0, 1.5, C)


class TestCertifyConstant:
    def test_holder_q1_value(self):
        # the true supremum for q = 1 is 1 (triangle shape), so 1.05 x 1
        c = certify_constant(Inequality.HOLDER_DIFF, 1.0)
        assert c.provenance == Provenance.NUMERIC_SUP_SEARCH
        assert c.value == pytest.approx(1.05, rel=1e-6)

    def test_holder_q_half_value(self):
        # scale invariance puts the supremum at a = -b/2: 2^{1-q}
        c = certify_constant(Inequality.HOLDER_DIFF, 0.5)
        assert c.value == pytest.approx(1.05 * 2**0.5, rel=1e-4)

    def test_increment_bounded_closed_form(self):
        c = certify_constant(Inequality.INCREMENT_BOUNDED, 2.0, 1.0)
        assert c.provenance == Provenance.CLOSED_FORM
        assert c.value == 0.5

    def test_diff_upper_value(self):
        # hand analysis: sup of (a*2 - (a-b)*2)/max(b, b^2) over [-1,1] is 3,
        # attained at a = -1, b = 1
        c = certify_constant(Inequality.DIFF_UPPER, 2.0, 1.0)
        assert c.provenance == Provenance.NUMERIC_SUP_SEARCH
        assert c.value == pytest.approx(3.15, abs=0.02)

    def test_deterministic(self):
        a = certify_constant(Inequality.DIFF_UPPER, 1.7, 10.0, seed=5)
        b = certify_constant(Inequality.DIFF_UPPER, 1.7, 10.0, seed=5)
        assert a.value == b.value

    def test_closed_form_table(self):
        assert closed_form_constant(Inequality.SUM_POWER, 3.0) == 4.0
        assert closed_form_constant(Inequality.SUM_POWER, 0.5) == 1.0
        assert closed_form_constant(Inequality.INCREMENT_GEQ1, 2.0) == 0.5
        assert closed_form_constant(
            Inequality.INCREMENT_BOUNDED, 0.5, 2.0
        ) == pytest.approx(0.5 * 2**-0.5 * 2**-0.5)


@pytest.mark.parametrize("q", [0.3, 0.8, 1.0, 1.5, 3.0])
@pytest.mark.parametrize("M", [1.0, 10.0])
def test_randomized_families_hold(q, M):
    rng = np.random.default_rng(hash((q, M)) % 2**32)
    n = 4000
    a = rng.uniform(-M, M, n)
    b = np.exp(rng.uniform(np.log(1e-7), np.log(50.0), n))

    _, _, ok = check_sum_power(np.abs(a), b, q)
    assert np.all(ok)
    if q >= 1:
        _, ok = check_increment_geq1(a * 10, b, q)
        assert np.all(ok)
    c = certify_constant(Inequality.DIFF_UPPER, q, M)
    _, _, ok = check_diff_upper(M, a, b, q, c)
    assert np.all(ok)
    c = certify_constant(Inequality.INCREMENT_BOUNDED, q, M)
    _, _, ok = check_increment_bounded(M, a, b, q, c)
    assert np.all(ok)
    if q <= 1:
        c = certify_constant(Inequality.HOLDER_DIFF, q)
        _, _, ok = check_holder_diff(rng.normal(0, 20, n), rng.normal(0, 20, n), q, c)
        assert np.all(ok)
