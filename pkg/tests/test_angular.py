import math
from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from atdipole.angular import (
    HyperfineTransition,
    SelectionRuleError,
    reduced_j_factor,
    reduced_l_element,
    stretched_hyperfine_factor,
    wigner3j,
    wigner6j,
)

from oracles import all_3j, all_6j, halves, sixj, sixj_contraction, threej

half = st.sampled_from(halves(4.5))


@pytest.mark.parametrize(
    "args,expected",
    [
        ((1, 1, 0, 0, 0, 0), -1 / math.sqrt(3)),
        ((F(1, 2), F(1, 2), 1, F(1, 2), F(-1, 2), 0), 1 / math.sqrt(6)),
        ((2, 2, 2, 0, 0, 0), -math.sqrt(2 / 35)),
        ((1, 1, 1, 0, 0, 0), 0.0),
    ],
)
def test_3j_tabulated(args, expected):
    assert wigner3j(*args) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize(
    "args,expected",
    [
        ((1, 1, 1, 1, 1, 1), 1 / 6),
        ((F(1, 2), F(1, 2), 1, F(1, 2), F(1, 2), 0), 1 / 2),
        ((2, 2, 2, 2, 2, 2), -3 / 70),
    ],
)
def test_6j_tabulated(args, expected):
    assert wigner6j(*args) == pytest.approx(expected, abs=1e-14)


def test_3j_matches_racah_oracle_exhaustively():
    worst = max(abs(wigner3j(*a) - threej(*a)) for a in all_3j(4.5))
    assert worst < 1e-10


def test_6j_matches_racah_oracle_exhaustively():
    worst = max(abs(wigner6j(*a) - sixj(*a)) for a in all_6j(4.5))
    assert worst < 1e-10


def test_6j_matches_contraction_small_arguments():
    worst = max(abs(wigner6j(*a) - sixj_contraction(*a)) for a in all_6j(1.5))
    assert worst < 1e-10


@given(half, half, half, half, half, half)
def test_6j_matches_contraction_property(j1, j2, j3, j4, j5, j6):
    assert wigner6j(j1, j2, j3, j4, j5, j6) == pytest.approx(
        sixj_contraction(j1, j2, j3, j4, j5, j6), abs=1e-10
    )


@given(half, half, half, st.data())
def test_3j_symmetries(j1, j2, j3, data):
    m1 = data.draw(st.sampled_from([-j1 + k for k in range(int(2 * j1) + 1)]))
    m2 = data.draw(st.sampled_from([-j2 + k for k in range(int(2 * j2) + 1)]))
    m3 = -m1 - m2
    base = wigner3j(j1, j2, j3, m1, m2, m3)
    phase = (-1) ** int(j1 + j2 + j3) if (j1 + j2 + j3) % 1 == 0 else 0
    # cyclic permutation is invariant
    assert wigner3j(j2, j3, j1, m2, m3, m1) == pytest.approx(base, abs=1e-13)
    if phase:
        assert wigner3j(j2, j1, j3, m2, m1, m3) == pytest.approx(phase * base, abs=1e-13)
        assert wigner3j(j1, j2, j3, -m1, -m2, -m3) == pytest.approx(phase * base, abs=1e-13)


@given(half, half, half, half, half, half)
def test_6j_column_permutation_symmetry(j1, j2, j3, j4, j5, j6):
    base = wigner6j(j1, j2, j3, j4, j5, j6)
    assert wigner6j(j2, j1, j3, j5, j4, j6) == pytest.approx(base, abs=1e-13)
    assert wigner6j(j1, j5, j6, j4, j2, j3) == pytest.approx(base, abs=1e-13)


@pytest.mark.parametrize("j1,j2", [(F(1, 2), 1), (1, 1), (F(3, 2), 2), (F(5, 2), F(7, 2))])
def test_3j_orthogonality(j1, j2):
    j3s = [abs(j1 - j2) + k for k in range(int(2 * min(j1, j2)) + 1)]
    for j3 in j3s:
        for j3p in j3s:
            m3 = 0 if (j1 + j2).denominator == 1 else F(1, 2)
            if abs(m3) > min(j3, j3p):
                continue
            s = sum(
                wigner3j(j1, j2, j3, m1, -m1 - m3, m3) * wigner3j(j1, j2, j3p, m1, -m1 - m3, m3)
                for m1 in [-j1 + k for k in range(int(2 * j1) + 1)]
                if abs(-m1 - m3) <= j2
            )
            expected = 1 / (2 * j3 + 1) if j3 == j3p else 0.0
            assert s == pytest.approx(float(expected), abs=1e-13)


def test_invalid_half_integer_rejected():
    with pytest.raises(ValueError):
        wigner3j(0.3, 1, 1, 0, 0, 0)


@pytest.mark.parametrize("l", range(0, 8))
def test_l_element_sum_rule(l):
    """sum over l' of |<l||C1||l'>|^2 / (2l+1) = 1 (one unit of angular momentum)."""
    total = sum(reduced_l_element(l, lp) ** 2 for lp in (l - 1, l + 1) if lp >= 0)
    assert total / (2 * l + 1) == pytest.approx(1.0, abs=1e-13)
    up = reduced_l_element(l, l + 1) ** 2 / (2 * l + 1)
    assert up == pytest.approx((l + 1) / (2 * l + 1), abs=1e-13)


@pytest.mark.parametrize("l,j", [(1, 0.5), (1, 1.5), (2, 1.5), (2, 2.5), (3, 3.5)])
def test_j_factor_sum_rule(l, j):
    """Summing |f|^2 over all j' of l' recovers the l-space weight l_>/(2l+1)."""
    for lp in (l - 1, l + 1):
        if lp < 0:
            continue
        total = sum(reduced_j_factor(l, j, lp, jp) ** 2 for jp in (lp - 0.5, lp + 0.5) if jp > 0)
        assert total == pytest.approx(max(l, lp) / (2 * l + 1), abs=1e-13)


def test_hydrogen_sign_convention():
    assert reduced_j_factor(0, 0.5, 1, 1.5) > 0


def test_j_factor_selection_rule():
    with pytest.raises(SelectionRuleError):
        reduced_j_factor(1, 1.5, 1, 0.5)


def test_stretched_coefficient_is_sqrt_two_thirds():
    t = HyperfineTransition(1.5, 3, 3, 2.5, 4, 4, 1, 1.5)
    assert abs(stretched_hyperfine_factor(t) - math.sqrt(2 / 3)) < 1e-12


def test_delta_f_two_vanishes():
    t = HyperfineTransition(1.5, 2, 2, 2.5, 4, 3, 1, 1.5)
    assert stretched_hyperfine_factor(t) == 0.0


def test_polarization_mismatch_raises():
    with pytest.raises(SelectionRuleError):
        stretched_hyperfine_factor(HyperfineTransition(1.5, 3, 3, 2.5, 4, 3, 1, 1.5))
    with pytest.raises(SelectionRuleError):
        stretched_hyperfine_factor(HyperfineTransition(1.5, 3, 3, 2.5, 4, 4, 2, 1.5))


def test_hyperfine_strengths_sum_to_reduced():
    """Summing |c|^2 over every F' and q from a fixed |F m_F> gives exactly 1.

    In the asymmetric convention the reduced element already carries the
    full decay strength of the lower level, so the hyperfine weights sum to one.
    """
    j, jp, i = 1.5, 2.5, 1.5
    for f in (0, 1, 2, 3):
        for m in [-f + k for k in range(2 * f + 1)]:
            total = 0.0
            for fp in (1, 2, 3, 4):
                for q in (-1, 0, 1):
                    if abs(m + q) <= fp:
                        c = stretched_hyperfine_factor(HyperfineTransition(j, f, m, jp, fp, m + q, q, i))
                        total += c * c
            assert total == pytest.approx(1.0, rel=1e-12)
