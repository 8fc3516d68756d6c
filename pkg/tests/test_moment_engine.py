import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from critbrw.errors import BoxTooSmall, InsufficientSamples, OverflowGuard
from critbrw.gw_analytics import BranchingParams, GWLaw, pmf_total, tail_cutoff
from critbrw.lattice_kernel import green_value, simple_random_walk
from critbrw.moment_engine import (
    Level,
    Point,
    SiteSet,
    Survival,
    TimePotential,
    conditional_first_moment,
    conditional_second_moment,
    delta_initial,
    duhamel_solve,
    first_moment,
    gf_field_solve,
    growth_order_fit,
    lsum,
    second_moment_total,
    spatial_sum,
)

from oracles import srw_kernel, unconditioned_factorial_moment_1d

BP = BranchingParams(1.0)
SRW1 = simple_random_walk(1)


def test_first_moments():
    assert first_moment(SRW1, 1.0, 0, 0).value == pytest.approx(srw_kernel(1.0, 0))
    assert conditional_first_moment(SRW1, BP, 1.0, 0, 0, Level(5)).value == pytest.approx(
        5 * srw_kernel(1.0, 0))
    assert conditional_first_moment(SRW1, BP, 4.0, 0, 2, Survival()).value == pytest.approx(
        5 * srw_kernel(4.0, 2))


def test_lsum_closed_form_vs_direct():
    for m in (2, 3, 10, 57):
        for q in (0.0, 0.3, 0.9, 1 - 5e-5, 1.0):
            direct = sum((m - 1 - l) * (l + 1) * q ** l for l in range(m - 1))
            assert lsum(q, m) == pytest.approx(direct, rel=1e-12, abs=1e-300)


def test_lsum_at_one_is_binomial():
    for m in (2, 5, 40):
        assert lsum(1.0, m) == pytest.approx(math.comb(m + 1, 3))


def test_second_moment_mixture_identity():
    # averaging the conditional moment over the law of n_x(t) must give the
    # unconditioned factorial moment
    t = 5.0
    lw = GWLaw(BP, t)
    K = tail_cutoff(lw, 1e-13)
    mix = sum(pmf_total(lw, m) * conditional_second_moment(SRW1, BP, t, 0, 0, m, rtol=1e-6).value
              for m in range(2, K + 1))
    assert mix == pytest.approx(unconditioned_factorial_moment_1d(1.0, t), rel=1e-5)


def test_second_moment_slow_walk_limit():
    # with almost no motion every particle stays home: E[n(n-1) | n = m] -> m(m-1)
    slow = simple_random_walk(1, kappa=1e-7)
    for m in (2, 6, 15):
        val = conditional_second_moment(slow, BP, 3.0, 0, 0, m).value
        assert val == pytest.approx(m * (m - 1), rel=1e-4)


def test_second_moment_edge_cases():
    assert conditional_second_moment(SRW1, BP, 5.0, 0, 0, 1).value == 0.0
    assert conditional_second_moment(SRW1, BP, 0.0, 0, 0, 4).value == 0.0
    with pytest.raises(OverflowGuard):
        conditional_second_moment(SRW1, BP, 5.0, 0, 0, 10**7)


def test_second_moment_frozen_value():
    val = conditional_second_moment(SRW1, BP, 20.0, 0, 0, 20).value
    assert val == pytest.approx(6.1924, rel=2e-3)


def test_spatial_sum_symmetry():
    jd = simple_random_walk(2)
    a = spatial_sum(jd, 3.0, 1.0, (0, 0), (1, 2))
    b = spatial_sum(jd, 3.0, 1.0, (0, 0), (-1, -2))
    assert a == pytest.approx(b, rel=1e-12)


def test_total_second_moment_point():
    # beta * int_0^{2t} p(u, 0) du, from the Bessel kernel
    from scipy import integrate
    t = 3.0
    ref, _ = integrate.quad(lambda u: srw_kernel(u, 0), 0, 2 * t, epsabs=1e-13)
    assert second_moment_total(SRW1, BP, t, Point((0,))).value == pytest.approx(ref, rel=1e-8)


def test_total_second_moment_tends_to_green():
    jd = simple_random_walk(3)
    g = green_value(jd).value
    t = 200.0
    val = second_moment_total(jd, BP, t, Point((0, 0, 0)), max_grid=512, rtol=1e-6).value
    # p(u, 0) ~ (3 / (2 pi u))^{3/2}, so the missing tail beyond 2t is about
    # 2 (3 / (2 pi))^{3/2} / sqrt(2t)
    tail = 2 * (3 / (2 * math.pi)) ** 1.5 / math.sqrt(2 * t)
    assert val < g
    assert val + tail == pytest.approx(g, abs=2e-3)


def test_total_second_moment_site_set_superadditive():
    a = second_moment_total(SRW1, BP, 2.0, Point((0,))).value
    ab = second_moment_total(SRW1, BP, 2.0, SiteSet(((0,), (1,)))).value
    assert ab > 2 * a


def test_duhamel_free_evolution():
    pot = TimePotential(0.0, 1.0)
    u = duhamel_solve(SRW1, pot, None, 2.0, 5, initial=delta_initial((0,)))
    ref = np.array([srw_kernel(2.0, z) for z in range(-5, 6)])
    assert np.allclose(u, ref, atol=1e-12)


def test_gf_field_without_branching():
    # beta = 0: u(t, x) = z - z (1 - z1) p(t, y - x)
    jd = SRW1
    st_ = gf_field_solve(jd, BranchingParams(0.0), 0.4, 0.4, (0,), 2.0, 15)
    for x in (0, 1, 3):
        assert st_.at((x,)) == pytest.approx(0.4 - 0.24 * srw_kernel(2.0, x), abs=1e-8)


def test_gf_field_total_size():
    # z1 = 1 reduces to the total-size generating function
    st_ = gf_field_solve(SRW1, BP, 0.3, 1.0, (0,), 1.5, 12)
    assert st_.at((0,)) == pytest.approx(1 - 0.7 / (2.5 - 1.5 * 0.3), abs=1e-9)


def test_gf_field_box_check():
    with pytest.raises(BoxTooSmall):
        gf_field_solve(SRW1, BP, 0.3, 0.5, (0,), 10.0, 5)


def test_growth_fit_on_synthetic_laws():
    ts = [25, 50, 100, 200, 400]
    lin = growth_order_fit([(t, 0.3 * t + 1) for t in ts])
    assert lin.exponent == pytest.approx(1.0, abs=0.05) and not lin.log_flag
    lg = growth_order_fit([(t, 0.1 * math.log(t)) for t in ts])
    assert lg.log_flag and lg.log_pattern_deviation < 1e-12
    inv = growth_order_fit([(t, 2 / math.sqrt(t)) for t in ts])
    assert inv.exponent == pytest.approx(-0.5) and not inv.log_flag
    with pytest.raises(InsufficientSamples):
        growth_order_fit([(25, 1.0), (50, 2.0)])


@given(m=st.integers(2, 200), q=st.floats(0, 1))
def test_lsum_bounds(m, q):
    val = lsum(q, m)
    assert (m - 1) * (1 - 1e-12) <= val <= math.comb(m + 1, 3) * (1 + 1e-12)


@given(m=st.integers(2, 60), t=st.floats(0.5, 10))
def test_second_moment_bounded_by_deterministic_case(m, t):
    # n(t,x,y) <= n_x(t) = m, so the factorial moment cannot exceed m(m-1)
    val = conditional_second_moment(SRW1, BP, t, 0, 0, m, rtol=1e-3).value
    assert 0 < val <= m * (m - 1) * (1 + 1e-3)
