import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from critbrw.gw_analytics import (
    BranchingParams,
    GWLaw,
    TailMode,
    conditional_mean_total,
    conditional_pmf_total,
    conditional_tail,
    gf_total,
    pmf_table,
    pmf_total,
    tail_cutoff,
)

from oracles import conditional_tail_bruteforce, gw_pmf_master_equation


def law(beta=1.0, t=1.0):
    return GWLaw(BranchingParams(beta), t)


def test_pmf_small_case():
    assert pmf_table(law(1, 1), 5) == pytest.approx([0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625])


@pytest.mark.parametrize("beta,t", [(1.0, 1.0), (0.5, 3.0), (2.0, 0.7)])
def test_pmf_matches_master_equation(beta, t):
    ref = gw_pmf_master_equation(beta, t, kmax=30)
    assert pmf_table(law(beta, t), 30) == pytest.approx(ref, abs=1e-9)


def test_noncritical_rejected():
    with pytest.raises(ValueError):
        BranchingParams(1.0, mu=0.5)
    assert BranchingParams(2.0).mu == 2.0


def test_beta_zero_is_deterministic():
    lw = law(0.0, 10.0)
    assert pmf_total(lw, 1) == 1.0 and pmf_total(lw, 0) == 0.0
    assert conditional_tail(lw, 0.5) == 1.0
    assert conditional_tail(lw, 1.0) == 0.0


def test_t_zero():
    lw = law(1.0, 0.0)
    assert gf_total(lw, 0.3) == pytest.approx(0.3)
    assert pmf_total(lw, 1) == 1.0


def test_limit_tail():
    lw = law(1.0, 1e4)
    for s in (0.5, 1.0, 2.0):
        assert abs(conditional_tail(lw, s, TailMode.EXACT) - math.exp(-s)) < 1e-3
        assert conditional_tail(lw, s, "limit") == math.exp(-s)


def test_large_k_log_space():
    lw = law(1.0, 1e6)
    p = pmf_total(lw, 10**6)
    assert 0 < p < 1e-12
    assert p == pytest.approx(math.exp(-1) / 1e12, rel=1e-5)


@given(bt=st.floats(0.01, 200), z=st.floats(0, 1))
def test_gf_fixed_points_and_series(bt, z):
    lw = law(1.0, bt)
    assert gf_total(lw, 1.0) == 1.0
    assert gf_total(lw, 0.0) == pytest.approx(bt / (bt + 1))
    K = tail_cutoff(lw, 1e-14)
    ks = np.arange(K + 1)
    series = sum(pmf_total(lw, int(k)) * z ** int(k) for k in ks)
    assert gf_total(lw, z) == pytest.approx(series, abs=1e-12)


@given(bt=st.floats(0.01, 500))
def test_conditional_law_mean(bt):
    lw = law(1.0, bt)
    K = tail_cutoff(lw, 1e-16)
    ks = np.arange(1, K + 1)
    pmf = np.array([conditional_pmf_total(lw, int(k)) for k in ks])
    assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
    assert float((ks * pmf).sum()) == pytest.approx(conditional_mean_total(lw), rel=1e-10)


@given(bt=st.floats(0.1, 50), s=st.floats(0.01, 4))
def test_exact_tail_matches_bruteforce(bt, s):
    lw = law(1.0, bt)
    assert conditional_tail(lw, s) == pytest.approx(conditional_tail_bruteforce(1.0, bt, s), abs=1e-12)


@given(bt=st.floats(0.01, 100), s1=st.floats(0.01, 5), s2=st.floats(0.01, 5))
def test_tail_monotone(bt, s1, s2):
    lw = law(1.0, bt)
    lo, hi = sorted((s1, s2))
    assert conditional_tail(lw, hi) <= conditional_tail(lw, lo)
