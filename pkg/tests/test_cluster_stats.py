import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from critbrw import cluster_stats as cs
from critbrw import mc_simulator as mc
from critbrw.errors import CellLargerThanWindow, TooFewSurvivors
from critbrw.gw_analytics import BranchingParams
from critbrw.lattice_kernel import simple_random_walk
from critbrw.goodness import geometric_chisquare


def test_time_zero_everything_survives():
    f = cs.surviving_origins(cs.BernoulliExact(1, 50, 1.0, 0.0))
    assert len(f) == 101
    g = cs.gap_statistics_1d(f)
    assert (g.gaps == 1).all()


def test_bernoulli_count():
    f = cs.surviving_origins(cs.BernoulliExact(1, 10**5, 1.0, 9.0, seed=1))
    N, p = 2 * 10**5 + 1, 0.1
    assert abs(len(f) - N * p) < 3 * math.sqrt(N * p * (1 - p))


def test_bernoulli_binomial_moments():
    N, p = 2001, 1 / 6
    sizes = np.array([len(cs.surviving_origins(cs.BernoulliExact(1, 1000, 1.0, 5.0, seed=2, stream_id=r)))
                      for r in range(100)])
    se_mean = math.sqrt(N * p * (1 - p) / 100)
    assert abs(sizes.mean() - N * p) < 4 * se_mean
    var = N * p * (1 - p)
    assert abs(sizes.var(ddof=1) - var) < 4 * var * math.sqrt(2 / 99)


def test_simulation_matches_bernoulli():
    c = mc.SimConfig(simple_random_walk(1), BranchingParams(1.0), 4.0, initial_window_radius=2000,
                     master_seed=3)
    sim = [len(cs.surviving_origins(mc.simulate_field(c, s))) for s in range(10)]
    ber = [len(cs.surviving_origins(cs.BernoulliExact(1, 2000, 1.0, 4.0, seed=3, stream_id=s)))
           for s in range(10)]
    se = math.sqrt((np.var(sim, ddof=1) + np.var(ber, ddof=1)) / 10)
    assert abs(np.mean(sim) - np.mean(ber)) < 3 * se


def test_gap_mean_and_fit():
    f = cs.surviving_origins(cs.BernoulliExact(1, 10**6, 1.0, 99.0, seed=5))
    g = cs.gap_statistics_1d(f)
    assert abs(g.mean - 100) < 3 * g.stderr
    assert g.p_value > 1e-3


def test_gap_errors():
    f = cs.OriginField(1, 10, np.array([[0]]), None)
    with pytest.raises(TooFewSurvivors):
        cs.gap_statistics_1d(f, p=0.5)


def test_cell_census_full_field_and_formula():
    full = cs.surviving_origins(cs.BernoulliExact(2, 30, 1.0, 0.0))
    assert cs.empty_cell_census_2d(full, 100, 1.0).empty_cells == 0
    assert cs.mu_formula(10**3, 100, 1.0) == pytest.approx(86.8588963806, rel=1e-9)
    assert cs.log_cell_side(100, 1.0) == 21


def test_cell_census_errors():
    f = cs.surviving_origins(cs.BernoulliExact(2, 3, 1.0, 10.0))
    with pytest.raises(CellLargerThanWindow):
        cs.empty_cell_census_2d(f, 100, 1.0, cs.Explicit(50))


def test_profile_at_time_zero():
    c = mc.SimConfig(simple_random_walk(1), BranchingParams(1.0), 0.0, initial_window_radius=5)
    prof = cs.cluster_profile(mc.simulate_field(c, 0), c.jd, c.bp, 0.0, radius=2)
    assert prof.observed.tolist() == [0, 0, 1, 0, 0]
    assert prof.predicted.tolist() == [0, 0, 1, 0, 0]


def test_profile_normalisation_and_shape():
    jd, bp, T = simple_random_walk(1), BranchingParams(1.0), 9.0
    c = mc.SimConfig(jd, bp, T, initial_window_radius=20000, master_seed=6)
    prof = cs.cluster_profile(mc.simulate_field(c, 0), jd, bp, T)
    assert abs(prof.observed.sum() - (bp.beta * T + 1)) < 3 * prof.total_stderr
    i = len(prof.offsets) // 2
    assert abs(prof.observed[i] - prof.predicted[i]) < 4 * prof.stderr[i]
    assert 0.5 * math.sqrt(T) <= prof.half_mass_radius() <= 3 * math.sqrt(T)


@given(seed=st.integers(0, 10**6), s1=st.integers(1, 20), s2=st.integers(1, 20))
def test_cells_monotone_in_side(seed, s1, s2):
    f = cs.surviving_origins(cs.BernoulliExact(2, 40, 1.0, 30.0, seed=seed))
    lo, hi = sorted((s1, s2))
    # compare on the region both partitions cover: use nested sides
    small = cs.empty_cell_census_2d(f, 30, 1.0, cs.Explicit(lo))
    big = cs.empty_cell_census_2d(f, 30, 1.0, cs.Explicit(lo * max(1, hi // lo)))
    assert big.empty_cells <= small.empty_cells


@given(beta=st.floats(0.2, 3), t=st.floats(1, 40), seed=st.integers(0, 1000))
def test_gaps_pass_geometric_fit(beta, t, seed):
    f = cs.surviving_origins(cs.BernoulliExact(1, 20000, beta, t, seed=seed))
    g = cs.gap_statistics_1d(f)
    # one-in-a-thousand rejections are expected; the fit itself must be sane
    assert g.p_value > 1e-6


def test_chisquare_rejects_wrong_law():
    rng = np.random.default_rng(0)
    x = rng.geometric(0.1, 5000)
    assert geometric_chisquare(x, 0.1).p_value > 1e-3
    assert geometric_chisquare(x, 0.12).p_value < 1e-6
