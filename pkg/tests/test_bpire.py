import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwre21.bpire import (ZERO, GenVector, empirical_pmf, extract_U, next_generation,
                          offspring_mean, offspring_pmf, offspring_sample, simulate_Z,
                          tn_identity, tv_distance, u_z_distribution_check,
                          write_generations)
from rwre21.env import SiteLaw
from rwre21.spectral import site_matrices, zn_pmf
from rwre21.streams import UniformBuffer, substream
from rwre21.walk import record_from_path, simulate_to

from conftest import HAND_PATH, POINT_THETA


def _enumerated_pmf(site, a, b):
    """Sum over all orderings of a '-1' draws and b '-2' draws before the '+1'."""
    total = 0.0
    for order in set(itertools.permutations([1] * a + [2] * b)):
        p = site.w_p1
        for o in order:
            p *= site.w_m1 if o == 1 else site.w_m2
        total += p
    return total


def test_offspring_pmf_examples(omega):
    assert offspring_pmf(omega, 1, (0, 0, 0)) == pytest.approx(0.7)
    assert offspring_pmf(omega, 1, (1, 0, 0)) == pytest.approx(0.14)
    assert offspring_pmf(omega, 1, (0, 0, 1)) == 0.0
    assert offspring_pmf(omega, 2, (1, 1, 1)) == pytest.approx(0.028)
    assert offspring_pmf(omega, 2, (1, 1, 0)) == 0.0
    assert offspring_pmf(omega, 3, (0, 2, 0)) == pytest.approx(0.01 * 0.7)


@pytest.mark.parametrize("a,b", [(0, 0), (1, 1), (2, 1), (3, 2), (0, 4)])
def test_offspring_pmf_matches_enumeration(omega, a, b):
    assert offspring_pmf(omega, 1, (a, b, 0)) == pytest.approx(_enumerated_pmf(omega, a, b),
                                                                rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.45), st.floats(0.0, 0.45))
def test_offspring_pmf_sums_to_one(w_m1, w_m2):
    site = SiteLaw(w_m2, w_m1, 1 - w_m1 - w_m2)
    total = 0.0
    for a in range(201):
        for b in range(201 - a):
            total += offspring_pmf(site, 1, (a, b, 0))
    assert total >= 1 - 1e-8


def test_offspring_sample_trivial_site():
    site = SiteLaw(0.0, 0.0, 1.0)
    rng = substream(0)
    assert all(offspring_sample(site, 1, rng) == ZERO for _ in range(100))
    assert offspring_sample(site, 2, rng) == (0, 0, 1)
    with pytest.raises(ValueError):
        offspring_sample(site, 4, rng)


def test_offspring_sample_frequencies(omega):
    rng = substream(21)
    n = 10**5
    draws = empirical_pmf(offspring_sample(omega, 2, rng) for _ in range(n))
    for v in [(0, 0, 1), (1, 0, 1), (0, 1, 1), (1, 1, 1)]:
        p = offspring_pmf(omega, 2, v)
        assert abs(draws.get(v, 0.0) - p) < 4 * math.sqrt(p * (1 - p) / n)


@pytest.mark.parametrize("ptype", [1, 2, 3])
def test_offspring_mean_matches_A_row(omega, ptype):
    mean, se = offspring_mean(omega, ptype, 10**5, substream(30, ptype))
    row = site_matrices(omega).a3[ptype - 1]
    for k in range(2):
        assert abs(mean[k] - row[k]) < 4 * se[k]
    assert mean[2] == row[2]


def test_extract_U_hand_path():
    U = extract_U(record_from_path(HAND_PATH))
    assert U[:3] == [(0, 0, 0), (0, 1, 0), (0, 0, 1)]
    assert U[3] == (0, 0, 0)          # site -1 contributes nothing
    assert len(U) == 4


def test_tn_identity_examples(point):
    assert tn_identity(record_from_path(HAND_PATH))
    rec = simulate_to(point, (0.0, 0.0), 7, rng=substream(0))
    assert rec.t_n == 7 and tn_identity(rec)
    assert all(u == ZERO for u in extract_U(rec))


def test_tn_identity_many_walks(point):
    for i in range(100):
        rec = simulate_to(point, POINT_THETA, 50, rng=substream(4, i))
        assert tn_identity(rec)


def test_type3_is_lagged_type2(dirichlet):
    for i in range(20):
        U = extract_U(simulate_to(dirichlet, (1, 1, 6), 40, rng=substream(5, i)))
        # U is listed from site n downwards, so U[j] is site n-j and U[j-1] is site n-j+1
        for j in range(1, len(U)):
            assert U[j].z3 == U[j - 1].z2


def test_simulate_Z_trivial_sites():
    traj = simulate_Z([SiteLaw(0.0, 0.0, 1.0)] * 5, substream(0))
    assert traj == [ZERO] * 6


def test_next_generation_type3_passthrough(omega):
    u = UniformBuffer(substream(1))
    for z in [(0, 3, 0), (2, 1, 5), (0, 0, 0)]:
        assert next_generation(z, omega, u).z3 == z[1]


def test_simulate_Z_matches_zn_pmf(omega):
    sites = [omega] * 3
    emp = empirical_pmf(simulate_Z(sites, substream(7, i))[-1] for i in range(10**5))
    exact = {v: zn_pmf(sites, v) for v in emp}
    tv, _ = tv_distance(emp, exact)
    assert tv < 0.02


def test_tv_distance_threshold():
    p = {(0, 0, 0): 0.9, (1, 0, 0): 0.1}
    q = {(0, 0, 0): 0.9, (2, 0, 0): 0.1}
    assert tv_distance(p, q) == (pytest.approx(0.1), 0.0)
    tv, dropped = tv_distance(p, q, threshold=0.2)
    assert tv == 0.0 and dropped == pytest.approx(0.1)


def test_u_z_check_deterministic_environment(point):
    rep = u_z_distribution_check(point, (0.0, 0.0), 5, 50, seed=3)
    assert rep.tv == [0.0] * 6


def test_u_z_check_small_run(point):
    rep = u_z_distribution_check(point, POINT_THETA, 4, 3000, seed=3)
    assert rep.tv[0] == 0.0
    assert rep.max_tv < 0.1
    assert rep.to_tsv().splitlines()[0] == "k\ttv\ttruncated_mass"


def test_write_generations():
    text = write_generations([ZERO, GenVector(1, 0, 0)])
    assert text == "generation\tz1\tz2\tz3\n0\t0\t0\t0\n1\t1\t0\t0\n"
