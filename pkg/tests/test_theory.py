"""Analytic core: utilities, design constants, contention curves, inversions.

Expected values tagged as derived in the docs below are computed by
independent brute-force oracles (exact binomial sums via math.comb,
term-by-term Poisson tails) rather than by the code paths under test.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

from conftest import (
    EX2_ENERGY,
    random_design,
    random_nonincreasing_profile,
)
from vpmac import channel as chn
from vpmac import theory
from vpmac.theory import UtilitySpec


# ---------------------------------------------------------------------------
# independent oracles


def value_at(profile, j):
    return profile[j] if j < len(profile) else profile[-1]


def oracle_utility(k, p, profile, energy=0.0):
    """Exact finite sum: -E*k*p + k * sum_j C(k-1,j) p^(j+1) (1-p)^(k-1-j) c_j."""
    tot = 0.0
    for j in range(k):
        tot += (
            math.comb(k - 1, j)
            * p ** (j + 1)
            * (1 - p) ** (k - 1 - j)
            * value_at(profile, j)
        )
    return k * tot - energy * k * p


def oracle_qv(p, k, profile):
    return math.fsum(
        math.comb(k, j) * p**j * (1 - p) ** (k - j) * value_at(profile, j)
        for j in range(k + 1)
    )


def oracle_asymptotic(x, profile, energy=0.0, tol=1e-14):
    """Term-by-term Poisson mixture, truncated when the tail weight drops."""
    if x == 0:
        return 0.0
    acc = 0.0
    weight_left = 1.0
    pmf = math.exp(-x)
    j = 0
    while weight_left > tol:
        acc += pmf * value_at(profile, j)
        weight_left -= pmf
        j += 1
        pmf *= x / j
    return x * (acc - energy)


# ---------------------------------------------------------------------------
# utilities


def test_utility_single_user_collision(collision_params):
    assert theory.utility_finite(1, 0.5, collision_params, UtilitySpec.sum_throughput()) == 0.5


def test_utility_collision_k8(collision_params):
    got = theory.utility_finite(8, 1 / 8, collision_params, UtilitySpec.sum_throughput())
    assert got == pytest.approx((7 / 8) ** 7, abs=1e-14)
    assert got == pytest.approx(oracle_utility(8, 1 / 8, (1.0, 0.0)), abs=1e-14)


def test_utility_fading_k8_oracle(fading_params):
    spec = UtilitySpec.energy_weighted(EX2_ENERGY)
    expected = oracle_utility(8, 0.365, fading_params.c_real, EX2_ENERGY)
    got = theory.utility_finite(8, 0.365, fading_params, spec)
    assert got == pytest.approx(expected, abs=1e-12)


def test_utility_oracle_sweep(fading_params, collision_params):
    rng = np.random.default_rng(11)
    for params in (fading_params, collision_params):
        for _ in range(40):
            k = int(rng.integers(1, 60))
            p = float(rng.random())
            got = theory.utility_finite(k, p, params, UtilitySpec.energy_weighted(0.2))
            assert got == pytest.approx(
                oracle_utility(k, p, params.c_real, 0.2), abs=1e-11
            )


def test_utility_asymptotic_collision(collision_params):
    got = theory.utility_asymptotic(1.0, collision_params, UtilitySpec.sum_throughput())
    assert got == pytest.approx(math.exp(-1), abs=1e-14)
    # agrees with the finite utility at K = 1e4
    finite = theory.utility_finite(10_000, 1e-4, collision_params, UtilitySpec.sum_throughput())
    assert abs(finite - got) < 1e-3


def test_utility_asymptotic_zero_load(fading_params):
    assert theory.utility_asymptotic(0.0, fading_params, UtilitySpec.sum_throughput()) == 0.0


def test_utility_asymptotic_oracle(fading_params):
    spec = UtilitySpec.energy_weighted(EX2_ENERGY)
    for x in (0.3, 1.0, 3.29, 6.5):
        got = theory.utility_asymptotic(x, fading_params, spec)
        assert got == pytest.approx(
            oracle_asymptotic(x, fading_params.c_real, EX2_ENERGY), abs=1e-12
        )


def test_fading_local_max_location(fading_params):
    spec = UtilitySpec.energy_weighted(EX2_ENERGY)
    u = lambda x: theory.utility_asymptotic(x, fading_params, spec)
    assert u(3.29) > u(3.29 - 0.06)
    assert u(3.29) > u(3.29 + 0.06)


def test_poisson_limit_bound(collision_params, fading_params):
    for params in (collision_params, fading_params):
        for x in (0.5, 1.0, 3.29):
            limit = theory.utility_asymptotic(x, params, UtilitySpec.sum_throughput())
            for k in (100, 1_000, 10_000):
                finite = theory.utility_finite(k, x / k, params, UtilitySpec.sum_throughput())
                assert abs(finite - limit) < 5.0 / k


# ---------------------------------------------------------------------------
# design constants


def test_x_star_collision(collision_params):
    x = theory.compute_x_star(collision_params, UtilitySpec.sum_throughput())
    assert x == pytest.approx(1.0, abs=1e-6)


def test_x_star_fading(fading_params):
    x = theory.compute_x_star(fading_params, UtilitySpec.energy_weighted(EX2_ENERGY))
    assert x == pytest.approx(3.29, abs=0.02)


def test_x_star_degenerate_contention_free():
    params = chn.ChannelParams(c_real=(1.0,), c_virtual=(1.0, 0.0))
    with pytest.warns(RuntimeWarning):
        x = theory.compute_x_star(params, UtilitySpec.sum_throughput(), x_hi=7.0)
    assert x == 7.0


def test_x_star_flags_ambiguous_optimum():
    """Two separated near-equal maxima must be reported, not silently picked.

    A second hump is grown at load ~9 (through a real-profile spike at index
    8) until its peak matches the collision hump at load 1; right at the
    balance point the optimizer refuses."""
    spec = UtilitySpec.sum_throughput()

    def params_for(c):
        return chn.ChannelParams(
            c_real=(1.0, 0, 0, 0, 0, 0, 0, 0, c, 0.0), c_virtual=(1.0, 0.0)
        )

    def peak_gap(c):
        params = params_for(c)
        xs = [i * 0.01 for i in range(3001)]
        us = [theory.utility_asymptotic(x, params, spec) for x in xs]
        split = 500  # the humps live around x=1 and x=9
        return max(us[:split]) - max(us[split:])

    lo, hi = 0.2, 0.5
    assert peak_gap(lo) > 0 > peak_gap(hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if peak_gap(mid) > 0:
            lo = mid
        else:
            hi = mid
    with pytest.raises(ValueError, match="near-equal maxima"):
        theory.compute_x_star(params_for(0.5 * (lo + hi)), spec)


def test_j_ev_cases(collision_params, fading_params):
    assert theory.compute_j_ev(collision_params, 0.01) == 0
    assert theory.compute_j_ev(fading_params, 0.01) == 3
    flat = chn.ChannelParams(c_real=(0.5,), c_virtual=(0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        theory.compute_j_ev(flat, 0.01)


def test_gamma_cases(collision_params, fading_params):
    assert theory.compute_gamma_ev(collision_params, 1.0, 1.01, 0.01) == 0.0
    g = theory.compute_gamma_ev(fading_params, 3.2895, 1.01, 0.01)
    assert g == 3.0
    # flat below the first detectable drop -> gamma equals j_ev exactly
    params = chn.ChannelParams(
        c_real=(0.9, 0.9, 0.9, 0.2, 0.0), c_virtual=(0.9, 0.9, 0.9, 0.2, 0.0)
    )
    assert theory.compute_j_ev(params, 0.01) == 2
    assert theory.compute_gamma_ev(params, 1.7, 1.2, 0.01) == 2.0


def test_build_design_collision(collision_params):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        d = theory.build_design(collision_params, UtilitySpec.sum_throughput())
    assert d.j_ev == 0 and d.gamma_ev == 0.0
    assert d.b == pytest.approx(1.01, abs=1e-9)
    assert d.p_max == pytest.approx(1 / 1.01, abs=1e-9)


def test_build_design_fading(fading_design):
    assert fading_design.j_ev == 3 and fading_design.gamma_ev == 3.0
    assert fading_design.b == pytest.approx(1.01, abs=1e-9)
    assert fading_design.p_max == pytest.approx(
        fading_design.x_star / 4.01, abs=1e-12
    )


def test_build_design_rejects_zero_margin(collision_params):
    with pytest.raises(ValueError):
        theory.build_design(collision_params, UtilitySpec.sum_throughput(), b_margin=0.0)


def test_collision_design_warns_about_q_star(collision_params):
    with pytest.warns(RuntimeWarning, match="not monotone"):
        theory.build_design(collision_params, UtilitySpec.sum_throughput())


def test_design_invariant_validation(collision_params):
    with pytest.raises(ValueError):
        theory.MacDesign(
            x_star=1.0,
            epsilon_v=0.01,
            j_ev=0,
            gamma_ev=0.0,
            b=1.0,  # not strictly above max(1, x*-gamma)
            p_max=1.0,
            params=collision_params,
            utility=UtilitySpec.sum_throughput(),
        )


def test_utility_spec_validation():
    with pytest.raises(ValueError):
        UtilitySpec("sum_throughput", 0.3)
    with pytest.raises(ValueError):
        UtilitySpec("energy_weighted", -0.1)
    with pytest.raises(ValueError):
        UtilitySpec("bogus")


# ---------------------------------------------------------------------------
# contention curves


def test_qv_identical_collision(collision_params):
    assert theory.q_v_identical(0.5, 2, collision_params) == pytest.approx(0.25, abs=1e-15)
    p = 1 / 9.01
    assert theory.q_v_identical(p, 8, collision_params) == pytest.approx(
        (1 - p) ** 8, abs=1e-14
    )
    assert theory.q_v_identical(0.0, 5, collision_params) == 1.0


def test_qv_identical_oracle(fading_params):
    rng = np.random.default_rng(21)
    for _ in range(60):
        k = int(rng.integers(0, 45))
        p = float(rng.random())
        assert theory.q_v_identical(p, k, fading_params) == pytest.approx(
            oracle_qv(p, k, fading_params.c_virtual), abs=1e-12
        )


def test_qv_star_integer_frame(fading_design):
    # at an integer estimated population the interpolation collapses
    for n in (4, 5, 9, 17):
        p_n = fading_design.equilibrium_p(n)
        direct = theory.binomial_profile_mean(
            fading_design.params.c_virtual, n, p_n
        )
        assert theory.q_v_star(p_n, fading_design) == pytest.approx(direct, abs=1e-15)


def test_qv_star_collision_equilibrium(collision_design):
    p = 1 / 9.01
    assert theory.q_v_star(p, collision_design) == pytest.approx(
        (1 - p) ** 8, abs=1e-12
    )


def test_qv_star_poisson_limit(collision_design):
    assert theory.q_v_star(0.0, collision_design) == pytest.approx(
        math.exp(-1), abs=1e-12
    )
    # tiny p falls into the same limit
    assert theory.q_v_star(1e-9, collision_design) == pytest.approx(
        math.exp(-1), abs=1e-6
    )


def test_invert_qv_star_clamps(collision_design, fading_design):
    assert theory.invert_q_v_star(1.1, fading_design) == fading_design.p_max
    assert theory.invert_q_v_star(0.0, collision_design) == 0.0
    # q_v above the top of the curve clamps even when <= 1
    top = theory.q_v_star(fading_design.p_max, fading_design)
    assert theory.invert_q_v_star(min(1.0, top + 0.1), fading_design) == fading_design.p_max


def test_invert_qv_star_roundtrip(collision_design):
    q = (1 - 1 / 9.01) ** 8
    assert theory.invert_q_v_star(q, collision_design) == pytest.approx(
        1 / 9.01, abs=1e-9
    )


def test_aux_collision_specialization(collision_design):
    # at an integer frame, q* is the idle-conditioned success (1-p)^(K-1)
    for k in (1, 2, 5, 8, 20):
        p = collision_design.equilibrium_p(k)
        if p >= collision_design.p_max:
            continue
        assert theory.q_star(p, collision_design) == pytest.approx(
            (1 - p) ** (k - 1), abs=1e-12
        )
        assert theory.d_star(p, collision_design) == 0.0


def test_aux_decomposition_identity(collision_design, fading_design):
    rng = np.random.default_rng(3)
    designs = [collision_design, fading_design] + [random_design(rng) for _ in range(8)]
    for d in designs:
        for k in range(max(1, d.j_ev), 40):
            p = d.equilibrium_p(k)
            if p >= d.p_max:
                continue
            lhs = (1 - p) * theory.q_star(p, d) + p * theory.d_star(p, d)
            assert lhs == pytest.approx(
                theory.q_v_identical(p, k, d.params), abs=1e-12
            )


def test_aux_dominance(collision_design, fading_design):
    rng = np.random.default_rng(4)
    designs = [collision_design, fading_design] + [random_design(rng) for _ in range(8)]
    for d in designs:
        for p in np.linspace(0.0, d.p_max, 400):
            assert theory.q_star(float(p), d) >= theory.d_star(float(p), d) - 1e-15


def test_invert_q_star_collision_cases(collision_design):
    # a perfect own-success reading means an empty channel: cap out
    assert theory.invert_q_star(1.0, collision_design) == collision_design.p_max
    # equilibrium reading round-trips
    q_k = (1 - 1 / 9.01) ** 7
    assert theory.invert_q_star(q_k, collision_design) == pytest.approx(
        1 / 9.01, abs=1e-9
    )
    # readings below the crowded limit mean: back off entirely
    assert theory.q_star(0.0, collision_design) > 0.0
    assert theory.invert_q_star(0.0, collision_design) == 0.0


def test_invert_q_star_fading_roundtrip(fading_design):
    for k in (5, 8, 13, 30):
        p = fading_design.equilibrium_p(k)
        q_k = theory.q_star(p, fading_design)
        assert theory.invert_q_star(q_k, fading_design) == pytest.approx(p, abs=1e-8)


def test_roundtrips_on_random_designs():
    # the guarantee covers the strictly-monotone region: flat segments invert
    # to their infimum by convention, so skip points sitting on one
    def strictly_rising(f, p, d):
        h = 1e-6
        return f(min(p + h, d.p_max), d) - f(max(p - h, 0.0), d) > 1e-12

    rng = np.random.default_rng(6)
    for _ in range(8):
        d = random_design(rng)
        for frac in (0.05, 0.2, 0.5, 0.8, 0.97):
            p = frac * d.p_max
            if strictly_rising(theory.q_v_star, p, d):
                assert theory.invert_q_v_star(
                    theory.q_v_star(p, d), d
                ) == pytest.approx(p, abs=1e-8)
            if d.q_star_is_monotone and strictly_rising(theory.q_star, p, d):
                assert theory.invert_q_star(theory.q_star(p, d), d) == pytest.approx(
                    p, abs=1e-8
                )


def test_profile_mean_stability_edges(fading_params):
    cv = fading_params.c_virtual
    # huge population at a consistent load: agrees with the Poisson mixture
    n = 1_000_000
    p = 3.29 / n
    bino = theory.binomial_profile_mean(cv, n, p)
    pois = theory.poisson_profile_mean(cv, 3.29)
    assert bino == pytest.approx(pois, abs=1e-5)
    # huge population at moderate p: the load is far past the profile support,
    # so the mean collapses to the tail value without overflow
    assert theory.binomial_profile_mean(cv, n, 0.5) == cv[-1]
    # p at the boundaries
    assert theory.binomial_profile_mean(cv, 10, 0.0) == cv[0]
    assert theory.binomial_profile_mean(cv, 10, 1.0) == cv[-1]
    assert theory.binomial_profile_mean(cv, 3, 1.0) == cv[3]


def test_contention_curves_continuous_at_frame_boundaries(fading_design):
    """The integer-population interpolation must not jump where the floor
    changes."""
    d = fading_design
    eps = 1e-9
    for k in range(d.j_ev + 1, 30):
        boundary = d.equilibrium_p(k)
        if boundary >= d.p_max:
            continue
        for f in (theory.q_v_star, theory.q_star, theory.d_star):
            below = f(boundary - eps, d)
            above = f(boundary + eps, d)
            assert abs(above - below) < 1e-6
            assert f(boundary, d) == pytest.approx(below, abs=1e-6)


# ---------------------------------------------------------------------------
# baselines


def test_hajek_root_k1():
    p = theory.hajek_pa(1)
    assert 0.45 < p < 0.55
    assert math.e * (1 - p) - 1 - 0.5 * math.sqrt(p) == pytest.approx(0.0, abs=1e-11)


def test_hajek_decreasing_in_k():
    roots = [theory.hajek_pa(k) for k in range(2, 51)]
    assert all(a > b for a, b in zip(roots, roots[1:]))
    for k, p in zip(range(2, 51), roots):
        assert math.e * (1 - p) ** k - 1 - 0.5 * math.sqrt(p) == pytest.approx(
            0.0, abs=1e-10
        )


def test_idle_target():
    assert theory.idle_target_p(1, 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-15)
    for k, x in ((3, 1.0), (8, 3.29), (25, 2.2)):
        p = theory.idle_target_p(k, x)
        assert (1 - p) ** k == pytest.approx(math.exp(-x), abs=1e-12)
    assert theory.idle_target_p(8, 3.29) == pytest.approx(
        1 - math.exp(-3.29 / 8), abs=1e-15
    )


def test_optimal_p_collision(collision_params):
    spec = UtilitySpec.sum_throughput()
    assert theory.optimal_p(8, collision_params, spec) == pytest.approx(1 / 8, abs=1e-6)
    assert theory.optimal_p(1, collision_params, spec) == pytest.approx(1.0, abs=1e-6)


def test_optimal_p_fading_beats_equilibrium(fading_params, fading_design):
    spec = UtilitySpec.energy_weighted(EX2_ENERGY)
    p_opt = theory.optimal_p(8, fading_params, spec)
    u_opt = theory.utility_finite(8, p_opt, fading_params, spec)
    # exhaustive-grid oracle: nothing on a fine grid beats the optimizer
    grid_best = max(
        oracle_utility(8, i / 2000, fading_params.c_real, EX2_ENERGY)
        for i in range(2001)
    )
    assert u_opt >= grid_best - 1e-9
    assert u_opt >= theory.utility_finite(8, 0.365, fading_params, spec)


# ---------------------------------------------------------------------------
# property suites


def test_qv_monotone_and_derivative_random_profiles():
    """Over random non-increasing virtual profiles: q_v never increases with
    p, and the analytic slope matches a central finite difference."""
    rng = np.random.default_rng(12)
    p_grid = np.linspace(0.02, 0.98, 33)
    for _ in range(50):
        profile = random_nonincreasing_profile(rng)
        params = chn.ChannelParams(c_real=profile, c_virtual=profile)
        for k in (1, 2, 3, 5, 8, 13, 21, 34, 40):
            vals = [theory.q_v_identical(float(p), k, params) for p in p_grid]
            assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
            for p in (0.07, 0.31, 0.62, 0.9):
                h = 1e-6
                fd = (
                    theory.q_v_identical(p + h, k, params)
                    - theory.q_v_identical(p - h, k, params)
                ) / (2 * h)
                an = theory.q_v_identical_derivative(p, k, params)
                assert an <= 1e-12
                assert an == pytest.approx(fd, abs=1e-6)


def test_qv_star_monotone_10k_grid(collision_design, fading_design):
    for d in (collision_design, fading_design):
        grid = np.linspace(0.0, d.p_max, 10_000)
        vals = np.array([theory.q_v_star(float(p), d) for p in grid])
        diffs = np.diff(vals)
        assert bool(np.all(diffs >= 0.0))
        # strictly increasing away from the endpoints
        assert bool(np.all(diffs[1:-1] > 0.0))


def test_qv_star_monotone_random_designs():
    rng = np.random.default_rng(14)
    for _ in range(8):
        d = random_design(rng)
        grid = np.linspace(0.0, d.p_max, 2_000)
        vals = np.array([theory.q_v_star(float(p), d) for p in grid])
        assert bool(np.all(np.diff(vals) >= -1e-14))


def test_equilibrium_fixed_point(collision_design, fading_design):
    for d in (collision_design, fading_design):
        for k in range(d.j_ev + 1, 51):
            p_star = d.equilibrium_p(k)
            gap = abs(
                theory.q_v_star(p_star, d) - theory.q_v_identical(p_star, k, d.params)
            )
            assert gap < 1e-9
            recovered = theory.invert_q_v_star(
                theory.q_v_identical(p_star, k, d.params), d
            )
            assert recovered == pytest.approx(p_star, abs=1e-8)
