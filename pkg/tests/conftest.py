"""Shared fixtures: the two worked example designs and profile generators."""

from __future__ import annotations

import warnings

import numpy as np
import pytest

from vpmac import channel as chn
from vpmac import theory

EX2_STATES = ((0.3, 4), (0.7, 6))
EX2_ENERGY = 0.3


@pytest.fixture(scope="session")
def collision_params() -> chn.ChannelParams:
    return chn.derive_params(chn.Collision())


@pytest.fixture(scope="session")
def fading_params() -> chn.ChannelParams:
    return chn.derive_params(chn.ThresholdFading(EX2_STATES))


@pytest.fixture(scope="session")
def collision_design(collision_params) -> theory.MacDesign:
    # the collision design's own-success curve is knowingly non-monotone in
    # its below-one-user corner; the build warns about it once
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return theory.build_design(
            collision_params, theory.UtilitySpec.sum_throughput()
        )


@pytest.fixture(scope="session")
def fading_design(fading_params) -> theory.MacDesign:
    return theory.build_design(
        fading_params, theory.UtilitySpec.energy_weighted(EX2_ENERGY)
    )


def random_nonincreasing_profile(rng: np.random.Generator, zero_tail: bool = False):
    """Random non-increasing success profile, optionally forced to die out."""
    n = int(rng.integers(2, 9))
    vals = np.sort(rng.random(n))[::-1]
    if rng.random() < 0.5:
        vals[0] = 1.0
    if zero_tail:
        vals[-1] = 0.0
    return tuple(float(v) for v in vals)


def random_flat_head_profile(rng: np.random.Generator):
    """Non-increasing profile with a flat head, so the first detectable drop
    sits at index >= 1 and the whole target range is above one estimated user."""
    head = int(rng.integers(2, 5))
    top = 1.0 if rng.random() < 0.5 else 0.6 + 0.4 * float(rng.random())
    n_drop = int(rng.integers(1, 4))
    drops = np.sort(rng.random(n_drop) * top)[::-1]
    return tuple([top] * head + [float(x) for x in drops] + [0.0])


def random_design(rng: np.random.Generator, flat_head: bool = True) -> theory.MacDesign:
    """A valid random design (b strictly above its bound by construction)."""
    while True:
        profile = (
            random_flat_head_profile(rng)
            if flat_head
            else random_nonincreasing_profile(rng, zero_tail=True)
        )
        params = chn.ChannelParams(c_real=profile, c_virtual=profile)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                return theory.build_design(
                    params,
                    theory.UtilitySpec.sum_throughput(),
                    epsilon_v=0.01,
                    b_margin=0.01 + 0.5 * float(rng.random()),
                )
        except ValueError:
            continue
