"""Link-layer channel models and per-slot outcome sampling.

A channel is summarized by two success-probability profiles: ``c_real[j]`` is
the chance a transmitted packet gets through when j other packets are sent in
parallel, and ``c_virtual[j]`` is the chance the receiver's virtual packet
would get through alongside j real packets.  Profiles are stored as finite
vectors; the last entry repeats for all larger indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

_PROB_TOL = 1e-12


def _as_profile(values: Sequence[float], name: str) -> tuple[float, ...]:
    vals = tuple(float(v) for v in values)
    if not vals:
        raise ValueError(f"{name} must contain at least one entry")
    for v in vals:
        if not (-_PROB_TOL <= v <= 1.0 + _PROB_TOL):
            raise ValueError(f"{name} entries must lie in [0, 1], got {v}")
    return tuple(min(1.0, max(0.0, v)) for v in vals)


@dataclass(frozen=True)
class ChannelParams:
    """Real and virtual packet success profiles, indexed by parallel load.

    Both sequences are finitely supported: entry ``seq[j]`` applies for
    ``j >= len(seq) - 1`` (constant tail).  ``c_virtual`` must be
    non-increasing; more parallel traffic never helps the virtual packet.
    """

    c_real: tuple[float, ...]
    c_virtual: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "c_real", _as_profile(self.c_real, "c_real"))
        object.__setattr__(self, "c_virtual", _as_profile(self.c_virtual, "c_virtual"))
        for j in range(len(self.c_virtual) - 1):
            if self.c_virtual[j] < self.c_virtual[j + 1] - _PROB_TOL:
                raise ValueError(
                    "c_virtual must be non-increasing: "
                    f"entry {j} is {self.c_virtual[j]} < entry {j + 1} = {self.c_virtual[j + 1]}"
                )

    def real_at(self, j: int) -> float:
        return self.c_real[j] if j < len(self.c_real) else self.c_real[-1]

    def virtual_at(self, j: int) -> float:
        return self.c_virtual[j] if j < len(self.c_virtual) else self.c_virtual[-1]


@dataclass(frozen=True)
class Collision:
    """Classic collision channel: a slot carries at most one packet."""


@dataclass(frozen=True)
class ThresholdFading:
    """Per-slot random capacity: state i holds with probability p_i and then
    at most ``capacity_i`` parallel packets get through."""

    states: tuple[tuple[float, int], ...]

    def __post_init__(self) -> None:
        states = tuple((float(p), int(m)) for p, m in self.states)
        if not states:
            raise ValueError("ThresholdFading needs at least one state")
        total = math.fsum(p for p, _ in states)
        if abs(total - 1.0) > _PROB_TOL:
            raise ValueError(f"state probabilities must sum to 1, got {total}")
        for p, m in states:
            if p < 0:
                raise ValueError("state probabilities must be non-negative")
            if m < 0:
                raise ValueError("state capacities must be non-negative integers")
        object.__setattr__(self, "states", states)

    @property
    def capacities(self) -> tuple[int, ...]:
        return tuple(m for _, m in self.states)


@dataclass(frozen=True)
class Parametric:
    """Channel specified directly by its success profiles; per-slot outcomes
    are drawn independently with the matching marginal probabilities."""

    params: ChannelParams


ChannelModel = Union[Collision, ThresholdFading, Parametric]


@dataclass(frozen=True)
class SlotOutcome:
    """What happened in one slot: who got through, and whether the virtual
    packet would have."""

    n_transmitted: int
    real_success: tuple[bool, ...]
    virtual_success: bool
    channel_state: int | None = None

    def __post_init__(self) -> None:
        if len(self.real_success) != self.n_transmitted:
            raise ValueError("real_success must have one entry per transmitted packet")


def derive_params(model: ChannelModel) -> ChannelParams:
    """Success profiles implied by a channel model.

    The virtual packet carries the same coding parameters as a real packet, so
    on the collision channel it shares the real profile, and on a threshold
    channel it counts as one additional parallel transmission.
    """
    if isinstance(model, Collision):
        return ChannelParams(c_real=(1.0, 0.0), c_virtual=(1.0, 0.0))
    if isinstance(model, ThresholdFading):
        top = max(model.capacities)
        profile = tuple(
            math.fsum(p for p, m in model.states if j + 1 <= m) for j in range(top + 1)
        )
        return ChannelParams(c_real=profile, c_virtual=profile)
    if isinstance(model, Parametric):
        return model.params
    raise TypeError(f"unknown channel model: {model!r}")


def sample_state(model: ChannelModel, rng: np.random.Generator) -> int | None:
    """Draw the slot's channel state. Only ThresholdFading consumes a draw."""
    if isinstance(model, ThresholdFading):
        u = rng.random()
        acc = 0.0
        for i, (p, _) in enumerate(model.states):
            acc += p
            if u < acc:
                return i
        return len(model.states) - 1
    return None


def realize_slot(
    model: ChannelModel,
    state: int | None,
    transmit_flags: Sequence[bool],
    rng: np.random.Generator,
) -> SlotOutcome:
    """Resolve packet outcomes for a slot whose channel state is already drawn.

    Draw order is fixed for reproducibility: real-packet draws in transmitter
    index order, then the virtual-packet draw (Parametric only; the other
    models are deterministic given the state and the transmission count).
    """
    n = sum(1 for f in transmit_flags if f)
    if isinstance(model, Collision):
        return SlotOutcome(n, (True,) * n if n == 1 else (False,) * n, n == 0)
    if isinstance(model, ThresholdFading):
        cap = model.states[state][1]
        return SlotOutcome(n, (n <= cap,) * n, n + 1 <= cap, channel_state=state)
    if isinstance(model, Parametric):
        c_r = model.params.real_at(n - 1) if n > 0 else 1.0
        real = tuple(bool(rng.random() < c_r) for _ in range(n))
        virtual = bool(rng.random() < model.params.virtual_at(n))
        return SlotOutcome(n, real, virtual)
    raise TypeError(f"unknown channel model: {model!r}")


def sample_slot(
    model: ChannelModel, transmit_flags: Sequence[bool], rng: np.random.Generator
) -> SlotOutcome:
    """Sample one slot: channel state first, then packet outcomes."""
    return realize_slot(model, sample_state(model, rng), transmit_flags, rng)
