"""Per-user transmission-probability controller.

A user turns a contention measurement into a probability target (one of three
feedback modes) and then relaxes toward it with a step-size schedule:
p <- (1 - alpha) * p + alpha * target.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from . import theory
from .theory import MacDesign


class FeedbackMode(str, Enum):
    """What the user gets to observe.

    RECEIVER: the receiver broadcasts its virtual-packet success estimate.
    TWO_STEP: the user knows only its own conditional success probability and
        reconstructs the contention measure through the auxiliary curves.
    ONE_STEP: as TWO_STEP but the intermediate probability is used directly
        as the target (direction-equivalent simplification).
    """

    RECEIVER = "receiver"
    TWO_STEP = "two_step"
    ONE_STEP = "one_step"


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes alpha(t): constant, or diminishing a / (t + c).

    The diminishing form satisfies sum(alpha) = inf and sum(alpha^2) < inf by
    construction.  a <= c is required so alpha(t) <= 1 and every update stays
    a convex combination.
    """

    kind: str
    alpha: float | None = None
    a: float | None = None
    c: float | None = None

    def __post_init__(self) -> None:
        if self.kind == "constant":
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise ValueError("constant schedule needs 0 < alpha < 1")
        elif self.kind == "diminishing":
            if self.a is None or self.c is None:
                raise ValueError("diminishing schedule needs parameters a and c")
            if self.a <= 0:
                raise ValueError("diminishing schedule needs a > 0")
            if self.c < 1:
                raise ValueError("diminishing schedule needs c >= 1")
            if self.a > self.c:
                raise ValueError("diminishing schedule needs a <= c so alpha(t) <= 1")
        else:
            raise ValueError(f"unknown schedule kind: {self.kind!r}")

    @classmethod
    def constant(cls, alpha: float) -> "StepSchedule":
        return cls("constant", alpha=float(alpha))

    @classmethod
    def diminishing(cls, a: float, c: float) -> "StepSchedule":
        return cls("diminishing", a=float(a), c=float(c))

    def alpha_at(self, t: int) -> float:
        if self.kind == "constant":
            return self.alpha
        return self.a / (t + self.c)


@dataclass(frozen=True)
class ControllerState:
    """One user's transmission probability plus its update clock."""

    p: float
    schedule: StepSchedule
    t: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("transmission probability must lie in [0, 1]")


def target_receiver(q_v_estimate: float, design: MacDesign) -> float:
    """Target from a broadcast contention estimate: invert the designed curve."""
    return theory.invert_q_v_star(q_v_estimate, design)


def target_one_step(q_k_estimate: float, design: MacDesign) -> float:
    """Target from an own-success estimate alone."""
    return theory.invert_q_star(q_k_estimate, design)


def target_two_step(p_k: float, q_k_estimate: float, design: MacDesign) -> float:
    """Target via reconstruction of the contention measure.

    The own-success reading fixes an intermediate probability p_breve; the
    unobserved transmit-conditioned success is replaced by d_star(p_breve),
    giving q_v = (1 - p_k) * q_k + p_k * d_star(p_breve), which is then
    inverted like receiver feedback.
    """
    p_breve = theory.invert_q_star(q_k_estimate, design)
    q_v = (1.0 - p_k) * q_k_estimate + p_k * theory.d_star(p_breve, design)
    return theory.invert_q_v_star(q_v, design)


def apply_update(state: ControllerState, p_hat: float) -> ControllerState:
    """Relax toward the target and advance the update clock."""
    if not 0.0 <= p_hat <= 1.0:
        raise ValueError("target probability must lie in [0, 1]")
    alpha = state.schedule.alpha_at(state.t)
    return replace(state, p=(1.0 - alpha) * state.p + alpha * p_hat, t=state.t + 1)
