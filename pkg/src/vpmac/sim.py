"""Slotted Monte-Carlo engine.

One run is a strictly sequential slot loop owning all mutable state,
including its RNG stream; reproducibility is by seed.  Per slot the draw
order is fixed: join/leave events (leave selection draws), then the channel
state, then one transmit draw per active user in index order, then any
packet-outcome draws inside the channel model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import channel as chn
from . import mac, theory
from .channel import ChannelModel
from .mac import FeedbackMode, StepSchedule
from .theory import MacDesign, UtilitySpec


@dataclass(frozen=True)
class EstimatorConfig:
    """How success indicators are turned into probability estimates.

    ema: exponential moving average updated every slot, feedback every slot.
    window: plain average over blocks of ``window`` slots, feedback at each
        block boundary (targets frozen in between, accumulators reset).
    """

    kind: str
    weight: float | None = None
    window: int | None = None
    initial_value: float = 1.0

    def __post_init__(self) -> None:
        if self.kind == "ema":
            if self.weight is None or not 0.0 < self.weight < 1.0:
                raise ValueError("ema estimator needs 0 < weight < 1")
        elif self.kind == "window":
            if self.window is None or self.window < 1:
                raise ValueError("window estimator needs window >= 1")
        else:
            raise ValueError(f"unknown estimator kind: {self.kind!r}")
        if not 0.0 <= self.initial_value <= 1.0:
            raise ValueError("initial_value must lie in [0, 1]")

    @classmethod
    def ema(cls, weight: float, initial_value: float = 1.0) -> "EstimatorConfig":
        return cls("ema", weight=float(weight), initial_value=initial_value)

    @classmethod
    def windowed(cls, window: int, initial_value: float = 1.0) -> "EstimatorConfig":
        return cls("window", window=int(window), initial_value=initial_value)


@dataclass(frozen=True)
class NetworkEvent:
    """Population change effective from the start of 1-based slot ``slot``.

    Joiners enter with transmission probability 0 and own-success estimate 1;
    leavers are chosen uniformly at random among active users.
    """

    slot: int
    kind: str
    count: int

    def __post_init__(self) -> None:
        if self.kind not in ("join", "leave"):
            raise ValueError(f"unknown event kind: {self.kind!r}")
        if self.slot < 1:
            raise ValueError("event slots are 1-based and must be >= 1")
        if self.count < 1:
            raise ValueError("event count must be >= 1")


@dataclass(frozen=True)
class Scenario:
    """Complete, seedable description of one simulation run."""

    channel: ChannelModel
    utility: UtilitySpec
    mode: FeedbackMode
    schedule: StepSchedule
    estimator: EstimatorConfig
    horizon: int
    initial_k: int
    initial_p: float = 0.0
    seed: int = 0
    epsilon_v: float = 0.01
    b_margin: float = 0.01
    events: tuple[NetworkEvent, ...] = ()
    design: MacDesign | None = None
    utility_ema_weight: float | None = None
    stride: int = 1
    summary_window: int = 500

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "mode", FeedbackMode(self.mode))
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        if self.initial_k < 1:
            raise ValueError("initial_k must be at least 1")
        if not 0.0 <= self.initial_p <= 1.0:
            raise ValueError("initial_p must lie in [0, 1]")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.summary_window < 1:
            raise ValueError("summary_window must be >= 1")
        last = 0
        k = self.initial_k
        for ev in self.events:
            if ev.slot <= last:
                raise ValueError("event slots must be strictly increasing")
            if ev.slot > self.horizon:
                raise ValueError(
                    f"event at slot {ev.slot} lies beyond the horizon {self.horizon}"
                )
            last = ev.slot
            k += ev.count if ev.kind == "join" else -ev.count
            if k < 1:
                raise ValueError("user count would drop below 1 at slot "
                                 f"{ev.slot}")

    def resolve_design(self) -> MacDesign:
        """The explicit design if given, else one built from the channel."""
        if self.design is not None:
            return self.design
        params = chn.derive_params(self.channel)
        return theory.build_design(
            params, self.utility, epsilon_v=self.epsilon_v, b_margin=self.b_margin
        )

    def resolved_utility_weight(self) -> float:
        if self.utility_ema_weight is not None:
            return self.utility_ema_weight
        if self.estimator.kind == "ema":
            return self.estimator.weight
        return 1.0 / 300.0


@dataclass(frozen=True)
class SlotRecord:
    """End-of-slot snapshot (probabilities summarized over active users)."""

    slot: int
    n_active: int
    p_mean: float
    p_min: float
    p_max: float
    q_v: float
    q_k_mean: float
    i_v: int
    n_transmitted: int
    utility_sample: float
    utility_ema: float


@dataclass(frozen=True)
class RunSummary:
    """Trailing-window averages plus the matching analytic references."""

    n_slots: int
    k_final: int
    window: int
    mean_p_last: float
    utility_ema: float
    p_star: float
    p_opt: float
    u_at_p_star: float
    u_opt: float
    utility_ratio: float


@dataclass(frozen=True)
class SimTrace:
    scenario: Scenario
    design: MacDesign
    records: tuple[SlotRecord, ...]
    summary: RunSummary


def _leave(rng: np.random.Generator, lists: list[list], count: int) -> None:
    k = len(lists[0])
    gone = sorted(rng.choice(k, size=count, replace=False).tolist(), reverse=True)
    for lst in lists:
        for i in gone:
            del lst[i]


def run(scenario: Scenario) -> SimTrace:
    """Simulate one scenario; a pure function of the scenario (seed included)."""
    design = scenario.resolve_design()
    model = scenario.channel
    est = scenario.estimator
    mode = scenario.mode
    use_ema = est.kind == "ema"
    w = est.weight if use_ema else 0.0
    q_win = est.window if not use_ema else 0
    w_u = scenario.resolved_utility_weight()
    e_cost = design.utility.energy_cost
    alpha_at = scenario.schedule.alpha_at

    rng = np.random.default_rng(scenario.seed)
    k0 = scenario.initial_k
    p = [scenario.initial_p] * k0
    q_k = [est.initial_value] * k0
    tgt: list[float | None] = [None] * k0  # cached one-step targets
    acc_hit = [0.0] * k0
    acc_try = [0] * k0
    q_v_est = est.initial_value
    acc_iv = 0.0
    u_ema = 0.0
    t_update = 0
    events = scenario.events
    ev_idx = 0
    records: list[SlotRecord] = []

    for t in range(scenario.horizon):
        while ev_idx < len(events) and events[ev_idx].slot - 1 == t:
            ev = events[ev_idx]
            ev_idx += 1
            if ev.kind == "join":
                p.extend([0.0] * ev.count)
                q_k.extend([1.0] * ev.count)
                tgt.extend([None] * ev.count)
                acc_hit.extend([0.0] * ev.count)
                acc_try.extend([0] * ev.count)
            else:
                _leave(rng, [p, q_k, tgt, acc_hit, acc_try], ev.count)
        k = len(p)

        state = chn.sample_state(model, rng)
        draws = rng.random(k)
        flags = [bool(draws[i] < p[i]) for i in range(k)]
        out = chn.realize_slot(model, state, flags, rng)
        iv = 1.0 if out.virtual_success else 0.0
        n_tx = out.n_transmitted

        if use_ema:
            q_v_est = (1.0 - w) * q_v_est + w * iv
            feedback = True
        else:
            acc_iv += iv
            feedback = (t + 1) % q_win == 0
            if feedback:
                q_v_est = acc_iv / q_win
                acc_iv = 0.0

        ti = 0
        for i in range(k):
            if flags[i]:
                ik = 1.0 if out.real_success[ti] else 0.0
                ti += 1
                if use_ema:
                    q_k[i] = (1.0 - w) * q_k[i] + w * ik
                    tgt[i] = None
                else:
                    acc_hit[i] += ik
                    acc_try[i] += 1
        if not use_ema and feedback:
            for i in range(k):
                if acc_try[i]:
                    q_k[i] = acc_hit[i] / acc_try[i]
                    tgt[i] = None
                    acc_hit[i] = 0.0
                    acc_try[i] = 0

        if feedback:
            a = alpha_at(t_update)
            t_update += 1
            if mode is FeedbackMode.RECEIVER:
                shared = theory.invert_q_v_star(q_v_est, design)
                for i in range(k):
                    p[i] = (1.0 - a) * p[i] + a * shared
            elif mode is FeedbackMode.ONE_STEP:
                for i in range(k):
                    if tgt[i] is None:
                        tgt[i] = theory.invert_q_star(q_k[i], design)
                    p[i] = (1.0 - a) * p[i] + a * tgt[i]
            else:
                for i in range(k):
                    target = mac.target_two_step(p[i], q_k[i], design)
                    p[i] = (1.0 - a) * p[i] + a * target

        u_sample = float(sum(out.real_success)) - e_cost * n_tx
        u_ema = (1.0 - w_u) * u_ema + w_u * u_sample

        if t % scenario.stride == 0:
            records.append(
                SlotRecord(
                    slot=t,
                    n_active=k,
                    p_mean=sum(p) / k,
                    p_min=min(p),
                    p_max=max(p),
                    q_v=q_v_est,
                    q_k_mean=sum(q_k) / k,
                    i_v=int(iv),
                    n_transmitted=n_tx,
                    utility_sample=u_sample,
                    utility_ema=u_ema,
                )
            )

    k_final = len(p)
    summary = _summarize(scenario, design, records, k_final, u_ema)
    return SimTrace(scenario=scenario, design=design, records=tuple(records), summary=summary)


def _summarize(
    scenario: Scenario,
    design: MacDesign,
    records: list[SlotRecord],
    k_final: int,
    u_ema: float,
) -> RunSummary:
    window = min(scenario.summary_window, max(scenario.horizon, 1))
    cutoff = scenario.horizon - window
    tail = [r.p_mean for r in records if r.slot >= cutoff]
    mean_p = sum(tail) / len(tail) if tail else math.nan
    p_star = design.equilibrium_p(k_final)
    p_opt = theory.optimal_p(k_final, design.params, design.utility)
    u_star = theory.utility_finite(k_final, p_star, design.params, design.utility)
    u_opt = theory.utility_finite(k_final, p_opt, design.params, design.utility)
    ratio = u_ema / u_opt if u_opt > 0 else math.nan
    return RunSummary(
        n_slots=scenario.horizon,
        k_final=k_final,
        window=window,
        mean_p_last=mean_p,
        utility_ema=u_ema if records else math.nan,
        p_star=p_star,
        p_opt=p_opt,
        u_at_p_star=u_star,
        u_opt=u_opt,
        utility_ratio=ratio if records else math.nan,
    )


@dataclass(frozen=True)
class SweepResult:
    """Aggregate of independent runs of one scenario under consecutive seeds."""

    scenario: Scenario
    seeds: tuple[int, ...]
    traces: tuple[SimTrace, ...]
    slots: np.ndarray
    p_mean: np.ndarray
    p_std: np.ndarray
    utility_mean: np.ndarray
    utility_std: np.ndarray
    q_v_mean: np.ndarray
    q_v_std: np.ndarray

    def final_stats(self) -> dict[str, tuple[float, float]]:
        """(mean, std) across seeds of the final-summary quantities."""
        out = {}
        for name in ("mean_p_last", "utility_ema", "utility_ratio"):
            vals = np.array([getattr(tr.summary, name) for tr in self.traces])
            out[name] = (float(np.mean(vals)), float(np.std(vals)))
        return out


def run_many(scenario: Scenario, n_seeds: int) -> SweepResult:
    """Run the scenario under seeds seed .. seed + n_seeds - 1.

    Runs are independent (each owns its RNG); per-slot mean/std of the
    recorded summary series are aggregated across seeds.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    seeds = tuple(scenario.seed + i for i in range(n_seeds))
    traces = tuple(run(replace(scenario, seed=s)) for s in seeds)
    slots = np.array([r.slot for r in traces[0].records], dtype=int)
    series = {
        "p": np.array([[r.p_mean for r in tr.records] for tr in traces]),
        "u": np.array([[r.utility_ema for r in tr.records] for tr in traces]),
        "q": np.array([[r.q_v for r in tr.records] for tr in traces]),
    }
    if slots.size == 0:
        empty = np.array([])
        series = {name: empty.reshape(len(traces), 0) for name in series}
    return SweepResult(
        scenario=scenario,
        seeds=seeds,
        traces=traces,
        slots=slots,
        p_mean=series["p"].mean(axis=0),
        p_std=series["p"].std(axis=0),
        utility_mean=series["u"].mean(axis=0),
        utility_std=series["u"].std(axis=0),
        q_v_mean=series["q"].mean(axis=0),
        q_v_std=series["q"].std(axis=0),
    )


def measure_stationary_qv(
    p: float,
    k: int,
    model: ChannelModel,
    n_slots: int,
    seed: int = 0,
) -> float:
    """Empirical virtual-packet success frequency with all probabilities
    frozen at p.  Monte-Carlo oracle for ``theory.q_v_identical``; vectorized,
    with its own draw layout (transmission counts, then states, then
    virtual draws)."""
    if n_slots < 1:
        raise ValueError("n_slots must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    n_tx = rng.binomial(k, p, size=n_slots)
    if isinstance(model, chn.Collision):
        iv = n_tx == 0
    elif isinstance(model, chn.ThresholdFading):
        probs = [pr for pr, _ in model.states]
        caps = np.array(model.capacities)
        states = rng.choice(len(caps), size=n_slots, p=probs)
        iv = n_tx + 1 <= caps[states]
    elif isinstance(model, chn.Parametric):
        cv = np.array(model.params.c_virtual)
        levels = np.minimum(n_tx, len(cv) - 1)
        iv = rng.random(n_slots) < cv[levels]
    else:
        raise TypeError(f"unknown channel model: {model!r}")
    return float(np.mean(iv))
