"""Closed-form analysis: utilities, design constants, contention curves.

Everything here is a pure function of its inputs.  The central objects are

* ``utility_finite`` / ``utility_asymptotic`` and the optimal channel load
  ``x_star`` they define,
* the design constants (first detectable drop index ``j_ev``, the ratio bound
  ``gamma_ev``, the offset ``b`` and the probability cap ``p_max``) bundled in
  :class:`MacDesign`,
* the contention curves ``q_v_identical`` (true virtual success probability
  when everyone transmits with the same p) and ``q_v_star`` (value expected at
  the designed equilibrium for a given probability target), plus the
  own-success auxiliaries ``q_star`` / ``d_star``, and
* monotone inversions of those curves, which is how a probability target is
  read off a contention measurement.

Binomial and Poisson mixtures over a profile are evaluated with a
multiplicative pmf recurrence started in log space, so they stay stable for
populations up to ~1e6 while costing only O(profile length) per call.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .channel import ChannelParams

# User-count estimates are interpolated between integers; beyond this many
# estimated users the curve is indistinguishable from its Poisson limit.
K_HAT_MAX = 1.0e6

_INVERT_TOL = 1e-10
_AUX_GRID_SIZE = 1024


def binomial_profile_mean(values: tuple[float, ...], n: int, p: float) -> float:
    """E[f(J)] for J ~ Binomial(n, p), where f(j) = values[min(j, len-1)].

    Exact for the constant tail: only the entries that differ from the tail
    are weighted, so n may be large without summing n terms.
    """
    last = len(values) - 1
    if last == 0 or n <= 0 or p <= 0.0:
        return values[0]
    if p >= 1.0:
        return values[min(n, last)]
    tail = values[last]
    jmax = min(n, last - 1)
    pmf = math.exp(n * math.log1p(-p))
    acc = tail + pmf * (values[0] - tail)
    ratio = p / (1.0 - p)
    for j in range(1, jmax + 1):
        pmf *= (n - j + 1) * ratio / j
        acc += pmf * (values[j] - tail)
    return acc


def poisson_profile_mean(values: tuple[float, ...], x: float) -> float:
    """E[f(J)] for J ~ Poisson(x), with the same tail convention."""
    last = len(values) - 1
    if last == 0 or x <= 0.0:
        return values[0]
    tail = values[last]
    pmf = math.exp(-x)
    acc = tail + pmf * (values[0] - tail)
    for j in range(1, last):
        pmf *= x / j
        acc += pmf * (values[j] - tail)
    return acc


def _shifted(values: tuple[float, ...]) -> tuple[float, ...]:
    """Profile seen one load level up: f'(j) = f(j + 1)."""
    return values[1:] if len(values) > 1 else values


@dataclass(frozen=True)
class UtilitySpec:
    """Symmetric network utility: throughput, optionally charged per
    transmission at ``energy_cost`` units."""

    kind: str = "sum_throughput"
    energy_cost: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("sum_throughput", "energy_weighted"):
            raise ValueError(f"unknown utility kind: {self.kind!r}")
        if self.energy_cost < 0:
            raise ValueError("energy_cost must be non-negative")
        if self.kind == "sum_throughput" and self.energy_cost != 0.0:
            raise ValueError("sum_throughput utility has zero energy cost")

    @classmethod
    def sum_throughput(cls) -> "UtilitySpec":
        return cls("sum_throughput", 0.0)

    @classmethod
    def energy_weighted(cls, energy_cost: float) -> "UtilitySpec":
        return cls("energy_weighted", float(energy_cost))


def utility_finite(k: int, p: float, params: ChannelParams, spec: UtilitySpec) -> float:
    """Expected per-slot utility with k users all transmitting at probability p.

    Equals -E*k*p + k*p * E[c_real(J)] with J ~ Binomial(k-1, p): each of the
    k users transmits with probability p and then succeeds against the load
    created by the other k-1.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if k < 1:
        raise ValueError("k must be a positive integer")
    through = k * p * binomial_profile_mean(params.c_real, k - 1, p)
    return through - spec.energy_cost * k * p


def utility_asymptotic(x: float, params: ChannelParams, spec: UtilitySpec) -> float:
    """Large-population limit of ``utility_finite(k, x / k)`` at channel load x."""
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0.0:
        return 0.0
    return x * (poisson_profile_mean(params.c_real, x) - spec.energy_cost)


def _asymptotic_slope(x: float, params: ChannelParams, spec: UtilitySpec) -> float:
    # d/dx [x * E_pois(x)[c_r]] = E[c_r(J)] + x * E[c_r(J+1) - c_r(J)]
    f = poisson_profile_mean(params.c_real, x)
    fp = poisson_profile_mean(_shifted(params.c_real), x) - f
    return f + x * fp - spec.energy_cost


def _golden_max(f, lo: float, hi: float, tol: float) -> float:
    """Golden-section maximization on [lo, hi] to bracket width < tol."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def compute_x_star(
    params: ChannelParams,
    spec: UtilitySpec,
    x_hi: float | None = None,
) -> float:
    """Channel load maximizing the asymptotic utility.

    Grid scan (step 0.01) over [0, x_hi], golden-section refinement on the
    best bracket, then a bisection polish on the analytic slope so the
    returned point is reproducible to ~1e-12 rather than the golden
    tolerance.  If the utility is still climbing at x_hi the problem is
    degenerate (e.g. a contention-free channel); the bound is returned with a
    warning and the caller must decide what that means.
    """
    if x_hi is None:
        x_hi = max(10.0, 3.0 * len(params.c_real))
    if x_hi <= 0:
        raise ValueError("x_hi must be positive")

    def u(x: float) -> float:
        return utility_asymptotic(x, params, spec)

    step = 0.01
    n = int(math.ceil(x_hi / step))
    xs = [min(i * step, x_hi) for i in range(n + 1)]
    us = [u(x) for x in xs]
    best = max(range(len(xs)), key=us.__getitem__)
    if best == len(xs) - 1 and us[-1] > us[-2]:
        warnings.warn(
            "asymptotic utility is still increasing at the search bound "
            f"x_hi={x_hi}; returning the bound (degenerate optimization)",
            RuntimeWarning,
            stacklevel=2,
        )
        return x_hi

    top = us[best]
    for i in range(len(xs)):
        if abs(us[i] - top) < 1e-9 and abs(xs[i] - xs[best]) > 0.1:
            raise ValueError(
                "asymptotic utility has two near-equal maxima "
                f"(x={xs[best]:.4f} and x={xs[i]:.4f}); optimizer is ambiguous"
            )

    lo = xs[best - 1] if best > 0 else xs[0]
    hi = xs[best + 1] if best < len(xs) - 1 else xs[-1]
    x0 = _golden_max(u, lo, hi, 1e-6)

    # Polish on the slope: golden section alone stalls at ~sqrt(eps) accuracy.
    a, b = max(lo, x0 - 2e-6), min(hi, x0 + 2e-6)
    sa, sb = _asymptotic_slope(a, params, spec), _asymptotic_slope(b, params, spec)
    if sa > 0.0 > sb:
        for _ in range(60):
            mid = 0.5 * (a + b)
            if _asymptotic_slope(mid, params, spec) > 0.0:
                a = mid
            else:
                b = mid
        x0 = 0.5 * (a + b)
    return x0


def compute_j_ev(params: ChannelParams, epsilon_v: float) -> int:
    """First index where the virtual profile drops by more than epsilon_v."""
    if epsilon_v < 0:
        raise ValueError("epsilon_v must be non-negative")
    cv = params.c_virtual
    for j in range(len(cv) - 1):
        if cv[j] > cv[j + 1] + epsilon_v:
            return j
    raise ValueError(
        "virtual profile has no drop larger than epsilon_v="
        f"{epsilon_v}; the virtual packet cannot measure contention"
    )


def compute_gamma_ev(
    params: ChannelParams,
    x_star: float,
    b: float,
    epsilon_v: float,
    n_max: int | None = None,
) -> float:
    """Profile-dependent lower bound used to place the design offset b.

    Minimizes, over candidate populations N >= max(j_ev, x_star - b), the
    drop-weighted mean load index sum(j * w_j) / sum(w_j) with weights
    w_j = C(N, j) * r^j * (c_v(j) - c_v(j+1)) and r the equilibrium odds
    p_{N+1} / (1 - p_{N+1}).
    """
    if b < 1.0:
        raise ValueError("b must be at least 1")
    j_ev = compute_j_ev(params, epsilon_v)
    if n_max is None:
        n_max = int(math.ceil(10.0 * (j_ev + x_star + b)))
    if n_max < j_ev:
        raise ValueError("n_max must be at least j_ev")
    p_cap = min(1.0, x_star / (j_ev + b))
    cv = params.c_virtual
    n_lo = max(j_ev, math.ceil(x_star - b))

    best = math.inf
    best_at = n_lo
    for n in range(n_lo, n_max + 1):
        p_n1 = min(p_cap, x_star / (n + 1 + b))
        r = p_n1 / (1.0 - p_n1)
        num = 0.0
        den = 0.0
        for j in range(min(n, len(cv) - 1) + 1):
            drop = (cv[j] if j < len(cv) else cv[-1]) - (
                cv[j + 1] if j + 1 < len(cv) else cv[-1]
            )
            if drop > 0.0:
                w = math.comb(n, j) * r**j * drop
                num += j * w
                den += w
        if den == 0.0:
            raise ValueError(
                f"virtual profile is flat over loads 0..{n}: the ratio at N={n} "
                "is undefined"
            )
        val = num / den
        if val < best:
            best = val
            best_at = n
    if best_at > n_lo + (n_max - n_lo) // 2:
        warnings.warn(
            f"gamma minimum still moving in the upper half of N<= {n_max}; "
            "consider a larger n_max",
            RuntimeWarning,
            stacklevel=2,
        )
    return best


@dataclass(frozen=True)
class MacDesign:
    """Design constants fixing the contention curve and the equilibrium map.

    The equilibrium places a K-user system at min(p_max, x_star / (K + b)).
    The monotonicity guarantees need b strictly above max(1, x_star - gamma_ev);
    construction via :func:`build_design` guarantees it.
    """

    x_star: float
    epsilon_v: float
    j_ev: int
    gamma_ev: float
    b: float
    p_max: float
    params: ChannelParams
    utility: UtilitySpec

    def __post_init__(self) -> None:
        if self.x_star <= 0:
            raise ValueError("x_star must be positive")
        floor_b = max(1.0, self.x_star - self.gamma_ev)
        if not self.b > floor_b:
            raise ValueError(
                f"b={self.b} must strictly exceed max(1, x_star - gamma_ev)={floor_b}"
            )
        expected = min(1.0, self.x_star / (self.j_ev + self.b))
        if abs(self.p_max - expected) > 1e-12:
            raise ValueError(
                f"p_max={self.p_max} inconsistent with min(1, x_star/(j_ev+b))={expected}"
            )
        if not 0.0 < self.p_max <= 1.0:
            raise ValueError("p_max must lie in (0, 1]")

    def equilibrium_p(self, k: int) -> float:
        """Designed common transmission probability for a k-user system."""
        return min(self.p_max, self.x_star / (k + self.b))

    @cached_property
    def _virtual_shifted(self) -> tuple[float, ...]:
        return _shifted(self.params.c_virtual)

    @cached_property
    def _k_hat_floor(self) -> float:
        return self.x_star / self.p_max - self.b

    @cached_property
    def _qv_limit(self) -> float:
        # q_v_star at p_hat -> 0: the estimated population is unbounded and
        # the load converges to a Poisson(x_star) mixture.
        return poisson_profile_mean(self.params.c_virtual, self.x_star)

    @cached_property
    def _qv_at_pmax(self) -> float:
        return q_v_star(self.p_max, self)

    @cached_property
    def _aux_limits(self) -> tuple[float, float]:
        return (
            poisson_profile_mean(self.params.c_virtual, self.x_star),
            poisson_profile_mean(self._virtual_shifted, self.x_star),
        )

    @cached_property
    def _q_star_grid(self) -> tuple[np.ndarray, np.ndarray]:
        ps = np.linspace(0.0, self.p_max, _AUX_GRID_SIZE)
        qs = np.array([q_star(float(p), self) for p in ps])
        return ps, qs

    @cached_property
    def _q_v_star_grid(self) -> tuple[np.ndarray, np.ndarray]:
        ps = np.linspace(0.0, self.p_max, _AUX_GRID_SIZE)
        qs = np.array([q_v_star(float(p), self) for p in ps])
        return ps, qs

    @cached_property
    def q_star_is_monotone(self) -> bool:
        """Whether the own-success curve is non-decreasing on [0, p_max].

        Not guaranteed by the theory; checked numerically on a 1024-point
        grid.  When it fails, inversion falls back to a bracketed grid search.
        """
        _, qs = self._q_star_grid
        return bool(np.all(np.diff(qs) >= -1e-12))


def build_design(
    params: ChannelParams,
    utility: UtilitySpec,
    epsilon_v: float = 0.01,
    b_margin: float = 0.01,
    x_hi: float | None = None,
    n_max: int | None = None,
) -> MacDesign:
    """Derive all design constants for a channel/utility pair.

    b must exceed max(1, x_star - gamma_ev) strictly, but gamma_ev itself
    ranges over populations N >= x_star - b.  The circularity is resolved by
    fixed-point iteration on b starting from 1 + b_margin; for profiles whose
    gamma does not depend on b (all the worked examples) it settles in one
    step.
    """
    if b_margin <= 0:
        raise ValueError("b_margin must be positive: the design needs b strictly "
                         "above max(1, x_star - gamma_ev)")
    x_star = compute_x_star(params, utility, x_hi=x_hi)
    j_ev = compute_j_ev(params, epsilon_v)

    b = 1.0 + b_margin
    gamma = compute_gamma_ev(params, x_star, b, epsilon_v, n_max=n_max)
    for _ in range(100):
        b_next = max(1.0, x_star - gamma) + b_margin
        if abs(b_next - b) < 1e-9:
            b = b_next
            break
        b = b_next
        gamma = compute_gamma_ev(params, x_star, b, epsilon_v, n_max=n_max)
    else:
        raise ValueError("design offset b failed to settle within 100 rounds")

    design = MacDesign(
        x_star=x_star,
        epsilon_v=epsilon_v,
        j_ev=j_ev,
        gamma_ev=gamma,
        b=b,
        p_max=min(1.0, x_star / (j_ev + b)),
        params=params,
        utility=utility,
    )
    if not design.q_star_is_monotone:
        warnings.warn(
            "own-success curve q_star is not monotone for this design; "
            "one-step/two-step inversions fall back to bracketed grid search",
            RuntimeWarning,
            stacklevel=2,
        )
    return design


def q_v_identical(p: float, k: int, params: ChannelParams) -> float:
    """Virtual-packet success probability with k users all transmitting at p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if k < 0:
        raise ValueError("k must be non-negative")
    return binomial_profile_mean(params.c_virtual, k, p)


def q_v_identical_derivative(p: float, k: int, params: ChannelParams) -> float:
    """d/dp of ``q_v_identical``: -k * E[c_v(J) - c_v(J+1)], J ~ Bin(k-1, p)."""
    if k == 0:
        return 0.0
    cv = params.c_virtual
    drop = binomial_profile_mean(cv, k - 1, p) - binomial_profile_mean(
        _shifted(cv), k - 1, p
    )
    return -k * drop


def _frame(p: float, design: MacDesign) -> tuple[int, float] | None:
    """Interpolation frame (floor population N, weight on the N side) for a
    probability target, or None when the Poisson limit applies."""
    x, b, p_cap = design.x_star, design.b, design.p_max
    k_hat = x / p - b
    if k_hat < design._k_hat_floor:
        k_hat = design._k_hat_floor
    if k_hat >= K_HAT_MAX:
        return None
    n = math.floor(k_hat)
    p_n = x / (n + b)
    if p_n > p_cap:
        p_n = p_cap
    p_n1 = x / (n + 1 + b)
    if p_n1 > p_cap:
        p_n1 = p_cap
    if p_n <= p_n1:
        # flat corner next to p_max; collapse to the single defined frame
        return (math.ceil(design._k_hat_floor), 1.0)
    return (n, (p - p_n1) / (p_n - p_n1))


def q_v_star(p_hat: float, design: MacDesign) -> float:
    """Contention expected at the designed equilibrium if the population
    implied by p_hat were correct.  Non-decreasing in p_hat by construction.
    """
    if p_hat <= 0.0:
        return design._qv_limit
    frame = _frame(p_hat, design)
    if frame is None:
        return design._qv_limit
    n, w = frame
    cv = design.params.c_virtual
    q_n = binomial_profile_mean(cv, n, p_hat)
    if w == 1.0:
        return q_n
    return w * q_n + (1.0 - w) * binomial_profile_mean(cv, n + 1, p_hat)


def _grid_bracket(
    ps: np.ndarray, qs: np.ndarray, target: float
) -> tuple[float, float]:
    """Initial bisection bracket around the infimum crossing of a
    non-decreasing sampled curve."""
    idx = int(np.searchsorted(qs, target, side="left"))
    if idx <= 0:
        return 0.0, float(ps[1])
    if idx >= len(ps):
        return float(ps[-2]), float(ps[-1])
    return float(ps[idx - 1]), float(ps[idx])


def invert_q_v_star(q_v: float, design: MacDesign) -> float:
    """Probability target whose expected contention equals q_v.

    Clamps to p_max / 0 when q_v is outside the curve's range; on flat
    segments returns the infimum of the solution set.  Bisection is valid
    because ``q_v_star`` is non-decreasing; the cached design grid only
    narrows the initial bracket.
    """
    if q_v > design._qv_at_pmax:
        return design.p_max
    if q_v < design._qv_limit:
        return 0.0
    ps, qs = design._q_v_star_grid
    lo, hi = _grid_bracket(ps, qs, q_v)
    while hi - lo > _INVERT_TOL:
        mid = 0.5 * (lo + hi)
        if q_v_star(mid, design) >= q_v:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _aux_value(p: float, design: MacDesign, shifted: bool) -> float:
    """Shared evaluator for q_star (shifted=False) and d_star (shifted=True).

    Both blend success sums over N-1 and N parallel transmitters at the frame
    of p.  Below one estimated user the N-1 frame is vacuous and contributes
    nothing.
    """
    values = design._virtual_shifted if shifted else design.params.c_virtual
    if p <= 0.0:
        return design._aux_limits[1 if shifted else 0]
    frame = _frame(p, design)
    if frame is None:
        return design._aux_limits[1 if shifted else 0]
    n, w = frame
    low = 0.0 if n - 1 < 0 else binomial_profile_mean(values, n - 1, p)
    if w == 1.0:
        return low
    return w * low + (1.0 - w) * binomial_profile_mean(values, n, p)


def q_star(p_breve: float, design: MacDesign) -> float:
    """Virtual-packet success probability conditioned on one user idling, at
    the population implied by p_breve."""
    return _aux_value(p_breve, design, shifted=False)


def d_star(p_breve: float, design: MacDesign) -> float:
    """Virtual-packet success probability conditioned on one user
    transmitting, at the population implied by p_breve."""
    return _aux_value(p_breve, design, shifted=True)


def _bisect_bracket(f, lo: float, hi: float, target: float) -> float:
    """Bisect f(p) = target inside [lo, hi] assuming one crossing, either
    orientation."""
    f_lo = f(lo) - target
    while hi - lo > _INVERT_TOL:
        mid = 0.5 * (lo + hi)
        f_mid = f(mid) - target
        if (f_mid < 0.0) == (f_lo < 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def invert_q_star(q_k: float, design: MacDesign) -> float:
    """Intermediate probability target from an own-success measurement.

    Monotone designs invert by bisection with the usual clamps.  For designs
    whose q_star curve is not monotone (flagged at build time) the leftmost
    grid bracket is refined instead, after the low clamp: readings below the
    crowded-limit value q_star(0) always mean "back off to zero".
    """
    ps, qs = design._q_star_grid
    if design.q_star_is_monotone:
        if q_k > qs[-1]:
            return design.p_max
        if q_k < qs[0]:
            return 0.0
        lo, hi = _grid_bracket(ps, qs, q_k)
        while hi - lo > _INVERT_TOL:
            mid = 0.5 * (lo + hi)
            if q_star(mid, design) >= q_k:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    if q_k < qs[0]:
        return 0.0
    sign = (qs[:-1] - q_k) * (qs[1:] - q_k)
    hits = np.nonzero(sign <= 0.0)[0]
    if hits.size:
        i = int(hits[0])
        return _bisect_bracket(
            lambda p: q_star(p, design), float(ps[i]), float(ps[i + 1]), q_k
        )
    if q_k > q_star(design.p_max, design):
        return design.p_max
    return float(ps[int(np.argmin(np.abs(qs - q_k)))])


def hajek_pa(k: int) -> float:
    """Idle-probability-tracking baseline: root of
    e*(1-p)^k - 1 - 0.5*sqrt(p) = 0 on (0, 1).  The left side is strictly
    decreasing in p, positive at 0 (e - 1) and negative at 1 (-1.5)."""
    if k < 1:
        raise ValueError("k must be a positive integer")

    def f(p: float) -> float:
        return math.e * (1.0 - p) ** k - 1.0 - 0.5 * math.sqrt(p)

    lo, hi = 0.0, 1.0
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def idle_target_p(k: int, x_star: float) -> float:
    """Probability holding the empty-slot chance at its asymptotic optimum:
    (1-p)^k = exp(-x_star)."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    if x_star <= 0:
        raise ValueError("x_star must be positive")
    return 1.0 - math.exp(-x_star / k)


def optimal_p(k: int, params: ChannelParams, spec: UtilitySpec) -> float:
    """Utility-maximizing common transmission probability for k users."""
    if k < 1:
        raise ValueError("k must be a positive integer")

    def u(p: float) -> float:
        return utility_finite(k, p, params, spec)

    step = 1e-3
    n = 1000
    us = [u(i * step) for i in range(n + 1)]
    best = max(range(n + 1), key=us.__getitem__)
    lo = (best - 1) * step if best > 0 else 0.0
    hi = (best + 1) * step if best < n else 1.0
    return _golden_max(u, lo, hi, 1e-7)
