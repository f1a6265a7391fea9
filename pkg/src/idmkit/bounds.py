"""T-dependent adversarial delay envelopes and the critical pulse train.

A channel's deterministic delay can be perturbed per transition by an
adversary offset eta in [-eta_minus(T), eta_plus(T)].  The envelope is
piecewise: wide (eta_inf) almost everywhere, narrowing linearly to eta_min
exactly at the two history values the critical pulse train visits:

    eta_plus(T)  = eta_plus_inf                              T < -delta_bar
                   rho_plus * (-T - delta) + eta_plus_min    -delta_bar <= T <= -delta
                   eta_plus_inf                              T > -delta

    eta_minus(T) = eta_minus_inf                             T < -delta_prime
                   rho_minus * (T + delta_prime) + eta_minus_min   -delta_prime <= T < 0
                   eta_minus_inf                              T >= 0

``delta`` is the up-time of the self-repeating critical pulse train (the
fixed point of the narrow-bound recurrence ``f``), ``delta_prime`` its
down-time, and ``delta_bar`` the up-time at which the feedback loop of the
canonical filtration circuit is forced to lock at 1.  The wide-bound
recurrence ``g`` uses the T-dependent envelope and has the same fixed point.

Branch endpoints are evaluated so that the fixed point lands exactly on the
eta_min corners in floating point: ``delta_prime`` is stored as the negation
of the very expression ``g`` computes for the falling-transition history,
which makes ``g(delta) == f(delta)`` bitwise.

The constraint report covers the four closure conditions (c1)-(c4) under
which the envelope provably preserves filtration behaviour, plus the
delta_bar sizing inequality.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .delay import InvolutionPair
from .errors import Infeasible, InvalidArgument, NoCriticalTrain
from .numeric import bisect, newton_polish

EPS_FIX = 1e-6        # fs, fixed-point residual tolerance
FIXED_POINT_MARGIN = 1e-3  # fs, bracket inset for the fixed-point search
FD_STEP = 1e-3        # fs, central-difference step for g'


@dataclass(frozen=True)
class EtaParams:
    """Raw envelope parameters, as found in eta-parameter JSON files."""

    eta_plus_min: float
    eta_minus_min: float
    eta_plus_inf: float
    eta_minus_inf: float
    rho_plus: float = 0.0
    rho_minus: float = 0.0
    delta_bar: float | str = "auto"

    def __post_init__(self):
        if min(self.eta_plus_min, self.eta_minus_min) < 0:
            raise InvalidArgument("eta_min values must be nonnegative")
        if self.eta_plus_inf < self.eta_plus_min or self.eta_minus_inf < self.eta_minus_min:
            raise InvalidArgument("eta_inf must be at least eta_min on each side")
        if min(self.rho_plus, self.rho_minus) < 0:
            raise InvalidArgument("rho values must be nonnegative (constraint c2)")

    def to_dict(self) -> dict:
        return {
            "eta_plus_min_fs": self.eta_plus_min,
            "eta_minus_min_fs": self.eta_minus_min,
            "eta_plus_inf_fs": self.eta_plus_inf,
            "eta_minus_inf_fs": self.eta_minus_inf,
            "rho_plus": self.rho_plus,
            "rho_minus": self.rho_minus,
            "delta_bar_fs": self.delta_bar,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EtaParams":
        return cls(
            eta_plus_min=float(d["eta_plus_min_fs"]),
            eta_minus_min=float(d["eta_minus_min_fs"]),
            eta_plus_inf=float(d["eta_plus_inf_fs"]),
            eta_minus_inf=float(d["eta_minus_inf_fs"]),
            rho_plus=float(d.get("rho_plus", 0.0)),
            rho_minus=float(d.get("rho_minus", 0.0)),
            delta_bar=(d.get("delta_bar_fs", "auto")
                       if d.get("delta_bar_fs", "auto") == "auto"
                       else float(d["delta_bar_fs"])),
        )


def save_eta_params(params: EtaParams, path) -> None:
    with open(path, "w") as fh:
        json.dump(params.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_eta_params(path) -> EtaParams:
    with open(path) as fh:
        return EtaParams.from_dict(json.load(fh))


@dataclass(frozen=True)
class EtaBounds:
    """Envelope parameters plus the derived train quantities.

    Built by :func:`make_bounds`; direct construction is allowed for tests
    and degenerate (constant) envelopes.
    """

    eta_plus_min: float
    eta_minus_min: float
    eta_plus_inf: float
    eta_minus_inf: float
    rho_plus: float
    rho_minus: float
    delta: float        # critical train up-time (fixed point)
    delta_prime: float  # critical train down-time
    delta_bar: float    # lock threshold

    def __post_init__(self):
        if min(self.eta_plus_min, self.eta_minus_min) < 0:
            raise InvalidArgument("eta_min values must be nonnegative")
        if self.eta_plus_inf < self.eta_plus_min or self.eta_minus_inf < self.eta_minus_min:
            raise InvalidArgument("eta_inf must be at least eta_min on each side")
        if min(self.rho_plus, self.rho_minus) < 0:
            raise InvalidArgument("rho values must be nonnegative (constraint c2)")
        if self.delta_bar < self.delta:
            raise InvalidArgument("delta_bar must be at least delta")

    @classmethod
    def constant(cls, eta_plus: float, eta_minus: float) -> "EtaBounds":
        """Constant (T-independent) envelope; the classic narrow-bound model."""
        return cls(eta_plus_min=eta_plus, eta_minus_min=eta_minus,
                   eta_plus_inf=eta_plus, eta_minus_inf=eta_minus,
                   rho_plus=0.0, rho_minus=0.0,
                   delta=0.0, delta_prime=0.0, delta_bar=0.0)

    def params(self, delta_bar: float | str = "explicit") -> EtaParams:
        return EtaParams(self.eta_plus_min, self.eta_minus_min,
                         self.eta_plus_inf, self.eta_minus_inf,
                         self.rho_plus, self.rho_minus,
                         self.delta_bar if delta_bar == "explicit" else delta_bar)


def eta_plus(b: EtaBounds, T: float) -> float:
    """Upper adversary bound at history T (rising transitions)."""
    if T < -b.delta_bar:
        return b.eta_plus_inf
    if T <= -b.delta:
        return b.rho_plus * (-T - b.delta) + b.eta_plus_min
    return b.eta_plus_inf


def eta_minus(b: EtaBounds, T: float) -> float:
    """Lower adversary bound magnitude at history T (falling transitions)."""
    if T >= 0.0:
        return b.eta_minus_inf
    if T >= -b.delta_prime:
        return b.rho_minus * (T + b.delta_prime) + b.eta_minus_min
    return b.eta_minus_inf


def eta_plus_slope(b: EtaBounds, T: float) -> float:
    """dT-slope of eta_plus (0 on the constant branches, -rho_plus inside)."""
    if -b.delta_bar <= T <= -b.delta:
        return -b.rho_plus
    return 0.0


def eta_minus_slope(b: EtaBounds, T: float) -> float:
    if -b.delta_prime <= T < 0.0:
        return b.rho_minus
    return 0.0


# ---------------------------------------------------------------------------
# Pulse-train recurrences
#
# Both maps share the accumulation order of the falling-transition history
# ``a`` so that they agree bitwise at the fixed point, where the envelope
# evaluates to its eta_min corners exactly.
# ---------------------------------------------------------------------------

def f_map(pair: InvolutionPair, b: EtaBounds, x: float) -> float:
    """Next up-time under the constant narrow bounds."""
    if not (x > 0):
        raise InvalidArgument(f"pulse up-time must be positive, got {x}")
    a = x - pair.up.eval(-x) - b.eta_plus_min
    return a + pair.down.eval(a) - b.eta_minus_min


def g_map(pair: InvolutionPair, b: EtaBounds, x: float) -> float:
    """Next up-time under the T-dependent envelope."""
    if not (x > 0):
        raise InvalidArgument(f"pulse up-time must be positive, got {x}")
    a = x - pair.up.eval(-x) - eta_plus(b, -x)
    return a + pair.down.eval(a) - eta_minus(b, a)


def _f_prime(pair: InvolutionPair, eta_plus_min: float, x: float) -> float:
    a = x - pair.up.eval(-x) - eta_plus_min
    return (1.0 + pair.up.derivative(-x)) * (1.0 + pair.down.derivative(a))


def g_prime_analytic(pair: InvolutionPair, b: EtaBounds, x: float) -> float:
    """Chain-rule slope of g at x.

    With a(x) = x - up(-x) - eta_plus(-x):
        a'(x) = 1 + up'(-x) + eta_plus_slope(-x)   (= 1 + up'(-x) - rho_plus
                                                    on the linear branch)
        g'(x) = a'(x) * (1 + down'(a) - eta_minus_slope(a))
    """
    a = x - pair.up.eval(-x) - eta_plus(b, -x)
    a_prime = 1.0 + pair.up.derivative(-x) + eta_plus_slope(b, -x)
    return a_prime * (1.0 + pair.down.derivative(a) - eta_minus_slope(b, a))


def solve_fixed_point_raw(pair: InvolutionPair, eta_plus_min: float,
                          eta_minus_min: float, *,
                          margin: float = FIXED_POINT_MARGIN) -> float:
    """Fixed point of the narrow-bound recurrence on (0, delta_min).

    Bisection on h(x) = f(x) - x over (margin, delta_min - margin), then a
    Newton polish.  Raises NoCriticalTrain when the bracket has no sign
    change (constraint c1 fails or the train degenerates).
    """
    def h(x):
        a = x - pair.up.eval(-x) - eta_plus_min
        return a + pair.down.eval(a) - eta_minus_min - x

    lo, hi = margin, pair.delta_min - margin
    if not (hi > lo):
        raise NoCriticalTrain("delta_min too small to bracket a fixed point")
    if h(lo) >= 0 or h(hi) <= 0:
        raise NoCriticalTrain(
            f"no fixed point in ({lo}, {hi}): h(lo)={h(lo)}, h(hi)={h(hi)}")
    x = bisect(h, lo, hi, xtol=1e-15)
    return newton_polish(h, lambda v: _f_prime(pair, eta_plus_min, v) - 1.0,
                         x, lo, hi, tol=1e-10)


def solve_delta_bar(pair: InvolutionPair, delta: float, rho_plus: float,
                    eta_plus_min: float) -> float:
    """Smallest delta_bar >= delta satisfying the lock sizing inequality

        delta_bar >= up(-delta_bar) + rho_plus*(delta_bar - delta) + eta_plus_min
    """
    def w(x):
        return x - pair.up.eval(-x) - rho_plus * (x - delta) - eta_plus_min

    if w(delta) >= 0:
        return delta
    hi = delta + max(delta, 1.0)
    for _ in range(200):
        if w(hi) >= 0:
            break
        hi *= 2.0
    else:
        raise Infeasible("lock threshold inequality has no solution "
                         "(rho_plus too steep for this channel)")
    x = bisect(w, delta, hi, xtol=1e-12)
    # nudge up until the inequality holds in floating point as stored
    while w(x) < 0:
        x = math.nextafter(x, math.inf)
    return x


@dataclass(frozen=True)
class FixedPoint:
    delta: float
    delta_prime: float
    tau: float
    gamma: float
    residual_f: float
    residual_g: float
    period_window_ok: bool


def make_bounds(pair: InvolutionPair, params: EtaParams) -> EtaBounds:
    """Derive the full envelope (delta, delta_prime, delta_bar) for a channel."""
    delta = solve_fixed_point_raw(pair, params.eta_plus_min, params.eta_minus_min)
    # store delta_prime as the negation of the history expression the maps
    # compute, so the fixed point hits the eta_min corner exactly
    a = delta - pair.up.eval(-delta) - params.eta_plus_min
    delta_prime = -a
    if params.delta_bar == "auto":
        delta_bar = solve_delta_bar(pair, delta, params.rho_plus, params.eta_plus_min)
    else:
        delta_bar = float(params.delta_bar)
        if delta_bar < delta:
            raise InvalidArgument(f"delta_bar {delta_bar} below delta {delta}")
    return EtaBounds(
        eta_plus_min=params.eta_plus_min, eta_minus_min=params.eta_minus_min,
        eta_plus_inf=params.eta_plus_inf, eta_minus_inf=params.eta_minus_inf,
        rho_plus=params.rho_plus, rho_minus=params.rho_minus,
        delta=delta, delta_prime=delta_prime, delta_bar=delta_bar)


def solve_fixed_point(pair: InvolutionPair, b: EtaBounds) -> FixedPoint:
    """Fixed point of both recurrences, with period and duty cycle.

    Verifies that the wide-bound map has the same fixed point, that the
    period lies in the admissible window, and that delta_prime equals
    tau - delta.
    """
    delta = solve_fixed_point_raw(pair, b.eta_plus_min, b.eta_minus_min)
    tau = pair.up.eval(-delta) + b.eta_plus_min
    gamma = delta / tau
    residual_f = abs(f_map(pair, b, delta) - delta)
    residual_g = abs(g_map(pair, b, delta) - delta)
    lo = b.eta_plus_min + pair.delta_min
    hi = min(-b.eta_minus_min + pair.down_inf, b.eta_plus_min + pair.up_inf)
    window_ok = lo < tau < hi
    delta_prime = tau - delta
    if abs(delta_prime - b.delta_prime) > 1e-6:
        raise InvalidArgument(
            f"bounds delta_prime {b.delta_prime} inconsistent with tau-delta "
            f"{delta_prime}; rebuild the envelope with make_bounds")
    return FixedPoint(delta=delta, delta_prime=b.delta_prime, tau=tau,
                      gamma=gamma, residual_f=residual_f,
                      residual_g=residual_g, period_window_ok=window_ok)


def iterate_g(pair: InvolutionPair, b: EtaBounds, x0: float, *,
              stop_at: float | None = None, max_steps: int = 100000) -> list[float]:
    """Iterate the wide-bound map from x0, stopping once stop_at is reached."""
    xs = [x0]
    x = x0
    for _ in range(max_steps):
        if stop_at is not None and x >= stop_at:
            break
        x = g_map(pair, b, x)
        xs.append(x)
        if not math.isfinite(x) or x <= 0:
            break
    return xs


# ---------------------------------------------------------------------------
# Constraint report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstraintEntry:
    holds: bool
    lhs: float
    rhs: float


@dataclass(frozen=True)
class ConstraintReport:
    c1: ConstraintEntry
    c2: ConstraintEntry
    c3: ConstraintEntry
    c4: ConstraintEntry
    delta_bar_condition: ConstraintEntry
    tau: float
    gamma: float

    @property
    def all_hold(self) -> bool:
        return all(e.holds for e in
                   (self.c1, self.c2, self.c3, self.c4, self.delta_bar_condition))

    def rows(self) -> list[tuple[str, ConstraintEntry]]:
        return [("c1", self.c1), ("c2", self.c2), ("c3", self.c3),
                ("c4", self.c4), ("delta_bar", self.delta_bar_condition)]

    def to_dict(self) -> dict:
        d = {name: {"holds": e.holds, "lhs": e.lhs, "rhs": e.rhs}
             for name, e in self.rows()}
        d["tau_fs"] = self.tau
        d["gamma"] = self.gamma
        d["all_hold"] = self.all_hold
        return d


def check_constraints(pair: InvolutionPair, b: EtaBounds) -> ConstraintReport:
    """Evaluate the envelope closure constraints (c1)-(c4).

    c1: eta_plus_min + eta_minus_min < down(-eta_plus_min) - delta_min
    c2: rho_plus >= 0 and rho_minus >= 0
    c3: eta_plus_inf + eta_minus_inf < up_inf - delta_min
    c4: (1 - rho_minus) * (up'(-delta) - rho_plus + 1) > 1
    plus the delta_bar sizing inequality.
    """
    dm = pair.delta_min
    c1 = ConstraintEntry(
        holds=b.eta_plus_min + b.eta_minus_min < pair.down.eval(-b.eta_plus_min) - dm,
        lhs=b.eta_plus_min + b.eta_minus_min,
        rhs=pair.down.eval(-b.eta_plus_min) - dm)
    c2 = ConstraintEntry(holds=b.rho_plus >= 0 and b.rho_minus >= 0,
                         lhs=min(b.rho_plus, b.rho_minus), rhs=0.0)
    c3 = ConstraintEntry(holds=b.eta_plus_inf + b.eta_minus_inf < pair.up_inf - dm,
                         lhs=b.eta_plus_inf + b.eta_minus_inf,
                         rhs=pair.up_inf - dm)
    c4_lhs = (1.0 - b.rho_minus) * (pair.up.derivative(-b.delta) - b.rho_plus + 1.0)
    c4 = ConstraintEntry(holds=c4_lhs > 1.0, lhs=c4_lhs, rhs=1.0)
    dbar_rhs = (pair.up.eval(-b.delta_bar)
                + b.rho_plus * (b.delta_bar - b.delta) + b.eta_plus_min)
    dbar = ConstraintEntry(holds=b.delta_bar >= dbar_rhs, lhs=b.delta_bar, rhs=dbar_rhs)
    tau = pair.up.eval(-b.delta) + b.eta_plus_min
    gamma = b.delta / tau if tau > 0 else math.inf
    return ConstraintReport(c1=c1, c2=c2, c3=c3, c4=c4,
                            delta_bar_condition=dbar, tau=tau, gamma=gamma)


# ---------------------------------------------------------------------------
# Slope check for the escape argument
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlopeReport:
    min_fd_slope: float
    analytic_lower_bound: float
    max_fd_vs_analytic: float
    n_points: int
    ok: bool


def g_derivative_check(pair: InvolutionPair, b: EtaBounds, *,
                       n_points: int = 256, fd_step: float = FD_STEP,
                       tolerance: float = 1e-3) -> SlopeReport:
    """Finite-difference slope of g over [delta, delta_bar].

    The grid is inset by two steps on each side so the central differences
    never straddle the envelope branch corners (the eta_plus corner sits
    exactly at delta, and with a minimal delta_bar the falling history
    reaches 0 exactly at delta_bar).  If delta_bar was overridden upward,
    the grid is additionally capped where the falling history crosses 0:
    past that point the falling transition is canceled and the recurrence
    has no meaning.  ``ok`` means the minimum slope exceeds 1 and stays
    above the analytic lower bound
    (1 - rho_minus) * (up'(-delta) - rho_plus + 1) minus the tolerance.
    """
    def falling_history(x):
        return x - pair.up.eval(-x) - eta_plus(b, -x)

    hi_cap = b.delta_bar
    if falling_history(b.delta_bar) >= 0:
        hi_cap = bisect(falling_history, b.delta, b.delta_bar, xtol=1e-12)
    lo, hi = b.delta + 2 * fd_step, min(b.delta_bar, hi_cap) - 2 * fd_step
    if hi <= lo:  # degenerate interval: evaluate midway
        lo = hi = 0.5 * (b.delta + min(b.delta_bar, hi_cap))
        n_points = 1
    xs = [lo + (hi - lo) * i / max(n_points - 1, 1) for i in range(n_points)]
    min_fd = math.inf
    max_diff = 0.0
    for x in xs:
        fd = (g_map(pair, b, x + fd_step) - g_map(pair, b, x - fd_step)) / (2 * fd_step)
        min_fd = min(min_fd, fd)
        max_diff = max(max_diff, abs(fd - g_prime_analytic(pair, b, x)))
    bound = (1.0 - b.rho_minus) * (pair.up.derivative(-b.delta) - b.rho_plus + 1.0)
    ok = min_fd > 1.0 and min_fd >= bound - tolerance
    return SlopeReport(min_fd_slope=min_fd, analytic_lower_bound=bound,
                       max_fd_vs_analytic=max_diff, n_points=len(xs), ok=ok)


def lock_escape_ceiling(pair: InvolutionPair, b: EtaBounds) -> float:
    """Largest up-time a completed loop pulse can have under any adversary.

    Root of up(-x) + eta_plus_inf = x.  Beyond it the next rising output is
    forced at or before the pending falling one even with the maximally late
    choice, so the loop locks; every completed pulse is strictly shorter.
    """
    def p(x):
        return pair.up.eval(-x) + b.eta_plus_inf - x

    hi = pair.up_inf + b.eta_plus_inf
    if p(hi) > 0:
        raise Infeasible("no lock ceiling: up(-x) + eta_plus_inf - x stays positive")
    return bisect(p, 0.0, hi, xtol=1e-12)


def htb_parameters(b_loop: EtaBounds, b_buf: EtaBounds, theta: float,
                   delta_i2_plus: float = 0.0, delta_i2_minus: float = 0.0, *,
                   delta_minus_htb: float = 0.0, margin: float = 0.0,
                   delta_minus_floor: float = -math.inf) -> tuple[float, float]:
    """Shifter sizing for a high-threshold buffer built from a shifted channel.

    Back-tracking a pulse of up-time theta through the loop-side adversary
    widens it to at most

        theta' = theta + delta_i2_plus + eta_plus_inf_loop
                 + eta_minus_inf_loop - delta_i2_minus

    and cancellation inside the buffer is then guaranteed whenever

        theta' + delta_minus_htb + eta_plus_inf_buf <= delta_plus_htb - eta_minus_inf_buf.

    Returns the smallest (plus a caller margin) rising shift together with
    the falling shift used.
    """
    if theta < b_loop.delta_bar:
        raise InvalidArgument(
            f"theta {theta} below the loop lock threshold {b_loop.delta_bar}")
    if delta_minus_htb < delta_minus_floor:
        raise Infeasible(
            f"falling shift {delta_minus_htb} violates the causality floor "
            f"{delta_minus_floor}")
    theta_prime = (theta + delta_i2_plus + b_loop.eta_plus_inf
                   + b_loop.eta_minus_inf - delta_i2_minus)
    delta_plus = (theta_prime + delta_minus_htb + b_buf.eta_plus_inf
                  + b_buf.eta_minus_inf + margin)
    return delta_plus, delta_minus_htb
