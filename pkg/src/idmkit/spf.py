"""Short-pulse filtration harness.

Builds the canonical filtration circuit (an OR gate closed by a feedback
channel, followed by a high-threshold buffer), classifies its response to a
single input pulse, and sweeps pulse widths against the three provable
regimes:

* wide pulses  (delta0 >= up_inf + eta_plus_inf): the OR output rises once
  at time 0 and never falls, under every adversary;
* short pulses (delta0 <= up_inf - delta_min - eta_plus_inf - eta_minus_inf):
  the OR output contains exactly the input pulse, under every adversary;
* medium pulses: the output may die out, lock at 1, or sustain a pulse
  train whose up-times never exceed the critical value delta and whose
  duty cycle never exceeds gamma = delta / tau.

The short threshold is conservative by construction (its proof bounds the
falling delay by delta_min); the widest-stretching in-envelope adversary
flips strictly above it, at the boundary :func:`survival_boundary` computes
exactly, and the sweep checks the simulator against that value.

The buffer is a shifted channel sized so that every pulse that can complete
at the OR output is absorbed: completed loop pulses are bounded by the lock
ceiling and the input echo by the wide threshold, so the default threshold
is max(delta_bar, up_inf + eta_plus_inf) plus a margin.  The buffer output
is then always the zero signal or a single rising transition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .bounds import (
    EtaBounds,
    eta_minus,
    eta_plus,
    g_map,
    htb_parameters,
    lock_escape_ceiling,
)
from .delay import ExpTerm, InvolutionPair, ParametricDelay, derive_pair
from .errors import Diverged, InvalidArgument
from .numeric import bisect
from .sim import (
    FALLING,
    OSC_TOLERANCE,
    RISING,
    Adversary,
    CriticalAdversary,
    Gate,
    Netlist,
    ScriptedAdversary,
    SimResult,
    Transition,
    build_adversary,
    make_channel,
    pulses,
    run,
)

LOCKED_ONE = "LockedOne"
INPUT_PULSE_ONLY = "InputPulseOnly"
OSCILLATING = "Oscillating"
RESOLVED_ZERO = "ResolvedZero"
DIVERGED = "Diverged"


TRAIN_GUARD = 1e-6  # fs; hold the train this far below the fixed point


class TrainSustainAdversary(Adversary):
    """Strategy that exhibits the critical pulse train indefinitely.

    The exact train (up-time delta, down-time delta_prime) is a repelling
    fixed point: above delta the envelope forces growth, and any float
    rounding at delta itself lands on a branch jump.  So the strategy holds
    the train a guard below the fixed point, where the envelope is wide on
    both sides and each edge can be steered exactly:

        rising edges target a down-time of delta_prime + guard,
        falling edges target an up-time of delta - guard,

    giving period  (delta - guard) + (delta_prime + guard) = tau  exactly
    and a duty cycle a hair under gamma.  Offsets stay within a rounding
    error of the ideal train's eta_plus_min / -eta_minus_min and are
    clamped to the envelope for safety.
    """

    name = "train"

    def __init__(self, pair: InvolutionPair, bounds: EtaBounds,
                 loop_channel: str, guard: float = TRAIN_GUARD):
        self.pair = pair
        self.bounds = bounds
        self.loop_channel = loop_channel
        self.up_target = bounds.delta - guard
        self.down_target = bounds.delta_prime + guard

    def draw(self, channel_id, polarity, T, bounds):
        if bounds is None:
            return 0.0
        if channel_id != self.loop_channel:
            return 0.0
        if polarity == RISING:
            # next down-time = up(T) + eta + T  (T = minus current up-time)
            want = self.down_target - self.pair.up.eval(T) - T
        else:
            # next up-time = T + down(T) + eta  (T = minus current down-time)
            want = self.up_target - T - self.pair.down.eval(T)
        lo, hi = -eta_minus(bounds, T), eta_plus(bounds, T)
        return min(max(want, lo), hi)


@dataclass(frozen=True)
class SpfOutcome:
    klass: str
    delta0: float
    adversary: str
    transition_count: int
    last_transition_time: float
    o_buf_shape: str               # "zero" | "single-rise" | "other"
    up_time: float | None = None
    period: float | None = None
    duty_cycle: float | None = None

    def as_row(self) -> dict:
        return {
            "delta0_fs": self.delta0,
            "adversary": self.adversary,
            "class": self.klass,
            "up_time_fs": "" if self.up_time is None else self.up_time,
            "period_fs": "" if self.period is None else self.period,
            "duty_cycle": "" if self.duty_cycle is None else self.duty_cycle,
            "last_transition_fs": self.last_transition_time,
            "o_or_transitions": self.transition_count,
            "o_buf": self.o_buf_shape,
        }


SWEEP_COLUMNS = ["delta0_fs", "adversary", "class", "up_time_fs", "period_fs",
                 "duty_cycle", "last_transition_fs", "o_or_transitions", "o_buf"]


@dataclass(frozen=True)
class SpfHarness:
    variant: str
    netlist: Netlist
    pair: InvolutionPair          # loop channel's effective pair
    bounds: EtaBounds
    theta: float
    htb_shifter: tuple[float, float]
    horizon: float
    max_pulses: int

    @property
    def wide_threshold(self) -> float:
        return self.pair.up_inf + self.bounds.eta_plus_inf

    @property
    def short_threshold(self) -> float:
        return (self.pair.up_inf - self.pair.delta_min
                - self.bounds.eta_plus_inf - self.bounds.eta_minus_inf)


def _shift_base(up: ParametricDelay, s: float) -> ParametricDelay:
    """Parametric function whose same-shift composition reproduces ``up``.

    base(x) = up(x - s) - s stays in the family:
    amplitude scales by exp(rate * s), the asymptote drops by s.
    """
    terms = tuple(ExpTerm(t.amplitude * math.exp(t.rate * s), t.rate)
                  for t in up.terms)
    return ParametricDelay(asymptote=up.asymptote - s, terms=terms)


def build_spf_harness(pair: InvolutionPair, bounds: EtaBounds, *,
                      variant: str = "eta-idm",
                      loop_shift: float = 0.0,
                      htb_delta_minus: float = 0.0,
                      theta: float | None = None,
                      theta_margin: float = 1.0,
                      max_pulses: int = 200) -> SpfHarness:
    """Assemble the filtration circuit for either channel flavour.

    ``eta-idm`` uses a plain adversarial channel in the loop; ``eta-cidm``
    uses a composable channel with equal shifts ``loop_shift`` whose
    effective delays reproduce ``pair`` exactly, so both variants realize
    the same dynamics.  The high-threshold buffer is a composable channel
    in both variants, sized by the standard inequality with
    falling shift ``htb_delta_minus``.
    """
    if variant not in ("eta-idm", "eta-cidm"):
        raise InvalidArgument(f"unknown variant {variant!r}")

    ceiling = lock_escape_ceiling(pair, bounds)
    theta_auto = max(bounds.delta_bar, ceiling,
                     pair.up_inf + bounds.eta_plus_inf) + theta_margin
    theta = theta_auto if theta is None else theta
    if theta < bounds.delta_bar:
        raise InvalidArgument(f"theta {theta} below lock threshold")

    if variant == "eta-idm":
        loop_kind, loop_pair, loop_shifter = "eta", pair, None
        i2_shifts = (0.0, 0.0)
    else:
        if not isinstance(pair.up, ParametricDelay):
            raise InvalidArgument("eta-cidm loop needs a parametric up function")
        base = derive_pair(_shift_base(pair.up, loop_shift))
        loop_kind, loop_pair = "cidm", base
        loop_shifter = (loop_shift, loop_shift)
        i2_shifts = (loop_shift, loop_shift)

    dplus, dminus = htb_parameters(
        bounds, bounds, theta, i2_shifts[0], i2_shifts[1],
        delta_minus_htb=htb_delta_minus, margin=theta_margin)

    signals = {"i1": 0, "i2": 0, "o_or": 0, "i_buf": 0, "o_buf": 0}
    gates = [
        Gate(id="or1", function="or", inputs=("i1", "i2"), output="o_or"),
        Gate(id="htb1", function="high_threshold_buffer",
             inputs=("i_buf",), output="o_buf"),
    ]
    channels = [
        make_channel("c_f", loop_kind, loop_pair, bounds, "o_or", "i2",
                     shifter=loop_shifter),
        make_channel("c_buf", "cidm", pair, bounds, "o_or", "i_buf",
                     shifter=(dplus, dminus)),
    ]
    netlist = Netlist(signals=list(signals), initial=signals, inputs=["i1"],
                      gates=gates, channels=channels,
                      monitors=["o_or", "o_buf"])
    eff = netlist.channels[0].pair
    horizon = (dplus + 6.0 * (pair.up_inf + bounds.eta_plus_inf)
               + 4.0 * max_pulses * (pair.up_inf + bounds.eta_plus_inf))
    return SpfHarness(variant=variant, netlist=netlist, pair=eff,
                      bounds=bounds, theta=theta, htb_shifter=(dplus, dminus),
                      horizon=horizon, max_pulses=max_pulses)


def input_pulse(delta0: float) -> list[Transition]:
    if not (delta0 > 0):
        raise InvalidArgument(f"pulse width must be positive, got {delta0}")
    return [Transition(0.0, "i1", RISING), Transition(delta0, "i1", FALLING)]


def _buf_shape(trace: list[Transition]) -> str:
    if not trace:
        return "zero"
    if len(trace) == 1 and trace[0].polarity == RISING:
        return "single-rise"
    return "other"


def classify_result(harness: SpfHarness, delta0: float, adversary_name: str,
                    res: SimResult) -> SpfOutcome:
    o_or = res.traces["o_or"]
    o_buf = res.traces["o_buf"]
    last_t = max((t.time for t in o_or + o_buf), default=0.0)
    common = dict(delta0=delta0, adversary=adversary_name,
                  transition_count=len(o_or), last_transition_time=last_t,
                  o_buf_shape=_buf_shape(o_buf))

    if res.status in ("oscillating", "horizon", "pulse_cap"):
        stats = res.oscillation
        steady = (res.status == "oscillating"
                  or (stats is not None and stats.n_pulses >= 8
                      and stats.max_up <= harness.bounds.delta + OSC_TOLERANCE))
        if steady and stats is not None:
            return SpfOutcome(klass=OSCILLATING, up_time=stats.mean_up,
                              period=stats.mean_period,
                              duty_cycle=stats.max_duty, **common)
        return SpfOutcome(klass=DIVERGED, **common)
    # quiescent
    if res.final_values["o_or"] == 1:
        return SpfOutcome(klass=LOCKED_ONE, **common)
    shape = [(t.time, t.polarity) for t in o_or]
    if shape == [(0.0, RISING), (delta0, FALLING)]:
        return SpfOutcome(klass=INPUT_PULSE_ONLY, **common)
    return SpfOutcome(klass=RESOLVED_ZERO, **common)


def classify_pulse(harness: SpfHarness, delta0: float,
                   adversary: str | Adversary) -> SpfOutcome:
    """Drive one up-pulse of width delta0 through the circuit and classify."""
    adv = build_adversary(adversary)
    try:
        res = run(harness.netlist, input_pulse(delta0), adv,
                  horizon=harness.horizon, watch="o_or",
                  max_pulses=harness.max_pulses)
    except Diverged as exc:
        partial = exc.partial
        o_or = partial.traces.get("o_or", [])
        o_buf = partial.traces.get("o_buf", [])
        last_t = max((t.time for t in o_or + o_buf), default=0.0)
        return SpfOutcome(klass=DIVERGED, delta0=delta0, adversary=adv.name,
                          transition_count=len(o_or), last_transition_time=last_t,
                          o_buf_shape=_buf_shape(o_buf))
    return classify_result(harness, delta0, adv.name, res)


def survival_boundary(harness: SpfHarness) -> float:
    """Pulse width above which the widest-stretching adversary keeps the
    first feedback pulse alive.

    The earliest possible feedback rise is up_inf - eta_minus_inf; the
    latest fall of the echoed pulse then lands at
    delta0 + down(delta0 - rise) + eta_plus(...).  The root of
    (latest fall - rise) is the exact flip point of the anticritical
    strategy, strictly above the conservative short threshold.
    """
    pair, b = harness.pair, harness.bounds
    rise = pair.up_inf - b.eta_minus_inf

    def gap(delta0):
        T = delta0 - rise
        floor = getattr(pair.down, "domain_floor", -math.inf)
        Tc = T if T > floor else floor
        return delta0 + pair.down.eval(Tc) + eta_plus(b, Tc) - rise

    lo = harness.short_threshold * 0.2
    hi = harness.wide_threshold
    return bisect(gap, lo, hi, xtol=1e-9)


def sweep(harness: SpfHarness, delta0_values: list[float],
          adversaries: list[str | Adversary]) -> list[SpfOutcome]:
    """Classify every pulse width under every strategy."""
    out = []
    for d0 in delta0_values:
        for adv in adversaries:
            out.append(classify_pulse(harness, d0, adv))
    return out


def log_spaced(lo: float, hi: float, n: int) -> list[float]:
    if not (0 < lo < hi):
        raise InvalidArgument(f"need 0 < lo < hi, got [{lo}, {hi}]")
    ratio = (hi / lo) ** (1.0 / (n - 1))
    return [lo * ratio ** i for i in range(n)]


@dataclass(frozen=True)
class BoundaryCheck:
    wide_threshold: float
    wide_estimate: float
    wide_step: float
    short_threshold: float
    short_safe_through: float
    survival_flip: float
    survival_estimate: float
    short_step: float
    ok: bool


def check_boundaries(harness: SpfHarness, grid: list[float],
                     rows: list[SpfOutcome],
                     witness_rows: list[SpfOutcome]) -> BoundaryCheck:
    """Compare the sweep's regime edges against the provable thresholds.

    The wide edge is the start of the all-single-rise suffix; it must land
    within one grid step of up_inf + eta_plus_inf (the critical strategy
    produces a falling edge just below it).  On the short side the theorem
    threshold is conservative: everything at or below it must classify as
    InputPulseOnly, and the anticritical witness must flip exactly at the
    analytic survival boundary (within one grid step).
    """
    grid = sorted(grid)
    by_d0: dict[float, list[SpfOutcome]] = {}
    for r in rows:
        by_d0.setdefault(r.delta0, []).append(r)

    def all_single_rise(d0):
        rs = by_d0[d0]
        return all(r.klass == LOCKED_ONE and r.transition_count == 1 for r in rs)

    wide_est = math.inf
    for d0 in reversed(grid):
        if all_single_rise(d0):
            wide_est = d0
        else:
            break
    idx = grid.index(wide_est) if wide_est in grid else len(grid)
    wide_step = (grid[idx] - grid[idx - 1]) if 0 < idx < len(grid) else math.inf
    b1 = harness.wide_threshold
    wide_ok = (wide_est >= b1 - 1e-9 and wide_est - b1 <= wide_step + 1e-9)

    b2 = harness.short_threshold
    short_safe = -math.inf
    for d0 in grid:
        if all(r.klass == INPUT_PULSE_ONLY for r in by_d0[d0]):
            short_safe = d0
        else:
            break
    short_ok = short_safe >= max([d for d in grid if d <= b2], default=-math.inf)

    flip = survival_boundary(harness)
    wit_by_d0 = {r.delta0: r for r in witness_rows}
    wit_grid = sorted(wit_by_d0)
    surv_est = math.inf
    for d0 in reversed(wit_grid):
        if wit_by_d0[d0].klass != INPUT_PULSE_ONLY:
            surv_est = d0
        else:
            break
    sidx = wit_grid.index(surv_est) if surv_est in wit_by_d0 else len(wit_grid)
    short_step = (wit_grid[sidx] - wit_grid[sidx - 1]) if 0 < sidx < len(wit_grid) \
        else math.inf
    surv_ok = (surv_est >= flip - 1e-9 and surv_est - flip <= short_step + 1e-9)

    return BoundaryCheck(
        wide_threshold=b1, wide_estimate=wide_est, wide_step=wide_step,
        short_threshold=b2, short_safe_through=short_safe,
        survival_flip=flip, survival_estimate=surv_est, short_step=short_step,
        ok=wide_ok and short_ok and surv_ok)


def no_short_output_pulses(trace: list[Transition], eps: float) -> bool:
    """True iff every complete pulse in the trace is at least eps long."""
    return all(f - r >= eps for r, f in pulses(trace))


def write_sweep_csv(path, rows: list[SpfOutcome]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow(r.as_row())


# ---------------------------------------------------------------------------
# Seeding the critical train
# ---------------------------------------------------------------------------

def seed_width_for_first_up(harness: SpfHarness, target_up: float) -> float:
    """Input width whose first feedback pulse has the given up-time when the
    first two adversary offsets are zero.

    With zero offsets the first feedback rise lands at up_inf exactly (the
    channel was idle), so the first loop up-time is
        delta0 + down(delta0 - up_inf) - up_inf,
    monotone in delta0; solved by bisection.
    """
    pair = harness.pair
    rise = pair.up_inf

    def first_up(delta0):
        T = delta0 - rise
        floor = getattr(pair.down, "domain_floor", -math.inf)
        Tc = T if T > floor else floor
        return delta0 + pair.down.eval(Tc) - rise

    lo, hi = 1.0, rise - 1e-6
    if first_up(hi) < target_up:
        raise InvalidArgument(f"target first up-time {target_up} unreachable")
    while first_up(lo) > target_up:
        lo *= 0.5
        if lo < 1e-12:
            raise InvalidArgument("target first up-time unreachable from below")
    return bisect(lambda d: first_up(d) - target_up, lo, hi, xtol=1e-12)


def seeded_adversary(harness: SpfHarness, target_up: float,
                     continue_with: Adversary | None = None) -> tuple[float, Adversary]:
    """(delta0, adversary) driving the first loop pulse to ``target_up``.

    The scripted part pins the first two loop offsets to zero; the
    continuation defaults to the plain critical strategy.
    """
    d0 = seed_width_for_first_up(harness, target_up)
    fallback = continue_with or CriticalAdversary()
    return d0, ScriptedAdversary({"c_f": [0.0, 0.0]}, fallback=fallback)


def sustained_train_adversary(harness: SpfHarness) -> Adversary:
    """Adversary exhibiting the critical pulse train indefinitely."""
    return TrainSustainAdversary(harness.pair, harness.bounds, "c_f")


def sustained_train_setup(harness: SpfHarness) -> tuple[float, Adversary]:
    """(delta0, adversary) that realizes the critical train from rest."""
    adv = sustained_train_adversary(harness)
    target = harness.bounds.delta - TRAIN_GUARD
    d0 = seed_width_for_first_up(harness, target)
    return d0, ScriptedAdversary({"c_f": [0.0, 0.0]}, fallback=adv)


def escape_lock_script(harness: SpfHarness, start_up: float) -> tuple[float, Adversary, list[float]]:
    """Fully scripted escape: seed a loop pulse of ``start_up``, follow the
    widening recurrence to the lock threshold, then force the lock.

    The per-pulse offsets are the envelope extremes along the iterates
    while they stay below delta_bar.  Once an iterate reaches delta_bar the
    envelope's wide branch would let a maximally late rise postpone the
    lock (the canonical lock argument evaluates the envelope exactly at
    delta_bar), so the script plays a zero offset there, which triggers
    cancellation since up(-x) <= x for every x past the threshold.

    Returns (delta0, adversary, expected up-time iterates).
    """
    pair, b = harness.pair, harness.bounds
    if not (b.delta < start_up < b.delta_bar):
        raise InvalidArgument("start_up must lie inside (delta, delta_bar)")
    d0 = seed_width_for_first_up(harness, start_up)
    etas = [0.0, 0.0]   # seed pulse: zero offsets
    xs = [start_up]
    x = start_up
    while x < b.delta_bar:
        a = x - pair.up.eval(-x) - eta_plus(b, -x)
        etas.append(eta_plus(b, -x))
        etas.append(-eta_minus(b, a))
        x = g_map(pair, b, x)
        xs.append(x)
        if len(xs) > 100000:
            raise InvalidArgument("escape iteration did not reach delta_bar")
    etas.append(0.0)    # lock: up(-x) <= x for x >= delta_bar
    return d0, ScriptedAdversary({"c_f": etas}), xs
