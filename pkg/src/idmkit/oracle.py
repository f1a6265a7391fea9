"""Synthetic analog oracle and the tangency characterization procedure.

The oracle is a chain of first-order lag stages driven by trapezoidal
(finite-slew) input edges.  A single stage is integrated exactly: on every
interval where the input is linear, the response is a closed-form
exponential plus a line, with at most one interior extremum, so threshold
crossings come from bisection on monotone pieces.  Deeper stages re-sample
their predecessor on a fine grid (documented approximation); the default
oracle is a single stage.

Characterization mirrors the pulse-width tangency procedure used to
extract channel parameters from analog runs:

1. binary-search the input pulse width until the output just grazes the
   metastable output threshold;
2. the minimum delay is the grazing time minus the crossing point of the
   rising and falling input ramps;
3. the shifter offsets are the ramp times between the nominal and the
   matching input thresholds;
4. longer pulses then sample the (T, delay) curve per edge for fitting.

All voltages are fractions of the swing; times are femtoseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import CharacterizationFailed, InvalidArgument
from .fitting import DelaySampleSet

RISING = "R"
FALLING = "F"


# ---------------------------------------------------------------------------
# Piecewise-linear inputs and exact single-stage response
# ---------------------------------------------------------------------------

def _input_knots(edges: list[tuple[float, str]], slew: float) -> tuple[float, list]:
    """Trapezoid train from edge starts; returns (initial value, knots).

    Each edge ramps the input toward 1 (rising) or 0 (falling) with slope
    1/slew starting from the value at the edge time; saturation inserts a
    knot.  Edges must be time-sorted and polarity-alternating.
    """
    if not edges:
        return 0.0, []
    init = 1.0 if edges[0][1] == FALLING else 0.0
    knots: list[tuple[float, float]] = []
    t_cur, v_cur, slope = edges[0][0], init, 0.0
    last_pol = None

    def advance(to_t):
        nonlocal t_cur, v_cur
        v_cur = v_cur + slope * (to_t - t_cur)
        t_cur = to_t

    for i, (e, pol) in enumerate(edges):
        if pol == last_pol:
            raise InvalidArgument("input edges must alternate polarity")
        last_pol = pol
        if e < t_cur:
            raise InvalidArgument("input edges must be time-sorted")
        # run the current slope until this edge, inserting saturation
        target = 1.0 if slope > 0 else 0.0
        if slope != 0.0:
            t_sat = t_cur + (target - v_cur) / slope
            if t_sat <= e:
                advance(t_sat)
                knots.append((t_cur, v_cur))
                slope = 0.0
        advance(e)
        knots.append((t_cur, v_cur))
        slope = (1.0 if pol == RISING else -1.0) / slew
    # final saturation
    target = 1.0 if slope > 0 else 0.0
    if slope != 0.0:
        t_sat = t_cur + (target - v_cur) / slope
        advance(t_sat)
        knots.append((t_cur, v_cur))
    return init, knots


@dataclass(frozen=True)
class _Piece:
    """Monotone slice of the lag response on [t0, t1].

    v(t) = C * exp(-(t - ref) / tau) + a + b*(t - ref) - b*tau

    ``ref`` is the start of the linear input segment the slice lives in; it
    stays fixed when a segment is split at its extremum, so [t0, t1] is
    just the monotone window.
    """

    t0: float
    t1: float
    C: float
    a: float
    b: float
    ref: float
    tau: float

    def value(self, t: float) -> float:
        return (self.C * math.exp(-(t - self.ref) / self.tau)
                + self.a + self.b * (t - self.ref) - self.b * self.tau)

    def crossing(self, level: float) -> float | None:
        v0, v1 = self.value(self.t0), self.value(self.t1)
        if not (min(v0, v1) <= level <= max(v0, v1)):
            return None
        lo, hi = self.t0, self.t1
        rising = v1 > v0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if (self.value(mid) < level) == rising:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-12:
                break
        return 0.5 * (lo + hi)


class Waveform:
    """Exact single-stage lag response to a piecewise-linear input."""

    def __init__(self, init: float, knots: list[tuple[float, float]], tau: float):
        self.tau = tau
        self.pieces: list[_Piece] = []
        self.v_init = init
        if not knots:
            self.t_end = 0.0
            self.v_end = init
            return
        v = init  # settled at the input's initial value
        for (ta, ua), (tb, ub) in zip(knots, knots[1:]):
            if tb <= ta:
                continue
            b = (ub - ua) / (tb - ta)
            a = ua
            C = v - (a - b * tau)
            piece = _Piece(t0=ta, t1=tb, C=C, a=a, b=b, ref=ta, tau=tau)
            # split at the single interior extremum, if any: v' = 0 where
            # C*exp(-(t-ref)/tau) == b*tau
            self._append_split(piece)
            v = piece.value(tb)
        # trailing exponential settle toward the final input value
        ta = knots[-1][0]
        ua = knots[-1][1]
        tail_end = ta + 60.0 * tau
        C = v - ua
        self.pieces.append(_Piece(t0=ta, t1=tail_end, C=C, a=ua, b=0.0,
                                  ref=ta, tau=tau))
        self.t_end = tail_end
        self.v_end = ua

    def _append_split(self, p: _Piece):
        if p.C != 0.0 and p.b != 0.0 and p.C * p.b > 0:
            ratio = p.b * p.tau / p.C
            if 0 < ratio < 1:
                t_star = p.ref - p.tau * math.log(ratio)
                if p.t0 < t_star < p.t1:
                    self.pieces.append(_Piece(p.t0, t_star, p.C, p.a, p.b,
                                              p.ref, p.tau))
                    self.pieces.append(_Piece(t_star, p.t1, p.C, p.a, p.b,
                                              p.ref, p.tau))
                    return
        self.pieces.append(p)

    def value(self, t: float) -> float:
        if not self.pieces or t <= self.pieces[0].t0:
            return self.v_init
        for p in self.pieces:
            if p.t0 <= t <= p.t1:
                return p.value(t)
        return self.v_end

    def crossings(self, level: float) -> list[tuple[float, str]]:
        """All (time, direction) crossings of the level, in time order."""
        out = []
        prev = self.v_init
        for p in self.pieces:
            v0, v1 = p.value(p.t0), p.value(p.t1)
            t = p.crossing(level)
            if t is not None and min(v0, v1) < level <= max(v0, v1):
                direction = RISING if v1 > v0 else FALLING
                if not out or t > out[-1][0] + 1e-12:
                    out.append((t, direction))
            prev = v1
        return out

    def peak(self) -> tuple[float, float]:
        """(time, value) of the global maximum."""
        best_t, best_v = self.pieces[0].t0, self.v_init
        for p in self.pieces:
            for t in (p.t0, p.t1):
                v = p.value(t)
                if v > best_v:
                    best_t, best_v = t, v
        return best_t, best_v


@dataclass(frozen=True)
class LagOracle:
    """First-order lag chain with trapezoidal inputs and threshold queries."""

    tau_c: float = 120.0
    slew: float = 60.0
    vth_in: float = 0.5
    vth_in_m: float = 0.5
    vth_out: float = 0.5
    vth_out_m: float = 0.5
    n_stages: int = 2
    resample: float = field(default=0.02, repr=False)  # grid step in tau_c units

    def respond(self, edges: list[tuple[float, str]]) -> Waveform:
        init, knots = _input_knots(edges, self.slew)
        wave = Waveform(init, knots, self.tau_c)
        for _ in range(self.n_stages - 1):
            wave = Waveform(wave.v_init, self._resample(wave), self.tau_c)
        return wave

    def _resample(self, wave: Waveform) -> list[tuple[float, float]]:
        """Piecewise-linear knots for the next stage, walking pieces once.

        The grid covers the active span plus a settle margin; beyond it the
        next stage's own constant-input tail takes over (the remaining
        drift of this stage is exp(-margin) of the swing).
        """
        if not wave.pieces:
            return []
        t0 = wave.pieces[0].t0
        active_end = wave.pieces[-2].t1 if len(wave.pieces) > 1 else wave.t_end
        t1 = min(wave.t_end, active_end + 14.0 * self.tau_c)
        dt = self.tau_c * self.resample
        n = int((t1 - t0) / dt) + 1
        knots = []
        idx = 0
        for i in range(n + 1):
            t = t0 + i * dt
            while idx < len(wave.pieces) - 1 and t > wave.pieces[idx].t1:
                idx += 1
            knots.append((t, wave.pieces[idx].value(min(t, wave.pieces[idx].t1))))
        return knots

    def input_cross(self, edges: list[tuple[float, str]], edge_start: float,
                    polarity: str, level: float) -> float:
        """Time the (possibly unsaturated) ramp from this edge crosses a level.

        Uses the actual trajectory line: an edge starting from a partially
        swung input ramps from its current value, so the crossing shifts
        accordingly.
        """
        init, knots = _input_knots(edges, self.slew)
        value_at = init
        for t, v in knots:
            if t <= edge_start + 1e-12:
                value_at = v
            else:
                break
        if polarity == RISING:
            return edge_start + self.slew * (level - value_at)
        return edge_start + self.slew * (value_at - level)


# ---------------------------------------------------------------------------
# Characterization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Characterization:
    delta_min: float
    delta_plus: float
    delta_minus: float
    samples: DelaySampleSet
    critical_width: float
    search_iterations: int
    grazing_time: float            # where the output touches the threshold
    input_cross_time: float        # ramp-line crossing of the input pulse
    input_cross_height: float


def _grazing_width(oracle: LagOracle, *, tol: float = 1e-3,
                   max_iter: int = 60) -> tuple[float, int]:
    """Pulse width (edge start to edge start) whose output peak equals the
    metastable output threshold."""
    level = oracle.vth_out_m

    def peak(w):
        return oracle.respond([(0.0, RISING), (w, FALLING)]).peak()[1]

    lo = oracle.slew * 1e-3
    hi = oracle.slew + oracle.tau_c
    tries = 0
    while peak(hi) < level:
        hi *= 2.0
        tries += 1
        if tries > 60:
            raise CharacterizationFailed("output never reaches the threshold")
    while peak(lo) > level:
        lo *= 0.5
        tries += 1
        if tries > 120:
            raise CharacterizationFailed("output exceeds threshold even for "
                                         "vanishing pulses")
    iterations = 0
    while hi - lo > tol and iterations < max_iter:
        mid = 0.5 * (lo + hi)
        if peak(mid) < level:
            lo = mid
        else:
            hi = mid
        iterations += 1
    if hi - lo > max(tol, 0.01):
        raise CharacterizationFailed(
            f"width bracket {hi - lo} did not converge in {max_iter} steps")
    return 0.5 * (lo + hi), iterations


def _sample_falling(oracle: LagOracle, offsets: list[float],
                    runt_width: float):
    """(T, falling delay) pairs: rise, settle partially, then fall.

    ``offsets`` are edge positions relative to the settled output crossing;
    additional points geometrically approach the runt edge at
    ``runt_width`` so the short-history bend of the curve is resolved.
    """
    out = []
    ref = oracle.respond([(0.0, RISING)])
    up_cross = ref.crossings(oracle.vth_out)
    if not up_cross:
        raise CharacterizationFailed("single rising edge never crosses")
    c_ref = up_cross[0][0]
    runt_off = runt_width - c_ref
    near = [runt_off + step for step in _approach_steps(oracle.tau_c)]
    for off in sorted(set(offsets) | set(near)):
        f0 = c_ref + off
        if f0 <= 0.0 or f0 <= runt_width:
            continue
        wave = oracle.respond([(0.0, RISING), (f0, FALLING)])
        xs = wave.crossings(oracle.vth_out)
        ups = [t for t, d in xs if d == RISING]
        downs = [t for t, d in xs if d == FALLING]
        if not ups or not downs:
            continue  # runt pulse: never crossed
        t_in = oracle.input_cross([(0.0, RISING), (f0, FALLING)], f0,
                                  FALLING, oracle.vth_in)
        T = t_in - ups[0]
        delay = downs[0] - t_in
        out.append((T, delay))
    return out


def _approach_steps(tau: float) -> list[float]:
    """Geometric approach distances toward the runt edge."""
    return [tau * 1e-5 * (1.5 ** i) for i in range(30)]


def _sample_rising(oracle: LagOracle, offsets: list[float],
                   runt_width: float):
    """(T, rising delay) pairs: start high, fall, then rise again."""
    out = []
    ref = oracle.respond([(0.0, FALLING)])
    down_cross = ref.crossings(oracle.vth_out)
    if not down_cross:
        raise CharacterizationFailed("single falling edge never crosses")
    c_ref = down_cross[0][0]
    runt_off = runt_width - c_ref
    near = [runt_off + step for step in _approach_steps(oracle.tau_c)]
    for off in sorted(set(offsets) | set(near)):
        r0 = c_ref + off
        if r0 <= 0.0 or r0 <= runt_width:
            continue
        wave = oracle.respond([(0.0, FALLING), (r0, RISING)])
        xs = wave.crossings(oracle.vth_out)
        downs = [t for t, d in xs if d == FALLING]
        ups = [t for t, d in xs if d == RISING]
        if not downs or not ups:
            continue
        t_in = oracle.input_cross([(0.0, FALLING), (r0, RISING)], r0,
                                  RISING, oracle.vth_in)
        T = t_in - downs[0]
        delay = ups[0] - t_in
        out.append((T, delay))
    return out


def default_offsets(oracle: LagOracle) -> list[float]:
    """Edge-offset grid spanning runts up to fully settled history."""
    tau = oracle.tau_c
    neg = [-1.5 * tau + i * (tau / 8.0) for i in range(14)]
    pos = [tau * (1.12 ** i) / 4.0 for i in range(46)]
    return sorted(set(neg + pos))


def input_line_crossing(oracle: LagOracle, rise_start: float,
                        fall_start: float) -> tuple[float, float]:
    """(time, height) where the rising and falling input ramp lines cross.

    The falling line passes through the input's actual value at the fall
    start (pulses narrower than the slew turn around mid-ramp).
    """
    _, knots = _input_knots([(rise_start, RISING), (fall_start, FALLING)],
                            oracle.slew)
    u_fall = 0.0
    for t, v in knots:
        if t <= fall_start + 1e-12:
            u_fall = v
    s = oracle.slew
    t_x = 0.5 * (rise_start + fall_start + s * u_fall)
    return t_x, (t_x - rise_start) / s


def characterize(oracle: LagOracle,
                 offsets: list[float] | None = None) -> Characterization:
    """Run the full tangency procedure plus (T, delay) sampling.

    The minimum delay is measured from the input reference instant of the
    grazing pulse - the falling trajectory's crossing of the matching input
    threshold - to the point where the output touches the metastable
    threshold.  This is the limit the sampled (T, delay) curve collapses
    to, so it is directly comparable with the root of a fitted pair.  The
    geometric crossing point of the two input ramp lines is reported as a
    diagnostic; for pulses wider than the slew it sits above the swing and
    is not a usable reference.
    """
    width, iterations = _grazing_width(oracle)
    wave = oracle.respond([(0.0, RISING), (width, FALLING)])
    t_o, _ = wave.peak()
    t_x, h_x = input_line_crossing(oracle, 0.0, width)
    t_in = oracle.input_cross([(0.0, RISING), (width, FALLING)], width,
                              FALLING, oracle.vth_in_m)
    delta_min = t_o - t_in
    delta_plus = oracle.slew * (oracle.vth_in_m - oracle.vth_in)
    delta_minus = oracle.slew * (oracle.vth_in - oracle.vth_in_m)
    offsets = default_offsets(oracle) if offsets is None else offsets
    samples = DelaySampleSet(rising=_sample_rising(oracle, offsets, width),
                             falling=_sample_falling(oracle, offsets, width),
                             source_label="oracle")
    return Characterization(delta_min=delta_min, delta_plus=delta_plus,
                            delta_minus=delta_minus, samples=samples,
                            critical_width=width,
                            search_iterations=iterations,
                            grazing_time=t_o, input_cross_time=t_x,
                            input_cross_height=h_x)
