"""Event-driven simulation of circuits with single-history delay channels.

Gates are zero-delay boolean functions; all timing lives in channels that
connect a source signal to a destination signal.  A channel computes, for
the n-th input transition at time t with history T = t - (previous input
time + previous delay):

    delay_n = fn(max(T, clamp)) + eta

where fn is the rising or falling delay function and eta an adversary offset
inside [-eta_minus(T), eta_plus(T)].  The candidate output lands at
t + delay; if that is at or before the channel's newest unfired output, the
two annihilate (out-of-order cancellation) and nothing is emitted.  The
history always advances to t + delay, canceled or not.

Event ordering is deterministic: (time, declared signal order, falling
before rising).  Events with equal timestamps settle together through the
combinational gates before any channel consumes the net transitions, so
zero-width pulses at a gate output never propagate.

Negative delays are legal (they drive cancellation); what is not supported
is retracting an output that has already fired, or emitting into the past.
Configurations that force either raise CausalityError - the shipped
filtration circuits provably never do.
"""

from __future__ import annotations

import csv
import heapq
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from .bounds import EtaBounds, EtaParams, eta_minus, eta_plus, make_bounds
from .delay import InvolutionPair, pair_from_dict, shifted_pair
from .errors import (
    BoundViolation,
    CausalityError,
    Diverged,
    InvalidArgument,
    ModelViolation,
)

RISING = "R"
FALLING = "F"

ETA_SLACK = 1e-9       # fs, tolerance when validating adversary offsets
DEFAULT_IDLE_SINCE = -1e12   # fs, stand-in for a channel idle "forever"
DEFAULT_EVENT_CAP = 200_000
OSC_WINDOW = 8         # consecutive up-times that must agree ...
OSC_TOLERANCE = 0.1    # ... within this many fs to call it steady


@dataclass(frozen=True)
class Transition:
    time: float
    signal: str
    polarity: str  # RISING or FALLING

    def as_row(self) -> tuple:
        return (repr(self.time), self.signal, self.polarity)


# ---------------------------------------------------------------------------
# Adversary strategies
# ---------------------------------------------------------------------------

class Adversary:
    """Base strategy; draw() is called once per channel input transition."""

    name = "zero"

    def begin(self) -> "Adversary":
        """Per-run instance (stateful strategies override)."""
        return self

    def draw(self, channel_id: str, polarity: str, T: float,
             bounds: EtaBounds | None) -> float:
        return 0.0


class ZeroAdversary(Adversary):
    name = "zero"


class CriticalAdversary(Adversary):
    """Maximally late rising edges, maximally early falling edges."""

    name = "critical"

    def draw(self, channel_id, polarity, T, bounds):
        if bounds is None:
            return 0.0
        if polarity == RISING:
            return eta_plus(bounds, T)
        return -eta_minus(bounds, T)


class AntiCriticalAdversary(Adversary):
    """Mirror of critical: early rising, late falling.

    Stretches pulses as far as the envelope allows; used as the witness
    strategy when locating the short-pulse regime boundary.
    """

    name = "anticritical"

    def draw(self, channel_id, polarity, T, bounds):
        if bounds is None:
            return 0.0
        if polarity == RISING:
            return -eta_minus(bounds, T)
        return eta_plus(bounds, T)


class UniformRandomAdversary(Adversary):
    def __init__(self, seed: int):
        self.seed = seed
        self.name = f"random:{seed}"
        self._rng: random.Random | None = None

    def begin(self):
        fresh = UniformRandomAdversary(self.seed)
        fresh._rng = random.Random(self.seed)
        return fresh

    def draw(self, channel_id, polarity, T, bounds):
        if bounds is None:
            return 0.0
        lo, hi = -eta_minus(bounds, T), eta_plus(bounds, T)
        return self._rng.uniform(lo, hi)


class ScriptedAdversary(Adversary):
    """Explicit offsets per channel, consumed in input-transition order.

    ``script`` maps channel id to a list of eta values.  Exhausted or
    missing channels fall back to the ``fallback`` strategy (zero unless
    given), which lets a script seed a trajectory that another strategy
    then continues.
    """

    name = "scripted"

    def __init__(self, script: dict[str, list[float]],
                 fallback: "Adversary | None" = None):
        self.script = script
        self.fallback = fallback or ZeroAdversary()
        self._cursor: dict[str, int] = {}

    def begin(self):
        fresh = ScriptedAdversary(self.script, self.fallback.begin())
        return fresh

    def draw(self, channel_id, polarity, T, bounds):
        seq = self.script.get(channel_id)
        if seq is not None:
            i = self._cursor.get(channel_id, 0)
            if i < len(seq):
                self._cursor[channel_id] = i + 1
                return seq[i]
        return self.fallback.draw(channel_id, polarity, T, bounds)


def build_adversary(spec: str | Adversary) -> Adversary:
    if isinstance(spec, Adversary):
        return spec
    if spec == "zero":
        return ZeroAdversary()
    if spec == "critical":
        return CriticalAdversary()
    if spec == "anticritical":
        return AntiCriticalAdversary()
    if spec.startswith("random:"):
        return UniformRandomAdversary(int(spec.split(":", 1)[1]))
    raise InvalidArgument(f"unknown adversary {spec!r}")


# ---------------------------------------------------------------------------
# Channels
# ---------------------------------------------------------------------------

@dataclass
class _Event:
    time: float
    signal: str
    polarity: str
    valid: bool = True
    fired: bool = False


@dataclass
class ChannelInstance:
    """Runtime state of one channel edge."""

    id: str
    kind: str                      # "idm" | "eta" | "cidm"
    pair: InvolutionPair           # effective pair (shifted for cidm)
    bounds: EtaBounds | None
    src: str
    dst: str
    shifter: tuple[float, float] | None = None
    idle_since: float = DEFAULT_IDLE_SINCE
    last_input_time: float = -math.inf
    last_output_time: float = field(default=0.0)
    inputs_seen: int = 0
    outputs_emitted: int = 0
    _unfired: list = field(default_factory=list)

    def __post_init__(self):
        self.last_output_time = self.idle_since
        if self.kind == "idm" and self.bounds is not None:
            raise InvalidArgument("plain channels carry no adversary bounds")
        if self.kind in ("eta", "cidm") and self.bounds is None:
            raise InvalidArgument(f"channel {self.id}: kind {self.kind} needs bounds")

    def history(self, t: float, polarity: str) -> float:
        """Clamped previous-output-to-input time for this transition."""
        fn = self.pair.up if polarity == RISING else self.pair.down
        T = t - self.last_output_time
        if T == math.inf:
            # previous output annihilated at the clamp singularity; the
            # channel looks idle forever, where the delay saturates anyway
            T = 1e15
        floor = getattr(fn, "domain_floor", -math.inf)
        return T if T > floor else floor


def channel_step(ch: ChannelInstance, t_in: Transition, eta: float) -> Transition | None:
    """Advance one channel by one input transition.

    Returns the output transition, or None when it annihilated with the
    channel's newest unfired output.  The engine is responsible for
    retracting the annihilated event from its queue; standalone use (as
    here) keeps the bookkeeping internal.
    """
    t = t_in.time
    if t < ch.last_input_time:
        raise InvalidArgument(
            f"channel {ch.id}: inputs out of order ({t} < {ch.last_input_time})")
    T = ch.history(t, t_in.polarity)
    if ch.bounds is not None:
        lo, hi = -eta_minus(ch.bounds, T), eta_plus(ch.bounds, T)
        if not (lo - ETA_SLACK <= eta <= hi + ETA_SLACK):
            raise BoundViolation(
                f"channel {ch.id}: eta={eta} outside [{lo}, {hi}] at T={T}")
    elif eta != 0.0:
        raise BoundViolation(f"channel {ch.id}: plain channel got eta={eta}")
    fn = ch.pair.up if t_in.polarity == RISING else ch.pair.down
    delay = fn.eval(T) + eta
    out_time = t + delay
    ch.last_input_time = t
    ch.last_output_time = out_time   # history advances even on annihilation
    ch.inputs_seen += 1

    # drop fired events from the head; they are downstream history now
    while ch._unfired and ch._unfired[0].fired:
        ch._unfired.pop(0)
    if ch._unfired:
        tail = ch._unfired[-1]
        if out_time <= tail.time:
            if tail.fired:
                raise CausalityError(
                    f"channel {ch.id}: output at {out_time} would retract the "
                    f"already fired transition at {tail.time}")
            tail.valid = False
            ch._unfired.pop()
            return None
    ev = _Event(time=out_time, signal=ch.dst, polarity=t_in.polarity)
    ch._unfired.append(ev)
    ch.outputs_emitted += 1
    return Transition(time=out_time, signal=ch.dst, polarity=t_in.polarity)


def make_channel(channel_id: str, kind: str, pair: InvolutionPair,
                 bounds: EtaBounds | None, src: str, dst: str,
                 shifter: tuple[float, float] | None = None,
                 idle_since: float = DEFAULT_IDLE_SINCE) -> ChannelInstance:
    if kind == "cidm":
        dp, dm = shifter if shifter is not None else (0.0, 0.0)
        eff = shifted_pair(pair, dp, dm)
        return ChannelInstance(id=channel_id, kind=kind, pair=eff, bounds=bounds,
                               src=src, dst=dst, shifter=(dp, dm),
                               idle_since=idle_since)
    if shifter is not None:
        raise InvalidArgument(f"channel {channel_id}: shifter requires kind 'cidm'")
    return ChannelInstance(id=channel_id, kind=kind, pair=pair, bounds=bounds,
                           src=src, dst=dst, idle_since=idle_since)


def make_cidm_channel(channel_id: str, base: InvolutionPair, delta_plus: float,
                      delta_minus: float, bounds: EtaBounds,
                      src: str, dst: str,
                      idle_since: float = DEFAULT_IDLE_SINCE) -> ChannelInstance:
    """Composable channel: pure shifter + cancellation + base tail."""
    return make_channel(channel_id, "cidm", base, bounds, src, dst,
                        shifter=(delta_plus, delta_minus), idle_since=idle_since)


# ---------------------------------------------------------------------------
# Netlist
# ---------------------------------------------------------------------------

_GATE_FUNCTIONS = {
    "or": lambda vals: int(any(vals)),
    "buffer": lambda vals: vals[0],
    "inverter": lambda vals: 1 - vals[0],
    "high_threshold_buffer": lambda vals: vals[0],  # thresholding lives in the channel
}


@dataclass(frozen=True)
class Gate:
    id: str
    function: str
    inputs: tuple[str, ...]
    output: str

    def eval(self, values: dict[str, int]) -> int:
        return _GATE_FUNCTIONS[self.function]([values[s] for s in self.inputs])


@dataclass
class Netlist:
    signals: list[str]
    initial: dict[str, int]
    inputs: list[str]
    gates: list[Gate]
    channels: list[ChannelInstance]
    monitors: list[str]

    def __post_init__(self):
        declared = set(self.signals)
        for g in self.gates:
            for s in (*g.inputs, g.output):
                if s not in declared:
                    raise InvalidArgument(f"gate {g.id}: undeclared signal {s}")
        for c in self.channels:
            if c.src not in declared or c.dst not in declared:
                raise InvalidArgument(f"channel {c.id}: undeclared signal")
            if self.initial.get(c.src, 0) != self.initial.get(c.dst, 0):
                raise InvalidArgument(
                    f"channel {c.id}: initial values of {c.src} and {c.dst} differ")
        drivers: dict[str, str] = {}
        for g in self.gates:
            if g.output in drivers:
                raise InvalidArgument(f"signal {g.output} driven twice")
            drivers[g.output] = g.id
        for c in self.channels:
            if c.dst in drivers:
                raise InvalidArgument(f"signal {c.dst} driven twice")
            drivers[c.dst] = c.id
        for s in self.inputs:
            if s in drivers:
                raise InvalidArgument(f"input signal {s} also driven by {drivers[s]}")
        # combinational part must be acyclic (loops must pass through channels)
        order: list[str] = []
        marks: dict[str, int] = {}

        def visit(g: Gate):
            if marks.get(g.id) == 2:
                return
            if marks.get(g.id) == 1:
                raise InvalidArgument("zero-delay gate loop; break it with a channel")
            marks[g.id] = 1
            for h in self.gates:
                if h.output in g.inputs:
                    visit(h)
            marks[g.id] = 2
            order.append(g.id)

        for g in self.gates:
            visit(g)
        by_id = {g.id: g for g in self.gates}
        self._gate_order = [by_id[i] for i in order]
        self._signal_index = {s: i for i, s in enumerate(self.signals)}

    def fresh(self) -> "Netlist":
        """Deep-copy runtime state (channels are mutable)."""
        chans = [ChannelInstance(id=c.id, kind=c.kind, pair=c.pair, bounds=c.bounds,
                                 src=c.src, dst=c.dst, shifter=c.shifter,
                                 idle_since=c.idle_since)
                 for c in self.channels]
        return Netlist(signals=list(self.signals), initial=dict(self.initial),
                       inputs=list(self.inputs), gates=list(self.gates),
                       channels=chans, monitors=list(self.monitors))


def load_netlist(path) -> Netlist:
    """Read the netlist JSON schema (see README for the field reference)."""
    path = Path(path)
    with open(path) as fh:
        d = json.load(fh)
    base = path.parent
    pair_cache: dict[str, InvolutionPair] = {}

    def resolve_pair(spec: dict) -> InvolutionPair:
        if "pair_file" in spec:
            key = spec["pair_file"]
            if key not in pair_cache:
                with open(base / key) as fh:
                    pair_cache[key] = pair_from_dict(json.load(fh))
            return pair_cache[key]
        return pair_from_dict(spec["pair"])

    def resolve_bounds(spec: dict, pair: InvolutionPair) -> EtaBounds | None:
        if "eta_file" in spec:
            with open(base / spec["eta_file"]) as fh:
                params = EtaParams.from_dict(json.load(fh))
        elif "eta" in spec:
            params = EtaParams.from_dict(spec["eta"])
        else:
            return None
        return make_bounds(pair, params)

    channels = []
    for spec in d.get("channels", []):
        pair = resolve_pair(spec)
        bounds = resolve_bounds(spec, pair)
        shifter = None
        if "shifter" in spec:
            shifter = (float(spec["shifter"]["delta_plus_fs"]),
                       float(spec["shifter"]["delta_minus_fs"]))
        channels.append(make_channel(
            spec["id"], spec.get("kind", "eta" if bounds else "idm"),
            pair, bounds, spec["src"], spec["dst"], shifter=shifter,
            idle_since=float(spec.get("idle_since_fs", DEFAULT_IDLE_SINCE))))
    gates = [Gate(id=g["id"], function=g["function"],
                  inputs=tuple(g["inputs"]), output=g["output"])
             for g in d.get("gates", [])]
    signals = list(d["signals"].keys())
    initial = {s: int(v) for s, v in d["signals"].items()}
    return Netlist(signals=signals, initial=initial,
                   inputs=list(d.get("inputs", [])), gates=gates,
                   channels=channels, monitors=list(d.get("monitors", signals)))


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------

def write_trace_csv(path, transitions: list[Transition]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_fs", "signal", "polarity"])
        for t in transitions:
            w.writerow(t.as_row())


def read_trace_csv(path) -> list[Transition]:
    out = []
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        for row in r:
            out.append(Transition(time=float(row["time_fs"]),
                                  signal=row["signal"],
                                  polarity=row["polarity"]))
    return out


def pulses(trace: list[Transition]) -> list[tuple[float, float]]:
    """Complete (rise_time, fall_time) pairs of one signal's trace."""
    out = []
    rise = None
    for t in trace:
        if t.polarity == RISING:
            rise = t.time
        elif rise is not None:
            out.append((rise, t.time))
            rise = None
    return out


def validate_trace(trace: list[Transition]) -> None:
    """Strictly increasing times, alternating polarity, per signal."""
    last: dict[str, Transition] = {}
    for t in trace:
        prev = last.get(t.signal)
        if prev is not None:
            if t.time <= prev.time:
                raise ModelViolation(
                    f"trace not strictly increasing on {t.signal}: "
                    f"{prev.time} -> {t.time}")
            if t.polarity == prev.polarity:
                raise ModelViolation(
                    f"trace polarity not alternating on {t.signal} at {t.time}")
        last[t.signal] = t


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OscillationStats:
    mean_up: float
    max_up: float
    mean_period: float
    max_duty: float
    n_pulses: int


@dataclass
class SimResult:
    traces: dict[str, list[Transition]]
    status: str                       # quiescent | horizon | oscillating
    events_processed: int
    final_values: dict[str, int]
    oscillation: OscillationStats | None = None

    def flat(self) -> list[Transition]:
        all_t = [t for trace in self.traces.values() for t in trace]
        all_t.sort(key=lambda t: (t.time, t.signal))
        return all_t


class _PulseWatch:
    """Steady-oscillation detector on one signal."""

    def __init__(self, signal: str):
        self.signal = signal
        self.rise: float | None = None
        self.ups: list[float] = []
        self.rises: list[float] = []

    def feed(self, t: Transition) -> OscillationStats | None:
        if t.signal != self.signal:
            return None
        if t.polarity == RISING:
            self.rise = t.time
            self.rises.append(t.time)
            return None
        if self.rise is None:
            return None
        self.ups.append(t.time - self.rise)
        if len(self.ups) < OSC_WINDOW:
            return None
        window = self.ups[-OSC_WINDOW:]
        if max(window) - min(window) > OSC_TOLERANCE:
            return None
        return self.stats()

    def stats(self) -> OscillationStats | None:
        """Stats over the trailing window only; transients such as the input
        echo pulse are not part of the oscillation."""
        if len(self.ups) < 2 or len(self.rises) < 2:
            return None
        n = min(len(self.ups), OSC_WINDOW)
        first = len(self.ups) - n
        window = self.ups[first:]
        periods = []
        duties = []
        for i in range(first, len(self.ups)):
            if i + 1 < len(self.rises):
                p = self.rises[i + 1] - self.rises[i]
                periods.append(p)
                duties.append(self.ups[i] / p)
        return OscillationStats(
            mean_up=sum(window) / n, max_up=max(window),
            mean_period=sum(periods) / len(periods) if periods else 0.0,
            max_duty=max(duties) if duties else 0.0, n_pulses=len(self.ups))


def run(netlist: Netlist, stimulus: list[Transition],
        adversary: str | Adversary = "zero", horizon: float = 1e7, *,
        event_cap: int = DEFAULT_EVENT_CAP, stop_on_oscillation: bool = True,
        watch: str | None = None, max_pulses: int | None = None) -> SimResult:
    """Simulate until quiescence, the horizon, steady oscillation or a cap.

    ``max_pulses`` bounds the number of completed pulses observed on the
    watch signal (status "pulse_cap"); it keeps persistent but unsteady
    pulse trains from running to the horizon.  Deterministic for fixed
    (netlist, stimulus, adversary incl. seed).  Raises Diverged (with the
    partial result attached) when the event cap is hit.
    """
    net = netlist.fresh()
    adv = build_adversary(adversary).begin()
    values = {s: net.initial.get(s, 0) for s in net.signals}
    # settle gate outputs against initial values
    for g in net._gate_order:
        values[g.output] = g.eval(values)
    traces: dict[str, list[Transition]] = {s: [] for s in net.signals}
    by_src: dict[str, list[ChannelInstance]] = {}
    for c in net.channels:
        by_src.setdefault(c.src, []).append(c)
    gates_by_input: dict[str, list[Gate]] = {}
    for g in net.gates:
        for s in g.inputs:
            gates_by_input.setdefault(s, []).append(g)

    sidx = net._signal_index
    heap: list[tuple[float, int, int, int, _Event]] = []
    seq = 0

    def push(ev: _Event):
        nonlocal seq
        seq += 1
        pol = 0 if ev.polarity == FALLING else 1
        heapq.heappush(heap, (ev.time, sidx[ev.signal], pol, seq, ev))

    last_stim: dict[str, Transition] = {}
    for t in stimulus:
        if t.signal not in net.inputs:
            raise InvalidArgument(f"stimulus drives non-input signal {t.signal}")
        if not math.isfinite(t.time):
            raise InvalidArgument(f"non-finite stimulus time on {t.signal}")
        prev = last_stim.get(t.signal)
        if prev is None:
            expected = FALLING if net.initial.get(t.signal, 0) else RISING
        else:
            if t.time <= prev.time:
                raise InvalidArgument(f"stimulus on {t.signal} not sorted")
            expected = FALLING if prev.polarity == RISING else RISING
        if t.polarity != expected:
            raise InvalidArgument(
                f"stimulus on {t.signal} not alternating at t={t.time}")
        last_stim[t.signal] = t
        push(_Event(time=t.time, signal=t.signal, polarity=t.polarity))

    watch_signal = watch or (net.monitors[0] if net.monitors else None)
    watcher = _PulseWatch(watch_signal) if watch_signal else None

    events_processed = 0
    status = "quiescent"
    osc: OscillationStats | None = None

    def feed_channels(tr: Transition):
        for ch in by_src.get(tr.signal, []):
            T = ch.history(tr.time, tr.polarity)
            eta = adv.draw(ch.id, tr.polarity, T, ch.bounds) if ch.bounds else 0.0
            out = channel_step(ch, tr, eta)
            if out is not None:
                if out.time < tr.time:
                    raise CausalityError(
                        f"channel {ch.id}: output at {out.time} lies before the "
                        f"current time {tr.time} and nothing to cancel against")
                push(ch._unfired[-1])

    while heap:
        t_now = heap[0][0]
        if t_now > horizon:
            status = "horizon"
            break
        # settle one timestamp: apply all simultaneous events, then gates
        batch: list[_Event] = []
        while heap and heap[0][0] == t_now:
            ev = heapq.heappop(heap)[4]
            if not ev.valid:
                continue
            ev.fired = True
            batch.append(ev)
        if not batch:
            continue
        events_processed += len(batch)
        if events_processed > event_cap:
            partial = SimResult(traces=traces, status="diverged",
                                events_processed=events_processed,
                                final_values=values, oscillation=None)
            raise Diverged(f"event cap {event_cap} exceeded at t={t_now}", partial)

        changed: list[Transition] = []
        for ev in batch:
            new_val = 1 if ev.polarity == RISING else 0
            if values[ev.signal] == new_val:
                continue  # redundant edge (e.g. OR input while output held)
            values[ev.signal] = new_val
            changed.append(Transition(ev.time, ev.signal, ev.polarity))
        # gate settle in topological order; net value changes only
        for g in net._gate_order:
            new_val = g.eval(values)
            if new_val != values[g.output]:
                values[g.output] = new_val
                changed.append(Transition(
                    t_now, g.output, RISING if new_val else FALLING))
        pulse_capped = False
        for tr in changed:
            traces[tr.signal].append(tr)
            if watcher is not None:
                hit = watcher.feed(tr)
                if hit is not None and stop_on_oscillation:
                    osc = hit
                if max_pulses is not None and len(watcher.ups) >= max_pulses:
                    pulse_capped = True
            feed_channels(tr)
        if osc is not None:
            status = "oscillating"
            break
        if pulse_capped:
            status = "pulse_cap"
            break

    if osc is None and watcher is not None:
        osc = watcher.stats() if len(watcher.ups) >= OSC_WINDOW else None
    return SimResult(traces=traces, status=status,
                     events_processed=events_processed,
                     final_values=values, oscillation=osc)
