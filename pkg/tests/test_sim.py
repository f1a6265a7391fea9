"""Engine tests: channel stepping, cancellation, gates, adversaries.

The two-transition expected values are frozen from a standalone
transcription of the stepping rule (same 2 ps exp channel as elsewhere).
"""

import random

import pytest

from idmkit.bounds import EtaBounds, EtaParams, eta_minus, eta_plus, make_bounds
from idmkit.delay import ExpTerm, ParametricDelay, derive_pair
from idmkit.errors import BoundViolation, InvalidArgument
from idmkit.sim import (
    FALLING,
    RISING,
    AntiCriticalAdversary,
    CriticalAdversary,
    Gate,
    Netlist,
    ScriptedAdversary,
    Transition,
    UniformRandomAdversary,
    ZeroAdversary,
    build_adversary,
    channel_step,
    make_channel,
    make_cidm_channel,
    pulses,
    read_trace_csv,
    run,
    validate_trace,
    write_trace_csv,
)

EXP = ParametricDelay(asymptote=2000.0, terms=(ExpTerm(1500.0, 1e-3),))


@pytest.fixture(scope="module")
def pair():
    return derive_pair(EXP)


@pytest.fixture(scope="module")
def bounds(pair):
    return make_bounds(pair, EtaParams(eta_plus_min=20.0, eta_minus_min=15.0,
                                       eta_plus_inf=300.0, eta_minus_inf=250.0,
                                       rho_plus=0.2, rho_minus=0.2))


def fresh_channel(pair, bounds=None, kind=None):
    kind = kind or ("eta" if bounds else "idm")
    return make_channel("c0", kind, pair, bounds, "a", "b")


def test_first_transition_asymptotic_delay(pair):
    ch = fresh_channel(pair)
    out = channel_step(ch, Transition(0.0, "a", RISING), 0.0)
    assert out is not None
    assert out.time == pytest.approx(2000.0, abs=1e-9)


def test_two_transition_cancel_frozen(pair):
    ch = fresh_channel(pair)
    first = channel_step(ch, Transition(0.0, "a", RISING), 0.0)
    assert first.time == pytest.approx(2000.0, abs=1e-9)
    # frozen: candidate at -1309.4379124341003 <= 2000 annihilates both
    second = channel_step(ch, Transition(300.0, "a", FALLING), 0.0)
    assert second is None
    assert ch.outputs_emitted == 1  # the rise was emitted, then retracted


def test_two_transition_keep_frozen(pair):
    ch = fresh_channel(pair)
    channel_step(ch, Transition(0.0, "a", RISING), 0.0)
    out = channel_step(ch, Transition(2600.0, "a", FALLING), 0.0)
    assert out is not None
    assert out.time == pytest.approx(3150.046336919272, abs=1e-9)


def test_history_advances_even_after_cancellation(pair):
    ch = fresh_channel(pair)
    channel_step(ch, Transition(0.0, "a", RISING), 0.0)
    channel_step(ch, Transition(300.0, "a", FALLING), 0.0)
    # the canceled fall still sets the history for the next step
    assert ch.last_output_time == pytest.approx(-1309.4379124341003, abs=1e-9)


def test_inputs_must_be_ordered(pair):
    ch = fresh_channel(pair)
    channel_step(ch, Transition(100.0, "a", RISING), 0.0)
    with pytest.raises(InvalidArgument):
        channel_step(ch, Transition(50.0, "a", FALLING), 0.0)


def test_eta_bound_enforced(pair, bounds):
    ch = fresh_channel(pair, bounds)
    with pytest.raises(BoundViolation):
        channel_step(ch, Transition(0.0, "a", RISING), bounds.eta_plus_inf + 1.0)
    ch = fresh_channel(pair, bounds)
    out = channel_step(ch, Transition(0.0, "a", RISING), bounds.eta_plus_inf)
    assert out.time == pytest.approx(2000.0 + bounds.eta_plus_inf, abs=1e-9)


def test_plain_channel_rejects_eta(pair):
    ch = fresh_channel(pair)
    with pytest.raises(BoundViolation):
        channel_step(ch, Transition(0.0, "a", RISING), 5.0)


# ---------------------------------------------------------------------------
# netlists
# ---------------------------------------------------------------------------

def chain_netlist(pair, bounds=None, n=2, gate="buffer"):
    """s0 -> [channel] -> s1 -> gate -> s2 -> [channel] -> s3 ..."""
    signals = {}
    gates = []
    channels = []
    kind = "eta" if bounds else "idm"
    for i in range(n):
        signals.setdefault(f"s{2*i}", 0)
        signals[f"s{2*i+1}"] = 0
        channels.append(make_channel(f"ch{i}", kind, pair, bounds,
                                     f"s{2*i}", f"s{2*i+1}"))
        if i < n - 1:
            signals[f"s{2*i+2}"] = 0
            gates.append(Gate(id=f"g{i}", function=gate,
                              inputs=(f"s{2*i+1}",), output=f"s{2*i+2}"))
    return Netlist(signals=list(signals), initial=signals, inputs=["s0"],
                   gates=gates, channels=channels,
                   monitors=[f"s{2*n-1}"])


def or_loop_netlist(pair, bounds):
    """OR gate with a feedback channel, plus a monitored buffer path."""
    signals = {"i1": 0, "i2": 0, "o_or": 0}
    gates = [Gate(id="or1", function="or", inputs=("i1", "i2"), output="o_or")]
    channels = [make_channel("c_f", "eta", pair, bounds, "o_or", "i2")]
    return Netlist(signals=list(signals), initial=signals, inputs=["i1"],
                   gates=gates, channels=channels, monitors=["o_or"])


def pulse(signal, start, width):
    return [Transition(start, signal, RISING), Transition(start + width, signal, FALLING)]


def test_long_pulse_locks_loop(pair, bounds):
    # input pulse longer than the worst-case first feedback arrival:
    # the OR output rises once and never falls
    net = or_loop_netlist(pair, bounds)
    d0 = pair.up_inf + bounds.eta_plus_inf + 100.0
    res = run(net, pulse("i1", 0.0, d0), adversary="critical", horizon=1e6)
    o_or = res.traces["o_or"]
    assert [t.polarity for t in o_or] == [RISING]
    assert o_or[0].time == 0.0
    assert res.final_values["o_or"] == 1
    assert res.status == "quiescent"


def test_short_pulse_passes_loop_untouched(pair, bounds):
    # short pulses cannot survive the feedback: the loop output contains
    # exactly the input pulse under every strategy
    net = or_loop_netlist(pair, bounds)
    d0 = pair.up_inf - pair.delta_min - bounds.eta_plus_inf - bounds.eta_minus_inf - 50.0
    assert d0 > 0
    for adv in ("zero", "critical", "anticritical", "random:3"):
        res = run(net, pulse("i1", 0.0, d0), adversary=adv, horizon=1e6)
        o_or = res.traces["o_or"]
        assert [(t.time, t.polarity) for t in o_or] == [(0.0, RISING), (d0, FALLING)]
        assert res.status == "quiescent"


def test_zero_adversary_equals_plain_idm(pair, bounds):
    # eta == 0 degenerates the adversarial channel to the plain one
    rng = random.Random(1)
    for _ in range(20):
        width = rng.uniform(50.0, 4000.0)
        gap = rng.uniform(100.0, 4000.0)
        stim = (pulse("s0", 0.0, width)
                + pulse("s0", width + gap, rng.uniform(50.0, 2500.0)))
        net_eta = chain_netlist(pair, bounds, n=2)
        net_idm = chain_netlist(pair, None, n=2)
        r1 = run(net_eta, stim, adversary="zero", horizon=1e7)
        r2 = run(net_idm, stim, adversary="zero", horizon=1e7)
        assert r1.traces == r2.traces


def test_determinism_byte_for_byte(pair, bounds, tmp_path):
    net = or_loop_netlist(pair, bounds)
    stim = pulse("i1", 0.0, 1500.0)
    a = run(net, stim, adversary="random:42", horizon=5e5)
    b = run(net, stim, adversary="random:42", horizon=5e5)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trace_csv(pa, a.flat())
    write_trace_csv(pb, b.flat())
    assert pa.read_bytes() == pb.read_bytes()
    c = run(net, stim, adversary="random:43", horizon=5e5)
    assert a.traces != c.traces  # different seed actually changes something


def test_trace_wellformed_and_conservation(pair, bounds):
    rng = random.Random(5)
    for trial in range(30):
        net = chain_netlist(pair, bounds, n=2)
        t, stim, val = 0.0, [], 0
        for _ in range(rng.randint(1, 8)):
            t += rng.uniform(30.0, 2500.0)
            val ^= 1
            stim.append(Transition(t, "s0", RISING if val else FALLING))
        res = run(net, stim, adversary=f"random:{trial}", horizon=1e7)
        validate_trace(res.flat())
        for ch in net.channels:
            pass  # net was deep-copied inside run; counters live on the copy


def test_bound_enforcement_many_seeds(pair, bounds):
    # uniform draws stay inside the envelope by construction; none of these
    # runs may raise BoundViolation
    net = or_loop_netlist(pair, bounds)
    stim = pulse("i1", 0.0, 1500.0)
    for seed in range(200):
        run(net, stim, adversary=f"random:{seed}", horizon=2e5)


def test_adversary_draw_values(pair, bounds):
    crit = CriticalAdversary()
    anti = AntiCriticalAdversary()
    for T in (-500.0, -bounds.delta, -10.0, 0.0, 77.0):
        assert crit.draw("c", RISING, T, bounds) == eta_plus(bounds, T)
        assert crit.draw("c", FALLING, T, bounds) == -eta_minus(bounds, T)
        assert anti.draw("c", RISING, T, bounds) == -eta_minus(bounds, T)
        assert anti.draw("c", FALLING, T, bounds) == eta_plus(bounds, T)
    rnd = UniformRandomAdversary(9).begin()
    for T in (-500.0, -10.0, 20.0):
        eta = rnd.draw("c", RISING, T, bounds)
        assert -eta_minus(bounds, T) <= eta <= eta_plus(bounds, T)


def test_scripted_adversary_consumes_in_order(pair, bounds):
    adv = ScriptedAdversary({"c0": [5.0, -3.0]}).begin()
    assert adv.draw("c0", RISING, 100.0, bounds) == 5.0
    assert adv.draw("c0", FALLING, 100.0, bounds) == -3.0
    assert adv.draw("c0", RISING, 100.0, bounds) == 0.0  # exhausted
    assert adv.draw("other", RISING, 100.0, bounds) == 0.0


def test_build_adversary_specs():
    assert isinstance(build_adversary("zero"), ZeroAdversary)
    assert isinstance(build_adversary("critical"), CriticalAdversary)
    assert isinstance(build_adversary("anticritical"), AntiCriticalAdversary)
    assert build_adversary("random:17").seed == 17
    with pytest.raises(InvalidArgument):
        build_adversary("nonsense")


# ---------------------------------------------------------------------------
# composable channels
# ---------------------------------------------------------------------------

def test_cidm_zero_shift_identical(pair, bounds):
    plain = fresh_channel(pair, bounds)
    cidm = make_cidm_channel("c1", pair, 0.0, 0.0, bounds, "a", "b")
    for t, pol in ((0.0, RISING), (2600.0, FALLING), (3500.0, RISING)):
        o1 = channel_step(plain, Transition(t, "a", pol), 0.0)
        o2 = channel_step(cidm, Transition(t, "a", pol), 0.0)
        assert (o1 is None) == (o2 is None)
        if o1 is not None:
            assert o1.time == o2.time


def test_cidm_effective_delays(pair, bounds):
    dp, dm = 60.0, 25.0
    ch = make_cidm_channel("c1", pair, dp, dm, bounds, "a", "b")
    for T in (-150.0, 0.0, 40.0, 900.0):
        assert ch.pair.up.eval(T) == pytest.approx(dp + pair.up.eval(T + dp), abs=1e-12)
        assert ch.pair.down.eval(T) == pytest.approx(dm + pair.down.eval(T + dm), abs=1e-12)


def test_cidm_causality_guard(pair, bounds):
    from idmkit.errors import ModelViolation
    with pytest.raises(ModelViolation):
        make_cidm_channel("c1", pair, 0.0, -600.0, bounds, "a", "b")


def test_inverter_gate(pair):
    signals = {"s0": 0, "s1": 0, "s2": 1}
    net = Netlist(signals=list(signals), initial=signals, inputs=["s0"],
                  gates=[Gate(id="inv", function="inverter",
                              inputs=("s1",), output="s2")],
                  channels=[make_channel("ch0", "idm", pair, None, "s0", "s1")],
                  monitors=["s2"])
    res = run(net, pulse("s0", 0.0, 3000.0), adversary="zero", horizon=1e6)
    assert [t.polarity for t in res.traces["s2"]] == [FALLING, RISING]


def test_netlist_validation_errors(pair):
    with pytest.raises(InvalidArgument):
        Netlist(signals=["a", "b"], initial={"a": 0, "b": 1}, inputs=["a"],
                gates=[], channels=[make_channel("c", "idm", pair, None, "a", "b")],
                monitors=[])  # initial mismatch across a channel
    with pytest.raises(InvalidArgument):
        Netlist(signals=["a"], initial={"a": 0}, inputs=["a"],
                gates=[Gate(id="g", function="or", inputs=("a", "z"), output="a")],
                channels=[], monitors=[])  # undeclared signal


def test_trace_csv_round_trip(tmp_path, pair, bounds):
    net = or_loop_netlist(pair, bounds)
    res = run(net, pulse("i1", 0.0, 1500.0), adversary="random:7", horizon=5e5)
    path = tmp_path / "t.csv"
    write_trace_csv(path, res.flat())
    back = read_trace_csv(path)
    assert back == res.flat()


def test_pulses_extraction():
    trace = [Transition(1.0, "x", RISING), Transition(3.0, "x", FALLING),
             Transition(7.0, "x", RISING), Transition(11.0, "x", FALLING),
             Transition(20.0, "x", RISING)]
    assert pulses(trace) == [(1.0, 3.0), (7.0, 11.0)]
