"""Delay-function pairs for single-history channels.

A channel is described by two strictly increasing, concave delay functions:
``up`` for rising transitions and ``down`` for falling ones.  The pair is an
involution pair when ``-up(-down(T)) == T``; real fitted pairs satisfy this
only approximately, so a pair carries a mode:

* ``derived``  - only ``up`` is parametric; ``down`` is the exact involution
  partner ``down(T) = -up^{-1}(-T)`` computed by inversion.
* ``fitted``   - both functions are fitted independently; the involution
  residual is reported, never asserted.

The parametric family is a positive sum of saturating exponentials

    delta(T) = asymptote - sum_k  amplitude_k * exp(-rate_k * T)

with one term (``exp``) or several (``sumexp``).  All times are in
femtoseconds.  Evaluation clamps the argument at ``domain_floor``, which the
pair constructor sets to minus the partner's asymptote; this is where the
channel semantics stop distinguishing older history.

The minimum delay ``delta_min`` of a strictly causal pair is the unique
positive solution of ``up(-x) = x`` (equal to the root of ``down(-x) = x``
for exact involutions) and is cached on the pair.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

from .errors import InvalidArgument, ModelViolation, OutOfRange
from .numeric import bisect, central_diff, expand_bracket_down, log_grid, newton_polish

EPS_ROOT = 1e-6   # fs, root residual tolerance
EPS_INV = 1e-3    # fs, involution residual tolerance for derived pairs
GRID_PER_DECADE = 512


@dataclass(frozen=True)
class ExpTerm:
    amplitude: float  # fs, > 0
    rate: float       # 1/fs, > 0


@dataclass(frozen=True)
class ParametricDelay:
    """Saturating-exponential delay function.

    ``family`` is "exp" (one term) or "sumexp".  ``domain_floor`` is the
    argument clamp; evaluation uses max(T, domain_floor).
    """

    asymptote: float
    terms: tuple[ExpTerm, ...]
    domain_floor: float = -math.inf

    def __post_init__(self):
        if not math.isfinite(self.asymptote) or self.asymptote <= 0:
            raise InvalidArgument(f"asymptote must be finite positive, got {self.asymptote}")
        if not self.terms:
            raise InvalidArgument("at least one exponential term required")
        for t in self.terms:
            if t.amplitude <= 0 or t.rate <= 0:
                raise InvalidArgument(f"term amplitudes and rates must be positive: {t}")

    @property
    def family(self) -> str:
        return "exp" if len(self.terms) == 1 else "sumexp"

    def eval(self, T: float) -> float:
        if not math.isfinite(T):
            raise InvalidArgument(f"non-finite argument T={T}")
        x = T if T > self.domain_floor else self.domain_floor
        acc = self.asymptote
        for t in self.terms:
            try:
                acc -= t.amplitude * math.exp(-t.rate * x)
            except OverflowError:  # extreme negative argument: limit is -inf
                return -math.inf
        return acc

    __call__ = eval

    def derivative(self, T: float) -> float:
        if not math.isfinite(T):
            raise InvalidArgument(f"non-finite argument T={T}")
        x = T if T > self.domain_floor else self.domain_floor
        try:
            return sum(t.amplitude * t.rate * math.exp(-t.rate * x) for t in self.terms)
        except OverflowError:
            return math.inf

    def tau_max(self) -> float:
        """Largest time constant (1 / smallest rate)."""
        return 1.0 / min(t.rate for t in self.terms)

    def to_dict(self) -> dict:
        return {
            "asymptote_fs": self.asymptote,
            "terms": [{"amplitude_fs": t.amplitude, "rate_per_fs": t.rate} for t in self.terms],
        }

    @classmethod
    def from_dict(cls, d: dict, domain_floor: float = -math.inf) -> "ParametricDelay":
        terms = tuple(ExpTerm(t["amplitude_fs"], t["rate_per_fs"]) for t in d["terms"])
        return cls(asymptote=float(d["asymptote_fs"]), terms=terms, domain_floor=domain_floor)


@dataclass(frozen=True)
class InverseDelay:
    """Exact involution partner of a parametric function.

    Evaluates ``-base^{-1}(-T)`` by monotone inversion.  The asymptote is
    +inf (the partner of a saturating function grows without bound), and the
    function is only finite for T above ``-base.asymptote``; at or below the
    clamp it returns -inf, which downstream cancellation interprets as an
    out-of-order output that annihilates.
    """

    base: ParametricDelay
    domain_floor: float = -math.inf

    @property
    def asymptote(self) -> float:
        return math.inf

    @property
    def family(self) -> str:
        return self.base.family

    def eval(self, T: float) -> float:
        if not math.isfinite(T):
            raise InvalidArgument(f"non-finite argument T={T}")
        x = T if T > self.domain_floor else self.domain_floor
        if x <= -self.base.asymptote:
            return -math.inf
        if len(self.base.terms) == 1:
            # closed form: base(y) = d - A e^{-ry};  base^{-1}(v) = -ln((d-v)/A)/r
            t = self.base.terms[0]
            return math.log((self.base.asymptote + x) / t.amplitude) / t.rate
        return -invert(self.base, -x)

    __call__ = eval

    def derivative(self, T: float) -> float:
        """d/dT [-base^{-1}(-T)] = 1 / base'(base^{-1}(-T))."""
        if not math.isfinite(T):
            raise InvalidArgument(f"non-finite argument T={T}")
        x = T if T > self.domain_floor else self.domain_floor
        if x <= -self.base.asymptote:
            return math.inf
        return 1.0 / self.base.derivative(-self.eval(x))

    def tau_max(self) -> float:
        return self.base.tau_max()


@dataclass(frozen=True)
class ShiftedDelay:
    """A delay function composed with pure time shifts.

    eval(T) = outer + base(max(T, domain_floor) + inner).

    Composable channels are characterized this way: the full channel applies
    the same shift outside and inside (outer == inner), while the
    tail-of-predecessor / head-of-successor composition crosses the shifts
    (rising uses the falling shift inside and vice versa), which restores
    the involution property.
    """

    base: "ParametricDelay | InverseDelay"
    outer: float
    inner: float
    domain_floor: float = -math.inf

    @property
    def asymptote(self) -> float:
        return self.outer + self.base.asymptote

    @property
    def family(self) -> str:
        return self.base.family

    def eval(self, T: float) -> float:
        if not math.isfinite(T):
            raise InvalidArgument(f"non-finite argument T={T}")
        x = T if T > self.domain_floor else self.domain_floor
        return self.outer + self.base.eval(x + self.inner)

    __call__ = eval

    def derivative(self, T: float) -> float:
        if not math.isfinite(T):
            raise InvalidArgument(f"non-finite argument T={T}")
        x = T if T > self.domain_floor else self.domain_floor
        return self.base.derivative(x + self.inner)

    def tau_max(self) -> float:
        return self.base.tau_max()


DelayFunction = ParametricDelay | InverseDelay | ShiftedDelay


def evaluate(fn: DelayFunction, T: float) -> float:
    """Delay value at the clamped argument max(T, domain_floor)."""
    return fn.eval(T)


def derivative(fn: DelayFunction, T: float) -> float:
    """Analytic slope of the delay function; positive and decreasing in T."""
    return fn.derivative(T)


def invert(fn: ParametricDelay, y: float, *, eps_root: float = EPS_ROOT) -> float:
    """Solve fn(T) = y for T.

    y must lie strictly below the asymptote (the asymptote itself is never
    attained).  Monotone bisection with a Newton polish.
    """
    if not math.isfinite(y):
        raise InvalidArgument(f"non-finite target y={y}")
    if y >= fn.asymptote:
        raise OutOfRange(f"y={y} not below asymptote {fn.asymptote}")

    def g(T):
        acc = fn.asymptote - y
        for t in fn.terms:
            acc -= t.amplitude * math.exp(-t.rate * T)
        return acc

    hi = 1.0
    while g(hi) <= 0:
        hi *= 2.0
        if hi > 1e30:
            raise OutOfRange(f"y={y} unreachable")
    lo = expand_bracket_down(g, hi, start_step=hi)
    x = bisect(g, lo, hi, xtol=eps_root * 1e-3)
    return newton_polish(g, fn.derivative, x, lo, hi, tol=eps_root * 1e-6)


def validate_delay_function(fn: ParametricDelay, *, require_causal: bool = True) -> None:
    """Check the family invariants: increasing, concave, strictly causal.

    For this parametric family the first two hold whenever all amplitudes
    and rates are positive (already enforced); causality is delta(0) > 0.
    """
    if require_causal and fn.eval(max(0.0, fn.domain_floor)) <= 0:
        raise ModelViolation(f"not strictly causal: delta(0) = {fn.eval(0.0)} <= 0")


@dataclass(frozen=True)
class InvolutionPair:
    """An (up, down) delay-function pair with cached minimum delay.

    ``mode`` records how the partner was obtained ("derived" = exact
    involution by inversion, "fitted" = both functions fitted).
    ``involution_residual`` is the max grid residual of -up(-down(T)) - T;
    it is asserted below EPS_INV only for derived pairs.
    """

    up: DelayFunction
    down: DelayFunction
    mode: str
    delta_min: float
    involution_residual: float

    @property
    def up_inf(self) -> float:
        return self.up.asymptote

    @property
    def down_inf(self) -> float:
        return self.down.asymptote


def solve_delta_min(up: DelayFunction, down: DelayFunction | None = None, *,
                    eps_root: float = EPS_ROOT, strict_down: bool = False) -> float:
    """Unique positive root of up(-x) = x.

    The root is bracketed on [0, up(0)]: h(x) = up(-x) - x is strictly
    decreasing, positive at 0 for a causal function and negative at up(0).
    When ``down`` is given, the twin equality down(-x) = x is checked; it is
    enforced within eps_root only if ``strict_down`` (exact involutions).
    """
    up0 = up.eval(0.0)
    if up0 <= 0:
        raise ModelViolation(f"channel not strictly causal: up(0) = {up0} <= 0")

    def h(x):
        return up.eval(-x) - x

    hi = up0
    if h(hi) > 0:  # numerically flat tail; widen until the sign flips
        while h(hi) > 0:
            hi *= 2.0
            if hi > 1e30:
                raise ModelViolation("no sign change: up(-x) - x never negative")
    x = bisect(h, 0.0, hi, xtol=1e-15)
    x = newton_polish(h, lambda v: -up.derivative(-v) - 1.0, x, 0.0, hi, tol=1e-12)
    if abs(h(x)) > eps_root:
        raise ModelViolation(f"root residual {h(x)} exceeds {eps_root}")
    if down is not None:
        resid_down = down.eval(-x) - x
        if strict_down and abs(resid_down) > eps_root:
            raise ModelViolation(
                f"down(-x) = x violated at x={x}: residual {resid_down}")
    return x


def check_grid(pair: InvolutionPair, *, per_decade: int = GRID_PER_DECADE) -> list[float]:
    """Standard test grid: from just above -up_inf out to 100 tau_max."""
    inf = pair.up.asymptote
    if not math.isfinite(inf):
        inf = pair.down.asymptote
    tau = max(pair.up.tau_max(), pair.down.tau_max())
    lo = -inf + 1e-3 * inf
    hi = 100.0 * tau
    return log_grid(lo, hi, per_decade=per_decade)


def involution_residual(pair: InvolutionPair, grid: list[float] | None = None) -> float:
    """max_T | -up(-down(T)) - T | over the grid.

    Points where down(T) reaches the up clamp are skipped (the identity is
    only defined where the composition stays finite).
    """
    if grid is None:
        grid = check_grid(pair)
    worst = 0.0
    for T in grid:
        d = pair.down.eval(T)
        if not math.isfinite(d):
            continue
        if -d <= getattr(pair.up, "domain_floor", -math.inf):
            continue
        r = abs(-pair.up.eval(-d) - T)
        if r > worst:
            worst = r
    return worst


def _with_floors(up, down):
    """Clamp each function's argument at minus the partner's asymptote."""
    up_floor = -down.asymptote
    down_floor = -up.asymptote
    up = replace(up, domain_floor=up_floor)
    down = replace(down, domain_floor=down_floor)
    return up, down


def derive_pair(up: ParametricDelay) -> InvolutionPair:
    """Build an exact involution pair from a parametric up function."""
    validate_delay_function(up)
    down = InverseDelay(base=up)
    up2, down2 = _with_floors(up, down)
    dm = solve_delta_min(up2, down2, strict_down=True)
    pair = InvolutionPair(up=up2, down=down2, mode="derived", delta_min=dm,
                          involution_residual=0.0)
    resid = involution_residual(pair)
    if resid > EPS_INV:
        raise ModelViolation(f"derived pair involution residual {resid} > {EPS_INV}")
    return replace(pair, involution_residual=resid)


def fitted_pair(up: ParametricDelay, down: ParametricDelay) -> InvolutionPair:
    """Build a pair from two independently fitted functions.

    The involution residual is recorded for reporting; delta_min comes from
    the up equation (the down twin is informative only).
    """
    validate_delay_function(up)
    validate_delay_function(down)
    up2, down2 = _with_floors(up, down)
    dm = solve_delta_min(up2, down2, strict_down=False)
    pair = InvolutionPair(up=up2, down=down2, mode="fitted", delta_min=dm,
                          involution_residual=0.0)
    return replace(pair, involution_residual=involution_residual(pair))


def symmetric_pair(fn: ParametricDelay) -> InvolutionPair:
    """Pair with identical up and down functions (fitted mode)."""
    return fitted_pair(fn, fn)


def shifted_pair(base: InvolutionPair, delta_plus: float,
                 delta_minus: float) -> InvolutionPair:
    """Effective delay pair of a shifted (composable) channel.

    up(T) = delta_plus + base_up(T + delta_plus) and the falling mirror.
    Not an involution unless the shifts coincide; mode records "shifted"
    and the residual is reported only.
    """
    up = ShiftedDelay(base=base.up, outer=delta_plus, inner=delta_plus)
    down = ShiftedDelay(base=base.down, outer=delta_minus, inner=delta_minus)
    up_floor = -down.asymptote
    down_floor = -up.asymptote
    up = replace(up, domain_floor=up_floor)
    down = replace(down, domain_floor=down_floor)
    if up.eval(0.0) <= 0 or down.eval(0.0) <= 0:
        raise ModelViolation(
            f"shifts ({delta_plus}, {delta_minus}) break strict causality")
    dm = solve_delta_min(up, down, strict_down=False)
    pair = InvolutionPair(up=up, down=down, mode="shifted", delta_min=dm,
                          involution_residual=0.0)
    return replace(pair, involution_residual=involution_residual(pair))


def compose_tail_head(base: InvolutionPair, delta_plus: float,
                      delta_minus: float) -> InvolutionPair:
    """Involution pair formed by a channel tail followed by the next
    channel's shifter-and-cancellation head.

    The shifts cross sides (a rising output follows a falling one, so its
    history picks up the falling shift), which makes the composition a
    regular involution pair again:

        up(T)   = delta_plus  + base_up(T + delta_minus)
        down(T) = delta_minus + base_down(T + delta_plus)
    """
    up = ShiftedDelay(base=base.up, outer=delta_plus, inner=delta_minus)
    down = ShiftedDelay(base=base.down, outer=delta_minus, inner=delta_plus)
    up = replace(up, domain_floor=-down.asymptote)
    down = replace(down, domain_floor=-up.asymptote)
    if up.eval(0.0) <= 0 or down.eval(0.0) <= 0:
        raise ModelViolation(
            f"shifts ({delta_plus}, {delta_minus}) break strict causality")
    dm = solve_delta_min(up, down, strict_down=base.mode == "derived")
    pair = InvolutionPair(up=up, down=down, mode="composite", delta_min=dm,
                          involution_residual=0.0)
    return replace(pair, involution_residual=involution_residual(pair))


# ---------------------------------------------------------------------------
# JSON channel-parameter schema
#
# { "family": "exp"|"sumexp", "mode": "derived"|"fitted",
#   "up":   {"asymptote_fs": ..., "terms": [{"amplitude_fs":..., "rate_per_fs":...}, ...]},
#   "down": same as up, or {"inverse_of_up": true} in derived mode,
#   "delta_min_fs": number }
# ---------------------------------------------------------------------------

def pair_to_dict(pair: InvolutionPair) -> dict:
    if pair.mode == "derived":
        down_d: dict = {"inverse_of_up": True}
    else:
        down_d = pair.down.to_dict()
    up_fn = pair.up
    return {
        "family": up_fn.family,
        "mode": pair.mode,
        "up": up_fn.to_dict(),
        "down": down_d,
        "delta_min_fs": pair.delta_min,
    }


def pair_from_dict(d: dict) -> InvolutionPair:
    up = ParametricDelay.from_dict(d["up"])
    if d["mode"] == "derived":
        pair = derive_pair(up)
    elif d["mode"] == "fitted":
        pair = fitted_pair(up, ParametricDelay.from_dict(d["down"]))
    else:
        raise InvalidArgument(f"unknown pair mode {d['mode']!r}")
    stored = d.get("delta_min_fs")
    if stored is not None and abs(stored - pair.delta_min) > 1e-3:
        raise InvalidArgument(
            f"stored delta_min_fs {stored} disagrees with recomputed {pair.delta_min}")
    return pair


def save_pair(pair: InvolutionPair, path) -> None:
    with open(path, "w") as fh:
        json.dump(pair_to_dict(pair), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_pair(path) -> InvolutionPair:
    with open(path) as fh:
        return pair_from_dict(json.load(fh))
