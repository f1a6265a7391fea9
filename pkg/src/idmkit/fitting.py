"""Least-squares fitting of delay functions to measured (T, delay) samples.

The target family is the package's saturating-exponential form

    delta(T) = c0 - sum_k A_k * exp(-r_k * T),      A_k >= 0, r_k > 0,

which is monotone and concave for any admissible parameters, so the shape
constraints are enforced by construction.  The solve is separable: for
fixed rates the amplitudes and asymptote come from a nonnegative linear
least squares, so the outer search only explores rate vectors (seeded from
a log grid over the sample span, then refined with a simplex).
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .delay import ExpTerm, InvolutionPair, ParametricDelay, fitted_pair
from .errors import FitFailed, InvalidArgument

RISING = "R"
FALLING = "F"

CONDITION_LIMIT = 1e13


@dataclass
class DelaySampleSet:
    """Measured (T, delay) pairs per transition edge.

    ``source_label`` names the operating condition the samples came from
    (e.g. "default", "ss", "+10%vdd", "20a", "85C").
    """

    rising: list[tuple[float, float]] = field(default_factory=list)
    falling: list[tuple[float, float]] = field(default_factory=list)
    source_label: str = "default"

    def __post_init__(self):
        self.rising = _clean_edge(self.rising, "rising")
        self.falling = _clean_edge(self.falling, "falling")

    def edge(self, edge: str) -> list[tuple[float, float]]:
        return self.rising if edge == RISING else self.falling

    def __len__(self) -> int:
        return len(self.rising) + len(self.falling)


def _clean_edge(samples, name):
    for T, d in samples:
        if not (math.isfinite(T) and math.isfinite(d)):
            raise InvalidArgument(f"{name} sample not finite: ({T}, {d})")
    out = sorted(dict(samples).items())  # dedup on T, keep last, sort
    return [(float(T), float(d)) for T, d in out]


def save_samples_csv(path, samples: DelaySampleSet) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T_fs", "delta_fs", "edge"])
        for T, d in samples.rising:
            w.writerow([repr(T), repr(d), RISING])
        for T, d in samples.falling:
            w.writerow([repr(T), repr(d), FALLING])


def load_samples_csv(path, source_label: str | None = None) -> DelaySampleSet:
    rising, falling = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            item = (float(row["T_fs"]), float(row["delta_fs"]))
            (rising if row["edge"] == RISING else falling).append(item)
    label = source_label if source_label is not None else "default"
    return DelaySampleSet(rising=rising, falling=falling, source_label=label)


@dataclass(frozen=True)
class FitResult:
    pair: InvolutionPair
    rms_rising: float
    rms_falling: float
    condition: float

    @property
    def involution_residual(self) -> float:
        return self.pair.involution_residual


def _nnls_amplitudes(T: np.ndarray, y: np.ndarray, rates: np.ndarray):
    """Given rates, solve min ||c0 - sum A_k e^{-r_k T} - y|| with A, c0 >= 0.

    Columns are normalized before the nonnegative solve (the exponentials
    span wildly different magnitudes once negative-T samples are present).
    Returns (c0, amplitudes, rms, condition).
    """
    exponents = np.clip(-np.outer(T, rates), -700.0, 700.0)
    cols = [np.ones_like(T)] + [-np.exp(exponents[:, k])
                                for k in range(len(rates))]
    design = np.column_stack(cols)
    scale = np.max(np.abs(design), axis=0)  # max-abs: immune to overflow
    scale[scale == 0] = 1.0
    normed = design / scale
    cond = np.linalg.cond(normed)
    try:
        coef, _ = optimize.nnls(normed, y, maxiter=10 * normed.shape[1] * 30)
    except Exception:
        return 0.0, np.zeros(len(rates)), math.inf, math.inf
    coef = coef / scale
    resid = design @ coef - y
    rms = float(np.sqrt(np.mean(resid ** 2)))
    return float(coef[0]), coef[1:], rms, cond


def _fit_edge(samples: list[tuple[float, float]], n_terms: int):
    T = np.array([s[0] for s in samples])
    y = np.array([s[1] for s in samples])
    t_pos = T[T > 0]
    if len(t_pos) < 2:
        raise FitFailed("need positive-T samples to seed rates",
                        {"n_samples": len(samples)})
    lo, hi = float(t_pos.min()), float(t_pos.max())
    if hi / lo < 100.0:
        raise FitFailed("samples span fewer than two decades of T",
                        {"span_ratio": hi / lo})
    # fastest useful rate: resolve the shortest history scale present, but
    # keep exponents at the most negative T representable
    t_neg = float(-T.min()) if T.min() < 0 else 0.0
    r_cap = min(20.0 / max(lo, 1e-3), 500.0 / max(t_neg, 1e-3))
    seed_rates = np.geomspace(0.05 / hi, max(r_cap, 1.0 / hi), 24)

    best = None
    if n_terms <= 2:
        combos = itertools.combinations(range(len(seed_rates)), n_terms)
        for idx in combos:
            rates = seed_rates[list(idx)]
            c0, amps, rms, cond = _nnls_amplitudes(T, y, rates)
            if best is None or rms < best[3]:
                best = (rates, c0, amps, rms, cond)
    else:
        # greedy: extend the best smaller set one rate at a time
        chosen: list[float] = []
        for _ in range(n_terms):
            round_best = None
            for r in seed_rates:
                rates = np.array(chosen + [r])
                c0, amps, rms, cond = _nnls_amplitudes(T, y, rates)
                if round_best is None or rms < round_best[3]:
                    round_best = (rates, c0, amps, rms, cond)
            chosen = list(round_best[0])
            best = round_best

    def objective(log_rates):
        rates = np.exp(log_rates)
        _, _, rms, _ = _nnls_amplitudes(T, y, rates)
        return rms

    res = optimize.minimize(objective, np.log(best[0]), method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-12,
                                     "maxiter": 4000})
    rates = np.exp(res.x)
    c0, amps, rms, cond = _nnls_amplitudes(T, y, rates)
    if cond > CONDITION_LIMIT:
        raise FitFailed("ill-conditioned design matrix",
                        {"condition": cond, "rates": list(rates)})
    keep = amps > 0
    if not keep.any():
        raise FitFailed("all amplitudes vanished", {"c0": c0})
    terms = tuple(ExpTerm(float(a), float(r))
                  for a, r in zip(amps[keep], rates[keep]))
    return ParametricDelay(asymptote=c0, terms=terms), rms, cond


def fit_sumexp(samples: DelaySampleSet, terms: int = 2) -> FitResult:
    """Fit both edges and assemble a fitted-mode pair.

    Requires at least 4 * terms samples per edge, spanning two decades of
    positive T.  The involution residual of the result is reported on the
    pair, never asserted.
    """
    if terms < 1:
        raise InvalidArgument("need at least one exponential term")
    for name, edge in (("rising", samples.rising), ("falling", samples.falling)):
        if len(edge) < 4 * terms:
            raise FitFailed(f"too few {name} samples for {terms} terms",
                            {"n": len(edge), "needed": 4 * terms})
    up, rms_up, cond_up = _fit_edge(samples.rising, terms)
    down, rms_down, cond_down = _fit_edge(samples.falling, terms)
    try:
        pair = fitted_pair(up, down)
    except Exception as exc:
        raise FitFailed(f"fitted functions do not form a valid pair: {exc}",
                        {"up": up.to_dict(), "down": down.to_dict()}) from exc
    return FitResult(pair=pair, rms_rising=rms_up, rms_falling=rms_down,
                     condition=max(cond_up, cond_down))


def sample_pair(pair: InvolutionPair, t_grid: list[float], *,
                noise: float = 0.0, seed: int = 0,
                source_label: str = "default") -> DelaySampleSet:
    """Synthesize a sample set by evaluating a pair on a grid.

    Optional uniform noise of the given amplitude is added independently
    per sample (seeded).
    """
    import random

    rng = random.Random(seed)
    rising, falling = [], []
    for T in t_grid:
        eps_u = rng.uniform(-noise, noise) if noise else 0.0
        eps_d = rng.uniform(-noise, noise) if noise else 0.0
        rising.append((T, pair.up.eval(T) + eps_u))
        falling.append((T, pair.down.eval(T) + eps_d))
    return DelaySampleSet(rising=rising, falling=falling,
                          source_label=source_label)
