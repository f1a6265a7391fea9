"""Random generation of valid channel / envelope configurations.

Used by property tests and parameter sweeps.  Sampling is rejection-based:
draw a channel and envelope, then keep only combinations whose constraint
report passes (c1)-(c4) with some margin.  All draws flow from a seeded
``random.Random`` so configurations are reproducible.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .bounds import EtaBounds, EtaParams, check_constraints, make_bounds
from .delay import ExpTerm, InvolutionPair, ParametricDelay, derive_pair
from .errors import IdmError


@dataclass(frozen=True)
class Config:
    pair: InvolutionPair
    bounds: EtaBounds


def random_pair(rng: random.Random, *, max_terms: int = 2) -> InvolutionPair:
    """Random derived-mode involution pair with femtosecond-scale parameters."""
    n_terms = rng.randint(1, max_terms)
    asym = rng.uniform(1000.0, 6000.0)
    total_frac = rng.uniform(0.4, 0.85)
    fracs = [rng.uniform(0.2, 1.0) for _ in range(n_terms)]
    scale = total_frac / sum(fracs)
    terms = tuple(
        ExpTerm(amplitude=asym * f * scale,
                rate=1.0 / rng.uniform(200.0, 3000.0))
        for f in fracs)
    return derive_pair(ParametricDelay(asymptote=asym, terms=terms))


def random_config(seed: int, *, symmetric: bool = True,
                  max_tries: int = 200) -> Config:
    """Channel plus envelope satisfying all closure constraints.

    The default draws symmetric adversary parameters (equal min, inf and rho
    on both sides); set ``symmetric=False`` for independent draws.
    """
    rng = random.Random(seed)
    for _ in range(max_tries):
        try:
            pair = random_pair(rng)
            dm = pair.delta_min
            e_min_p = rng.uniform(0.02, 0.10) * dm
            e_min_m = e_min_p if symmetric else rng.uniform(0.02, 0.10) * dm
            budget = 0.85 * (pair.up_inf - dm)
            e_inf_p = rng.uniform(max(e_min_p, 0.05 * budget), 0.45 * budget)
            e_inf_m = e_inf_p if symmetric else rng.uniform(
                max(e_min_m, 0.05 * budget), 0.45 * budget)
            rho_p = rng.uniform(0.0, 0.35)
            rho_m = rho_p if symmetric else rng.uniform(0.0, 0.35)
            params = EtaParams(
                eta_plus_min=e_min_p, eta_minus_min=e_min_m,
                eta_plus_inf=e_inf_p, eta_minus_inf=e_inf_m,
                rho_plus=rho_p, rho_minus=rho_m)
            bounds = make_bounds(pair, params)
        except IdmError:
            continue
        report = check_constraints(pair, bounds)
        if report.all_hold and report.c4.lhs > 1.0 + 1e-3:
            return Config(pair=pair, bounds=bounds)
    raise IdmError(f"no valid configuration found for seed {seed}")
