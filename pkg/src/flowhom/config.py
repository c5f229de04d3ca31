"""Tolerance profiles and deterministic random streams.

All randomness in the engine flows from one user seed through named
sub-streams, so identical (config, seed) pairs reproduce byte-identical
reports.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    """Bundle of numeric tolerances shared across modules."""

    on_manifold: float = 1e-8        # max |g(x)| accepted as "on the manifold"
    rank_rel: float = 1e-6           # singular value threshold relative to largest
    newton: float = 1e-12            # retraction / root polishing target
    stationary: float = 1e-8         # |v| below this counts as stationary
    spectral_gap: float = 1e-4       # min |Re lambda| for hyperbolicity decisions
    boundary_tangent: float = 1e-6   # |<v, grad rho>| / |v| at boundary samples
    taming: float = 1e-12            # df(v) >= -taming everywhere
    f_drift: float = 1e-9            # allowed f increase per unit time on trajectories
    sphere_fit: float = 1e-6         # residual accepted when fitting a 2-sphere locus
    cluster_factor: float = 10.0     # single-linkage radius = factor * sqrt(newton)
    dedup_radius: float = 1e-4       # slice-point dedup radius for trajectory classes
    fd_step: float = 1e-5            # finite-difference step for rank estimation
    sv_abs: float = 1e-6             # absolute singular-value cutoff for est_dim
    ev_match: float = 1e-5           # ev_+ / ev_- matching radius in broken chains
    rtol: float = 1e-9               # integrator relative tolerance
    atol: float = 1e-11              # integrator absolute tolerance
    landing_radius: float = 1e-4     # distance for resolving a limit onto a locus
    breaking_factor: float = 50.0    # flight time > factor * median triggers splitting


_PROFILES = {
    "strict": Tolerances(rtol=1e-11, atol=1e-13, stationary=1e-9, landing_radius=1e-5),
    "default": Tolerances(),
    "loose": Tolerances(rtol=1e-7, atol=1e-9, stationary=1e-6, spectral_gap=1e-3,
                        landing_radius=1e-3, dedup_radius=1e-3),
}


def tol_profile(name: str = "default", **overrides) -> Tolerances:
    """Return a named tolerance profile, optionally overriding fields."""
    if name not in _PROFILES:
        raise KeyError(f"unknown tolerance profile {name!r}; choose from {sorted(_PROFILES)}")
    tols = _PROFILES[name]
    return replace(tols, **overrides) if overrides else tols


def stream(seed: int, name: str) -> np.random.Generator:
    """Deterministic generator for a named sub-stream of the master seed."""
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tag,)))
