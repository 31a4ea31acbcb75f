"""Comparison metrics and the load-perturbation machinery."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import PowerNetwork

__all__ = [
    "objective_gap",
    "dispatch_mae",
    "perturb_loads",
    "lognormal_params",
    "generator_diff_profile",
    "GeneratorDiffProfile",
]


def objective_gap(method_obj: float, reference_obj: float) -> float:
    """Signed percent gap of a method's objective against a reference.

    Positive means the method costs more than the reference; approximations
    may land on either side.
    """
    if reference_obj == 0:
        raise ZeroDivisionError("reference objective is zero")
    return 100.0 * (method_obj - reference_obj) / abs(reference_obj)


def dispatch_mae(pg, pg_ref) -> float:
    """Mean absolute per-generator dispatch difference (pu)."""
    pg = np.asarray(pg, dtype=float)
    pg_ref = np.asarray(pg_ref, dtype=float)
    if pg.shape != pg_ref.shape:
        raise ValueError(f"length mismatch: {pg.shape} vs {pg_ref.shape}")
    return float(np.abs(pg - pg_ref).sum() / len(pg))


def lognormal_params(alpha: float, sigma: float) -> tuple[float, float]:
    """(mu, sigma) of the underlying normal for a log-normal with
    arithmetic mean ``alpha`` and standard deviation ``sigma``."""
    mu = math.log(alpha * alpha / math.sqrt(alpha * alpha + sigma * sigma))
    sig = math.sqrt(math.log(1.0 + sigma * sigma / (alpha * alpha)))
    return mu, sig


def perturb_loads(net: PowerNetwork, alpha: float, sigma: float, seed: int) -> PowerNetwork:
    """Scale each load by an independent log-normal factor.

    The factor has arithmetic mean ``alpha`` and standard deviation
    ``sigma`` (real space); ``sigma == 0`` scales every load by exactly
    ``alpha``. Active and reactive demand at a bus share the same factor.
    Deterministic per seed.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    n = net.n_bus
    if sigma == 0.0:
        factors = np.full(n, alpha)
    else:
        mu, sig = lognormal_params(alpha, sigma)
        rng = np.random.default_rng(seed)
        factors = rng.lognormal(mean=mu, sigma=sig, size=n)
    return net.with_loads_scaled(factors)


@dataclass
class GeneratorDiffProfile:
    """Per-generator dispatch differences ordered by increasing capacity."""

    order: np.ndarray         # generator indices, ascending pmax
    pmax: np.ndarray          # capacities in that order
    diffs: np.ndarray         # pg - pg_ref in that order
    filtered_indices: np.ndarray  # positions (into order) with |diff| above threshold
    threshold: float
    histogram_counts: np.ndarray
    histogram_edges: np.ndarray

    @property
    def filtered_count(self) -> int:
        return len(self.filtered_indices)

    @property
    def share_identical(self) -> float:
        """Fraction of generators whose dispatch matches within the threshold."""
        if len(self.diffs) == 0:
            return 1.0
        return 1.0 - self.filtered_count / len(self.diffs)


def generator_diff_profile(
    pg, pg_ref, net: PowerNetwork, threshold: float = 1e-3, bins: int = 20
) -> GeneratorDiffProfile:
    pg = np.asarray(pg, dtype=float)
    pg_ref = np.asarray(pg_ref, dtype=float)
    if pg.shape != pg_ref.shape:
        raise ValueError("generator sets are not aligned")
    pmax = np.array([g.pmax for g in net.generators])
    order = np.argsort(pmax, kind="stable")
    diffs = (pg - pg_ref)[order]
    filtered = np.nonzero(np.abs(diffs) > threshold)[0]
    counts, edges = np.histogram(diffs, bins=bins)
    return GeneratorDiffProfile(
        order=order,
        pmax=pmax[order],
        diffs=diffs,
        filtered_indices=filtered,
        threshold=threshold,
        histogram_counts=counts,
        histogram_edges=edges,
    )
