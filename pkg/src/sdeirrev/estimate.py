"""Entropy-production estimates from long chains.

EP(dt) is the ergodic average of the GC increments per unit time,
sum_w / (n_steps * dt).  Error bars come from non-overlapping batch means of
the per-step increments, which are autocorrelated.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .gc import SCHEMES, check_variant, default_variant
from .integrate import initial_state
from .kernels import draw_noise, make_chain
from .model import ContractError, ModelSpec

__all__ = ["EpEstimate", "make_stream", "batch_means", "stderr_of_batch_means", "run_chain",
           "merge_chains"]

DEFAULT_BLOCK = 1 << 16


def make_stream(seed: int, chain=0) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, chain)``; ``chain`` is an int or a tuple of ints."""
    key = tuple(chain) if isinstance(chain, (tuple, list)) else (int(chain),)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def stderr_of_batch_means(means) -> float:
    means = np.asarray(means, dtype=float)
    if means.size < 2:
        raise ContractError("need at least two batches")
    return float(np.std(means, ddof=1) / math.sqrt(means.size))


def batch_means(series, n_batches: int = 100) -> float:
    """Standard error of the mean of ``series`` from ``n_batches`` batch means.

    Trailing samples that do not fill a whole batch are dropped.
    """
    if n_batches < 10:
        raise ContractError("use at least 10 batches")
    series = np.asarray(series, dtype=float).ravel()
    size = series.size // n_batches
    if size < 1:
        raise ContractError(f"series of length {series.size} is too short for {n_batches} batches")
    means = series[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return stderr_of_batch_means(means)


@dataclass
class EpEstimate:
    """Entropy production rate of one chain (or a merge of replicas)."""

    scheme: str
    model: str
    dt: float
    ep: float
    stderr: float
    n_steps: int
    n_singular: int = 0
    n_wraps: int = 0
    wall_seconds: float = 0.0
    seed: int = 0
    variant: str = "dropped"
    valid: bool = True
    chain: Optional[tuple] = None
    sum_w: float = 0.0
    state_start: object = field(default=None, repr=False, compare=False)
    state_end: object = field(default=None, repr=False, compare=False)

    @property
    def singular_fraction(self) -> float:
        return self.n_singular / self.n_steps if self.n_steps else 0.0

    def key(self) -> tuple:
        return (self.scheme, self.model, self.dt, self.variant)

    def same_result(self, other: "EpEstimate") -> bool:
        """Equality ignoring wall time."""
        return replace(self, wall_seconds=0.0) == replace(other, wall_seconds=0.0)


def run_chain(scheme: str, model: ModelSpec, dt: float, n_steps: int, burn_in: Optional[int] = None,
              seed: int = 0, variant: Optional[str] = None, chain=0, x0=None, n_batches: int = 100,
              singular_threshold: float = 1e-6, block: int = DEFAULT_BLOCK, backend=None) -> EpEstimate:
    """Simulate one chain and estimate EP(dt).

    Parameters
    ----------
    scheme : {"em", "milstein", "bbk"}
    model : ModelSpec
    dt : float
        Time step.
    n_steps : int
        Steps accumulated after burn-in.
    burn_in : int, optional
        Steps discarded first; defaults to 10% of ``n_steps``.
    seed, chain
        Select the random stream, see :func:`make_stream`.
    variant : {"dropped", "exact"}, optional
        Accumulator variant; defaults to exact for Milstein (where
        ``dropped`` is the near-branch comparison mode) and dropped otherwise.
    x0 : optional
        Initial state (array, or PhaseState for BBK); default from
        :func:`~sdeirrev.integrate.initial_state`.

    Returns
    -------
    EpEstimate
        ``valid`` is False when the singular fraction exceeds
        ``singular_threshold``.
    """
    if scheme not in SCHEMES:
        raise ContractError(f"unknown scheme {scheme!r}")
    if not dt > 0:
        raise ContractError("dt must be positive")
    n_steps = int(n_steps)
    burn_in = n_steps // 10 if burn_in is None else int(burn_in)
    if not n_steps > burn_in >= 0:
        raise ContractError("need n_steps > burn_in >= 0")
    variant = check_variant(variant or default_variant(scheme))
    size = n_steps // n_batches
    if n_batches < 10 or size < 1:
        raise ContractError(f"{n_steps} steps cannot fill {n_batches} batches (need >= 10 batches)")

    t0 = time.perf_counter()
    rng = make_stream(seed, chain)
    state = initial_state(model, rng) if x0 is None else x0
    ch = make_chain(scheme, model, dt, state, variant, backend)
    w = np.empty(min(block, max(burn_in, n_steps)))

    done = 0
    while done < burn_in:
        k = min(block, burn_in - done)
        ch.advance(draw_noise(rng, scheme, model, k, dt), w[:k])
        done += k

    start = ch.state
    wraps0 = ch.n_wraps
    total = 0.0
    n_sing = 0
    batch_sums = np.zeros(n_batches)
    done = 0
    while done < n_steps:
        k = min(block, n_steps - done)
        wk = w[:k]
        ch.advance(draw_noise(rng, scheme, model, k, dt), wk)
        bad = ~np.isfinite(wk)
        if bad.any():
            n_sing += int(bad.sum())
            wk[bad] = 0.0
        total += float(np.sum(wk))
        idx = np.arange(done, done + k) // size
        keep = idx < n_batches
        batch_sums += np.bincount(idx[keep], weights=wk[keep], minlength=n_batches)
        done += k

    stderr = stderr_of_batch_means(batch_sums / (size * dt))
    ep = total / (n_steps * dt)
    valid = n_sing <= singular_threshold * n_steps and math.isfinite(ep)
    return EpEstimate(scheme, model.label(), float(dt), ep, stderr, n_steps, n_sing, ch.n_wraps - wraps0,
                      time.perf_counter() - t0, int(seed), variant, valid,
                      tuple(chain) if isinstance(chain, (tuple, list)) else (int(chain),),
                      total, start, ch.state)


def merge_chains(estimates: Sequence[EpEstimate]) -> EpEstimate:
    """Pool independent replicas: step-weighted mean, combined standard error."""
    estimates = list(estimates)
    if not estimates:
        raise ContractError("nothing to merge")
    first = estimates[0]
    for e in estimates[1:]:
        if e.key() != first.key():
            raise ContractError(f"cannot merge {e.key()} with {first.key()}")
    if len(estimates) == 1:
        return first
    n = sum(e.n_steps for e in estimates)
    ep = math.fsum(e.n_steps * e.ep for e in estimates) / n
    var = math.fsum((e.n_steps / n) ** 2 * e.stderr ** 2 for e in estimates)
    return EpEstimate(first.scheme, first.model, first.dt, ep, math.sqrt(var), n,
                      sum(e.n_singular for e in estimates), sum(e.n_wraps for e in estimates),
                      math.fsum(e.wall_seconds for e in estimates), first.seed, first.variant,
                      all(e.valid for e in estimates), None,
                      math.fsum(e.sum_w for e in estimates))
