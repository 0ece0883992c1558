"""One-step maps for the Euler-Maruyama, Milstein and BBK schemes.

Every stepper draws its Gaussian increments from an explicit
``numpy.random.Generator`` (or takes them through ``noise=``) and returns a
:class:`StepRecord` holding the pre-wrap displacement and the draws it used.
Noise consumption order: EM and Milstein take one N(0, dt I_m) vector per
step; BBK takes dW_i then dW_{i+1/2}, each N(0, dt/2 I_{dN}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ContractError, Domain, ModelSpec, eval_diffusion, eval_potential

__all__ = [
    "StepRecord",
    "PhaseState",
    "apply_domain",
    "em_step",
    "milstein_step",
    "bbk_step",
    "em_drift",
    "milstein_drift",
    "initial_state",
]


@dataclass(frozen=True)
class PhaseState:
    """Positions and momenta of a Langevin system, each of length N * d."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(-1)
        p = np.asarray(self.p, dtype=float).reshape(-1)
        if q.shape != p.shape:
            raise ContractError("q and p must have equal length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ContractError("non-finite phase state")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class StepRecord:
    """One transition of a chain.

    For phase-space steps ``x_prev`` / ``x_next`` are :class:`PhaseState` and
    ``dx_raw`` is the raw position increment.
    """

    x_prev: object
    x_next: object
    dx_raw: np.ndarray
    noise: tuple
    dt: float
    wrapped: bool = False


def apply_domain(domain: Domain, x_raw) -> tuple[np.ndarray, bool]:
    """Wrap ``x_raw`` into the domain; returns the wrapped state and a wrap flag.

    Coordinates already inside [-L, L) are returned untouched.
    """
    x = np.array(x_raw, dtype=float).reshape(-1)
    if not domain.is_torus:
        return x, False
    L = domain.half_width
    outside = (x < -L) | (x >= L)
    if not outside.any():
        return x, False
    y = np.mod(x[outside] + L, 2.0 * L) - L
    y[y >= L] = -L
    x[outside] = y
    return x, True


def em_drift(model: ModelSpec, x: np.ndarray) -> np.ndarray:
    """-1/2 Sigma grad V + 1/2 grad Sigma."""
    _, g = eval_potential(model, x)
    de = eval_diffusion(model, x)
    return -0.5 * de.Sigma @ g + 0.5 * de.dSigma


def milstein_drift(model: ModelSpec, x: np.ndarray) -> float:
    """a(x) = -1/2 Sigma V' + 1/4 Sigma' (one-dimensional)."""
    _, g = eval_potential(model, x)
    de = eval_diffusion(model, x)
    return float(-0.5 * de.Sigma[0, 0] * g[0] + 0.25 * de.dSigma[0])


def _draw(rng, noise, shape, var):
    if noise is not None:
        w = np.asarray(noise, dtype=float).reshape(shape)
        return w
    if rng is None:
        raise ContractError("need an rng stream or explicit noise")
    return rng.standard_normal(shape) * math.sqrt(var)


def _check_dt(dt):
    if not dt > 0:
        raise ContractError(f"time step must be positive, got {dt!r}")


def em_step(model: ModelSpec, x, dt: float, rng=None, noise=None) -> StepRecord:
    """Explicit Euler-Maruyama step for an overdamped model.

    ``noise`` overrides the draw and must be the Brownian increment dW
    (variance dt), not a standard normal.
    """
    _check_dt(dt)
    x = np.asarray(x, dtype=float).reshape(-1)
    de = eval_diffusion(model, x)
    _, g = eval_potential(model, x)
    dw = _draw(rng, noise, (de.sigma.shape[1],), dt)
    dx = (-0.5 * (de.Sigma @ g) + 0.5 * de.dSigma) * dt + de.sigma @ dw
    y, wrapped = apply_domain(model.domain, x + dx)
    return StepRecord(x, y, dx, (dw,), dt, wrapped)


def milstein_step(model: ModelSpec, x, dt: float, rng=None, noise=None) -> StepRecord:
    """Explicit Milstein step, dx = a dt + sigma dW + 1/4 Sigma' dW^2 (1D)."""
    _check_dt(dt)
    if not model.is_overdamped or model.dim != 1:
        raise ContractError("Milstein scheme is implemented for one-dimensional overdamped models")
    x = np.asarray(x, dtype=float).reshape(-1)
    de = eval_diffusion(model, x)
    _, g = eval_potential(model, x)
    dw = _draw(rng, noise, (1,), dt)
    S, dS = de.Sigma[0, 0], de.dSigma[0]
    a = -0.5 * S * g[0] + 0.25 * dS
    w = dw[0]
    dx = np.array([a * dt + de.sigma[0, 0] * w + 0.25 * dS * w * w])
    y, wrapped = apply_domain(model.domain, x + dx)
    return StepRecord(x, y, dx, (dw,), dt, wrapped)


def bbk_step(model: ModelSpec, s: PhaseState, dt: float, rng=None, noise=None) -> StepRecord:
    """BBK step: half kick, drift, implicit half kick solved in closed form.

    ``noise`` is a pair (dW_i, dW_{i+1/2}) with variance dt/2 each.
    """
    _check_dt(dt)
    if model.is_overdamped:
        raise ContractError("BBK needs a Langevin model")
    lg = model.langevin
    n = lg.n_dof
    if noise is None:
        w1 = _draw(rng, None, (n,), dt / 2)
        w2 = _draw(rng, None, (n,), dt / 2)
    else:
        w1 = np.asarray(noise[0], dtype=float).reshape(n)
        w2 = np.asarray(noise[1], dtype=float).reshape(n)
    m, gam, sig = lg.mass, lg.gamma, lg.sigma
    _, g = eval_potential(model, s.q)
    p_half = s.p - g * (dt / 2) - (gam / m) * s.p * (dt / 2) + sig * w1
    dq = p_half * (dt / m)
    q_next, wrapped = apply_domain(model.domain, s.q + dq)
    _, g_next = eval_potential(model, q_next)
    p_next = (p_half - g_next * (dt / 2) + sig * w2) / (1.0 + gam * dt / (2 * m))
    return StepRecord(s, PhaseState(q_next, p_next), dq, (w1, w2), dt, wrapped)


def initial_state(model: ModelSpec, rng: Optional[np.random.Generator] = None):
    """Default starting point of a chain.

    Quadratic potentials start from an exact Gibbs draw (requires ``rng``);
    other potentials start at a minimizer.  Langevin momenta are drawn from
    N(0, m / beta) and quadratic positions from N(0, 1 / (beta * scale)).
    """
    pot = model.potential
    if model.is_overdamped:
        if pot.kind == "quadratic" and rng is not None:
            return rng.standard_normal(pot.dim) / math.sqrt(pot.scale)
        return pot.minimizer()
    lg = model.langevin
    if rng is None:
        return PhaseState(pot.minimizer(), np.zeros(lg.n_dof))
    if pot.kind == "quadratic":
        q = rng.standard_normal(lg.n_dof) / math.sqrt(lg.beta * pot.scale)
    else:
        q = pot.minimizer()
    p = rng.standard_normal(lg.n_dof) * math.sqrt(lg.mass / lg.beta)
    return PhaseState(q, p)
