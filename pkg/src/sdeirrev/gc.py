"""Gallavotti-Cohen increments and exact log transition densities.

Two accumulation variants are supported:

``dropped``
    The closed-form increments with telescoping boundary terms removed.
``exact``
    log Pi(x, y) - log Pi(y, x) evaluated from the transition densities
    (with momentum flip for the BBK scheme).

Both have the same long-run average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .integrate import PhaseState, StepRecord, em_drift
from .model import LOG_2PI, ContractError, ModelSpec, eval_diffusion, eval_potential

__all__ = [
    "VARIANTS",
    "SCHEMES",
    "GcAccumulator",
    "log_density_em",
    "em_boundary_term",
    "gc_increment_em",
    "milstein_z",
    "log_density_milstein",
    "gc_increment_milstein",
    "gc_increment_milstein_dominant",
    "log_density_bbk",
    "gc_increment_bbk",
    "exact_log_ratio",
    "gc_increment",
]

VARIANTS = ("dropped", "exact")
SCHEMES = ("em", "milstein", "bbk")

# Below this |Sigma'| the far Milstein branch is treated as exactly zero.
MILSTEIN_BRANCH_TOL = 1e-12


def default_variant(scheme: str) -> str:
    """Production accumulator: exact densities for Milstein, closed forms otherwise."""
    return "exact" if scheme == "milstein" else "dropped"


def check_variant(variant: str) -> str:
    aliases = {"boundary_dropped": "dropped", "exact_log_ratio": "exact"}
    variant = aliases.get(variant, variant)
    if variant not in VARIANTS:
        raise ContractError(f"unknown accumulator variant {variant!r}")
    return variant


@dataclass
class GcAccumulator:
    """Running GC sum of a chain; singular increments are counted, not summed."""

    variant: str = "dropped"
    sum_w: float = 0.0
    n_steps: int = 0
    n_singular: int = 0
    n_wraps: int = 0

    def __post_init__(self):
        self.variant = check_variant(self.variant)

    def add(self, w: float, wrapped: bool = False):
        self.n_steps += 1
        if wrapped:
            self.n_wraps += 1
        if math.isfinite(w):
            self.sum_w += w
        else:
            self.n_singular += 1

    def merge(self, other: "GcAccumulator") -> "GcAccumulator":
        if other.variant != self.variant:
            raise ContractError("cannot merge accumulators of different variants")
        return GcAccumulator(self.variant, self.sum_w + other.sum_w, self.n_steps + other.n_steps,
                             self.n_singular + other.n_singular, self.n_wraps + other.n_wraps)

    __add__ = merge


# --------------------------------------------------------------------------
# Euler-Maruyama
# --------------------------------------------------------------------------


def log_density_em(model: ModelSpec, x, y, dt: float) -> float:
    """log Pi(x, y) of the EM kernel: Gaussian with mean x + drift dt, covariance Sigma(x) dt."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    de = eval_diffusion(model, x)
    r = (y - x) - em_drift(model, x) * dt
    d = x.shape[0]
    return -de.log_norm - 0.5 * d * math.log(dt) - float(r @ de.Sigma_inv @ r) / (2.0 * dt)


def em_boundary_term(model: ModelSpec, x, dt: float) -> float:
    """B(x) with log Pi(x, y) - log Pi(y, x) = w_dropped(x, y) + B(y) - B(x).

    B = log Z + (dt / 2) b^T Sigma^-1 b, where b = -1/2 Sigma grad V + 1/2 grad Sigma.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    de = eval_diffusion(model, x)
    b = em_drift(model, x)
    return de.log_norm + 0.5 * dt * float(b @ de.Sigma_inv @ b)


def gc_increment_em(model: ModelSpec, rec: StepRecord) -> float:
    """Boundary-dropped EM increment.

    w = -1/2 dx.(grad V(x') + grad V(x)) + 1/2 dx.(Sigma'/Sigma (x') + Sigma'/Sigma (x))
        + dx.(Sigma^-1(x') - Sigma^-1(x)) dx / (2 dt)
    """
    x, y, dx = rec.x_prev, rec.x_next, rec.dx_raw
    _, gx = eval_potential(model, x)
    _, gy = eval_potential(model, y)
    w = -0.5 * float(dx @ (gx + gy))
    if model.is_additive:
        return w
    ex = eval_diffusion(model, x)
    ey = eval_diffusion(model, y)
    w += 0.5 * float(dx @ (ey.Sigma_inv @ ey.dSigma + ex.Sigma_inv @ ex.dSigma))
    w += float(dx @ (ey.Sigma_inv - ex.Sigma_inv) @ dx) / (2.0 * rec.dt)
    return w


# --------------------------------------------------------------------------
# Milstein
# --------------------------------------------------------------------------


def _milstein_terms(model, x, dx, dt):
    de = eval_diffusion(model, np.atleast_1d(x))
    _, g = eval_potential(model, np.atleast_1d(x))
    s, S, dS = de.sigma[0, 0], de.Sigma[0, 0], de.dSigma[0]
    a = -0.5 * S * g[0] + 0.25 * dS
    r = dx - a * dt
    return s, S, dS, r, S + dS * r


def milstein_z(model: ModelSpec, x, dx: float, dt: float) -> float:
    """Z(x, dx) = Sigma(x) + Sigma'(x) (dx - a(x) dt)."""
    return _milstein_terms(model, x, float(np.ravel(dx)[0]), dt)[4]


def _log_two_branch(s, S, dS, r, Z, dt):
    # Shared by the reference path and the pure-Python kernels.
    if Z < 0.0:
        return -math.inf
    if Z == 0.0:
        return math.inf
    sq = math.sqrt(Z)
    u1 = 2.0 * r / (s + sq)
    a1 = u1 * u1 / (2.0 * dt)
    if abs(dS) > MILSTEIN_BRANCH_TOL:
        u2 = (s + sq) / (0.5 * dS)
        a2 = u2 * u2 / (2.0 * dt)
        lo, hi = (a1, a2) if a1 <= a2 else (a2, a1)
        lse = -lo + math.log1p(math.exp(lo - hi))
    else:
        lse = -a1
    return -0.5 * (LOG_2PI + math.log(dt * Z)) + lse


def log_density_milstein(model: ModelSpec, x, y, dt: float) -> float:
    """log Pi(x, y) of the Milstein kernel, summing both preimages of dW.

    Returns -inf where Z(x, y - x) < 0 (unreachable points).
    """
    x = float(np.ravel(x)[0])
    y = float(np.ravel(y)[0])
    return _log_two_branch(*_milstein_terms(model, x, y - x, dt), dt)


def gc_increment_milstein(model: ModelSpec, rec: StepRecord) -> float:
    """Exact Milstein log ratio; +inf when the reverse step is unreachable."""
    x = float(rec.x_prev[0])
    y = float(rec.x_next[0])
    dx = float(rec.dx_raw[0])
    fwd = _log_two_branch(*_milstein_terms(model, x, dx, rec.dt), rec.dt)
    bwd = _log_two_branch(*_milstein_terms(model, y, -dx, rec.dt), rec.dt)
    if bwd == -math.inf:
        return math.inf
    return fwd - bwd


def gc_increment_milstein_dominant(model: ModelSpec, rec: StepRecord) -> float:
    """Comparison mode: keep only the near branch of each density.

    -1/2 log(Z(x, dx) / Z(x', -dx)) - (u(x, dx)^2 - u(x', -dx)^2) / (2 dt),
    with u the small root in the stable form 2 r / (sigma + sqrt Z).
    """
    x = float(rec.x_prev[0])
    y = float(rec.x_next[0])
    dx = float(rec.dx_raw[0])
    sf, _, _, rf, Zf = _milstein_terms(model, x, dx, rec.dt)
    sb, _, _, rb, Zb = _milstein_terms(model, y, -dx, rec.dt)
    if Zb <= 0.0:
        return math.inf
    uf = 2.0 * rf / (sf + math.sqrt(Zf))
    ub = 2.0 * rb / (sb + math.sqrt(Zb))
    return -0.5 * math.log(Zf / Zb) - (uf * uf - ub * ub) / (2.0 * rec.dt)


# --------------------------------------------------------------------------
# BBK
# --------------------------------------------------------------------------


def log_density_bbk(model: ModelSpec, s: PhaseState, s_next: PhaseState, dt: float, dq=None) -> float:
    """log P(q'|q, p) + log P(p'|q', q, p) for the BBK kernel.

    Positions: dq ~ N((dt/m)((1 - a) p - grad V(q) dt/2), sigma^2 dt^3 / (2 m^2)).
    Momenta: (1 + a) p' - (m dq/dt - grad V(q') dt/2) ~ N(0, sigma^2 dt / 2),
    with a = gamma dt / (2 m).  ``dq`` overrides q' - q (periodic domains).
    """
    lg = model.langevin
    m, gam, sig = lg.mass, lg.gamma, lg.sigma
    a = gam * dt / (2 * m)
    if dq is None:
        dq = s_next.q - s.q
    n = dq.shape[0]
    _, g = eval_potential(model, s.q)
    _, g_next = eval_potential(model, s_next.q)
    vq = sig * sig * dt ** 3 / (2 * m * m)
    rq = dq - (dt / m) * ((1 - a) * s.p - g * (dt / 2))
    vp = sig * sig * dt / 2 / (1 + a) ** 2
    rp = s_next.p - (m * dq / dt - g_next * (dt / 2)) / (1 + a)
    lq = -0.5 * n * (LOG_2PI + math.log(vq)) - float(rq @ rq) / (2 * vq)
    lp = -0.5 * n * (LOG_2PI + math.log(vp)) - float(rp @ rp) / (2 * vp)
    return lq + lp


def gc_increment_bbk(model: ModelSpec, rec: StepRecord) -> float:
    """w = (beta/dt) [dp.dq - dt^2/(2m) (grad V(q).p + grad V(q').p')]."""
    lg = model.langevin
    s, s2, dq, dt = rec.x_prev, rec.x_next, rec.dx_raw, rec.dt
    _, g = eval_potential(model, s.q)
    _, g2 = eval_potential(model, s2.q)
    dp = s2.p - s.p
    return (lg.beta / dt) * (float(dp @ dq) - dt * dt / (2 * lg.mass) * (float(g @ s.p) + float(g2 @ s2.p)))


# --------------------------------------------------------------------------
# Dispatch
# --------------------------------------------------------------------------


def exact_log_ratio(scheme: str, model: ModelSpec, rec: StepRecord) -> float:
    """log Pi(forward step) - log Pi(reverse step) from the densities."""
    dt = rec.dt
    if scheme == "em":
        x, y, dx = rec.x_prev, rec.x_next, rec.dx_raw
        return log_density_em(model, x, x + dx, dt) - log_density_em(model, y, y - dx, dt)
    if scheme == "milstein":
        return gc_increment_milstein(model, rec)
    if scheme == "bbk":
        s, s2, dq = rec.x_prev, rec.x_next, rec.dx_raw
        fwd = log_density_bbk(model, s, s2, dt, dq=dq)
        bwd = log_density_bbk(model, PhaseState(s2.q, -s2.p), PhaseState(s.q, -s.p), dt, dq=-dq)
        return fwd - bwd
    raise ContractError(f"unknown scheme {scheme!r}")


def gc_increment(scheme: str, model: ModelSpec, rec: StepRecord, variant: str = "dropped") -> float:
    """GC increment of one step for the given scheme and accumulator variant.

    For Milstein the ``dropped`` variant is the near-branch comparison mode.
    """
    variant = check_variant(variant)
    if variant == "exact":
        return exact_log_ratio(scheme, model, rec)
    if scheme == "em":
        return gc_increment_em(model, rec)
    if scheme == "milstein":
        return gc_increment_milstein_dominant(model, rec)
    if scheme == "bbk":
        return gc_increment_bbk(model, rec)
    raise ContractError(f"unknown scheme {scheme!r}")
