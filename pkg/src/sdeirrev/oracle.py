"""Independent reference values: Gibbs expectations, Gaussian moments, theory rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import solve_banded

from .model import ContractError, ModelSpec, eval_diffusion

__all__ = ["QuadratureError", "TheoryRef", "gibbs_expectation", "gaussian_moment",
           "ep_constant_multiplicative", "ep_langevin_theory", "langevin_coefficient", "theory_for",
           "TransferEP", "ep_transfer_operator"]

THEORY_KINDS = ("em_additive_order2", "em_multiplicative_constant", "milstein_order1", "bbk_linear")


class QuadratureError(ArithmeticError):
    """Quadrature failed to converge; ``diagnostics`` holds the evidence."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(f"{message}: {diagnostics}")
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class TheoryRef:
    """Closed-form expectation for a sweep.

    ``value`` is the constant c for ``em_multiplicative_constant``, the
    coefficient N gamma^2 / (2 m^2) for ``bbk_linear``, and None for the
    order-only kinds.  ``order`` is the expected log-log slope.
    """

    kind: str
    value: Optional[float] = None
    order: float = 0.0
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in THEORY_KINDS:
            raise ContractError(f"unknown theory kind {self.kind!r}")
        if self.value is not None and not self.value >= 0:
            raise ContractError("theory constants are nonnegative")


def _simpson(f, V, lo, hi, n):
    x = np.linspace(lo, hi, n + 1)
    v = np.asarray(V(x), dtype=float)
    wts = np.exp(-(v - v.min()))
    fx = np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)
    return simpson(fx * wts, x=x) / simpson(wts, x=x), wts


def gibbs_expectation(f: Callable, V: Callable, bounds=(-10.0, 10.0), n_points: int = 4096,
                      rtol: float = 1e-8, tail_tol: float = 1e-12, max_doublings: int = 12,
                      max_widenings: int = 6) -> float:
    """E_mu[f] for mu proportional to exp(-V) on the real line.

    Composite Simpson on a uniform grid.  The grid is doubled until the
    result moves by less than ``rtol`` relative, and the bounds are widened
    until the weight at both ends is below ``tail_tol`` of its peak.

    Parameters
    ----------
    f, V : callable
        Vectorized functions of a 1D array.
    bounds : (float, float)
        Initial integration interval.
    n_points : int
        Initial number of Simpson intervals (rounded up to even).

    Raises
    ------
    QuadratureError
        If either check fails to converge.
    """
    lo, hi = map(float, bounds)
    if not hi > lo:
        raise ContractError("bounds must satisfy lo < hi")
    n = max(2, int(n_points) + (int(n_points) % 2))
    for _ in range(max_widenings + 1):
        _, wts = _simpson(f, V, lo, hi, n)
        if wts[0] < tail_tol and wts[-1] < tail_tol:
            break
        half = 0.75 * (hi - lo)
        mid = 0.5 * (hi + lo)
        lo, hi = mid - half, mid + half
    else:
        raise QuadratureError("tail mass above tolerance", {"bounds": (lo, hi), "end_weights": (wts[0], wts[-1])})

    prev, _ = _simpson(f, V, lo, hi, n)
    for _ in range(max_doublings):
        n *= 2
        cur, _ = _simpson(f, V, lo, hi, n)
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300) or cur == prev:
            return float(cur)
        prev = cur
    raise QuadratureError("grid refinement did not converge",
                          {"bounds": (lo, hi), "n_points": n, "last": cur, "change": abs(cur - prev)})


def _pairings(items):
    if not items:
        yield []
        return
    a = items[0]
    for k in range(1, len(items)):
        rest = items[1:k] + items[k + 1:]
        for tail in _pairings(rest):
            yield [(a, items[k])] + tail


def gaussian_moment(nu, cov=None, dt: float = 1.0) -> float:
    """E[prod_i X_i^nu_i] for X ~ N(0, cov * dt), via Isserlis-Wick pairings.

    Parameters
    ----------
    nu : sequence of int
        Multi-index, |nu| <= 8.
    cov : array_like, optional
        Covariance per unit dt; identity by default.
    dt : float
        Covariance scale.
    """
    nu = [int(k) for k in np.atleast_1d(nu)]
    if any(k < 0 for k in nu):
        raise ContractError("multi-index entries must be nonnegative")
    order = sum(nu)
    if order > 8:
        raise ContractError(f"|nu| = {order} > 8 is not supported")
    C = np.eye(len(nu)) if cov is None else np.atleast_2d(np.asarray(cov, dtype=float))
    if C.shape != (len(nu), len(nu)):
        raise ContractError("cov shape does not match the multi-index")
    if order % 2:
        return 0.0
    idx = [i for i, k in enumerate(nu) for _ in range(k)]
    total = math.fsum(math.prod(C[i, j] for i, j in pairing) for pairing in _pairings(idx))
    return total * dt ** (order // 2)


def ep_constant_multiplicative(model: ModelSpec, bounds=(-10.0, 10.0), n_points: int = 4096) -> float:
    """c = (3/4) E_mu[Sigma^-1 (Sigma')^2], the small-dt EP level of EM with multiplicative noise."""
    if not model.is_overdamped or model.dim != 1:
        raise ContractError("needs a 1D overdamped model")
    if model.is_additive:
        return 0.0

    def integrand(x):
        out = np.empty_like(x)
        for i, xi in enumerate(x):
            de = eval_diffusion(model, np.array([xi]))
            out[i] = de.Sigma_inv[0, 0] * de.dSigma[0] ** 2
        return out

    def V(x):
        return np.array([model.potential.evaluate(np.array([xi]))[0] for xi in x])

    return 0.75 * gibbs_expectation(integrand, V, bounds, n_points)


def ep_langevin_theory(n_particles: int, gamma: float, mass: float, dt: float) -> float:
    """gamma^2 N dt / (m (2m + gamma dt)), the BBK EP rate for a harmonic potential."""
    if n_particles < 0 or gamma < 0 or not mass > 0 or not dt > 0:
        raise ContractError("need N >= 0, gamma >= 0, m > 0, dt > 0")
    return gamma * gamma * n_particles * dt / (mass * (2 * mass + gamma * dt))


def langevin_coefficient(n_particles: int, gamma: float, mass: float) -> float:
    """Leading small-dt coefficient N gamma^2 / (2 m^2) of :func:`ep_langevin_theory`."""
    return n_particles * gamma * gamma / (2 * mass * mass)


def theory_for(scheme: str, model: ModelSpec) -> Optional[TheoryRef]:
    """The closed-form reference matching (scheme, model), if any."""
    if scheme == "bbk" and not model.is_overdamped:
        lg = model.langevin
        if model.potential.kind != "quadratic":
            return None
        params = {"N": lg.n_dof, "gamma": lg.gamma, "mass": lg.mass}
        return TheoryRef("bbk_linear", langevin_coefficient(lg.n_dof, lg.gamma, lg.mass), 1.0, params)
    if not model.is_overdamped:
        return None
    if scheme == "em":
        if model.is_additive:
            if model.potential.kind == "quadratic":
                return None
            return TheoryRef("em_additive_order2", None, 2.0, {"potential": model.potential.label()})
        if model.dim == 1:
            try:
                c = ep_constant_multiplicative(model)
            except (QuadratureError, ContractError):
                return None
            return TheoryRef("em_multiplicative_constant", c, 0.0, {"diffusion": model.diffusion.label()})
    if scheme == "milstein" and not model.is_additive:
        return TheoryRef("milstein_order1", None, 1.0, {"diffusion": model.diffusion.label()})
    return None


@dataclass(frozen=True)
class TransferEP:
    """EP of a 1D chain computed from its discretized transition kernel."""

    dt: float
    ep: float
    unreachable_mass: float
    n_grid: int
    stationary: np.ndarray = field(repr=False, compare=False)


def _log_kernel_rows(scheme, s, S, dS, g, dx, dt):
    # log Pi(x_i, x_i + dx) on a band; row terms broadcast over columns
    s, S, dS, g = (v[:, None] for v in (s, S, dS, g))
    if scheme == "em":
        r = dx - (-0.5 * S * g + 0.5 * dS) * dt
        return -0.5 * np.log(2 * np.pi * S * dt) - r * r / (2 * S * dt)
    r = dx - (-0.5 * S * g + 0.25 * dS) * dt
    Z = S + dS * r
    ok = Z > 0
    sq = np.sqrt(np.where(ok, Z, 1.0))
    a1 = (2 * r / (s + sq)) ** 2 / (2 * dt)
    far = np.abs(dS) > 1e-12
    with np.errstate(divide="ignore", over="ignore"):
        u2 = np.where(far, (s + sq) / (0.5 * np.where(far, dS, 1.0)), np.inf)
        a2 = u2 * u2 / (2 * dt)
        lo, hi = np.minimum(a1, a2), np.maximum(a1, a2)
        lse = -lo + np.log1p(np.exp(lo - hi))
    out = -0.5 * (np.log(2 * np.pi) + np.log(dt * np.where(ok, Z, 1.0))) + lse
    return np.where(ok, out, -np.inf)


def ep_transfer_operator(scheme: str, model: ModelSpec, dt: float, half_width: float = 6.0,
                         h: Optional[float] = None, band_sd: float = 12.0) -> TransferEP:
    """EP(dt) of a 1D overdamped EM or Milstein chain without sampling.

    The transition kernel is discretized on a uniform grid over
    [-half_width, half_width] (band of ``band_sd`` local standard deviations),
    the stationary law of the discrete chain is solved for directly, and

        EP = sum_ij pi_i K_ij (log Pi(x_i, x_j) - log Pi(x_j, x_i)) / dt.

    Pairs whose reverse density vanishes are excluded; their probability
    mass is reported as ``unreachable_mass``.
    """
    if scheme not in ("em", "milstein"):
        raise ContractError("transfer-operator EP covers em and milstein")
    if not model.is_overdamped or model.dim != 1 or model.domain.is_torus:
        raise ContractError("needs a 1D overdamped model on the real line")
    h = float(h) if h else min(0.004, math.sqrt(dt) / 40)
    x = np.arange(-half_width, half_width + 0.5 * h, h)
    n = x.size
    terms = np.array([model.diffusion.scalar_terms(float(v))[:3] for v in x])
    g = np.array([model.potential.evaluate(np.array([v]))[1][0] for v in x])
    s, S, dS = terms.T
    B = int(math.ceil(band_sd * math.sqrt(S.max() * dt) / h)) + 1
    off = np.arange(-B, B + 1)
    J = np.arange(n)[:, None] + off[None, :]
    valid = (J >= 0) & (J < n)
    Jc = np.clip(J, 0, n - 1)
    lk = _log_kernel_rows(scheme, s, S, dS, g, off[None, :] * h, dt)
    lk = np.where(valid, lk, -np.inf)
    # reverse entry of (i, i+k) is (i+k, -k)
    lk_rev = np.where(valid, lk[Jc, (2 * B - (off[None, :] + B))], -np.inf)
    K = np.exp(lk) * h
    K /= K.sum(axis=1, keepdims=True)
    # pi (K - I) = 0 in banded form: ab[B + i - j, j] = K[j, i] - delta_ij;
    # pin pi at the centre row instead of a dense normalization row
    ab = np.where(valid, K, 0.0).T.copy()
    ab[B] -= 1.0
    c = n // 2
    cols = np.arange(max(0, c - B), min(n, c + B + 1))
    ab[B + c - cols, cols] = 0.0
    ab[B, c] = 1.0
    rhs = np.zeros(n)
    rhs[c] = 1.0
    pi = solve_banded((B, B), ab, rhs)
    pi /= pi.sum()
    both = np.isfinite(lk) & np.isfinite(lk_rev)
    F = np.where(both, lk - np.where(both, lk_rev, 0.0), 0.0)
    flux = pi[:, None] * K
    ep = float(np.sum(flux * F) / dt)
    lost = float(np.sum(np.where(np.isfinite(lk) & ~np.isfinite(lk_rev), flux, 0.0)))
    return TransferEP(float(dt), ep, lost, n, pi)
