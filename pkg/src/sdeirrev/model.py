"""SDE model definitions: potentials, diffusion coefficients, domains.

Overdamped models integrate

    dX = -1/2 Sigma(X) grad V(X) dt + 1/2 Sigma'(X) dt + sigma(X) dB

whose Gibbs measure is proportional to exp(-V).  Underdamped (Langevin)
models carry a :class:`LangevinSpec` with scalar mass, friction and noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "ContractError",
    "SingularDiffusionError",
    "PotentialModel",
    "DiffusionModel",
    "Domain",
    "LangevinSpec",
    "ModelSpec",
    "DiffusionEval",
    "DerivativeReport",
    "eval_potential",
    "eval_diffusion",
    "validate_derivatives",
]

LOG_2PI = math.log(2.0 * math.pi)


class ContractError(ValueError):
    """Raised when an argument violates an operation's preconditions."""


class SingularDiffusionError(ArithmeticError):
    """Raised when the diffusion drops below its ellipticity floor."""

    def __init__(self, x, value, floor):
        self.x = np.array(x, dtype=float, copy=True)
        self.value = value
        self.floor = floor
        super().__init__(
            f"diffusion {value!r} below ellipticity floor {floor!r} at x={self.x.tolist()}"
        )


# --------------------------------------------------------------------------
# Potentials
# --------------------------------------------------------------------------

POTENTIAL_KINDS = ("quadratic", "quartic_radial", "custom")


@dataclass(frozen=True)
class PotentialModel:
    """A potential V on R^dim with analytic gradient.

    ``quadratic``: V = scale * |x|^2 / 2.
    ``quartic_radial``: V = beta * (|x|^4 / 4 - |x|^2 / 2).
    ``custom``: user callbacks ``value(x)`` and ``grad(x)``.
    """

    kind: str
    dim: int
    scale: float = 1.0
    beta: float = 1.0
    value_fn: Optional[Callable] = field(default=None, compare=False, repr=False)
    grad_fn: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ContractError(f"unknown potential kind {self.kind!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ContractError(f"dimension must be a positive integer, got {self.dim!r}")
        if self.kind == "custom" and (self.value_fn is None or self.grad_fn is None):
            raise ContractError("custom potential needs value_fn and grad_fn")
        if self.kind == "quartic_radial" and not self.beta > 0:
            raise ContractError("quartic_radial needs beta > 0")

    @classmethod
    def quadratic(cls, dim: int = 1, scale: float = 1.0) -> "PotentialModel":
        return cls("quadratic", dim, scale=float(scale))

    @classmethod
    def quartic_radial(cls, beta: float, dim: int = 2) -> "PotentialModel":
        return cls("quartic_radial", dim, beta=float(beta))

    @classmethod
    def custom(cls, value_fn: Callable, grad_fn: Callable, dim: int) -> "PotentialModel":
        return cls("custom", dim, value_fn=value_fn, grad_fn=grad_fn)

    def evaluate(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        if self.kind == "quadratic":
            return 0.5 * self.scale * float(x @ x), self.scale * x
        if self.kind == "quartic_radial":
            r2 = float(x @ x)
            return self.beta * (0.25 * r2 * r2 - 0.5 * r2), self.beta * (r2 - 1.0) * x
        v = float(self.value_fn(x))
        g = np.asarray(self.grad_fn(x), dtype=float).reshape(self.dim)
        return v, g

    def minimizer(self) -> np.ndarray:
        """A minimum of V: the origin, or (1, 0, ..., 0) for the quartic well."""
        x = np.zeros(self.dim)
        if self.kind == "quartic_radial":
            x[0] = 1.0
        return x

    def label(self) -> str:
        if self.kind == "quadratic":
            return f"quadratic(scale={self.scale:g};d={self.dim})"
        if self.kind == "quartic_radial":
            return f"quartic_radial(beta={self.beta:g};d={self.dim})"
        return f"custom(d={self.dim})"


# --------------------------------------------------------------------------
# Diffusions
# --------------------------------------------------------------------------

DIFFUSION_KINDS = ("additive", "sigma_eps", "multiplicative_1d")


@dataclass(frozen=True)
class DiffusionEval:
    """Diffusion quantities at a single point.

    ``dSigma`` and ``d2Sigma`` hold the componentwise derivatives of a
    diagonal/scalar covariance; both vanish for additive noise.  ``log_norm``
    is log[(2 pi)^(d/2) |det Sigma|^(1/2)], without the dt factor.
    """

    sigma: np.ndarray
    Sigma: np.ndarray
    Sigma_inv: np.ndarray
    dSigma: np.ndarray
    d2Sigma: np.ndarray
    log_norm: float


@dataclass(frozen=True)
class DiffusionModel:
    """Noise coefficient of an overdamped model.

    ``additive``: constant ``sigma`` matrix of shape (d, m).
    ``sigma_eps``: sigma(x) = (1 + eps x^2)^(-1/2) in one dimension.
    ``multiplicative_1d``: callbacks for sigma, sigma' and sigma''; the
    covariance family is derived as Sigma = sigma^2.
    """

    kind: str
    sigma: Optional[np.ndarray] = field(default=None, compare=False)
    epsilon: float = 0.0
    floor: float = 1e-10
    sigma_fn: Optional[Callable] = field(default=None, compare=False, repr=False)
    dsigma_fn: Optional[Callable] = field(default=None, compare=False, repr=False)
    d2sigma_fn: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in DIFFUSION_KINDS:
            raise ContractError(f"unknown diffusion kind {self.kind!r}")
        if not self.floor > 0:
            raise ContractError("ellipticity floor must be positive")
        if self.kind == "additive":
            s = np.atleast_2d(np.asarray(self.sigma, dtype=float))
            if s.shape[0] > s.shape[1]:
                raise ContractError(f"sigma of shape {s.shape} cannot give an invertible Sigma")
            S = s @ s.T
            if np.linalg.eigvalsh(S).min() < self.floor:
                raise SingularDiffusionError(np.zeros(s.shape[0]), float(np.linalg.eigvalsh(S).min()), self.floor)
            s.setflags(write=False)
            object.__setattr__(self, "sigma", s)
            Sinv = np.linalg.inv(S)
            S.setflags(write=False)
            Sinv.setflags(write=False)
            object.__setattr__(self, "_Sigma", S)
            object.__setattr__(self, "_Sigma_inv", Sinv)
            object.__setattr__(self, "_log_norm", 0.5 * S.shape[0] * LOG_2PI + 0.5 * np.linalg.slogdet(S)[1])
        elif self.kind == "sigma_eps":
            if self.epsilon < 0:
                raise ContractError("epsilon must be nonnegative")
        elif None in (self.sigma_fn, self.dsigma_fn, self.d2sigma_fn):
            raise ContractError("multiplicative_1d needs sigma_fn, dsigma_fn and d2sigma_fn")

    @classmethod
    def additive(cls, sigma, dim: int = 1, floor: float = 1e-10) -> "DiffusionModel":
        """Constant noise; a scalar ``sigma`` means ``sigma * I_dim``."""
        s = np.asarray(sigma, dtype=float)
        if s.ndim == 0:
            s = float(s) * np.eye(dim)
        return cls("additive", sigma=s, floor=floor)

    @classmethod
    def sigma_eps(cls, epsilon: float, floor: float = 1e-10) -> "DiffusionModel":
        return cls("sigma_eps", epsilon=float(epsilon), floor=floor)

    @classmethod
    def multiplicative(cls, sigma_fn, dsigma_fn, d2sigma_fn, floor: float = 1e-10) -> "DiffusionModel":
        return cls("multiplicative_1d", sigma_fn=sigma_fn, dsigma_fn=dsigma_fn,
                   d2sigma_fn=d2sigma_fn, floor=floor)

    @property
    def is_additive(self) -> bool:
        return self.kind == "additive"

    @property
    def dim(self) -> Optional[int]:
        return self.sigma.shape[0] if self.kind == "additive" else 1

    @property
    def noise_dim(self) -> int:
        return self.sigma.shape[1] if self.kind == "additive" else 1

    def scalar_terms(self, x: float) -> tuple[float, float, float, float]:
        """(sigma, Sigma, Sigma', Sigma'') at a scalar point (1D kinds)."""
        if self.kind == "sigma_eps":
            e = self.epsilon
            u = 1.0 / (1.0 + e * x * x)
            return math.sqrt(u), u, -2.0 * e * x * u * u, (6.0 * e * e * x * x - 2.0 * e) * u * u * u
        if self.kind == "additive":
            s = float(self.sigma[0, 0])
            return s, s * s, 0.0, 0.0
        s = float(self.sigma_fn(x))
        ds = float(self.dsigma_fn(x))
        d2s = float(self.d2sigma_fn(x))
        return s, s * s, 2.0 * s * ds, 2.0 * (ds * ds + s * d2s)

    def label(self) -> str:
        if self.kind == "additive":
            s = self.sigma
            if s.shape[0] == s.shape[1] and np.array_equal(s, s[0, 0] * np.eye(s.shape[0])):
                return f"additive(sigma={s[0, 0]:.6g})"
            vals = ";".join(f"{v:.6g}" for v in s.ravel())
            return f"additive(sigma{s.shape[0]}x{s.shape[1]}=[{vals}])"
        if self.kind == "sigma_eps":
            return f"sigma_eps(eps={self.epsilon:g})"
        return "multiplicative_1d(custom)"


# --------------------------------------------------------------------------
# Domains and Langevin parameters
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Domain:
    """Euclidean space, or a periodic box [-L, L)^d."""

    kind: str = "euclidean"
    half_width: float = 4.0

    def __post_init__(self):
        if self.kind not in ("euclidean", "torus"):
            raise ContractError(f"unknown domain kind {self.kind!r}")
        if self.kind == "torus" and not self.half_width > 0:
            raise ContractError("torus half-width must be positive")

    @classmethod
    def torus(cls, half_width: float = 4.0) -> "Domain":
        return cls("torus", float(half_width))

    @property
    def is_torus(self) -> bool:
        return self.kind == "torus"

    def label(self) -> str:
        return f"torus(L={self.half_width:g})" if self.is_torus else "euclidean"


@dataclass(frozen=True)
class LangevinSpec:
    """Scalar-parameter underdamped Langevin system of N particles in d dims.

    Exactly the fluctuation-dissipation relation sigma^2 = 2 gamma / beta is
    enforced; pass either ``sigma`` or ``beta`` (or both, if consistent).
    """

    n_particles: int
    dim: int = 1
    mass: float = 1.0
    gamma: float = 1.0
    sigma: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self):
        if self.n_particles < 1 or self.dim < 1:
            raise ContractError("particle count and dimension must be positive")
        if not self.mass > 0 or self.gamma < 0:
            raise ContractError("mass must be positive and friction nonnegative")
        sigma, beta = self.sigma, self.beta
        if sigma is None and beta is None:
            raise ContractError("give sigma or beta")
        if sigma is not None and beta is not None:
            if not math.isclose(sigma * sigma, 2.0 * self.gamma / beta, rel_tol=1e-12):
                raise ContractError("sigma^2 != 2 gamma / beta (fluctuation-dissipation)")
        elif beta is None:
            if not (sigma > 0 and self.gamma > 0):
                raise ContractError("deriving beta needs sigma > 0 and gamma > 0")
            object.__setattr__(self, "beta", 2.0 * self.gamma / (sigma * sigma))
        else:
            if not beta > 0:
                raise ContractError("beta must be positive")
            object.__setattr__(self, "sigma", math.sqrt(2.0 * self.gamma / beta))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n_dof(self) -> int:
        return self.n_particles * self.dim

    def label(self) -> str:
        return (f"langevin(N={self.n_particles};d={self.dim};m={self.mass:g};"
                f"gamma={self.gamma:g};sigma={self.sigma:.6g})")


@dataclass(frozen=True)
class ModelSpec:
    """One SDE system: overdamped (potential + diffusion) or Langevin."""

    family: str
    potential: PotentialModel
    diffusion: Optional[DiffusionModel] = None
    langevin: Optional[LangevinSpec] = None
    domain: Domain = Domain()

    def __post_init__(self):
        if self.family == "overdamped":
            if self.diffusion is None:
                raise ContractError("overdamped model needs a diffusion")
            if self.diffusion.is_additive:
                if self.diffusion.dim != self.potential.dim:
                    raise ContractError(
                        f"diffusion dimension {self.diffusion.dim} != potential dimension {self.potential.dim}")
            elif self.potential.dim != 1:
                raise ContractError("multiplicative noise is restricted to d = 1")
        elif self.family == "langevin":
            if self.langevin is None:
                raise ContractError("langevin model needs a LangevinSpec")
            if self.potential.dim != self.langevin.n_dof:
                raise ContractError("potential dimension must equal N * d for Langevin models")
        else:
            raise ContractError(f"unknown model family {self.family!r}")

    @classmethod
    def overdamped(cls, potential, diffusion, domain: Domain = Domain()) -> "ModelSpec":
        return cls("overdamped", potential, diffusion=diffusion, domain=domain)

    @classmethod
    def langevin_model(cls, potential, spec: LangevinSpec, domain: Domain = Domain()) -> "ModelSpec":
        return cls("langevin", potential, langevin=spec, domain=domain)

    @property
    def dim(self) -> int:
        return self.potential.dim

    @property
    def is_overdamped(self) -> bool:
        return self.family == "overdamped"

    @property
    def is_additive(self) -> bool:
        return self.family == "overdamped" and self.diffusion.is_additive

    def label(self) -> str:
        parts = [self.potential.label()]
        parts.append(self.diffusion.label() if self.is_overdamped else self.langevin.label())
        parts.append(self.domain.label())
        return "+".join(parts)


# --------------------------------------------------------------------------
# Operations
# --------------------------------------------------------------------------


def _as_point(model: ModelSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != model.dim:
        raise ContractError(f"state has dimension {x.shape[0]}, model expects {model.dim}")
    if not np.all(np.isfinite(x)):
        raise ContractError(f"non-finite state {x.tolist()}")
    return x


def eval_potential(model: ModelSpec, x) -> tuple[float, np.ndarray]:
    """Return ``(V(x), grad V(x))``."""
    return model.potential.evaluate(_as_point(model, x))


def eval_diffusion(model: ModelSpec, x) -> DiffusionEval:
    """Evaluate sigma, Sigma, Sigma^-1 and the covariance derivatives at ``x``.

    Raises
    ------
    SingularDiffusionError
        If Sigma(x) falls below the model's ellipticity floor.
    """
    if not model.is_overdamped:
        raise ContractError("eval_diffusion applies to overdamped models")
    x = _as_point(model, x)
    diff = model.diffusion
    if diff.is_additive:
        d = diff.dim
        return DiffusionEval(diff.sigma, diff._Sigma, diff._Sigma_inv,
                             np.zeros(d), np.zeros(d), diff._log_norm)
    s, S, dS, d2S = diff.scalar_terms(float(x[0]))
    if not S >= diff.floor:
        raise SingularDiffusionError(x, S, diff.floor)
    return DiffusionEval(np.array([[s]]), np.array([[S]]), np.array([[1.0 / S]]),
                         np.array([dS]), np.array([d2S]), 0.5 * LOG_2PI + 0.5 * math.log(S))


@dataclass
class DerivativeReport:
    """Worst disagreement between analytic and central-difference derivatives.

    The error metric is relative where the finite-difference value exceeds
    ``zero_tol`` in magnitude and absolute elsewhere.
    """

    errors: dict
    h: float
    n_points: int

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    def __str__(self):
        lines = [f"derivative check: {self.n_points} points, h={self.h:g}"]
        lines += [f"  {k:<8s} max error {v:.3e}" for k, v in self.errors.items()]
        return "\n".join(lines)


def _mixed_error(analytic, numeric, zero_tol):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    scale = np.where(np.abs(numeric) > zero_tol, np.abs(numeric), 1.0)
    return float(np.max(np.abs(analytic - numeric) / scale))


def validate_derivatives(model: ModelSpec, grid: Sequence, h: float = 1e-5,
                         zero_tol: float = 1e-2) -> DerivativeReport:
    """Compare grad V, Sigma' and Sigma'' with central differences on ``grid``.

    Sigma' is differenced from Sigma, Sigma'' from the analytic Sigma'.
    """
    if not h > 0:
        raise ContractError("finite-difference step must be positive")
    pts = [_as_point(model, g) for g in grid]
    d = model.dim
    errors = {"grad_V": 0.0}
    check_sigma = model.is_overdamped and not model.diffusion.is_additive
    if check_sigma:
        errors["dSigma"] = 0.0
        errors["d2Sigma"] = 0.0
    for x in pts:
        _, g = model.potential.evaluate(x)
        fd = np.empty(d)
        for k in range(d):
            e = np.zeros(d)
            e[k] = h
            fd[k] = (model.potential.evaluate(x + e)[0] - model.potential.evaluate(x - e)[0]) / (2 * h)
        errors["grad_V"] = max(errors["grad_V"], _mixed_error(g, fd, zero_tol))
        if check_sigma:
            t = model.diffusion.scalar_terms
            x0 = float(x[0])
            _, _, dS, d2S = t(x0)
            fd1 = (t(x0 + h)[1] - t(x0 - h)[1]) / (2 * h)
            fd2 = (t(x0 + h)[2] - t(x0 - h)[2]) / (2 * h)
            errors["dSigma"] = max(errors["dSigma"], _mixed_error(dS, fd1, zero_tol))
            errors["d2Sigma"] = max(errors["d2Sigma"], _mixed_error(d2S, fd2, zero_tol))
    return DerivativeReport(errors, h, len(pts))
