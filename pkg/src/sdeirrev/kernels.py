"""Backend selection and block-wise chain drivers.

The compiled extension ``_kernels`` is used when importable; otherwise the
pure-Python twin ``_pykernels``.  Set ``SDEIRREV_BACKEND=python`` to force
the fallback.  Models outside the kernels' reach (custom callbacks,
multiplicative noise other than sigma_eps) run through :class:`GenericChain`,
which steps with the reference functions in :mod:`integrate` and :mod:`gc`.
"""

from __future__ import annotations

import math
import os

import numpy as np

from . import _pykernels
from .gc import check_variant, gc_increment
from .integrate import PhaseState, bbk_step, em_step, milstein_step
from .model import ContractError, ModelSpec, SingularDiffusionError

try:
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

__all__ = ["BACKEND", "available_backends", "get_backend", "supports", "noise_shape",
           "draw_noise", "NativeChain", "GenericChain", "make_chain"]


def available_backends() -> list[str]:
    return (["cython"] if _compiled is not None else []) + ["python"]


def get_backend(name: str | None = None):
    name = name or os.environ.get("SDEIRREV_BACKEND") or ("cython" if _compiled is not None else "python")
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; reinstall the package")
        return _compiled
    if name == "python":
        return _pykernels
    raise ValueError(f"unknown backend {name!r}")


BACKEND = "cython" if get_backend() is _compiled else "python"

_POT_CODES = {"quadratic": 0, "quartic_radial": 1}


def supports(scheme: str, model: ModelSpec) -> bool:
    """Whether the block kernels handle this (scheme, model) pair."""
    if model.potential.kind not in _POT_CODES:
        return False
    if scheme == "bbk":
        return not model.is_overdamped and model.dim <= 256
    if not model.is_overdamped:
        return False
    kind = model.diffusion.kind
    if scheme == "em":
        return (kind == "additive" and model.dim <= 64) or (kind == "sigma_eps")
    if scheme == "milstein":
        return model.dim == 1 and kind in ("additive", "sigma_eps")
    return False


def noise_shape(scheme: str, model: ModelSpec) -> tuple[int, float]:
    """(width of one step's noise row, variance of each entry per unit dt)."""
    if scheme == "bbk":
        return 2 * model.langevin.n_dof, 0.5
    return model.diffusion.noise_dim, 1.0


def draw_noise(rng: np.random.Generator, scheme: str, model: ModelSpec, n: int, dt: float) -> np.ndarray:
    """Brownian increments for ``n`` steps, in consumption order."""
    width, var = noise_shape(scheme, model)
    return rng.standard_normal((n, width)) * math.sqrt(var * dt)


def _param(model):
    pot = model.potential
    code = _POT_CODES[pot.kind]
    return code, (pot.scale if code == 0 else pot.beta)


class NativeChain:
    """A chain advanced block-by-block by the compiled (or twin) kernels."""

    def __init__(self, scheme, model, dt, state, variant="dropped", backend=None):
        self.scheme = scheme
        self.model = model
        self.dt = float(dt)
        self.exact = int(check_variant(variant) == "exact")
        self.lib = get_backend(backend)
        self.counters = np.zeros(3, dtype=np.int64)
        self.half_width = model.domain.half_width if model.domain.is_torus else 0.0
        self.pot_kind, self.pot_param = _param(model)
        if scheme == "bbk":
            self.q = np.array(state.q, dtype=float)
            self.p = np.array(state.p, dtype=float)
        else:
            self.x = np.array(state, dtype=float).reshape(-1)
            diff = model.diffusion
            self.diff_kind = 0 if diff.is_additive else 1
            if diff.is_additive:
                self.sigma, self.Sigma, self.Sigma_inv = (np.ascontiguousarray(a) for a in
                                                          (diff.sigma, diff._Sigma, diff._Sigma_inv))
            else:
                self.sigma = self.Sigma = self.Sigma_inv = np.zeros((1, 1))
            self.eps = diff.epsilon
            self.floor = diff.floor

    @property
    def state(self):
        if self.scheme == "bbk":
            return PhaseState(self.q.copy(), self.p.copy())
        return self.x.copy()

    @property
    def n_wraps(self) -> int:
        return int(self.counters[0])

    def advance(self, noise: np.ndarray, w_out: np.ndarray):
        """Run ``len(noise)`` steps, writing increments into ``w_out``."""
        noise = np.ascontiguousarray(noise, dtype=float)
        c = self.counters
        if self.scheme == "em":
            status = self.lib.em_block(self.pot_kind, self.pot_param, self.diff_kind, self.sigma, self.Sigma,
                                       self.Sigma_inv, self.eps, self.floor, self.half_width, self.exact,
                                       self.dt, self.x, noise, w_out, c)
        elif self.scheme == "milstein":
            status = self.lib.milstein_block(self.pot_kind, self.pot_param, self.diff_kind,
                                             float(self.sigma[0, 0]), self.eps, self.floor, self.half_width,
                                             self.exact, self.dt, self.x, noise, w_out, c)
        else:
            lg = self.model.langevin
            status = self.lib.bbk_block(self.pot_kind, self.pot_param, lg.mass, lg.gamma, lg.sigma, lg.beta,
                                        self.half_width, self.exact, self.dt, self.q, self.p, noise, w_out, c)
        if status == 1:
            raise SingularDiffusionError(self.x, float("nan"), self.floor)
        if status == 2:
            raise FloatingPointError(f"{self.scheme} chain diverged at block step {int(c[2])} (dt={self.dt})")


class GenericChain:
    """Reference-path chain for models without a kernel (slow)."""

    _steppers = {"em": em_step, "milstein": milstein_step, "bbk": bbk_step}

    def __init__(self, scheme, model, dt, state, variant="dropped"):
        if scheme not in self._steppers:
            raise ContractError(f"unknown scheme {scheme!r}")
        self.scheme = scheme
        self.model = model
        self.dt = float(dt)
        self.variant = check_variant(variant)
        self._state = state
        self.n_wraps = 0

    @property
    def state(self):
        return self._state

    def advance(self, noise: np.ndarray, w_out: np.ndarray):
        step = self._steppers[self.scheme]
        for i, row in enumerate(noise):
            if self.scheme == "bbk":
                n = row.shape[0] // 2
                rec = step(self.model, self._state, self.dt, noise=(row[:n], row[n:]))
            else:
                rec = step(self.model, self._state, self.dt, noise=row)
            nxt = rec.x_next.q if self.scheme == "bbk" else rec.x_next
            if not np.all(np.isfinite(nxt)):
                raise FloatingPointError(f"{self.scheme} chain diverged (dt={self.dt})")
            w_out[i] = gc_increment(self.scheme, self.model, rec, self.variant)
            self.n_wraps += rec.wrapped
            self._state = rec.x_next


def make_chain(scheme, model, dt, state, variant="dropped", backend=None):
    """Kernel-backed chain when supported, else the reference path."""
    if supports(scheme, model):
        return NativeChain(scheme, model, dt, state, variant, backend)
    return GenericChain(scheme, model, dt, state, variant)
