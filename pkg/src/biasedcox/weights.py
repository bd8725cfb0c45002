"""Residual-censoring estimators and the Omega weight function.

``Omega(y) = int_0^y S_C(t) g(t) dt`` is evaluated exactly: ``S_C`` is a
Kaplan-Meier step function and the truncation CDF is closed-form, so the
integral is a finite sum of CDF increments.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import DomainError
from .truncation import TruncationModel

KERNELS = ("density", "convolution")


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous step function equal to ``initial`` on ``[0, jump_times[0])``."""

    jump_times: np.ndarray
    values: np.ndarray
    initial: float = 1.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.jump_times, t, side="right")
        vals = np.concatenate(([self.initial], self.values))[k]
        return float(vals) if vals.ndim == 0 else vals

    def left_limit(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.jump_times, t, side="left")
        vals = np.concatenate(([self.initial], self.values))[k]
        return float(vals) if vals.ndim == 0 else vals

    def knots(self):
        """Breakpoints ``0 = t_0 < t_1 < ...`` and the value held on ``[t_k, t_{k+1})``."""
        return np.concatenate(([0.0], self.jump_times)), np.concatenate(([self.initial], self.values))


StepSurvival = StepFunction


def _counts(v, event):
    times, inv = np.unique(v, return_inverse=True)
    d = np.bincount(inv, weights=event, minlength=times.size)
    # at risk at t_k: #{v_i >= t_k}; censoring-process events precede failures at ties
    at_risk = v.size - np.concatenate(([0], np.cumsum(np.bincount(inv, minlength=times.size))[:-1]))
    return times, d, at_risk


def km_residual_censoring(d: Dataset) -> StepFunction:
    """Kaplan-Meier estimate of the residual-censoring survival ``S_C``.

    Residual times ``v = y - a`` are the data; a row is a censoring *event*
    when ``delta == 0`` and is right-censored by failure otherwise.
    """
    times, dk, rk = _counts(d.v, 1.0 - d.delta)
    keep = dk > 0
    if not keep.any():
        return StepFunction(np.empty(0), np.empty(0))
    surv = np.cumprod(1.0 - dk / rk)
    return StepFunction(times[keep], surv[keep])


def nelson_aalen_residual_censoring(d: Dataset) -> StepFunction:
    times, dk, rk = _counts(d.v, 1.0 - d.delta)
    keep = dk > 0
    return StepFunction(times[keep], np.cumsum(dk[keep] / rk[keep]), initial=0.0)


def integrate_step(step: StepFunction, primitive, y):
    """``int_0^y step(t) dF(t)`` for a closed-form nondecreasing primitive ``F``."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise DomainError("integration limit must be nonnegative")
    t, s = step.knots()
    Ft = primitive(t)
    cum = np.concatenate(([0.0], np.cumsum(s[:-1] * np.diff(Ft))))
    k = np.searchsorted(t, y, side="right") - 1
    out = cum[k] + s[k] * (primitive(y) - Ft[k])
    return float(out) if out.ndim == 0 else out


def convolve_step(step: StepFunction, cdf, y, lower=None):
    """``int_lower^y step(t) g(y - t) dt`` with ``g = cdf'``, one row per ``y``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    lo_lim = np.zeros_like(y) if lower is None else np.broadcast_to(np.asarray(lower, dtype=float), y.shape)
    t, s = step.knots()
    hi_t = np.concatenate((t[1:], [np.inf]))
    lo = np.maximum(t[None, :], lo_lim[:, None])
    hi = np.minimum(hi_t[None, :], y[:, None])
    active = hi > lo
    lo = np.where(active, lo, y[:, None])
    hi = np.where(active, hi, y[:, None])
    piece = cdf(y[:, None] - lo) - cdf(y[:, None] - hi)
    return (s[None, :] * piece).sum(axis=1)


@dataclass(eq=False)
class CensoringWeights:
    """Kaplan-Meier ``S_C`` with the derived Omega weight function.

    ``kernel="density"`` integrates ``S_C(t) g(t)``; ``kernel="convolution"``
    integrates ``S_C(t) g(y - t)``, the exact probability of an uncensored
    observation at ``y`` given failure there. They coincide without censoring.
    """

    survival: StepFunction
    truncation: TruncationModel
    floor_eps: float = 1e-12
    kernel: str = "density"
    cache: np.ndarray | None = None
    floor_hits: int = field(default=0, compare=False)

    @classmethod
    def fit(cls, d: Dataset, truncation: TruncationModel, floor_eps=1e-12, kernel="density"):
        if kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")
        w = cls(km_residual_censoring(d), truncation, floor_eps, kernel)
        w.cache = w.omega(d.y)
        w.cache.setflags(write=False)
        return w

    @property
    def censoring_free(self) -> bool:
        return self.survival.jump_times.size == 0

    def omega(self, y):
        y_arr = np.asarray(y, dtype=float)
        if np.any(y_arr < 0):
            raise DomainError("omega needs y >= 0")
        if self.kernel == "density" or self.censoring_free:
            out = integrate_step(self.survival, self.truncation._cdf, y_arr)
        else:
            out = convolve_step(self.survival, self.truncation._cdf, y_arr.ravel()).reshape(y_arr.shape)
        return float(out) if np.ndim(out) == 0 else out

    def omega_ratio(self, u, y):
        u = np.asarray(u, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.any(u <= 0) or np.any(u > y):
            raise DomainError("omega_ratio needs 0 < u <= y")
        return self._ratio(self.omega(u), self.omega(y))

    def _ratio(self, num, den):
        den = np.asarray(den, dtype=float)
        low = den < self.floor_eps
        if np.any(low):
            self.floor_hits += int(np.count_nonzero(low))
            den = np.maximum(den, self.floor_eps)
        r = np.asarray(num) / den
        return float(r) if r.ndim == 0 else r

    def inverse_weights(self, y=None):
        """``1 / max(Omega(y), floor_eps)``; defaults to the fitted subjects."""
        om = self.cache if y is None else np.atleast_1d(self.omega(y))
        low = om < self.floor_eps
        if np.any(low):
            self.floor_hits += int(np.count_nonzero(low))
        return 1.0 / np.maximum(om, self.floor_eps)

    def tail_kernel(self, u, y_k, density=True):
        """``h_k(u) = I(u <= y_k) int_u^{y_k} S_C(t) w(t) dt`` as a (len(u), len(y_k)) array.

        ``density=True`` weights by the truncation density matching
        ``kernel``; ``density=False`` uses ``w = 1``.
        """
        u = np.atleast_1d(np.asarray(u, dtype=float))
        y_k = np.atleast_1d(np.asarray(y_k, dtype=float))
        if not density:
            prim = lambda t: np.asarray(t, dtype=float)  # noqa: E731
            W = integrate_step(self.survival, prim, np.concatenate((u, y_k)))
            out = W[u.size:][None, :] - W[: u.size][:, None]
        elif self.kernel == "density" or self.censoring_free:
            W = integrate_step(self.survival, self.truncation._cdf, np.concatenate((u, y_k)))
            out = W[u.size:][None, :] - W[: u.size][:, None]
        else:
            yy = np.broadcast_to(y_k[None, :], (u.size, y_k.size)).ravel()
            uu = np.broadcast_to(u[:, None], (u.size, y_k.size)).ravel()
            out = convolve_step(self.survival, self.truncation._cdf, yy, lower=np.minimum(uu, yy))
            out = out.reshape(u.size, y_k.size)
        return np.where(u[:, None] <= y_k[None, :], np.maximum(out, 0.0), 0.0)
