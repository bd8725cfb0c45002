"""Parametric truncation-time laws with known parameters.

All samplers use the inverse-CDF transform of a uniform stream so draws are
reproducible from the uniforms alone.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, InputError


def _check_nonneg(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("truncation time must be nonnegative")
    return t


def _out(x, t):
    return float(x) if np.ndim(t) == 0 else x


class TruncationModel:
    family: str

    def pdf(self, t):
        t = _check_nonneg(t)
        return _out(self._pdf(t), t)

    def cdf(self, t):
        t = _check_nonneg(t)
        return _out(self._cdf(t), t)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return _out(self._ppf(u), u)

    def sample(self, rng: np.random.Generator, k: int) -> np.ndarray:
        if k < 1:
            raise ValueError("k must be >= 1")
        return self._ppf(rng.random(k))

    def quantile(self, q: float) -> float:
        return float(self._ppf(np.asarray(q)))

    def rescaled(self, c: float) -> "TruncationModel":
        """Law of ``c * A`` when ``A`` follows this model."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(TruncationModel):
    rate: float = 1.0
    family = "exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise InputError("rate must be positive")

    def _pdf(self, t):
        return self.rate * np.exp(-self.rate * t)

    def _cdf(self, t):
        return -np.expm1(-self.rate * t)

    def _ppf(self, u):
        return -np.log1p(-u) / self.rate

    def rescaled(self, c):
        return Exponential(self.rate / c)

    def to_dict(self):
        return {"family": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class Uniform(TruncationModel):
    upper: float = 1.0
    family = "uniform"

    def __post_init__(self):
        if not self.upper > 0:
            raise InputError("upper must be positive")

    def _pdf(self, t):
        return np.where(t <= self.upper, 1.0 / self.upper, 0.0)

    def _cdf(self, t):
        return np.minimum(t / self.upper, 1.0)

    def _ppf(self, u):
        return u * self.upper

    def rescaled(self, c):
        return Uniform(self.upper * c)

    def to_dict(self):
        return {"family": "uniform", "upper": self.upper}


@dataclass(frozen=True)
class Weibull(TruncationModel):
    shape: float = 1.0
    scale: float = 1.0
    family = "weibull"

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise InputError("shape and scale must be positive")

    def _pdf(self, t):
        x = t / self.scale
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.shape / self.scale) * x ** (self.shape - 1) * np.exp(-(x**self.shape))

    def _cdf(self, t):
        return -np.expm1(-((t / self.scale) ** self.shape))

    def _ppf(self, u):
        return self.scale * (-np.log1p(-u)) ** (1.0 / self.shape)

    def rescaled(self, c):
        return Weibull(self.shape, self.scale * c)

    def to_dict(self):
        return {"family": "weibull", "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class Custom(TruncationModel):
    """User-supplied law; callables must accept and return numpy arrays."""

    pdf_fn: Callable
    cdf_fn: Callable
    ppf_fn: Callable
    family = "custom"

    def _pdf(self, t):
        return np.asarray(self.pdf_fn(t), dtype=float)

    def _cdf(self, t):
        return np.asarray(self.cdf_fn(t), dtype=float)

    def _ppf(self, u):
        return np.asarray(self.ppf_fn(u), dtype=float)

    def to_dict(self):
        raise InputError("custom truncation models are not serialisable")


_FAMILIES = {
    "exponential": (Exponential, ("rate",)),
    "uniform": (Uniform, ("upper",)),
    "weibull": (Weibull, ("shape", "scale")),
}


def from_dict(cfg: dict) -> TruncationModel:
    try:
        cls, keys = _FAMILIES[str(cfg["family"]).lower()]
    except KeyError:
        raise InputError(f"unknown truncation spec {cfg!r}") from None
    extra = set(cfg) - {"family", *keys}
    if extra:
        raise InputError(f"unexpected truncation keys {sorted(extra)}")
    try:
        return cls(*(float(cfg[k]) for k in keys))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad truncation spec {cfg!r}: {exc}") from None


def parse(text: str) -> TruncationModel:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"truncation spec is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise InputError("truncation spec must be a JSON object")
    return from_dict(cfg)
