"""Weighted Cox score machinery and the Newton solver.

Every estimator in the package is a Cox-type estimating equation

    U(beta) = n^-1 sum_k [ sum_{i fails at t_k} z_i - d_k * E_k(beta) ],
    E_k(beta) = sum_j W_kj z_j exp(beta'z_j) / sum_j W_kj exp(beta'z_j),

differing only in the nonnegative risk weight matrix ``W`` (one row per
distinct failure time). Sampled risk sets give 0/1 rows, the weighted
estimating equation gives inverse-Omega rows, and delayed entry gives
indicator rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, distinct_failure_times
from .errors import DegenerateInformation, NonConvergence


@dataclass(frozen=True)
class FailureGrid:
    """Distinct failure times with tie counts and per-time covariate sums."""

    times: np.ndarray
    counts: np.ndarray
    zsum: np.ndarray
    index: np.ndarray  # time index of each failing subject, -1 for censored rows

    @classmethod
    def of(cls, d: Dataset) -> "FailureGrid":
        times = distinct_failure_times(d)
        index = np.full(d.n, -1)
        ev = d.delta == 1
        index[ev] = np.searchsorted(times, d.y[ev])
        counts = np.bincount(index[ev], minlength=times.size).astype(float)
        zsum = np.zeros((times.size, d.p))
        np.add.at(zsum, index[ev], d.z[ev])
        return cls(times, counts, zsum, index)


def cox_terms(beta, W, z, grid: FailureGrid, n: int, hessian=True):
    """Score and Jacobian ``dU/dbeta`` of the weighted Cox estimating equation."""
    beta = np.asarray(beta, dtype=float)
    eta = z @ beta
    e = np.exp(eta - eta.max())
    s0 = W @ e
    if np.any(s0[grid.counts > 0] <= 0):
        # global shift underflowed somewhere; redo with a per-row shift
        masked = np.where(W > 0, eta[None, :], -np.inf)
        rowmax = masked.max(axis=1)
        rowmax = np.where(np.isfinite(rowmax), rowmax, 0.0)
        E = W * np.exp(np.minimum(masked - rowmax[:, None], 0.0))
        s0 = E.sum(axis=1)
        s1 = E @ z
        s2 = np.einsum("kj,ja,jb->kab", E, z, z) if hessian else None
    else:
        ez = e[:, None] * z
        s1 = W @ ez
        s2 = (W @ (ez[:, :, None] * z[:, None, :]).reshape(z.shape[0], -1)).reshape(-1, z.shape[1], z.shape[1]) if hessian else None
    live = s0 > 0
    mean = np.zeros_like(s1)
    mean[live] = s1[live] / s0[live, None]
    d = np.where(live, grid.counts, 0.0)
    score = (grid.zsum[live].sum(axis=0) - d @ mean) / n if live.any() else np.zeros(z.shape[1])
    if not hessian:
        return score, None
    second = np.zeros_like(s2)
    second[live] = s2[live] / s0[live, None, None] - mean[live, :, None] * mean[live, None, :]
    jac = -np.einsum("k,kab->ab", d, second) / n
    return score, jac


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 50
    halvings: int = 20
    ridge: float = 1e-8
    max_condition: float = 1e12

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass
class SolverDiagnostics:
    iterations: int = 0
    converged: bool = False
    score_norm: float = np.inf
    ridge_used: bool = False
    halvings_used: int = 0
    history: list = field(default_factory=list)


def newton_solve(score_fn, jacobian_fn, beta0, cfg: SolverConfig | None = None):
    """Find a root of ``score_fn`` by damped Newton iterations.

    Steps are halved (up to ``cfg.halvings`` times) until the sup-norm of the
    score decreases; if no halving helps the full step is taken. A ridge
    ``-cfg.ridge * I`` is added to the Jacobian when its condition number
    exceeds ``cfg.max_condition``.
    """
    cfg = cfg or SolverConfig()
    beta = np.array(beta0, dtype=float)
    diag = SolverDiagnostics()
    U = np.asarray(score_fn(beta), dtype=float)
    norm = float(np.max(np.abs(U))) if U.size else 0.0
    diag.history.append(norm)
    while norm >= cfg.tol or not np.isfinite(norm):
        if diag.iterations >= cfg.max_iter:
            diag.score_norm = norm
            raise NonConvergence(f"no convergence after {cfg.max_iter} iterations (|U|={norm:.3g})", beta, diag)
        J = np.asarray(jacobian_fn(beta), dtype=float)
        if not np.all(np.isfinite(J)):
            raise DegenerateInformation("non-finite Jacobian", beta, diag)
        if np.linalg.cond(J) > cfg.max_condition:
            J = J - cfg.ridge * max(1.0, float(np.max(np.abs(J)))) * np.eye(J.shape[0])
            diag.ridge_used = True
        try:
            step = np.linalg.solve(J, U)
        except np.linalg.LinAlgError:
            raise DegenerateInformation("singular Jacobian beyond ridge guard", beta, diag) from None
        diag.iterations += 1
        t = 1.0
        cand = beta - step
        Uc = np.asarray(score_fn(cand), dtype=float)
        nc = float(np.max(np.abs(Uc)))
        h = 0
        while not (nc < norm) and h < cfg.halvings:
            h += 1
            t *= 0.5
            c2 = beta - t * step
            U2 = np.asarray(score_fn(c2), dtype=float)
            n2 = float(np.max(np.abs(U2)))
            if n2 < norm:
                cand, Uc, nc = c2, U2, n2
                break
        else:
            if not np.isfinite(nc):
                raise NonConvergence("score diverged", beta, diag)
        diag.halvings_used += h
        beta, U, norm = cand, Uc, nc
        diag.history.append(norm)
    diag.converged = True
    diag.score_norm = norm
    return beta, diag


class CachedTerms:
    """Memoises ``cox_terms`` for the last beta so score and Jacobian share work."""

    def __init__(self, W, z, grid, n):
        self.W, self.z, self.grid, self.n = W, z, grid, n
        self._key = None
        self._val = None

    def __call__(self, beta):
        key = np.asarray(beta, dtype=float).tobytes()
        if key != self._key:
            self._val = cox_terms(beta, self.W, self.z, self.grid, self.n)
            self._key = key
        return self._val

    def score(self, beta):
        return self(beta)[0]

    def jacobian(self, beta):
        return self(beta)[1]


def uncensored_at_risk(d: Dataset, grid: FailureGrid) -> np.ndarray:
    """``zeta_j(t_k) = I(y_j >= t_k, delta_j = 1)`` as an (m, n) boolean matrix."""
    return (d.y[None, :] >= grid.times[:, None]) & (d.delta[None, :] == 1)


def wee_matrix(d: Dataset, w, grid: FailureGrid | None = None) -> np.ndarray:
    """Risk weights ``zeta_j(t_k) / Omega(y_j)``; ``Omega(t_k)`` cancels in the score."""
    grid = grid or FailureGrid.of(d)
    return uncensored_at_risk(d, grid) * w.inverse_weights()[None, :]
