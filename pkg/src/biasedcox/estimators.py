"""Point estimators: sampled-risk-set pseudo-partial likelihood (PPL),
the deterministic weighted estimating equation (WEE), and the delayed-entry
partial likelihood (PL) used as comparator."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import inference
from .cox import CachedTerms, FailureGrid, SolverConfig, cox_terms, newton_solve, uncensored_at_risk, wee_matrix
from .data import Dataset
from .errors import NonConvergence
from .rng import stream
from .weights import CensoringWeights


@dataclass(frozen=True)
class AdjustedRiskSet:
    failure_time_index: int
    members: np.ndarray


@dataclass(frozen=True)
class RiskSetDraw:
    """One sampled collection of bias-adjusted risk sets as an (m, n) 0/1 matrix."""

    grid: FailureGrid
    membership: np.ndarray

    def as_list(self) -> list[AdjustedRiskSet]:
        return [AdjustedRiskSet(k, np.flatnonzero(row)) for k, row in enumerate(self.membership)]


@dataclass
class FitResult:
    method: str
    beta_hat: np.ndarray
    covariance: np.ndarray | None
    n: int
    iterations: int
    converged: bool
    score_norm: float
    replication_betas: np.ndarray | None = None
    dropped_replications: int = 0
    ridge_used: bool = False
    warnings: dict = field(default_factory=dict)
    baseline: "inference.BaselineHazard | None" = None

    @property
    def se(self) -> np.ndarray:
        return inference.ase_report(self)

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "n": self.n,
            "beta": self.beta_hat.tolist(),
            "se": None if self.covariance is None else self.se.tolist(),
            "covariance": None
            if self.covariance is None
            else {"dim": int(self.covariance.shape[0]), "row_major": self.covariance.ravel().tolist()},
            "diagnostics": {
                "iterations": self.iterations,
                "converged": self.converged,
                "score_norm": self.score_norm,
                "ridge_used": self.ridge_used,
                "dropped_replications": self.dropped_replications,
            },
            "warnings": dict(self.warnings),
        }
        if self.replication_betas is not None:
            out["replication_betas"] = self.replication_betas.tolist()
        if self.baseline is not None:
            out["breslow"] = {
                "times": self.baseline.times.tolist(),
                "increments": self.baseline.increments.tolist(),
                "cumhaz": np.cumsum(self.baseline.increments).tolist(),
            }
        return out


def sample_adjusted_risk_sets(d: Dataset, w: CensoringWeights, rng, grid: FailureGrid | None = None) -> RiskSetDraw:
    """Thin each uncensored risk set with keep-probability ``Omega(t_k) / Omega(y_j)``.

    ``rng`` needs only a ``random(shape)`` method. One uniform is consumed per
    (failure time, subject) cell in row-major order, so a draw depends on the
    stream alone. Subject ``j`` is kept when its uniform is below the ratio.
    """
    grid = grid or FailureGrid.of(d)
    zeta = uncensored_at_risk(d, grid)
    u = np.asarray(rng.random((grid.times.size, d.n)), dtype=float)
    om_t = w.omega(grid.times)
    ratio = w._ratio(np.broadcast_to(om_t[:, None], zeta.shape), np.broadcast_to(w.cache[None, :], zeta.shape))
    keep = zeta & (u < ratio)
    # the failing subject has ratio exactly one
    keep |= zeta & (d.y[None, :] == grid.times[:, None])
    return RiskSetDraw(grid, keep)


def _as_draw(risk_sets, d: Dataset) -> RiskSetDraw:
    if isinstance(risk_sets, RiskSetDraw):
        return risk_sets
    grid = FailureGrid.of(d)
    M = np.zeros((grid.times.size, d.n), dtype=bool)
    for rs in risk_sets:
        M[rs.failure_time_index, rs.members] = True
    return RiskSetDraw(grid, M)


def ppl_score(beta, risk_sets, d: Dataset) -> np.ndarray:
    draw = _as_draw(risk_sets, d)
    return cox_terms(beta, draw.membership.astype(float), d.z, draw.grid, d.n, hessian=False)[0]


def ppl_loglik_hessian(beta, risk_sets, d: Dataset) -> np.ndarray:
    draw = _as_draw(risk_sets, d)
    return cox_terms(beta, draw.membership.astype(float), d.z, draw.grid, d.n)[1]


def wee_score(beta, d: Dataset, w: CensoringWeights) -> np.ndarray:
    grid = FailureGrid.of(d)
    return cox_terms(beta, wee_matrix(d, w, grid), d.z, grid, d.n, hessian=False)[0]


def wee_jacobian(beta, d: Dataset, w: CensoringWeights) -> np.ndarray:
    grid = FailureGrid.of(d)
    return cox_terms(beta, wee_matrix(d, w, grid), d.z, grid, d.n)[1]


def delayed_entry_matrix(d: Dataset, grid: FailureGrid | None = None) -> np.ndarray:
    grid = grid or FailureGrid.of(d)
    t = grid.times[:, None]
    return ((d.a[None, :] < t) & (t <= d.y[None, :])).astype(float)


def _warnings(w: CensoringWeights | None, **extra) -> dict:
    out = {k: v for k, v in extra.items() if v}
    if w is not None and w.floor_hits:
        out["omega_floor_hits"] = w.floor_hits
    return out


def fit_ppl(
    d: Dataset,
    w: CensoringWeights,
    L: int = 10,
    seed: int = 0,
    solver_cfg: SolverConfig | None = None,
    key: tuple = (),
    variance: str | None = "derived",
    max_drop_fraction: float = 0.2,
) -> FitResult:
    """Average of ``L`` PPL fits, each on an independently sampled set of risk sets.

    Replication ``l`` draws from ``stream(seed, *key, l)``. Replications
    that fail to converge are dropped; more than ``max_drop_fraction`` of
    them failing raises :class:`NonConvergence`.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    cfg = solver_cfg or SolverConfig()
    grid = FailureGrid.of(d)
    betas, iters, norms, ridge = [], 0, [], False
    dropped = 0
    start = np.zeros(d.p)
    for l in range(L):
        draw = sample_adjusted_risk_sets(d, w, stream(seed, *key, l), grid)
        terms = CachedTerms(draw.membership.astype(float), d.z, grid, d.n)
        try:
            b, diag = newton_solve(terms.score, terms.jacobian, start, cfg)
        except NonConvergence:
            dropped += 1
            continue
        betas.append(b)
        iters += diag.iterations
        norms.append(diag.score_norm)
        ridge |= diag.ridge_used
        start = b
    if dropped > max_drop_fraction * L:
        raise NonConvergence(f"{dropped} of {L} PPL replications failed to converge")
    reps = np.array(betas)
    beta = reps.mean(axis=0)
    cov = inference.sandwich_covariance(d, w, beta, variant=variance) if variance else None
    return FitResult(
        method="ppl",
        beta_hat=beta,
        covariance=cov,
        n=d.n,
        iterations=iters,
        converged=True,
        score_norm=max(norms),
        replication_betas=reps,
        dropped_replications=dropped,
        ridge_used=ridge,
        warnings=_warnings(w, dropped_replications=dropped),
    )


def fit_wee(d: Dataset, w: CensoringWeights, solver_cfg: SolverConfig | None = None, variance: str | None = "derived") -> FitResult:
    grid = FailureGrid.of(d)
    terms = CachedTerms(wee_matrix(d, w, grid), d.z, grid, d.n)
    beta, diag = newton_solve(terms.score, terms.jacobian, np.zeros(d.p), solver_cfg)
    cov = inference.sandwich_covariance(d, w, beta, variant=variance) if variance else None
    return FitResult(
        method="wee",
        beta_hat=beta,
        covariance=cov,
        n=d.n,
        iterations=diag.iterations,
        converged=True,
        score_norm=diag.score_norm,
        ridge_used=diag.ridge_used,
        warnings=_warnings(w),
    )


def fit_reference_pl(d: Dataset, solver_cfg: SolverConfig | None = None) -> FitResult:
    """Delayed-entry Cox partial likelihood, Breslow ties, inverse-information variance."""
    grid = FailureGrid.of(d)
    W = delayed_entry_matrix(d, grid)
    empty = int(np.count_nonzero(W.sum(axis=1) == 0))
    terms = CachedTerms(W, d.z, grid, d.n)
    beta, diag = newton_solve(terms.score, terms.jacobian, np.zeros(d.p), solver_cfg)
    info = -terms.jacobian(beta)
    cov = inference.invert_information(info)
    return FitResult(
        method="pl",
        beta_hat=beta,
        covariance=cov,
        n=d.n,
        iterations=diag.iterations,
        converged=True,
        score_norm=diag.score_norm,
        ridge_used=diag.ridge_used,
        warnings=_warnings(None, empty_risk_sets=empty),
    )
