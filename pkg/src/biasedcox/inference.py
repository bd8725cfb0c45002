"""Sandwich variance, martingale residuals and the Omega-weighted Breslow baseline."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cox import FailureGrid, cox_terms, uncensored_at_risk, wee_matrix
from .data import Dataset
from .errors import DegenerateInformation
from .weights import CensoringWeights, nelson_aalen_residual_censoring

VARIANTS = ("derived", "literal")


@dataclass(frozen=True, eq=False)
class BaselineHazard:
    times: np.ndarray
    increments: np.ndarray
    at_risk: str = "all"

    def cumulative(self, t, strict=True):
        """``H0(t) = sum of increments at times < t`` (``<= t`` with ``strict=False``)."""
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="left" if strict else "right")
        cum = np.concatenate(([0.0], np.cumsum(self.increments)))[k]
        return float(cum) if cum.ndim == 0 else cum


def breslow_baseline(d: Dataset, w: CensoringWeights, beta_hat, at_risk: str = "all") -> BaselineHazard:
    """Omega-weighted Breslow increments at the distinct failure times.

    ``h0_k = d_k / sum_{j: y_j >= t_k} {Omega(t_k)/Omega(y_j)} exp(beta'z_j)``
    with ``d_k`` tied failures at ``t_k``. ``at_risk="uncensored"`` restricts
    the sum to ``delta_j = 1``, which is the compensator matching the
    martingale residuals.
    """
    if at_risk not in ("all", "uncensored"):
        raise ValueError("at_risk must be 'all' or 'uncensored'")
    grid = FailureGrid.of(d)
    mask = d.y[None, :] >= grid.times[:, None]
    if at_risk == "uncensored":
        mask &= d.delta[None, :] == 1
    om_t = w.omega(grid.times)
    ratio = w._ratio(np.broadcast_to(om_t[:, None], mask.shape), np.broadcast_to(w.cache[None, :], mask.shape))
    e = np.exp(d.z @ np.asarray(beta_hat, dtype=float))
    denom = (mask * ratio) @ e
    return BaselineHazard(grid.times, grid.counts / denom, at_risk)


@dataclass(frozen=True, eq=False)
class MartingaleResiduals:
    failure_times: np.ndarray
    dM: np.ndarray  # (n, m) increments of the failure-process residuals
    censoring_times: np.ndarray
    dMC: np.ndarray  # (n, K) increments of the residual-censoring residuals

    def at_tau(self):
        return self.dM.sum(axis=1), self.dMC.sum(axis=1)


def _censoring_increments(d: Dataset):
    na = nelson_aalen_residual_censoring(d)
    u = na.jump_times
    dH = np.diff(np.concatenate(([0.0], na.values)))
    v = d.v
    jump = (v[:, None] == u[None, :]) & (d.delta[:, None] == 0)
    dMC = jump - (v[:, None] >= u[None, :]) * dH[None, :]
    return u, dMC


def martingale_residuals(d: Dataset, w: CensoringWeights, beta_hat, baseline: BaselineHazard | None = None) -> MartingaleResiduals:
    grid = FailureGrid.of(d)
    baseline = baseline or breslow_baseline(d, w, beta_hat, at_risk="uncensored")
    zeta = uncensored_at_risk(d, grid)
    om_t = w.omega(grid.times)
    e = np.exp(d.z @ np.asarray(beta_hat, dtype=float))
    comp = zeta.T * (om_t * baseline.increments)[None, :] * (e * w.inverse_weights())[:, None]
    dN = np.zeros((d.n, grid.times.size))
    ev = d.delta == 1
    dN[np.flatnonzero(ev), grid.index[ev]] = 1.0
    u, dMC = _censoring_increments(d)
    return MartingaleResiduals(grid.times, dN - comp, u, dMC)


def _check_information(G):
    G = 0.5 * (G + G.T)
    ev = np.linalg.eigvalsh(G)
    if ev.max() <= 0 or ev.min() < 1e-10 * ev.max():
        raise DegenerateInformation(f"information matrix not positive definite (eigenvalues {ev})")
    return G


def invert_information(info) -> np.ndarray:
    G = _check_information(np.asarray(info, dtype=float))
    inv = np.linalg.inv(G)
    return 0.5 * (inv + inv.T)


def gamma_hat(d: Dataset, w: CensoringWeights, beta_hat, risk_context=None) -> np.ndarray:
    """Observed information ``-dU/dbeta`` at ``beta_hat``.

    With ``risk_context=None`` the weighted estimating equation is used;
    otherwise ``risk_context`` is a sequence of sampled risk-set draws and the
    PPL information is averaged over them.
    """
    if risk_context is None:
        grid = FailureGrid.of(d)
        J = cox_terms(beta_hat, wee_matrix(d, w, grid), d.z, grid, d.n)[1]
    else:
        J = np.mean(
            [cox_terms(beta_hat, r.membership.astype(float), d.z, r.grid, d.n)[1] for r in risk_context], axis=0
        )
    return _check_information(-J)


@dataclass(eq=False)
class SandwichParts:
    influence: np.ndarray
    term1: np.ndarray
    term2: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    psi: np.ndarray
    G: np.ndarray = field(default=None)
    dropped_grid_points: int = 0


def sandwich_parts(
    d: Dataset,
    w: CensoringWeights,
    beta_hat,
    baseline: BaselineHazard | None = None,
    variant: str = "derived",
) -> SandwichParts:
    """Per-subject influence terms and ``Psi = Gamma^-1 Sigma Gamma^-1``.

    ``variant="derived"`` propagates the Kaplan-Meier error through the
    weighted score exactly: centred covariates, the density-weighted tail
    kernel, an at-risk denominator and a negative sign on the censoring term.
    ``variant="literal"`` keeps the uncorrected closed form: uncentred
    covariates, unweighted kernel ``int_t^{y_k} S_C``, strict ``I(v > t)``
    denominator and a positive sign.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    beta = np.asarray(beta_hat, dtype=float)
    n = d.n
    grid = FailureGrid.of(d)
    zeta = uncensored_at_risk(d, grid).astype(float)
    inv_w = w.inverse_weights()
    e = np.exp(d.z @ beta)
    Wm = zeta * inv_w[None, :]
    s0 = Wm @ e
    mean = (Wm @ (e[:, None] * d.z)) / s0[:, None]

    if baseline is None:
        a = grid.counts / s0
    else:
        a = w.omega(grid.times) * baseline.increments
    ev = d.delta == 1
    term1 = np.zeros((n, d.p))
    term1[ev] = d.z[ev] - mean[grid.index[ev]]
    A = zeta.T @ a
    B = zeta.T @ (a[:, None] * mean)
    term1 -= (e * inv_w)[:, None] * (d.z * A[:, None] - B)

    u, dMC = _censoring_increments(d)
    term2 = np.zeros((n, d.p))
    G = np.zeros((u.size, d.p))
    dropped = 0
    if u.size:
        b = grid.counts / s0
        Ab = zeta.T @ b
        if variant == "derived":
            c = (e * inv_w**2)[:, None] * (d.z * Ab[:, None] - zeta.T @ (b[:, None] * mean))
            H = w.tail_kernel(u, d.y, density=True)
            ybar = (d.v[None, :] >= u[:, None]).sum(axis=1) / n
        else:
            c = (e * inv_w**2 * Ab)[:, None] * d.z
            H = w.tail_kernel(u, d.y, density=False)
            ybar = (d.v[None, :] > u[:, None]).sum(axis=1) / n
        G = H @ c / n
        live = ybar > 0
        dropped = int(np.count_nonzero(~live))
        coef = np.zeros_like(G)
        coef[live] = G[live] / ybar[live, None]
        term2 = dMC @ coef
    infl = term1 - term2 if variant == "derived" else term1 + term2
    sigma = infl.T @ infl / n
    gamma = _check_information(-cox_terms(beta, Wm, d.z, grid, n)[1])
    ginv = np.linalg.inv(gamma)
    psi = ginv @ sigma @ ginv
    psi = 0.5 * (psi + psi.T)
    return SandwichParts(infl, term1, term2, sigma, gamma, psi, G, dropped)


def sandwich_covariance(d, w, beta_hat, baseline=None, variant="derived") -> np.ndarray:
    return sandwich_parts(d, w, beta_hat, baseline, variant).psi


def ase_report(fit) -> np.ndarray:
    """Standard errors ``sqrt(diag(Psi) / n)``."""
    return np.sqrt(np.diag(fit.covariance) / fit.n)
