"""Latent-trait estimation from observed graded responses.

Single-time-point scoring (MLE and MAP with a normal prior) and
per-subject trajectory estimation: intercept/slope deviations under a
bivariate-normal population law, fitted by damped Newton.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .grm import ItemBank, ItemParams, conditional_sd
from .population import Normal

THETA_BOUND = 8.0  # search bounds on the trait scale, generous vs observed ranges
_GRID_STEP = 0.02
_LOG_FLOOR = 1e-14  # response probabilities are floored here inside logs


@dataclass(frozen=True)
class ResponseSet:
    """Levels observed for one respondent at one time point."""

    responses: tuple[tuple[str, int], ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "responses", tuple((str(i), int(m)) for i, m in self.responses)
        )
        ids = [i for i, _ in self.responses]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate item ids in response set")

    def __len__(self) -> int:
        return len(self.responses)

    def validate_against(self, bank: ItemBank) -> None:
        for item_id, level in self.responses:
            item = bank.get(item_id)  # raises KeyError for unknown ids
            if not 0 <= level <= item.max_level:
                raise ValueError(
                    f"level {level} out of range 0..{item.max_level} for item {item_id!r}"
                )


@dataclass(frozen=True)
class PosteriorSummary:
    """Point estimate of the trait with its standard deviation."""

    point_estimate: float
    sd: float
    method: Literal["mle", "map"]
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class TrajectoryPrior:
    """Population law of per-subject trajectories.

    Severity at time t is beta0 + u0 + (beta1 + u1) * t with (u0, u1)
    bivariate normal. Defaults are the fitted population values for the
    motor-severity application (variance scale for the random effects).
    """

    beta0: float = 0.0
    beta1: float = 0.075
    sigma2_u0: float = 1.0
    sigma2_u1: float = 0.027
    rho: float = 0.085

    def __post_init__(self) -> None:
        if self.sigma2_u0 <= 0 or self.sigma2_u1 <= 0:
            raise ValueError("random-effect variances must be > 0")
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"correlation must lie strictly inside (-1, 1), got {self.rho}")

    @property
    def sigma(self) -> np.ndarray:
        cov = self.rho * math.sqrt(self.sigma2_u0 * self.sigma2_u1)
        return np.array([[self.sigma2_u0, cov], [cov, self.sigma2_u1]])


@dataclass(frozen=True)
class TrajectoryEstimate:
    """Estimated intercept/slope deviations for one subject."""

    u0_hat: float
    u1_hat: float
    covariance: np.ndarray
    severities: tuple[tuple[float, float], ...]  # (time, predicted severity)
    converged: bool
    n_iter: int
    gradient_norm: float
    objective_trace: tuple[float, ...] = field(repr=False, default=())


def _response_arrays(responses: ResponseSet, bank: ItemBank):
    """Per-response parameter arrays: (a, lower threshold, upper threshold).

    The lower threshold is -inf at level 0 and the upper +inf at the top
    level, encoding the certain boundaries.
    """
    a = np.empty(len(responses))
    b_lo = np.empty(len(responses))
    b_hi = np.empty(len(responses))
    for j, (item_id, level) in enumerate(responses.responses):
        item = bank.get(item_id)
        if not 0 <= level <= item.max_level:
            raise ValueError(
                f"level {level} out of range 0..{item.max_level} for item {item_id!r}"
            )
        a[j] = item.a
        b_lo[j] = item.b[level - 1] if level >= 1 else -np.inf
        b_hi[j] = item.b[level] if level < item.max_level else np.inf
    return a, b_lo, b_hi


def _loglik_parts(a, b_lo, b_hi, theta):
    """Per-response log-probability, first and second theta-derivatives.

    Plain elementwise broadcasting: pass theta[:, None] to evaluate a grid
    of trait values against the response arrays, or an aligned array for
    one theta per response. Where the floored probability binds, the
    response contributes a flat (zero-derivative) term.
    """
    th = np.asarray(theta, dtype=float)
    p_lo = np.where(np.isinf(b_lo), 1.0, expit(a * (th - b_lo)))
    p_hi = np.where(np.isinf(b_hi), 0.0, expit(a * (th - b_hi)))
    d = p_lo - p_hi
    floored = d < _LOG_FLOOR
    d = np.maximum(d, _LOG_FLOOR)
    w_lo = np.where(np.isinf(b_lo), 0.0, a * p_lo * (1.0 - p_lo))
    w_hi = np.where(np.isinf(b_hi), 0.0, a * p_hi * (1.0 - p_hi))
    v_lo = np.where(np.isinf(b_lo), 0.0, a * a * p_lo * (1.0 - p_lo) * (1.0 - 2.0 * p_lo))
    v_hi = np.where(np.isinf(b_hi), 0.0, a * a * p_hi * (1.0 - p_hi) * (1.0 - 2.0 * p_hi))
    logp = np.log(d)
    d1 = np.where(floored, 0.0, (w_lo - w_hi) / d)
    d2 = np.where(floored, 0.0, (v_lo - v_hi) / d - d1 * d1)
    return logp, d1, d2


def log_likelihood_theta(responses: ResponseSet, bank: ItemBank, theta):
    """Log-likelihood of the observed levels at a trait value."""
    if len(responses) == 0:
        raise ValueError("response set is empty")
    a, b_lo, b_hi = _response_arrays(responses, bank)
    scalar = np.ndim(theta) == 0
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    logp, _, _ = _loglik_parts(a, b_lo, b_hi, th[:, None])
    out = logp.sum(axis=-1)
    return float(out[0]) if scalar else out


def log_likelihood_theta_grad(responses: ResponseSet, bank: ItemBank, theta):
    """Analytic d/dtheta of log_likelihood_theta."""
    if len(responses) == 0:
        raise ValueError("response set is empty")
    a, b_lo, b_hi = _response_arrays(responses, bank)
    scalar = np.ndim(theta) == 0
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    _, d1, _ = _loglik_parts(a, b_lo, b_hi, th[:, None])
    out = d1.sum(axis=-1)
    return float(out[0]) if scalar else out


def _loglik_curvature(responses: ResponseSet, bank: ItemBank, theta: float) -> float:
    a, b_lo, b_hi = _response_arrays(responses, bank)
    _, _, d2 = _loglik_parts(a, b_lo, b_hi, np.array([theta])[:, None])
    return float(d2.sum(axis=-1)[0])


def _maximize_1d(objective_grad, grid: np.ndarray, values: np.ndarray) -> float:
    """Refine the grid argmax by bisection on the derivative sign change."""
    i = int(np.argmax(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    g_lo = objective_grad(lo)
    g_hi = objective_grad(hi)
    if g_lo < 0 or g_hi > 0:  # no bracketed stationary point; keep grid argmax
        return float(grid[i])
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if objective_grad(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    return 0.5 * (lo + hi)


def _boundary_flags(responses: ResponseSet, bank: ItemBank) -> tuple[str, ...]:
    levels = [m for _, m in responses.responses]
    maxima = [bank.get(i).max_level for i, _ in responses.responses]
    if all(m == 0 for m in levels):
        return ("all_min_levels",)
    if all(m == mx for m, mx in zip(levels, maxima)):
        return ("all_max_levels",)
    return ()


def estimate_theta_mle(responses: ResponseSet, bank: ItemBank) -> PosteriorSummary:
    """Maximum-likelihood trait estimate with its asymptotic SD.

    All-minimum and all-maximum response patterns have no finite
    maximizer; those return a flagged estimate clipped to the search
    bound. The SD always equals conditional_sd of the answered items at
    the returned estimate.
    """
    if len(responses) == 0:
        raise ValueError("response set is empty")
    responses.validate_against(bank)
    items = bank.subset([i for i, _ in responses.responses])
    flags = _boundary_flags(responses, bank)
    if flags:
        theta_hat = -THETA_BOUND if flags[0] == "all_min_levels" else THETA_BOUND
        return PosteriorSummary(theta_hat, conditional_sd(items, theta_hat), "mle", flags)

    grid = np.arange(-THETA_BOUND, THETA_BOUND + _GRID_STEP / 2, _GRID_STEP)
    values = log_likelihood_theta(responses, bank, grid)
    theta_hat = _maximize_1d(
        lambda t: log_likelihood_theta_grad(responses, bank, t), grid, values
    )
    i = int(np.argmax(values))
    if i in (0, len(grid) - 1):
        flags = ("at_search_bound",)
        theta_hat = float(grid[i])
    return PosteriorSummary(theta_hat, conditional_sd(items, theta_hat), "mle", flags)


def estimate_theta_map(
    responses: ResponseSet, bank: ItemBank, prior: Normal
) -> PosteriorSummary:
    """Posterior-mode trait estimate under a normal prior.

    Finite for every response pattern, including empty sets (which return
    the prior itself). The SD comes from the curvature at the mode:
    (observed information + prior precision)^(-1/2).
    """
    prior_prec = 1.0 / (prior.sd * prior.sd)
    if len(responses) == 0:
        return PosteriorSummary(prior.mean, prior.sd, "map", ())
    responses.validate_against(bank)

    grid = np.arange(-THETA_BOUND, THETA_BOUND + _GRID_STEP / 2, _GRID_STEP)
    values = log_likelihood_theta(responses, bank, grid) - 0.5 * prior_prec * (
        grid - prior.mean
    ) ** 2

    def grad(t: float) -> float:
        return log_likelihood_theta_grad(responses, bank, t) - prior_prec * (t - prior.mean)

    theta_hat = _maximize_1d(grad, grid, values)
    observed_info = max(-_loglik_curvature(responses, bank, theta_hat), 0.0)
    sd = (observed_info + prior_prec) ** -0.5
    return PosteriorSummary(theta_hat, sd, "map", ())


def _visit_record_arrays(
    visits: Sequence[tuple[float, ResponseSet]], bank: ItemBank
):
    times = []
    a_parts, lo_parts, hi_parts = [], [], []
    for t, rs in visits:
        t = float(t)
        if not np.isfinite(t) or t < 0:
            raise ValueError(f"visit times must be finite and >= 0, got {t}")
        if len(rs) == 0:
            continue
        rs.validate_against(bank)
        a, b_lo, b_hi = _response_arrays(rs, bank)
        a_parts.append(a)
        lo_parts.append(b_lo)
        hi_parts.append(b_hi)
        times.append(np.full(len(rs), t))
    if not times:
        return None
    return (
        np.concatenate(times),
        np.concatenate(a_parts),
        np.concatenate(lo_parts),
        np.concatenate(hi_parts),
    )


def estimate_trajectory_map(
    visits: Sequence[tuple[float, ResponseSet]],
    bank: ItemBank,
    prior: TrajectoryPrior,
    max_iter: int = 100,
    grad_tol: float = 1e-10,
) -> TrajectoryEstimate:
    """Posterior-mode (u0, u1) for one subject from longitudinal responses.

    Maximizes the response log-likelihood plus the bivariate-normal
    log-density of the deviations by damped Newton; each accepted step does
    not decrease the objective. A panel with no responses returns the
    prior mode (0, 0).
    """
    sigma_inv = np.linalg.inv(prior.sigma)
    data = _visit_record_arrays(visits, bank)
    visit_times = [float(t) for t, _ in visits]

    def severities(u0: float, u1: float) -> tuple[tuple[float, float], ...]:
        return tuple(
            (t, prior.beta0 + u0 + (prior.beta1 + u1) * t) for t in visit_times
        )

    if data is None:
        return TrajectoryEstimate(
            u0_hat=0.0,
            u1_hat=0.0,
            covariance=prior.sigma.copy(),
            severities=severities(0.0, 0.0),
            converged=True,
            n_iter=0,
            gradient_norm=0.0,
            objective_trace=(0.0,),
        )

    t_rec, a_rec, lo_rec, hi_rec = data
    design = np.stack([np.ones_like(t_rec), t_rec])  # d theta / d u

    def objective_parts(u: np.ndarray):
        theta = prior.beta0 + u[0] + (prior.beta1 + u[1]) * t_rec
        logp, d1, d2 = _loglik_parts(a_rec, lo_rec, hi_rec, theta)
        obj = float(logp.sum()) - 0.5 * float(u @ sigma_inv @ u)
        grad = design @ d1 - sigma_inv @ u
        hess = (design * d2) @ design.T - sigma_inv
        return obj, grad, hess

    u = np.zeros(2)
    obj, grad, hess = objective_parts(u)
    trace = [obj]
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        gnorm = float(np.linalg.norm(grad))
        if gnorm < grad_tol:
            converged = True
            break
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            step = grad
        if grad @ step <= 0:  # not an ascent direction; fall back to gradient
            step = grad
        lam = 1.0
        accepted = False
        for _ in range(60):
            cand = u + lam * step
            cand_obj, cand_grad, cand_hess = objective_parts(cand)
            if cand_obj >= obj:
                u, obj, grad, hess = cand, cand_obj, cand_grad, cand_hess
                accepted = True
                break
            lam *= 0.5
        trace.append(obj)
        if not accepted:
            converged = float(np.linalg.norm(grad)) < grad_tol
            break
    else:
        converged = float(np.linalg.norm(grad)) < grad_tol

    gnorm = float(np.linalg.norm(grad))
    cov = np.linalg.inv(-hess)
    cov = 0.5 * (cov + cov.T)
    return TrajectoryEstimate(
        u0_hat=float(u[0]),
        u1_hat=float(u[1]),
        covariance=cov,
        severities=severities(float(u[0]), float(u[1])),
        converged=converged and gnorm < 1e-8,
        n_iter=n_iter,
        gradient_norm=gnorm,
        objective_trace=tuple(trace),
    )


def predict_severity(traj: TrajectoryEstimate, prior: TrajectoryPrior, t: float) -> float:
    """Severity at time t: beta0 + u0 + (beta1 + u1) * t."""
    return prior.beta0 + traj.u0_hat + (prior.beta1 + traj.u1_hat) * float(t)
