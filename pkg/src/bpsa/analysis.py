"""Conditional effect estimation given one design.

Two routes, chosen by the design payload:

* strata labels -> a conjugate Bayesian linear outcome model interacting
  treatment with stratum membership (flat prior on coefficients, 1/s^2
  prior on the residual variance), with the effect read off as the
  pooled-stratum-share combination of the per-stratum contrasts;
* unit weights -> weighted-mean-difference point estimates with a
  normal approximation to the conditional posterior.  The same code path
  serves inverse probability weights and matching frequency weights.

Every variance returned here is the analysis-stage (within-design)
variance; marginalizing over designs happens in ``combine``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import Design
from .errors import AnalysisError

DR_VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class ConditionalEstimate:
    """Conditional posterior mean/variance of the effect given one design."""

    delta: float
    sigma2: float
    provenance: tuple[int, int] = (0, 0)
    draws: np.ndarray | None = None
    variance_floored: bool = False

    def __post_init__(self):
        if not np.isfinite(self.delta):
            raise AnalysisError("non-finite conditional effect estimate")
        if not self.sigma2 >= 0.0:
            raise AnalysisError(f"negative conditional variance {self.sigma2}")
        if self.draws is not None:
            d = np.asarray(self.draws, dtype=np.float64)
            d.flags.writeable = False
            object.__setattr__(self, "draws", d)


@dataclass(frozen=True)
class StratOutcomePosterior:
    """Fitted interacted outcome model on strata: coefficients, residual
    variance, and the stratum-by-arm proportion matrix (columns sum to 1)."""

    beta: np.ndarray
    sigma2: float
    p_st: np.ndarray


def _arm_masks(t):
    t = np.asarray(t)
    return t == 1, t == 0


def hajek_estimate(y, t, w) -> float:
    """Ratio-normalized weighted mean difference between arms.

    Invariant to rescaling the weights by any positive constant.
    """
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    treated, control = _arm_masks(t)
    sw1 = float(w[treated].sum())
    sw0 = float(w[control].sum())
    if sw1 <= 0.0 or sw0 <= 0.0:
        raise AnalysisError("zero total weight in a treatment arm")
    return float(w[treated] @ y[treated] / sw1 - w[control] @ y[control] / sw0)


def fixed_weight_variance(y, t, w) -> float:
    """Variance of the weighted mean difference treating weights as known.

    Per arm: the weighted mean square of deviations from the arm's
    weighted mean, divided by the number of units contributing weight to
    that arm.  Applies unchanged to inverse probability weights and to
    matching frequency weights.
    """
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    total = 0.0
    for mask in _arm_masks(t):
        w_arm = w[mask]
        active = w_arm > 0
        n_active = int(active.sum())
        sw = float(w_arm.sum())
        if n_active == 0 or sw <= 0.0:
            raise AnalysisError("zero total weight in a treatment arm")
        mu = float(w_arm @ y[mask] / sw)
        mean_square = float(w_arm @ (y[mask] - mu) ** 2 / sw)
        total += mean_square / n_active
    return total


def hc0_variance(y, t, w) -> float:
    """HC0 sandwich variance of the treatment coefficient in the weighted
    regression of the outcome on an intercept and treatment."""
    y = np.asarray(y, dtype=np.float64)
    t_arr = np.asarray(t, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    design = np.column_stack([np.ones_like(y), t_arr])
    bread_inv = design.T @ (design * w[:, None])
    try:
        bread = np.linalg.inv(bread_inv)
    except np.linalg.LinAlgError:
        raise AnalysisError("singular weighted design (an arm has zero total weight)") from None
    beta = bread @ (design.T @ (w * y))
    resid = y - design @ beta
    score = design * (w * resid)[:, None]
    meat = score.T @ score
    cov = bread @ meat @ bread
    return float(cov[1, 1])


def dr_predictions(y, t, x) -> tuple[np.ndarray, np.ndarray]:
    """Arm-specific linear outcome model predictions for every unit.

    Fits outcome ~ intercept + covariates separately on the treated and
    control subsamples and predicts both potential outcomes everywhere.
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    design = np.column_stack([np.ones(y.shape[0]), x])
    out = []
    for mask, label in zip(_arm_masks(t), ("treated", "control")):
        sub = design[mask]
        coef, _, rank, _ = np.linalg.lstsq(sub, y[mask], rcond=None)
        if rank < design.shape[1]:
            raise AnalysisError(f"rank-deficient outcome model on the {label} subsample")
        out.append(design @ coef)
    return out[0], out[1]


def dr_estimate(y, t, w, yhat1, yhat0) -> float:
    """Doubly robust effect: weighted residual correction plus the mean
    model prediction, differenced between arms."""
    y = np.asarray(y, dtype=np.float64)
    t_arr = np.asarray(t, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    mu1 = float(np.mean(t_arr * w * (y - yhat1)) + np.mean(yhat1))
    mu0 = float(np.mean((1 - t_arr) * w * (y - yhat0)) + np.mean(yhat0))
    return mu1 - mu0


def dr_variance(y, t, w, yhat1, yhat0, subtract_projection: bool = False) -> tuple[float, bool]:
    """Large-sample variance of the doubly robust estimator.

    The default is the mean square of the weighted arm residuals over the
    sample size, which is non-negative by construction and stays
    calibrated when the weights have heavy tails.  With
    ``subtract_projection`` the outcome-model projection term is removed
    from it; that subtraction can turn negative in finite samples (the
    projection factors explode on extreme weights), in which case the
    result is floored at ``DR_VARIANCE_FLOOR`` and flagged.
    """
    y = np.asarray(y, dtype=np.float64)
    t_arr = np.asarray(t, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n = y.shape[0]

    treated, control = _arm_masks(t)
    mu_w1 = float(w[treated] @ y[treated] / w[treated].sum())
    mu_w0 = float(w[control] @ y[control] / w[control].sum())

    term1 = w * t_arr * (y - mu_w1) - w * (1 - t_arr) * (y - mu_w0)
    value = float(np.mean(term1**2) / n)
    if not subtract_projection:
        return value, False

    excess = w - 1.0
    if (excess <= 0).any():
        raise AnalysisError("doubly robust variance requires inverse probability weights (> 1)")
    mu_dr1 = float(np.mean(t_arr * w * (y - yhat1)) + np.mean(yhat1))
    mu_dr0 = float(np.mean((1 - t_arr) * w * (y - yhat0)) + np.mean(yhat0))
    proj = excess ** (t_arr - 0.5) * (yhat1 - mu_dr1) + excess ** (0.5 - t_arr) * (yhat0 - mu_dr0)
    value = float(value - np.mean(proj**2) / n)
    if value < -DR_VARIANCE_FLOOR:
        return DR_VARIANCE_FLOOR, True
    if value < 0.0:
        # cancellation dust below the floor's own resolution
        return 0.0, False
    return value, False


def _strat_design_matrix(t, design: Design):
    if design.strata is None:
        raise AnalysisError("stratified analysis needs a strata design")
    if design.empty_cells:
        raise AnalysisError(
            f"degenerate strata (stratum, arm): {list(design.empty_cells)}"
        )
    labels = design.strata
    t_arr = np.asarray(t, dtype=np.float64)
    q = int(labels.max())
    cols = [np.ones_like(t_arr), t_arr]
    for s in range(2, q + 1):
        ind = (labels == s).astype(np.float64)
        cols.append(ind)
        cols.append(t_arr * ind)
    return np.column_stack(cols), q


def _strat_contrast(t, design: Design, q: int) -> np.ndarray:
    """Coefficient combination giving the pooled-stratum-share effect:
    sum_s (n_s / n) (stratum-s treated mean - stratum-s control mean)."""
    labels = design.strata
    n = labels.shape[0]
    c = np.zeros(2 * q)
    c[1] = 1.0
    for s in range(2, q + 1):
        share = float((labels == s).sum()) / n
        c[2 * (s - 2) + 3] = share
    return c


def strat_proportions(t, design: Design) -> np.ndarray:
    """Stratum-by-arm proportion matrix P[s, arm]; columns sum to one."""
    labels = design.strata
    t = np.asarray(t)
    q = int(labels.max())
    p = np.zeros((q, 2))
    for arm in (0, 1):
        arm_mask = t == arm
        denom = int(arm_mask.sum())
        for s in range(1, q + 1):
            p[s - 1, arm] = float(((labels == s) & arm_mask).sum()) / denom
    return p


def _strat_fit(y, t, design: Design):
    x, q = _strat_design_matrix(t, design)
    y = np.asarray(y, dtype=np.float64)
    n, k = x.shape
    if n <= k:
        raise AnalysisError(f"too few units ({n}) for the {k}-parameter stratified model")
    gram = x.T @ x
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise AnalysisError("rank-deficient stratified design matrix") from None
    beta = np.linalg.solve(gram, x.T @ y)
    rss = float(((y - x @ beta) ** 2).sum())
    c = _strat_contrast(t, design, q)
    return beta, gram, chol, rss, n - k, c


def strat_point(y, t, design: Design) -> float:
    """Stratified effect at the least squares fit."""
    beta, _, _, _, _, c = _strat_fit(y, t, design)
    return float(c @ beta)


def strat_ols(y, t, design: Design) -> tuple[float, float]:
    """Frequentist stratified analysis: point estimate and the variance
    obtained by mapping the coefficient covariance through the contrast."""
    beta, gram, _, rss, dof, c = _strat_fit(y, t, design)
    sigma2 = rss / dof
    gram_inv_c = np.linalg.solve(gram, c)
    return float(c @ beta), float(sigma2 * (c @ gram_inv_c))


def strat_conditional(
    y,
    t,
    design: Design,
    s_draws: int,
    rng: np.random.Generator,
    keep_draws: bool = False,
) -> ConditionalEstimate:
    """Posterior mean/variance of the stratified effect over ``s_draws``
    exact conjugate posterior samples.

    Flat prior on coefficients, 1/s^2 prior on the residual variance:
    the residual variance is scaled inverse chi-square, coefficients are
    conditionally normal around the fit.
    """
    if s_draws < 2:
        raise ValueError("s_draws must be >= 2")
    beta, gram, chol, rss, dof, c = _strat_fit(y, t, design)

    sigma2 = rss / rng.chisquare(dof, size=s_draws)
    z = rng.standard_normal((s_draws, beta.shape[0]))
    # beta | sigma2 ~ N(beta_hat, sigma2 * gram^{-1}); map z through chol^{-T}
    scaled = np.linalg.solve(chol.T, z.T).T * np.sqrt(sigma2)[:, None]
    deltas = (beta @ c) + scaled @ c

    return ConditionalEstimate(
        delta=float(deltas.mean()),
        sigma2=float(deltas.var(ddof=1)),
        provenance=design.provenance,
        draws=deltas if keep_draws else None,
    )


def asymptotic_conditional(
    qhat: float,
    vhat: float,
    s_draws: int,
    rng: np.random.Generator | None = None,
    keep_draws: bool = False,
    provenance: tuple[int, int] = (0, 0),
    variance_floored: bool = False,
) -> ConditionalEstimate:
    """Normal approximation to the conditional posterior.

    Stores (qhat, vhat) exactly; materializes the ``s_draws`` normal
    samples only when asked for (they are needed for interval-shape
    inspection, not for the combining rules).
    """
    if not vhat >= 0.0:
        raise AnalysisError(f"negative variance {vhat} for the normal approximation")
    draws = None
    if keep_draws:
        if rng is None:
            raise ValueError("keep_draws requires an rng")
        draws = qhat + np.sqrt(vhat) * rng.standard_normal(s_draws)
    return ConditionalEstimate(
        delta=float(qhat),
        sigma2=float(vhat),
        draws=draws,
        provenance=provenance,
        variance_floored=variance_floored,
    )
