"""Bayesian logistic treatment-assignment model.

Provides the maximum likelihood fit (used by the frequentist baseline and
to anchor the sampler), a random-walk Metropolis sampler for the
coefficient posterior, and propensity prediction.

Sampler configuration (echoed into every report so runs are auditable):

* prior: independent normal, mean 0, sd 10, on the coefficients of the
  internally standardized covariates;
* proposal: normal with covariance ``(2.38^2 / d) * I_obs^{-1}`` where
  ``I_obs`` is the observed information at the MLE;
* 2,000 burn-in iterations, thinning 10, so ``K`` retained draws come
  from a post-burn-in chain of length ``10 K``;
* the realized acceptance rate must land in [0.1, 0.6].

Covariates are standardized (mean 0, sd 1) for fitting and sampling;
reported coefficients are always on the original scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import DOMAIN_MCMC, stream
from .data import Dataset, DesignFrame
from .errors import ChainError, DataError, SeparationError

PRIOR_SD = 10.0
BURN_IN = 2000
THIN = 10
ACCEPTANCE_RANGE = (0.1, 0.6)

_GRAD_TOL = 1e-8
_MAX_NEWTON = 80
_COEF_BOUND = 30.0  # on the standardized scale; beyond this the odds are numerically degenerate


@dataclass(frozen=True)
class PSModelSpec:
    """Covariate selection for the logistic propensity model.

    The intercept is always included and is not listed in ``columns``.
    """

    columns: tuple[str, ...]
    link: str = "logit"

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate covariate in propensity model spec")
        if not self.columns:
            raise ValueError("propensity model needs at least one covariate")
        if self.link != "logit":
            raise ValueError(f"unsupported link {self.link!r}")

    @property
    def dim(self) -> int:
        return 1 + len(self.columns)


@dataclass(frozen=True)
class AlphaDraw:
    """One coefficient vector, intercept first, on the original scale."""

    coefficients: np.ndarray

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=np.float64)
        coef.flags.writeable = False
        object.__setattr__(self, "coefficients", coef)
        if not np.isfinite(coef).all():
            raise ValueError("non-finite coefficient")


@dataclass(frozen=True)
class PSDraw:
    """Propensity scores for every unit, strictly inside (0, 1)."""

    e: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.e, dtype=np.float64)
        e.flags.writeable = False
        object.__setattr__(self, "e", e)
        if e.size and not ((e > 0.0) & (e < 1.0)).all():
            raise ValueError("propensity scores must lie strictly in (0, 1)")

    def logit(self) -> np.ndarray:
        return np.log(self.e) - np.log1p(-self.e)


def _expit(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ex = np.exp(eta[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _select(columns, x, spec: PSModelSpec) -> np.ndarray:
    idx = []
    for name in spec.columns:
        if name not in columns:
            raise DataError(f"propensity model covariate {name!r} not in data")
        idx.append(columns.index(name))
    return x[:, idx]


def _standardize(x_sel: np.ndarray):
    mu = x_sel.mean(axis=0)
    sd = x_sel.std(axis=0)
    if (sd == 0).any():
        j = int(np.flatnonzero(sd == 0)[0])
        raise SeparationError(f"covariate column {j} is constant: design matrix is rank-deficient")
    return (x_sel - mu) / sd, mu, sd


def _destandardize(coef_std: np.ndarray, mu: np.ndarray, sd: np.ndarray) -> np.ndarray:
    slopes = coef_std[1:] / sd
    intercept = coef_std[0] - float(slopes @ mu)
    return np.concatenate(([intercept], slopes))


def _log_likelihood(design, t, coef):
    eta = design @ coef
    return float(t @ eta - np.logaddexp(0.0, eta).sum())


def _newton_fit(design: np.ndarray, t: np.ndarray):
    """Newton-Raphson logistic fit; returns (coef, observed information)."""
    n, d = design.shape
    coef = np.zeros(d)
    ll = _log_likelihood(design, t, coef)
    for _ in range(_MAX_NEWTON):
        eta = design @ coef
        prob = _expit(eta)
        grad = design.T @ (t - prob)
        w = np.maximum(prob * (1.0 - prob), 1e-300)
        info = design.T @ (design * w[:, None])
        if np.linalg.norm(grad) <= _GRAD_TOL * 0.1:
            return coef, info
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise SeparationError("singular information matrix: rank-deficient design") from None
        # step-halving keeps the likelihood non-decreasing
        scale = 1.0
        for _ in range(40):
            cand = coef + scale * step
            cand_ll = _log_likelihood(design, t, cand)
            if cand_ll >= ll - 1e-12:
                break
            scale *= 0.5
        coef = coef + scale * step
        ll = _log_likelihood(design, t, coef)
        if np.abs(coef).max() > _COEF_BOUND:
            raise SeparationError(
                "coefficients diverged during fitting: data are (near-)separated"
            )
    raise SeparationError("logistic fit did not converge: separation or quasi-separation")


def fit_mle(data: Dataset | DesignFrame, spec: PSModelSpec) -> AlphaDraw:
    """Maximum likelihood coefficients, intercept first, original scale.

    The gradient 2-norm at the returned point is at most 1e-8 (checked on
    the original covariate scale).
    """
    x_sel = _select(data.columns, data.x, spec)
    z, mu, sd = _standardize(x_sel)
    design = np.column_stack([np.ones(z.shape[0]), z])
    t = data.t.astype(np.float64)
    coef_std, _ = _newton_fit(design, t)
    coef = _destandardize(coef_std, mu, sd)

    orig_design = np.column_stack([np.ones(x_sel.shape[0]), x_sel])
    grad = orig_design.T @ (t - _expit(orig_design @ coef))
    if np.linalg.norm(grad) > _GRAD_TOL:
        raise SeparationError(
            f"gradient norm {np.linalg.norm(grad):.2e} exceeds {_GRAD_TOL} at the fit; "
            "consider rescaling extreme covariates"
        )
    return AlphaDraw(coefficients=coef)


def _ess_1d(x: np.ndarray) -> float:
    """Effective sample size via the initial-positive-sequence rule."""
    n = len(x)
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0.0:
        return float(n)
    acf = np.correlate(x, x, mode="full")[n - 1 :] / denom
    tail = 0.0
    for k in range(1, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0.0:
            break
        tail += pair
    return float(n / (1.0 + 2.0 * tail))


def sample_posterior(
    data: Dataset | DesignFrame,
    spec: PSModelSpec,
    k: int,
    seed: int,
    burn_in: int = BURN_IN,
    thin: int = THIN,
) -> tuple[list[AlphaDraw], dict]:
    """Draw ``k`` coefficient vectors from the treatment-model posterior.

    Deterministic given ``seed``. Returns the draws plus sampler
    diagnostics (acceptance rate, minimum coordinate-wise effective
    sample size, chain length).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    x_sel = _select(data.columns, data.x, spec)
    z, mu, sd = _standardize(x_sel)
    design = np.column_stack([np.ones(z.shape[0]), z])
    t = data.t.astype(np.float64)
    d = design.shape[1]

    coef_std, info = _newton_fit(design, t)
    proposal_cov = (2.38**2 / d) * np.linalg.inv(info)
    chol = np.linalg.cholesky(proposal_cov)

    def log_post(b):
        return _log_likelihood(design, t, b) - 0.5 * float(b @ b) / PRIOR_SD**2

    rng = stream(seed, DOMAIN_MCMC)
    total = burn_in + thin * k
    steps = rng.standard_normal((total, d)) @ chol.T
    log_u = np.log(rng.random(total))

    current = coef_std.copy()
    current_lp = log_post(current)
    if not np.isfinite(current_lp):
        raise ChainError("log-posterior is not finite at the MLE start point")

    draws_std = np.empty((k, d))
    kept = 0
    accepted = 0
    for it in range(total):
        proposal = current + steps[it]
        lp = log_post(proposal)
        if log_u[it] < lp - current_lp:
            current = proposal
            current_lp = lp
            accepted += 1
        if it >= burn_in and (it - burn_in + 1) % thin == 0:
            draws_std[kept] = current
            kept += 1
    assert kept == k

    acceptance = accepted / total
    lo, hi = ACCEPTANCE_RANGE
    if not lo <= acceptance <= hi:
        raise ChainError(
            f"Metropolis acceptance rate {acceptance:.3f} outside [{lo}, {hi}]"
        )

    draws = [AlphaDraw(_destandardize(b, mu, sd)) for b in draws_std]
    diagnostics = {
        "acceptance_rate": acceptance,
        "ess_min": min(_ess_1d(draws_std[:, j]) for j in range(d)),
        "chain_length": total,
        "burn_in": burn_in,
        "thin": thin,
        "prior_sd": PRIOR_SD,
    }
    return draws, diagnostics


def predict_ps(alpha: AlphaDraw, data: Dataset | DesignFrame, spec: PSModelSpec) -> PSDraw:
    """Propensity scores implied by one coefficient draw.

    Exact zeros/ones (possible only by floating underflow) are nudged to
    the nearest representable interior value.
    """
    coef = alpha.coefficients
    if coef.shape[0] != spec.dim:
        raise ValueError(
            f"coefficient length {coef.shape[0]} does not match spec dimension {spec.dim}"
        )
    x_sel = _select(data.columns, data.x, spec)
    e = _expit(coef[0] + x_sel @ coef[1:])
    e[e == 0.0] = np.nextafter(0.0, 1.0)
    e[e == 1.0] = np.nextafter(1.0, 0.0)
    return PSDraw(e=e)
