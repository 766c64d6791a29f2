"""Marginalization over designs: combining rules and the uncertainty split.

Given per-design conditional estimates (delta_k, sigma2_k), k = 1..K:

* marginal mean      = average of the delta_k;
* within variance    = average of the sigma2_k;
* between variance   = sample variance of the delta_k;
* total variance     = within + (1 + 1/K) * between;
* prop_du            = between / (between + within), the share of total
                       variability attributable to the design stage
                       (deliberately without the 1/K inflation factor);
* interval           = mean +/- z * sqrt(total variance).
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

from .analysis import ConditionalEstimate
from .errors import AnalysisError


@dataclass(frozen=True)
class CombinedInference:
    """Design-marginalized posterior summary of the treatment effect."""

    mean: float
    between_var: float
    within_var: float
    total_var: float
    prop_du: float
    interval: tuple[float, float]
    level: float
    k_effective: int


def combine(estimates: list[ConditionalEstimate], level: float = 0.95) -> CombinedInference:
    """Pool conditional estimates across designs.

    Requires at least two estimates (the between-design variance is a
    K-1 denominator sample variance) and non-negative conditional
    variances.  The reduction order is fixed, so results are independent
    of how the estimates were produced or scheduled.
    """
    k = len(estimates)
    if k < 2:
        raise AnalysisError(f"combining needs at least 2 designs, got {k}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"interval level must be in (0, 1), got {level}")
    for est in estimates:
        if est.sigma2 < 0.0:
            raise AnalysisError("negative conditional variance")

    mean = sum(est.delta for est in estimates) / k
    within = sum(est.sigma2 for est in estimates) / k
    between = sum((est.delta - mean) ** 2 for est in estimates) / (k - 1)
    total = within + between + between / k  # within + (1 + 1/K) * between
    prop_du = 0.0 if between == 0.0 else between / (between + within)

    z = NormalDist().inv_cdf(0.5 + level / 2.0)
    half = z * total**0.5
    return CombinedInference(
        mean=mean,
        between_var=between,
        within_var=within,
        total_var=total,
        prop_du=prop_du,
        interval=(mean - half, mean + half),
        level=level,
        k_effective=k,
    )
