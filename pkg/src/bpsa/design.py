"""Propensity score implementations: the design stage.

Maps a propensity draw (plus treatment assignment) to a study design:
quantile strata labels or per-unit weights.  This module never sees
outcome data; its functions accept propensity scores, the treatment
vector, and implementation settings only.

Implementations:

* ``strat``    quantile stratification (deterministic);
* ``nn``       nearest-neighbour matching with replacement within a
               caliper (deterministic);
* ``caliper``  random in-caliper matching with replacement (probabilistic);
* ``ipw``      inverse probability of treatment weights (deterministic);
* ``dr``       the same weights, tagged for doubly robust analysis.

Calipers are expressed in standard deviations of the linear predictor
(logit propensity) computed over the pooled sample.  Match distance is
the absolute difference of linear predictors; nearest-neighbour ties
break toward the smaller propensity, then the smaller original index.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from ._backend import nn_match_counts, random_match_counts
from ._rng import DOMAIN_DESIGN, stream
from .data import DesignFrame
from .errors import BpsaError, DesignError
from .ps_model import AlphaDraw, PSDraw, PSModelSpec, predict_ps

KINDS = ("strat", "nn", "caliper", "ipw", "dr")
DETERMINISTIC_KINDS = ("strat", "nn", "ipw", "dr")
MATCHING_KINDS = ("nn", "caliper")


@dataclass(frozen=True)
class ImplementationSpec:
    """Settings of one propensity score implementation.

    ``q`` strata count (stratification), ``ratio`` controls per treated
    unit (matching), ``caliper`` width in sd-of-linear-predictor units
    (matching), ``r`` repeated draws per propensity draw (probabilistic
    kinds only; coerced to 1 for deterministic kinds).
    """

    kind: str
    q: int = 5
    ratio: int = 1
    caliper: float = 0.5
    r: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown implementation kind {self.kind!r}, expected one of {KINDS}")
        if self.q < 2:
            raise ValueError("q must be >= 2")
        if self.ratio < 1:
            raise ValueError("ratio must be >= 1")
        if self.kind in MATCHING_KINDS and not self.caliper > 0:
            raise ValueError("caliper must be > 0 for matching implementations")
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.kind in DETERMINISTIC_KINDS and self.r != 1:
            object.__setattr__(self, "r", 1)

    @property
    def deterministic(self) -> bool:
        return self.kind in DETERMINISTIC_KINDS


@dataclass(frozen=True)
class Design:
    """Output of one implementation: strata labels or unit weights.

    ``included`` counts the (treated, control) units that participate;
    ``empty_cells`` flags (stratum, arm) pairs with no units (analysis
    decides whether that is fatal); ``provenance`` is the (k, r) index of
    the propensity draw and repeat that produced the design.
    """

    kind: str
    strata: np.ndarray | None = None
    weights: np.ndarray | None = None
    included: tuple[int, int] = (0, 0)
    empty_cells: tuple[tuple[int, int], ...] = ()
    n_pruned_treated: int = 0
    provenance: tuple[int, int] = (0, 0)

    def __post_init__(self):
        for name in ("strata", "weights"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr)
                arr.flags.writeable = False
                object.__setattr__(self, name, arr)
        if (self.strata is None) == (self.weights is None):
            raise ValueError("a design carries either strata labels or unit weights")

    @property
    def n(self) -> int:
        payload = self.strata if self.strata is not None else self.weights
        return payload.shape[0]


def stratify(ps: PSDraw, t: np.ndarray, spec: ImplementationSpec) -> Design:
    """Assign units to ``q`` sample-quantile bins of the propensity scores.

    Bins are left-open right-closed with the lowest bin closed on both
    ends.  Strata with an empty treatment arm are flagged, not fatal.
    """
    e = ps.e
    n = e.shape[0]
    if n < spec.q:
        raise DesignError(f"cannot form {spec.q} strata from {n} units")
    bounds = np.quantile(e, np.arange(1, spec.q) / spec.q)
    labels = 1 + np.searchsorted(bounds, e, side="left")

    t = np.asarray(t)
    empty = []
    for stratum in range(1, spec.q + 1):
        mask = labels == stratum
        n_treated = int(t[mask].sum())
        n_control = int(mask.sum()) - n_treated
        if n_treated == 0:
            empty.append((stratum, 1))
        if n_control == 0:
            empty.append((stratum, 0))
    return Design(
        kind=spec.kind,
        strata=labels.astype(np.int64),
        included=(int(t.sum()), int(n - t.sum())),
        empty_cells=tuple(empty),
    )


def _caliper_windows(ps: PSDraw, t: np.ndarray, spec: ImplementationSpec):
    """Sorted control linear predictors plus per-treated candidate windows."""
    t = np.asarray(t)
    lp = ps.logit()
    treated_idx = np.flatnonzero(t == 1)
    control_idx = np.flatnonzero(t == 0)
    if control_idx.shape[0] < spec.ratio:
        raise DesignError(
            f"{control_idx.shape[0]} controls cannot support ratio {spec.ratio} matching"
        )
    width = spec.caliper * float(lp.std(ddof=1))
    lp_controls = lp[control_idx]
    order = np.argsort(lp_controls, kind="stable")
    lp_sorted = np.ascontiguousarray(lp_controls[order])
    lp_treated = np.ascontiguousarray(lp[treated_idx])
    lo = np.searchsorted(lp_sorted, lp_treated - width, side="left").astype(np.int64)
    hi = np.searchsorted(lp_sorted, lp_treated + width, side="right").astype(np.int64)
    return lp_sorted, lp_treated, lo, hi, treated_idx, control_idx[order]


def _assemble_match(kind, n, counts, pruned, treated_idx, sorted_control_idx, ratio) -> Design:
    n_kept = int(treated_idx.shape[0] - pruned.sum())
    if n_kept == 0:
        raise DesignError("empty design: every treated unit was pruned by the caliper")
    distinct_controls = int((counts > 0).sum())
    total = int(counts.sum())
    assert total == n_kept * ratio

    weights = np.zeros(n)
    weights[treated_idx[~pruned]] = 1.0
    weights[sorted_control_idx] = counts * (distinct_controls / total)
    return Design(
        kind=kind,
        weights=weights,
        included=(n_kept, distinct_controls),
        n_pruned_treated=int(pruned.sum()),
    )


def nn_match(ps: PSDraw, t: np.ndarray, spec: ImplementationSpec) -> Design:
    """Match each treated unit to its ``ratio`` nearest in-caliper controls.

    With replacement; treated units with fewer than ``ratio`` in-caliper
    controls are pruned.  Weights are frequency weights standardized to
    sum, within each arm, to the number of distinct units of that arm in
    the matched set.  Deterministic given the propensity draw.
    """
    lp_sorted, lp_treated, lo, hi, treated_idx, sorted_control_idx = _caliper_windows(ps, t, spec)
    counts, pruned = nn_match_counts(lp_sorted, lp_treated, lo, hi, spec.ratio)
    return _assemble_match(
        spec.kind, ps.e.shape[0], counts, pruned, treated_idx, sorted_control_idx, spec.ratio
    )


def caliper_match(
    ps: PSDraw, t: np.ndarray, spec: ImplementationSpec, rng: np.random.Generator | int
) -> Design:
    """Match each treated unit to ``ratio`` distinct controls drawn
    uniformly from its in-caliper candidates.

    Same pruning and weight standardization as ``nn_match``; stochastic
    given the seed, with controls reusable across treated units.
    """
    if not isinstance(rng, np.random.Generator):
        rng = stream(int(rng), DOMAIN_DESIGN)
    lp_sorted, lp_treated, lo, hi, treated_idx, sorted_control_idx = _caliper_windows(ps, t, spec)
    uniforms = rng.random((lp_treated.shape[0], spec.ratio))
    counts, pruned = random_match_counts(lp_sorted.shape[0], lo, hi, spec.ratio, uniforms)
    return _assemble_match(
        spec.kind, ps.e.shape[0], counts, pruned, treated_idx, sorted_control_idx, spec.ratio
    )


def ipw_weights(ps: PSDraw, t: np.ndarray, kind: str = "ipw") -> Design:
    """Inverse probability of treatment weights: t/e + (1-t)/(1-e)."""
    t = np.asarray(t)
    weights = t / ps.e + (1 - t) / (1.0 - ps.e)
    return Design(
        kind=kind,
        weights=weights,
        included=(int(t.sum()), int(t.shape[0] - t.sum())),
    )


def draw_designs(
    alphas: list[AlphaDraw],
    frame: DesignFrame,
    ps_spec: PSModelSpec,
    impl_spec: ImplementationSpec,
    seed: int,
) -> list[Design]:
    """One design per coefficient draw (``r`` per draw for probabilistic
    kinds), with (k, r) provenance attached and order preserved."""
    if hasattr(frame, "y"):
        raise TypeError(
            "the design stage only accepts the outcome-free DesignFrame view; "
            "pass dataset.design_view()"
        )
    designs: list[Design] = []
    for k, alpha in enumerate(alphas):
        ps = predict_ps(alpha, frame, ps_spec)
        for r in range(impl_spec.r):
            try:
                if impl_spec.kind == "strat":
                    d = stratify(ps, frame.t, impl_spec)
                elif impl_spec.kind == "nn":
                    d = nn_match(ps, frame.t, impl_spec)
                elif impl_spec.kind == "caliper":
                    d = caliper_match(ps, frame.t, impl_spec, stream(seed, DOMAIN_DESIGN, k, r))
                else:  # ipw / dr share the same weights
                    d = ipw_weights(ps, frame.t, kind=impl_spec.kind)
            except BpsaError as exc:
                raise DesignError(f"design draw (k={k}, r={r}) failed: {exc}") from exc
            designs.append(replace(d, provenance=(k, r)))
    return designs


def dump_design(design: Design, t: np.ndarray, path) -> None:
    """Write a per-unit debug dump: unit index, arm, stratum label or weight."""
    t = np.asarray(t)
    value = design.strata if design.strata is not None else design.weights
    header = "stratum" if design.strata is not None else "weight"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit", "arm", header])
        for i in range(design.n):
            v = value[i]
            writer.writerow([i, int(t[i]), int(v) if design.strata is not None else repr(float(v))])
