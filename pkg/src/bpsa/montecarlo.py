"""Pipeline orchestration and the replicated simulation study.

``run_bpsa`` wires posterior sampling -> design draws -> per-design
analysis -> combining rules; ``run_psa`` is the frequentist baseline that
conditions on the single maximum likelihood design.  ``run_simulation``
replicates either pipeline over freshly generated datasets and aggregates
bias, variance, coverage and the design-uncertainty share per grid cell.

The design stage only ever receives the outcome-free ``DesignFrame``
view of a dataset, so outcome information cannot reach propensity
estimation or implementation.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from statistics import NormalDist

import numpy as np

from ._backend import backend_name
from ._rng import (
    DOMAIN_ANALYSIS,
    DOMAIN_CELL,
    DOMAIN_DATA,
    DOMAIN_DESIGN,
    DOMAIN_MCMC,
    child_seed,
    stream,
)
from .analysis import (
    ConditionalEstimate,
    asymptotic_conditional,
    dr_estimate,
    dr_predictions,
    dr_variance,
    fixed_weight_variance,
    hajek_estimate,
    hc0_variance,
    strat_conditional,
    strat_ols,
)
from .combine import CombinedInference, combine
from .data import Dataset, DGPConfig, generate
from .design import (
    Design,
    ImplementationSpec,
    caliper_match,
    draw_designs,
    ipw_weights,
    nn_match,
    stratify,
)
from .errors import BpsaError, DataError
from .ps_model import PSModelSpec, fit_mle, predict_ps, sample_posterior

METHODS = ("bpsa", "psa")

# The four propensity model specifications of the simulation grid, keyed
# by the covariate-role prefixes they include.
PS_MODELS: dict[str, tuple[str, ...]] = {
    "confound": ("c",),
    "instru": ("c", "i"),
    "instru_prog": ("c", "i", "g"),
    "instru_prog_noise": ("c", "i", "g", "z"),
}

IMPLEMENTATIONS: dict[str, ImplementationSpec] = {
    "caliper11": ImplementationSpec(kind="caliper", ratio=1),
    "caliper15": ImplementationSpec(kind="caliper", ratio=5),
    "nn": ImplementationSpec(kind="nn"),
    "strat": ImplementationSpec(kind="strat"),
    "ipw": ImplementationSpec(kind="ipw"),
    "dr": ImplementationSpec(kind="dr"),
}

IMPLEMENTATION_LABELS = {
    "caliper11": "Caliper matching (1-1)",
    "caliper15": "Caliper matching (1-5)",
    "dr": "DR",
    "ipw": "IPW",
    "nn": "NN matching",
    "strat": "Stratification",
}

DESK_SCALE = {"reps": 100, "k": 500, "n": 1000, "s": 200}

_MODEL_ORDER = tuple(PS_MODELS)
_IMPL_ORDER = tuple(IMPLEMENTATIONS)


def ps_model_spec(columns, model: str) -> PSModelSpec:
    """Covariate selection for one named grid model, by role prefix."""
    try:
        prefixes = PS_MODELS[model]
    except KeyError:
        raise ValueError(f"unknown propensity model {model!r}, expected one of {list(PS_MODELS)}") from None
    selected = tuple(c for c in columns if c[:1] in prefixes)
    if not selected:
        raise DataError(f"no columns with role prefixes {prefixes} in the data")
    return PSModelSpec(columns=selected)


@dataclass(frozen=True)
class RunConfig:
    """Settings of a single-dataset pipeline run."""

    ps_spec: PSModelSpec
    impl_spec: ImplementationSpec
    method: str = "bpsa"
    k: int = 1000
    s: int = 200
    seed: int = 0
    level: float = 0.95
    outcome_columns: tuple[str, ...] | None = None  # DR outcome model; defaults to ps covariates

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.method == "bpsa" and self.k < 2:
            raise ValueError("bpsa needs k >= 2 posterior draws")
        if self.s < 1:
            raise ValueError("s must be >= 1")


@dataclass(frozen=True)
class BpsaResult:
    combined: CombinedInference
    estimates: tuple[ConditionalEstimate, ...]
    diagnostics: dict


@dataclass(frozen=True)
class PsaResult:
    point: float
    variance: float
    interval: tuple[float, float]
    level: float
    diagnostics: dict


def _tag_stage(exc: BpsaError, stage: str):
    if not hasattr(exc, "stage"):
        exc.stage = stage  # type: ignore[attr-defined]


def _outcome_matrix(data: Dataset, columns) -> np.ndarray:
    idx = [data.column_index(c) for c in columns]
    return data.x[:, idx]


def _design_diagnostics(designs: list[Design]) -> dict:
    pruned = [d.n_pruned_treated for d in designs]
    return {
        "designs": len(designs),
        "avg_pruned_treated": float(np.mean(pruned)),
        "avg_included_treated": float(np.mean([d.included[0] for d in designs])),
        "avg_included_control": float(np.mean([d.included[1] for d in designs])),
        "degenerate_strata_designs": sum(1 for d in designs if d.empty_cells),
    }


def run_bpsa(
    data: Dataset,
    config: RunConfig,
    alphas=None,
    ps_diagnostics: dict | None = None,
) -> BpsaResult:
    """Design-marginalized analysis of one dataset.

    ``alphas`` may carry precomputed posterior draws (the simulation
    harness shares them across implementations of the same propensity
    model); otherwise they are sampled here from the seed-derived stream.
    """
    if config.k < 2:
        raise ValueError("bpsa needs k >= 2 posterior draws")
    try:
        if alphas is None:
            alphas, ps_diagnostics = sample_posterior(
                data, config.ps_spec, config.k, child_seed(config.seed, DOMAIN_MCMC)
            )
        frame = data.design_view()
        designs = draw_designs(
            alphas, frame, config.ps_spec, config.impl_spec, child_seed(config.seed, DOMAIN_DESIGN)
        )
    except BpsaError as exc:
        _tag_stage(exc, "design")
        raise

    kind = config.impl_spec.kind
    floor_count = 0
    estimates: list[ConditionalEstimate] = []
    try:
        if kind == "dr":
            columns = config.outcome_columns or config.ps_spec.columns
            yhat1, yhat0 = dr_predictions(data.y, data.t, _outcome_matrix(data, columns))
        for i, design in enumerate(designs):
            if kind == "strat":
                est = strat_conditional(
                    data.y,
                    data.t,
                    design,
                    config.s,
                    stream(config.seed, DOMAIN_ANALYSIS, i),
                )
            elif kind == "dr":
                qhat = dr_estimate(data.y, data.t, design.weights, yhat1, yhat0)
                vhat, floored = dr_variance(data.y, data.t, design.weights, yhat1, yhat0)
                floor_count += floored
                est = asymptotic_conditional(
                    qhat, vhat, config.s, provenance=design.provenance, variance_floored=floored
                )
            else:  # nn / caliper / ipw share the weighted code path
                qhat = hajek_estimate(data.y, data.t, design.weights)
                vhat = fixed_weight_variance(data.y, data.t, design.weights)
                est = asymptotic_conditional(qhat, vhat, config.s, provenance=design.provenance)
            estimates.append(est)
        combined = combine(estimates, config.level)
    except BpsaError as exc:
        _tag_stage(exc, "analysis")
        raise

    diagnostics = {
        "method": "bpsa",
        "backend": backend_name(),
        "ps_model": dict(ps_diagnostics or {}),
        "dr_variance_floor_count": floor_count,
        **_design_diagnostics(designs),
    }
    return BpsaResult(combined=combined, estimates=tuple(estimates), diagnostics=diagnostics)


def run_psa(data: Dataset, config: RunConfig) -> PsaResult:
    """Frequentist baseline: analysis conditional on the MLE design.

    Sandwich variance for the weighted estimators, coefficient-covariance
    mapping for stratification, and the large-sample doubly robust
    variance for DR.
    """
    try:
        mle = fit_mle(data, config.ps_spec)
        frame = data.design_view()
        ps = predict_ps(mle, frame, config.ps_spec)
        kind = config.impl_spec.kind
        if kind == "strat":
            design = stratify(ps, frame.t, config.impl_spec)
        elif kind == "nn":
            design = nn_match(ps, frame.t, config.impl_spec)
        elif kind == "caliper":
            design = caliper_match(
                ps, frame.t, config.impl_spec, stream(config.seed, DOMAIN_DESIGN, 0, 0)
            )
        else:
            design = ipw_weights(ps, frame.t, kind=kind)
    except BpsaError as exc:
        _tag_stage(exc, "design")
        raise

    floored = False
    try:
        if kind == "strat":
            point, variance = strat_ols(data.y, data.t, design)
        elif kind == "dr":
            columns = config.outcome_columns or config.ps_spec.columns
            yhat1, yhat0 = dr_predictions(data.y, data.t, _outcome_matrix(data, columns))
            point = dr_estimate(data.y, data.t, design.weights, yhat1, yhat0)
            variance, floored = dr_variance(data.y, data.t, design.weights, yhat1, yhat0)
        else:
            point = hajek_estimate(data.y, data.t, design.weights)
            variance = hc0_variance(data.y, data.t, design.weights)
    except BpsaError as exc:
        _tag_stage(exc, "analysis")
        raise

    z = NormalDist().inv_cdf(0.5 + config.level / 2.0)
    half = z * variance**0.5
    diagnostics = {
        "method": "psa",
        "backend": backend_name(),
        "mle_coefficients": [float(v) for v in mle.coefficients],
        "dr_variance_floored": bool(floored),
        **_design_diagnostics([design]),
    }
    return PsaResult(
        point=float(point),
        variance=float(variance),
        interval=(float(point - half), float(point + half)),
        level=config.level,
        diagnostics=diagnostics,
    )


@dataclass(frozen=True)
class Cell:
    """One simulation grid cell: propensity model x implementation x method."""

    ps_model: str
    implementation: str
    method: str = "bpsa"

    def __post_init__(self):
        if self.ps_model not in PS_MODELS:
            raise ValueError(f"unknown propensity model {self.ps_model!r}")
        if self.implementation not in IMPLEMENTATIONS:
            raise ValueError(
                f"unknown implementation {self.implementation!r}, expected one of {list(IMPLEMENTATIONS)}"
            )
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def key(self) -> str:
        return f"{self.method}:{self.implementation}:{self.ps_model}"


def full_grid(method: str = "bpsa") -> list[Cell]:
    """All 24 combinations of the four propensity models and six
    implementations, for one method."""
    return [
        Cell(ps_model=m, implementation=i, method=method)
        for i in _IMPL_ORDER
        for m in _MODEL_ORDER
    ]


@dataclass(frozen=True)
class SimulationReport:
    """Aggregates per grid cell plus per-replicate scatter data."""

    rows: tuple[dict, ...]
    figure_rows: tuple[dict, ...]
    reps: int
    dgp: DGPConfig
    seed: int
    k: int
    s: int
    level: float
    failures: tuple[dict, ...]
    runtime_seconds: float


def _cell_seed(master_seed: int, rep: int, cell: Cell) -> int:
    return child_seed(
        master_seed,
        DOMAIN_CELL,
        rep,
        _MODEL_ORDER.index(cell.ps_model),
        _IMPL_ORDER.index(cell.implementation),
        METHODS.index(cell.method),
    )


def aggregate_cell(
    cell: Cell, successes: list[tuple[int, dict]], delta_true: float, reps: int
) -> tuple[dict, list[dict]]:
    """Reduce one cell's per-replicate records into a report row plus
    per-replicate scatter rows.

    Pure reduction over the given records in order: aggregating the same
    list twice, or a duplicated list, changes nothing about the bias.
    """
    points = np.array([r["point"] for _, r in successes])
    covered = np.array([r["covered"] for _, r in successes])
    totals = np.array([r["total_var"] for _, r in successes])
    n_ok = len(successes)
    row = {
        "implementation": IMPLEMENTATION_LABELS[cell.implementation],
        "ps_model": cell.ps_model,
        "method": cell.method,
        "empirical_var": float(points.var(ddof=1)) if n_ok > 1 else None,
        "avg_total_var": float(totals.mean()) if n_ok else None,
        "bias": float(points.mean() - delta_true) if n_ok else None,
        "coverage": float(covered.mean()) if n_ok else None,
        "mse": float(np.mean((points - delta_true) ** 2)) if n_ok else None,
        "replicates": n_ok,
        "failures": reps - n_ok,
    }
    figure_rows = []
    if cell.method == "bpsa":
        for name in ("between_var", "within_var", "prop_du"):
            row[f"avg_{name}"] = (
                float(np.mean([r[name] for _, r in successes])) if n_ok else None
            )
        for rep, record in successes:
            figure_rows.append(
                {
                    "implementation": IMPLEMENTATION_LABELS[cell.implementation],
                    "ps_model": cell.ps_model,
                    "replicate": rep,
                    "prop_du": record["prop_du"],
                    "log_between_var": float(np.log(record["between_var"]))
                    if record["between_var"] > 0
                    else None,
                    "log_within_var": float(np.log(record["within_var"]))
                    if record["within_var"] > 0
                    else None,
                    "error": record["point"] - delta_true,
                }
            )
    else:
        row["avg_between_var"] = None
        row["avg_within_var"] = None
        row["avg_prop_du"] = None
    return row, figure_rows


def _run_replicate(payload) -> tuple[int, dict]:
    rep, master_seed, dgp, cells, k, s, level = payload
    data = generate(replace(dgp, seed=child_seed(master_seed, DOMAIN_DATA, rep)))
    records: dict[str, dict] = {}
    alpha_cache: dict[str, tuple] = {}

    for cell in cells:
        try:
            ps_spec = ps_model_spec(data.columns, cell.ps_model)
            config = RunConfig(
                ps_spec=ps_spec,
                impl_spec=IMPLEMENTATIONS[cell.implementation],
                method=cell.method,
                k=k,
                s=s,
                seed=_cell_seed(master_seed, rep, cell),
                level=level,
            )
            if cell.method == "bpsa":
                if cell.ps_model not in alpha_cache:
                    alpha_cache[cell.ps_model] = sample_posterior(
                        data,
                        ps_spec,
                        k,
                        child_seed(master_seed, DOMAIN_MCMC, rep, _MODEL_ORDER.index(cell.ps_model)),
                    )
                alphas, diag = alpha_cache[cell.ps_model]
                result = run_bpsa(data, config, alphas=alphas, ps_diagnostics=diag)
                c = result.combined
                records[cell.key] = {
                    "point": c.mean,
                    "total_var": c.total_var,
                    "between_var": c.between_var,
                    "within_var": c.within_var,
                    "prop_du": c.prop_du,
                    "covered": c.interval[0] <= dgp.delta_true <= c.interval[1],
                }
            else:
                result = run_psa(data, config)
                records[cell.key] = {
                    "point": result.point,
                    "total_var": result.variance,
                    "between_var": None,
                    "within_var": None,
                    "prop_du": None,
                    "covered": result.interval[0] <= dgp.delta_true <= result.interval[1],
                }
        except BpsaError as exc:
            records[cell.key] = {
                "error": f"{type(exc).__name__} at {getattr(exc, 'stage', 'pipeline')} stage: {exc}"
            }
    return rep, records


def run_simulation(
    cells: list[Cell],
    reps: int,
    dgp: DGPConfig,
    seed: int,
    k: int = DESK_SCALE["k"],
    s: int = DESK_SCALE["s"],
    level: float = 0.95,
    workers: int = 1,
) -> SimulationReport:
    """Replicated study over ``cells``.

    Per replicate a fresh dataset is generated from a seed-derived
    stream; posterior draws are shared across implementations within a
    propensity model; per-replicate failures are recorded and excluded
    from aggregates, never silent.  Results are independent of
    ``workers``: replicate streams are derived from (seed, replicate) and
    aggregation runs in replicate order.
    """
    if reps < 10:
        raise ValueError("need at least 10 replicates for meaningful coverage")
    if not cells:
        raise ValueError("no grid cells requested")
    seen = set()
    for cell in cells:
        if cell.key in seen:
            raise ValueError(f"duplicate grid cell {cell.key}")
        seen.add(cell.key)

    start = time.perf_counter()
    payloads = [(rep, seed, dgp, tuple(cells), k, s, level) for rep in range(reps)]
    per_rep: list[dict | None] = [None] * reps
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rep, records in pool.map(_run_replicate, payloads, chunksize=1):
                per_rep[rep] = records
    else:
        for payload in payloads:
            rep, records = _run_replicate(payload)
            per_rep[rep] = records

    rows = []
    figure_rows = []
    failures = []
    for cell in cells:
        oks = []
        for rep in range(reps):
            record = per_rep[rep][cell.key]
            if "error" in record:
                failures.append({"cell": cell.key, "replicate": rep, "error": record["error"]})
            else:
                oks.append((rep, record))
        row, cell_figures = aggregate_cell(cell, oks, dgp.delta_true, reps)
        rows.append(row)
        figure_rows.extend(cell_figures)

    return SimulationReport(
        rows=tuple(rows),
        figure_rows=tuple(figure_rows),
        reps=reps,
        dgp=dgp,
        seed=seed,
        k=k,
        s=s,
        level=level,
        failures=tuple(failures),
        runtime_seconds=time.perf_counter() - start,
    )
