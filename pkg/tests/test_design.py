import numpy as np
import pytest

from bpsa import (
    DesignError,
    DGPConfig,
    ImplementationSpec,
    PSDraw,
    caliper_match,
    draw_designs,
    fit_mle,
    generate,
    ipw_weights,
    nn_match,
    ps_model_spec,
    predict_ps,
    sample_posterior,
    stratify,
)


def _logit(e):
    e = np.asarray(e, dtype=float)
    return np.log(e) - np.log1p(-e)


def nn_oracle_weights(e, t, ratio, caliper):
    """Exhaustive nearest-neighbour matching, straight from the rules."""
    e = np.asarray(e, dtype=float)
    t = np.asarray(t)
    lp = _logit(e)
    width = caliper * lp.std(ddof=1)
    treated = np.flatnonzero(t == 1)
    controls = np.flatnonzero(t == 0)
    counts = {j: 0 for j in controls}
    kept = []
    for i in treated:
        cands = [j for j in controls if abs(lp[j] - lp[i]) <= width]
        if len(cands) < ratio:
            continue
        kept.append(i)
        picks = sorted(cands, key=lambda j: (abs(lp[j] - lp[i]), e[j], j))[:ratio]
        for j in picks:
            counts[j] += 1
    weights = np.zeros(len(e))
    if kept:
        total = sum(counts.values())
        distinct = sum(1 for v in counts.values() if v > 0)
        weights[kept] = 1.0
        for j, v in counts.items():
            weights[j] = v * (distinct / total)
    return weights


def test_stratify_even_split():
    ps = PSDraw(e=np.arange(0.05, 1.0, 0.1))
    t = np.array([1, 0] * 5)
    design = stratify(ps, t, ImplementationSpec(kind="strat", q=5))
    assert list(design.strata) == [1, 1, 2, 2, 3, 3, 4, 4, 5, 5]
    assert design.included == (5, 5)


def test_stratify_identical_scores_collapse_to_first_stratum():
    ps = PSDraw(e=np.full(10, 0.4))
    t = np.array([1, 0] * 5)
    design = stratify(ps, t, ImplementationSpec(kind="strat", q=5))
    assert np.all(design.strata == 1)
    flagged = {s for s, _arm in design.empty_cells}
    assert flagged == {2, 3, 4, 5}


def test_stratify_quintile_sizes_match_sort_and_slice_oracle():
    data = generate(DGPConfig(n=997, seed=3))
    spec = ps_model_spec(data.columns, "confound")
    ps = predict_ps(fit_mle(data, spec), data.design_view(), spec)
    design = stratify(ps, data.t, ImplementationSpec(kind="strat", q=5))
    sizes = np.bincount(design.strata, minlength=6)[1:]
    lower, upper = 997 // 5, -(-997 // 5)
    assert set(sizes) <= {lower, upper}
    assert sizes.sum() == 997
    # labels are monotone in the score
    order = np.argsort(ps.e)
    assert np.all(np.diff(design.strata[order]) >= 0)


def test_stratify_needs_enough_units():
    ps = PSDraw(e=np.array([0.2, 0.8]))
    with pytest.raises(DesignError):
        stratify(ps, np.array([1, 0]), ImplementationSpec(kind="strat", q=5))


def test_nn_match_picks_nearest_control():
    ps = PSDraw(e=np.array([0.5, 0.4, 0.45, 0.7]))
    t = np.array([1, 0, 0, 0])
    design = nn_match(ps, t, ImplementationSpec(kind="nn", caliper=10.0))
    assert design.weights[0] == 1.0
    assert list(design.weights[1:]) == [0.0, 1.0, 0.0]
    assert design.included == (1, 1)


def test_nn_match_empty_design_when_caliper_excludes_everything():
    ps = PSDraw(e=np.array([0.9, 0.1, 0.12, 0.11]))
    t = np.array([1, 0, 0, 0])
    with pytest.raises(DesignError, match="empty design"):
        nn_match(ps, t, ImplementationSpec(kind="nn", caliper=0.01))


def test_nn_match_agrees_with_exhaustive_oracle_hand_case():
    e = np.array([0.30, 0.52, 0.71, 0.28, 0.33, 0.50, 0.55, 0.74])
    t = np.array([1, 1, 1, 0, 0, 0, 0, 0])
    spec = ImplementationSpec(kind="nn", ratio=1, caliper=0.5)
    design = nn_match(PSDraw(e=e), t, spec)
    assert np.array_equal(design.weights, nn_oracle_weights(e, t, 1, 0.5))


@pytest.mark.parametrize("ratio", [1, 2, 3])
@pytest.mark.parametrize("seed", range(8))
def test_nn_match_agrees_with_exhaustive_oracle_random(ratio, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 40))
    e = rng.uniform(0.05, 0.95, size=n)
    t = rng.integers(0, 2, size=n)
    t[:2] = [0, 1]  # both arms non-empty
    if (t == 0).sum() < ratio:
        t[2 : 2 + ratio] = 0
    spec = ImplementationSpec(kind="nn", ratio=ratio, caliper=0.7)
    oracle = nn_oracle_weights(e, t, ratio, 0.7)
    if not oracle.any():
        with pytest.raises(DesignError):
            nn_match(PSDraw(e=e), t, spec)
        return
    design = nn_match(PSDraw(e=e), t, spec)
    assert np.array_equal(design.weights, oracle)


def test_nn_match_deterministic_and_bitwise_stable():
    data = generate(DGPConfig(n=300, seed=21))
    spec = ps_model_spec(data.columns, "confound")
    ps = predict_ps(fit_mle(data, spec), data.design_view(), spec)
    a = nn_match(ps, data.t, ImplementationSpec(kind="nn"))
    b = nn_match(ps, data.t, ImplementationSpec(kind="nn"))
    assert np.array_equal(a.weights, b.weights)


def test_nn_match_invariant_to_control_permutation():
    rng = np.random.default_rng(5)
    e = rng.uniform(0.1, 0.9, size=30)  # continuous, no exact ties
    t = np.array([1] * 10 + [0] * 20)
    base = nn_match(PSDraw(e=e), t, ImplementationSpec(kind="nn", caliper=1.0))

    perm = np.concatenate([np.arange(10), 10 + rng.permutation(20)])
    permuted = nn_match(PSDraw(e=e[perm]), t[perm], ImplementationSpec(kind="nn", caliper=1.0))
    assert np.array_equal(permuted.weights, base.weights[perm])


def test_matching_weights_sum_to_distinct_unit_counts():
    data = generate(DGPConfig(n=500, seed=8))
    spec = ps_model_spec(data.columns, "confound")
    ps = predict_ps(fit_mle(data, spec), data.design_view(), spec)
    for impl in (
        ImplementationSpec(kind="nn", ratio=1),
        ImplementationSpec(kind="nn", ratio=5),
        ImplementationSpec(kind="caliper", ratio=5),
    ):
        if impl.kind == "nn":
            design = nn_match(ps, data.t, impl)
        else:
            design = caliper_match(ps, data.t, impl, rng=np.random.default_rng(0))
        w = design.weights
        treated_sum = w[data.t == 1].sum()
        control_sum = w[data.t == 0].sum()
        assert treated_sum == pytest.approx(design.included[0], abs=1e-9)
        assert control_sum == pytest.approx(design.included[1], abs=1e-9)
        assert design.included[1] == int((w[data.t == 0] > 0).sum())


def test_caliper_match_equals_nn_when_window_has_exactly_ratio_candidates():
    # one treated; exactly two controls inside the caliper, ratio 2
    e = np.array([0.5, 0.45, 0.55, 0.05, 0.95])
    t = np.array([1, 0, 0, 0, 0])
    spec_nn = ImplementationSpec(kind="nn", ratio=2, caliper=0.2)
    spec_cal = ImplementationSpec(kind="caliper", ratio=2, caliper=0.2)
    nn = nn_match(PSDraw(e=e), t, spec_nn)
    for seed in range(5):
        cal = caliper_match(PSDraw(e=e), t, spec_cal, rng=np.random.default_rng(seed))
        assert np.array_equal(cal.weights, nn.weights)


def test_caliper_match_uniform_over_candidates():
    # two in-caliper controls; the draw must be a fair coin across seeds
    e = np.array([0.5, 1 / (1 + np.exp(0.3)), 1 / (1 + np.exp(-0.3))])
    t = np.array([1, 0, 0])
    spec = ImplementationSpec(kind="caliper", ratio=1, caliper=5.0)
    picks = 0
    n_seeds = 10_000
    for seed in range(n_seeds):
        design = caliper_match(PSDraw(e=e), t, spec, rng=seed)
        picks += design.weights[1] > 0
    assert abs(picks / n_seeds - 0.5) <= 0.02


def test_caliper_match_seeded_determinism():
    data = generate(DGPConfig(n=200, seed=2))
    spec = ps_model_spec(data.columns, "confound")
    ps = predict_ps(fit_mle(data, spec), data.design_view(), spec)
    impl = ImplementationSpec(kind="caliper", ratio=1)
    a = caliper_match(ps, data.t, impl, rng=123)
    b = caliper_match(ps, data.t, impl, rng=123)
    assert np.array_equal(a.weights, b.weights)


def test_caliper_match_respects_caliper_on_every_matched_control():
    data = generate(DGPConfig(n=400, seed=14))
    spec = ps_model_spec(data.columns, "confound")
    ps = predict_ps(fit_mle(data, spec), data.design_view(), spec)
    impl = ImplementationSpec(kind="caliper", ratio=1, caliper=0.5)
    design = caliper_match(ps, data.t, impl, rng=7)

    lp = ps.logit()
    width = 0.5 * lp.std(ddof=1)
    kept_treated = np.flatnonzero((data.t == 1) & (design.weights > 0))
    matched_controls = np.flatnonzero((data.t == 0) & (design.weights > 0))
    for j in matched_controls:
        assert np.min(np.abs(lp[kept_treated] - lp[j])) <= width + 1e-12


def test_ipw_weights_formula():
    ps = PSDraw(e=np.array([0.5, 0.25, 0.25]))
    t = np.array([1, 1, 0])
    design = ipw_weights(ps, t)
    assert design.weights[0] == 2.0
    assert design.weights[1] == 4.0
    assert design.weights[2] == pytest.approx(4.0 / 3.0, rel=1e-15)
    assert np.all(design.weights > 1.0)


def test_ipw_weights_sum_property_under_true_scores():
    config = DGPConfig(n=1000, seed=6)
    data = generate(config)
    alpha = np.zeros(data.p)
    for j, name in enumerate(data.columns):
        if name[0] in ("c", "i"):
            alpha[j] = config.treatment_coef
    e = 1 / (1 + np.exp(-(data.x @ alpha)))
    design = ipw_weights(PSDraw(e=e), data.t)
    assert abs((design.weights * data.t).sum() / data.n - 1.0) < 0.1


def test_draw_designs_counts_and_provenance():
    data = generate(DGPConfig(n=200, seed=4))
    spec = ps_model_spec(data.columns, "confound")
    alphas, _ = sample_posterior(data, spec, k=3, seed=9)
    frame = data.design_view()

    det = draw_designs(alphas, frame, spec, ImplementationSpec(kind="ipw"), seed=1)
    assert len(det) == 3
    assert [d.provenance for d in det] == [(0, 0), (1, 0), (2, 0)]

    cal = draw_designs(alphas, frame, spec, ImplementationSpec(kind="caliper", r=2), seed=1)
    assert len(cal) == 6
    assert [d.provenance for d in cal] == [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)]


def test_draw_designs_identical_alphas_give_identical_designs():
    data = generate(DGPConfig(n=200, seed=4))
    spec = ps_model_spec(data.columns, "confound")
    alpha = fit_mle(data, spec)
    for impl in (ImplementationSpec(kind="nn"), ImplementationSpec(kind="strat"), ImplementationSpec(kind="ipw")):
        designs = draw_designs([alpha, alpha], data.design_view(), spec, impl, seed=0)
        a, b = designs
        if impl.kind == "strat":
            assert np.array_equal(a.strata, b.strata)
        else:
            assert np.array_equal(a.weights, b.weights)


def test_dump_design_debug_csv(tmp_path):
    from bpsa.design import dump_design

    ps = PSDraw(e=np.array([0.2, 0.4, 0.6, 0.8]))
    t = np.array([1, 0, 1, 0])
    strat = stratify(ps, t, ImplementationSpec(kind="strat", q=2))
    path = tmp_path / "strata.csv"
    dump_design(strat, t, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "unit,arm,stratum"
    assert len(lines) == 5

    weights = ipw_weights(ps, t)
    path = tmp_path / "weights.csv"
    dump_design(weights, t, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "unit,arm,weight"
    assert lines[1].startswith("0,1,")


def test_implementation_spec_validation():
    with pytest.raises(ValueError):
        ImplementationSpec(kind="bogus")
    with pytest.raises(ValueError):
        ImplementationSpec(kind="strat", q=1)
    with pytest.raises(ValueError):
        ImplementationSpec(kind="nn", ratio=0)
    with pytest.raises(ValueError):
        ImplementationSpec(kind="nn", caliper=0.0)
    # repeats are forced to 1 for deterministic kinds
    assert ImplementationSpec(kind="ipw", r=5).r == 1
    assert ImplementationSpec(kind="caliper", r=5).r == 5
