import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mmfc import (
    CellTable,
    Dataset,
    DesignSpec,
    Model,
    ModelConfig,
    VariableSchema,
    bivariate_cells,
    conditional_z_mixture,
    empirical_cell_probs,
    empirical_joint_table,
    hellinger,
    init_state,
    joint_cell_probability,
    marginal_allocation_probs,
    marginal_cells,
    model_marginal_table,
    nominal_joint_pmf,
)
from mmfc.density import enumerate_covariate_rows

from conftest import mixed_schemas, random_dataset


def _state_for(model, n=12, seed=0):
    data = random_dataset(model.schemas, n, seed=seed)
    return init_state(model, data, np.random.default_rng(seed + 100))


@pytest.fixture
def small_model():
    return Model(mixed_schemas(), ModelConfig(n_top=3, n_z=3, n_x=3, n_rem=3))


# ---------------------------------------------------------------- nominal pmf

def test_nominal_pmf_single_component_factorizes(small_model):
    state = _state_for(small_model, seed=1)
    w = state.weights
    w.w_top = np.array([1.0, 0.0, 0.0])
    w.w_x = np.zeros_like(w.w_x)
    w.w_x[0] = 1.0
    w.w_rem = np.zeros_like(w.w_rem)
    w.w_rem[0] = 1.0
    p = nominal_joint_pmf(state, (2,), (3, 1))
    expected = state.focus_probs[0][0, 1] * state.remainder_probs[0][0, 2] * state.remainder_probs[1][0, 0]
    assert abs(p - expected) < 1e-14


def test_nominal_pmf_sums_to_one(small_model):
    state = _state_for(small_model, seed=2)
    total = sum(
        nominal_joint_pmf(state, (xa,), (b1, b2))
        for xa in range(1, 4)
        for b1 in range(1, 4)
        for b2 in range(1, 3)
    )
    assert abs(total - 1.0) < 1e-10


def test_nominal_pmf_matches_exhaustive_triple_sum(small_model):
    state = _state_for(small_model, seed=3)
    w = state.weights
    x_a, x_b = (2,), (1, 2)
    expected = 0.0
    for h in range(3):
        for l in range(3):
            for s in range(3):
                term = w.w_top[h] * w.w_x[l, h] * w.w_rem[s, h]
                term *= state.focus_probs[0][l, x_a[0] - 1]
                term *= state.remainder_probs[0][s, x_b[0] - 1] * state.remainder_probs[1][s, x_b[1] - 1]
                expected += term
    assert abs(nominal_joint_pmf(state, x_a, x_b) - expected) < 1e-13


# ---------------------------------------------------------------- conditional mixture

def test_conditional_mixture_degenerate_single_component(small_model):
    state = _state_for(small_model, seed=4)
    w = state.weights
    w.w_top = np.array([1.0, 0.0, 0.0])
    w.w_z = np.zeros_like(w.w_z)
    w.w_z[0] = 1.0
    weights, means, covs = conditional_z_mixture(small_model, state, (1, 2, 1))
    assert np.allclose(weights, [1.0, 0.0, 0.0])
    x_row = np.array([1, 2, 1])
    assert np.allclose(means[0], small_model.design_vector(x_row) @ state.coef[0])


def test_conditional_mixture_weights_independent_of_x_when_kernels_uniform(small_model):
    state = _state_for(small_model, seed=5)
    state.focus_probs[0][:] = 1.0 / 3.0
    state.remainder_probs[0][:] = 1.0 / 3.0
    state.remainder_probs[1][:] = 0.5
    w1, _, _ = conditional_z_mixture(small_model, state, (1, 1, 1))
    w2, _, _ = conditional_z_mixture(small_model, state, (3, 2, 2))
    assert np.allclose(w1, w2, atol=1e-13)


def test_conditional_mixture_weights_match_bruteforce(small_model):
    state = _state_for(small_model, seed=6)
    x = (2, 3, 1)
    w = state.weights
    raw = np.zeros(3)
    for r in range(3):
        for h in range(3):
            inner_x = sum(
                w.w_x[l, h] * state.focus_probs[0][l, x[0] - 1] for l in range(3)
            )
            inner_b = sum(
                w.w_rem[s, h] * state.remainder_probs[0][s, x[1] - 1] * state.remainder_probs[1][s, x[2] - 1]
                for s in range(3)
            )
            raw[r] += w.w_top[h] * w.w_z[r, h] * inner_x * inner_b
    weights, _, _ = conditional_z_mixture(small_model, state, x)
    assert np.allclose(weights, raw / raw.sum(), atol=1e-13)


def test_conditional_mixture_consistent_with_marginal_allocations(small_model):
    # degenerate point-mass kernels shared across components make the
    # covariate factors constant, so the mixture weights collapse to the
    # marginal allocation probabilities of the latent block
    state = _state_for(small_model, seed=7)
    point_x = np.zeros(3)
    point_x[1] = 1.0
    state.focus_probs[0][:] = point_x
    state.remainder_probs[0][:] = np.array([0.0, 0.0, 1.0])
    state.remainder_probs[1][:] = np.array([1.0, 0.0])
    weights, _, _ = conditional_z_mixture(small_model, state, (2, 3, 1))
    expected = marginal_allocation_probs(state.weights).sum(axis=(1, 2))
    assert np.allclose(weights, expected, atol=1e-13)


# ---------------------------------------------------------------- joint cells

def _univariate_model():
    schemas = [VariableSchema("y", "ordinal", 4, "focus"), VariableSchema("x", "nominal", 2, "focus")]
    return Model(schemas, ModelConfig(n_top=2, n_z=2, n_x=2, design=DesignSpec()))


def test_joint_cell_probability_normal_cdf_oracle():
    model = _univariate_model()
    state = _state_for(model, seed=8)
    w = state.weights
    w.w_z = np.zeros_like(w.w_z)
    w.w_z[0] = 1.0
    state.coef[0] = 0.0
    state.cov[0] = np.eye(1)
    state.focus_probs[0][:] = np.array([1.0, 0.0])
    p, se = joint_cell_probability(model, state, (2, 1))
    assert se == 0.0
    assert abs(p - (stats.norm.cdf(0.0) - stats.norm.cdf(-1.0))) < 1e-12


def test_joint_cells_marginalize_to_nominal_pmf(small_model):
    state = _state_for(small_model, seed=9)
    state.cov[:] = np.eye(2) * np.array([0.7, 1.3])  # diagonal: exact path
    for x in itertools.product(range(1, 4), range(1, 4), range(1, 3)):
        total = 0.0
        for y in itertools.product(range(1, 4), range(1, 4)):
            p, se = joint_cell_probability(small_model, state, y + x)
            assert se == 0.0
            total += p
        assert abs(total - nominal_joint_pmf(state, x[:1], x[1:])) < 1e-10


def test_joint_cell_diagonal_is_product_of_intervals(small_model):
    state = _state_for(small_model, seed=10)
    state.cov[:] = np.eye(2)
    cell = (2, 3, 1, 2, 2)
    p, _ = joint_cell_probability(small_model, state, cell)
    # independent-coordinate oracle built from univariate interval probabilities
    x = np.asarray(cell[2:])
    t = np.zeros(3)
    w = state.weights
    for r in range(3):
        for h in range(3):
            ax = sum(w.w_x[l, h] * state.focus_probs[0][l, x[0] - 1] for l in range(3))
            ab = sum(
                w.w_rem[s, h] * state.remainder_probs[0][s, x[1] - 1] * state.remainder_probs[1][s, x[2] - 1]
                for s in range(3)
            )
            t[r] += w.w_top[h] * w.w_z[r, h] * ax * ab
    D = small_model.design_vector(x)
    cuts_ext = np.array([-np.inf, -0.5, 0.5, np.inf])
    y = np.array(cell[:2])
    lo, hi = cuts_ext[y - 1], cuts_ext[y]
    expected = 0.0
    for r in range(3):
        mean = D @ state.coef[r]
        expected += t[r] * np.prod(stats.norm.cdf(hi - mean) - stats.norm.cdf(lo - mean))
    assert abs(p - expected) < 1e-12


def test_joint_cell_mc_matches_scipy_rectangle(small_model):
    state = _state_for(small_model, seed=11)
    corr = np.array([[1.0, 0.55], [0.55, 0.9]])
    state.cov[:] = corr
    cell = (2, 2, 1, 2, 2)
    rng = np.random.default_rng(12)
    p_mc, se = joint_cell_probability(small_model, state, cell, mc_draws=40000, rng=rng)
    assert se > 0
    # high-accuracy oracle via scipy's multivariate normal rectangle probability
    x = np.asarray(cell[2:])
    t = np.zeros(3)
    w = state.weights
    for r in range(3):
        for h in range(3):
            ax = sum(w.w_x[l, h] * state.focus_probs[0][l, x[0] - 1] for l in range(3))
            ab = sum(
                w.w_rem[s, h] * state.remainder_probs[0][s, x[1] - 1] * state.remainder_probs[1][s, x[2] - 1]
                for s in range(3)
            )
            t[r] += w.w_top[h] * w.w_z[r, h] * ax * ab
    D = small_model.design_vector(x)
    exact = 0.0
    for r in range(3):
        mean = D @ state.coef[r]
        dist = stats.multivariate_normal(mean, corr, allow_singular=False)
        exact += t[r] * dist.cdf(np.array([0.5, 0.5]), lower_limit=np.array([-0.5, -0.5]))
    assert abs(p_mc - exact) < max(4 * se, 2e-3)


def test_joint_cell_rejects_bad_mc_draws(small_model):
    state = _state_for(small_model, seed=13)
    state.cov[:] = np.array([[1.0, 0.3], [0.3, 1.0]])
    with pytest.raises(ValueError):
        joint_cell_probability(small_model, state, (1, 1, 1, 1, 1), mc_draws=0)


# ---------------------------------------------------------------- hellinger

def test_hellinger_identity_and_disjoint():
    p = CellTable({(1,): 0.5, (2,): 0.5})
    q = CellTable({(3,): 1.0})
    assert hellinger(p, p) == 0.0
    assert hellinger(p, q) == 1.0


def test_hellinger_hand_value():
    p = CellTable({(1,): 0.5, (2,): 0.5})
    q = CellTable({(1,): 0.25, (2,): 0.75})
    expected = np.sqrt(1.0 - (np.sqrt(0.5 * 0.25) + np.sqrt(0.5 * 0.75)))
    assert abs(hellinger(p, q, 0.0) - expected) < 1e-15
    assert abs(expected - 0.18459191128251476) < 1e-15


def test_hellinger_threshold_restricts_and_renormalizes():
    p = CellTable({(1,): 0.6, (2,): 0.3999, (3,): 0.0001})
    q = CellTable({(1,): 0.3999, (2,): 0.6, (3,): 0.0001})
    full = hellinger(p, q, 0.0)
    cut = hellinger(p, q, 0.001)
    p2 = CellTable({(1,): 0.6 / 0.9999, (2,): 0.3999 / 0.9999})
    q2 = CellTable({(1,): 0.3999 / 0.9999, (2,): 0.6 / 0.9999})
    assert abs(cut - hellinger(p2, q2, 0.0)) < 1e-12
    assert cut != full


def test_hellinger_empty_after_threshold_errors():
    p = CellTable({(1,): 1e-9, (2,): 1.0 - 1e-9})
    with pytest.raises(ValueError):
        hellinger(p, p, threshold=2.0)


@given(st.lists(st.tuples(st.floats(0.01, 1.0), st.floats(0.01, 1.0)), min_size=2, max_size=8))
@settings(max_examples=50)
def test_hellinger_symmetric_at_zero_threshold(pairs):
    ps = np.array([a for a, _ in pairs])
    qs = np.array([b for _, b in pairs])
    ps, qs = ps / ps.sum(), qs / qs.sum()
    p = CellTable({(i,): float(v) for i, v in enumerate(ps)})
    q = CellTable({(i,): float(v) for i, v in enumerate(qs)})
    assert abs(hellinger(p, q, 0.0) - hellinger(q, p, 0.0)) < 1e-9
    assert 0.0 <= hellinger(p, q, 0.0) <= 1.0


# ---------------------------------------------------------------- empirical tables

def test_empirical_counting():
    schemas = [VariableSchema("a", "ordinal", 2, "focus"), VariableSchema("x", "nominal", 2, "focus")]
    values = np.array([[1, 1], [1, 2], [2, 1], [2, 2]])
    data = Dataset(schemas, values, None)
    cells = [((0, 1),), ((0, 2),), ((0, 1), (1, 2))]
    probs = empirical_cell_probs(data, cells)
    assert np.allclose(probs, [0.5, 0.5, 0.25])


def test_empirical_rejects_masked_cells():
    schemas = [VariableSchema("a", "ordinal", 2, "focus")]
    data = Dataset(schemas, np.array([[1], [2]]), np.array([[True], [False]]))
    with pytest.raises(Exception, match="completed"):
        empirical_cell_probs(data, [((0, 1),)])


def test_bivariate_tables_sum_to_marginals():
    data = random_dataset(mixed_schemas(), 200, seed=14)
    schemas = data.schemas
    for i, j in [(0, 2), (1, 4)]:
        marg = empirical_cell_probs(data, [((i, v),) for v in range(1, schemas[i].levels + 1)])
        biv = np.array([
            empirical_cell_probs(data, [((i, v), (j, w),) for w in range(1, schemas[j].levels + 1)]).sum()
            for v in range(1, schemas[i].levels + 1)
        ])
        assert np.allclose(marg, biv, atol=1e-12)


def test_estimand_counts_match_reporting_convention():
    # four focus variables with levels (4,4,3,3): 10 nonredundant marginal
    # cells, 14 with every level
    schemas = [
        VariableSchema("y1", "ordinal", 4, "focus"),
        VariableSchema("y2", "ordinal", 4, "focus"),
        VariableSchema("x1", "nominal", 3, "focus"),
        VariableSchema("x2", "nominal", 3, "focus"),
    ]
    assert len(marginal_cells(schemas)) == 10
    assert len(marginal_cells(schemas, nonredundant=False)) == 14
    # levels (4,4,4,3) give the 45 nonredundant pairwise estimand cells of the
    # few-focus reporting layout (plus the 11 marginals: 56 in total)
    schemas_45 = [
        VariableSchema("y1", "ordinal", 4, "focus"),
        VariableSchema("y2", "ordinal", 4, "focus"),
        VariableSchema("x1", "nominal", 4, "focus"),
        VariableSchema("x2", "nominal", 3, "focus"),
    ]
    assert len(marginal_cells(schemas_45)) == 11
    assert len(bivariate_cells(schemas_45)) == 45


def test_empirical_joint_table_total_mass():
    data = random_dataset(mixed_schemas(), 123, seed=15)
    table = empirical_joint_table(data, [0, 2, 4])
    assert abs(table.total - 1.0) < 1e-12
    assert all(len(c) == 3 for c in table.probs)


# ---------------------------------------------------------------- model marginals

def test_model_marginal_table_consistency(small_model):
    state = _state_for(small_model, seed=16)
    state.cov[:] = np.eye(2)  # diagonal so the joint-cell exact path applies
    table = model_marginal_table(small_model, state)
    for probs in table:
        assert abs(probs.sum() - 1.0) < 1e-9
    # cross-check the first ordinal marginal against a full joint-cell sum
    total = np.zeros(3)
    for y in itertools.product(range(1, 4), range(1, 4)):
        for x in itertools.product(range(1, 4), range(1, 4), range(1, 3)):
            p, _ = joint_cell_probability(small_model, state, y + x)
            total[y[0] - 1] += p
    assert np.allclose(table[0], total, atol=1e-9)


def test_enumerate_covariate_rows_shape(small_model):
    rows = enumerate_covariate_rows(small_model)
    assert rows.shape == (3 * 3 * 2, 3)
    assert rows.min() == 1
