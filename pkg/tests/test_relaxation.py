"""Frank-Wolfe solvers for discrete weights and density mixtures.

Closed-form optima are asserted exactly; certified duality gaps are checked
against dense simplex-grid oracles on small instances. Statistical checks
use fixed seeds.
"""

import itertools
import json
import math

import numpy as np
import pytest
from scipy import stats

from optdesign.design_space import Constraint, DesignSpace
from optdesign.features import criterion, gramian, monomial_basis, UniformMeasure
from optdesign.pvs_sampler import (
    RejectionBudgetError,
    build_model,
    expected_cardinality,
    sample_pvs_conditional,
)
from optdesign.relaxation import (
    DensityFamily,
    MixtureDensity,
    WeightSolution,
    density_from_weights,
    monomial_mixture_family,
    solve_density_weights,
    solve_discrete_weights,
)

UNIT_SQUARE = DesignSpace(dimension=2, bounding_box=[[0.0, 1.0], [0.0, 1.0]], name="square")
UNIT_SEGMENT = DesignSpace(dimension=1, bounding_box=[[0.0, 1.0]], name="segment")
CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])


def discrete_information(points, basis, prior, weights):
    """Independent reassembly of sum_i w_i phi(x_i) phi(x_i)^T + prior."""
    table = basis.evaluate_many(np.asarray(points, dtype=float))
    p = basis.p
    M = np.zeros((p, p)) if prior is None else np.asarray(prior, dtype=float).copy()
    if np.isscalar(M):
        M = float(prior) * np.eye(p)
    for w, row in zip(weights, table):
        M = M + w * np.outer(row, row)
    return (M + M.T) / 2.0


# ---------------------------------------------------------------------------
# discrete solver: closed-form optima


def test_four_corners_equal_weights():
    basis = monomial_basis(2, 1)
    sol = solve_discrete_weights(CORNERS, basis, None, 3, which="D")
    np.testing.assert_allclose(sol.weights, 0.75, atol=1e-4)
    assert sol.gap <= 1e-7
    assert abs(sol.total - 3.0) <= 1e-9 * 3.0


def test_minimal_support_equal_weights_and_kkt():
    # With as many points as basis functions the D-optimal weights are
    # uniform, and at the optimum all gradient components coincide.
    cases = [
        (np.array([[0.1], [0.9]]), monomial_basis(1, 1), 3.0),
        (np.array([[0.0], [0.45], [1.0]]), monomial_basis(1, 2), 4.0),
    ]
    for points, basis, k in cases:
        sol = solve_discrete_weights(points, basis, None, k, which="D")
        np.testing.assert_allclose(sol.weights, k / basis.p, rtol=1e-8)
        M = discrete_information(points, basis, None, sol.weights)
        table = basis.evaluate_many(points)
        grads = [-float(row @ np.linalg.solve(M, row)) for row in table]
        assert max(grads) - min(grads) <= 1e-8 * abs(np.mean(grads))


def test_single_candidate_gets_all_mass():
    basis = monomial_basis(1, 1)
    sol = solve_discrete_weights(np.array([[0.3]]), basis, np.eye(2), 5, which="A")
    np.testing.assert_allclose(sol.weights, [5.0])
    assert sol.gap <= 1e-7
    assert sol.iterations == 0


def test_reported_criterion_matches_recomputation():
    basis = monomial_basis(2, 1)
    for which in ("D", "logD", "A"):
        sol = solve_discrete_weights(CORNERS, basis, 0.5, 3, which=which)
        M = discrete_information(CORNERS, basis, 0.5 * np.eye(3), sol.weights)
        assert sol.criterion == pytest.approx(criterion(M, which), rel=1e-12)


def test_solution_serializes_to_plain_json():
    basis = monomial_basis(2, 1)
    sol = solve_discrete_weights(CORNERS, basis, None, 3, which="D")
    payload = sol.as_dict()
    assert set(payload) == {"weights", "total", "criterion", "gap", "iterations"}
    round_trip = json.loads(json.dumps(payload))
    np.testing.assert_allclose(round_trip["weights"], sol.weights)
    assert round_trip["iterations"] == sol.iterations


def test_solver_is_deterministic():
    basis = monomial_basis(2, 1)
    a = solve_discrete_weights(CORNERS, basis, None, 3, which="A")
    b = solve_discrete_weights(CORNERS, basis, None, 3, which="A")
    np.testing.assert_array_equal(a.weights, b.weights)
    assert a.criterion == b.criterion and a.iterations == b.iterations


def test_validation_errors():
    basis = monomial_basis(1, 1)
    with pytest.raises(ValueError, match="at least one"):
        solve_discrete_weights(np.zeros((0, 1)), basis, None, 3)
    with pytest.raises(ValueError, match="positive"):
        solve_discrete_weights(np.array([[0.1]]), basis, np.eye(2), 0)
    with pytest.raises(ValueError, match="criterion"):
        solve_discrete_weights(np.array([[0.1]]), basis, np.eye(2), 2, which="E")


def test_persistent_singularity_raises():
    # One candidate point cannot span a two-dimensional basis with a zero
    # prior; jittered restarts cannot fix the rank and the solver says so.
    basis = monomial_basis(1, 1)
    with pytest.raises(RuntimeError, match="persistent singularity"):
        solve_discrete_weights(np.array([[0.3]]), basis, None, 2, which="D")


# ---------------------------------------------------------------------------
# certified gap against simplex-grid oracles


def simplex_grid_3(n):
    """All weight triples (i, j, n-i-j) / n as an (m, 3) array."""
    counts = np.arange(n + 1)
    i = np.repeat(counts, n + 1 - counts)
    j = np.concatenate([np.arange(n + 1 - a) for a in counts])
    return np.stack([i, j, n - i - j], axis=1) / n


def simplex_grid(parts, n):
    """All nonnegative integer compositions of n, scaled to sum 1."""
    cuts = np.array(
        list(itertools.combinations(range(n + parts - 1), parts - 1)), dtype=np.int64
    ).reshape(-1, parts - 1)
    edges = np.concatenate(
        [
            np.full((len(cuts), 1), -1, dtype=np.int64),
            cuts,
            np.full((len(cuts), 1), n + parts - 1, dtype=np.int64),
        ],
        axis=1,
    )
    return (np.diff(edges, axis=1) - 1) / n


def grid_criterion(weight_grid, atoms, basis, prior, k, which):
    """Vectorized criterion values over a weight grid via eigenvalues.

    Rank-deficient nodes (mass on too few points) map to +inf; the filter
    is a relative eigenvalue floor, since a float determinant of a singular
    matrix can round to a small positive number.
    """
    table = basis.evaluate_many(atoms)
    outers = np.einsum("ia,ib->iab", table, table)
    p = basis.p
    prior_mat = np.zeros((p, p)) if prior is None else np.asarray(prior, dtype=float)
    M = np.tensordot(weight_grid * k, outers, axes=1) + prior_mat
    eigs = np.linalg.eigvalsh(M)
    positive = eigs[:, 0] > 1e-9 * np.maximum(eigs[:, -1], 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = -np.sum(np.log(eigs), axis=1) if which == "logD" \
            else np.sum(1.0 / eigs, axis=1)
    return np.where(positive, values, np.inf)


def test_gap_bounds_suboptimality_three_candidates():
    # Dense grid at resolution 1e-3 over the weight simplex; the solver's
    # achieved value can exceed the true optimum by at most the certified
    # gap, and the grid optimum is an upper bound on the true optimum.
    atoms = np.array([[0.1], [0.45], [0.9]])
    basis = monomial_basis(1, 1)
    grid = simplex_grid_3(1000)
    for which in ("logD", "A"):
        for prior in (None, np.eye(2)):
            sol = solve_discrete_weights(atoms, basis, prior, 3, which=which,
                                         max_iter=10_000)
            grid_best = float(np.min(grid_criterion(grid, atoms, basis, prior, 3, which)))
            assert sol.criterion <= grid_best + sol.gap + 1e-9


def test_gap_bounds_suboptimality_six_candidates():
    rng = np.random.default_rng(1905)
    atoms = rng.uniform(size=(6, 2))
    basis = monomial_basis(2, 1)
    grid = simplex_grid(6, 30)
    for which in ("logD", "A"):
        sol = solve_discrete_weights(atoms, basis, None, 4, which=which,
                                     tol=1e-6, max_iter=10_000)
        grid_best = float(np.min(grid_criterion(grid, atoms, basis, None, 4, which)))
        assert sol.criterion <= grid_best + sol.gap + 1e-9


def test_midpoint_convexity_of_objective():
    rng = np.random.default_rng(99)
    atoms = rng.uniform(size=(5, 2))
    basis = monomial_basis(2, 1)
    prior = 0.1 * np.eye(3)
    for which in ("logD", "A"):
        for _ in range(20):
            w1 = rng.dirichlet(np.ones(5)) * 4.0
            w2 = rng.dirichlet(np.ones(5)) * 4.0
            h1 = criterion(discrete_information(atoms, basis, prior, w1), which)
            h2 = criterion(discrete_information(atoms, basis, prior, w2), which)
            hm = criterion(discrete_information(atoms, basis, prior, (w1 + w2) / 2), which)
            assert hm <= (h1 + h2) / 2 + 1e-10


# ---------------------------------------------------------------------------
# density family generator


def test_family_counts_and_exact_masses():
    basis = monomial_basis(2, 1)
    for degree, expected in ((4, 29), (10, 131)):
        family = monomial_mixture_family(UNIT_SQUARE, basis, degree)
        assert family.size == expected
    family = monomial_mixture_family(UNIT_SQUARE, basis, 4)
    by_name = dict(zip(family.names, family.masses))
    # The mass of x^a y^b on the unit square is 1 / ((a+1)(b+1)), and the
    # reflection does not change it.
    assert by_name["1"] == pytest.approx(1.0, rel=1e-13)
    assert by_name["x1^2*x2"] == pytest.approx(1.0 / 6.0, rel=1e-13)
    assert by_name["~x1^2*~x2"] == pytest.approx(1.0 / 6.0, rel=1e-13)
    assert by_name["x1^4"] == pytest.approx(1.0 / 5.0, rel=1e-13)


def test_family_gramian_matches_hand_integral():
    basis = monomial_basis(1, 1)
    family = monomial_mixture_family(UNIT_SEGMENT, basis, 1)
    index = list(family.names).index("x1")
    expected = np.array([[1.0 / 2.0, 1.0 / 3.0], [1.0 / 3.0, 1.0 / 4.0]])
    np.testing.assert_allclose(family.gramians[index], expected, rtol=1e-13)
    reflected = list(family.names).index("~x1")
    expected_reflected = np.array([[1.0 / 2.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 12.0]])
    np.testing.assert_allclose(family.gramians[reflected], expected_reflected, rtol=1e-13)


def test_family_generator_rejects_bad_spaces():
    constrained = DesignSpace(
        dimension=2,
        bounding_box=[[0.0, 1.0], [0.0, 1.0]],
        regions=[[Constraint(kind="linear", coeffs=[1.0, 1.0], sense="<=", bound=1.0)]],
        name="triangle",
    )
    basis = monomial_basis(2, 1)
    with pytest.raises(ValueError, match="box"):
        monomial_mixture_family(constrained, basis, 2)
    shifted = DesignSpace(dimension=1, bounding_box=[[-1.0, 1.0]], name="shifted")
    with pytest.raises(ValueError, match="nonnegative"):
        monomial_mixture_family(shifted, monomial_basis(1, 1), 2)


def test_family_validation():
    basis = monomial_basis(1, 1)
    good = monomial_mixture_family(UNIT_SEGMENT, basis, 0)
    with pytest.raises(ValueError, match="nonpositive mass"):
        DensityFamily(space=UNIT_SEGMENT, basis=basis, functions=good.functions,
                      masses=[0.0], gramians=good.gramians)
    with pytest.raises(ValueError, match="not PSD"):
        DensityFamily(space=UNIT_SEGMENT, basis=basis, functions=good.functions,
                      masses=[1.0], gramians=[[[1.0, 2.0], [2.0, 1.0]]])
    with pytest.raises(ValueError, match="shape"):
        DensityFamily(space=UNIT_SEGMENT, basis=basis, functions=good.functions,
                      masses=[1.0, 1.0], gramians=good.gramians)
    with pytest.raises(ValueError, match="name"):
        DensityFamily(space=UNIT_SEGMENT, basis=basis, functions=good.functions,
                      masses=[1.0], gramians=good.gramians, names=("a", "b"))


# ---------------------------------------------------------------------------
# density solver


def test_single_uniform_component_gets_mass_k():
    basis = monomial_basis(1, 1)
    family = monomial_mixture_family(UNIT_SEGMENT, basis, 0)
    sol = solve_density_weights(family, np.eye(2), 5, which="D")
    np.testing.assert_allclose(sol.weights, [5.0], rtol=1e-12)
    assert sol.iterations == 0
    wide = DesignSpace(dimension=1, bounding_box=[[0.0, 2.0]], name="wide")
    family2 = monomial_mixture_family(wide, basis, 0)
    sol2 = solve_density_weights(family2, np.eye(2), 5, which="A")
    np.testing.assert_allclose(sol2.weights, [2.5], rtol=1e-12)


def test_two_identical_components_any_split_is_optimal():
    basis = monomial_basis(1, 1)
    base = monomial_mixture_family(UNIT_SEGMENT, basis, 0)
    family = DensityFamily(
        space=UNIT_SEGMENT,
        basis=basis,
        functions=base.functions * 2,
        masses=np.concatenate([base.masses, base.masses]),
        gramians=np.concatenate([base.gramians, base.gramians]),
    )
    sol = solve_density_weights(family, None, 3, which="D")
    assert sol.gap <= 1e-7
    assert abs(np.dot(sol.weights, family.masses) - 3.0) <= 1e-9 * 3.0
    assert abs(sol.total - 3.0) <= 1e-9 * 3.0


def test_optimized_density_concentrates_on_square_corners():
    basis = monomial_basis(2, 1)
    family = monomial_mixture_family(UNIT_SQUARE, basis, 4)
    sol = solve_density_weights(family, 1e-4 * np.eye(3), 3, which="D", tol=1e-4)
    mixture = density_from_weights(family, sol)
    corners = mixture.density(CORNERS)
    center = mixture.density(np.array([[0.5, 0.5]]))[0]
    assert np.min(corners) >= 3.0 * center
    assert abs(mixture.mass - 3.0) <= 1e-8 * 3.0


def test_density_criterion_matches_recomputation():
    basis = monomial_basis(1, 1)
    family = monomial_mixture_family(UNIT_SEGMENT, basis, 2)
    for which in ("D", "A"):
        sol = solve_density_weights(family, 0.2, 2, which=which, tol=1e-6,
                                    max_iter=5_000)
        M = np.tensordot(sol.weights, family.gramians, axes=1) + 0.2 * np.eye(2)
        assert sol.criterion == pytest.approx(criterion(M, which), rel=1e-12)


# ---------------------------------------------------------------------------
# mixtures as reference measures


def test_mixture_of_monomial_and_reflection_is_uniform():
    basis = monomial_basis(1, 1)
    family = monomial_mixture_family(UNIT_SEGMENT, basis, 1)
    weights = np.zeros(family.size)
    weights[list(family.names).index("x1")] = 1.0
    weights[list(family.names).index("~x1")] = 1.0
    mixture = density_from_weights(family, weights)
    grid = np.linspace(0.0, 1.0, 101)[:, None]
    np.testing.assert_allclose(mixture.density(grid), 1.0, rtol=1e-12)
    assert mixture.mass == pytest.approx(1.0, rel=1e-12)
    rng = np.random.default_rng(12)
    draws = mixture.sample(20_000, rng)
    assert stats.kstest(draws[:, 0], "uniform").pvalue > 1e-3


def test_mixture_sampler_matches_numeric_cdf():
    basis = monomial_basis(1, 1)
    family = monomial_mixture_family(UNIT_SEGMENT, basis, 2)
    weights = np.zeros(family.size)
    weights[list(family.names).index("1")] = 0.8
    weights[list(family.names).index("x1^2")] = 2.4
    mixture = density_from_weights(family, weights)
    assert mixture.mass == pytest.approx(1.6, rel=1e-12)
    rng = np.random.default_rng(2026)
    draws = mixture.sample(100_000, rng)
    grid = np.linspace(0.0, 1.0, 20_001)
    dens = 0.8 + 2.4 * grid**2
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    result = stats.kstest(draws[:, 0], lambda x: np.interp(x, grid, cdf))
    assert result.pvalue > 1e-3


def test_mixture_gramian_is_exact_and_guards_the_basis():
    basis = monomial_basis(1, 1)
    family = monomial_mixture_family(UNIT_SEGMENT, basis, 2)
    weights = np.zeros(family.size)
    weights[list(family.names).index("1")] = 0.8
    weights[list(family.names).index("x1^2")] = 2.4
    mixture = density_from_weights(family, weights)
    info = mixture.gramian(basis)
    expected = np.array([[1.6, 1.0], [1.0, 0.8 / 3.0 + 2.4 / 5.0]])
    np.testing.assert_allclose(info.matrix, expected, rtol=1e-12)
    assert info.method == "mixture-exact"
    assert info.mass == pytest.approx(1.6, rel=1e-12)
    with pytest.raises(ValueError, match="family's basis"):
        mixture.gramian(monomial_basis(1, 1))


def test_mixture_drives_the_point_process_model():
    basis = monomial_basis(1, 1)
    family = monomial_mixture_family(UNIT_SEGMENT, basis, 2)
    weights = np.zeros(family.size)
    weights[list(family.names).index("1")] = 0.8
    weights[list(family.names).index("x1^2")] = 2.4
    mixture = density_from_weights(family, weights)
    model = build_model(basis, np.eye(2), mixture)
    assert model.gram_info.method == "mixture-exact"
    assert 1.6 <= expected_cardinality(model) <= 1.6 + 2.0
    rng = np.random.default_rng(5)
    sample = sample_pvs_conditional(model, 4, rng)
    assert len(sample) == 4
    assert np.all((sample.points >= 0.0) & (sample.points <= 1.0))


def test_mixture_validation():
    basis = monomial_basis(1, 1)
    family = monomial_mixture_family(UNIT_SEGMENT, basis, 1)
    with pytest.raises(ValueError, match="one weight per component"):
        MixtureDensity(family=family, weights=np.ones(2))
    with pytest.raises(ValueError, match="nonnegative"):
        MixtureDensity(family=family, weights=-np.ones(family.size))
    with pytest.raises(ValueError, match="positive total mass"):
        MixtureDensity(family=family, weights=np.zeros(family.size))
    mixture = MixtureDensity(family=family, weights=np.ones(family.size))
    with pytest.raises(ValueError, match="points must be"):
        mixture.density(np.zeros((3, 2)))
    with pytest.raises(ValueError, match="nonnegative"):
        mixture.sample(-1, np.random.default_rng(0))


def test_envelope_adapts_when_probe_misses_the_peak(monkeypatch):
    # A two-point probe grid sees only the endpoints of [0, 1]; the peaked
    # component forces adaptive envelope raises, and sampling still
    # terminates with in-domain points.
    import optdesign.relaxation as relaxation

    monkeypatch.setattr(relaxation, "_ENVELOPE_GRID_BUDGET", 2)
    basis = monomial_basis(1, 1)

    def peaked(points):
        pts = np.asarray(points, dtype=float)
        return np.exp(-50.0 * (pts[:, 0] - 0.55) ** 2)

    family = DensityFamily(
        space=UNIT_SEGMENT,
        basis=basis,
        functions=(peaked,),
        masses=[math.sqrt(math.pi / 50.0)],
        gramians=[np.eye(2) * 0.25],
        names=("peak",),
    )
    mixture = MixtureDensity(family=family, weights=np.array([1.0]))
    initial_envelope = math.exp(-50.0 * 0.45**2) * 1.2
    rng = np.random.default_rng(3)
    draws = mixture.sample(500, rng)
    assert draws.shape == (500, 1)
    assert np.all((draws >= 0.0) & (draws <= 1.0))
    assert mixture._envelopes[0] > 10.0 * initial_envelope


def test_rejection_budget_applies_to_mixture_sampling(monkeypatch):
    import optdesign.relaxation as relaxation

    monkeypatch.setattr(relaxation, "REJECTION_BUDGET", -1)
    basis = monomial_basis(1, 1)
    family = monomial_mixture_family(UNIT_SEGMENT, basis, 1)
    mixture = MixtureDensity(family=family, weights=np.ones(family.size))
    with pytest.raises(RejectionBudgetError, match="rejections"):
        mixture.sample(10, np.random.default_rng(0))
