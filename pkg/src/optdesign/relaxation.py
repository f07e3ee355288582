"""Frank-Wolfe solvers for the convex design relaxations.

Two relaxations share one solver core:

* discrete: minimize h(sum_i w_i phi(x_i) phi(x_i)^T + prior) over
  nonnegative weights w summing to k on a finite candidate set;
* density: minimize h(sum_i w_i G_i + prior) over nonnegative mixture
  weights with sum_i w_i m_i = k, where component i is a nonnegative
  function g_i on the space with mass m_i and Gramian G_i.

h is the optimality criterion: -log det for D, trace of the inverse for A;
both are convex in the weights. The feasible sets are scaled simplices, so
the linear-minimization step is a vertex pick, and the segment from the
current matrix M0 towards a vertex matrix V admits an exact line search:
after the generalized eigendecomposition V u = mu M0 u the objective along
(1-t) M0 + t V is an explicit function of t with monotone derivative, and
safeguarded bisection finds the minimizer to machine precision.

An optimized mixture becomes a reference measure through MixtureDensity,
which carries the exact mixture Gramian and a component-then-rejection
sampler, so it plugs directly into the point-process model builder.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .design_space import DesignSpace
from .features import (
    Basis,
    Gramian,
    MonomialBasis,
    SingularMatrixError,
    TransformedBasis,
    criterion,
    validate_prior,
)
from .pvs_sampler import ENVELOPE_SAFETY, REJECTION_BUDGET, RejectionBudgetError

__all__ = [
    "DensityFamily",
    "MixtureDensity",
    "WeightSolution",
    "density_from_weights",
    "monomial_mixture_family",
    "solve_density_weights",
    "solve_discrete_weights",
]

# Bisection steps for the exact line search; 60 halvings of [0, 1] are below
# double-precision resolution.
LINE_SEARCH_ITERATIONS = 60
# Relative jitter applied to the uniform start after a singular restart.
RESTART_JITTER = 1e-6
MAX_RESTARTS = 3
# Total lattice points used to probe a component's sup when building a
# rejection envelope for mixture sampling.
_ENVELOPE_GRID_BUDGET = 32768
_SAMPLE_BATCH = 256


def _sym(M: np.ndarray) -> np.ndarray:
    return (M + M.T) / 2.0


def _criterion_kind(which: str) -> str:
    """Internal objective: D is optimized as -log det."""
    if which == "A":
        return "A"
    if which in ("D", "logD"):
        return "logD"
    raise ValueError(f"unknown criterion {which!r}, expected 'A', 'D', or 'logD'")


# ---------------------------------------------------------------------------
# solution container


@dataclass(eq=False)
class WeightSolution:
    """Weights on a scaled simplex with the certified first-order gap.

    ``criterion`` is reported in the units that were requested: det(M)^-1
    for "D", -log det(M) for "logD", Tr(M^-1) for "A". ``gap`` is the
    Frank-Wolfe duality gap at the returned point; by convexity the
    achieved criterion exceeds the optimum by at most ``gap`` (in the
    internal units, i.e. log scale for D).
    """

    weights: np.ndarray
    total: float
    criterion: float
    gap: float
    iterations: int

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < -1e-12):
            worst = float(self.weights.min())
            raise ValueError(f"weights must be nonnegative, found {worst:.3e}")
        self.weights = np.clip(self.weights, 0.0, None)
        if self.gap < -1e-9 * max(1.0, abs(self.criterion)):
            raise ValueError(f"negative Frank-Wolfe gap {self.gap:.3e}")
        self.gap = max(float(self.gap), 0.0)

    def as_dict(self) -> dict:
        return {
            "weights": [float(w) for w in self.weights],
            "total": float(self.total),
            "criterion": float(self.criterion),
            "gap": float(self.gap),
            "iterations": int(self.iterations),
        }


# ---------------------------------------------------------------------------
# Frank-Wolfe core


def _segment_minimizer(current: np.ndarray, target: np.ndarray, kind: str) -> float:
    """Exact minimizer over t in [0, 1] of h((1-t) current + t target).

    With target u = mu * current u and Phi the generalized eigenvectors
    (Phi^T current Phi = I), the segment matrix is congruent to
    diag((1-t) + t mu), so

      logD: h'(t) = -sum (mu_i - 1) / ((1-t) + t mu_i)
      A:    h'(t) = -sum c_i (mu_i - 1) / ((1-t) + t mu_i)^2,
            c_i = squared norm of column i of Phi.

    Both derivatives are nondecreasing on [0, 1), so safeguarded bisection
    brackets the root. Returns a point with h(t) <= h(0).
    """
    mu, vecs = scipy.linalg.eigh(target, current)
    mu = np.clip(mu, 0.0, None)
    if kind == "logD":
        coef = mu - 1.0

        def derivative(t: float) -> float:
            return -float(np.sum(coef / ((1.0 - t) + t * mu)))

    else:
        coef = np.sum(vecs**2, axis=0) * (mu - 1.0)

        def derivative(t: float) -> float:
            return -float(np.sum(coef / ((1.0 - t) + t * mu) ** 2))

    if derivative(0.0) >= 0.0:
        return 0.0
    if np.all(mu > 0.0) and derivative(1.0) <= 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(LINE_SEARCH_ITERATIONS):
        mid = 0.5 * (lo + hi)
        if derivative(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def _run_frank_wolfe(build_matrix, gradients, vertex_matrix, scales, start, k, kind, tol, max_iter):
    """One Frank-Wolfe attempt; raises on singular matrices (caller restarts).

    ``scales[j]`` is the weight the j-th simplex vertex places on item j, so
    the vertex objective value of the linearization is scales[j] *
    gradient[j] and the duality gap is <g, w> - min_j scales[j] g[j].
    """
    w = np.asarray(start, dtype=float).copy()
    M = build_matrix(w)
    h = criterion(M, kind)
    steps = 0
    while True:
        g = gradients(M)
        vertex_values = scales * g
        j = int(np.argmin(vertex_values))
        gap = float(np.dot(g, w) - vertex_values[j])
        if gap <= tol * max(abs(h), 1e-12) or steps >= max_iter:
            break
        target = vertex_matrix(j)
        t = _segment_minimizer(M, target, kind)
        if t <= 0.0:
            break
        w *= 1.0 - t
        w[j] += t * scales[j]
        M = _sym((1.0 - t) * M + t * target)
        h_new = criterion(M, kind)
        assert h_new <= h + 1e-10 * max(1.0, abs(h)), (
            f"objective increased from {h!r} to {h_new!r} at step {steps}"
        )
        h = h_new
        steps += 1
    return w, h, gap, steps


def _solve_on_simplex(build_matrix, gradients, vertex_matrix, scales, masses, k, kind, tol, max_iter):
    """Run Frank-Wolfe with jittered-uniform restarts on singular failures.

    ``masses`` maps simplex mass coordinates to weights (all ones in the
    discrete problem); the uniform start places mass k / ell on every item.
    """
    ell = len(scales)
    last_error = None
    for attempt in range(MAX_RESTARTS):
        q = np.full(ell, k / ell)
        if attempt:
            signs = np.where(np.arange(ell) % 2 == 0, 1.0, -1.0)
            q = q * (1.0 + RESTART_JITTER * attempt * signs)
            q *= k / q.sum()
        start = q / masses
        try:
            w, h, gap, steps = _run_frank_wolfe(
                build_matrix, gradients, vertex_matrix, scales, start, k, kind, tol, max_iter
            )
        except (SingularMatrixError, np.linalg.LinAlgError) as exc:
            last_error = exc
            continue
        # Remove accumulated roundoff in the mass constraint, then report
        # the criterion of the exact weights returned.
        total = float(np.dot(w, masses))
        w = w * (k / total)
        h = criterion(build_matrix(w), kind)
        return w, h, gap, steps
    raise RuntimeError(
        f"persistent singularity in the Frank-Wolfe solver after {MAX_RESTARTS} "
        f"jittered restarts: {last_error}"
    )


def solve_discrete_weights(points, basis: Basis, prior, k, which: str = "D",
                           tol: float = 1e-7, max_iter: int = 100_000) -> WeightSolution:
    """Optimal design weights of total mass k on a finite candidate set.

    Minimizes h(sum_i w_i phi(x_i) phi(x_i)^T + prior) over w >= 0 with
    sum w = k by Frank-Wolfe with exact line search. Gradient components
    are -phi_i^T M^-1 phi_i for D and -|M^-1 phi_i|^2 for A; each step
    moves towards the vertex k e_j with the most negative scaled gradient.

    Stops when the duality gap drops below tol * |h|. If the information
    matrix turns singular during iteration (possible with a zero prior),
    restarts from jittered uniform weights; persistent singularity raises
    RuntimeError.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if len(points) == 0:
        raise ValueError("need at least one candidate point")
    if not k > 0:
        raise ValueError("total mass k must be positive")
    kind = _criterion_kind(which)
    prior = validate_prior(prior, basis.p)
    table = basis.evaluate_many(points)
    k = float(k)

    def build_matrix(w):
        return _sym((table * w[:, None]).T @ table + prior)

    def gradients(M):
        solved = np.linalg.solve(M, table.T)
        if kind == "logD":
            return -np.einsum("ip,pi->i", table, solved)
        return -np.sum(solved**2, axis=0)

    def vertex_matrix(j):
        v = table[j]
        return _sym(k * np.outer(v, v) + prior)

    scales = np.full(len(points), k)
    masses = np.ones(len(points))
    w, h, gap, steps = _solve_on_simplex(
        build_matrix, gradients, vertex_matrix, scales, masses, k, kind, tol, max_iter
    )
    value = math.exp(h) if which == "D" else h
    return WeightSolution(weights=w, total=float(w.sum()), criterion=value,
                          gap=gap, iterations=steps)


# ---------------------------------------------------------------------------
# density relaxation


@dataclass(eq=False)
class DensityFamily:
    """Finite family of nonnegative component functions on a space.

    Each component g_i is a callable mapping an (n, d) point array to the
    (n,) array of its values, with known mass m_i = integral of g_i over
    the space and Gramian G_i = integral of phi phi^T g_i for the stored
    basis. Mixtures sum_i w_i g_i with w >= 0 are candidate reference
    densities; the relaxed design problem optimizes w subject to the total
    mass sum_i w_i m_i = k.
    """

    space: DesignSpace
    basis: Basis
    functions: tuple
    masses: np.ndarray
    gramians: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        self.functions = tuple(self.functions)
        self.masses = np.asarray(self.masses, dtype=float)
        self.gramians = np.asarray(self.gramians, dtype=float)
        ell = len(self.functions)
        if ell == 0:
            raise ValueError("need at least one component function")
        if self.masses.shape != (ell,):
            raise ValueError(f"masses must have shape ({ell},), got {self.masses.shape}")
        p = self.basis.p
        if self.gramians.shape != (ell, p, p):
            raise ValueError(
                f"gramians must have shape ({ell}, {p}, {p}), got {self.gramians.shape}"
            )
        if np.any(self.masses <= 0.0):
            bad = int(np.flatnonzero(self.masses <= 0.0)[0])
            raise ValueError(f"component {bad} has nonpositive mass {self.masses[bad]:.3e}")
        for i, G in enumerate(self.gramians):
            scale = max(float(np.abs(G).max()), 1.0)
            if float(np.abs(G - G.T).max()) > 1e-10 * scale:
                raise ValueError(f"component {i} Gramian is not symmetric")
            eigs = np.linalg.eigvalsh(_sym(G))
            if eigs[0] < -1e-10 * scale:
                raise ValueError(
                    f"component {i} Gramian is not PSD: smallest eigenvalue {eigs[0]:.3e}"
                )
        if not self.names:
            self.names = tuple(f"g{i}" for i in range(ell))
        elif len(self.names) != ell:
            raise ValueError("need one name per component")

    @property
    def size(self) -> int:
        return len(self.functions)


def solve_density_weights(family: DensityFamily, prior, k, which: str = "D",
                          tol: float = 1e-7, max_iter: int = 100_000) -> WeightSolution:
    """Optimal mixture weights over a density family, total mass k.

    Same Frank-Wolfe scheme as the discrete solver on the mass-weighted
    simplex {w >= 0, sum_i w_i m_i = k}: vertex j places weight k / m_j on
    component j, and gradient components are -Tr(M^-1 G_i) for D and
    -Tr(M^-1 G_i M^-1) for A.
    """
    if not k > 0:
        raise ValueError("total mass k must be positive")
    kind = _criterion_kind(which)
    p = family.basis.p
    prior = validate_prior(prior, p)
    grams = family.gramians
    masses = family.masses
    k = float(k)

    def build_matrix(w):
        return _sym(np.tensordot(w, grams, axes=1) + prior)

    def gradients(M):
        inverse = _sym(np.linalg.solve(M, np.eye(p)))
        if kind == "logD":
            return -np.einsum("ab,iab->i", inverse, grams)
        return -np.einsum("ab,iab->i", _sym(inverse @ inverse), grams)

    def vertex_matrix(j):
        return _sym((k / masses[j]) * grams[j] + prior)

    scales = k / masses
    w, h, gap, steps = _solve_on_simplex(
        build_matrix, gradients, vertex_matrix, scales, masses, k, kind, tol, max_iter
    )
    value = math.exp(h) if which == "D" else h
    return WeightSolution(weights=w, total=float(np.dot(w, masses)), criterion=value,
                          gap=gap, iterations=steps)


# ---------------------------------------------------------------------------
# component family generator (boxes, polynomial components)


def _is_box(space: DesignSpace) -> bool:
    return any(len(region) == 0 for region in space.regions)


def _total_degree_exponents(dimension: int, degree: int) -> list:
    exps = [e for e in itertools.product(range(degree + 1), repeat=dimension)
            if sum(e) <= degree]
    exps.sort(key=lambda e: (sum(e), tuple(-x for x in e)))
    return exps


def _monomial_component(exponents: np.ndarray):
    def component(points):
        pts = np.asarray(points, dtype=float)
        return np.prod(pts**exponents, axis=1)

    return component


def _reflected_component(exponents: np.ndarray, edge_sums: np.ndarray):
    def component(points):
        pts = np.asarray(points, dtype=float)
        return np.prod((edge_sums - pts)**exponents, axis=1)

    return component


def _exponent_name(exponents, prefix: str = "") -> str:
    parts = [f"{prefix}x{ax + 1}^{e}" if e > 1 else f"{prefix}x{ax + 1}"
             for ax, e in enumerate(exponents) if e > 0]
    return "*".join(parts) if parts else "1"


def _basis_axis_degrees(basis: Basis) -> np.ndarray:
    """Largest per-axis exponent of a (transformed) monomial basis."""
    if isinstance(basis, MonomialBasis):
        return basis.exponents.max(axis=0)
    if isinstance(basis, TransformedBasis) and isinstance(basis.base, MonomialBasis):
        return basis.base.exponents.max(axis=0)
    raise TypeError(
        "the polynomial family generator needs a monomial or transformed "
        f"monomial basis, got {type(basis).__name__}"
    )


def _box_quadrature(box: np.ndarray, orders) -> tuple:
    """Tensor Gauss-Legendre nodes and weights on a box."""
    axis_nodes, axis_weights = [], []
    for (lo, hi), order in zip(box, orders):
        t, u = np.polynomial.legendre.leggauss(int(order))
        axis_nodes.append(0.5 * (hi + lo) + 0.5 * (hi - lo) * t)
        axis_weights.append(0.5 * (hi - lo) * u)
    mesh = np.meshgrid(*axis_nodes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    weights = axis_weights[0]
    for u in axis_weights[1:]:
        weights = np.outer(weights, u).ravel()
    return points, weights


def monomial_mixture_family(space: DesignSpace, basis: Basis, max_degree: int) -> DensityFamily:
    """Monomial products and their reflections as a density family on a box.

    Components are x^a = prod_ax x_ax^a_ax for every exponent tuple of total
    degree <= max_degree, together with the reflected versions obtained by
    the box involution x_ax -> lo_ax + hi_ax - x_ax (the constant appears
    once). The box must sit in the nonnegative orthant so every component
    is nonnegative. Masses and Gramians are exact tensor Gauss-Legendre
    quadrature values; the basis must be (transformed) monomials so the
    quadrature order can cover the integrand degree.
    """
    if max_degree < 0:
        raise ValueError("max_degree must be nonnegative")
    if not _is_box(space):
        raise ValueError(
            "the polynomial family generator supports box spaces only; build "
            "a DensityFamily directly for constrained spaces"
        )
    box = space.bounding_box
    if np.any(box[:, 0] < 0.0):
        raise ValueError(
            "components must be nonnegative on the space: the box must lie "
            "in the nonnegative orthant"
        )
    axis_degrees = _basis_axis_degrees(basis)
    orders = [2 * int(d) + max_degree + 2 for d in axis_degrees]
    orders = [(o + 1) // 2 for o in orders]
    points, quad_weights = _box_quadrature(box, orders)
    table = basis.evaluate_many(points)

    edge_sums = box[:, 0] + box[:, 1]
    functions, names = [], []
    for exps in _total_degree_exponents(space.dimension, max_degree):
        arr = np.asarray(exps, dtype=np.int64)
        functions.append(_monomial_component(arr))
        names.append(_exponent_name(exps))
        if sum(exps) > 0:
            functions.append(_reflected_component(arr, edge_sums))
            names.append(_exponent_name(exps, prefix="~"))

    masses = np.empty(len(functions))
    gramians = np.empty((len(functions), basis.p, basis.p))
    for i, g in enumerate(functions):
        values = g(points)
        masses[i] = float(np.dot(quad_weights, values))
        weighted = table * (quad_weights * values)[:, None]
        gramians[i] = _sym(weighted.T @ table)
    return DensityFamily(space=space, basis=basis, functions=tuple(functions),
                         masses=masses, gramians=gramians, names=tuple(names))


# ---------------------------------------------------------------------------
# mixtures as reference measures


@dataclass(eq=False)
class MixtureDensity:
    """Nonnegative mixture f = sum_i w_i g_i usable as a reference measure.

    Implements the measure protocol of the samplers: ``mass``,
    ``sample(count, rng)`` drawing i.i.d. points from f / mass, and
    ``gramian(basis, ...)`` returning the exact mixture Gramian, so model
    construction uses closed-form moments instead of Monte Carlo.

    Sampling draws a component from the categorical distribution over
    w_i m_i and then rejection-samples within the component, with envelope
    sup g_i probed on a lattice and inflated by a safety factor; proposals
    above the envelope raise it adaptively, so the procedure is exact up to
    the probability that the probe missed the sup by more than the safety
    margin. The instance is callable: MixtureDensity(points) evaluates f.
    """

    family: DensityFamily
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.family.size,):
            raise ValueError(
                f"need one weight per component, got shape {self.weights.shape} "
                f"for {self.family.size} components"
            )
        if np.any(self.weights < -1e-12):
            raise ValueError("mixture weights must be nonnegative")
        self.weights = np.clip(self.weights, 0.0, None)
        self._component_mass = self.weights * self.family.masses
        if not np.any(self._component_mass > 0.0):
            raise ValueError("mixture must have positive total mass")
        self._envelopes = {}

    @property
    def space(self) -> DesignSpace:
        return self.family.space

    @property
    def mass(self) -> float:
        return float(self._component_mass.sum())

    def density(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.space.dimension:
            raise ValueError(f"points must be (n, {self.space.dimension}), got {pts.shape}")
        out = np.zeros(len(pts))
        for w, g in zip(self.weights, self.family.functions):
            if w > 0.0:
                out += w * np.asarray(g(pts), dtype=float)
        return out

    __call__ = density

    def gramian(self, basis: Basis, mc_samples=None, rng=None) -> Gramian:
        if basis is not self.family.basis:
            raise ValueError(
                "mixture Gramians are precomputed for the family's basis; "
                "pass that basis object"
            )
        matrix = _sym(np.tensordot(self.weights, self.family.gramians, axes=1))
        return Gramian(matrix=matrix, mass=self.mass, method="mixture-exact")

    def _probe_grid(self) -> np.ndarray:
        space = self.space
        dim = space.dimension
        per_axis = max(2, int(_ENVELOPE_GRID_BUDGET ** (1.0 / dim)))
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in space.bounding_box]
        mesh = np.meshgrid(*axes, indexing="ij")
        grid = np.stack([m.ravel() for m in mesh], axis=1)
        inside = space.contains_many(grid)
        if np.any(inside):
            return grid[inside]
        return space.sample_uniform(1024, np.random.default_rng(0))

    def _envelope(self, index: int) -> float:
        env = self._envelopes.get(index)
        if env is None:
            values = np.asarray(self.family.functions[index](self._probe_grid()), dtype=float)
            env = max(float(values.max()), 1e-30) * ENVELOPE_SAFETY
            self._envelopes[index] = env
        return env

    def _sample_component(self, index: int, count: int, rng: np.random.Generator) -> np.ndarray:
        g = self.family.functions[index]
        envelope = self._envelope(index)
        out = np.empty((count, self.space.dimension))
        have = 0
        rejections = 0
        while have < count:
            batch = self.space.sample_uniform(_SAMPLE_BATCH, rng)
            values = np.asarray(g(batch), dtype=float)
            thresholds = rng.random(len(batch)) * envelope
            for t in range(len(batch)):
                if values[t] > envelope:
                    # Thresholds in this batch were scaled by the old
                    # envelope; raise it and draw a fresh batch.
                    envelope = values[t] * ENVELOPE_SAFETY
                    self._envelopes[index] = envelope
                    rejections += 1
                    break
                if thresholds[t] < values[t]:
                    out[have] = batch[t]
                    have += 1
                    if have == count:
                        break
                else:
                    rejections += 1
            if rejections > REJECTION_BUDGET:
                raise RejectionBudgetError(
                    f"more than {REJECTION_BUDGET} rejections while sampling "
                    f"component {self.family.names[index]!r} (envelope {envelope:.3e})"
                )
        return out

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if count < 0:
            raise ValueError("count must be nonnegative")
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        out = np.empty((count, self.space.dimension))
        if count == 0:
            return out
        law = self._component_mass / self.mass
        indices = rng.choice(self.family.size, size=count, p=law)
        for i in range(self.family.size):
            mask = indices == i
            block = int(mask.sum())
            if block:
                out[mask] = self._sample_component(i, block, rng)
        return out


def density_from_weights(family: DensityFamily, weights) -> MixtureDensity:
    """Reference-measure view of optimized mixture weights.

    Accepts a WeightSolution or a bare weight vector; the result has mass
    sum_i w_i m_i (equal to k for a solver output) and can be passed as the
    measure when building a point-process model.
    """
    if isinstance(weights, WeightSolution):
        weights = weights.weights
    return MixtureDensity(family=family, weights=weights)
