"""Global and local search heuristics for k-point optimal designs.

Four drivers share the SearchTrace record format and the accept-only-better
discipline, so every trace's best-criterion sequence is nonincreasing by
construction (hard assertion on every accepted step):

* dogs: global search alternating random proposals, convex re-weighting of
  the union of the proposal with the incumbent, and a k-point draw from the
  determinant-proportional sampler under the optimized weights;
* lsa: local search by whole-design Gaussian perturbations, reverting the
  points that leave the space;
* exchange_continuous: cyclic one-point-at-a-time minimization, each
  one-point subproblem solved by multi-start coordinate descent with
  golden-section line searches and feasibility rejection;
* exchange_discrete: the same cycle over a finite candidate list with the
  inner step made exhaustive.

Criteria are compared in log scale for D (overflow-free); the trace stores
that comparison value. Wall-clock seconds are recorded per trace row but
carry no reproducibility guarantee.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from .design_space import DesignSpace, FiniteSpace
from .features import (
    AtomicMeasure,
    Basis,
    SingularMatrixError,
    criterion,
    information_matrix,
    validate_prior,
)
from .pvs_sampler import InfeasibleCardinalityError, build_model, sample_pvs, sample_pvs_discrete
from .relaxation import solve_discrete_weights

__all__ = [
    "ProposalConfig",
    "SearchTrace",
    "TraceRecord",
    "dogs",
    "exchange_continuous",
    "exchange_discrete",
    "grid_candidates",
    "lsa",
]

logger = logging.getLogger(__name__)

# Lighter relaxation settings inside DOGS: the weights feed a sampler, not
# an optimality certificate.
DOGS_RELAX_TOL = 1e-5
DOGS_RELAX_MAX_ITER = 2000
# Objective-evaluation budget for each multi-start of the continuous
# exchange inner solver, and the golden-section slice budget within it.
EXCHANGE_EVALS_PER_START = 200
_GOLDEN_SLICE_EVALS = 24
# A sweep of the exchange methods stops the run when it improves the
# criterion by less than this relative amount.
SWEEP_IMPROVEMENT_FLOOR = 1e-10
GRID_POINT_BUDGET = 10_000_000
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _comparison_kind(which: str) -> str:
    if which == "A":
        return "A"
    if which in ("D", "logD"):
        return "logD"
    raise ValueError(f"unknown criterion {which!r}, expected 'A', 'D', or 'logD'")


def _safe_criterion(M: np.ndarray, kind: str) -> float:
    try:
        return criterion(M, kind)
    except SingularMatrixError:
        return math.inf


def _contains_rows(space, points: np.ndarray) -> np.ndarray:
    if hasattr(space, "contains_many"):
        return space.contains_many(points)
    return np.array([space.contains(p) for p in points], dtype=bool)


# ---------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    criterion_log: float
    seconds: float


@dataclass(eq=False)
class SearchTrace:
    """Best-so-far criterion per iteration and the final design.

    ``criterion_log`` rows hold the comparison value: -log det(M) when the
    run optimizes D (log scale avoids overflow), Tr(M^-1) for A. The
    ``seconds`` column is wall-clock time since the run started and is not
    reproducible across machines.
    """

    records: list
    design: np.ndarray
    which: str

    def __post_init__(self):
        self.design = np.asarray(self.design, dtype=float)
        values = [r.criterion_log for r in self.records]
        assert all(b <= a for a, b in zip(values, values[1:])), (
            "best-criterion sequence must be nonincreasing"
        )

    @property
    def criterion_log(self) -> float:
        return self.records[-1].criterion_log

    def criterion_values(self) -> np.ndarray:
        return np.array([r.criterion_log for r in self.records])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            handle.write("iteration,criterion_log,seconds\n")
            for record in self.records:
                handle.write(
                    f"{record.iteration},{repr(float(record.criterion_log))},"
                    f"{record.seconds:.6f}\n"
                )


class _TraceBuilder:
    """Accumulates records and enforces the nonincreasing invariant."""

    def __init__(self):
        self.records = []
        self.start = time.perf_counter()

    def add(self, iteration: int, value: float) -> None:
        if self.records:
            assert value <= self.records[-1].criterion_log, (
                f"best criterion increased from {self.records[-1].criterion_log!r} "
                f"to {value!r} at iteration {iteration}"
            )
        self.records.append(
            TraceRecord(iteration=iteration, criterion_log=float(value),
                        seconds=time.perf_counter() - self.start)
        )


# ---------------------------------------------------------------------------
# DOGS


@dataclass(frozen=True, eq=False)
class ProposalConfig:
    """Random-proposal settings for the global search.

    ``uniform`` draws k_prime i.i.d. uniform points from the space;
    ``uniform-plus-candidates`` always includes the fixed candidate list and
    fills the remaining k_prime - len(candidates) slots uniformly.
    """

    k_prime: int
    mode: str = "uniform"
    candidates: np.ndarray | None = None

    def __post_init__(self):
        if self.k_prime < 1:
            raise ValueError("k_prime must be a positive integer")
        if self.mode not in ("uniform", "uniform-plus-candidates"):
            raise ValueError(f"unknown proposal mode {self.mode!r}")
        if self.mode == "uniform-plus-candidates":
            if self.candidates is None or len(self.candidates) == 0:
                raise ValueError("uniform-plus-candidates mode needs a candidate list")
            object.__setattr__(
                self, "candidates", np.asarray(self.candidates, dtype=float)
            )
            if self.k_prime < len(self.candidates):
                raise ValueError(
                    f"k_prime = {self.k_prime} is smaller than the candidate "
                    f"list ({len(self.candidates)} points)"
                )
        elif self.candidates is not None:
            raise ValueError("candidates are only used in uniform-plus-candidates mode")

    def draw(self, space, rng: np.random.Generator) -> np.ndarray:
        if self.mode == "uniform":
            return space.sample_uniform(self.k_prime, rng)
        extra = space.sample_uniform(self.k_prime - len(self.candidates), rng)
        return np.vstack([self.candidates, extra])


def dogs(space, basis: Basis, prior, k: int, proposal: ProposalConfig,
         which: str = "D", iters: int = 100, rng=None, condition_on_size: bool = True,
         relax_tol: float = DOGS_RELAX_TOL,
         relax_max_iter: int = DOGS_RELAX_MAX_ITER) -> SearchTrace:
    """Global search: propose, re-weight the union, sample, keep if better.

    Each iteration draws a random design per ``proposal``, forms the
    deduplicated union with the incumbent, solves the discrete weight
    relaxation for mass k on the union, draws a k-point design from the
    determinant-proportional process under those weights, and accepts it
    only on strict improvement. A relaxation or sampling failure skips the
    iteration with a warning.

    With ``condition_on_size=False`` the draw is the unconditioned process
    (random size) instead of exactly k points; comparisons are then between
    designs of different sizes.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    if iters < 0:
        raise ValueError("iters must be nonnegative")
    rng = _as_generator(rng)
    kind = _comparison_kind(which)
    prior_mat = validate_prior(prior, basis.p)
    if proposal.candidates is not None and not np.all(
        _contains_rows(space, proposal.candidates)
    ):
        raise ValueError("every proposal candidate must lie inside the space")

    best = space.sample_uniform(k, rng)
    best_value = _safe_criterion(information_matrix(basis, best, prior_mat), kind)
    trace = _TraceBuilder()
    trace.add(0, best_value)
    memo_key = None
    memo_solution = None
    for iteration in range(1, iters + 1):
        proposed = proposal.draw(space, rng)
        union = np.unique(np.vstack([best, proposed]), axis=0)
        try:
            key = union.tobytes()
            if key == memo_key:
                solution = memo_solution
            else:
                solution = solve_discrete_weights(
                    union, basis, prior_mat, k, which=which,
                    tol=relax_tol, max_iter=relax_max_iter,
                )
                memo_key, memo_solution = key, solution
            if condition_on_size:
                candidate = sample_pvs_discrete(
                    union, solution.weights, basis, prior_mat, k, rng
                ).points
            else:
                measure = AtomicMeasure(atoms=union, weights=solution.weights)
                candidate = sample_pvs(build_model(basis, prior_mat, measure), rng).points
        except (RuntimeError, InfeasibleCardinalityError) as exc:
            logger.warning("global search iteration %d skipped: %s", iteration, exc)
            trace.add(iteration, best_value)
            continue
        value = _safe_criterion(information_matrix(basis, candidate, prior_mat), kind)
        if value < best_value:
            assert np.all(_contains_rows(space, candidate))
            best, best_value = candidate, value
        trace.add(iteration, best_value)
    return SearchTrace(records=trace.records, design=best, which=which)


# ---------------------------------------------------------------------------
# LSA


def lsa(space, basis: Basis, prior, k: int, sigma: float, which: str = "D",
        iters: int = 1000, rng=None) -> SearchTrace:
    """Local search by whole-design Gaussian perturbation.

    Each iteration adds N(0, sigma^2) noise to every coordinate of every
    point, reverts the points that leave the space, and accepts the
    perturbed design only on strict improvement.
    """
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if k < 1:
        raise ValueError("k must be a positive integer")
    rng = _as_generator(rng)
    kind = _comparison_kind(which)
    prior_mat = validate_prior(prior, basis.p)
    best = space.sample_uniform(k, rng)
    best_value = _safe_criterion(information_matrix(basis, best, prior_mat), kind)
    trace = _TraceBuilder()
    trace.add(0, best_value)
    for iteration in range(1, iters + 1):
        proposed = best + rng.normal(0.0, sigma, size=best.shape)
        inside = _contains_rows(space, proposed)
        proposed[~inside] = best[~inside]
        value = _safe_criterion(information_matrix(basis, proposed, prior_mat), kind)
        if value < best_value:
            best, best_value = proposed, value
        trace.add(iteration, best_value)
    return SearchTrace(records=trace.records, design=best, which=which)


# ---------------------------------------------------------------------------
# exchange methods


def _golden_section(func, lo: float, hi: float, evals: int):
    """Golden-section minimization on [lo, hi] with a fixed evaluation budget."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = func(c), func(d)
    used = 2
    while used < evals:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = func(d)
        used += 1
    return (c, fc) if fc <= fd else (d, fd)


def _coordinate_descent(objective, start: np.ndarray, box: np.ndarray, budget: int):
    """Cyclic golden-section descent over coordinates, feasibility-aware.

    ``objective`` returns +inf outside the space; slices that find no
    improvement leave the coordinate unchanged.  The first pass searches
    each full axis; later passes re-center a bracket on the incumbent
    coordinate at the resolution the previous slice reached, so precision
    compounds geometrically across passes instead of stalling at the
    single-slice resolution.
    """
    x = np.array(start, dtype=float)
    fx = objective(x)
    used = 1
    dims = len(box)
    # Final golden-section interval is (b - a) * ratio^(evals - 2); pad it.
    resolution = _GOLDEN ** (_GOLDEN_SLICE_EVALS - 2) * 8.0
    half_width = (box[:, 1] - box[:, 0]).astype(float)
    while used + _GOLDEN_SLICE_EVALS <= budget:
        improved = False
        for ax in range(dims):
            if used + _GOLDEN_SLICE_EVALS > budget:
                break
            lo = max(box[ax, 0], x[ax] - half_width[ax])
            hi = min(box[ax, 1], x[ax] + half_width[ax])
            if hi <= lo:
                continue

            def slice_objective(t, ax=ax):
                probe = x.copy()
                probe[ax] = t
                return objective(probe)

            t_best, f_best = _golden_section(slice_objective, lo, hi, _GOLDEN_SLICE_EVALS)
            used += _GOLDEN_SLICE_EVALS
            half_width[ax] = max((hi - lo) * resolution, 1e-14)
            if f_best < fx:
                x[ax] = t_best
                fx = f_best
                improved = True
        if not improved:
            break
    return x, fx


def exchange_continuous(space: DesignSpace, basis: Basis, prior, k: int,
                        which: str = "D", sweeps: int = 20, inner_budget: int = 8,
                        rng=None) -> SearchTrace:
    """Cyclic one-point exchange on a continuous space.

    For each design position in turn, the one-point subproblem (best
    replacement for that point, the rest held fixed) is approximately
    solved by multi-start coordinate descent: the current point plus
    ``inner_budget`` uniform starts, each refined with golden-section
    slices under feasibility rejection, 200 objective evaluations per
    start. The replacement is kept only on strict improvement. Stops after
    ``sweeps`` cycles or when a full sweep improves the criterion by less
    than a 1e-10 relative amount.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    if sweeps < 0 or inner_budget < 0:
        raise ValueError("sweeps and inner_budget must be nonnegative")
    rng = _as_generator(rng)
    kind = _comparison_kind(which)
    prior_mat = validate_prior(prior, basis.p)
    design = space.sample_uniform(k, rng)
    value = _safe_criterion(information_matrix(basis, design, prior_mat), kind)
    trace = _TraceBuilder()
    trace.add(0, value)
    box = space.bounding_box
    for sweep in range(1, sweeps + 1):
        sweep_start_value = value
        for i in range(k):
            others = np.delete(design, i, axis=0)
            leave_out = information_matrix(basis, others, prior_mat)
            objective = _one_point_objective(space, basis, leave_out, kind)
            starts = [design[i]]
            if inner_budget > 0:
                starts.extend(space.sample_uniform(inner_budget, rng))
            best_x, best_f = None, math.inf
            for start in starts:
                x, f = _coordinate_descent(objective, start, box, EXCHANGE_EVALS_PER_START)
                if f < best_f:
                    best_x, best_f = x, f
            if best_x is None:
                continue
            table_row = basis.evaluate(best_x)
            candidate_value = _safe_criterion(
                leave_out + np.outer(table_row, table_row), kind
            )
            if candidate_value < value:
                assert space.contains(best_x)
                design = design.copy()
                design[i] = best_x
                value = candidate_value
        trace.add(sweep, value)
        if math.isinf(sweep_start_value):
            if math.isinf(value):
                break
        elif value >= sweep_start_value - SWEEP_IMPROVEMENT_FLOOR * max(
            abs(sweep_start_value), 1.0
        ):
            break
    return SearchTrace(records=trace.records, design=design, which=which)


def _one_point_objective(space, basis: Basis, leave_out: np.ndarray, kind: str):
    """Objective x -> h(leave_out + phi(x) phi(x)^T), +inf outside the space.

    When the leave-out matrix is nonsingular the rank-one update gives a
    cheap equivalent score: minimizing h is maximizing v^T M^-1 v for logD
    and |M^-1 v|^2 / (1 + v^T M^-1 v) for A.
    """
    try:
        inverse = np.linalg.inv(leave_out)
        eigs = np.linalg.eigvalsh(leave_out)
        if eigs[0] <= 1e-12 * max(eigs[-1], 1e-300):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        def objective(x):
            if not space.contains(x):
                return math.inf
            row = basis.evaluate(x)
            return _safe_criterion(leave_out + np.outer(row, row), kind)

        return objective

    if kind == "logD":
        def objective(x):
            if not space.contains(x):
                return math.inf
            row = basis.evaluate(x)
            return -float(row @ inverse @ row)

    else:
        def objective(x):
            if not space.contains(x):
                return math.inf
            row = basis.evaluate(x)
            solved = inverse @ row
            return -float(solved @ solved) / (1.0 + float(row @ solved))

    return objective


def exchange_discrete(candidates, basis: Basis, prior, k: int, which: str = "D",
                      sweeps: int = 50, rng=None) -> SearchTrace:
    """Cyclic one-point exchange over a finite candidate list.

    The inner step is exhaustive: every candidate is scored as the
    replacement for the current position via the rank-one update (with a
    full-criterion fallback when the leave-out matrix is singular) and the
    best is kept on strict improvement. The run stops early after a full
    sweep without any replacement, at which point no single-point exchange
    improves the design.
    """
    candidates = np.asarray(candidates, dtype=float)
    if candidates.ndim == 1:
        candidates = candidates[:, None]
    if len(candidates) == 0:
        raise ValueError("need at least one candidate point")
    if k < 1:
        raise ValueError("k must be a positive integer")
    rng = _as_generator(rng)
    kind = _comparison_kind(which)
    prior_mat = validate_prior(prior, basis.p)
    table = basis.evaluate_many(candidates)
    indices = rng.integers(0, len(candidates), size=k)
    design = candidates[indices]
    value = _safe_criterion(information_matrix(basis, design, prior_mat), kind)
    trace = _TraceBuilder()
    trace.add(0, value)
    for sweep in range(1, sweeps + 1):
        changed = False
        for i in range(k):
            others = np.delete(design, i, axis=0)
            leave_out = information_matrix(basis, others, prior_mat)
            j = _best_exchange_candidate(leave_out, table, kind)
            row = table[j]
            candidate_value = _safe_criterion(leave_out + np.outer(row, row), kind)
            if candidate_value < value:
                design = design.copy()
                design[i] = candidates[j]
                value = candidate_value
                changed = True
        trace.add(sweep, value)
        if not changed:
            break
    return SearchTrace(records=trace.records, design=design, which=which)


def _best_exchange_candidate(leave_out: np.ndarray, table: np.ndarray, kind: str) -> int:
    """Index of the candidate minimizing h(leave_out + v v^T), vectorized."""
    eigs = np.linalg.eigvalsh(leave_out)
    if eigs[0] > 1e-12 * max(eigs[-1], 1e-300):
        inverse = np.linalg.inv(leave_out)
        solved = table @ inverse
        quad = np.einsum("ip,ip->i", solved, table)
        if kind == "logD":
            return int(np.argmax(quad))
        return int(np.argmax(np.einsum("ip,ip->i", solved, solved) / (1.0 + quad)))
    updated = leave_out[None, :, :] + np.einsum("ia,ib->iab", table, table)
    spectra = np.linalg.eigvalsh(updated)
    positive = spectra[:, 0] > 1e-12 * np.maximum(spectra[:, -1], 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == "logD":
            values = -np.sum(np.log(spectra), axis=1)
        else:
            values = np.sum(1.0 / spectra, axis=1)
    values = np.where(positive, values, math.inf)
    return int(np.argmin(values))


# ---------------------------------------------------------------------------
# grid candidates


def grid_candidates(space: DesignSpace, step: float) -> np.ndarray:
    """Bounding-box lattice points of pitch ``step`` that lie in the space.

    When the step divides an axis length exactly (to 1e-9 relative) the
    axis uses an endpoint-inclusive linspace, avoiding float accumulation;
    otherwise points are lo + j * step up to the upper bound.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    axes = []
    total = 1
    for lo, hi in space.bounding_box:
        width = float(hi - lo)
        count = int(round(width / step))
        if count >= 1 and abs(count * step - width) <= 1e-9 * max(abs(width), 1.0):
            axis = np.linspace(lo, hi, count + 1)
        else:
            count = int(math.floor(width / step + 1e-12))
            axis = lo + step * np.arange(count + 1)
        axes.append(axis)
        total *= len(axis)
        if total > GRID_POINT_BUDGET:
            raise ValueError(
                f"grid with step {step} would exceed {GRID_POINT_BUDGET} lattice points"
            )
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    return points[space.contains_many(points)]
