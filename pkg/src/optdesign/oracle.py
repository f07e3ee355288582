"""Exact brute-force references for tiny finite design problems.

Everything in this module is meant as ground truth for tests of the
samplers, bounds, and solvers.  The instances are small enough to
enumerate completely, and the code is written for transparency rather
than speed: ordered tuples and multisets are walked explicitly, and
expectations are accumulated with compensated summation in a fixed
order so results are reproducible to the last bit.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .features import (
    SingularMatrixError,
    criterion as criterion_value,
    log_det,
    trace_inverse,
    validate_prior,
)

# Hard ceilings keeping the enumerations desk-sized.
ORDERED_TUPLE_BUDGET = 10_000_000
MULTISET_BUDGET = 1_000_000
TAIL_MASS_CEILING = 1e-8

_ENUM_CHUNK = 1 << 18

# Relative eigenvalue floor separating exact rank deficiency (float residue
# eigenvalues ~1e-16 * lambda_max) from genuinely tiny positive spectra.
# Tuple singularity must be decided spectrally: the float determinant of a
# rank-deficient matrix can round to a small positive number, and for
# inverse-determinant statistics the determinant cancels against the
# sampling density, so one misclassified tuple shifts the expectation by a
# finite amount, not a rounding error.
RANK_RTOL = 1e-9


def _spectrally_singular(eigs: np.ndarray) -> np.ndarray:
    """Boolean mask (or scalar) of eigenvalue rows failing the rank floor."""
    eigs = np.asarray(eigs)
    top = np.maximum(eigs[..., -1], 1e-300)
    return eigs[..., 0] <= RANK_RTOL * top


class InstanceTooLargeError(ValueError):
    """The requested enumeration exceeds the brute-force budget."""


class SingularTupleError(RuntimeError):
    """A tuple with positive probability produced a singular matrix."""


# ---------------------------------------------------------------------------
# statistics of an information matrix


def _resolve_statistic(statistic):
    """Map a statistic name (or callable) to a function of M = phi^T phi + prior."""
    if callable(statistic):
        return statistic
    table = {
        "inv_det": lambda M: math.exp(-log_det(M)),
        "trace_inv": trace_inverse,
    }
    if statistic not in table:
        raise ValueError(
            f"unknown statistic {statistic!r}, expected 'inv_det', 'trace_inv', "
            "or a callable"
        )
    return table[statistic]


def _feature_table(basis, atoms: np.ndarray) -> np.ndarray:
    """Accept either a basis object or a precomputed (n, p) feature matrix."""
    if hasattr(basis, "evaluate_many"):
        table = np.asarray(basis.evaluate_many(atoms), dtype=float)
    else:
        table = np.asarray(basis, dtype=float)
    if table.ndim != 2 or table.shape[0] != len(atoms):
        raise ValueError("feature table must have one row per atom")
    return table


def _as_atoms(atoms) -> np.ndarray:
    atoms = np.asarray(atoms, dtype=float)
    if atoms.ndim == 1:
        atoms = atoms[:, None]
    if atoms.ndim != 2 or len(atoms) == 0:
        raise ValueError("atoms must be a nonempty (n, d) array")
    return atoms


def _check_weights(weights, n: int) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n,):
        raise ValueError("need one weight per atom")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValueError("weights must be finite and nonnegative")
    if weights.sum() <= 0:
        raise ValueError("total mass must be positive")
    return weights


def _adjugate(M: np.ndarray) -> np.ndarray:
    """Adjugate via cofactors; well-defined for singular M too."""
    p = M.shape[0]
    if p == 1:
        return np.ones((1, 1))
    adj = np.empty((p, p))
    rows = np.arange(p)
    for i in range(p):
        for j in range(p):
            minor = M[np.ix_(rows != j, rows != i)]
            adj[i, j] = (-1) ** (i + j) * np.linalg.det(minor)
    return adj


# ---------------------------------------------------------------------------
# exact conditional law of the size-k volume-proportional distribution


@dataclass(eq=False)
class ExactDistribution:
    """Fully enumerated law over ordered size-k tuples of atom indices.

    The probability of an ordered tuple (x_1, ..., x_k) is proportional to
    det(phi(x)^T phi(x) + prior) * w(x_1) * ... * w(x_k).  Probabilities are
    computed from the sorted tuple so permutations of the same multiset get
    bit-identical values.
    """

    atoms: np.ndarray
    features: np.ndarray
    prior: np.ndarray
    k: int
    support: np.ndarray
    probabilities: np.ndarray
    det_weight_sum: float

    def __post_init__(self):
        if self.support.shape != (len(self.probabilities), self.k):
            raise ValueError("support and probabilities disagree in shape")
        if np.any(self.probabilities < 0):
            raise ValueError("probabilities must be nonnegative")
        total = float(self.probabilities.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

    @property
    def n(self) -> int:
        return len(self.atoms)

    def aggregate(self):
        """Multiset view: (sorted index tuples, probabilities, ordered counts)."""
        sorted_support = np.sort(self.support, axis=1)
        multisets, inverse, counts = np.unique(
            sorted_support, axis=0, return_inverse=True, return_counts=True
        )
        probs = np.zeros(len(multisets))
        np.add.at(probs, inverse.ravel(), self.probabilities)
        return multisets, probs, counts

    def multiset_probabilities(self) -> dict:
        """Dict mapping sorted index tuples to their total probability."""
        multisets, probs, _ = self.aggregate()
        return {tuple(int(i) for i in row): float(q) for row, q in zip(multisets, probs)}

    def information_matrix(self, index_tuple) -> np.ndarray:
        rows = self.features[np.asarray(index_tuple, dtype=int)]
        M = rows.T @ rows + self.prior
        return (M + M.T) / 2.0

    def dump_json(self, path) -> None:
        """Debugging dump of the full law and its multiset aggregation."""
        multisets, probs, counts = self.aggregate()
        payload = {
            "k": self.k,
            "n": self.n,
            "atoms": self.atoms.tolist(),
            "multisets": [
                {
                    "indices": [int(i) for i in row],
                    "probability": float(q),
                    "ordered_tuples": int(c),
                }
                for row, q, c in zip(multisets, probs, counts)
            ],
        }
        with open(path, "w") as handle:
            json.dump(payload, handle, indent=2)


def enumerate_conditional_pvs(atoms, weights, basis, prior, k: int) -> ExactDistribution:
    """Enumerate the size-k conditional law over ordered atom tuples.

    Walks all n^k ordered tuples in mixed-radix order and assigns each the
    unnormalized mass det(phi(x)^T phi(x) + prior) * prod of atom weights.
    Rank-deficient tuples (smallest eigenvalue below the relative rank
    floor) get exactly zero probability; their float determinants are
    discarded rather than trusted.
    """
    atoms = _as_atoms(atoms)
    n = len(atoms)
    weights = _check_weights(weights, n)
    if k < 1:
        raise ValueError("k must be at least 1")
    total = n ** k
    if total > ORDERED_TUPLE_BUDGET:
        raise InstanceTooLargeError(
            f"{n}^{k} = {total} ordered tuples exceeds the budget of "
            f"{ORDERED_TUPLE_BUDGET}"
        )
    table = _feature_table(basis, atoms)
    p = table.shape[1]
    prior = validate_prior(prior, p)

    index_dtype = np.uint16 if n <= np.iinfo(np.uint16).max else np.uint32
    support = np.empty((total, k), dtype=index_dtype)
    masses = np.empty(total)
    for start in range(0, total, _ENUM_CHUNK):
        stop = min(start + _ENUM_CHUNK, total)
        ranks = np.arange(start, stop, dtype=np.int64)
        idx = np.empty((stop - start, k), dtype=np.int64)
        for j in range(k - 1, -1, -1):
            idx[:, j] = ranks % n
            ranks //= n
        support[start:stop] = idx
        # Sort before summing so every permutation of a multiset produces a
        # bit-identical determinant and weight product.
        idx.sort(axis=1)
        rows = table[idx]
        M = np.einsum("tkp,tkq->tpq", rows, rows) + prior
        dets = np.where(
            _spectrally_singular(np.linalg.eigvalsh(M)), 0.0, np.linalg.det(M)
        )
        masses[start:stop] = dets * np.prod(weights[idx], axis=1)

    if masses.max(initial=0.0) <= 0:
        raise ValueError(
            "every ordered tuple has zero mass: all size-k information "
            "matrices are singular under this prior"
        )
    det_weight_sum = float(masses.sum())
    probabilities = masses / det_weight_sum
    probabilities /= probabilities.sum()
    return ExactDistribution(
        atoms=atoms,
        features=table,
        prior=prior,
        k=k,
        support=support,
        probabilities=probabilities,
        det_weight_sum=det_weight_sum,
    )


def exact_conditional_expectation(dist: ExactDistribution, statistic) -> float:
    """Expectation of a statistic of M = phi(X)^T phi(X) + prior under dist.

    Zero-probability tuples are excluded, so statistics that are undefined
    on singular matrices are still well-defined whenever singular tuples
    carry no mass.  A singular matrix on a positive-probability tuple is an
    error.  Terms are accumulated smallest-probability-first with fsum.
    """
    fn = _resolve_statistic(statistic)
    multisets, probs, _ = dist.aggregate()
    order = np.argsort(probs, kind="stable")
    terms = []
    for t in order:
        q = float(probs[t])
        if q == 0.0:
            continue
        M = dist.information_matrix(multisets[t])
        try:
            value = fn(M)
        except SingularMatrixError as exc:
            indices = tuple(int(i) for i in multisets[t])
            raise SingularTupleError(
                f"tuple {indices} has probability {q:.3e} but a singular "
                f"information matrix ({exc})"
            ) from exc
        terms.append(q * value)
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# i.i.d. comparisons over the same atoms


def _iter_multisets(n: int, k: int):
    """Yield (index tuple, multinomial count) over all size-k multisets."""
    k_factorial = math.factorial(k)
    for combo in itertools.combinations_with_replacement(range(n), k):
        repeats = 1
        for m in Counter(combo).values():
            repeats *= math.factorial(m)
        yield combo, k_factorial // repeats


def _check_multiset_budget(n: int, k: int) -> None:
    count = math.comb(n + k - 1, k)
    if count > MULTISET_BUDGET:
        raise InstanceTooLargeError(
            f"{count} size-{k} multisets over {n} atoms exceeds the budget "
            f"of {MULTISET_BUDGET}"
        )


def reciprocal_iid_mean_det(atoms, weights, basis, k: int, prior=None) -> float:
    """1 / E[det(phi(Y)^T phi(Y) + prior)] for Y i.i.d. from the atom law.

    With a zero prior this equals mass^p (k-p)! / k! * det(G)^-1 exactly,
    where G is the Gramian of the weighted atoms: expanding the determinant
    over row subsets shows E[det] is a purely combinatorial function of G.
    When the total mass is k this is the same prefactor as the size-k
    determinant bound.
    """
    atoms = _as_atoms(atoms)
    n = len(atoms)
    weights = _check_weights(weights, n)
    _check_multiset_budget(n, k)
    table = _feature_table(basis, atoms)
    prior = validate_prior(prior, table.shape[1])
    law = weights / weights.sum()
    terms = []
    for combo, count in _iter_multisets(n, k):
        rows = table[list(combo)]
        M = rows.T @ rows + prior
        prob = count * float(np.prod(law[list(combo)]))
        terms.append(prob * float(np.linalg.det((M + M.T) / 2.0)))
    mean_det = math.fsum(sorted(terms))
    if mean_det <= 0:
        raise ValueError("mean determinant is not positive on this instance")
    return 1.0 / mean_det


def iid_expectation(atoms, weights, basis, prior, k: int, statistic) -> float:
    """E[statistic(phi(Y)^T phi(Y) + prior)] for Y i.i.d. from the atom law.

    Returns math.inf when a positive-probability draw yields a singular
    matrix and the statistic is undefined there: the expectation of an
    inverse-type statistic genuinely diverges in that case.
    """
    atoms = _as_atoms(atoms)
    n = len(atoms)
    weights = _check_weights(weights, n)
    _check_multiset_budget(n, k)
    table = _feature_table(basis, atoms)
    prior = validate_prior(prior, table.shape[1])
    fn = _resolve_statistic(statistic)
    # The named statistics diverge on singular matrices, and the rank
    # decision must be spectral: Cholesky can accept a rank-deficient matrix
    # whose pivots round to tiny positive numbers. User callables keep the
    # raise-to-inf contract instead.
    diverges = not callable(statistic)
    law = weights / weights.sum()
    terms = []
    for combo, count in _iter_multisets(n, k):
        prob = count * float(np.prod(law[list(combo)]))
        if prob == 0.0:
            continue
        rows = table[list(combo)]
        M = rows.T @ rows + prior
        M = (M + M.T) / 2.0
        if diverges and _spectrally_singular(np.linalg.eigvalsh(M)):
            return math.inf
        try:
            value = fn(M)
        except SingularMatrixError:
            return math.inf
        terms.append(prob * value)
    return math.fsum(sorted(terms))


# ---------------------------------------------------------------------------
# closed-form conditional bounds


def _kernel_dimension(S: np.ndarray) -> int:
    eigs = np.linalg.eigvalsh(S)
    scale = max(float(eigs[-1]), 1.0)
    return int(np.sum(eigs <= 1e-12 * scale))


def conditional_d_bound(gram: np.ndarray, prior, k: int) -> float:
    """Upper bound on E[det(M)^-1 | size k] in terms of the Gramian.

    Equals k^p (k-p)!/k! * det(G + prior)^-1, divided by a second-order
    correction 1 + (p-1)/(k-p+1) * (1 - det(G (G + prior)^-1)) that is 1
    at zero prior.
    """
    G = np.asarray(gram, dtype=float)
    p = G.shape[0]
    prior = validate_prior(prior, p)
    if k < p:
        raise ValueError(f"bound needs k >= p, got k={k}, p={p}")
    factor = k ** p / math.perm(k, p)
    sign_g, ld_g = np.linalg.slogdet(G)
    sign_t, ld_t = np.linalg.slogdet(G + prior)
    if sign_t <= 0:
        raise ValueError("G + prior must be positive definite")
    ratio = math.exp(ld_g - ld_t) if sign_g > 0 else 0.0
    correction = 1.0 + (p - 1) / (k - p + 1) * (1.0 - ratio)
    return factor * math.exp(-ld_t) / correction


def conditional_a_bound(gram: np.ndarray, prior, k: int) -> float:
    """Upper bound on E[Tr(M^-1) | size k] in terms of the Gramian.

    Equals k^(p+1-m0) (k-p)!/(k+1-m0)! * Tr((G + prior)^-1) with
    m0 = max(dim ker(prior), 1).
    """
    G = np.asarray(gram, dtype=float)
    p = G.shape[0]
    prior = validate_prior(prior, p)
    if k < p:
        raise ValueError(f"bound needs k >= p, got k={k}, p={p}")
    m0 = max(_kernel_dimension(prior), 1)
    factor = k ** (p + 1 - m0) / math.perm(k + 1 - m0, p + 1 - m0)
    return factor * trace_inverse(G + prior)


# ---------------------------------------------------------------------------
# truncated unconditional identities


@dataclass(frozen=True)
class CheckRow:
    """One truncated-sum identity: |value - target| <= allowance to pass."""

    name: str
    value: float
    target: float
    allowance: float

    @property
    def abs_error(self) -> float:
        return abs(self.value - self.target)

    @property
    def passed(self) -> bool:
        return self.abs_error <= self.allowance

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "target": self.target,
            "abs_error": self.abs_error,
            "allowance": self.allowance,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class TruncationReport:
    """Truncated unconditional expectations against their closed forms."""

    n_max: int
    mass: float
    tail_probability: float
    checks: tuple
    size_probabilities: np.ndarray
    mean_inverse: np.ndarray

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.checks)

    def as_dict(self) -> dict:
        return {
            "n_max": self.n_max,
            "mass": self.mass,
            "tail_probability": self.tail_probability,
            "passed": self.passed,
            "checks": [row.as_dict() for row in self.checks],
            "size_probabilities": self.size_probabilities.tolist(),
            "mean_inverse": self.mean_inverse.tolist(),
        }


def _det_polynomial_coefficients(prior: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Coefficients c_s of det(prior + t G) as a polynomial in t."""
    p = G.shape[0]
    nodes = np.arange(p + 1, dtype=float)
    values = np.array([np.linalg.det(prior + t * G) for t in nodes])
    return np.linalg.solve(np.vander(nodes, increasing=True), values)


def truncated_unconditional_check(
    atoms, weights, basis, prior, n_max: int, tol: float = 1e-6
) -> TruncationReport:
    """Verify the unconditional moment identities by truncated enumeration.

    Sums the exact per-size terms of E[(M + prior)^-1], E[det(M + prior)^-1],
    and E[size] for the volume-proportional point process over the weighted
    atoms, up to designs of size n_max, and compares them against
    (G + prior)^-1 entrywise, det(G + prior)^-1, and mass + Tr((G + prior)^-1 G).
    Each comparison's allowance is tol plus a bound on the omitted tail.

    Per-size design masses are computed twice, by direct multiset enumeration
    and from the coefficients of det(prior + t G); their agreement is
    reported as an extra check row.
    """
    atoms = _as_atoms(atoms)
    n = len(atoms)
    weights = _check_weights(weights, n)
    table = _feature_table(basis, atoms)
    p = table.shape[1]
    prior = validate_prior(prior, p)
    mass = float(weights.sum())

    if n_max < p:
        raise ValueError(f"n_max must be at least p = {p}")
    tail_probability = float(stats.poisson.sf(n_max - p, mass))
    if tail_probability >= TAIL_MASS_CEILING:
        raise ValueError(
            f"Poisson tail beyond n_max - p is {tail_probability:.3e}, above "
            f"{TAIL_MASS_CEILING:.0e}; increase n_max"
        )
    if math.comb(n_max + n, n) > MULTISET_BUDGET:
        raise InstanceTooLargeError(
            f"enumerating all multisets up to size {n_max} over {n} atoms "
            f"exceeds the budget of {MULTISET_BUDGET}"
        )

    G = (table * weights[:, None]).T @ table
    G = (G + G.T) / 2.0
    sign_t, ld_t = np.linalg.slogdet(G + prior)
    if sign_t <= 0:
        raise ValueError("G + prior must be positive definite")
    det_total = math.exp(ld_t)
    outers = np.einsum("np,nq->npq", table, table)

    # Per-size accumulators.  For each multiset with counts m over the atoms,
    # the ordered-tuple measure contributes n!/(prod m!) * prod w^m, so the
    # size-n Janossy integral is e^-mass / det(G + prior) times
    # sum over multisets of [prod w^m / prod m!] * det(M + prior) * statistic.
    z = np.zeros(n_max + 1)
    det_inv_weight = np.zeros(n_max + 1)
    adj_sum = np.zeros((n_max + 1, p, p))
    for size in range(n_max + 1):
        for counts in _compositions(size, n):
            coef = 1.0
            for c, w in zip(counts, weights):
                if c:
                    coef *= w ** c / math.factorial(c)
            if coef == 0.0:
                continue
            M = np.tensordot(counts, outers, axes=1) + prior
            M = (M + M.T) / 2.0
            try:
                np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                # Singular information matrix: the density vanishes here, so
                # the tuple contributes nothing to any of the statistics.
                continue
            det_m = float(np.linalg.det(M))
            z[size] += coef * det_m
            det_inv_weight[size] += coef
            adj_sum[size] += coef * _adjugate(M)

    scale = math.exp(-mass) / det_total
    size_probabilities = scale * z
    total_probability = math.fsum(size_probabilities)
    mean_size = math.fsum(size_probabilities * np.arange(n_max + 1))
    mean_det_inv = math.fsum(scale * det_inv_weight)
    mean_inverse = scale * adj_sum.sum(axis=0)

    # Independent per-size masses from the coefficients of det(prior + t G).
    c = _det_polynomial_coefficients(prior, G)
    closed = np.zeros(n_max + 1)
    for size in range(n_max + 1):
        closed[size] = scale * math.fsum(
            c[s] * mass ** (size - s) / math.factorial(size - s)
            for s in range(min(size, p) + 1)
        )
    per_size_gap = float(np.max(np.abs(size_probabilities - closed)))

    target_inverse = np.linalg.inv(G + prior)
    mean_size_target = mass + float(np.trace(np.linalg.solve(G + prior, G)))

    size_tail = p * tail_probability + mass * float(
        stats.poisson.sf(n_max - p - 1, mass)
    )
    det_inv_tail = float(stats.poisson.sf(n_max, mass)) / det_total
    prior_floor = float(np.linalg.eigvalsh(prior)[0])
    inverse_tail = tail_probability / prior_floor if prior_floor > 0 else math.inf

    checks = (
        CheckRow("total_probability", total_probability, 1.0, tol + tail_probability),
        CheckRow("mean_size", mean_size, mean_size_target, tol + size_tail),
        CheckRow(
            "mean_inverse_determinant",
            mean_det_inv,
            math.exp(-ld_t),
            tol + det_inv_tail,
        ),
        CheckRow(
            "mean_inverse_matrix_max_entry_error",
            float(np.max(np.abs(mean_inverse - target_inverse))),
            0.0,
            tol + inverse_tail,
        ),
        CheckRow("per_size_closed_form_agreement", per_size_gap, 0.0, 1e-9),
    )
    return TruncationReport(
        n_max=n_max,
        mass=mass,
        tail_probability=tail_probability,
        checks=checks,
        size_probabilities=size_probabilities,
        mean_inverse=mean_inverse,
    )


def _compositions(total: int, parts: int):
    """Yield all nonnegative integer tuples of length `parts` summing to total."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# exhaustive optimum over size-k multisets


@dataclass(frozen=True)
class ExhaustiveResult:
    """Global optimum over all size-k multisets of the atoms."""

    indices: tuple
    points: np.ndarray
    value: float
    which: str
    ties: tuple

    @property
    def tie_count(self) -> int:
        return len(self.ties)


def exhaustive_best_design(atoms, basis, prior, k: int, which: str) -> ExhaustiveResult:
    """Brute-force the best size-k multiset of atoms under an A or D criterion.

    Designs whose information matrix is singular are infeasible and skipped.
    The first optimum in lexicographic multiset order is returned; every
    multiset within a 1e-12 relative band of the optimum is reported as a tie.
    """
    atoms = _as_atoms(atoms)
    n = len(atoms)
    if k < 1:
        raise ValueError("k must be at least 1")
    _check_multiset_budget(n, k)
    table = _feature_table(basis, atoms)
    prior = validate_prior(prior, table.shape[1])
    outers = np.einsum("np,nq->npq", table, table)

    evaluated = []
    for combo in itertools.combinations_with_replacement(range(n), k):
        M = outers[list(combo)].sum(axis=0) + prior
        try:
            value = criterion_value((M + M.T) / 2.0, which)
        except SingularMatrixError:
            continue
        evaluated.append((value, combo))
    if not evaluated:
        raise ValueError(
            "every size-k multiset has a singular information matrix under "
            "this prior"
        )
    best_value = min(v for v, _ in evaluated)
    band = 1e-12 * max(1.0, abs(best_value))
    ties = tuple(combo for v, combo in evaluated if v - best_value <= band)
    best_combo = ties[0]
    return ExhaustiveResult(
        indices=best_combo,
        points=atoms[list(best_combo)],
        value=best_value,
        which=which,
        ties=ties,
    )
