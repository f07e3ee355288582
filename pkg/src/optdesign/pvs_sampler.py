"""Samplers for the determinant-proportional ("volume sampling") point process.

The process over a base measure nu with feature map phi and PSD prior
matrix L has size-k densities proportional to det(phi(x)^T phi(x) + L)
times the product of base-measure weights.  It can be realized as the
superposition of a determinantal process with kernel
K(x, y) = sum_i lambda_i psi_i(x) psi_i(y) and an independent Poisson
process of intensity nu, where the lambda_i in [0, 1] are the eigenvalues
of G^(1/2) (G + L)^(-1) G^(1/2), G is the Gramian of phi under nu, and the
psi_i = phi C are orthonormalized features.  This module builds that
spectral model, samples the process unconditionally and conditioned on an
exact cardinality, and exposes the chain-rule projection-DPP sampler the
determinantal part relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .features import (
    AtomicMeasure,
    Gramian,
    SingularGramianError,
    UniformMeasure,
    gramian,
    validate_prior,
)

EIGENVALUE_BAND = 1e-10
ENVELOPE_SAFETY = 1.2
ENVELOPE_PROBE = 1024
REJECTION_BUDGET = 10_000_000

_REJECTION_BATCH = 256


class SpectralInconsistencyError(RuntimeError):
    """An eigenvalue of the shrinkage operator left [0, 1] by more than round-off."""


class InfeasibleCardinalityError(ValueError):
    """The requested cardinality has probability zero under the process."""


class RejectionBudgetError(RuntimeError):
    """The chain-rule rejection sampler exceeded its total rejection budget."""


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _measure_dimension(measure) -> int:
    if isinstance(measure, AtomicMeasure):
        return measure.atoms.shape[1]
    if hasattr(measure, "space"):
        return measure.space.dimension
    raise TypeError(f"unsupported measure type {type(measure).__name__}")


# ---------------------------------------------------------------------------
# model construction


@dataclass(eq=False)
class PvsModel:
    """Spectral description of the process; immutable after construction.

    `coefficients` holds the p x p matrix C with psi(x) = phi(x) C, whose
    columns pair with `eigenvalues` (ascending).  `gram_half` is the
    symmetric PSD square root of the Gramian.
    """

    basis: object
    prior: np.ndarray
    measure: object
    gram: np.ndarray
    gram_half: np.ndarray
    eigenvalues: np.ndarray
    coefficients: np.ndarray
    gram_info: Gramian

    @property
    def p(self) -> int:
        return len(self.eigenvalues)

    @property
    def mass(self) -> float:
        return float(self.measure.mass)

    def psi(self, points: np.ndarray) -> np.ndarray:
        """Orthonormalized feature rows psi(x) = phi(x) C at the given points."""
        return self.basis.evaluate_many(points) @ self.coefficients

    def kernel_diagonal(self, points: np.ndarray) -> np.ndarray:
        """K(x, x) = sum_i lambda_i psi_i(x)^2 at the given points."""
        Psi = self.psi(points)
        return (Psi * Psi) @ self.eigenvalues


def build_model(
    basis,
    prior,
    measure,
    mc_samples: int = 100_000,
    rng=None,
    method: str = "auto",
) -> PvsModel:
    """Compute the spectral model (Gramian, eigenvalues, orthonormalizer).

    The Gramian is exact for atomic measures and for monomial-type bases on
    boxes, Monte Carlo otherwise (deterministic given `rng`).  Eigenvalues
    of G^(1/2) (G + prior)^(-1) G^(1/2) must land in [0, 1] up to a 1e-10
    band; they are clipped to [0, 1], and a zero prior pins them to exactly
    one so downstream conditioning logic can rely on it.
    """
    info = gramian(
        basis,
        measure,
        mc_samples=mc_samples,
        rng=None if rng is None else _as_rng(rng),
        method=method,
    )
    G = info.matrix
    p = G.shape[0]
    prior = validate_prior(prior, p)

    scales, vectors = np.linalg.eigh(G)
    if scales[0] <= 0:
        raise SingularGramianError(
            f"Gramian is not positive definite: smallest eigenvalue {scales[0]:.3e}"
        )
    gram_half = (vectors * np.sqrt(scales)) @ vectors.T
    gram_half = (gram_half + gram_half.T) / 2.0
    inv_half = (vectors * (1.0 / np.sqrt(scales))) @ vectors.T

    shrink = gram_half @ np.linalg.solve(G + prior, gram_half)
    shrink = (shrink + shrink.T) / 2.0
    lam, U = np.linalg.eigh(shrink)
    if lam[0] < -EIGENVALUE_BAND or lam[-1] > 1.0 + EIGENVALUE_BAND:
        raise SpectralInconsistencyError(
            f"spectral inconsistency: eigenvalues span [{lam[0]!r}, {lam[-1]!r}], "
            f"outside [0, 1] by more than {EIGENVALUE_BAND:.0e}"
        )
    lam = np.clip(lam, 0.0, 1.0)
    if not np.any(prior):
        lam = np.ones_like(lam)
    coefficients = inv_half @ U

    return PvsModel(
        basis=basis,
        prior=prior,
        measure=measure,
        gram=G,
        gram_half=gram_half,
        eigenvalues=lam,
        coefficients=coefficients,
        gram_info=info,
    )


def expected_cardinality(model: PvsModel) -> float:
    """Mean number of points: mass + Tr((G + prior)^-1 G) = mass + sum lambda_i."""
    return model.mass + float(model.eigenvalues.sum())


# ---------------------------------------------------------------------------
# samples


@dataclass(eq=False)
class PointSample:
    """A multiset of points with a per-point component tag.

    Tags are "dpp" for the determinantal component and "poisson" for the
    independent Poisson component.  Atomic base measures can repeat points;
    continuous ones almost surely do not.
    """

    points: np.ndarray
    provenance: tuple

    def __post_init__(self):
        if len(self.points) != len(self.provenance):
            raise ValueError("one provenance tag per point is required")
        if not set(self.provenance) <= {"dpp", "poisson"}:
            raise ValueError("provenance tags must be 'dpp' or 'poisson'")

    def __len__(self) -> int:
        return len(self.points)


def _assemble(dpp_points: np.ndarray, poisson_points: np.ndarray) -> PointSample:
    points = np.vstack([dpp_points, poisson_points])
    tags = ("dpp",) * len(dpp_points) + ("poisson",) * len(poisson_points)
    return PointSample(points=points, provenance=tags)


def sample_pvs(model: PvsModel, rng) -> PointSample:
    """One unconditional draw: Bernoulli-thinned projection DPP plus Poisson."""
    rng = _as_rng(rng)
    keep = rng.random(model.p) < model.eigenvalues
    dpp_points = sample_projection_dpp(model, np.flatnonzero(keep), rng)
    count = int(rng.poisson(model.mass))
    poisson_points = model.measure.sample(count, rng)
    return _assemble(dpp_points, poisson_points)


# ---------------------------------------------------------------------------
# cardinality conditioning


def _poisson_binomial_pmf(lam: np.ndarray) -> np.ndarray:
    """Exact pmf of a sum of independent Bernoulli(lambda_i) via convolution."""
    pmf = np.zeros(len(lam) + 1)
    pmf[0] = 1.0
    for q in lam:
        pmf[1:] = pmf[1:] * (1.0 - q) + pmf[:-1] * q
        pmf[0] *= 1.0 - q
    return pmf


def cardinality_split_law(model: PvsModel, k: int) -> np.ndarray:
    """P(DPP part has size b | total size k) for b = 0..min(p, k).

    The DPP count is Poisson-binomial over the eigenvalues and the Poisson
    count has mean mass; the joint law conditioned on their sum is computed
    in log space and normalized exactly.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    pmf = _poisson_binomial_pmf(model.eigenvalues)
    b_top = min(model.p, k)
    with np.errstate(divide="ignore"):
        log_pb = np.log(pmf[: b_top + 1])
    log_weights = log_pb + stats.poisson.logpmf(k - np.arange(b_top + 1), model.mass)
    total = logsumexp(log_weights)
    if not np.isfinite(total):
        ones = int(np.sum(model.eigenvalues == 1.0))
        raise InfeasibleCardinalityError(
            f"cardinality {k} has probability zero: the determinantal part "
            f"always contributes at least {ones} points"
        )
    return np.exp(log_weights - total)


def _conditional_bernoulli_subset(lam: np.ndarray, b: int, rng) -> np.ndarray:
    """Indices of a draw from independent Bernoulli(lambda) given sum == b."""
    p = len(lam)
    # suffix[i, c] = P(Bernoullis i..p-1 sum to c); exact for 0/1 rates.
    suffix = np.zeros((p + 1, b + 1))
    suffix[p, 0] = 1.0
    for i in range(p - 1, -1, -1):
        suffix[i, 0] = (1.0 - lam[i]) * suffix[i + 1, 0]
        for c in range(1, b + 1):
            suffix[i, c] = (1.0 - lam[i]) * suffix[i + 1, c] + lam[i] * suffix[i + 1, c - 1]
    if suffix[0, b] <= 0:
        raise InfeasibleCardinalityError(
            f"a determinantal part of size {b} has probability zero"
        )
    chosen = []
    remaining = b
    for i in range(p):
        if remaining == 0:
            break
        include = lam[i] * suffix[i + 1, remaining - 1] / suffix[i, remaining]
        if rng.random() < include:
            chosen.append(i)
            remaining -= 1
    return np.array(chosen, dtype=int)


def sample_pvs_conditional(model: PvsModel, k: int, rng) -> PointSample:
    """One draw conditioned on containing exactly k points.

    Samples the (DPP size, Poisson size) split from its exact conditional
    law, then the DPP subset by conditional Bernoulli thinning, the DPP
    points by the chain rule, and the remaining points i.i.d. from the
    normalized base measure.
    """
    rng = _as_rng(rng)
    split = cardinality_split_law(model, k)
    b = int(rng.choice(len(split), p=split))
    active = _conditional_bernoulli_subset(model.eigenvalues, b, rng)
    dpp_points = sample_projection_dpp(model, active, rng)
    poisson_points = model.measure.sample(k - b, rng)
    sample = _assemble(dpp_points, poisson_points)
    assert len(sample) == k, "conditional sampler must return exactly k points"
    return sample


def sample_pvs_discrete(atoms, weights, basis, prior, k: int, rng) -> PointSample:
    """Exact conditional draw of k atoms from the weighted-atom process.

    The law over size-k multisets is proportional to
    det(phi(x)^T phi(x) + prior) times the product of atom weights, which
    is invariant under rescaling the weights, so they need not sum to k.
    Every sampling step is exact: no rejection is involved on atoms.
    """
    measure = AtomicMeasure(atoms=atoms, weights=weights)
    model = build_model(basis, prior, measure)
    return sample_pvs_conditional(model, k, rng)


# ---------------------------------------------------------------------------
# projection DPP via the chain rule


def sample_projection_dpp(model: PvsModel, active, rng) -> np.ndarray:
    """Sample the projection DPP spanned by the active orthonormal features.

    Points are drawn sequentially: after j selections the next point has
    density proportional to the squared norm of psi_S(x) with the already
    selected directions projected out.  Atomic measures use the exact
    chain rule; continuous ones use rejection from the normalized base
    measure under an adaptively maintained envelope.

    The envelope starts from an empirical supremum of the kernel diagonal
    (ENVELOPE_PROBE draws, times ENVELOPE_SAFETY) and is raised on any
    observed violation, restarting the current point draw.  Rejection is
    exact whenever the initial envelope already dominates the true
    supremum; acceptances made under a too-small envelope carry a bias of
    the order of the probability that the probe misses the supremum,
    which is negligible for the smooth kernels this package targets.
    """
    rng = _as_rng(rng)
    active = np.asarray(active, dtype=int)
    if active.size != len(set(active.tolist())):
        raise ValueError("active index set must not repeat indices")
    if active.size and (active.min() < 0 or active.max() >= model.p):
        raise ValueError(f"active indices must lie in [0, {model.p})")
    dim = _measure_dimension(model.measure)
    if active.size == 0:
        return np.zeros((0, dim))
    if isinstance(model.measure, AtomicMeasure):
        indices = _chain_rule_atoms(model, active, rng)
        return model.measure.atoms[indices]
    return _chain_rule_continuous(model, active, rng)


def _chain_rule_atoms(model: PvsModel, active: np.ndarray, rng) -> list:
    measure = model.measure
    R = model.psi(measure.atoms)[:, active]
    law = measure.weights / measure.mass
    chosen = []
    for _ in range(len(active)):
        mass = law * np.einsum("ij,ij->i", R, R)
        index = int(rng.choice(len(law), p=mass / mass.sum()))
        direction = R[index] / np.linalg.norm(R[index])
        R = R - np.outer(R @ direction, direction)
        chosen.append(index)
    return chosen


def _chain_rule_continuous(model: PvsModel, active: np.ndarray, rng) -> np.ndarray:
    measure = model.measure
    s = len(active)
    probe = measure.sample(ENVELOPE_PROBE, rng)
    Psi = model.psi(probe)[:, active]
    envelope = max(float(np.max(np.einsum("ij,ij->i", Psi, Psi))), 1e-30)
    envelope *= ENVELOPE_SAFETY

    directions = np.zeros((s, s))
    selected = np.zeros((s, _measure_dimension(measure)))
    rejections = 0
    j = 0
    while j < s:
        accepted = False
        while not accepted:
            batch = measure.sample(_REJECTION_BATCH, rng)
            V = model.psi(batch)[:, active]
            if j:
                V = V - (V @ directions[:j].T) @ directions[:j]
            norms = np.einsum("ij,ij->i", V, V)
            thresholds = rng.random(_REJECTION_BATCH) * envelope
            for t in range(_REJECTION_BATCH):
                if norms[t] > envelope:
                    # The empirical envelope was too small; raise it and
                    # restart the current point draw from fresh proposals.
                    envelope = norms[t] * ENVELOPE_SAFETY
                    rejections += 1
                    break
                if thresholds[t] < norms[t]:
                    selected[j] = batch[t]
                    directions[j] = V[t] / math.sqrt(norms[t])
                    accepted = True
                    break
                rejections += 1
            if rejections > REJECTION_BUDGET:
                raise RejectionBudgetError(
                    f"more than {REJECTION_BUDGET} rejections while drawing "
                    f"point {j + 1} of {s} (envelope {envelope:.3e}); the "
                    "kernel diagonal may be sharply peaked on this space"
                )
        j += 1
    return selected
