"""Regression bases, information matrices, Gramians, and optimality criteria.

Determinants and trace-inverses are always computed through a Cholesky
factorization; D-criterion values are carried as log-determinants internally
and only exponentiated at the reporting boundary.
"""

from __future__ import annotations

import csv
import itertools
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .design_space import DesignSpace, FiniteSpace

__all__ = [
    "AtomicMeasure",
    "Basis",
    "BSplineProductBasis",
    "Gramian",
    "MonomialBasis",
    "SingularGramianError",
    "SingularMatrixError",
    "TableBasis",
    "TransformedBasis",
    "UniformMeasure",
    "a_efficiency",
    "basis_from_descriptor",
    "bspline_design_matrix",
    "criterion",
    "d_efficiency",
    "eval_features",
    "gramian",
    "information_matrix",
    "log_det",
    "monomial_basis",
    "normalized_monomial_basis",
    "packaged_design",
    "read_design_csv",
    "validate_prior",
    "write_design_csv",
]

# Seed for the fixed-stream MC estimate of L2 norms in the normalized basis.
NORMALIZATION_SEED = 20260825
# Relative eigenvalue floor below which a Gramian or information matrix is
# treated as singular.
SINGULARITY_RTOL = 1e-10


class SingularMatrixError(RuntimeError):
    """Factorization of an information matrix failed."""

    def __init__(self, message: str, smallest_pivot: float):
        super().__init__(message)
        self.smallest_pivot = smallest_pivot


class SingularGramianError(RuntimeError):
    """A reference-measure Gramian is numerically singular."""


# ---------------------------------------------------------------------------
# bases


class Basis:
    """Ordered list of p regression functions with an evaluation map.

    Subclasses implement ``evaluate_many`` over an (n, d) array of points and
    ``element_names`` used in error messages.
    """

    p: int
    dimension: int
    kind: str

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def element_names(self) -> list:
        return [f"phi_{i}" for i in range(self.p)]

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.dimension},)")
        row = self.evaluate_many(x[None, :])[0]
        if not np.all(np.isfinite(row)):
            bad = int(np.flatnonzero(~np.isfinite(row))[0])
            raise ValueError(
                f"basis element {self.element_names()[bad]!r} evaluated to a "
                f"non-finite value at {x.tolist()}"
            )
        return row


def _graded_exponents(dimension: int, degree: int) -> np.ndarray:
    """Exponent tuples of total degree <= degree, graded, lexicographic
    within each grade with earlier coordinates carrying higher powers."""

    def compositions(total: int, parts: int):
        if parts == 1:
            yield (total,)
            return
        for first in range(total, -1, -1):
            for rest in compositions(total - first, parts - 1):
                yield (first,) + rest

    rows = []
    for total in range(degree + 1):
        rows.extend(compositions(total, dimension))
    return np.array(rows, dtype=np.int64)


@dataclass(frozen=True)
class MonomialBasis(Basis):
    """Multivariate monomials x^a with total degree <= degree."""

    dimension: int
    degree: int
    kind: str = field(default="monomials-up-to-degree", init=False)

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")
        object.__setattr__(self, "exponents", _graded_exponents(self.dimension, self.degree))

    @property
    def p(self) -> int:
        return len(self.exponents)

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        n = len(points)
        out = np.ones((n, self.p))
        for ax in range(self.dimension):
            maxdeg = int(self.exponents[:, ax].max())
            if maxdeg == 0:
                continue
            table = np.ones((n, maxdeg + 1))
            for e in range(1, maxdeg + 1):
                table[:, e] = table[:, e - 1] * points[:, ax]
            out *= table[:, self.exponents[:, ax]]
        return out

    def element_names(self) -> list:
        names = []
        for exps in self.exponents:
            parts = [f"x{ax + 1}^{e}" if e > 1 else f"x{ax + 1}"
                     for ax, e in enumerate(exps) if e > 0]
            names.append("*".join(parts) if parts else "1")
        return names


@dataclass(frozen=True)
class TransformedBasis(Basis):
    """Fixed linear transform A applied to a base: phi(x) = A @ base(x).

    The L2-normalized monomial basis is the diagonal-A special case.
    """

    base: Basis
    matrix: np.ndarray
    kind: str = "transformed"
    normalization_seed: int | None = None
    normalization_samples: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float))
        if self.matrix.ndim != 2 or self.matrix.shape[1] != self.base.p:
            raise ValueError("transform matrix shape does not match the base basis")

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    @property
    def dimension(self) -> int:
        return self.base.dimension

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        return self.base.evaluate_many(points) @ self.matrix.T

    def element_names(self) -> list:
        return [f"combo_{i}" for i in range(self.p)]


def bspline_design_matrix(x: np.ndarray, knots: np.ndarray, degree: int) -> np.ndarray:
    """Values of all B-spline basis functions on the clamped knot vector.

    Iterative Cox-de Boor recursion; the last nonempty interval is treated as
    closed so the basis sums to 1 on the whole closed domain.
    """
    x = np.asarray(x, dtype=float)
    knots = np.asarray(knots, dtype=float)
    n_basis = len(knots) - degree - 1
    if n_basis < 1:
        raise ValueError("knot vector too short for the requested degree")
    B = np.zeros((len(x), len(knots) - 1))
    last = -1
    for i in range(len(knots) - 1):
        if knots[i] < knots[i + 1]:
            B[:, i] = (x >= knots[i]) & (x < knots[i + 1])
            last = i
    if last >= 0:
        B[x == knots[-1], last] = 1.0
    for r in range(1, degree + 1):
        nxt = np.zeros((len(x), len(knots) - 1 - r))
        for i in range(len(knots) - 1 - r):
            den_l = knots[i + r] - knots[i]
            den_r = knots[i + r + 1] - knots[i + 1]
            if den_l > 0:
                nxt[:, i] += (x - knots[i]) / den_l * B[:, i]
            if den_r > 0:
                nxt[:, i] += (knots[i + r + 1] - x) / den_r * B[:, i + 1]
        B = nxt
    return B[:, :n_basis]


def clamped_knot_vector(interior: list, degree: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    return np.concatenate([
        np.full(degree + 1, lo),
        np.asarray(interior, dtype=float),
        np.full(degree + 1, hi),
    ])


@dataclass(frozen=True)
class BSplineProductBasis(Basis):
    """Products B_i(x1) * x2^a2 * ... * xd^ad of splines and monomials.

    The spline factor acts on axis 0 with a clamped knot vector; the
    remaining axes carry monomials of per-axis degree <= poly_degree.
    ``selection`` picks a subset of the full product table as (spline index,
    exponent tuple) pairs; by default the full table is used.
    """

    dimension: int
    interior_knots: tuple = (0.25, 0.5, 0.75)
    spline_degree: int = 3
    poly_degree: int = 3
    selection: tuple | None = None
    kind: str = field(default="bspline-times-polynomial", init=False)

    def __post_init__(self):
        knots = clamped_knot_vector(list(self.interior_knots), self.spline_degree)
        object.__setattr__(self, "knots", knots)
        n_spline = len(knots) - self.spline_degree - 1
        object.__setattr__(self, "n_spline", n_spline)
        rest = self.dimension - 1
        if rest > 0:
            exps = list(itertools.product(range(self.poly_degree + 1), repeat=rest))
        else:
            exps = [()]
        full = [(i, e) for i in range(n_spline) for e in exps]
        if self.selection is None:
            object.__setattr__(self, "table", tuple(full))
        else:
            table = []
            for item in self.selection:
                i, e = item
                e = tuple(int(v) for v in e)
                if not (0 <= i < n_spline) or (i, e) not in full:
                    raise ValueError(f"selection entry {item!r} is outside the product table")
                table.append((i, e))
            object.__setattr__(self, "table", tuple(table))

    @property
    def p(self) -> int:
        return len(self.table)

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        spline_vals = bspline_design_matrix(points[:, 0], self.knots, self.spline_degree)
        out = np.empty((len(points), self.p))
        rest = points[:, 1:]
        for col, (i, exps) in enumerate(self.table):
            vals = spline_vals[:, i].copy()
            for ax, e in enumerate(exps):
                if e > 0:
                    vals *= rest[:, ax] ** e
            out[:, col] = vals
        return out

    def element_names(self) -> list:
        names = []
        for i, exps in self.table:
            parts = [f"B{i}(x1)"]
            parts += [f"x{ax + 2}^{e}" if e > 1 else f"x{ax + 2}"
                      for ax, e in enumerate(exps) if e > 0]
            names.append("*".join(parts))
        return names


@dataclass(frozen=True)
class TableBasis(Basis):
    """Explicit value table over the atoms of a finite space."""

    points: np.ndarray
    values: np.ndarray
    kind: str = field(default="custom-table", init=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if vals.ndim != 2 or len(vals) != len(pts):
            raise ValueError("values must be an (n_atoms, p) array")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(
            self, "_index", {row.tobytes(): i for i, row in enumerate(pts)}
        )

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        rows = np.empty(len(points), dtype=np.int64)
        for i, row in enumerate(points):
            key = row.tobytes()
            if key not in self._index:
                raise ValueError(f"point {row.tolist()} is not in the basis value table")
            rows[i] = self._index[key]
        return self.values[rows]


def monomial_basis(dimension: int, degree: int) -> MonomialBasis:
    return MonomialBasis(dimension=dimension, degree=degree)


def normalized_monomial_basis(
    space: DesignSpace,
    degree: int,
    mc_samples: int = 1_000_000,
    seed: int = NORMALIZATION_SEED,
) -> TransformedBasis:
    """Monomials rescaled to unit L2 norm under the uniform law on the space.

    Norms are MC estimates from a fixed-seed stream; the seed and sample
    count are recorded on the returned basis.
    """
    base = MonomialBasis(dimension=space.dimension, degree=degree)
    rng = np.random.default_rng(seed)
    sums = np.zeros(base.p)
    remaining = mc_samples
    while remaining > 0:
        chunk = min(remaining, 1 << 16)
        pts = space.sample_uniform(chunk, rng)
        sums += np.sum(base.evaluate_many(pts) ** 2, axis=0)
        remaining -= chunk
    norms = np.sqrt(sums / mc_samples)
    if np.any(norms <= 0):
        raise ValueError("a monomial has zero estimated L2 norm on this space")
    return TransformedBasis(
        base=base,
        matrix=np.diag(1.0 / norms),
        kind="L2-normalized-monomials",
        normalization_seed=seed,
        normalization_samples=mc_samples,
    )


def basis_from_descriptor(desc: dict, space: DesignSpace | None = None) -> Basis:
    """Build a basis from its JSON descriptor and check linear independence.

    The independence check needs a space (uniform-measure Gramian condition
    number); it is skipped when no space is supplied.
    """
    kind = desc.get("kind")
    if kind == "monomials-up-to-degree":
        dim = int(desc["dimension"]) if "dimension" in desc else space.dimension
        basis = monomial_basis(dim, int(desc["degree"]))
    elif kind == "L2-normalized-monomials":
        if space is None:
            raise ValueError("L2-normalized basis requires a space")
        basis = normalized_monomial_basis(
            space,
            int(desc["degree"]),
            mc_samples=int(desc.get("mc_samples", 1_000_000)),
            seed=int(desc.get("seed", NORMALIZATION_SEED)),
        )
    elif kind == "bspline-times-polynomial":
        dim = int(desc["dimension"]) if "dimension" in desc else space.dimension
        selection = desc.get("selection")
        if selection is not None:
            selection = tuple((int(i), tuple(int(v) for v in e)) for i, e in selection)
        basis = BSplineProductBasis(
            dimension=dim,
            interior_knots=tuple(desc.get("interior_knots", (0.25, 0.5, 0.75))),
            spline_degree=int(desc.get("spline_degree", 3)),
            poly_degree=int(desc.get("poly_degree", 3)),
            selection=selection,
        )
    elif kind == "custom-table":
        basis = TableBasis(points=desc["points"], values=desc["values"])
        _assert_nonsingular(
            basis.values.T @ basis.values / len(basis.values), "the table points"
        )
    else:
        raise ValueError(f"unknown basis kind {kind!r}")
    if space is not None and not isinstance(basis, TableBasis):
        _check_independence(basis, space)
    return basis


def _check_independence(basis: Basis, space: DesignSpace, samples: int = 20_000) -> None:
    rng = np.random.default_rng(7)
    measure = UniformMeasure(space=space, mass=1.0)
    gram = gramian(basis, measure, mc_samples=samples, rng=rng)
    _assert_nonsingular(gram.matrix, repr(space.name))


def _assert_nonsingular(gram_matrix: np.ndarray, where: str) -> None:
    svals = np.linalg.svd(gram_matrix, compute_uv=False)
    if svals[-1] <= SINGULARITY_RTOL * svals[0]:
        raise SingularGramianError(
            f"basis functions are not linearly independent on {where}: "
            f"Gramian singular values span {svals[-1]:.3e} .. {svals[0]:.3e}"
        )


# ---------------------------------------------------------------------------
# measures


@dataclass(frozen=True)
class UniformMeasure:
    """Uniform law on a design space, scaled to a total mass."""

    space: DesignSpace
    mass: float

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("measure mass must be positive")

    @property
    def dimension(self) -> int:
        return self.space.dimension

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Draws from the probability law (the measure normalized by mass)."""
        return self.space.sample_uniform(count, rng)


@dataclass(frozen=True)
class AtomicMeasure:
    """Nonnegative weights on finitely many atoms."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (len(atoms),):
            raise ValueError("need one weight per atom")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if weights.sum() <= 0:
            raise ValueError("total mass must be positive")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def dimension(self) -> int:
        return self.atoms.shape[1]

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        idx = self.sample_indices(count, rng)
        return self.atoms[idx]

    def sample_indices(self, count: int, rng: np.random.Generator) -> np.ndarray:
        probs = self.weights / self.mass
        return rng.choice(len(self.atoms), size=count, p=probs)


def _space_is_box(space: DesignSpace) -> bool:
    return any(len(region) == 0 for region in space.regions)


def _monomial_box_gramian(exponents: np.ndarray, box: np.ndarray) -> np.ndarray:
    """Closed-form Gramian of monomials under the uniform probability law on a box.

    Entry (u, v) is the product over axes of
    (hi^(e+1) - lo^(e+1)) / ((e+1) (hi - lo)) with e = a_ax + b_ax.
    """
    p = len(exponents)
    G = np.ones((p, p))
    for ax in range(exponents.shape[1]):
        lo, hi = box[ax]
        e = exponents[:, ax][:, None] + exponents[:, ax][None, :]
        G *= (hi ** (e + 1) - lo ** (e + 1)) / ((e + 1) * (hi - lo))
    return G


@dataclass(frozen=True)
class Gramian:
    matrix: np.ndarray
    mass: float
    method: str
    samples: int | None = None
    standard_error: np.ndarray | None = None


def gramian(
    basis: Basis,
    measure,
    mc_samples: int = 100_000,
    rng: np.random.Generator | None = None,
    method: str = "auto",
) -> Gramian:
    """Gramian of the basis under the measure: G = integral of phi phi^T d(measure).

    Atomic measures are summed exactly. Uniform measures use the closed box
    form for (transformed) monomial bases and MC otherwise; method="monte-carlo"
    forces the MC route even when a closed form exists. Measures that carry
    their own ``gramian`` method (density mixtures) are delegated to.
    """
    if method not in ("auto", "monte-carlo"):
        raise ValueError(f"method must be 'auto' or 'monte-carlo', got {method!r}")
    if isinstance(measure, AtomicMeasure):
        Phi = basis.evaluate_many(measure.atoms)
        G = (Phi * measure.weights[:, None]).T @ Phi
        result = Gramian(matrix=_symmetrize(G), mass=measure.mass, method="atom-sum")
    elif isinstance(measure, UniformMeasure):
        result = _uniform_gramian(
            basis, measure, mc_samples, rng, force_mc=method == "monte-carlo"
        )
    elif hasattr(measure, "gramian"):
        result = measure.gramian(basis, mc_samples=mc_samples, rng=rng)
    else:
        raise TypeError(f"unsupported measure type {type(measure).__name__}")
    _check_gramian(result.matrix)
    return result


def _uniform_gramian(basis, measure, mc_samples, rng, force_mc=False) -> Gramian:
    mono = None
    transform = None
    if isinstance(basis, MonomialBasis):
        mono = basis
    elif isinstance(basis, TransformedBasis) and isinstance(basis.base, MonomialBasis):
        mono = basis.base
        transform = basis.matrix
    if mono is not None and _space_is_box(measure.space) and not force_mc:
        G = _monomial_box_gramian(mono.exponents, measure.space.bounding_box)
        if transform is not None:
            G = transform @ G @ transform.T
        return Gramian(matrix=_symmetrize(G) * measure.mass, mass=measure.mass,
                       method="closed-form")
    if rng is None:
        raise ValueError("MC Gramian needs an rng")
    p = basis.p
    s1 = np.zeros((p, p))
    s2 = np.zeros((p, p))
    remaining = mc_samples
    while remaining > 0:
        chunk = min(remaining, 1 << 14)
        Phi = basis.evaluate_many(measure.sample(chunk, rng))
        prods = np.einsum("ni,nj->nij", Phi, Phi)
        s1 += prods.sum(axis=0)
        s2 += (prods ** 2).sum(axis=0)
        remaining -= chunk
    mean = s1 / mc_samples
    var = np.maximum(s2 / mc_samples - mean ** 2, 0.0)
    se = measure.mass * np.sqrt(var / mc_samples)
    return Gramian(
        matrix=_symmetrize(mean) * measure.mass,
        mass=measure.mass,
        method="monte-carlo",
        samples=mc_samples,
        standard_error=se,
    )


def _symmetrize(M: np.ndarray) -> np.ndarray:
    return (M + M.T) / 2.0


def _check_gramian(G: np.ndarray) -> None:
    eigs = np.linalg.eigvalsh(G)
    if eigs[-1] <= 0 or eigs[0] <= SINGULARITY_RTOL * eigs[-1]:
        raise SingularGramianError(
            f"singular Gramian: eigenvalue range {eigs[0]:.3e} .. {eigs[-1]:.3e}"
        )


# ---------------------------------------------------------------------------
# information matrices and criteria


def validate_prior(prior, p: int) -> np.ndarray:
    """Normalize a prior matrix argument: None -> 0, scalar -> scalar * I."""
    if prior is None:
        return np.zeros((p, p))
    if np.isscalar(prior):
        if prior < 0:
            raise ValueError("scalar prior must be nonnegative")
        return float(prior) * np.eye(p)
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (p, p):
        raise ValueError(f"prior matrix must be ({p}, {p})")
    prior = _symmetrize(prior)
    eigs, vecs = np.linalg.eigh(prior)
    scale = max(abs(eigs[0]), abs(eigs[-1]), 1e-300)
    if eigs[0] < -1e-12 * scale:
        raise ValueError(f"prior matrix is not PSD: smallest eigenvalue {eigs[0]:.3e}")
    if eigs[0] < 0:
        prior = vecs @ np.diag(np.clip(eigs, 0.0, None)) @ vecs.T
        prior = _symmetrize(prior)
    return prior


def information_matrix(basis: Basis, design: np.ndarray, prior) -> np.ndarray:
    """phi(X)^T phi(X) + Lambda, exactly symmetric.

    Feature rows are put in a canonical order before accumulation so the
    result is bit-identical under permutations of the design points.
    """
    prior = validate_prior(prior, basis.p)
    design = np.asarray(design, dtype=float)
    if design.size == 0:
        return prior.copy()
    if design.ndim == 1:
        design = design[None, :]
    Phi = basis.evaluate_many(design)
    Phi = Phi[np.lexsort(Phi.T[::-1])]
    return _symmetrize(Phi.T @ Phi + prior)


def _cholesky(M: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        eigs = np.linalg.eigvalsh(_symmetrize(M))
        raise SingularMatrixError(
            f"singular information matrix: smallest pivot {eigs[0]:.6e}",
            smallest_pivot=float(eigs[0]),
        ) from None


def log_det(M: np.ndarray) -> float:
    """log det(M) for symmetric positive definite M, via Cholesky."""
    L = _cholesky(np.asarray(M, dtype=float))
    return float(2.0 * np.sum(np.log(np.diag(L))))


def trace_inverse(M: np.ndarray) -> float:
    L = _cholesky(np.asarray(M, dtype=float))
    Linv = scipy.linalg.solve_triangular(L, np.eye(len(M)), lower=True)
    return float(np.sum(Linv ** 2))


def criterion(M: np.ndarray, which: str) -> float:
    """Optimality criterion of an information matrix.

    which = "A": Tr(M^-1); "D": det(M^-1); "logD": -log det(M).
    """
    if which == "A":
        return trace_inverse(M)
    if which == "logD":
        return -log_det(M)
    if which == "D":
        return math.exp(-log_det(M))
    raise ValueError(f"unknown criterion {which!r}, expected 'A', 'D', or 'logD'")


def d_efficiency(design, reference, basis: Basis, prior) -> float:
    """(det(M_design) / det(M_reference))^(1/p), computed in log space."""
    ld_x = log_det(information_matrix(basis, design, prior))
    ld_ref = log_det(information_matrix(basis, reference, prior))
    return math.exp((ld_x - ld_ref) / basis.p)


def a_efficiency(design, reference, basis: Basis, prior) -> float:
    """Tr(M_reference^-1) / Tr(M_design^-1)."""
    tr_x = trace_inverse(information_matrix(basis, design, prior))
    tr_ref = trace_inverse(information_matrix(basis, reference, prior))
    return tr_ref / tr_x


# ---------------------------------------------------------------------------
# design CSV files


def write_design_csv(path, points: np.ndarray) -> None:
    """One row per point, header x1..xd, full-precision floats."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("design must be a (k, d) array")
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"x{i + 1}" for i in range(points.shape[1])])
        for row in points:
            writer.writerow([repr(float(v)) for v in row])


def read_design_csv(path) -> np.ndarray:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        d = len(header)
        expected = [f"x{i + 1}" for i in range(d)]
        if header != expected:
            raise ValueError(f"design CSV header {header} does not match {expected}")
        rows = [[float(v) for v in row] for row in reader if row]
    return np.array(rows, dtype=float).reshape(len(rows), d)


def packaged_design(name: str) -> np.ndarray:
    """Load a design CSV shipped in the package's data directory.

    ``unit_square_cubic_k10.csv`` is the best of 100 continuous-exchange
    runs for the D-criterion on [0, 1]^2 with the 10-term L2-normalized
    cubic basis, k = 10, prior 1e-4 * I; it serves as the reference design
    for efficiency comparisons on that benchmark.
    """
    path = os.path.join(os.path.dirname(__file__), "data", name)
    if not os.path.isfile(path):
        raise ValueError(f"no packaged design named {name!r}")
    return read_design_csv(path)
