"""Bounded design spaces defined by constraint systems.

A design space is a union of constraint conjunctions (regions) inside an
axis-aligned bounding box, or a finite set of atoms. Membership tests,
uniform rejection sampling, and volume estimation live here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AcceptanceTooLowError",
    "Constraint",
    "DesignSpace",
    "FiniteSpace",
    "VolumeEstimate",
    "builtin_space",
    "space_from_descriptor",
    "space_to_descriptor",
]

# Rejection sampling gives up once the running acceptance rate drops below
# this floor after at least MIN_PROPOSALS proposals.
DEFAULT_ACCEPTANCE_FLOOR = 1e-4
MIN_PROPOSALS = 10_000

_SENSES = ("<=", ">=")
_KINDS = ("linear", "quadratic-in-one-coordinate", "ball", "simplex-sum")


class AcceptanceTooLowError(RuntimeError):
    """Raised when rejection sampling accepts too small a fraction of proposals."""


@dataclass(frozen=True)
class Constraint:
    """One scalar inequality ``value(x) <sense> bound``.

    Supported kinds:

    - ``linear``: value = coeffs . x, coeffs a length-d vector.
    - ``quadratic-in-one-coordinate``: value = quad * x[axis]**2 + linear . x.
    - ``ball``: value = ||x - center||, bound is the radius.
    - ``simplex-sum``: value = coeffs . x with coeffs defaulting to all ones.
    """

    kind: str
    coeffs: object
    sense: str
    bound: float

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.sense not in _SENSES:
            raise ValueError(f"constraint sense must be one of {_SENSES}, got {self.sense!r}")

    def _parts(self, dimension: int):
        if self.kind == "quadratic-in-one-coordinate":
            spec = self.coeffs
            axis = int(spec["axis"])
            if not 0 <= axis < dimension:
                raise ValueError(f"quadratic axis {axis} outside dimension {dimension}")
            lin = np.asarray(spec["linear"], dtype=float)
            if lin.shape != (dimension,):
                raise ValueError("quadratic linear part does not match space dimension")
            return axis, float(spec["quad"]), lin
        if self.kind == "simplex-sum" and self.coeffs is None:
            return np.ones(dimension)
        vec = np.asarray(self.coeffs, dtype=float)
        if vec.shape != (dimension,):
            raise ValueError(
                f"{self.kind} constraint coefficients have shape {vec.shape}, "
                f"expected ({dimension},)"
            )
        return vec

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Constraint value at each row of ``points`` (shape (n, d))."""
        points = np.asarray(points, dtype=float)
        d = points.shape[1]
        if self.kind in ("linear", "simplex-sum"):
            vec = self._parts(d)
            return points @ vec
        if self.kind == "quadratic-in-one-coordinate":
            axis, quad, lin = self._parts(d)
            return quad * points[:, axis] ** 2 + points @ lin
        # ball: distance to the center
        center = self._parts(d)
        return np.sqrt(np.sum((points - center) ** 2, axis=1))

    def evaluate(self, x: np.ndarray) -> float:
        return float(self.evaluate_many(np.asarray(x, dtype=float)[None, :])[0])

    def satisfied_many(self, points: np.ndarray) -> np.ndarray:
        values = self.evaluate_many(points)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{self.kind} constraint evaluated to a non-finite value")
        if self.sense == "<=":
            return values <= self.bound
        return values >= self.bound


def _as_point_array(points, dimension: int) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(0, dimension) if arr.size == 0 else arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dimension:
        raise ValueError(f"expected points of dimension {dimension}, got shape {arr.shape}")
    return arr


@dataclass
class DesignSpace:
    """Union of constraint-conjunction regions inside a bounding box.

    ``regions`` is a list of constraint lists; a point belongs to the space
    when it lies in the bounding box and satisfies every constraint of at
    least one region. An empty conjunction means the whole box.

    Each region stores one feasible witness point. Witnesses may be passed at
    construction; missing ones are searched for with a fixed-seed rejection
    scan, and construction fails if a region appears empty.
    """

    dimension: int
    bounding_box: np.ndarray
    regions: list = field(default_factory=lambda: [[]])
    candidate_points: np.ndarray | None = None
    witnesses: list | None = None
    name: str = "space"

    def __post_init__(self) -> None:
        self.bounding_box = np.asarray(self.bounding_box, dtype=float)
        if self.bounding_box.shape != (self.dimension, 2):
            raise ValueError("bounding_box must have shape (dimension, 2)")
        widths = self.bounding_box[:, 1] - self.bounding_box[:, 0]
        if not np.all(widths > 0):
            raise ValueError("bounding_box must have positive volume (lo < hi on every axis)")
        if not self.regions:
            raise ValueError("at least one region is required")
        if self.candidate_points is not None:
            self.candidate_points = _as_point_array(self.candidate_points, self.dimension)
        self._resolve_witnesses()
        if self.candidate_points is not None and len(self.candidate_points) > 0:
            inside = self.contains_many(self.candidate_points)
            if not np.all(inside):
                bad = int(np.flatnonzero(~inside)[0])
                raise ValueError(
                    f"candidate point {self.candidate_points[bad].tolist()} "
                    f"is outside the space"
                )

    def _resolve_witnesses(self) -> None:
        given = list(self.witnesses) if self.witnesses is not None else [None] * len(self.regions)
        if len(given) != len(self.regions):
            raise ValueError("need one witness slot per region")
        rng = np.random.default_rng(0)
        resolved = []
        for idx, witness in enumerate(given):
            if witness is not None:
                w = np.asarray(witness, dtype=float)
                if not self._region_contains(idx, w[None, :])[0]:
                    raise ValueError(f"witness for region {idx} does not satisfy its constraints")
                resolved.append(w)
                continue
            found = self._search_witness(idx, rng)
            if found is None:
                raise ValueError(
                    f"region {idx} of space {self.name!r} appears empty: "
                    f"no feasible point found by rejection search"
                )
            resolved.append(found)
        self.witnesses = resolved

    def _search_witness(self, region_index: int, rng: np.random.Generator) -> np.ndarray | None:
        lo = self.bounding_box[:, 0]
        hi = self.bounding_box[:, 1]
        if self.candidate_points is not None:
            for point in self.candidate_points:
                if self._region_contains(region_index, point[None, :])[0]:
                    return np.array(point, dtype=float)
        for _ in range(200):
            batch = rng.uniform(lo, hi, size=(512, self.dimension))
            good = self._region_contains(region_index, batch)
            if np.any(good):
                return batch[int(np.argmax(good))]
        return None

    def _region_contains(self, region_index: int, points: np.ndarray) -> np.ndarray:
        mask = np.ones(len(points), dtype=bool)
        for constraint in self.regions[region_index]:
            mask &= constraint.satisfied_many(points)
            if not np.any(mask):
                break
        return mask

    def contains_many(self, points) -> np.ndarray:
        """Vectorized membership test; returns a boolean array."""
        points = _as_point_array(points, self.dimension)
        lo = self.bounding_box[:, 0]
        hi = self.bounding_box[:, 1]
        in_box = np.all((points >= lo) & (points <= hi), axis=1)
        result = np.zeros(len(points), dtype=bool)
        pending = in_box.copy()
        for idx in range(len(self.regions)):
            if not np.any(pending):
                break
            sub = self._region_contains(idx, points[pending])
            hits = np.flatnonzero(pending)[sub]
            result[hits] = True
            pending[hits] = False
        return result

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.dimension},)")
        return bool(self.contains_many(x[None, :])[0])

    def sample_uniform(
        self,
        count: int,
        rng: np.random.Generator,
        acceptance_floor: float = DEFAULT_ACCEPTANCE_FLOOR,
    ) -> np.ndarray:
        """Draw ``count`` i.i.d. uniform points by rejection from the box."""
        if count < 0:
            raise ValueError("count must be nonnegative")
        if count == 0:
            return np.zeros((0, self.dimension))
        lo = self.bounding_box[:, 0]
        hi = self.bounding_box[:, 1]
        out = np.empty((count, self.dimension))
        have = 0
        proposed = 0
        accepted = 0
        batch = max(1024, 2 * count)
        while have < count:
            proposals = rng.uniform(lo, hi, size=(batch, self.dimension))
            keep = self.contains_many(proposals)
            proposed += batch
            accepted += int(np.sum(keep))
            good = proposals[keep]
            take = min(len(good), count - have)
            out[have : have + take] = good[:take]
            have += take
            if proposed >= MIN_PROPOSALS and accepted / proposed < acceptance_floor:
                raise AcceptanceTooLowError(
                    f"rejection sampling on space {self.name!r}: acceptance rate "
                    f"{accepted / proposed:.2e} after {proposed} proposals is below "
                    f"the floor {acceptance_floor:.1e}"
                )
        return out

    def volume_fraction(self, mc_samples: int, rng: np.random.Generator) -> "VolumeEstimate":
        """Monte Carlo estimate of vol(space) / vol(bounding box)."""
        if mc_samples < 1:
            raise ValueError("mc_samples must be at least 1")
        lo = self.bounding_box[:, 0]
        hi = self.bounding_box[:, 1]
        hits = 0
        remaining = mc_samples
        while remaining > 0:
            batch = min(remaining, 1 << 18)
            proposals = rng.uniform(lo, hi, size=(batch, self.dimension))
            hits += int(np.sum(self.contains_many(proposals)))
            remaining -= batch
        frac = hits / mc_samples
        se = math.sqrt(frac * (1.0 - frac) / mc_samples)
        return VolumeEstimate(fraction=frac, standard_error=se, samples=mc_samples)


@dataclass(frozen=True)
class VolumeEstimate:
    fraction: float
    standard_error: float
    samples: int


@dataclass
class FiniteSpace:
    """A finite set of pairwise-distinct atoms in R^d."""

    atoms: np.ndarray

    def __post_init__(self) -> None:
        self.atoms = np.asarray(self.atoms, dtype=float)
        if self.atoms.ndim == 1:
            self.atoms = self.atoms[:, None]
        if self.atoms.ndim != 2 or len(self.atoms) == 0:
            raise ValueError("atoms must form a nonempty (n, d) array")
        seen = {row.tobytes() for row in self.atoms}
        if len(seen) != len(self.atoms):
            raise ValueError("atoms must be pairwise distinct")

    @property
    def n(self) -> int:
        return len(self.atoms)

    @property
    def dimension(self) -> int:
        return self.atoms.shape[1]

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.dimension},)")
        return any(np.array_equal(x, atom) for atom in self.atoms)

    def sample_uniform(
        self,
        count: int,
        rng: np.random.Generator,
        weights: np.ndarray | None = None,
    ) -> np.ndarray:
        """Categorical sampling over atoms, uniform unless weights are given."""
        if count < 0:
            raise ValueError("count must be nonnegative")
        if weights is None:
            idx = rng.integers(0, self.n, size=count)
        else:
            weights = np.asarray(weights, dtype=float)
            if weights.shape != (self.n,) or np.any(weights < 0) or weights.sum() <= 0:
                raise ValueError("weights must be nonnegative with positive total")
            idx = rng.choice(self.n, size=count, p=weights / weights.sum())
        return self.atoms[idx]


def builtin_space(name: str, dimension: int = 3) -> DesignSpace:
    """Construct one of the named built-in spaces.

    - ``unit_cube``: [0, 1]^dimension with no extra constraints.
    - ``atkinson_mixture``: the constrained two-variable mixture sliver
      {0 <= x+y <= 1, -4.062x^2 + 2.962x + y >= 0.6075,
       -1.174x^2 + 1.057x + y <= 0.5019} in [0, 1]^2.
    - ``two_balls``: union of the two tangent balls of radius (3-sqrt(3))/4
      centered at (c, c, c) and (1-c, 1-c, 1-c) in [0, 1]^3, which meet at
      (1/2, 1/2, 1/2).
    """
    if name == "unit_cube":
        box = np.tile([0.0, 1.0], (dimension, 1))
        return DesignSpace(
            dimension=dimension,
            bounding_box=box,
            regions=[[]],
            witnesses=[np.full(dimension, 0.5)],
            name="unit_cube",
        )
    if name == "atkinson_mixture":
        constraints = [
            Constraint("simplex-sum", None, ">=", 0.0),
            Constraint("simplex-sum", None, "<=", 1.0),
            Constraint(
                "quadratic-in-one-coordinate",
                {"axis": 0, "quad": -4.062, "linear": [2.962, 1.0]},
                ">=",
                0.6075,
            ),
            Constraint(
                "quadratic-in-one-coordinate",
                {"axis": 0, "quad": -1.174, "linear": [1.057, 1.0]},
                "<=",
                0.5019,
            ),
        ]
        return DesignSpace(
            dimension=2,
            bounding_box=[[0.0, 1.0], [0.0, 1.0]],
            regions=[constraints],
            witnesses=[np.array([0.3, 0.2])],
            name="atkinson_mixture",
        )
    if name == "two_balls":
        c = (3.0 - math.sqrt(3.0)) / 4.0
        lower = np.full(3, c)
        upper = np.full(3, 1.0 - c)
        return DesignSpace(
            dimension=3,
            bounding_box=[[0.0, 1.0]] * 3,
            regions=[
                [Constraint("ball", lower, "<=", c)],
                [Constraint("ball", upper, "<=", c)],
            ],
            witnesses=[lower, upper],
            name="two_balls",
        )
    raise ValueError(f"unknown built-in space {name!r}")


def _constraint_to_descriptor(constraint: Constraint) -> dict:
    coeffs = constraint.coeffs
    if isinstance(coeffs, np.ndarray):
        coeffs = coeffs.tolist()
    elif isinstance(coeffs, dict):
        coeffs = {
            "axis": int(coeffs["axis"]),
            "quad": float(coeffs["quad"]),
            "linear": list(np.asarray(coeffs["linear"], dtype=float)),
        }
    return {
        "kind": constraint.kind,
        "coeffs": coeffs,
        "sense": constraint.sense,
        "bound": constraint.bound,
    }


def space_to_descriptor(space: DesignSpace) -> dict:
    desc = {
        "dimension": space.dimension,
        "bounding_box": space.bounding_box.tolist(),
        "regions": [
            [_constraint_to_descriptor(c) for c in region] for region in space.regions
        ],
    }
    if space.candidate_points is not None:
        desc["candidates"] = space.candidate_points.tolist()
    return desc


def space_from_descriptor(desc: dict) -> DesignSpace:
    """Build a DesignSpace from its JSON descriptor dict."""
    try:
        dimension = int(desc["dimension"])
        box = desc["bounding_box"]
        regions_desc = desc.get("regions", [[]])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed space descriptor: missing {exc}") from exc
    regions = []
    for region in regions_desc:
        constraints = []
        for item in region:
            constraints.append(
                Constraint(
                    kind=item["kind"],
                    coeffs=item.get("coeffs"),
                    sense=item["sense"],
                    bound=float(item["bound"]),
                )
            )
        regions.append(constraints)
    return DesignSpace(
        dimension=dimension,
        bounding_box=box,
        regions=regions,
        candidate_points=desc.get("candidates"),
        name=desc.get("name", "space"),
    )
