"""Shared fixtures: tiny discrete instances with hand-checkable numbers."""

from dataclasses import dataclass

import numpy as np
import pytest

from optdesign.features import MonomialBasis, monomial_basis


@dataclass(frozen=True)
class DiscreteFixture:
    """A weighted atom set with its basis and exact Gramian."""

    atoms: np.ndarray
    weights: np.ndarray
    basis: MonomialBasis
    k: int

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def features(self) -> np.ndarray:
        return self.basis.evaluate_many(self.atoms)

    @property
    def gram(self) -> np.ndarray:
        table = self.features
        G = (table * self.weights[:, None]).T @ table
        return (G + G.T) / 2.0


@pytest.fixture(scope="session")
def f1():
    """Three atoms 0, 1/2, 1 with weight 2/3 each, basis (1, x), k = 2.

    Exact values: mass = 2, G = [[2, 1], [1, 5/6]], det G = 2/3.
    """
    return DiscreteFixture(
        atoms=np.array([[0.0], [0.5], [1.0]]),
        weights=np.full(3, 2.0 / 3.0),
        basis=monomial_basis(1, 1),
        k=2,
    )


def make_random_fixture(rng: np.random.Generator, p_max: int = 3) -> DiscreteFixture:
    """Random atoms/weights with the total mass normalized to k.

    Keeps n <= 5, p <= p_max, k <= 4 and k >= p so the size-k conditional
    law is well-defined with a zero prior.
    """
    dimension, degree = [(1, 0), (1, 1), (1, 2), (2, 1)][rng.integers(4)]
    basis = monomial_basis(dimension, degree)
    if basis.p > p_max:
        basis = monomial_basis(1, p_max - 1)
        dimension = 1
    p = basis.p
    n = int(rng.integers(max(p, 2), 6))
    k = int(rng.integers(p, 5))
    atoms = rng.uniform(0.0, 1.0, size=(n, dimension))
    weights = rng.uniform(0.2, 1.0, size=n)
    weights *= k / weights.sum()
    return DiscreteFixture(atoms=atoms, weights=weights, basis=basis, k=k)


@pytest.fixture(scope="session")
def six_atoms():
    """Six fixed atoms in the unit square with basis (1, x, y) and k = 3.

    The seed is frozen so the exhaustive optimum is a stable reference for
    the search heuristics.
    """
    rng = np.random.default_rng(1905)
    atoms = rng.uniform(0.0, 1.0, size=(6, 2))
    weights = np.full(6, 0.5)
    return DiscreteFixture(
        atoms=atoms, weights=weights, basis=monomial_basis(2, 1), k=3
    )
