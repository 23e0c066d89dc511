import numpy as np
import pytest

from honestime.corpus import fixture, random_corpus
from honestime.space import Rational, cond_expect, zeros


@pytest.fixture(scope="session")
def corpus200():
    return random_corpus(200, seed=0)


@pytest.fixture
def s1():
    return fixture("S1")


@pytest.fixture
def s2():
    return fixture("S2")


@pytest.fixture
def s3():
    return fixture("S3")


def basis_martingales(space):
    """E[I_A | 𝓕_n] - P(A), one per terminal atom."""
    atoms = space.filtration.atoms(space.horizon)
    xi = zeros((len(atoms), space.n))
    for j, atom in enumerate(atoms):
        xi[j, list(atom)] = 1
    out = np.empty((len(atoms), space.horizon + 1, space.n), dtype=object)
    for n in range(space.horizon + 1):
        out[:, n, :] = cond_expect(space, xi, n)
    return out - out[:, :1, :]


def random_adapted(space, rng, count=None, scale=9):
    """Random rational processes adapted to the base filtration."""
    F = space.filtration
    shape = (space.horizon + 1, space.n) if count is None else (count, space.horizon + 1, space.n)
    out = zeros(shape)
    for n in range(space.horizon + 1):
        for atom in F.atoms(n):
            for idx in np.ndindex(*shape[:-2]):
                v = Rational(int(rng.integers(-scale, scale + 1)), int(rng.integers(1, scale + 1)))
                out[idx + (n, list(atom))] = v
    return out
