"""
qklab test fixtures
"""
import os
from functools import reduce
from pathlib import Path
from typing import Dict, Sequence

import numpy as np
import numpy.typing as npt
import pytest

from qklab.qk_types import SPLIT_TEST, SPLIT_TRAIN, LabeledDataset, RydbergGeometry

QKLAB_TEST_SEED = int(os.getenv("QKLAB_TEST_SEED", 7))

PAULI: Dict[str, npt.NDArray[np.complex128]] = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
    "N": np.array([[0, 0], [0, 1]], dtype=np.complex128),
}


# Run pytest from the tests directory (containing conftest.py) to use this argument
def pytest_addoption(parser):
    """Add configurable random seed for testing"""
    parser.addoption(
        "--qklab-test-seed",
        type=int,
        default=QKLAB_TEST_SEED,
        help="qklab random fixture seed",
    )


def dense_operator(n_qubits: int, factors: Dict[int, npt.ArrayLike]) -> np.ndarray:
    """
    Kronecker product placing ``factors`` (keyed by 1-indexed qubit) on a
    register of ``n_qubits`` with identities elsewhere. Qubit 1 is leftmost.
    """
    mats = [np.asarray(factors.get(q, PAULI["I"])) for q in range(1, n_qubits + 1)]
    return reduce(np.kron, mats)


def dense_rydberg(
    geometry: RydbergGeometry, x: Sequence[float], detuning_field: float = 0.0
) -> np.ndarray:
    """Brute-force tensor-product assembly of the chain Hamiltonian"""
    n = geometry.n_atoms
    h = np.zeros((2**n, 2**n), dtype=np.complex128)
    for mu in range(1, n + 1):
        detuning = geometry.detuning_scale * x[mu - 1] + detuning_field
        h += 0.5 * detuning * dense_operator(n, {mu: PAULI["Z"]})
        h += 0.5 * geometry.rabi_frequency * dense_operator(n, {mu: PAULI["X"]})
        for nu in range(mu + 1, n + 1):
            h += geometry.interaction(mu - 1, nu - 1) * dense_operator(
                n, {mu: PAULI["N"], nu: PAULI["N"]}
            )
    return h


def random_state(rng: np.random.Generator, n_qubits: int) -> np.ndarray:
    amplitudes = rng.normal(size=2**n_qubits) + 1j * rng.normal(size=2**n_qubits)
    return amplitudes / np.linalg.norm(amplitudes)


@pytest.fixture(scope="function")
def rng(request) -> np.random.Generator:
    """Seeded generator, reseeded per test"""
    return np.random.default_rng(request.config.getoption("--qklab-test-seed"))


@pytest.fixture(scope="session")
def pair_geometry() -> RydbergGeometry:
    """Two atoms one blockade radius apart"""
    return RydbergGeometry.chain(2, a_over_rb=1.0)


@pytest.fixture(scope="session")
def chain3() -> RydbergGeometry:
    return RydbergGeometry.chain(3, a_over_rb=1.05)


@pytest.fixture(scope="function")
def toy_dataset(rng: np.random.Generator) -> LabeledDataset:
    """Twelve 3-feature samples with smooth labels, 8 train and 4 test"""
    features = rng.uniform(0.0, 1.0, size=(12, 3))
    labels = np.sin(features.sum(axis=1))
    splits = (SPLIT_TRAIN,) * 8 + (SPLIT_TEST,) * 4
    return LabeledDataset(features, labels, splits)


@pytest.fixture(scope="function")
def dataset_csv(tmp_path: Path, toy_dataset: LabeledDataset) -> Path:
    from qklab.datasets import write_dataset_csv

    return write_dataset_csv(toy_dataset, tmp_path / "toy.csv")
