"""
Testing the Rydberg chain Hamiltonian and its propagators
"""
import math

import numpy as np
import pytest
import scipy.linalg

from qklab.api_utils import DimensionMismatchError, PropagationError, ValidationError
from qklab.qk_types import (
    HermitianMatrix,
    PropagationBackend,
    RydbergGeometry,
    StateVector,
)
from qklab.rydberg import (
    PropagationOptions,
    basis_bits,
    build_rydberg_hamiltonian,
    dense_propagator,
    energy,
    evolve,
    krylov_expm_multiply,
)
from qklab.statevector import inner_product
from tests.conftest import PAULI, dense_rydberg, random_state


class TestGeometry:
    """Test the RydbergGeometry container"""

    def test_blockade_spacing(self, pair_geometry: RydbergGeometry) -> None:
        radius = pair_geometry.blockade_radius()
        assert pair_geometry.positions[1] == pytest.approx(radius)

    def test_interaction_at_blockade_radius(
        self, pair_geometry: RydbergGeometry
    ) -> None:
        assert pair_geometry.interaction(0, 1) == pytest.approx(
            pair_geometry.rabi_frequency, rel=1e-12
        )

    def test_chain_detuning_scale(self) -> None:
        geometry = RydbergGeometry.chain(2, rabi_frequency=2.0, delta_over_rabi=0.5)
        assert geometry.detuning_scale == 1.0

    @pytest.mark.parametrize("positions", [(0.0, 0.0), (1.0, 0.5), ()])
    def test_bad_positions(self, positions) -> None:
        with pytest.raises(ValidationError):
            RydbergGeometry(positions)

    @pytest.mark.parametrize("a_over_rb", [0.0, -1.0])
    def test_bad_spacing(self, a_over_rb: float) -> None:
        with pytest.raises(ValidationError):
            RydbergGeometry.chain(3, a_over_rb=a_over_rb)


class TestHamiltonian:
    """Test the sparse Hamiltonian against a brute-force assembly"""

    def test_basis_bits(self) -> None:
        assert basis_bits(2).tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]

    def test_single_atom_zero_detuning(self) -> None:
        geometry = RydbergGeometry((0.0,))
        hamiltonian = build_rydberg_hamiltonian(geometry, [0.0])
        expected = 0.5 * geometry.rabi_frequency * PAULI["X"]
        assert np.allclose(hamiltonian.to_dense(), expected)

    def test_pair_diagonal_by_hand(self, pair_geometry: RydbergGeometry) -> None:
        hamiltonian = build_rydberg_hamiltonian(pair_geometry, [1.0, 1.0])
        delta = pair_geometry.detuning_scale
        omega = pair_geometry.rabi_frequency
        # |gg>: +Delta, |gr> and |rg>: 0, |rr>: -Delta + V with V = Omega
        expected = [delta, 0.0, 0.0, -delta + omega]
        assert np.allclose(np.diag(hamiltonian.to_dense()).real, expected, atol=1e-9)
        oracle = dense_rydberg(pair_geometry, [1.0, 1.0])
        assert np.allclose(hamiltonian.to_dense(), oracle)

    def test_matches_dense_assembly(
        self, rng: np.random.Generator, chain3: RydbergGeometry
    ) -> None:
        x = rng.uniform(0.0, 1.0, 3)
        hamiltonian = build_rydberg_hamiltonian(chain3, x, detuning_field=0.4)
        oracle = dense_rydberg(chain3, x, 0.4)
        assert np.allclose(hamiltonian.to_dense(), oracle, atol=1e-9)

    def test_hermitian_and_sparse(self, chain3: RydbergGeometry) -> None:
        hamiltonian = build_rydberg_hamiltonian(chain3, [0.2, 0.5, 0.9])
        assert hamiltonian.is_hermitian()
        nonzero_per_row = np.diff(hamiltonian.matrix.indptr)
        assert nonzero_per_row.max() <= chain3.n_atoms + 1

    def test_feature_length_mismatch(self, chain3: RydbergGeometry) -> None:
        with pytest.raises(DimensionMismatchError):
            build_rydberg_hamiltonian(chain3, [0.1, 0.2])

    def test_energy(self, pair_geometry: RydbergGeometry) -> None:
        hamiltonian = build_rydberg_hamiltonian(pair_geometry, [1.0, 1.0])
        state = StateVector.zero(2)
        assert energy(state, hamiltonian) == pytest.approx(pair_geometry.detuning_scale)


class TestEvolve:
    """Test exp(-iHt) with both backends"""

    @pytest.mark.parametrize(
        "backend", [PropagationBackend.DENSE_EIGEN, PropagationBackend.KRYLOV]
    )
    def test_rabi_cycle(self, backend: PropagationBackend) -> None:
        geometry = RydbergGeometry(
            (0.0,), rabi_frequency=8 * math.pi, evolution_time=0.25
        )
        hamiltonian = build_rydberg_hamiltonian(geometry, [0.0])
        state = StateVector.zero(1)
        evolved = evolve(state, hamiltonian, geometry.evolution_time, backend)
        assert abs(inner_product(state, evolved)) ** 2 == pytest.approx(1.0, abs=1e-10)

    def test_zero_time_is_identity(self, rng: np.random.Generator, chain3) -> None:
        state = StateVector(3, random_state(rng, 3))
        hamiltonian = build_rydberg_hamiltonian(chain3, [0.3, 0.1, 0.7])
        evolved = evolve(state, hamiltonian, 0.0)
        assert np.array_equal(evolved.amplitudes, state.amplitudes)

    def test_negative_time(self, chain3: RydbergGeometry) -> None:
        hamiltonian = build_rydberg_hamiltonian(chain3, [0.3, 0.1, 0.7])
        with pytest.raises(ValidationError):
            evolve(StateVector.zero(3), hamiltonian, -1.0)

    def test_dimension_mismatch(self, pair_geometry: RydbergGeometry) -> None:
        hamiltonian = build_rydberg_hamiltonian(pair_geometry, [0.0, 0.0])
        with pytest.raises(DimensionMismatchError):
            evolve(StateVector.zero(3), hamiltonian, 0.1)

    @pytest.mark.parametrize("n_atoms", [2, 3, 5])
    def test_backends_agree(self, rng: np.random.Generator, n_atoms: int) -> None:
        geometry = RydbergGeometry.chain(n_atoms, a_over_rb=rng.uniform(0.8, 1.3))
        hamiltonian = build_rydberg_hamiltonian(geometry, rng.uniform(0, 1, n_atoms))
        state = StateVector(n_atoms, random_state(rng, n_atoms))
        t = geometry.evolution_time
        dense = evolve(state, hamiltonian, t, PropagationBackend.DENSE_EIGEN)
        krylov = evolve(state, hamiltonian, t, PropagationBackend.KRYLOV)
        assert np.linalg.norm(dense.amplitudes - krylov.amplitudes) < 1e-8
        assert dense.is_normalized() and krylov.is_normalized()

    def test_random_hermitian_agrees_with_scipy(self, rng: np.random.Generator) -> None:
        raw = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        hamiltonian = HermitianMatrix(raw + raw.conj().T)
        psi = random_state(rng, 3)
        oracle = scipy.linalg.expm(-1j * 0.3 * hamiltonian.to_dense()) @ psi
        assert np.allclose(dense_propagator(hamiltonian, 0.3) @ psi, oracle, atol=1e-10)
        krylov = krylov_expm_multiply(hamiltonian, psi, 0.3)
        assert np.linalg.norm(krylov - oracle) < 1e-8

    def test_small_subspace_falls_back_to_dense(self, chain3: RydbergGeometry) -> None:
        hamiltonian = build_rydberg_hamiltonian(chain3, [0.3, 0.1, 0.7])
        state = StateVector.zero(3)
        t = chain3.evolution_time
        fallback = evolve(
            state, hamiltonian, t, PropagationBackend.KRYLOV, krylov_max_subspace=2
        )
        dense = evolve(state, hamiltonian, t, PropagationBackend.DENSE_EIGEN)
        assert np.allclose(fallback.amplitudes, dense.amplitudes, atol=1e-12)

    def test_small_subspace_above_threshold_fails(
        self, chain3: RydbergGeometry
    ) -> None:
        hamiltonian = build_rydberg_hamiltonian(chain3, [0.3, 0.1, 0.7])
        with pytest.raises(PropagationError):
            evolve(
                StateVector.zero(3),
                hamiltonian,
                chain3.evolution_time,
                PropagationBackend.KRYLOV,
                krylov_max_subspace=2,
                dense_threshold=4,
            )


class TestPropagationOptions:
    """Test backend selection"""

    def test_auto_threshold(self) -> None:
        options = PropagationOptions(dense_threshold=16)
        assert options.use_dense(16)
        assert not options.use_dense(32)

    def test_explicit_backend(self) -> None:
        assert not PropagationOptions(PropagationBackend.KRYLOV).use_dense(2)
        assert PropagationOptions(PropagationBackend.DENSE_EIGEN).use_dense(4096)

    def test_bad_subspace(self) -> None:
        with pytest.raises(ValidationError):
            PropagationOptions(krylov_max_subspace=1)
