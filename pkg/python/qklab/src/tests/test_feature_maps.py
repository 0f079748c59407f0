"""
Testing the digital, analog, hybrid and ZZ feature maps and their noise
"""
import math
from functools import reduce

import numpy as np
import pytest
import scipy.linalg

from qklab.api_utils import DimensionMismatchError, EncodingError, ValidationError
from qklab.feature_maps import (
    build_ensemble,
    build_ensembles,
    circuit_shape,
    encode,
    encode_analog,
    encode_dataset,
    encode_digital,
    encode_hybrid,
    encode_zz,
    member_rng,
    perturbed_geometry,
    sample_noise,
)
from qklab.kernels import kernel_ideal
from qklab.qk_types import (
    FeatureMapKind,
    NoiseDraw,
    NoiseSpec,
    PropagationBackend,
    RydbergGeometry,
    StateVector,
)
from qklab.rydberg import PropagationOptions
from qklab.statevector import cnot_matrix, inner_product, rx_matrix
from tests.conftest import dense_rydberg

ZERO_NOISE = NoiseSpec.ideal(4)


def rx_layer_matrix(x) -> np.ndarray:
    return reduce(np.kron, [rx_matrix(math.pi * value / 2) for value in x])


def cnot_chain_matrix(d: int) -> np.ndarray:
    total = np.eye(2**d, dtype=np.complex128)
    for mu in range(1, d):
        left, right = np.eye(2 ** (mu - 1)), np.eye(2 ** (d - mu - 1))
        gate = np.kron(np.kron(left, cnot_matrix()), right)
        total = gate @ total
    return total


def zero_ket(d: int) -> np.ndarray:
    ket = np.zeros(2**d, dtype=np.complex128)
    ket[0] = 1.0
    return ket


class TestCircuitShape:
    """Test atom and CNOT counts"""

    def test_shapes(self) -> None:
        assert circuit_shape(FeatureMapKind.DIGITAL, 4) == (0, 3)
        assert circuit_shape(FeatureMapKind.ANALOG, 4) == (4, 0)
        assert circuit_shape(FeatureMapKind.HYBRID, 1) == (1, 0)

    def test_empty(self) -> None:
        with pytest.raises(ValidationError):
            circuit_shape(FeatureMapKind.DIGITAL, 0)


class TestDigital:
    """Test the hardware-efficient digital map"""

    def test_single_zero_feature(self) -> None:
        assert np.allclose(encode_digital([0.0]).amplitudes, [1.0, 0.0])

    def test_two_zero_features(self) -> None:
        assert np.allclose(encode_digital([0.0, 0.0]).amplitudes, zero_ket(2))

    def test_matches_dense_circuit(self, rng: np.random.Generator) -> None:
        x = rng.uniform(0.0, 1.0, 3)
        layer = rx_layer_matrix(x)
        oracle = layer @ cnot_chain_matrix(3) @ layer @ zero_ket(3)
        assert np.allclose(encode_digital(x).amplitudes, oracle, atol=1e-13)

    def test_ideal_thetas_match_ideal_circuit(self, rng: np.random.Generator) -> None:
        x = rng.uniform(0.0, 1.0, 4)
        draw = NoiseDraw.ideal(0, 3)
        expected = encode_digital(x).amplitudes
        assert np.allclose(encode_digital(x, draw).amplitudes, expected)

    def test_wrong_theta_count(self) -> None:
        with pytest.raises(DimensionMismatchError):
            encode_digital([0.1, 0.2, 0.3], NoiseDraw.ideal(0, 1))

    def test_normalized(self, rng: np.random.Generator) -> None:
        draw = sample_noise(NoiseSpec(), (0, 4), rng)
        assert encode_digital(rng.uniform(0, 1, 5), draw).is_normalized()


class TestAnalog:
    """Test the Rydberg analog map"""

    def test_rabi_cycle(self) -> None:
        geometry = RydbergGeometry.chain(1)
        pulse_area = geometry.rabi_frequency * geometry.evolution_time
        assert pulse_area == pytest.approx(2 * math.pi)
        state = encode_analog([0.0], geometry)
        assert abs(inner_product(StateVector.zero(1), state)) ** 2 == pytest.approx(
            1.0, abs=1e-10
        )

    def test_matches_dense_evolution(
        self, rng: np.random.Generator, chain3: RydbergGeometry
    ) -> None:
        x = rng.uniform(0.0, 1.0, 3)
        hamiltonian = dense_rydberg(chain3, x)
        propagator = scipy.linalg.expm(-1j * chain3.evolution_time * hamiltonian)
        oracle = propagator @ zero_ket(3)
        assert np.allclose(encode_analog(x, chain3).amplitudes, oracle, atol=1e-10)

    def test_krylov_backend(
        self, rng: np.random.Generator, chain3: RydbergGeometry
    ) -> None:
        x = rng.uniform(0.0, 1.0, 3)
        options = PropagationOptions(PropagationBackend.KRYLOV)
        krylov = encode_analog(x, chain3, options=options)
        dense = encode_analog(x, chain3)
        assert np.linalg.norm(krylov.amplitudes - dense.amplitudes) < 1e-8

    def test_zero_noise_draw_is_ideal(self, chain3: RydbergGeometry) -> None:
        x = [0.2, 0.4, 0.9]
        noisy = encode_analog(x, chain3, NoiseDraw.ideal(3, 0))
        ideal = encode_analog(x, chain3)
        assert kernel_ideal(noisy, ideal) == pytest.approx(1.0, abs=1e-12)

    def test_detuning_shift_enters_hamiltonian(self, chain3: RydbergGeometry) -> None:
        x = np.array([0.2, 0.4, 0.9])
        draw = NoiseDraw(0.7, 1.0, (0.0, 0.0, 0.0), ())
        propagator = scipy.linalg.expm(
            -1j * chain3.evolution_time * dense_rydberg(chain3, x, detuning_field=0.7)
        )
        oracle = propagator @ zero_ket(3)
        encoded = encode_analog(x, chain3, draw)
        assert np.allclose(encoded.amplitudes, oracle, atol=1e-10)

    def test_perturbed_geometry(self, chain3: RydbergGeometry) -> None:
        draw = NoiseDraw(0.0, 1.1, (0.1, -0.1, 0.0), ())
        perturbed = perturbed_geometry(chain3, draw)
        assert perturbed.positions[0] == pytest.approx(chain3.positions[0] + 0.1)
        assert perturbed.rabi_frequency == pytest.approx(1.1 * chain3.rabi_frequency)
        assert perturbed.detuning_scale == chain3.detuning_scale

    def test_shift_count_mismatch(self, chain3: RydbergGeometry) -> None:
        with pytest.raises(DimensionMismatchError):
            perturbed_geometry(chain3, NoiseDraw.ideal(2, 0))

    def test_feature_count_mismatch(self, chain3: RydbergGeometry) -> None:
        with pytest.raises(DimensionMismatchError):
            encode_analog([0.1, 0.2], chain3)


class TestHybrid:
    """Test the hybrid digital-analog map"""

    def test_single_zero_feature(self) -> None:
        state = encode_hybrid([0.0], RydbergGeometry.chain(1))
        assert abs(state.amplitudes[0]) ** 2 == pytest.approx(1.0, abs=1e-10)

    def test_matches_dense_circuit(
        self, rng: np.random.Generator, chain3: RydbergGeometry
    ) -> None:
        x = rng.uniform(0.0, 1.0, 3)
        analog = scipy.linalg.expm(
            -1j * chain3.evolution_time * dense_rydberg(chain3, np.zeros(3))
        )
        layer = rx_layer_matrix(x)
        oracle = layer @ analog @ layer @ zero_ket(3)
        assert np.allclose(encode_hybrid(x, chain3).amplitudes, oracle, atol=1e-10)

    def test_cached_and_propagated_paths_agree(
        self, rng: np.random.Generator, chain3: RydbergGeometry
    ) -> None:
        x = rng.uniform(0.0, 1.0, 3)
        options = PropagationOptions(PropagationBackend.KRYLOV)
        krylov = encode_hybrid(x, chain3, options=options)
        dense = encode_hybrid(x, chain3)
        assert np.linalg.norm(krylov.amplitudes - dense.amplitudes) < 1e-8


class TestZz:
    """Test the ZZ feature map of the benchmark labels"""

    @pytest.mark.parametrize("x", [0.0, 0.3, 1.0])
    def test_single_qubit(self, x: float) -> None:
        expected = np.array([1.0, np.exp(2j * x)]) / math.sqrt(2)
        assert np.allclose(encode_zz([x]).amplitudes, expected, atol=1e-15)

    def test_two_zero_features(self) -> None:
        phase = np.exp(2j * math.pi**2)
        expected = 0.5 * np.array([1.0, phase, phase, 1.0])
        assert np.allclose(encode_zz([0.0, 0.0]).amplitudes, expected, atol=1e-14)

    def test_normalized(self, rng: np.random.Generator) -> None:
        assert encode_zz(rng.uniform(0.0, 1.0, 5)).is_normalized()


class TestNoise:
    """Test noise sampling and ensembles"""

    def test_zero_sigmas(self, rng: np.random.Generator) -> None:
        draw = sample_noise(ZERO_NOISE, (3, 2), rng)
        assert draw == NoiseDraw.ideal(3, 2)

    def test_same_seed_same_draw(self) -> None:
        spec = NoiseSpec()
        first = sample_noise(spec, (3, 2), member_rng(4, 1, 0))
        second = sample_noise(spec, (3, 2), member_rng(4, 1, 0))
        assert first == second
        assert first != sample_noise(spec, (3, 2), member_rng(4, 1, 1))

    def test_draw_statistics(self) -> None:
        spec = NoiseSpec()
        draws = [sample_noise(spec, (1, 1), member_rng(0, 0, m)) for m in range(4000)]
        thetas = np.array([d.cnot_thetas[0] for d in draws])
        scales = np.array([d.rabi_scale for d in draws])
        assert thetas.mean() == pytest.approx(math.pi / 4, abs=5e-3)
        assert thetas.std() == pytest.approx(0.035, rel=0.1)
        assert scales.mean() == pytest.approx(1.0, abs=2e-3)

    def test_negative_seed(self) -> None:
        with pytest.raises(ValidationError):
            member_rng(-1, 0, 0)

    def test_singleton_ideal_ensemble(self) -> None:
        x = [0.1, 0.5]
        ens = build_ensemble(x, FeatureMapKind.DIGITAL, NoiseSpec.ideal(1), seed=0)
        assert ens.size == 1
        assert np.allclose(ens.states[0], encode_digital(x).amplitudes)

    def test_ensemble_deterministic(self, chain3: RydbergGeometry) -> None:
        spec = NoiseSpec(ensemble_size=3)
        x = [0.3, 0.6, 0.1]
        first = build_ensemble(x, FeatureMapKind.ANALOG, spec, 9, 2, chain3)
        second = build_ensemble(x, FeatureMapKind.ANALOG, spec, 9, 2, chain3)
        assert np.array_equal(first.states, second.states)
        other = build_ensemble(x, FeatureMapKind.ANALOG, spec, 9, 3, chain3)
        assert not np.array_equal(first.states, other.states)

    def test_members_normalized(self, chain3: RydbergGeometry) -> None:
        ens = build_ensemble(
            [0.3, 0.6, 0.1],
            FeatureMapKind.HYBRID,
            NoiseSpec(ensemble_size=4),
            1,
            0,
            chain3,
        )
        assert all(member.is_normalized() for member in ens.members())

    def test_thread_count_independent(self, rng: np.random.Generator) -> None:
        features = rng.uniform(0.0, 1.0, size=(5, 3))
        spec = NoiseSpec(ensemble_size=4)
        serial = build_ensembles(features, FeatureMapKind.DIGITAL, spec, 3, threads=1)
        parallel = build_ensembles(features, FeatureMapKind.DIGITAL, spec, 3, threads=4)
        for first, second in zip(serial, parallel):
            assert first.feature_id == second.feature_id
            assert np.array_equal(first.states, second.states)

    def test_encoding_error_names_sample(self, chain3: RydbergGeometry) -> None:
        with pytest.raises(EncodingError) as exc_info:
            build_ensemble([0.1, 0.2], FeatureMapKind.ANALOG, ZERO_NOISE, 0, 5, chain3)
        assert exc_info.value.sample_id == 5

    def test_noisy_encoding_error_names_member(self, chain3: RydbergGeometry) -> None:
        with pytest.raises(EncodingError) as exc_info:
            build_ensemble([0.1, 0.2], FeatureMapKind.ANALOG, NoiseSpec(), 0, 5, chain3)
        assert exc_info.value.member == 0


class TestEncode:
    """Test the map dispatch and dataset encoding"""

    def test_needs_geometry(self) -> None:
        with pytest.raises(ValidationError):
            encode([0.1], FeatureMapKind.ANALOG)

    @pytest.mark.parametrize("kind", list(FeatureMapKind))
    def test_dataset_rows(self, rng: np.random.Generator, kind: FeatureMapKind) -> None:
        geometry = RydbergGeometry.chain(2)
        features = rng.uniform(0.0, 1.0, size=(3, 2))
        states = encode_dataset(features, kind, geometry)
        assert states.shape == (3, 4)
        assert np.allclose(states[1], encode(features[1], kind, geometry).amplitudes)

    def test_dataset_feature_ids(self) -> None:
        with pytest.raises(DimensionMismatchError):
            encode_dataset(np.zeros((2, 2)), FeatureMapKind.DIGITAL, feature_ids=[0])
