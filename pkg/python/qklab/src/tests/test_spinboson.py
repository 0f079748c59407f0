"""
Testing the spin-boson dephasing factor, the BLP measure and the
non-Markovianity dataset
"""
import math

import numpy as np
import pytest

from qklab.api_utils import RefinementError, ValidationError
from qklab.qk_types import SPLIT_TEST, SPLIT_TRAIN, EnvParams
from qklab.spinboson import (
    bigPhi_t,
    blp_measure,
    blp_refine,
    default_sample_times,
    dephased_pair,
    dephasing_factor,
    dephasing_factor_quad,
    dephasing_trace,
    gen_nm_dataset,
    nm_features,
    trace_distance_2x2,
    trace_distance_trace,
    vartheta_t,
)

MARKOVIAN = EnvParams(s=1.5, T=4.5)
REVIVING = EnvParams(s=6.0, T=0.5)


class TestEnvParams:
    """Test the environment parameter container"""

    @pytest.mark.parametrize(
        "kwargs",
        [{"s": 1.0, "T": 1.0}, {"s": 2.0, "T": -0.1}, {"s": 2.0, "T": 1.0, "eta": 0.0}],
    )
    def test_invalid(self, kwargs) -> None:
        with pytest.raises(ValidationError):
            EnvParams(**kwargs)


class TestDephasing:
    """Test the closed-form dephasing exponents"""

    def test_zero_time(self) -> None:
        p = EnvParams(s=3.2, T=1.7)
        assert vartheta_t(p, 0.0) == 0.0
        assert bigPhi_t(p, 0.0) == 0.0
        assert dephasing_factor(p, 0.0) == 1.0

    def test_zero_phase_is_trivial(self, rng: np.random.Generator) -> None:
        p = EnvParams(s=2.7, T=2.0, varphi=0.0)
        times = np.sort(rng.uniform(0.0, 20.0, 8))
        assert np.all(vartheta_t(p, times) == 0.0)
        assert np.all(bigPhi_t(p, times) == 0.0)
        assert np.allclose(dephasing_factor(p, times), 1.0)

    def test_vartheta_closed_value(self) -> None:
        """s = 3 at w_c t = 1: Gamma(2) [2 - 2 Re (1 - i)^(-2)] = 2"""
        assert vartheta_t(EnvParams(s=3.0, T=1.0), 1.0) == pytest.approx(2.0, rel=1e-13)

    def test_vartheta_against_quadrature(self) -> None:
        p = EnvParams(s=3.0, T=0.8)
        quad = dephasing_factor_quad(p, 1.0)
        assert -np.angle(quad) == pytest.approx(vartheta_t(p, 1.0), rel=1e-6)

    def test_digamma_limit_against_quadrature(self) -> None:
        p = EnvParams(s=2.0, T=1.0)
        quad = dephasing_factor_quad(p, 2.0)
        assert bigPhi_t(p, 2.0) == pytest.approx(-math.log(abs(quad)), rel=1e-6)

    def test_continuity_at_s_two(self) -> None:
        t = 2.0
        below = bigPhi_t(EnvParams(s=2.0 - 2e-4, T=1.3), t)
        at = bigPhi_t(EnvParams(s=2.0, T=1.3), t)
        above = bigPhi_t(EnvParams(s=2.0 + 2e-4, T=1.3), t)
        assert at == pytest.approx(0.5 * (below + above), rel=1e-5)

    def test_random_sweep_against_quadrature(self, rng: np.random.Generator) -> None:
        for _ in range(20):
            p = EnvParams(s=rng.uniform(1.1, 6.5), T=rng.uniform(0.5, 4.5))
            t = rng.uniform(0.1, 5.0)
            closed = complex(dephasing_factor(p, t))
            quad = dephasing_factor_quad(p, t)
            assert abs(closed - quad) <= 1e-6 * abs(quad)

    def test_modulus_identity(self, rng: np.random.Generator) -> None:
        for _ in range(10):
            p = EnvParams(s=rng.uniform(1.1, 6.5), T=rng.uniform(0.5, 4.5))
            times = np.linspace(0.0, 20.0, 50)
            phi = dephasing_factor(p, times)
            assert np.allclose(np.abs(phi), np.exp(-bigPhi_t(p, times)), atol=1e-12)
            assert np.all(np.abs(phi) <= 1.0 + 1e-12)

    def test_zero_temperature_uses_quadrature(self) -> None:
        p = EnvParams(s=2.5, T=0.0)
        phi = dephasing_factor(p, [0.5, 1.0, 3.0])
        assert np.all(np.abs(phi) <= 1.0)
        assert abs(phi[1] - dephasing_factor_quad(p, 1.0)) < 1e-8

    def test_scalar_and_array_agree(self) -> None:
        p = EnvParams(s=4.1, T=2.2)
        times = np.array([0.3, 1.1, 4.0])
        values = dephasing_factor(p, times)
        for t, value in zip(times, values):
            assert dephasing_factor(p, float(t)) == pytest.approx(value, rel=1e-12)

    def test_negative_time(self) -> None:
        with pytest.raises(ValidationError):
            dephasing_factor(MARKOVIAN, -1.0)

    def test_trace_needs_increasing_times(self) -> None:
        with pytest.raises(ValidationError):
            dephasing_trace(MARKOVIAN, [1.0, 0.5])

    def test_trace_distance_is_modulus(self) -> None:
        times = default_sample_times()
        trace = dephasing_trace(REVIVING, times)
        assert np.array_equal(trace.trace_distance, np.abs(trace.phi_values))
        distances = trace_distance_trace(REVIVING, times)
        assert np.array_equal(distances, trace.trace_distance)


class TestTraceDistance:
    """Test the qubit trace distance"""

    def test_identical(self) -> None:
        rho = np.array([[0.6, 0.2j], [-0.2j, 0.4]])
        assert trace_distance_2x2(rho, rho) == 0.0

    def test_orthogonal(self) -> None:
        assert trace_distance_2x2(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) == 1.0

    def test_optimal_pair(self, rng: np.random.Generator) -> None:
        for _ in range(20):
            p = EnvParams(s=rng.uniform(1.1, 6.5), T=rng.uniform(0.5, 4.5))
            phi = complex(dephasing_factor(p, rng.uniform(0.0, 20.0)))
            distance = trace_distance_2x2(*dephased_pair(phi))
            assert distance == pytest.approx(abs(phi), abs=1e-12)

    @pytest.mark.parametrize(
        "rho",
        [
            np.diag([0.7, 0.7]),
            np.diag([1.2, -0.2]),
            np.array([[0.5, 0.1], [0.3, 0.5]]),
            np.eye(3) / 3,
        ],
    )
    def test_invalid_density_matrix(self, rho: np.ndarray) -> None:
        with pytest.raises(ValidationError):
            trace_distance_2x2(rho, np.diag([1.0, 0.0]))


class TestBlp:
    """Test the BLP non-Markovianity measure"""

    def test_markovian_point(self) -> None:
        grid = trace_distance_trace(MARKOVIAN, np.linspace(1e-3, 20.0, 4000))
        assert np.all(np.diff(grid) <= 0.0)
        result = blp_refine(MARKOVIAN)
        assert result.converged
        assert result.value < 1e-10

    def test_reviving_point(self) -> None:
        result = blp_refine(REVIVING)
        assert result.value > 0.0
        assert result.converged
        assert result.achieved < 1e-4

    def test_measure_matches_refinement(self) -> None:
        assert blp_measure(REVIVING) == blp_refine(REVIVING).value

    def test_additive_over_subintervals(self) -> None:
        times = np.linspace(0.0, 20.0, 8001)
        modulus = trace_distance_trace(REVIVING, times)
        revivals = np.maximum(np.diff(modulus), 0.0)
        split = 3217
        assert revivals.sum() == pytest.approx(
            revivals[:split].sum() + revivals[split:].sum(), abs=1e-14
        )

    def test_cap_strict(self) -> None:
        with pytest.raises(RefinementError) as exc_info:
            blp_measure(REVIVING, n_grid=64, tol=1e-300, max_grid=256)
        assert exc_info.value.achieved >= 0.0

    def test_cap_lenient(self) -> None:
        value = blp_measure(REVIVING, n_grid=64, tol=1e-300, max_grid=256, strict=False)
        assert value == blp_refine(REVIVING, n_grid=64, tol=1e-300, max_grid=256).value

    @pytest.mark.parametrize("kwargs", [{"t_max": 0.0}, {"n_grid": 1}])
    def test_invalid_grid(self, kwargs) -> None:
        with pytest.raises(ValidationError):
            blp_refine(MARKOVIAN, **kwargs)


class TestNmDataset:
    """Test generation of the non-Markovianity dataset"""

    def test_feature_layout(self) -> None:
        times = default_sample_times()
        features = nm_features(REVIVING, times)
        phi = dephasing_factor(REVIVING, times)
        assert len(features) == 20
        assert features[0] == phi[0].real and features[1] == phi[0].imag
        assert features[-1] == phi[-1].imag

    def test_default_times(self) -> None:
        assert default_sample_times().tolist() == pytest.approx(
            [0.5 * j for j in range(1, 11)]
        )

    def test_single_sample(self) -> None:
        data = gen_nm_dataset(n_train=1, n_test=0, seed=3)
        (sample,) = data.samples
        assert len(sample.features) == 20
        pairs = np.array(sample.features).reshape(10, 2)
        assert np.all(np.hypot(pairs[:, 0], pairs[:, 1]) <= 1.0 + 1e-12)
        assert data.splits == (SPLIT_TRAIN,)

    def test_deterministic(self) -> None:
        first = gen_nm_dataset(n_train=2, n_test=1, seed=11, threads=2)
        second = gen_nm_dataset(n_train=2, n_test=1, seed=11, threads=1)
        assert first.samples == second.samples
        assert first.splits == (SPLIT_TRAIN, SPLIT_TRAIN, SPLIT_TEST)

    def test_labels_against_doubled_grid(self) -> None:
        data = gen_nm_dataset(n_train=2, n_test=0, seed=5)
        for sample in data.samples:
            assert sample.label == pytest.approx(
                blp_measure(sample.params, n_grid=8000), abs=1e-4
            )

    def test_to_labeled(self) -> None:
        data = gen_nm_dataset(n_train=1, n_test=1, seed=2)
        labeled = data.to_labeled()
        assert labeled.features.shape == (2, 20)
        assert labeled.params.shape == (2, 2)
        assert labeled.params[0, 0] == data.samples[0].params.s

    def test_parameter_ranges(self) -> None:
        data = gen_nm_dataset(
            n_train=3, n_test=0, s_range=(2.0, 2.5), T_range=(1.0, 1.5)
        )
        for sample in data.samples:
            assert 2.0 <= sample.params.s <= 2.5
            assert 1.0 <= sample.params.T <= 1.5

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_train": 0, "n_test": 0},
            {"s_range": (0.5, 2.0)},
            {"T_range": (2.0, 1.0)},
            {"times": [0.5, 1.0]},
        ],
    )
    def test_invalid(self, kwargs) -> None:
        with pytest.raises(ValidationError):
            gen_nm_dataset(**{"n_train": 1, "n_test": 0, **kwargs})
