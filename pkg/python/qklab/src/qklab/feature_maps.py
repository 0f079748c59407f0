"""
Quantum feature maps: digital HEA, analog Rydberg, hybrid digital-analog and
the ZZ map, plus operational-noise sampling and noise ensembles
"""

import dataclasses
import functools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from tqdm.auto import tqdm

from qklab.api_utils import (
    DimensionMismatchError,
    EncodingError,
    QklabException,
    ValidationError,
    as_real_vector,
)
from qklab.qk_types import (
    FeatureMapKind,
    NoiseDraw,
    NoiseEnsemble,
    NoiseSpec,
    RydbergGeometry,
    StateVector,
)
from qklab.rydberg import (
    PropagationOptions,
    build_rydberg_hamiltonian,
    dense_propagator,
    evolve,
)
from qklab.statevector import (
    CNOT_THETA,
    apply_cnot,
    apply_h,
    apply_noisy_cnot,
    apply_phase,
    apply_rx,
)
from qklab.tools.utils import DEFAULT_THREADS, PBAR_DEFAULTS, logged

logger = logging.getLogger("qklab")

DEFAULT_OPTIONS = PropagationOptions()


def circuit_shape(map_kind: FeatureMapKind, d: int) -> Tuple[int, int]:
    """(number of atoms, number of CNOT gates) of a map on ``d`` features"""
    if d < 1:
        raise ValidationError(f"Feature dimension must be >= 1, got {d}")
    if map_kind is FeatureMapKind.DIGITAL:
        return 0, d - 1
    return d, 0


def _features(x: npt.ArrayLike, expected: Optional[int] = None) -> np.ndarray:
    features = as_real_vector(x, "feature vector")
    if features.shape[0] < 1:
        raise ValidationError("Feature vector must have at least one component")
    if expected is not None and features.shape[0] != expected:
        raise DimensionMismatchError(
            f"Feature length {features.shape[0]} does not match {expected} qubits"
        )
    return features


def _rx_layer(state: StateVector, x: np.ndarray) -> StateVector:
    for qubit, value in enumerate(x, start=1):
        state = apply_rx(state, qubit, math.pi * value / 2.0)
    return state


def encode_digital(x: npt.ArrayLike, noise: Optional[NoiseDraw] = None) -> StateVector:
    """
    Hardware-efficient ansatz: RX(pi x_mu / 2) on every qubit, the CNOT chain
    CNOT(mu, mu + 1), and the RX layer again, starting from |0...0>.

    With ``noise`` the chain uses the noisy CNOT with the drawn exponents.
    """
    features = _features(x)
    d = features.shape[0]
    if noise is not None and len(noise.cnot_thetas) != d - 1:
        raise DimensionMismatchError(
            f"Noise draw has {len(noise.cnot_thetas)} CNOT exponents, "
            f"circuit has {d - 1}"
        )

    state = _rx_layer(StateVector.zero(d), features)
    for mu in range(1, d):
        if noise is None:
            state = apply_cnot(state, mu, mu + 1)
        else:
            state = apply_noisy_cnot(state, mu, mu + 1, noise.cnot_thetas[mu - 1])
    return _rx_layer(state, features)


def perturbed_geometry(geometry: RydbergGeometry, noise: NoiseDraw) -> RydbergGeometry:
    """Apply a draw's Rabi scale and position shifts to ``geometry``"""
    if len(noise.position_shifts) != geometry.n_atoms:
        raise DimensionMismatchError(
            f"Noise draw has {len(noise.position_shifts)} position shifts for "
            f"{geometry.n_atoms} atoms"
        )
    shifts = noise.position_shifts
    positions = tuple(r + dr for r, dr in zip(geometry.positions, shifts))
    return dataclasses.replace(
        geometry,
        positions=positions,
        rabi_frequency=geometry.rabi_frequency * noise.rabi_scale,
    )


def _analog_layer(
    state: StateVector,
    x: np.ndarray,
    geometry: RydbergGeometry,
    noise: Optional[NoiseDraw],
    options: PropagationOptions,
) -> StateVector:
    detuning_field = 0.0
    if noise is not None:
        geometry = perturbed_geometry(geometry, noise)
        detuning_field = noise.detuning_shift
    hamiltonian = build_rydberg_hamiltonian(geometry, x, detuning_field)
    return evolve(
        state,
        hamiltonian,
        geometry.evolution_time,
        backend=options.backend,
        krylov_max_subspace=options.krylov_max_subspace,
        dense_threshold=options.dense_threshold,
    )


def encode_analog(
    x: npt.ArrayLike,
    geometry: RydbergGeometry,
    noise: Optional[NoiseDraw] = None,
    options: PropagationOptions = DEFAULT_OPTIONS,
) -> StateVector:
    """
    Evolve |0...0> for the geometry's evolution time under the Rydberg
    Hamiltonian carrying ``x`` in its detuning terms.

    A noise draw shifts the detuning by an additive field, scales the Rabi
    frequency and displaces the atoms.
    """
    features = _features(x, geometry.n_atoms)
    initial = StateVector.zero(geometry.n_atoms)
    return _analog_layer(initial, features, geometry, noise, options)


@functools.lru_cache(maxsize=16)
def _ideal_hybrid_propagator(geometry: RydbergGeometry) -> np.ndarray:
    """exp(-i H(0) t), shared by every ideal hybrid encoding on ``geometry``"""
    hamiltonian = build_rydberg_hamiltonian(geometry, np.zeros(geometry.n_atoms))
    propagator = dense_propagator(hamiltonian, geometry.evolution_time)
    propagator.setflags(write=False)
    return propagator


def encode_hybrid(
    x: npt.ArrayLike,
    geometry: RydbergGeometry,
    noise: Optional[NoiseDraw] = None,
    options: PropagationOptions = DEFAULT_OPTIONS,
) -> StateVector:
    """
    RX encoding layer, analog evolution under the feature-free Hamiltonian
    H(0), then the RX layer again.
    """
    features = _features(x, geometry.n_atoms)
    n = geometry.n_atoms
    state = _rx_layer(StateVector.zero(n), features)
    if noise is None and options.use_dense(2**n):
        state = StateVector(n, _ideal_hybrid_propagator(geometry) @ state.amplitudes)
    else:
        state = _analog_layer(state, np.zeros(n), geometry, noise, options)
    return _rx_layer(state, features)


def apply_zz(state: StateVector, x: npt.ArrayLike) -> StateVector:
    """
    Apply the ZZ feature map circuit for ``x`` to ``state``: H and P(2 x_mu)
    on every qubit, then CNOT(mu, mu+1), P(2 (pi - x_mu)(pi - x_mu+1)) on
    qubit mu + 1 and CNOT(mu, mu+1) for ascending mu.
    """
    features = _features(x, state.n_qubits)
    d = features.shape[0]
    for qubit in range(1, d + 1):
        state = apply_h(state, qubit)
    for qubit, value in enumerate(features, start=1):
        state = apply_phase(state, qubit, 2.0 * value)
    for mu in range(1, d):
        angle = 2.0 * (math.pi - features[mu - 1]) * (math.pi - features[mu])
        state = apply_cnot(state, mu, mu + 1)
        state = apply_phase(state, mu + 1, angle)
        state = apply_cnot(state, mu, mu + 1)
    return state


def encode_zz(x: npt.ArrayLike) -> StateVector:
    """The ZZ feature map applied to |0...0>"""
    features = _features(x)
    return apply_zz(StateVector.zero(features.shape[0]), features)


def encode(
    x: npt.ArrayLike,
    map_kind: FeatureMapKind,
    geometry: Optional[RydbergGeometry] = None,
    noise: Optional[NoiseDraw] = None,
    options: PropagationOptions = DEFAULT_OPTIONS,
) -> StateVector:
    """Encode ``x`` with the feature map of ``map_kind``"""
    if map_kind is FeatureMapKind.DIGITAL:
        return encode_digital(x, noise)
    if geometry is None:
        raise ValidationError(
            f"The {map_kind.value} feature map needs a RydbergGeometry"
        )
    if map_kind is FeatureMapKind.ANALOG:
        return encode_analog(x, geometry, noise, options)
    return encode_hybrid(x, geometry, noise, options)


def sample_noise(
    spec: NoiseSpec, circuit: Tuple[int, int], rng: np.random.Generator
) -> NoiseDraw:
    """
    Draw one noise realisation for a circuit of shape (n_atoms, n_cnots).

    Draw order: detuning shift, Rabi scale, position shifts, CNOT exponents.
    """
    n_atoms, n_cnots = circuit
    detuning_shift = float(rng.normal(0.0, spec.sigma_detuning))
    rabi_scale = float(rng.normal(1.0, spec.sigma_rabi_rel))
    position_shifts = rng.normal(0.0, spec.sigma_position, size=n_atoms)
    cnot_thetas = rng.normal(CNOT_THETA, spec.sigma_cnot_theta, size=n_cnots)
    return NoiseDraw(
        detuning_shift=detuning_shift,
        rabi_scale=rabi_scale,
        position_shifts=tuple(float(v) for v in position_shifts),
        cnot_thetas=tuple(float(v) for v in cnot_thetas),
    )


def member_rng(seed: int, feature_id: int, member: int) -> np.random.Generator:
    """The random stream of one ensemble member"""
    if seed < 0 or feature_id < 0:
        raise ValidationError("seed and feature_id must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([seed, feature_id, member]))


def build_ensemble(
    x: npt.ArrayLike,
    map_kind: FeatureMapKind,
    spec: NoiseSpec,
    seed: int,
    feature_id: int = 0,
    geometry: Optional[RydbergGeometry] = None,
    options: PropagationOptions = DEFAULT_OPTIONS,
) -> NoiseEnsemble:
    """
    Encode ``x`` under ``spec.ensemble_size`` independent noise draws.

    Member m draws from the stream seeded by (seed, feature_id, m), so the
    ensemble does not depend on evaluation order or thread count.

    Raises
    ------
    EncodingError
        A member failed to encode; carries the feature id and member index
    """
    features = _features(x)
    shape = circuit_shape(map_kind, features.shape[0])

    if spec.is_ideal:
        try:
            state = encode(features, map_kind, geometry, None, options)
        except QklabException as exc:
            raise EncodingError(str(exc), sample_id=feature_id) from exc
        states = np.tile(state.amplitudes, (spec.ensemble_size, 1))
        return NoiseEnsemble(feature_id, states, spec, seed)

    rows = []
    for member in range(spec.ensemble_size):
        draw = sample_noise(spec, shape, member_rng(seed, feature_id, member))
        try:
            rows.append(encode(features, map_kind, geometry, draw, options).amplitudes)
        except QklabException as exc:
            raise EncodingError(str(exc), sample_id=feature_id, member=member) from exc
    return NoiseEnsemble(feature_id, np.stack(rows), spec, seed)


def _feature_ids(n: int, feature_ids: Optional[Sequence[int]]) -> List[int]:
    if feature_ids is None:
        return list(range(n))
    ids = [int(i) for i in feature_ids]
    if len(ids) != n:
        raise DimensionMismatchError(f"{len(ids)} feature ids for {n} features")
    return ids


def _as_feature_matrix(features: npt.ArrayLike) -> np.ndarray:
    matrix = np.asarray(features, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 1:
        raise ValidationError("Expected a nonempty N x d feature matrix")
    return matrix


@logged(log_time=True)
def build_ensembles(
    features: npt.ArrayLike,
    map_kind: FeatureMapKind,
    spec: NoiseSpec,
    seed: int,
    feature_ids: Optional[Sequence[int]] = None,
    geometry: Optional[RydbergGeometry] = None,
    options: PropagationOptions = DEFAULT_OPTIONS,
    threads: int = DEFAULT_THREADS,
) -> List[NoiseEnsemble]:
    """Build one noise ensemble per feature row, in row order"""
    matrix = _as_feature_matrix(features)
    ids = _feature_ids(matrix.shape[0], feature_ids)

    def build(index: int) -> NoiseEnsemble:
        return build_ensemble(
            matrix[index], map_kind, spec, seed, ids[index], geometry, options
        )

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        return list(
            tqdm(
                executor.map(build, range(matrix.shape[0])),
                total=matrix.shape[0],
                desc=f"{map_kind.value} ensembles",
                unit="feature",
                leave=False,
                **PBAR_DEFAULTS,
            )
        )


@logged(log_time=True)
def encode_dataset(
    features: npt.ArrayLike,
    map_kind: FeatureMapKind,
    geometry: Optional[RydbergGeometry] = None,
    options: PropagationOptions = DEFAULT_OPTIONS,
    feature_ids: Optional[Sequence[int]] = None,
    threads: int = DEFAULT_THREADS,
) -> npt.NDArray[np.complex128]:
    """Ideal encoded states of every feature row as an (N, 2**d) array"""
    matrix = _as_feature_matrix(features)
    ids = _feature_ids(matrix.shape[0], feature_ids)

    def build(index: int) -> np.ndarray:
        try:
            return encode(matrix[index], map_kind, geometry, None, options).amplitudes
        except QklabException as exc:
            raise EncodingError(str(exc), sample_id=ids[index]) from exc

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        rows = list(
            tqdm(
                executor.map(build, range(matrix.shape[0])),
                total=matrix.shape[0],
                desc=f"{map_kind.value} states",
                unit="feature",
                leave=False,
                **PBAR_DEFAULTS,
            )
        )
    return np.stack(rows)
