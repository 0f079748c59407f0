"""
Statevector gate application for the digital parts of the feature maps.

Qubits are 1-indexed; qubit 1 is the most significant position of the basis
index. Every gate returns a new StateVector.
"""

import math
from typing import Tuple

import numpy as np
import numpy.typing as npt

from qklab.api_utils import DimensionMismatchError, QubitIndexError, ValidationError
from qklab.qk_types import StateVector

_SQRT2_INV = 1.0 / math.sqrt(2.0)
_HADAMARD = np.array([[1, 1], [1, -1]], dtype=np.complex128) * _SQRT2_INV

CNOT_THETA = math.pi / 4


def _check_qubit(state: StateVector, qubit: int) -> None:
    if not 1 <= qubit <= state.n_qubits:
        raise QubitIndexError(
            f"Qubit {qubit} out of range for a {state.n_qubits}-qubit register"
        )


def _check_pair(state: StateVector, control: int, target: int) -> None:
    _check_qubit(state, control)
    _check_qubit(state, target)
    if control == target:
        raise QubitIndexError(f"Control and target coincide (qubit {control})")


def _apply_single_qubit(
    state: StateVector, matrix: npt.NDArray[np.complex128], qubit: int
) -> StateVector:
    _check_qubit(state, qubit)
    n = state.n_qubits
    axis = qubit - 1
    tensor = state.amplitudes.reshape((2,) * n)
    updated = np.tensordot(matrix, tensor, axes=([1], [axis]))
    return StateVector(n, np.moveaxis(updated, 0, axis).reshape(-1))


def _pair_index(n: int, control: int, target: int, target_bit: int) -> Tuple:
    """Index selecting control = 1 and target = ``target_bit``"""
    index = [slice(None)] * n
    index[control - 1] = 1
    index[target - 1] = target_bit
    return tuple(index)


def rx_matrix(angle: float) -> npt.NDArray[np.complex128]:
    """exp(-i angle sigma_x / 2)"""
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)


def phase_matrix(angle: float) -> npt.NDArray[np.complex128]:
    """diag(1, exp(i angle))"""
    return np.array([[1, 0], [0, np.exp(1j * angle)]], dtype=np.complex128)


def apply_rx(state: StateVector, qubit: int, angle: float) -> StateVector:
    """Apply the X-rotation exp(-i angle sigma_x / 2) to ``qubit``"""
    return _apply_single_qubit(state, rx_matrix(angle), qubit)


def apply_h(state: StateVector, qubit: int) -> StateVector:
    """Apply a Hadamard gate to ``qubit``"""
    return _apply_single_qubit(state, _HADAMARD, qubit)


def apply_phase(state: StateVector, qubit: int, angle: float) -> StateVector:
    """Apply the phase gate diag(1, exp(i angle)) to ``qubit``"""
    return _apply_single_qubit(state, phase_matrix(angle), qubit)


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    """Flip ``target`` on the basis states where ``control`` is 1"""
    _check_pair(state, control, target)
    n = state.n_qubits
    tensor = state.amplitudes.reshape((2,) * n).copy()
    low, high = _pair_index(n, control, target, 0), _pair_index(n, control, target, 1)
    tensor[low], tensor[high] = tensor[high].copy(), tensor[low].copy()
    return StateVector(n, tensor.reshape(-1))


def apply_noisy_cnot(
    state: StateVector, control: int, target: int, theta: float
) -> StateVector:
    """
    Apply U(theta) = exp(-i theta (I - sigma_z) x (I - sigma_x)).

    Since (I - sigma_z) x (I - sigma_x) = 4P with P = |1><1| x |-><-|, the gate is
    I + (exp(-4i theta) - 1) P. theta = pi/4 is the ideal CNOT.
    """
    _check_pair(state, control, target)
    n = state.n_qubits
    tensor = state.amplitudes.reshape((2,) * n).copy()
    low, high = _pair_index(n, control, target, 0), _pair_index(n, control, target, 1)
    # P projects the target onto |-> = (|0> - |1>)/sqrt(2) when the control is set
    delta = (np.exp(-4j * theta) - 1.0) * (tensor[low] - tensor[high]) / 2.0
    tensor[low] += delta
    tensor[high] -= delta
    return StateVector(n, tensor.reshape(-1))


def cnot_matrix() -> npt.NDArray[np.complex128]:
    """The 4x4 CNOT with qubit 1 as control"""
    return np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128
    )


def noisy_cnot_matrix(theta: float) -> npt.NDArray[np.complex128]:
    """The 4x4 matrix of apply_noisy_cnot(., 1, 2, theta)"""
    columns = [
        apply_noisy_cnot(StateVector.basis(2, k), 1, 2, theta).amplitudes
        for k in range(4)
    ]
    return np.stack(columns, axis=1)


def inner_product(first: StateVector, second: StateVector) -> complex:
    """<first|second>, conjugate-linear in ``first``"""
    if first.dimension != second.dimension:
        raise DimensionMismatchError(
            f"Cannot take the inner product of dimensions "
            f"{first.dimension} and {second.dimension}"
        )
    return complex(np.vdot(first.amplitudes, second.amplitudes))


def expectation_z(state: StateVector, qubit: int) -> float:
    """<psi|sigma_z|psi> on ``qubit`` from the probability difference of its bit"""
    _check_qubit(state, qubit)
    probabilities = np.abs(state.amplitudes.reshape((2,) * state.n_qubits)) ** 2
    marginal = np.moveaxis(probabilities, qubit - 1, 0).reshape(2, -1).sum(axis=1)
    return float(np.clip(marginal[0] - marginal[1], -1.0, 1.0))


def average_gate_fidelity(
    ideal: npt.NDArray[np.complex128], actual: npt.NDArray[np.complex128]
) -> float:
    """(|Tr(U^dagger V)|^2 + d) / (d (d + 1)) of two d x d unitaries"""
    if ideal.shape != actual.shape or ideal.shape[0] != ideal.shape[1]:
        raise DimensionMismatchError("Gate fidelity needs two square matrices")
    d = ideal.shape[0]
    overlap = np.trace(ideal.conj().T @ actual)
    return float((abs(overlap) ** 2 + d) / (d * (d + 1)))


def cnot_average_fidelity(
    sigma_theta: float, n_draws: int = 100_000, seed: int = 0
) -> Tuple[float, float]:
    """
    Monte Carlo mean and standard deviation of the average gate fidelity of
    the noisy CNOT with theta ~ N(pi/4, sigma_theta)
    """
    if sigma_theta < 0 or n_draws < 1:
        raise ValidationError("Need sigma_theta >= 0 and n_draws >= 1")
    rng = np.random.default_rng(seed)
    thetas = rng.normal(CNOT_THETA, sigma_theta, size=n_draws)
    # Tr(CNOT^dagger U(theta)) = 3 - exp(-4i theta), see apply_noisy_cnot
    overlaps = 3.0 - np.exp(-4j * thetas)
    fidelities = (np.abs(overlaps) ** 2 + 4.0) / 20.0
    return float(fidelities.mean()), float(fidelities.std())
