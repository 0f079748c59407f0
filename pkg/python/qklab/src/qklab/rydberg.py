"""
Rydberg chain Hamiltonians and their time propagation
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import numpy.typing as npt
import scipy.linalg
import scipy.sparse as sp

from qklab.api_utils import (
    DimensionMismatchError,
    PropagationError,
    ValidationError,
    as_real_vector,
)
from qklab.qk_types import (
    HermitianMatrix,
    PropagationBackend,
    RydbergGeometry,
    StateVector,
)

logger = logging.getLogger("qklab")

DEFAULT_KRYLOV_MAX_SUBSPACE = 64
DEFAULT_KRYLOV_TOL = 1e-12
DEFAULT_DENSE_THRESHOLD = 512


@dataclass(frozen=True)
class PropagationOptions:
    """Backend selection for the analog evolution of the feature maps"""

    backend: PropagationBackend = PropagationBackend.AUTO
    krylov_max_subspace: int = DEFAULT_KRYLOV_MAX_SUBSPACE
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD

    def __post_init__(self) -> None:
        if self.krylov_max_subspace < 2:
            raise ValidationError("krylov_max_subspace must be >= 2")
        if self.dense_threshold < 1:
            raise ValidationError("dense_threshold must be >= 1")

    def use_dense(self, dimension: int) -> bool:
        """True when ``dimension`` is propagated with the dense eigensolver"""
        if self.backend is PropagationBackend.AUTO:
            return dimension <= self.dense_threshold
        return self.backend is PropagationBackend.DENSE_EIGEN


def basis_bits(n_qubits: int) -> npt.NDArray[np.int64]:
    """(2**n, n) array of basis-state bits, column mu holding qubit mu + 1"""
    basis = np.arange(2**n_qubits)
    shifts = n_qubits - 1 - np.arange(n_qubits)
    return (basis[:, None] >> shifts[None, :]) & 1


def build_rydberg_hamiltonian(
    geometry: RydbergGeometry,
    x: npt.ArrayLike,
    detuning_field: float = 0.0,
) -> HermitianMatrix:
    """
    Build H = (Delta/2) sum x_mu Z_mu + (Omega/2) sum X_mu
    + sum_{mu<nu} c6/|r_mu - r_nu|^6 n_mu n_nu.

    ``detuning_field`` adds (detuning_field/2) sum Z_mu, the global laser
    detuning drift that acts independently of the encoded features.

    Z = diag(1, -1) in the (|g>, |r>) = (|0>, |1>) basis and n = |1><1|.
    """
    features = as_real_vector(x, "feature vector")
    n = geometry.n_atoms
    if features.shape[0] != n:
        raise DimensionMismatchError(
            f"Feature length {features.shape[0]} does not match {n} atoms"
        )
    if not math.isfinite(detuning_field):
        raise ValidationError("detuning_field must be finite")

    bits = basis_bits(n)
    z = 1 - 2 * bits
    diagonal = 0.5 * geometry.detuning_scale * (z @ features)
    diagonal = diagonal + 0.5 * detuning_field * z.sum(axis=1)
    for mu in range(n):
        for nu in range(mu + 1, n):
            pair = bits[:, mu] * bits[:, nu]
            diagonal = diagonal + geometry.interaction(mu, nu) * pair

    dim = 2**n
    basis = np.arange(dim)
    flips = [basis ^ (1 << (n - 1 - mu)) for mu in range(n)]
    rows = np.concatenate([basis] * (n + 1))
    cols = np.concatenate([basis] + flips)
    data = np.concatenate(
        [diagonal.astype(np.complex128)]
        + [np.full(dim, 0.5 * geometry.rabi_frequency, dtype=np.complex128)] * n
    )
    matrix = sp.csr_matrix((data, (rows, cols)), shape=(dim, dim))
    return HermitianMatrix(matrix)


def energy(state: StateVector, hamiltonian: HermitianMatrix) -> float:
    """<psi|H|psi>"""
    _check_dimensions(state, hamiltonian)
    psi = state.amplitudes
    return float(np.vdot(psi, hamiltonian.matrix @ psi).real)


def dense_propagator(
    hamiltonian: HermitianMatrix, t: float
) -> npt.NDArray[np.complex128]:
    """exp(-iHt) as a dense matrix from the Hermitian eigendecomposition"""
    eigenvalues, eigenvectors = scipy.linalg.eigh(hamiltonian.to_dense())
    phases = np.exp(-1j * eigenvalues * t)
    return (eigenvectors * phases[None, :]) @ eigenvectors.conj().T


def evolve(
    state: StateVector,
    hamiltonian: HermitianMatrix,
    t: float,
    backend: PropagationBackend = PropagationBackend.AUTO,
    krylov_max_subspace: int = DEFAULT_KRYLOV_MAX_SUBSPACE,
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD,
    krylov_tol: float = DEFAULT_KRYLOV_TOL,
) -> StateVector:
    """
    Return exp(-iHt)|psi>.

    Parameters
    ----------
    state : StateVector
        The initial state
    hamiltonian : HermitianMatrix
        H in rad/us, dimension matching the state
    t : float
        Evolution time in us, t >= 0
    backend : PropagationBackend
        DENSE_EIGEN, KRYLOV, or AUTO (dense up to ``dense_threshold``)
    krylov_max_subspace : int
        Largest Lanczos subspace tried per time step
    dense_threshold : int
        Dimension up to which a failing Krylov step falls back to dense

    Raises
    ------
    DimensionMismatchError
        The Hamiltonian does not act on the state's register
    PropagationError
        Krylov did not converge above ``dense_threshold``
    """
    _check_dimensions(state, hamiltonian)
    if not (math.isfinite(t) and t >= 0.0):
        raise ValidationError(f"Evolution time must be finite and >= 0, got {t}")
    if t == 0.0:
        return state

    if backend is PropagationBackend.AUTO:
        backend = (
            PropagationBackend.DENSE_EIGEN
            if state.dimension <= dense_threshold
            else PropagationBackend.KRYLOV
        )

    if backend is PropagationBackend.DENSE_EIGEN:
        evolved = dense_propagator(hamiltonian, t) @ state.amplitudes
        return StateVector(state.n_qubits, evolved)

    try:
        evolved = krylov_expm_multiply(
            hamiltonian, state.amplitudes, t, krylov_max_subspace, krylov_tol
        )
    except PropagationError as exc:
        if state.dimension > dense_threshold:
            raise
        logger.warning(f"{exc}; falling back to dense propagation")
        evolved = dense_propagator(hamiltonian, t) @ state.amplitudes
    return StateVector(state.n_qubits, evolved)


def krylov_expm_multiply(
    hamiltonian: HermitianMatrix,
    psi: npt.NDArray[np.complex128],
    t: float,
    max_subspace: int = DEFAULT_KRYLOV_MAX_SUBSPACE,
    tol: float = DEFAULT_KRYLOV_TOL,
) -> npt.NDArray[np.complex128]:
    """
    Propagate ``psi`` by exp(-iHt) with Lanczos steps.

    The interval is split so that ||H|| dt stays below a quarter of the
    subspace limit; within each step the subspace grows until the last
    Krylov coefficient of the propagated vector drops below ``tol``.
    """
    if max_subspace < 2:
        raise ValidationError("krylov max_subspace must be >= 2")
    max_subspace = min(max_subspace, hamiltonian.dimension)
    scale = hamiltonian.norm_1() * t
    n_steps = max(1, math.ceil(scale / max(max_subspace / 4.0, 1.0)))
    dt = t / n_steps

    vector = np.asarray(psi, dtype=np.complex128)
    for step in range(n_steps):
        vector = _lanczos_step(hamiltonian.matrix, vector, dt, max_subspace, tol, step)
    return vector


def _lanczos_step(
    matrix: sp.csr_matrix,
    psi: npt.NDArray[np.complex128],
    dt: float,
    max_subspace: int,
    tol: float,
    step: int,
) -> npt.NDArray[np.complex128]:
    norm = float(np.linalg.norm(psi))
    if norm == 0.0:
        return psi.copy()

    dim = psi.shape[0]
    basis = np.zeros((max_subspace, dim), dtype=np.complex128)
    basis[0] = psi / norm
    alphas: List[float] = []
    betas: List[float] = []
    coefficients: Optional[npt.NDArray[np.complex128]] = None

    for j in range(max_subspace):
        w = matrix @ basis[j]
        alpha = float(np.vdot(basis[j], w).real)
        w = w - alpha * basis[j]
        if j > 0:
            w = w - betas[-1] * basis[j - 1]
        # Full reorthogonalisation against the whole basis, applied twice
        for _ in range(2):
            w = w - basis[: j + 1].T @ (basis[: j + 1].conj() @ w)
        alphas.append(alpha)
        beta = float(np.linalg.norm(w))

        coefficients = _tridiagonal_expm_e1(alphas, betas, dt)
        invariant = beta <= 1e-14 * max(1.0, abs(alpha))
        if invariant or (j > 0 and abs(coefficients[-1]) < tol):
            return norm * (basis[: j + 1].T @ coefficients)
        if j + 1 < max_subspace:
            betas.append(beta)
            basis[j + 1] = w / beta

    last = abs(coefficients[-1]) if coefficients is not None else float("nan")
    raise PropagationError(
        f"Krylov propagation did not converge in step {step} with subspace "
        f"{max_subspace} (last coefficient {last:.3e} > {tol:.1e})"
    )


def _tridiagonal_expm_e1(
    alphas: List[float], betas: List[float], dt: float
) -> npt.NDArray[np.complex128]:
    """exp(-i T dt) e_1 for the Lanczos tridiagonal T"""
    if len(alphas) == 1:
        return np.array([np.exp(-1j * alphas[0] * dt)])
    eigenvalues, vectors = scipy.linalg.eigh_tridiagonal(
        np.asarray(alphas), np.asarray(betas[: len(alphas) - 1])
    )
    return vectors @ (np.exp(-1j * eigenvalues * dt) * vectors[0, :])


def _check_dimensions(state: StateVector, hamiltonian: HermitianMatrix) -> None:
    if hamiltonian.dimension != state.dimension:
        raise DimensionMismatchError(
            f"Hamiltonian dimension {hamiltonian.dimension} does not match "
            f"state dimension {state.dimension}"
        )
