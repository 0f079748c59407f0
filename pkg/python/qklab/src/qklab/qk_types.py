"""
Container classes for the qklab value types
"""
import enum
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp

from qklab.api_utils import (
    DimensionMismatchError,
    ValidationError,
    as_real_vector,
)

PathOrStr = Union[os.PathLike, str]

#: A preprocessed feature vector, d finite reals (each in [0, 1] after min-max)
FeatureVector = npt.NDArray[np.float64]

NORM_ATOL = 1e-10


def _frozen_array(values: npt.ArrayLike, dtype) -> npt.NDArray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


class FeatureMapKind(enum.Enum):
    """The quantum data-encoding circuits"""

    DIGITAL = "digital"
    ANALOG = "analog"
    HYBRID = "hybrid"


class KernelKind(enum.Enum):
    """Kernel kinds, valued by their QKGM kind tag"""

    RBF = 0
    DIGITAL = 1
    ANALOG = 2
    HYBRID = 3

    @property
    def label(self) -> str:
        """Return the kind name as a lower string"""
        return self.name.lower()

    @property
    def map_kind(self) -> Optional[FeatureMapKind]:
        """The feature map backing this kernel, None for the classical RBF"""
        if self is KernelKind.RBF:
            return None
        return FeatureMapKind(self.label)

    @classmethod
    def from_label(cls, label: str) -> "KernelKind":
        """Parse a lower-case kernel name"""
        try:
            return cls[label.strip().upper()]
        except KeyError:
            known = ", ".join(kind.label for kind in cls)
            raise ValidationError(f"Unknown kernel kind '{label}'. Known: {known}")


class PropagationBackend(enum.Enum):
    """Time-propagation backends"""

    AUTO = "auto"
    DENSE_EIGEN = "dense-eigen"
    KRYLOV = "krylov"


@dataclass(frozen=True)
class StateVector:
    """
    A pure state of an ordered qubit register.

    Qubit 1 is the most significant position of the basis index.

    Parameters
    ----------
    n_qubits : int
        Number of qubits in the register
    amplitudes : numpy.ndarray[complex128]
        The 2**n_qubits probability amplitudes
    """

    #: Number of qubits in the register
    n_qubits: int
    #: Read-only array of 2**n_qubits complex amplitudes
    amplitudes: npt.NDArray[np.complex128] = field(compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.n_qubits < 1:
            raise ValidationError(f"n_qubits must be positive, got {self.n_qubits}")
        amplitudes = _frozen_array(self.amplitudes, np.complex128).reshape(-1)
        if amplitudes.shape[0] != 2**self.n_qubits:
            raise DimensionMismatchError(
                f"Expected {2**self.n_qubits} amplitudes for {self.n_qubits} qubits, "
                f"got {amplitudes.shape[0]}"
            )
        object.__setattr__(self, "amplitudes", amplitudes)

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        """Return the register initialised to |0...0>"""
        return cls.basis(n_qubits, 0)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "StateVector":
        """Return the computational basis state with integer label ``index``"""
        amplitudes = np.zeros(2**n_qubits, dtype=np.complex128)
        amplitudes[index] = 1.0
        return cls(n_qubits, amplitudes)

    @classmethod
    def from_bits(cls, bits: str) -> "StateVector":
        """Return the basis state for a bit string such as '10' (qubit 1 first)"""
        return cls.basis(len(bits), int(bits, 2))

    @property
    def dimension(self) -> int:
        """Hilbert space dimension"""
        return self.amplitudes.shape[0]

    def norm(self) -> float:
        """The 2-norm of the amplitudes"""
        return float(np.linalg.norm(self.amplitudes))

    def is_normalized(self, atol: float = NORM_ATOL) -> bool:
        """Squared norm equals one within ``atol``"""
        return abs(float(np.vdot(self.amplitudes, self.amplitudes).real) - 1.0) <= atol


@dataclass(frozen=True)
class RydbergGeometry:
    """
    A one-dimensional chain of Rydberg atoms and its drive.

    Units: positions in um, frequencies in rad/us, c6 in rad um^6/us and the
    evolution time in us.

    Parameters
    ----------
    positions : tuple[float]
        Strictly increasing atom positions along the chain axis
    rabi_frequency : float
        The Rabi frequency Omega
    detuning_scale : float
        The detuning scale Delta multiplying each feature component
    c6 : float
        The van der Waals coefficient
    evolution_time : float
        Duration of the analog evolution
    """

    positions: Tuple[float, ...]
    rabi_frequency: float = 8.0 * math.pi
    detuning_scale: float = 4.0 * math.pi
    c6: float = 5.42e6
    evolution_time: float = 0.25

    def __post_init__(self) -> None:
        positions = tuple(float(r) for r in self.positions)
        object.__setattr__(self, "positions", positions)
        if len(positions) < 1:
            raise ValidationError("A Rydberg chain needs at least one atom")
        if not all(math.isfinite(r) for r in positions):
            raise ValidationError("Atom positions must be finite")
        if any(b - a <= 0.0 for a, b in zip(positions, positions[1:])):
            raise ValidationError(
                f"Atom positions must be strictly increasing (coincident or "
                f"reordered atoms): {positions}"
            )
        if not self.rabi_frequency > 0:
            raise ValidationError("rabi_frequency must be positive")
        if not self.c6 > 0:
            raise ValidationError("c6 must be positive")
        if not self.evolution_time > 0:
            raise ValidationError("evolution_time must be positive")

    @classmethod
    def chain(
        cls,
        n_atoms: int,
        a_over_rb: float = 1.05,
        rabi_frequency: float = 8.0 * math.pi,
        delta_over_rabi: float = 0.5,
        c6: float = 5.42e6,
        evolution_time: float = 0.25,
    ) -> "RydbergGeometry":
        """
        Create an evenly spaced chain with spacing ``a_over_rb`` blockade radii
        """
        if n_atoms < 1:
            raise ValidationError(f"n_atoms must be positive, got {n_atoms}")
        if not a_over_rb > 0:
            raise ValidationError(f"a_over_rb must be positive, got {a_over_rb}")
        if not rabi_frequency > 0 or not c6 > 0:
            raise ValidationError("rabi_frequency and c6 must be positive")
        spacing = a_over_rb * (c6 / rabi_frequency) ** (1.0 / 6.0)
        return cls(
            positions=tuple(spacing * mu for mu in range(n_atoms)),
            rabi_frequency=rabi_frequency,
            detuning_scale=delta_over_rabi * rabi_frequency,
            c6=c6,
            evolution_time=evolution_time,
        )

    @property
    def n_atoms(self) -> int:
        """Number of atoms in the chain"""
        return len(self.positions)

    def blockade_radius(self) -> float:
        """Distance at which the van der Waals interaction equals the Rabi frequency"""
        return (self.c6 / self.rabi_frequency) ** (1.0 / 6.0)

    def interaction(self, mu: int, nu: int) -> float:
        """The interaction coefficient c6/|r_mu - r_nu|^6 of 0-indexed atoms"""
        distance = abs(self.positions[mu] - self.positions[nu])
        if distance == 0.0:
            raise ValidationError(f"Atoms {mu} and {nu} coincide")
        return self.c6 / distance**6


@dataclass(frozen=True)
class HermitianMatrix:
    """A Hermitian operator held as a sparse CSR matrix (rad/us for Hamiltonians)"""

    matrix: sp.csr_matrix = field(compare=False, repr=False)

    def __post_init__(self) -> None:
        matrix = sp.csr_matrix(self.matrix, dtype=np.complex128)
        if matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError(f"Operator is not square: {matrix.shape}")
        object.__setattr__(self, "matrix", matrix)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def to_dense(self) -> npt.NDArray[np.complex128]:
        return self.matrix.toarray()

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        """Entries equal the conjugate transpose within ``atol``"""
        difference = self.matrix - self.matrix.getH()
        if difference.nnz == 0:
            return True
        return float(np.max(np.abs(difference.data))) <= atol

    def norm_1(self) -> float:
        """Maximum absolute column sum, an upper bound on the spectral radius"""
        return float(np.max(np.asarray(abs(self.matrix).sum(axis=0))))


@dataclass(frozen=True)
class NoiseSpec:
    """
    Operational noise model of the feature maps.

    Parameters
    ----------
    sigma_detuning : float
        Std. dev. of the global detuning shift (rad/us)
    sigma_rabi_rel : float
        Relative std. dev. of the Rabi frequency scale
    sigma_position : float
        Std. dev. of each atom's displacement along the chain (um)
    sigma_cnot_theta : float
        Std. dev. of the CNOT exponent theta around pi/4 (radians)
    ensemble_size : int
        Number of noise realisations M per feature vector
    """

    sigma_detuning: float = 0.1
    sigma_rabi_rel: float = 0.01
    sigma_position: float = 0.1
    sigma_cnot_theta: float = 0.035
    ensemble_size: int = 64

    def __post_init__(self) -> None:
        for name in self.sigma_names():
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValidationError(f"{name} must be finite and >= 0, got {value}")
        if self.ensemble_size < 1:
            raise ValidationError(
                f"ensemble_size must be >= 1, got {self.ensemble_size}"
            )

    @staticmethod
    def sigma_names() -> Tuple[str, ...]:
        return (
            "sigma_detuning",
            "sigma_rabi_rel",
            "sigma_position",
            "sigma_cnot_theta",
        )

    @classmethod
    def ideal(cls, ensemble_size: int = 1) -> "NoiseSpec":
        """A spec with every sigma set to zero"""
        return cls(0.0, 0.0, 0.0, 0.0, ensemble_size)

    @property
    def is_ideal(self) -> bool:
        return all(getattr(self, name) == 0.0 for name in self.sigma_names())

    def scaled(self, factor: float) -> "NoiseSpec":
        """Return a copy with every sigma multiplied by ``factor``"""
        return NoiseSpec(
            *(getattr(self, name) * factor for name in self.sigma_names()),
            ensemble_size=self.ensemble_size,
        )


@dataclass(frozen=True)
class NoiseDraw:
    """One realisation of the noisy circuit parameters"""

    #: Global detuning shift shared by all atoms (rad/us)
    detuning_shift: float
    #: Global multiplicative Rabi frequency scale
    rabi_scale: float
    #: Independent per-atom displacement along the chain (um)
    position_shifts: Tuple[float, ...]
    #: Independent per-gate CNOT exponents, in encoding order
    cnot_thetas: Tuple[float, ...]

    @classmethod
    def ideal(cls, n_atoms: int, n_cnots: int) -> "NoiseDraw":
        return cls(0.0, 1.0, (0.0,) * n_atoms, (math.pi / 4,) * n_cnots)


@dataclass(frozen=True)
class NoiseEnsemble:
    """
    The M encoded states of one feature vector under sampled noise draws.
    Their uniform mixture represents the noisy encoded state.
    """

    feature_id: int
    #: Read-only (M, 2**n) array, one normalised state per row
    states: npt.NDArray[np.complex128] = field(compare=False, repr=False)
    spec: NoiseSpec
    seed: int

    def __post_init__(self) -> None:
        states = _frozen_array(self.states, np.complex128)
        if states.ndim != 2 or states.shape[0] < 1:
            raise ValidationError("An ensemble needs a 2D array with M >= 1 rows")
        object.__setattr__(self, "states", states)

    @property
    def size(self) -> int:
        return self.states.shape[0]

    @property
    def dimension(self) -> int:
        return self.states.shape[1]

    def members(self) -> List[StateVector]:
        n_qubits = int(round(math.log2(self.dimension)))
        return [StateVector(n_qubits, row) for row in self.states]


@dataclass(frozen=True)
class GramMatrix:
    """
    Pairwise kernel values with provenance.

    ``rows`` and ``cols`` are sample ids; ``values`` is row-major.
    """

    rows: Tuple[int, ...]
    cols: Tuple[int, ...]
    values: npt.NDArray[np.float64] = field(compare=False, repr=False)
    kind: KernelKind
    noisy: bool
    config_digest: bytes

    def __post_init__(self) -> None:
        values = _frozen_array(self.values, np.float64)
        object.__setattr__(self, "rows", tuple(int(r) for r in self.rows))
        object.__setattr__(self, "cols", tuple(int(c) for c in self.cols))
        if values.shape != (len(self.rows), len(self.cols)):
            raise DimensionMismatchError(
                f"Gram values shape {values.shape} does not match "
                f"{len(self.rows)} rows x {len(self.cols)} cols"
            )
        if len(self.config_digest) != 32:
            raise ValidationError("config_digest must be 32 bytes")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape  # type: ignore

    @property
    def is_square(self) -> bool:
        return self.rows == self.cols

    @property
    def kind_tag(self) -> int:
        """The QKGM kind tag byte: kernel kind in the low nibble, bit 4 for noise"""
        return self.kind.value | (0x10 if self.noisy else 0)

    @property
    def digest_hex(self) -> str:
        return self.config_digest.hex()

    def submatrix(
        self, row_index: Sequence[int], col_index: Sequence[int]
    ) -> "GramMatrix":
        """Select rows and columns by position (not by sample id)"""
        row_index = list(row_index)
        col_index = list(col_index)
        return GramMatrix(
            rows=tuple(self.rows[i] for i in row_index),
            cols=tuple(self.cols[j] for j in col_index),
            values=self.values[np.ix_(row_index, col_index)],
            kind=self.kind,
            noisy=self.noisy,
            config_digest=self.config_digest,
        )


@dataclass(frozen=True)
class SvrModel:
    """
    A trained epsilon-SVR in its dual representation.

    Parameters
    ----------
    beta : numpy.ndarray[float64]
        Dual coefficients alpha_j - alpha_j^*
    bias : float
        The offset b of the decision function
    support_indices : tuple[int]
        Positions j with beta_j != 0
    C : float
        Box constraint
    epsilon : float
        Width of the insensitive tube
    kernel_digest : bytes
        Digest binding the model to its training Gram matrix
    """

    beta: npt.NDArray[np.float64] = field(compare=False, repr=False)
    bias: float
    support_indices: Tuple[int, ...]
    C: float
    epsilon: float
    kernel_digest: bytes
    #: Diagonal shift lambda added to an indefinite training Gram
    diagonal_shift: float = 0.0
    #: Maximal KKT violation when the solver stopped
    kkt_violation: float = 0.0
    #: False when max_iter was reached before tol
    converged: bool = True
    #: Number of pair updates performed
    n_iter: int = 0
    #: Labels were trained as (y - label_offset) / label_scale
    label_offset: float = 0.0
    label_scale: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta", _frozen_array(self.beta, np.float64))
        object.__setattr__(
            self, "support_indices", tuple(int(i) for i in self.support_indices)
        )

    @property
    def n_train(self) -> int:
        return self.beta.shape[0]


@dataclass(frozen=True)
class EnvParams:
    """
    Biased spin-boson environment with a super-Ohmic spectral density
    J(w) = eta w^s w_c^(1-s) exp(-w/w_c).

    Temperature is dimensionless, k_B T / (hbar w_c); times are in 1/w_c.
    """

    #: Ohmicity, s > 1
    s: float
    #: Temperature k_B T / (hbar w_c), >= 0
    T: float
    #: Coupling strength
    eta: float = 1.0
    #: Cut-off frequency
    omega_c: float = 1.0
    #: Relative phase of the two couplings, g_down = g_up exp(i varphi)
    varphi: float = math.pi / 2

    def __post_init__(self) -> None:
        if not self.s > 1.0:
            raise ValidationError(f"Ohmicity must exceed 1 (super-Ohmic), got {self.s}")
        if not self.T >= 0.0:
            raise ValidationError(f"Temperature must be >= 0, got {self.T}")
        if not (self.eta > 0.0 and self.omega_c > 0.0):
            raise ValidationError("eta and omega_c must be positive")
        if not math.isfinite(self.varphi):
            raise ValidationError("varphi must be finite")


@dataclass(frozen=True)
class DephasingTrace:
    """Complex dephasing factor sampled at increasing times"""

    times: npt.NDArray[np.float64] = field(compare=False)
    phi_values: npt.NDArray[np.complex128] = field(compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "times", _frozen_array(self.times, np.float64))
        object.__setattr__(
            self, "phi_values", _frozen_array(self.phi_values, np.complex128)
        )
        if self.times.shape != self.phi_values.shape:
            raise DimensionMismatchError("times and phi_values differ in length")

    @property
    def trace_distance(self) -> npt.NDArray[np.float64]:
        """|phi(t)|, the trace distance of the optimal initial pair"""
        return np.abs(self.phi_values)


@dataclass(frozen=True)
class NMSample:
    """One non-Markovianity sample: sparse dephasing data and its BLP label"""

    params: EnvParams
    #: Re phi(t_1), Im phi(t_1), ..., Re phi(t_10), Im phi(t_10)
    features: Tuple[float, ...]
    label: float

    def __post_init__(self) -> None:
        features = tuple(float(f) for f in self.features)
        object.__setattr__(self, "features", features)
        if len(features) != 20:
            raise ValidationError(f"Expected 20 features, got {len(features)}")
        if not self.label >= 0.0:
            raise ValidationError(f"BLP label must be >= 0, got {self.label}")


@dataclass(frozen=True)
class PcaModel:
    """Principal component projection"""

    mean: npt.NDArray[np.float64] = field(compare=False)
    #: k x d_in matrix of orthonormal rows, descending eigenvalue order
    components: npt.NDArray[np.float64] = field(compare=False)
    eigenvalues: npt.NDArray[np.float64] = field(compare=False)
    #: Trace of the sample covariance
    total_variance: float

    def __post_init__(self) -> None:
        for name in ("mean", "components", "eigenvalues"):
            object.__setattr__(
                self, name, _frozen_array(getattr(self, name), np.float64)
            )

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def explained_variance_ratio(self) -> npt.NDArray[np.float64]:
        if self.total_variance <= 0.0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / self.total_variance


@dataclass(frozen=True)
class MinMaxModel:
    """Component-wise min-max scaler"""

    minimum: npt.NDArray[np.float64] = field(compare=False)
    maximum: npt.NDArray[np.float64] = field(compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "minimum", _frozen_array(self.minimum, np.float64))
        object.__setattr__(self, "maximum", _frozen_array(self.maximum, np.float64))
        if np.any(self.maximum < self.minimum):
            raise ValidationError("MinMaxModel needs maximum >= minimum")

    @property
    def constant_components(self) -> npt.NDArray[np.bool_]:
        """Components whose fitting range is zero, mapped to 0"""
        return self.maximum == self.minimum


SPLIT_TRAIN = "train"
SPLIT_TEST = "test"


@dataclass(frozen=True)
class LabeledDataset:
    """
    Features, labels and split tags of a regression task.

    ``params`` optionally carries the (s, T) generating parameters of a
    non-Markovianity dataset.
    """

    features: npt.NDArray[np.float64] = field(compare=False)
    labels: npt.NDArray[np.float64] = field(compare=False)
    splits: Tuple[str, ...]
    params: Optional[npt.NDArray[np.float64]] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        features = _frozen_array(self.features, np.float64)
        if features.ndim != 2:
            raise ValidationError("features must be an N x d matrix")
        labels = _frozen_array(as_real_vector(self.labels, "labels"), np.float64)
        if not np.all(np.isfinite(features)):
            raise ValidationError("features contain non-finite entries")
        if labels.shape[0] != features.shape[0] or len(self.splits) != labels.shape[0]:
            raise DimensionMismatchError(
                "features, labels and splits must have the same length"
            )
        unknown = set(self.splits) - {SPLIT_TRAIN, SPLIT_TEST}
        if unknown:
            raise ValidationError(f"Unknown split tags: {sorted(unknown)}")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "splits", tuple(self.splits))
        if self.params is not None:
            object.__setattr__(self, "params", _frozen_array(self.params, np.float64))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def split_index(self, split: str) -> npt.NDArray[np.int64]:
        return np.array(
            [i for i, tag in enumerate(self.splits) if tag == split], dtype=np.int64
        )

    def subset(self, split: str) -> Tuple[np.ndarray, np.ndarray]:
        """Return (features, labels) of one split"""
        index = self.split_index(split)
        if index.size == 0:
            return (
                np.empty((0, self.dimension), dtype=np.float64),
                np.empty(0, dtype=np.float64),
            )
        return self.features[index], self.labels[index]
