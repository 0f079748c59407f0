"""
Pure dephasing of a biased spin-boson qubit in a super-Ohmic bath, the BLP
non-Markovianity measure and the non-Markovianity dataset
"""

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy import integrate
from scipy.special import gammaincc
from tqdm.auto import tqdm

from qklab.api_utils import (
    QuadratureError,
    RefinementError,
    ValidationError,
    as_real_vector,
)
from qklab.qk_types import (
    SPLIT_TEST,
    SPLIT_TRAIN,
    DephasingTrace,
    EnvParams,
    LabeledDataset,
    NMSample,
)
from qklab.special import digamma, gamma_fn, hurwitz_zeta
from qklab.tools.utils import DEFAULT_THREADS, PBAR_DEFAULTS, logged

logger = logging.getLogger("qklab")

Times = Union[float, Sequence[float], npt.NDArray[np.float64]]

#: |s - 2| below which the zeta combination is replaced by its digamma limit
DIGAMMA_WINDOW = 1e-4

DEFAULT_T_MAX = 20.0
DEFAULT_N_GRID = 4000
DEFAULT_MAX_GRID = 64000
DEFAULT_BLP_TOL = 1e-4

DEFAULT_T_STEP = 0.5
N_SAMPLE_TIMES = 10

S_RANGE = (1.1, 6.5)
T_RANGE = (0.5, 4.5)

_QUAD_TAIL_MASS = 1e-12


def default_sample_times(
    t_step: float = DEFAULT_T_STEP, omega_c: float = 1.0
) -> npt.NDArray[np.float64]:
    """t_j = j * t_step / omega_c for j = 1..10"""
    return np.arange(1, N_SAMPLE_TIMES + 1) * (t_step / omega_c)


def _times_array(t: Times) -> Tuple[npt.NDArray[np.float64], bool]:
    times = np.asarray(t, dtype=np.float64)
    scalar = times.ndim == 0
    times = np.atleast_1d(times)
    if not np.all(np.isfinite(times)) or np.any(times < 0.0):
        raise ValidationError("times must be finite and >= 0")
    return times, scalar


def _unwrap(values: np.ndarray, scalar: bool):
    return values.item() if scalar else values


def _vacuum_bracket(p: EnvParams, times: np.ndarray) -> np.ndarray:
    """2 - ((1 + i w_c t)^(s-1) + (1 - i w_c t)^(s-1)) / (1 + w_c^2 t^2)^(s-1)"""
    x = p.omega_c * times
    # (1 + ix)^(s-1) / (1 + x^2)^(s-1) = (1 - ix)^(1-s), the pair is twice its real part
    return 2.0 - 2.0 * np.power(1.0 - 1j * x, 1.0 - p.s).real


def vartheta_t(p: EnvParams, t: Times):
    """
    Phase exponent theta(t) = eta sin(varphi) Gamma(s-1) [2 - ...] of the
    dephasing factor. Accepts a scalar time or an array of times.
    """
    times, scalar = _times_array(t)
    scale = p.eta * math.sin(p.varphi) * gamma_fn(p.s - 1.0)
    values = scale * _vacuum_bracket(p, times)
    return _unwrap(values, scalar)


def _thermal_combination(p: EnvParams, times: np.ndarray) -> np.ndarray:
    """2 zeta(s-1, a) - zeta(s-1, a(1 + i w_c t)) - zeta(s-1, a(1 - i w_c t))"""
    a = p.T
    q = a * (1.0 + 1j * p.omega_c * times)
    if abs(p.s - 2.0) < DIGAMMA_WINDOW:
        # The poles at s = 2 cancel in the combination, leaving the digamma limit
        return 2.0 * np.asarray(digamma(q)).real - 2.0 * digamma(a).real
    # zeta(s, conj(q)) = conj(zeta(s, q)) for real s
    return 2.0 * hurwitz_zeta(p.s - 1.0, a).real - 2.0 * np.asarray(
        hurwitz_zeta(p.s - 1.0, q)
    ).real


def bigPhi_t(p: EnvParams, t: Times):
    """
    Decay exponent Phi(t) >= 0 of the dephasing factor.

    Uses the Hurwitz zeta closed form for T > 0 (digamma limit near s = 2)
    and the quadrature path at T = 0.
    """
    times, scalar = _times_array(t)
    one_minus_cos = 1.0 - math.cos(p.varphi)
    if one_minus_cos == 0.0:
        return _unwrap(np.zeros_like(times), scalar)

    if p.T == 0.0:
        values = np.array([_phi_integral(p, float(time)) for time in times])
    else:
        prefactor = p.eta * one_minus_cos * gamma_fn(p.s - 1.0)
        values = -prefactor * _vacuum_bracket(p, times) + 2.0 * prefactor * (
            p.T ** (p.s - 1.0)
        ) * _thermal_combination(p, times)

    # Round-off can leave values a hair below zero at small t
    values = np.where((values < 0.0) & (values > -1e-10), 0.0, values)
    return _unwrap(values, scalar)


def dephasing_factor(p: EnvParams, t: Times):
    """phi(t) = exp(-i theta(t) - Phi(t)); scalar or array in time"""
    times, scalar = _times_array(t)
    theta = np.atleast_1d(vartheta_t(p, times))
    phi = np.atleast_1d(bigPhi_t(p, times))
    return _unwrap(np.exp(-1j * theta - phi), scalar)


def _spectral_weight(p: EnvParams, omega: float) -> float:
    """J(omega) / omega^2"""
    return (
        p.eta
        * omega ** (p.s - 2.0)
        * p.omega_c ** (1.0 - p.s)
        * math.exp(-omega / p.omega_c)
    )


def _thermal_weight(p: EnvParams, omega: float) -> float:
    if p.T == 0.0:
        return 1.0
    return 1.0 / math.tanh(omega / (2.0 * p.T * p.omega_c))


def _cutoff_frequency(p: EnvParams, thermal: bool) -> float:
    """Frequency beyond which the integrand carries less than the tail mass"""
    scale = 2.0 * p.eta * gamma_fn(p.s - 1.0)
    u = 10.0
    while True:
        bound = scale * gammaincc(p.s - 1.0, u)
        if thermal and p.T > 0.0:
            bound *= 1.0 / math.tanh(u / (2.0 * p.T))
        if bound < _QUAD_TAIL_MASS:
            return u * p.omega_c
        u *= 1.5


def _quad(integrand, upper: float, what: str) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, _ = integrate.quad(
                integrand, 0.0, upper, limit=2000, epsabs=1e-14, epsrel=1e-11
            )
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"Quadrature of {what} did not converge: {exc}")
    return value


def _theta_integral(p: EnvParams, t: float) -> float:
    if t == 0.0 or math.sin(p.varphi) == 0.0:
        return 0.0
    upper = _cutoff_frequency(p, thermal=False)

    def integrand(omega: float) -> float:
        return _spectral_weight(p, omega) * 2.0 * math.sin(0.5 * omega * t) ** 2

    return 2.0 * math.sin(p.varphi) * _quad(integrand, upper, "theta(t)")


def _phi_integral(p: EnvParams, t: float) -> float:
    if t == 0.0 or math.cos(p.varphi) == 1.0:
        return 0.0
    upper = _cutoff_frequency(p, thermal=True)

    def integrand(omega: float) -> float:
        return (
            _spectral_weight(p, omega)
            * _thermal_weight(p, omega)
            * 2.0
            * math.sin(0.5 * omega * t) ** 2
        )

    return 2.0 * (1.0 - math.cos(p.varphi)) * _quad(integrand, upper, "Phi(t)")


def dephasing_factor_quad(p: EnvParams, t: float) -> complex:
    """
    The dephasing factor from adaptive quadrature of the spectral integrals

        theta(t) = 2 sin(varphi) int J(w)/w^2 (1 - cos wt) dw
        Phi(t) = 2 (1 - cos(varphi)) int J(w)/w^2 coth(w / 2 T w_c) (1 - cos wt) dw

    truncated where the exponential tail carries less than 1e-12.

    Raises
    ------
    QuadratureError
        The adaptive quadrature did not reach its tolerance
    """
    if not (math.isfinite(t) and t >= 0.0):
        raise ValidationError(f"t must be finite and >= 0, got {t}")
    theta = _theta_integral(p, t)
    phi = _phi_integral(p, t)
    return complex(np.exp(-1j * theta - phi))


def dephasing_trace(p: EnvParams, times: Times) -> DephasingTrace:
    """Sample phi(t) at strictly increasing ``times``"""
    grid, _ = _times_array(times)
    if np.any(np.diff(grid) <= 0.0):
        raise ValidationError("times must be strictly increasing")
    return DephasingTrace(grid, np.atleast_1d(dephasing_factor(p, grid)))


def trace_distance_trace(p: EnvParams, times: Times) -> npt.NDArray[np.float64]:
    """|phi(t)| at ``times``, the trace distance of the optimal initial pair"""
    return dephasing_trace(p, times).trace_distance


@dataclass(frozen=True)
class BlpResult:
    """A converged (or capped) BLP measure"""

    value: float
    #: Change of the measure under the last grid doubling
    achieved: float
    n_grid: int
    converged: bool


def _blp_on_grid(p: EnvParams, t_max: float, n_grid: int) -> float:
    times = np.linspace(0.0, t_max, n_grid + 1)
    modulus = np.exp(-np.atleast_1d(bigPhi_t(p, times)))
    return float(np.maximum(np.diff(modulus), 0.0).sum())


@logged(log_args=True, log_time=True)
def blp_refine(
    p: EnvParams,
    t_max: float = DEFAULT_T_MAX,
    n_grid: int = DEFAULT_N_GRID,
    tol: float = DEFAULT_BLP_TOL,
    max_grid: int = DEFAULT_MAX_GRID,
) -> BlpResult:
    """
    Sum the positive increments of |phi(t)| on a uniform grid over
    [0, t_max], doubling the grid until the sum changes by less than ``tol``
    or the grid exceeds ``max_grid`` intervals.
    """
    if not (math.isfinite(t_max) and t_max > 0.0):
        raise ValidationError(f"t_max must be positive, got {t_max}")
    if n_grid < 2:
        raise ValidationError(f"n_grid must be >= 2, got {n_grid}")

    value = _blp_on_grid(p, t_max, n_grid)
    while True:
        n_grid *= 2
        refined = _blp_on_grid(p, t_max, n_grid)
        achieved, value = abs(refined - value), refined
        if achieved < tol:
            return BlpResult(value, achieved, n_grid, True)
        if n_grid >= max_grid:
            return BlpResult(value, achieved, n_grid, False)


def blp_measure(
    p: EnvParams,
    t_max: float = DEFAULT_T_MAX,
    n_grid: int = DEFAULT_N_GRID,
    tol: float = DEFAULT_BLP_TOL,
    max_grid: int = DEFAULT_MAX_GRID,
    strict: bool = True,
) -> float:
    """
    BLP non-Markovianity: the summed revivals of the optimal-pair trace
    distance |phi(t)| over [0, t_max].

    Raises
    ------
    RefinementError
        ``strict`` and the grid cap was reached before the measure converged.
        Otherwise a warning is logged and the last value is returned.
    """
    result = blp_refine(p, t_max, n_grid, tol, max_grid)
    if not result.converged:
        message = (
            f"BLP measure for s={p.s}, T={p.T} not converged at {result.n_grid} "
            f"intervals (change {result.achieved:.2e} >= {tol:.1e})"
        )
        if strict:
            raise RefinementError(message, result.achieved)
        logger.warning(message)
    return result.value


def _check_density_matrix(rho: np.ndarray, name: str) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (2, 2):
        raise ValidationError(f"{name} must be 2x2, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
        raise ValidationError(f"{name} is not Hermitian")
    if abs(np.trace(rho) - 1.0) > 1e-10:
        raise ValidationError(f"{name} does not have unit trace")
    if np.linalg.eigvalsh(rho).min() < -1e-10:
        raise ValidationError(f"{name} is not positive semidefinite")
    return rho


def trace_distance_2x2(rho1: npt.ArrayLike, rho2: npt.ArrayLike) -> float:
    """Half the sum of absolute eigenvalues of rho1 - rho2"""
    first = _check_density_matrix(np.asarray(rho1), "rho1")
    second = _check_density_matrix(np.asarray(rho2), "rho2")
    eigenvalues = np.linalg.eigvalsh(first - second)
    return float(np.clip(0.5 * np.abs(eigenvalues).sum(), 0.0, 1.0))


def dephased_pair(phi: complex) -> Tuple[np.ndarray, np.ndarray]:
    """The |+> and |-> states after pure dephasing with factor ``phi``"""
    plus = 0.5 * np.array([[1.0, phi], [np.conj(phi), 1.0]], dtype=np.complex128)
    minus = 0.5 * np.array([[1.0, -phi], [-np.conj(phi), 1.0]], dtype=np.complex128)
    return plus, minus


def nm_features(p: EnvParams, times: Times) -> Tuple[float, ...]:
    """Re phi(t_1), Im phi(t_1), ..., Re phi(t_n), Im phi(t_n)"""
    values = dephasing_trace(p, times).phi_values
    return tuple(np.column_stack([values.real, values.imag]).reshape(-1))


@dataclass(frozen=True)
class NMDataset:
    """Non-Markovianity samples with their split tags and sampling times"""

    samples: Tuple[NMSample, ...]
    splits: Tuple[str, ...]
    times: npt.NDArray[np.float64] = field(compare=False)

    def to_labeled(self) -> LabeledDataset:
        """Raw 20-component features with the (s, T) parameters attached"""
        if not self.samples:
            return LabeledDataset(
                np.empty((0, 2 * N_SAMPLE_TIMES)),
                np.empty(0),
                (),
                params=np.empty((0, 2)),
            )
        return LabeledDataset(
            features=np.array([sample.features for sample in self.samples]),
            labels=np.array([sample.label for sample in self.samples]),
            splits=self.splits,
            params=np.array(
                [(sample.params.s, sample.params.T) for sample in self.samples]
            ),
        )


@logged(log_time=True)
def gen_nm_dataset(
    n_train: int = 400,
    n_test: int = 200,
    s_range: Tuple[float, float] = S_RANGE,
    T_range: Tuple[float, float] = T_RANGE,
    times: Optional[Sequence[float]] = None,
    seed: int = 0,
    eta: float = 1.0,
    omega_c: float = 1.0,
    varphi: float = math.pi / 2,
    t_max: float = DEFAULT_T_MAX,
    n_grid: int = DEFAULT_N_GRID,
    threads: int = DEFAULT_THREADS,
) -> NMDataset:
    """
    Generate the non-Markovianity regression task.

    (s, T) pairs are drawn uniformly from one seeded stream; each sample's
    features are the dephasing factor at the 10 sampling times and its label
    the converged BLP measure. The first ``n_train`` samples are tagged train.

    Parameters
    ----------
    n_train, n_test : int
        Split sizes
    s_range, T_range : tuple[float, float]
        Uniform sampling ranges of the ohmicity and temperature
    times : sequence of float, optional
        10 strictly increasing sampling times; defaults to 0.5, 1.0, ..., 5.0
    seed : int
        Seed of the parameter stream
    threads : int
        Worker threads computing labels

    Returns
    -------
    NMDataset
    """
    if n_train < 0 or n_test < 0 or n_train + n_test < 1:
        raise ValidationError("Need n_train, n_test >= 0 and at least one sample")
    for name, (low, high) in (("s_range", s_range), ("T_range", T_range)):
        if not low <= high:
            raise ValidationError(f"{name} must be (low, high), got {(low, high)}")
    if s_range[0] <= 1.0 or T_range[0] < 0.0:
        raise ValidationError("Need s > 1 and T >= 0 over the sampling ranges")

    sample_times = (
        default_sample_times(omega_c=omega_c)
        if times is None
        else as_real_vector(times, "times")
    )
    if sample_times.shape[0] != N_SAMPLE_TIMES or np.any(np.diff(sample_times) <= 0):
        raise ValidationError("times must be 10 strictly increasing values")

    n_total = n_train + n_test
    rng = np.random.default_rng(seed)
    s_values = rng.uniform(s_range[0], s_range[1], size=n_total)
    T_values = rng.uniform(T_range[0], T_range[1], size=n_total)
    params = [
        EnvParams(s=float(s), T=float(T), eta=eta, omega_c=omega_c, varphi=varphi)
        for s, T in zip(s_values, T_values)
    ]

    def make_sample(env: EnvParams) -> NMSample:
        return NMSample(
            params=env,
            features=nm_features(env, sample_times),
            label=blp_measure(env, t_max=t_max, n_grid=n_grid),
        )

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        samples = list(
            tqdm(
                executor.map(make_sample, params),
                total=n_total,
                desc="Non-Markovianity samples",
                unit="sample",
                leave=False,
                **PBAR_DEFAULTS,
            )
        )

    splits = (SPLIT_TRAIN,) * n_train + (SPLIT_TEST,) * n_test
    return NMDataset(tuple(samples), splits, sample_times)
