"""
Special functions for the spin-boson closed forms: Gamma, Hurwitz zeta, digamma
"""

import math
from typing import Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy.special import bernoulli, factorial

from qklab.api_utils import NumericalError, ValidationError

ComplexLike = Union[complex, float, npt.ArrayLike]

# Lanczos approximation with g = 7 and 9 coefficients
_LANCZOS_G = 7.0
_LANCZOS_COEFFICIENTS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

#: B_2, B_4, ..., B_14
_BERNOULLI_EVEN = tuple(float(b) for b in bernoulli(14)[2::2])

#: B_2k / (2k)! for k = 1..7
_EM_COEFFICIENTS = tuple(
    b / float(factorial(2 * k, exact=True))
    for k, b in enumerate(_BERNOULLI_EVEN, start=1)
)

EULER_GAMMA = 0.57721566490153286061

ZETA_REL_TOL = 1e-13
POLE_DISTANCE = 1e-4
_MAX_ZETA_TERMS = 1 << 20

_DIGAMMA_SHIFT = 20.0


def gamma_fn(x: float) -> float:
    """
    Gamma function by the Lanczos approximation.

    Parameters
    ----------
    x : float
        A positive argument

    Returns
    -------
    float
        Gamma(x), relative error below 1e-12 on (0.05, 10]

    Raises
    ------
    ValidationError
        ``x`` is not positive and finite
    """
    if not (math.isfinite(x) and x > 0.0):
        raise ValidationError(f"gamma_fn needs a positive finite argument, got {x}")
    return _lanczos_gamma(float(x))


def _lanczos_gamma(x: float) -> float:
    if x < 0.5:
        # Reflection formula
        return math.pi / (math.sin(math.pi * x) * _lanczos_gamma(1.0 - x))
    x -= 1.0
    series = _LANCZOS_COEFFICIENTS[0]
    for i, coefficient in enumerate(_LANCZOS_COEFFICIENTS[1:], start=1):
        series += coefficient / (x + i)
    t = x + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * math.exp((x + 0.5) * math.log(t) - t) * series


def _as_complex_array(q: ComplexLike, name: str) -> Tuple[np.ndarray, bool]:
    array = np.asarray(q, dtype=np.complex128)
    scalar = array.ndim == 0
    array = np.atleast_1d(array)
    if not np.all(np.isfinite(array)):
        raise ValidationError(f"{name} contains non-finite entries")
    if np.any(array.real <= 0.0):
        raise ValidationError(f"{name} must have a positive real part")
    return array, scalar


def _euler_maclaurin(
    s: float, q: np.ndarray, n_terms: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Return the Euler-Maclaurin value and the first omitted (B_14) term"""
    shifted = q[:, None] + np.arange(n_terms)[None, :]
    partial = np.power(shifted, -s).sum(axis=1)

    w = q + n_terms
    value = partial + np.power(w, 1.0 - s) / (s - 1.0) + 0.5 * np.power(w, -s)

    rising = s  # s (s + 1) ... (s + 2k - 2)
    omitted = np.zeros_like(value)
    for k, coefficient in enumerate(_EM_COEFFICIENTS, start=1):
        term = coefficient * rising * np.power(w, -s - 2 * k + 1)
        if k == len(_EM_COEFFICIENTS):
            omitted = term
        else:
            value = value + term
        rising *= (s + 2 * k - 1) * (s + 2 * k)
    return value, omitted


def hurwitz_zeta(s: float, q: ComplexLike) -> Union[complex, np.ndarray]:
    """
    Hurwitz zeta function sum_{n >= 0} (q + n)^(-s) for complex ``q``.

    Evaluated by Euler-Maclaurin summation with Bernoulli corrections through
    B_12; the number of explicit terms doubles until the B_14 correction is
    below 1e-13 of the result.

    Parameters
    ----------
    s : float
        Real order, s > 0 and |s - 1| > 1e-4
    q : complex or array_like
        Shift(s) with positive real part

    Returns
    -------
    complex or numpy.ndarray[complex128]
        Same shape as ``q``

    Raises
    ------
    ValidationError
        ``s`` is too close to the pole at 1, or Re(q) <= 0
    """
    if not (math.isfinite(s) and s > 0.0):
        raise ValidationError(f"hurwitz_zeta needs s > 0, got {s}")
    if abs(s - 1.0) <= POLE_DISTANCE:
        raise ValidationError(
            f"hurwitz_zeta order {s} is within {POLE_DISTANCE} of the pole at 1; "
            "use the digamma limit"
        )
    array, scalar = _as_complex_array(q, "hurwitz_zeta shift")

    n_terms = 16
    while True:
        value, omitted = _euler_maclaurin(s, array, n_terms)
        reference = np.maximum(np.abs(value), np.abs(np.power(array + n_terms, 1 - s)))
        if np.all(np.abs(omitted) <= ZETA_REL_TOL * reference):
            break
        n_terms *= 2
        if n_terms > _MAX_ZETA_TERMS:
            raise NumericalError(f"hurwitz_zeta({s}, q) failed to converge")

    return complex(value[0]) if scalar else value


def digamma(q: ComplexLike) -> Union[complex, np.ndarray]:
    """
    Digamma function psi(q) for complex ``q`` with positive real part.

    The argument is shifted up by the recurrence psi(q) = psi(q + 1) - 1/q
    until Re(q) >= 20, then the asymptotic series is summed through B_14.
    """
    array, scalar = _as_complex_array(q, "digamma argument")

    shifts = np.ceil(np.maximum(0.0, _DIGAMMA_SHIFT - array.real)).astype(np.int64)
    correction = np.zeros_like(array)
    w = array.copy()
    for _ in range(int(shifts.max(initial=0))):
        active = shifts > 0
        correction[active] -= 1.0 / w[active]
        w[active] += 1.0
        shifts[active] -= 1

    inverse_square = 1.0 / (w * w)
    series = np.zeros_like(w)
    power = np.ones_like(w)
    for k, b in enumerate(_BERNOULLI_EVEN, start=1):
        power = power * inverse_square
        series = series + b / (2 * k) * power
    value = np.log(w) - 0.5 / w - series + correction
    return complex(value[0]) if scalar else value
