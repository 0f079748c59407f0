"""
Tool running the fast numerical oracle checks of qklab
"""

import math
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from qklab.feature_maps import build_ensemble
from qklab.kernels import effective_rank
from qklab.qk_types import (
    EnvParams,
    FeatureMapKind,
    NoiseSpec,
    PropagationBackend,
    RydbergGeometry,
    StateVector,
)
from qklab.rydberg import build_rydberg_hamiltonian, evolve
from qklab.special import gamma_fn, hurwitz_zeta
from qklab.spinboson import (
    blp_refine,
    dephased_pair,
    dephasing_factor,
    dephasing_factor_quad,
    trace_distance_2x2,
    trace_distance_trace,
)
from qklab.statevector import cnot_average_fidelity, cnot_matrix, noisy_cnot_matrix
from qklab.tools.parsers import prepare_qklab_selftest_argparser, run_tool
from qklab.tools.utils import init_logging, logged

logger = init_logging()

SELFTEST_SEED = 20240601


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_cnot_identity() -> CheckResult:
    deviation = float(np.max(np.abs(noisy_cnot_matrix(math.pi / 4) - cnot_matrix())))
    return CheckResult(
        "noisy CNOT identity", deviation < 1e-12, f"max deviation {deviation:.1e}"
    )


def check_cnot_fidelity() -> CheckResult:
    mean, std = cnot_average_fidelity(0.035, n_draws=100_000, seed=SELFTEST_SEED)
    passed = abs(mean - 0.9971) <= 5e-4 and mean >= 0.99
    return CheckResult("CNOT average fidelity", passed, f"{mean:.5f} +/- {std:.5f}")


def check_special_functions() -> CheckResult:
    rng = np.random.default_rng(SELFTEST_SEED)
    zeta_error = abs(hurwitz_zeta(2.0, 1.0) - math.pi**2 / 6)
    worst = 0.0
    for _ in range(100):
        s = rng.uniform(1.1, 6.0)
        q = complex(rng.uniform(0.2, 5.0), rng.uniform(-3.0, 3.0))
        difference = hurwitz_zeta(s, q) - hurwitz_zeta(s, q + 1)
        worst = max(worst, abs(difference - q ** (-s)))
    gamma_error = abs(gamma_fn(0.5) - math.sqrt(math.pi))
    passed = zeta_error < 1e-12 and worst < 1e-11 and gamma_error < 1e-12
    return CheckResult(
        "Hurwitz zeta and gamma",
        passed,
        f"zeta(2,1) {zeta_error:.1e}, recurrence {worst:.1e}, "
        f"gamma(1/2) {gamma_error:.1e}",
    )


def _random_env(rng: np.random.Generator) -> EnvParams:
    return EnvParams(s=rng.uniform(1.1, 6.5), T=rng.uniform(0.5, 4.5))


def check_dephasing_quadrature() -> CheckResult:
    rng = np.random.default_rng(SELFTEST_SEED)
    points = [_random_env(rng) for _ in range(19)] + [EnvParams(s=2.0, T=1.0)]
    worst = 0.0
    for p in points:
        t = rng.uniform(0.1, 5.0)
        closed = complex(dephasing_factor(p, t))
        quad = dephasing_factor_quad(p, t)
        worst = max(worst, abs(closed - quad) / max(abs(quad), 1e-300))
    return CheckResult(
        "closed-form vs quadrature dephasing",
        worst < 1e-6,
        f"max relative error {worst:.1e}",
    )


def check_optimal_pair() -> CheckResult:
    rng = np.random.default_rng(SELFTEST_SEED)
    worst = 0.0
    for _ in range(50):
        p = _random_env(rng)
        phi = complex(dephasing_factor(p, rng.uniform(0.0, 20.0)))
        worst = max(worst, abs(trace_distance_2x2(*dephased_pair(phi)) - abs(phi)))
    return CheckResult(
        "optimal pair trace distance", worst < 1e-12, f"max error {worst:.1e}"
    )


def check_blp() -> CheckResult:
    markovian = EnvParams(s=1.5, T=4.5)
    grid = trace_distance_trace(markovian, np.linspace(1e-3, 20.0, 4000))
    monotone = bool(np.all(np.diff(grid) <= 0.0))
    quiet = blp_refine(markovian)
    revival = blp_refine(EnvParams(s=6.0, T=0.5))
    passed = (
        monotone
        and quiet.value < 1e-10
        and revival.value > 0.0
        and revival.converged
        and revival.achieved < 1e-4
    )
    return CheckResult(
        "BLP measure",
        passed,
        f"M(1.5, 4.5) = {quiet.value:.1e}, M(6.0, 0.5) = {revival.value:.4f} "
        f"(refinement change {revival.achieved:.1e})",
    )


def check_propagation(instances: int = 8, max_atoms: int = 6) -> CheckResult:
    rng = np.random.default_rng(SELFTEST_SEED)
    worst_difference = worst_drift = 0.0
    for index in range(instances):
        n_atoms = 2 + index % (max_atoms - 1)
        geometry = RydbergGeometry.chain(n_atoms, a_over_rb=rng.uniform(0.8, 1.4))
        features = rng.uniform(0.0, 1.0, n_atoms)
        hamiltonian = build_rydberg_hamiltonian(geometry, features)
        amplitudes = rng.normal(size=2**n_atoms) + 1j * rng.normal(size=2**n_atoms)
        state = StateVector(n_atoms, amplitudes / np.linalg.norm(amplitudes))
        t = geometry.evolution_time
        dense = evolve(state, hamiltonian, t, PropagationBackend.DENSE_EIGEN)
        krylov = evolve(state, hamiltonian, t, PropagationBackend.KRYLOV)
        difference = float(np.linalg.norm(dense.amplitudes - krylov.amplitudes))
        worst_difference = max(worst_difference, difference)
        drift = max(abs(krylov.norm() - 1.0), abs(dense.norm() - 1.0))
        worst_drift = max(worst_drift, drift)
    passed = worst_difference < 1e-8 and worst_drift < 1e-10
    return CheckResult(
        "dense vs Krylov propagation",
        passed,
        f"max difference {worst_difference:.1e}, norm drift {worst_drift:.1e}",
    )


def check_effective_rank() -> CheckResult:
    rng = np.random.default_rng(SELFTEST_SEED)
    x = rng.uniform(0.0, 1.0, size=4)
    noise = NoiseSpec(ensemble_size=8)
    noisy = effective_rank(
        build_ensemble(x, FeatureMapKind.DIGITAL, noise, SELFTEST_SEED)
    )
    ideal = effective_rank(
        build_ensemble(x, FeatureMapKind.DIGITAL, NoiseSpec.ideal(8), SELFTEST_SEED)
    )
    passed = noisy.rank > 1 and noisy.purity < 1.0 and ideal.rank == 1
    return CheckResult(
        "noisy encoding rank",
        passed,
        f"noisy rank {noisy.rank} purity {noisy.purity:.4f}, ideal rank {ideal.rank}",
    )


CHECKS: List[Tuple[str, Callable[[], CheckResult]]] = [
    ("cnot-identity", check_cnot_identity),
    ("cnot-fidelity", check_cnot_fidelity),
    ("special", check_special_functions),
    ("dephasing", check_dephasing_quadrature),
    ("optimal-pair", check_optimal_pair),
    ("blp", check_blp),
    ("propagation", check_propagation),
    ("rank", check_effective_rank),
]


@logged(log_time=True)
def run_checks(skip_blp: bool = False) -> List[CheckResult]:
    """Run every check, recording an exception as a failure"""
    results = []
    for key, check in CHECKS:
        if skip_blp and key == "blp":
            continue
        try:
            results.append(check())
        except Exception as exc:
            logger.debug(f"check '{key}' raised {exc!r}")
            detail = f"raised {type(exc).__name__}: {exc}"
            results.append(CheckResult(key, False, detail))
    return results


def selftest(skip_blp: bool = False) -> int:
    """Print one line per check, return 0 when all pass and 1 otherwise"""
    results = run_checks(skip_blp)
    for result in results:
        print(f"[{'PASS' if result.passed else 'FAIL'}] {result.name}: {result.detail}")
    failed = sum(not result.passed for result in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def main():
    """Run the qklab selftest tool"""
    return run_tool(prepare_qklab_selftest_argparser())


if __name__ == "__main__":
    main()
