"""
Experiment configuration: the ExperimentConfig dataclass, presets and the
line-oriented ``key = value`` file format
"""

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple

from qklab.api_utils import ValidationError
from qklab.qk_types import (
    KernelKind,
    NoiseSpec,
    PathOrStr,
    PropagationBackend,
    RydbergGeometry,
)
from qklab.rydberg import PropagationOptions
from qklab.tools.utils import DEFAULT_THREADS

TASK_BENCHMARK = "benchmark"
TASK_NONMARKOV = "nonmarkov"
TASKS = (TASK_BENCHMARK, TASK_NONMARKOV)

QUANTUM_KERNELS = ("digital", "analog", "hybrid")
ALL_KERNELS = QUANTUM_KERNELS + ("rbf",)

EXPERIMENT_BENCHMARK = "benchmark"
EXPERIMENT_NONMARKOV = "nonmarkov"
EXPERIMENT_SPACING_MSE = "spacing-mse"
EXPERIMENT_SPACING_NORM = "spacing-norm"
EXPERIMENTS = (
    EXPERIMENT_BENCHMARK,
    EXPERIMENT_NONMARKOV,
    EXPERIMENT_SPACING_MSE,
    EXPERIMENT_SPACING_NORM,
)
#: Figure-numbered names of the experiments, the primary CLI choices
EXPERIMENT_ALIASES: Dict[str, str] = {
    "fig2": EXPERIMENT_BENCHMARK,
    "fig3": EXPERIMENT_NONMARKOV,
    "fig4": EXPERIMENT_SPACING_MSE,
    "fig5": EXPERIMENT_SPACING_NORM,
}
EXPERIMENT_CHOICES = tuple(EXPERIMENT_ALIASES) + EXPERIMENTS
SWEEP_A_OVER_RB = (0.95, 1.0, 1.05, 1.1)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Every setting of an experiment run. Defaults are the desk-scale preset.
    """

    #: benchmark or nonmarkov
    task: str = TASK_NONMARKOV
    #: Kernel kinds to train
    kernels: Tuple[str, ...] = ALL_KERNELS
    #: Quantum kernel kinds that are also trained with operational noise
    noisy_kernels: Tuple[str, ...] = QUANTUM_KERNELS
    #: Interatomic spacing in blockade radii, one run per value
    a_over_rb: Tuple[float, ...] = (1.05,)
    #: Noise ensemble size M
    ensemble_size: int = 64
    #: Feature dimension, equal to the number of qubits / atoms
    d: int = 6
    n_train: int = 100
    n_test: int = 50

    seed: int = 0
    theta_seed: int = 0
    noise_seed: int = 0
    cv_seed: int = 0

    C_grid: Tuple[float, ...] = (0.1, 1.0, 10.0, 100.0)
    eps_grid: Tuple[float, ...] = (0.01, 0.1)
    k_folds: int = 5
    tol: float = 1e-3

    output_dir: str = "qklab_output"
    #: Gram and dataset cache, defaults to <output_dir>/cache
    cache_dir: Optional[str] = None
    threads: int = DEFAULT_THREADS

    backend: str = PropagationBackend.AUTO.value
    krylov_max_subspace: int = 64
    dense_threshold: int = 512

    normalize_noisy: bool = False
    standardize_labels: bool = False
    train_only_fit: bool = False
    #: RBF width, unset for 1 / (d * feature variance)
    rbf_gamma: Optional[float] = None

    idx_images: Optional[str] = None
    idx_labels: Optional[str] = None

    eta: float = 1.0
    varphi: float = math.pi / 2
    omega_c: float = 1.0
    t_step: float = 0.5
    t_max: float = 20.0
    n_grid: int = 4000

    rabi: float = 8.0 * math.pi
    delta_over_rabi: float = 0.5
    c6: float = 5.42e6
    evolution_time: float = 0.25

    sigma_detuning: float = 0.1
    sigma_rabi_rel: float = 0.01
    sigma_position: float = 0.1
    sigma_cnot_theta: float = 0.035
    #: Read sigma_detuning in MHz and multiply it by 2 pi
    sigma_detuning_2pi: bool = False

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValidationError(f"task must be one of {TASKS}, got '{self.task}'")
        allowed_kernels = (("kernels", ALL_KERNELS), ("noisy_kernels", QUANTUM_KERNELS))
        for name, allowed in allowed_kernels:
            unknown = set(getattr(self, name)) - set(allowed)
            if unknown:
                raise ValidationError(f"Unknown {name}: {sorted(unknown)}")
        if not self.a_over_rb or any(not a > 0.0 for a in self.a_over_rb):
            raise ValidationError("a_over_rb values must be positive")
        if self.ensemble_size < 1:
            raise ValidationError("ensemble_size (M) must be >= 1")
        if self.d < 1:
            raise ValidationError("d must be >= 1")
        if self.n_train < 1 or self.n_test < 0:
            raise ValidationError("Need n_train >= 1 and n_test >= 0")
        if not self.C_grid or not self.eps_grid:
            raise ValidationError("C_grid and eps_grid must be nonempty")
        if self.k_folds < 2:
            raise ValidationError("k_folds must be >= 2")
        try:
            PropagationBackend(self.backend)
        except ValueError:
            known = ", ".join(b.value for b in PropagationBackend)
            raise ValidationError(f"Unknown backend '{self.backend}'. Known: {known}")

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)

    @property
    def cache_path(self) -> Path:
        if self.cache_dir:
            return Path(self.cache_dir)
        return self.output_path / "cache"

    def kernel_kinds(self) -> Tuple[KernelKind, ...]:
        return tuple(KernelKind.from_label(label) for label in self.kernels)

    def geometry(self, a_over_rb: float) -> RydbergGeometry:
        """Evenly spaced chain of d atoms at spacing ``a_over_rb`` R_b"""
        return RydbergGeometry.chain(
            self.d,
            a_over_rb=a_over_rb,
            rabi_frequency=self.rabi,
            delta_over_rabi=self.delta_over_rabi,
            c6=self.c6,
            evolution_time=self.evolution_time,
        )

    def noise_spec(self) -> NoiseSpec:
        scale = 2.0 * math.pi if self.sigma_detuning_2pi else 1.0
        return NoiseSpec(
            sigma_detuning=self.sigma_detuning * scale,
            sigma_rabi_rel=self.sigma_rabi_rel,
            sigma_position=self.sigma_position,
            sigma_cnot_theta=self.sigma_cnot_theta,
            ensemble_size=self.ensemble_size,
        )

    def propagation_options(self) -> PropagationOptions:
        return PropagationOptions(
            backend=PropagationBackend(self.backend),
            krylov_max_subspace=self.krylov_max_subspace,
            dense_threshold=self.dense_threshold,
        )


DESK = ExperimentConfig()
FULL = dataclasses.replace(DESK, d=10, ensemble_size=1000, n_train=400, n_test=200)
PRESETS: Dict[str, ExperimentConfig] = {
    "desk": DESK,
    "full": FULL,
    "paper-scale": FULL,
}


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValidationError(f"Unknown preset '{name}'. Known: {', '.join(PRESETS)}")


def _split_list(text: str) -> Tuple[str, ...]:
    return tuple(item.strip() for item in text.split(",") if item.strip())


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered not in ("true", "false"):
        raise ValueError(f"expected true or false, got '{text}'")
    return lowered == "true"


def _optional(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    def parser(text: str) -> Any:
        if text.strip().lower() in ("", "none"):
            return None
        return parse(text)

    return parser


_PARSERS: Dict[Any, Callable[[str], Any]] = {
    str: str.strip,
    int: int,
    float: float,
    bool: _parse_bool,
    Tuple[str, ...]: _split_list,
    Tuple[float, ...]: lambda text: tuple(float(v) for v in _split_list(text)),
    Optional[str]: _optional(str.strip),
    Optional[float]: _optional(float),
}

FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def parse_value(key: str, text: str) -> Any:
    """Parse the text of one config entry to the field's type"""
    if key not in FIELDS:
        raise ValidationError(f"Unknown config key '{key}'")
    try:
        return _PARSERS[FIELDS[key].type](text)
    except ValueError as exc:
        raise ValidationError(f"Bad value for '{key}': {exc}") from exc


def format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(format_value(v) for v in value)
    return str(value)


def parse_config_text(text: str, base: ExperimentConfig = DESK) -> ExperimentConfig:
    """Apply ``key = value`` lines to ``base``; '#' starts a comment"""
    values: Dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValidationError(f"line {number}: expected 'key = value', got '{raw}'")
        values[key.strip()] = parse_value(key.strip(), value)
    return dataclasses.replace(base, **values)


def load_config(
    path: Optional[PathOrStr] = None,
    preset_name: str = "desk",
    **overrides: Any,
) -> ExperimentConfig:
    """
    Resolve a config from a preset, an optional file and keyword overrides
    (None values are ignored), in that order of precedence.
    """
    config = preset(preset_name)
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"Config file not found: {path}")
        config = parse_config_text(path.read_text(), config)
    given = {
        key: tuple(value) if isinstance(value, list) else value
        for key, value in overrides.items()
        if value is not None
    }
    unknown = set(given) - set(FIELDS)
    if unknown:
        raise ValidationError(f"Unknown config keys: {sorted(unknown)}")
    return dataclasses.replace(config, **given)


def format_config(config: ExperimentConfig) -> str:
    """Every field in declaration order, one per line"""
    return "".join(
        f"{name} = {format_value(getattr(config, name))}\n" for name in FIELDS
    )


def dump_config(config: ExperimentConfig, path: PathOrStr) -> Path:
    path = Path(path)
    path.write_text(format_config(config))
    return path


def resolve_experiment(name: str) -> str:
    """The descriptive experiment name of ``name`` (``fig2`` to ``fig5`` or itself)"""
    experiment = EXPERIMENT_ALIASES.get(name, name)
    if experiment not in EXPERIMENTS:
        raise ValidationError(
            f"Unknown experiment '{name}'. Known: {', '.join(EXPERIMENT_CHOICES)}"
        )
    return experiment


def experiment_config(config: ExperimentConfig, experiment: str) -> ExperimentConfig:
    """
    The run layout of a named experiment.

    ``benchmark`` (``fig2``) and ``nonmarkov`` (``fig3``) train every
    configured kernel on their task. ``spacing-mse`` (``fig4``) and
    ``spacing-norm`` (``fig5``) sweep the spacing for the analog and hybrid
    maps on the non-Markovianity task, with noisy digital and RBF references.
    """
    experiment = resolve_experiment(experiment)
    if experiment == EXPERIMENT_BENCHMARK:
        return dataclasses.replace(config, task=TASK_BENCHMARK)
    if experiment == EXPERIMENT_NONMARKOV:
        return dataclasses.replace(config, task=TASK_NONMARKOV)
    if experiment in (EXPERIMENT_SPACING_MSE, EXPERIMENT_SPACING_NORM):
        sweep = config.a_over_rb if len(config.a_over_rb) > 1 else SWEEP_A_OVER_RB
        return dataclasses.replace(
            config,
            task=TASK_NONMARKOV,
            kernels=ALL_KERNELS,
            noisy_kernels=QUANTUM_KERNELS,
            a_over_rb=sweep,
        )
    raise ValidationError(f"Unknown experiment '{experiment}'")
