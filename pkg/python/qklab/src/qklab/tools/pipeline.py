"""
Experiment pipeline: dataset, Gram matrices, cross-validation, training,
prediction and the run report
"""

import datetime
import hashlib
import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from time import perf_counter
from typing import Dict, Generator, List, Optional, Tuple

import numpy as np
import numpy.typing as npt

import qklab
from qklab.api_utils import StageError, ValidationError
from qklab.datasets import (
    gen_benchmark,
    nm_features_to_dataset,
    read_dataset_csv,
    read_idx,
    synth_images,
    write_dataset_csv,
)
from qklab.gram_cache import GramCache
from qklab.kernels import KernelSpec, cross_gram, gram
from qklab.qk_types import (
    SPLIT_TEST,
    SPLIT_TRAIN,
    KernelKind,
    LabeledDataset,
    PathOrStr,
)
from qklab.spinboson import default_sample_times, gen_nm_dataset
from qklab.svr import (
    cross_validate,
    mse,
    predict_gram,
    r2_score,
    save_model,
    train,
    weight_norm,
)
from qklab.tools.config import TASK_BENCHMARK, ExperimentConfig, format_value
from qklab.tools.utils import exclusive_output, limit_threads, logged

logger = logging.getLogger("qklab")

REPORT_FILENAME = "report.txt"
MODELS_DIRNAME = "models"


@dataclass(frozen=True)
class ModelPlan:
    """One model of a run: a display name, its kernel and spacing"""

    name: str
    kernel: KernelSpec
    a_over_rb: Optional[float] = None


@dataclass(frozen=True)
class ModelResult:
    """Selected hyperparameters, metrics and digests of one trained model"""

    name: str
    kernel: str
    a_over_rb: Optional[float]
    C: float
    epsilon: float
    train_mse: float
    test_mse: float
    test_r2: float
    weight_norm: float
    kkt_violation: float
    converged: bool
    n_iter: int
    n_support: int
    diagonal_shift: float
    train_gram_digest: str
    test_gram_digest: str
    #: Test sample ids, predictions and ground truth
    sample_ids: Tuple[int, ...] = field(default=(), repr=False)
    predictions: npt.NDArray[np.float64] = field(
        default_factory=lambda: np.empty(0), compare=False, repr=False
    )
    truth: npt.NDArray[np.float64] = field(
        default_factory=lambda: np.empty(0), compare=False, repr=False
    )


@dataclass(frozen=True)
class RunReport:
    """Everything a run reports, only ``started`` and ``wall_clock_s`` vary"""

    task: str
    dataset_digest: str
    #: seed, theta_seed, noise_seed and cv_seed
    seeds: Dict[str, int]
    n_train: int
    n_test: int
    d: int
    ensemble_size: int
    models: Tuple[ModelResult, ...]
    started: str = ""
    wall_clock_s: float = 0.0

    def model(self, name: str) -> ModelResult:
        for result in self.models:
            if result.name == name:
                return result
        raise KeyError(name)


@contextmanager
def stage(name: str) -> Generator[None, None, None]:
    """Run a pipeline stage, re-raising any failure as a StageError naming it"""
    logger.debug(f"stage '{name}' started")
    started = perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    logger.debug(f"stage '{name}' done in {perf_counter() - started:.3f}s")


def _dataset_key(config: ExperimentConfig) -> str:
    """Digest of every setting the dataset depends on"""
    if config.task == TASK_BENCHMARK:
        keys = (
            "task", "n_train", "n_test", "d", "seed", "theta_seed",
            "train_only_fit", "idx_images", "idx_labels",
        )
    else:
        keys = (
            "task", "n_train", "n_test", "seed", "eta", "varphi", "omega_c",
            "t_step", "t_max", "n_grid",
        )
    text = ";".join(f"{key}={format_value(getattr(config, key))}" for key in keys)
    return hashlib.sha256(text.encode()).hexdigest()


def generate_dataset(config: ExperimentConfig, threads: int) -> LabeledDataset:
    if config.task == TASK_BENCHMARK:
        if config.idx_images:
            images = read_idx(config.idx_images, config.idx_labels)
        else:
            images = synth_images(config.n_train + config.n_test, seed=config.seed)
        return gen_benchmark(
            images,
            theta_seed=config.theta_seed,
            n_train=config.n_train,
            n_test=config.n_test,
            d=config.d,
            seed=config.seed,
            train_only_fit=config.train_only_fit,
            threads=threads,
        )
    raw = gen_nm_dataset(
        n_train=config.n_train,
        n_test=config.n_test,
        times=default_sample_times(config.t_step, config.omega_c),
        seed=config.seed,
        eta=config.eta,
        omega_c=config.omega_c,
        varphi=config.varphi,
        t_max=config.t_max,
        n_grid=config.n_grid,
        threads=threads,
    )
    return raw.to_labeled()


@logged(log_time=True)
def load_dataset(
    config: ExperimentConfig, cache_dir: Path, threads: int
) -> Tuple[LabeledDataset, str]:
    """
    Generate the task's dataset or load it from the cache.

    Freshly generated datasets are written and read back so that a first
    run and a cached rerun see the same values. Non-Markovianity datasets
    are cached with their raw 20 features and reduced to ``d`` here.
    """
    key = _dataset_key(config)
    path = cache_dir / f"dataset-{key}.csv"
    if not path.is_file():
        cache_dir.mkdir(parents=True, exist_ok=True)
        write_dataset_csv(generate_dataset(config, threads), path)
    else:
        logger.debug(f"Dataset cache hit {key[:12]}")
    dataset = read_dataset_csv(path)
    if config.task != TASK_BENCHMARK:
        dataset = nm_features_to_dataset(dataset, config.d, config.train_only_fit)
    return dataset, key


def kernel_spec(
    config: ExperimentConfig,
    kind: KernelKind,
    noisy: bool = False,
    a_over_rb: Optional[float] = None,
) -> KernelSpec:
    """The KernelSpec of one kernel kind under ``config``"""
    if kind is KernelKind.RBF:
        return KernelSpec(kind, rbf_gamma=config.rbf_gamma)
    geometry = None
    if kind is not KernelKind.DIGITAL:
        spacing = config.a_over_rb[0] if a_over_rb is None else a_over_rb
        geometry = config.geometry(spacing)
    return KernelSpec(
        kind,
        noise=config.noise_spec() if noisy else None,
        seed=config.noise_seed,
        geometry=geometry,
        options=config.propagation_options(),
        normalize=config.normalize_noisy,
    )


def plan_models(config: ExperimentConfig) -> List[ModelPlan]:
    """
    Expand a config into its models. Digital and RBF models do not depend
    on the spacing and appear once; analog and hybrid models appear once per
    spacing, ideal before noisy.
    """
    plans: List[ModelPlan] = []
    for kind in config.kernel_kinds():
        if kind is KernelKind.RBF:
            plans.append(ModelPlan("rbf", kernel_spec(config, kind)))
            continue
        noisy_variants = [False]
        if kind.label in config.noisy_kernels:
            noisy_variants.append(True)
        spacings: List[Optional[float]] = (
            [None] if kind is KernelKind.DIGITAL else list(config.a_over_rb)
        )
        for a_over_rb in spacings:
            for noisy in noisy_variants:
                spec = kernel_spec(config, kind, noisy, a_over_rb)
                name = spec.label
                if a_over_rb is not None:
                    name = f"{spec.label}@{a_over_rb!r}"
                plans.append(ModelPlan(name, spec, a_over_rb))
    return plans


def model_filename(name: str) -> str:
    return name.replace("@", "_a") + ".model"


def _fit_model(
    plan: ModelPlan,
    dataset: LabeledDataset,
    config: ExperimentConfig,
    cache: GramCache,
    models_dir: Path,
    threads: int,
) -> ModelResult:
    train_index = dataset.split_index(SPLIT_TRAIN)
    test_index = dataset.split_index(SPLIT_TEST)
    train_x = dataset.features[train_index]
    test_x = dataset.features[test_index]
    train_y = dataset.labels[train_index]
    test_y = dataset.labels[test_index]

    with stage(f"gram:{plan.name}"):
        train_gram = gram(
            train_x, plan.kernel, train_index.tolist(), cache=cache, threads=threads
        )
        test_gram = None
        if test_index.size:
            test_gram = cross_gram(
                test_x, train_x, plan.kernel, test_index.tolist(), train_index.tolist(),
                cache=cache, threads=threads,
            )

    with stage(f"cv:{plan.name}"):
        selected = cross_validate(
            train_gram,
            train_y,
            C_grid=config.C_grid,
            eps_grid=config.eps_grid,
            k_folds=config.k_folds,
            seed=config.cv_seed,
            tol=config.tol,
            standardize=config.standardize_labels,
            threads=threads,
        )

    with stage(f"train:{plan.name}"):
        model = train(
            train_gram,
            train_y,
            C=selected.C,
            epsilon=selected.epsilon,
            tol=config.tol,
            standardize=config.standardize_labels,
        )
        save_model(model, models_dir / model_filename(plan.name))

    with stage(f"predict:{plan.name}"):
        train_mse = mse(predict_gram(model, train_gram), train_y)
        predictions = np.empty(0)
        test_mse = test_r2 = math.nan
        if test_gram is not None:
            predictions = predict_gram(model, test_gram)
            test_mse = mse(predictions, test_y)
            test_r2 = r2_score(predictions, test_y)

    return ModelResult(
        name=plan.name,
        kernel=plan.kernel.label,
        a_over_rb=plan.a_over_rb,
        C=model.C,
        epsilon=model.epsilon,
        train_mse=train_mse,
        test_mse=test_mse,
        test_r2=test_r2,
        weight_norm=weight_norm(model, train_gram),
        kkt_violation=model.kkt_violation,
        converged=model.converged,
        n_iter=model.n_iter,
        n_support=len(model.support_indices),
        diagonal_shift=model.diagonal_shift,
        train_gram_digest=train_gram.digest_hex,
        test_gram_digest="" if test_gram is None else test_gram.digest_hex,
        sample_ids=tuple(int(i) for i in test_index),
        predictions=predictions,
        truth=test_y,
    )


@logged(log_time=True)
def run_pipeline(
    config: ExperimentConfig, weight_norm_plot: Optional[bool] = None
) -> RunReport:
    """
    Run an experiment end to end and write its outputs to ``config.output_dir``:
    ``report.txt``, one model file per model, the prediction and metric CSVs
    and the figures.

    Datasets and Gram matrices are cached by digest, so a rerun with the same
    config only trains and predicts.

    Parameters
    ----------
    config : ExperimentConfig
        The run settings
    weight_norm_plot : bool, optional
        Emit the weight-norm bar chart, by default only for spacing sweeps

    Raises
    ------
    StageError
        Wraps the failure of the named stage
    ValidationError
        The output directory is unwritable or locked by another run
    """
    # Imported here, matplotlib is only needed once a run completes
    from qklab.tools.plots import emit_plots

    started = perf_counter()
    stamp = datetime.datetime.now().isoformat(timespec="seconds")
    threads = limit_threads(config.threads)
    output = config.output_path
    with exclusive_output(output):
        cache = GramCache(config.cache_path)
        models_dir = output / MODELS_DIRNAME
        models_dir.mkdir(exist_ok=True)

        with stage("dataset"):
            dataset, dataset_key = load_dataset(config, config.cache_path, threads)
            if dataset.dimension != config.d:
                raise ValidationError(
                    f"Dataset dimension {dataset.dimension} does not match d={config.d}"
                )

        results = [
            _fit_model(plan, dataset, config, cache, models_dir, threads)
            for plan in plan_models(config)
        ]
        logger.debug(f"Gram cache: {cache.hits} hits, {cache.misses} misses")

        report = RunReport(
            task=config.task,
            dataset_digest=dataset_key,
            seeds={
                "seed": config.seed,
                "theta_seed": config.theta_seed,
                "noise_seed": config.noise_seed,
                "cv_seed": config.cv_seed,
            },
            n_train=config.n_train,
            n_test=config.n_test,
            d=config.d,
            ensemble_size=config.ensemble_size,
            models=tuple(results),
            started=stamp,
            wall_clock_s=perf_counter() - started,
        )
        with stage("report"):
            write_report(report, output / REPORT_FILENAME)
        with stage("plots"):
            if weight_norm_plot is None:
                weight_norm_plot = len(config.a_over_rb) > 1
            emit_plots(report, output, weight_norms=weight_norm_plot)
    return report


def _run_entries(report: RunReport) -> List[Tuple[str, object]]:
    entries: List[Tuple[str, object]] = [
        ("qklab_version", qklab.__version__),
        ("task", report.task),
        ("dataset_digest", report.dataset_digest),
    ]
    entries.extend(sorted(report.seeds.items()))
    entries.extend(
        [
            ("n_train", report.n_train),
            ("n_test", report.n_test),
            ("d", report.d),
            ("ensemble_size", report.ensemble_size),
            ("n_models", len(report.models)),
            ("started", report.started),
            ("wall_clock_s", report.wall_clock_s),
        ]
    )
    return entries


MODEL_KEYS = (
    "kernel",
    "a_over_rb",
    "C",
    "epsilon",
    "train_mse",
    "test_mse",
    "test_r2",
    "weight_norm",
    "kkt_violation",
    "converged",
    "n_iter",
    "n_support",
    "diagonal_shift",
    "train_gram_digest",
    "test_gram_digest",
)

#: Report entries that differ between identical reruns
VOLATILE_KEYS = ("started", "wall_clock_s")


def format_report(report: RunReport) -> str:
    """Sectioned ``key = value`` text, a [run] section then one per model"""
    lines = ["[run]"]
    entries = _run_entries(report)
    lines.extend(f"{key} = {format_value(value)}" for key, value in entries)
    for result in report.models:
        lines.append("")
        lines.append(f"[model {result.name}]")
        lines.extend(
            f"{key} = {format_value(getattr(result, key))}" for key in MODEL_KEYS
        )
    return "\n".join(lines) + "\n"


def write_report(report: RunReport, path: PathOrStr) -> Path:
    path = Path(path)
    path.write_text(format_report(report))
    return path


def read_report(path: PathOrStr) -> Dict[str, Dict[str, str]]:
    """
    Read a report into ``{section: {key: value}}`` with file order preserved.
    Values are left as text.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"Report not found: {path}")
    sections: Dict[str, Dict[str, str]] = {}
    current: Optional[Dict[str, str]] = None
    for number, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = sections.setdefault(line[1:-1], {})
            continue
        key, sep, value = line.partition("=")
        if not sep or current is None:
            raise ValidationError(f"{path}:{number}: malformed report line '{raw}'")
        current[key.strip()] = value.strip()
    return sections


def strip_volatile(sections: Dict[str, Dict[str, str]]) -> Dict[str, Dict[str, str]]:
    """Drop the timestamp entries so that reports of reruns compare equal"""
    return {
        name: {k: v for k, v in entries.items() if k not in VOLATILE_KEYS}
        for name, entries in sections.items()
    }

