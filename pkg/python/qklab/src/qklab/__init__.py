"""qklab

Quantum kernel regression laboratory: digital, analog (Rydberg) and hybrid
feature maps with operational noise, epsilon-SVR and spin-boson
non-Markovianity data
"""

from importlib import metadata

__version__ = metadata.version("qklab")

from .api_utils import (
    DigestMismatchError,
    DimensionMismatchError,
    EncodingError,
    IdxParseError,
    NumericalError,
    PropagationError,
    QklabException,
    QuadratureError,
    QubitIndexError,
    RefinementError,
    StageError,
    ValidationError,
)
from .qk_types import (
    DephasingTrace,
    EnvParams,
    FeatureMapKind,
    GramMatrix,
    HermitianMatrix,
    KernelKind,
    LabeledDataset,
    MinMaxModel,
    NMSample,
    NoiseDraw,
    NoiseEnsemble,
    NoiseSpec,
    PcaModel,
    PropagationBackend,
    RydbergGeometry,
    StateVector,
    SvrModel,
)
from .rydberg import PropagationOptions, build_rydberg_hamiltonian, evolve
from .feature_maps import (
    build_ensemble,
    build_ensembles,
    encode,
    encode_analog,
    encode_digital,
    encode_hybrid,
    encode_zz,
    sample_noise,
)
from .kernels import (
    KernelSpec,
    cross_gram,
    effective_rank,
    gram,
    kernel_ideal,
    kernel_noisy,
    kernel_rbf,
    psd_check,
)
from .gram_cache import GramCache, read_gram, write_gram
from .svr import (
    cross_validate,
    load_model,
    mse,
    predict,
    save_model,
    train,
    weight_norm,
)
from .spinboson import blp_measure, dephasing_factor, gen_nm_dataset
from .datasets import gen_benchmark, read_idx, synth_images

__all__ = (
    "__version__",
    "DigestMismatchError",
    "DimensionMismatchError",
    "EncodingError",
    "IdxParseError",
    "NumericalError",
    "PropagationError",
    "QklabException",
    "QuadratureError",
    "QubitIndexError",
    "RefinementError",
    "StageError",
    "ValidationError",
    "DephasingTrace",
    "EnvParams",
    "FeatureMapKind",
    "GramMatrix",
    "HermitianMatrix",
    "KernelKind",
    "LabeledDataset",
    "MinMaxModel",
    "NMSample",
    "NoiseDraw",
    "NoiseEnsemble",
    "NoiseSpec",
    "PcaModel",
    "PropagationBackend",
    "RydbergGeometry",
    "StateVector",
    "SvrModel",
    "PropagationOptions",
    "build_rydberg_hamiltonian",
    "evolve",
    "build_ensemble",
    "build_ensembles",
    "encode",
    "encode_analog",
    "encode_digital",
    "encode_hybrid",
    "encode_zz",
    "sample_noise",
    "KernelSpec",
    "cross_gram",
    "effective_rank",
    "gram",
    "kernel_ideal",
    "kernel_noisy",
    "kernel_rbf",
    "psd_check",
    "GramCache",
    "read_gram",
    "write_gram",
    "cross_validate",
    "load_model",
    "mse",
    "predict",
    "save_model",
    "train",
    "weight_norm",
    "blp_measure",
    "dephasing_factor",
    "gen_nm_dataset",
    "gen_benchmark",
    "read_idx",
    "synth_images",
)
