"""Unsupervised nonlinear hyperspectral unmixing under the multilinear
mixing model: block coordinate descent over endmembers, abundances and
per-pixel interaction probabilities, plus scene synthesis and evaluation.
"""

from .core import (
    AbundanceMatrix,
    EndmemberMatrix,
    HyperCube,
    Termination,
    TransitionProbabilities,
    UnmixingResult,
    validate,
)
from .metrics import EvalReport, align_endmembers, evaluate, nmse, sam
from .model import (
    DivergenceError,
    mlm_forward,
    mlm_forward_columns,
    mlm_from_linear,
    mlm_residual,
    modified_endmembers,
    objective,
)
from .projections import project_box, project_simplex, project_simplex_columns
from .solver import (
    SolverConfig,
    SolverMode,
    StepDiagnostics,
    endmember_gradient,
    row_lipschitz,
    solve,
    update_abundance,
    update_endmembers,
    update_probability,
)
from .synth import (
    GroundTruth,
    PLaw,
    SceneSpec,
    generate_scene,
    sample_simplex_uniform,
    synthetic_endmembers,
)
from .vca import RankDeficiencyError, VcaConfig, vca, vca_with_indices

__version__ = "0.1.0"

__all__ = [
    "AbundanceMatrix",
    "DivergenceError",
    "EndmemberMatrix",
    "EvalReport",
    "GroundTruth",
    "HyperCube",
    "PLaw",
    "RankDeficiencyError",
    "SceneSpec",
    "SolverConfig",
    "SolverMode",
    "StepDiagnostics",
    "Termination",
    "TransitionProbabilities",
    "UnmixingResult",
    "VcaConfig",
    "align_endmembers",
    "endmember_gradient",
    "evaluate",
    "generate_scene",
    "mlm_forward",
    "mlm_forward_columns",
    "mlm_from_linear",
    "mlm_residual",
    "modified_endmembers",
    "nmse",
    "objective",
    "project_box",
    "project_simplex",
    "project_simplex_columns",
    "row_lipschitz",
    "sam",
    "sample_simplex_uniform",
    "solve",
    "synthetic_endmembers",
    "update_abundance",
    "update_endmembers",
    "update_probability",
    "validate",
    "vca",
    "vca_with_indices",
]
