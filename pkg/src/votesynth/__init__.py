"""votesynth: differentially private synthetic labeled-text datasets from a
weighted ensemble of black-box generators steered by private Top-Q votes."""

from .config import RunConfig, build_run_config, load_run_config
from .core import (
    EmbeddedSet,
    LabeledSample,
    SyntheticDataset,
    SyntheticSample,
    TaskSpec,
    VoteHistograms,
    read_dataset,
    write_dataset,
)
from .embedding import EmbedderBinding, SimulationEmbedder, build_embedder
from .evaluation import frechet_distance, nearest_centroid_eval
from .federated import partition_dirichlet, party_vote, secure_sum
from .generation import GeneratorBinding, PromptTemplate, build_prompt, load_template
from .orchestrator import IterationRecord, RunResult, run, run_ablation
from .privacy import PrivacyBudget, calibrate_sigma, sensitivity, verify_composition
from .voting import add_gaussian_noise, pairwise_distance, select_contrastive, top_q_vote
from .weighting import normalize_and_allocate, score_generators

__version__ = "0.1.0"

__all__ = [
    "EmbeddedSet",
    "EmbedderBinding",
    "GeneratorBinding",
    "IterationRecord",
    "LabeledSample",
    "PrivacyBudget",
    "PromptTemplate",
    "RunConfig",
    "RunResult",
    "SimulationEmbedder",
    "SyntheticDataset",
    "SyntheticSample",
    "TaskSpec",
    "VoteHistograms",
    "add_gaussian_noise",
    "build_embedder",
    "build_prompt",
    "build_run_config",
    "calibrate_sigma",
    "frechet_distance",
    "load_run_config",
    "load_template",
    "nearest_centroid_eval",
    "normalize_and_allocate",
    "pairwise_distance",
    "partition_dirichlet",
    "party_vote",
    "read_dataset",
    "run",
    "run_ablation",
    "score_generators",
    "secure_sum",
    "select_contrastive",
    "sensitivity",
    "top_q_vote",
    "verify_composition",
    "write_dataset",
]
