"""Multilevel Ising networks and simulated node interventions."""

from .data import (
    BinaryDataset,
    CenteredDesign,
    OrdinalDataset,
    compute_icc,
    dichotomize,
    group_mean_center,
    read_csv,
    write_csv,
)
from .errors import (
    ConfigurationError,
    ContractError,
    DegenerateInputError,
    EstimationError,
    IngestionError,
    NiraError,
    SizeError,
)
from .kernels import BACKEND
from .network import (
    FIXED,
    IsingConfig,
    NetworkModel,
    combine_edges,
    ebic_report,
    effective_threshold,
    effective_thresholds,
    fit_multilevel_ising,
    fit_single_ising,
)
from .nira import InterventionSpec, SubnetworkPartition, run_nira
from .sampler import SamplerConfig, exact_distribution, generate_sample

__version__ = "0.1.0"
