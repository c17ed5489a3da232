"""Bayesian mixture modeling with focused clustering for mixed ordinal/nominal data.

Joint-distribution estimation and multiple imputation of missing categorical
values, with a rich latent-normal sub-model for designated focus variables
and an independent-multinomial mixture for the remainder.
"""

from .density import (
    CellTable,
    bivariate_cells,
    conditional_z_mixture,
    empirical_cell_probs,
    empirical_joint_table,
    hellinger,
    joint_cell_probability,
    marginal_cells,
    model_marginal_table,
    nominal_joint_pmf,
)
from .gibbs import ChainOptions, ChainRecord, run_chain
from .model import (
    DesignSpec,
    Model,
    ModelConfig,
    MixtureWeights,
    SamplerState,
    build_design_vector,
    default_cutoffs,
    init_state,
    marginal_allocation_probs,
    stick_break,
)
from .pooling import MIEstimate, cell_estimates, generate_imputations, mi_interval, pool_estimates
from .ppc import PPCStatistic, imputed_vs_observed, ppc_statistics, replicate_datasets, simulate_dataset
from .schema import (
    Dataset,
    DataValidationError,
    PartitionedView,
    VariableSchema,
    load_dataset,
    load_schema,
    partition,
    write_dataset,
    write_schema,
)

__version__ = "0.1.0"

__all__ = [
    "CellTable", "ChainOptions", "ChainRecord", "Dataset", "DataValidationError",
    "DesignSpec", "MIEstimate", "MixtureWeights", "Model", "ModelConfig",
    "PPCStatistic", "PartitionedView", "SamplerState", "VariableSchema",
    "bivariate_cells", "build_design_vector", "cell_estimates",
    "conditional_z_mixture", "default_cutoffs", "empirical_cell_probs",
    "empirical_joint_table", "generate_imputations", "hellinger",
    "imputed_vs_observed", "init_state", "joint_cell_probability",
    "load_dataset", "load_schema", "marginal_allocation_probs",
    "marginal_cells", "mi_interval", "model_marginal_table",
    "nominal_joint_pmf", "partition", "pool_estimates", "ppc_statistics",
    "replicate_datasets", "run_chain", "simulate_dataset", "stick_break",
    "write_dataset", "write_schema",
]
