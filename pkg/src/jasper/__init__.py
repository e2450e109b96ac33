"""Joint Bayesian detection of spatially varying genes from spatial transcriptomics counts."""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    CountsDataset,
    DataError,
    NormalizedMatrix,
    SizeFactors,
    filter_low_count_genes,
    library_sizes,
    load_coords,
    load_counts,
    normalize,
    tmm_size_factors,
)
from .gibbs import GibbsConfig, Hyperparameters, PosteriorSamples, SamplerError, run_gibbs  # noqa: E402
from .normalized import run_gibbs_normalized  # noqa: E402
from .screening import screen_genes  # noqa: E402
from .selection import SelectionReport, pefdr_select  # noqa: E402
from .simulate import SimConfig, simulate  # noqa: E402
from .splines import DesignMatrix, design_from_coords  # noqa: E402

__all__ = [
    "CountsDataset",
    "DataError",
    "DesignMatrix",
    "GibbsConfig",
    "Hyperparameters",
    "NormalizedMatrix",
    "PosteriorSamples",
    "SamplerError",
    "SelectionReport",
    "SimConfig",
    "SizeFactors",
    "design_from_coords",
    "filter_low_count_genes",
    "library_sizes",
    "load_coords",
    "load_counts",
    "normalize",
    "pefdr_select",
    "run_gibbs",
    "run_gibbs_normalized",
    "screen_genes",
    "simulate",
    "tmm_size_factors",
]
