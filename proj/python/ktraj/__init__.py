"""k-space trajectory optimization: attraction-repulsion energy, projected descent, PSF analysis.

Sampling patterns are float64 arrays of shape (shots, samples, dims) in the normalized
domain [-1, 1]^dims.
"""

from ._ktraj import (
    AttractionField,
    FormatError,
    HardwareSpec,
    InputError,
    NumericalError,
    OptimizerConfig,
    RunConfig,
    compute_psf,
    density_compensation,
    density_compliance,
    discretize_density,
    init_radial,
    kspace_to_waveforms,
    load_config,
    normalized_limits,
    num_threads,
    optimize,
    parse_config,
    perturb,
    project_shot,
    psf_metrics,
    read_trajectory,
    repulsion,
    set_num_threads,
    write_spkt,
)

__all__ = [
    "AttractionField",
    "FormatError",
    "HardwareSpec",
    "InputError",
    "NumericalError",
    "OptimizerConfig",
    "RunConfig",
    "compute_psf",
    "density_compensation",
    "density_compliance",
    "discretize_density",
    "init_radial",
    "kspace_to_waveforms",
    "load_config",
    "normalized_limits",
    "num_threads",
    "optimize",
    "parse_config",
    "perturb",
    "project_shot",
    "psf_metrics",
    "read_trajectory",
    "repulsion",
    "set_num_threads",
    "write_spkt",
]
