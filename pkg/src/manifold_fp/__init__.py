"""Fokker-Planck dynamics on point clouds through reaction coordinates.

Points sampled from a manifold are embedded by a diffusion map, covered by
approximate Voronoi cells, and evolved with a reversible finite-volume
Markov scheme.
"""

__version__ = "0.1.0"

from . import io
from .config import ExperimentConfig, preset
from .diffusion_map import SpectralEmbedding, build_kernel, diffusion_operator, spectral_embed
from .fokker_planck import (Generator, adjust_initial, assemble_generator, diagnostics,
                            equilibrium_weights, measured_decay_slope, solve, step_explicit_cfl, step_implicit,
                            step_unconditional, theoretic_decay_rate)
from .linalg import solve_linear, sym_eig
from .manifolds import PointCloud, embed_ambient, eigenfunction_density, sample_manifold
from .pipeline import Pipeline, StageError, convergence_study, run_experiment
from .voronoi import Tessellation, build_tessellation

__all__ = [
    "PointCloud", "sample_manifold", "embed_ambient", "eigenfunction_density",
    "sym_eig", "solve_linear",
    "SpectralEmbedding", "build_kernel", "diffusion_operator", "spectral_embed",
    "Tessellation", "build_tessellation",
    "Generator", "equilibrium_weights", "assemble_generator", "adjust_initial",
    "step_unconditional", "step_explicit_cfl", "step_implicit", "theoretic_decay_rate",
    "diagnostics", "solve", "measured_decay_slope",
    "ExperimentConfig", "preset", "Pipeline", "StageError", "run_experiment",
    "convergence_study", "io",
]
