"""Spectral bandits on graphs."""
__version__ = "0.1.0"

from spectral_bandits.algorithms import (ALGORITHMS, AlgoConfig, EllipsoidState,
                                         InvariantViolation, SpectralEliminator, SpectralTS,
                                         SpectralUCB, make_algorithm)
from spectral_bandits.effdim import (EffDimInput, effective_dimension, old_effective_dimension,
                                     smoothness, summarize, waterfill)
from spectral_bandits.env import (EnvSpec, RunRecord, SmoothRewardEnv, compare, make_smooth_env,
                                  run, sweep)
from spectral_bandits.graph import (SpectralBasis, WeightedGraph, build_laplacian,
                                    eigendecompose, generate, knn_graph, load_graph,
                                    spectral_basis)
from spectral_bandits.kernels import BACKEND

__all__ = [
    "ALGORITHMS", "AlgoConfig", "BACKEND", "EffDimInput", "EllipsoidState", "EnvSpec",
    "InvariantViolation", "RunRecord", "SmoothRewardEnv", "SpectralBasis",
    "SpectralEliminator", "SpectralTS", "SpectralUCB", "WeightedGraph", "build_laplacian",
    "compare", "effective_dimension", "eigendecompose", "generate", "knn_graph", "load_graph",
    "make_algorithm", "make_smooth_env", "old_effective_dimension", "run", "smoothness",
    "spectral_basis", "summarize", "sweep", "waterfill",
]
