"""Face obfuscation by parameterized transforms refined through gradient descent
on human-indecipherability and machine-decipherability energies."""

from .composite import PipelineOptions, forward, render, softmax3
from .energy import EnergyReport
from .extractor import BuiltinEmbedder, ExternalExtractor, open_extractor
from .gradient import Objective, backward, fd_check
from .image import BlockGrid, load_ppm, make_grid, psnr, save_ppm
from .optimizer import LbfgsConfig, optimize
from .params import REGISTRY, ParameterSet, flatten, project_box, unflatten
from .rng import SplitMix64, init_parameters

__version__ = "0.1.0"

__all__ = [
    "BlockGrid", "BuiltinEmbedder", "EnergyReport", "ExternalExtractor", "LbfgsConfig",
    "Objective", "ParameterSet", "PipelineOptions", "REGISTRY", "SplitMix64", "backward",
    "fd_check", "flatten", "forward", "init_parameters", "load_ppm", "make_grid",
    "open_extractor", "optimize", "project_box", "psnr", "render", "save_ppm", "softmax3",
    "unflatten",
]
