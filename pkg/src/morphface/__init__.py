"""morphface: linear morphable face engine.

PCA model construction and synthesis, z-buffered UV rendering with 9-band
spherical-harmonics relighting, masked compositing with mouth exclusion,
gradient-based parameter fitting, and texel-space texture recovery.
"""

__version__ = "0.1.0"

from . import kernels
from .errors import MorphfaceError
from .mesh import Mesh, load_obj, save_obj, vertex_normals
from .model import (MorphableModel, ShapeCoeffs, build_from_samples,
                    load_model, save_model, synthesize)
from .scene import FaceParams, RenderScene, load_params, save_params
from .shading import SHLighting, illuminate, render_illuminated, sh_basis, unit_lighting
from .transform import Camera, RigidPose, project

__all__ = [
    "__version__", "kernels", "MorphfaceError",
    "Mesh", "load_obj", "save_obj", "vertex_normals",
    "MorphableModel", "ShapeCoeffs", "build_from_samples", "synthesize",
    "save_model", "load_model",
    "FaceParams", "RenderScene", "save_params", "load_params",
    "SHLighting", "sh_basis", "illuminate", "unit_lighting", "render_illuminated",
    "Camera", "RigidPose", "project",
]
