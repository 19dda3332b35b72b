from .mesh import TriMesh, MeshError, load_mesh, save_mesh, load_obj, save_obj, load_ply, save_ply
from .queries import (
    DEFAULT_SAMPLES,
    chamfer_distance,
    closest_points,
    contains,
    point_to_surface,
    sample_surface,
    signed_distance,
    unsigned_distance,
    winding_number,
)
from .occupancy import OccupancyGrid, occupancy_bce
from .marching_cubes import marching_cubes
from .primitives import box, icosphere

__all__ = [
    "TriMesh", "MeshError", "load_mesh", "save_mesh", "load_obj", "save_obj", "load_ply",
    "save_ply", "DEFAULT_SAMPLES", "chamfer_distance", "closest_points", "contains",
    "point_to_surface", "sample_surface", "signed_distance", "unsigned_distance",
    "winding_number", "OccupancyGrid", "occupancy_bce", "marching_cubes", "box", "icosphere",
]
