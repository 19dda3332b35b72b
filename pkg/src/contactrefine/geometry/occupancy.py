"""Occupancy grids: storage format and the occupancy scoring loss."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<7d")


@dataclass(frozen=True)
class OccupancyGrid:
    values: np.ndarray
    origin: np.ndarray
    spacing: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3 or min(values.shape) < 2:
            raise ValueError("occupancy grid needs at least 2 samples per axis")
        if not np.all((values >= 0.0) & (values <= 1.0)):
            raise ValueError("occupancy values must lie in [0, 1]")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def resolution(self) -> tuple[int, int, int]:
        return tuple(self.values.shape)

    def points(self) -> np.ndarray:
        """Sample positions, shape (nx, ny, nz, 3)."""
        idx = np.stack(np.meshgrid(*[np.arange(n) for n in self.resolution], indexing="ij"), -1)
        return self.origin + self.spacing * idx

    @classmethod
    def from_function(cls, fn, resolution, origin, spacing) -> "OccupancyGrid":
        idx = np.stack(np.meshgrid(*[np.arange(n) for n in resolution], indexing="ij"), -1)
        pts = np.asarray(origin, float) + spacing * idx
        return cls(fn(pts.reshape(-1, 3)).reshape(resolution), origin, spacing)

    def save(self, path) -> None:
        """Header of seven little-endian doubles, then float32 values, x-major."""
        nx, ny, nz = self.resolution
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(nx, ny, nz, *self.origin, self.spacing))
            fh.write(self.values.astype("<f4").tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "OccupancyGrid":
        data = Path(path).read_bytes()
        nx, ny, nz, ox, oy, oz, spacing = _HEADER.unpack_from(data)
        shape = (int(nx), int(ny), int(nz))
        vals = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
        if vals.size != np.prod(shape):
            raise ValueError(f"expected {np.prod(shape)} values, found {vals.size}")
        return cls(vals.reshape(shape).astype(np.float64), (ox, oy, oz), spacing)


def occupancy_bce(pred, gt) -> float:
    """Class-balanced occupancy BCE.

    The positive term is weighted by the fraction of outside points in the
    batch and the negative term by its complement. Returned as a positive loss.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=np.float64).ravel()
    if pred.size == 0:
        raise ValueError("empty batch")
    if pred.shape != gt.shape:
        raise ValueError("pred and gt lengths differ")
    if np.any((pred <= 0) | (pred >= 1)):
        raise ValueError("predicted occupancies must lie strictly inside (0, 1)")
    gamma = float(np.mean(gt == 0))
    terms = gamma * gt * np.log(pred) + (1 - gamma) * (1 - gt) * np.log1p(-pred)
    return float(-terms.mean())
