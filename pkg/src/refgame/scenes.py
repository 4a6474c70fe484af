"""Scene specifications and deterministic rasterization.

One scene is a single colored shape on a black 64x64 frame. Rasterization is
pure: pixel centers are tested against the exact shape boundary, with no
antialiasing, so the same spec always produces the same bytes. In the
low-salience regime the silhouette is drawn in a neutral gray and the shape's
palette color appears at exactly one pixel.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import GenerationError


class Color(Enum):
    RED = (230, 30, 30)
    BLUE = (40, 80, 230)
    GREEN = (30, 180, 60)
    YELLOW = (235, 220, 40)
    GRAY = (150, 150, 150)
    WHITE = (250, 250, 250)

    @property
    def rgb(self) -> tuple[int, int, int]:
        return self.value


class Shape(Enum):
    CIRCLE = "circle"
    SQUARE = "square"
    TRIANGLE = "triangle"
    ELLIPSE = "ellipse"


BACKGROUND_RGB = (0, 0, 0)
NEUTRAL_FILL_RGB = (110, 110, 110)

# Ellipses get a horizontal major axis with this aspect range so they stay
# visually related to, but distinguishable from, circles (aspect 1).
ELLIPSE_ASPECT_RANGE = (1.5, 2.5)


@dataclass(frozen=True)
class EnvironmentConfig:
    """Feature distribution and rendering regime a dataset is drawn from."""

    distribution: str = "uniform"  # "uniform" | "typicality"
    typical_shape: str = Shape.CIRCLE.value
    typical_color: str = Color.RED.name.lower()
    typicality_rate: float = 0.9
    salience: str = "high"  # "high" | "low"
    image_side: int = 64
    size_min: int = 16
    size_max: int = 40
    seed: int = 0

    def __post_init__(self):
        if self.distribution not in ("uniform", "typicality"):
            raise GenerationError(f"unknown distribution {self.distribution!r}")
        if self.salience not in ("high", "low"):
            raise GenerationError(f"unknown salience {self.salience!r}")
        if not 0.0 < self.typicality_rate < 1.0:
            raise GenerationError("typicality rate must lie in (0, 1)")
        if not 0 < self.size_min <= self.size_max < self.image_side:
            raise GenerationError("size range must fit inside the frame")


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to re-render one referent deterministically."""

    color: Color
    shape: Shape
    size: int  # bounding-box side (major axis for ellipses), pixels
    center: tuple[int, int]  # (x, y) pixel coordinates
    aspect: float = 1.0  # major/minor axis ratio; 1 except for ellipses
    salience_pixel: tuple[int, int] | None = None  # low-salience regime only


def _half_extents(spec: SceneSpec) -> tuple[float, float]:
    if spec.shape is Shape.ELLIPSE:
        return spec.size / 2.0, spec.size / (2.0 * spec.aspect)
    return spec.size / 2.0, spec.size / 2.0


def shape_mask(spec: SceneSpec, side: int) -> np.ndarray:
    """Boolean (side, side) array of filled pixels, sampled at pixel centers."""
    cx, cy = spec.center
    xs = np.arange(side) + 0.5 - cx  # columns
    ys = np.arange(side) + 0.5 - cy  # rows
    X, Y = np.meshgrid(xs, ys)
    hx, hy = _half_extents(spec)
    if spec.shape is Shape.CIRCLE:
        return X * X + Y * Y <= hx * hx
    if spec.shape is Shape.ELLIPSE:
        return (X / hx) ** 2 + (Y / hy) ** 2 <= 1.0
    if spec.shape is Shape.SQUARE:
        return (np.abs(X) <= hx) & (np.abs(Y) <= hy)
    if spec.shape is Shape.TRIANGLE:
        # Upward isosceles triangle inscribed in the bounding box: apex at
        # the top edge midpoint, base along the bottom edge.
        inside = Y <= hy
        # Left edge from apex (0, -hy) to (-hx, hy); right edge mirrored.
        inside &= (Y + hy) * hx >= -2.0 * hy * X
        inside &= (Y + hy) * hx >= 2.0 * hy * X
        return inside
    raise GenerationError(f"unknown shape {spec.shape}")


def render(spec: SceneSpec, env: EnvironmentConfig) -> np.ndarray:
    """Rasterize to a (side, side, 3) uint8 image; background stays (0,0,0)."""
    side = env.image_side
    mask = shape_mask(spec, side)
    img = np.zeros((side, side, 3), dtype=np.uint8)
    if env.salience == "high":
        img[mask] = spec.color.rgb
    else:
        if spec.salience_pixel is None:
            raise GenerationError("low-salience scene lacks a salience pixel")
        img[mask] = NEUTRAL_FILL_RGB
        px, py = spec.salience_pixel
        if not mask[py, px]:
            raise GenerationError("salience pixel falls outside the shape")
        img[py, px] = spec.color.rgb
    return img


def sample_scene(rng: np.random.Generator, env: EnvironmentConfig,
                 color: Color | None = None, shape: Shape | None = None) -> SceneSpec:
    """Draw a scene: features uniform unless constrained, size uniform in the
    configured range, position uniform subject to full containment."""
    colors = list(Color)
    shapes = list(Shape)
    c = color if color is not None else colors[rng.integers(len(colors))]
    s = shape if shape is not None else shapes[rng.integers(len(shapes))]
    size = int(rng.integers(env.size_min, env.size_max + 1))
    aspect = 1.0
    if s is Shape.ELLIPSE:
        lo, hi = ELLIPSE_ASPECT_RANGE
        aspect = float(rng.uniform(lo, hi))
    hx = size / 2.0
    hy = size / (2.0 * aspect) if s is Shape.ELLIPSE else hx
    mx, my = int(np.ceil(hx)), int(np.ceil(hy))
    if 2 * mx >= env.image_side or 2 * my >= env.image_side:
        raise GenerationError(f"size {size} cannot fit inside the frame")
    cx = int(rng.integers(mx, env.image_side - mx + 1))
    cy = int(rng.integers(my, env.image_side - my + 1))
    spec = SceneSpec(color=c, shape=s, size=size, center=(cx, cy), aspect=aspect)
    if env.salience == "low":
        mask = shape_mask(spec, env.image_side)
        rows, cols = np.nonzero(mask)
        pick = int(rng.integers(len(rows)))
        spec = SceneSpec(color=c, shape=s, size=size, center=(cx, cy), aspect=aspect,
                         salience_pixel=(int(cols[pick]), int(rows[pick])))
    return spec
