"""Binary mask representation, RLE codec, and IoU kernels.

Masks are run-length encoded in column-major scan order. Runs alternate
between background and foreground starting with background; a mask whose
scan begins in foreground carries a leading zero-length background run.
All values here are immutable after construction and every operation is
pure, so they are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, MalformedRleError


@dataclass(frozen=True)
class RleMask:
    """Run-length encoded binary mask tied to a frame size."""

    height: int
    width: int
    counts: tuple[int, ...]

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise DimensionError(
                f"mask dimensions must be positive, got {self.height}x{self.width}"
            )
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if not counts:
            raise MalformedRleError("counts must be non-empty")
        if any(c < 0 for c in counts):
            raise MalformedRleError("run lengths must be non-negative")
        if any(c == 0 for c in counts[1:]):
            raise MalformedRleError(
                "zero-length run is only permitted in the leading position"
            )
        total = sum(counts)
        if total != self.height * self.width:
            raise MalformedRleError(
                f"run lengths sum to {total}, expected "
                f"{self.height}x{self.width}={self.height * self.width}"
            )

    @property
    def size(self) -> tuple[int, int]:
        return (self.height, self.width)

    def area(self) -> int:
        """Number of foreground pixels."""
        return sum(self.counts[1::2])


@dataclass(frozen=True)
class Box:
    """Axis-aligned box: top-left corner plus non-negative extent, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"box extent must be non-negative, got w={self.w} h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h


def rle_encode(mask) -> RleMask:
    """Encode a dense binary grid (rows x cols, nonzero = foreground)."""
    grid = np.asarray(mask)
    if grid.ndim != 2 or grid.size == 0:
        raise DimensionError(f"expected a non-empty 2-D grid, got shape {grid.shape}")
    flat = (grid != 0).reshape(-1, order="F")
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts = [0] + counts
    return RleMask(height=grid.shape[0], width=grid.shape[1], counts=tuple(counts))


def rle_decode(rle: RleMask) -> np.ndarray:
    """Decode to a dense boolean grid of the declared size."""
    values = np.zeros(len(rle.counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, rle.counts)
    return flat.reshape((rle.height, rle.width), order="F")


def _foreground_segments(counts):
    """Half-open [start, end) spans of foreground pixels in scan order."""
    segments = []
    pos = 0
    for i, c in enumerate(counts):
        if i % 2 == 1:
            segments.append((pos, pos + c))
        pos += c
    return segments


def rle_intersection_area(a: RleMask, b: RleMask) -> int:
    """Foreground overlap of two masks, computed directly on the runs."""
    if a.size != b.size:
        raise DimensionError(f"mask sizes differ: {a.size} vs {b.size}")
    sa = _foreground_segments(a.counts)
    sb = _foreground_segments(b.counts)
    total = 0
    i = j = 0
    while i < len(sa) and j < len(sb):
        a0, a1 = sa[i]
        b0, b1 = sb[j]
        lo = max(a0, b0)
        hi = min(a1, b1)
        if hi > lo:
            total += hi - lo
        if a1 <= b1:
            i += 1
        else:
            j += 1
    return total


def mask_iou(a: RleMask, b: RleMask) -> float:
    """Intersection over union of two same-size masks; 0 when both are empty."""
    inter = rle_intersection_area(a, b)
    union = a.area() + b.area() - inter
    if union == 0:
        return 0.0
    return inter / union


def box_iou(a: Box, b: Box) -> float:
    """Rectangle IoU; 0 whenever either box has zero area."""
    area_a = a.area
    area_b = b.area
    if area_a <= 0 or area_b <= 0:
        return 0.0
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (area_a + area_b - inter)


def tight_box(rle: RleMask) -> Box:
    """Smallest box enclosing the foreground; zero box for an empty mask."""
    rows, cols = np.nonzero(rle_decode(rle))
    if rows.size == 0:
        return Box(0.0, 0.0, 0.0, 0.0)
    x = int(cols.min())
    y = int(rows.min())
    return Box(float(x), float(y), float(int(cols.max()) - x + 1), float(int(rows.max()) - y + 1))
