"""Triangle meshing of polygonal outlines with holes.

Grid points at the nominal spacing plus points sampled along the hole edges are
Delaunay-triangulated; triangles whose centroid falls in a hole are discarded.
"""

import logging

import numpy as np
from scipy.spatial import Delaunay

from func.errors import MeshError

##Grid points closer than this fraction of the spacing to a hole edge are dropped
EDGE_CLEARANCE = 0.35


def _sampleEdges(polygon, spacing):
    points = []
    for start, end in zip(polygon, np.roll(polygon, -1, axis=0)):
        count = max(1, int(np.ceil(np.linalg.norm(end - start) / spacing - 1e-9)))
        t = np.arange(count)[:, None] / count
        points.append(start + t * (end - start))
    return np.concatenate(points)


def _distanceToEdges(points, polygon):
    """Shortest distance from each point to the boundary segments of polygon."""
    best = np.full(len(points), np.inf)
    for start, end in zip(polygon, np.roll(polygon, -1, axis=0)):
        seg = end - start
        t = np.clip(((points - start) @ seg) / (seg @ seg), 0.0, 1.0)
        best = np.minimum(best, np.linalg.norm(points - (start + t[:, None] * seg), axis=1))
    return best


def meshOutline(outline, elementSize):
    """Node coordinates and counter-clockwise triangles covering the outline."""
    xmin, ymin, xmax, ymax = outline.bounds()
    width, height = xmax - xmin, ymax - ymin
    nx = int(round(width / elementSize))
    ny = int(round(height / elementSize))
    if nx < 1 or ny < 1 or abs(nx * elementSize - width) > 1e-9 * width or abs(ny * elementSize - height) > 1e-9 * height:
        raise MeshError(f"element size {elementSize} does not divide the {width} x {height} outline")

    gx, gy = np.meshgrid(np.linspace(xmin, xmax, nx + 1), np.linspace(ymin, ymax, ny + 1))
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    keep = np.ones(len(grid), dtype=bool)
    holePoints = []
    for hole in outline.holes:
        hole = np.asarray(hole, dtype=float)
        keep &= _distanceToEdges(grid, hole) > EDGE_CLEARANCE * elementSize
        holePoints.append(_sampleEdges(hole, elementSize))
    keep &= outline.contains(grid) | _onOuterBoundary(grid, outline)
    points = np.concatenate([grid[keep]] + holePoints)
    points = np.unique(np.round(points / elementSize, 9), axis=0) * elementSize

    triangles = Delaunay(points).simplices
    centroids = points[triangles].mean(axis=1)
    triangles = triangles[outline.contains(centroids)]

    ##Orient counter-clockwise
    coords = points[triangles]
    area2 = (coords[:, 1, 0] - coords[:, 0, 0]) * (coords[:, 2, 1] - coords[:, 0, 1]) - (
        coords[:, 2, 0] - coords[:, 0, 0]
    ) * (coords[:, 1, 1] - coords[:, 0, 1])
    triangles[area2 < 0] = triangles[area2 < 0][:, [0, 2, 1]]
    tiny = np.abs(area2) * 0.5 <= 1e-10 * outline.area()
    if tiny.any():
        raise MeshError(f"{int(tiny.sum())} degenerate triangles produced while meshing the outline")

    used = np.unique(triangles)
    renumber = np.full(len(points), -1, dtype=int)
    renumber[used] = np.arange(len(used))
    logging.info(f"Meshed outline with {len(triangles)} triangles at spacing {elementSize}")
    return points[used], renumber[triangles]


def _onOuterBoundary(points, outline):
    return _distanceToEdges(points, np.asarray(outline.outer, dtype=float)) < 1e-9 * max(
        outline.bounds()[2] - outline.bounds()[0], 1.0
    )
