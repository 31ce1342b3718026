"""Grayscale contour images of stress fields.

Intensity and stress are related per analysis case k by the linear contour map
sigma = C_k * (I + s_k), shared by the sigma_x, sigma_y and tau_xy channels.
Background pixels are white (intensity 1). Image arrays are (3, height, width)
with row 0 at the top of the picture.
"""

import logging
from dataclasses import asdict, dataclass, field, replace

import matplotlib.tri as mtri
import numpy as np
from scipy.spatial import cKDTree

from func.errors import DataError
from func.fem2d import QUAD4, quadShape, quadShapeDerivatives

BACKGROUND = 1.0
LOW_INTENSITY = 0.05
HIGH_INTENSITY = 0.95
CHANNEL_NAMES = ("sx", "sy", "txy")
MIN_ELEMENT_PIXELS = 2.0


@dataclass(frozen=True)
class ContourMap:
    C: float
    s: float
    background: float = BACKGROUND

    def __post_init__(self):
        if self.C == 0 or not np.isfinite(self.C) or not np.isfinite(self.s):
            raise ValueError(f"invalid contour map C={self.C}, s={self.s}")

    def toIntensity(self, stress):
        return np.asarray(stress) / self.C - self.s

    def toStress(self, intensity):
        return self.C * (np.asarray(intensity) + self.s)

    def inverted(self):
        """Map that decodes 1 - I to the stress the original map gives for I."""
        return ContourMap(-self.C, -1.0 - self.s, self.background)

    def toDict(self):
        return {"C": self.C, "s": self.s}

    @classmethod
    def fromDict(cls, data):
        return cls(float(data["C"]), float(data["s"]))


@dataclass(frozen=True)
class CanvasLayout:
    """Uniform-scale placement of a geometry's bounding box, centered on the canvas."""

    height: int
    width: int
    scale: float
    rowOffset: int
    colOffset: int
    footHeight: int
    footWidth: int
    xmin: float
    ymin: float

    @classmethod
    def forOutline(cls, outline, height, width):
        xmin, ymin, xmax, ymax = outline.bounds()
        scale = min(width / (xmax - xmin), height / (ymax - ymin))
        footWidth = int(round((xmax - xmin) * scale))
        footHeight = int(round((ymax - ymin) * scale))
        return cls(height, width, scale, (height - footHeight) // 2, (width - footWidth) // 2,
                   footHeight, footWidth, xmin, ymin)

    def pixelCenters(self):
        """Physical (x, y) of every pixel center, shape (height, width, 2)."""
        rows, cols = np.mgrid[0:self.height, 0:self.width]
        x = self.xmin + (cols - self.colOffset + 0.5) / self.scale
        y = self.ymin + (self.footHeight - (rows - self.rowOffset) - 0.5) / self.scale
        return np.stack([x, y], axis=-1)

    def pointPixels(self, points):
        """(row, col) of the footprint pixel containing each point."""
        points = np.atleast_2d(points)
        cols = self.colOffset + np.floor((points[:, 0] - self.xmin) * self.scale).astype(int)
        rows = self.rowOffset + self.footHeight - 1 - np.floor((points[:, 1] - self.ymin) * self.scale).astype(int)
        cols = np.clip(cols, self.colOffset, self.colOffset + self.footWidth - 1)
        rows = np.clip(rows, self.rowOffset, self.rowOffset + self.footHeight - 1)
        return np.column_stack([rows, cols])

    def toDict(self):
        return asdict(self)


@dataclass
class ImageTriple:
    channels: np.ndarray
    contourMap: ContourMap
    caseId: str
    footprint: np.ndarray = None

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=float)
        if self.channels.ndim != 3 or self.channels.shape[0] != 3:
            raise ValueError(f"image triple needs (3, height, width) channels, got {self.channels.shape}")
        if self.footprint is None:
            self.footprint = (self.channels < BACKGROUND).any(axis=0)

    @property
    def height(self):
        return self.channels.shape[1]

    @property
    def width(self):
        return self.channels.shape[2]

    def isValid(self):
        inRange = bool(np.all((self.channels >= 0.0) & (self.channels <= 1.0)))
        background = ~self.footprint
        sharedBackground = bool(np.all(self.channels[:, background] == BACKGROUND))
        return inRange and sharedBackground


@dataclass
class InteriorMask:
    mask: np.ndarray

    @property
    def height(self):
        return self.mask.shape[0]

    @property
    def width(self):
        return self.mask.shape[1]

    @property
    def count(self):
        return int(self.mask.sum())


@dataclass
class SamplePair:
    coarse: ImageTriple
    fine: ImageTriple
    loadPixels: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    lineage: str = ""


# ----------------------------------
# Contour map
# ----------------------------------
def fitContourMap(stressField):
    """Contour map sending the field's overall min and max to intensities 0.05 and 0.95."""
    values = stressField.components()
    if values.size == 0:
        raise ValueError("stress field has no nodes")
    low, high = float(values.min()), float(values.max())
    if high == low:
        if low == 0.0:
            return ContourMap(1.0, -0.5)
        low, high = -abs(low), abs(low)
    C = (high - low) / (HIGH_INTENSITY - LOW_INTENSITY)
    return ContourMap(C, low / C - LOW_INTENSITY)


# ----------------------------------
# Rasterization
# ----------------------------------
def _lookupTriangles(mesh):
    if mesh.elementKind == QUAD4:
        triangles = np.concatenate([mesh.elements[:, [0, 1, 2]], mesh.elements[:, [0, 2, 3]]])
        parents = np.concatenate([np.arange(mesh.elementCount)] * 2)
    else:
        triangles, parents = mesh.elements, np.arange(mesh.elementCount)
    return mtri.Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1], triangles), parents


def _quadNatural(coords, points, iterations=12):
    """Invert the bilinear map of each quad for one point each (Newton iterations)."""
    xi = np.zeros(len(points))
    eta = np.zeros(len(points))
    for _ in range(iterations):
        residual = points - np.einsum("kn,knb->kb", quadShape(xi, eta), coords)
        J = np.einsum("kan,knb->kab", quadShapeDerivatives(xi, eta), coords)
        step = np.linalg.solve(np.swapaxes(J, 1, 2), residual[..., None])[..., 0]
        xi, eta = xi + step[:, 0], eta + step[:, 1]
        if np.max(np.abs(step), initial=0.0) < 1e-13:
            break
    return np.clip(xi, -1.0, 1.0), np.clip(eta, -1.0, 1.0)


def _triWeights(coords, points):
    x0 = coords[:, 0]
    T = np.stack([coords[:, 1] - x0, coords[:, 2] - x0], axis=-1)
    l12 = np.linalg.solve(T, (points - x0)[..., None])[..., 0]
    weights = np.column_stack([1.0 - l12.sum(axis=1), l12])
    weights = np.clip(weights, 0.0, None)
    return weights / weights.sum(axis=1, keepdims=True)


def shapeWeights(mesh, points):
    """Containing element and interpolation weights for each point.

    Points that no element contains (curved-boundary approximations) fall back to
    the element with the nearest centroid, evaluated at the clamped natural point.
    """
    triangulation, parents = _lookupTriangles(mesh)
    found = triangulation.get_trifinder()(points[:, 0], points[:, 1])
    elements = np.where(found >= 0, parents[np.maximum(found, 0)], -1)
    missing = elements < 0
    if missing.any():
        centroids = mesh.nodes[mesh.elements].mean(axis=1)
        _, nearest = cKDTree(centroids).query(points[missing])
        elements[missing] = nearest
        logging.info(f"Nearest-element fallback for {int(missing.sum())} boundary pixels")
    coords = mesh.nodes[mesh.elements[elements]]
    if mesh.elementKind == QUAD4:
        xi, eta = _quadNatural(coords, points)
        weights = quadShape(xi, eta)
    else:
        weights = _triWeights(coords, points)
    return elements, weights


def rasterize(stressField, contourMap, layout, caseId=""):
    """Contour image triple of a nodal stress field on the given canvas layout."""
    mesh = stressField.mesh
    if mesh.elementSize * layout.scale < MIN_ELEMENT_PIXELS:
        raise DataError(
            f"canvas too small: element size {mesh.elementSize} covers "
            f"{mesh.elementSize * layout.scale:.2f} px, need {MIN_ELEMENT_PIXELS}"
        )
    centers = layout.pixelCenters().reshape(-1, 2)
    footprint = mesh.outline.contains(centers)
    points = centers[footprint]
    elements, weights = shapeWeights(mesh, points)
    nodal = stressField.components()[:, mesh.elements[elements]]
    values = np.einsum("ckn,kn->ck", nodal, weights)

    intensity = contourMap.toIntensity(values)
    clamped = int(np.sum((intensity < 0.0) | (intensity > 1.0)))
    if clamped:
        logging.warning(f"{caseId}: {clamped} channel intensities clamped to [0, 1]")
    channels = np.full((3, layout.height * layout.width), BACKGROUND)
    channels[:, footprint] = np.clip(intensity, 0.0, 1.0)
    return ImageTriple(
        channels.reshape(3, layout.height, layout.width),
        contourMap,
        caseId,
        footprint.reshape(layout.height, layout.width),
    )


def _diskOffsets(radius):
    reach = int(np.floor(radius))
    rows, cols = np.mgrid[-reach:reach + 1, -reach:reach + 1]
    inside = rows**2 + cols**2 <= radius**2
    return np.column_stack([rows[inside], cols[inside]])


def loadPixels(stressField, layout, singularRadius=1.0):
    """Pixels the physical loss must skip because an external point force acts there.

    Every loaded node takes its 5-point stencil neighbours with it. Singular nodes
    (concentrated loads and support pins) take every pixel within singularRadius
    pixels, never less than the stencil.
    """
    nodes = stressField.mesh.nodes
    stencil = _diskOffsets(1.0)
    disk = _diskOffsets(max(1.0, float(singularRadius)))
    hit = layout.pointPixels(nodes[stressField.loadNodes]) if len(stressField.loadNodes) else np.zeros((0, 2), dtype=int)
    pixels = (hit[:, None, :] + stencil[None, :, :]).reshape(-1, 2)
    if len(stressField.singularNodes):
        singular = layout.pointPixels(nodes[stressField.singularNodes])
        pixels = np.concatenate([pixels, (singular[:, None, :] + disk[None, :, :]).reshape(-1, 2)])
    inside = (pixels[:, 0] >= 0) & (pixels[:, 0] < layout.height) & (pixels[:, 1] >= 0) & (pixels[:, 1] < layout.width)
    return np.unique(pixels[inside], axis=0)


# ----------------------------------
# Decoding and masks
# ----------------------------------
def decode(image):
    """Pixel stress rasters of an image triple; background pixels are masked out."""
    stress = image.contourMap.toStress(image.channels)
    background = np.broadcast_to(~image.footprint, stress.shape).copy()
    return np.ma.masked_array(stress, mask=background)


def _pixelRaster(pixels, height, width):
    raster = np.zeros((height, width), dtype=bool)
    pixels = np.asarray(pixels, dtype=int).reshape(-1, 2)
    if len(pixels):
        raster[pixels[:, 0], pixels[:, 1]] = True
    return raster


def interiorMask(image, epsilon=0.02, loadPixelSet=()):
    """Pixels whose whole 5-point stencil is interior, minus the load pixels.

    A pixel is interior when its sigma_x intensity is below 1 - epsilon.
    """
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    interior = image.channels[0] < 1.0 - epsilon
    mask = np.zeros_like(interior)
    mask[1:-1, 1:-1] = (
        interior[1:-1, 1:-1]
        & interior[2:, 1:-1]
        & interior[:-2, 1:-1]
        & interior[1:-1, 2:]
        & interior[1:-1, :-2]
    )
    mask &= ~_pixelRaster(loadPixelSet, image.height, image.width)
    return InteriorMask(mask)


# ----------------------------------
# Augmentation
# ----------------------------------
def _flipImage(image, axis):
    return replace(
        image,
        channels=np.flip(image.channels, axis=axis + 1).copy(),
        footprint=np.flip(image.footprint, axis=axis).copy(),
    )


def _invertImage(image):
    channels = image.channels.copy()
    channels[:, image.footprint] = 1.0 - channels[:, image.footprint]
    return replace(image, channels=channels, contourMap=image.contourMap.inverted())


def augment(pair):
    """The sample and its 7 flip / inversion variants, applied alike to coarse and fine.

    Shear channels are mirrored like the normal ones, without a sign change.
    """
    if not np.array_equal(pair.coarse.footprint, pair.fine.footprint):
        raise DataError(f"{pair.fine.caseId}: coarse and fine footprints differ")
    height, width = pair.fine.height, pair.fine.width
    samples = []
    for flipH in (False, True):
        for flipV in (False, True):
            for invert in (False, True):
                lineage = ("h" if flipH else "") + ("v" if flipV else "") + ("i" if invert else "")
                coarse, fine, pixels = pair.coarse, pair.fine, np.array(pair.loadPixels, dtype=int).reshape(-1, 2)
                if flipH:
                    coarse, fine = _flipImage(coarse, 1), _flipImage(fine, 1)
                    pixels = np.column_stack([pixels[:, 0], width - 1 - pixels[:, 1]])
                if flipV:
                    coarse, fine = _flipImage(coarse, 0), _flipImage(fine, 0)
                    pixels = np.column_stack([height - 1 - pixels[:, 0], pixels[:, 1]])
                if invert:
                    coarse, fine = _invertImage(coarse), _invertImage(fine)
                suffix = f"__{lineage or 'o'}"
                samples.append(SamplePair(
                    replace(coarse, caseId=pair.coarse.caseId + suffix),
                    replace(fine, caseId=pair.fine.caseId + suffix),
                    pixels,
                    lineage or "o",
                ))
    return samples


# ----------------------------------
# 8-bit export
# ----------------------------------
def quantize(image):
    return np.round(np.clip(image.channels, 0.0, 1.0) * 255.0).astype(np.uint8)


def dequantize(raw, contourMap, caseId="", footprint=None):
    channels = np.asarray(raw, dtype=float) / 255.0
    return ImageTriple(channels, contourMap, caseId, footprint)
