import numpy as np
import pytest
from numpy.testing import assert_allclose

from func.contourCodec import (
    BACKGROUND,
    CanvasLayout,
    ContourMap,
    ImageTriple,
    SamplePair,
    augment,
    decode,
    dequantize,
    fitContourMap,
    interiorMask,
    loadPixels,
    quantize,
    rasterize,
)
from func.errors import DataError
from func.fem2d import LoadCase, StressField, buildMeshCantilever, solve


def fieldOf(mesh, sx, sy=None, txy=None):
    zeros = np.zeros(mesh.nodeCount)
    return StressField(mesh, sx, zeros if sy is None else sy, zeros if txy is None else txy)


def linearField(mesh):
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    return fieldOf(mesh, 3.0 * x + 2.0 * y, x - y, 0.25 * y)


def rectangleImage(height, width, rows, cols, value=0.5, caseId="rect"):
    channels = np.full((3, height, width), BACKGROUND)
    channels[:, rows[0]:rows[1], cols[0]:cols[1]] = value
    return ImageTriple(channels, ContourMap(1.0, -0.5), caseId)


class TestContourMap:
    def test_symmetric_range_maps_zero_to_half(self, smallCantilever):
        field = fieldOf(smallCantilever, np.linspace(-7.0, 7.0, smallCantilever.nodeCount))
        contourMap = fitContourMap(field)
        assert contourMap.toIntensity(0.0) == pytest.approx(0.5)
        assert contourMap.toIntensity(7.0) == pytest.approx(0.95)

    def test_positive_range(self, smallCantilever):
        field = fieldOf(smallCantilever, np.linspace(0.0, 4.0, smallCantilever.nodeCount))
        contourMap = fitContourMap(field)
        assert contourMap.toIntensity(0.0) == pytest.approx(0.05)
        assert contourMap.toIntensity(4.0) == pytest.approx(0.95)

    def test_zero_field(self, smallCantilever):
        contourMap = fitContourMap(fieldOf(smallCantilever, np.zeros(smallCantilever.nodeCount)))
        assert contourMap.C == 1.0
        assert contourMap.toIntensity(0.0) == pytest.approx(0.5)

    def test_constant_field_is_representable(self, smallCantilever):
        contourMap = fitContourMap(fieldOf(smallCantilever, np.full(smallCantilever.nodeCount, 3.0)))
        assert 0.0 <= contourMap.toIntensity(3.0) <= 1.0
        assert 0.0 <= contourMap.toIntensity(0.0) <= 1.0

    def test_decode_examples(self):
        assert ContourMap(1.0, 0.0).toStress(0.5) == pytest.approx(0.5)
        assert ContourMap(2.0, -0.25).toStress(0.0) == pytest.approx(-0.5)

    def test_zero_scale_rejected(self):
        with pytest.raises(ValueError):
            ContourMap(0.0, 0.1)

    def test_inverted_map_decodes_complement(self):
        contourMap = ContourMap(3.0, -0.2)
        intensity = np.linspace(0.0, 1.0, 11)
        assert_allclose(contourMap.inverted().toStress(1.0 - intensity), contourMap.toStress(intensity))

    def test_dict_round_trip(self):
        contourMap = ContourMap(2.5, -0.1)
        assert ContourMap.fromDict(contourMap.toDict()) == contourMap


class TestRasterize:
    def test_linear_field_decodes_exactly(self, smallCantilever):
        field = linearField(smallCantilever)
        contourMap = fitContourMap(field)
        layout = CanvasLayout.forOutline(smallCantilever.outline, 32, 64)
        image = rasterize(field, contourMap, layout, "linear")
        assert image.isValid()
        centers = layout.pixelCenters()[image.footprint]
        x, y = centers[:, 0], centers[:, 1]
        decoded = decode(image)
        assert_allclose(decoded[0][image.footprint], 3.0 * x + 2.0 * y, atol=1e-9)
        assert_allclose(decoded[1][image.footprint], x - y, atol=1e-9)
        assert_allclose(decoded[2][image.footprint], 0.25 * y, atol=1e-9)

    def test_background_is_white_and_masked(self, smallCantilever):
        layout = CanvasLayout.forOutline(smallCantilever.outline, 48, 64)
        image = rasterize(linearField(smallCantilever), fitContourMap(linearField(smallCantilever)), layout)
        assert layout.rowOffset == 8
        assert not image.footprint[:8].any()
        assert np.all(image.channels[:, ~image.footprint] == BACKGROUND)
        assert decode(image).mask[:, 0, 0].all()

    def test_coarse_and_fine_share_footprint(self, smallCantilever):
        fine = buildMeshCantilever(1.0, 0.1)
        layout = CanvasLayout.forOutline(smallCantilever.outline, 32, 64)
        a = rasterize(linearField(smallCantilever), ContourMap(10.0, 0.0), layout)
        b = rasterize(linearField(fine), ContourMap(10.0, 0.0), layout)
        assert np.array_equal(a.footprint, b.footprint)

    def test_canvas_too_small(self, smallCantilever):
        layout = CanvasLayout.forOutline(smallCantilever.outline, 4, 8)
        with pytest.raises(DataError, match="canvas too small"):
            rasterize(linearField(smallCantilever), ContourMap(10.0, 0.0), layout)

    def test_load_pixels_cover_stencil(self, smallCantilever, material):
        field = solve(smallCantilever, material, LoadCase("fixed", "concentrated", "y", 0.6))
        layout = CanvasLayout.forOutline(smallCantilever.outline, 32, 64)
        pixels = loadPixels(field, layout)
        assert [12, 63] in pixels.tolist()
        assert len(pixels[pixels[:, 1] > 32]) == 4
        assert sorted(map(tuple, pixels[pixels[:, 1] < 32].tolist())) == [(0, 0), (0, 1), (1, 0), (30, 0), (31, 0), (31, 1)]

    def test_sliding_pin_is_a_singular_point(self, smallCantilever, material):
        field = solve(smallCantilever, material, LoadCase("sliding", "distributed", "y", "tip"))
        layout = CanvasLayout.forOutline(smallCantilever.outline, 32, 64)
        pin = layout.pointPixels(smallCantilever.nodes[smallCantilever.boundarySets["rootMid"]])[0]
        pixels = {tuple(p) for p in loadPixels(field, layout, singularRadius=3.0).tolist()}
        disk = {(int(pin[0]) + dr, int(pin[1]) + dc) for dr in range(-3, 4) for dc in range(-3, 4)
                if dr * dr + dc * dc <= 9 and 0 <= pin[1] + dc < 64}
        assert disk <= pixels
        assert field.singularNodes.tolist() == smallCantilever.boundarySets["rootMid"].tolist()

    def test_distributed_edge_keeps_the_stencil_ring(self, smallCantilever, material):
        field = solve(smallCantilever, material, LoadCase("fixed", "distributed", "y", "tip"))
        layout = CanvasLayout.forOutline(smallCantilever.outline, 32, 64)
        root = smallCantilever.boundarySets["root"]
        assert field.singularNodes.tolist() == sorted([int(root[0]), int(root[-1])])
        pixels = loadPixels(field, layout, singularRadius=5.0)
        assert set(pixels[:, 1].tolist()) == {0, 1, 2, 3, 4, 5, 62, 63}

    def test_quantization_stays_within_one_step(self, smallCantilever):
        field = linearField(smallCantilever)
        contourMap = fitContourMap(field)
        image = rasterize(field, contourMap, CanvasLayout.forOutline(smallCantilever.outline, 32, 64))
        restored = dequantize(quantize(image), contourMap, image.caseId, image.footprint)
        assert np.abs(restored.channels - image.channels).max() <= 0.5 / 255 + 1e-12


class TestInteriorMask:
    def test_rectangle_is_eroded(self):
        image = rectangleImage(12, 16, (2, 8), (3, 11))
        expected = np.zeros((12, 16), dtype=bool)
        expected[3:7, 4:10] = True
        mask = interiorMask(image)
        assert np.array_equal(mask.mask, expected)
        assert mask.count == 24

    def test_load_pixels_are_removed(self):
        image = rectangleImage(12, 16, (2, 8), (3, 11))
        mask = interiorMask(image, loadPixelSet=[[4, 5]])
        assert not mask.mask[4, 5]
        assert mask.count == 23

    def test_single_hole_excludes_its_ring(self):
        image = rectangleImage(14, 18, (1, 13), (1, 17))
        image.channels[:, 7, 9] = BACKGROUND
        interior = image.channels[0] < 0.98
        expected = np.zeros_like(interior)
        for r in range(1, 13):
            for c in range(1, 17):
                expected[r, c] = all(interior[r + dr, c + dc] for dr, dc in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)))
        mask = interiorMask(image)
        assert np.array_equal(mask.mask, expected)
        assert not any(mask.mask[r, c] for r, c in ((7, 9), (6, 9), (8, 9), (7, 8), (7, 10)))
        assert mask.mask[6, 8] and mask.mask[5, 9]

    def test_all_background(self):
        image = ImageTriple(np.ones((3, 8, 8)), ContourMap(1.0, -0.5), "empty")
        assert interiorMask(image).count == 0

    def test_near_white_pixels_are_background(self):
        image = rectangleImage(12, 16, (2, 8), (3, 11), value=0.99)
        assert interiorMask(image, epsilon=0.02).count == 0

    def test_epsilon_range(self):
        with pytest.raises(ValueError):
            interiorMask(rectangleImage(8, 8, (2, 6), (2, 6)), epsilon=0.6)


class TestAugment:
    @pytest.fixture
    def pair(self, rng):
        footprint = np.zeros((8, 12), dtype=bool)
        footprint[1:7, 2:11] = True
        footprint[1:3, 8:11] = False

        def triple(caseId):
            channels = np.full((3, 8, 12), BACKGROUND)
            channels[:, footprint] = rng.uniform(0.05, 0.95, size=(3, int(footprint.sum())))
            return ImageTriple(channels, ContourMap(4.0, -0.3), caseId, footprint)

        return SamplePair(triple("case"), triple("case"), np.array([[3, 4]]), "")

    def test_eight_distinct_lineages(self, pair):
        samples = augment(pair)
        assert [s.lineage for s in samples] == ["o", "i", "v", "vi", "h", "hi", "hv", "hvi"]
        assert samples[0].fine.caseId == "case__o"
        assert np.array_equal(samples[0].fine.channels, pair.fine.channels)

    def test_horizontal_flip(self, pair):
        flipped = {s.lineage: s for s in augment(pair)}["h"]
        assert np.array_equal(flipped.coarse.channels, pair.coarse.channels[:, :, ::-1])
        assert flipped.loadPixels.tolist() == [[3, 7]]

    def test_double_flip_is_identity(self, pair):
        flipped = {s.lineage: s for s in augment(pair)}["h"]
        twice = {s.lineage: s for s in augment(flipped)}["h"]
        assert np.array_equal(twice.fine.channels, pair.fine.channels)
        assert twice.loadPixels.tolist() == pair.loadPixels.tolist()

    def test_inversion_decodes_to_same_stress(self, pair):
        inverted = {s.lineage: s for s in augment(pair)}["i"]
        assert_allclose(decode(inverted.fine).filled(0.0), decode(pair.fine).filled(0.0))
        assert np.all(inverted.fine.channels[:, ~pair.fine.footprint] == BACKGROUND)

    def test_footprint_mismatch(self, pair):
        footprint = pair.fine.footprint.copy()
        footprint[4, 4] = False
        broken = SamplePair(pair.coarse, ImageTriple(pair.fine.channels, pair.fine.contourMap, "case", footprint))
        with pytest.raises(DataError):
            augment(broken)
