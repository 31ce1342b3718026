import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from func.contourCodec import BACKGROUND, ContourMap, ImageTriple
from func.errors import DataError
from func.imageFiles import (
    channelFileName,
    loadChannelExports,
    loadImageTriple,
    readPgm,
    readPng,
    saveImageTriple,
    writePgm,
    writePng,
)


@pytest.fixture
def image(rng):
    channels = np.full((3, 16, 24), BACKGROUND)
    channels[:, 4:12, 3:21] = rng.uniform(0.05, 0.95, size=(3, 8, 18))
    return ImageTriple(channels, ContourMap(12.5, -0.4), "cantilever_fixed_conc_y_i3__o")


class TestRasterFiles:
    def test_pgm(self, tmp_path, rng):
        raster = rng.integers(0, 256, size=(5, 7), dtype=np.uint8)
        writePgm(tmp_path / "a.pgm", raster)
        assert np.array_equal(readPgm(tmp_path / "a.pgm"), raster)
        assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5\n7 5\n255\n")

    def test_pgm_with_comment(self, tmp_path):
        (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
        assert readPgm(tmp_path / "c.pgm").tolist() == [[0, 255]]

    def test_ascii_pgm_rejected(self, tmp_path):
        (tmp_path / "b.pgm").write_bytes(b"P2\n1 1\n255\n0\n")
        with pytest.raises(DataError):
            readPgm(tmp_path / "b.pgm")

    def test_png(self, tmp_path, rng):
        raster = rng.integers(0, 256, size=(6, 4), dtype=np.uint8)
        writePng(tmp_path / "a.png", raster)
        assert np.array_equal(readPng(tmp_path / "a.png"), raster)


class TestImageTriple:
    def test_save_and_load(self, tmp_path, image):
        sidecarPath = saveImageTriple(image, tmp_path, "coarse", loadPixels=[[5, 20]], lineage="o")
        restored, sidecar = loadImageTriple(sidecarPath)
        assert_allclose(restored.channels, image.channels, atol=1e-6)
        assert np.array_equal(restored.footprint, image.footprint)
        assert restored.contourMap == image.contourMap
        assert sidecar["loadPixels"] == [[5, 20]]
        assert sidecar["lineage"] == "o"
        for channel in ("sx", "sy", "txy"):
            assert (tmp_path / channelFileName(image.caseId, channel, "coarse")).exists()
            assert (tmp_path / channelFileName(image.caseId, channel, "coarse", "png")).exists()

    def test_channel_exports_within_one_step(self, tmp_path, image):
        saveImageTriple(image, tmp_path, "fine", exports=("pgm",))
        paths = [str(tmp_path / channelFileName(image.caseId, c, "fine")) for c in ("sx", "sy", "txy")]
        restored = loadChannelExports(paths, image.contourMap, image.caseId)
        assert np.abs(restored.channels - image.channels).max() <= 0.5 / 255 + 1e-12

    def test_missing_raster(self, tmp_path, image):
        sidecarPath = saveImageTriple(image, tmp_path, "coarse")
        (tmp_path / f"{image.caseId}_coarse.npz").unlink()
        with pytest.raises(DataError):
            loadImageTriple(sidecarPath)

    def test_sidecar_shape_mismatch(self, tmp_path, image):
        sidecarPath = saveImageTriple(image, tmp_path, "coarse")
        with open(sidecarPath) as f:
            sidecar = json.load(f)
        sidecar["height"] = 99
        with open(sidecarPath, "w") as f:
            json.dump(sidecar, f)
        with pytest.raises(DataError, match="does not match"):
            loadImageTriple(sidecarPath)

    def test_wrong_channel_count(self, tmp_path):
        with pytest.raises(DataError):
            loadChannelExports(["a.pgm"], ContourMap(1.0, 0.0), "x")
