"""Image triple files: float rasters with a JSON sidecar, plus 8-bit PGM/PNG channel exports."""

import json
import logging
import os

import numpy as np
from PIL import Image

from func.contourCodec import CHANNEL_NAMES, ContourMap, ImageTriple, quantize
from func.errors import DataError


def writePgm(path, raster):
    """Binary (P5) 8-bit PGM."""
    raster = np.asarray(raster, dtype=np.uint8)
    height, width = raster.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        f.write(raster.tobytes())


def readPgm(path):
    with open(path, "rb") as f:
        data = f.read()
    fields = []
    pos = 0
    ##Header: magic, width, height, maxval separated by whitespace, comments start with '#'
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1
    if fields[0] != b"P5":
        raise DataError(f"{path} is not a binary PGM (magic {fields[0]!r})")
    width, height, maxValue = int(fields[1]), int(fields[2]), int(fields[3])
    if maxValue != 255:
        raise DataError(f"{path}: only 8-bit PGM is supported, maxval {maxValue}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return pixels.reshape(height, width).copy()


def writePng(path, raster):
    Image.fromarray(np.asarray(raster, dtype=np.uint8)).save(path)


def readPng(path):
    with Image.open(path) as image:
        return np.array(image.convert("L"), dtype=np.uint8)


def channelFileName(caseId, channel, resolution, extension="pgm"):
    return f"{caseId}_{channel}_{resolution}.{extension}"


def saveImageTriple(image, directory, resolution, loadPixels=(), lineage="", exports=("pgm", "png")):
    """Write the float raster (.npz), its JSON sidecar and per-channel 8-bit exports.

    Returns the sidecar path.
    """
    os.makedirs(directory, exist_ok=True)
    stem = f"{image.caseId}_{resolution}"
    rasterPath = os.path.join(directory, stem + ".npz")
    np.savez_compressed(rasterPath, channels=image.channels.astype(np.float32), footprint=image.footprint)
    raw = quantize(image)
    channelFiles = {}
    for index, channel in enumerate(CHANNEL_NAMES):
        for extension in exports:
            path = os.path.join(directory, channelFileName(image.caseId, channel, resolution, extension))
            if extension == "pgm":
                writePgm(path, raw[index])
            else:
                writePng(path, raw[index])
            channelFiles.setdefault(channel, {})[extension] = os.path.basename(path)
    sidecar = {
        "caseId": image.caseId,
        "resolution": resolution,
        "height": image.height,
        "width": image.width,
        "contourMap": image.contourMap.toDict(),
        "raster": os.path.basename(rasterPath),
        "channels": channelFiles,
        "loadPixels": np.asarray(loadPixels, dtype=int).reshape(-1, 2).tolist(),
        "lineage": lineage,
    }
    sidecarPath = os.path.join(directory, stem + ".json")
    with open(sidecarPath, "w") as f:
        json.dump(sidecar, f, indent=1)
    return sidecarPath


def loadImageTriple(sidecarPath):
    """Image triple and sidecar dict from a sidecar written by saveImageTriple."""
    try:
        with open(sidecarPath, "r") as f:
            sidecar = json.load(f)
        directory = os.path.dirname(sidecarPath)
        with np.load(os.path.join(directory, sidecar["raster"])) as data:
            channels = data["channels"].astype(np.float64)
            footprint = data["footprint"].astype(bool)
        image = ImageTriple(channels, ContourMap.fromDict(sidecar["contourMap"]), sidecar["caseId"], footprint)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as e:
        logging.error(f"Could not read image triple {sidecarPath}: {e}")
        raise DataError(f"corrupt or missing image triple {sidecarPath}: {e}")
    if (image.height, image.width) != (sidecar["height"], sidecar["width"]):
        raise DataError(f"{sidecarPath}: raster shape does not match its sidecar")
    return image, sidecar


def loadChannelExports(paths, contourMap, caseId):
    """Image triple from three 8-bit channel files (PGM or PNG), in sx, sy, txy order."""
    if len(paths) != 3:
        raise DataError(f"need three channel files, got {len(paths)}")
    rasters = []
    for path in paths:
        try:
            rasters.append(readPgm(path) if path.lower().endswith(".pgm") else readPng(path))
        except (OSError, ValueError) as e:
            raise DataError(f"corrupt channel file {path}: {e}")
    if len({r.shape for r in rasters}) != 1:
        raise DataError("channel files differ in size")
    return ImageTriple(np.stack(rasters).astype(float) / 255.0, contourMap, caseId)
