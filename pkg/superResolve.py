"""Super-resolve coarse contour images with a trained checkpoint.

Outputs are written as image triples (decoded with the input's contour map)
together with their decoded stress rasters. For each input the flip
equivariance of the model is measured and logged, never enforced.
"""

import json
import logging
import os
import sys

import numpy as np

from config.runConfig import loadRunConfig
from func.checkpoint import loadCheckpoint
from func.contourCodec import BACKGROUND, ContourMap, ImageTriple, decode
from func.errors import DataError, PistressError
from func.imageFiles import loadChannelExports, loadImageTriple, saveImageTriple
from func.localStorageSetup import setupRunDir
from func.unetModels import predict
from Logging.logSetup import setupLogging


def outputFootprint(channels, epsilon):
    """Pixels the model draws as part of the body (sigma_x intensity below 1 - epsilon)."""
    return channels[0] < 1.0 - epsilon


def footprintMismatch(predicted, reference):
    """Differing pixels as a fraction of the reference footprint."""
    return float(np.logical_xor(predicted, reference).sum()) / max(int(reference.sum()), 1)


def splitFootprintMismatch(model, inputs, epsilon, batchSize=8):
    """Largest footprint mismatch of the model outputs against their inputs over a batch of samples."""
    outputs = predict(model, inputs, batchSize)
    return max(
        footprintMismatch(outputFootprint(out, epsilon), outputFootprint(x, epsilon)) for out, x in zip(outputs, inputs)
    )


def flipDiscrepancy(model, channels, footprint):
    """Mean absolute difference, over the footprint, between the output and its flip-conjugated output."""
    direct = model.forward(channels)[0]
    values = []
    for axis in (1, 2):
        flipped = model.forward(np.flip(channels, axis=axis).copy())[0]
        values.append(float(np.abs(np.flip(flipped, axis=axis) - direct)[:, footprint].mean()))
    return float(np.mean(values))


def superResolveImage(model, image, epsilon):
    """Super-resolved image triple of one coarse image triple."""
    if image.channels.shape[0] != 3:
        raise DataError(f"{image.caseId}: expected three channels")
    try:
        model.config.checkCanvas(image.height, image.width)
    except ValueError as e:
        raise DataError(f"{image.caseId}: {e}")
    channels = model.forward(image.channels)[0].astype(np.float64)
    footprint = outputFootprint(channels, epsilon)
    channels[:, ~footprint] = BACKGROUND
    return ImageTriple(channels, image.contourMap, image.caseId, footprint)


def loadInputs(inputPaths, channelTriples=(), contourMap=None):
    """(label, image, sidecar) of every sidecar input and every PGM/PNG channel triple."""
    inputs = []
    for inputPath in inputPaths:
        image, sidecar = loadImageTriple(inputPath)
        inputs.append((inputPath, image, sidecar))
    for triple in channelTriples:
        caseId = os.path.splitext(os.path.basename(triple[0]))[0]
        image = loadChannelExports(list(triple), contourMap or ContourMap(1.0, -0.5), caseId)
        inputs.append((",".join(triple), image, {}))
    return inputs


def superResolve(checkpointPath, inputPaths, config, measureEquivariance=True, channelTriples=(), contourMap=None):
    """Super-resolve every input; returns one summary dict per input.

    Channel triples are decoded with contourMap, or with the map sending 0.5 to
    zero stress when none is given.
    """
    paths = setupRunDir(config.runDir)
    model, header = loadCheckpoint(checkpointPath)
    summaries = []
    for label, image, sidecar in loadInputs(inputPaths, channelTriples, contourMap):
        output = superResolveImage(model, image, config.data.epsilon)
        outPath = saveImageTriple(output, paths["superResolved"], "super", sidecar.get("loadPixels", ()),
                                  sidecar.get("lineage", ""))
        stressPath = os.path.join(paths["superResolved"], f"{image.caseId}_super_stress.npz")
        stress = decode(output)
        np.savez_compressed(stressPath, stress=stress.filled(np.nan).astype(np.float32), footprint=output.footprint)

        summary = {
            "input": label,
            "output": outPath,
            "stress": stressPath,
            "footprintMismatch": footprintMismatch(output.footprint, image.footprint),
        }
        if measureEquivariance:
            summary["flipDiscrepancy"] = flipDiscrepancy(model, image.channels, image.footprint)
        logging.info(f"Super-resolved {image.caseId}: {summary}")
        summaries.append(summary)
    return summaries


def main(configPath=None, checkpointPath=None, inputPaths=(), overrides=None, channelTriples=(), contourMap=None):
    config = loadRunConfig(configPath, overrides)
    setupLogging(config.runDir, "super_resolve")
    logging.info("\n\n************************SUPER-RESOLVING*************************")
    if checkpointPath is None:
        raise DataError("no checkpoint given")
    if not inputPaths and not channelTriples:
        raise DataError("no input images given")
    summaries = superResolve(checkpointPath, inputPaths, config, channelTriples=channelTriples, contourMap=contourMap)
    logging.info("************************SUPER-RESOLUTION DONE*************************")
    return {
        "command": "super-resolve",
        "count": len(summaries),
        "maxFootprintMismatch": max(s["footprintMismatch"] for s in summaries),
        "outputs": [s["output"] for s in summaries],
    }


if __name__ == "__main__":
    try:
        print(json.dumps(main(sys.argv[1], sys.argv[2], sys.argv[3:])))
    except PistressError as e:
        logging.error(f"Super-resolution failed: {e}")
        sys.exit(e.exitCode)
