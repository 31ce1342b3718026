"""Loss tables of a trained checkpoint on one split, with the coarse-input baseline row."""

import json
import logging
import os
import sys

from config.runConfig import ModelConfig, loadRunConfig, workerThreads
from func.checkpoint import loadCheckpoint
from func.datasetManifest import MANIFEST_NAME, loadSplit, readManifest
from func.errors import DataError, PistressError
from func.localStorageSetup import setupRunDir
from func.physicsLoss import formatLossTable, lossTableJson, meanReport
from func.unetModels import sampleLoss, sampleReports
from Logging.logSetup import setupLogging

SPLITS = ("train", "test", "validation")

##The baseline row is scored like a physics-informed model with unit weight
BASELINE_CONFIG = ModelConfig(physicsInformed=True, physicsWeight=1.0)


def coarseBaselineReports(data):
    """Per-sample losses of the coarse input taken as the prediction of the fine target."""
    return [
        sampleLoss(data.inputs[k], data.targets[k], data.masks[k], BASELINE_CONFIG, withGrad=False)[0]
        for k in range(len(data))
    ]


def evaluateLoaded(model, data, batchSize=8, workers=1):
    """[('Coarse', report), (variant, report)] and the model's per-sample reports."""
    canvas = tuple(data.inputs.shape[2:])
    try:
        model.config.checkCanvas(*canvas)
    except ValueError as e:
        raise DataError(f"checkpoint and data disagree on the canvas: {e}")
    perSample = sampleReports(model, data.inputs, data.targets, data.masks, model.config, batchSize, workers)
    rows = [("Coarse", meanReport(coarseBaselineReports(data))), (model.variantName, meanReport(perSample))]
    return rows, perSample


def evaluate(checkpointPath, config, split):
    """Evaluate a checkpoint on a split; writes the text and JSON loss tables."""
    if split not in SPLITS:
        raise DataError(f"unknown split '{split}', expected one of {SPLITS}")
    setupRunDir(config.runDir)
    model, header = loadCheckpoint(checkpointPath)
    manifest = readManifest(config.path(MANIFEST_NAME))
    data = loadSplit(manifest, split, config.data.epsilon)
    if list(header.get("canvas", [])) != list(data.inputs.shape[2:]):
        raise DataError(f"checkpoint canvas {header.get('canvas')} does not match data {list(data.inputs.shape[2:])}")
    rows, perSample = evaluateLoaded(model, data, config.train.batchSize, workerThreads())

    stem = os.path.splitext(os.path.basename(checkpointPath))[0]
    tablePath = config.path("tables", f"{stem}_{split}.txt")
    jsonPath = config.path("tables", f"{stem}_{split}.json")
    table = formatLossTable(rows)
    with open(tablePath, "w") as f:
        f.write(table + "\n")
    with open(jsonPath, "w") as f:
        f.write(lossTableJson(rows, split=split, checkpoint=checkpointPath, sampleCount=len(perSample)))
    logging.info(f"Loss table for {split}:\n{table}")
    return rows, jsonPath


def main(configPath=None, checkpointPath=None, split="test", overrides=None):
    config = loadRunConfig(configPath, overrides)
    setupLogging(config.runDir, "evaluate_model")
    logging.info("\n\n************************EVALUATING MODEL*************************")
    if checkpointPath is None:
        raise DataError("no checkpoint given")
    rows, jsonPath = evaluate(checkpointPath, config, split)
    logging.info("************************EVALUATION DONE*************************")
    return {"command": "eval", "split": split, "table": jsonPath, "rows": {name: r.toDict() for name, r in rows}}


if __name__ == "__main__":
    try:
        print(json.dumps(main(sys.argv[1], sys.argv[2], sys.argv[3] if len(sys.argv) > 3 else "test")))
    except PistressError as e:
        logging.error(f"Evaluation failed: {e}")
        sys.exit(e.exitCode)
