"""Train one U-Net family model on the generated dataset.

Mini-batch Adam over the train split with a step learning-rate decay; after every
epoch the train and test losses are recorded and the checkpoint with the lowest
test total loss is kept.
"""

import json
import logging
import sys

import numpy as np
from pydantic import BaseModel
from tqdm import tqdm

from config.runConfig import loadRunConfig, workerThreads
from func.checkpoint import saveCheckpoint
from func.datasetManifest import MANIFEST_NAME, loadSplit, readManifest
from func.errors import DataError, DivergenceError, PistressError
from func.localStorageSetup import setupRunDir
from func.nnCore import adamStep
from func.physicsLoss import meanReport
from func.unetModels import build, loss, sampleReports
from Logging.logSetup import setupLogging


class EpochRecord(BaseModel):
    epoch: int
    learningRate: float
    train: dict
    test: dict


class TrainRun(BaseModel):
    seed: int
    epochs: int
    batchSize: int
    learningRate: float
    model: dict
    variantName: str
    history: list[EpochRecord] = []
    bestEpoch: int = -1
    bestTestTotal: float = float("inf")
    checkpoint: str = ""


def runTag(modelConfig, seed):
    """File-name tag of a trained variant, e.g. pi-unet_s0."""
    return f"{modelConfig.variantName().lower().replace('+', 'p')}_s{seed}"


def learningRateAt(epoch, trainConfig):
    if trainConfig.lrDecayEpoch and epoch >= trainConfig.lrDecayEpoch:
        return trainConfig.learningRate * trainConfig.lrDecayFactor
    return trainConfig.learningRate


def splitReport(model, data, modelConfig, batchSize):
    reports = sampleReports(model, data.inputs, data.targets, data.masks, modelConfig, batchSize, workerThreads())
    return meanReport(reports)


def fit(model, trainData, testData, trainConfig, seed, checkpointPath=None, canvas=None):
    """Train model in place; returns the TrainRun history.

    testData may be None, in which case the best epoch follows the train total.
    """
    modelConfig = model.config
    run = TrainRun(
        seed=seed,
        epochs=trainConfig.epochs,
        batchSize=trainConfig.batchSize,
        learningRate=trainConfig.learningRate,
        model=modelConfig.model_dump(),
        variantName=model.variantName,
    )
    canvas = canvas or trainData.inputs.shape[2:]
    rng = np.random.default_rng(seed)
    for epoch in tqdm(range(trainConfig.epochs), desc=model.variantName, unit="epoch"):
        lr = learningRateAt(epoch, trainConfig)
        order = rng.permutation(len(trainData))
        batchReports, batchSizes = [], []
        for start in range(0, len(order), trainConfig.batchSize):
            batch = order[start:start + trainConfig.batchSize]
            output = model.forward(trainData.inputs[batch])
            report, seedGrad = loss(output, trainData.targets[batch], [trainData.masks[k] for k in batch], modelConfig)
            if not np.isfinite(report.total):
                logging.error(f"Loss diverged at epoch {epoch}, batch starting {start}: {report.toDict()}")
                raise DivergenceError(f"non-finite loss at epoch {epoch} (lr {lr:g})")
            model.backward(seedGrad.astype(model.dtype))
            for params in model.parameters():
                adamStep(params, lr, trainConfig.beta1, trainConfig.beta2, trainConfig.adamEpsilon)
            batchReports.append(report)
            batchSizes.append(len(batch))

        trainReport = meanReport(batchReports, batchSizes)
        testReport = splitReport(model, testData, modelConfig, trainConfig.batchSize) if testData else trainReport
        run.history.append(EpochRecord(epoch=epoch, learningRate=lr, train=trainReport.toDict(), test=testReport.toDict()))
        logging.info(
            f"Epoch {epoch}: train total {trainReport.total:.4e} (mse {trainReport.mse:.4e}, physical "
            f"{trainReport.physical:.4e}), test total {testReport.total:.4e}"
        )
        if testReport.total < run.bestTestTotal:
            run.bestTestTotal = testReport.total
            run.bestEpoch = epoch
            if checkpointPath:
                saveCheckpoint(checkpointPath, model, canvas, {"seed": seed, "epoch": epoch})
                run.checkpoint = checkpointPath
    return run


def train(manifest, config, seed):
    """Train the configured variant on the manifest's train split."""
    setupRunDir(config.runDir)
    trainData = loadSplit(manifest, "train", config.data.epsilon)
    testData = loadSplit(manifest, "test", config.data.epsilon)
    canvas = trainData.inputs.shape[2:]
    try:
        config.model.checkCanvas(*canvas)
    except ValueError as e:
        raise DataError(f"data canvas does not fit the model: {e}")
    model = build(config.model, seed=seed)
    tag = runTag(config.model, seed)
    checkpointPath = config.path("checkpoints", f"{tag}.psck")
    logging.info(f"Training {model.variantName} on {len(trainData)} samples, testing on {len(testData)}")
    run = fit(model, trainData, testData, config.train, seed, checkpointPath, canvas)
    historyPath = config.path("tables", f"{tag}_history.json")
    with open(historyPath, "w") as f:
        f.write(run.model_dump_json(indent=1))
    logging.info(f"Best epoch {run.bestEpoch} (test total {run.bestTestTotal:.4e}); history in {historyPath}")
    return run


def main(configPath=None, overrides=None):
    config = loadRunConfig(configPath, overrides)
    setupLogging(config.runDir, "train_model")
    logging.info("\n\n************************TRAINING MODEL*************************")
    manifest = readManifest(config.path(MANIFEST_NAME))
    run = train(manifest, config, config.seed)
    logging.info("************************TRAINING DONE*************************")
    last = run.history[-1]
    return {
        "command": "train",
        "variant": run.variantName,
        "seed": run.seed,
        "epochs": run.epochs,
        "bestEpoch": run.bestEpoch,
        "bestTestTotal": run.bestTestTotal,
        "finalTrain": last.train,
        "finalTest": last.test,
        "checkpoint": run.checkpoint,
    }


if __name__ == "__main__":
    try:
        print(json.dumps(main(sys.argv[1] if len(sys.argv) > 1 else None)))
    except PistressError as e:
        logging.error(f"Training failed: {e}")
        sys.exit(e.exitCode)
