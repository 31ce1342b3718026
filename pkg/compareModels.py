"""Train several variants over several seeds and check the loss orderings.

For every seed each requested variant is trained and evaluated on the test and
validation splits. Orderings are judged on the median over seeds:
  - test: PI-UNet physical and total losses below UNet's
  - validation: every variant's MSE below the coarse baseline, PI-UNet's
    physical loss below the coarse baseline, every variant's largest footprint
    mismatch within 1%
"""

import json
import logging
import sys

import numpy as np

from config.runConfig import loadRunConfig, workerThreads
from evaluateModel import evaluateLoaded
from func.checkpoint import loadCheckpoint
from func.datasetManifest import MANIFEST_NAME, loadSplit, readManifest
from func.errors import ConfigError, PistressError
from func.localStorageSetup import setupRunDir
from func.physicsLoss import formatLossTable, lossTableJson, meanReport
from superResolve import splitFootprintMismatch
from Logging.logSetup import setupLogging
from trainModel import train

##Variant key -> model config overrides
VARIANTS = {
    "unet": {"variant": "unet", "physicsInformed": False},
    "pi-unet": {"variant": "unet", "physicsInformed": True},
    "unetpp": {"variant": "unetpp", "physicsInformed": False},
    "pi-unetpp": {"variant": "unetpp", "physicsInformed": True},
}


def medianRows(rowsPerSeed):
    """Median over seeds of every row's total, mse and physical loss."""
    names = [name for name, _ in rowsPerSeed[0]]
    medians = {}
    for name in names:
        reports = [dict(rows)[name] for rows in rowsPerSeed]
        medians[name] = {
            key: float(np.median([getattr(r, key) for r in reports])) for key in ("total", "mse", "physical")
        }
    return medians


FOOTPRINT_TOLERANCE = 0.01


def checkOrderings(test, validation, footprints=None):
    """Named orderings and whether each holds on the medians.

    footprints maps a variant to its median largest validation footprint mismatch.
    """
    checks = {}
    if "UNet" in test and "PI-UNet" in test:
        checks["test: physical(PI-UNet) < physical(UNet)"] = test["PI-UNet"]["physical"] < test["UNet"]["physical"]
        checks["test: total(PI-UNet) < total(UNet)"] = test["PI-UNet"]["total"] < test["UNet"]["total"]
    for name, row in validation.items():
        if name != "Coarse":
            checks[f"validation: mse({name}) < mse(Coarse)"] = row["mse"] < validation["Coarse"]["mse"]
    if "PI-UNet" in validation:
        checks["validation: physical(PI-UNet) < physical(Coarse)"] = (
            validation["PI-UNet"]["physical"] < validation["Coarse"]["physical"]
        )
    for name, mismatch in (footprints or {}).items():
        checks[f"validation: footprint mismatch({name}) <= 1%"] = mismatch <= FOOTPRINT_TOLERANCE
    return checks


def compareModels(config, variants=("unet", "pi-unet"), seeds=None):
    setupRunDir(config.runDir)
    seeds = list(seeds) if seeds else [config.seed, config.seed + 1, config.seed + 2]
    manifest = readManifest(config.path(MANIFEST_NAME))
    splits = {name: loadSplit(manifest, name, config.data.epsilon) for name in ("test", "validation")}

    rowsPerSplit = {"test": [], "validation": []}
    mismatches = {}
    for k, seed in enumerate(seeds):
        logging.info(f"({k + 1}/{len(seeds)}) -> Seed {seed}")
        seedRows = {"test": {}, "validation": {}}
        for key in variants:
            if key not in VARIANTS:
                raise ConfigError(f"unknown variant '{key}', expected one of {sorted(VARIANTS)}")
            variantConfig = config.model_copy(
                update={"model": config.model.model_copy(update=VARIANTS[key]), "seed": seed}
            )
            run = train(manifest, variantConfig, seed)
            model, _ = loadCheckpoint(run.checkpoint)
            for split, data in splits.items():
                rows, _ = evaluateLoaded(model, data, config.train.batchSize, workerThreads())
                seedRows[split].setdefault("Coarse", rows[0][1])
                seedRows[split][model.variantName] = rows[1][1]
            mismatches.setdefault(model.variantName, []).append(
                splitFootprintMismatch(model, splits["validation"].inputs, config.data.epsilon, config.train.batchSize)
            )
        for split in rowsPerSplit:
            rowsPerSplit[split].append(list(seedRows[split].items()))

    medians = {split: medianRows(rows) for split, rows in rowsPerSplit.items()}
    footprints = {name: float(np.median(values)) for name, values in mismatches.items()}
    checks = checkOrderings(medians["test"], medians["validation"], footprints)
    for name, holds in checks.items():
        log = logging.info if holds else logging.warning
        log(f"{'holds' if holds else 'FAILS'}: {name}")

    for split, rows in rowsPerSplit.items():
        last = rows[-1]
        logging.info(f"Seed {seeds[-1]} {split} table:\n{formatLossTable(last)}")
        meanRows = [(name, meanReport([dict(r)[name] for r in rows])) for name, _ in last]
        with open(config.path("tables", f"compare_{split}.json"), "w") as f:
            f.write(lossTableJson(meanRows, split=split, seeds=seeds, medians=medians[split]))
    with open(config.path("tables", "compare_orderings.json"), "w") as f:
        json.dump({"seeds": seeds, "orderings": checks, "medians": medians, "footprintMismatch": footprints}, f, indent=1)
    return medians, checks, footprints


def main(configPath=None, overrides=None, variants=("unet", "pi-unet"), seeds=None):
    config = loadRunConfig(configPath, overrides)
    setupLogging(config.runDir, "compare_models")
    logging.info("\n\n************************COMPARING MODELS*************************")
    medians, checks, footprints = compareModels(config, variants, seeds)
    logging.info("************************COMPARISON DONE*************************")
    return {"command": "compare", "orderings": checks, "allHold": all(checks.values()), "medians": medians,
            "footprintMismatch": footprints}


if __name__ == "__main__":
    try:
        print(json.dumps(main(sys.argv[1] if len(sys.argv) > 1 else None)))
    except PistressError as e:
        logging.error(f"Comparison failed: {e}")
        sys.exit(e.exitCode)
