"""Generate the coarse/fine contour-image dataset and its manifest.

Every base case is solved on a coarse and a fine mesh, both fields are drawn on
the common canvas with one contour map fitted on the fine field, and training
cases are expanded into their 8 flip / inversion variants. Truss-like
validation cases are solved and drawn the same way but never augmented.
"""

import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from tqdm import tqdm

from config.runConfig import loadRunConfig, workerThreads
from func.contourCodec import (
    CanvasLayout,
    SamplePair,
    augment,
    decode,
    fitContourMap,
    interiorMask,
    loadPixels,
    rasterize,
)
from func.datasetManifest import (
    BASE_CASE_SELECTION,
    MANIFEST_NAME,
    ManifestHeader,
    SampleRecord,
    baseCases,
    splitBaseCases,
    validationCases,
    writeManifest,
)
from func.errors import PistressError
from func.fem2d import (
    Material,
    buildMeshCantilever,
    buildMeshLShape,
    buildMeshTrussLike,
    checkEquilibrium,
    checkRefinement,
    solve,
    writeFieldText,
)
from func.imageFiles import saveImageTriple
from func.localStorageSetup import setupRunDir
from func.physicsLoss import physicalLoss
from Logging.logSetup import setupLogging


##Element size as a fraction of H (cantilever, truss) or d (L-shape)
ELEMENT_FRACTIONS = {
    "cantilever": {"coarse": 1 / 10, "fine": 1 / 40},
    "lshape": {"coarse": 1 / 5, "fine": 1 / 20},
    "truss": {"coarse": 1 / 10, "fine": 1 / 40},
}


def buildMeshes(geometry, dataConfig):
    """Coarse and fine mesh of one geometry family."""
    H = dataConfig.geometryScale
    sizes = {name: fraction * H for name, fraction in ELEMENT_FRACTIONS[geometry].items()}
    if geometry == "cantilever":
        return {name: buildMeshCantilever(H, size) for name, size in sizes.items()}
    if geometry == "lshape":
        return {name: buildMeshLShape(H, size) for name, size in sizes.items()}
    return {name: buildMeshTrussLike(dataConfig.trussTemplate, size, H) for name, size in sizes.items()}


def solveCase(case, meshes, config, paths, split):
    """Solve, draw and write one base case.

    Returns its manifest records and the physical loss of the coarse and fine images.
    """
    data = config.data
    material = Material(data.youngsModulus, data.poissonsRatio, data.thickness)
    load = case.loadCase(meshes["fine"].loadOrdinates, data.totalLoad)
    try:
        fields = {name: solve(mesh, material, load) for name, mesh in meshes.items()}
        for field in fields.values():
            checkEquilibrium(field, load)
        checkRefinement(fields["coarse"], fields["fine"])
        contourMap = fitContourMap(fields["fine"])
        layout = CanvasLayout.forOutline(meshes["fine"].outline, data.canvasHeight, data.canvasWidth)
        images = {name: rasterize(field, contourMap, layout, case.caseId) for name, field in fields.items()}
    except PistressError as e:
        logging.error(f"Case {case.caseId} failed: {e}")
        raise type(e)(f"case {case.caseId}: {e}") from e

    femPaths = {}
    for name, field in fields.items():
        femPaths[name] = os.path.join("fem", f"{case.caseId}_{name}.txt")
        writeFieldText(os.path.join(config.runDir, femPaths[name]), field)

    radius = data.singularRadius * meshes["coarse"].elementSize * layout.scale
    pixels = np.unique(
        np.concatenate([loadPixels(fields[name], layout, radius) for name in ("coarse", "fine")]), axis=0
    )
    pair = SamplePair(images["coarse"], images["fine"], pixels, "o")
    if case.geometry == "truss":
        samples, folder = [pair], "validation"
    else:
        samples, folder = augment(pair), "images"

    check = {}
    for name, image in images.items():
        mask = interiorMask(image, data.epsilon, pixels)
        check[name] = physicalLoss(np.asarray(decode(image)), mask)

    records = []
    for sample in samples:
        caseId = sample.fine.caseId
        stored = {}
        for name, image in (("coarse", sample.coarse), ("fine", sample.fine)):
            sidecar = saveImageTriple(image, paths[folder], name, sample.loadPixels, sample.lineage)
            stored[name] = os.path.relpath(sidecar, config.runDir)
        records.append(
            SampleRecord(
                caseId=caseId,
                baseCaseId=case.caseId,
                geometry=case.geometry,
                loadCase=load.toDict(),
                contourMap=sample.fine.contourMap.toDict(),
                coarse=stored["coarse"],
                fine=stored["fine"],
                femCoarse=femPaths["coarse"],
                femFine=femPaths["fine"],
                loadPixels=np.asarray(sample.loadPixels, dtype=int).tolist(),
                lineage=sample.lineage,
                split=split,
            )
        )
    return records, check


def generateDataset(config):
    """Solve every case, write all files under the run directory and return the manifest path."""
    paths = setupRunDir(config.runDir)
    data = config.data
    cases = baseCases(data.baseCaseCount, data.baseCaseIds)
    truss = validationCases()
    splits = splitBaseCases([case.caseId for case in cases], data.testFraction, config.seed)

    logging.info(f"(1/4) -> Meshing {len(cases)} base cases and {len(truss)} truss-like cases")
    meshes = {geometry: buildMeshes(geometry, data) for geometry in ("cantilever", "lshape", "truss")}

    logging.info("(2/4) -> Solving and drawing cases")
    allCases = cases + truss
    with ThreadPoolExecutor(max_workers=workerThreads()) as pool:
        futures = [
            pool.submit(solveCase, case, meshes[case.geometry], config, paths, splits.get(case.caseId, "validation"))
            for case in allCases
        ]
        results = [future.result() for future in tqdm(futures, desc="cases", unit="case")]

    logging.info("(3/4) -> Collecting records")
    records = []
    checks = {"coarse": [], "fine": []}
    for case, (caseRecords, check) in zip(allCases, results):
        records.extend(caseRecords)
        if case.geometry != "truss":
            for name in checks:
                checks[name].append(check[name])

    dataCheck = {
        "meanPhysicalLossCoarse": float(np.mean(checks["coarse"])),
        "meanPhysicalLossFine": float(np.mean(checks["fine"])),
    }
    if dataCheck["meanPhysicalLossFine"] >= dataCheck["meanPhysicalLossCoarse"]:
        logging.warning(f"Fine images are not closer to equilibrium than coarse ones: {dataCheck}")

    header = ManifestHeader(
        baseCaseCount=len(cases),
        selection=BASE_CASE_SELECTION if not data.baseCaseIds else "Named base cases: " + ", ".join(c.caseId for c in cases),
        validationCaseCount=len(truss),
        seed=config.seed,
        canvas=[data.canvasHeight, data.canvasWidth],
        testFraction=data.testFraction,
        splits={name: sum(r.split == name for r in records) for name in ("train", "test", "validation")},
        dataCheck=dataCheck,
    )
    logging.info("(4/4) -> Writing manifest")
    manifestPath = config.path(MANIFEST_NAME)
    writeManifest(manifestPath, header, records)
    return manifestPath, header


def main(configPath=None, overrides=None):
    config = loadRunConfig(configPath, overrides)
    setupLogging(config.runDir, "generate_data")
    logging.info("\n\n************************GENERATING DATASET*************************")
    manifestPath, header = generateDataset(config)
    logging.info(f"Dataset ready: {header.splits} samples, manifest {manifestPath}")
    logging.info("************************DATASET DONE*************************")
    return {"command": "gen-data", "manifest": manifestPath, **header.splits, **header.dataCheck}


if __name__ == "__main__":
    try:
        print(json.dumps(main(sys.argv[1] if len(sys.argv) > 1 else None)))
    except PistressError as e:
        logging.error(f"Dataset generation failed: {e}")
        sys.exit(e.exitCode)
