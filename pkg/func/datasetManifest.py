"""Base-case enumeration, train/test split and the JSON-lines dataset manifest.

The first manifest line is a header describing how the dataset was made; every
following line is one augmented sample record.
"""

import logging
import os
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from func.contourCodec import interiorMask
from func.errors import ConfigError, DataError
from func.fem2d import LoadCase
from func.imageFiles import loadImageTriple

GEOMETRIES = ("cantilever", "lshape")
CONSTRAINTS = ("fixed", "sliding")
ORDINATE_COUNT = 6
MANIFEST_NAME = "manifest.jsonl"

BASE_CASE_SELECTION = (
    "Pool of 72: for cantilever then L-shape, fixed then sliding: concentrated x at i=0..5, "
    "concentrated y at i=0..5, distributed x and y on the free end; then distributed y on the top "
    "face, distributed y on the bottom face, distributed x on the top face, distributed x on the "
    "bottom face (each over cantilever-fixed, cantilever-sliding, lshape-fixed, lshape-sliding). "
    "The first N of this order are used."
)


class BaseCase(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    caseId: str
    geometry: Literal["cantilever", "lshape", "truss"]
    constraintKind: Literal["fixed", "sliding"]
    loadKind: Literal["concentrated", "distributed"]
    direction: Literal["x", "y"]
    ordinateIndex: Optional[int] = None
    edge: Optional[str] = None

    def loadCase(self, ordinates, totalLoad):
        if self.loadKind == "concentrated":
            location = float(ordinates[self.ordinateIndex])
        else:
            location = self.edge
        return LoadCase(self.constraintKind, self.loadKind, self.direction, location, totalLoad)


class SampleRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    caseId: str
    baseCaseId: str
    geometry: Literal["cantilever", "lshape", "truss"]
    loadCase: dict
    contourMap: dict
    coarse: str
    fine: str
    femCoarse: str
    femFine: str
    loadPixels: list
    lineage: str
    split: Literal["train", "test", "validation"]


class ManifestHeader(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["header"] = "header"
    baseCaseCount: int
    validationCaseCount: int
    selection: str = BASE_CASE_SELECTION
    seed: int
    canvas: list
    testFraction: float
    splits: dict
    dataCheck: dict = {}


def makeBaseCase(geometry, constraintKind, loadKind, direction, ordinateIndex=None, edge=None):
    if loadKind == "concentrated":
        caseId = f"{geometry}_{constraintKind}_conc_{direction}_i{ordinateIndex}"
    else:
        caseId = f"{geometry}_{constraintKind}_dist_{direction}_{edge}"
    return BaseCase(caseId=caseId, geometry=geometry, constraintKind=constraintKind, loadKind=loadKind,
                    direction=direction, ordinateIndex=ordinateIndex, edge=edge)


def candidateCases():
    """The 72-case pool in its canonical order."""
    pool = []
    for geometry in GEOMETRIES:
        for constraintKind in CONSTRAINTS:
            for direction in ("x", "y"):
                for i in range(ORDINATE_COUNT):
                    pool.append(makeBaseCase(geometry, constraintKind, "concentrated", direction, ordinateIndex=i))
            for direction in ("x", "y"):
                pool.append(makeBaseCase(geometry, constraintKind, "distributed", direction, edge="tip"))
    for direction in ("y", "x"):
        for edge in ("top", "bottom"):
            for geometry in GEOMETRIES:
                for constraintKind in CONSTRAINTS:
                    pool.append(makeBaseCase(geometry, constraintKind, "distributed", direction, edge=edge))
    return pool


def baseCases(count=63, caseIds=None):
    """The first count pool cases, or the named ones in pool order."""
    pool = candidateCases()
    if caseIds:
        known = {case.caseId for case in pool}
        unknown = [caseId for caseId in caseIds if caseId not in known]
        if unknown:
            raise ConfigError(f"unknown base case id '{unknown[0]}'")
        return [case for case in pool if case.caseId in set(caseIds)]
    if not 1 <= count <= len(pool):
        raise ValueError(f"base case count must lie in 1..{len(pool)}, got {count}")
    return pool[:count]


def validationCases():
    """Truss-like cases: concentrated y at the three load ordinates, distributed x and y on the free end."""
    cases = []
    for constraintKind in CONSTRAINTS:
        for i in range(3):
            cases.append(makeBaseCase("truss", constraintKind, "concentrated", "y", ordinateIndex=i))
        for direction in ("x", "y"):
            cases.append(makeBaseCase("truss", constraintKind, "distributed", direction, edge="tip"))
    return cases


def splitBaseCases(caseIds, testFraction, seed):
    """{caseId: 'train' | 'test'}; the split is drawn per base case, before augmentation."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(caseIds))
    testCount = int(round(len(caseIds) * testFraction))
    testIds = {caseIds[k] for k in order[:testCount]}
    return {caseId: ("test" if caseId in testIds else "train") for caseId in caseIds}


class Manifest:
    def __init__(self, header, records, root):
        self.header = header
        self.records = records
        self.root = root

    def split(self, name):
        return [record for record in self.records if record.split == name]

    def path(self, relative):
        return os.path.join(self.root, relative)

    def checkFiles(self):
        missing = [
            path
            for record in self.records
            for path in (record.coarse, record.fine, record.femCoarse, record.femFine)
            if not os.path.exists(self.path(path))
        ]
        if missing:
            raise DataError(f"manifest references {len(missing)} missing files, first {missing[0]}")

    def checkSplitHygiene(self):
        splitsByBase = {}
        for record in self.records:
            splitsByBase.setdefault(record.baseCaseId, set()).add(record.split)
        mixed = [baseId for baseId, splits in splitsByBase.items() if len(splits) > 1]
        if mixed:
            raise DataError(f"base case {mixed[0]} has samples in several splits")
        leaked = [r.caseId for r in self.records if r.geometry == "truss" and r.split != "validation"]
        if leaked:
            raise DataError(f"truss-like case {leaked[0]} is outside the validation split")


def writeManifest(path, header, records):
    with open(path, "w") as f:
        f.write(header.model_dump_json() + "\n")
        for record in records:
            f.write(record.model_dump_json() + "\n")
    logging.info(f"Manifest written to {path}: {len(records)} samples")


def readManifest(path, checkFiles=True):
    """Parse a manifest; file paths in it are relative to the manifest's folder."""
    if not os.path.exists(path):
        raise DataError(f"manifest not found: {path}")
    try:
        with open(path, "r") as f:
            lines = [line for line in f if line.strip()]
        if not lines:
            raise DataError(f"manifest {path} is empty")
        header = ManifestHeader.model_validate_json(lines[0])
        records = [SampleRecord.model_validate_json(line) for line in lines[1:]]
    except ValidationError as e:
        raise DataError(f"manifest {path} is malformed: {e}")
    manifest = Manifest(header, records, os.path.dirname(os.path.abspath(path)))
    if checkFiles:
        manifest.checkFiles()
    manifest.checkSplitHygiene()
    return manifest


def loadSample(manifest, record, epsilon):
    """(coarse channels, fine channels, interior mask) of one record, ready for a model."""
    coarse, _ = loadImageTriple(manifest.path(record.coarse))
    fine, _ = loadImageTriple(manifest.path(record.fine))
    if coarse.channels.shape != fine.channels.shape:
        raise DataError(f"{record.caseId}: coarse and fine images differ in size")
    mask = interiorMask(fine, epsilon, record.loadPixels)
    return coarse.channels, fine.channels, mask


@dataclass
class SplitData:
    inputs: np.ndarray
    targets: np.ndarray
    masks: list
    caseIds: list

    def __len__(self):
        return len(self.caseIds)

    def subset(self, indices):
        return SplitData(self.inputs[indices], self.targets[indices],
                         [self.masks[k] for k in indices], [self.caseIds[k] for k in indices])


def loadSplit(manifest, name, epsilon, dtype=np.float32):
    """Stacked inputs, targets and interior masks of one split, in manifest order."""
    records = manifest.split(name)
    if not records:
        raise DataError(f"split '{name}' is empty")
    samples = [loadSample(manifest, record, epsilon) for record in records]
    return SplitData(
        np.stack([coarse for coarse, _, _ in samples]).astype(dtype),
        np.stack([fine for _, fine, _ in samples]).astype(dtype),
        [mask for _, _, mask in samples],
        [record.caseId for record in records],
    )
