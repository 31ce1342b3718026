import logging
import os

##Sub-folders of a run directory
runSubs = [
    "fem",
    "images",
    "validation",
    "checkpoints",
    "tables",
    "logs",
    "superResolved",
]


def setupRunDir(runDir):
    """Create the run directory and its sub-folders; returns {name: path}."""
    os.makedirs(runDir, exist_ok=True)
    paths = {}
    for folderName in runSubs:
        name = os.path.join(runDir, folderName)
        os.makedirs(name, exist_ok=True)
        paths[folderName] = name
    logging.info(f"Run directories ready under {runDir}")
    return paths
