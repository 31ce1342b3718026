import logging
import os

import coloredlogs

from Logging.ErrorReporting import ErrorReport

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


def setupLogging(runDir, logName):
    """File log per step, colored console on stderr, and the error report handler."""
    logDir = os.path.join(runDir, "logs")
    os.makedirs(logDir, exist_ok=True)
    logging.basicConfig(
        level=logging.INFO,
        filename=os.path.join(logDir, f"{logName}.log"),
        filemode="a",                       # "w" to overwrite, "a" to append
        format=LOG_FORMAT,
        force=True,
    )
    coloredlogs.install(
        level=os.getenv("PISTRESS_LOG_LEVEL", "INFO"),
        fmt=LOG_FORMAT,
        reconfigure=False,
    )
    ##Set up the handler/ Logger
    logging.getLogger().addHandler(ErrorReport(os.path.join(logDir, "errors.log")))
    return logging.getLogger()
