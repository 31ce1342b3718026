import traceback
import datetime
import logging
import os


class ErrorReport(logging.Handler):
    """Append a full report of every error record to the run's errors.log."""

    def __init__(self, reportFile, level=logging.ERROR):
        super().__init__(level)
        self._reportFile = reportFile

    def emit(self, record):
        try:
            ##Format the error message
            timestamp = datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S")
            logEntry = self.format(record)

            ##Stack trace capture
            if record.exc_info:
                trace = "".join(traceback.format_exception(*record.exc_info))
            else:
                trace = "No traceback available"

            body = (
                f"==== Error report {timestamp} ====\n"
                f"Logger: {record.name}\n"
                f"Level: {record.levelname}\n"
                f"Message:\n{logEntry}\n"
                f"Traceback:\n{trace}\n"
            )
            os.makedirs(os.path.dirname(self._reportFile) or ".", exist_ok=True)
            with open(self._reportFile, "a") as f:
                f.write(body)
        except Exception:
            ##Avoid recursive logging if the report cannot be written
            self.handleError(record)
