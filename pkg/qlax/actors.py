import atexit
import csv
import logging
import os
from typing import Optional

import ray

from qlax.verify import CheckResult

logger = logging.getLogger(__name__)

CHECK_LOG_COLUMNS = ("suite", "check", "residual", "tolerance", "status", "calibration", "message")


def check_row(suite: str, result: CheckResult) -> list:
    if result.control:
        status = "detected" if not result.passed else "undetected"
    elif result.informational:
        status = "holds" if result.passed else "finding"
    else:
        status = "pass" if result.passed else "FAIL"
    calibration = ";".join(f"{c.real:.12g}{c.imag:+.12g}j" for c in (result.calibration or []))
    return [suite, result.name, f"{result.residual:.6e}", f"{result.tolerance:.1e}", status, calibration, result.message]


@ray.remote
class CheckLogWriter:
    """Appends CheckResults from every suite to one CSV file.

    ``close`` flushes the file; a later ``write`` appends to it again.
    """

    def __init__(self, filename: str) -> None:
        self._filename = filename
        self._filehandle = open(self._filename, "wt", newline="", buffering=1)
        self._writer = csv.writer(self._filehandle)
        self._writer.writerow(CHECK_LOG_COLUMNS)
        self._rows = 0
        atexit.register(lambda: self.close())

    def write(self, row) -> int:
        if self._filehandle.closed:
            self._filehandle = open(self._filename, "at", newline="", buffering=1)
            self._writer = csv.writer(self._filehandle)
        self._writer.writerow(row)
        self._rows += 1
        return self._rows

    def close(self) -> None:
        if not self._filehandle.closed:
            logger.debug(f"closing {self._filename} after {self._rows} rows")
            self._filehandle.close()


def get_check_logger(filename: str, name: Optional[str] = None):
    """The writer actor for ``filename``, shared by every task of a ray session."""
    name = name or f"check_log:{os.path.abspath(filename)}"
    return CheckLogWriter.options(name=name, lifetime="detached", get_if_exists=True).remote(filename)
