import glob
import logging
import os

import pandas as pd

from qthermo.common.errors import QThermoError, SchemaError

logger = logging.getLogger(__name__)

SHARE_DIR = os.path.join(
    os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))), "share"
)

EXIT_OK = 0
EXIT_DOMAIN_ERROR = 1
EXIT_IO_ERROR = 2


def get_valid_cfg_path(path):
    """Finds valid path for cfg file in /share folder.

    If path is already valid:
        Nothing will be done and original path will be returned.
    If path is not valid:
        Try to add share folder path before to see whether we can get a valid
        path. Otherwise, raise error to ask configuration correction.
    """
    if os.path.isfile(path):
        return path
    for prefix in (SHARE_DIR, os.path.join(SHARE_DIR, "jobs")):
        candidate = os.path.join(prefix, path)
        if os.path.isfile(candidate):
            return candidate
    raise OSError("No valid path found for {}, please check .ini file.".format(path))


def get_valid_input_pattern(pattern):
    """Input pattern as given, or relative to the repository root when that matches."""
    if glob.glob(pattern):
        return pattern
    candidate = os.path.join(os.path.dirname(SHARE_DIR), pattern)
    if glob.glob(candidate):
        return candidate
    return pattern


def exit_code_for(err):
    """0 / 1 / 2 exit code for an exception raised while running a job.

    Schema and file errors give 2, every other failure of an input gives 1.
    """
    if err is None:
        return EXIT_OK
    if isinstance(err, (SchemaError, OSError)):
        return EXIT_IO_ERROR
    if not isinstance(err, (QThermoError, ValueError)):
        logger.warning("unexpected %s treated as a domain failure", type(err).__name__)
    return EXIT_DOMAIN_ERROR


def error_document(err, input_path=None):
    """Structured error report written in place of a result."""
    details = getattr(err, "details", {}) or {}
    return {
        "error": {
            "type": type(err).__name__,
            "message": str(err),
            "details": details,
            "input": input_path,
        }
    }


def make_table(rows, save_dir, file_name="summary.csv"):
    """Makes the per-input summary table.

    Input example:
        rows = [
            {"input": "a.json", "exit_code": 0, "class_I": "InClass"},
            {"input": "b.json", "exit_code": 1, "error": "NotPSD"},
        ]
    """
    save_path = os.path.join(save_dir, file_name)
    table = pd.DataFrame(rows)
    table.to_csv(save_path, index=False)
    return save_path, table
