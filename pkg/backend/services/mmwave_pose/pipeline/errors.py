"""
Error Mapping
Exit codes and the one-line JSON error record written by the CLI
"""

import json
import logging
import sys
from typing import Optional, TextIO

from jsonschema import ValidationError

from dataset.container import CorruptContainerError
from dataset.lopo import LeakageError
from evaluation.statistics import DegenerateSampleError
from model.checkpoint import CheckpointError
from radar_sim.synthesizer import AliasingError
from settings import ConfigError
from tensor.autograd import DimensionError
from tensor.serialization import TensorFormatError
from training.trainer import NumericFailureError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

EXIT_CODES = (
    (ConfigError, EXIT_CONFIG),
    (ValidationError, EXIT_CONFIG),
    (CorruptContainerError, EXIT_DATA),
    (TensorFormatError, EXIT_DATA),
    (LeakageError, EXIT_DATA),
    (AliasingError, EXIT_DATA),
    (CheckpointError, EXIT_DATA),
    (DimensionError, EXIT_DATA),
    (FileNotFoundError, EXIT_DATA),
    (NumericFailureError, EXIT_NUMERIC),
    (DegenerateSampleError, EXIT_NUMERIC),
)


def exit_code_for(exc: BaseException) -> Optional[int]:
    """Mapped exit code, or None for unexpected exceptions"""
    for kind, code in EXIT_CODES:
        if isinstance(exc, kind):
            return code
    return None


def error_record(exc: BaseException, exit_code: int) -> str:
    message = str(exc).replace('\n', ' ')
    return json.dumps({
        'status': 'error',
        'error_type': type(exc).__name__,
        'message': message,
        'exit_code': exit_code,
    }, sort_keys=True)


def report_error(exc: BaseException, stream: TextIO = None) -> int:
    code = exit_code_for(exc)
    if code is None:
        raise exc
    logger.error(f"{type(exc).__name__}: {exc}")
    stream = stream or sys.stderr
    stream.write(error_record(exc, code) + '\n')
    stream.flush()
    return code
