import logging

from errors import (
    ArgumentError, FitError, MetadataMismatchError, ParseError, UnreachableTauError,
    ValidationError, VersionError
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3


def handle_error(error: BaseException) -> int:
    """Log an exception raised by a command and map it to a process exit code"""
    if isinstance(error, VersionError):
        logger.error(f"❌ Unsupported file version: {error}")
        return EXIT_USAGE
    elif isinstance(error, ParseError):
        logger.error(f"❌ Could not read input: {error}")
        return EXIT_USAGE
    elif isinstance(error, MetadataMismatchError):
        logger.error(f"❌ Refusing to verify: {error}")
        return EXIT_USAGE
    elif isinstance(error, (ValidationError, ArgumentError)):
        logger.error(f"❌ Invalid input: {error}")
        return EXIT_USAGE
    elif isinstance(error, (UnreachableTauError, FitError)):
        logger.error(f"❌ Calibration failed: {error}")
        return EXIT_USAGE
    elif isinstance(error, FileNotFoundError):
        logger.error(f"❌ File not found: {error.filename or error}")
        return EXIT_USAGE

    logger.error(f"❌ Internal error: {type(error).__name__}: {error}")
    logger.debug("Traceback of the internal error:", exc_info=error)
    return EXIT_INTERNAL
