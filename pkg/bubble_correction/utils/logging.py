import logging
import sys
from logging.handlers import RotatingFileHandler

from bubble_correction.config.settings import settings


def setup_logging(name: str) -> logging.Logger:
    """
    Set up logging configuration for the application.

    Console output goes to stderr so that reports written to stdout stay
    machine-readable. A rotating file handler is added only when
    ``settings.LOG_DIR`` is configured.

    Args:
        name: The name of the logger to create

    Returns:
        logging.Logger: Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(settings.LOG_LEVEL)
    if logger.handlers:
        return logger

    formatter = logging.Formatter(settings.LOG_FORMAT)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if settings.LOG_DIR is not None:
        log_dir = settings.LOG_DIR
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            log_dir / f"{name}.log",
            maxBytes=10485760,  # 10MB
            backupCount=5,
        )
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger
