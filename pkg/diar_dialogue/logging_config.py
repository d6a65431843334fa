import logging
import os
from datetime import datetime
from pathlib import Path

PACKAGE_LOGGER = "diar_dialogue"
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


def configure_logging(
        workflow: str,
        log_dir: str | os.PathLike | None = None
) -> logging.Logger:
    """
    Set up the package logger with a timestamped log file and a console
    handler.

    Parameters
    ----------
    workflow : str
        Name used as the log file prefix, e.g. ``"build_dataset"``.

    log_dir : str or Path, optional
        Directory where the log file is written. Default is the current
        working directory.

    Returns
    -------
    logging.Logger
        The ``diar_dialogue`` logger. Module loggers propagate into it.
    """
    log_dir = Path(log_dir) if log_dir is not None else Path.cwd()
    os.makedirs(log_dir, exist_ok=True)

    timestamp = datetime.now().strftime("%Y_%m_%d-%H_%M_%S")
    log_file = log_dir / f"{workflow}_{timestamp}.log"

    logger = logging.getLogger(PACKAGE_LOGGER)
    logger.setLevel(logging.INFO)

    # Drop handlers from an earlier workflow in the same process
    for handler in list(logger.handlers):
        if getattr(handler, "_diar_dialogue", False):
            handler.close()
            logger.removeHandler(handler)

    formatter = logging.Formatter(LOG_FORMAT)
    file_handler = logging.FileHandler(log_file, encoding="utf-8")
    console_handler = logging.StreamHandler()
    for handler in (file_handler, console_handler):
        handler.setFormatter(formatter)
        handler._diar_dialogue = True
        logger.addHandler(handler)

    logger.info(f"Logging {workflow} to {log_file}")
    return logger
