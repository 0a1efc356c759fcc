import logging

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(verbosity: int = 0) -> None:
    """
    Installs a single stream handler on the root logger.

    verbosity: int
        0 = INFO, 1+ = DEBUG, negative = WARNING
    """
    if verbosity > 0:
        level = logging.DEBUG
    elif verbosity < 0:
        level = logging.WARNING
    else:
        level = logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def progress_disabled(logger: logging.Logger) -> bool:
    """tqdm bars are shown only when the logger would emit INFO records."""
    return not logger.isEnabledFor(logging.INFO)


def step_banner(logger: logging.Logger, step: int, total: int, what: str) -> None:
    logger.info("--------- Step %d/%d: %s ---------", step, total, what)
