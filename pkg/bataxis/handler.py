import logging
import os

from concurrent_log_handler import ConcurrentRotatingFileHandler


def get_handlers(settings):
    """Rotating file handler under ``log_dir`` plus a console stream handler."""
    log_dir = settings["log_dir"]
    try:
        os.makedirs(log_dir, exist_ok=True)
    except PermissionError:
        raise RuntimeError(f"Cannot create log directory: {log_dir}")

    file_handler = ConcurrentRotatingFileHandler(
        os.path.join(log_dir, settings["file"]),
        maxBytes=settings["max_bytes"],
        backupCount=settings["backup_count"],
    )
    return [file_handler, logging.StreamHandler()]
