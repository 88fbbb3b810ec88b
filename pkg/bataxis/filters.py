import logging
from typing import Optional


class RunContextFilter(logging.Filter):
    """Stamp the current run's config hash, replication index and seed onto records."""

    def __init__(self, config_hash: Optional[str] = None, replication: Optional[int] = None,
                 seed: Optional[int] = None):
        super().__init__()
        self.config_hash = config_hash
        self.replication = replication
        self.seed = seed

    def filter(self, record):
        for key in ("config_hash", "replication", "seed"):
            if getattr(record, key, None) is None:
                setattr(record, key, getattr(self, key))
        return True
