import logging
import sys
from typing import Optional

from src.config.settings import AppConfig
from src.utils.log_management import LogManager, LOG_FORMAT

_log_manager: Optional[LogManager] = None


def get_log_manager() -> LogManager:
    """Central log manager, created on first use from the environment settings"""
    global _log_manager
    if _log_manager is None:
        config = AppConfig()
        _log_manager = LogManager(config.log_dir, level=logging.DEBUG)
    return _log_manager


class Logger:
    def __init__(self, name: str, component: str = "system", level=None):
        """Initialize logger with centralized logging system"""
        if level is None:
            level = getattr(logging, AppConfig().log_level, logging.INFO)
        self.logger = get_log_manager().get_logger(name, component)
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False  # Avoid duplicate logs

        # Console goes to stderr, stdout carries the CLI tables
        if not any(type(h) is logging.StreamHandler for h in self.logger.handlers):
            console_handler = logging.StreamHandler(sys.stderr)
            console_handler.setLevel(level)
            console_handler.setFormatter(logging.Formatter(LOG_FORMAT))
            self.logger.addHandler(console_handler)

        self.logger.debug(f"Logger initialized for {name} in {component}")

    def get_logger(self):
        return self.logger
