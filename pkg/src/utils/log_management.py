import os
import logging
from datetime import datetime
import sys

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
COMPONENTS = ["simulation", "estimation", "localization", "experiments", "storage", "cli", "system"]


class LogManager:
    """Centralized log management for the simulator"""

    def __init__(self, base_dir="log_management", level=logging.INFO):
        """Initialize the log manager with the base log directory"""
        self.base_log_dir = base_dir
        self.level = level
        self.setup_log_directories()

        # Configure root logger
        self.configure_root_logger()

    def setup_log_directories(self):
        """Create log directory structure if it doesn't exist"""
        for component in COMPONENTS:
            os.makedirs(os.path.join(self.base_log_dir, component), exist_ok=True)

    def configure_root_logger(self):
        """Configure the root logger to use our centralized log system"""
        root_logger = logging.getLogger()
        root_logger.setLevel(self.level)

        system_log = os.path.abspath(os.path.join(self.base_log_dir, "system", "system.log"))
        # Several managers may be created in one process (tests, CLI re-entry)
        for handler in root_logger.handlers:
            if getattr(handler, "baseFilename", None) == system_log:
                return

        file_handler = logging.FileHandler(system_log)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root_logger.addHandler(file_handler)

    def get_logger(self, name, component="system"):
        """Get a logger configured for the specified component"""
        if component not in COMPONENTS:
            raise ValueError(f"Unknown log component: {component}")

        logger = logging.getLogger(name)
        logger.setLevel(self.level)

        # Remove any existing handlers to avoid duplicates
        for handler in logger.handlers[:]:
            logger.removeHandler(handler)
            handler.close()

        log_file = os.path.join(self.base_log_dir, component, f"{name}.log")
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(file_handler)

        return logger

    def cleanup_old_logs(self, component="all", days_to_keep=30):
        """Clean up old log files, returns the removed paths"""
        now = datetime.now()
        removed = []

        components_to_clean = [component] if component != "all" else os.listdir(self.base_log_dir)

        for comp in components_to_clean:
            comp_dir = os.path.join(self.base_log_dir, comp)
            if not os.path.isdir(comp_dir):
                continue
            for file in os.listdir(comp_dir):
                file_path = os.path.join(comp_dir, file)
                if os.path.isfile(file_path) and file.endswith('.log'):
                    file_modified = datetime.fromtimestamp(os.path.getmtime(file_path))
                    if (now - file_modified).days > days_to_keep:
                        os.remove(file_path)
                        removed.append(file_path)
        return removed


if __name__ == "__main__":
    days = int(sys.argv[1]) if len(sys.argv) > 1 else 30
    manager = LogManager(os.getenv("TDOA_LOG_DIR", "log_management"))
    for path in manager.cleanup_old_logs(days_to_keep=days):
        print(f"Removed old log: {path}")
