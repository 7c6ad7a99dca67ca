from dotenv import load_dotenv
import os
from typing import Dict, Union


class AppConfig:
    def __init__(self):
        load_dotenv(dotenv_path=".env", override=False)
        self.log_dir = os.getenv("TDOA_LOG_DIR", "log_management")
        self.log_level = os.getenv("TDOA_LOG_LEVEL", "INFO").upper()
        self.threads = int(os.getenv("TDOA_THREADS", "1"))
        self.output_dir = os.getenv("TDOA_OUTPUT_DIR", "results")

    def get_config(self) -> Dict[str, Union[str, int]]:
        return vars(self)

if __name__ == "__main__":
    config = AppConfig()
    print(config.get_config())
