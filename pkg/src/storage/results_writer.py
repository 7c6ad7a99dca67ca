import json
import os
import shutil
import tempfile
from pathlib import Path
from typing import Any, Dict, List

import pandas as pd

from src.utils.logger import Logger

logger = Logger(name="results_writer", component="storage").get_logger()


class ResultsWriter:
    """
        Stages result files in a scratch directory next to the output directory
        and moves them into place only on commit, so a failed command leaves
        no partial outputs behind.
    """

    def __init__(self, output_dir: str):
        self.output_dir = Path(output_dir)
        self._staging: Path = None
        self._staged: List[str] = []

    def __enter__(self) -> "ResultsWriter":
        self.open()
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.commit()
        else:
            self.discard()
        return False

    def open(self):
        """
            Function creating the staging directory

            Raises:
                OSError: the output directory cannot be created
        """
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self._staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.output_dir))
        self._staged = []
        logger.debug(f"Staging results in {self._staging}")

    def write_csv(self, name: str, frame: pd.DataFrame):
        """
            Function staging a DataFrame as UTF-8 CSV with a header row

            Args:
                name (str): file name inside the output directory
                frame (pd.DataFrame): table to write
        """
        frame.to_csv(self._path(name), index=False, encoding="utf-8", float_format="%.9g")
        logger.info(f"Staged {name} ({len(frame)} rows)")

    def write_json(self, name: str, payload: Dict[str, Any]):
        # sorted keys, no timestamps: identical runs give identical bytes
        with open(self._path(name), "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
        logger.info(f"Staged {name}")

    def commit(self) -> List[Path]:
        """
            Function moving every staged file into the output directory

            Returns:
                out (list): final paths of the written files
        """
        written = []
        for name in self._staged:
            target = self.output_dir / name
            os.replace(self._staging / name, target)
            written.append(target)
        shutil.rmtree(self._staging, ignore_errors=True)
        logger.info(f"Wrote {len(written)} result files to {self.output_dir}")
        self._staged = []
        return written

    def discard(self):
        if self._staging is not None:
            shutil.rmtree(self._staging, ignore_errors=True)
            logger.warning(f"Discarded {len(self._staged)} staged result files")
        self._staged = []

    def _path(self, name: str) -> Path:
        if self._staging is None:
            raise RuntimeError("ResultsWriter is not open")
        if name not in self._staged:
            self._staged.append(name)
        return self._staging / name
