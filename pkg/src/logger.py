import csv
import logging
import os
from datetime import datetime
from typing import Dict, List, Mapping, Optional

from src.config_loader import RazConfig

_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
}

# record values that mark a failed row in a run report
FAILED_MARKERS = frozenset({"false", "Failed"})


class Logger:
    """File logging for runs plus CSV run reports in the report folder.

    Use the module-level `logger` instance instead of constructing Logger instances
    across modules. The logger uses the report folder from RazConfig by default.
    """

    def __init__(self, config: Optional[RazConfig] = None, name: str = "razumikhin"):
        self.config = config or RazConfig()
        report_dir = self.config.report_folder
        os.makedirs(report_dir, exist_ok=True)

        self.reports_dir = report_dir
        self.log_path = os.path.join(report_dir, "razumikhin.log")

        self._logger = logging.getLogger(name)
        if not self._logger.handlers:
            fh = logging.FileHandler(self.log_path, encoding="utf-8")
            fh.setLevel(logging.DEBUG)
            fh.setFormatter(
                logging.Formatter(
                    "%(asctime)s [%(levelname)s] %(message)s",
                    datefmt="%Y-%m-%d %H:%M:%S",
                )
            )
            self._logger.setLevel(logging.INFO)
            self._logger.addHandler(fh)
            # stdout belongs to the CLI reports
            self._logger.propagate = False

    def log(self, message: str, level: str = "info") -> None:
        self._logger.log(_LEVELS.get(level, logging.INFO), message)

    def create_report(
        self,
        records: List[Dict[str, str]],
        prefix: str = "report",
        run: Optional[Mapping[str, str]] = None,
    ) -> str:
        """Write a run report CSV into the reports dir and return its path.

        Every row starts with the `run` columns (command, seed, ...) followed by the
        record's own columns. All records must share the keys of the first one.

        Raises:
            ValueError: if the records disagree on their keys or clash with `run`.
        """
        run = dict(run or {})
        columns = list(records[0].keys()) if records else []
        for rec in records:
            if list(rec.keys()) != columns:
                raise ValueError(f"report record {rec} does not match columns {columns}")
        clash = set(run).intersection(columns)
        if clash:
            raise ValueError(f"run columns {sorted(clash)} shadow record columns")

        now = datetime.now().strftime("%Y%m%d_%H%M%S")
        report_path = os.path.join(self.reports_dir, f"{prefix}_{now}.csv")
        with open(report_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=[*run, *columns])
            writer.writeheader()
            for rec in records:
                writer.writerow({**run, **rec})

        failed = sum(1 for rec in records if FAILED_MARKERS.intersection(rec.values()))
        self.log(
            f"Report created: {report_path} ({len(records)} rows, {failed} failed)",
            level="warning" if failed else "info",
        )
        return report_path


# Module-level singleton logger. Import this in other modules with:
#   from src.logger import logger
logger = Logger()

__all__ = ["FAILED_MARKERS", "Logger", "logger"]
