from datetime import datetime, timezone
from pathlib import Path

from smtalign.util import write_json


class RunInfo():
    """Start and end time and result of one command run, kept out of the deterministic outputs."""

    RUN_INFO_SUFFIX = "_run_info.json"

    def __init__(self, directory: str, command: str, seed: int | None = None, config_hash: str = ""):
        self.directory = directory
        self.command = command
        self.seed = seed
        self.config_hash = config_hash
        self.start_time: str = ""
        self.end_time: str = ""

    def register_start(self) -> None:
        self.start_time = self._now()

    def register_end(self) -> None:
        self.end_time = self._now()

    def save(self, result: str = "") -> None:
        write_json(self._run_info_path(), {
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "start_time": self.start_time,
            "end_time": self.end_time,
            "result": result,
        })

    def _now(self) -> str:
        return datetime.now(timezone.utc).isoformat()

    def _run_info_path(self) -> Path:
        return Path(self.directory, f"{self.command}{RunInfo.RUN_INFO_SUFFIX}")
