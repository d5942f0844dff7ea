"""
Run store: writes experiment outputs (CSV tables, JSON reports) and the run metadata
into one output directory, with content checksums and overwrite refusal
"""
import hashlib
import json
import logging
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from config import settings
from errors import OutputExistsError, RGLatticeError

logger = logging.getLogger(__name__)

Output = Union[pd.DataFrame, Dict[str, Any]]

METADATA_FILE = "metadata.json"
FLOAT_FORMAT = "%.17g"


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, "model_dump"):
        return value.model_dump(mode="json")
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def to_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n"


def checksum(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class RunStore:
    """One output directory per run"""

    def __init__(self, directory: Union[str, Path], overwrite: Optional[bool] = None):
        self.directory = Path(directory)
        self.overwrite = settings.overwrite if overwrite is None else overwrite
        self.files: Dict[str, str] = {}
        self.started = time.monotonic()

    def prepare(self) -> None:
        """Create the directory; refuse a non-empty one unless overwriting"""
        if self.directory.is_dir() and any(self.directory.iterdir()) and not self.overwrite:
            raise OutputExistsError(
                "output directory is not empty; pass --overwrite to replace its files",
                path=str(self.directory),
            )
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise RGLatticeError(f"cannot prepare output directory: {e.strerror}", path=str(self.directory)) from e

    def _write(self, name: str, text: str) -> Path:
        path = self.directory / name
        try:
            path.write_text(text, encoding="utf-8", newline="\n")
        except OSError as e:
            raise RGLatticeError(f"cannot write output file: {e.strerror}", path=str(path)) from e
        self.files[name] = checksum(path)
        logger.info(f"Wrote {path}")
        return path

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        return self._write(name, frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"))

    def write_json(self, name: str, data: Dict[str, Any]) -> Path:
        return self._write(name, to_json(data))

    def write(self, name: str, output: Output) -> Path:
        if isinstance(output, pd.DataFrame):
            return self.write_frame(name, output)
        return self.write_json(name, output)

    def write_metadata(self, metadata: Dict[str, Any]) -> Path:
        """metadata.json referencing every file written so far by checksum"""
        record = dict(metadata)
        record.setdefault("tool_version", settings.tool_version)
        record["written_at"] = datetime.now(timezone.utc).isoformat()
        record["wall_clock_seconds"] = round(time.monotonic() - self.started, 3)
        record["files"] = [{"name": n, "sha256": h} for n, h in sorted(self.files.items())]
        path = self.directory / METADATA_FILE
        try:
            path.write_text(to_json(record), encoding="utf-8", newline="\n")
        except OSError as e:
            raise RGLatticeError(f"cannot write metadata: {e.strerror}", path=str(path)) from e
        logger.info(f"Wrote {path} ({len(self.files)} data file(s))")
        return path


def emit(
    outputs: Dict[str, Output],
    directory: Union[str, Path],
    metadata: Optional[Dict[str, Any]] = None,
    overwrite: Optional[bool] = None,
) -> List[Path]:
    """Write every output under `directory` plus one metadata.json"""
    store = RunStore(directory, overwrite)
    store.prepare()
    paths = [store.write(name, output) for name, output in outputs.items()]
    paths.append(store.write_metadata(metadata or {}))
    return paths


def load_metadata(directory: Union[str, Path]) -> Dict[str, Any]:
    return json.loads((Path(directory) / METADATA_FILE).read_text(encoding="utf-8"))


def state_frame(values: np.ndarray) -> pd.DataFrame:
    values = np.asarray(values, dtype=np.float64)
    return pd.DataFrame({"n": np.arange(values.size), "u": values})


def load_state_csv(path: Union[str, Path]) -> np.ndarray:
    """State vector from an `n,u` CSV"""
    frame = pd.read_csv(path)
    if list(frame.columns) != ["n", "u"]:
        raise RGLatticeError("state CSV must have columns n,u", path=str(path))
    frame = frame.sort_values("n")
    values = np.zeros(int(frame["n"].max()) + 1)
    values[frame["n"].to_numpy(dtype=int)] = frame["u"].to_numpy(dtype=np.float64)
    return values
