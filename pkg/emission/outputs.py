"""
Result files: comma-delimited tables, JSON summaries and spec files.

Every write goes to a temporary file in the target directory and is renamed
into place, so a crashed run never leaves a truncated file behind.
"""
import json
import logging
import math
import os
import tempfile
from dataclasses import asdict, is_dataclass
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
import toml

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12e"
VERSIONED_PACKAGES = ("numpy", "scipy", "pandas", "joblib", "typer", "rich", "tomli", "toml")


def format_sweep_value(value: float) -> str:
    """Fixed-width tag used in file names, e.g. 5.000000e-01"""
    return f"{float(value):.6e}"


def data_file_name(prefix: str, experiment: str, table: str, axis: Optional[str] = None,
                   value: Optional[float] = None, suffix: str = "csv") -> str:
    """<prefix>_<experiment>[_<axis>_<value>]_<table>.<suffix>"""
    parts = [prefix, experiment]
    if axis is not None and value is not None:
        parts += [axis, format_sweep_value(value)]
    parts.append(table)
    return "_".join(parts) + "." + suffix


def _atomic_write(path: Path, writer) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        mode="w", encoding="utf-8", newline="", dir=path.parent, prefix=f".{path.name}.", suffix=".tmp", delete=False
    )
    try:
        with handle:
            writer(handle)
        os.replace(handle.name, path)
    except BaseException:
        Path(handle.name).unlink(missing_ok=True)
        raise
    logger.debug("file written", extra={"path": str(path)})
    return path


def write_frame(frame: pd.DataFrame, path: Path) -> Path:
    """Header row, comma-delimited, floats in 12-digit exponent form"""
    return _atomic_write(
        path, lambda handle: frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    )


def to_jsonable(value: Any) -> Any:
    if is_dataclass(value) and not isinstance(value, type):
        return to_jsonable(asdict(value))
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return [to_jsonable(value.real), to_jsonable(value.imag)]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        # JSON has no NaN or infinity
        return value if math.isfinite(value) else str(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(data: Dict[str, Any], path: Path) -> Path:
    text = json.dumps(to_jsonable(data), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    return _atomic_write(path, lambda handle: handle.write(text))


def write_spec_file(data: Dict[str, Any], path: Path) -> Path:
    """Write a spec dictionary back as a TOML file"""
    text = toml.dumps(to_jsonable(data))
    return _atomic_write(path, lambda handle: handle.write(text))


def package_versions() -> Dict[str, str]:
    versions = {}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions
