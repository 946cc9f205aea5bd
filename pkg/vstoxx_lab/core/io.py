"""CSV / JSON emission with a provenance header, and schema-checked CSV reading."""

import json
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np
import pandas as pd

from .config import settings
from .errors import SchemaError
from .logging import StructuredLogger

PathLike = Union[str, Path]

logger = StructuredLogger("io")


def provenance_line(config_hash: str, seed: int) -> str:
    return f"# vstoxx_lab {settings.app_version} config_hash={config_hash} seed={seed}"


def write_csv(frame: pd.DataFrame, path: PathLike, config_hash: str, seed: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(provenance_line(config_hash, seed) + "\n")
        frame.to_csv(fh, index=False, lineterminator="\n")
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def to_json(payload: Mapping[str, Any], config_hash: Optional[str] = None, seed: Optional[int] = None) -> str:
    body: Dict[str, Any] = dict(_jsonable(dict(payload)))
    if config_hash is not None:
        body["provenance"] = {"tool": "vstoxx_lab", "version": settings.app_version, "config_hash": config_hash, "seed": seed}
    return json.dumps(body, indent=2, sort_keys=True)


def write_json(payload: Mapping[str, Any], path: PathLike, config_hash: str, seed: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json(payload, config_hash, seed) + "\n", encoding="utf-8")
    return path


def _leading_comment_lines(path: Path) -> int:
    count = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            count += 1
    return count


def read_table(path: PathLike, schema: Mapping[str, str]) -> pd.DataFrame:
    """Read a CSV and coerce its columns per ``schema`` (``date``, ``float`` or ``int``).

    Leading ``#`` lines are skipped. A missing column or unparseable value
    raises SchemaError with the 1-based file line of the offending cell.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Input file not found: {path}")
    skipped = _leading_comment_lines(path)
    header_line = skipped + 1
    try:
        raw = pd.read_csv(path, skiprows=skipped, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        logger.warning("Empty input file", file=str(path))
        return pd.DataFrame({name: pd.Series(dtype="object" if kind == "date" else kind) for name, kind in schema.items()})

    raw.columns = [c.strip() for c in raw.columns]
    for name in schema:
        if name not in raw.columns:
            raise SchemaError(str(path), header_line, name, "missing column")

    out = pd.DataFrame(index=raw.index)
    for name, kind in schema.items():
        text = raw[name].str.strip()
        if kind == "date":
            parsed = pd.to_datetime(text, format="%Y-%m-%d", errors="coerce")
            bad = parsed.isna()
            values = parsed.dt.date
        else:
            parsed = pd.to_numeric(text, errors="coerce")
            bad = parsed.isna() | ~np.isfinite(parsed.astype(float))
            if kind == "int":
                bad |= parsed.astype(float) % 1 != 0
                values = parsed.where(~bad, 0).astype(np.int64)
            else:
                values = parsed.astype(float)
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise SchemaError(
                str(path), header_line + 1 + row, name, f"cannot parse {text.iloc[row]!r} as {kind}"
            )
        out[name] = values

    if out.empty:
        logger.warning("Input file has no rows", file=str(path))
    return out


def read_frame(path: PathLike) -> pd.DataFrame:
    """Read one of our own CSV outputs, skipping the provenance header."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Input file not found: {path}")
    return pd.read_csv(path, skiprows=_leading_comment_lines(path))


def read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Input file not found: {path}")
    return json.loads(path.read_text(encoding="utf-8"))
